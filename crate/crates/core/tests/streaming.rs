use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use streamvb::suffstats::{LogisticMoments, SparseMoments, StreamingMoments};

const N: usize = 500;

fn data(seed: u64, p: usize, binary: bool) -> (Vec<f64>, DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = DMatrix::from_fn(N, p, |_, j| if j == 0 { 1.0 } else { 3.0 * rng.sample::<f64, _>(StandardNormal) });
    let y = (0..N)
        .map(|_| if binary { f64::from(rng.random::<bool>()) } else { 10.0 * rng.sample::<f64, _>(StandardNormal) })
        .collect();
    let xi = (0..N).map(|_| rng.random_range(0.0..5.0)).collect();
    (y, c, xi)
}

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0))
}

fn close_vec(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    close(&DMatrix::from_column_slice(a.len(), 1, a.as_slice()), &DMatrix::from_column_slice(b.len(), 1, b.as_slice()))
}

#[test]
fn gaussian_stream_matches_batch() {
    let (y, c, _) = data(1, 6, false);
    let mut s = StreamingMoments::new(6);
    for i in 0..N {
        s.update(y[i], &c.row(i).transpose()).unwrap();
    }
    let b = StreamingMoments::from_batch(&y, &c).unwrap();
    assert_eq!(s.n, b.n);
    assert!((s.yty - b.yty).abs() <= 1e-9 * b.yty);
    assert!(close_vec(&s.cty, &b.cty));
    assert!(close(&s.ctc, &b.ctc));
}

#[test]
fn logistic_stream_matches_batch() {
    let (y, c, xi) = data(2, 5, true);
    let mut s = LogisticMoments::new(5);
    for i in 0..N {
        s.update(y[i], &c.row(i).transpose(), xi[i]).unwrap();
    }
    let b = LogisticMoments::from_batch(&y, &c, &xi).unwrap();
    assert_eq!(s.n, b.n);
    assert!(close_vec(&s.cty_half, &b.cty_half));
    assert!(close(&s.ct_lam_c, &b.ct_lam_c));
}

#[test]
fn sparse_stream_matches_batch() {
    let (y, z, _) = data(3, 8, false);
    let mut s = SparseMoments::new(8);
    for i in 0..N {
        s.update(y[i], &z.row(i).transpose()).unwrap();
    }
    let b = SparseMoments::from_batch(&y, &z).unwrap();
    assert_eq!(s.n, b.n);
    assert!((s.yty - b.yty).abs() <= 1e-9 * b.yty);
    for (u, v) in [(&s.zt1, &b.zt1), (&s.zty, &b.zty), (&s.cty, &b.cty)] {
        assert!(close_vec(u, v));
    }
    assert!(close(&s.ztz, &b.ztz));
    assert!(close(&s.ctc, &b.ctc));
}

#[test]
fn stream_is_order_sensitive_only_to_rounding() {
    let (y, c, _) = data(4, 4, false);
    let mut fwd = StreamingMoments::new(4);
    let mut rev = StreamingMoments::new(4);
    for i in 0..N {
        fwd.update(y[i], &c.row(i).transpose()).unwrap();
        rev.update(y[N - 1 - i], &c.row(N - 1 - i).transpose()).unwrap();
    }
    assert!(close(&fwd.ctc, &rev.ctc));
    assert!(close_vec(&fwd.cty, &rev.cty));
}

#[test]
fn dimension_mismatch_is_an_error() {
    let mut s = StreamingMoments::new(3);
    assert!(s.update(1.0, &DVector::zeros(4)).is_err());
    let mut l = LogisticMoments::new(2);
    assert!(l.update(0.5, &DVector::zeros(2), 1.0).is_err());
}
