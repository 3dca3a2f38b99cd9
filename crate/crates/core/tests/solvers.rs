use nalgebra::{DMatrix, DVector};
use streamvb::diagnostics::{divergence_score, run_warmup_protocol, stack_rows};
use streamvb::linreg::{fit_batch, LinRegHyper, LinRegState};
use streamvb::lmm::{build_row_random_intercept, fit_batch_lmm, BlockSpec};
use streamvb::logistic::{fit_batch_logistic, sweep};
use streamvb::model::{ModelSpec, SummaryItem};
use streamvb::simdata::{Scenario, SimConfig, Simulator};
use streamvb::sparse::{fit_batch_sparse, SparseHyper};
use streamvb::splines::SplineBasis;
use streamvb::suffstats::{SparseMoments, StreamingMoments};
use streamvb::FitOptions;

fn sim(scenario: Scenario, n: usize, seed: u64) -> Vec<streamvb::simdata::SimRecord> {
    Simulator::new(SimConfig { seed, n, scenario }).unwrap().iter().collect()
}

/// Largest relative change; entries below 1e-10 in magnitude are compared
/// on that absolute scale instead.
fn rel_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-10))
        .fold(0.0, f64::max)
}

/// Covariance entries measured against `sqrt(Σ_ii Σ_jj)`, which bounds
/// `|Σ_ij|`. Off-diagonal entries far below that scale come out of
/// cancellation and carry round-off at the scale, not at their own size.
fn cov_change(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let scale = (a[(i, i)] * a[(j, j)]).sqrt().max(1e-10);
            worst = worst.max((a[(i, j)] - b[(i, j)]).abs() / scale);
        }
    }
    worst
}

fn linear_data(n: usize, seed: u64) -> (Vec<f64>, DMatrix<f64>) {
    let recs = sim(Scenario::Linear, n, seed);
    let y = recs.iter().map(|r| r.y).collect();
    let c = DMatrix::from_fn(n, 12, |i, j| if j == 0 { 1.0 } else { recs[i].x[j - 1] });
    (y, c)
}

#[test]
fn linreg_elbo_never_decreases() {
    let (y, c) = linear_data(200, 8);
    let c = c.columns(0, 4).into_owned();
    let stats = StreamingMoments::from_batch(&y, &c).unwrap();
    let hyper = LinRegHyper::default();
    let mut s = LinRegState::initial(4);
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..50 {
        s.cycle(&stats, &hyper).unwrap();
        let e = s.elbo(&stats, &hyper);
        assert!(e >= prev - 1e-8, "{e} < {prev}");
        prev = e;
    }
}

#[test]
fn linreg_fixed_point() {
    let (y, c) = linear_data(300, 2);
    let hyper = LinRegHyper::default();
    let fit = fit_batch(&y, &c, &hyper, &FitOptions::default()).unwrap();
    assert!(fit.converged);
    let mut again = fit.state.clone();
    again.cycle(&StreamingMoments::from_batch(&y, &c).unwrap(), &hyper).unwrap();
    assert!(rel_change(fit.state.mu_beta.as_slice(), again.mu_beta.as_slice()) < 1e-8);
    assert!(cov_change(&fit.state.sigma_beta, &again.sigma_beta) < 1e-8);
    let (a, b) = (&fit.state, &again);
    assert!(rel_change(&[a.mu_recip_sigsq, a.mu_recip_a], &[b.mu_recip_sigsq, b.mu_recip_a]) < 1e-8);
}

#[test]
fn lmm_fixed_point() {
    let recs = sim(Scenario::RandomIntercept, 300, 5);
    let rows: Vec<DVector<f64>> = recs
        .iter()
        .map(|r| build_row_random_intercept(r.x[0], r.group.unwrap(), 10).unwrap())
        .collect();
    let c = stack_rows(&rows, 12);
    let y: Vec<f64> = recs.iter().map(|r| r.y).collect();
    let spec = BlockSpec::new(2, vec![10]).unwrap();
    let fit = fit_batch_lmm(&y, &c, &spec, &FitOptions::default()).unwrap();
    assert!(fit.converged);
    let mut again = fit.state.clone();
    again.cycle(&StreamingMoments::from_batch(&y, &c).unwrap(), &spec).unwrap();
    let (a, b) = (&fit.state, &again);
    assert!(rel_change(a.mu_bu.as_slice(), b.mu_bu.as_slice()) < 1e-8);
    assert!(cov_change(&a.sigma_bu, &b.sigma_bu) < 1e-8);
    let scalars = |s: &streamvb::lmm::LmmState| {
        let mut v = vec![s.mu_recip_sigsq_eps, s.mu_recip_a_eps];
        v.extend(&s.mu_recip_sigsq_u);
        v.extend(&s.mu_recip_a_u);
        v
    };
    assert!(rel_change(&scalars(a), &scalars(b)) < 1e-8);
}

#[test]
fn sparse_fixed_point() {
    let recs = sim(Scenario::SparseSignal, 400, 3);
    let y: Vec<f64> = recs.iter().map(|r| r.y).collect();
    let z = DMatrix::from_fn(400, 64, |i, j| recs[i].x[j]);
    let hyper = SparseHyper::default();
    let fit = fit_batch_sparse(&y, &z, &hyper, &FitOptions::default()).unwrap();
    assert!(fit.converged);
    let mut again = fit.state.clone();
    again.cycle(&SparseMoments::from_batch(&y, &z).unwrap(), &hyper).unwrap();
    let (a, b) = (&fit.state, &again);
    for (u, v) in [(&a.mu_bv, &b.mu_bv), (&a.mu_b, &b.mu_b), (&a.mu_gamma, &b.mu_gamma), (&a.mu_w, &b.mu_w)] {
        assert!(rel_change(u.as_slice(), v.as_slice()) < 1e-8);
    }
    assert!(cov_change(&a.sigma_bv, &b.sigma_bv) < 1e-8);
    assert!(cov_change(&a.omega_w, &b.omega_w) < 1e-8);
    let scalars = |s: &streamvb::sparse::SparseState| [s.mu_recip_sigsq_u, s.mu_recip_sigsq_eps, s.mu_recip_a_u, s.mu_recip_a_eps];
    assert!(rel_change(&scalars(a), &scalars(b)) < 1e-8);
}

#[test]
fn logistic_fixed_point() {
    let recs = sim(Scenario::Binary1d, 400, 6);
    let xs: Vec<f64> = recs.iter().map(|r| r.x[0]).collect();
    let basis = SplineBasis::from_warmup(&xs, 10).unwrap();
    let rows: Vec<DVector<f64>> = xs
        .iter()
        .map(|&x| streamvb::lmm::build_row_additive(&[x], &[(x, &basis)]))
        .collect();
    let c = stack_rows(&rows, 12);
    let y: Vec<f64> = recs.iter().map(|r| r.y).collect();
    let spec = BlockSpec::new(2, vec![10]).unwrap();
    let fit = fit_batch_logistic(&y, &c, &spec, &FitOptions::default()).unwrap();
    assert!(fit.fit.converged);
    let (mut again, mut xi) = (fit.fit.state.clone(), fit.xi.clone());
    sweep(&mut again, &mut xi, &y, &c, &spec).unwrap();
    let a = &fit.fit.state;
    assert!(rel_change(a.mu_bu.as_slice(), again.mu_bu.as_slice()) < 1e-8);
    assert!(cov_change(&a.sigma_bu, &again.sigma_bu) < 1e-8);
    assert!(rel_change(&a.mu_recip_sigsq_u, &again.mu_recip_sigsq_u) < 1e-8);
    assert!(rel_change(&a.mu_recip_a_u, &again.mu_recip_a_u) < 1e-8);
    assert!(rel_change(&fit.xi, &xi) < 1e-8);
}

#[test]
fn online_tracks_batch_for_gaussian_regression() {
    let (y, c) = linear_data(200, 4);
    let spec = ModelSpec::LinReg {
        p: 12,
        hyper: LinRegHyper::default(),
    };
    let plan: Vec<SummaryItem> = (0..12).map(|j| SummaryItem::coefficient(format!("b{j}"), j, 12)).collect();
    let run = run_warmup_protocol(&y, &c, 100, 100, &spec, &plan, &FitOptions::default()).unwrap();
    assert!(run.trace.all_converged);
    assert!(divergence_score(&run.trace) < 0.5);
    for (b, o) in run.trace.batch.iter().zip(&run.trace.online) {
        for (bs, os) in b.iter().zip(o) {
            assert!((bs.mean - os.mean).abs() < 0.1 * bs.sd, "{}", bs.label);
        }
    }
    assert_eq!(run.online.n(), 200);
}

#[test]
fn protocol_is_deterministic() {
    let (y, c) = linear_data(150, 9);
    let spec = ModelSpec::LinReg {
        p: 12,
        hyper: LinRegHyper::default(),
    };
    let plan = vec![SummaryItem::coefficient("b1", 1, 12)];
    let a = run_warmup_protocol(&y, &c, 50, 100, &spec, &plan, &FitOptions::default()).unwrap();
    let b = run_warmup_protocol(&y, &c, 50, 100, &spec, &plan, &FitOptions::default()).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.online, b.online);
}
