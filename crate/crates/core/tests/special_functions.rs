use streamvb::special::{digamma, lambda_jj, trigamma};

/// `(x, ψ(x))` pairs computed with mpmath at 40 digits; see
/// `data/gen_digamma.py`.
fn oracle() -> Vec<(f64, f64)> {
    let text = include_str!("data/digamma_mpmath.csv");
    text.lines()
        .skip(1)
        .map(|l| {
            let (x, d) = l.split_once(',').unwrap();
            (x.parse().unwrap(), d.parse().unwrap())
        })
        .collect()
}

#[test]
fn digamma_matches_high_precision_table() {
    let table = oracle();
    assert_eq!(table.len(), 10_000);
    let mut worst = (0.0, 0.0);
    for (x, want) in table {
        let err = (digamma(x).unwrap() - want).abs();
        if err > worst.1 {
            worst = (x, err);
        }
    }
    assert!(worst.1 < 1e-10, "max error {} at x = {}", worst.1, worst.0);
}

#[test]
fn digamma_rejects_nonpositive() {
    for x in [0.0, -1.5, f64::NAN, f64::INFINITY] {
        assert!(digamma(x).is_err());
    }
}

#[test]
fn trigamma_is_derivative_of_digamma() {
    for x in [0.05, 0.7, 3.0, 11.5, 250.0] {
        let h = 1e-5 * x;
        let fd = (digamma(x + h).unwrap() - digamma(x - h).unwrap()) / (2.0 * h);
        assert!((trigamma(x) - fd).abs() < 1e-6 * trigamma(x), "x = {x}");
    }
}

#[test]
fn lambda_limit_and_symmetry() {
    assert_eq!(lambda_jj(0.0), 0.125);
    for xi in [1e-9, 1e-6, 1e-4] {
        assert!((lambda_jj(xi) - 0.125).abs() < 1e-8);
    }
    for xi in [1e-3, 0.5, 2.0, 17.0, 300.0] {
        assert_eq!(lambda_jj(xi), lambda_jj(-xi));
        assert!(lambda_jj(xi) < 0.125 && lambda_jj(xi) > 0.0);
    }
    // Large ξ: tanh → 1.
    assert!((lambda_jj(100.0) - 1.0 / 400.0).abs() < 1e-15);
}
