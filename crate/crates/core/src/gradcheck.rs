//! Central finite-difference gradient verification.
//!
//! Used by the test suites to check recorded gradients against an
//! independent numerical derivative. Only forward evaluations of the
//! function under test are performed here; nothing in this module touches
//! the tape machinery.

/// Default step for central differences.
pub const DEFAULT_STEP: f64 = 1e-6;

/// Central-difference gradient of `f` at `x`: (f(x+h) − f(x−h)) / 2h per
/// coordinate. `f` must be deterministic across calls.
pub fn central_diff<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Worst relative error between two gradient vectors: |a−b| over
/// max(|a|, |b|), ignoring pairs that agree within `abs_tol`.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], abs_tol: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let diff = (a - n).abs();
        if diff <= abs_tol {
            continue;
        }
        let scale = a.abs().max(n.abs());
        worst = worst.max(diff / scale);
    }
    worst
}

/// Assert-style check used throughout the gradient suites.
pub fn assert_grads_close(analytic: &[f64], numeric: &[f64], rel_tol: f64, context: &str) {
    let err = max_rel_err(analytic, numeric, 1e-7);
    assert!(
        err < rel_tol,
        "{context}: max relative gradient error {err:.3e} >= {rel_tol:.1e}\n analytic: {analytic:?}\n numeric:  {numeric:?}"
    );
}

/// Central difference along a single coordinate of `x`.
pub fn central_diff_at<F>(mut f: F, x: &[f64], index: usize, h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let orig = probe[index];
    probe[index] = orig + h;
    let up = f(&probe);
    probe[index] = orig - h;
    let down = f(&probe);
    (up - down) / (2.0 * h)
}

/// Pass/fail verdict for one gradient pair under the shared tolerance rule.
pub fn close(analytic: f64, numeric: f64, rel_tol: f64, abs_tol: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= abs_tol || diff <= rel_tol * analytic.abs().max(numeric.abs())
}
