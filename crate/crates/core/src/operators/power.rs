//! Operator norm estimation by power iteration on `L^T L`.

use rand_distr::{Distribution, StandardNormal};

use crate::seed::rng_from_seed;

/// Fixed seed for the starting vector, so estimates are reproducible.
const START_SEED: u64 = 0x005e_ed0f_9047;

/// Estimates `||L||` for the map given by `apply` and its adjoint.
///
/// Stops when the relative change of the estimate drops below `tol` or after
/// `iters` rounds. A zero operator gives 0.
pub fn spectral_norm<M>(
    dim: usize,
    apply: impl Fn(&[f64]) -> M,
    adjoint: impl Fn(&M) -> Vec<f64>,
    iters: usize,
    tol: f64,
) -> f64 {
    spectral_norm_from(dim, None, apply, adjoint, iters, tol).0
}

/// Like [`spectral_norm`], optionally warm-started, also returning the final
/// unit iterate for the next warm start.
pub fn spectral_norm_from<M>(
    dim: usize,
    start: Option<&[f64]>,
    apply: impl Fn(&[f64]) -> M,
    adjoint: impl Fn(&M) -> Vec<f64>,
    iters: usize,
    tol: f64,
) -> (f64, Vec<f64>) {
    if dim == 0 {
        return (0.0, Vec::new());
    }
    let mut x: Vec<f64> = match start {
        Some(s) if s.len() == dim && norm(s) > 0.0 => s.to_vec(),
        _ => {
            let mut rng = rng_from_seed(START_SEED);
            (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
    };
    let n0 = norm(&x);
    x.iter_mut().for_each(|v| *v /= n0);

    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        let y = adjoint(&apply(&x));
        let ny = norm(&y);
        if ny == 0.0 || !ny.is_finite() {
            return (0.0, x);
        }
        let next = ny.sqrt();
        x = y.into_iter().map(|v| v / ny).collect();
        let done = (next - estimate).abs() <= tol * next;
        estimate = next;
        if done {
            break;
        }
    }
    (estimate, x)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
