//! Dictionary learning by block proximal-gradient descent.
//!
//! Minimizes `F(D, Y) = 1/2 ||D Y - X||_F^2 + lambda ||Y||_1` over
//! dictionaries whose columns have norm at most one. Each iteration takes a
//! projected gradient step in `D` from an extrapolated point, then a
//! soft-thresholding step in `Y` from an extrapolated point. Step sizes are
//! the reciprocal Lipschitz constants `||Y Y^T||` and `||D^T D||`; the
//! extrapolation weights follow the FISTA sequence, capped by
//! `sqrt(L_prev / L_curr)`. If an iteration increases `F`, it is redone
//! without extrapolation, so the objective never increases.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dictionary::{CoefficientMatrix, Dictionary};
use crate::error::{Error, Result};
use crate::operators::spectral_norm_from;
use crate::seed::rng_from_seed;

const POWER_ITERS: usize = 1000;
const POWER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct LearnConfig {
    pub lambda: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Stop once the relative objective change stays below `rel_tol` this
    /// many iterations in a row.
    pub consecutive_hits: usize,
    pub extrapolation_cap: f64,
    pub rng_seed: u64,
}

impl LearnConfig {
    pub fn new(lambda: f64) -> Self {
        LearnConfig {
            lambda,
            max_iters: 1000,
            rel_tol: 1e-4,
            consecutive_hits: 3,
            extrapolation_cap: 0.9999,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::arg(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::arg(format!("rel_tol must be positive, got {}", self.rel_tol)));
        }
        if !(self.extrapolation_cap > 0.0 && self.extrapolation_cap <= 1.0) {
            return Err(Error::arg(format!(
                "extrapolation cap {} outside (0, 1]",
                self.extrapolation_cap
            )));
        }
        if self.consecutive_hits == 0 {
            return Err(Error::arg("consecutive_hits must be at least 1"));
        }
        Ok(())
    }
}

/// Iterates, Lipschitz constants and the FISTA scalar sequence carried
/// between iterations.
#[derive(Debug, Clone)]
pub struct ExtrapolationState {
    pub iteration: usize,
    pub t_prev: f64,
    pub t_curr: f64,
    pub lip_d_prev: f64,
    pub lip_d_curr: f64,
    pub lip_y_prev: f64,
    pub lip_y_curr: f64,
    pub d_prev: Array2<f64>,
    pub d_curr: Array2<f64>,
    pub y_prev: CoefficientMatrix,
    pub y_curr: CoefficientMatrix,
    pub f_curr: f64,
    warm_d: Vec<f64>,
    warm_y: Vec<f64>,
}

impl ExtrapolationState {
    /// Starts from `(D0, Y0)`, with both previous iterates equal to it.
    pub fn new(d0: Array2<f64>, y0: CoefficientMatrix, x: ArrayView2<f64>, lambda: f64) -> Result<Self> {
        let f_curr = objective_f(d0.view(), y0.view(), x, lambda)?;
        Ok(ExtrapolationState {
            iteration: 0,
            t_prev: 1.0,
            t_curr: 1.0,
            lip_d_prev: 1.0,
            lip_d_curr: 1.0,
            lip_y_prev: 1.0,
            lip_y_curr: 1.0,
            d_prev: d0.clone(),
            d_curr: d0,
            y_prev: y0.clone(),
            y_curr: y0,
            f_curr,
            warm_d: Vec::new(),
            warm_y: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    #[serde(rename = "F")]
    pub objective: f64,
    #[serde(rename = "L_d")]
    pub lip_d: f64,
    #[serde(rename = "L_y")]
    pub lip_y: f64,
    /// Extrapolation weights of the first attempt; discarded when `redo`.
    pub omega_d: f64,
    pub omega_y: f64,
    pub redo: bool,
    /// Set when even the non-extrapolated update raised `F` by rounding
    /// and the previous iterate was kept.
    #[serde(skip)]
    pub held: bool,
}

#[derive(Debug, Clone, Default)]
pub struct LearnTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
    /// Scaled length of one more non-extrapolated update, after the first
    /// iteration and at the returned iterate.
    pub stationarity_first: f64,
    pub stationarity_final: f64,
}

impl LearnTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// CSV with columns `iteration,F,L_d,L_y,omega_d,omega_y,redo`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// `1/2 ||D Y - X||_F^2 + lambda ||Y||_1`.
pub fn objective_f(d: ArrayView2<f64>, y: ArrayView2<f64>, x: ArrayView2<f64>, lambda: f64) -> Result<f64> {
    check_shapes(d, y, x)?;
    let residual = d.dot(&y) - x;
    let fit = 0.5 * residual.iter().map(|v| v * v).sum::<f64>();
    let l1 = y.iter().map(|v| v.abs()).sum::<f64>();
    Ok(fit + lambda * l1)
}

fn check_shapes(d: ArrayView2<f64>, y: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<()> {
    if d.ncols() != y.nrows() || d.nrows() != x.nrows() || y.ncols() != x.ncols() {
        return Err(Error::shape(format!(
            "D {:?}, Y {:?}, X {:?} do not compose",
            d.dim(),
            y.dim(),
            x.dim()
        )));
    }
    Ok(())
}

#[inline]
pub fn shrink(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// Elementwise `sign(y) max(|y| - tau, 0)`; `|y| = tau` maps to 0.
pub fn soft_threshold(values: ArrayView2<f64>, tau: f64) -> Result<Array2<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::arg(format!("threshold must be nonnegative, got {tau}")));
    }
    Ok(values.mapv(|v| shrink(v, tau)))
}

/// Scales each column by `1 / max(1, ||column||)`.
pub fn project_columns(d: ArrayView2<f64>) -> Array2<f64> {
    let mut out = d.to_owned();
    project_in_place(&mut out);
    out
}

fn project_in_place(d: &mut Array2<f64>) {
    for mut col in d.axis_iter_mut(Axis(1)) {
        let norm = col.dot(&col).sqrt();
        if norm > 1.0 {
            col.mapv_inplace(|v| v / norm);
        }
    }
}

/// Largest singular value squared, by power iteration over the smaller
/// side of `a`.
fn gram_norm(a: ArrayView2<f64>, warm: &mut Vec<f64>) -> f64 {
    let (rows, cols) = a.dim();
    let start = if warm.is_empty() { None } else { Some(warm.as_slice()) };
    let (sigma, vec) = if rows <= cols {
        spectral_norm_from(
            rows,
            start,
            |x| a.t().dot(&ndarray::aview1(x)),
            |y| a.dot(y).to_vec(),
            POWER_ITERS,
            POWER_TOL,
        )
    } else {
        spectral_norm_from(
            cols,
            start,
            |x| a.dot(&ndarray::aview1(x)),
            |y| a.t().dot(y).to_vec(),
            POWER_ITERS,
            POWER_TOL,
        )
    };
    *warm = vec;
    sigma * sigma
}

/// `||Y Y^T||`, the Lipschitz constant of the `D` gradient.
pub fn lipschitz_d(y: ArrayView2<f64>) -> f64 {
    gram_norm(y, &mut Vec::new())
}

/// `||D^T D||`, the Lipschitz constant of the `Y` gradient.
pub fn lipschitz_y(d: ArrayView2<f64>) -> f64 {
    gram_norm(d, &mut Vec::new())
}

/// `(D Y - X) Y^T`.
pub fn grad_d(d: ArrayView2<f64>, y: ArrayView2<f64>, x: ArrayView2<f64>) -> Array2<f64> {
    (d.dot(&y) - x).dot(&y.t())
}

/// `D^T (D Y - X)`.
pub fn grad_y(d: ArrayView2<f64>, y: ArrayView2<f64>, x: ArrayView2<f64>) -> Array2<f64> {
    d.t().dot(&(d.dot(&y) - x))
}

/// Next value of `t_k = (1 + sqrt(1 + 4 t_{k-1}^2)) / 2`.
pub fn next_t(t: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
}

fn capped_weight(omega: f64, lip_prev: f64, lip_curr: f64, cap: f64) -> f64 {
    cap * omega.min((lip_prev / lip_curr).sqrt())
}

/// Extrapolation weights from `state.t_prev`, `state.t_curr` and the two
/// most recent Lipschitz constants of each block.
pub fn extrapolation_weights(state: &ExtrapolationState, cap: f64) -> Result<(f64, f64)> {
    let lips = [state.lip_d_prev, state.lip_d_curr, state.lip_y_prev, state.lip_y_curr];
    if lips.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::arg("Lipschitz constants must be positive"));
    }
    let omega = (state.t_prev - 1.0) / state.t_curr;
    Ok((
        capped_weight(omega, state.lip_d_prev, state.lip_d_curr, cap),
        capped_weight(omega, state.lip_y_prev, state.lip_y_curr, cap),
    ))
}

fn guard(lip: f64) -> f64 {
    if lip > 0.0 {
        lip
    } else {
        1.0
    }
}

fn extrapolate(curr: &Array2<f64>, prev: &Array2<f64>, weight: f64) -> Array2<f64> {
    if weight == 0.0 {
        return curr.clone();
    }
    let mut out = curr.clone();
    Zip::from(&mut out)
        .and(curr)
        .and(prev)
        .for_each(|o, &c, &p| *o = c + weight * (c - p));
    out
}

fn d_update(d_hat: &Array2<f64>, y: &Array2<f64>, x: ArrayView2<f64>, lip_d: f64) -> Array2<f64> {
    let g = grad_d(d_hat.view(), y.view(), x);
    let mut d = d_hat - &(g / lip_d);
    project_in_place(&mut d);
    d
}

fn y_update(d: &Array2<f64>, y_hat: &Array2<f64>, x: ArrayView2<f64>, lip_y: f64, lambda: f64) -> Array2<f64> {
    let g = grad_y(d.view(), y_hat.view(), x);
    let tau = lambda / lip_y;
    let mut y = y_hat - &(g / lip_y);
    y.mapv_inplace(|v| shrink(v, tau));
    y
}

/// One iteration of the learner.
pub fn bpg_step(
    mut state: ExtrapolationState,
    x: ArrayView2<f64>,
    config: &LearnConfig,
) -> Result<(ExtrapolationState, TraceRecord)> {
    check_shapes(state.d_curr.view(), state.y_curr.view(), x)?;
    let k = state.iteration + 1;
    let lambda = config.lambda;
    let cap = config.extrapolation_cap;

    state.t_prev = state.t_curr;
    state.t_curr = next_t(state.t_prev);
    let omega = (state.t_prev - 1.0) / state.t_curr;

    // D block.
    let lip_d = guard(gram_norm(state.y_curr.view(), &mut state.warm_d));
    state.lip_d_prev = if k == 1 { lip_d } else { state.lip_d_curr };
    state.lip_d_curr = lip_d;
    let omega_d = capped_weight(omega, state.lip_d_prev, lip_d, cap);
    let d_hat = extrapolate(&state.d_curr, &state.d_prev, omega_d);
    let mut d_new = d_update(&d_hat, &state.y_curr, x, lip_d);

    // Y block.
    let mut lip_y = guard(gram_norm(d_new.view(), &mut state.warm_y));
    let lip_y_prev = if k == 1 { lip_y } else { state.lip_y_curr };
    let omega_y = capped_weight(omega, lip_y_prev, lip_y, cap);
    let y_hat = extrapolate(&state.y_curr, &state.y_prev, omega_y);
    let mut y_new = y_update(&d_new, &y_hat, x, lip_y, lambda);

    let mut f_new = objective_f(d_new.view(), y_new.view(), x, lambda)?;
    if !f_new.is_finite() {
        return Err(Error::NonFinite {
            context: "dictionary learning objective",
            iteration: k,
        });
    }

    let redo = f_new > state.f_curr;
    let mut held = false;
    if redo {
        d_new = d_update(&state.d_curr, &state.y_curr, x, lip_d);
        lip_y = guard(gram_norm(d_new.view(), &mut state.warm_y));
        y_new = y_update(&d_new, &state.y_curr, x, lip_y, lambda);
        f_new = objective_f(d_new.view(), y_new.view(), x, lambda)?;
        if !f_new.is_finite() {
            return Err(Error::NonFinite {
                context: "dictionary learning objective",
                iteration: k,
            });
        }
        if f_new > state.f_curr {
            held = true;
            d_new = state.d_curr.clone();
            y_new = state.y_curr.clone();
            f_new = state.f_curr;
        }
    }
    state.lip_y_prev = lip_y_prev;
    state.lip_y_curr = lip_y;

    state.d_prev = std::mem::replace(&mut state.d_curr, d_new);
    state.y_prev = std::mem::replace(&mut state.y_curr, y_new);
    state.f_curr = f_new;
    state.iteration = k;

    let record = TraceRecord {
        iteration: k,
        objective: f_new,
        lip_d,
        lip_y,
        omega_d,
        omega_y,
        redo,
        held,
    };
    Ok((state, record))
}

/// Scaled length of a non-extrapolated update from `(d, y)`; zero exactly at
/// fixed points of the update.
pub fn stationarity_residual(d: &Array2<f64>, y: &Array2<f64>, x: ArrayView2<f64>, lambda: f64) -> f64 {
    let lip_d = guard(lipschitz_d(y.view()));
    let d_next = d_update(d, y, x, lip_d);
    let lip_y = guard(lipschitz_y(d_next.view()));
    let y_next = y_update(&d_next, y, x, lip_y, lambda);
    let dd = (&d_next - d).iter().map(|v| v * v).sum::<f64>().sqrt();
    let dy = (&y_next - y).iter().map(|v| v * v).sum::<f64>().sqrt();
    ((lip_d * dd).powi(2) + (lip_y * dy).powi(2)).sqrt()
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub dictionary: Dictionary,
    pub coefficients: CoefficientMatrix,
    pub trace: LearnTrace,
}

/// Runs the learner from `(D0, Y0)` on the sample columns of `x`.
///
/// Stops when `|F_{k-1} - F_k| / (1 + F_{k-1}) <= rel_tol` holds for
/// `consecutive_hits` iterations in a row, or after `max_iters`.
pub fn learn(x: ArrayView2<f64>, d0: &Dictionary, y0: CoefficientMatrix, config: &LearnConfig) -> Result<LearnOutcome> {
    config.validate()?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("training samples must be finite"));
    }
    let mut state = ExtrapolationState::new(d0.atoms().clone(), y0, x, config.lambda)?;
    let mut trace = LearnTrace::default();
    let mut hits = 0;
    while state.iteration < config.max_iters {
        let f_before = state.f_curr;
        let (next, record) = bpg_step(state, x, config)?;
        state = next;
        trace.records.push(record);
        if state.iteration == 1 {
            trace.stationarity_first = stationarity_residual(&state.d_curr, &state.y_curr, x, config.lambda);
        }
        let change = (f_before - state.f_curr).abs() / (1.0 + f_before);
        hits = if change <= config.rel_tol { hits + 1 } else { 0 };
        if hits >= config.consecutive_hits {
            trace.converged = true;
            break;
        }
    }
    trace.stationarity_final = stationarity_residual(&state.d_curr, &state.y_curr, x, config.lambda);
    let dictionary = Dictionary::new(d0.patch_rows(), d0.patch_cols(), state.d_curr, false)?;
    Ok(LearnOutcome {
        dictionary,
        coefficients: state.y_curr,
        trace,
    })
}

/// Gaussian atoms normalized to unit norm.
pub fn random_dictionary(patch_rows: usize, patch_cols: usize, num_atoms: usize, seed: u64) -> Result<Dictionary> {
    let n = patch_rows * patch_cols;
    let mut rng = rng_from_seed(seed);
    let mut atoms = Array2::from_shape_simple_fn((n, num_atoms), || StandardNormal.sample(&mut rng));
    normalize_columns(&mut atoms);
    Dictionary::new(patch_rows, patch_cols, atoms, false)
}

/// Scales every nonzero column to unit norm.
pub fn normalize_columns(a: &mut Array2<f64>) {
    for mut col in a.axis_iter_mut(Axis(1)) {
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|v| v / norm);
        }
    }
}
