//! Accelerated proximal-gradient solver for the weighted-l1 patch model
//!
//! `min_Y  sum_j ||w_j . y_j||_1 + 1/(2 nu) ||A(sum_j R_j^T D y_j) - b||^2`
//!
//! where `y_j` is the code of cell `j` of a fixed partition. The smooth part
//! is handled by a gradient step of length `1/L` with
//! `L = ||forward||^2 / nu`; the l1 part by coordinatewise soft-thresholding.
//! Momentum follows FISTA and is reset whenever the objective goes up.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis, Zip};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dictionary::{CoefficientMatrix, Dictionary, WeightVector};
use crate::dictlearn::{next_t, shrink};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::measurement::MeasurementVector;
use crate::operators::{spectral_norm, MeasurementOp};
use crate::partition::Partition;
use crate::seed::rng_from_seed;

const NORM_ITERS: usize = 30;
const NORM_TOL: f64 = 1e-8;
/// Headroom on the power-iteration estimate, which approaches from below.
const STEP_MARGIN: f64 = 1.05;
/// Growth of `L` when an unaccelerated step still raises the objective.
const BACKOFF: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub max_iters: usize,
    pub consecutive_hits: usize,
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tol: 1e-4,
            max_iters: 2000,
            consecutive_hits: 3,
            rng_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::arg(format!("rel_tol must be positive, got {}", self.rel_tol)));
        }
        if self.consecutive_hits == 0 {
            return Err(Error::arg("consecutive_hits must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryProblem<'a> {
    pub dictionary: &'a Dictionary,
    pub partition: &'a Partition,
    pub op: &'a MeasurementOp,
    pub b: &'a MeasurementVector,
    pub nu: f64,
    /// `K x cells`; column `j` weighs the code of cell `j`.
    weights: Array2<f64>,
}

impl<'a> RecoveryProblem<'a> {
    pub fn new(
        dictionary: &'a Dictionary,
        partition: &'a Partition,
        op: &'a MeasurementOp,
        b: &'a MeasurementVector,
        nu: f64,
        weights: &[WeightVector],
    ) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::arg(format!("nu must be positive, got {nu}")));
        }
        if partition.patch_dims() != (dictionary.patch_rows(), dictionary.patch_cols()) {
            return Err(Error::shape(format!(
                "partition patches are {:?}, dictionary atoms are {}x{}",
                partition.patch_dims(),
                dictionary.patch_rows(),
                dictionary.patch_cols()
            )));
        }
        if partition.image_dims() != op.image_dims() {
            return Err(Error::shape(format!(
                "partition covers {:?}, operator acts on {:?}",
                partition.image_dims(),
                op.image_dims()
            )));
        }
        if b.len() != op.output_len() {
            return Err(Error::shape(format!(
                "{} measurements, operator produces {}",
                b.len(),
                op.output_len()
            )));
        }
        if weights.len() != partition.num_cells() {
            return Err(Error::shape(format!(
                "{} weight vectors for {} cells",
                weights.len(),
                partition.num_cells()
            )));
        }
        let k = dictionary.num_atoms();
        let mut w = Array2::zeros((k, weights.len()));
        for (mut col, wv) in w.axis_iter_mut(Axis(1)).zip(weights) {
            if wv.len() != k {
                return Err(Error::shape(format!(
                    "weight vector of length {} for {k} atoms",
                    wv.len()
                )));
            }
            col.assign(wv.values());
        }
        Ok(RecoveryProblem {
            dictionary,
            partition,
            op,
            b,
            nu,
            weights: w,
        })
    }

    /// Uses [`WeightVector::default_for`] on every cell.
    pub fn with_default_weights(
        dictionary: &'a Dictionary,
        partition: &'a Partition,
        op: &'a MeasurementOp,
        b: &'a MeasurementVector,
        nu: f64,
    ) -> Result<Self> {
        let w = vec![WeightVector::default_for(dictionary); partition.num_cells()];
        Self::new(dictionary, partition, op, b, nu, &w)
    }

    pub fn coefficient_dims(&self) -> (usize, usize) {
        (self.dictionary.num_atoms(), self.partition.num_cells())
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    fn check_coefficients(&self, y: ArrayView2<f64>) -> Result<()> {
        if y.dim() != self.coefficient_dims() {
            return Err(Error::shape(format!(
                "coefficients are {:?}, expected {:?}",
                y.dim(),
                self.coefficient_dims()
            )));
        }
        Ok(())
    }

    /// `sum_j R_j^T D y_j`.
    pub fn synthesize(&self, y: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_coefficients(y)?;
        let frames = self.dictionary.atoms().dot(&y);
        let mut acc = Array2::zeros(self.partition.image_dims());
        self.partition.embed_all(frames.view(), &mut acc)?;
        Ok(acc)
    }

    fn forward_values(&self, y: ArrayView2<f64>) -> Result<Vec<Complex64>> {
        self.op.apply_array(self.synthesize(y)?.view())
    }

    fn adjoint_values(&self, v: &[Complex64]) -> Result<CoefficientMatrix> {
        let img = self.op.adjoint_values(v)?;
        let frames = self.partition.extract_all(img.view())?;
        Ok(self.dictionary.atoms().t().dot(&frames))
    }

    /// `||forward||` by power iteration.
    pub fn forward_norm(&self) -> f64 {
        let (k, cells) = self.coefficient_dims();
        spectral_norm(
            k * cells,
            |x| {
                let y = ArrayView2::from_shape((k, cells), x).expect("coefficient shape");
                self.forward_values(y).expect("shapes checked")
            },
            |v| self.adjoint_values(v).expect("shapes checked").into_iter().collect(),
            NORM_ITERS,
            NORM_TOL,
        )
    }

    fn penalty(&self, y: ArrayView2<f64>) -> f64 {
        Zip::from(y)
            .and(&self.weights)
            .fold(0.0, |acc, &v, &w| acc + w * v.abs())
    }

    fn misfit(&self, ay: &[Complex64]) -> f64 {
        ay.iter()
            .zip(self.b.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / (2.0 * self.nu)
    }

    pub fn objective(&self, y: ArrayView2<f64>) -> Result<f64> {
        let ay = self.forward_values(y)?;
        Ok(self.penalty(y) + self.misfit(&ay))
    }
}

/// `A(sum_j R_j^T D y_j)`.
pub fn synthesis_forward(prob: &RecoveryProblem, y: ArrayView2<f64>) -> Result<MeasurementVector> {
    MeasurementVector::new(prob.forward_values(y)?, prob.op.is_complex())
}

/// Adjoint of [`synthesis_forward`]; the real part is taken for complex
/// operators.
pub fn synthesis_adjoint(prob: &RecoveryProblem, v: &MeasurementVector) -> Result<CoefficientMatrix> {
    prob.adjoint_values(v.values())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverRecord {
    pub iteration: usize,
    pub objective: f64,
    pub restart: bool,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub coefficients: CoefficientMatrix,
    pub image: Image,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<SolverRecord>,
}

impl SolveOutcome {
    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.objective)
    }

    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.trace {
            w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn axpby(a: f64, x: &[Complex64], b: f64, y: &[Complex64]) -> Vec<Complex64> {
    x.iter().zip(y).map(|(x, y)| x * a + y * b).collect()
}

/// FISTA with restart from a seeded Gaussian start.
pub fn solve(prob: &RecoveryProblem, config: &SolverConfig) -> Result<SolveOutcome> {
    config.validate()?;
    let (k, cells) = prob.coefficient_dims();
    let mut rng = rng_from_seed(config.rng_seed);
    let mut y: CoefficientMatrix = Array2::from_shape_simple_fn((k, cells), || StandardNormal.sample(&mut rng));

    let norm = prob.forward_norm();
    let mut lip = if norm > 0.0 {
        norm * norm / prob.nu * STEP_MARGIN
    } else {
        1.0
    };

    let mut ay = prob.forward_values(y.view())?;
    let mut f = prob.penalty(y.view()) + prob.misfit(&ay);
    let mut z = y.clone();
    let mut az = ay.clone();
    let mut t = 1.0;
    let mut accelerated = false;
    let mut hits = 0;
    let mut converged = false;
    let mut trace = Vec::new();
    let mut iteration = 0;

    while iteration < config.max_iters {
        iteration += 1;
        let residual: Vec<Complex64> = az.iter().zip(prob.b.values()).map(|(a, b)| a - b).collect();
        let grad = prob.adjoint_values(&residual)? / prob.nu;
        let mut y_new = &z - &(grad / lip);
        Zip::from(&mut y_new)
            .and(&prob.weights)
            .for_each(|v, &w| *v = shrink(*v, w / lip));
        let ay_new = prob.forward_values(y_new.view())?;
        let f_new = prob.penalty(y_new.view()) + prob.misfit(&ay_new);
        if !f_new.is_finite() {
            return Err(Error::NonFinite {
                context: "recovery objective",
                iteration,
            });
        }

        if f_new > f {
            // Retry from the current iterate without momentum; if that also
            // fails the step is too long.
            if !accelerated {
                lip *= BACKOFF;
            }
            z = y.clone();
            az = ay.clone();
            t = 1.0;
            accelerated = false;
            hits = 0;
            trace.push(SolverRecord {
                iteration,
                objective: f,
                restart: true,
            });
            continue;
        }

        let change = (f - f_new).abs() / (1.0 + f);
        let t_new = next_t(t);
        let beta = (t - 1.0) / t_new;
        z = &y_new + &((&y_new - &y) * beta);
        az = axpby(1.0 + beta, &ay_new, -beta, &ay);
        accelerated = beta > 0.0;
        t = t_new;
        y = y_new;
        ay = ay_new;
        f = f_new;
        trace.push(SolverRecord {
            iteration,
            objective: f,
            restart: false,
        });

        hits = if change <= config.rel_tol { hits + 1 } else { 0 };
        if hits >= config.consecutive_hits {
            converged = true;
            break;
        }
    }

    let image = Image::new(prob.synthesize(y.view())?)?;
    Ok(SolveOutcome {
        coefficients: y,
        image,
        iterations: iteration,
        converged,
        trace,
    })
}
