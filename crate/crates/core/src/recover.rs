//! Whole-image recovery: one solve per partition, averaged, with an optional
//! dictionary refresh learned from the averaged estimate.

use ndarray::{s, Array2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::bench::sample_training_patches;
use crate::dictionary::Dictionary;
use crate::dictlearn::{learn, LearnConfig, LearnTrace};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::l1solve::{solve, RecoveryProblem, SolveOutcome, SolverConfig};
use crate::measurement::MeasurementVector;
use crate::operators::MeasurementOp;
use crate::partition::Partition;
use crate::seed::derive_seed;

/// Pixel scale of training patches relative to image intensities.
pub const LEARN_SCALE: f64 = 255.0;

/// Upper-left cell sizes of the default partitions, in order:
/// `n1 x n2`, `n1 x n2/2`, `n1/2 x n2`, `n1 x n2/4`, `n1/4 x n2`.
pub fn corner_sizes(patch_rows: usize, patch_cols: usize, count: usize) -> Result<Vec<(usize, usize)>> {
    if !(1..=5).contains(&count) {
        return Err(Error::arg(format!("partition count must be 1..=5, got {count}")));
    }
    let half = |v: usize| (v / 2).max(1);
    let quarter = |v: usize| (v / 4).max(1);
    let all = [
        (patch_rows, patch_cols),
        (patch_rows, half(patch_cols)),
        (half(patch_rows), patch_cols),
        (patch_rows, quarter(patch_cols)),
        (quarter(patch_rows), patch_cols),
    ];
    Ok(all[..count].to_vec())
}

pub fn partition_set(
    image_rows: usize,
    image_cols: usize,
    patch_rows: usize,
    patch_cols: usize,
    corners: &[(usize, usize)],
) -> Result<Vec<Partition>> {
    corners
        .iter()
        .map(|&(r0, c0)| Partition::new(image_rows, image_cols, patch_rows, patch_cols, r0, c0))
        .collect()
}

/// `nu = sigma` for mask and circulant operators, `0.1 sigma` for blur.
pub fn default_nu(op_kind: &str, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::arg(format!(
            "automatic nu needs a positive noise level, got sigma = {sigma}"
        )));
    }
    match op_kind {
        "mask" | "circulant" => Ok(sigma),
        "blur" => Ok(0.1 * sigma),
        other => Err(Error::arg(format!("unknown operator kind {other}"))),
    }
}

/// `10 log10(255^2 / MSE)`; identical images give `+inf`.
pub fn psnr(estimate: &Image, truth: &Image) -> Result<f64> {
    if estimate.dims() != truth.dims() {
        return Err(Error::shape(format!(
            "estimate is {:?}, truth is {:?}",
            estimate.dims(),
            truth.dims()
        )));
    }
    let diff = estimate.pixels() - truth.pixels();
    let mse = diff.iter().map(|v| v * v).sum::<f64>() / diff.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// PSNR of the mean of the first `k` estimates, for `k = 1..=t`.
pub fn running_average_psnr(estimates: &[Image], truth: &Image) -> Result<Vec<f64>> {
    let mut sum = Array2::zeros(truth.dims());
    let mut out = Vec::with_capacity(estimates.len());
    for (k, est) in estimates.iter().enumerate() {
        if est.dims() != truth.dims() {
            return Err(Error::shape("estimate and truth differ in size"));
        }
        sum += est.pixels();
        let avg = Image::new(&sum / (k + 1) as f64)?;
        out.push(psnr(&avg, truth)?);
    }
    Ok(out)
}

/// Solver seed for one partition; depends on the partition, not its
/// position in the list.
pub fn partition_seed(base: u64, partition: &Partition) -> u64 {
    let (r0, c0) = partition.corner();
    derive_seed(base, &format!("partition-{r0}x{c0}"))
}

/// One solve on one partition with default weights.
pub fn recover_once(
    dictionary: &Dictionary,
    op: &MeasurementOp,
    b: &MeasurementVector,
    nu: f64,
    partition: &Partition,
    solver: &SolverConfig,
) -> Result<SolveOutcome> {
    let prob = RecoveryProblem::with_default_weights(dictionary, partition, op, b, nu)?;
    let config = SolverConfig {
        rng_seed: partition_seed(solver.rng_seed, partition),
        ..*solver
    };
    solve(&prob, &config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PartitionStats {
    pub corner: (usize, usize),
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct AveragedRecovery {
    pub average: Image,
    pub estimates: Vec<Image>,
    pub stats: Vec<PartitionStats>,
}

/// Solves every partition independently, in parallel, and averages.
pub fn recover_averaged(
    dictionary: &Dictionary,
    op: &MeasurementOp,
    b: &MeasurementVector,
    nu: f64,
    partitions: &[Partition],
    solver: &SolverConfig,
) -> Result<AveragedRecovery> {
    if partitions.is_empty() {
        return Err(Error::arg("need at least one partition"));
    }
    let outcomes: Vec<SolveOutcome> = partitions
        .par_iter()
        .map(|p| recover_once(dictionary, op, b, nu, p, solver))
        .collect::<Result<_>>()?;
    let mut sum = Array2::zeros(op.image_dims());
    for o in &outcomes {
        sum += o.image.pixels();
    }
    let average = Image::new(sum / partitions.len() as f64)?;
    let stats = partitions
        .iter()
        .zip(&outcomes)
        .map(|(p, o)| PartitionStats {
            corner: p.corner(),
            iterations: o.iterations,
            converged: o.converged,
        })
        .collect();
    Ok(AveragedRecovery {
        average,
        estimates: outcomes.into_iter().map(|o| o.image).collect(),
        stats,
    })
}

/// Where the refresh takes its training patches from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatchSource {
    /// The full-size cells of the first partition.
    Partition,
    /// Every patch position on a grid with the given stride.
    Overlapping { stride: usize },
    /// `count` uniformly placed patches.
    Random { count: usize },
}

impl Default for PatchSource {
    fn default() -> Self {
        PatchSource::Overlapping { stride: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct AdaptiveConfig {
    pub rounds: usize,
    pub learn: LearnConfig,
    pub patch_source: PatchSource,
}

impl AdaptiveConfig {
    /// One refresh, `lambda = 0.8 / sqrt(n)`.
    pub fn new(patch_rows: usize, patch_cols: usize, patch_source: PatchSource) -> Self {
        let n = (patch_rows * patch_cols) as f64;
        AdaptiveConfig {
            rounds: 1,
            learn: LearnConfig::new(0.8 / n.sqrt()),
            patch_source,
        }
    }
}

/// Mean-subtracted training patches of `img`, scaled by `1 / LEARN_SCALE`.
pub fn refresh_patches(
    img: &Image,
    patch_rows: usize,
    patch_cols: usize,
    source: PatchSource,
    first: &Partition,
    seed: u64,
) -> Result<Array2<f64>> {
    let (rows, cols) = img.dims();
    let n = patch_rows * patch_cols;
    let mut x = match source {
        PatchSource::Partition => {
            let full: Vec<usize> = first
                .cells()
                .iter()
                .enumerate()
                .filter(|(_, c)| c.height == patch_rows && c.width == patch_cols)
                .map(|(i, _)| i)
                .collect();
            let all = first.extract_all(img.pixels().view())?;
            all.select(Axis(1), &full)
        }
        PatchSource::Overlapping { stride } => {
            if stride == 0 {
                return Err(Error::arg("patch stride must be positive"));
            }
            let positions: Vec<(usize, usize)> = (0..=rows - patch_rows)
                .step_by(stride)
                .flat_map(|r| (0..=cols - patch_cols).step_by(stride).map(move |c| (r, c)))
                .collect();
            let mut x = Array2::zeros((n, positions.len()));
            for (mut col, (r, c)) in x.axis_iter_mut(Axis(1)).zip(positions) {
                let patch = img.pixels().slice(s![r..r + patch_rows, c..c + patch_cols]);
                col.iter_mut().zip(patch.iter()).for_each(|(d, v)| *d = *v);
            }
            x
        }
        PatchSource::Random { count } => {
            return Ok(
                sample_training_patches(std::slice::from_ref(img), count, patch_rows, patch_cols, seed)? / LEARN_SCALE,
            )
        }
    };
    for mut col in x.axis_iter_mut(Axis(1)) {
        let mean = col.mean().unwrap_or(0.0);
        col.mapv_inplace(|v| (v - mean) / LEARN_SCALE);
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct AdaptiveRecovery {
    /// Recoveries with the initial and each refreshed dictionary.
    pub rounds: Vec<AveragedRecovery>,
    pub dictionaries: Vec<Dictionary>,
    pub traces: Vec<LearnTrace>,
}

impl AdaptiveRecovery {
    pub fn final_recovery(&self) -> &AveragedRecovery {
        self.rounds.last().expect("at least one round")
    }
}

/// Recovers with `d0`, then `rounds` times learns a dictionary from the
/// current estimate (warm-started from the current non-DC atoms), adds the
/// DC atom back, and recovers again.
pub fn recover_adaptive(
    d0: &Dictionary,
    op: &MeasurementOp,
    b: &MeasurementVector,
    nu: f64,
    partitions: &[Partition],
    config: &AdaptiveConfig,
    solver: &SolverConfig,
) -> Result<AdaptiveRecovery> {
    if config.rounds == 0 {
        return Err(Error::arg("adaptive recovery needs at least one round"));
    }
    let (n1, n2) = (d0.patch_rows(), d0.patch_cols());
    let first = recover_averaged(d0, op, b, nu, partitions, solver)?;
    let mut out = AdaptiveRecovery {
        rounds: vec![first],
        dictionaries: Vec::new(),
        traces: Vec::new(),
    };
    let mut current = d0.clone();
    for round in 0..config.rounds {
        let estimate = &out.rounds.last().expect("first round").average;
        let seed = derive_seed(config.learn.rng_seed, &format!("refresh-{round}"));
        let x = refresh_patches(estimate, n1, n2, config.patch_source, &partitions[0], seed)?;
        if x.ncols() == 0 {
            return Err(Error::arg("no full-size training patches in the estimate"));
        }
        let start = Dictionary::new(n1, n2, current.learned_atoms(), false)?;
        let y0 = Array2::zeros((start.num_atoms(), x.ncols()));
        let learned = learn(x.view(), &start, y0, &config.learn)?;
        current = Dictionary::with_dc_atom(n1, n2, learned.dictionary.atoms())?;
        let next = recover_averaged(&current, op, b, nu, partitions, solver)?;
        out.rounds.push(next);
        out.dictionaries.push(current.clone());
        out.traces.push(learned.trace);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionReport {
    pub corner: (usize, usize),
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundReport {
    pub partitions: Vec<PartitionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub averaged_psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub running_psnr: Option<Vec<f64>>,
}

impl RoundReport {
    pub fn new(rec: &AveragedRecovery, truth: Option<&Image>) -> Result<Self> {
        let mut partitions = Vec::with_capacity(rec.stats.len());
        for (s, est) in rec.stats.iter().zip(&rec.estimates) {
            partitions.push(PartitionReport {
                corner: s.corner,
                iterations: s.iterations,
                converged: s.converged,
                psnr: truth.map(|t| psnr(est, t)).transpose()?,
            });
        }
        Ok(RoundReport {
            partitions,
            averaged_psnr: truth.map(|t| psnr(&rec.average, t)).transpose()?,
            running_psnr: truth.map(|t| running_average_psnr(&rec.estimates, t)).transpose()?,
        })
    }
}
