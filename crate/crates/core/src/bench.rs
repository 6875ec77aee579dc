//! Synthetic dictionary-recovery benchmark, training-patch sampling, the
//! overcomplete DCT, and a procedural test scene.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dictionary::{dc_value, Dictionary};
use crate::dictlearn::{learn, normalize_columns, random_dictionary, LearnConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::seed::{component_rng, derive_seed};

/// Absolute cosine at or above which a true atom counts as recovered.
pub const MATCH_COSINE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub p: usize,
    pub r: usize,
    pub num_trials: usize,
    pub rng_seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.p == 0 {
            return Err(Error::arg("n, K and p must be positive"));
        }
        if self.r == 0 || self.r > self.k {
            return Err(Error::arg(format!(
                "sparsity r = {} must lie in 1..={}",
                self.r, self.k
            )));
        }
        if self.r == self.k {
            log::warn!("r = K = {}: every sample mixes all atoms", self.k);
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        0.5 / (self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub dictionary: Array2<f64>,
    pub samples: Array2<f64>,
    /// Atom indices mixed into each sample, ascending.
    pub supports: Vec<Vec<usize>>,
}

/// Unit-norm Gaussian dictionary and `p` samples, each a Gaussian
/// combination of `r` atoms picked uniformly without replacement.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = component_rng(spec.rng_seed, "synthetic");
    let mut d = Array2::from_shape_simple_fn((spec.n, spec.k), || StandardNormal.sample(&mut rng));
    normalize_columns(&mut d);
    let mut samples = Array2::zeros((spec.n, spec.p));
    let mut supports = Vec::with_capacity(spec.p);
    for mut col in samples.axis_iter_mut(Axis(1)) {
        let mut support = sample(&mut rng, spec.k, spec.r).into_vec();
        support.sort_unstable();
        for &atom in &support {
            let g: f64 = StandardNormal.sample(&mut rng);
            col.scaled_add(g, &d.column(atom));
        }
        supports.push(support);
    }
    Ok(SynthData {
        dictionary: d,
        samples,
        supports,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryRate {
    pub percent: f64,
    /// Zero-norm atoms left out of the comparison.
    pub excluded_true: usize,
    pub excluded_estimated: usize,
}

/// Percentage of true atoms whose best absolute cosine against the estimated
/// atoms reaches [`MATCH_COSINE`].
pub fn recovery_rate(truth: ArrayView2<f64>, estimate: ArrayView2<f64>) -> Result<RecoveryRate> {
    if truth.nrows() != estimate.nrows() {
        return Err(Error::shape(format!(
            "atoms of length {} and {}",
            truth.nrows(),
            estimate.nrows()
        )));
    }
    let unit = |a: ArrayView2<f64>| -> (Vec<Array1<f64>>, usize) {
        let mut kept = Vec::new();
        let mut dropped = 0;
        for col in a.axis_iter(Axis(1)) {
            let norm = col.dot(&col).sqrt();
            if norm > 0.0 {
                kept.push(&col / norm);
            } else {
                dropped += 1;
            }
        }
        (kept, dropped)
    };
    let (t, excluded_true) = unit(truth);
    let (e, excluded_estimated) = unit(estimate);
    if excluded_true + excluded_estimated > 0 {
        log::warn!("{excluded_true} true and {excluded_estimated} estimated zero atoms excluded");
    }
    let matched = t
        .iter()
        .filter(|d| e.iter().any(|x| d.dot(x).abs() >= MATCH_COSINE))
        .count();
    let percent = if t.is_empty() {
        0.0
    } else {
        100.0 * matched as f64 / t.len() as f64
    };
    Ok(RecoveryRate {
        percent,
        excluded_true,
        excluded_estimated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchCell {
    pub n: usize,
    pub k: usize,
    pub p: usize,
    pub r: usize,
}

/// `n = 16`, `K` in {32, 64}, `p` in {320, 1600}, `r` in {2, 3, 4}.
pub fn desk_grid() -> Vec<BenchCell> {
    let mut cells = Vec::new();
    for k in [32, 64] {
        for p in [320, 1600] {
            for r in [2, 3, 4] {
                cells.push(BenchCell { n: 16, k, p, r });
            }
        }
    }
    cells
}

/// `n = 36`, `(K, p)` in {(2n, 20n), (2n, 100n), (4n, 100n)}, `r` in {4, 6, 8, 10, 12}.
pub fn paper_grid() -> Vec<BenchCell> {
    let n = 36;
    let mut cells = Vec::new();
    for (k, p) in [(2 * n, 20 * n), (2 * n, 100 * n), (4 * n, 100 * n)] {
        for r in [4, 6, 8, 10, 12] {
            cells.push(BenchCell { n, k, p, r });
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub cell_id: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub p: usize,
    pub r: usize,
    pub mean_rate_pct: f64,
    pub mean_time_s: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TrialResult {
    pub rate: f64,
    pub seconds: f64,
    pub iterations: usize,
}

/// One trial: generate, learn from a Gaussian start with `Y0 = 0`, score.
pub fn run_trial(spec: &SynthSpec, config: &LearnConfig) -> Result<TrialResult> {
    let data = generate_synthetic(spec)?;
    let d0 = random_dictionary(spec.n, 1, spec.k, derive_seed(spec.rng_seed, "init"))?;
    let y0 = Array2::zeros((spec.k, spec.p));
    let start = Instant::now();
    let out = learn(data.samples.view(), &d0, y0, config)?;
    let seconds = start.elapsed().as_secs_f64();
    let rate = recovery_rate(data.dictionary.view(), out.dictionary.atoms().view())?;
    Ok(TrialResult {
        rate: rate.percent,
        seconds,
        iterations: out.trace.records.len(),
    })
}

/// Runs `trials` trials per cell with `lambda = 0.5 / sqrt(n)`; trial `t` of
/// every cell uses seed `base_seed + t`.
pub fn run_synth_bench(
    cells: &[BenchCell],
    trials: usize,
    base_seed: u64,
    config: &LearnConfig,
) -> Result<Vec<BenchRow>> {
    if trials == 0 {
        return Err(Error::arg("need at least one trial"));
    }
    let mut rows = Vec::with_capacity(cells.len());
    for (cell_id, cell) in cells.iter().enumerate() {
        let results: Vec<TrialResult> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let spec = SynthSpec {
                    n: cell.n,
                    k: cell.k,
                    p: cell.p,
                    r: cell.r,
                    num_trials: trials,
                    rng_seed: base_seed.wrapping_add(t as u64),
                };
                let cfg = LearnConfig {
                    lambda: spec.lambda(),
                    ..*config
                };
                run_trial(&spec, &cfg)
            })
            .collect::<Result<_>>()?;
        let count = results.len() as f64;
        rows.push(BenchRow {
            cell_id,
            k: cell.k,
            p: cell.p,
            r: cell.r,
            mean_rate_pct: results.iter().map(|r| r.rate).sum::<f64>() / count,
            mean_time_s: results.iter().map(|r| r.seconds).sum::<f64>() / count,
            trials,
        });
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// `n x m` matrix whose column `k` samples `cos(pi k i / m)`, mean removed
/// for `k > 0`, unit norm.
fn cosine_basis(n: usize, m: usize) -> Array2<f64> {
    let mut b = Array2::from_shape_fn((n, m), |(i, k)| (PI * (i * k) as f64 / m as f64).cos());
    for (k, mut col) in b.axis_iter_mut(Axis(1)).enumerate() {
        if k > 0 {
            let mean = col.mean().unwrap_or(0.0);
            col.mapv_inplace(|v| v - mean);
        }
    }
    normalize_columns(&mut b);
    b
}

/// Separable overcomplete DCT with `K - 1` atoms from `sqrt(K - 1)`
/// frequencies per axis, behind a prepended DC atom.
pub fn build_dct_dictionary(patch_rows: usize, patch_cols: usize, num_atoms: usize) -> Result<Dictionary> {
    let m = (num_atoms.saturating_sub(1) as f64).sqrt().round() as usize;
    if num_atoms < 2 || m * m != num_atoms - 1 {
        return Err(Error::arg(format!(
            "K - 1 must be a perfect square, got K = {num_atoms}"
        )));
    }
    let rows = cosine_basis(patch_rows, m);
    let cols = cosine_basis(patch_cols, m);
    let n = patch_rows * patch_cols;
    let mut atoms = Array2::zeros((n, num_atoms));
    atoms.column_mut(0).fill(dc_value(n));
    for kr in 0..m {
        for kc in 0..m {
            let mut atom = atoms.column_mut(1 + kr * m + kc);
            for r in 0..patch_rows {
                for c in 0..patch_cols {
                    atom[r * patch_cols + c] = rows[[r, kr]] * cols[[c, kc]];
                }
            }
        }
    }
    Dictionary::new(patch_rows, patch_cols, atoms, true)
}

/// `per_image` uniformly placed patches from each image, vectorized
/// row-major and mean-subtracted. Images smaller than a patch are skipped.
pub fn sample_training_patches(
    images: &[Image],
    per_image: usize,
    patch_rows: usize,
    patch_cols: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    if patch_rows == 0 || patch_cols == 0 {
        return Err(Error::arg("patch size must be positive"));
    }
    let n = patch_rows * patch_cols;
    let mut columns: Vec<f64> = Vec::new();
    let mut count = 0;
    for (i, img) in images.iter().enumerate() {
        let (rows, cols) = img.dims();
        if rows < patch_rows || cols < patch_cols {
            log::warn!("image {i} is {rows}x{cols}, smaller than the {patch_rows}x{patch_cols} patch; skipped");
            continue;
        }
        let mut rng = component_rng(seed, &format!("patches-{i}"));
        for _ in 0..per_image {
            let r0 = rng.random_range(0..=rows - patch_rows);
            let c0 = rng.random_range(0..=cols - patch_cols);
            let patch = img
                .pixels()
                .slice(ndarray::s![r0..r0 + patch_rows, c0..c0 + patch_cols]);
            let mean = patch.mean().unwrap_or(0.0);
            columns.extend(patch.iter().map(|v| v - mean));
            count += 1;
        }
    }
    let by_rows = Array2::from_shape_vec((count, n), columns).expect("patch buffer");
    Ok(by_rows.reversed_axes().as_standard_layout().into_owned())
}

/// Deterministic grayscale scene in `[0, 255]`: a shaded background with
/// discs, bars and a stripe patch placed from `seed`.
pub fn procedural_scene(rows: usize, cols: usize, seed: u64) -> Result<Image> {
    let mut rng = component_rng(seed, "scene");
    let (h, w) = (rows as f64, cols as f64);
    let tilt: f64 = rng.random_range(-0.5..0.5);
    let mut px = Array2::from_shape_fn((rows, cols), |(r, c)| {
        let (y, x) = (r as f64 / h, c as f64 / w);
        90.0 + 60.0 * (x + tilt * y) + 20.0 * (2.0 * PI * y).sin()
    });
    for _ in 0..4 {
        let (cy, cx) = (rng.random_range(0.15..0.85) * h, rng.random_range(0.15..0.85) * w);
        let radius = rng.random_range(0.08..0.2) * h.min(w);
        let level: f64 = rng.random_range(20.0..235.0);
        px.indexed_iter_mut().for_each(|((r, c), v)| {
            let d = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt();
            if d <= radius {
                *v = level;
            }
        });
    }
    for _ in 0..2 {
        let (r0, c0) = (rng.random_range(0..rows), rng.random_range(0..cols));
        let (bh, bw) = (rng.random_range(2..=rows / 4 + 2), rng.random_range(2..=cols / 3 + 2));
        let level: f64 = rng.random_range(0.0..255.0);
        for r in r0..(r0 + bh).min(rows) {
            for c in c0..(c0 + bw).min(cols) {
                px[[r, c]] = level;
            }
        }
    }
    let (sr, sc) = (rng.random_range(0..rows / 2), rng.random_range(0..cols / 2));
    let period: f64 = rng.random_range(3.0..6.0);
    for r in sr..(sr + rows / 4).min(rows) {
        for c in sc..(sc + cols / 4).min(cols) {
            px[[r, c]] = 128.0 + 70.0 * (2.0 * PI * (r + c) as f64 / period).sin();
        }
    }
    px.mapv_inplace(|v| v.clamp(0.0, 255.0).round());
    Image::new(px)
}
