use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use patchrec::bench::build_dct_dictionary;
use patchrec::recover::{
    corner_sizes, default_nu, partition_set, psnr, recover_adaptive, recover_averaged, AdaptiveConfig,
    AveragedRecovery, PatchSource, RoundReport,
};
use patchrec::seed::derive_seed;
use patchrec::{image_to_pgm, Dictionary, Image, MeasurementVector, SolverConfig};
use serde::Serialize;

use crate::files::{parse_dims, read_input, read_pgm, to_json, with_suffix, write_atomic, Manifest, OpSidecar};
use crate::usage;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dictionary file (PDICT1), or `dct` for the 64x257 overcomplete DCT.
    #[arg(long, default_value = "dct")]
    dict: String,
    /// PREFIX given to `degrade --out`.
    #[arg(long)]
    measurements: PathBuf,
    /// `3`, `5`, or a comma-separated list of corner sizes such as `8x8,8x4`.
    #[arg(long, default_value = "3")]
    partitions: String,
    /// Fidelity weight, or `auto` (sigma for mask and circulant, 0.1 sigma for blur).
    #[arg(long, default_value = "auto")]
    nu: String,
    /// 1 to refresh the dictionary from the first estimate.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    adaptive: u8,
    /// Dictionary refreshes when adaptive.
    #[arg(long, default_value_t = 1)]
    rounds: usize,
    /// Training patches for the refresh: `overlap:STRIDE`, `partition`, or `random:COUNT`.
    #[arg(long, default_value = "overlap:2")]
    refresh_patches: String,
    /// Ground truth PGM; enables PSNR in the report.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Recovered image (PGM).
    #[arg(long)]
    out: PathBuf,
    /// Report JSON; defaults to OUT.json.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Serialize)]
struct ConfigEcho {
    dict: String,
    measurements: String,
    kind: String,
    corners: Vec<(usize, usize)>,
    nu: f64,
    adaptive: bool,
    rounds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    refresh_patches: Option<PatchSource>,
    seed: u64,
    solver: SolverConfig,
}

#[derive(Debug, Serialize)]
struct Report {
    config: ConfigEcho,
    rounds: Vec<RoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_psnr: Option<f64>,
    wall_time_s: f64,
}

fn load_dictionary(spec: &str) -> Result<Dictionary> {
    if spec == "dct" {
        return Ok(build_dct_dictionary(8, 8, 257)?);
    }
    let bytes = read_input(Path::new(spec))?;
    Dictionary::from_bytes(&bytes).with_context(|| format!("parsing {spec}"))
}

fn parse_corners(text: &str, n1: usize, n2: usize) -> Result<Vec<(usize, usize)>> {
    match text {
        "3" => Ok(corner_sizes(n1, n2, 3)?),
        "5" => Ok(corner_sizes(n1, n2, 5)?),
        list => list.split(',').map(parse_dims).collect(),
    }
}

fn parse_patch_source(text: &str) -> Result<PatchSource> {
    let count = |v: &str| {
        v.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(format!("invalid --refresh-patches {text:?}")))
    };
    match text.split_once(':') {
        None if text == "partition" => Ok(PatchSource::Partition),
        Some(("overlap", v)) => Ok(PatchSource::Overlapping { stride: count(v)? }),
        Some(("random", v)) => Ok(PatchSource::Random { count: count(v)? }),
        _ => Err(usage(format!("invalid --refresh-patches {text:?}"))),
    }
}

pub fn run(args: Args) -> Result<()> {
    let start = Instant::now();
    let dict = load_dictionary(&args.dict)?;
    let (n1, n2) = (dict.patch_rows(), dict.patch_cols());

    let manifest_path = with_suffix(&args.measurements, ".json");
    let manifest: Manifest = serde_json::from_slice(&read_input(&manifest_path)?)
        .map_err(|e| usage(format!("invalid manifest {}: {e}", manifest_path.display())))?;
    let op_path = with_suffix(&args.measurements, ".op.json");
    let sidecar: OpSidecar = serde_json::from_slice(&read_input(&op_path)?)
        .map_err(|e| usage(format!("invalid operator file {}: {e}", op_path.display())))?;
    let op = sidecar.build()?;
    let b = MeasurementVector::from_bytes(&read_input(&with_suffix(&args.measurements, ".pmeas"))?)?;
    if op.image_dims() != (manifest.rows, manifest.cols) || b.len() != op.output_len() {
        return Err(usage("manifest, operator and measurements disagree in size"));
    }
    if n1 > manifest.rows || n2 > manifest.cols {
        return Err(usage(format!(
            "dictionary patches are {n1}x{n2}, image is {}x{}",
            manifest.rows, manifest.cols
        )));
    }

    let nu = match args.nu.as_str() {
        "auto" => default_nu(op.kind(), manifest.sigma)?,
        v => v
            .parse::<f64>()
            .ok()
            .filter(|x| *x > 0.0 && x.is_finite())
            .ok_or_else(|| usage(format!("--nu must be a positive number or auto, got {v:?}")))?,
    };
    let corners = parse_corners(&args.partitions, n1, n2)?;
    let partitions = partition_set(manifest.rows, manifest.cols, n1, n2, &corners)?;
    let truth: Option<Image> = args.truth.as_deref().map(read_pgm).transpose()?;
    if let Some(t) = &truth {
        if t.dims() != op.image_dims() {
            return Err(usage(format!(
                "truth is {:?}, measurements are {:?}",
                t.dims(),
                op.image_dims()
            )));
        }
    }

    let solver = SolverConfig {
        rng_seed: derive_seed(args.seed, "solver"),
        ..SolverConfig::default()
    };
    let adaptive = args.adaptive == 1;
    let refresh = adaptive
        .then(|| parse_patch_source(&args.refresh_patches))
        .transpose()?;
    let rounds: Vec<AveragedRecovery> = match refresh {
        Some(source) => {
            let mut config = AdaptiveConfig::new(n1, n2, source);
            config.rounds = args.rounds;
            config.learn.rng_seed = derive_seed(args.seed, "refresh");
            recover_adaptive(&dict, &op, &b, nu, &partitions, &config, &solver)?.rounds
        }
        None => vec![recover_averaged(&dict, &op, &b, nu, &partitions, &solver)?],
    };
    let last = &rounds.last().expect("at least one round").average;
    write_atomic(&args.out, &image_to_pgm(last))?;

    let report = Report {
        config: ConfigEcho {
            dict: args.dict.clone(),
            measurements: args.measurements.display().to_string(),
            kind: op.kind().to_string(),
            corners,
            nu,
            adaptive,
            rounds: rounds.len() - 1,
            refresh_patches: refresh,
            seed: args.seed,
            solver,
        },
        rounds: rounds
            .iter()
            .map(|r| RoundReport::new(r, truth.as_ref()))
            .collect::<patchrec::Result<_>>()?,
        final_psnr: truth.as_ref().map(|t| psnr(last, t)).transpose()?,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let report_path = args.report.unwrap_or_else(|| with_suffix(&args.out, ".json"));
    write_atomic(&report_path, &to_json(&report)?)?;
    Ok(())
}
