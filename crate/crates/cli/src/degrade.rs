use std::path::PathBuf;

use anyhow::Result;
use clap::ValueEnum;
use patchrec::operators::{add_noise, KernelId, MaskSet};
use patchrec::seed::derive_seed;

use crate::files::{file_name, read_pgm, to_json, with_suffix, write_atomic, Manifest, OpSidecar};
use crate::usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OpArg {
    Mask,
    Circulant,
    BlurAverage,
    BlurMotion,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, value_enum)]
    op: OpArg,
    /// Sampling ratio for mask and circulant operators, in (0, 1].
    #[arg(long, default_value_t = 0.3)]
    sr: f64,
    /// Relative noise level.
    #[arg(long, default_value_t = 0.01)]
    sigma_hat: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes PREFIX.pmeas, PREFIX.op.json and PREFIX.json.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let img = read_pgm(&args.image)?;
    let (rows, cols) = img.dims();
    let sampled = matches!(args.op, OpArg::Mask | OpArg::Circulant);
    if sampled && !(args.sr > 0.0 && args.sr <= 1.0) {
        return Err(usage(format!("--sr must lie in (0, 1], got {}", args.sr)));
    }
    if !(args.sigma_hat.is_finite() && args.sigma_hat >= 0.0) {
        return Err(usage(format!(
            "--sigma-hat must be nonnegative, got {}",
            args.sigma_hat
        )));
    }
    let mask = || MaskSet::sample(rows, cols, args.sr, derive_seed(args.seed, "mask"));
    let sidecar = match args.op {
        OpArg::Mask => OpSidecar::Mask {
            rows,
            cols,
            indices: mask()?.indices().to_vec(),
        },
        OpArg::Circulant => OpSidecar::Circulant {
            rows,
            cols,
            indices: mask()?.indices().to_vec(),
            spectrum_seed: derive_seed(args.seed, "spectrum"),
        },
        OpArg::BlurAverage => OpSidecar::Blur {
            rows,
            cols,
            kernel: KernelId::Average,
        },
        OpArg::BlurMotion => OpSidecar::Blur {
            rows,
            cols,
            kernel: KernelId::Motion,
        },
    };
    let op = sidecar.build()?;
    let clean = op.apply(&img)?;
    let b = add_noise(&clean, args.sigma_hat, derive_seed(args.seed, "noise"))?;

    let meas_path = with_suffix(&args.out, ".pmeas");
    let op_path = with_suffix(&args.out, ".op.json");
    let manifest = Manifest {
        image: file_name(&args.image),
        rows,
        cols,
        kind: op.kind().to_string(),
        op: args
            .op
            .to_possible_value()
            .expect("named variant")
            .get_name()
            .to_string(),
        sr: sampled.then_some(args.sr),
        sigma_hat: args.sigma_hat,
        sigma: b.noise_sigma().unwrap_or(0.0),
        seed: args.seed,
        num_measurements: b.len(),
        complex: b.is_complex(),
        measurements: file_name(&meas_path),
        operator: file_name(&op_path),
    };
    write_atomic(&meas_path, &b.to_bytes())?;
    write_atomic(&op_path, &to_json(&sidecar)?)?;
    write_atomic(&with_suffix(&args.out, ".json"), &to_json(&manifest)?)?;
    Ok(())
}
