use std::path::PathBuf;

use anyhow::Result;
use patchrec::bench::sample_training_patches;
use patchrec::dictlearn::random_dictionary;
use patchrec::recover::LEARN_SCALE;
use patchrec::seed::derive_seed;
use patchrec::{learn, Dictionary, LearnConfig};
use serde::Serialize;

use crate::files::{list_pgms, parse_dims, read_pgm, to_json, with_suffix, write_atomic};
use crate::usage;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Folder of training images (`*.pgm`).
    #[arg(long)]
    images: PathBuf,
    #[arg(long, default_value_t = 100)]
    patches_per_image: usize,
    /// Patch size, ROWSxCOLS.
    #[arg(long, default_value = "8x8")]
    patch: String,
    /// Learned atoms, not counting the DC atom added afterwards.
    #[arg(long, default_value_t = 256)]
    atoms: usize,
    /// l1 weight, or `auto` for 0.8 / sqrt(patch pixels).
    #[arg(long, default_value = "auto")]
    lambda: String,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// Output dictionary (PDICT1).
    #[arg(long)]
    out: PathBuf,
    /// Trace CSV; defaults to OUT.trace.csv.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Serialize)]
struct Summary {
    lambda: f64,
    samples: usize,
    atoms: usize,
    iterations: usize,
    converged: bool,
    final_objective: f64,
}

pub fn auto_lambda(patch_pixels: usize) -> f64 {
    0.8 / (patch_pixels as f64).sqrt()
}

fn parse_lambda(text: &str, patch_pixels: usize) -> Result<f64> {
    if text == "auto" {
        return Ok(auto_lambda(patch_pixels));
    }
    text.parse::<f64>()
        .ok()
        .filter(|v| *v > 0.0 && v.is_finite())
        .ok_or_else(|| usage(format!("--lambda must be a positive number or auto, got {text:?}")))
}

pub fn run(args: Args) -> Result<()> {
    let (n1, n2) = parse_dims(&args.patch)?;
    let lambda = parse_lambda(&args.lambda, n1 * n2)?;
    if args.atoms == 0 {
        return Err(usage("--atoms must be positive"));
    }
    let images = list_pgms(&args.images)?
        .iter()
        .map(|p| read_pgm(p))
        .collect::<Result<Vec<_>>>()?;
    let x = sample_training_patches(
        &images,
        args.patches_per_image,
        n1,
        n2,
        derive_seed(args.seed, "patches"),
    )? / LEARN_SCALE;
    if x.ncols() == 0 {
        return Err(usage(format!("no image is at least {n1}x{n2}")));
    }
    let d0 = random_dictionary(n1, n2, args.atoms, derive_seed(args.seed, "init"))?;
    let config = LearnConfig {
        max_iters: args.max_iters,
        rng_seed: args.seed,
        ..LearnConfig::new(lambda)
    };
    let y0 = ndarray::Array2::zeros((args.atoms, x.ncols()));
    let out = learn(x.view(), &d0, y0, &config)?;
    let dict = Dictionary::with_dc_atom(n1, n2, out.dictionary.atoms())?;
    write_atomic(&args.out, &dict.to_bytes())?;

    let mut csv = Vec::new();
    out.trace.write_csv(&mut csv)?;
    let trace_path = args.trace.unwrap_or_else(|| with_suffix(&args.out, ".trace.csv"));
    write_atomic(&trace_path, &csv)?;

    let summary = Summary {
        lambda,
        samples: x.ncols(),
        atoms: dict.num_atoms(),
        iterations: out.trace.records.len(),
        converged: out.trace.converged,
        final_objective: out.trace.objectives().last().copied().unwrap_or(f64::NAN),
    };
    print!("{}", String::from_utf8(to_json(&summary)?)?);
    Ok(())
}
