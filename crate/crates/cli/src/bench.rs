use std::path::PathBuf;

use anyhow::Result;
use clap::ValueEnum;
use patchrec::bench::{desk_grid, paper_grid, run_synth_bench, write_bench_csv};
use patchrec::LearnConfig;

use crate::files::{to_json, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    /// n = 16, K in {32, 64}, p in {320, 1600}, r in {2, 3, 4}.
    Desk,
    /// n = 36, (K, p) in {(72, 720), (72, 3600), (144, 3600)}, r in {4, 6, 8, 10, 12}.
    Paper,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    scale: Scale,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output table; `.json` gives JSON, anything else CSV.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let cells = match args.scale {
        Scale::Desk => desk_grid(),
        Scale::Paper => paper_grid(),
    };
    // lambda is set per cell from n.
    let config = LearnConfig::new(1.0);
    let rows = run_synth_bench(&cells, args.trials as usize, args.seed, &config)?;
    let json = args
        .out
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let bytes = if json {
        to_json(&rows)?
    } else {
        let mut buf = Vec::new();
        write_bench_csv(&rows, &mut buf)?;
        buf
    };
    write_atomic(&args.out, &bytes)?;
    Ok(())
}
