use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use patchrec::operators::{CirculantSpectrum, KernelId, MaskSet};
use patchrec::{image_from_pgm, Image, MeasurementOp};
use serde::{Deserialize, Serialize};

use crate::usage;

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    let bytes = read_input(path)?;
    image_from_pgm(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// `*.pgm` files of `dir`, sorted by name.
pub fn list_pgms(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| usage(format!("cannot read {}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let is_pgm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
        if is_pgm && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(usage(format!("no .pgm images in {}", dir.display())));
    }
    Ok(out)
}

/// `PREFIX` + `suffix`, keeping the prefix's directory.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn parse_dims(text: &str) -> Result<(usize, usize)> {
    let (a, b) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| usage(format!("expected ROWSxCOLS, got {text:?}")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(format!("invalid size {text:?}")))
    };
    Ok((parse(a)?, parse(b)?))
}

/// Enough to rebuild the measurement operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OpSidecar {
    Mask {
        rows: usize,
        cols: usize,
        indices: Vec<usize>,
    },
    Circulant {
        rows: usize,
        cols: usize,
        indices: Vec<usize>,
        spectrum_seed: u64,
    },
    Blur {
        rows: usize,
        cols: usize,
        kernel: KernelId,
    },
}

impl OpSidecar {
    pub fn build(&self) -> Result<MeasurementOp> {
        Ok(match self {
            OpSidecar::Mask { rows, cols, indices } => {
                MeasurementOp::mask(MaskSet::new(*rows, *cols, indices.clone())?)
            }
            OpSidecar::Circulant {
                rows,
                cols,
                indices,
                spectrum_seed,
            } => MeasurementOp::circulant(
                MaskSet::new(*rows, *cols, indices.clone())?,
                CirculantSpectrum::from_seed(*rows, *cols, *spectrum_seed),
            )?,
            OpSidecar::Blur { rows, cols, kernel } => MeasurementOp::blur(*rows, *cols, kernel.kernel())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub image: String,
    pub rows: usize,
    pub cols: usize,
    /// `mask`, `circulant` or `blur`.
    pub kind: String,
    pub op: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sr: Option<f64>,
    pub sigma_hat: f64,
    pub sigma: f64,
    pub seed: u64,
    pub num_measurements: usize,
    pub complex: bool,
    pub measurements: String,
    pub operator: String,
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}
