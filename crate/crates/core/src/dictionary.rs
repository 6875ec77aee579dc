//! Patch dictionaries, coefficient matrices, per-atom weights and the
//! `PDICT1` file format.
//!
//! Atoms are patch-sized columns. A patch of `n1 x n2` pixels is vectorized
//! row-major: frame entry `r * n2 + c` holds pixel `(r, c)`.
//!
//! `PDICT1` layout: the bytes `PDICT1\n`, an ASCII line `n1 n2 K dc_flag\n`
//! (`dc_flag` is 0 or 1), then `n1*n2*K` little-endian `f64` values with the
//! atoms stored one after another (column-major).

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Real `K x p` matrix of sparse codes, one column per sample or patch.
pub type CoefficientMatrix = Array2<f64>;

/// Column-norm slack accepted when validating dictionaries.
pub const NORM_SLACK: f64 = 1e-12;

const PDICT_MAGIC: &[u8] = b"PDICT1\n";

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    patch_rows: usize,
    patch_cols: usize,
    atoms: Array2<f64>,
    has_dc_atom: bool,
}

impl Dictionary {
    /// Validates and wraps an `(n1*n2) x K` atom matrix.
    pub fn new(patch_rows: usize, patch_cols: usize, atoms: Array2<f64>, has_dc_atom: bool) -> Result<Self> {
        let n = patch_rows * patch_cols;
        if n == 0 {
            return Err(Error::arg("patch size must be positive"));
        }
        if atoms.nrows() != n {
            return Err(Error::shape(format!(
                "atoms have {} rows, expected {patch_rows}x{patch_cols} = {n}",
                atoms.nrows()
            )));
        }
        if atoms.ncols() == 0 {
            return Err(Error::arg("dictionary needs at least one atom"));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("dictionary has non-finite entries"));
        }
        for (k, col) in atoms.axis_iter(Axis(1)).enumerate() {
            let norm = col.dot(&col).sqrt();
            if norm > 1.0 + NORM_SLACK {
                return Err(Error::arg(format!("atom {k} has norm {norm} > 1")));
            }
        }
        if has_dc_atom {
            let first = atoms.column(0);
            let c = first[0];
            if !(c > 0.0) || first.iter().any(|&v| v != c) {
                return Err(Error::arg("first atom is flagged DC but is not a positive constant"));
            }
        }
        Ok(Dictionary {
            patch_rows,
            patch_cols,
            atoms,
            has_dc_atom,
        })
    }

    /// Prepends the unit-norm constant atom to `learned`.
    pub fn with_dc_atom(patch_rows: usize, patch_cols: usize, learned: &Array2<f64>) -> Result<Self> {
        let n = patch_rows * patch_cols;
        if learned.nrows() != n {
            return Err(Error::shape(format!(
                "atoms have {} rows, expected {n}",
                learned.nrows()
            )));
        }
        let mut atoms = Array2::zeros((n, learned.ncols() + 1));
        atoms.column_mut(0).fill(dc_value(n));
        atoms.slice_mut(ndarray::s![.., 1..]).assign(learned);
        Dictionary::new(patch_rows, patch_cols, atoms, true)
    }

    pub fn patch_rows(&self) -> usize {
        self.patch_rows
    }

    pub fn patch_cols(&self) -> usize {
        self.patch_cols
    }

    /// Length of one atom, `n1 * n2`.
    pub fn atom_len(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn has_dc_atom(&self) -> bool {
        self.has_dc_atom
    }

    pub fn atoms(&self) -> &Array2<f64> {
        &self.atoms
    }

    /// The non-DC atoms (all atoms when there is no DC column).
    pub fn learned_atoms(&self) -> Array2<f64> {
        if self.has_dc_atom {
            self.atoms.slice(ndarray::s![.., 1..]).to_owned()
        } else {
            self.atoms.clone()
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = format!(
            "{} {} {} {}\n",
            self.patch_rows,
            self.patch_cols,
            self.num_atoms(),
            u8::from(self.has_dc_atom)
        );
        let mut out = Vec::with_capacity(PDICT_MAGIC.len() + header.len() + 8 * self.atoms.len());
        out.extend_from_slice(PDICT_MAGIC);
        out.extend_from_slice(header.as_bytes());
        for col in self.atoms.axis_iter(Axis(1)) {
            for v in col {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if !bytes.starts_with(PDICT_MAGIC) {
            return Err(Error::parse(0, "missing PDICT1 magic"));
        }
        let start = PDICT_MAGIC.len();
        let eol = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(start, "unterminated header line"))?;
        let line =
            std::str::from_utf8(&bytes[start..start + eol]).map_err(|_| Error::parse(start, "header is not ASCII"))?;
        let fields: Vec<usize> = line
            .split_ascii_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(start, format!("bad header line {line:?}")))?;
        let [n1, n2, k, dc] = fields[..] else {
            return Err(Error::parse(start, "header must hold n1 n2 K dc_flag"));
        };
        if dc > 1 {
            return Err(Error::parse(start, "dc_flag must be 0 or 1"));
        }
        let payload = start + eol + 1;
        let n = n1 * n2;
        let expected = n
            .checked_mul(k)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| Error::parse(start, "dimensions overflow"))?;
        let body = &bytes[payload..];
        if body.len() != expected {
            return Err(Error::parse(
                payload + body.len().min(expected),
                format!("payload has {} bytes, expected {expected}", body.len()),
            ));
        }
        let mut atoms = Array2::zeros((n, k));
        for (i, chunk) in body.chunks_exact(8).enumerate() {
            atoms[[i % n, i / n]] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Dictionary::new(n1, n2, atoms, dc == 1)
    }
}

/// Entry value of the unit-norm constant atom of length `n`.
pub fn dc_value(n: usize) -> f64 {
    1.0 / (n as f64).sqrt()
}

/// Per-atom nonnegative weights on the l1 penalty of one patch's code.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Array1<f64>);

impl WeightVector {
    pub fn new(values: Array1<f64>) -> Result<Self> {
        if values.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::arg("weights must be finite and nonnegative"));
        }
        Ok(WeightVector(values))
    }

    /// All ones, except a zero on the DC atom so patch means are not penalized.
    pub fn default_for(dict: &Dictionary) -> Self {
        let mut w = Array1::ones(dict.num_atoms());
        if dict.has_dc_atom() {
            w[0] = 0.0;
        }
        WeightVector(w)
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
