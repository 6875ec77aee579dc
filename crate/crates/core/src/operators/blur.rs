//! 9x9 blur kernels.
//!
//! The motion kernel is a line segment of length 10 through the kernel
//! center at 45 degrees (rising to the right). Each cell gets the weight
//! `max(0, 1 - d)`, where `d` is the distance from the cell center to the
//! segment, and the kernel is normalized to sum 1.

use ndarray::Array2;

use crate::error::{Error, Result};

pub const KERNEL_SIZE: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelId {
    Average,
    Motion,
}

impl KernelId {
    pub fn kernel(self) -> BlurKernel {
        match self {
            KernelId::Average => BlurKernel::average(),
            KernelId::Motion => BlurKernel::motion(10.0, 45.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    weights: Array2<f64>,
}

impl BlurKernel {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        if weights.dim() != (KERNEL_SIZE, KERNEL_SIZE) {
            return Err(Error::shape(format!("kernel is {:?}, expected 9x9", weights.dim())));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::arg("kernel entries must be finite and nonnegative"));
        }
        let sum = weights.sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::arg(format!("kernel sums to {sum}, expected 1")));
        }
        Ok(BlurKernel { weights })
    }

    pub fn average() -> Self {
        let n = (KERNEL_SIZE * KERNEL_SIZE) as f64;
        BlurKernel {
            weights: Array2::from_elem((KERNEL_SIZE, KERNEL_SIZE), 1.0 / n),
        }
    }

    /// Anti-aliased line of `length` pixels at `angle_deg` counter-clockwise
    /// from the positive column axis.
    pub fn motion(length: f64, angle_deg: f64) -> Self {
        let half = length / 2.0;
        let center = (KERNEL_SIZE / 2) as f64;
        let (sin, cos) = angle_deg.to_radians().sin_cos();
        // Direction in (row, col); rows grow downwards.
        let dir = (-sin, cos);
        let mut weights = Array2::from_shape_fn((KERNEL_SIZE, KERNEL_SIZE), |(r, c)| {
            let (dr, dc) = (r as f64 - center, c as f64 - center);
            let t = (dr * dir.0 + dc * dir.1).clamp(-half, half);
            let (er, ec) = (dr - t * dir.0, dc - t * dir.1);
            (1.0 - (er * er + ec * ec).sqrt()).max(0.0)
        });
        let sum = weights.sum();
        weights.mapv_inplace(|w| w / sum);
        BlurKernel { weights }
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// One row per line, entries separated by single spaces, shortest
    /// round-trip decimal form.
    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        for row in self.weights.rows() {
            let line: Vec<String> = row.iter().map(|w| format!("{w:e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_ascii(text: &str) -> Result<Self> {
        let mut values = Vec::with_capacity(KERNEL_SIZE * KERNEL_SIZE);
        for (line_no, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let row: Vec<f64> = line
                .split_ascii_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::arg(format!("kernel line {line_no}: {e}")))?;
            if row.len() != KERNEL_SIZE {
                return Err(Error::shape(format!("kernel line {line_no} has {} entries", row.len())));
            }
            values.extend(row);
        }
        let weights = Array2::from_shape_vec((KERNEL_SIZE, KERNEL_SIZE), values)
            .map_err(|_| Error::shape("kernel must have 9 rows"))?;
        BlurKernel::new(weights)
    }
}
