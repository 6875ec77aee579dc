//! Measurement operators with exact adjoints.
//!
//! Three kinds are supported: pixel sampling on a mask, circulant sensing
//! (a unit-modulus transfer function followed by sampling), and circular
//! blurring with a 9x9 kernel. Complex outputs stay complex; adjoints map
//! back to real images by taking the real part, which makes them exact
//! adjoints for the real inner product on images and the real part of the
//! Hermitian inner product on measurements.

mod blur;
mod fft;
mod noise;
mod power;

use std::f64::consts::TAU;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::measurement::MeasurementVector;
use crate::seed::rng_from_seed;

pub use blur::{BlurKernel, KernelId, KERNEL_SIZE};
pub use noise::add_noise;
pub use power::{spectral_norm, spectral_norm_from};

use fft::Fft2;

/// Sorted, unique linear (row-major) pixel indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    rows: usize,
    cols: usize,
    indices: Vec<usize>,
}

impl MaskSet {
    pub fn new(rows: usize, cols: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::arg("mask must select at least one pixel"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::arg("mask indices must be strictly increasing"));
        }
        if *indices.last().unwrap() >= rows * cols {
            return Err(Error::arg(format!("mask index outside a {rows}x{cols} image")));
        }
        Ok(MaskSet { rows, cols, indices })
    }

    pub fn full(rows: usize, cols: usize) -> Result<Self> {
        MaskSet::new(rows, cols, (0..rows * cols).collect())
    }

    /// Uniformly samples `floor(ratio * rows * cols)` pixels without
    /// replacement.
    pub fn sample(rows: usize, cols: usize, ratio: f64, seed: u64) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::arg(format!("sampling ratio {ratio} outside (0, 1]")));
        }
        let total = rows * cols;
        let count = (ratio * total as f64).floor() as usize;
        let mut rng = rng_from_seed(seed);
        let mut indices = index::sample(&mut rng, total, count).into_vec();
        indices.sort_unstable();
        MaskSet::new(rows, cols, indices)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Unit-modulus 2-D transfer function of a circulant operator.
#[derive(Debug, Clone, PartialEq)]
pub struct CirculantSpectrum {
    rows: usize,
    cols: usize,
    spectrum: Vec<Complex64>,
}

impl CirculantSpectrum {
    pub fn new(rows: usize, cols: usize, spectrum: Vec<Complex64>) -> Result<Self> {
        if spectrum.len() != rows * cols {
            return Err(Error::shape("spectrum length must equal rows * cols"));
        }
        if spectrum.iter().any(|c| (c.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::arg("spectrum entries must have unit modulus"));
        }
        Ok(CirculantSpectrum { rows, cols, spectrum })
    }

    /// Phases drawn uniformly from `[0, 2 pi)`.
    pub fn from_seed(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let spectrum = (0..rows * cols)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..TAU)))
            .collect();
        CirculantSpectrum { rows, cols, spectrum }
    }

    pub fn identity(rows: usize, cols: usize) -> Self {
        CirculantSpectrum {
            rows,
            cols,
            spectrum: vec![Complex64::new(1.0, 0.0); rows * cols],
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.spectrum
    }
}

#[derive(Debug, Clone)]
pub struct CirculantOp {
    mask: MaskSet,
    spectrum: CirculantSpectrum,
    fft: Fft2,
}

#[derive(Debug, Clone)]
pub struct BlurOp {
    rows: usize,
    cols: usize,
    kernel: BlurKernel,
    transfer: Vec<Complex64>,
    fft: Fft2,
}

impl BlurOp {
    pub fn kernel(&self) -> &BlurKernel {
        &self.kernel
    }
}

#[derive(Debug, Clone)]
pub enum MeasurementOp {
    Mask(MaskSet),
    Circulant(CirculantOp),
    Blur(BlurOp),
}

impl MeasurementOp {
    pub fn mask(mask: MaskSet) -> Self {
        MeasurementOp::Mask(mask)
    }

    pub fn circulant(mask: MaskSet, spectrum: CirculantSpectrum) -> Result<Self> {
        if mask.dims() != (spectrum.rows, spectrum.cols) {
            return Err(Error::shape("mask and spectrum dimensions differ"));
        }
        let fft = Fft2::new(spectrum.rows, spectrum.cols);
        Ok(MeasurementOp::Circulant(CirculantOp { mask, spectrum, fft }))
    }

    /// Circular convolution with `kernel`, centered at kernel entry (4, 4).
    pub fn blur(rows: usize, cols: usize, kernel: BlurKernel) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::arg("image dimensions must be positive"));
        }
        let half = KERNEL_SIZE / 2;
        let mut padded = vec![Complex64::new(0.0, 0.0); rows * cols];
        for ((a, b), &w) in kernel.weights().indexed_iter() {
            let r = (a + rows * KERNEL_SIZE - half) % rows;
            let c = (b + cols * KERNEL_SIZE - half) % cols;
            padded[r * cols + c].re += w;
        }
        let fft = Fft2::new(rows, cols);
        fft.forward(&mut padded);
        Ok(MeasurementOp::Blur(BlurOp {
            rows,
            cols,
            kernel,
            transfer: padded,
            fft,
        }))
    }

    pub fn image_dims(&self) -> (usize, usize) {
        match self {
            MeasurementOp::Mask(m) => m.dims(),
            MeasurementOp::Circulant(c) => c.mask.dims(),
            MeasurementOp::Blur(b) => (b.rows, b.cols),
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            MeasurementOp::Mask(m) => m.len(),
            MeasurementOp::Circulant(c) => c.mask.len(),
            MeasurementOp::Blur(b) => b.rows * b.cols,
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, MeasurementOp::Circulant(_))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MeasurementOp::Mask(_) => "mask",
            MeasurementOp::Circulant(_) => "circulant",
            MeasurementOp::Blur(_) => "blur",
        }
    }

    pub fn apply(&self, img: &Image) -> Result<MeasurementVector> {
        let values = self.apply_array(img.pixels().view())?;
        MeasurementVector::new(values, self.is_complex())
    }

    pub fn adjoint(&self, v: &MeasurementVector) -> Result<Array2<f64>> {
        self.adjoint_values(v.values())
    }

    /// Forward map on a raw image-shaped array.
    pub fn apply_array(&self, img: ArrayView2<f64>) -> Result<Vec<Complex64>> {
        if img.dim() != self.image_dims() {
            return Err(Error::shape(format!(
                "image is {:?}, operator expects {:?}",
                img.dim(),
                self.image_dims()
            )));
        }
        let flat: Vec<f64> = img.iter().copied().collect();
        Ok(match self {
            MeasurementOp::Mask(m) => m.indices.iter().map(|&i| Complex64::new(flat[i], 0.0)).collect(),
            MeasurementOp::Circulant(c) => {
                let mut buf: Vec<Complex64> = flat.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                c.fft.forward(&mut buf);
                buf.iter_mut().zip(&c.spectrum.spectrum).for_each(|(x, s)| *x *= s);
                c.fft.inverse(&mut buf);
                c.mask.indices.iter().map(|&i| buf[i]).collect()
            }
            MeasurementOp::Blur(b) => {
                let mut buf: Vec<Complex64> = flat.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                b.fft.forward(&mut buf);
                buf.iter_mut().zip(&b.transfer).for_each(|(x, h)| *x *= h);
                b.fft.inverse(&mut buf);
                buf.iter().map(|v| Complex64::new(v.re, 0.0)).collect()
            }
        })
    }

    /// Adjoint map from raw measurement values to an image-shaped array.
    pub fn adjoint_values(&self, v: &[Complex64]) -> Result<Array2<f64>> {
        if v.len() != self.output_len() {
            return Err(Error::shape(format!(
                "measurement has {} entries, operator produces {}",
                v.len(),
                self.output_len()
            )));
        }
        let (rows, cols) = self.image_dims();
        let flat: Vec<f64> = match self {
            MeasurementOp::Mask(m) => {
                let mut out = vec![0.0; rows * cols];
                for (&i, x) in m.indices.iter().zip(v) {
                    out[i] = x.re;
                }
                out
            }
            MeasurementOp::Circulant(c) => {
                let mut buf = vec![Complex64::new(0.0, 0.0); rows * cols];
                for (&i, x) in c.mask.indices.iter().zip(v) {
                    buf[i] = *x;
                }
                c.fft.forward(&mut buf);
                buf.iter_mut()
                    .zip(&c.spectrum.spectrum)
                    .for_each(|(x, s)| *x *= s.conj());
                c.fft.inverse(&mut buf);
                buf.iter().map(|x| x.re).collect()
            }
            MeasurementOp::Blur(b) => {
                let mut buf: Vec<Complex64> = v.iter().map(|x| Complex64::new(x.re, 0.0)).collect();
                b.fft.forward(&mut buf);
                buf.iter_mut().zip(&b.transfer).for_each(|(x, h)| *x *= h.conj());
                b.fft.inverse(&mut buf);
                buf.iter().map(|x| x.re).collect()
            }
        };
        Ok(Array2::from_shape_vec((rows, cols), flat).expect("image shape"))
    }

    /// Operator norm by power iteration on `A^T A`.
    pub fn norm(&self, iters: usize, tol: f64) -> f64 {
        let (rows, cols) = self.image_dims();
        spectral_norm(
            rows * cols,
            |x| {
                let view = ArrayView2::from_shape((rows, cols), x).expect("image shape");
                self.apply_array(view).expect("dims checked")
            },
            |y| self.adjoint_values(y).expect("dims checked").into_iter().collect(),
            iters,
            tol,
        )
    }
}
