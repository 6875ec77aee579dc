//! Measurement vectors and the `PMEAS1` file format.
//!
//! `PMEAS1` layout: the six bytes `PMEAS1`, the entry count as a
//! little-endian `u64`, one byte complex flag (0 or 1), then one
//! `(re, im)` pair of little-endian `f64` per entry. Real vectors store zero
//! imaginary parts.

use num_complex::Complex64;

use crate::error::{Error, Result};

const PMEAS_MAGIC: &[u8] = b"PMEAS1";

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    values: Vec<Complex64>,
    complex: bool,
    noise_sigma: Option<f64>,
}

impl MeasurementVector {
    pub fn new(values: Vec<Complex64>, complex: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::arg("measurement vector must be non-empty"));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::arg("measurement vector has non-finite entries"));
        }
        if !complex && values.iter().any(|v| v.im != 0.0) {
            return Err(Error::arg("real measurement vector has imaginary parts"));
        }
        Ok(MeasurementVector {
            values,
            complex,
            noise_sigma: None,
        })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        MeasurementVector::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect(), false)
    }

    pub fn with_noise_sigma(mut self, sigma: f64) -> Self {
        self.noise_sigma = Some(sigma);
        self
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_complex(&self) -> bool {
        self.complex
    }

    pub fn noise_sigma(&self) -> Option<f64> {
        self.noise_sigma
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Real part of the Hermitian inner product.
    pub fn real_dot(&self, other: &MeasurementVector) -> f64 {
        real_dot(&self.values, &other.values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PMEAS_MAGIC.len() + 9 + 16 * self.values.len());
        out.extend_from_slice(PMEAS_MAGIC);
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        out.push(u8::from(self.complex));
        for v in &self.values {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if !bytes.starts_with(PMEAS_MAGIC) {
            return Err(Error::parse(0, "missing PMEAS1 magic"));
        }
        let mut pos = PMEAS_MAGIC.len();
        let len_bytes = bytes
            .get(pos..pos + 8)
            .ok_or_else(|| Error::parse(pos, "truncated length field"))?;
        let len = u64::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
        pos += 8;
        let complex = match bytes.get(pos) {
            Some(0) => false,
            Some(1) => true,
            Some(b) => return Err(Error::parse(pos, format!("complex flag {b} is not 0 or 1"))),
            None => return Err(Error::parse(pos, "truncated complex flag")),
        };
        pos += 1;
        let body = &bytes[pos..];
        let expected = len
            .checked_mul(16)
            .ok_or_else(|| Error::parse(PMEAS_MAGIC.len(), "length overflows"))?;
        if body.len() != expected {
            return Err(Error::parse(
                pos + body.len().min(expected),
                format!("payload has {} bytes, expected {expected}", body.len()),
            ));
        }
        let values = body
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        MeasurementVector::new(values, complex).map_err(|e| Error::parse(pos, e.to_string()))
    }
}

pub(crate) fn real_dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}
