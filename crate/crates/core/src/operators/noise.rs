use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::measurement::MeasurementVector;
use crate::seed::rng_from_seed;

/// Adds Gaussian noise scaled so that `||b - clean|| / ||clean|| = sigma_hat`.
///
/// With `xi` standard Gaussian (independent real and imaginary parts for
/// complex data), `b = clean + sigma * xi` where
/// `sigma = sigma_hat * ||clean|| / ||xi||`. The realized `sigma` is stored on
/// the returned vector.
pub fn add_noise(clean: &MeasurementVector, sigma_hat: f64, seed: u64) -> Result<MeasurementVector> {
    if !(sigma_hat >= 0.0) || !sigma_hat.is_finite() {
        return Err(Error::arg(format!(
            "sigma_hat must be a nonnegative number, got {sigma_hat}"
        )));
    }
    if sigma_hat == 0.0 {
        return Ok(clean.clone().with_noise_sigma(0.0));
    }
    let clean_norm = clean.norm();
    if clean_norm == 0.0 {
        return Err(Error::arg(
            "cannot calibrate relative noise on a zero measurement vector",
        ));
    }
    let mut rng = rng_from_seed(seed);
    let xi: Vec<Complex64> = clean
        .values()
        .iter()
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = if clean.is_complex() {
                StandardNormal.sample(&mut rng)
            } else {
                0.0
            };
            Complex64::new(re, im)
        })
        .collect();
    let xi_norm = xi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let sigma = sigma_hat * clean_norm / xi_norm;
    let values = clean.values().iter().zip(&xi).map(|(c, x)| c + x * sigma).collect();
    Ok(MeasurementVector::new(values, clean.is_complex())?.with_noise_sigma(sigma))
}
