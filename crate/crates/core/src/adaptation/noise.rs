use crate::error::check_finite;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// The corruption levels of the ablation, on the 0-255 pixel scale.
pub const ABLATION_SIGMAS: [f64; 3] = [35.0, 50.0, 65.0];

/// Gaussian corruption strength. Features are unit-scale, so the pixel-scale
/// sigma is divided by 255.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct NoiseLevel {
    sigma_pixel: f64,
}

impl NoiseLevel {
    pub fn from_pixel(sigma_pixel: f64) -> Result<Self> {
        if !(sigma_pixel >= 0.0 && sigma_pixel.is_finite()) {
            return Err(Error::Configuration(format!(
                "noise sigma must be a finite value >= 0, got {sigma_pixel}"
            )));
        }
        Ok(Self { sigma_pixel })
    }

    pub fn sigma_pixel(&self) -> f64 {
        self.sigma_pixel
    }

    pub fn sigma_feature(&self) -> f64 {
        self.sigma_pixel / 255.0
    }
}

impl TryFrom<f64> for NoiseLevel {
    type Error = Error;

    fn try_from(sigma_pixel: f64) -> Result<Self> {
        Self::from_pixel(sigma_pixel)
    }
}

impl From<NoiseLevel> for f64 {
    fn from(n: NoiseLevel) -> f64 {
        n.sigma_pixel
    }
}

/// `feature + eps`, `eps ~ N(0, sigma_feature^2)` iid, drawn from `rng`.
pub fn corrupt<R: Rng + ?Sized>(feature: &[f64], noise: NoiseLevel, rng: &mut R) -> Result<Vec<f64>> {
    check_finite("feature", feature)?;
    let sigma = noise.sigma_feature();
    if sigma == 0.0 {
        return Ok(feature.to_vec());
    }
    Ok(feature
        .iter()
        .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_sigma_is_bitwise_identity() {
        let f = vec![-0.0, 1.5, f64::MIN_POSITIVE, -3.25];
        let mut r = rng::stream(1, 2);
        let out = corrupt(&f, NoiseLevel::from_pixel(0.0).unwrap(), &mut r).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&out), bits(&f));
    }

    #[test]
    fn sample_std_matches_sigma() {
        let noise = NoiseLevel::from_pixel(35.0).unwrap();
        assert_eq!(noise.sigma_feature(), 35.0 / 255.0);
        let mut r = rng::stream(42, 0);
        let zeros = vec![0.0; 100];
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let n = 100_000;
        for _ in 0..n / 100 {
            for e in corrupt(&zeros, noise, &mut r).unwrap() {
                sum += e;
                sum2 += e * e;
            }
        }
        let mean = sum / n as f64;
        let std = (sum2 / n as f64 - mean * mean).sqrt();
        assert!((std / (35.0 / 255.0) - 1.0).abs() < 0.01, "std {std}");
        assert!((std - 0.13725).abs() < 0.0014);
    }

    #[test]
    fn ablation_levels_accepted_and_negative_rejected() {
        for s in ABLATION_SIGMAS {
            assert!(NoiseLevel::from_pixel(s).is_ok());
        }
        assert!(NoiseLevel::from_pixel(-1.0).is_err());
        assert!(NoiseLevel::from_pixel(f64::NAN).is_err());
    }

    #[test]
    fn deterministic_given_stream() {
        let f = vec![0.5; 32];
        let n = NoiseLevel::from_pixel(50.0).unwrap();
        let a = corrupt(&f, n, &mut rng::stream(3, 3)).unwrap();
        let b = corrupt(&f, n, &mut rng::stream(3, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_feature_rejected() {
        let mut r = rng::stream(0, 0);
        assert!(corrupt(&[f64::NAN], NoiseLevel::from_pixel(1.0).unwrap(), &mut r).is_err());
    }
}
