//! Seeded Gaussian coefficient vectors and random diffusion polynomials
//! P_a = Σ a_k φ_k with a ~ N(0, σ²I_N) on deterministic per-trial
//! substreams.

use crate::error::{Error, Result};
use crate::manifold::Point;
use crate::rng::trial_rng;
use crate::spectrum::{SpaceDescriptor, SpectralSpace};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use std::sync::Arc;

/// Coefficients of one random diffusion polynomial, tagged with the sampling
/// key that reproduces them.
#[derive(Debug, Clone)]
pub struct CoefficientVector {
    space: Arc<SpectralSpace>,
    pub values: Vec<f64>,
    pub sigma: f64,
    pub master_seed: u64,
    pub trial: u64,
}

impl CoefficientVector {
    pub fn space(&self) -> &Arc<SpectralSpace> {
        &self.space
    }

    /// Wrap explicit coefficients (length must match the space dimension).
    pub fn from_values(space: Arc<SpectralSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.dim() {
            return Err(Error::invalid(format!(
                "coefficient length {} != space dimension {}",
                values.len(),
                space.dim()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coefficients must be finite".to_string()));
        }
        Ok(CoefficientVector { space, values, sigma: 0.0, master_seed: 0, trial: 0 })
    }

    /// P_a at each of the given points.
    pub fn evaluate(&self, pts: &[Point]) -> Result<Vec<f64>> {
        let mat = self.space.evaluate_basis(pts)?;
        Ok((0..mat.rows)
            .map(|i| mat.row(i).iter().zip(&self.values).map(|(b, c)| b * c).sum())
            .collect())
    }
}

impl Serialize for CoefficientVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("CoefficientVector", 5)?;
        st.serialize_field("space", &self.space.descriptor())?;
        st.serialize_field("sigma", &self.sigma)?;
        st.serialize_field("seed", &self.master_seed)?;
        st.serialize_field("trial", &self.trial)?;
        st.serialize_field("values", &self.values)?;
        st.end()
    }
}

/// Serializable view kept for schema stability of JSON reports.
#[derive(Debug, Clone, Serialize)]
pub struct CoefficientRecord {
    pub space: SpaceDescriptor,
    pub sigma: f64,
    pub seed: u64,
    pub trial: u64,
    pub values: Vec<f64>,
}

/// Draw a ~ N(0, σ²I_N) from the substream keyed by (master_seed, trial).
/// Identical keys give bit-identical vectors regardless of execution order.
pub fn sample_coefficients(
    space: &Arc<SpectralSpace>,
    sigma: f64,
    master_seed: u64,
    trial: u64,
) -> Result<CoefficientVector> {
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("sigma must be > 0, got {sigma}")));
    }
    let mut rng = trial_rng(master_seed, trial);
    let values = (0..space.dim())
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(CoefficientVector { space: space.clone(), values, sigma, master_seed, trial })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::kernel_eval;
    use crate::manifold::ManifoldModel;
    use std::f64::consts::SQRT_2;

    fn t1_space(n: f64) -> Arc<SpectralSpace> {
        Arc::new(SpectralSpace::build(ManifoldModel::torus(1).unwrap(), n).unwrap())
    }

    #[test]
    fn sigma_domain_error() {
        assert!(sample_coefficients(&t1_space(2.0), 0.0, 1, 0).is_err());
        assert!(sample_coefficients(&t1_space(2.0), -1.0, 1, 0).is_err());
    }

    #[test]
    fn same_key_bit_identical() {
        let s = t1_space(16.0);
        let a = sample_coefficients(&s, 1.0, 9, 123).unwrap();
        let b = sample_coefficients(&s, 1.0, 9, 123).unwrap();
        assert_eq!(a.values, b.values);
        let c = sample_coefficients(&s, 1.0, 9, 124).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn moments_within_clt_bands() {
        let s = t1_space(4.0);
        let trials = 100_000u64;
        let mut mean0 = 0.0;
        let mut var = vec![0.0; s.dim()];
        for t in 0..trials {
            let a = sample_coefficients(&s, 1.0, 42, t).unwrap();
            mean0 += a.values[0];
            for (v, x) in var.iter_mut().zip(&a.values) {
                *v += x * x;
            }
        }
        mean0 /= trials as f64;
        assert!(mean0.abs() <= 4.0 / (trials as f64).sqrt(), "mean {mean0}");
        for (k, v) in var.iter().enumerate() {
            let estimate = v / trials as f64;
            assert!((estimate - 1.0).abs() < 0.05, "coordinate {k}: variance {estimate}");
        }
    }

    #[test]
    fn evaluate_basis_vectors() {
        let s = t1_space(1.0);
        // a = e_0 gives the constant 1.
        let a = CoefficientVector::from_values(s.clone(), vec![1.0, 0.0, 0.0]).unwrap();
        let pts: Vec<Point> = (0..7).map(|k| Point::torus(&[k as f64])).collect();
        for v in a.evaluate(&pts).unwrap() {
            assert!((v - 1.0).abs() < 1e-15);
        }
        // a selecting √2 cos θ.
        let a = CoefficientVector::from_values(s, vec![0.0, 1.0, 0.0]).unwrap();
        for (v, p) in a.evaluate(&pts).unwrap().iter().zip(&pts) {
            assert!((v - SQRT_2 * p.coords()[0].cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn covariance_matches_kernel() {
        // E[P(x)P(y)] = σ² e(x, y, n) within a CLT band.
        let s = t1_space(6.0);
        let x = Point::torus(&[0.7]);
        let y = Point::torus(&[2.1]);
        let pts = [x.clone(), y.clone()];
        let trials = 200_000u64;
        let sigma = 0.7;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for t in 0..trials {
            let a = sample_coefficients(&s, sigma, 7, t).unwrap();
            let v = a.evaluate(&pts).unwrap();
            let prod = v[0] * v[1];
            acc += prod;
            acc2 += prod * prod;
        }
        let mean = acc / trials as f64;
        let sd = (acc2 / trials as f64 - mean * mean).sqrt();
        let expect = sigma * sigma * kernel_eval(&s, &x, &y).unwrap();
        let band = 3.0 * sd / (trials as f64).sqrt();
        assert!((mean - expect).abs() <= band, "{mean} vs {expect} ± {band}");
    }

    #[test]
    fn wrong_manifold_rejected() {
        let s = t1_space(2.0);
        let a = sample_coefficients(&s, 1.0, 1, 0).unwrap();
        assert!(a.evaluate(&[Point::sphere([0.0, 0.0, 1.0])]).is_err());
    }

    #[test]
    fn json_round_trip_schema() {
        let s = t1_space(2.0);
        let a = sample_coefficients(&s, 1.0, 5, 17).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["space"]["manifold"], "t1");
        assert_eq!(parsed["seed"], 5);
        assert_eq!(parsed["trial"], 17);
        assert_eq!(parsed["values"].as_array().unwrap().len(), s.dim());
    }
}
