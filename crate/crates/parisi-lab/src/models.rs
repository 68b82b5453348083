//! Mixed p-spin models: the covariance polynomial, its conjugates and the
//! single-site spin law.
//!
//! For dimension one the covariance is `xi(r) = sum_p a_p r^p`. For larger
//! dimensions it is evaluated entrywise, `xi(R) = sum_p a_p sum_{d,d'} R_{dd'}^p`,
//! which is the covariance of independent p-spin fields attached to each pair of
//! species.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("degree must be at least 1, got {0}")]
    InvalidDegree(u32),
    #[error("coefficient for degree {degree} must be finite and nonnegative, got {value}")]
    InvalidCoefficient { degree: u32, value: f64 },
    #[error("model needs at least one positive coefficient")]
    EmptyModel,
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("invalid spin law: {0}")]
    InvalidSpins(String),
    #[error("conjugate diverges at y = {y}: the covariance is linear with slope {slope}")]
    DivergentConjugate { y: f64, slope: f64 },
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("operation needs a one-dimensional model, got dimension {0}")]
    NotScalar(usize),
    #[error("matrix argument is {rows}x{cols}, expected {dim}x{dim}")]
    Shape { rows: usize, cols: usize, dim: usize },
}

/// Law of a single coordinate block of the spin vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SpinLaw {
    /// Uniform on {-1, +1}, dimension one.
    Ising,
    /// Finitely many atoms in R^D with probability weights.
    Atoms { values: Vec<Vec<f64>>, weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelSpec {
    coeffs: Vec<(u32, f64)>,
    dim: usize,
    spins: SpinLaw,
}

/// Covariance `xi` together with the spin law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct MixtureModel {
    coeffs: Vec<(u32, f64)>,
    dim: usize,
    spins: SpinLaw,
}

impl TryFrom<ModelSpec> for MixtureModel {
    type Error = ModelError;
    fn try_from(s: ModelSpec) -> Result<Self, ModelError> {
        MixtureModel::new(s.coeffs, s.dim, s.spins)
    }
}

impl From<MixtureModel> for ModelSpec {
    fn from(m: MixtureModel) -> Self {
        ModelSpec { coeffs: m.coeffs, dim: m.dim, spins: m.spins }
    }
}

/// Value and maximiser of `sup_b (y b - t xi(b))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugatePoint {
    pub value: f64,
    pub argmax: f64,
}

impl MixtureModel {
    pub fn new(coeffs: Vec<(u32, f64)>, dim: usize, spins: SpinLaw) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::ZeroDimension);
        }
        let mut merged: Vec<(u32, f64)> = Vec::new();
        for &(p, a) in &coeffs {
            if p == 0 {
                return Err(ModelError::InvalidDegree(p));
            }
            if !a.is_finite() || a < 0.0 {
                return Err(ModelError::InvalidCoefficient { degree: p, value: a });
            }
            match merged.iter_mut().find(|(q, _)| *q == p) {
                Some(entry) => entry.1 += a,
                None => merged.push((p, a)),
            }
        }
        merged.retain(|&(_, a)| a > 0.0);
        merged.sort_by_key(|&(p, _)| p);
        if merged.is_empty() {
            return Err(ModelError::EmptyModel);
        }
        validate_spins(&spins, dim)?;
        Ok(MixtureModel { coeffs: merged, dim, spins })
    }

    /// Sherrington-Kirkpatrick: `xi(r) = r^2`, Ising spins.
    pub fn sk() -> Self {
        MixtureModel::new(vec![(2, 1.0)], 1, SpinLaw::Ising).expect("valid")
    }

    /// Ising model with the given mixture coefficients.
    pub fn ising(coeffs: &[(u32, f64)]) -> Result<Self, ModelError> {
        MixtureModel::new(coeffs.to_vec(), 1, SpinLaw::Ising)
    }

    pub fn coeffs(&self) -> &[(u32, f64)] {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spins(&self) -> &SpinLaw {
        &self.spins
    }

    pub fn max_degree(&self) -> u32 {
        self.coeffs.last().map(|c| c.0).unwrap_or(0)
    }

    /// Scalar spin atoms and weights, for dimension one.
    pub fn scalar_spins(&self) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        if self.dim != 1 {
            return Err(ModelError::NotScalar(self.dim));
        }
        Ok(match &self.spins {
            SpinLaw::Ising => (vec![-1.0, 1.0], vec![0.5, 0.5]),
            SpinLaw::Atoms { values, weights } => {
                let total: f64 = weights.iter().sum();
                (values.iter().map(|v| v[0]).collect(), weights.iter().map(|w| w / total).collect())
            }
        })
    }

    /// Largest value of the self-overlap `|sigma|^2` under the spin law.
    pub fn self_overlap_max(&self) -> f64 {
        match &self.spins {
            SpinLaw::Ising => 1.0,
            SpinLaw::Atoms { values, .. } => values
                .iter()
                .map(|v| v.iter().map(|x| x * x).sum::<f64>())
                .fold(0.0, f64::max),
        }
    }

    pub fn xi(&self, r: f64) -> f64 {
        self.coeffs.iter().map(|&(p, a)| a * r.powi(p as i32)).sum()
    }

    pub fn xi_prime(&self, r: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|&(p, a)| if p == 1 { a } else { a * p as f64 * r.powi(p as i32 - 1) })
            .sum()
    }

    pub fn xi_second(&self, r: f64) -> f64 {
        self.coeffs
            .iter()
            .filter(|c| c.0 >= 2)
            .map(|&(p, a)| {
                let pf = p as f64;
                if p == 2 { 2.0 * a } else { a * pf * (pf - 1.0) * r.powi(p as i32 - 2) }
            })
            .sum()
    }

    /// `theta(r) = r xi'(r) - xi(r)`.
    pub fn theta(&self, r: f64) -> f64 {
        self.coeffs.iter().map(|&(p, a)| a * (p as f64 - 1.0) * r.powi(p as i32)).sum()
    }

    fn check_shape(&self, m: &DMatrix<f64>) -> Result<(), ModelError> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(ModelError::Shape { rows: m.nrows(), cols: m.ncols(), dim: self.dim });
        }
        Ok(())
    }

    pub fn xi_matrix(&self, r: &DMatrix<f64>) -> Result<f64, ModelError> {
        self.check_shape(r)?;
        Ok(r.iter().map(|&x| self.xi(x)).sum())
    }

    /// Entrywise gradient of `xi_matrix`.
    pub fn grad_matrix(&self, r: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        self.check_shape(r)?;
        Ok(r.map(|x| self.xi_prime(x)))
    }

    pub fn theta_matrix(&self, r: &DMatrix<f64>) -> Result<f64, ModelError> {
        self.check_shape(r)?;
        Ok(r.iter().map(|&x| self.theta(x)).sum())
    }

    /// Solves `xi'(b) = c` for `b >= 0`. Returns 0 when `c <= xi'(0)`.
    fn inverse_slope(&self, c: f64) -> Result<f64, ModelError> {
        let base = self.xi_prime(0.0);
        if c <= base {
            return Ok(0.0);
        }
        if self.max_degree() < 2 {
            return Err(ModelError::DivergentConjugate { y: c, slope: base });
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.xi_prime(hi) < c {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(ModelError::Domain(format!("no root of xi' = {c}")));
            }
        }
        let mut b = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.xi_prime(b) - c;
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                hi = b;
            } else {
                lo = b;
            }
            let d = self.xi_second(b);
            let newton = if d > 0.0 { b - f / d } else { f64::NAN };
            let next = if newton.is_finite() && newton >= lo && newton <= hi { newton } else { 0.5 * (lo + hi) };
            if next == b || hi - lo <= 4.0 * f64::EPSILON * hi.max(1.0) {
                break;
            }
            b = next;
        }
        // polish once more with Newton near the root
        let d = self.xi_second(b);
        if d > 0.0 {
            let nb = b - (self.xi_prime(b) - c) / d;
            if nb >= 0.0 && (nb - b).abs() < 1e-8 * b.max(1.0) {
                b = nb;
            }
        }
        Ok(b)
    }

    /// `t xi*(y/t) = sup_{b >= 0} (y b - t xi(b))` with its maximiser.
    pub fn scaled_conjugate_point(&self, y: f64, t: f64) -> Result<ConjugatePoint, ModelError> {
        if !y.is_finite() || !t.is_finite() || t < 0.0 {
            return Err(ModelError::Domain(format!("y = {y}, t = {t}")));
        }
        if t == 0.0 {
            return if y <= 0.0 {
                Ok(ConjugatePoint { value: 0.0, argmax: 0.0 })
            } else {
                Err(ModelError::DivergentConjugate { y, slope: 0.0 })
            };
        }
        let b = self.inverse_slope(y / t)?;
        Ok(ConjugatePoint { value: y * b - t * self.xi(b), argmax: b })
    }

    /// `t xi*(y/t)`, written so that `t = 1` gives the plain conjugate.
    pub fn scaled_conjugate(&self, y: f64, t: f64) -> Result<f64, ModelError> {
        self.scaled_conjugate_point(y, t).map(|p| p.value)
    }

    pub fn conjugate(&self, y: f64) -> Result<f64, ModelError> {
        self.scaled_conjugate(y, 1.0)
    }

    /// Conjugate restricted to the unit interval: `sup_{b in [0,1]} (y b - xi(b))`.
    pub fn conjugate_restricted(&self, y: f64) -> Result<f64, ModelError> {
        if !y.is_finite() {
            return Err(ModelError::Domain(format!("y = {y}")));
        }
        if y >= self.xi_prime(1.0) {
            return Ok(y - self.xi(1.0));
        }
        let b = self.inverse_slope(y)?.min(1.0);
        Ok(y * b - self.xi(b))
    }

    /// Model with `xi + alpha |x|^2`: the added term is an independent
    /// two-body field, which in the entrywise convention raises `a_2`.
    pub fn perturb_alpha(&self, alpha: f64) -> Result<Self, ModelError> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(ModelError::Domain(format!("alpha = {alpha}")));
        }
        let mut coeffs = self.coeffs.clone();
        coeffs.push((2, alpha));
        MixtureModel::new(coeffs, self.dim, self.spins.clone())
    }
}

fn validate_spins(spins: &SpinLaw, dim: usize) -> Result<(), ModelError> {
    match spins {
        SpinLaw::Ising => {
            if dim != 1 {
                return Err(ModelError::InvalidSpins("ising spins need dimension 1".into()));
            }
        }
        SpinLaw::Atoms { values, weights } => {
            if values.is_empty() || values.len() != weights.len() {
                return Err(ModelError::InvalidSpins("values and weights must be nonempty and of equal length".into()));
            }
            if values.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
                return Err(ModelError::InvalidSpins(format!("every atom needs {dim} finite coordinates")));
            }
            if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(ModelError::InvalidSpins("weights must be finite and nonnegative".into()));
            }
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(ModelError::InvalidSpins(format!("weights sum to {total}")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sk_conjugate_closed_form() {
        let m = MixtureModel::sk();
        for &y in &[0.0, 0.3, 1.0, 2.5] {
            assert!((m.conjugate(y).unwrap() - y * y / 4.0).abs() < 1e-14);
            for &t in &[0.25, 1.0, 3.0] {
                let v = m.scaled_conjugate(y, t).unwrap();
                assert!((v - y * y / (4.0 * t)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn linear_model_diverges() {
        let m = MixtureModel::ising(&[(1, 0.5)]).unwrap();
        assert_eq!(m.conjugate(0.2).unwrap(), 0.0);
        assert!(matches!(m.conjugate(1.0), Err(ModelError::DivergentConjugate { .. })));
    }

    #[test]
    fn restricted_conjugate_sk() {
        let m = MixtureModel::sk();
        assert!((m.conjugate_restricted(1.0).unwrap() - 0.25).abs() < 1e-14);
        assert!((m.conjugate_restricted(3.0).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(m.conjugate_restricted(-1.0).unwrap(), 0.0);
    }

    #[test]
    fn mixed_conjugate_matches_brute_force() {
        let m = MixtureModel::ising(&[(2, 0.5), (4, 0.25), (3, 0.1)]).unwrap();
        for &y in &[0.05, 0.7, 2.0, 9.0] {
            let brute = (0..=400_000)
                .map(|i| {
                    let b = i as f64 * 1e-5;
                    y * b - m.xi(b)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let v = m.conjugate(y).unwrap();
            assert!(v >= brute - 1e-12 && v - brute < 1e-8, "y={y}: {v} vs {brute}");
        }
    }

    #[test]
    fn theta_matches_definition_at_matrix() {
        let m = MixtureModel::new(vec![(2, 1.0), (3, 0.5)], 2, SpinLaw::Atoms {
            values: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            weights: vec![0.5, 0.5],
        })
        .unwrap();
        let r = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, 0.2, 0.3]);
        let g = m.grad_matrix(&r).unwrap();
        let lhs = m.theta_matrix(&r).unwrap();
        let rhs = r.dot(&g) - m.xi_matrix(&r).unwrap();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let m: MixtureModel = serde_json::from_str(r#"{"coeffs":[[2,1.0]],"dim":1,"spins":{"type":"ising"}}"#).unwrap();
        assert_eq!(m, MixtureModel::sk());
        let back: MixtureModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<MixtureModel>(r#"{"coeffs":[[2,-1.0]],"dim":1,"spins":{"type":"ising"}}"#).is_err());
    }

    #[test]
    fn alpha_perturbation_adds_square() {
        let m = MixtureModel::ising(&[(3, 1.0)]).unwrap().perturb_alpha(0.4).unwrap();
        assert!((m.xi(0.5) - (0.125 + 0.4 * 0.25)).abs() < 1e-15);
    }
}
