//! The Parisi functional `psi(mu)` of a finitely supported measure, its
//! concave conjugate over a search family, and a cascade Monte Carlo estimate.
//!
//! With spin atoms `s_j` of weight `w_j`, atoms `q_0 < ... < q_K` of `mu` and
//! cut points `zeta_k = mu([0, q_{k-1}])`:
//!
//! ```text
//! Y_K(x)     = log sum_j w_j exp(x s_j - q_K s_j^2)
//! Y_{k-1}(x) = zeta_k^{-1} log E exp(zeta_k Y_k(x + sqrt(2 (q_k - q_{k-1})) Z))
//! psi(mu)    = -E Y_0(sqrt(2 q_0) Z)
//! ```
//!
//! Each inner `Y_k` is tabulated on a uniform grid and read back by local
//! Lagrange interpolation; Gaussian expectations use a trapezoid rule.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{DiscreteMeasure, MeasureError};
use crate::models::{MixtureModel, ModelError};
use crate::optimize::{compass_minimize, stream_rng, CompassOptions};
use crate::quadrature::{log_cosh, scaled_log_mean_exp, GaussRule, SymmetricGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParisiError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("recursion produced a non-finite value at level {0}")]
    NonFinite(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("objective keeps decreasing towards the edge of the search box (values {values:?} at q = {at:?})")]
    DivergenceDetected { at: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianRule {
    Trapezoid,
    GaussHermite,
}

/// Discretisation of the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiOptions {
    pub rule: GaussianRule,
    /// Half-width of the trapezoid rule in standard deviations.
    pub span: f64,
    /// Largest spacing of quadrature points in the `x` variable, for spins of spread 2.
    pub resolution: f64,
    /// Node count of the Gauss-Hermite rule, and lower bound for the trapezoid rule.
    pub order: usize,
    /// Grid spacing for tabulated levels, for spins of spread 2.
    pub grid_step: f64,
    /// Number of grid points used by each interpolation.
    pub stencil: usize,
}

impl Default for PsiOptions {
    fn default() -> Self {
        PsiOptions { rule: GaussianRule::Trapezoid, span: 9.0, resolution: 0.3, order: 37, grid_step: 0.05, stencil: 12 }
    }
}

impl PsiOptions {
    fn rule_for(&self, sd: f64, scale: f64) -> GaussRule {
        match self.rule {
            GaussianRule::GaussHermite => GaussRule::gauss_hermite(self.order),
            GaussianRule::Trapezoid => {
                let needed = (2.0 * self.span * sd / (self.resolution * scale)).ceil() as usize + 1;
                let mut n = needed.max(self.order).max(3);
                if n % 2 == 0 {
                    n += 1;
                }
                GaussRule::trapezoid(n, self.span)
            }
        }
    }
}

struct SpinTerms {
    values: Vec<f64>,
    log_weights: Vec<f64>,
    symmetric_ising: bool,
    scale: f64,
}

impl SpinTerms {
    fn new(model: &MixtureModel) -> Result<Self, ModelError> {
        let (values, weights) = model.scalar_spins()?;
        let symmetric_ising = matches!(model.spins(), crate::models::SpinLaw::Ising);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let spread = hi - lo;
        let scale = if spread > 0.0 { (2.0 / spread).min(1.0) } else { 1.0 };
        let (values, log_weights) = values.into_iter().zip(weights).filter(|p| p.1 > 0.0).map(|(v, w)| (v, w.ln())).unzip();
        Ok(SpinTerms { values, log_weights, symmetric_ising, scale })
    }

    /// `log sum_j w_j exp(x s_j - q s_j^2)`.
    fn terminal(&self, x: f64, q: f64) -> f64 {
        if self.symmetric_ising {
            return log_cosh(x) - q;
        }
        let mut top = f64::NEG_INFINITY;
        for (s, lw) in self.values.iter().zip(&self.log_weights) {
            top = top.max(lw + x * s - q * s * s);
        }
        let sum: f64 = self
            .values
            .iter()
            .zip(&self.log_weights)
            .map(|(s, lw)| (lw + x * s - q * s * s - top).exp())
            .sum();
        top + sum.ln()
    }
}

enum Level<'a> {
    Terminal(&'a SpinTerms, f64),
    Grid(SymmetricGrid),
}

impl Level<'_> {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Level::Terminal(spins, q) => spins.terminal(x, *q),
            Level::Grid(g) => g.eval(x),
        }
    }
}

/// `psi(mu)` for a one-dimensional model.
pub fn psi(model: &MixtureModel, mu: &DiscreteMeasure, opts: &PsiOptions) -> Result<f64, ParisiError> {
    let spins = SpinTerms::new(model)?;
    psi_with(&spins, mu, opts)
}

fn psi_with(spins: &SpinTerms, mu: &DiscreteMeasure, opts: &PsiOptions) -> Result<f64, ParisiError> {
    let q = mu.atoms();
    let zeta = mu.cut_points();
    let levels = q.len() - 1;
    let h = opts.grid_step * spins.scale;
    let mut current = Level::Terminal(spins, q[levels]);
    for k in (1..=levels).rev() {
        let sd = (2.0 * (q[k] - q[k - 1])).sqrt();
        let rule = opts.rule_for(sd, spins.scale);
        let reach = opts.span * (2.0 * q[k - 1]).sqrt() + 1.0;
        let half = (reach / h).ceil() as usize + opts.stencil / 2;
        let mut ys = vec![0.0; rule.nodes.len()];
        let mut values = Vec::with_capacity(2 * half + 1);
        for i in 0..=2 * half {
            let x = SymmetricGrid::point(h, half, i);
            for (y, z) in ys.iter_mut().zip(&rule.nodes) {
                *y = current.eval(x + sd * z);
            }
            let v = scaled_log_mean_exp(&ys, &rule.weights, zeta[k - 1]);
            if !v.is_finite() {
                return Err(ParisiError::NonFinite(k - 1));
            }
            values.push(v);
        }
        current = Level::Grid(SymmetricGrid::new(h, half, values, opts.stencil));
    }
    let sd0 = (2.0 * q[0]).sqrt();
    let value = if sd0 == 0.0 {
        -current.eval(0.0)
    } else {
        let rule = opts.rule_for(sd0, spins.scale);
        -rule.expect(|z| current.eval(sd0 * z))
    };
    if !value.is_finite() {
        return Err(ParisiError::NonFinite(0));
    }
    Ok(value)
}

/// Reusable evaluator that caches the spin terms of a model.
pub struct PsiEvaluator {
    spins: SpinTerms,
    opts: PsiOptions,
}

impl PsiEvaluator {
    pub fn new(model: &MixtureModel, opts: PsiOptions) -> Result<Self, ParisiError> {
        Ok(PsiEvaluator { spins: SpinTerms::new(model)?, opts })
    }

    pub fn psi(&self, mu: &DiscreteMeasure) -> Result<f64, ParisiError> {
        psi_with(&self.spins, mu, &self.opts)
    }
}

/// Search family for the conjugate: measures with `atoms` atoms in `[0, q_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiStarSearch {
    pub atoms: usize,
    pub q_max: f64,
    pub multistarts: usize,
    pub seed: u64,
    pub max_evals: usize,
}

impl Default for PsiStarSearch {
    fn default() -> Self {
        PsiStarSearch { atoms: 2, q_max: 1.0, multistarts: 8, seed: 0, max_evals: 1500 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiStarValue {
    /// `min over the family of (int chi dmu - psi(mu))`; never below the true infimum.
    pub value: f64,
    pub argmin: DiscreteMeasure,
    /// The value is a minimum over a finite-dimensional family, hence an upper bound.
    pub family_bound: bool,
}

/// Decodes box coordinates `(atoms..., weights...)` into a measure.
pub fn decode_measure(x: &[f64], atoms: usize) -> Result<DiscreteMeasure, MeasureError> {
    let (q, w) = x.split_at(atoms);
    let w: Vec<f64> = w.iter().map(|v| v.max(0.0)).collect();
    DiscreteMeasure::normalized(q.to_vec(), w)
}

/// `psi_*(chi) = inf_mu (int chi dmu - psi(mu))` over a finite-atom search family.
pub fn psi_star(
    model: &MixtureModel,
    chi: &dyn Fn(f64) -> f64,
    search: &PsiStarSearch,
    opts: &PsiOptions,
) -> Result<PsiStarValue, ParisiError> {
    if search.atoms == 0 || !(search.q_max > 0.0) {
        return Err(ParisiError::InvalidParameter("search needs atoms >= 1 and q_max > 0".into()));
    }
    let eval = PsiEvaluator::new(model, *opts)?;
    let objective = |mu: &DiscreteMeasure| -> Result<f64, ParisiError> { Ok(mu.integrate(chi) - eval.psi(mu)?) };

    // growth along the edge of the box
    let probes = [0.1 * search.q_max, 0.5 * search.q_max, search.q_max];
    let mut edge = Vec::with_capacity(3);
    for &q in &probes {
        edge.push(objective(&DiscreteMeasure::dirac(q)?)?);
    }

    let k = search.atoms;
    let lo = vec![0.0; 2 * k];
    let mut hi = vec![search.q_max; k];
    hi.extend(std::iter::repeat_n(1.0, k));
    let mut best: Option<(f64, DiscreteMeasure)> = None;
    let consider = |v: f64, mu: DiscreteMeasure, best: &mut Option<(f64, DiscreteMeasure)>| {
        if best.as_ref().is_none_or(|b| v < b.0 - 1e-15 || (v <= b.0 + 1e-15 && mu.len() < b.1.len())) {
            *best = Some((v, mu));
        }
    };
    for (&q, &v) in probes.iter().zip(&edge) {
        consider(v, DiscreteMeasure::dirac(q)?, &mut best);
    }
    consider(objective(&DiscreteMeasure::dirac(0.0)?)?, DiscreteMeasure::dirac(0.0)?, &mut best);
    for start in 0..search.multistarts.max(1) {
        let mut rng = stream_rng(search.seed, &[start as u64]);
        let mut x0: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * search.q_max).collect();
        x0.extend((0..k).map(|_| rng.random::<f64>() + 0.05));
        let mut f = |x: &[f64]| match decode_measure(x, k) {
            Ok(mu) => objective(&mu).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        };
        let res = compass_minimize(&mut f, &x0, &lo, &hi, CompassOptions {
            max_evals: search.max_evals,
            ..CompassOptions::default()
        });
        if let Ok(mu) = decode_measure(&res.x, k) {
            consider(res.value, mu, &mut best);
        }
    }
    let (value, argmin) = best.expect("at least one candidate");
    let decreasing = edge.windows(2).all(|w| w[1] < w[0]);
    if decreasing && argmin.max_atom() >= 0.99 * search.q_max {
        return Err(ParisiError::DivergenceDetected { at: probes.to_vec(), values: edge });
    }
    Ok(PsiStarValue { value, argmin, family_bound: true })
}

#[derive(Debug, Clone, Serialize)]
pub struct CascadeEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicates: usize,
    /// Largest estimated fraction of cascade mass lost to truncation, when it
    /// exceeds `1e-6` of the kept mass.
    pub truncation_warning: Option<f64>,
}

/// Monte Carlo estimate of `psi(mu)` from a truncated Ruelle cascade with
/// `children` offspring per node; supports up to three atoms.
pub fn psi_cascade_mc(
    model: &MixtureModel,
    mu: &DiscreteMeasure,
    children: usize,
    replicates: usize,
    seed: u64,
) -> Result<CascadeEstimate, ParisiError> {
    let levels = mu.len() - 1;
    if levels > 2 {
        return Err(ParisiError::InvalidParameter(format!("cascade supports at most 3 atoms, got {}", mu.len())));
    }
    if children < 2 || replicates < 2 {
        return Err(ParisiError::InvalidParameter("need children >= 2 and replicates >= 2".into()));
    }
    let spins = SpinTerms::new(model)?;
    let q = mu.atoms().to_vec();
    let zeta = mu.cut_points();
    let tail = |z: f64| {
        let m = children as f64;
        if z >= 1.0 { f64::INFINITY } else { m.powf(1.0 - 1.0 / z) * z / (1.0 - z) }
    };
    let samples: Vec<(f64, f64)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, &[r as u64]);
            let mut gauss = || -> f64 { rng.sample(StandardNormal) };
            let root = (2.0 * q[0]).sqrt() * gauss();
            // (log weight, field) of the current generation
            let mut nodes = vec![(0.0, root)];
            let mut lost: f64 = 0.0;
            for k in 1..=levels {
                let sd = (2.0 * (q[k] - q[k - 1])).sqrt();
                let z = zeta[k - 1];
                let mut next = Vec::with_capacity(nodes.len() * children);
                for &(lw, field) in &nodes {
                    let mut arrival = 0.0;
                    let mut kept = 0.0;
                    let mut logs = Vec::with_capacity(children);
                    for _ in 0..children {
                        let e: f64 = rng.sample(Exp1);
                        arrival += e;
                        let lu = -arrival.ln() / z;
                        kept += lu.exp();
                        logs.push(lu);
                    }
                    lost = lost.max(tail(z) / kept);
                    for lu in logs {
                        let g: f64 = rng.sample(StandardNormal);
                        next.push((lw + lu, field + sd * g));
                    }
                }
                nodes = next;
            }
            let qk = q[levels];
            let top = nodes.iter().map(|n| n.0).fold(f64::NEG_INFINITY, f64::max);
            let norm: f64 = nodes.iter().map(|n| (n.0 - top).exp()).sum();
            let terms: Vec<f64> = nodes.iter().map(|n| n.0 - top + spins.terminal(n.1, qk)).collect();
            let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = terms.iter().map(|t| (t - m).exp()).sum();
            (-(m + s.ln() - norm.ln()), lost)
        })
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let lost = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    Ok(CascadeEstimate {
        mean,
        stderr: (var / n).sqrt(),
        replicates,
        truncation_warning: if lost > 1e-6 { Some(lost) } else { None },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_at_zero_vanishes() {
        let v = psi(&MixtureModel::sk(), &DiscreteMeasure::dirac(0.0).unwrap(), &PsiOptions::default()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn two_atom_limits_approach_diracs() {
        let m = MixtureModel::sk();
        let o = PsiOptions::default();
        let d = |q| psi(&m, &DiscreteMeasure::dirac(q).unwrap(), &o).unwrap();
        let lower_heavy = DiscreteMeasure::new(vec![0.2, 0.7], vec![1.0 - 1e-9, 1e-9]).unwrap();
        let upper_heavy = DiscreteMeasure::new(vec![0.2, 0.7], vec![1e-9, 1.0 - 1e-9]).unwrap();
        assert!((psi(&m, &lower_heavy, &o).unwrap() - d(0.2)).abs() < 1e-8);
        assert!((psi(&m, &upper_heavy, &o).unwrap() - d(0.7)).abs() < 1e-8);
    }

    #[test]
    fn hermite_rule_agrees_for_small_q() {
        let m = MixtureModel::sk();
        let mu = DiscreteMeasure::dirac(0.1).unwrap();
        let a = psi(&m, &mu, &PsiOptions::default()).unwrap();
        let b = psi(&m, &mu, &PsiOptions { rule: GaussianRule::GaussHermite, order: 60, ..PsiOptions::default() }).unwrap();
        assert!((a - b).abs() < 1e-10);
    }
}
