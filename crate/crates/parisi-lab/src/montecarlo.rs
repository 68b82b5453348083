//! Finite-volume free energies by exact enumeration of spin configurations,
//! averaged over Gaussian disorder.
//!
//! ```text
//! H_N(s) = sum_p sqrt(a_p) N^{-(p-1)/2} sum_{i_1..i_p} g_{i_1..i_p} s_{i_1} ... s_{i_p}
//! F_N    = -(1/N) E log sum_s P_N(s) exp(sqrt(2t) H_N(s) - t N xi(s.s / N))
//! ```
//!
//! Disorder of sample `k` depends only on `(seed, k)`, so estimates do not
//! depend on the number of worker threads.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::models::{MixtureModel, ModelError};
use crate::optimize::stream_rng;

/// Largest number of configurations enumerated per disorder sample.
pub const ENUMERATION_CAP: u64 = 1 << 22;

const DISORDER_KEY: u64 = 0x6469_736f;
const POTTS_KEY: u64 = 0x706f_7474;
const FIELD_KEY: u64 = 0x6669_656c;

#[derive(Debug, Error)]
pub enum MonteCarloError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{configs} configurations exceed the enumeration cap of {cap}")]
    SizeLimit { configs: f64, cap: u64 },
    #[error("enriched free energy supports single-atom measures only, got {0} atoms")]
    UnsupportedCascade(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Couplings of one disorder sample.
#[derive(Debug, Clone)]
pub struct DisorderSample {
    pub n: usize,
    pub seed: u64,
    pub index: u64,
    /// `(degree, coefficient, row-major tensor of n^degree Gaussians)`.
    pub tensors: Vec<(u32, f64, Vec<f64>)>,
    /// Independent `n x n` Gaussian matrix of the perturbation term.
    pub potts: Vec<f64>,
}

impl DisorderSample {
    pub fn generate(model: &MixtureModel, n: usize, seed: u64, index: u64) -> Self {
        let tensors = model
            .coeffs()
            .iter()
            .filter(|(_, a)| *a > 0.0)
            .map(|&(p, a)| {
                let mut rng = stream_rng(seed, &[DISORDER_KEY, index, p as u64]);
                let len = n.pow(p);
                (p, a, (0..len).map(|_| rng.sample(StandardNormal)).collect())
            })
            .collect();
        let mut rng = stream_rng(seed, &[POTTS_KEY, index]);
        let potts = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
        DisorderSample { n, seed, index, tensors, potts }
    }

    /// `H_N(sigma)` by direct contraction.
    pub fn hamiltonian(&self, sigma: &[f64]) -> f64 {
        let n = self.n as f64;
        self.tensors
            .iter()
            .map(|(p, a, g)| a.sqrt() * n.powf(-((*p as f64) - 1.0) / 2.0) * contract(g, sigma, *p))
            .sum()
    }

    /// Perturbation term with covariance `N (s.t / N)^2`.
    pub fn potts(&self, sigma: &[f64]) -> f64 {
        contract(&self.potts, sigma, 2) / (self.n as f64).sqrt()
    }
}

fn contract(g: &[f64], sigma: &[f64], p: u32) -> f64 {
    if p == 0 {
        return g[0];
    }
    let n = sigma.len();
    let stride = g.len() / n;
    sigma.iter().enumerate().map(|(i, &s)| if s == 0.0 { 0.0 } else { s * contract(&g[i * stride..(i + 1) * stride], sigma, p - 1) }).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EstimateMode {
    Plain,
    Enriched { q: f64 },
    Perturbed { alpha: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct FreeEnergyEstimate {
    pub t: f64,
    pub n: usize,
    pub n_samples: usize,
    pub mean: f64,
    pub stderr: f64,
    pub mode: EstimateMode,
    pub values: Vec<f64>,
}

/// Fixed-order pairwise sum.
fn pairwise_sum(x: &[f64]) -> f64 {
    match x.len() {
        0 => 0.0,
        1 => x[0],
        len => pairwise_sum(&x[..len / 2]) + pairwise_sum(&x[len / 2..]),
    }
}

fn summarize(t: f64, n: usize, mode: EstimateMode, values: Vec<f64>) -> FreeEnergyEstimate {
    let k = values.len() as f64;
    let mean = pairwise_sum(&values) / k;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let stderr = if values.len() > 1 { (pairwise_sum(&dev) / (k - 1.0)).sqrt() / k.sqrt() } else { f64::NAN };
    FreeEnergyEstimate { t, n, n_samples: values.len(), mean, stderr, mode, values }
}

struct Spins {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl Spins {
    fn new(model: &MixtureModel, n: usize) -> Result<Self, MonteCarloError> {
        let (values, weights) = model.scalar_spins()?;
        let (values, weights): (Vec<f64>, Vec<f64>) = values.into_iter().zip(weights).filter(|p| p.1 > 0.0).unzip();
        let configs = (values.len() as f64).powi(n as i32);
        if configs > ENUMERATION_CAP as f64 {
            return Err(MonteCarloError::SizeLimit { configs, cap: ENUMERATION_CAP });
        }
        Ok(Spins { values, weights })
    }
}

/// Everything entering the exponent of one disorder sample.
struct Exponent<'a> {
    /// Symmetric quadratic form, already scaled.
    quad: Vec<f64>,
    linear: Vec<f64>,
    /// Degree-3-and-up tensors with their scale.
    higher: Vec<(f64, u32, &'a [f64])>,
    /// Coefficients `(p, b_p)` of the self-overlap penalty `sum_p b_p (s.s)^p`.
    penalty: Vec<(u32, f64)>,
}

impl<'a> Exponent<'a> {
    fn build(
        disorder: &'a DisorderSample,
        model: &MixtureModel,
        t: f64,
        alpha: f64,
        field: Option<(f64, &[f64])>,
    ) -> Self {
        let n = disorder.n;
        let nf = n as f64;
        let root = (2.0 * t).sqrt();
        let mut quad = vec![0.0; n * n];
        let mut linear = vec![0.0; n];
        let mut higher = Vec::new();
        let mut add_quad = |g: &[f64], scale: f64| {
            for i in 0..n {
                for j in 0..n {
                    quad[i * n + j] += 0.5 * scale * (g[i * n + j] + g[j * n + i]);
                }
            }
        };
        for (p, a, g) in &disorder.tensors {
            let scale = root * a.sqrt() * nf.powf(-((*p as f64) - 1.0) / 2.0);
            match p {
                0 => {}
                1 => linear.iter_mut().zip(g).for_each(|(l, gi)| *l += scale * gi),
                2 => add_quad(g, scale),
                _ => higher.push((scale, *p, g.as_slice())),
            }
        }
        if alpha > 0.0 {
            add_quad(&disorder.potts, root * alpha.sqrt() / nf.sqrt());
        }
        // -t N xi_alpha(s.s / N)
        let mut penalty: Vec<(u32, f64)> =
            model.coeffs().iter().map(|&(p, a)| (p, -t * nf * a * nf.powi(-(p as i32)))).collect();
        if alpha > 0.0 {
            penalty.push((2, -t * nf * alpha / (nf * nf)));
        }
        if let Some((q, z)) = field {
            let s = (2.0 * q).sqrt();
            linear.iter_mut().zip(z).for_each(|(l, zi)| *l += s * zi);
            penalty.push((1, -q));
        }
        Exponent { quad, linear, higher, penalty }
    }

    /// `-(1/N) log sum_s P(s) exp(E(s))` by enumeration with incremental updates.
    fn free_energy(&self, spins: &Spins) -> f64 {
        let n = self.linear.len();
        let k = spins.values.len();
        let mut idx = vec![0usize; n];
        let mut sigma = vec![spins.values[0]; n];
        // f = quad * sigma
        let mut f: Vec<f64> = (0..n).map(|i| (0..n).map(|j| self.quad[i * n + j] * sigma[j]).sum()).collect();
        let mut qform: f64 = sigma.iter().zip(&f).map(|(s, fi)| s * fi).sum();
        let mut self_overlap: f64 = sigma.iter().map(|s| s * s).sum();
        let mut top = f64::NEG_INFINITY;
        let mut sum = 0.0;
        loop {
            let mut e = qform + self.linear.iter().zip(&sigma).map(|(l, s)| l * s).sum::<f64>();
            for &(scale, p, g) in &self.higher {
                e += scale * contract(g, &sigma, p);
            }
            for &(p, b) in &self.penalty {
                e += b * self_overlap.powi(p as i32);
            }
            let prob: f64 = idx.iter().map(|&j| spins.weights[j]).product();
            if e > top {
                sum = sum * (top - e).exp() + prob;
                top = e;
            } else {
                sum += prob * (e - top).exp();
            }
            // odometer step
            let mut i = 0;
            loop {
                if i == n {
                    return -(top + sum.ln()) / n as f64;
                }
                let old = sigma[i];
                idx[i] = (idx[i] + 1) % k;
                let new = spins.values[idx[i]];
                let d = new - old;
                if d != 0.0 {
                    qform += 2.0 * d * f[i] + d * d * self.quad[i * n + i];
                    for (j, fj) in f.iter_mut().enumerate() {
                        *fj += d * self.quad[j * n + i];
                    }
                    self_overlap += new * new - old * old;
                    sigma[i] = new;
                }
                if idx[i] != 0 {
                    break;
                }
                i += 1;
            }
        }
    }
}

fn check_common(t: f64, n: usize, n_samples: usize) -> Result<(), MonteCarloError> {
    if !(t >= 0.0) || n == 0 || n_samples == 0 {
        return Err(MonteCarloError::InvalidParameter("need t >= 0, N >= 1 and at least one sample".into()));
    }
    Ok(())
}

/// Standard Gaussian field of site `i` in sample `k`, keyed by the global site
/// index `k N + i`: runs covering the same sites see the same fields.
fn site_fields(seed: u64, n: usize, sample: usize) -> Vec<f64> {
    (0..n)
        .map(|i| stream_rng(seed, &[FIELD_KEY, (sample * n + i) as u64]).sample(StandardNormal))
        .collect()
}

/// Disorder average of the finite-volume free energy.
pub fn sample_free_energy(
    model: &MixtureModel,
    t: f64,
    n: usize,
    n_samples: usize,
    seed: u64,
) -> Result<FreeEnergyEstimate, MonteCarloError> {
    check_common(t, n, n_samples)?;
    let spins = Spins::new(model, n)?;
    let values: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let d = DisorderSample::generate(model, n, seed, k as u64);
            Exponent::build(&d, model, t, 0.0, None).free_energy(&spins)
        })
        .collect();
    Ok(summarize(t, n, EstimateMode::Plain, values))
}

/// Free energy enriched by the field `sqrt(2q) z.s - q s.s` of a one-atom measure.
pub fn enriched_free_energy(
    model: &MixtureModel,
    t: f64,
    atoms: &[f64],
    n: usize,
    n_samples: usize,
    seed: u64,
) -> Result<FreeEnergyEstimate, MonteCarloError> {
    check_common(t, n, n_samples)?;
    let &[q] = atoms else { return Err(MonteCarloError::UnsupportedCascade(atoms.len())) };
    if !(q >= 0.0) {
        return Err(MonteCarloError::InvalidParameter(format!("atom must be nonnegative, got {q}")));
    }
    let spins = Spins::new(model, n)?;
    let values: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let d = DisorderSample::generate(model, n, seed, k as u64);
            let z = site_fields(seed, n, k);
            let field = (q > 0.0).then_some((q, z.as_slice()));
            Exponent::build(&d, model, t, 0.0, field).free_energy(&spins)
        })
        .collect();
    Ok(summarize(t, n, EstimateMode::Enriched { q }, values))
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceRow {
    pub overlap: f64,
    pub target: f64,
    pub mean: f64,
    pub stderr: f64,
    pub within: bool,
}

/// Empirical `E H(s) H(t)` against `N xi(s.t / N)` for probe pairs.
pub fn covariance_check(
    model: &MixtureModel,
    n: usize,
    n_samples: usize,
    seed: u64,
    probes: &[(Vec<f64>, Vec<f64>)],
) -> Result<Vec<CovarianceRow>, MonteCarloError> {
    if n_samples < 2 || probes.iter().any(|(a, b)| a.len() != n || b.len() != n) {
        return Err(MonteCarloError::InvalidParameter("probes must have length N and n_samples >= 2".into()));
    }
    let products: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let d = DisorderSample::generate(model, n, seed, k as u64);
            probes.iter().map(|(a, b)| d.hamiltonian(a) * d.hamiltonian(b)).collect()
        })
        .collect();
    Ok(probes
        .iter()
        .enumerate()
        .map(|(j, (a, b))| {
            let overlap = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n as f64;
            let target = n as f64 * model.xi(overlap);
            let s = summarize(0.0, n, EstimateMode::Plain, products.iter().map(|p| p[j]).collect());
            CovarianceRow { overlap, target, mean: s.mean, stderr: s.stderr, within: (s.mean - target).abs() <= 4.0 * s.stderr }
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct PottsScan {
    pub alphas: Vec<f64>,
    pub estimates: Vec<FreeEnergyEstimate>,
    /// `|F(a_{k+1}) - F(a_k)| / (a_{k+1} - a_k)`.
    pub slopes: Vec<f64>,
    /// Standard errors of the paired differences.
    pub difference_stderr: Vec<f64>,
    pub constant: f64,
    pub within_bound: bool,
    /// Nondecreasing in `alpha` up to four paired standard errors.
    pub nondecreasing: bool,
}

/// Free energy of `H + sqrt(alpha) H^Potts` with penalty `xi + alpha |x|^2`,
/// using the same disorder for every `alpha`. Consecutive differences are
/// checked against `C |da| + 4 stderr` with `C = t c^2`, `c` the largest spin.
pub fn potts_perturbation_check(
    model: &MixtureModel,
    t: f64,
    n: usize,
    alphas: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<PottsScan, MonteCarloError> {
    check_common(t, n, n_samples)?;
    if alphas.is_empty() || alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(MonteCarloError::InvalidParameter("alphas must lie in [0, 1]".into()));
    }
    let spins = Spins::new(model, n)?;
    let c = spins.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let constant = t * (model.dim() as f64).powi(2) * c * c;
    let per_sample: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let d = DisorderSample::generate(model, n, seed, k as u64);
            alphas.iter().map(|&a| Exponent::build(&d, model, t, a, None).free_energy(&spins)).collect()
        })
        .collect();
    let estimates: Vec<FreeEnergyEstimate> = alphas
        .iter()
        .enumerate()
        .map(|(j, &a)| summarize(t, n, EstimateMode::Perturbed { alpha: a }, per_sample.iter().map(|v| v[j]).collect()))
        .collect();
    let mut slopes = Vec::new();
    let mut difference_stderr = Vec::new();
    let mut within_bound = true;
    let mut nondecreasing = true;
    for j in 0..alphas.len().saturating_sub(1) {
        let diff = summarize(t, n, EstimateMode::Plain, per_sample.iter().map(|v| v[j + 1] - v[j]).collect());
        let da = (alphas[j + 1] - alphas[j]).abs();
        slopes.push(if da > 0.0 { diff.mean.abs() / da } else { 0.0 });
        let se = if diff.stderr.is_finite() { diff.stderr } else { 0.0 };
        difference_stderr.push(se);
        if diff.mean.abs() > constant * da + 4.0 * se {
            within_bound = false;
        }
        if (alphas[j + 1] - alphas[j]) * diff.mean < -4.0 * se {
            nondecreasing = false;
        }
    }
    Ok(PottsScan { alphas: alphas.to_vec(), estimates, slopes, difference_stderr, constant, within_bound, nondecreasing })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_temperature_is_exact() {
        let e = sample_free_energy(&MixtureModel::sk(), 0.0, 6, 5, 3).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn incremental_enumeration_matches_direct_sum() {
        let model = MixtureModel::ising(&[(1, 0.3), (2, 1.0), (3, 0.5)]).unwrap();
        let n = 5;
        let t = 0.7;
        let d = DisorderSample::generate(&model, n, 11, 0);
        let spins = Spins::new(&model, n).unwrap();
        let fast = Exponent::build(&d, &model, t, 0.0, None).free_energy(&spins);
        let mut terms = Vec::new();
        for mask in 0..1u32 << n {
            let s: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
            terms.push((2.0 * t).sqrt() * d.hamiltonian(&s) - t * n as f64 * model.xi(1.0));
        }
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slow = -(top + (terms.iter().map(|e| (e - top).exp()).sum::<f64>() / 32.0).ln()) / n as f64;
        assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
    }

    #[test]
    fn size_limit() {
        assert!(matches!(
            sample_free_energy(&MixtureModel::sk(), 1.0, 23, 1, 0),
            Err(MonteCarloError::SizeLimit { .. })
        ));
    }
}
