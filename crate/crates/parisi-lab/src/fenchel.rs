//! Finite-family checks of concave duality on spaces of measures: Fenchel-Moreau
//! round trips, barycenters of mixtures, Jensen's inequality on monotone
//! measures, the concave extension formula and empirical-measure convergence.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hopf::{HopfError, PlConvexFn};
use crate::lp::{LinearProgram, LpError, Relation};
use crate::measures::{kr_norm_closed_form, w1_distance, DiscreteMeasure, MatrixAtomsMeasure, MeasureError, SignedAtoms};
use crate::optimize::stream_rng;

#[derive(Debug, Error)]
pub enum FenchelError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Hopf(#[from] HopfError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("declared Lipschitz constant {0} exceeds 1")]
    NotLipschitz(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// `mu -> int chi dmu + offset`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffinePiece {
    pub chi: PlConvexFn,
    pub offset: f64,
}

impl AffinePiece {
    pub fn eval(&self, mu: &DiscreteMeasure) -> f64 {
        self.chi.integrate(mu) + self.offset
    }
}

/// A functional on probability measures over `R_+`.
pub enum ConcaveFunctional {
    /// `min_l (int chi_l dmu + c_l)`.
    MinOfAffine(Vec<AffinePiece>),
    /// Arbitrary evaluation with a declared Lipschitz constant; concavity is
    /// not checked, which is how non-concave inputs reach the round trip.
    Oracle { eval: Box<dyn Fn(&DiscreteMeasure) -> f64 + Send + Sync>, lipschitz: f64 },
}

impl ConcaveFunctional {
    pub fn eval(&self, mu: &DiscreteMeasure) -> f64 {
        match self {
            ConcaveFunctional::MinOfAffine(pieces) => pieces.iter().map(|p| p.eval(mu)).fold(f64::INFINITY, f64::min),
            ConcaveFunctional::Oracle { eval, .. } => eval(mu),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            ConcaveFunctional::MinOfAffine(pieces) => {
                pieces.iter().map(|p| p.chi.slopes().iter().fold(0.0f64, |a, s| a.max(s.abs()))).fold(0.0, f64::max)
            }
            ConcaveFunctional::Oracle { lipschitz, .. } => *lipschitz,
        }
    }
}

/// Measures that can be mixed and compared by a transport distance.
pub trait AtomicMeasure: Clone {
    fn mix(parts: &[(f64, &Self)]) -> Result<Self, MeasureError>;
    /// Atoms flattened to coordinate vectors, with their weights.
    fn points(&self) -> Vec<(Vec<f64>, f64)>;
    fn distance(&self, other: &Self) -> Result<f64, MeasureError>;
    fn is_monotone(&self) -> bool;
}

impl AtomicMeasure for DiscreteMeasure {
    fn mix(parts: &[(f64, &Self)]) -> Result<Self, MeasureError> {
        DiscreteMeasure::mixture(parts)
    }

    fn points(&self) -> Vec<(Vec<f64>, f64)> {
        self.atoms().iter().zip(self.weights()).map(|(&a, &w)| (vec![a], w)).collect()
    }

    fn distance(&self, other: &Self) -> Result<f64, MeasureError> {
        Ok(w1_distance(self, other))
    }

    fn is_monotone(&self) -> bool {
        true
    }
}

impl AtomicMeasure for MatrixAtomsMeasure {
    fn mix(parts: &[(f64, &Self)]) -> Result<Self, MeasureError> {
        MatrixAtomsMeasure::mixture(parts)
    }

    fn points(&self) -> Vec<(Vec<f64>, f64)> {
        self.atoms().iter().zip(self.weights()).map(|(a, &w)| (a.iter().copied().collect(), w)).collect()
    }

    fn distance(&self, other: &Self) -> Result<f64, MeasureError> {
        crate::measures::matrix_w1(self, other)
    }

    fn is_monotone(&self) -> bool {
        self.is_monotone_support()
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Optimal transport cost between two weight vectors for a cost matrix.
fn transport(a: &[f64], b: &[f64], cost: impl Fn(usize, usize) -> f64) -> Result<f64, LpError> {
    let (n, m) = (a.len(), b.len());
    let c: Vec<f64> = (0..n * m).map(|k| cost(k / m, k % m)).collect();
    let mut lp = LinearProgram::minimize(c);
    for (i, &ai) in a.iter().enumerate() {
        lp.add((0..m).map(|j| (i * m + j, 1.0)).collect(), Relation::Eq, ai);
    }
    for (j, &bj) in b.iter().enumerate() {
        lp.add((0..n).map(|i| (i * m + j, 1.0)).collect(), Relation::Eq, bj);
    }
    Ok(lp.solve()?.objective.max(0.0))
}

/// A finitely supported probability measure on measures.
#[derive(Debug, Clone, Serialize)]
pub struct MixtureWeights<M> {
    pub support: Vec<M>,
    pub weights: Vec<f64>,
}

impl<M: AtomicMeasure> MixtureWeights<M> {
    pub fn new(support: Vec<M>, weights: Vec<f64>) -> Result<Self, FenchelError> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(FenchelError::Invalid("support and weights must be nonempty and of equal length".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(FenchelError::Invalid(format!("weights must lie on the simplex (sum {total})")));
        }
        Ok(MixtureWeights { support, weights })
    }

    pub fn dirac(nu: M) -> Self {
        MixtureWeights { support: vec![nu], weights: vec![1.0] }
    }

    pub fn barycenter(&self) -> Result<M, MeasureError> {
        let parts: Vec<(f64, &M)> = self.weights.iter().copied().zip(&self.support).collect();
        M::mix(&parts)
    }

    /// Transport distance between mixtures with ground cost the distance of measures.
    pub fn distance(&self, other: &Self) -> Result<f64, FenchelError> {
        let mut cost = vec![vec![0.0; other.support.len()]; self.support.len()];
        for (i, a) in self.support.iter().enumerate() {
            for (j, b) in other.support.iter().enumerate() {
                cost[i][j] = a.distance(b)?;
            }
        }
        Ok(transport(&self.weights, &other.weights, |i, j| cost[i][j])?)
    }
}

/// `min over family of (int chi dmu - phi(mu))`.
pub fn phi_star(phi: &ConcaveFunctional, chi: &PlConvexFn, family: &[DiscreteMeasure]) -> f64 {
    family.iter().map(|mu| chi.integrate(mu) - phi.eval(mu)).fold(f64::INFINITY, f64::min)
}

/// `min over chis of (int chi dmu - phi_*(chi))`, with the `phi_*` values given.
pub fn phi_star_star(mu: &DiscreteMeasure, chis: &[PlConvexFn], stars: &[f64]) -> f64 {
    chis.iter().zip(stars).map(|(chi, s)| chi.integrate(mu) - s).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Serialize)]
pub struct FmRow {
    pub mu: DiscreteMeasure,
    pub phi: f64,
    pub phi_star_star: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FmReport {
    pub rows: Vec<FmRow>,
    pub max_abs_error: f64,
    /// `min (phi_** - phi)` over the test measures; nonnegative when the
    /// family contains the test measures.
    pub min_excess: f64,
    /// Set when `phi_**` falls below `phi` by more than the tolerance.
    pub family_too_coarse: Option<f64>,
}

/// Double conjugate of `phi` over a finite family of measures and a finite
/// set of test functions. The test measures are added to the family.
pub fn fm_roundtrip(
    phi: &ConcaveFunctional,
    chis: &[PlConvexFn],
    mus: &[DiscreteMeasure],
    family: &[DiscreteMeasure],
    tol: f64,
) -> Result<FmReport, FenchelError> {
    let lip = phi.lipschitz();
    if lip > 1.0 + 1e-12 {
        return Err(FenchelError::NotLipschitz(lip));
    }
    if chis.is_empty() || mus.is_empty() {
        return Err(FenchelError::Invalid("need test functions and test measures".into()));
    }
    let mut fam: Vec<DiscreteMeasure> = family.to_vec();
    fam.extend(mus.iter().cloned());
    let stars: Vec<f64> = chis.iter().map(|chi| phi_star(phi, chi, &fam)).collect();
    let rows: Vec<FmRow> = mus
        .iter()
        .map(|mu| FmRow { mu: mu.clone(), phi: phi.eval(mu), phi_star_star: phi_star_star(mu, chis, &stars) })
        .collect();
    let max_abs_error = rows.iter().map(|r| (r.phi_star_star - r.phi).abs()).fold(0.0, f64::max);
    let min_excess = rows.iter().map(|r| r.phi_star_star - r.phi).fold(f64::INFINITY, f64::min);
    Ok(FmReport { rows, max_abs_error, min_excess, family_too_coarse: (min_excess < -tol).then_some(min_excess) })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcavityWitness {
    pub left: DiscreteMeasure,
    pub right: DiscreteMeasure,
    pub midpoint: DiscreteMeasure,
    pub phi_midpoint: f64,
    pub phi_star_star_midpoint: f64,
}

fn random_measure(rng: &mut impl Rng, x_max: f64, max_atoms: usize) -> Result<DiscreteMeasure, MeasureError> {
    let k = rng.random_range(1..=max_atoms);
    let atoms: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * x_max).collect();
    let weights: Vec<f64> = (0..k).map(|_| 0.05 + rng.random::<f64>()).collect();
    DiscreteMeasure::normalized(atoms, weights)
}

/// Searches for `mu_a, mu_b` whose midpoint `m` has `phi(m)` below the average
/// of `phi(mu_a), phi(mu_b)`; then `phi_**(m) > phi(m)` because `phi_**` is
/// concave and dominates `phi` on the family.
pub fn find_concavity_witness(
    phi: &ConcaveFunctional,
    chis: &[PlConvexFn],
    family: &[DiscreteMeasure],
    x_max: f64,
    trials: usize,
    seed: u64,
) -> Result<Option<ConcavityWitness>, FenchelError> {
    let mut best: Option<(f64, DiscreteMeasure, DiscreteMeasure, DiscreteMeasure)> = None;
    for trial in 0..trials {
        let mut rng = stream_rng(seed, &[trial as u64]);
        let a = random_measure(&mut rng, x_max, 2)?;
        let b = random_measure(&mut rng, x_max, 2)?;
        let m = DiscreteMeasure::mixture(&[(0.5, &a), (0.5, &b)])?;
        let defect = 0.5 * (phi.eval(&a) + phi.eval(&b)) - phi.eval(&m);
        if best.as_ref().is_none_or(|p| defect > p.0) {
            best = Some((defect, a, b, m));
        }
    }
    let Some((defect, left, right, midpoint)) = best else { return Ok(None) };
    if defect <= 1e-12 {
        return Ok(None);
    }
    let mut fam = family.to_vec();
    fam.extend([left.clone(), right.clone(), midpoint.clone()]);
    let stars: Vec<f64> = chis.iter().map(|chi| phi_star(phi, chi, &fam)).collect();
    let pss = phi_star_star(&midpoint, chis, &stars);
    let phi_midpoint = phi.eval(&midpoint);
    Ok((pss > phi_midpoint + 1e-9).then_some(ConcavityWitness {
        left,
        right,
        midpoint,
        phi_midpoint,
        phi_star_star_midpoint: pss,
    }))
}

/// A function on a grid `0 = x_0 < x_1 < ...`.
#[derive(Debug, Clone, Serialize)]
pub struct GridFunction {
    pub points: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(points: Vec<f64>, values: Vec<f64>) -> Result<Self, FenchelError> {
        if points.is_empty() || points.len() != values.len() || points[0] != 0.0 || points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FenchelError::Invalid("grid must start at 0 and increase".into()));
        }
        Ok(GridFunction { points, values })
    }

    /// `max(|chi(0)|, largest slope between consecutive points)`.
    pub fn dual_norm(&self) -> f64 {
        let slope = self
            .points
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| ((v[1] - v[0]) / (x[1] - x[0])).abs())
            .fold(0.0, f64::max);
        self.values[0].abs().max(slope)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualNormReport {
    pub norm: f64,
    pub bounded: bool,
    /// Unit direction along which `int chi dnu + |nu|` decreases linearly.
    pub direction: Option<SignedAtoms>,
    /// Value of `int chi dnu + |nu|` per unit scale along `direction`.
    pub rate: Option<f64>,
    /// Smallest value over random unit-norm samples when bounded.
    pub sampled_min: Option<f64>,
}

/// Decides whether `nu -> int chi dnu + |nu|` is bounded below on signed
/// measures on the grid, exhibiting a divergent direction when it is not.
pub fn dual_norm_check(chi: &GridFunction, samples: usize, seed: u64) -> Result<DualNormReport, FenchelError> {
    let norm = chi.dual_norm();
    let objective = |nu: &SignedAtoms| -> f64 {
        let f = |x: f64| chi.points.iter().position(|&p| p == x).map(|i| chi.values[i]).unwrap_or(f64::NAN);
        nu.integrate(f) + kr_norm_closed_form(nu)
    };
    if norm > 1.0 {
        let mut direction = if chi.values[0].abs() > 1.0 {
            SignedAtoms::new(vec![0.0], vec![-chi.values[0].signum()])?
        } else {
            SignedAtoms::new(vec![0.0], vec![0.0])?
        };
        let mut steepest = chi.values[0].abs();
        for i in 0..chi.points.len() - 1 {
            let (a, b) = (chi.points[i], chi.points[i + 1]);
            let slope = (chi.values[i + 1] - chi.values[i]) / (b - a);
            if slope.abs() > steepest {
                steepest = slope.abs();
                let s = -slope.signum() / (b - a);
                direction = SignedAtoms::new(vec![a, b], vec![-s, s])?;
            }
        }
        let rate = objective(&direction);
        return Ok(DualNormReport { norm, bounded: false, direction: Some(direction), rate: Some(rate), sampled_min: None });
    }
    let mut sampled_min = f64::INFINITY;
    for k in 0..samples {
        let mut rng = stream_rng(seed, &[k as u64]);
        let w: Vec<f64> = chi.points.iter().map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let nu = SignedAtoms::new(chi.points.clone(), w)?;
        let scale = kr_norm_closed_form(&nu);
        if scale > 0.0 {
            let unit = SignedAtoms::new(chi.points.clone(), nu.weights.iter().map(|x| x / scale).collect())?;
            sampled_min = sampled_min.min(objective(&unit));
        }
    }
    Ok(DualNormReport { norm, bounded: sampled_min >= -1e-12, direction: None, rate: None, sampled_min: Some(sampled_min) })
}

#[derive(Debug, Clone, Serialize)]
pub struct JensenReport {
    /// `sum w_i phi(nu_i)`.
    pub average: f64,
    /// `phi(barycenter)`.
    pub at_barycenter: f64,
    pub holds: bool,
}

/// Jensen's inequality for a functional that is concave on monotone measures.
/// Requires a monotone barycenter; every component is then monotone too.
pub fn jensen_check<M: AtomicMeasure>(
    phi: &dyn Fn(&M) -> f64,
    eta: &MixtureWeights<M>,
) -> Result<JensenReport, FenchelError> {
    let bar = eta.barycenter()?;
    if !bar.is_monotone() {
        return Err(FenchelError::PreconditionViolated("barycenter support is not totally ordered".into()));
    }
    if !components_monotone(eta) {
        return Err(FenchelError::PreconditionViolated("a component with positive weight is not monotone".into()));
    }
    let average: f64 = eta.support.iter().zip(&eta.weights).map(|(nu, w)| w * phi(nu)).sum();
    let at_barycenter = phi(&bar);
    Ok(JensenReport { average, at_barycenter, holds: average <= at_barycenter + 1e-8 })
}

/// Every component with positive weight has monotone support.
pub fn components_monotone<M: AtomicMeasure>(eta: &MixtureWeights<M>) -> bool {
    eta.support.iter().zip(&eta.weights).all(|(nu, &w)| w == 0.0 || nu.is_monotone())
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtremeSetReport {
    pub trials: usize,
    /// Mixtures with a non-monotone component but a monotone barycenter.
    pub counterexamples: usize,
    /// Pairs of chain measures with mutually incomparable atoms whose
    /// barycenter was nevertheless monotone.
    pub incomparable_chain_failures: usize,
    pub incomparable_chain_pairs: usize,
    pub witness: Option<MixtureWeights<MatrixAtomsMeasure>>,
}

fn random_psd(rng: &mut impl Rng, dim: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    &b * b.transpose()
}

fn random_chain(rng: &mut impl Rng, dim: usize, len: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(len);
    let mut acc = DMatrix::zeros(dim, dim);
    for _ in 0..len {
        acc += random_psd(rng, dim) * rng.random::<f64>();
        out.push(acc.clone());
    }
    out
}

/// Randomised attempt to break the extreme-set property of monotone measures
/// in dimension `dim`.
pub fn extreme_set_search(dim: usize, trials: usize, seed: u64) -> Result<ExtremeSetReport, FenchelError> {
    let mut counterexamples = 0;
    let mut witness = None;
    let mut chain_pairs = 0;
    let mut chain_failures = 0;
    for trial in 0..trials {
        let mut rng = stream_rng(seed, &[trial as u64]);
        // one arbitrary measure and one chain measure
        let k = rng.random_range(2..=3);
        let free: Vec<DMatrix<f64>> = (0..k).map(|_| random_psd(&mut rng, dim)).collect();
        let a = MatrixAtomsMeasure::new(dim, free, vec![1.0 / k as f64; k])?;
        let chain = random_chain(&mut rng, dim, 2);
        let b = MatrixAtomsMeasure::new(dim, chain, vec![0.5, 0.5])?;
        let lambda = 0.05 + 0.9 * rng.random::<f64>();
        let eta = MixtureWeights::new(vec![a, b.clone()], vec![lambda, 1.0 - lambda])?;
        let bar = eta.barycenter()?;
        if bar.is_monotone() && !components_monotone(&eta) {
            counterexamples += 1;
            witness.get_or_insert(eta);
        }
        // two chains whose atoms are pairwise incomparable across chains
        let c = MatrixAtomsMeasure::new(dim, random_chain(&mut rng, dim, 2), vec![0.5, 0.5])?;
        let incomparable = b.atoms().iter().any(|x| {
            c.atoms().iter().any(|y| !crate::measures::loewner_comparable(x, y, 1e-12))
        });
        if incomparable {
            chain_pairs += 1;
            let bar = MixtureWeights::new(vec![b, c], vec![0.5, 0.5])?.barycenter()?;
            if bar.is_monotone() {
                chain_failures += 1;
            }
        }
    }
    Ok(ExtremeSetReport {
        trials,
        counterexamples,
        incomparable_chain_failures: chain_failures,
        incomparable_chain_pairs: chain_pairs,
        witness,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Extension {
    /// Family-restricted supremum, a lower bound on the extension.
    pub value: f64,
    pub weights: Vec<f64>,
    /// `|value - phi(mu')|` when `mu'` is a family member.
    pub in_family_error: Option<f64>,
}

/// `sup over mixtures eta of the family of (sum eta_i phi(nu_i) - d(Bar eta, mu'))`,
/// solved as one linear program in the weights and the transport plan.
pub fn extend_phi<M: AtomicMeasure>(family: &[(M, f64)], mu_prime: &M) -> Result<Extension, FenchelError> {
    if family.is_empty() {
        return Err(FenchelError::Invalid("empty family".into()));
    }
    // union of family atoms
    let mut atoms: Vec<Vec<f64>> = Vec::new();
    let mut mass: Vec<Vec<(usize, f64)>> = Vec::new();
    for (nu, _) in family {
        let mut entries = Vec::new();
        for (x, w) in nu.points() {
            let k = match atoms.iter().position(|a| euclid(a, &x) <= 1e-12) {
                Some(k) => k,
                None => {
                    atoms.push(x);
                    atoms.len() - 1
                }
            };
            entries.push((k, w));
        }
        mass.push(entries);
    }
    let target = mu_prime.points();
    let (p, n, m) = (family.len(), atoms.len(), target.len());
    let plan = |k: usize, j: usize| p + k * m + j;
    let mut objective = vec![0.0; p + n * m];
    for (i, (_, v)) in family.iter().enumerate() {
        objective[i] = *v;
    }
    for k in 0..n {
        for j in 0..m {
            objective[plan(k, j)] = -euclid(&atoms[k], &target[j].0);
        }
    }
    let mut lp = LinearProgram::maximize(objective);
    lp.add((0..p).map(|i| (i, 1.0)).collect(), Relation::Eq, 1.0);
    let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|k| (0..m).map(|j| (plan(k, j), 1.0)).collect()).collect();
    for (i, entries) in mass.iter().enumerate() {
        for &(k, w) in entries {
            rows[k].push((i, -w));
        }
    }
    for row in rows {
        lp.add(row, Relation::Eq, 0.0);
    }
    for (j, (_, w)) in target.iter().enumerate() {
        lp.add((0..n).map(|k| (plan(k, j), 1.0)).collect(), Relation::Eq, *w);
    }
    let sol = lp.solve()?;
    let in_family_error = family
        .iter()
        .filter(|(nu, _)| nu.distance(mu_prime).map(|d| d <= 1e-12).unwrap_or(false))
        .map(|(_, v)| (sol.objective - v).abs())
        .next();
    Ok(Extension { value: sol.objective, weights: sol.x[..p].to_vec(), in_family_error })
}

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalRow {
    pub n: usize,
    pub median_w1: f64,
    pub mean_w1: f64,
}

/// W1 distance between `mu` and the empirical measure of `n` i.i.d. draws,
/// summarised over `repetitions` draws for each `n`.
pub fn empirical_convergence(
    mu: &DiscreteMeasure,
    n_list: &[usize],
    repetitions: usize,
    seed: u64,
) -> Result<Vec<EmpiricalRow>, FenchelError> {
    if repetitions == 0 || n_list.contains(&0) {
        return Err(FenchelError::Invalid("sample sizes and repetitions must be positive".into()));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut d: Vec<f64> = (0..repetitions)
            .map(|r| {
                let mut rng = stream_rng(seed, &[n as u64, r as u64]);
                let draws: Vec<f64> = (0..n).map(|_| mu.quantile(rng.random::<f64>())).collect();
                let emp = DiscreteMeasure::normalized(draws, vec![1.0; n])?;
                Ok(w1_distance(mu, &emp))
            })
            .collect::<Result<_, MeasureError>>()?;
        d.sort_by(f64::total_cmp);
        let median = if repetitions % 2 == 1 { d[repetitions / 2] } else { 0.5 * (d[repetitions / 2 - 1] + d[repetitions / 2]) };
        rows.push(EmpiricalRow { n, median_w1: median, mean_w1: d.iter().sum::<f64>() / repetitions as f64 });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barycenter_of_two_diracs() {
        let eta = MixtureWeights::new(
            vec![DiscreteMeasure::dirac(0.0).unwrap(), DiscreteMeasure::dirac(1.0).unwrap()],
            vec![0.5, 0.5],
        )
        .unwrap();
        let bar = eta.barycenter().unwrap();
        assert_eq!(bar.atoms(), &[0.0, 1.0]);
        assert_eq!(bar.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn steep_grid_function_diverges() {
        let chi = GridFunction::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 1.2]).unwrap();
        let r = dual_norm_check(&chi, 100, 0).unwrap();
        assert!(!r.bounded);
        assert!((r.rate.unwrap() - (1.0 - 2.0)).abs() < 1e-12);
        let flat = GridFunction::new(vec![0.0, 1.0], vec![1.5, 1.5]).unwrap();
        let r = dual_norm_check(&flat, 10, 0).unwrap();
        assert!((r.rate.unwrap() + 0.5).abs() < 1e-12);
        let zero = GridFunction::new(vec![0.0, 0.3, 1.0], vec![0.0; 3]).unwrap();
        assert!(dual_norm_check(&zero, 200, 1).unwrap().bounded);
    }
}
