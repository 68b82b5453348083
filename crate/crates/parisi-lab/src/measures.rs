//! Finitely supported measures on the half line and on PSD matrices, the
//! Wasserstein-1 distance, the convex-cone order and the Kantorovich-Rubinstein
//! norm of signed measures.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{LinearProgram, LpError, Relation};

/// Atoms closer than this are merged when a measure is canonicalised.
pub const MERGE_TOL: f64 = 1e-12;
/// Allowed deviation of the total mass from one.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("atoms and weights differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("measure has no atoms")]
    Empty,
    #[error("atom {0} is negative or not finite")]
    BadAtom(f64),
    #[error("weight {0} is negative or not finite")]
    BadWeight(f64),
    #[error("weights sum to {0}, expected 1")]
    BadMass(f64),
    #[error("atom is not a symmetric PSD {dim}x{dim} matrix")]
    NotPsd { dim: usize },
    #[error("measures live in different dimensions ({0} vs {1})")]
    IncomparableTypes(usize, usize),
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AtomsWeights {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

/// Probability measure with finitely many atoms in `[0, inf)`.
///
/// Atoms are kept sorted and distinct; every weight is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AtomsWeights", into = "AtomsWeights")]
pub struct DiscreteMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<AtomsWeights> for DiscreteMeasure {
    type Error = MeasureError;
    fn try_from(a: AtomsWeights) -> Result<Self, MeasureError> {
        DiscreteMeasure::new(a.atoms, a.weights)
    }
}

impl From<DiscreteMeasure> for AtomsWeights {
    fn from(m: DiscreteMeasure) -> Self {
        AtomsWeights { atoms: m.atoms, weights: m.weights }
    }
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if atoms.len() != weights.len() {
            return Err(MeasureError::LengthMismatch(atoms.len(), weights.len()));
        }
        if let Some(&a) = atoms.iter().find(|a| !a.is_finite() || **a < 0.0) {
            return Err(MeasureError::BadAtom(a));
        }
        if let Some(&w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(MeasureError::BadWeight(w));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(MeasureError::BadMass(total));
        }
        Self::canonical(atoms, weights)
    }

    /// Builds a measure from nonnegative weights of any positive total.
    pub fn normalized(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if atoms.len() != weights.len() {
            return Err(MeasureError::LengthMismatch(atoms.len(), weights.len()));
        }
        if let Some(&w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(MeasureError::BadWeight(w));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(MeasureError::BadMass(total));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        if let Some(&a) = atoms.iter().find(|a| !a.is_finite() || **a < 0.0) {
            return Err(MeasureError::BadAtom(a));
        }
        Self::canonical(atoms, weights)
    }

    fn canonical(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).filter(|p| p.1 > 0.0).collect();
        if pairs.is_empty() {
            return Err(MeasureError::Empty);
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (a, w) in pairs {
            match atoms.last() {
                Some(&last) if a - last <= MERGE_TOL => *weights.last_mut().unwrap() += w,
                _ => {
                    atoms.push(a);
                    weights.push(w);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(DiscreteMeasure { atoms, weights })
    }

    pub fn dirac(q: f64) -> Result<Self, MeasureError> {
        Self::new(vec![q], vec![1.0])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn max_atom(&self) -> f64 {
        *self.atoms.last().unwrap()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(&a, &w)| w * f(a)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    /// Cumulative weights below each atom but the first: the cut points of the
    /// quantile path, strictly inside `(0, 1)`.
    pub fn cut_points(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut cuts = Vec::with_capacity(self.len().saturating_sub(1));
        for w in &self.weights[..self.len() - 1] {
            acc += w;
            cuts.push(acc);
        }
        cuts
    }

    /// Right-continuous quantile function on `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            acc += w;
            if u < acc {
                return *a;
            }
        }
        self.max_atom()
    }

    /// `int (x - c)_+ dmu`.
    pub fn tail_integral(&self, c: f64) -> f64 {
        self.integrate(|x| (x - c).max(0.0))
    }

    /// Convex combination `sum_i lambda_i mu_i`.
    pub fn mixture(parts: &[(f64, &DiscreteMeasure)]) -> Result<Self, MeasureError> {
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (lambda, mu) in parts {
            if !lambda.is_finite() || *lambda < 0.0 {
                return Err(MeasureError::BadWeight(*lambda));
            }
            atoms.extend_from_slice(&mu.atoms);
            weights.extend(mu.weights.iter().map(|w| w * lambda));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(MeasureError::BadMass(total));
        }
        Self::normalized(atoms, weights)
    }

    /// Quantile path as `(cut points, values)`, for CSV export.
    pub fn quantile_path(&self) -> (Vec<f64>, Vec<f64>) {
        (self.cut_points(), self.atoms.clone())
    }
}

/// Wasserstein-1 distance `int |F_mu - F_nu| dx`.
pub fn w1_distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let mut points: Vec<(f64, f64)> = mu
        .atoms
        .iter()
        .zip(&mu.weights)
        .map(|(&a, &w)| (a, w))
        .chain(nu.atoms.iter().zip(&nu.weights).map(|(&a, &w)| (a, -w)))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut diff = 0.0;
    let mut total = 0.0;
    for pair in points.windows(2) {
        diff += pair[0].1;
        total += diff.abs() * (pair[1].0 - pair[0].0);
    }
    total
}

/// Outcome of a cone-order comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderCheck {
    pub holds: bool,
    /// A threshold `c` with `int (x-c)_+ dmu > int (x-c)_+ dnu`, when the order fails.
    pub witness: Option<f64>,
    /// Largest violation found.
    pub excess: f64,
}

/// `mu <= nu` against every nondecreasing convex test function, which for
/// measures on the half line reduces to comparing tail integrals.
pub fn measure_leq(mu: &DiscreteMeasure, nu: &DiscreteMeasure, tol: f64) -> OrderCheck {
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for &c in std::iter::once(&0.0).chain(mu.atoms.iter()).chain(nu.atoms.iter()) {
        let excess = mu.tail_integral(c) - nu.tail_integral(c);
        if excess > worst {
            worst = excess;
            witness = Some(c);
        }
    }
    let holds = worst <= tol;
    OrderCheck { holds, witness: if holds { None } else { witness }, excess: worst.max(0.0) }
}

/// Signed measure with finitely many atoms in `[0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedAtoms {
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SignedAtoms {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if atoms.len() != weights.len() {
            return Err(MeasureError::LengthMismatch(atoms.len(), weights.len()));
        }
        if let Some(&a) = atoms.iter().find(|a| !a.is_finite() || **a < 0.0) {
            return Err(MeasureError::BadAtom(a));
        }
        if let Some(&w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(MeasureError::BadWeight(w));
        }
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = SignedAtoms { atoms: Vec::new(), weights: Vec::new() };
        for (a, w) in pairs {
            match out.atoms.last() {
                Some(&last) if a - last <= MERGE_TOL => *out.weights.last_mut().unwrap() += w,
                _ => {
                    out.atoms.push(a);
                    out.weights.push(w);
                }
            }
        }
        Ok(out)
    }

    /// `mu - nu` for two probability measures.
    pub fn difference(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Self {
        let atoms = mu.atoms.iter().chain(&nu.atoms).copied().collect();
        let weights = mu.weights.iter().copied().chain(nu.weights.iter().map(|w| -w)).collect();
        SignedAtoms::new(atoms, weights).expect("atoms come from valid measures")
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(&a, &w)| w * f(a)).sum()
    }

    /// Nodes for the dual program: zero followed by the atoms.
    fn nodes(&self) -> (Vec<f64>, Vec<f64>) {
        let mut nodes = vec![0.0];
        let mut mass = vec![0.0];
        for (&a, &w) in self.atoms.iter().zip(&self.weights) {
            if a <= MERGE_TOL {
                mass[0] += w;
            } else {
                nodes.push(a);
                mass.push(w);
            }
        }
        (nodes, mass)
    }
}

/// Kantorovich-Rubinstein norm with reference point 0:
/// `sup { int chi dnu : |chi(0)| <= 1, Lip(chi) <= 1 }`, solved as a linear
/// program over the values of `chi` at the atoms.
pub fn kr_norm(nu: &SignedAtoms) -> Result<f64, MeasureError> {
    let (nodes, mass) = nu.nodes();
    let n = nodes.len();
    // chi(x_k) = d_k - (1 + x_k) with d_k >= 0
    let mut lp = LinearProgram::maximize(mass.clone());
    lp.add(vec![(0, 1.0)], Relation::Le, 2.0);
    for k in 0..n - 1 {
        let gap = nodes[k + 1] - nodes[k];
        lp.add(vec![(k + 1, 1.0), (k, -1.0)], Relation::Le, 2.0 * gap);
        lp.add(vec![(k, 1.0), (k + 1, -1.0)], Relation::Le, 0.0);
    }
    let sol = lp.solve()?;
    let shift: f64 = nodes.iter().zip(&mass).map(|(x, w)| w * (1.0 + x)).sum();
    Ok(sol.objective - shift)
}

/// `|nu(R)| + int_0^inf |nu((x, inf))| dx`, the closed form of [`kr_norm`] in one dimension.
pub fn kr_norm_closed_form(nu: &SignedAtoms) -> f64 {
    let (nodes, mass) = nu.nodes();
    let mut tail: f64 = mass.iter().sum();
    let mut total = tail.abs();
    for k in 0..nodes.len() - 1 {
        tail -= mass[k];
        total += tail.abs() * (nodes[k + 1] - nodes[k]);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MatrixAtomsSpec {
    dim: usize,
    atoms: Vec<Vec<Vec<f64>>>,
    weights: Vec<f64>,
}

/// Probability measure with finitely many symmetric PSD matrix atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixAtomsSpec", into = "MatrixAtomsSpec")]
pub struct MatrixAtomsMeasure {
    dim: usize,
    atoms: Vec<DMatrix<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<MatrixAtomsSpec> for MatrixAtomsMeasure {
    type Error = MeasureError;
    fn try_from(s: MatrixAtomsSpec) -> Result<Self, MeasureError> {
        let dim = s.dim;
        let mut atoms = Vec::with_capacity(s.atoms.len());
        for rows in s.atoms {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(MeasureError::NotPsd { dim });
            }
            atoms.push(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]));
        }
        MatrixAtomsMeasure::new(dim, atoms, s.weights)
    }
}

impl From<MatrixAtomsMeasure> for MatrixAtomsSpec {
    fn from(m: MatrixAtomsMeasure) -> Self {
        let atoms = m
            .atoms
            .iter()
            .map(|a| (0..m.dim).map(|i| (0..m.dim).map(|j| a[(i, j)]).collect()).collect())
            .collect();
        MatrixAtomsSpec { dim: m.dim, atoms, weights: m.weights }
    }
}

/// True when `a` is symmetric with smallest eigenvalue above `-tol`.
pub fn is_psd(a: &DMatrix<f64>, tol: f64) -> bool {
    if !a.is_square() || a.iter().any(|x| !x.is_finite()) {
        return false;
    }
    if (a - a.transpose()).amax() > tol {
        return false;
    }
    a.clone().symmetric_eigenvalues().iter().all(|&l| l >= -tol)
}

/// Loewner comparability of two symmetric matrices.
pub fn loewner_comparable(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    let d = a - b;
    is_psd(&d, tol) || is_psd(&(-d), tol)
}

impl MatrixAtomsMeasure {
    pub fn new(dim: usize, atoms: Vec<DMatrix<f64>>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if atoms.len() != weights.len() {
            return Err(MeasureError::LengthMismatch(atoms.len(), weights.len()));
        }
        if atoms.iter().any(|a| a.nrows() != dim || !is_psd(a, 1e-10)) {
            return Err(MeasureError::NotPsd { dim });
        }
        if let Some(&w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(MeasureError::BadWeight(w));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(MeasureError::BadMass(total));
        }
        let mut out = MatrixAtomsMeasure { dim, atoms: Vec::new(), weights: Vec::new() };
        for (a, w) in atoms.into_iter().zip(weights) {
            if w <= 0.0 {
                continue;
            }
            match out.atoms.iter().position(|b| (b - &a).amax() <= MERGE_TOL) {
                Some(i) => out.weights[i] += w,
                None => {
                    out.atoms.push(a);
                    out.weights.push(w);
                }
            }
        }
        if out.atoms.is_empty() {
            return Err(MeasureError::Empty);
        }
        let total: f64 = out.weights.iter().sum();
        for w in &mut out.weights {
            *w /= total;
        }
        Ok(out)
    }

    /// Embeds a scalar measure as `1x1` matrices.
    pub fn from_scalar(mu: &DiscreteMeasure) -> Self {
        let atoms = mu.atoms().iter().map(|&a| DMatrix::from_element(1, 1, a)).collect();
        MatrixAtomsMeasure::new(1, atoms, mu.weights().to_vec()).expect("valid scalar measure")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[DMatrix<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, f: impl Fn(&DMatrix<f64>) -> f64) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(a, &w)| w * f(a)).sum()
    }

    /// Every pair of atoms is comparable in the Loewner order.
    pub fn is_monotone_support(&self) -> bool {
        let n = self.atoms.len();
        (0..n).all(|i| (i + 1..n).all(|j| loewner_comparable(&self.atoms[i], &self.atoms[j], 1e-12)))
    }

    pub fn mixture(parts: &[(f64, &MatrixAtomsMeasure)]) -> Result<Self, MeasureError> {
        let dim = parts.first().map(|p| p.1.dim).ok_or(MeasureError::Empty)?;
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (lambda, mu) in parts {
            if mu.dim != dim {
                return Err(MeasureError::IncomparableTypes(dim, mu.dim));
            }
            atoms.extend(mu.atoms.iter().cloned());
            weights.extend(mu.weights.iter().map(|w| w * lambda));
        }
        MatrixAtomsMeasure::new(dim, atoms, weights)
    }
}

/// Wasserstein-1 distance with Frobenius ground cost, by a transport program.
pub fn matrix_w1(mu: &MatrixAtomsMeasure, nu: &MatrixAtomsMeasure) -> Result<f64, MeasureError> {
    if mu.dim != nu.dim {
        return Err(MeasureError::IncomparableTypes(mu.dim, nu.dim));
    }
    let (a, b) = (mu.atoms.len(), nu.atoms.len());
    let cost: Vec<f64> =
        (0..a).flat_map(|i| (0..b).map(move |j| (i, j))).map(|(i, j)| (&mu.atoms[i] - &nu.atoms[j]).norm()).collect();
    let mut lp = LinearProgram::minimize(cost);
    for i in 0..a {
        lp.add((0..b).map(|j| (i * b + j, 1.0)).collect(), Relation::Eq, mu.weights[i]);
    }
    for j in 0..b {
        lp.add((0..a).map(|i| (i * b + j, 1.0)).collect(), Relation::Eq, nu.weights[j]);
    }
    Ok(lp.solve()?.objective.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form_merges_and_sorts() {
        let m = DiscreteMeasure::new(vec![0.5, 0.1, 0.5, 0.3], vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        assert_eq!(m.atoms(), &[0.1, 0.3, 0.5]);
        assert_eq!(m.weights(), &[0.25, 0.25, 0.5]);
        assert_eq!(m.cut_points(), vec![0.25, 0.5]);
        assert!(DiscreteMeasure::new(vec![0.1], vec![0.9]).is_err());
        assert!(DiscreteMeasure::new(vec![-0.1], vec![1.0]).is_err());
    }

    #[test]
    fn w1_known_values() {
        let a = DiscreteMeasure::dirac(0.2).unwrap();
        let b = DiscreteMeasure::dirac(0.7).unwrap();
        assert!((w1_distance(&a, &b) - 0.5).abs() < 1e-15);
        let c = DiscreteMeasure::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert!((w1_distance(&c, &DiscreteMeasure::dirac(0.5).unwrap()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cone_order() {
        let a = DiscreteMeasure::dirac(0.5).unwrap();
        let spread = DiscreteMeasure::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert!(measure_leq(&a, &spread, 0.0).holds);
        let back = measure_leq(&spread, &a, 0.0);
        assert!(!back.holds && back.witness.is_some());
    }

    #[test]
    fn kr_norm_examples() {
        let d = SignedAtoms::new(vec![0.0, 1.0], vec![1.0, -1.0]).unwrap();
        assert!((kr_norm(&d).unwrap() - 1.0).abs() < 1e-12);
        assert!((kr_norm_closed_form(&d) - 1.0).abs() < 1e-15);
        let e = SignedAtoms::new(vec![2.0], vec![1.0]).unwrap();
        assert!((kr_norm(&e).unwrap() - 3.0).abs() < 1e-12);
        let z = SignedAtoms::new(vec![0.4, 0.4], vec![0.5, -0.5]).unwrap();
        assert!(kr_norm(&z).unwrap().abs() < 1e-12);
    }

    #[test]
    fn matrix_measures() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let q = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let chain = MatrixAtomsMeasure::new(2, vec![p.clone(), i2.clone()], vec![0.5, 0.5]).unwrap();
        assert!(chain.is_monotone_support());
        let anti = MatrixAtomsMeasure::new(2, vec![p.clone(), q.clone()], vec![0.5, 0.5]).unwrap();
        assert!(!anti.is_monotone_support());
        let d = matrix_w1(&chain, &anti).unwrap();
        // move mass 1/2 from I to q at Frobenius distance 1
        assert!((d - 0.5).abs() < 1e-12);
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(MatrixAtomsMeasure::new(2, vec![neg], vec![1.0]).is_err());
    }
}
