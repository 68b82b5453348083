//! Hopf-Lax and Hopf formulas for `S_t chi(x) = sup_{y >= 0} chi(x + y) - t xi*(y/t)`
//! with piecewise-linear convex `chi`, the matrix analogue over a direction
//! set, and the finite-dimensional projections of quantile paths.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{measure_leq, DiscreteMeasure};
use crate::models::{MixtureModel, ModelError};
use crate::optimize::stream_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HopfError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("knots must start at 0 and increase strictly")]
    BadKnots,
    #[error("expected {expected} slopes, got {got}")]
    SlopeCount { expected: usize, got: usize },
    #[error("slopes must be finite and nonnegative")]
    NotMonotone,
    #[error("slopes decrease at piece {0}: function is not convex")]
    NotConvex(usize),
    #[error("function is not 1-Lipschitz (last slope {0})")]
    NotOneLipschitz(f64),
    #[error("sup form {sup} and Hopf form {hopf} differ by {diff:e}")]
    Mismatch { sup: f64, hopf: f64, diff: f64 },
    #[error("finite-dimensional routes disagree: {direct} vs {separable}")]
    SeparabilityViolation { direct: f64, separable: f64 },
    #[error("invalid path: {0}")]
    BadPath(String),
    #[error("empty direction set")]
    NoDirections,
    #[error("negative time {0}")]
    NegativeTime(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KnotsSlopes {
    knots: Vec<f64>,
    slopes: Vec<f64>,
}

/// Convex nondecreasing piecewise-linear function on `[0, inf)` with
/// `chi(0) = 0`; the last slope continues past the last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KnotsSlopes", into = "KnotsSlopes")]
pub struct PlConvexFn {
    knots: Vec<f64>,
    slopes: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<KnotsSlopes> for PlConvexFn {
    type Error = HopfError;
    fn try_from(k: KnotsSlopes) -> Result<Self, HopfError> {
        PlConvexFn::new(k.knots, k.slopes)
    }
}

impl From<PlConvexFn> for KnotsSlopes {
    fn from(f: PlConvexFn) -> Self {
        KnotsSlopes { knots: f.knots, slopes: f.slopes }
    }
}

impl PlConvexFn {
    pub fn new(knots: Vec<f64>, slopes: Vec<f64>) -> Result<Self, HopfError> {
        if knots.len() < 2 || knots[0] != 0.0 || knots.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(HopfError::BadKnots);
        }
        if slopes.len() != knots.len() - 1 {
            return Err(HopfError::SlopeCount { expected: knots.len() - 1, got: slopes.len() });
        }
        if slopes.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(HopfError::NotMonotone);
        }
        if let Some(i) = slopes.windows(2).position(|w| w[1] < w[0]) {
            return Err(HopfError::NotConvex(i + 1));
        }
        let mut values = vec![0.0];
        for i in 0..slopes.len() {
            let v = values[i] + slopes[i] * (knots[i + 1] - knots[i]);
            values.push(v);
        }
        Ok(PlConvexFn { knots, slopes, values })
    }

    /// `chi(x) = x`.
    pub fn identity() -> Self {
        PlConvexFn::new(vec![0.0, 1.0], vec![1.0]).expect("valid")
    }

    /// Equally spaced knots on `[0, x_max]`.
    pub fn uniform(x_max: f64, slopes: Vec<f64>) -> Result<Self, HopfError> {
        let m = slopes.len();
        let knots = (0..=m).map(|i| x_max * i as f64 / m as f64).collect();
        PlConvexFn::new(knots, slopes)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn last_slope(&self) -> f64 {
        *self.slopes.last().unwrap()
    }

    pub fn is_one_lipschitz(&self) -> bool {
        self.last_slope() <= 1.0 + 1e-12
    }

    fn piece(&self, x: f64) -> usize {
        match self.knots.binary_search_by(|k| k.total_cmp(&x)) {
            Ok(i) => i.min(self.slopes.len() - 1),
            Err(i) => i.saturating_sub(1).min(self.slopes.len() - 1),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let i = self.piece(x);
        self.values[i] + self.slopes[i] * (x - self.knots[i])
    }

    pub fn integrate(&self, mu: &DiscreteMeasure) -> f64 {
        mu.integrate(|x| self.eval(x))
    }

    /// Coefficients `c` with `chi(x) = sum_i c_i s_i`: the length of each piece below `x`.
    pub fn slope_weights(&self, x: f64) -> Vec<f64> {
        let m = self.slopes.len();
        (0..m)
            .map(|i| {
                let a = self.knots[i];
                let b = if i + 1 == m { f64::INFINITY } else { self.knots[i + 1] };
                (x.min(b) - a).max(0.0)
            })
            .collect()
    }

    /// Legendre conjugate on `[0, last slope]`.
    pub fn conjugate(&self) -> PlConjugate {
        let mut breaks = vec![0.0];
        let mut values = vec![0.0];
        for (i, &s) in self.slopes.iter().enumerate() {
            // on [s_i, s_{i+1}] the supremum sits at knot i
            let v = self.knots[i] * s - self.values[i];
            if s > *breaks.last().unwrap() {
                breaks.push(s);
                values.push(v);
            } else {
                *values.last_mut().unwrap() = v.max(*values.last().unwrap());
            }
        }
        PlConjugate { breaks, values }
    }
}

/// Conjugate of a [`PlConvexFn`]: piecewise linear on its breakpoints,
/// `+inf` beyond the last one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlConjugate {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl PlConjugate {
    pub fn domain_max(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    pub fn eval(&self, y: f64) -> f64 {
        if y < 0.0 || y > self.domain_max() + 1e-15 {
            return f64::INFINITY;
        }
        let i = self.breaks.partition_point(|&b| b <= y);
        if i == 0 {
            return self.values[0];
        }
        if i >= self.breaks.len() {
            return *self.values.last().unwrap();
        }
        let (b0, b1) = (self.breaks[i - 1], self.breaks[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (v1 - v0) * (y - b0) / (b1 - b0)
    }

    /// `sup_y (x y - chi*(y))`, which equals `chi(x)` for `x >= 0`.
    pub fn biconjugate(&self, x: f64) -> f64 {
        self.breaks.iter().zip(&self.values).map(|(y, v)| x * y - v).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_time(t: f64) -> Result<(), HopfError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(HopfError::NegativeTime(t));
    }
    Ok(())
}

/// `S_t chi(x)` from its defining supremum: a 512-point scan of the search
/// window followed by golden-section refinement on every linear piece, where
/// the objective is concave.
pub fn s_t_sup(model: &MixtureModel, t: f64, chi: &PlConvexFn, x: f64) -> Result<f64, HopfError> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(chi.eval(x));
    }
    let objective = |y: f64| -> Result<f64, HopfError> { Ok(chi.eval(x + y) - model.scaled_conjugate(y, t)?) };
    // every piece's maximiser lies below t xi'(slope) <= t xi'(last slope)
    let window = 2.0 * t * model.xi_prime(chi.last_slope().max(1e-3)) + 1e-9;
    let mut best = objective(0.0)?;
    for i in 1..=512 {
        best = best.max(objective(window * i as f64 / 512.0)?);
    }
    let mut cuts = vec![0.0];
    cuts.extend(chi.knots().iter().map(|k| k - x).filter(|&c| c > 0.0 && c < window));
    cuts.push(window);
    for seg in cuts.windows(2) {
        best = best.max(golden_max(&objective, seg[0], seg[1])?);
    }
    Ok(best)
}

fn golden_max(f: &dyn Fn(f64) -> Result<f64, HopfError>, mut a: f64, mut b: f64) -> Result<f64, HopfError> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut best = f(a)?.max(f(b)?);
    while b - a > 1e-13 * (1.0 + b.abs()) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
        best = best.max(fc).max(fd);
    }
    Ok(best)
}

/// `S_t chi(x)` with its maximiser, solved in closed form on each linear piece:
/// the stationary point of `s y - t xi*(y/t)` is `y = t xi'(s)`.
pub fn hopf_lax_point(model: &MixtureModel, t: f64, chi: &PlConvexFn, x: f64) -> Result<(f64, f64), HopfError> {
    check_time(t)?;
    if t == 0.0 {
        return Ok((chi.eval(x), 0.0));
    }
    let m = chi.slopes().len();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..m {
        let a = (chi.knots()[i] - x).max(0.0);
        let b = if i + 1 == m { f64::INFINITY } else { chi.knots()[i + 1] - x };
        if b < a {
            continue;
        }
        let s = chi.slopes()[i];
        let y = if s > 0.0 { (t * model.xi_prime(s)).clamp(a, b) } else { a };
        let v = chi.eval(x + y) - model.scaled_conjugate(y, t)?;
        if v > best.0 {
            best = (v, y);
        }
    }
    Ok(best)
}

/// `S_t chi(x) = sup_y (x y - chi*(y) + t xi(y))`. On each piece of `chi*`
/// the objective is convex, so the supremum is attained at a breakpoint.
pub fn s_t_hopf(model: &MixtureModel, t: f64, chi: &PlConvexFn, x: f64) -> Result<f64, HopfError> {
    check_time(t)?;
    let conj = chi.conjugate();
    Ok(conj.breaks.iter().zip(&conj.values).map(|(&y, &v)| x * y - v + t * model.xi(y)).fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HopfComparison {
    pub sup_form: f64,
    pub hopf_form: f64,
    pub diff: f64,
}

/// Evaluates both forms and fails when they differ by more than `tol`.
pub fn hopf_identity_check(
    model: &MixtureModel,
    t: f64,
    chi: &PlConvexFn,
    x: f64,
    tol: f64,
) -> Result<HopfComparison, HopfError> {
    let sup_form = s_t_sup(model, t, chi, x)?;
    let hopf_form = s_t_hopf(model, t, chi, x)?;
    let diff = (sup_form - hopf_form).abs();
    if diff > tol {
        return Err(HopfError::Mismatch { sup: sup_form, hopf: hopf_form, diff });
    }
    Ok(HopfComparison { sup_form, hopf_form, diff })
}

/// `max over y in directions of chi(x + t grad xi(y)) - t theta(y)`, returning
/// the value and the index of the maximising direction.
pub fn tilde_s_t(
    model: &MixtureModel,
    t: f64,
    chi: &dyn Fn(&DMatrix<f64>) -> f64,
    x: &DMatrix<f64>,
    directions: &[DMatrix<f64>],
) -> Result<(f64, usize), HopfError> {
    check_time(t)?;
    if directions.is_empty() {
        return Err(HopfError::NoDirections);
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, y) in directions.iter().enumerate() {
        let point = x + model.grad_matrix(y)? * t;
        let v = chi(&point) - t * model.theta_matrix(y)?;
        if v > best.0 {
            best = (v, i);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HjDimValues {
    /// `(1/j) sum_i S_t chi(x_i)` through the supremum form.
    pub direct: f64,
    /// The `j`-dimensional Hopf formula, maximised coordinate by coordinate.
    pub separable: f64,
}

/// Hopf formula for `phi_j(x) = (1/j) sum chi(x_i)` and `H_j(y) = (1/j) sum xi(j y_i)`
/// at a point of `R^j`, compared with the scalar Hopf-Lax value.
pub fn hj_finite_dim(model: &MixtureModel, t: f64, chi: &PlConvexFn, x: &[f64]) -> Result<HjDimValues, HopfError> {
    check_time(t)?;
    if x.is_empty() {
        return Err(HopfError::BadPath("empty point".into()));
    }
    let j = x.len() as f64;
    let mut direct = 0.0;
    for &xi in x {
        direct += s_t_sup(model, t, chi, xi)?;
    }
    direct /= j;
    // sup_y <x, y> - phi_j*(y) + t H_j(y) with phi_j*(y) = (1/j) sum chi*(j y_i);
    // the objective separates and is convex between the points y_i = b / j
    let conj = chi.conjugate();
    let mut separable = 0.0;
    for &xi in x {
        let mut best = f64::NEG_INFINITY;
        for (&b, &v) in conj.breaks.iter().zip(&conj.values) {
            let y = b / j;
            best = best.max(xi * y - v / j + t * model.xi(j * y) / j);
        }
        separable += best;
    }
    if (direct - separable).abs() > 1e-8 {
        return Err(HopfError::SeparabilityViolation { direct, separable });
    }
    Ok(HjDimValues { direct, separable })
}

/// Path on `[0, 1)` that is linear on each cell `[cuts_k, cuts_{k+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearPath {
    cuts: Vec<f64>,
    starts: Vec<f64>,
    ends: Vec<f64>,
}

impl PiecewiseLinearPath {
    pub fn new(cuts: Vec<f64>, starts: Vec<f64>, ends: Vec<f64>) -> Result<Self, HopfError> {
        let n = cuts.len();
        if n < 2 || cuts[0] != 0.0 || cuts[n - 1] != 1.0 || cuts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(HopfError::BadPath("cuts must increase from 0 to 1".into()));
        }
        if starts.len() != n - 1 || ends.len() != n - 1 {
            return Err(HopfError::BadPath("one start and end value per cell".into()));
        }
        Ok(PiecewiseLinearPath { cuts, starts, ends })
    }

    /// `q(u) = u`.
    pub fn identity() -> Self {
        PiecewiseLinearPath { cuts: vec![0.0, 1.0], starts: vec![0.0], ends: vec![1.0] }
    }

    pub fn step(cuts: Vec<f64>, values: Vec<f64>) -> Result<Self, HopfError> {
        PiecewiseLinearPath::new(cuts, values.clone(), values)
    }

    /// Quantile path of a measure.
    pub fn from_measure(mu: &DiscreteMeasure) -> Self {
        let mut cuts = vec![0.0];
        cuts.extend(mu.cut_points());
        cuts.push(1.0);
        PiecewiseLinearPath::step(cuts, mu.atoms().to_vec()).expect("quantile path is valid")
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    fn coeffs(&self, k: usize) -> (f64, f64) {
        let (a, b) = (self.cuts[k], self.cuts[k + 1]);
        let slope = (self.ends[k] - self.starts[k]) / (b - a);
        (self.starts[k] - slope * a, slope)
    }

    pub fn value(&self, u: f64) -> f64 {
        let k = self.cuts.partition_point(|&c| c <= u).clamp(1, self.cuts.len() - 1) - 1;
        let (c0, c1) = self.coeffs(k);
        c0 + c1 * u
    }

    /// `int_a^b q(u) du`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..self.starts.len() {
            let lo = a.max(self.cuts[k]);
            let hi = b.min(self.cuts[k + 1]);
            if hi > lo {
                let (c0, c1) = self.coeffs(k);
                total += c0 * (hi - lo) + 0.5 * c1 * (hi * hi - lo * lo);
            }
        }
        total
    }

    fn merged_cuts(&self, other: &PiecewiseLinearPath) -> Vec<f64> {
        let mut cuts: Vec<f64> = self.cuts.iter().chain(&other.cuts).copied().collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts
    }

    fn cell_of(&self, mid: f64) -> usize {
        self.cuts.partition_point(|&c| c <= mid).clamp(1, self.cuts.len() - 1) - 1
    }

    /// `int_0^1 |q - r|`, exact for piecewise-linear paths.
    pub fn l1_distance(&self, other: &PiecewiseLinearPath) -> f64 {
        let mut total = 0.0;
        for w in self.merged_cuts(other).windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            let (p0, p1) = self.coeffs(self.cell_of(mid));
            let (r0, r1) = other.coeffs(other.cell_of(mid));
            let (d0, d1) = (p0 - r0, p1 - r1);
            let (fa, fb) = (d0 + d1 * a, d0 + d1 * b);
            total += if fa * fb >= 0.0 {
                0.5 * (fa.abs() + fb.abs()) * (b - a)
            } else {
                let root = -d0 / d1;
                0.5 * (fa.abs() * (root - a) + fb.abs() * (b - root))
            };
        }
        total
    }

    /// `int_0^1 q r`, exact for piecewise-linear paths.
    pub fn inner(&self, other: &PiecewiseLinearPath) -> f64 {
        let mut total = 0.0;
        for w in self.merged_cuts(other).windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            let (p0, p1) = self.coeffs(self.cell_of(mid));
            let (r0, r1) = other.coeffs(other.cell_of(mid));
            let i1 = b - a;
            let i2 = 0.5 * (b * b - a * a);
            let i3 = (b * b * b - a * a * a) / 3.0;
            total += p0 * r0 * i1 + (p0 * r1 + p1 * r0) * i2 + p1 * r1 * i3;
        }
        total
    }
}

/// Cell averages of a path over `j` equal cells.
pub fn project(path: &PiecewiseLinearPath, j: usize) -> Vec<f64> {
    (0..j).map(|i| j as f64 * path.integral(i as f64 / j as f64, (i + 1) as f64 / j as f64)).collect()
}

/// Step path taking the value `x_i` on the `i`-th of `j` equal cells.
pub fn lift(x: &[f64]) -> PiecewiseLinearPath {
    let j = x.len();
    let cuts = (0..=j).map(|i| i as f64 / j as f64).collect();
    PiecewiseLinearPath::step(cuts, x.to_vec()).expect("equal cells are valid")
}

/// `<x, y>_j = (1/j) sum x_i y_i`.
pub fn inner_j(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / x.len() as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneViolation {
    pub lower: DiscreteMeasure,
    pub upper: DiscreteMeasure,
    /// `int chi dlower - int chi dupper`, positive when monotonicity fails.
    pub excess: f64,
}

/// Checks `int chi dmu <= int chi dnu` on every ordered pair `mu <= nu`.
pub fn monotone_functional_check(
    chi: &dyn Fn(f64) -> f64,
    pairs: &[(DiscreteMeasure, DiscreteMeasure)],
    tol: f64,
) -> Vec<MonotoneViolation> {
    pairs
        .iter()
        .filter(|(a, b)| measure_leq(a, b, 0.0).holds)
        .filter_map(|(a, b)| {
            let excess = a.integrate(chi) - b.integrate(chi);
            (excess > tol).then(|| MonotoneViolation { lower: a.clone(), upper: b.clone(), excess })
        })
        .collect()
}

/// Random search for an ordered pair on which `mu -> int chi dmu` decreases.
pub fn find_monotonicity_counterexample(
    chi: &dyn Fn(f64) -> f64,
    q_max: f64,
    trials: usize,
    seed: u64,
) -> Option<MonotoneViolation> {
    let mut rng = stream_rng(seed, &[0x6d6f6e6f]);
    for _ in 0..trials {
        let k = rng.random_range(1..=3);
        let atoms: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * q_max).collect();
        let weights: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
        let Ok(lower) = DiscreteMeasure::normalized(atoms.clone(), weights.clone()) else { continue };
        // shift every atom up: always above in the cone order
        let shifted: Vec<f64> = atoms.iter().map(|a| a + rng.random::<f64>() * q_max * 0.5).collect();
        let Ok(upper) = DiscreteMeasure::normalized(shifted, weights) else { continue };
        let excess = lower.integrate(chi) - upper.integrate(chi);
        if excess > 1e-12 {
            return Some(MonotoneViolation { lower, upper, excess });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_hopf_lax() {
        let m = MixtureModel::sk();
        let chi = PlConvexFn::identity();
        for &t in &[0.0, 0.3, 1.0] {
            for &x in &[0.0, 0.4, 2.0] {
                assert!((s_t_hopf(&m, t, &chi, x).unwrap() - (x + t)).abs() < 1e-14);
                assert!((s_t_sup(&m, t, &chi, x).unwrap() - (x + t)).abs() < 1e-12);
                assert!((hopf_lax_point(&m, t, &chi, x).unwrap().0 - (x + t)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn conjugate_round_trip() {
        let chi = PlConvexFn::new(vec![0.0, 0.3, 0.8, 1.5], vec![0.1, 0.4, 0.9]).unwrap();
        let c = chi.conjugate();
        for &x in &[0.0, 0.1, 0.3, 0.55, 0.8, 1.2, 1.5, 3.0] {
            assert!((c.biconjugate(x) - chi.eval(x)).abs() < 1e-14, "x = {x}");
        }
        assert_eq!(c.eval(0.05), 0.0);
        assert!(c.eval(0.95).is_infinite());
        assert!(matches!(PlConvexFn::new(vec![0.0, 1.0, 2.0], vec![0.5, 0.2]), Err(HopfError::NotConvex(1))));
    }

    #[test]
    fn lift_project_identities() {
        let q = PiecewiseLinearPath::identity();
        let j = 8;
        let p = project(&q, j);
        for (i, v) in p.iter().enumerate() {
            assert!((v - (2 * i + 1) as f64 / (2 * j) as f64).abs() < 1e-15);
        }
        assert!((lift(&p).l1_distance(&q) - 1.0 / (4.0 * j as f64)).abs() < 1e-15);
        let x = [0.3, 0.1, 0.7];
        assert_eq!(project(&lift(&x), 3), x.to_vec());
    }

    #[test]
    fn slope_weights_reproduce_values() {
        let chi = PlConvexFn::new(vec![0.0, 0.5, 1.0], vec![0.2, 0.6]).unwrap();
        for &x in &[0.0, 0.25, 0.7, 2.0] {
            let w = chi.slope_weights(x);
            let v: f64 = w.iter().zip(chi.slopes()).map(|(a, b)| a * b).sum();
            assert!((v - chi.eval(x)).abs() < 1e-15);
        }
    }
}
