//! Two-sided bounds on the limiting free energy at the base measure `delta_0`.
//!
//! Lower side: `L(nu) = psi(nu) - t int xi*(x/t) dnu`, maximised over measures
//! with a fixed number of atoms. Upper side: `U(chi) = S_t chi(0) - psi_*(chi)`,
//! minimised over convex piecewise-linear `chi`, with `psi_*` replaced by its
//! minimum over a finite family of measures whose `psi` values are known.
//!
//! For every `nu` in the family and every `chi`, `L(nu) <= U(chi)`, because
//! `S_t chi(0) >= chi(y) - t xi*(y/t)` at every atom `y` of `nu`. The family
//! minimum is never below the true `psi_*`, so `U` computed this way is the
//! upper bound of the problem restricted to mixtures of family members.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hopf::{hopf_lax_point, tilde_s_t, HopfError, PlConvexFn};
use crate::lp::{LinearProgram, LpError, Relation};
use crate::measures::{DiscreteMeasure, MatrixAtomsMeasure, MeasureError};
use crate::models::{MixtureModel, ModelError};
use crate::optimize::{compass_minimize, stream_rng, CompassOptions};
use crate::parisi::{decode_measure, ParisiError, PsiEvaluator, PsiOptions};

#[derive(Debug, Error)]
pub enum DualityError {
    #[error(transparent)]
    Parisi(#[from] ParisiError),
    #[error(transparent)]
    Hopf(#[from] HopfError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("empty psi family")]
    EmptyFamily,
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("psi oracle rejected a measure: {0}")]
    OracleDomain(String),
    #[error("no convergence after {} outer iterations; best bracket [{}, {}]", .0.iterations, .0.lower, .0.upper)]
    NonConvergence(Box<SolverReport>),
}

/// Measures with known `psi` values.
#[derive(Debug, Clone, Default)]
pub struct PsiFamily {
    members: Vec<(DiscreteMeasure, f64)>,
}

impl PsiFamily {
    pub fn new() -> Self {
        PsiFamily::default()
    }

    pub fn push(&mut self, mu: DiscreteMeasure, psi: f64) {
        self.members.push((mu, psi));
    }

    pub fn evaluate(evaluator: &PsiEvaluator, measures: &[DiscreteMeasure]) -> Result<Self, ParisiError> {
        let mut f = PsiFamily::new();
        for mu in measures {
            f.push(mu.clone(), evaluator.psi(mu)?);
        }
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[(DiscreteMeasure, f64)] {
        &self.members
    }

    pub fn extend(&mut self, other: PsiFamily) {
        self.members.extend(other.members);
    }

    /// `min over members of (int chi dmu - psi(mu))` with the minimising index.
    pub fn star(&self, chi: &PlConvexFn) -> Result<(f64, usize), DualityError> {
        self.members
            .iter()
            .enumerate()
            .map(|(i, (mu, p))| (chi.integrate(mu) - p, i))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .ok_or(DualityError::EmptyFamily)
    }
}

/// `t int xi*(x/t) dnu`.
pub fn entropy_cost(model: &MixtureModel, t: f64, nu: &DiscreteMeasure) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (&q, &w) in nu.atoms().iter().zip(nu.weights()) {
        total += w * model.scaled_conjugate(q, t)?;
    }
    Ok(total)
}

/// `psi(nu) - t int xi*(x/t) dnu`, a lower bound on the limit for every `nu`.
pub fn eval_lower(model: &MixtureModel, t: f64, nu: &DiscreteMeasure, opts: &PsiOptions) -> Result<f64, DualityError> {
    let eval = PsiEvaluator::new(model, *opts)?;
    Ok(eval.psi(nu)? - entropy_cost(model, t, nu)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct UpperValue {
    pub value: f64,
    /// `S_t chi(0)`.
    pub hopf_lax: f64,
    /// Family minimum of `int chi dmu - psi(mu)`.
    pub psi_star: f64,
    pub argmin: usize,
}

/// `S_t chi(0) - min over the family of (int chi dmu - psi(mu))`.
pub fn eval_upper(model: &MixtureModel, t: f64, chi: &PlConvexFn, family: &PsiFamily) -> Result<UpperValue, DualityError> {
    let (hopf_lax, _) = hopf_lax_point(model, t, chi, 0.0)?;
    let (psi_star, argmin) = family.star(chi)?;
    Ok(UpperValue { value: hopf_lax - psi_star, hopf_lax, psi_star, argmin })
}

/// Minimises `eval_upper` over `chi` with the given knots and slopes in
/// `[0, 1]`, by cutting planes: the objective is a maximum of functions that
/// are affine in the slopes.
pub fn solve_upper(
    model: &MixtureModel,
    t: f64,
    family: &PsiFamily,
    knots: &[f64],
    tol: f64,
) -> Result<(PlConvexFn, UpperValue), DualityError> {
    minimize_over_slopes(Leading::HopfLax(model, t), family, knots, tol)
}

/// First term of the objective: `S_t chi(0)` or `int chi dmu`.
enum Leading<'a> {
    HopfLax(&'a MixtureModel, f64),
    Integral(&'a DiscreteMeasure),
}

fn integral_weights(template: &PlConvexFn, mu: &DiscreteMeasure) -> Vec<f64> {
    let mut w = vec![0.0; template.slopes().len()];
    for (&a, &wt) in mu.atoms().iter().zip(mu.weights()) {
        for (acc, c) in w.iter_mut().zip(template.slope_weights(a)) {
            *acc += wt * c;
        }
    }
    w
}

fn minimize_over_slopes(
    leading: Leading<'_>,
    family: &PsiFamily,
    knots: &[f64],
    tol: f64,
) -> Result<(PlConvexFn, UpperValue), DualityError> {
    if family.is_empty() {
        return Err(DualityError::EmptyFamily);
    }
    if knots.len() < 2 {
        return Err(DualityError::InvalidOption("need at least one linear piece".into()));
    }
    let m = knots.len() - 1;
    let (s_var, r_var) = (m, m + 1);
    let mut objective = vec![0.0; m + 2];
    objective[s_var] = 1.0;
    objective[r_var] = 1.0;
    let mut lp = LinearProgram::minimize(objective);
    lp.set_free(r_var);
    for i in 0..m - 1 {
        lp.add(vec![(i, 1.0), (i + 1, -1.0)], Relation::Le, 0.0);
    }
    lp.add(vec![(m - 1, 1.0)], Relation::Le, 1.0);
    let template = PlConvexFn::new(knots.to_vec(), vec![0.0; m])?;
    let sparse = |w: &[f64], sign: f64| -> Vec<(usize, f64)> {
        w.iter().enumerate().filter(|p| *p.1 != 0.0).map(|(i, &c)| (i, sign * c)).collect()
    };
    let add_cut = |lp: &mut LinearProgram, model: &MixtureModel, t: f64, y: f64| -> Result<(), DualityError> {
        let mut row = sparse(&template.slope_weights(y), -1.0);
        row.push((s_var, 1.0));
        lp.add(row, Relation::Ge, -model.scaled_conjugate(y, t)?);
        Ok(())
    };
    let add_member = |lp: &mut LinearProgram, idx: usize| {
        let (mu, p) = &family.members[idx];
        let mut row = sparse(&integral_weights(&template, mu), 1.0);
        row.push((r_var, 1.0));
        lp.add(row, Relation::Ge, *p);
    };
    match leading {
        Leading::HopfLax(model, t) => {
            for k in 0..=10 {
                add_cut(&mut lp, model, t, t * model.xi_prime(k as f64 / 10.0))?;
            }
        }
        Leading::Integral(mu) => {
            let mut row = sparse(&integral_weights(&template, mu), -1.0);
            row.push((s_var, 1.0));
            lp.add(row, Relation::Eq, 0.0);
        }
    }
    let mut order: Vec<usize> = (0..family.len()).collect();
    order.sort_by(|&a, &b| family.members[b].1.total_cmp(&family.members[a].1));
    let mut in_lp = vec![false; family.len()];
    for &i in order.iter().take(8) {
        add_member(&mut lp, i);
        in_lp[i] = true;
    }
    let mut best: Option<(PlConvexFn, UpperValue)> = None;
    for _ in 0..1000 {
        let sol = lp.solve()?;
        let mut slopes: Vec<f64> = (0..m).map(|i| sol.x[i].clamp(0.0, 1.0)).collect();
        for i in 1..m {
            slopes[i] = slopes[i].max(slopes[i - 1]);
        }
        let chi = PlConvexFn::new(knots.to_vec(), slopes)?;
        let (lead, y_star) = match leading {
            Leading::HopfLax(model, t) => hopf_lax_point(model, t, &chi, 0.0)?,
            Leading::Integral(mu) => (chi.integrate(mu), f64::NAN),
        };
        let (ps, argmin) = family.star(&chi)?;
        let value = lead - ps;
        if best.as_ref().is_none_or(|b| value < b.1.value) {
            best = Some((chi, UpperValue { value, hopf_lax: lead, psi_star: ps, argmin }));
        }
        if best.as_ref().unwrap().1.value - sol.objective <= tol {
            break;
        }
        let mut added = false;
        if let Leading::HopfLax(model, t) = leading {
            if lead > sol.x[s_var] + 1e-12 {
                add_cut(&mut lp, model, t, y_star)?;
                added = true;
            }
        }
        if -ps > sol.x[r_var] + 1e-12 && !in_lp[argmin] {
            add_member(&mut lp, argmin);
            in_lp[argmin] = true;
            added = true;
        }
        if !added {
            break;
        }
    }
    Ok(best.expect("at least one iteration"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GapOptions {
    /// Largest number of atoms of the lower-side measures.
    pub atoms: usize,
    /// Number of linear pieces of `chi` on the upper side.
    pub knots: usize,
    pub multistarts: usize,
    pub seed: u64,
    pub tol: f64,
    /// Refresh rounds of the family around the upper-side minimiser.
    pub max_outer: usize,
    pub max_evals: usize,
    /// Points per axis of the fixed family lattice.
    pub lattice: usize,
    pub psi: PsiOptions,
}

impl Default for GapOptions {
    fn default() -> Self {
        GapOptions {
            atoms: 4,
            knots: 64,
            multistarts: 8,
            seed: 0,
            tol: 1e-9,
            max_outer: 3,
            max_evals: 2500,
            lattice: 9,
            psi: PsiOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
    pub family: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    pub t: f64,
    pub lower: f64,
    pub lower_argmax: DiscreteMeasure,
    pub upper: f64,
    pub upper_argmin: PlConvexFn,
    pub gap: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    pub tol: f64,
    /// The upper value uses a family minimum in place of `psi_*`.
    pub psi_star_family_bound: bool,
    pub family_size: usize,
    pub trace: Vec<TraceRow>,
}

impl SolverReport {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Right end of the support of candidate measures: `t xi'(max |sigma|^2)`.
pub fn support_bound(model: &MixtureModel, t: f64) -> f64 {
    t * model.xi_prime(model.self_overlap_max())
}

struct Recorder<'a> {
    eval: &'a PsiEvaluator,
    model: &'a MixtureModel,
    t: f64,
    family: PsiFamily,
    best: (f64, DiscreteMeasure),
}

impl Recorder<'_> {
    fn lower(&mut self, mu: &DiscreteMeasure) -> Result<f64, DualityError> {
        let p = self.eval.psi(mu)?;
        let v = p - entropy_cost(self.model, self.t, mu)?;
        self.family.push(mu.clone(), p);
        let better = v > self.best.0 + 1e-14 || (v >= self.best.0 - 1e-14 && mu.len() < self.best.1.len());
        if better {
            self.best = (v, mu.clone());
        }
        Ok(v)
    }
}

fn lattice_measures(x_max: f64, n: usize) -> Result<Vec<DiscreteMeasure>, MeasureError> {
    let grid: Vec<f64> = (0..n).map(|i| x_max * i as f64 / (n - 1) as f64).collect();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                for w in [[1.0, 1.0, 1.0], [2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]] {
                    out.push(DiscreteMeasure::normalized(vec![grid[i], grid[j], grid[k]], w.to_vec())?);
                }
            }
        }
    }
    for k in 0..=4 * (n - 1) {
        out.push(DiscreteMeasure::dirac(x_max * k as f64 / (4 * (n - 1)) as f64)?);
    }
    Ok(out)
}

/// Brackets the limiting free energy at temperature parameter `t`.
pub fn solve_gap(model: &MixtureModel, t: f64, opts: &GapOptions) -> Result<SolverReport, DualityError> {
    if !(t >= 0.0) || opts.atoms == 0 || opts.knots == 0 || opts.lattice < 3 {
        return Err(DualityError::InvalidOption("need t >= 0, atoms >= 1, knots >= 1, lattice >= 3".into()));
    }
    let eval = PsiEvaluator::new(model, opts.psi)?;
    let x_max = support_bound(model, t);
    let zero = DiscreteMeasure::dirac(0.0)?;
    if x_max <= 0.0 {
        let chi = PlConvexFn::identity();
        return Ok(SolverReport {
            t,
            lower: 0.0,
            lower_argmax: zero,
            upper: 0.0,
            upper_argmin: chi,
            gap: 0.0,
            iterations: 0,
            restarts: 0,
            seed: opts.seed,
            tol: opts.tol,
            psi_star_family_bound: true,
            family_size: 1,
            trace: Vec::new(),
        });
    }
    let mut rec = Recorder { eval: &eval, model, t, family: PsiFamily::new(), best: (f64::NEG_INFINITY, zero.clone()) };
    rec.lower(&zero)?;
    let copts = CompassOptions { max_evals: opts.max_evals, ..CompassOptions::default() };
    let mut restarts = 0;
    for k in 1..=opts.atoms {
        let lo = vec![0.0; 2 * k];
        let mut hi = vec![x_max; k];
        hi.extend(std::iter::repeat_n(1.0, k));
        for start in 0..opts.multistarts.max(1) {
            let mut rng = stream_rng(opts.seed, &[k as u64, start as u64]);
            let mut x0: Vec<f64> = if start == 0 && k > 1 {
                // warm start from the best measure found so far plus a light atom
                let prev = rec.best.1.clone();
                let mut q: Vec<f64> = prev.atoms().to_vec();
                let mut w: Vec<f64> = prev.weights().to_vec();
                while q.len() < k {
                    q.push(rng.random::<f64>() * x_max);
                    w.push(0.05);
                }
                q.truncate(k);
                w.truncate(k);
                q.into_iter().chain(w).collect()
            } else {
                let mut v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * x_max).collect();
                v.extend((0..k).map(|_| 0.05 + rng.random::<f64>()));
                v
            };
            x0.truncate(2 * k);
            let mut failure = None;
            let mut f = |x: &[f64]| match decode_measure(x, k) {
                Ok(mu) => match rec.lower(&mu) {
                    Ok(v) => -v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::INFINITY
                    }
                },
                Err(_) => f64::INFINITY,
            };
            compass_minimize(&mut f, &x0, &lo, &hi, copts);
            if let Some(e) = failure {
                return Err(e);
            }
            restarts += 1;
        }
    }
    let lattice = PsiFamily::evaluate(&eval, &lattice_measures(x_max, opts.lattice)?)?;
    for (mu, _) in lattice.members() {
        rec.lower(mu)?;
    }

    let knots: Vec<f64> = (0..=opts.knots).map(|i| x_max * i as f64 / opts.knots as f64).collect();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut last_upper = f64::NAN;
    let mut converged = false;
    let mut upper = None;
    for outer in 0..=opts.max_outer {
        iterations = outer + 1;
        let (chi, u) = solve_upper(model, t, &rec.family, &knots, opts.tol)?;
        let lower = rec.best.0;
        trace.push(TraceRow { iteration: outer, lower, upper: u.value, gap: u.value - lower, family: rec.family.len() });
        let stable = (u.value - last_upper).abs() <= opts.tol.max(1e-9);
        last_upper = u.value;
        upper = Some((chi.clone(), u.clone()));
        if stable {
            converged = true;
            break;
        }
        if outer == opts.max_outer {
            break;
        }
        // refresh the family by descending int chi dmu - psi(mu) from the active member
        let start = rec.family.members()[u.argmin].0.clone();
        let k = opts.atoms;
        let mut q: Vec<f64> = start.atoms().to_vec();
        let mut w: Vec<f64> = start.weights().to_vec();
        let mut rng = stream_rng(opts.seed, &[0x7265_6672, outer as u64]);
        while q.len() < k {
            q.push(rng.random::<f64>() * x_max);
            w.push(0.02);
        }
        q.truncate(k);
        w.truncate(k);
        let x0: Vec<f64> = q.into_iter().chain(w).collect();
        let lo = vec![0.0; 2 * k];
        let mut hi = vec![x_max; k];
        hi.extend(std::iter::repeat_n(1.0, k));
        let mut failure = None;
        let mut f = |x: &[f64]| match decode_measure(x, k) {
            Ok(mu) => match rec.lower(&mu) {
                Ok(_) => {
                    let p = rec.family.members().last().unwrap().1;
                    chi.integrate(&mu) - p
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            },
            Err(_) => f64::INFINITY,
        };
        compass_minimize(&mut f, &x0, &lo, &hi, CompassOptions { max_evals: opts.max_evals / 2, ..copts });
        if let Some(e) = failure {
            return Err(e);
        }
    }
    let (chi, u) = upper.expect("at least one round");
    let report = SolverReport {
        t,
        lower: rec.best.0,
        lower_argmax: rec.best.1.clone(),
        upper: u.value,
        upper_argmin: chi,
        gap: u.value - rec.best.0,
        iterations,
        restarts,
        seed: opts.seed,
        tol: opts.tol,
        psi_star_family_bound: true,
        family_size: rec.family.len(),
        trace,
    };
    if !converged {
        return Err(DualityError::NonConvergence(Box::new(report)));
    }
    Ok(report)
}

/// Accepts a report whether or not the family refresh settled.
pub fn solve_gap_best_effort(model: &MixtureModel, t: f64, opts: &GapOptions) -> Result<SolverReport, DualityError> {
    match solve_gap(model, t, opts) {
        Err(DualityError::NonConvergence(r)) => Ok(*r),
        other => other,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundTrip {
    pub psi: f64,
    /// `min over chi of (int chi dmu - family minimum of (int chi dnu - psi(nu)))`.
    pub recovered: f64,
    pub chi: PlConvexFn,
    pub family_size: usize,
}

/// Recovers `psi(mu)` as the value at time zero of the upper formula with base
/// measure `mu`. The family contains `mu`, so `recovered >= psi` up to solver
/// tolerance; equality needs a rich enough family and knot set.
pub fn psi_roundtrip(model: &MixtureModel, mu: &DiscreteMeasure, x_max: f64, opts: &GapOptions) -> Result<RoundTrip, DualityError> {
    if !(x_max >= mu.max_atom()) || x_max <= 0.0 {
        return Err(DualityError::InvalidOption("x_max must cover the support of mu".into()));
    }
    let eval = PsiEvaluator::new(model, opts.psi)?;
    let psi = eval.psi(mu)?;
    let mut family = PsiFamily::evaluate(&eval, &lattice_measures(x_max, opts.lattice)?)?;
    family.push(mu.clone(), psi);
    let knots: Vec<f64> = (0..=opts.knots).map(|i| x_max * i as f64 / opts.knots as f64).collect();
    let k = mu.len().max(2);
    let mut last = f64::NAN;
    let mut result = None;
    for outer in 0..=opts.max_outer {
        let (chi, u) = minimize_over_slopes(Leading::Integral(mu), &family, &knots, opts.tol)?;
        let stable = (u.value - last).abs() <= opts.tol.max(1e-9);
        last = u.value;
        let start = family.members()[u.argmin].0.clone();
        result = Some((chi.clone(), u));
        if stable || outer == opts.max_outer {
            break;
        }
        let mut q: Vec<f64> = start.atoms().to_vec();
        let mut w: Vec<f64> = start.weights().to_vec();
        let mut rng = stream_rng(opts.seed, &[0x72_6f75_6e64, outer as u64]);
        while q.len() < k {
            q.push(rng.random::<f64>() * x_max);
            w.push(0.02);
        }
        q.truncate(k);
        w.truncate(k);
        let x0: Vec<f64> = q.into_iter().chain(w).collect();
        let lo = vec![0.0; 2 * k];
        let mut hi = vec![x_max; k];
        hi.extend(std::iter::repeat_n(1.0, k));
        let mut visited = PsiFamily::new();
        let mut failure = None;
        let mut f = |x: &[f64]| match decode_measure(x, k) {
            Ok(nu) => match eval.psi(&nu) {
                Ok(p) => {
                    let v = chi.integrate(&nu) - p;
                    visited.push(nu, p);
                    v
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            },
            Err(_) => f64::INFINITY,
        };
        compass_minimize(&mut f, &x0, &lo, &hi, CompassOptions { max_evals: opts.max_evals / 2, ..CompassOptions::default() });
        if let Some(e) = failure {
            return Err(e.into());
        }
        family.extend(visited);
    }
    let (chi, u) = result.expect("at least one round");
    Ok(RoundTrip { psi, recovered: u.value, chi, family_size: family.len() })
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaScan {
    pub alphas: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub midpoints: Vec<f64>,
    /// `|mid(a_{k+1}) - mid(a_k)| / (a_{k+1} - a_k)`.
    pub slopes: Vec<f64>,
    /// `3t + 4`.
    pub constant: f64,
    pub within_bound: bool,
}

/// Bracket values along `xi + alpha |x|^2` and their finite-difference slopes.
/// Each slope is checked against `3t + 4` plus the bracket widths at its ends.
pub fn alpha_continuity_scan(
    model: &MixtureModel,
    t: f64,
    alphas: &[f64],
    opts: &GapOptions,
) -> Result<AlphaScan, DualityError> {
    if alphas.len() < 2 || alphas.windows(2).any(|w| !(w[1] > w[0])) || alphas[0] < 0.0 {
        return Err(DualityError::InvalidOption("alphas must be nonnegative and increasing".into()));
    }
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for &a in alphas {
        let r = solve_gap_best_effort(&model.perturb_alpha(a)?, t, opts)?;
        lower.push(r.lower);
        upper.push(r.upper);
    }
    let midpoints: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| 0.5 * (l + u)).collect();
    let constant = 3.0 * t + 4.0;
    let mut slopes = Vec::new();
    let mut within_bound = true;
    for k in 0..alphas.len() - 1 {
        let da = alphas[k + 1] - alphas[k];
        let dv = (midpoints[k + 1] - midpoints[k]).abs();
        slopes.push(dv / da);
        let slack = 0.5 * ((upper[k] - lower[k]) + (upper[k + 1] - lower[k + 1])) + 1e-9;
        if dv > constant * da + slack {
            within_bound = false;
        }
    }
    Ok(AlphaScan { alphas: alphas.to_vec(), lower, upper, midpoints, slopes, constant, within_bound })
}

/// `psi` on matrix-atom measures, supplied by the caller.
pub trait PsiOracle {
    fn psi(&self, mu: &MatrixAtomsMeasure) -> Result<f64, String>;
}

/// `psi = 0`.
pub struct ZeroPsi;

impl PsiOracle for ZeroPsi {
    fn psi(&self, _: &MatrixAtomsMeasure) -> Result<f64, String> {
        Ok(0.0)
    }
}

/// `psi(mu) = min(1, int tr(x) dmu)`, concave and nondecreasing.
pub struct CappedTracePsi;

impl PsiOracle for CappedTracePsi {
    fn psi(&self, mu: &MatrixAtomsMeasure) -> Result<f64, String> {
        if !mu.is_monotone_support() {
            return Err("support is not totally ordered".into());
        }
        Ok(mu.integrate(|x| x.trace()).min(1.0))
    }
}

/// A family member: weights on points `t grad xi(y_j)` for directions `y_j`.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionMeasure {
    pub directions: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VectorBracket {
    pub lower: f64,
    pub upper: f64,
    /// `max over directions of chi(t grad xi(y)) - t theta(y)`.
    pub hopf_lax: f64,
    pub psi_star: f64,
}

/// Upper value `tilde S_t chi(0) - min_family (int chi dmu - psi(mu))` and the
/// matching lower value `max_family (psi(mu) - t int theta(y) dmu)` for a
/// family supported on `t grad xi(directions)`.
pub fn eval_upper_vector(
    model: &MixtureModel,
    t: f64,
    chi: &dyn Fn(&DMatrix<f64>) -> f64,
    directions: &[DMatrix<f64>],
    family: &[DirectionMeasure],
    oracle: &dyn PsiOracle,
) -> Result<VectorBracket, DualityError> {
    if family.is_empty() {
        return Err(DualityError::EmptyFamily);
    }
    let d = model.dim();
    let (hopf_lax, _) = tilde_s_t(model, t, chi, &DMatrix::zeros(d, d), directions)?;
    let mut psi_star = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    for member in family {
        if member.directions.len() != member.weights.len() || member.directions.iter().any(|&j| j >= directions.len()) {
            return Err(DualityError::InvalidOption("family member refers to unknown directions".into()));
        }
        let mut atoms = Vec::with_capacity(member.directions.len());
        let mut cost = 0.0;
        for (&j, &w) in member.directions.iter().zip(&member.weights) {
            atoms.push(model.grad_matrix(&directions[j])? * t);
            cost += w * t * model.theta_matrix(&directions[j])?;
        }
        let mu = MatrixAtomsMeasure::new(d, atoms, member.weights.clone())?;
        let p = oracle.psi(&mu).map_err(DualityError::OracleDomain)?;
        psi_star = psi_star.min(mu.integrate(chi) - p);
        lower = lower.max(p - cost);
    }
    Ok(VectorBracket { lower, upper: hopf_lax - psi_star, hopf_lax, psi_star })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_temperature_is_trivial() {
        let r = solve_gap(&MixtureModel::sk(), 0.0, &GapOptions::default()).unwrap();
        assert_eq!((r.lower, r.upper), (0.0, 0.0));
    }

    #[test]
    fn identity_chi_upper_value() {
        let m = MixtureModel::sk();
        let eval = PsiEvaluator::new(&m, PsiOptions::default()).unwrap();
        let fam = PsiFamily::evaluate(&eval, &[DiscreteMeasure::dirac(0.0).unwrap()]).unwrap();
        let u = eval_upper(&m, 0.3, &PlConvexFn::identity(), &fam).unwrap();
        assert!((u.value - 0.3).abs() < 1e-15);
    }
}
