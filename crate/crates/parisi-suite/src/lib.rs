//! Acceptance battery: each criterion is a function returning a pass/fail
//! verdict with a one-line detail and its wall-clock time against a budget.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use parisi_lab::duality::{eval_lower, eval_upper, psi_roundtrip, solve_gap_best_effort, alpha_continuity_scan, GapOptions, PsiFamily};
use parisi_lab::fenchel::{
    extend_phi, extreme_set_search, find_concavity_witness, fm_roundtrip, jensen_check, AffinePiece, ConcaveFunctional,
    MixtureWeights,
};
use parisi_lab::hopf::{hj_finite_dim, inner_j, lift, project, s_t_hopf, s_t_sup, PiecewiseLinearPath, PlConvexFn};
use parisi_lab::measures::{
    kr_norm, kr_norm_closed_form, measure_leq, w1_distance, DiscreteMeasure, MatrixAtomsMeasure, SignedAtoms,
};
use parisi_lab::models::MixtureModel;
use parisi_lab::montecarlo::{potts_perturbation_check, sample_free_energy};
use parisi_lab::optimize::stream_rng;
use parisi_lab::parisi::{psi_cascade_mc, PsiEvaluator, PsiOptions};
use parisi_lab::quadrature::log_cosh;
use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_s: f64,
    pub budget_s: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<34} {:>8.2}s / {:>5.0}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed_s,
            self.budget_s,
            self.detail
        )
    }
}

type Check = Result<(bool, String), String>;

fn timed(id: u8, name: &'static str, budget: u64, run: impl FnOnce() -> Check) -> CriterionResult {
    let start = Instant::now();
    let outcome = run();
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(budget);
    let (ok, mut detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    if elapsed > budget {
        detail.push_str("; over time budget");
    }
    CriterionResult {
        id,
        name,
        passed: ok && elapsed <= budget,
        detail,
        elapsed_s: elapsed.as_secs_f64(),
        budget_s: budget.as_secs_f64(),
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Random convex nondecreasing function on `[0, x_max]` with slopes in `[0, 1]`.
pub fn random_chi(rng: &mut impl Rng, x_max: f64, max_pieces: usize) -> PlConvexFn {
    let m = rng.random_range(1..=max_pieces);
    let mut knots = vec![0.0];
    let mut cuts: Vec<f64> = (0..m - 1).map(|_| rng.random::<f64>() * x_max).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    knots.extend(cuts.into_iter().filter(|&c| c > 1e-6));
    knots.push(x_max);
    let mut slopes: Vec<f64> = (0..knots.len() - 1).map(|_| rng.random::<f64>()).collect();
    slopes.sort_by(f64::total_cmp);
    PlConvexFn::new(knots, slopes).expect("valid random function")
}

/// Random probability measure with `atoms` atoms in `[0, x_max]`.
pub fn random_measure(rng: &mut impl Rng, x_max: f64, atoms: usize) -> DiscreteMeasure {
    let q: Vec<f64> = (0..atoms).map(|_| rng.random::<f64>() * x_max).collect();
    let w: Vec<f64> = (0..atoms).map(|_| 0.05 + rng.random::<f64>()).collect();
    DiscreteMeasure::normalized(q, w).expect("valid random measure")
}

/// `q - E log cosh(sqrt(2q) G)` by composite Simpson on `[-12, 12]`.
pub fn direct_dirac_psi(q: f64) -> f64 {
    let n = 24_000;
    let h = 24.0 / n as f64;
    let s = (2.0 * q).sqrt();
    let f = |z: f64| log_cosh(s * z) * (-0.5 * z * z).exp();
    let mut total = f(-12.0) + f(12.0);
    for i in 1..n {
        let z = -12.0 + i as f64 * h;
        total += if i % 2 == 1 { 4.0 } else { 2.0 } * f(z);
    }
    q - total * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt()
}

/// Values of `psi(delta_q)` for Ising spins, from high-precision quadrature.
#[allow(clippy::excessive_precision)]
pub const DIRAC_PSI_REFERENCE: [(f64, f64); 4] =
    [(0.0, 0.0), (0.25, 0.040485272839918382374), (0.5, 0.1254327925085620259), (1.0, 0.35775113431172015129)];

pub fn hopf_representation() -> CriterionResult {
    timed(1, "Hopf representation", 30, || {
        let m = MixtureModel::sk();
        let mut worst: f64 = 0.0;
        for k in 0..100 {
            let mut rng = stream_rng(1, &[k]);
            let chi = random_chi(&mut rng, 2.0, 6);
            for t in [0.1, 1.0, 10.0] {
                for i in 0..50 {
                    let x = 3.0 * i as f64 / 49.0;
                    let d = (s_t_sup(&m, t, &chi, x).map_err(err)? - s_t_hopf(&m, t, &chi, x).map_err(err)?).abs();
                    worst = worst.max(d);
                }
            }
        }
        Ok((worst <= 1e-6, format!("max |sup - hopf| = {worst:.2e}")))
    })
}

pub fn psi_base_case() -> CriterionResult {
    timed(2, "psi base case", 1, || {
        let e = PsiEvaluator::new(&MixtureModel::sk(), PsiOptions::default()).map_err(err)?;
        let mut worst: f64 = 0.0;
        for (q, reference) in DIRAC_PSI_REFERENCE {
            let v = e.psi(&DiscreteMeasure::dirac(q).map_err(err)?).map_err(err)?;
            worst = worst.max((v - reference).abs()).max((v - direct_dirac_psi(q)).abs());
        }
        Ok((worst <= 1e-10, format!("max deviation from direct quadrature = {worst:.2e}")))
    })
}

pub fn cascade_oracle() -> CriterionResult {
    timed(3, "cascade oracle", 60, || {
        let m = MixtureModel::sk();
        let mu = DiscreteMeasure::new(vec![0.2, 0.6], vec![0.5, 0.5]).map_err(err)?;
        let rec = PsiEvaluator::new(&m, PsiOptions::default()).map_err(err)?.psi(&mu).map_err(err)?;
        let mc = psi_cascade_mc(&m, &mu, 2000, 200, 3).map_err(err)?;
        let z = (rec - mc.mean).abs() / mc.stderr;
        Ok((z <= 3.0, format!("recursion {rec:.6}, cascade {:.6} +- {:.6} ({z:.2} se)", mc.mean, mc.stderr)))
    })
}

pub fn weak_duality() -> CriterionResult {
    timed(4, "weak-duality bracket", 120, || {
        let m = MixtureModel::sk();
        let e = PsiEvaluator::new(&m, PsiOptions::default()).map_err(err)?;
        let o = PsiOptions::default();
        let mut violations = 0;
        let mut tightest = f64::INFINITY;
        for k in 0..1000u64 {
            let t = [0.3, 1.0, 3.0][(k % 3) as usize];
            let mut rng = stream_rng(4, &[k]);
            let x_max = 2.0 * t;
            let atoms = rng.random_range(1..=3);
            let nu = random_measure(&mut rng, x_max, atoms);
            let chi = random_chi(&mut rng, x_max, 8);
            let mut members = vec![nu.clone()];
            for _ in 0..rng.random_range(0..3) {
                members.push(random_measure(&mut rng, x_max, 2));
            }
            let family = PsiFamily::evaluate(&e, &members).map_err(err)?;
            let lower = eval_lower(&m, t, &nu, &o).map_err(err)?;
            let upper = eval_upper(&m, t, &chi, &family).map_err(err)?.value;
            tightest = tightest.min(upper - lower);
            if lower > upper + 1e-8 {
                violations += 1;
            }
        }
        Ok((violations == 0, format!("{violations} violations in 1000 pairs, smallest slack {tightest:.2e}")))
    })
}

pub fn high_temperature_closure() -> CriterionResult {
    timed(5, "high-temperature SK closure", 300, || {
        let m = MixtureModel::sk();
        let r = solve_gap_best_effort(&m, 0.3, &GapOptions { atoms: 4, knots: 64, seed: 5, ..GapOptions::default() }).map_err(err)?;
        let argmax_origin = r.lower_argmax.len() == 1 && r.lower_argmax.atoms()[0] == 0.0;
        let mut ok = r.lower.abs() <= 1e-6 && r.upper.abs() <= 1e-6 && argmax_origin;
        let mut detail = format!(
            "lower {:.3e}, upper {:.3e}, argmax {} atom(s) up to {:.3}",
            r.lower,
            r.upper,
            r.lower_argmax.len(),
            r.lower_argmax.max_atom()
        );
        for n in [10, 14, 18] {
            let e = sample_free_energy(&m, 0.3, n, 200, 5).map_err(err)?;
            let z = e.mean.abs() / e.stderr;
            ok &= z <= 3.0;
            detail.push_str(&format!("; N={n}: {:.4} ({z:.1} se)", e.mean));
        }
        Ok((ok, detail))
    })
}

pub fn low_temperature_gap() -> CriterionResult {
    timed(6, "low-temperature SK gap", 900, || {
        let m = MixtureModel::sk();
        let r = solve_gap_best_effort(&m, 1.0, &GapOptions { atoms: 4, knots: 64, seed: 6, ..GapOptions::default() }).map_err(err)?;
        let e = sample_free_energy(&m, 1.0, 18, 200, 6).map_err(err)?;
        let mid = r.midpoint();
        let in_band = (mid - e.mean).abs() <= 0.05;
        Ok((
            r.gap <= 5e-3 && in_band,
            format!("bracket [{:.6}, {:.6}] gap {:.2e}; N=18 estimate {:.4} +- {:.4}", r.lower, r.upper, r.gap, e.mean, e.stderr),
        ))
    })
}

pub fn round_trip_at_time_zero() -> CriterionResult {
    timed(7, "round trip at time zero", 300, || {
        let m = MixtureModel::sk();
        let mut worst: f64 = 0.0;
        for k in 0..10u64 {
            let mut rng = stream_rng(7, &[k]);
            let mu = random_measure(&mut rng, 1.0, 3);
            let r = psi_roundtrip(&m, &mu, 1.0, &GapOptions { seed: k, ..GapOptions::default() }).map_err(err)?;
            worst = worst.max((r.recovered - r.psi).abs());
        }
        Ok((worst <= 1e-4, format!("max |recovered - psi| = {worst:.2e}")))
    })
}

pub fn discretization() -> CriterionResult {
    timed(8, "path discretization", 10, || {
        let mut ok = true;
        let mut notes = Vec::new();
        for j in [2usize, 4, 8, 16] {
            let mut rng = stream_rng(8, &[j as u64]);
            let mut x: Vec<f64> = (0..j).map(|_| rng.random_range(0..64) as f64 / 8.0).collect();
            x.sort_by(f64::total_cmp);
            ok &= project(&lift(&x), j) == x;
            // dyadic step path
            let cells = 32;
            let mut v: Vec<f64> = (0..cells).map(|_| rng.random_range(0..64) as f64 / 16.0).collect();
            v.sort_by(f64::total_cmp);
            let q = PiecewiseLinearPath::step((0..=cells).map(|i| i as f64 / cells as f64).collect(), v).map_err(err)?;
            ok &= q.inner(&lift(&x)) == inner_j(&project(&q, j), &x);
            let id = PiecewiseLinearPath::identity();
            let d = lift(&project(&id, j)).l1_distance(&id);
            let e = (d - 0.25 / j as f64).abs();
            ok &= e <= 1e-12;
            notes.push(format!("j={j}: {e:.1e}"));
        }
        let m = MixtureModel::sk();
        let mut worst: f64 = 0.0;
        for k in 0..50u64 {
            let mut rng = stream_rng(80, &[k]);
            let chi = random_chi(&mut rng, 1.5, 5);
            let t = 0.1 + 2.0 * rng.random::<f64>();
            let x: Vec<f64> = (0..rng.random_range(1..=6)).map(|_| rng.random::<f64>() * 2.0).collect();
            match hj_finite_dim(&m, t, &chi, &x) {
                Ok(v) => worst = worst.max((v.direct - v.separable).abs()),
                Err(e) => return Ok((false, format!("separability: {e}"))),
            }
        }
        ok &= worst <= 1e-8;
        Ok((ok, format!("L1 errors {}; separability {worst:.1e}", notes.join(", "))))
    })
}

pub fn kr_norm_suite() -> CriterionResult {
    timed(9, "KR norm", 10, || {
        let mut worst: f64 = 0.0;
        for k in 0..100u64 {
            let mut rng = stream_rng(9, &[k]);
            let n = rng.random_range(1..=10);
            let nu = SignedAtoms::new(
                (0..n).map(|_| rng.random::<f64>() * 3.0).collect(),
                (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
            )
            .map_err(err)?;
            worst = worst.max((kr_norm(&nu).map_err(err)? - kr_norm_closed_form(&nu)).abs());
        }
        let mut exact = true;
        for (a, b) in [(0.0, 1.0), (0.25, 0.75), (0.5, 2.0), (1.5, 0.5)] {
            let d = SignedAtoms::difference(&DiscreteMeasure::dirac(a).map_err(err)?, &DiscreteMeasure::dirac(b).map_err(err)?);
            exact &= kr_norm_closed_form(&d) == (a - b).abs();
            exact &= (kr_norm(&d).map_err(err)? - (a - b).abs()).abs() <= 1e-12;
        }
        Ok((worst <= 1e-9 && exact, format!("max |LP - closed form| = {worst:.1e}; Dirac differences exact: {exact}")))
    })
}

/// Three affine pieces whose minimum is the reference concave functional.
pub fn reference_pieces() -> Vec<AffinePiece> {
    vec![
        AffinePiece { chi: PlConvexFn::uniform(1.0, vec![0.1, 0.3, 0.9]).unwrap(), offset: 0.04 },
        AffinePiece { chi: PlConvexFn::uniform(1.0, vec![0.5, 0.5, 0.5]).unwrap(), offset: 0.0 },
        AffinePiece { chi: PlConvexFn::uniform(1.0, vec![0.0, 0.2, 0.25]).unwrap(), offset: 0.08 },
    ]
}

pub fn fenchel_moreau() -> CriterionResult {
    timed(10, "Fenchel-Moreau round trip", 30, || {
        let ps = reference_pieces();
        let mut chis: Vec<PlConvexFn> = ps.iter().map(|p| p.chi.clone()).collect();
        for k in 0..20u64 {
            chis.push(random_chi(&mut stream_rng(100, &[k]), 1.0, 4));
        }
        let mus: Vec<DiscreteMeasure> = (0..20u64).map(|k| random_measure(&mut stream_rng(10, &[k]), 1.0, 3)).collect();
        let phi = ConcaveFunctional::MinOfAffine(ps.clone());
        let r = fm_roundtrip(&phi, &chis, &mus, &[], 1e-6).map_err(err)?;
        let (a, b) = (ps[0].clone(), ps[1].clone());
        let convex = ConcaveFunctional::Oracle { eval: Box::new(move |mu| a.eval(mu).max(b.eval(mu))), lipschitz: 0.9 };
        let w = find_concavity_witness(&convex, &chis, &mus, 1.0, 2000, 10).map_err(err)?;
        let detail = format!(
            "max |phi** - phi| = {:.1e}; non-concave witness {}",
            r.max_abs_error,
            w.as_ref().map_or("not found".into(), |w| format!("excess {:.2e}", w.phi_star_star_midpoint - w.phi_midpoint))
        );
        Ok((r.max_abs_error <= 1e-6 && w.is_some(), detail))
    })
}

fn chain(rng: &mut impl Rng, len: usize) -> Vec<DMatrix<f64>> {
    let mut acc = DMatrix::<f64>::zeros(2, 2);
    (0..len)
        .map(|_| {
            let b = DMatrix::from_fn(2, 2, |_, _| rng.random::<f64>() - 0.5);
            acc += &b * b.transpose();
            acc.clone()
        })
        .collect()
}

/// Jensen's inequality on random mixtures of chain measures in dimension two,
/// with a concave functional of minimum-of-linear type. Returns how many hold.
pub fn jensen_instances(trials: usize, seed: u64) -> Result<usize, String> {
    let mut holds = 0;
    for k in 0..trials as u64 {
        let mut rng = stream_rng(seed, &[k]);
        let c = chain(&mut rng, 5);
        let weights_a: Vec<f64> = (0..4).map(|l| 0.3 + l as f64 * rng.random::<f64>()).collect();
        let phi = move |mu: &MatrixAtomsMeasure| {
            let m1 = mu.integrate(|x| x.trace());
            let m2 = mu.integrate(|x| x[(0, 0)] + 0.5 * x[(1, 1)]);
            (weights_a[0] * m1 + 0.1).min(weights_a[1] * m2 + 0.2).min(weights_a[2] * m1 + weights_a[3] * m2)
        };
        let mut support = Vec::new();
        for _ in 0..3 {
            let picks: Vec<usize> = (0..5).filter(|_| rng.random::<f64>() < 0.5).collect();
            let picks = if picks.is_empty() { vec![rng.random_range(0..5)] } else { picks };
            let w: Vec<f64> = picks.iter().map(|_| 0.1 + rng.random::<f64>()).collect();
            let total: f64 = w.iter().sum();
            let mu = MatrixAtomsMeasure::new(2, picks.iter().map(|&i| c[i].clone()).collect(), w.iter().map(|x| x / total).collect())
                .map_err(err)?;
            support.push(mu);
        }
        let lam: Vec<f64> = (0..3).map(|_| 0.1 + rng.random::<f64>()).collect();
        let total: f64 = lam.iter().sum();
        let eta = MixtureWeights::new(support, lam.iter().map(|x| x / total).collect()).map_err(err)?;
        if jensen_check(&phi, &eta).map_err(err)?.holds {
            holds += 1;
        }
    }
    Ok(holds)
}

pub fn monotone_measures() -> CriterionResult {
    timed(11, "monotone-measure suite", 120, || {
        let jensen_ok = jensen_instances(100, 11)?;
        let ext = extreme_set_search(2, 10_000, 11).map_err(err)?;
        let phi = ConcaveFunctional::MinOfAffine(reference_pieces());
        let family: Vec<(DiscreteMeasure, f64)> = (0..15u64)
            .map(|k| {
                let mu = random_measure(&mut stream_rng(110, &[k]), 1.0, 2);
                let v = phi.eval(&mu);
                (mu, v)
            })
            .collect();
        let mut worst: f64 = 0.0;
        for (mu, v) in &family {
            worst = worst.max((extend_phi(&family, mu).map_err(err)?.value - v).abs());
        }
        let ok = jensen_ok == 100 && ext.counterexamples == 0 && ext.incomparable_chain_failures == 0 && worst <= 1e-4;
        Ok((
            ok,
            format!(
                "Jensen {jensen_ok}/100; extreme-set counterexamples {} in {} trials; extension error {worst:.1e}",
                ext.counterexamples, ext.trials
            ),
        ))
    })
}

pub fn perturbation_suite() -> CriterionResult {
    timed(12, "conjugate and perturbation suite", 300, || {
        let mut worst: f64 = 0.0;
        for model in [MixtureModel::sk(), MixtureModel::ising(&[(2, 1.0), (3, 0.5), (4, 0.25)]).map_err(err)?] {
            for i in 0..=1000 {
                let x = i as f64 * 1e-3;
                let d = (model.theta(x) - model.conjugate_restricted(model.xi_prime(x)).map_err(err)?).abs();
                worst = worst.max(d);
            }
        }
        let m = MixtureModel::sk();
        let scan = alpha_continuity_scan(&m, 0.3, &[0.0, 0.1], &GapOptions { seed: 12, ..GapOptions::default() }).map_err(err)?;
        let potts = potts_perturbation_check(&m, 1.0, 12, &[0.0, 0.05, 0.1], 200, 12).map_err(err)?;
        let ok = worst <= 1e-8 && scan.within_bound && potts.within_bound;
        Ok((
            ok,
            format!(
                "theta error {worst:.1e}; alpha slopes {:?} (C = {}); perturbation slopes {:?} (C = {})",
                scan.slopes.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>(),
                scan.constant,
                potts.slopes.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>(),
                potts.constant
            ),
        ))
    })
}

pub fn psi_structure() -> CriterionResult {
    timed(13, "psi structural suite", 120, || {
        let e = PsiEvaluator::new(&MixtureModel::sk(), PsiOptions::default()).map_err(err)?;
        let psi = |mu: &DiscreteMeasure| e.psi(mu).map_err(err);
        let (mut lip, mut mono, mut conc) = (0, 0, 0);
        for k in 0..100u64 {
            let mut rng = stream_rng(13, &[k]);
            let (ka, kb) = (rng.random_range(1..=3), rng.random_range(1..=3));
            let mu = random_measure(&mut rng, 2.0, ka);
            let nu = random_measure(&mut rng, 2.0, kb);
            if (psi(&mu)? - psi(&nu)?).abs() > w1_distance(&mu, &nu) + 1e-8 {
                lip += 1;
            }
            let up = DiscreteMeasure::new(mu.atoms().iter().map(|a| a + rng.random::<f64>() * 0.5).collect(), mu.weights().to_vec())
                .map_err(err)?;
            if !measure_leq(&mu, &up, 1e-12).holds || psi(&mu)? > psi(&up)? + 1e-8 {
                mono += 1;
            }
            let a = random_measure(&mut rng, 2.0, 2);
            let b = random_measure(&mut rng, 2.0, 2);
            let c = random_measure(&mut rng, 2.0, 1);
            let lam: Vec<f64> = (0..3).map(|_| 0.1 + rng.random::<f64>()).collect();
            let s: f64 = lam.iter().sum();
            let mix = DiscreteMeasure::mixture(&[(lam[0] / s, &a), (lam[1] / s, &b), (lam[2] / s, &c)]).map_err(err)?;
            let avg = (lam[0] * psi(&a)? + lam[1] * psi(&b)? + lam[2] * psi(&c)?) / s;
            if psi(&mix)? < avg - 1e-8 {
                conc += 1;
            }
        }
        Ok((lip + mono + conc == 0, format!("violations: Lipschitz {lip}, monotone {mono}, concave {conc}")))
    })
}

/// Every criterion, in order of its id.
pub const CRITERIA: [fn() -> CriterionResult; 13] = [
    hopf_representation,
    psi_base_case,
    cascade_oracle,
    weak_duality,
    high_temperature_closure,
    low_temperature_gap,
    round_trip_at_time_zero,
    discretization,
    kr_norm_suite,
    fenchel_moreau,
    monotone_measures,
    perturbation_suite,
    psi_structure,
];

/// Runs the criteria with the given ids, or all of them when `ids` is empty.
pub fn run(ids: &[u8]) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .enumerate()
        .filter(|(i, _)| ids.is_empty() || ids.contains(&(*i as u8 + 1)))
        .map(|(_, f)| f())
        .collect()
}

pub fn run_all() -> Vec<CriterionResult> {
    run(&[])
}
