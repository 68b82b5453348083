use parisi_lab::duality::{eval_lower, eval_upper, PsiFamily};
use parisi_lab::fenchel::{AtomicMeasure, MixtureWeights};
use parisi_lab::hopf::{hopf_lax_point, s_t_hopf, s_t_sup, PlConvexFn};
use parisi_lab::lp::{LinearProgram, Relation};
use parisi_lab::measures::{kr_norm, kr_norm_closed_form, matrix_w1, measure_leq, w1_distance, DiscreteMeasure, MatrixAtomsMeasure, SignedAtoms};
use parisi_lab::models::MixtureModel;
use parisi_lab::parisi::{PsiEvaluator, PsiOptions};
use proptest::prelude::*;

fn measure(max_atoms: usize, x_max: f64) -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec((0.0..x_max, 0.05f64..1.0), 1..=max_atoms)
        .prop_map(|v| DiscreteMeasure::normalized(v.iter().map(|p| p.0).collect(), v.iter().map(|p| p.1).collect()).unwrap())
}

fn convex_fn(max_pieces: usize, x_max: f64) -> impl Strategy<Value = PlConvexFn> {
    prop::collection::vec((0.01f64..1.0, 0.0f64..1.0), 1..=max_pieces).prop_map(move |v| {
        let mut knots = vec![0.0];
        let total: f64 = v.iter().map(|p| p.0).sum();
        for p in &v {
            knots.push(knots.last().unwrap() + x_max * p.0 / total);
        }
        let mut slopes: Vec<f64> = v.iter().map(|p| p.1).collect();
        slopes.sort_by(f64::total_cmp);
        PlConvexFn::new(knots, slopes).unwrap()
    })
}

fn sk_psi() -> PsiEvaluator {
    PsiEvaluator::new(&MixtureModel::sk(), PsiOptions::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn psi_is_one_lipschitz(mu in measure(3, 2.0), nu in measure(3, 2.0)) {
        let e = sk_psi();
        let d = (e.psi(&mu).unwrap() - e.psi(&nu).unwrap()).abs();
        prop_assert!(d <= w1_distance(&mu, &nu) + 1e-8);
    }

    #[test]
    fn psi_is_nondecreasing(mu in measure(3, 1.5), shifts in prop::collection::vec(0.0f64..0.5, 3)) {
        let atoms: Vec<f64> = mu.atoms().iter().zip(&shifts).map(|(a, s)| a + s).collect();
        let nu = DiscreteMeasure::new(atoms, mu.weights().to_vec()).unwrap();
        prop_assert!(measure_leq(&mu, &nu, 1e-12).holds);
        let e = sk_psi();
        prop_assert!(e.psi(&mu).unwrap() <= e.psi(&nu).unwrap() + 1e-8);
    }

    #[test]
    fn psi_is_concave_along_mixtures(mu in measure(2, 1.5), nu in measure(2, 1.5)) {
        let e = sk_psi();
        let (a, b) = (e.psi(&mu).unwrap(), e.psi(&nu).unwrap());
        for lambda in [0.25, 0.5, 0.75] {
            let mix = DiscreteMeasure::mixture(&[(lambda, &mu), (1.0 - lambda, &nu)]).unwrap();
            prop_assert!(e.psi(&mix).unwrap() >= lambda * a + (1.0 - lambda) * b - 1e-8);
        }
    }

    #[test]
    fn psi_ignores_split_atoms(mu in measure(2, 1.5), split in 0.1f64..0.9, eps in 1e-7f64..1e-6) {
        // splitting the top atom into two nearby atoms moves psi by at most the W1 shift
        let e = sk_psi();
        let top = *mu.atoms().last().unwrap();
        let w = *mu.weights().last().unwrap();
        let mut atoms = mu.atoms().to_vec();
        let mut weights = mu.weights().to_vec();
        *weights.last_mut().unwrap() = w * split;
        atoms.push(top + eps);
        weights.push(w * (1.0 - split));
        let refined = DiscreteMeasure::new(atoms, weights).unwrap();
        prop_assert!((e.psi(&refined).unwrap() - e.psi(&mu).unwrap()).abs() <= w * eps + 1e-10);
    }

    #[test]
    fn hopf_lax_forms_agree(chi in convex_fn(5, 1.5), t in prop::sample::select(vec![0.1, 1.0, 10.0]), x in 0.0f64..2.0) {
        let m = MixtureModel::sk();
        let a = s_t_sup(&m, t, &chi, x).unwrap();
        let b = s_t_hopf(&m, t, &chi, x).unwrap();
        let c = hopf_lax_point(&m, t, &chi, x).unwrap().0;
        prop_assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()));
        prop_assert!((c - b).abs() <= 1e-9 * (1.0 + b.abs()));
    }

    #[test]
    fn hopf_lax_is_convex_and_nondecreasing(chi in convex_fn(5, 1.5), t in 0.05f64..3.0) {
        let m = MixtureModel::sk();
        let v: Vec<f64> = (0..40).map(|i| s_t_hopf(&m, t, &chi, 0.05 * i as f64).unwrap()).collect();
        for w in v.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
        for w in v.windows(3) {
            prop_assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-8);
        }
    }

    #[test]
    fn kr_norm_program_matches_closed_form(v in prop::collection::vec((0.0f64..3.0, -1.0f64..1.0), 1..=10)) {
        let nu = SignedAtoms::new(v.iter().map(|p| p.0).collect(), v.iter().map(|p| p.1).collect()).unwrap();
        prop_assert!((kr_norm(&nu).unwrap() - kr_norm_closed_form(&nu)).abs() <= 1e-9);
    }

    #[test]
    fn w1_transport_matches_quantile_formula(mu in measure(4, 2.0), nu in measure(4, 2.0)) {
        let lp = matrix_w1(&MatrixAtomsMeasure::from_scalar(&mu), &MatrixAtomsMeasure::from_scalar(&nu)).unwrap();
        prop_assert!((lp - w1_distance(&mu, &nu)).abs() <= 1e-10);
        prop_assert!((w1_distance(&mu, &nu) - w1_distance(&nu, &mu)).abs() <= 1e-15);
    }

    #[test]
    fn weak_duality_bracket(nu in measure(3, 2.0), chi in convex_fn(6, 2.0), extra in prop::collection::vec(measure(2, 2.0), 0..4),
                            t in prop::sample::select(vec![0.3, 1.0, 3.0])) {
        let m = MixtureModel::sk();
        let e = sk_psi();
        let nu = DiscreteMeasure::new(nu.atoms().iter().map(|a| a * t).collect(), nu.weights().to_vec()).unwrap();
        let mut members = vec![nu.clone()];
        members.extend(extra);
        let family = PsiFamily::evaluate(&e, &members).unwrap();
        let lower = eval_lower(&m, t, &nu, &PsiOptions::default()).unwrap();
        let upper = eval_upper(&m, t, &chi, &family).unwrap().value;
        prop_assert!(lower <= upper + 1e-8, "lower {lower} upper {upper}");
    }

    #[test]
    fn barycenter_is_affine_and_lipschitz(a in measure(3, 1.0), b in measure(3, 1.0), c in measure(3, 1.0), lambda in 0.0f64..1.0) {
        let eta = MixtureWeights::new(vec![a.clone(), b.clone()], vec![0.5, 0.5]).unwrap();
        let eta2 = MixtureWeights::new(vec![c.clone()], vec![1.0]).unwrap();
        let d = eta.distance(&eta2).unwrap();
        let bd = eta.barycenter().unwrap().distance(&eta2.barycenter().unwrap()).unwrap();
        prop_assert!(bd <= d + 1e-10);
        let mixed = MixtureWeights::new(vec![a.clone(), b.clone(), c.clone()], vec![0.5 * lambda, 0.5 * lambda, 1.0 - lambda]).unwrap();
        let direct = DiscreteMeasure::mixture(&[(lambda, &eta.barycenter().unwrap()), (1.0 - lambda, &c)]).unwrap();
        prop_assert!(w1_distance(&mixed.barycenter().unwrap(), &direct) <= 1e-12);
    }

    #[test]
    fn simplex_matches_vertex_enumeration(c in prop::collection::vec(-1.0f64..1.0, 2), rows in prop::collection::vec((0.1f64..1.0, 0.1f64..1.0, 0.5f64..2.0), 1..4)) {
        // maximise c.x over {x >= 0, A x <= b}: the optimum sits on a vertex
        let mut lp = LinearProgram::maximize(c.clone());
        for &(a1, a2, b) in &rows {
            lp.add(vec![(0, a1), (1, a2)], Relation::Le, b);
        }
        let sol = lp.solve().unwrap();
        let mut lines: Vec<(f64, f64, f64)> = rows.clone();
        lines.push((1.0, 0.0, 0.0));
        lines.push((0.0, 1.0, 0.0));
        let feasible = |x: f64, y: f64| x >= -1e-12 && y >= -1e-12 && rows.iter().all(|r| r.0 * x + r.1 * y <= r.2 + 1e-12);
        let mut best = f64::NEG_INFINITY;
        for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                let (a, b, e) = lines[i];
                let (cc, d, f) = lines[j];
                let det = a * d - b * cc;
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (e * d - b * f) / det;
                let y = (a * f - e * cc) / det;
                if feasible(x, y) {
                    best = best.max(c[0] * x + c[1] * y);
                }
            }
        }
        prop_assert!((sol.objective - best).abs() <= 1e-9);
    }
}

#[test]
fn hopf_lax_semigroup() {
    let m = MixtureModel::sk();
    let chi = PlConvexFn::new(vec![0.0, 0.3, 0.8, 1.5], vec![0.1, 0.5, 0.9]).unwrap();
    let (s, t) = (0.2, 0.3);
    // S_s chi is convex and 1-Lipschitz; interpolate it on a fine grid
    let h = 0.002;
    let n = 2000;
    let vals: Vec<f64> = (0..=n).map(|i| hopf_lax_point(&m, s, &chi, h * i as f64).unwrap().0).collect();
    let slopes: Vec<f64> = vals.windows(2).map(|w| ((w[1] - w[0]) / h).clamp(0.0, 1.0)).collect();
    let mut mono = slopes.clone();
    for i in 1..mono.len() {
        mono[i] = mono[i].max(mono[i - 1]);
    }
    let inner = PlConvexFn::uniform(h * n as f64, mono).unwrap();
    for k in 0..20 {
        let x = 0.07 * k as f64;
        let composed = vals[0] + hopf_lax_point(&m, t, &inner, x).unwrap().0;
        let direct = hopf_lax_point(&m, s + t, &chi, x).unwrap().0;
        assert!((composed - direct).abs() <= 1e-5, "x = {x}: {composed} vs {direct}");
    }
}
