use nalgebra::DMatrix;
use parisi_lab::duality::*;
use parisi_lab::fenchel::*;
use parisi_lab::hopf::{hopf_lax_point, PlConvexFn};
use parisi_lab::measures::{DiscreteMeasure, MatrixAtomsMeasure};
use parisi_lab::models::MixtureModel;
use parisi_lab::montecarlo::*;
use parisi_lab::parisi::{PsiEvaluator, PsiOptions};

fn m1(x: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, x)
}

struct ScalarPsi(PsiEvaluator);

impl PsiOracle for ScalarPsi {
    fn psi(&self, mu: &MatrixAtomsMeasure) -> Result<f64, String> {
        let atoms = mu.atoms().iter().map(|a| a[(0, 0)]).collect();
        let nu = DiscreteMeasure::new(atoms, mu.weights().to_vec()).map_err(|e| e.to_string())?;
        self.0.psi(&nu).map_err(|e| e.to_string())
    }
}

#[test]
fn lower_value_of_the_origin_and_small_time() {
    let m = MixtureModel::sk();
    let o = PsiOptions::default();
    assert_eq!(eval_lower(&m, 1.0, &DiscreteMeasure::dirac(0.0).unwrap(), &o).unwrap(), 0.0);
    let q = DiscreteMeasure::dirac(0.5).unwrap();
    let a = eval_lower(&m, 1e-2, &q, &o).unwrap();
    let b = eval_lower(&m, 1e-3, &q, &o).unwrap();
    assert!(a < -5.0 && b < 10.0 * a);
    let half = DiscreteMeasure::new(vec![0.0, 0.5], vec![0.5, 0.5]).unwrap();
    let expected = PsiEvaluator::new(&m, o).unwrap().psi(&half).unwrap() - 0.5 * 0.25 * 0.25;
    assert!((eval_lower(&m, 1.0, &half, &o).unwrap() - expected).abs() < 1e-15);
}

#[test]
fn vector_bracket_reduces_to_scalar() {
    let m = MixtureModel::sk();
    let t = 0.7;
    let chi = PlConvexFn::new(vec![0.0, 0.4, 1.0], vec![0.2, 0.8]).unwrap();
    let (_, y_star) = hopf_lax_point(&m, t, &chi, 0.0).unwrap();
    let mut ys: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
    ys.push(y_star / (2.0 * t));
    let directions: Vec<DMatrix<f64>> = ys.iter().map(|&y| m1(y)).collect();
    let family = vec![
        DirectionMeasure { directions: vec![0], weights: vec![1.0] },
        DirectionMeasure { directions: vec![10, 30], weights: vec![0.4, 0.6] },
        DirectionMeasure { directions: vec![5, 20, 40], weights: vec![0.2, 0.3, 0.5] },
    ];
    let eval = PsiEvaluator::new(&m, PsiOptions::default()).unwrap();
    let scalar: Vec<DiscreteMeasure> = family
        .iter()
        .map(|f| DiscreteMeasure::new(f.directions.iter().map(|&j| 2.0 * t * ys[j]).collect(), f.weights.clone()).unwrap())
        .collect();
    let psi_family = PsiFamily::evaluate(&eval, &scalar).unwrap();
    let chi_m = |x: &DMatrix<f64>| chi.eval(x[(0, 0)]);
    let v = eval_upper_vector(&m, t, &chi_m, &directions, &family, &ScalarPsi(eval)).unwrap();
    let s = eval_upper(&m, t, &chi, &psi_family).unwrap();
    assert!((v.upper - s.value).abs() < 1e-8, "{} vs {}", v.upper, s.value);
    assert!(v.lower <= v.upper + 1e-8);
}

#[test]
fn vector_bracket_with_synthetic_psi() {
    let corners = vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]];
    let spins = parisi_lab::models::SpinLaw::Atoms { values: corners, weights: vec![0.25; 4] };
    let m2 = MixtureModel::new(vec![(2, 1.0)], 2, spins).unwrap();
    let directions: Vec<DMatrix<f64>> = vec![
        DMatrix::zeros(2, 2),
        DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.2]),
        DMatrix::from_row_slice(2, 2, &[0.8, 0.1, 0.1, 0.6]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]),
    ];
    let chi = |x: &DMatrix<f64>| 0.5 * x.trace();
    let family = vec![
        DirectionMeasure { directions: vec![0], weights: vec![1.0] },
        DirectionMeasure { directions: vec![1, 2], weights: vec![0.5, 0.5] },
        DirectionMeasure { directions: vec![0, 3], weights: vec![0.3, 0.7] },
    ];
    let zero = eval_upper_vector(&m2, 0.5, &chi, &directions, &family, &ZeroPsi).unwrap();
    assert!(zero.lower <= 0.0 + 1e-15 && zero.upper >= zero.hopf_lax - 1e-15);
    let capped = eval_upper_vector(&m2, 0.5, &chi, &directions, &family, &CappedTracePsi).unwrap();
    assert!(capped.lower <= capped.upper + 1e-8);
}

#[test]
fn alpha_scan_is_lipschitz_at_high_temperature() {
    let opts = GapOptions { atoms: 2, knots: 16, multistarts: 2, lattice: 5, max_outer: 1, max_evals: 600, ..GapOptions::default() };
    let scan = alpha_continuity_scan(&MixtureModel::sk(), 0.2, &[0.0, 0.02], &opts).unwrap();
    assert!(scan.within_bound);
    assert!(scan.midpoints.iter().all(|v| v.abs() < 1e-3));
}

fn affine(slopes: Vec<f64>, offset: f64) -> AffinePiece {
    AffinePiece { chi: PlConvexFn::uniform(1.0, slopes).unwrap(), offset }
}

fn test_measures(n: usize, seed: u64) -> Vec<DiscreteMeasure> {
    (0..n)
        .map(|i| {
            let k = (i + seed as usize) % 3 + 1;
            let atoms: Vec<f64> = (0..k).map(|j| ((i * 7 + j * 13 + seed as usize) % 17) as f64 / 17.0).collect();
            DiscreteMeasure::normalized(atoms, vec![1.0; k]).unwrap()
        })
        .collect()
}

#[test]
fn fenchel_moreau_round_trip() {
    let a = affine(vec![0.1, 0.2, 0.9], 0.05);
    let b = affine(vec![0.4, 0.4, 0.4], 0.0);
    let chis = vec![a.chi.clone(), b.chi.clone(), PlConvexFn::identity()];
    let mus = test_measures(20, 1);
    let single = ConcaveFunctional::MinOfAffine(vec![a.clone()]);
    assert!(fm_roundtrip(&single, &chis, &mus, &[], 1e-6).unwrap().max_abs_error < 1e-12);
    let two = ConcaveFunctional::MinOfAffine(vec![a.clone(), b.clone()]);
    let r = fm_roundtrip(&two, &chis, &mus, &[], 1e-6).unwrap();
    assert!(r.max_abs_error < 1e-6 && r.family_too_coarse.is_none());
    let (pa, pb) = (a.clone(), b.clone());
    let convex = ConcaveFunctional::Oracle { eval: Box::new(move |mu| pa.eval(mu).max(pb.eval(mu))), lipschitz: 0.9 };
    let w = find_concavity_witness(&convex, &chis, &mus, 1.0, 500, 3).unwrap().expect("witness");
    assert!(w.phi_star_star_midpoint > w.phi_midpoint);
}

#[test]
fn jensen_on_chains_in_dimension_two() {
    let a = DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.1, 0.3]);
    let b = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, 0.2, 0.7]);
    let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.2]);
    let nu1 = MatrixAtomsMeasure::new(2, vec![a.clone(), b.clone()], vec![0.5, 0.5]).unwrap();
    let nu2 = MatrixAtomsMeasure::new(2, vec![b, c], vec![0.3, 0.7]).unwrap();
    let phi = |mu: &MatrixAtomsMeasure| mu.integrate(|x| x.trace()).min(1.5) - 0.1 * mu.integrate(|x| x[(0, 1)]);
    let eta = MixtureWeights::new(vec![nu1.clone(), nu2.clone()], vec![0.4, 0.6]).unwrap();
    assert!(jensen_check(&phi, &eta).unwrap().holds);
    let single = jensen_check(&phi, &MixtureWeights::dirac(nu1)).unwrap();
    assert_eq!(single.average, single.at_barycenter);
    let off = MatrixAtomsMeasure::new(2, vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])], vec![1.0]).unwrap();
    let bad = MixtureWeights::new(vec![nu2, off], vec![0.5, 0.5]).unwrap();
    assert!(matches!(jensen_check(&phi, &bad), Err(FenchelError::PreconditionViolated(_))));
}

#[test]
fn extreme_set_search_finds_nothing() {
    let r = extreme_set_search(2, 2000, 5).unwrap();
    assert_eq!(r.counterexamples, 0);
    assert_eq!(r.incomparable_chain_failures, 0);
    assert!(r.incomparable_chain_pairs > 0);
}

#[test]
fn extension_restricts_to_the_family() {
    let phi = ConcaveFunctional::MinOfAffine(vec![affine(vec![0.1, 0.5, 0.8], 0.02), affine(vec![0.3, 0.3, 0.3], 0.0)]);
    let family: Vec<(DiscreteMeasure, f64)> = test_measures(12, 4).into_iter().map(|mu| {
        let v = phi.eval(&mu);
        (mu, v)
    }).collect();
    for (mu, v) in &family {
        let e = extend_phi(&family, mu).unwrap();
        assert!((e.value - v).abs() < 1e-4);
        assert!(e.in_family_error.unwrap() < 1e-4);
    }
    let constant: Vec<(DiscreteMeasure, f64)> = family.iter().map(|(mu, _)| (mu.clone(), 0.3)).collect();
    let outside = DiscreteMeasure::new(vec![0.95, 1.4], vec![0.5, 0.5]).unwrap();
    let e = extend_phi(&constant, &outside).unwrap();
    let nearest = constant.iter().map(|(mu, _)| parisi_lab::measures::w1_distance(mu, &outside)).fold(f64::INFINITY, f64::min);
    assert!(e.value <= 0.3 - 0.0 && e.value >= 0.3 - nearest - 1e-12);
    let other = DiscreteMeasure::new(vec![0.9, 1.3], vec![0.5, 0.5]).unwrap();
    let f = extend_phi(&family, &other).unwrap();
    let g = extend_phi(&family, &outside).unwrap();
    assert!((f.value - g.value).abs() <= parisi_lab::measures::w1_distance(&other, &outside) + 1e-9);
}

#[test]
fn empirical_measures_converge() {
    let rows = empirical_convergence(&DiscreteMeasure::dirac(0.3).unwrap(), &[10, 100], 5, 0).unwrap();
    assert!(rows.iter().all(|r| r.median_w1 == 0.0));
    let mu = DiscreteMeasure::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
    let rows = empirical_convergence(&mu, &[100, 1000, 10000], 50, 1).unwrap();
    assert!(rows.windows(2).all(|w| w[1].median_w1 <= w[0].median_w1));
    assert!(rows[2].median_w1 <= 0.02);
}

#[test]
fn hamiltonian_covariance() {
    let m = MixtureModel::ising(&[(1, 0.2), (2, 1.0), (3, 0.5)]).unwrap();
    let n = 6;
    let ones = vec![1.0; n];
    let orth = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
    let mixed = vec![1.0, 1.0, -1.0, 1.0, 1.0, 1.0];
    let probes = vec![(ones.clone(), ones.clone()), (ones.clone(), orth), (ones, mixed)];
    let rows = covariance_check(&m, n, 4000, 9, &probes).unwrap();
    assert!((rows[0].target - 6.0 * 1.7).abs() < 1e-12);
    assert_eq!(rows[1].target, 0.0);
    assert!(rows.iter().all(|r| r.within), "{rows:?}");
}

#[test]
#[allow(clippy::excessive_precision)]
fn enriched_free_energy_reductions() {
    let m = MixtureModel::sk();
    let plain = sample_free_energy(&m, 0.8, 6, 20, 2).unwrap();
    let zero = enriched_free_energy(&m, 0.8, &[0.0], 6, 20, 2).unwrap();
    assert_eq!(plain.values, zero.values);
    let a = enriched_free_energy(&m, 0.0, &[0.5], 4, 200, 7).unwrap();
    let b = enriched_free_energy(&m, 0.0, &[0.5], 8, 100, 7).unwrap();
    assert!((a.mean - b.mean).abs() < 1e-12);
    let one = enriched_free_energy(&m, 0.0, &[0.5], 1, 4000, 7).unwrap();
    assert!((one.mean - 0.1254327925085620259).abs() < 3.0 * one.stderr);
    assert!(matches!(enriched_free_energy(&m, 0.0, &[0.1, 0.5], 4, 10, 0), Err(MonteCarloError::UnsupportedCascade(2))));
}

#[test]
fn perturbation_is_deterministic_and_bounded() {
    let m = MixtureModel::sk();
    let p = potts_perturbation_check(&m, 1.0, 8, &[0.05, 0.05, 0.1], 100, 4).unwrap();
    assert_eq!(p.estimates[0].values, p.estimates[1].values);
    assert!(p.within_bound && p.nondecreasing);
    let again = potts_perturbation_check(&m, 1.0, 8, &[0.05, 0.05, 0.1], 100, 4).unwrap();
    assert_eq!(p.estimates[2].values, again.estimates[2].values);
}
