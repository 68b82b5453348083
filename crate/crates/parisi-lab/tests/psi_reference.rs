#![allow(clippy::excessive_precision)]

//! `psi` against values from independent high-precision quadrature.

use parisi_lab::measures::DiscreteMeasure;
use parisi_lab::models::{MixtureModel, SpinLaw};
use parisi_lab::parisi::{psi, PsiOptions};

fn three_point_spins() -> MixtureModel {
    let spins = SpinLaw::Atoms { values: vec![vec![-1.0], vec![0.0], vec![1.5]], weights: vec![0.25, 0.25, 0.5] };
    MixtureModel::new(vec![(2, 1.0)], 1, spins).unwrap()
}

fn check(model: &MixtureModel, mu: DiscreteMeasure, expected: f64, tol: f64) {
    let got = psi(model, &mu, &PsiOptions::default()).unwrap();
    assert!((got - expected).abs() < tol, "{mu:?}: got {got}, expected {expected}, diff {:e}", got - expected);
}

#[test]
fn ising_diracs() {
    let sk = MixtureModel::sk();
    for (q, v) in [
        (0.25, 0.040485272839918382374),
        (0.5, 0.1254327925085620259),
        (1.0, 0.35775113431172015129),
        (2.0, 0.94334043376715874604),
    ] {
        check(&sk, DiscreteMeasure::dirac(q).unwrap(), v, 1e-10);
    }
}

#[test]
fn three_point_spin_dirac() {
    check(&three_point_spins(), DiscreteMeasure::dirac(0.6).unwrap(), 0.25087226393082281082, 1e-10);
}

#[test]
fn ising_two_atoms() {
    let sk = MixtureModel::sk();
    check(&sk, DiscreteMeasure::new(vec![0.2, 0.7], vec![0.4, 0.6]).unwrap(), 0.1486500981506771, 1e-10);
    check(&sk, DiscreteMeasure::new(vec![0.0, 0.5], vec![0.5, 0.5]).unwrap(), 0.0711982098863076, 1e-10);
    check(&sk, DiscreteMeasure::new(vec![0.1, 1.0], vec![0.7, 0.3]).unwrap(), 0.13941371420549326, 1e-10);
}

#[test]
fn three_point_spin_two_atoms() {
    check(
        &three_point_spins(),
        DiscreteMeasure::new(vec![0.3, 0.9], vec![0.5, 0.5]).unwrap(),
        0.27977727257727447,
        1e-10,
    );
}
