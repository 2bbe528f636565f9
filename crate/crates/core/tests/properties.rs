//! Property tests for the invariants of each module.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use opticalvn::fock::{self, DensityOperator, StateVector};
use opticalvn::gaussian::{symplectic_of, GaussianState, SchemeOracle, Stage, SymplecticTransform};
use opticalvn::linalg::{self, commutator, dagger, max_abs_diff};
use opticalvn::measurement::{self, OutcomeGrid};
use opticalvn::montecarlo::{SchemeInstrument, TrialRunner};
use opticalvn::scheme::{FeedbackSpec, Scheme, SchemeParams, StageMask};
use opticalvn::C64;
use proptest::prelude::*;

const ETAS: [f64; 3] = [0.2, 0.5, 0.8];
const SIGMAS: [f64; 3] = [0.5, 1.0, 2.0];

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// The nine preset schemes, built once.
fn schemes() -> &'static [(SchemeParams, Scheme)] {
    static CELL: OnceLock<Vec<(SchemeParams, Scheme)>> = OnceLock::new();
    CELL.get_or_init(|| {
        ETAS.iter()
            .flat_map(|&e| SIGMAS.iter().map(move |&s| (e, s)))
            .map(|(e, s)| {
                let p = SchemeParams::new(e, s).unwrap();
                let scheme = Scheme::new(&p, StageMask::ALL).unwrap();
                (p, scheme)
            })
            .collect()
    })
}

fn runner() -> &'static TrialRunner<SchemeInstrument<'static>> {
    static CELL: OnceLock<TrialRunner<SchemeInstrument<'static>>> = OnceLock::new();
    CELL.get_or_init(|| {
        let (p, scheme) = &schemes()[4];
        let bound = scheme
            .bind(&StateVector::vacuum(p.cutoff).unwrap())
            .unwrap();
        TrialRunner::new(
            SchemeInstrument::new(bound, FeedbackSpec::Ideal),
            p.grid.clone(),
            true,
        )
        .unwrap()
    })
}

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
        .prop_map(|v| v.into_iter().map(|(a, b)| c(a, b)).collect())
}

/// Leading-block superposition padded to `cutoff` levels.
fn block_state(amps: &[C64], cutoff: usize) -> Option<StateVector> {
    let mut a = Array1::<C64>::zeros(cutoff);
    for (i, z) in amps.iter().enumerate() {
        a[i] = *z;
    }
    StateVector::from_amplitudes(a).ok()
}

fn hermitian(entries: &[C64], n: usize) -> Array2<C64> {
    let a = Array2::from_shape_vec((n, n), entries.to_vec()).unwrap();
    linalg::hermitize(&a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn canonical_commutators(cutoff in 4usize..70, phi in -PI..PI) {
        let a = fock::make_annihilation(cutoff).unwrap().into_matrix();
        let comm = commutator(&a, &dagger(&a));
        let eye = Array2::<C64>::eye(cutoff);
        prop_assert!(max_abs_diff(comm.view(), eye.view(), cutoff - 2, cutoff - 2) <= 1e-10);
        let x = fock::make_quadrature(phi, cutoff).unwrap().into_matrix();
        let y = fock::make_quadrature(phi + FRAC_PI_2, cutoff).unwrap().into_matrix();
        let want = eye.mapv(|z| z * c(0.0, 0.5));
        prop_assert!(max_abs_diff(commutator(&x, &y).view(), want.view(), cutoff - 2, cutoff - 2) <= 1e-10);
    }

    #[test]
    fn squeeze_and_displacement_group_laws(
        r1 in -0.4f64..0.4, r2 in -0.4f64..0.4, phi in -PI..PI,
        a in (-0.8f64..0.8, -0.8f64..0.8), b in (-0.8f64..0.8, -0.8f64..0.8),
    ) {
        let n = 80;
        let block = n / 3;
        let s = |r: f64| fock::make_squeeze(r, phi, n).unwrap().into_matrix();
        let prod = s(r1).dot(&s(r2));
        prop_assert!(max_abs_diff(prod.view(), s(r1 + r2).view(), block, block) <= 1e-9);

        let (a, b) = (c(a.0, a.1), c(b.0, b.1));
        let d = |z: C64| fock::make_displacement(z, n).unwrap().into_matrix();
        let phase = C64::from_polar(1.0, (a * b.conj()).im);
        let want = d(a + b).mapv(|z| z * phase);
        prop_assert!(max_abs_diff(d(a).dot(&d(b)).view(), want.view(), block, block) <= 1e-9);
    }

    #[test]
    fn generated_unitaries_are_unitary(r in -1.0f64..1.0, phi in -PI..PI, a in (-1.5f64..1.5, -1.5f64..1.5)) {
        let n = 60;
        let guarded = fock::Cutoff::new(n).unwrap().guarded();
        for op in [
            fock::make_squeeze(r, phi, n).unwrap(),
            fock::make_displacement(c(a.0, a.1), n).unwrap(),
        ] {
            let u = op.matrix();
            let g = dagger(u).dot(u);
            prop_assert!(linalg::identity_defect(g.view(), guarded / 2) <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pom_is_invariant_under_unitary_dressing(
        delta in 0.15f64..0.6,
        h in complex_vec(30 * 30),
        rate in -2.0f64..2.0,
    ) {
        let n = 30;
        let grid = OutcomeGrid::new(-3.0, 3.0, 0.5).unwrap();
        let t = measurement::VnTarget::new(delta, 0.0, n).unwrap();
        let ops = grid.values().iter().map(|&x| t.omega(x)).collect();
        let family = measurement::ReductionFamily::new(grid, ops, measurement::Provenance::AnalyticTarget).unwrap();
        let (vals, vecs) = linalg::eigh(&hermitian(&h, n)).unwrap();
        let dressed = family
            .dressed(|x| linalg::spectral_apply(&vals, &vecs, |l| C64::from_polar(1.0, rate * x * l + x * x)))
            .unwrap();
        let a = measurement::pom_from_reduction(&family).unwrap();
        let b = measurement::pom_from_reduction(&dressed).unwrap();
        prop_assert!(a.max_deviation(&b, n).unwrap() <= 1e-10);
    }

    #[test]
    fn outcome_density_is_normalized(idx in 0usize..9, amps in complex_vec(8)) {
        let (p, scheme) = &schemes()[idx];
        let Some(psi) = block_state(&amps, p.cutoff) else { return Ok(()) };
        let d = scheme.bind(&psi).unwrap().outcome_density(&p.grid).unwrap();
        prop_assert!((d.mass() - 1.0).abs() <= 1e-6);
        prop_assert!(d.values.iter().all(|&v| v >= -1e-15));
    }

    #[test]
    fn pure_inputs_stay_pure(idx in 0usize..9, amps in complex_vec(6), x in -2.5f64..2.5) {
        let (p, scheme) = &schemes()[idx];
        let Some(psi) = block_state(&amps, p.cutoff) else { return Ok(()) };
        let rho = DensityOperator::from_pure(&psi);
        let reduced = measurement::reduce_state(&rho, &scheme.omega_full(x)).unwrap();
        prop_assert!((reduced.purity() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn trial_records_are_deterministic(seed in any::<u64>(), index in 0u64..1_000_000) {
        let r = runner();
        let a = r.run_trial(index, seed).unwrap();
        let b = r.run_trial(index, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.x.to_bits(), b.x.to_bits());
        let other = r.run_trial(index + 1, seed).unwrap();
        prop_assert_ne!(a.x, other.x);
    }
}

fn stage_strategy() -> impl Strategy<Value = (Stage, Option<usize>)> {
    prop_oneof![
        (-1.5f64..1.5, -PI..PI, 0usize..2)
            .prop_map(|(r, phi, m)| (Stage::Squeeze { r, phi }, Some(m))),
        (0.01f64..0.99).prop_map(|eta| (Stage::BeamSplitter { eta }, None)),
        (-2.0f64..2.0, -2.0f64..2.0, 0usize..2)
            .prop_map(|(a, b, m)| (Stage::Displacement { alpha: c(a, b) }, Some(m))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn stage_chains_stay_symplectic(stages in prop::collection::vec(stage_strategy(), 1..8)) {
        let mut t = SymplecticTransform::identity(2);
        for (stage, mode) in stages {
            let s = symplectic_of(stage).unwrap();
            let s = match mode {
                Some(m) => s.embed(m, 2).unwrap(),
                None => s,
            };
            t = t.then(&s).unwrap();
        }
        let scale = t.matrix.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(t.symplectic_defect() <= 1e-12 * scale * scale);
    }

    #[test]
    fn conditioned_covariance_ignores_the_outcome(
        eta in 0.05f64..0.95, sigma in 0.2f64..4.0,
        alpha in (-1.0f64..1.0, -1.0f64..1.0), squeeze in 0.3f64..3.0, sq_phi in -PI..PI,
        x1 in -3.0f64..3.0, x2 in -3.0f64..3.0,
    ) {
        let p = SchemeParams::new(eta, sigma).unwrap();
        let oracle = SchemeOracle::new(&p, StageMask::ALL).unwrap();
        for g in [
            GaussianState::coherent(c(alpha.0, alpha.1)),
            GaussianState::squeezed_vacuum(squeeze, sq_phi).unwrap(),
        ] {
            let (_, a) = oracle.condition(&g, x1).unwrap();
            let (_, b) = oracle.condition(&g, x2).unwrap();
            prop_assert_eq!(a.cov(), b.cov());
            prop_assert!(a.uncertainty_margin().unwrap() >= -1e-12);
        }
    }
}
