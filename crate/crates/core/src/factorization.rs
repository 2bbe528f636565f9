//! Disentangled form of the beam-splitter unitary.
//!
//! With `J+ = 2i y X`, `J- = 2i x Y`, `Jz = i(X Y - x y)` (lower case: system,
//! upper case: probe, all at one phase) the beam splitter is `exp[theta (J+ - J-)]`
//! and factorizes as `exp(k J+) eta^{-Jz} exp(-k J-)` with `k = tan theta`.
//!
//! All three factors are tensor-structured, so they are applied to joint vectors
//! reshaped as `system x probe` matrices: `(A (x) B) v <-> A V B^T`.

use std::f64::consts::FRAC_PI_2;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{self, BeamSplitter, JointUnitary, QuadratureSpectrum};
use crate::linalg::{self, expm, C64, I};

/// Total photon number bounding the comparison block.
pub const BLOCK_TOTAL: usize = 10;

#[derive(Clone, Debug, Serialize)]
pub struct FactorizationReport {
    pub eta: f64,
    pub cutoff: usize,
    pub block_total: usize,
    /// max |U - RHS| over rows and columns with `n_sys + n_probe <= block_total`.
    pub deviation: f64,
    /// Same, over full columns.
    pub column_deviation: f64,
    /// Block deviation with every factor truncated at `cutoff`.
    pub strict_deviation: f64,
    /// ||[J+, J-] - 2 Jz||, ||[Jz, J+] - J+||, ||[Jz, J-] + J-|| on the guarded block.
    pub commutator_defects: [f64; 3],
    /// Difference between the symmetrized and the plain-ordered middle factor.
    pub ordering_defect: f64,
}

impl FactorizationReport {
    pub fn max_commutator_defect(&self) -> f64 {
        self.commutator_defects.iter().cloned().fold(0.0, f64::max)
    }
}

/// `exp(c A (x) B)` for Hermitian `A`, `B` given by their spectra.
struct TensorExp {
    left: QuadratureSpectrum,
    right: QuadratureSpectrum,
    c: C64,
}

impl TensorExp {
    fn apply(&self, v: &Array2<C64>) -> Array2<C64> {
        let (va, la) = (self.left.eigenvectors(), self.left.eigenvalues());
        let (vb, lb) = (self.right.eigenvectors(), self.right.eigenvalues());
        let mut w = linalg::dagger(va).dot(v).dot(&vb.mapv(|z| z.conj()));
        for ((i, j), z) in w.indexed_iter_mut() {
            *z *= (self.c * la[i] * lb[j]).exp();
        }
        va.dot(&w).dot(&vb.t())
    }
}

fn unit(n: usize, m: usize, k: usize) -> Array2<C64> {
    let mut v = Array2::zeros((n, n));
    v[[m, k]] = C64::new(1.0, 0.0);
    v
}

fn block_indices(n: usize, total: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for m in 0..n {
        for k in 0..n {
            if m + k <= total {
                out.push((m, k));
            }
        }
    }
    out
}

/// Oversampling of the basis the three factors are represented in.
pub const WORK_FACTOR: usize = 2;

/// Compares the beam splitter with its three-factor form at quadrature phase `phi`.
///
/// `exp(k J+-)` do not conserve photon number, so truncating each factor at
/// `cutoff` corrupts the product even on low blocks. The factors are therefore
/// represented with `WORK_FACTOR * cutoff` levels per mode and the product is
/// compared on the block; the all-at-cutoff figure is kept as `strict_deviation`.
pub fn verify_bch_factorization(eta: f64, cutoff: usize, phi: f64) -> Result<FactorizationReport> {
    if cutoff < 2 * BLOCK_TOTAL {
        return Err(Error::Parameter(format!(
            "cutoff {cutoff} too small for the comparison block"
        )));
    }
    let work = block_comparison(eta, WORK_FACTOR * cutoff, phi)?;
    let strict = block_comparison(eta, cutoff, phi)?;
    Ok(FactorizationReport {
        eta,
        cutoff,
        block_total: BLOCK_TOTAL,
        deviation: work.0,
        column_deviation: work.1,
        strict_deviation: strict.0,
        commutator_defects: su2_commutator_defects(phi, cutoff)?,
        ordering_defect: work.2,
    })
}

/// (block deviation, column deviation, ordering defect) with every factor at `n` levels.
fn block_comparison(eta: f64, n: usize, phi: f64) -> Result<(f64, f64, f64)> {
    let theta = fock::mixing_angle(eta)?;
    let k = theta.tan();
    let ln_eta = eta.ln();

    let sx = QuadratureSpectrum::new(phi, n)?;
    let sy = QuadratureSpectrum::new(phi + FRAC_PI_2, n)?;
    let plus = TensorExp {
        left: sy.clone(),
        right: sx.clone(),
        c: I * (2.0 * k),
    };
    let minus = TensorExp {
        left: sx,
        right: sy,
        c: -I * (2.0 * k),
    };

    // eta^{-Jz} = exp(i ln(eta) x y) (x) exp(-i ln(eta) X Y), symmetrized ordering.
    let mid_sys = expm(&fock::squeeze_generator(-0.5 * ln_eta, phi, n))?;
    let mid_probe = expm(&fock::squeeze_generator(0.5 * ln_eta, phi, n))?;

    let x = fock::quadrature_matrix(phi, n);
    let y = fock::quadrature_matrix(phi + FRAC_PI_2, n);
    let xy = x.dot(&y);
    let plain_sys = expm(&xy.mapv(|z| z * I * ln_eta))?;
    let plain_probe = expm(&xy.mapv(|z| z * (-I) * ln_eta))?;

    let bs = BeamSplitter::with_max_total(eta, n, n, n - 1)?;
    let mut deviation = 0.0f64;
    let mut column_deviation = 0.0f64;
    let mut ordering_defect = 0.0f64;
    for (m, q) in block_indices(n, BLOCK_TOTAL) {
        let v = unit(n, m, q);
        let after_minus = minus.apply(&v);
        let rhs = plus.apply(&mid_sys.dot(&after_minus).dot(&mid_probe.t()));
        let plain = plus.apply(&plain_sys.dot(&after_minus).dot(&plain_probe.t()));

        let mut flat = ndarray::Array1::zeros(n * n);
        flat[m * n + q] = C64::new(1.0, 0.0);
        let lhs = bs
            .apply(&flat)
            .into_shape_with_order((n, n))
            .expect("joint layout is system-major");

        for ((i, j), z) in lhs.indexed_iter() {
            let d = (z - rhs[[i, j]]).norm();
            column_deviation = column_deviation.max(d);
            if i + j <= BLOCK_TOTAL {
                deviation = deviation.max(d);
                ordering_defect = ordering_defect.max((rhs[[i, j]] - plain[[i, j]]).norm());
            }
        }
    }
    Ok((deviation, column_deviation, ordering_defect))
}

/// Dense `J+`, `J-`, `Jz` on the joint space.
pub fn su2_generators(phi: f64, cutoff: usize) -> Result<[Array2<C64>; 3]> {
    fock::Cutoff::new(cutoff)?;
    let x = fock::quadrature_matrix(phi, cutoff);
    let y = fock::quadrature_matrix(phi + FRAC_PI_2, cutoff);
    let id = Array2::<C64>::eye(cutoff);
    let two_i = I * 2.0;
    let jp = linalg::kron(&y, &x).mapv(|z| z * two_i);
    let jm = linalg::kron(&x, &y).mapv(|z| z * two_i);
    let jz = (linalg::kron(&id, &x.dot(&y)) - linalg::kron(&x.dot(&y), &id)).mapv(|z| z * I);
    Ok([jp, jm, jz])
}

/// Commutators evaluated through `[A (x) B, C (x) D] = AC (x) BD - CA (x) DB`,
/// which needs only single-mode products.
fn su2_commutator_defects(phi: f64, cutoff: usize) -> Result<[f64; 3]> {
    let [jp, jm, jz] = su2_generators(phi, cutoff)?;
    let x = fock::quadrature_matrix(phi, cutoff);
    let y = fock::quadrature_matrix(phi + FRAC_PI_2, cutoff);
    let xy = x.dot(&y);
    let kron = linalg::kron;
    let scale = |a: Array2<C64>, c: f64| a.mapv(|z| z * c);
    // [J+, J-] = -4 (y x (x) X Y - x y (x) Y X)
    let c1 = scale(kron(&y.dot(&x), &xy) - kron(&xy, &y.dot(&x)), -4.0);
    // [Jz, J+] = -2 (y (x) [XY, X] - [xy, y] (x) X)
    let c2 = scale(
        kron(&y, &linalg::commutator(&xy, &x)) - kron(&linalg::commutator(&xy, &y), &x),
        -2.0,
    );
    // [Jz, J-] = -2 (x (x) [XY, Y] - [xy, x] (x) Y)
    let c3 = scale(
        kron(&x, &linalg::commutator(&xy, &y)) - kron(&linalg::commutator(&xy, &x), &y),
        -2.0,
    );

    let guarded = fock::Cutoff::new(cutoff)?.guarded();
    let inside = |idx: usize| idx / cutoff < guarded && idx % cutoff < guarded;
    let worst = |a: &Array2<C64>, b: &Array2<C64>| {
        let mut w = 0.0f64;
        for ((i, j), z) in a.indexed_iter() {
            if inside(i) && inside(j) {
                w = w.max((z - b[[i, j]]).norm());
            }
        }
        w
    };
    Ok([
        worst(&c1, &jz.mapv(|z| z * 2.0)),
        worst(&c2, &jp),
        worst(&c3, &jm.mapv(|z| -z)),
    ])
}

#[derive(Clone, Debug, Serialize)]
pub struct GeneratorReport {
    pub eta: f64,
    pub cutoff: usize,
    /// max |theta (a b^dag - a^dag b) - 2 i theta (y X - x Y)| over all entries.
    pub deviation: f64,
}

/// Ladder and quadrature forms of the beam-splitter generator.
pub fn verify_generator_forms(eta: f64, cutoff: usize, phi: f64) -> Result<GeneratorReport> {
    let theta = fock::mixing_angle(eta)?;
    fock::Cutoff::new(cutoff)?;
    let a = fock::annihilation_matrix(cutoff);
    let ad = linalg::dagger(&a);
    let ladder = (linalg::kron(&a, &ad) - linalg::kron(&ad, &a)).mapv(|z| z * theta);
    let quad = fock::beam_splitter_quadrature_generator(eta, phi, cutoff)?;
    let n = cutoff * cutoff;
    Ok(GeneratorReport {
        eta,
        cutoff,
        deviation: linalg::max_abs_diff(ladder.view(), quad.view(), n, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorization_holds_on_block() {
        for &eta in &[0.3, 0.5, 0.7] {
            let r = verify_bch_factorization(eta, 40, 0.0).unwrap();
            assert!(r.deviation < 1e-8, "eta {eta}: {:.3e}", r.deviation);
            assert!(r.max_commutator_defect() < 1e-10);
            assert!(r.ordering_defect < 1e-8);
        }
    }

    #[test]
    fn factorization_at_other_phase() {
        let r = verify_bch_factorization(0.4, 40, 0.9).unwrap();
        assert!(r.deviation < 1e-8, "{:.3e}", r.deviation);
    }

    #[test]
    fn near_unit_transmissivity_factors_are_identity() {
        let r = verify_bch_factorization(1.0 - 1e-9, 24, 0.0).unwrap();
        assert!(r.deviation < 1e-6);
        let theta = fock::mixing_angle(1.0 - 1e-9).unwrap();
        assert!(theta.tan() < 1e-4 && (1.0 - 1e-9f64).ln().abs() < 1e-8);
    }

    #[test]
    fn generator_forms_agree() {
        let r = verify_generator_forms(0.5, 40, 0.0).unwrap();
        assert!(r.deviation < 1e-10);
        let r = verify_generator_forms(0.3, 12, 1.1).unwrap();
        assert!(r.deviation < 1e-10);
    }
}
