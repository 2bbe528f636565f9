//! Mean/covariance calculus for Gaussian states; the closed-form reference
//! for densities, moments and conditioned states of the Fock path.
//!
//! Quadratures are ordered `(x_sys, y_sys, X_probe, Y_probe)` with `x = x_0`,
//! `y = x_{pi/2}`, vacuum variance 1/4 and `[x, y] = i/2`. The covariance is
//! the symmetrized `(<r_i r_j + r_j r_i>)/2 - <r_i><r_j>`.

use std::f64::consts::PI;

use ndarray::{array, s, Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::scheme::{self, SchemeParams, StageMask};

const UNCERTAINTY_TOL: f64 = 1e-10;
const SYMPLECTIC_TOL: f64 = 1e-12;

/// Block-diagonal symplectic form with `[[0, 1], [-1, 0]]` per mode.
pub fn symplectic_form(modes: usize) -> Array2<f64> {
    let mut j = Array2::zeros((2 * modes, 2 * modes));
    for m in 0..modes {
        j[[2 * m, 2 * m + 1]] = 1.0;
        j[[2 * m + 1, 2 * m]] = -1.0;
    }
    j
}

fn rotation(phi: f64) -> Array2<f64> {
    let (sn, c) = phi.sin_cos();
    array![[c, sn], [-sn, c]]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussianState {
    mean: Array1<f64>,
    cov: Array2<f64>,
}

impl GaussianState {
    pub fn new(mean: Array1<f64>, cov: Array2<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 || !n.is_multiple_of(2) || cov.dim() != (n, n) {
            return Err(Error::Dimension(format!(
                "mean of length {n} with covariance {:?}",
                cov.dim()
            )));
        }
        let asym = (&cov - &cov.t()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if asym > 1e-12 {
            return Err(Error::Parameter(format!(
                "covariance not symmetric ({asym:.2e})"
            )));
        }
        let state = GaussianState { mean, cov };
        let margin = state.uncertainty_margin()?;
        if margin < -UNCERTAINTY_TOL {
            return Err(Error::Parameter(format!(
                "covariance violates the uncertainty relation by {margin:.2e}"
            )));
        }
        Ok(state)
    }

    pub fn vacuum(modes: usize) -> Self {
        GaussianState {
            mean: Array1::zeros(2 * modes),
            cov: Array2::eye(2 * modes) * 0.25,
        }
    }

    pub fn coherent(alpha: C64) -> Self {
        GaussianState {
            mean: array![alpha.re, alpha.im],
            cov: Array2::eye(2) * 0.25,
        }
    }

    /// `var(x_phi) = sigma/4`, `var(x_{phi+pi/2}) = 1/(4 sigma)`.
    pub fn squeezed_vacuum(sigma: f64, phi: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "variance ratio sigma must be > 0, got {sigma}"
            )));
        }
        let r = rotation(phi);
        let d = Array2::from_diag(&array![sigma / 4.0, 1.0 / (4.0 * sigma)]);
        Ok(GaussianState {
            mean: Array1::zeros(2),
            cov: r.t().dot(&d).dot(&r),
        })
    }

    /// Tensor product, `self` first.
    pub fn product(&self, other: &GaussianState) -> GaussianState {
        let (n, m) = (self.mean.len(), other.mean.len());
        let mut mean = Array1::zeros(n + m);
        mean.slice_mut(s![..n]).assign(&self.mean);
        mean.slice_mut(s![n..]).assign(&other.mean);
        let mut cov = Array2::zeros((n + m, n + m));
        cov.slice_mut(s![..n, ..n]).assign(&self.cov);
        cov.slice_mut(s![n.., n..]).assign(&other.cov);
        GaussianState { mean, cov }
    }

    pub fn modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &Array2<f64> {
        &self.cov
    }

    /// Smallest eigenvalue of `cov + (i/4) J`; non-negative for physical states.
    pub fn uncertainty_margin(&self) -> Result<f64> {
        let j = symplectic_form(self.modes());
        let m = Array2::from_shape_fn(self.cov.dim(), |(a, b)| {
            C64::new(self.cov[[a, b]], 0.25 * j[[a, b]])
        });
        let (vals, _) = linalg::eigh(&m)?;
        Ok(vals[0])
    }

    /// `Tr rho^2 = 4^{-n} / sqrt(det cov)`.
    pub fn purity(&self) -> f64 {
        let det = determinant(&self.cov);
        0.25f64.powi(self.modes() as i32) / det.sqrt()
    }

    pub fn marginal(&self, mode: usize) -> Result<GaussianState> {
        if mode >= self.modes() {
            return Err(Error::Dimension(format!(
                "mode {mode} of a {}-mode state",
                self.modes()
            )));
        }
        let r = 2 * mode..2 * mode + 2;
        Ok(GaussianState {
            mean: self.mean.slice(s![r.clone()]).to_owned(),
            cov: self.cov.slice(s![r.clone(), r]).to_owned(),
        })
    }

    /// Mean and variance of `x_phi` on one mode.
    pub fn quadrature_moments(&self, mode: usize, phi: f64) -> Result<(f64, f64)> {
        let m = self.marginal(mode)?;
        let w = array![phi.cos(), phi.sin()];
        Ok((w.dot(&m.mean), w.dot(&m.cov.dot(&w))))
    }
}

fn determinant(a: &Array2<f64>) -> f64 {
    // small symmetric positive matrices only: product of eigenvalues
    linalg::eigh_real(a)
        .map(|(v, _)| v.iter().product())
        .unwrap_or(f64::NAN)
}

/// Affine phase-space map `r -> S r + d` (Heisenberg image of a Gaussian unitary).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymplecticTransform {
    pub matrix: Array2<f64>,
    pub displacement: Array1<f64>,
}

impl SymplecticTransform {
    pub fn identity(modes: usize) -> Self {
        SymplecticTransform {
            matrix: Array2::eye(2 * modes),
            displacement: Array1::zeros(2 * modes),
        }
    }

    pub fn modes(&self) -> usize {
        self.displacement.len() / 2
    }

    /// max |S J S^T - J|.
    pub fn symplectic_defect(&self) -> f64 {
        let j = symplectic_form(self.modes());
        let d = self.matrix.dot(&j).dot(&self.matrix.t()) - &j;
        d.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `other` applied after `self`.
    pub fn then(&self, other: &SymplecticTransform) -> Result<SymplecticTransform> {
        if self.modes() != other.modes() {
            return Err(Error::Dimension(
                "composing transforms on different mode counts".into(),
            ));
        }
        Ok(SymplecticTransform {
            matrix: other.matrix.dot(&self.matrix),
            displacement: other.matrix.dot(&self.displacement) + &other.displacement,
        })
    }

    /// Lifts a one-mode transform onto `mode` of a `modes`-mode system.
    pub fn embed(&self, mode: usize, modes: usize) -> Result<SymplecticTransform> {
        if self.modes() != 1 || mode >= modes {
            return Err(Error::Dimension(
                "embed needs a one-mode transform and a valid target".into(),
            ));
        }
        let mut out = SymplecticTransform::identity(modes);
        let r = 2 * mode..2 * mode + 2;
        out.matrix
            .slice_mut(s![r.clone(), r.clone()])
            .assign(&self.matrix);
        out.displacement.slice_mut(s![r]).assign(&self.displacement);
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stage {
    /// `S_phi(r)`: `x_phi -> e^r x_phi`, `x_{phi+pi/2} -> e^{-r} x_{phi+pi/2}`.
    Squeeze { r: f64, phi: f64 },
    /// Two-mode `U_BS(eta)`: `a -> sqrt(eta) a - sqrt(1-eta) b`, `b -> sqrt(eta) b + sqrt(1-eta) a`.
    BeamSplitter { eta: f64 },
    /// `D(alpha)`: `x -> x + Re alpha`, `y -> y + Im alpha`.
    Displacement { alpha: C64 },
}

pub fn symplectic_of(stage: Stage) -> Result<SymplecticTransform> {
    let t = match stage {
        Stage::Squeeze { r, phi } => {
            if !(r.is_finite() && phi.is_finite()) {
                return Err(Error::Parameter("squeeze parameters must be finite".into()));
            }
            let rot = rotation(phi);
            let d = Array2::from_diag(&array![r.exp(), (-r).exp()]);
            SymplecticTransform {
                matrix: rot.t().dot(&d).dot(&rot),
                displacement: Array1::zeros(2),
            }
        }
        Stage::BeamSplitter { eta } => {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::Parameter(format!(
                    "transmissivity must lie in (0,1], got {eta}"
                )));
            }
            let (t, u) = (eta.sqrt(), (1.0 - eta).sqrt());
            let matrix = array![
                [t, 0.0, -u, 0.0],
                [0.0, t, 0.0, -u],
                [u, 0.0, t, 0.0],
                [0.0, u, 0.0, t]
            ];
            SymplecticTransform {
                matrix,
                displacement: Array1::zeros(4),
            }
        }
        Stage::Displacement { alpha } => SymplecticTransform {
            matrix: Array2::eye(2),
            displacement: array![alpha.re, alpha.im],
        },
    };
    debug_assert!(t.symplectic_defect() < SYMPLECTIC_TOL);
    Ok(t)
}

/// `mean -> S mean + d`, `cov -> S cov S^T`.
pub fn evolve(state: &GaussianState, t: &SymplecticTransform) -> Result<GaussianState> {
    if state.modes() != t.modes() {
        return Err(Error::Dimension(format!(
            "{}-mode transform on a {}-mode state",
            t.modes(),
            state.modes()
        )));
    }
    Ok(GaussianState {
        mean: t.matrix.dot(&state.mean) + &t.displacement,
        cov: t.matrix.dot(&state.cov).dot(&t.matrix.t()),
    })
}

pub fn evolve_stage(state: &GaussianState, stage: Stage, mode: usize) -> Result<GaussianState> {
    let t = symplectic_of(stage)?;
    let t = if t.modes() == state.modes() {
        t
    } else {
        t.embed(mode, state.modes())?
    };
    evolve(state, &t)
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Homodyne measurement of `x_phase` on `mode` of a two-mode state: the
/// outcome density at `x` and the conditioned state of the other mode.
pub fn homodyne_condition_phase(
    state: &GaussianState,
    mode: usize,
    phase: f64,
    x: f64,
) -> Result<(f64, GaussianState)> {
    if state.modes() != 2 || mode > 1 {
        return Err(Error::Dimension(
            "homodyne conditioning needs a two-mode state".into(),
        ));
    }
    let other = 1 - mode;
    let w = array![phase.cos(), phase.sin()];
    let m = 2 * mode..2 * mode + 2;
    let o = 2 * other..2 * other + 2;
    let mean_m = state.mean.slice(s![m.clone()]).dot(&w);
    let var = w.dot(&state.cov.slice(s![m.clone(), m.clone()]).dot(&w));
    if !(var > 1e-300) {
        return Err(Error::DegenerateMeasurement { variance: var });
    }
    let cross = state.cov.slice(s![o.clone(), m]).dot(&w);
    let mean = state.mean.slice(s![o.clone()]).to_owned() + &cross.mapv(|c| c * (x - mean_m) / var);
    let cov_o = state.cov.slice(s![o.clone(), o]).to_owned();
    let outer = Array2::from_shape_fn((2, 2), |(i, j)| cross[i] * cross[j] / var);
    Ok((
        normal_pdf(x, mean_m, var),
        GaussianState {
            mean,
            cov: cov_o - outer,
        },
    ))
}

/// Homodyne on quadrature `index` of `(x_sys, y_sys, X_probe, Y_probe)`.
pub fn homodyne_condition(
    state: &GaussianState,
    index: usize,
    x: f64,
) -> Result<(f64, GaussianState)> {
    if index >= 4 {
        return Err(Error::Dimension(format!(
            "quadrature index {index} outside 0..4"
        )));
    }
    let phase = if index.is_multiple_of(2) {
        0.0
    } else {
        PI / 2.0
    };
    homodyne_condition_phase(state, index / 2, phase, x)
}

/// Closed-form image of the optical scheme for a Gaussian system state.
pub struct SchemeOracle {
    pub params: SchemeParams,
    pub mask: StageMask,
}

impl SchemeOracle {
    pub fn new(params: &SchemeParams, mask: StageMask) -> Result<Self> {
        params.validate()?;
        Ok(SchemeOracle {
            params: params.clone(),
            mask,
        })
    }

    /// Joint state after pre-squeeze and the beam splitter.
    pub fn coupled(&self, signal: &GaussianState) -> Result<GaussianState> {
        let p = &self.params;
        if signal.modes() != 1 {
            return Err(Error::Dimension("signal must be a one-mode state".into()));
        }
        let mut sys = signal.clone();
        if self.mask.presqueeze {
            sys = evolve_stage(
                &sys,
                Stage::Squeeze {
                    r: scheme::presqueeze_param(p.eta)?,
                    phi: p.phi,
                },
                0,
            )?;
        }
        let probe = GaussianState::squeezed_vacuum(p.sigma, p.phi_probe)?;
        evolve_stage(&sys.product(&probe), Stage::BeamSplitter { eta: p.eta }, 0)
    }

    /// Mean and variance of the measured outcome.
    pub fn outcome_moments(&self, signal: &GaussianState) -> Result<(f64, f64)> {
        self.coupled(signal)?
            .quadrature_moments(1, self.params.phi_probe)
    }

    pub fn outcome_density(&self, signal: &GaussianState, x: f64) -> Result<f64> {
        let (m, v) = self.outcome_moments(signal)?;
        Ok(normal_pdf(x, m, v))
    }

    /// Outcome density at `x` and the reduced system state after the enabled
    /// feedback and back-squeeze.
    pub fn condition(&self, signal: &GaussianState, x: f64) -> Result<(f64, GaussianState)> {
        let p = &self.params;
        let (density, mut post) =
            homodyne_condition_phase(&self.coupled(signal)?, 1, p.phi_probe, x)?;
        if self.mask.feedback {
            let alpha = scheme::feedback_displacement(x, p.eta, p.phi)?;
            post = evolve_stage(&post, Stage::Displacement { alpha }, 0)?;
        }
        if self.mask.backsqueeze {
            post = evolve_stage(
                &post,
                Stage::Squeeze {
                    r: scheme::backsqueeze_param(p.eta)?,
                    phi: p.phi,
                },
                0,
            )?;
        }
        Ok((density, post))
    }
}

/// Posterior of `x_phi` after a Gaussian von Neumann measurement with width `delta`:
/// `(mean, variance)` for prior `(prior_mean, prior_var)` and outcome `x`.
pub fn vn_posterior(prior_mean: f64, prior_var: f64, delta: f64, x: f64) -> (f64, f64) {
    let d2 = delta * delta;
    let var = 1.0 / (1.0 / prior_var + 1.0 / d2);
    let mean = (prior_mean * d2 + x * prior_var) / (prior_var + d2);
    (mean, var)
}

/// Predictive variance of a second measurement with the same device: `V + Delta^2`.
pub fn repeat_predictive_variance(prior_var: f64, delta: f64) -> f64 {
    vn_posterior(0.0, prior_var, delta, 0.0).1 + delta * delta
}

/// Moments of `y - x` for an ideal `x_phi` measurement `y` following the von
/// Neumann outcome `x`: `(mean, variance, slope of y on x)`.
pub fn repeatability_moments(prior_mean: f64, prior_var: f64, delta: f64) -> (f64, f64, f64) {
    let d2 = delta * delta;
    let gain = prior_var / (prior_var + d2);
    let (_, post_var) = vn_posterior(prior_mean, prior_var, delta, 0.0);
    // y - x = (gain - 1) x + const + N(0, post_var), x ~ N(prior_mean, prior_var + d2)
    let var = (gain - 1.0).powi(2) * (prior_var + d2) + post_var;
    (0.0, var, gain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{
        self, make_beam_splitter, make_quadrature, make_squeeze, JointState, JointUnitary,
        StateVector,
    };

    /// Covariance of a Fock-space state over the quadratures (x, y) of each mode.
    fn fock_moments(psi: &StateVector) -> (Array1<f64>, Array2<f64>) {
        let n = psi.cutoff();
        let qs = [
            make_quadrature(0.0, n).unwrap(),
            make_quadrature(PI / 2.0, n).unwrap(),
        ];
        let mean = Array1::from_iter(qs.iter().map(|q| psi.expectation(q.matrix()).re));
        let cov = Array2::from_shape_fn((2, 2), |(i, j)| {
            let sym = qs[i].matrix().dot(qs[j].matrix()) + qs[j].matrix().dot(qs[i].matrix());
            0.5 * psi.expectation(&sym).re - mean[i] * mean[j]
        });
        (mean, cov)
    }

    fn max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn stages_are_symplectic() {
        for stage in [
            Stage::Squeeze { r: 0.7, phi: 0.4 },
            Stage::BeamSplitter { eta: 0.3 },
            Stage::Displacement {
                alpha: C64::new(0.2, -1.0),
            },
        ] {
            assert!(symplectic_of(stage).unwrap().symplectic_defect() < 1e-12);
        }
        let id = symplectic_of(Stage::Squeeze { r: 0.0, phi: 1.0 }).unwrap();
        assert!(max_diff(&id.matrix, &Array2::eye(2)) < 1e-15);
    }

    #[test]
    fn near_unit_beam_splitter() {
        let eps: f64 = 1e-6;
        let t = symplectic_of(Stage::BeamSplitter { eta: 1.0 - eps }).unwrap();
        assert!((t.matrix[[0, 2]].abs() - eps.sqrt()).abs() < 1e-12);
        assert!((t.matrix[[0, 0]] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn squeeze_matches_fock() {
        let n = 60;
        let g = evolve_stage(
            &GaussianState::vacuum(1),
            Stage::Squeeze { r: 0.3, phi: 0.0 },
            0,
        )
        .unwrap();
        assert!((g.cov()[[0, 0]] - 0.6f64.exp() / 4.0).abs() < 1e-15);
        let psi = StateVector::vacuum(n)
            .unwrap()
            .evolve(&make_squeeze(0.3, 0.0, n).unwrap())
            .unwrap();
        let (_, cov) = fock_moments(&psi);
        assert!(max_diff(&cov, g.cov()) < 1e-8);

        let g = evolve_stage(
            &GaussianState::coherent(C64::new(0.3, 0.2)),
            Stage::Squeeze { r: -0.4, phi: 0.9 },
            0,
        )
        .unwrap();
        let psi = fock::coherent_state(C64::new(0.3, 0.2), n)
            .unwrap()
            .evolve(&make_squeeze(-0.4, 0.9, n).unwrap())
            .unwrap();
        let (mean, cov) = fock_moments(&psi);
        assert!(max_diff(&cov, g.cov()) < 1e-8);
        assert!((&mean - g.mean()).iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn beam_splitter_then_squeeze_matches_fock() {
        // coherent signal and vacuum probe through BS(0.36), then squeeze(0.2) on the system
        let n = 30;
        let alpha = C64::new(0.8, -0.3);
        let g = GaussianState::coherent(alpha).product(&GaussianState::vacuum(1));
        let g = evolve_stage(&g, Stage::BeamSplitter { eta: 0.36 }, 0).unwrap();
        let g = evolve_stage(&g, Stage::Squeeze { r: 0.2, phi: 0.0 }, 0).unwrap();

        let joint = JointState::product(
            &fock::coherent_state(alpha, n).unwrap(),
            &StateVector::vacuum(n).unwrap(),
        );
        let bs = make_beam_splitter(0.36, n).unwrap();
        let out = bs.apply(joint.amplitudes());
        let rho_sys = fock::partial_trace_pure(
            &JointState::from_amplitudes(out, n, n).unwrap(),
            fock::Mode::System,
        )
        .unwrap();
        let s = make_squeeze(0.2, 0.0, n).unwrap().into_matrix();
        let rho = rho_sys.conjugate(&s).unwrap();
        let x = make_quadrature(0.0, n).unwrap();
        let x2 = x.matrix().dot(x.matrix());
        let mx = rho.expectation(x.matrix()).re;
        assert!((mx - g.mean()[0]).abs() < 1e-8);
        assert!((rho.expectation(&x2).re - mx * mx - g.cov()[[0, 0]]).abs() < 1e-8);
    }

    #[test]
    fn purity_and_uncertainty() {
        let g = GaussianState::squeezed_vacuum(3.0, 0.4).unwrap();
        assert!((g.purity() - 1.0).abs() < 1e-12);
        let g2 = evolve_stage(
            &g.product(&GaussianState::vacuum(1)),
            Stage::BeamSplitter { eta: 0.3 },
            0,
        )
        .unwrap();
        assert!((g2.purity() - 1.0).abs() < 1e-12);
        assert!(g2.uncertainty_margin().unwrap() > -1e-12);
        assert!(g2.marginal(0).unwrap().purity() < 1.0);
        let bad = GaussianState::new(Array1::zeros(2), Array2::eye(2) * 0.1);
        assert!(bad.is_err());
    }

    #[test]
    fn conditioning_cases() {
        // uncorrelated modes: conditioned state is the prior marginal
        let a = GaussianState::coherent(C64::new(0.5, 0.1));
        let joint = a.product(&GaussianState::squeezed_vacuum(0.5, 0.0).unwrap());
        let (_, post) = homodyne_condition(&joint, 2, 0.7).unwrap();
        assert_eq!(post, a);

        // conditioned covariance does not depend on the outcome
        let g = evolve_stage(&joint, Stage::BeamSplitter { eta: 0.4 }, 0).unwrap();
        let (_, p1) = homodyne_condition(&g, 2, -1.0).unwrap();
        let (_, p2) = homodyne_condition(&g, 2, 2.5).unwrap();
        assert_eq!(p1.cov(), p2.cov());

        let degenerate = GaussianState {
            mean: Array1::zeros(4),
            cov: Array2::zeros((4, 4)),
        };
        assert!(matches!(
            homodyne_condition(&degenerate, 0, 0.0),
            Err(Error::DegenerateMeasurement { .. })
        ));
    }

    #[test]
    fn posterior_slope() {
        let (m, v) = vn_posterior(0.0, 0.25, 0.25, 1.0);
        assert!((m - 0.8).abs() < 1e-15);
        assert!((v - 1.0 / (4.0 + 16.0)).abs() < 1e-15);
        let (_, var, slope) = repeatability_moments(0.0, 0.25, 0.25);
        assert!((slope - 0.8).abs() < 1e-15);
        assert!((var - 0.0625).abs() < 1e-15);
        assert!((repeat_predictive_variance(0.25, 0.25) - (0.05 + 0.0625)).abs() < 1e-15);
    }

    #[test]
    fn scheme_oracle_reproduces_width_law() {
        for &(eta, sigma) in &[(0.5, 1.0), (0.2, 0.5), (0.8, 2.0)] {
            let p = SchemeParams::new(eta, sigma).unwrap();
            let delta = p.delta();
            let o = SchemeOracle::new(&p, StageMask::ALL).unwrap();
            let vac = GaussianState::vacuum(1);
            let (mean, var) = o.outcome_moments(&vac).unwrap();
            assert!(mean.abs() < 1e-15);
            assert!((var - (0.25 + delta * delta)).abs() < 1e-14);
            let (_, post) = o.condition(&vac, 0.6).unwrap();
            let (pm, pv) = vn_posterior(0.0, 0.25, delta, 0.6);
            let (qm, qv) = post.quadrature_moments(0, 0.0).unwrap();
            assert!((qm - pm).abs() < 1e-13 && (qv - pv).abs() < 1e-13);
            assert!((post.purity() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn raw_oracle_width_without_presqueeze() {
        // without pre-squeeze the outcome is sqrt(1-eta) x + noise of variance eta sigma / 4
        let p = SchemeParams::new(0.3, 1.2).unwrap();
        let o = SchemeOracle::new(&p, StageMask::NONE).unwrap();
        let (_, var) = o.outcome_moments(&GaussianState::vacuum(1)).unwrap();
        assert!((var - (0.7 * 0.25 + 0.3 * 1.2 / 4.0)).abs() < 1e-15);
    }
}
