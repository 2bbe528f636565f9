//! The optical von Neumann scheme: pre-squeeze, beam-splitter coupling to a
//! squeezed probe, homodyne detection of the probe, feedback displacement and
//! back-squeeze, composed in the Fock basis and compared to the Gaussian target.
//!
//! Phases: the system quadrature is `x_phi`, the probe is squeezed and measured
//! along the same phase, feedback displaces along `e^{i phi}` and every squeeze
//! stage acts on `x_phi`.

use std::f64::consts::FRAC_PI_2;

use ndarray::{s, Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{
    self, BeamSplitterPropagator, DisplacementLine, QuadratureSpectrum, StateVector,
};
use crate::linalg::{self, C64};
use crate::measurement::{
    self, BoundContraction, InteractionContraction, OutcomeDensity, OutcomeGrid, PomDensity,
    Provenance, ReductionFamily, VnTarget,
};

/// Fock block on which scheme identities are asserted (`n <= 15`).
pub const DEFAULT_BLOCK: usize = 16;
/// Elementwise tolerance for composed-pipeline identities.
pub const PIPELINE_TOL: f64 = 1e-6;
/// Tolerance for single-factor identities and POM invariance.
pub const FACTOR_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct SchemeParams {
    pub eta: f64,
    pub sigma: f64,
    pub phi: f64,
    pub phi_probe: f64,
    /// Fock cutoff of the reported system operators.
    pub cutoff: usize,
    pub grid: OutcomeGrid,
    /// Leading system levels the family is built on.
    pub block: usize,
    /// Internal cutoff for intermediate states; chosen automatically when `None`.
    pub work_cutoff: Option<usize>,
}

impl SchemeParams {
    /// Defaults: `phi = phi_probe = 0`, cutoff 60, grid `[-8, 8]` with `h = 0.02`, block 16.
    pub fn new(eta: f64, sigma: f64) -> Result<Self> {
        let p = SchemeParams {
            eta,
            sigma,
            phi: 0.0,
            phi_probe: 0.0,
            cutoff: fock::DEFAULT_CUTOFF,
            grid: OutcomeGrid::new(-8.0, 8.0, 0.02)?,
            block: DEFAULT_BLOCK,
            work_cutoff: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_phase(mut self, phi: f64) -> Self {
        self.phi = phi;
        self.phi_probe = phi;
        self
    }

    pub fn with_grid(mut self, grid: OutcomeGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_block(mut self, block: usize) -> Self {
        self.block = block;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Parameter(format!(
                "transmissivity must lie in (0,1), got {}",
                self.eta
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "variance ratio sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if !(self.phi.is_finite() && self.phi_probe.is_finite()) {
            return Err(Error::Parameter("phases must be finite".into()));
        }
        fock::Cutoff::new(self.cutoff)?;
        if self.block == 0 || self.block > self.cutoff {
            return Err(Error::Parameter(format!(
                "block {} outside 1..={}",
                self.block, self.cutoff
            )));
        }
        if let Some(w) = self.work_cutoff {
            if w < self.cutoff {
                return Err(Error::Parameter(format!(
                    "work cutoff {w} below cutoff {}",
                    self.cutoff
                )));
            }
        }
        Ok(())
    }

    /// `Delta = sqrt(eta sigma) / 2`.
    pub fn delta(&self) -> f64 {
        (self.eta * self.sigma).sqrt() / 2.0
    }

    /// Feedback gain `k = sqrt((1-eta)/eta)`.
    pub fn feedback_gain(&self) -> f64 {
        ((1.0 - self.eta) / self.eta).sqrt()
    }

    /// Internal cutoff: explicit value, or a size that holds the squeezed and
    /// displaced intermediates of the block.
    pub fn resolved_work_cutoff(&self) -> usize {
        if let Some(w) = self.work_cutoff {
            return w;
        }
        self.resolved_work_cutoff_auto()
    }

    pub fn resolved_work_cutoff_auto(&self) -> usize {
        let r_max = presqueeze_param(self.eta)
            .unwrap_or(0.0)
            .max(backsqueeze_param(self.eta).unwrap_or(0.0).abs())
            .max(0.5 * self.eta.ln().abs());
        let spread = (2.0 * r_max).cosh();
        let reach = self.grid.x_min.abs().max(self.grid.x_max.abs()).min(3.0);
        let shift = (self.feedback_gain() * reach).powi(2);
        let need = (2.0 * self.block as f64 + 1.0) * spread + shift;
        // Squeezed states fall off like tanh(r)^n; strong probe or output
        // squeezing needs more levels than the mean photon number suggests.
        let r_tail = (0.5 * self.sigma.ln().abs()).max(-0.5 * (4.0 * self.delta().powi(2)).ln());
        let tail = if r_tail > 0.0 {
            25.0 / -r_tail.tanh().ln()
        } else {
            0.0
        };
        let w = ((1.2 * need).ceil() as usize + 40).max(tail.ceil() as usize + 20);
        w.next_multiple_of(10).max(self.cutoff + 20)
    }
}

fn ensure_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Parameter(format!(
            "transmissivity must lie in (0,1), got {eta}"
        )));
    }
    Ok(())
}

/// Pre-squeeze parameter `r = -ln(1-eta)/2`.
pub fn presqueeze_param(eta: f64) -> Result<f64> {
    ensure_eta(eta)?;
    Ok(-0.5 * (1.0 - eta).ln())
}

/// Back-squeeze parameter `ln(eta (1-eta))/2`; the stage applied is `S_phi(r_back)`.
pub fn backsqueeze_param(eta: f64) -> Result<f64> {
    ensure_eta(eta)?;
    Ok(0.5 * (eta * (1.0 - eta)).ln())
}

/// Feedback amplitude `sqrt((1-eta)/eta) x e^{i phi}`.
pub fn feedback_displacement(x: f64, eta: f64, phi: f64) -> Result<C64> {
    ensure_eta(eta)?;
    Ok(C64::from_polar(((1.0 - eta) / eta).sqrt() * x, phi))
}

/// One phase-sensitive amplifier: gain `G` on the quadrature at `pump_phase`,
/// `x'_psi = G^{-1/2} x_psi`, i.e. the squeezer `S_psi(-ln G / 2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsaStage {
    pub gain: f64,
    pub pump_phase: f64,
}

impl PsaStage {
    pub fn squeeze_parameter(&self) -> f64 {
        -0.5 * self.gain.ln()
    }

    pub fn operator(&self, cutoff: usize) -> Result<Array2<C64>> {
        Ok(fock::make_squeeze(self.squeeze_parameter(), self.pump_phase, cutoff)?.into_matrix())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsaSpec {
    /// Pre-squeeze, gain `(1-eta)^{-1}`.
    pub pre: PsaStage,
    /// Back-squeeze, gain `eta (1-eta)`.
    pub back: PsaStage,
    /// Probe preparation from vacuum, gain `sigma`.
    pub probe: PsaStage,
}

impl PsaSpec {
    pub fn gains(&self) -> (f64, f64, f64) {
        (self.pre.gain, self.back.gain, self.probe.gain)
    }
}

/// Every stage is pumped on the quadrature conjugate to the measured one, so
/// `S_{phi+pi/2}(-ln G/2) = S_phi(ln G/2)`.
pub fn psa_from_params(params: &SchemeParams) -> Result<PsaSpec> {
    params.validate()?;
    let eta = params.eta;
    Ok(PsaSpec {
        pre: PsaStage {
            gain: 1.0 / (1.0 - eta),
            pump_phase: params.phi + FRAC_PI_2,
        },
        back: PsaStage {
            gain: eta * (1.0 - eta),
            pump_phase: params.phi + FRAC_PI_2,
        },
        probe: PsaStage {
            gain: params.sigma,
            pump_phase: params.phi_probe + FRAC_PI_2,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum FeedbackSpec {
    Ideal,
    FiniteLo { beta_re: f64, beta_im: f64 },
}

impl FeedbackSpec {
    pub fn finite_lo(beta: C64) -> Self {
        FeedbackSpec::FiniteLo {
            beta_re: beta.re,
            beta_im: beta.im,
        }
    }

    /// Cell transmissivity solving `|beta| sqrt(1-theta) = sqrt((1-eta)/eta) |x|`.
    pub fn theta(&self, x: f64, eta: f64) -> Result<f64> {
        match *self {
            FeedbackSpec::Ideal => Err(Error::Parameter(
                "ideal feedback has no cell transmissivity".into(),
            )),
            FeedbackSpec::FiniteLo { beta_re, beta_im } => {
                theta_law(x, eta, C64::new(beta_re, beta_im).norm())
            }
        }
    }
}

/// `theta(x) = 1 - (k x / |beta|)^2`; infeasible when `k |x| > |beta|`.
pub fn theta_law(x: f64, eta: f64, beta_abs: f64) -> Result<f64> {
    ensure_eta(eta)?;
    let required = ((1.0 - eta) / eta).sqrt() * x.abs();
    if !(beta_abs > 0.0) || required > beta_abs {
        return Err(Error::InfeasibleFeedback {
            required,
            beta: beta_abs,
        });
    }
    Ok(1.0 - (required / beta_abs).powi(2))
}

/// Which compensation stages are switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StageMask {
    pub presqueeze: bool,
    pub feedback: bool,
    pub backsqueeze: bool,
}

impl StageMask {
    pub const ALL: StageMask = StageMask {
        presqueeze: true,
        feedback: true,
        backsqueeze: true,
    };
    pub const NONE: StageMask = StageMask {
        presqueeze: false,
        feedback: false,
        backsqueeze: false,
    };

    /// All eight masks in a fixed order.
    pub fn all_masks() -> Vec<StageMask> {
        (0..8u8)
            .map(|b| StageMask {
                presqueeze: b & 1 != 0,
                feedback: b & 2 != 0,
                backsqueeze: b & 4 != 0,
            })
            .collect()
    }

    pub fn provenance(&self) -> Provenance {
        match (self.presqueeze, self.feedback, self.backsqueeze) {
            (false, false, false) => Provenance::RawInteraction,
            (true, true, true) => Provenance::Compensated,
            _ => Provenance::PartiallyCompensated,
        }
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.presqueeze {
            parts.push("presqueeze");
        }
        if self.feedback {
            parts.push("feedback");
        }
        if self.backsqueeze {
            parts.push("backsqueeze");
        }
        if parts.is_empty() {
            "raw".into()
        } else {
            parts.join("+")
        }
    }
}

/// The scheme assembled in the Fock basis. Building it runs the beam splitter
/// once per block column; `omega` is then cheap for any outcome.
pub struct Scheme {
    pub params: SchemeParams,
    pub mask: StageMask,
    work: usize,
    contraction: InteractionContraction,
    feedback: DisplacementLine,
    back: Option<Array2<C64>>,
}

impl Scheme {
    pub fn new(params: &SchemeParams, mask: StageMask) -> Result<Self> {
        params.validate()?;
        let work = params.resolved_work_cutoff();
        let psa = psa_from_params(params)?;
        let block = params.block;

        let inputs = if mask.presqueeze {
            psa.pre.operator(work)?.slice(s![.., ..block]).to_owned()
        } else {
            let mut id = Array2::<C64>::zeros((work, block));
            for n in 0..block {
                id[[n, n]] = C64::new(1.0, 0.0);
            }
            id
        };

        let probe = {
            let vac = StateVector::vacuum(work)?;
            vac.evolve(&fock::Operator::single(psa.probe.operator(work)?)?)?
        };

        // Weight above `work` in any sector is dropped; the margin in the work
        // cutoff keeps it negligible.
        let bs = BeamSplitterPropagator::with_max_total(params.eta, work, work, work - 1)?;
        let contraction =
            InteractionContraction::from_inputs(&bs, &probe, params.phi_probe, &inputs)?;
        let feedback = DisplacementLine::new(params.phi, work)?;
        let back = if mask.backsqueeze {
            Some(psa.back.operator(work)?)
        } else {
            None
        };
        Ok(Scheme {
            params: params.clone(),
            mask,
            work,
            contraction,
            feedback,
            back,
        })
    }

    pub fn work_cutoff(&self) -> usize {
        self.work
    }

    /// The `work x block` operator before cropping.
    pub fn omega_full(&self, x: f64) -> Array2<C64> {
        let mut m = self.contraction.omega(x);
        if self.mask.feedback {
            m = self.feedback.apply(self.params.feedback_gain() * x, &m);
        }
        if let Some(b) = &self.back {
            m = b.dot(&m);
        }
        m
    }

    /// `cutoff x block` reduction operator for outcome `x`.
    pub fn omega(&self, x: f64) -> Array2<C64> {
        self.omega_full(x)
            .slice(s![..self.params.cutoff, ..])
            .to_owned()
    }

    pub fn family(&self, grid: &OutcomeGrid) -> Result<ReductionFamily> {
        let ops = grid.values().iter().map(|&x| self.omega(x)).collect();
        ReductionFamily::new(grid.clone(), ops, self.mask.provenance())
    }

    /// Binds the scheme to one input state, supported on the leading `block` levels.
    pub fn bind(&self, psi: &StateVector) -> Result<BoundScheme<'_>> {
        let block = self.params.block;
        let amps = psi.amplitudes();
        let tail: f64 = amps.iter().skip(block).map(|z| z.norm_sqr()).sum();
        if tail > 1e-12 {
            return Err(Error::Dimension(format!(
                "input has weight {tail:.2e} above the {block}-level block"
            )));
        }
        let mut v = ndarray::Array1::<C64>::zeros(block);
        let n = block.min(amps.len());
        v.slice_mut(s![..n]).assign(&amps.slice(s![..n]));
        Ok(BoundScheme {
            scheme: self,
            bound: self.contraction.bind(&v)?,
        })
    }

    /// Family with all `work` output rows; POMs from it are free of row cropping.
    pub fn family_full(&self, grid: &OutcomeGrid) -> Result<ReductionFamily> {
        let ops = grid.values().iter().map(|&x| self.omega_full(x)).collect();
        ReductionFamily::new(grid.clone(), ops, self.mask.provenance())
    }
}

/// A scheme applied to a fixed input; every stage acts on `work`-level vectors.
pub struct BoundScheme<'a> {
    scheme: &'a Scheme,
    bound: BoundContraction,
}

impl BoundScheme<'_> {
    pub fn work_cutoff(&self) -> usize {
        self.scheme.work
    }

    pub fn params(&self) -> &SchemeParams {
        &self.scheme.params
    }

    pub fn mask(&self) -> StageMask {
        self.scheme.mask
    }

    /// Outcome density `||Omega(x) psi||^2`; the unitary stages after detection do not change it.
    pub fn outcome_density(&self, grid: &OutcomeGrid) -> Result<OutcomeDensity> {
        self.bound.density(grid)
    }

    /// Post-detection vector, pre-squeeze included when enabled, before feedback.
    pub fn detected(&self, x: f64) -> Array1<C64> {
        self.bound.apply(x)
    }

    /// `D(t e^{i phi}) v`.
    pub fn displace(&self, t: f64, v: &Array1<C64>) -> Array1<C64> {
        self.scheme.feedback.apply_vector(t, v)
    }

    /// Back-squeeze when enabled, identity otherwise.
    pub fn back(&self, v: Array1<C64>) -> Array1<C64> {
        match &self.scheme.back {
            Some(b) => b.dot(&v),
            None => v,
        }
    }

    /// `Omega(x) psi` with ideal feedback when the mask enables it.
    pub fn apply(&self, x: f64) -> Array1<C64> {
        let mut v = self.detected(x);
        if self.scheme.mask.feedback {
            v = self.displace(self.scheme.params.feedback_gain() * x, &v);
        }
        self.back(v)
    }
}

/// Closed forms of the reduction operator for each mask:
/// `B F D^dag(k x) S(-ln(eta)/2) P eta^{-1/4} phi_probe[(x - c x_phi)/sqrt(eta)]`,
/// with `P = S(r_pre)`, `c = 1` when pre-squeezing and `P = I`, `c = sqrt(1-eta)` otherwise;
/// `F = D(k x)` and `B = S(r_back)` when enabled.
pub struct ClosedForm {
    pub params: SchemeParams,
    pub mask: StageMask,
    work: usize,
    spectrum: QuadratureSpectrum,
    left: Array2<C64>,
    right: Array2<C64>,
    line: DisplacementLine,
}

impl ClosedForm {
    pub fn new(params: &SchemeParams, mask: StageMask) -> Result<Self> {
        params.validate()?;
        let work = params.resolved_work_cutoff();
        let eta = params.eta;
        let block = params.block;
        let squeeze_eta = fock::make_squeeze(-0.5 * eta.ln(), params.phi, work)?.into_matrix();
        let right = if mask.presqueeze {
            let pre = fock::make_squeeze(presqueeze_param(eta)?, params.phi, work)?.into_matrix();
            squeeze_eta.dot(&pre)
        } else {
            squeeze_eta
        };
        let left = if mask.backsqueeze {
            fock::make_squeeze(backsqueeze_param(eta)?, params.phi, work)?.into_matrix()
        } else {
            Array2::eye(work)
        };
        let spectrum = QuadratureSpectrum::new(params.phi, 2 * work)?;
        let line = DisplacementLine::new(params.phi, work)?;
        let _ = block;
        Ok(ClosedForm {
            params: params.clone(),
            mask,
            work,
            spectrum,
            left,
            right,
            line,
        })
    }

    pub fn omega(&self, x: f64) -> Array2<C64> {
        let p = &self.params;
        let eta = p.eta;
        let c = if self.mask.presqueeze {
            1.0
        } else {
            (1.0 - eta).sqrt()
        };
        let norm = eta.powf(-0.25) * (2.0 / (std::f64::consts::PI * p.sigma)).powf(0.25);
        let kernel = self
            .spectrum
            .apply_columns(
                |lam| {
                    let u = (x - c * lam) / eta.sqrt();
                    C64::new(norm * (-u * u / p.sigma).exp(), 0.0)
                },
                p.block,
            )
            .slice(s![..self.work, ..])
            .to_owned();
        let mut m = self.right.dot(&kernel);
        let k = p.feedback_gain();
        if !self.mask.feedback {
            m = self.line.apply(-k * x, &m);
        }
        m = self.left.dot(&m);
        m.slice(s![..p.cutoff, ..]).to_owned()
    }
}

/// Phase `e^{i chi}` minimizing `||a - e^{i chi} b||_F`.
pub fn fit_global_phase(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    let overlap: C64 = b.iter().zip(a.iter()).map(|(bv, av)| bv.conj() * av).sum();
    if overlap.norm() == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        overlap / overlap.norm()
    }
}

/// max elementwise |a - e^{i chi} b| on the leading `rows x cols` block after the phase fit.
pub fn phase_fitted_deviation(a: &Array2<C64>, b: &Array2<C64>, rows: usize, cols: usize) -> f64 {
    let a = a
        .slice(s![..rows.min(a.nrows()), ..cols.min(a.ncols())])
        .to_owned();
    let b = b
        .slice(s![..rows.min(b.nrows()), ..cols.min(b.ncols())])
        .to_owned();
    let ph = fit_global_phase(&a, &b);
    linalg::max_abs_diff(a.view(), b.mapv(|z| z * ph).view(), rows, cols)
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineResult {
    pub params: SchemeParams,
    pub mask: StageMask,
    pub delta: f64,
    pub work_cutoff: usize,
    #[serde(skip)]
    pub family: ReductionFamily,
    #[serde(skip)]
    pub target: ReductionFamily,
    /// max over grid of the phase-fitted elementwise deviation on the block.
    pub max_deviation: f64,
    /// max entrywise POM difference on the block.
    pub pom_deviation: f64,
    pub completeness_defect: f64,
    pub target_completeness_defect: f64,
}

/// Builds the scheme family and the matching reference: the Gaussian target
/// when every stage is on, otherwise the closed form for the mask.
pub fn build_scheme_family(
    params: &SchemeParams,
    feedback: FeedbackSpec,
    mask: StageMask,
) -> Result<PipelineResult> {
    if !matches!(feedback, FeedbackSpec::Ideal) {
        return Err(Error::Parameter(
            "the exact-identity path needs ideal feedback; use the finite-LO model in montecarlo"
                .into(),
        ));
    }
    let scheme = Scheme::new(params, mask)?;
    let family = scheme.family(&params.grid)?;
    let target = if mask == StageMask::ALL {
        let t = VnTarget::new(params.delta(), params.phi, params.cutoff)?;
        let ops = params
            .grid
            .values()
            .iter()
            .map(|&x| t.omega_columns(x, params.block))
            .collect();
        ReductionFamily::new(params.grid.clone(), ops, Provenance::AnalyticTarget)?
    } else {
        let cf = ClosedForm::new(params, mask)?;
        let ops = params.grid.values().iter().map(|&x| cf.omega(x)).collect();
        ReductionFamily::new(params.grid.clone(), ops, mask.provenance())?
    };
    let b = params.block;
    let max_deviation = family
        .operators()
        .iter()
        .zip(target.operators())
        .map(|(a, t)| phase_fitted_deviation(a, t, b, b))
        .fold(0.0, f64::max);
    let pf = measurement::pom_from_reduction(&family)?;
    let pt = measurement::pom_from_reduction(&target)?;
    let pom_deviation = pf.max_deviation(&pt, b)?;
    Ok(PipelineResult {
        params: params.clone(),
        mask,
        delta: params.delta(),
        work_cutoff: scheme.work_cutoff(),
        completeness_defect: family.completeness_defect(b),
        target_completeness_defect: target.completeness_defect(b),
        family,
        target,
        max_deviation,
        pom_deviation,
    })
}

/// POM of the scheme for a mask, from the uncropped operators.
pub fn scheme_pom(params: &SchemeParams, mask: StageMask) -> Result<PomDensity> {
    let scheme = Scheme::new(params, mask)?;
    measurement::pom_from_reduction(&scheme.family_full(&params.grid)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{make_displacement, make_quadrature, make_squeeze};
    use std::f64::consts::LN_2;

    fn op_defect(a: &Array2<C64>, b: &Array2<C64>, block: usize) -> f64 {
        linalg::max_abs_diff(a.view(), b.view(), block, block)
    }

    #[test]
    fn squeeze_parameters() {
        assert!((presqueeze_param(0.75).unwrap() - LN_2).abs() < 1e-15);
        assert!(presqueeze_param(1e-9).unwrap() < 1e-8);
        assert!((backsqueeze_param(0.5).unwrap() + LN_2).abs() < 1e-15);
        assert!((backsqueeze_param(0.3).unwrap() - backsqueeze_param(0.7).unwrap()).abs() < 1e-15);
        assert!(presqueeze_param(0.0).is_err() && backsqueeze_param(1.0).is_err());
    }

    #[test]
    fn presqueeze_raises_variance() {
        let n = 60;
        let s = make_squeeze(presqueeze_param(0.5).unwrap(), 0.0, n).unwrap();
        let psi = StateVector::vacuum(n).unwrap().evolve(&s).unwrap();
        let x = make_quadrature(0.0, n).unwrap();
        let x2 = x.matrix().dot(x.matrix());
        assert!((psi.expectation(&x2).re - 0.5).abs() < 1e-10);
    }

    #[test]
    fn backsqueeze_cancels_residual() {
        let n = 60;
        let eta = 0.3;
        let back = make_squeeze(backsqueeze_param(eta).unwrap(), 0.0, n)
            .unwrap()
            .into_matrix();
        let residual = make_squeeze(-0.5 * (eta * (1.0 - eta)).ln(), 0.0, n)
            .unwrap()
            .into_matrix();
        let guarded = fock::Cutoff::new(n).unwrap().guarded();
        assert!(linalg::identity_defect(back.dot(&residual).view(), guarded) < 1e-10);
    }

    #[test]
    fn psa_gains_and_stage_operators() {
        let p = SchemeParams::new(0.5, 1.0).unwrap();
        let psa = psa_from_params(&p).unwrap();
        let (g1, g2, g3) = psa.gains();
        assert!((g1 - 2.0).abs() < 1e-15 && (g2 - 0.25).abs() < 1e-15 && (g3 - 1.0).abs() < 1e-15);
        let n = 40;
        assert!(linalg::identity_defect(psa.probe.operator(n).unwrap().view(), n) < 1e-15);

        for &(eta, sigma, phi) in &[(0.3, 2.0, 0.0), (0.7, 0.5, 0.8)] {
            let p = SchemeParams::new(eta, sigma).unwrap().with_phase(phi);
            let psa = psa_from_params(&p).unwrap();
            let pre = make_squeeze(presqueeze_param(eta).unwrap(), phi, n)
                .unwrap()
                .into_matrix();
            let back = make_squeeze(backsqueeze_param(eta).unwrap(), phi, n)
                .unwrap()
                .into_matrix();
            let probe = make_squeeze(0.5 * f64::ln(sigma), phi, n)
                .unwrap()
                .into_matrix();
            assert!(op_defect(&psa.pre.operator(n).unwrap(), &pre, n) < 1e-10);
            assert!(op_defect(&psa.back.operator(n).unwrap(), &back, n) < 1e-10);
            assert!(op_defect(&psa.probe.operator(n).unwrap(), &probe, n) < 1e-10);
        }
    }

    #[test]
    fn psa_gain_law_on_vacuum() {
        let n = 60;
        let stage = PsaStage {
            gain: 4.0,
            pump_phase: 0.3,
        };
        let s = fock::Operator::single(stage.operator(n).unwrap()).unwrap();
        let psi = StateVector::vacuum(n).unwrap().evolve(&s).unwrap();
        let x = make_quadrature(0.3, n).unwrap();
        let x2 = x.matrix().dot(x.matrix());
        assert!((psi.expectation(&x2).re - 1.0 / 16.0).abs() < 1e-10);
    }

    #[test]
    fn feedback_amplitudes() {
        assert_eq!(
            feedback_displacement(0.0, 0.3, 0.0).unwrap(),
            C64::new(0.0, 0.0)
        );
        assert!(
            (feedback_displacement(1.0, 0.5, 0.0).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-15
        );
        let n = 60;
        let (eta, x): (f64, f64) = (0.4, 0.8);
        let k = ((1.0 - eta) / eta).sqrt();
        let fb = make_displacement(feedback_displacement(x, eta, 0.0).unwrap(), n)
            .unwrap()
            .into_matrix();
        let raw = make_displacement(C64::new(-k * x, 0.0), n)
            .unwrap()
            .into_matrix();
        let guarded = fock::Cutoff::new(n).unwrap().guarded();
        assert!(linalg::identity_defect(fb.dot(&raw).view(), guarded / 2) < 1e-10);
    }

    #[test]
    fn theta_law_cases() {
        let eta = 0.5;
        assert!((theta_law(0.0, eta, 10.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((theta_law(3.0, eta, 10.0).unwrap() - 0.91).abs() < 1e-12);
        assert!((theta_law(-3.0, eta, 10.0).unwrap() - 0.91).abs() < 1e-12);
        assert!(matches!(
            theta_law(11.0, eta, 10.0),
            Err(Error::InfeasibleFeedback { .. })
        ));
        let fb = FeedbackSpec::finite_lo(C64::new(0.0, 10.0));
        assert!((fb.theta(3.0, eta).unwrap() - 0.91).abs() < 1e-12);
        assert!(FeedbackSpec::Ideal.theta(1.0, eta).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(SchemeParams::new(0.0, 1.0).is_err());
        assert!(SchemeParams::new(1.0, 1.0).is_err());
        assert!(SchemeParams::new(0.5, 0.0).is_err());
        let p = SchemeParams::new(0.25, 2.0).unwrap();
        assert!((p.delta() - 0.353_553_390_593_273_8).abs() < 1e-15);
        assert!(p.clone().with_block(61).validate().is_err());
    }

    #[test]
    fn full_pipeline_matches_target() {
        let grid = OutcomeGrid::with_points(-3.0, 3.0, 25).unwrap();
        let p = SchemeParams::new(0.5, 1.0).unwrap().with_grid(grid);
        let r = build_scheme_family(&p, FeedbackSpec::Ideal, StageMask::ALL).unwrap();
        assert!(r.max_deviation < PIPELINE_TOL, "{:.3e}", r.max_deviation);
        assert!(r.pom_deviation < PIPELINE_TOL);
    }

    #[test]
    fn full_pipeline_at_rotated_phase() {
        let grid = OutcomeGrid::with_points(-2.0, 2.0, 9).unwrap();
        let p = SchemeParams::new(0.6, 0.8)
            .unwrap()
            .with_phase(0.9)
            .with_grid(grid);
        let r = build_scheme_family(&p, FeedbackSpec::Ideal, StageMask::ALL).unwrap();
        assert!(r.max_deviation < PIPELINE_TOL, "{:.3e}", r.max_deviation);
    }

    #[test]
    fn fitted_phase_is_trivial() {
        let p = SchemeParams::new(0.5, 1.0).unwrap();
        let s = Scheme::new(&p, StageMask::ALL).unwrap();
        let t = VnTarget::new(p.delta(), 0.0, p.cutoff).unwrap();
        for &x in &[-1.5, 0.0, 0.7] {
            let ph = fit_global_phase(&s.omega(x), &t.omega_columns(x, p.block));
            assert!((ph - C64::new(1.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn masks_match_closed_forms_and_share_the_pom() {
        let grid = OutcomeGrid::with_points(-2.5, 2.5, 11).unwrap();
        let p = SchemeParams::new(0.4, 1.5).unwrap().with_grid(grid.clone());
        let reference = scheme_pom(&p, StageMask::NONE).unwrap();
        let pre_only = StageMask {
            presqueeze: true,
            feedback: false,
            backsqueeze: false,
        };
        let reference_pre = scheme_pom(&p, pre_only).unwrap();
        for mask in StageMask::all_masks() {
            let r = build_scheme_family(&p, FeedbackSpec::Ideal, mask).unwrap();
            assert!(
                r.max_deviation < 1e-7,
                "{}: {:.3e}",
                mask.label(),
                r.max_deviation
            );
            let pom = scheme_pom(&p, mask).unwrap();
            let base = if mask.presqueeze {
                &reference_pre
            } else {
                &reference
            };
            assert!(
                pom.max_deviation(base, p.block).unwrap() < FACTOR_TOL,
                "{}",
                mask.label()
            );
        }
    }

    #[test]
    fn raw_kernel_without_presqueeze() {
        // POM of the uncompensated scheme: Gaussian in x - sqrt(1-eta) x_hat with width^2 = eta sigma / 4
        let (eta, sigma): (f64, f64) = (0.5, 1.0);
        let grid = OutcomeGrid::with_points(-2.0, 2.0, 9).unwrap();
        let p = SchemeParams::new(eta, sigma)
            .unwrap()
            .with_grid(grid.clone());
        let pom = scheme_pom(&p, StageMask::NONE).unwrap();
        let spec = QuadratureSpectrum::new(0.0, 2 * p.cutoff).unwrap();
        let d2 = eta * sigma / 4.0;
        for (&x, m) in grid.values().iter().zip(pom.matrices()) {
            let want = spec.apply(|lam| {
                let u = x - (1.0 - eta).sqrt() * lam;
                C64::new(
                    (-(u * u) / (2.0 * d2)).exp() / (2.0 * std::f64::consts::PI * d2).sqrt(),
                    0.0,
                )
            });
            assert!(op_defect(m, &want, 12) < 1e-7);
        }
    }

    #[test]
    fn finite_lo_is_rejected_here() {
        let p = SchemeParams::new(0.5, 1.0).unwrap();
        let fb = FeedbackSpec::finite_lo(C64::new(100.0, 0.0));
        assert!(build_scheme_family(&p, fb, StageMask::ALL).is_err());
    }

    #[test]
    fn mask_labels() {
        assert_eq!(StageMask::ALL.label(), "presqueeze+feedback+backsqueeze");
        assert_eq!(StageMask::NONE.label(), "raw");
        assert_eq!(StageMask::all_masks().len(), 8);
    }
}
