//! Truncated Fock-space states and the elementary operators of the scheme.
//!
//! Conventions: a single mode is truncated to `cutoff` levels `|0>..|cutoff-1>`.
//! Quadratures are `x_phi = (a^dag e^{i phi} + a e^{-i phi}) / 2`, so the vacuum
//! variance is 1/4 and `[x_phi, x_{phi+pi/2}] = i/2`. Two-mode vectors are laid
//! out with the system index varying slowest: `idx = n_sys * probe_cutoff + n_probe`.
//!
//! Truncated matrices are only faithful away from the top of the basis. The top
//! [`GUARD_FRACTION`] of the levels is the guard band; flags and warnings are
//! judged on the block below it.

use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::{s, Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{self, dagger, expm, C64, I};

pub const DEFAULT_CUTOFF: usize = 60;
pub const GUARD_FRACTION: f64 = 0.2;
/// Largest squeeze magnitude accepted without a truncation warning.
pub const DEFAULT_MAX_SQUEEZE: f64 = 2.5;
/// Tail mass in the guard band above which a state is flagged.
pub const TAIL_GUARD: f64 = 1e-10;
const FLAG_TOL: f64 = 1e-10;

/// Number of retained Fock levels of one mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cutoff(usize);

impl Cutoff {
    pub fn new(levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::Dimension(format!(
                "cutoff must be >= 2, got {levels}"
            )));
        }
        Ok(Cutoff(levels))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Number of levels below the guard band.
    pub fn guarded(self) -> usize {
        let band = (GUARD_FRACTION * self.0 as f64).ceil() as usize;
        (self.0 - band).max(1)
    }
}

/// Whether a result stayed clear of the truncation edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Truncation {
    Clean,
    /// `defect` is the offending tail mass, unitarity defect or parameter excess.
    Warning {
        defect: f64,
    },
}

impl Truncation {
    pub fn is_clean(&self) -> bool {
        matches!(self, Truncation::Clean)
    }

    fn worst(self, other: Truncation) -> Truncation {
        match (self, other) {
            (Truncation::Clean, t) | (t, Truncation::Clean) => t,
            (Truncation::Warning { defect: a }, Truncation::Warning { defect: b }) => {
                Truncation::Warning { defect: a.max(b) }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    System,
    Probe,
}

/// Shape of the space an operator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dims {
    Single(usize),
    Joint { system: usize, probe: usize },
}

impl Dims {
    pub fn size(self) -> usize {
        match self {
            Dims::Single(n) => n,
            Dims::Joint { system, probe } => system * probe,
        }
    }

    /// Basis indices lying below the guard band of every mode.
    fn guarded_indices(self) -> Vec<usize> {
        match self {
            Dims::Single(n) => (0..guard_of(n)).collect(),
            Dims::Joint { system, probe } => {
                let (gs, gp) = (guard_of(system), guard_of(probe));
                let mut idx = Vec::with_capacity(gs * gp);
                for a in 0..gs {
                    for b in 0..gp {
                        idx.push(a * probe + b);
                    }
                }
                idx
            }
        }
    }
}

fn guard_of(levels: usize) -> usize {
    Cutoff(levels.max(2)).guarded()
}

/// Normalized pure state of one mode.
#[derive(Clone, Debug)]
pub struct StateVector {
    amplitudes: Array1<C64>,
    tail_mass: f64,
    status: Truncation,
}

impl StateVector {
    /// Normalizes `amplitudes` and records the mass found in the guard band.
    pub fn from_amplitudes(amplitudes: Array1<C64>) -> Result<Self> {
        let n = amplitudes.len();
        Cutoff::new(n)?;
        let norm = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Parameter(
                "state vector has zero or non-finite norm".into(),
            ));
        }
        let amplitudes = amplitudes.mapv(|c| c / norm);
        let tail_mass = amplitudes
            .slice(s![guard_of(n)..])
            .iter()
            .map(|c| c.norm_sqr())
            .sum();
        Ok(Self::with_tail(amplitudes, tail_mass))
    }

    fn with_tail(amplitudes: Array1<C64>, tail_mass: f64) -> Self {
        let status = if tail_mass > TAIL_GUARD {
            Truncation::Warning { defect: tail_mass }
        } else {
            Truncation::Clean
        };
        StateVector {
            amplitudes,
            tail_mass,
            status,
        }
    }

    pub fn fock(n: usize, cutoff: usize) -> Result<Self> {
        Cutoff::new(cutoff)?;
        if n >= cutoff {
            return Err(Error::Dimension(format!("|{n}> outside cutoff {cutoff}")));
        }
        let mut v = Array1::zeros(cutoff);
        v[n] = C64::new(1.0, 0.0);
        Self::from_amplitudes(v)
    }

    pub fn vacuum(cutoff: usize) -> Result<Self> {
        Self::fock(0, cutoff)
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn cutoff(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn status(&self) -> Truncation {
        self.status
    }

    pub fn is_well_truncated(&self) -> bool {
        self.status.is_clean()
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn expectation(&self, op: &Array2<C64>) -> C64 {
        let v = op.dot(&self.amplitudes);
        self.amplitudes
            .iter()
            .zip(v.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Applies an operator and renormalizes.
    pub fn evolve(&self, op: &Operator) -> Result<StateVector> {
        if op.dim() != self.cutoff() {
            return Err(Error::Dimension(format!(
                "operator dimension {} vs state cutoff {}",
                op.dim(),
                self.cutoff()
            )));
        }
        Self::from_amplitudes(op.matrix().dot(&self.amplitudes))
    }
}

/// Pure state of system and probe.
#[derive(Clone, Debug)]
pub struct JointState {
    amplitudes: Array1<C64>,
    system: usize,
    probe: usize,
}

impl JointState {
    pub fn product(system: &StateVector, probe: &StateVector) -> JointState {
        let (ns, np) = (system.cutoff(), probe.cutoff());
        let mut amps = Array1::zeros(ns * np);
        for (a, ca) in system.amplitudes.iter().enumerate() {
            for (b, cb) in probe.amplitudes.iter().enumerate() {
                amps[a * np + b] = ca * cb;
            }
        }
        JointState {
            amplitudes: amps,
            system: ns,
            probe: np,
        }
    }

    pub fn from_amplitudes(amplitudes: Array1<C64>, system: usize, probe: usize) -> Result<Self> {
        if amplitudes.len() != system * probe {
            return Err(Error::Dimension(format!(
                "joint vector of length {} does not match {system}x{probe}",
                amplitudes.len()
            )));
        }
        let norm = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Parameter("joint state has zero norm".into()));
        }
        Ok(JointState {
            amplitudes: amplitudes.mapv(|c| c / norm),
            system,
            probe,
        })
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.system, self.probe)
    }

    /// Amplitudes as a `system x probe` matrix.
    pub fn as_matrix(&self) -> Array2<C64> {
        self.amplitudes
            .clone()
            .into_shape_with_order((self.system, self.probe))
            .expect("joint layout")
    }
}

/// Complex matrix on a truncated one- or two-mode space.
#[derive(Clone, Debug)]
pub struct Operator {
    matrix: Array2<C64>,
    dims: Dims,
    hermitian: bool,
    unitary: bool,
    status: Truncation,
}

impl Operator {
    pub fn new(matrix: Array2<C64>, dims: Dims) -> Result<Self> {
        if matrix.nrows() != dims.size() || matrix.ncols() != dims.size() {
            return Err(Error::Dimension(format!(
                "matrix {:?} does not match {:?}",
                matrix.dim(),
                dims
            )));
        }
        Ok(Operator {
            matrix,
            dims,
            hermitian: false,
            unitary: false,
            status: Truncation::Clean,
        })
    }

    pub fn single(matrix: Array2<C64>) -> Result<Self> {
        let n = matrix.nrows();
        Self::new(matrix, Dims::Single(n))
    }

    /// Marks the operator Hermitian after checking it on the guarded block.
    pub fn assert_hermitian(mut self) -> Result<Self> {
        let d = self.hermiticity_defect();
        if d > FLAG_TOL {
            return Err(Error::Parameter(format!(
                "operator not Hermitian (defect {d:.3e})"
            )));
        }
        self.hermitian = true;
        Ok(self)
    }

    /// Marks the operator unitary; a defect on the guarded block only downgrades the status.
    pub fn mark_unitary(mut self) -> Self {
        let d = self.unitarity_defect();
        self.unitary = true;
        if d > FLAG_TOL {
            self.status = self.status.worst(Truncation::Warning { defect: d });
        }
        self
    }

    fn with_status(mut self, status: Truncation) -> Self {
        self.status = self.status.worst(status);
        self
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn status(&self) -> Truncation {
        self.status
    }

    pub fn dagger(&self) -> Operator {
        Operator {
            matrix: dagger(&self.matrix),
            dims: self.dims,
            hermitian: self.hermitian,
            unitary: self.unitary,
            status: self.status,
        }
    }

    /// Product `self * rhs`; flags are not propagated.
    pub fn dot(&self, rhs: &Operator) -> Result<Operator> {
        if self.dims != rhs.dims {
            return Err(Error::Dimension(format!(
                "{:?} vs {:?}",
                self.dims, rhs.dims
            )));
        }
        Ok(Operator {
            matrix: self.matrix.dot(&rhs.matrix),
            dims: self.dims,
            hermitian: false,
            unitary: false,
            status: self.status.worst(rhs.status),
        })
    }

    /// max |A_ij - conj(A_ji)| over the guarded block.
    pub fn hermiticity_defect(&self) -> f64 {
        let idx = self.dims.guarded_indices();
        let mut worst = 0.0f64;
        for &i in &idx {
            for &j in &idx {
                worst = worst.max((self.matrix[[i, j]] - self.matrix[[j, i]].conj()).norm());
            }
        }
        worst
    }

    /// max |(U^dag U - I)_ij| over the guarded block.
    pub fn unitarity_defect(&self) -> f64 {
        let idx = self.dims.guarded_indices();
        let cols = self.matrix.select(ndarray::Axis(1), &idx);
        let gram = dagger(&cols).dot(&cols);
        linalg::identity_defect(gram.view(), idx.len())
    }
}

/// Density operator of one mode, or of system and probe jointly.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    matrix: Array2<C64>,
    dims: Dims,
}

const TRACE_TOL: f64 = 1e-10;
const HERMITIAN_TOL: f64 = 1e-12;
const NEGATIVITY_TOL: f64 = -1e-10;

impl DensityOperator {
    /// Validates trace, hermiticity and positivity.
    pub fn new(matrix: Array2<C64>, dims: Dims) -> Result<Self> {
        if matrix.nrows() != dims.size() || matrix.ncols() != dims.size() {
            return Err(Error::Dimension(format!(
                "density {:?} vs {:?}",
                matrix.dim(),
                dims
            )));
        }
        let tr = linalg::trace(&matrix);
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::Parameter(format!(
                "density trace {tr} differs from 1"
            )));
        }
        let herm = linalg::max_abs_diff(
            matrix.view(),
            dagger(&matrix).view(),
            usize::MAX,
            usize::MAX,
        );
        if herm > HERMITIAN_TOL {
            return Err(Error::Parameter(format!(
                "density not Hermitian (defect {herm:.3e})"
            )));
        }
        let (vals, _) = linalg::eigh(&matrix)?;
        if vals[0] < NEGATIVITY_TOL {
            return Err(Error::Parameter(format!(
                "density has eigenvalue {:.3e}",
                vals[0]
            )));
        }
        Ok(DensityOperator { matrix, dims })
    }

    /// Hermitizes and rescales to unit trace before validating.
    pub fn from_unnormalized(matrix: Array2<C64>, dims: Dims) -> Result<Self> {
        let h = linalg::hermitize(&matrix);
        let tr = linalg::trace(&h).re;
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::Parameter(format!(
                "cannot normalize density with trace {tr}"
            )));
        }
        Self::new(h.mapv(|z| z / tr), dims)
    }

    pub fn from_pure(state: &StateVector) -> DensityOperator {
        let v = state.amplitudes();
        let n = v.len();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[[i, j]] = v[i] * v[j].conj();
            }
        }
        DensityOperator {
            matrix: m,
            dims: Dims::Single(n),
        }
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    pub fn purity(&self) -> f64 {
        // Tr[rho^2] = sum |rho_ij|^2 for Hermitian rho
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn expectation(&self, op: &Array2<C64>) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += self.matrix[[i, j]] * op[[j, i]];
            }
        }
        acc
    }

    /// Leading `levels x levels` corner, renormalized. Mass outside must be negligible.
    pub fn truncated(&self, levels: usize) -> Result<DensityOperator> {
        let n = self.dim();
        if levels >= n {
            return Ok(self.clone());
        }
        let inside: f64 = (0..levels).map(|i| self.matrix[[i, i]].re).sum();
        if 1.0 - inside > TAIL_GUARD {
            return Err(Error::Dimension(format!(
                "state has mass {:.3e} above level {levels}",
                1.0 - inside
            )));
        }
        Self::from_unnormalized(
            self.matrix.slice(s![..levels, ..levels]).to_owned(),
            Dims::Single(levels),
        )
    }

    /// Half the trace norm of the difference.
    pub fn trace_distance(&self, other: &DensityOperator) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(0.5 * linalg::trace_norm_hermitian(&(&self.matrix - &other.matrix))?)
    }

    /// Conjugation `U rho U^dag`.
    pub fn conjugate(&self, u: &Array2<C64>) -> Result<DensityOperator> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::Dimension(
                "conjugating operator has wrong shape".into(),
            ));
        }
        Self::from_unnormalized(u.dot(&self.matrix).dot(&dagger(u)), self.dims)
    }
}

/// Ladder operator `a` with `a_{n-1,n} = sqrt(n)`.
pub fn make_annihilation(cutoff: usize) -> Result<Operator> {
    Cutoff::new(cutoff)?;
    Operator::single(annihilation_matrix(cutoff))
}

pub(crate) fn annihilation_matrix(cutoff: usize) -> Array2<C64> {
    let mut a = Array2::zeros((cutoff, cutoff));
    for n in 1..cutoff {
        a[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

#[cfg(test)]
pub(crate) fn number_matrix(cutoff: usize) -> Array2<C64> {
    Array2::from_diag(&Array1::from_iter(
        (0..cutoff).map(|n| C64::new(n as f64, 0.0)),
    ))
}

pub(crate) fn quadrature_matrix(phi: f64, cutoff: usize) -> Array2<C64> {
    let a = annihilation_matrix(cutoff);
    let ad = dagger(&a);
    let ep = C64::from_polar(1.0, phi);
    (ad.mapv(|z| z * ep) + a.mapv(|z| z * ep.conj())).mapv(|z| z * 0.5)
}

/// Quadrature `x_phi = (a^dag e^{i phi} + a e^{-i phi}) / 2`.
pub fn make_quadrature(phi: f64, cutoff: usize) -> Result<Operator> {
    Cutoff::new(cutoff)?;
    Operator::single(quadrature_matrix(phi, cutoff))?.assert_hermitian()
}

/// Tail mass of the coherent state |alpha> above the guarded levels.
fn coherent_guard_tail(alpha: C64, cutoff: usize) -> f64 {
    let g = guard_of(cutoff);
    let mean = alpha.norm_sqr();
    let mut c = (-mean / 2.0).exp();
    let mut inside = c * c;
    for n in 1..g {
        c *= alpha.norm() / (n as f64).sqrt();
        inside += c * c;
    }
    (1.0 - inside).max(0.0)
}

/// Displacement `D(alpha) = exp(alpha a^dag - conj(alpha) a)`.
pub fn make_displacement(alpha: C64, cutoff: usize) -> Result<Operator> {
    Cutoff::new(cutoff)?;
    let a = annihilation_matrix(cutoff);
    let gen = dagger(&a).mapv(|z| z * alpha) - a.mapv(|z| z * alpha.conj());
    let tail = coherent_guard_tail(alpha, cutoff);
    let status = if tail > TAIL_GUARD {
        Truncation::Warning { defect: tail }
    } else {
        Truncation::Clean
    };
    Ok(Operator::single(expm(&gen)?)?
        .mark_unitary()
        .with_status(status))
}

/// Generator of `S_phi(r)`: `-i r (x y + y x)` with `x = x_phi`, `y = x_{phi+pi/2}`.
pub(crate) fn squeeze_generator(r: f64, phi: f64, cutoff: usize) -> Array2<C64> {
    let x = quadrature_matrix(phi, cutoff);
    let y = quadrature_matrix(phi + FRAC_PI_2, cutoff);
    let sym = x.dot(&y) + y.dot(&x);
    sym.mapv(|z| z * (-I * r))
}

/// Squeezer `S_phi(r) = exp[-i r (x_phi x_{phi+pi/2} + x_{phi+pi/2} x_phi)]`,
/// for which `S^dag x_phi S = e^r x_phi`.
pub fn make_squeeze(r: f64, phi: f64, cutoff: usize) -> Result<Operator> {
    make_squeeze_guarded(r, phi, cutoff, DEFAULT_MAX_SQUEEZE)
}

pub fn make_squeeze_guarded(r: f64, phi: f64, cutoff: usize, r_max: f64) -> Result<Operator> {
    Cutoff::new(cutoff)?;
    if !r.is_finite() {
        return Err(Error::Parameter(format!(
            "squeeze parameter {r} is not finite"
        )));
    }
    let status = if r.abs() > r_max {
        Truncation::Warning {
            defect: r.abs() - r_max,
        }
    } else {
        Truncation::Clean
    };
    Ok(Operator::single(expm(&squeeze_generator(r, phi, cutoff))?)?
        .mark_unitary()
        .with_status(status))
}

/// `|alpha>` with `c_n = e^{-|alpha|^2/2} alpha^n / sqrt(n!)`, renormalized after truncation.
pub fn coherent_state(alpha: C64, cutoff: usize) -> Result<StateVector> {
    Cutoff::new(cutoff)?;
    let mut amps = Array1::zeros(cutoff);
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    amps[0] = c;
    for n in 1..cutoff {
        c = c * alpha / (n as f64).sqrt();
        amps[n] = c;
    }
    let tail = coherent_guard_tail(alpha, cutoff);
    let norm = amps.iter().map(|c: &C64| c.norm_sqr()).sum::<f64>().sqrt();
    Ok(StateVector::with_tail(amps.mapv(|c| c / norm), tail))
}

/// Squeezed vacuum `S_phi(ln sqrt(sigma))|0>`: `x_phi` has variance `sigma / 4`.
pub fn squeezed_vacuum(sigma: f64, phi: f64, cutoff: usize) -> Result<StateVector> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!(
            "variance ratio sigma must be > 0, got {sigma}"
        )));
    }
    let s = make_squeeze(0.5 * sigma.ln(), phi, cutoff)?;
    let mut vac = Array1::zeros(cutoff);
    vac[0] = C64::new(1.0, 0.0);
    StateVector::from_amplitudes(s.matrix().dot(&vac))
}

/// Hermite functions `<n|x>` for the quadrature `x_0`, by the three-term recurrence
/// `e_{n+1} = (2 x e_n - sqrt(n) e_{n-1}) / sqrt(n+1)`, `e_0 = (2/pi)^{1/4} e^{-x^2}`.
pub fn hermite_functions(x: f64, levels: usize) -> Array1<f64> {
    let mut e = Array1::zeros(levels);
    if levels == 0 {
        return e;
    }
    e[0] = (2.0 / PI).powf(0.25) * (-x * x).exp();
    if levels > 1 {
        e[1] = 2.0 * x * e[0];
    }
    for n in 1..levels.saturating_sub(1) {
        let nf = n as f64;
        e[n + 1] = (2.0 * x * e[n] - nf.sqrt() * e[n - 1]) / (nf + 1.0).sqrt();
    }
    e
}

/// Coefficients `<n|x>_phi` of a delta-normalized quadrature eigenvector.
#[derive(Clone, Debug)]
pub struct QuadratureKet {
    pub x: f64,
    pub phi: f64,
    coefficients: Array1<C64>,
    status: Truncation,
}

impl QuadratureKet {
    pub fn coefficients(&self) -> &Array1<C64> {
        &self.coefficients
    }

    pub fn status(&self) -> Truncation {
        self.status
    }

    /// `<x|psi>`.
    pub fn overlap(&self, psi: &Array1<C64>) -> C64 {
        self.coefficients
            .iter()
            .zip(psi.iter())
            .map(|(k, p)| k.conj() * p)
            .sum()
    }
}

/// Largest |x| whose eigenvector is resolved below the guard band.
pub fn quadrature_guard(cutoff: usize) -> f64 {
    (guard_of(cutoff) as f64).sqrt()
}

/// Eigenvector of `x_phi` with eigenvalue `x`: `<n|x>_phi = e^{i phi n} <n|x>_0`.
pub fn quadrature_eigenvector(x: f64, phi: f64, cutoff: usize) -> Result<QuadratureKet> {
    Cutoff::new(cutoff)?;
    let e = hermite_functions(x, cutoff);
    let coefficients = Array1::from_iter(
        e.iter()
            .enumerate()
            .map(|(n, &v)| C64::from_polar(v, phi * n as f64)),
    );
    let guard = quadrature_guard(cutoff);
    let status = if x.abs() > guard {
        Truncation::Warning {
            defect: x.abs() - guard,
        }
    } else {
        Truncation::Clean
    };
    Ok(QuadratureKet {
        x,
        phi,
        coefficients,
        status,
    })
}

/// Spectral decomposition of the truncated quadrature `x_phi`.
#[derive(Clone, Debug)]
pub struct QuadratureSpectrum {
    pub phi: f64,
    values: Array1<f64>,
    vectors: Array2<C64>,
}

impl QuadratureSpectrum {
    pub fn new(phi: f64, cutoff: usize) -> Result<Self> {
        Cutoff::new(cutoff)?;
        let (values, vectors) = linalg::eigh(&quadrature_matrix(phi, cutoff))?;
        Ok(QuadratureSpectrum {
            phi,
            values,
            vectors,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.values.len()
    }

    pub fn eigenvectors(&self) -> &Array2<C64> {
        &self.vectors
    }

    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.values
    }

    /// `f(x_phi)` by function calculus on the truncated spectrum.
    pub fn apply<F: Fn(f64) -> C64>(&self, f: F) -> Array2<C64> {
        linalg::spectral_apply(&self.values, &self.vectors, f)
    }

    /// `f(x_phi)` restricted to its leading `cols` columns.
    pub fn apply_columns<F: Fn(f64) -> C64>(&self, f: F, cols: usize) -> Array2<C64> {
        let cols = cols.min(self.cutoff());
        let mut left = self.vectors.clone();
        for (mut col, &lam) in left.axis_iter_mut(ndarray::Axis(1)).zip(self.values.iter()) {
            let w = f(lam);
            col.mapv_inplace(|z| z * w);
        }
        let right = dagger(&self.vectors.slice(s![..cols, ..]).to_owned());
        left.dot(&right)
    }
}

/// Displacements along one phase-space direction, `D(t e^{i psi})` for real `t`,
/// from the spectrum of `x_{psi+pi/2}`: `D(t e^{i psi}) = exp(-2 i t x_{psi+pi/2})`.
/// Equal to [`make_displacement`] up to rounding since the generators coincide.
#[derive(Clone, Debug)]
pub struct DisplacementLine {
    pub direction: f64,
    spectrum: QuadratureSpectrum,
}

impl DisplacementLine {
    pub fn new(direction: f64, cutoff: usize) -> Result<Self> {
        Ok(DisplacementLine {
            direction,
            spectrum: QuadratureSpectrum::new(direction + FRAC_PI_2, cutoff)?,
        })
    }

    pub fn matrix(&self, t: f64) -> Array2<C64> {
        self.spectrum
            .apply(|lam| C64::from_polar(1.0, -2.0 * t * lam))
    }

    /// `D(t e^{i psi}) v` for a single vector.
    pub fn apply_vector(&self, t: f64, v: &Array1<C64>) -> Array1<C64> {
        let vecs = &self.spectrum.vectors;
        let conj_v = v.mapv(|z| z.conj());
        let mut w = vecs.t().dot(&conj_v).mapv(|z| z.conj());
        for (z, &lam) in w.iter_mut().zip(self.spectrum.values.iter()) {
            *z *= C64::from_polar(1.0, -2.0 * t * lam);
        }
        vecs.dot(&w)
    }

    /// `D(t e^{i psi}) * m` without forming the displacement explicitly.
    pub fn apply(&self, t: f64, m: &Array2<C64>) -> Array2<C64> {
        let v = &self.spectrum.vectors;
        let mut w = dagger(v).dot(m);
        for (mut row, &lam) in w
            .axis_iter_mut(ndarray::Axis(0))
            .zip(self.spectrum.values.iter())
        {
            let ph = C64::from_polar(1.0, -2.0 * t * lam);
            row.mapv_inplace(|z| z * ph);
        }
        v.dot(&w)
    }
}

/// Mixing angle `atan sqrt((1-eta)/eta)` of a beam splitter with intensity transmissivity `eta`.
pub fn mixing_angle(eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Parameter(format!(
            "transmissivity must lie in (0,1), got {eta}"
        )));
    }
    Ok(((1.0 - eta) / eta).sqrt().atan())
}

/// A unitary on system (x) probe that can be applied to joint vectors.
pub trait JointUnitary {
    fn joint_dims(&self) -> (usize, usize);
    fn apply(&self, psi: &Array1<C64>) -> Array1<C64>;
}

struct Sector {
    /// Lowest system occupation in the sector; entries are ordered by n_sys.
    sys_lo: usize,
    total: usize,
    block: Array2<f64>,
}

/// `U = exp[theta (a b^dag - a^dag b)]`, `theta = atan sqrt((1-eta)/eta)`.
///
/// The generator conserves total photon number, so it is exponentiated one
/// sector at a time. Sectors with `n_sys + n_probe < min(cutoffs)` are complete
/// and carry no truncation error. Heisenberg action:
/// `U^dag a U = sqrt(eta) a - sqrt(1-eta) b`, `U^dag b U = sqrt(eta) b + sqrt(1-eta) a`.
pub struct BeamSplitter {
    pub eta: f64,
    system: usize,
    probe: usize,
    sectors: Vec<Sector>,
}

impl BeamSplitter {
    pub fn new(eta: f64, system: usize, probe: usize) -> Result<Self> {
        Self::with_max_total(eta, system, probe, system + probe - 2)
    }

    /// Only sectors with `n_sys + n_probe <= max_total` are represented; amplitudes
    /// above that are mapped to zero. Exact on inputs supported below the bound
    /// whenever `max_total < min(system, probe)`.
    pub fn with_max_total(eta: f64, system: usize, probe: usize, max_total: usize) -> Result<Self> {
        let theta = mixing_angle(eta)?;
        Cutoff::new(system)?;
        Cutoff::new(probe)?;
        let top = max_total.min(system + probe - 2);
        let mut sectors = Vec::with_capacity(top + 1);
        for total in 0..=top {
            let lo = total.saturating_sub(probe - 1);
            let hi = total.min(system - 1);
            let len = hi - lo + 1;
            let mut g = Array2::<f64>::zeros((len, len));
            for i in 0..len {
                let na = lo + i;
                let nb = total - na;
                // a b^dag: |na, nb> -> sqrt(na (nb+1)) |na-1, nb+1>
                if i > 0 {
                    g[[i - 1, i]] += theta * ((na * (nb + 1)) as f64).sqrt();
                }
                // -a^dag b: |na, nb> -> -sqrt((na+1) nb) |na+1, nb-1>
                if i + 1 < len {
                    g[[i + 1, i]] -= theta * (((na + 1) * nb) as f64).sqrt();
                }
            }
            sectors.push(Sector {
                sys_lo: lo,
                total,
                block: expm(&g)?,
            });
        }
        Ok(BeamSplitter {
            eta,
            system,
            probe,
            sectors,
        })
    }

    pub fn to_operator(&self) -> Result<Operator> {
        let n = self.system * self.probe;
        let mut m = Array2::<C64>::zeros((n, n));
        for sec in &self.sectors {
            let len = sec.block.nrows();
            for i in 0..len {
                let ri = (sec.sys_lo + i) * self.probe + (sec.total - sec.sys_lo - i);
                for j in 0..len {
                    let cj = (sec.sys_lo + j) * self.probe + (sec.total - sec.sys_lo - j);
                    m[[ri, cj]] = C64::new(sec.block[[i, j]], 0.0);
                }
            }
        }
        Ok(Operator::new(
            m,
            Dims::Joint {
                system: self.system,
                probe: self.probe,
            },
        )?
        .mark_unitary())
    }
}

impl JointUnitary for BeamSplitter {
    fn joint_dims(&self) -> (usize, usize) {
        (self.system, self.probe)
    }

    fn apply(&self, psi: &Array1<C64>) -> Array1<C64> {
        let mut out = Array1::zeros(psi.len());
        let idx = |na: usize, total: usize| na * self.probe + (total - na);
        for sec in &self.sectors {
            let len = sec.block.nrows();
            for i in 0..len {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..len {
                    let v = psi[idx(sec.sys_lo + j, sec.total)];
                    if v.re != 0.0 || v.im != 0.0 {
                        acc += v * sec.block[[i, j]];
                    }
                }
                out[idx(sec.sys_lo + i, sec.total)] = acc;
            }
        }
        out
    }
}

impl JointUnitary for Operator {
    fn joint_dims(&self) -> (usize, usize) {
        match self.dims {
            Dims::Joint { system, probe } => (system, probe),
            Dims::Single(n) => (n, 1),
        }
    }

    fn apply(&self, psi: &Array1<C64>) -> Array1<C64> {
        self.matrix.dot(psi)
    }
}

/// `J_0(z) ... J_{k_max}(z)` by Miller's backward recurrence, normalized with
/// `J_0 + 2 sum J_{2k} = 1`.
pub fn bessel_j_sequence(z: f64, k_max: usize) -> Vec<f64> {
    if z == 0.0 {
        let mut j = vec![0.0; k_max + 1];
        j[0] = 1.0;
        return j;
    }
    let start = (k_max.max(z.ceil() as usize) + 40 + (10.0 * (k_max as f64).sqrt()) as usize) | 1;
    let mut vals = vec![0.0; start + 2];
    vals[start] = 1e-300;
    for k in (1..=start).rev() {
        vals[k - 1] = 2.0 * k as f64 / z * vals[k] - vals[k + 1];
        if vals[k - 1].abs() > 1e250 {
            vals.iter_mut().skip(k - 1).for_each(|v| *v *= 1e-250);
        }
    }
    let norm = vals[0] + 2.0 * vals.iter().skip(2).step_by(2).sum::<f64>();
    vals.truncate(k_max + 1);
    vals.iter_mut().for_each(|v| *v /= norm);
    vals
}

/// The beam splitter applied sector by sector without forming any matrix:
/// `exp(G) v = J_0(rho) v + 2 sum_k (-i)^k J_k(rho) T_k(iG/rho) v`, with
/// `rho = theta N` bounding the spectrum of the sector generator. Cost per
/// sector is `O(N^2)`; agrees with [`BeamSplitter`] to rounding.
pub struct BeamSplitterPropagator {
    pub eta: f64,
    theta: f64,
    system: usize,
    probe: usize,
    max_total: usize,
}

impl BeamSplitterPropagator {
    pub fn new(eta: f64, system: usize, probe: usize) -> Result<Self> {
        Self::with_max_total(eta, system, probe, system + probe - 2)
    }

    pub fn with_max_total(eta: f64, system: usize, probe: usize, max_total: usize) -> Result<Self> {
        let theta = mixing_angle(eta)?;
        Cutoff::new(system)?;
        Cutoff::new(probe)?;
        Ok(BeamSplitterPropagator {
            eta,
            theta,
            system,
            probe,
            max_total: max_total.min(system + probe - 2),
        })
    }

    fn sector(&self, total: usize, v: &[C64]) -> Vec<C64> {
        let lo = total.saturating_sub(self.probe - 1);
        let len = v.len();
        if len == 1 || total == 0 {
            return v.to_vec();
        }
        // Off-diagonal c_i = G[i, i+1] = -G[i+1, i].
        let c: Vec<f64> = (0..len - 1)
            .map(|i| self.theta * (((lo + i + 1) * (total - lo - i)) as f64).sqrt())
            .collect();
        let rho = self.theta * total as f64;
        // s(w) = (i G / rho) w
        let s = |w: &[C64]| -> Vec<C64> {
            let mut out = vec![C64::new(0.0, 0.0); len];
            for i in 0..len - 1 {
                out[i] += w[i + 1] * c[i];
                out[i + 1] -= w[i] * c[i];
            }
            out.iter_mut()
                .for_each(|z| *z = C64::new(-z.im, z.re) / rho);
            out
        };
        let k_max = (rho + 15.0 * rho.cbrt() + 30.0).ceil() as usize;
        let bessel = bessel_j_sequence(rho, k_max);
        let mut acc: Vec<C64> = v.iter().map(|z| z * bessel[0]).collect();
        let mut prev = v.to_vec();
        let mut cur = s(v);
        let mut phase = C64::new(0.0, -2.0);
        for (k, &jk) in bessel.iter().enumerate().skip(1) {
            let coeff = phase * jk;
            acc.iter_mut().zip(&cur).for_each(|(a, w)| *a += coeff * w);
            phase *= C64::new(0.0, -1.0);
            if k == k_max {
                break;
            }
            let next: Vec<C64> = s(&cur)
                .iter()
                .zip(&prev)
                .map(|(a, b)| a * 2.0 - b)
                .collect();
            prev = std::mem::replace(&mut cur, next);
        }
        acc
    }
}

impl JointUnitary for BeamSplitterPropagator {
    fn joint_dims(&self) -> (usize, usize) {
        (self.system, self.probe)
    }

    fn apply(&self, psi: &Array1<C64>) -> Array1<C64> {
        let mut out = Array1::zeros(psi.len());
        let idx = |na: usize, total: usize| na * self.probe + (total - na);
        for total in 0..=self.max_total {
            let lo = total.saturating_sub(self.probe - 1);
            let hi = total.min(self.system - 1);
            let v: Vec<C64> = (lo..=hi).map(|na| psi[idx(na, total)]).collect();
            if v.iter().all(|z| z.norm_sqr() == 0.0) {
                continue;
            }
            for (na, z) in (lo..=hi).zip(self.sector(total, &v)) {
                out[idx(na, total)] = z;
            }
        }
        out
    }
}

/// Beam-splitter unitary with equal cutoffs on both modes.
pub fn make_beam_splitter(eta: f64, cutoff: usize) -> Result<BeamSplitter> {
    BeamSplitter::new(eta, cutoff, cutoff)
}

/// Embeds a single-mode matrix on the chosen side of system (x) probe.
pub fn embed(op: &Array2<C64>, mode: Mode, other: usize) -> Array2<C64> {
    let id = Array2::<C64>::eye(other);
    match mode {
        Mode::System => linalg::kron(op, &id),
        Mode::Probe => linalg::kron(&id, op),
    }
}

/// Quadrature form of the beam-splitter generator:
/// `2 i theta (y X - x Y)` with `x, y` of the system and `X, Y` of the probe at a common phase.
pub fn beam_splitter_quadrature_generator(
    eta: f64,
    phi: f64,
    cutoff: usize,
) -> Result<Array2<C64>> {
    let theta = mixing_angle(eta)?;
    Cutoff::new(cutoff)?;
    let x = quadrature_matrix(phi, cutoff);
    let y = quadrature_matrix(phi + FRAC_PI_2, cutoff);
    let form = linalg::kron(&y, &x) - linalg::kron(&x, &y);
    Ok(form.mapv(|z| z * I * (2.0 * theta)))
}

/// Reduced state of one mode of a pure joint state.
pub fn partial_trace_pure(joint: &JointState, keep: Mode) -> Result<DensityOperator> {
    let psi = joint.as_matrix();
    let m = match keep {
        Mode::System => psi.dot(&dagger(&psi)),
        Mode::Probe => psi.t().to_owned().dot(&psi.mapv(|z| z.conj())),
    };
    let n = m.nrows();
    DensityOperator::from_unnormalized(m, Dims::Single(n))
}

/// Reduced state of one mode of a joint density operator.
pub fn partial_trace(joint: &DensityOperator, keep: Mode) -> Result<DensityOperator> {
    let Dims::Joint { system, probe } = joint.dims() else {
        return Err(Error::Dimension(
            "partial trace needs a joint density operator".into(),
        ));
    };
    let rho = joint.matrix();
    let (keep_n, other_n) = match keep {
        Mode::System => (system, probe),
        Mode::Probe => (probe, system),
    };
    let idx = |k: usize, o: usize| match keep {
        Mode::System => k * probe + o,
        Mode::Probe => o * probe + k,
    };
    let mut out = Array2::<C64>::zeros((keep_n, keep_n));
    for i in 0..keep_n {
        for j in 0..keep_n {
            let mut acc = C64::new(0.0, 0.0);
            for o in 0..other_n {
                acc += rho[[idx(i, o), idx(j, o)]];
            }
            out[[i, j]] = acc;
        }
    }
    DensityOperator::from_unnormalized(out, Dims::Single(keep_n))
}

#[cfg(test)]
mod propagator_tests {
    use super::*;

    #[test]
    fn bessel_values() {
        let j = bessel_j_sequence(1.0, 3);
        assert!((j[0] - 0.7651976865579666).abs() < 1e-14);
        assert!((j[1] - 0.4400505857449335).abs() < 1e-14);
        let j = bessel_j_sequence(100.0, 150);
        assert!((j[0] - 0.019985850304223122).abs() < 1e-13);
        assert!(j[150].abs() < 1e-15);
    }

    #[test]
    fn propagator_matches_sector_exponential() {
        let (n, m) = (14, 11);
        let psi = Array1::from_iter((0..n * m).map(|k| {
            C64::new(
                ((k * 7 % 13) as f64 - 6.0) / 9.0,
                ((k * 5 % 11) as f64 - 5.0) / 7.0,
            )
        }));
        for &eta in &[0.2, 0.5, 0.93] {
            let dense = BeamSplitter::new(eta, n, m).unwrap().apply(&psi);
            let fast = BeamSplitterPropagator::new(eta, n, m).unwrap().apply(&psi);
            let d = dense
                .iter()
                .zip(fast.iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(d < 1e-12, "eta {eta}: {d:.2e}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, identity_defect, max_abs_diff};
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn annihilation_two_levels() {
        let a = make_annihilation(2).unwrap();
        assert_eq!(
            a.matrix(),
            &array![[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]]
        );
    }

    #[test]
    fn annihilation_rejects_tiny_cutoff() {
        assert!(matches!(make_annihilation(1), Err(Error::Dimension(_))));
        assert!(matches!(make_quadrature(0.0, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn ladder_commutator_on_low_block() {
        let a = make_annihilation(4).unwrap().into_matrix();
        let comm = commutator(&a, &dagger(&a));
        for n in 0..=2 {
            assert!((comm[[n, n]] - c(1.0, 0.0)).norm() < 1e-15);
        }
        // the top level carries the truncation artefact
        assert!((comm[[3, 3]] - c(-3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn coherent_expectation_of_a() {
        let alpha = c(0.7, 0.2);
        let psi = coherent_state(alpha, 40).unwrap();
        let a = annihilation_matrix(40);
        assert!((psi.expectation(&a) - alpha).norm() < 1e-10);
    }

    #[test]
    fn quadrature_two_levels() {
        let x = make_quadrature(0.0, 2).unwrap();
        assert!(x.is_hermitian());
        assert_eq!(
            x.matrix(),
            &array![[c(0.0, 0.0), c(0.5, 0.0)], [c(0.5, 0.0), c(0.0, 0.0)]]
        );
    }

    #[test]
    fn vacuum_quadrature_variance_any_phase() {
        let vac = StateVector::vacuum(10).unwrap();
        for phi in [0.0, 0.4, 1.3, 2.9] {
            let x = quadrature_matrix(phi, 10);
            assert!((vac.expectation(&x.dot(&x)) - c(0.25, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn canonical_quadrature_commutator() {
        let n = 30;
        let comm = commutator(&quadrature_matrix(0.0, n), &quadrature_matrix(FRAC_PI_2, n));
        let want = Array2::<C64>::eye(n).mapv(|z| z * c(0.0, 0.5));
        assert!(max_abs_diff(comm.view(), want.view(), n - 2, n - 2) < 1e-12);
    }

    #[test]
    fn displacement_basics() {
        let d0 = make_displacement(c(0.0, 0.0), 20).unwrap();
        assert!(identity_defect(d0.matrix().view(), 20) < 1e-15);

        let d = make_displacement(c(1.0, 0.0), 50).unwrap();
        let dm = make_displacement(c(-1.0, 0.0), 50).unwrap();
        let prod = d.dot(&dm).unwrap();
        assert!(identity_defect(prod.matrix().view(), Cutoff(50).guarded()) < 1e-9);

        let d = make_displacement(c(0.8, 0.0), 50).unwrap();
        let vac = StateVector::vacuum(50).unwrap().evolve(&d).unwrap();
        assert!((vac.expectation(&quadrature_matrix(0.0, 50)) - c(0.8, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn displacement_guard_warns() {
        let d = make_displacement(c(6.0, 0.0), 30).unwrap();
        assert!(!d.status().is_clean());
        let ok = make_displacement(c(0.5, 0.0), 30).unwrap();
        assert!(ok.status().is_clean());
    }

    #[test]
    fn displacement_line_matches_expm() {
        let line = DisplacementLine::new(0.6, 40).unwrap();
        for t in [-1.3, 0.0, 0.9] {
            let direct = make_displacement(C64::from_polar(t, 0.6), 40).unwrap();
            assert!(max_abs_diff(line.matrix(t).view(), direct.matrix().view(), 40, 40) < 1e-10);
        }
    }

    #[test]
    fn squeeze_identity_and_heisenberg_law() {
        let s0 = make_squeeze(0.0, 0.3, 20).unwrap();
        assert!(identity_defect(s0.matrix().view(), 20) < 1e-15);

        let n = 60;
        for phi in [0.0, 0.7] {
            let s = make_squeeze(0.3, phi, n).unwrap();
            let x = quadrature_matrix(phi, n);
            let lhs = dagger(s.matrix()).dot(&x).dot(s.matrix());
            let rhs = x.mapv(|z| z * 0.3f64.exp());
            // S|n> spreads to ~n e^{2r}; the block must keep that clear of the cutoff
            assert!(max_abs_diff(lhs.view(), rhs.view(), n / 3, n / 3) < 1e-8);
        }
    }

    #[test]
    fn squeezed_vacuum_variance() {
        let n = 60;
        let s = make_squeeze(-0.4, 0.0, n).unwrap();
        let psi = StateVector::vacuum(n).unwrap().evolve(&s).unwrap();
        let x = quadrature_matrix(0.0, n);
        let var = psi.expectation(&x.dot(&x)).re - psi.expectation(&x).re.powi(2);
        assert!((var - (-0.8f64).exp() / 4.0).abs() < 1e-10);
    }

    #[test]
    fn squeeze_guard_warns() {
        assert!(!make_squeeze(2.6, 0.0, 20).unwrap().status().is_clean());
    }

    #[test]
    fn squeezed_vacuum_properties() {
        let n = 60;
        let vac = squeezed_vacuum(1.0, 0.0, n).unwrap();
        assert!((vac.amplitudes()[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!(matches!(
            squeezed_vacuum(0.0, 0.0, n),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            squeezed_vacuum(-1.0, 0.0, n),
            Err(Error::Parameter(_))
        ));

        let psi = squeezed_vacuum(0.5, 0.0, n).unwrap();
        let x = quadrature_matrix(0.0, n);
        assert!((psi.expectation(&x.dot(&x)).re - 0.125).abs() < 1e-8);

        // wavefunction <x|psi> against the Gaussian (2/(pi sigma))^{1/4} e^{-x^2/sigma}
        let sigma: f64 = 0.5;
        for i in 0..=40 {
            let xv = -2.0 + 0.1 * i as f64;
            let ket = quadrature_eigenvector(xv, 0.0, n).unwrap();
            let got = ket.overlap(psi.amplitudes());
            let want = (2.0 / (PI * sigma)).powf(0.25) * (-xv * xv / sigma).exp();
            assert!(
                (got - c(want, 0.0)).norm() < 1e-7,
                "x={xv}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn coherent_number_and_overlap() {
        let psi = coherent_state(c(1.5, 0.0), 60).unwrap();
        let n = number_matrix(60);
        assert!((psi.expectation(&n).re - 2.25).abs() < 1e-8);

        let vac = coherent_state(c(0.0, 0.0), 10).unwrap();
        assert!((vac.amplitudes()[0] - c(1.0, 0.0)).norm() < 1e-15);

        let a = c(0.4, -0.3);
        let b = c(-0.2, 0.9);
        let pa = coherent_state(a, 60).unwrap();
        let pb = coherent_state(b, 60).unwrap();
        let want = (-(a.norm_sqr() + b.norm_sqr()) / 2.0 + a.conj() * b).exp();
        assert!((pa.inner(&pb) - want).norm() < 1e-9);
    }

    #[test]
    fn quadrature_eigenvector_values() {
        let ket = quadrature_eigenvector(0.0, 0.0, 10).unwrap();
        assert!((ket.coefficients()[0].re - (2.0 / PI).powf(0.25)).abs() < 1e-15);
        assert!((ket.coefficients()[0].re - 0.8932).abs() < 1e-4);
        assert_eq!(ket.coefficients()[1], c(0.0, 0.0));
        assert!(!quadrature_eigenvector(9.0, 0.0, 60)
            .unwrap()
            .status()
            .is_clean());
    }

    #[test]
    fn quadrature_eigenvector_completeness_for_vacuum() {
        let vac = StateVector::vacuum(60).unwrap();
        let h = 0.02;
        let total: f64 = (0..=800)
            .map(|i| {
                let x = -8.0 + h * i as f64;
                h * quadrature_eigenvector(x, 0.3, 60)
                    .unwrap()
                    .overlap(vac.amplitudes())
                    .norm_sqr()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadrature_eigenvector_residual() {
        let n = 60;
        let g = Cutoff(n).guarded();
        for phi in [0.0, 1.1] {
            let x = quadrature_matrix(phi, n);
            for xv in [-3.0, -0.5, 0.0, 1.7, 3.0] {
                let ket = quadrature_eigenvector(xv, phi, n).unwrap();
                let v = ket.coefficients();
                let r = x.dot(v) - v.mapv(|z| z * xv);
                let res: f64 = r
                    .slice(s![..g])
                    .iter()
                    .map(|z| z.norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                let norm: f64 = v
                    .slice(s![..g])
                    .iter()
                    .map(|z| z.norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(res / norm <= 1e-6, "phi={phi} x={xv}: {}", res / norm);
            }
        }
    }

    #[test]
    fn beam_splitter_near_identity_and_unitary() {
        // single-photon sector: off-diagonal entries are exactly sqrt(1-eta) = 1e-3
        let eta: f64 = 0.999999;
        let bs = make_beam_splitter(eta, 2).unwrap().to_operator().unwrap();
        assert!(identity_defect(bs.matrix().view(), 3) <= (1.0 - eta).sqrt() * (1.0 + 1e-9));
        let bs = make_beam_splitter(eta, 10).unwrap().to_operator().unwrap();
        assert!(identity_defect(bs.matrix().view(), 100) < 1e-2);

        let bs = make_beam_splitter(0.5, 20).unwrap().to_operator().unwrap();
        let gram = dagger(bs.matrix()).dot(bs.matrix());
        assert!(identity_defect(gram.view(), 400) < 1e-10);
        assert!(bs.status().is_clean());
    }

    #[test]
    fn beam_splitter_rejects_endpoints() {
        for eta in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                make_beam_splitter(eta, 5),
                Err(Error::Parameter(_))
            ));
        }
    }

    #[test]
    fn beam_splitter_heisenberg_map() {
        let n = 12;
        let eta: f64 = 0.36;
        let u = make_beam_splitter(eta, n)
            .unwrap()
            .to_operator()
            .unwrap()
            .into_matrix();
        let a = annihilation_matrix(n);
        let sys_a = embed(&a, Mode::System, n);
        let probe_b = embed(&a, Mode::Probe, n);
        let lhs = dagger(&u).dot(&sys_a).dot(&u);
        let rhs = sys_a.mapv(|z| z * eta.sqrt()) - probe_b.mapv(|z| z * (1.0 - eta).sqrt());
        let lhs_b = dagger(&u).dot(&probe_b).dot(&u);
        let rhs_b = probe_b.mapv(|z| z * eta.sqrt()) + sys_a.mapv(|z| z * (1.0 - eta).sqrt());
        // total photon number below n-1 keeps both sides inside complete sectors
        for i in 0..n * n {
            for j in 0..n * n {
                let (ti, tj) = (i / n + i % n, j / n + j % n);
                if ti < n - 1 && tj < n - 1 {
                    assert!((lhs[[i, j]] - rhs[[i, j]]).norm() < 1e-12);
                    assert!((lhs_b[[i, j]] - rhs_b[[i, j]]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn beam_splitter_apply_matches_dense() {
        let bs = BeamSplitter::new(0.3, 7, 5).unwrap();
        let dense = bs.to_operator().unwrap();
        let psi =
            Array1::from_iter((0..35).map(|k| c((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos())));
        let a = bs.apply(&psi);
        let b = dense.matrix().dot(&psi);
        assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() < 1e-14));
    }

    #[test]
    fn beam_splitter_generator_forms_agree() {
        let n = 8;
        let theta = mixing_angle(0.4).unwrap();
        let a = annihilation_matrix(n);
        let ab_dag = linalg::kron(&a, &dagger(&a));
        let ad_b = linalg::kron(&dagger(&a), &a);
        let ladder = (ab_dag - ad_b).mapv(|z| z * theta);
        for phi in [0.0, 0.9] {
            let quad = beam_splitter_quadrature_generator(0.4, phi, n).unwrap();
            assert!(max_abs_diff(ladder.view(), quad.view(), n * n, n * n) < 1e-14);
        }
    }

    #[test]
    fn partial_trace_of_product_and_bs_output() {
        let s = coherent_state(c(0.3, 0.1), 8).unwrap();
        let p = squeezed_vacuum(2.0, 0.0, 8).unwrap();
        let joint = JointState::product(&s, &p);
        let rs = partial_trace_pure(&joint, Mode::System).unwrap();
        let want = DensityOperator::from_pure(&s);
        assert!(max_abs_diff(rs.matrix().view(), want.matrix().view(), 8, 8) < 1e-14);

        let one = StateVector::fock(1, 6).unwrap();
        let vac = StateVector::vacuum(6).unwrap();
        let bs = make_beam_splitter(0.5, 6).unwrap();
        let out = JointState::from_amplitudes(
            bs.apply(JointState::product(&one, &vac).amplitudes()),
            6,
            6,
        )
        .unwrap();
        for keep in [Mode::System, Mode::Probe] {
            let r = partial_trace_pure(&out, keep).unwrap();
            assert!((r.purity() - 0.5).abs() < 1e-10);
            assert!((r.trace() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_of_symmetric_entangled_state() {
        // (|0,1> + |1,0>)/sqrt 2
        let mut amps = Array1::zeros(9);
        amps[1] = c(1.0, 0.0);
        amps[3] = c(1.0, 0.0);
        let joint = JointState::from_amplitudes(amps, 3, 3).unwrap();
        let dense = {
            let v = joint.amplitudes();
            let mut m = Array2::zeros((9, 9));
            for i in 0..9 {
                for j in 0..9 {
                    m[[i, j]] = v[i] * v[j].conj();
                }
            }
            DensityOperator::new(
                m,
                Dims::Joint {
                    system: 3,
                    probe: 3,
                },
            )
            .unwrap()
        };
        for keep in [Mode::System, Mode::Probe] {
            let r = partial_trace(&dense, keep).unwrap();
            assert!((r.matrix()[[0, 0]].re - 0.5).abs() < 1e-15);
            assert!((r.matrix()[[1, 1]].re - 0.5).abs() < 1e-15);
            assert!(r.matrix()[[0, 1]].norm() < 1e-15);
            let pure = partial_trace_pure(&joint, keep).unwrap();
            assert!(max_abs_diff(r.matrix().view(), pure.matrix().view(), 3, 3) < 1e-15);
        }
        let single = DensityOperator::from_pure(&StateVector::vacuum(3).unwrap());
        assert!(matches!(
            partial_trace(&single, Mode::System),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn density_validation() {
        let bad = Array2::from_diag(&array![c(0.7, 0.0), c(0.7, 0.0)]);
        assert!(DensityOperator::new(bad, Dims::Single(2)).is_err());
        let neg = Array2::from_diag(&array![c(1.2, 0.0), c(-0.2, 0.0)]);
        assert!(DensityOperator::new(neg, Dims::Single(2)).is_err());
        let ok = Array2::from_diag(&array![c(0.25, 0.0), c(0.75, 0.0)]);
        assert!(DensityOperator::new(ok, Dims::Single(2)).is_ok());
    }
}
