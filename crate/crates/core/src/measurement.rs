//! Indirect-measurement framework: reduction operators, POMs, Born-rule
//! densities and state reduction.
//!
//! The continuous outcome `x` lives on a uniform [`OutcomeGrid`]; integrals over
//! outcomes are Riemann sums `h * sum_i f(x_i)`.
//!
//! Reduction operators are stored as `rows x block` matrices: `block` is the
//! number of leading system levels the family acts on (all of them for a full
//! family), `rows` the full output dimension. POMs built from them, `Omega^dag Omega`,
//! are then exact on the `block x block` corner.

use std::f64::consts::PI;

use log::warn;
use ndarray::{s, Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{self, DensityOperator, Dims, JointUnitary, QuadratureSpectrum, StateVector};
use crate::linalg::{self, dagger, C64};

/// Edge density above which a grid is considered too narrow.
pub const EDGE_DENSITY_LIMIT: f64 = 1e-8;
/// Normalization defect tolerated for an outcome density.
pub const NORMALIZATION_TOL: f64 = 1e-6;
/// Outcome probabilities below this are treated as impossible.
pub const ZERO_PROBABILITY: f64 = 1e-14;
const CLAMP_TOL: f64 = -1e-12;
const POSITIVITY_TOL: f64 = -1e-10;
/// Default completeness tolerance for reduction families.
pub const COMPLETENESS_TOL: f64 = 1e-4;

/// Uniformly spaced outcome values `x_min, x_min + h, ..., x_max`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutcomeGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub step: f64,
    #[serde(skip)]
    values: Vec<f64>,
}

impl OutcomeGrid {
    pub fn new(x_min: f64, x_max: f64, step: f64) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && step.is_finite())
            || step <= 0.0
            || x_max <= x_min
        {
            return Err(Error::Parameter(format!(
                "bad outcome grid {x_min}:{x_max}:{step}"
            )));
        }
        let intervals = (x_max - x_min) / step;
        let n = intervals.round();
        if (intervals - n).abs() > 1e-6 {
            return Err(Error::Parameter(format!(
                "grid step {step} does not divide [{x_min}, {x_max}]"
            )));
        }
        let n = n as usize;
        let values = (0..=n).map(|i| x_min + step * i as f64).collect();
        Ok(OutcomeGrid {
            x_min,
            x_max,
            step,
            values,
        })
    }

    /// `[-half_width, half_width]` with step `step`.
    pub fn symmetric(half_width: f64, step: f64) -> Result<Self> {
        Self::new(-half_width, half_width, step)
    }

    /// `points` equally spaced values spanning `[x_min, x_max]`.
    pub fn with_points(x_min: f64, x_max: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::Parameter("grid needs at least two points".into()));
        }
        Self::new(x_min, x_max, (x_max - x_min) / (points - 1) as f64)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, x: f64) -> Option<usize> {
        let i = ((x - self.x_min) / self.step).round();
        if i < 0.0 || i as usize >= self.len() {
            return None;
        }
        let i = i as usize;
        ((self.values[i] - x).abs() <= 1e-9 * self.step.max(1.0)).then_some(i)
    }

    /// Same step, bounds pushed outwards by `factor` of the half width.
    pub fn widened(&self, factor: f64) -> Result<Self> {
        let centre = 0.5 * (self.x_min + self.x_max);
        let half = 0.5 * (self.x_max - self.x_min) * factor;
        let steps = (half / self.step).ceil();
        Self::new(
            centre - steps * self.step,
            centre + steps * self.step,
            self.step,
        )
    }

    /// `h * sum_i f_i`.
    pub fn riemann(&self, f: &[f64]) -> f64 {
        self.step * f.iter().sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    RawInteraction,
    PartiallyCompensated,
    Compensated,
    AnalyticTarget,
    Dressed,
}

/// Outcome-indexed reduction operators `Omega(x_i)`.
#[derive(Clone, Debug)]
pub struct ReductionFamily {
    pub grid: OutcomeGrid,
    pub provenance: Provenance,
    operators: Vec<Array2<C64>>,
}

impl ReductionFamily {
    pub fn new(
        grid: OutcomeGrid,
        operators: Vec<Array2<C64>>,
        provenance: Provenance,
    ) -> Result<Self> {
        if operators.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} operators for {} grid points",
                operators.len(),
                grid.len()
            )));
        }
        if let Some(first) = operators.first() {
            if operators.iter().any(|o| o.dim() != first.dim()) {
                return Err(Error::Dimension("family operators differ in shape".into()));
            }
        }
        Ok(ReductionFamily {
            grid,
            provenance,
            operators,
        })
    }

    pub fn operators(&self) -> &[Array2<C64>] {
        &self.operators
    }

    pub fn operator_at(&self, x: f64) -> Result<&Array2<C64>> {
        let i = self
            .grid
            .index_of(x)
            .ok_or_else(|| Error::Parameter(format!("outcome {x} is not a grid point")))?;
        Ok(&self.operators[i])
    }

    /// Output dimension and number of system levels acted on.
    pub fn shape(&self) -> (usize, usize) {
        self.operators.first().map(|o| o.dim()).unwrap_or((0, 0))
    }

    pub fn block(&self) -> usize {
        self.shape().1
    }

    /// `h sum_i Omega^dag(x_i) Omega(x_i)`.
    pub fn completeness(&self) -> Array2<C64> {
        let b = self.block();
        let mut acc = Array2::<C64>::zeros((b, b));
        for op in &self.operators {
            acc = acc + dagger(op).dot(op);
        }
        acc.mapv(|z| z * self.grid.step)
    }

    /// max |(h sum Omega^dag Omega - I)_mn| over `m, n < levels`.
    pub fn completeness_defect(&self, levels: usize) -> f64 {
        linalg::identity_defect(self.completeness().view(), levels)
    }

    pub fn ensure_complete(&self, levels: usize, tolerance: f64) -> Result<()> {
        let defect = self.completeness_defect(levels);
        if defect > tolerance {
            return Err(Error::Completeness { defect, tolerance });
        }
        Ok(())
    }

    /// Left-multiplies every member by an outcome-dependent matrix `V(x)`.
    pub fn dressed<F>(&self, dressing: F) -> Result<ReductionFamily>
    where
        F: Fn(f64) -> Array2<C64>,
    {
        let ops = self
            .grid
            .values()
            .iter()
            .zip(&self.operators)
            .map(|(&x, op)| {
                let v = dressing(x);
                if v.ncols() != op.nrows() {
                    return Err(Error::Dimension(
                        "dressing does not match family rows".into(),
                    ));
                }
                Ok(v.dot(op))
            })
            .collect::<Result<Vec<_>>>()?;
        ReductionFamily::new(self.grid.clone(), ops, Provenance::Dressed)
    }
}

/// Contraction `<x| U |phi>` precomputed as slices `M_k = <k|_probe U |phi>_probe`,
/// so that `Omega(x) = sum_k <x|k> M_k` for any outcome value.
#[derive(Clone, Debug)]
pub struct InteractionContraction {
    slices: Vec<Array2<C64>>,
    measured_phase: f64,
}

impl InteractionContraction {
    /// Contracts against the probe state for the first `block` system levels.
    pub fn new(
        u: &dyn JointUnitary,
        probe: &StateVector,
        measured_phase: f64,
        block: usize,
    ) -> Result<Self> {
        let (ns, _) = u.joint_dims();
        if block == 0 || block > ns {
            return Err(Error::Dimension(format!(
                "system block {block} outside 1..={ns}"
            )));
        }
        let mut inputs = Array2::<C64>::zeros((ns, block));
        for n in 0..block {
            inputs[[n, n]] = C64::new(1.0, 0.0);
        }
        Self::from_inputs(u, probe, measured_phase, &inputs)
    }

    /// Contraction of `U (v_j (x) |phi>)` for the columns `v_j` of `inputs`,
    /// i.e. `Omega(x) V` for `V = inputs`.
    pub fn from_inputs(
        u: &dyn JointUnitary,
        probe: &StateVector,
        measured_phase: f64,
        inputs: &Array2<C64>,
    ) -> Result<Self> {
        let (ns, np) = u.joint_dims();
        if probe.cutoff() != np {
            return Err(Error::Dimension(format!(
                "probe cutoff {} vs interaction probe dimension {np}",
                probe.cutoff()
            )));
        }
        if inputs.nrows() != ns || inputs.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "inputs must be {ns} x k, got {:?}",
                inputs.dim()
            )));
        }
        let block = inputs.ncols();
        let mut slices = vec![Array2::<C64>::zeros((ns, block)); np];
        for n in 0..block {
            let joint = linalg::kron(
                &inputs.slice(s![.., n..n + 1]).to_owned(),
                &probe.amplitudes().clone().insert_axis(ndarray::Axis(1)),
            );
            let out = u.apply(&joint.column(0).to_owned());
            for m in 0..ns {
                for (k, slice) in slices.iter_mut().enumerate() {
                    slice[[m, n]] = out[m * np + k];
                }
            }
        }
        Ok(InteractionContraction {
            slices,
            measured_phase,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.slices[0].dim()
    }

    /// `Omega(x)` for any real outcome.
    pub fn omega(&self, x: f64) -> Array2<C64> {
        let bra = fock::quadrature_eigenvector(x, self.measured_phase, self.slices.len())
            .expect("probe cutoff validated at construction");
        let mut acc = Array2::<C64>::zeros(self.shape());
        for (c, slice) in bra.coefficients().iter().zip(&self.slices) {
            let w = c.conj();
            if w.norm() < 1e-300 {
                continue;
            }
            acc.scaled_add(w, slice);
        }
        acc
    }

    /// Contracts the slices with a fixed input, `rows_k = M_k v`, so that
    /// `Omega(x) v` costs one pass over the probe levels.
    pub fn bind(&self, v: &Array1<C64>) -> Result<BoundContraction> {
        let (ns, block) = self.shape();
        if v.len() != block {
            return Err(Error::Dimension(format!(
                "input of length {} for a {block}-column contraction",
                v.len()
            )));
        }
        let mut rows = Array2::<C64>::zeros((self.slices.len(), ns));
        for (mut row, m) in rows.outer_iter_mut().zip(&self.slices) {
            row.assign(&m.dot(v));
        }
        Ok(BoundContraction {
            rows,
            measured_phase: self.measured_phase,
        })
    }

    /// Replaces each slice `M_k` by `M_k R` for a fixed right factor.
    pub fn right_multiplied(&self, right: &Array2<C64>) -> Result<InteractionContraction> {
        if right.nrows() != self.shape().1 {
            return Err(Error::Dimension(
                "right factor does not match contraction block".into(),
            ));
        }
        Ok(InteractionContraction {
            slices: self.slices.iter().map(|m| m.dot(right)).collect(),
            measured_phase: self.measured_phase,
        })
    }
}

/// `Omega(x) v` for one fixed input `v`.
#[derive(Clone, Debug)]
pub struct BoundContraction {
    rows: Array2<C64>,
    measured_phase: f64,
}

impl BoundContraction {
    pub fn apply(&self, x: f64) -> Array1<C64> {
        let e = fock::hermite_functions(x, self.rows.nrows());
        let bra = Array1::from_iter(
            e.iter()
                .enumerate()
                .map(|(k, &v)| C64::from_polar(v, -self.measured_phase * k as f64)),
        );
        bra.dot(&self.rows)
    }

    /// `||Omega(x) v||^2` on every grid point.
    pub fn density(&self, grid: &OutcomeGrid) -> Result<OutcomeDensity> {
        let raw = grid
            .values()
            .iter()
            .map(|&x| self.apply(x).iter().map(|z| z.norm_sqr()).sum())
            .collect();
        OutcomeDensity::from_values(grid.clone(), raw)
    }
}

/// `Omega(x) = <x| U |phi>` on the grid, with `|x>` an eigenvector of the probe
/// quadrature at `measured_phase`.
pub fn reduction_from_interaction(
    u: &dyn JointUnitary,
    probe: &StateVector,
    grid: &OutcomeGrid,
    measured_phase: f64,
) -> Result<ReductionFamily> {
    let (ns, _) = u.joint_dims();
    let contraction = InteractionContraction::new(u, probe, measured_phase, ns)?;
    let ops = grid
        .values()
        .iter()
        .map(|&x| contraction.omega(x))
        .collect();
    ReductionFamily::new(grid.clone(), ops, Provenance::RawInteraction)
}

/// POM densities `d mu / dx = Omega^dag Omega` on the grid.
#[derive(Clone, Debug)]
pub struct PomDensity {
    pub grid: OutcomeGrid,
    matrices: Vec<Array2<C64>>,
    /// Most negative eigenvalue over all grid points.
    pub min_eigenvalue: f64,
}

impl PomDensity {
    pub fn matrices(&self) -> &[Array2<C64>] {
        &self.matrices
    }

    pub fn block(&self) -> usize {
        self.matrices.first().map(|m| m.nrows()).unwrap_or(0)
    }

    /// Largest entrywise difference to another POM on the leading `levels` block.
    pub fn max_deviation(&self, other: &PomDensity, levels: usize) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Dimension("POMs live on different grids".into()));
        }
        Ok(self
            .matrices
            .iter()
            .zip(&other.matrices)
            .map(|(a, b)| linalg::max_abs_diff(a.view(), b.view(), levels, levels))
            .fold(0.0, f64::max))
    }

    /// `h sum_i d mu(x_i)`.
    pub fn total(&self) -> Array2<C64> {
        let b = self.block();
        let mut acc = Array2::<C64>::zeros((b, b));
        for m in &self.matrices {
            acc += m;
        }
        acc.mapv(|z| z * self.grid.step)
    }
}

pub fn pom_from_reduction(family: &ReductionFamily) -> Result<PomDensity> {
    let mut min_eigenvalue = f64::INFINITY;
    let mut matrices = Vec::with_capacity(family.operators.len());
    for op in &family.operators {
        let m = linalg::hermitize(&dagger(op).dot(op));
        let (vals, _) = linalg::eigh(&m)?;
        min_eigenvalue = min_eigenvalue.min(vals[0]);
        matrices.push(m);
    }
    if min_eigenvalue < POSITIVITY_TOL {
        warn!("POM density has eigenvalue {min_eigenvalue:.3e}");
    }
    Ok(PomDensity {
        grid: family.grid.clone(),
        matrices,
        min_eigenvalue,
    })
}

/// Tabulated outcome density on a grid.
#[derive(Clone, Debug, Serialize)]
pub struct OutcomeDensity {
    pub grid: OutcomeGrid,
    pub values: Vec<f64>,
    /// `|h sum p - 1|`.
    pub normalization_defect: f64,
    /// Most negative raw value before clamping (0 if none).
    pub clamp_defect: f64,
}

impl OutcomeDensity {
    /// Clamps small negative values and records the defects; no range check.
    pub fn from_values(grid: OutcomeGrid, raw: Vec<f64>) -> Result<Self> {
        if raw.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} grid points",
                raw.len(),
                grid.len()
            )));
        }
        let clamp_defect = raw.iter().cloned().fold(0.0f64, f64::min);
        if clamp_defect < CLAMP_TOL {
            warn!("outcome density clamped from {clamp_defect:.3e}");
        }
        let values: Vec<f64> = raw.into_iter().map(|p| p.max(0.0)).collect();
        let normalization_defect = (grid.riemann(&values) - 1.0).abs();
        Ok(OutcomeDensity {
            grid,
            values,
            normalization_defect,
            clamp_defect,
        })
    }

    /// Errors when either edge carries more than [`EDGE_DENSITY_LIMIT`].
    pub fn ensure_range(&self) -> Result<()> {
        let edge = self.values[0].max(*self.values.last().unwrap());
        if edge > EDGE_DENSITY_LIMIT {
            return Err(Error::Range {
                edge_density: edge,
                normalization_defect: self.normalization_defect,
            });
        }
        Ok(())
    }

    pub fn ensure_normalized(&self) -> Result<()> {
        if self.normalization_defect > NORMALIZATION_TOL {
            return Err(Error::Unnormalized {
                defect: self.normalization_defect,
            });
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        self.grid.riemann(&self.values)
    }

    pub fn mean(&self) -> f64 {
        let w: Vec<f64> = self
            .grid
            .values()
            .iter()
            .zip(&self.values)
            .map(|(x, p)| x * p)
            .collect();
        self.grid.riemann(&w) / self.mass()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let w: Vec<f64> = self
            .grid
            .values()
            .iter()
            .zip(&self.values)
            .map(|(x, p)| (x - m).powi(2) * p)
            .collect();
        self.grid.riemann(&w) / self.mass()
    }
}

fn check_state_block(rho: &DensityOperator, block: usize) -> Result<DensityOperator> {
    if rho.dim() < block {
        return Err(Error::Dimension(format!(
            "state dimension {} below POM block {block}",
            rho.dim()
        )));
    }
    rho.truncated(block)
}

/// `p(x_i) = Tr[rho d mu(x_i)]` without the grid-range check.
pub fn born_density_unchecked(rho: &DensityOperator, pom: &PomDensity) -> Result<OutcomeDensity> {
    let rho = check_state_block(rho, pom.block())?;
    let raw = pom.matrices.iter().map(|m| rho.expectation(m).re).collect();
    OutcomeDensity::from_values(pom.grid.clone(), raw)
}

/// Born rule `p(x) dx = Tr[rho d mu(x)]`; errors when the grid clips the density.
pub fn born_density(rho: &DensityOperator, pom: &PomDensity) -> Result<OutcomeDensity> {
    let d = born_density_unchecked(rho, pom)?;
    d.ensure_range()?;
    Ok(d)
}

/// `Omega rho Omega^dag / Tr[rho Omega^dag Omega]`.
pub fn reduce_state(rho: &DensityOperator, omega: &Array2<C64>) -> Result<DensityOperator> {
    let rho = check_state_block(rho, omega.ncols())?;
    let out = omega.dot(rho.matrix()).dot(&dagger(omega));
    let p = linalg::trace(&out).re;
    if !(p > ZERO_PROBABILITY) {
        return Err(Error::ZeroProbability { probability: p });
    }
    let n = out.nrows();
    DensityOperator::from_unnormalized(out, Dims::Single(n))
}

/// Pure-state reduction; returns the normalized output and `||Omega psi||^2`.
pub fn reduce_pure(psi: &StateVector, omega: &Array2<C64>) -> Result<(StateVector, f64)> {
    let b = omega.ncols();
    if psi.cutoff() < b {
        return Err(Error::Dimension(
            "state smaller than reduction block".into(),
        ));
    }
    let v = omega.dot(&psi.amplitudes().slice(s![..b]));
    let p: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    if !(p > ZERO_PROBABILITY) {
        return Err(Error::ZeroProbability { probability: p });
    }
    Ok((StateVector::from_amplitudes(v)?, p))
}

/// Density of an ideal measurement of `x_phase`: `<y|rho|y>` on the grid.
pub fn ideal_quadrature_density(
    rho: &DensityOperator,
    phase: f64,
    grid: &OutcomeGrid,
) -> Result<OutcomeDensity> {
    let n = rho.dim();
    let raw = grid
        .values()
        .iter()
        .map(|&y| {
            let ket = fock::quadrature_eigenvector(y, phase, n)?;
            let v = ket.coefficients();
            let rv = rho.matrix().dot(v);
            Ok(v.iter()
                .zip(rv.iter())
                .map(|(a, b)| a.conj() * b)
                .sum::<C64>()
                .re)
        })
        .collect::<Result<Vec<f64>>>()?;
    OutcomeDensity::from_values(grid.clone(), raw)
}

/// `|<y|psi>|^2` on the grid for a pure state.
pub fn ideal_quadrature_density_pure(
    psi: &StateVector,
    phase: f64,
    grid: &OutcomeGrid,
) -> Result<OutcomeDensity> {
    let raw = grid
        .values()
        .iter()
        .map(|&y| {
            Ok(fock::quadrature_eigenvector(y, phase, psi.cutoff())?
                .overlap(psi.amplitudes())
                .norm_sqr())
        })
        .collect::<Result<Vec<f64>>>()?;
    OutcomeDensity::from_values(grid.clone(), raw)
}

/// `p(y|x)`: density of an ideal `x_{second_phase}` measurement on the state
/// reduced by outcome `x` (a grid point of `family`). Outcomes `y` share the family grid.
pub fn conditional_density(
    rho: &DensityOperator,
    family: &ReductionFamily,
    x: f64,
    second_phase: f64,
) -> Result<OutcomeDensity> {
    let reduced = reduce_state(rho, family.operator_at(x)?)?;
    let d = ideal_quadrature_density(&reduced, second_phase, &family.grid)?;
    d.ensure_range()?;
    Ok(d)
}

/// Gaussian von Neumann reduction operator
/// `Omega(x) = (2 pi Delta^2)^{-1/4} exp[-(x - x_phi)^2 / (4 Delta^2)]`
/// by function calculus on the truncated quadrature.
#[derive(Clone, Debug)]
pub struct VnTarget {
    pub delta: f64,
    spectrum: QuadratureSpectrum,
    cutoff: usize,
}

/// Oversampling of the spectral basis relative to the reported cutoff.
const TARGET_OVERSAMPLING: usize = 2;

impl VnTarget {
    pub fn new(delta: f64, phi: f64, cutoff: usize) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Parameter(format!(
                "width Delta must be > 0, got {delta}"
            )));
        }
        fock::Cutoff::new(cutoff)?;
        let spectrum = QuadratureSpectrum::new(phi, TARGET_OVERSAMPLING * cutoff)?;
        Ok(VnTarget {
            delta,
            spectrum,
            cutoff,
        })
    }

    /// `cutoff x cols` corner of `Omega(x)`.
    pub fn omega_columns(&self, x: f64, cols: usize) -> Array2<C64> {
        let norm = (2.0 * PI * self.delta * self.delta).powf(-0.25);
        let four_d2 = 4.0 * self.delta * self.delta;
        let full = self.spectrum.apply_columns(
            |lam| C64::new(norm * (-(x - lam).powi(2) / four_d2).exp(), 0.0),
            cols.min(self.cutoff),
        );
        full.slice(s![..self.cutoff, ..]).to_owned()
    }

    pub fn omega(&self, x: f64) -> Array2<C64> {
        self.omega_columns(x, self.cutoff)
    }

    /// Worst deviation of `h sum_i |Omega(x_i - q)|^2` from 1 as the offset `q`
    /// sweeps one grid cell; this measures how well the step resolves `Delta`.
    pub fn scalar_completeness_defect(&self, grid: &OutcomeGrid) -> f64 {
        let norm = (2.0 * PI * self.delta * self.delta).powf(-0.5);
        let two_d2 = 2.0 * self.delta * self.delta;
        let centre = grid.values()[grid.len() / 2];
        (0..8)
            .map(|k| {
                let q = centre + grid.step * k as f64 / 8.0;
                let s: f64 = grid
                    .values()
                    .iter()
                    .map(|&x| norm * (-(x - q).powi(2) / two_d2).exp())
                    .sum();
                (grid.step * s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// The analytic von Neumann family on `grid`.
pub fn vn_target_family(
    delta: f64,
    phi: f64,
    grid: &OutcomeGrid,
    cutoff: usize,
) -> Result<ReductionFamily> {
    let target = VnTarget::new(delta, phi, cutoff)?;
    let defect = target.scalar_completeness_defect(grid);
    if defect > COMPLETENESS_TOL {
        return Err(Error::Range {
            edge_density: defect,
            normalization_defect: defect,
        });
    }
    let ops = grid.values().iter().map(|&x| target.omega(x)).collect();
    ReductionFamily::new(grid.clone(), ops, Provenance::AnalyticTarget)
}

/// Grid convolution `sum_j h f(q_j) N(x_i - q_j; 0, Delta^2)`.
pub fn convolve_gaussian(ideal: &OutcomeDensity, delta: f64) -> Vec<f64> {
    let xs = ideal.grid.values();
    let h = ideal.grid.step;
    let norm = 1.0 / (2.0 * PI * delta * delta).sqrt();
    xs.iter()
        .map(|&x| {
            h * xs
                .iter()
                .zip(&ideal.values)
                .map(|(&q, &p)| p * norm * (-(x - q).powi(2) / (2.0 * delta * delta)).exp())
                .sum::<f64>()
        })
        .collect()
}

/// Moment fit of a POM to the Gaussian-kernel form `d mu(x) = N(x - g x_phi; Delta^2)`:
/// `sum h d mu = I`, `sum h x d mu = g x_phi`, `sum h x^2 d mu = g^2 x_phi^2 + Delta^2`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct KernelFit {
    pub gain: f64,
    pub delta: f64,
    /// Largest entrywise misfit of the three moment identities on the block.
    pub residual: f64,
}

/// The residual is taken over the leading `levels` block.
pub fn fit_gaussian_kernel(pom: &PomDensity, phase: f64, levels: usize) -> Result<KernelFit> {
    let b = pom.block();
    if b < 3 {
        return Err(Error::Dimension(
            "kernel fit needs a block of at least 3 levels".into(),
        ));
    }
    let h = pom.grid.step;
    let mut m0 = Array2::<C64>::zeros((b, b));
    let mut m1 = Array2::<C64>::zeros((b, b));
    let mut m2 = Array2::<C64>::zeros((b, b));
    for (&x, m) in pom.grid.values().iter().zip(&pom.matrices) {
        m0.scaled_add(C64::new(h, 0.0), m);
        m1.scaled_add(C64::new(h * x, 0.0), m);
        m2.scaled_add(C64::new(h * x * x, 0.0), m);
    }
    let xq = fock::quadrature_matrix(phase, b + 1);
    let xq2 = xq.dot(&xq).slice(s![..b, ..b]).to_owned();
    let xq = xq.slice(s![..b, ..b]).to_owned();
    // <0|x|1> = e^{-i phase}/2
    let gain = (m1[[0, 1]] / xq[[0, 1]]).re;
    let delta2 = m2[[0, 0]].re - gain * gain * xq2[[0, 0]].re;
    if !(delta2 > 0.0) {
        return Err(Error::DegenerateMeasurement { variance: delta2 });
    }
    let expect1 = xq.mapv(|z| z * gain);
    let expect2 = xq2.mapv(|z| z * gain * gain) + Array2::<C64>::eye(b).mapv(|z| z * delta2);
    // the last row/column of x^2 is truncated
    let inner = levels.min(b - 1);
    let residual = linalg::identity_defect(m0.view(), inner)
        .max(linalg::max_abs_diff(
            m1.view(),
            expect1.view(),
            inner,
            inner,
        ))
        .max(linalg::max_abs_diff(
            m2.view(),
            expect2.view(),
            inner,
            inner,
        ));
    Ok(KernelFit {
        gain,
        delta: delta2.sqrt(),
        residual,
    })
}
