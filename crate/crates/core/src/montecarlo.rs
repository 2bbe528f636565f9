//! Sampling of measurement records, finite local-oscillator feedback and
//! repeatability experiments.
//!
//! Every trial draws from its own ChaCha8 stream (`seed`, stream = trial index),
//! so records are reproducible bit for bit and independent of evaluation order.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{self, BeamSplitter, DensityOperator, Dims, JointUnitary, StateVector};
use crate::linalg::{self, C64};
use crate::measurement::{OutcomeDensity, OutcomeGrid, NORMALIZATION_TOL, ZERO_PROBABILITY};
use crate::scheme::{theta_law, BoundScheme, FeedbackSpec};

pub const RNG_NAME: &str = "ChaCha8 (rand_chacha)";
/// Redraws allowed when an outcome lands on a zero-probability point.
pub const MAX_RESAMPLES: u32 = 10;
/// Minimum number of trials for repeatability statistics.
pub const MIN_TRIALS: usize = 100;
/// Weight below which loss branches are dropped.
pub const BRANCH_TOL: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        RngSeed { seed, stream: 0 }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        RngSeed { stream, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Inverse-CDF sampler for a tabulated density. The CDF is the trapezoid
/// integral at the grid points and linear inside each cell.
#[derive(Clone, Debug)]
pub struct OutcomeSampler {
    x: Vec<f64>,
    cdf: Vec<f64>,
}

impl OutcomeSampler {
    pub fn new(density: &OutcomeDensity) -> Result<Self> {
        if density.normalization_defect > NORMALIZATION_TOL
            || density.values.iter().any(|p| *p < 0.0)
        {
            return Err(Error::Unnormalized {
                defect: density.normalization_defect,
            });
        }
        let x = density.grid.values().to_vec();
        let h = density.grid.step;
        let p = &density.values;
        let mut cdf = Vec::with_capacity(x.len());
        cdf.push(0.0);
        for i in 1..x.len() {
            cdf.push(cdf[i - 1] + 0.5 * h * (p[i - 1] + p[i]));
        }
        let total = *cdf.last().unwrap_or(&0.0);
        if !(total > 0.0) {
            return Err(Error::ZeroProbability { probability: total });
        }
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(OutcomeSampler { x, cdf })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x <= self.x[0] {
            return 0.0;
        }
        if x >= self.x[n - 1] {
            return 1.0;
        }
        let i = self.x.partition_point(|&v| v <= x) - 1;
        let t = (x - self.x[i]) / (self.x[i + 1] - self.x[i]);
        self.cdf[i] + t * (self.cdf[i + 1] - self.cdf[i])
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.invert(u)
    }

    fn invert(&self, u: f64) -> f64 {
        let n = self.cdf.len();
        let j = self.cdf.partition_point(|&c| c <= u).clamp(1, n - 1);
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.x[j - 1] + t * (self.x[j] - self.x[j - 1])
    }
}

pub fn sample_outcome(density: &OutcomeDensity, seed: RngSeed) -> Result<f64> {
    Ok(OutcomeSampler::new(density)?.sample(&mut seed.rng()))
}

pub fn sample_outcomes(density: &OutcomeDensity, n: usize, seed: RngSeed) -> Result<Vec<f64>> {
    let sampler = OutcomeSampler::new(density)?;
    let mut rng = seed.rng();
    Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
}

/// Kolmogorov-Smirnov distance between the empirical distribution of `samples` and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// Asymptotic KS critical distance at significance `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// A mixed state as weighted pure vectors. Weights need not be normalized.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub weights: Vec<f64>,
    pub vectors: Vec<Array1<C64>>,
}

impl Ensemble {
    /// `v` with weight `||v||^2` and unit-norm vector.
    pub fn from_unnormalized(v: Array1<C64>) -> Self {
        let mut e = Ensemble {
            weights: Vec::new(),
            vectors: Vec::new(),
        };
        e.push(v);
        e
    }

    fn push(&mut self, v: Array1<C64>) {
        let w: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if w > 0.0 {
            let s = w.sqrt();
            self.vectors.push(v.mapv(|z| z / s));
            self.weights.push(w);
        }
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }

    pub fn normalized(mut self) -> Self {
        let t = self.total();
        self.weights.iter_mut().for_each(|w| *w /= t);
        self
    }

    pub fn map<F: Fn(&Array1<C64>) -> Array1<C64>>(&self, f: F) -> Self {
        let mut e = Ensemble {
            weights: Vec::new(),
            vectors: Vec::new(),
        };
        for (w, v) in self.weights.iter().zip(&self.vectors) {
            let u = f(v);
            let n: f64 = u.iter().map(|z| z.norm_sqr()).sum();
            let s = n.sqrt();
            e.vectors.push(u.mapv(|z| z / s));
            e.weights.push(w * n);
        }
        e
    }

    pub fn expectation(&self, op: &Array2<C64>) -> C64 {
        let t = self.total();
        self.weights
            .iter()
            .zip(&self.vectors)
            .map(|(w, v)| v.mapv(|z| z.conj()).dot(&op.dot(v)) * *w)
            .sum::<C64>()
            / t
    }

    /// Mean and variance of `x_phi`.
    pub fn quadrature_moments(&self, phi: f64) -> (f64, f64) {
        let x = fock::quadrature_matrix(phi, self.dim());
        self.moments(&x, &x.dot(&x))
    }

    /// Mean and variance from precomputed `x` and `x^2`.
    pub fn moments(&self, x: &Array2<C64>, x2: &Array2<C64>) -> (f64, f64) {
        let m = self.expectation(x).re;
        (m, self.expectation(x2).re - m * m)
    }

    /// Weight in the top 20% of levels.
    pub fn tail_mass(&self) -> f64 {
        let n = self.dim();
        let g = fock::Cutoff::new(n).map(|c| c.guarded()).unwrap_or(n);
        let t = self.total();
        self.weights
            .iter()
            .zip(&self.vectors)
            .map(|(w, v)| w * v.iter().skip(g).map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / t
    }

    /// `<psi| rho |psi>` for a unit vector `psi`.
    pub fn fidelity(&self, psi: &Array1<C64>) -> f64 {
        let t = self.total();
        let conj = psi.mapv(|z| z.conj());
        self.weights
            .iter()
            .zip(&self.vectors)
            .map(|(w, v)| w * conj.dot(v).norm_sqr())
            .sum::<f64>()
            / t
    }

    pub fn to_density(&self) -> Result<DensityOperator> {
        let n = self.dim();
        let mut m = Array2::<C64>::zeros((n, n));
        for (w, v) in self.weights.iter().zip(&self.vectors) {
            for i in 0..n {
                for j in 0..n {
                    m[[i, j]] += v[i] * v[j].conj() * *w;
                }
            }
        }
        DensityOperator::from_unnormalized(m, Dims::Single(n))
    }
}

/// `ln sqrt(C(n,l) theta^(n-l) (1-theta)^l)`, the Kraus amplitude of losing `l` of `n` photons.
fn loss_log_amplitude(n: usize, l: usize, theta: f64) -> f64 {
    let ln_binom: f64 = (1..=l)
        .map(|j| (((n - l + j) as f64) / j as f64).ln())
        .sum();
    let lt = if n > l {
        (n - l) as f64 * theta.ln()
    } else {
        0.0
    };
    let ll = if l > 0 {
        l as f64 * (1.0 - theta).ln()
    } else {
        0.0
    };
    0.5 * (ln_binom + lt + ll)
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Parameter(format!(
            "loss transmissivity must lie in (0,1], got {theta}"
        )));
    }
    Ok(())
}

/// `K_l v` for the pure-loss channel of transmissivity `theta`.
fn loss_kraus_apply(v: &Array1<C64>, l: usize, theta: f64) -> Array1<C64> {
    let n = v.len();
    let mut out = Array1::<C64>::zeros(n);
    for m in l..n {
        out[m - l] = v[m] * loss_log_amplitude(m, l, theta).exp();
    }
    out
}

/// Loss channel on a pure vector as branches `K_l v`; stops once the remaining
/// weight is below `tol`.
pub fn loss_branches(v: &Array1<C64>, theta: f64, tol: f64) -> Result<Ensemble> {
    check_theta(theta)?;
    let total: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let mut e = Ensemble {
        weights: Vec::new(),
        vectors: Vec::new(),
    };
    if theta == 1.0 {
        e.push(v.clone());
        return Ok(e);
    }
    let mut kept = 0.0;
    for l in 0..v.len() {
        let b = loss_kraus_apply(v, l, theta);
        kept += b.iter().map(|z| z.norm_sqr()).sum::<f64>();
        e.push(b);
        if total - kept <= tol * total {
            break;
        }
    }
    Ok(e)
}

/// `L_theta(rho) = Tr_b[U (rho (x) |0><0|) U^dag]` for a beam splitter of transmissivity `theta`.
pub fn loss_channel(rho: &DensityOperator, theta: f64) -> Result<DensityOperator> {
    check_theta(theta)?;
    let n = rho.dim();
    let r = rho.matrix();
    let mut out = Array2::<C64>::zeros((n, n));
    for l in 0..n {
        let amp: Vec<f64> = (0..n)
            .map(|m| {
                if m >= l {
                    loss_log_amplitude(m, l, theta).exp()
                } else {
                    0.0
                }
            })
            .collect();
        if amp.iter().all(|a| *a == 0.0) {
            continue;
        }
        for i in l..n {
            for j in l..n {
                out[[i - l, j - l]] += r[[i, j]] * amp[i] * amp[j];
            }
        }
    }
    DensityOperator::from_unnormalized(out, rho.dims())
}

/// Local-oscillator amplitude and cell transmissivity realizing `amplitude`
/// with an LO of modulus `beta_abs`: `theta = 1 - |amplitude|^2/beta_abs^2` and
/// `beta = -beta_abs e^{i arg amplitude}`, so the LO phase flips with the sign
/// of the outcome.
pub fn lo_settings(amplitude: C64, beta_abs: f64) -> Result<(C64, f64)> {
    let required = amplitude.norm();
    if !(beta_abs > 0.0) || required > beta_abs {
        return Err(Error::InfeasibleFeedback {
            required,
            beta: beta_abs,
        });
    }
    let theta = 1.0 - (required / beta_abs).powi(2);
    let phase = if required > 0.0 { amplitude.arg() } else { 0.0 };
    Ok((-C64::from_polar(beta_abs, phase), theta))
}

/// Feedback by mixing with a coherent LO on a beam splitter and discarding the LO
/// port. Since `U (I (x) D(beta)) = (D(-sqrt(1-theta) beta) (x) D(sqrt(theta) beta)) U`,
/// the reduced map is `D(amplitude) L_theta(rho) D(amplitude)^dag` exactly.
pub fn finite_lo_displacement(
    rho: &DensityOperator,
    amplitude: C64,
    beta_abs: f64,
) -> Result<DensityOperator> {
    let (_, theta) = lo_settings(amplitude, beta_abs)?;
    let lost = loss_channel(rho, theta)?;
    let d = fock::make_displacement(amplitude, rho.dim())?.into_matrix();
    lost.conjugate(&d)
}

/// The same map by explicit coupling to `|beta>` in a `lo_cutoff`-level LO mode
/// and a partial trace. Usable for small `beta_abs` only.
pub fn finite_lo_displacement_coupled(
    rho: &DensityOperator,
    amplitude: C64,
    beta_abs: f64,
    lo_cutoff: usize,
) -> Result<DensityOperator> {
    let (beta, theta) = lo_settings(amplitude, beta_abs)?;
    let n = rho.dim();
    let lo = fock::coherent_state(beta, lo_cutoff)?;
    let (values, vectors) = linalg::eigh(rho.matrix())?;
    let out = if theta < 1.0 {
        let bs = BeamSplitter::new(theta, n, lo_cutoff)?;
        let mut out = Array2::<C64>::zeros((n, n));
        for (k, &p) in values.iter().enumerate() {
            if p <= 1e-15 {
                continue;
            }
            let v = vectors.column(k);
            let joint = Array1::from_iter(
                v.iter()
                    .flat_map(|a| lo.amplitudes().iter().map(move |b| a * b)),
            );
            let w = bs
                .apply(&joint)
                .into_shape_with_order((n, lo_cutoff))
                .expect("system-major layout");
            out = out + w.dot(&linalg::dagger(&w)).mapv(|z| z * p);
        }
        out
    } else {
        rho.matrix().clone()
    };
    DensityOperator::from_unnormalized(out, rho.dims())
}

/// A measuring device bound to one input state.
pub trait Instrument {
    /// Levels of the post-measurement states.
    fn dim(&self) -> usize;
    /// Quadrature phase of the measured observable.
    fn phase(&self) -> f64;
    fn outcome_density(&self, grid: &OutcomeGrid) -> Result<OutcomeDensity>;
    /// Unnormalized post-measurement state; its total weight is the outcome density at `x`.
    fn reduce(&self, x: f64) -> Result<Ensemble>;
    fn feedback_label(&self) -> &'static str;
}

/// The optical scheme with ideal or finite-LO feedback.
pub struct SchemeInstrument<'a> {
    pub bound: BoundScheme<'a>,
    pub feedback: FeedbackSpec,
}

impl<'a> SchemeInstrument<'a> {
    pub fn new(bound: BoundScheme<'a>, feedback: FeedbackSpec) -> Self {
        SchemeInstrument { bound, feedback }
    }
}

impl Instrument for SchemeInstrument<'_> {
    fn dim(&self) -> usize {
        self.bound.work_cutoff()
    }

    fn phase(&self) -> f64 {
        self.bound.params().phi
    }

    fn outcome_density(&self, grid: &OutcomeGrid) -> Result<OutcomeDensity> {
        self.bound.outcome_density(grid)
    }

    fn reduce(&self, x: f64) -> Result<Ensemble> {
        let p = self.bound.params();
        let mask = self.bound.mask();
        match self.feedback {
            FeedbackSpec::FiniteLo { beta_re, beta_im } if mask.feedback => {
                let theta = theta_law(x, p.eta, C64::new(beta_re, beta_im).norm())?;
                let t = p.feedback_gain() * x;
                let branches = loss_branches(&self.bound.detected(x), theta, BRANCH_TOL)?;
                Ok(branches.map(|v| self.bound.back(self.bound.displace(t, v))))
            }
            _ => Ok(Ensemble::from_unnormalized(self.bound.apply(x))),
        }
    }

    fn feedback_label(&self) -> &'static str {
        match (self.bound.mask().feedback, self.feedback) {
            (false, _) => "none",
            (true, FeedbackSpec::Ideal) => "ideal",
            (true, FeedbackSpec::FiniteLo { .. }) => "finite-lo",
        }
    }
}

/// `Omega(x) = g_Delta(x)^{1/2} I`: outcomes carry no information and the state is left alone.
pub struct NullInstrument {
    pub state: Array1<C64>,
    pub delta: f64,
    pub phi: f64,
}

impl NullInstrument {
    fn weight(&self, x: f64) -> f64 {
        let v = self.delta * self.delta;
        (-x * x / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
    }
}

impl Instrument for NullInstrument {
    fn dim(&self) -> usize {
        self.state.len()
    }

    fn phase(&self) -> f64 {
        self.phi
    }

    fn outcome_density(&self, grid: &OutcomeGrid) -> Result<OutcomeDensity> {
        OutcomeDensity::from_values(
            grid.clone(),
            grid.values().iter().map(|&x| self.weight(x)).collect(),
        )
    }

    fn reduce(&self, x: f64) -> Result<Ensemble> {
        let s = self.weight(x).sqrt();
        Ok(Ensemble::from_unnormalized(self.state.mapv(|z| z * s)))
    }

    fn feedback_label(&self) -> &'static str {
        "none"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub index: u64,
    /// First outcome.
    pub x: f64,
    /// Outcome density at `x`.
    pub probability: f64,
    /// Mean and variance of the measured quadrature after the reduction.
    pub post_mean: f64,
    pub post_var: f64,
    /// Ideal re-measurement of the same quadrature; present in repeatability mode only.
    pub y: Option<f64>,
    pub feedback: &'static str,
    pub resamples: u32,
    pub tail_mass: f64,
}

/// Shared tables for repeated trials on one instrument.
pub struct TrialRunner<I: Instrument> {
    pub instrument: I,
    pub grid: OutcomeGrid,
    first: OutcomeSampler,
    /// `<y|_phi` rows for the second measurement; empty outside repeatability mode.
    bras: Array2<C64>,
    x: Array2<C64>,
    x2: Array2<C64>,
}

impl<I: Instrument> TrialRunner<I> {
    /// `repeat` switches on the ideal second measurement.
    pub fn new(instrument: I, grid: OutcomeGrid, repeat: bool) -> Result<Self> {
        let first = OutcomeSampler::new(&instrument.outcome_density(&grid)?)?;
        let n = instrument.dim();
        let phi = instrument.phase();
        let rows = if repeat { grid.len() } else { 0 };
        let mut bras = Array2::<C64>::zeros((rows, n));
        for (mut row, &y) in bras.outer_iter_mut().zip(grid.values()) {
            let e = fock::hermite_functions(y, n);
            for (k, z) in row.iter_mut().enumerate() {
                *z = C64::from_polar(e[k], -phi * k as f64);
            }
        }
        let x = fock::quadrature_matrix(phi, n);
        let x2 = x.dot(&x);
        Ok(TrialRunner {
            instrument,
            grid,
            first,
            bras,
            x,
            x2,
        })
    }

    pub fn repeats(&self) -> bool {
        self.bras.nrows() > 0
    }

    /// Density of the ideal `x_phi` measurement on a normalized ensemble.
    pub fn ideal_density(&self, state: &Ensemble) -> Result<OutcomeDensity> {
        let mut p = vec![0.0; self.grid.len()];
        for (w, v) in state.weights.iter().zip(&state.vectors) {
            for (pi, a) in p.iter_mut().zip(self.bras.dot(v).iter()) {
                *pi += w * a.norm_sqr();
            }
        }
        OutcomeDensity::from_values(self.grid.clone(), p)
    }

    /// One trial on stream `index` of `seed`.
    pub fn run_trial(&self, index: u64, seed: u64) -> Result<TrialRecord> {
        let mut rng = RngSeed::new(seed).with_stream(index).rng();
        let mut resamples = 0;
        let (x, post) = loop {
            let x = self.first.sample(&mut rng);
            let post = self.instrument.reduce(x)?;
            if post.total() > ZERO_PROBABILITY {
                break (x, post);
            }
            resamples += 1;
            if resamples > MAX_RESAMPLES {
                return Err(Error::ZeroProbability {
                    probability: post.total(),
                });
            }
        };
        let probability = post.total();
        let post = post.normalized();
        let (post_mean, post_var) = post.moments(&self.x, &self.x2);
        let y = if self.repeats() {
            Some(OutcomeSampler::new(&self.ideal_density(&post)?)?.sample(&mut rng))
        } else {
            None
        };
        Ok(TrialRecord {
            index,
            x,
            probability,
            post_mean,
            post_var,
            y,
            feedback: self.instrument.feedback_label(),
            resamples,
            tail_mass: post.tail_mass(),
        })
    }

    /// Trials `0..n` in index order.
    pub fn run_trials(&self, n: usize, seed: u64) -> Result<Vec<TrialRecord>> {
        (0..n as u64).map(|i| self.run_trial(i, seed)).collect()
    }
}

/// Statistics of `y - x` and of the regression of `y` on `x`, with half-widths
/// at 95% confidence (normal approximation).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepeatabilityStats {
    pub trials: usize,
    pub mean_x: f64,
    pub var_x: f64,
    pub mean_diff: f64,
    pub mean_diff_half_width: f64,
    pub var_diff: f64,
    pub var_diff_se: f64,
    pub var_diff_half_width: f64,
    pub slope: f64,
    pub slope_se: f64,
    pub slope_half_width: f64,
    pub mean_post_var: f64,
}

pub const CONFIDENCE: f64 = 0.95;
const Z95: f64 = 1.959963984540054;

pub fn repeatability_stats(records: &[TrialRecord]) -> Result<RepeatabilityStats> {
    let n = records.len();
    if n < MIN_TRIALS {
        return Err(Error::Parameter(format!(
            "repeatability needs at least {MIN_TRIALS} trials, got {n}"
        )));
    }
    let pairs: Vec<(f64, f64, f64)> = records
        .iter()
        .map(|r| r.y.map(|y| (r.x, y, r.post_var)))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Parameter("records carry no second outcome".into()))?;
    let nf = n as f64;
    let mean = |f: &dyn Fn(&(f64, f64, f64)) -> f64| pairs.iter().map(f).sum::<f64>() / nf;
    let mean_x = mean(&|p| p.0);
    let mean_y = mean(&|p| p.1);
    let mean_diff = mean(&|p| p.1 - p.0);
    let var_x = pairs.iter().map(|p| (p.0 - mean_x).powi(2)).sum::<f64>() / (nf - 1.0);
    let var_diff = pairs
        .iter()
        .map(|p| (p.1 - p.0 - mean_diff).powi(2))
        .sum::<f64>()
        / (nf - 1.0);
    let cov = pairs
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum::<f64>()
        / (nf - 1.0);
    let slope = cov / var_x;
    let resid = pairs
        .iter()
        .map(|p| (p.1 - mean_y - slope * (p.0 - mean_x)).powi(2))
        .sum::<f64>()
        / (nf - 2.0);
    let slope_se = (resid / ((nf - 1.0) * var_x)).sqrt();
    let var_diff_se = var_diff * (2.0 / (nf - 1.0)).sqrt();
    Ok(RepeatabilityStats {
        trials: n,
        mean_x,
        var_x,
        mean_diff,
        mean_diff_half_width: Z95 * (var_diff / nf).sqrt(),
        var_diff,
        var_diff_se,
        var_diff_half_width: Z95 * var_diff_se,
        slope,
        slope_se,
        slope_half_width: Z95 * slope_se,
        mean_post_var: mean(&|p| p.2),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RepeatabilityReport {
    pub seed: u64,
    pub rng: &'static str,
    pub stats: RepeatabilityStats,
    pub records: Vec<TrialRecord>,
}

pub fn repeatability_experiment<I: Instrument>(
    runner: &TrialRunner<I>,
    n: usize,
    seed: u64,
) -> Result<RepeatabilityReport> {
    if !runner.repeats() {
        return Err(Error::Parameter(
            "runner was built without the second measurement".into(),
        ));
    }
    if n < MIN_TRIALS {
        return Err(Error::Parameter(format!(
            "repeatability needs at least {MIN_TRIALS} trials, got {n}"
        )));
    }
    let records = runner.run_trials(n, seed)?;
    Ok(RepeatabilityReport {
        seed,
        rng: RNG_NAME,
        stats: repeatability_stats(&records)?,
        records,
    })
}

/// Trace distance between a pure state and an ensemble of the same dimension.
pub fn trace_distance_to_pure(state: &Ensemble, psi: &StateVector) -> Result<f64> {
    let rho = state.to_density()?;
    rho.trace_distance(&DensityOperator::from_pure(psi))
}
