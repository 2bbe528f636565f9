//! The four subcommands. Each returns a report; the caller writes it and picks the exit code.

use std::f64::consts::PI;

use opticalvn::fock::{self, DensityOperator, StateVector};
use opticalvn::gaussian::{repeatability_moments, GaussianState, SchemeOracle};
use opticalvn::measurement::{self, OutcomeGrid};
use opticalvn::montecarlo::{
    self, finite_lo_displacement, Ensemble, SchemeInstrument, TrialRunner, MIN_TRIALS,
};
use opticalvn::scheme::{
    build_scheme_family, scheme_pom, theta_law, FeedbackSpec, Scheme, SchemeParams, StageMask,
};
use opticalvn::C64;
use serde_json::{json, Map, Value};

use crate::config::{FeedbackMode, RunConfig};
use crate::report::{self, Cell, Check, Report, Table};
use crate::CliError;

/// Amplitude of the displacement used for the finite-LO error metric.
pub const LO_AMPLITUDE: f64 = 1.0;
/// Levels for the finite-LO error metric.
const LO_CUTOFF: usize = 40;
/// Coherent amplitude of the state the finite-LO error is measured on; loss
/// leaves the vacuum unchanged, so the metric needs a displaced state.
pub const LO_PROBE: (f64, f64) = (0.5, 0.2);
/// Output rows for the completeness check.
const COMPLETENESS_ROWS: usize = 120;

fn lib(e: opticalvn::Error) -> CliError {
    match e {
        opticalvn::Error::Parameter(_) => CliError::Config(e.to_string()),
        _ => CliError::Failure(e.to_string()),
    }
}

/// Running maximum that remembers where it was attained.
struct Worst {
    value: f64,
    at: String,
}

impl Worst {
    fn new() -> Self {
        Worst {
            value: 0.0,
            at: String::new(),
        }
    }

    fn update(&mut self, v: f64, at: impl FnOnce() -> String) {
        if v > self.value || self.at.is_empty() {
            self.value = self.value.max(v);
            self.at = at();
        }
    }
}

fn pair_label(eta: f64, sigma: f64) -> String {
    format!("eta={eta} sigma={sigma}")
}

/// Runs `f` over every pair; the first library error turns the check into a failure.
fn over_pairs<F>(cfg: &RunConfig, name: &str, what: &str, mut f: F) -> Check
where
    F: FnMut(f64, f64) -> opticalvn::Result<f64>,
{
    let tol = cfg.tolerance(name);
    let mut worst = Worst::new();
    for (eta, sigma) in cfg.pairs() {
        match f(eta, sigma) {
            Ok(v) => worst.update(v, || pair_label(eta, sigma)),
            Err(e) => return Check::failed(name, tol, format!("{}: {e}", pair_label(eta, sigma))),
        }
    }
    Check::at_most(
        name,
        worst.value,
        tol,
        format!(
            "{what}; worst at {} over {} preset(s)",
            worst.at,
            cfg.pairs().len()
        ),
    )
}

fn base_params(cfg: &RunConfig, eta: f64, sigma: f64) -> opticalvn::Result<SchemeParams> {
    Ok(SchemeParams::new(eta, sigma)?.with_phase(cfg.phi))
}

fn lo_probe() -> opticalvn::Result<DensityOperator> {
    let psi = fock::coherent_state(C64::new(LO_PROBE.0, LO_PROBE.1), LO_CUTOFF)?;
    Ok(DensityOperator::from_pure(&psi))
}

fn finite_lo_error(rho: &DensityOperator, amplitude: C64, beta: f64) -> opticalvn::Result<f64> {
    let d = fock::make_displacement(amplitude, rho.dim())?.into_matrix();
    let ideal = rho.conjugate(&d)?;
    finite_lo_displacement(rho, amplitude, beta)?.trace_distance(&ideal)
}

pub fn verify(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut checks = Vec::new();

    checks.push(over_pairs(
        cfg,
        "scheme_identity",
        &format!(
            "max phase-fitted |Omega_scheme - Omega_target| on the grid {}",
            cfg.grid
        ),
        |eta, sigma| {
            let p = cfg
                .params(eta, sigma)
                .map_err(|e| opticalvn::Error::Parameter(e.to_string()))?;
            Ok(build_scheme_family(&p, FeedbackSpec::Ideal, StageMask::ALL)?.max_deviation)
        },
    ));

    let wide = OutcomeGrid::new(-6.0, 6.0, 0.05).map_err(lib)?;
    checks.push(over_pairs(
        cfg,
        "width_law",
        "|Delta_fit - sqrt(eta sigma)/2| from the POM moment fit on -6:6:0.05",
        |eta, sigma| {
            let p = base_params(cfg, eta, sigma)?.with_grid(wide.clone());
            let pom = scheme_pom(&p, StageMask::ALL)?;
            let fit = measurement::fit_gaussian_kernel(&pom, p.phi, p.block)?;
            Ok((fit.delta - p.delta()).abs())
        },
    ));

    let coarse = OutcomeGrid::new(-3.0, 3.0, 1.0).map_err(lib)?;
    checks.push(over_pairs(
        cfg,
        "pom_invariance",
        "max POM change when feedback and back-squeezing are toggled, on -3:3:1",
        |eta, sigma| {
            let p = base_params(cfg, eta, sigma)?.with_grid(coarse.clone());
            let mut worst = 0.0f64;
            for pre in [false, true] {
                let base = StageMask {
                    presqueeze: pre,
                    feedback: false,
                    backsqueeze: false,
                };
                let reference = scheme_pom(&p, base)?;
                for mask in StageMask::all_masks()
                    .into_iter()
                    .filter(|m| m.presqueeze == pre && *m != base)
                {
                    worst = worst.max(scheme_pom(&p, mask)?.max_deviation(&reference, p.block)?);
                }
            }
            Ok(worst)
        },
    ));

    let full = OutcomeGrid::new(-8.0, 8.0, 0.02).map_err(lib)?;
    checks.push(over_pairs(
        cfg,
        "completeness",
        &format!(
            "max |sum h Omega^dag Omega - I| on -8:8:0.02 with {COMPLETENESS_ROWS} output rows"
        ),
        |eta, sigma| {
            let p = base_params(cfg, eta, sigma)?
                .with_grid(full.clone())
                .with_cutoff(COMPLETENESS_ROWS);
            let fam = Scheme::new(&p, StageMask::ALL)?.family(&full)?;
            Ok(fam.completeness_defect(p.block))
        },
    ));

    let gaussian_inputs = [
        (
            StateVector::vacuum(fock::DEFAULT_CUTOFF),
            GaussianState::vacuum(1),
        ),
        (
            fock::coherent_state(C64::new(0.4, -0.3), fock::DEFAULT_CUTOFF),
            GaussianState::coherent(C64::new(0.4, -0.3)),
        ),
    ];
    checks.push(over_pairs(
        cfg,
        "oracle_equivalence",
        "max deviation of Fock densities and post-state moments from the phase-space oracle (vacuum, coherent 0.4-0.3i)",
        |eta, sigma| {
            let p = base_params(cfg, eta, sigma)?.with_grid(full.clone());
            let scheme = Scheme::new(&p, StageMask::ALL)?;
            let oracle = SchemeOracle::new(&p, StageMask::ALL)?;
            let w = scheme.work_cutoff();
            let quads: Vec<_> = [p.phi, p.phi + PI / 2.0]
                .iter()
                .map(|&ph| {
                    let q = fock::make_quadrature(ph, w)?.into_matrix();
                    let q2 = q.dot(&q);
                    Ok((ph, q, q2))
                })
                .collect::<opticalvn::Result<_>>()?;
            let mut worst = 0.0f64;
            for (psi, g) in &gaussian_inputs {
                let psi = psi.clone()?;
                let bound = scheme.bind(&psi)?;
                let d = bound.outcome_density(&full)?;
                for (&x, &v) in full.values().iter().zip(&d.values) {
                    worst = worst.max((v - oracle.outcome_density(g, x)?).abs());
                }
                for x in [-1.0, 0.0, 0.4, 1.3] {
                    let e = Ensemble::from_unnormalized(bound.apply(x)).normalized();
                    let (_, gp) = oracle.condition(g, x)?;
                    for (ph, q, q2) in &quads {
                        let (fm, fv) = e.moments(q, q2);
                        let (gm, gv) = gp.quadrature_moments(0, *ph)?;
                        worst = worst.max((fm - gm).abs()).max((fv - gv).abs());
                    }
                }
            }
            Ok(worst)
        },
    ));

    checks.push(over_pairs(
        cfg,
        "purity",
        "max |Tr rho_x^2 - 1| for vacuum, coherent and Fock |2> inputs",
        |eta, sigma| {
            let p = base_params(cfg, eta, sigma)?;
            let scheme = Scheme::new(&p, StageMask::ALL)?;
            let inputs = [
                StateVector::vacuum(p.cutoff)?,
                fock::coherent_state(C64::new(0.4, -0.3), p.cutoff)?,
                StateVector::fock(2, p.cutoff)?,
            ];
            let mut worst = 0.0f64;
            for psi in &inputs {
                let rho = DensityOperator::from_pure(psi);
                for x in [-1.2, 0.0, 0.5, 2.0] {
                    let reduced = measurement::reduce_state(&rho, &scheme.omega_full(x))?;
                    worst = worst.max((reduced.purity() - 1.0).abs());
                }
            }
            Ok(worst)
        },
    ));

    let tol = cfg.tolerance("finite_lo");
    let lo =
        lo_probe().and_then(|rho| finite_lo_error(&rho, C64::new(LO_AMPLITUDE, 0.0), cfg.beta));
    checks.push(match lo {
        Ok(v) => Check::at_most(
            "finite_lo",
            v,
            tol,
            format!(
                "trace distance between finite-LO and ideal D({LO_AMPLITUDE}) on |{}+{}i>, |beta| = {}",
                LO_PROBE.0, LO_PROBE.1, cfg.beta
            ),
        ),
        Err(e) => Check::failed("finite_lo", tol, e.to_string()),
    });

    let meta = report::meta(cfg, Map::new());
    let mut table = Table::new(&["name", "value", "tolerance", "pass"]);
    for c in &checks {
        table.push(vec![
            c.name.as_str().into(),
            c.value.into(),
            c.tolerance.into(),
            if c.pass { "true" } else { "false" }.into(),
        ]);
    }
    let pairs: Vec<Value> = cfg.pairs().iter().map(|(e, s)| json!([e, s])).collect();
    let mut results = Map::new();
    results.insert("presets".into(), Value::Array(pairs));
    Ok(Report {
        meta,
        checks,
        results,
        table_name: "checks",
        table,
    })
}

fn scheme_for(cfg: &RunConfig) -> Result<(SchemeParams, Scheme), CliError> {
    let p = cfg.params(cfg.eta, cfg.sigma)?;
    let scheme = Scheme::new(&p, StageMask::ALL).map_err(lib)?;
    Ok((p, scheme))
}

fn work_meta(p: &SchemeParams, scheme: &Scheme) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("delta".into(), json!(p.delta()));
    m.insert("block".into(), json!(p.block));
    m.insert("work_cutoff".into(), json!(scheme.work_cutoff()));
    m
}

pub fn pom(cfg: &RunConfig) -> Result<Report, CliError> {
    let (p, scheme) = scheme_for(cfg)?;
    let psi = cfg.input_spec.state(p.cutoff).map_err(lib)?;
    let density = scheme
        .bind(&psi)
        .map_err(lib)?
        .outcome_density(&p.grid)
        .map_err(lib)?;
    let gaussian = cfg.input_spec.gaussian();
    let oracle = SchemeOracle::new(&p, StageMask::ALL).map_err(lib)?;
    let delta = p.delta();
    let fit_mean = density.mean();
    let fit_width2 = density.variance();
    let expected_width2 = match &gaussian {
        Some(g) => Some(oracle.outcome_moments(g).map_err(lib)?.1),
        None => None,
    };

    let mut table = Table::new(&[
        "x",
        "density",
        "oracle_density",
        "abs_deviation",
        "eta",
        "sigma",
        "delta",
        "fit_mean",
        "fit_width2",
        "oracle_width2",
    ]);
    let mut worst = 0.0f64;
    for (&x, &v) in p.grid.values().iter().zip(&density.values) {
        let o = match &gaussian {
            Some(g) => Some(oracle.outcome_density(g, x).map_err(lib)?),
            None => None,
        };
        let dev = o.map(|o| (o - v).abs());
        if let Some(d) = dev {
            worst = worst.max(d);
        }
        table.push(vec![
            x.into(),
            v.into(),
            o.into(),
            dev.into(),
            p.eta.into(),
            p.sigma.into(),
            delta.into(),
            fit_mean.into(),
            fit_width2.into(),
            expected_width2.into(),
        ]);
    }

    let mut checks = vec![Check::at_most(
        "normalization",
        (density.mass() - 1.0).abs(),
        measurement::NORMALIZATION_TOL,
        "|sum h p(x) - 1|".into(),
    )];
    if let Some(w2) = expected_width2 {
        checks.push(Check::at_most(
            "oracle_equivalence",
            worst,
            cfg.tolerance("oracle_equivalence"),
            "max |p(x) - p_oracle(x)| on the grid".into(),
        ));
        checks.push(Check::at_most(
            "width_law",
            (fit_width2 - w2).abs(),
            cfg.tolerance("width_law"),
            "|fitted width^2 - oracle outcome variance|".into(),
        ));
    }
    let mut results = Map::new();
    results.insert(
        "fit".into(),
        json!({ "mean": fit_mean, "width2": fit_width2, "oracle_width2": expected_width2, "delta": delta }),
    );
    Ok(Report {
        meta: report::meta(cfg, work_meta(&p, &scheme)),
        checks,
        results,
        table_name: "density",
        table,
    })
}

pub fn sample(cfg: &RunConfig) -> Result<Report, CliError> {
    let (p, scheme) = scheme_for(cfg)?;
    let feedback = match cfg.feedback {
        FeedbackMode::Ideal => FeedbackSpec::Ideal,
        FeedbackMode::FiniteLo => {
            let edge = p.grid.x_min.abs().max(p.grid.x_max.abs());
            theta_law(edge, p.eta, cfg.beta).map_err(|e| {
                CliError::Failure(format!("{e} (grid edge |x| = {edge}, eta = {})", p.eta))
            })?;
            FeedbackSpec::finite_lo(C64::new(cfg.beta, 0.0))
        }
    };
    let psi = cfg.input_spec.state(p.cutoff).map_err(lib)?;
    let bound = scheme.bind(&psi).map_err(lib)?;
    let runner = TrialRunner::new(
        SchemeInstrument::new(bound, feedback),
        p.grid.clone(),
        cfg.repeat,
    )
    .map_err(lib)?;
    let records = runner.run_trials(cfg.trials, cfg.seed).map_err(lib)?;

    let mut table = Table::new(&[
        "index",
        "x",
        "probability",
        "post_mean",
        "post_var",
        "y",
        "feedback",
        "resamples",
        "tail_mass",
    ]);
    for r in &records {
        table.push(vec![
            Cell::Int(r.index),
            r.x.into(),
            r.probability.into(),
            r.post_mean.into(),
            r.post_var.into(),
            r.y.into(),
            r.feedback.into(),
            Cell::Int(r.resamples as u64),
            r.tail_mass.into(),
        ]);
    }

    let mut checks = Vec::new();
    let mut results = Map::new();
    if cfg.repeat && records.len() >= MIN_TRIALS {
        let stats = montecarlo::repeatability_stats(&records).map_err(lib)?;
        if let Some(g) = cfg.input_spec.gaussian() {
            let (prior_mean, prior_var) = g.quadrature_moments(0, p.phi).map_err(lib)?;
            let (_, var_diff, slope) = repeatability_moments(prior_mean, prior_var, p.delta());
            let z = (stats.var_diff - var_diff).abs() / stats.var_diff_se;
            checks.push(Check::at_most(
                "repeatability_se",
                z,
                cfg.tolerance("repeatability_se"),
                format!(
                    "|var(y-x) - {var_diff}| in standard errors; var(y-x) = {} +- {} (95%)",
                    stats.var_diff, stats.var_diff_half_width
                ),
            ));
            results.insert(
                "prediction".into(),
                json!({ "var_diff": var_diff, "slope": slope }),
            );
        }
        results.insert(
            "stats".into(),
            serde_json::to_value(&stats).expect("stats serialize"),
        );
        results.insert("confidence".into(), json!(montecarlo::CONFIDENCE));
    } else if cfg.repeat {
        results.insert(
            "stats".into(),
            json!(format!("omitted: fewer than {MIN_TRIALS} trials")),
        );
    }
    Ok(Report {
        meta: report::meta(cfg, work_meta(&p, &scheme)),
        checks,
        results,
        table_name: "trials",
        table,
    })
}

pub fn sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut table = Table::new(&[
        "eta",
        "sigma",
        "beta",
        "metric",
        "value",
        "tolerance",
        "status",
    ]);
    let tol = cfg.tolerance("scheme_identity");
    let mut worst = Worst::new();
    let mut failures = Vec::new();
    let mut monotone = true;
    let amplitude = C64::new(LO_AMPLITUDE, 0.0);
    for (eta, sigma) in cfg.pairs() {
        let delta = (eta * sigma).sqrt() / 2.0;
        table.push(vec![
            eta.into(),
            sigma.into(),
            Cell::Empty,
            "delta".into(),
            delta.into(),
            Cell::Empty,
            "ok".into(),
        ]);
        let dev = cfg.params(eta, sigma).and_then(|p| {
            build_scheme_family(&p, FeedbackSpec::Ideal, StageMask::ALL).map_err(lib)
        });
        let (value, status) = match dev {
            Ok(r) if r.max_deviation <= tol => (Cell::Num(r.max_deviation), "ok".to_string()),
            Ok(r) => (Cell::Num(r.max_deviation), "fail".to_string()),
            Err(e) => (Cell::Empty, format!("error: {e}")),
        };
        if let Cell::Num(v) = value {
            worst.update(v, || pair_label(eta, sigma));
        }
        if status != "ok" {
            failures.push(format!("deviation at {}: {status}", pair_label(eta, sigma)));
        }
        table.push(vec![
            eta.into(),
            sigma.into(),
            Cell::Empty,
            "deviation".into(),
            value,
            tol.into(),
            status.as_str().into(),
        ]);

        let rho = lo_probe().map_err(lib)?;
        let mut previous = f64::INFINITY;
        for &beta in &cfg.betas {
            let (value, status) = match finite_lo_error(&rho, amplitude, beta) {
                Ok(v) => (Cell::Num(v), "ok".to_string()),
                Err(e) => (Cell::Empty, format!("error: {e}")),
            };
            match value {
                Cell::Num(v) => {
                    monotone &= v < previous;
                    previous = v;
                }
                _ => failures.push(format!("feedback_error at beta={beta}: {status}")),
            }
            table.push(vec![
                eta.into(),
                sigma.into(),
                beta.into(),
                "feedback_error".into(),
                value,
                Cell::Empty,
                status.as_str().into(),
            ]);
        }
    }

    let mut checks = vec![if failures.is_empty() {
        Check::at_most(
            "scheme_identity",
            worst.value,
            tol,
            format!(
                "max deviation over {} cell(s); worst at {}",
                cfg.pairs().len(),
                worst.at
            ),
        )
    } else {
        Check::failed("sweep_cells", tol, failures.join("; "))
    }];
    if cfg.betas.len() > 1 {
        let sorted = cfg.betas.windows(2).all(|w| w[0] < w[1]);
        checks.push(Check {
            name: "feedback_error_decreasing".into(),
            value: None,
            tolerance: 0.0,
            pass: !sorted || monotone,
            detail: if sorted {
                "finite-LO error strictly decreases along the beta list".into()
            } else {
                "beta list is not increasing; ordering not checked".into()
            },
        });
    }
    let mut extra = Map::new();
    extra.insert("lo_amplitude".into(), json!(LO_AMPLITUDE));
    extra.insert("lo_cutoff".into(), json!(LO_CUTOFF));
    extra.insert("lo_probe".into(), json!([LO_PROBE.0, LO_PROBE.1]));
    Ok(Report {
        meta: report::meta(cfg, extra),
        checks,
        results: Map::new(),
        table_name: "sweep",
        table,
    })
}
