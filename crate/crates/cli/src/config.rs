//! Run configuration: TOML file values, command-line overrides and defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use opticalvn::fock::{self, StateVector};
use opticalvn::gaussian::GaussianState;
use opticalvn::measurement::OutcomeGrid;
use opticalvn::scheme::SchemeParams;
use opticalvn::C64;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const PRESET_ETAS: [f64; 3] = [0.2, 0.5, 0.8];
pub const PRESET_SIGMAS: [f64; 3] = [0.5, 1.0, 2.0];

/// Check names and their default tolerances.
pub const DEFAULT_TOLERANCES: [(&str, f64); 8] = [
    ("scheme_identity", 1e-6),
    ("width_law", 1e-6),
    ("pom_invariance", 1e-10),
    ("completeness", 1e-4),
    ("oracle_equivalence", 1e-8),
    ("purity", 1e-9),
    ("finite_lo", 1e-3),
    ("repeatability_se", 3.0),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Verify,
    Pom,
    Sample,
    Sweep,
}

impl Command {
    fn default_grid(self) -> &'static str {
        match self {
            Command::Verify | Command::Sweep => "-3:3:0.25",
            Command::Pom | Command::Sample => "-8:8:0.02",
        }
    }

    fn default_format(self) -> Format {
        match self {
            Command::Verify => Format::Json,
            _ => Format::Csv,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Pom => "pom",
            Command::Sample => "sample",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackMode {
    Ideal,
    FiniteLo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

/// Input state of the measured mode.
#[derive(Clone, Debug, PartialEq)]
pub enum InputSpec {
    Vacuum,
    Coherent(C64),
    /// Squeezed vacuum by `x_phi` variance ratio and squeezing phase.
    Squeezed {
        sigma: f64,
        phi: f64,
    },
    Fock(usize),
}

impl InputSpec {
    pub fn parse(text: &str) -> Result<Self, String> {
        let (kind, rest) = match text.split_once(':') {
            Some((k, r)) => (k.trim(), Some(r)),
            None => (text.trim(), None),
        };
        let numbers = |r: Option<&str>, n: usize| -> Result<Vec<f64>, String> {
            let r = r.ok_or_else(|| format!("input '{text}' needs {n} value(s) after ':'"))?;
            let v: Vec<f64> = r
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| format!("input '{text}': {e}"))?;
            if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                return Err(format!("input '{text}' needs {n} finite value(s)"));
            }
            Ok(v)
        };
        match kind {
            "vacuum" if rest.is_none() => Ok(InputSpec::Vacuum),
            "coherent" => {
                let v = numbers(rest, 2)?;
                Ok(InputSpec::Coherent(C64::new(v[0], v[1])))
            }
            "squeezed" => {
                let v = numbers(rest, 2)?;
                if v[0] <= 0.0 {
                    return Err(format!("input '{text}': variance ratio must be > 0"));
                }
                Ok(InputSpec::Squeezed {
                    sigma: v[0],
                    phi: v[1],
                })
            }
            "fock" => {
                let n = rest
                    .ok_or_else(|| format!("input '{text}' needs a level"))?
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| format!("input '{text}': {e}"))?;
                Ok(InputSpec::Fock(n))
            }
            _ => Err(format!(
                "unknown input '{text}'; use vacuum, coherent:RE,IM, squeezed:SIGMA,PHI or fock:N"
            )),
        }
    }

    pub fn state(&self, cutoff: usize) -> opticalvn::Result<StateVector> {
        match *self {
            InputSpec::Vacuum => StateVector::vacuum(cutoff),
            InputSpec::Coherent(a) => fock::coherent_state(a, cutoff),
            InputSpec::Squeezed { sigma, phi } => fock::squeezed_vacuum(sigma, phi, cutoff),
            InputSpec::Fock(n) => StateVector::fock(n, cutoff),
        }
    }

    /// Phase-space form, for Gaussian inputs only.
    pub fn gaussian(&self) -> Option<GaussianState> {
        match *self {
            InputSpec::Vacuum => Some(GaussianState::vacuum(1)),
            InputSpec::Coherent(a) => Some(GaussianState::coherent(a)),
            InputSpec::Squeezed { sigma, phi } => GaussianState::squeezed_vacuum(sigma, phi).ok(),
            InputSpec::Fock(_) => None,
        }
    }
}

impl fmt::Display for InputSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSpec::Vacuum => write!(f, "vacuum"),
            InputSpec::Coherent(a) => write!(f, "coherent:{},{}", a.re, a.im),
            InputSpec::Squeezed { sigma, phi } => write!(f, "squeezed:{sigma},{phi}"),
            InputSpec::Fock(n) => write!(f, "fock:{n}"),
        }
    }
}

/// `"min:max:step"`.
pub fn parse_grid(text: &str) -> Result<OutcomeGrid, String> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("grid '{text}' must have the form min:max:step"));
    }
    let v: Vec<f64> = parts
        .iter()
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("grid '{text}': {e}"))?;
    OutcomeGrid::new(v[0], v[1], v[2]).map_err(|e| format!("grid '{text}': {e}"))
}

/// Comma-separated list; an empty list is an error.
pub fn parse_list(name: &str, text: &str) -> Result<Vec<f64>, String> {
    let items: Vec<&str> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(format!("{name}: empty range list"));
    }
    items
        .iter()
        .map(|s| s.parse::<f64>().map_err(|e| format!("{name}: '{s}': {e}")))
        .collect()
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// Beam-splitter transmissivity, in (0, 1).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Probe variance ratio, > 0.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Measured quadrature phase (radians).
    #[arg(long)]
    pub phi: Option<f64>,
    /// Fock cutoff of the reported operators.
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Outcome grid as "min:max:step".
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    #[arg(long, value_enum)]
    pub feedback: Option<FeedbackMode>,
    /// Local-oscillator modulus for finite-LO feedback.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Add an ideal second measurement of the same quadrature to each trial.
    #[arg(long)]
    pub repeat: bool,
    /// vacuum | coherent:RE,IM | squeezed:SIGMA,PHI | fock:N
    #[arg(long)]
    pub input: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tolerance override, NAME=VALUE; repeatable.
    #[arg(long = "tolerance", value_name = "NAME=VALUE")]
    pub tolerances: Vec<String>,
    /// Sweep values of eta, comma separated.
    #[arg(long)]
    pub etas: Option<String>,
    /// Sweep values of sigma, comma separated.
    #[arg(long)]
    pub sigmas: Option<String>,
    /// Sweep values of |beta|, comma separated.
    #[arg(long)]
    pub betas: Option<String>,
}

/// Config file schema. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub eta: Option<f64>,
    pub sigma: Option<f64>,
    pub phi: Option<f64>,
    pub cutoff: Option<usize>,
    pub grid: Option<String>,
    pub feedback: Option<FeedbackMode>,
    pub beta: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub repeat: Option<bool>,
    pub input: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub etas: Option<Vec<f64>>,
    pub sigmas: Option<Vec<f64>>,
    pub betas: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved run configuration.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub eta: f64,
    pub sigma: f64,
    pub phi: f64,
    pub cutoff: usize,
    pub grid: String,
    pub feedback: FeedbackMode,
    pub beta: f64,
    pub seed: u64,
    pub trials: usize,
    pub repeat: bool,
    pub input: String,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub etas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub betas: Vec<f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub config: Option<PathBuf>,
    /// Keys that took their built-in default.
    pub defaults_applied: Vec<String>,
    #[serde(skip)]
    pub outcome_grid: OutcomeGrid,
    #[serde(skip)]
    pub input_spec: InputSpec,
}

struct Resolver {
    defaults: Vec<String>,
}

impl Resolver {
    fn pick<T>(&mut self, key: &str, flag: Option<T>, file: Option<T>, default: T) -> T {
        match flag.or(file) {
            Some(v) => v,
            None => {
                self.defaults.push(key.to_string());
                default
            }
        }
    }
}

impl RunConfig {
    pub fn resolve(command: Command, args: &RunArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let bad = CliError::Config;
        let mut r = Resolver {
            defaults: Vec::new(),
        };
        let eta_given = args.eta.or(file.eta).is_some();
        let sigma_given = args.sigma.or(file.sigma).is_some();
        let eta = r.pick("eta", args.eta, file.eta, 0.5);
        let sigma = r.pick("sigma", args.sigma, file.sigma, 1.0);
        let phi = r.pick("phi", args.phi, file.phi, 0.0);
        let cutoff = r.pick("cutoff", args.cutoff, file.cutoff, fock::DEFAULT_CUTOFF);
        let grid = r.pick(
            "grid",
            args.grid.clone(),
            file.grid,
            command.default_grid().to_string(),
        );
        let feedback = r.pick(
            "feedback",
            args.feedback,
            file.feedback,
            FeedbackMode::Ideal,
        );
        let beta = r.pick("beta", args.beta, file.beta, 1e3);
        let seed = r.pick("seed", args.seed, file.seed, 1);
        let trials = r.pick("trials", args.trials, file.trials, 1000);
        let repeat = if args.repeat {
            true
        } else {
            r.pick("repeat", None, file.repeat, false)
        };
        let input = r.pick(
            "input",
            args.input.clone(),
            file.input,
            "vacuum".to_string(),
        );
        let out = args.out.clone().or(file.out);
        let format = r.pick("format", args.format, file.format, command.default_format());

        let list = |name: &str, flag: &Option<String>, file: Option<Vec<f64>>| match (flag, file) {
            (Some(t), _) => parse_list(name, t).map(Some),
            (None, Some(v)) if v.is_empty() => Err(format!("{name}: empty range list")),
            (None, v) => Ok(v),
        };
        let etas = list("etas", &args.etas, file.etas).map_err(bad)?;
        let sigmas = list("sigmas", &args.sigmas, file.sigmas).map_err(bad)?;
        let betas = list("betas", &args.betas, file.betas).map_err(bad)?;
        let etas = etas.unwrap_or_else(|| match (command, eta_given) {
            (Command::Verify, false) => {
                r.defaults.push("etas".into());
                PRESET_ETAS.to_vec()
            }
            _ => vec![eta],
        });
        let sigmas = sigmas.unwrap_or_else(|| match (command, sigma_given) {
            (Command::Verify, false) => {
                r.defaults.push("sigmas".into());
                PRESET_SIGMAS.to_vec()
            }
            _ => vec![sigma],
        });
        let betas = betas.unwrap_or_else(|| match feedback {
            FeedbackMode::FiniteLo => vec![beta],
            FeedbackMode::Ideal => Vec::new(),
        });

        let mut tolerances: BTreeMap<String, f64> = DEFAULT_TOLERANCES
            .iter()
            .map(|&(k, v)| (k.to_string(), v))
            .collect();
        let mut overrides = file.tolerances;
        for item in &args.tolerances {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| bad(format!("tolerance '{item}' must be NAME=VALUE")))?;
            let v = v
                .trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("tolerance '{item}': {e}")))?;
            overrides.insert(k.trim().to_string(), v);
        }
        for (k, v) in overrides {
            if !tolerances.contains_key(&k) {
                let known: Vec<&str> = DEFAULT_TOLERANCES.iter().map(|t| t.0).collect();
                return Err(bad(format!(
                    "unknown tolerance '{k}'; known: {}",
                    known.join(", ")
                )));
            }
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(format!("tolerance {k} must be positive, got {v}")));
            }
            tolerances.insert(k, v);
        }

        let outcome_grid = parse_grid(&grid).map_err(bad)?;
        let input_spec = InputSpec::parse(&input).map_err(bad)?;
        if let InputSpec::Fock(n) = input_spec {
            if n >= cutoff {
                return Err(bad(format!("input fock:{n} needs a cutoff above {n}")));
            }
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(bad(format!("beta must be positive, got {beta}")));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(bad(format!("betas: values must be positive, got {b}")));
        }
        let cfg = RunConfig {
            command,
            eta,
            sigma,
            phi,
            cutoff,
            grid,
            feedback,
            beta,
            seed,
            trials,
            repeat,
            input,
            out,
            format,
            etas,
            sigmas,
            betas,
            tolerances,
            config: args.config.clone(),
            defaults_applied: r.defaults,
            outcome_grid,
            input_spec,
        };
        cfg.params(cfg.eta, cfg.sigma)?;
        for (e, s) in cfg.pairs() {
            cfg.params(e, s)?;
        }
        Ok(cfg)
    }

    /// Scheme parameters for one `(eta, sigma)` with the configured phase, cutoff and grid.
    pub fn params(&self, eta: f64, sigma: f64) -> Result<SchemeParams, CliError> {
        SchemeParams::new(eta, sigma)
            .and_then(|p| {
                let p = p
                    .with_phase(self.phi)
                    .with_cutoff(self.cutoff)
                    .with_grid(self.outcome_grid.clone());
                let p = if p.block > self.cutoff {
                    p.with_block(self.cutoff)
                } else {
                    p
                };
                p.validate().map(|_| p)
            })
            .map_err(|e| CliError::Config(format!("eta={eta}, sigma={sigma}: {e}")))
    }

    /// Cartesian product of the eta and sigma lists.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.etas
            .iter()
            .flat_map(|&e| self.sigmas.iter().map(move |&s| (e, s)))
            .collect()
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances[name]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_and_lists() {
        let g = parse_grid("-1:1:0.5").unwrap();
        assert_eq!(g.values(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("1:0:0.1").is_err());
        assert_eq!(parse_list("etas", "0.2, 0.5").unwrap(), vec![0.2, 0.5]);
        assert!(parse_list("etas", " , ").is_err());
    }

    #[test]
    fn inputs_round_trip() {
        for text in ["vacuum", "coherent:0.5,-0.25", "squeezed:0.7,0.3", "fock:2"] {
            let spec = InputSpec::parse(text).unwrap();
            assert_eq!(spec.to_string(), text);
        }
        assert!(InputSpec::parse("coherent:1").is_err());
        assert!(InputSpec::parse("squeezed:-1,0").is_err());
        assert!(InputSpec::parse("thermal").is_err());
    }

    #[test]
    fn flags_override_file_and_defaults_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "eta = 0.3\nsigma = 2.0\n[tolerances]\npurity = 1e-6\n",
        )
        .unwrap();
        let args = RunArgs {
            eta: Some(0.4),
            config: Some(path),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(Command::Pom, &args).unwrap();
        assert_eq!((cfg.eta, cfg.sigma), (0.4, 2.0));
        assert_eq!(cfg.tolerance("purity"), 1e-6);
        assert!(cfg.defaults_applied.contains(&"grid".to_string()));
        assert!(!cfg.defaults_applied.contains(&"eta".to_string()));
    }

    #[test]
    fn rejects_bad_values() {
        let with = |args: RunArgs| RunConfig::resolve(Command::Pom, &args);
        assert!(with(RunArgs {
            eta: Some(1.0),
            ..Default::default()
        })
        .is_err());
        assert!(with(RunArgs {
            sigma: Some(0.0),
            ..Default::default()
        })
        .is_err());
        assert!(with(RunArgs {
            beta: Some(-1.0),
            ..Default::default()
        })
        .is_err());
        assert!(with(RunArgs {
            tolerances: vec!["nope=1".into()],
            ..Default::default()
        })
        .is_err());
        assert!(with(RunArgs {
            etas: Some(String::new()),
            ..Default::default()
        })
        .is_err());
    }
}
