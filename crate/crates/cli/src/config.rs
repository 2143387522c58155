//! INI run configuration: `[section]` headers, `key = value` lines, and
//! `#` or `;` comments. Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rgq_core::first_step::PERSISTENCE_CAP;
use rgq_core::models::ModelKind;
use rgq_core::simulator::{DgpConfig, ShockDist, MIN_TRUE_QUANTILE_REPS};
use rgq_core::{GarchParams, ParamBox};

use crate::CliError;

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("run", &["seed", "output", "threads"]),
    ("data", &["intraday", "daily", "lambda"]),
    ("models", &["list", "taus"]),
    ("backtest", &["window", "refit_every", "dq_lags", "relative_to"]),
    ("box", &["lower", "upper"]),
    ("dgp", &["omega", "gamma", "alpha", "beta", "w", "lambda", "n", "m", "df", "noncentrality", "burn_in"]),
    ("experiment", &["n", "m", "reps", "true_quantile_reps"]),
];

pub const DEFAULT_TAUS: [f64; 5] = [0.01, 0.03, 0.05, 0.1, 0.15];

#[derive(Debug, Default, Clone)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Ini {
    /// Parses the file syntax, then rejects unknown sections, unknown fields and repeats.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let opt = ini::ParseOption { enabled_quote: false, enabled_escape: false, ..Default::default() };
        let raw = ini::Ini::load_from_str_opt(text, opt).map_err(|e| CliError::Validation(format!("config line {}: {}", e.line, e.msg)))?;
        let mut out = Ini::default();
        for (section, props) in raw.iter() {
            let Some(section) = section.map(str::to_ascii_lowercase) else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(CliError::Validation(format!("config field `{key}` appears before any [section]")));
                }
                continue;
            };
            let Some(&(_, allowed)) = KNOWN_KEYS.iter().find(|(s, _)| *s == section) else {
                return Err(CliError::Validation(format!("unknown config section [{section}]")));
            };
            let entries = out.sections.entry(section.clone()).or_default();
            for (key, value) in props.iter() {
                let key = key.to_ascii_lowercase();
                if !allowed.contains(&key.as_str()) {
                    return Err(CliError::Validation(format!("unknown field `{key}` in [{section}]")));
                }
                if value.contains(" ;") || value.contains(" #") || value.contains("\t;") || value.contains("\t#") {
                    return Err(CliError::Validation(format!("field `{key}` in [{section}]: comments must be on their own line")));
                }
                if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                    return Err(CliError::Validation(format!("field `{key}` repeated in [{section}]")));
                }
            }
        }
        Ok(out)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(key)).map(String::as_str)
    }

    fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, CliError> {
        self.raw(section, key)
            .map(|v| v.parse::<T>().map_err(|_| CliError::Validation(format!("field `{key}` in [{section}] has invalid value {v:?}"))))
            .transpose()
    }

    fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T, CliError> {
        self.get(section, key)?.ok_or_else(|| CliError::Validation(format!("missing required field `{key}` in [{section}]")))
    }

    fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, CliError> {
        self.raw(section, key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<T>().map_err(|_| CliError::Validation(format!("field `{key}` in [{section}] has invalid entry {s:?}"))))
                    .collect()
            })
            .transpose()
    }
}

#[derive(Debug, Clone)]
pub struct BacktestSettings {
    pub window: usize,
    pub refit_every: usize,
    pub dq_lags: usize,
    /// Model whose loss normalizes the others; `None` disables relative losses.
    pub relative_to: Option<ModelKind>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSettings {
    pub ns: Vec<usize>,
    pub ms: Vec<usize>,
    pub reps: usize,
    pub true_quantile_reps: usize,
}

/// Settings shared by every command. Command-specific blocks are parsed on demand
/// so that, for example, `estimate` does not require a `[dgp]` section.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub ini: Ini,
    pub base_dir: PathBuf,
    pub seed: u64,
    pub output: PathBuf,
    pub threads: Option<usize>,
    pub models: Vec<ModelKind>,
    pub taus: Vec<f64>,
    pub bounds: ParamBox,
}

impl RunConfig {
    pub fn from_ini(ini: Ini, base_dir: &Path) -> Result<Self, CliError> {
        let seed = ini.get("run", "seed")?.unwrap_or(0);
        let output = base_dir.join(ini.raw("run", "output").unwrap_or("out"));
        let threads = ini.get::<usize>("run", "threads")?;
        if threads == Some(0) {
            return Err(CliError::Validation("field `threads` in [run] must be at least 1".into()));
        }

        let models = match ini.raw("models", "list") {
            None => ModelKind::ALL.to_vec(),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<ModelKind>().map_err(|e| CliError::Validation(format!("field `list` in [models]: {e}"))))
                .collect::<Result<Vec<_>, _>>()?,
        };
        if models.is_empty() {
            return Err(CliError::Validation("field `list` in [models] is empty".into()));
        }
        for (i, m) in models.iter().enumerate() {
            if models[..i].contains(m) {
                return Err(CliError::Validation(format!("model {m} listed twice in [models]")));
            }
        }

        let taus = ini.list::<f64>("models", "taus")?.unwrap_or_else(|| DEFAULT_TAUS.to_vec());
        if taus.is_empty() {
            return Err(CliError::Validation("field `taus` in [models] is empty".into()));
        }
        for (i, &t) in taus.iter().enumerate() {
            if !(t > 0.0 && t < 1.0) {
                return Err(CliError::Validation(format!("quantile level {t} in [models] taus must lie in (0,1)")));
            }
            if taus[..i].iter().any(|&u| (u - t).abs() < 1e-9) {
                return Err(CliError::Validation(format!("quantile level {t} listed twice in [models] taus")));
            }
        }

        let defaults = ParamBox::default();
        let lower = ini.list::<f64>("box", "lower")?.map(|v| to4("lower", v)).transpose()?.unwrap_or(defaults.lower);
        let upper = ini.list::<f64>("box", "upper")?.map(|v| to4("upper", v)).transpose()?.unwrap_or(defaults.upper);
        let bounds = ParamBox::new(lower, upper).map_err(|e| CliError::Validation(format!("[box]: {e}")))?;

        Ok(Self { seed, output, threads, models, taus, bounds, base_dir: base_dir.to_path_buf(), ini })
    }

    /// Input panel: `(path, is_daily)`. A daily file takes precedence.
    pub fn input(&self) -> Result<(PathBuf, bool), CliError> {
        let pick = |key: &str| self.ini.raw("data", key).map(|p| self.base_dir.join(p));
        let (path, daily) = match (pick("daily"), pick("intraday")) {
            (Some(p), _) => (p, true),
            (None, Some(p)) => (p, false),
            (None, None) => return Err(CliError::Validation("missing required field `daily` or `intraday` in [data]".into())),
        };
        if !path.is_file() {
            return Err(CliError::Validation(format!("input file {} does not exist", path.display())));
        }
        Ok((path, daily))
    }

    pub fn lambda(&self) -> Result<f64, CliError> {
        Ok(self.ini.get("data", "lambda")?.unwrap_or(6.5 / 24.0))
    }

    pub fn backtest(&self) -> Result<BacktestSettings, CliError> {
        let relative_to = match self.ini.raw("backtest", "relative_to") {
            None => Some(ModelKind::Rg),
            Some(v) if v.eq_ignore_ascii_case("none") => None,
            Some(v) => Some(v.parse::<ModelKind>().map_err(|e| CliError::Validation(format!("field `relative_to` in [backtest]: {e}")))?),
        };
        let s = BacktestSettings {
            window: self.ini.get("backtest", "window")?.unwrap_or(500),
            refit_every: self.ini.get("backtest", "refit_every")?.unwrap_or(1),
            dq_lags: self.ini.get("backtest", "dq_lags")?.unwrap_or(4),
            relative_to,
        };
        if s.window == 0 || s.refit_every == 0 {
            return Err(CliError::Validation("`window` and `refit_every` in [backtest] must be at least 1".into()));
        }
        if let Some(r) = s.relative_to {
            if !self.models.contains(&r) {
                return Err(CliError::Validation(format!("relative loss needs model {r} in [models] list (set relative_to = none to disable)")));
            }
        }
        Ok(s)
    }

    /// The `[dgp]` block; the true parameters, `w`, `n` and `m` are mandatory.
    pub fn dgp(&self) -> Result<DgpConfig, CliError> {
        if !self.ini.has_section("dgp") {
            return Err(CliError::Validation("missing [dgp] section".into()));
        }
        let r = |k: &str| self.ini.require::<f64>("dgp", k);
        let params = GarchParams { omega: r("omega")?, gamma: r("gamma")?, alpha: r("alpha")?, beta: r("beta")? };
        if params.persistence() >= PERSISTENCE_CAP {
            return Err(CliError::Validation("[dgp] gamma + alpha + beta must be below 1".into()));
        }
        let w = r("w")?;
        let n = self.ini.require::<usize>("dgp", "n")?;
        let m = self.ini.require::<usize>("dgp", "m")?;
        let lambda = match self.ini.get::<f64>("dgp", "lambda")? {
            Some(l) => l,
            None => self.lambda()?,
        };
        let df = self.ini.get::<f64>("dgp", "df")?.unwrap_or(0.05);
        let nc = self.ini.get::<f64>("dgp", "noncentrality")?.unwrap_or(0.05);
        let shock = if df == 0.0 && nc == 0.0 { ShockDist::Zero } else { ShockDist::NoncentralChiSquared { df, noncentrality: nc } };
        let cfg = DgpConfig {
            params,
            w,
            lambda,
            n,
            m,
            seed: self.seed,
            shock,
            burn_in: self.ini.get("dgp", "burn_in")?.unwrap_or(200),
            x0: 0.0,
        };
        cfg.validate().map_err(|e| CliError::Validation(format!("[dgp]: {e}")))?;
        Ok(cfg)
    }

    /// The `[experiment]` grid; `n` and `m` default to the single `[dgp]` cell.
    pub fn experiment(&self, n: usize, m: usize) -> Result<ExperimentSettings, CliError> {
        let e = ExperimentSettings {
            ns: self.ini.list("experiment", "n")?.unwrap_or_else(|| vec![n]),
            ms: self.ini.list("experiment", "m")?.unwrap_or_else(|| vec![m]),
            reps: self.ini.get("experiment", "reps")?.unwrap_or(100),
            true_quantile_reps: self.ini.get("experiment", "true_quantile_reps")?.unwrap_or(1_000_000),
        };
        if e.true_quantile_reps < MIN_TRUE_QUANTILE_REPS {
            return Err(CliError::Validation(format!("`true_quantile_reps` in [experiment] must be at least {MIN_TRUE_QUANTILE_REPS}")));
        }
        Ok(e)
    }
}

fn to4(name: &str, v: Vec<f64>) -> Result<[f64; 4], CliError> {
    v.try_into().map_err(|v: Vec<f64>| CliError::Validation(format!("field `{name}` in [box] needs 4 values, got {}", v.len())))
}
