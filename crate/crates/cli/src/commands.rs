use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rgq_core::backtest::{normalize_relative, BacktestReport, REPORT_CSV_HEADER};
use rgq_core::market_data::{build_daily_observations, read_daily_csv, read_intraday_csv, usable, write_daily_csv, write_intraday_csv, SessionCalendar};
use rgq_core::models::{fit_models, FitOptions, ModelFits, ModelKind};
use rgq_core::quantile_regression::{write_coeff_csv, CoeffRecord};
use rgq_core::rolling::{rolling_backtest_many, write_forecast_csv, RollingConfig};
use rgq_core::simulator::{mae_experiment, simulate_panel, ExperimentGrid};
use rgq_core::DailyObservation;
use sha2::{Digest, Sha256};

use crate::config::{Ini, RunConfig};
use crate::{Cli, CliError, Command};

/// Files written by a command plus a failure that should still leave them on disk.
struct Outcome {
    files: Vec<String>,
    manifest_extra: Vec<String>,
    failure: Option<CliError>,
}

impl Outcome {
    fn new() -> Self {
        Self { files: Vec::new(), manifest_extra: Vec::new(), failure: None }
    }

    fn fail(&mut self, e: CliError) {
        if self.failure.is_none() {
            self.failure = Some(e);
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Validation("--config <FILE> is required".into()))?;
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Validation(format!("config {} is not UTF-8", path.display())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut cfg = RunConfig::from_ini(Ini::parse(&text)?, &base_dir)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    match cfg.threads {
        Some(0) => return Err(CliError::Validation("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Validation(format!("cannot configure {t} threads: {e}")))?,
        None => {}
    }
    if cli.refit_every == Some(0) {
        return Err(CliError::Validation("--refit-every must be at least 1".into()));
    }

    fs::create_dir_all(&cfg.output).map_err(|e| io_err(&cfg.output, e))?;
    let outcome = match cli.command {
        Command::Simulate => simulate(&cfg)?,
        Command::Estimate => estimate(&cfg)?,
        Command::Forecast => forecast(&cfg)?,
        Command::Backtest => backtest(&cfg, cli.refit_every)?,
        Command::Report => report(&cfg)?,
    };

    let refit_every = match cli.command {
        Command::Backtest => Some(cli.refit_every.map_or_else(|| cfg.backtest().map(|b| b.refit_every), Ok)?),
        _ => None,
    };
    let manifest = manifest(cli, &cfg, &bytes, refit_every, &outcome);
    write(&cfg.output.join("manifest.txt"), manifest.as_bytes())?;
    print!("{manifest}");
    outcome.failure.map_or(Ok(()), Err)
}

fn manifest(cli: &Cli, cfg: &RunConfig, config_bytes: &[u8], refit_every: Option<usize>, outcome: &Outcome) -> String {
    let digest = Sha256::digest(config_bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let seed_rule = match cli.command {
        Command::Simulate => "the panel is drawn from one stream seeded with seed",
        Command::Estimate | Command::Forecast => "every multi-start optimizer is seeded with seed",
        Command::Backtest => "the fit on the window ending at day t0 uses seed + t0",
        Command::Report => "replication r of grid cell c uses seed + c * reps + r; the true quantile at level i uses seed + i",
    };
    let mut s = String::new();
    writeln!(s, "tool=rgq").unwrap();
    writeln!(s, "version={}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(s, "command={}", cli.command.name()).unwrap();
    writeln!(s, "config_sha256={hex}").unwrap();
    writeln!(s, "seed={}", cfg.seed).unwrap();
    writeln!(s, "seed_rule={seed_rule}").unwrap();
    writeln!(s, "threads={}", cfg.threads.map_or_else(|| "auto".to_string(), |t| t.to_string())).unwrap();
    if let Some(k) = refit_every {
        writeln!(s, "refit_every={k}").unwrap();
    }
    writeln!(s, "models={}", cfg.models.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")).unwrap();
    writeln!(s, "taus={}", cfg.taus.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",")).unwrap();
    writeln!(s, "outputs={}", outcome.files.join(",")).unwrap();
    if let Some(e) = &outcome.failure {
        writeln!(s, "status=failed ({e})").unwrap();
    } else {
        writeln!(s, "status=ok").unwrap();
    }
    for line in &outcome.manifest_extra {
        writeln!(s, "{line}").unwrap();
    }
    s
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Renders with a core writer into memory, then writes the file.
fn emit<F>(out: &mut Outcome, dir: &Path, name: &str, render: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> rgq_core::Result<()>,
{
    let mut buf = Vec::new();
    render(&mut buf)?;
    write(&dir.join(name), &buf)?;
    out.files.push(name.to_string());
    Ok(())
}

fn load_panel(cfg: &RunConfig) -> Result<Vec<DailyObservation>, CliError> {
    let (path, daily) = cfg.input()?;
    let file = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
    let obs = if daily {
        read_daily_csv(file)?
    } else {
        let days = read_intraday_csv(file, SessionCalendar::new(cfg.lambda()?)?)?;
        build_daily_observations(&days, &cfg.taus)?
    };
    let obs = usable(&obs).to_vec();
    if cfg.models.contains(&ModelKind::Rr) {
        for &tau in &cfg.taus {
            if let Some(o) = obs.iter().find(|o| o.rq(tau).is_none()) {
                return Err(CliError::Validation(format!(
                    "model rr needs a realized quantile at tau={tau}, missing on day {} of {}",
                    o.day_index,
                    path.display()
                )));
            }
        }
    }
    Ok(obs)
}

fn fit_options(cfg: &RunConfig) -> FitOptions<f64> {
    FitOptions { bounds: cfg.bounds, ..FitOptions::default() }
}

fn first_failure(fits: &ModelFits<f64>, cfg: &RunConfig) -> Option<CliError> {
    let mut count = 0;
    let mut first = None;
    for (mi, row) in fits.cells.iter().enumerate() {
        for (ti, cell) in row.iter().enumerate() {
            if let Err(e) = cell {
                count += 1;
                first.get_or_insert_with(|| (cfg.models[mi], cfg.taus[ti], e.duplicate()));
            }
        }
    }
    first.map(|(model, tau, e)| {
        let msg = format!("{count} fit(s) failed; first: {model} at tau={tau}: {e}");
        match CliError::from(e) {
            CliError::Validation(_) => CliError::Validation(msg),
            CliError::Estimation(_) => CliError::Estimation(msg),
            CliError::Io(_) => CliError::Io(msg),
        }
    })
}

fn simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dgp = cfg.dgp()?;
    let (days, truth) = simulate_panel(&dgp)?;
    let obs = build_daily_observations(&days, &cfg.taus)?;
    let mut out = Outcome::new();
    emit(&mut out, &cfg.output, "intraday.csv", |b| write_intraday_csv(b, &days))?;
    emit(&mut out, &cfg.output, "truth.csv", |b| truth.write_csv(b))?;
    emit(&mut out, &cfg.output, "daily.csv", |b| write_daily_csv(b, &obs))?;
    Ok(out)
}

fn estimate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let obs = load_panel(cfg)?;
    let fits = fit_models(&obs, &cfg.models, &cfg.taus, cfg.seed, &fit_options(cfg));
    let mut rows = Vec::new();
    for (mi, model) in cfg.models.iter().enumerate() {
        for (ti, &tau) in cfg.taus.iter().enumerate() {
            let (coeffs, status) = match &fits.cells[mi][ti] {
                Ok(f) => (f.coefficients(&obs), "ok".to_string()),
                Err(e) => ([f64::NAN; 4], e.to_string()),
            };
            rows.push(CoeffRecord { model: model.name().to_string(), tau, coeffs, status });
        }
    }

    let mut conv = String::new();
    if let Some(q) = &fits.qmle {
        conv.push_str("[qmle]\n");
        match q {
            Ok(f) => {
                let p = &f.params;
                writeln!(conv, "omega={}\ngamma={}\nalpha={}\nbeta={}", p.omega, p.gamma, p.alpha, p.beta).unwrap();
                writeln!(conv, "h1={}\nobjective={}\n{}", f.h1, f.objective, f.report).unwrap();
            }
            Err(e) => writeln!(conv, "status={e}").unwrap(),
        }
        conv.push('\n');
    }
    if let Some(q) = &fits.qgarch {
        conv.push_str("[qgarch]\n");
        match q {
            Ok(v) => {
                let p = &v.params;
                writeln!(conv, "omega={}\ngamma={}\nalpha={}\n{}", p.omega, p.gamma, p.alpha, v.report).unwrap();
            }
            Err(e) => writeln!(conv, "status={e}").unwrap(),
        }
        conv.push('\n');
    }
    if let Some(mi) = cfg.models.iter().position(|&m| m == ModelKind::Rcaviar) {
        for (ti, &tau) in cfg.taus.iter().enumerate() {
            writeln!(conv, "[rcaviar tau={tau}]").unwrap();
            match &fits.cells[mi][ti] {
                Ok(rgq_core::models::Fitted::Rcaviar(f)) => {
                    let starts: Vec<String> = f.start_objectives.iter().map(|v| v.to_string()).collect();
                    writeln!(conv, "objective={}\nbest_start={}\nstart_objectives={}", f.objective, f.best_start, starts.join(";")).unwrap();
                }
                Ok(_) => {}
                Err(e) => writeln!(conv, "status={e}").unwrap(),
            }
            conv.push('\n');
        }
    }

    let mut out = Outcome::new();
    emit(&mut out, &cfg.output, "coefficients.csv", |b| write_coeff_csv(b, &rows))?;
    write(&cfg.output.join("convergence.txt"), conv.as_bytes())?;
    out.files.push("convergence.txt".into());
    if let Some(e) = first_failure(&fits, cfg) {
        out.fail(e);
    }
    Ok(out)
}

fn forecast(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let obs = load_panel(cfg)?;
    let fits = fit_models(&obs, &cfg.models, &cfg.taus, cfg.seed, &fit_options(cfg));
    let day = obs.last().map_or(0, |o| o.day_index + 1);
    let mut csv = String::from("model,day,tau,q_hat,status\n");
    let mut out = Outcome::new();
    for (mi, model) in cfg.models.iter().enumerate() {
        for (ti, &tau) in cfg.taus.iter().enumerate() {
            let q = fits.cells[mi][ti].as_ref().map_err(|e| e.duplicate()).and_then(|f| f.forecast(&obs));
            match q {
                Ok(q) => writeln!(csv, "{model},{day},{tau},{q},ok").unwrap(),
                Err(e) => {
                    writeln!(csv, "{model},{day},{tau},NA,{}", e.to_string().replace([',', '\n'], ";")).unwrap();
                    out.fail(CliError::from(e));
                }
            }
        }
    }
    write(&cfg.output.join("forecasts.csv"), csv.as_bytes())?;
    out.files.push("forecasts.csv".into());
    Ok(out)
}

fn backtest(cfg: &RunConfig, refit_override: Option<usize>) -> Result<Outcome, CliError> {
    let mut settings = cfg.backtest()?;
    if let Some(k) = refit_override {
        settings.refit_every = k;
    }
    let obs = load_panel(cfg)?;
    if settings.window >= obs.len() {
        return Err(CliError::Validation(format!(
            "window {} leaves no out-of-sample days in a panel of {} usable days",
            settings.window,
            obs.len()
        )));
    }
    let rc = RollingConfig {
        window: settings.window,
        refit_every: settings.refit_every,
        dq_lags: settings.dq_lags,
        seed: cfg.seed,
        fit: fit_options(cfg),
    };
    let results = rolling_backtest_many(&obs, &cfg.models, &cfg.taus, &rc)?;

    let mut out = Outcome::new();
    let fdir = cfg.output.join("forecasts");
    fs::create_dir_all(&fdir).map_err(|e| io_err(&fdir, e))?;
    for r in &results {
        let name = format!("{}_{}.csv", r.model, r.tau);
        emit(&mut out, &fdir, &name, |b| write_forecast_csv(b, &r.forecasts))?;
        if let Some(f) = out.files.last_mut() {
            *f = format!("forecasts/{f}");
        }
    }

    let mut reports: Vec<BacktestReport> = results.iter().filter_map(|r| r.report.clone()).collect();
    if let Some(reference) = settings.relative_to {
        if let Err(e) = normalize_relative(&mut reports, reference.name()) {
            for r in &mut reports {
                r.relative_loss = None;
            }
            out.fail(CliError::Estimation(format!("relative losses unavailable: {e}")));
        }
    }

    let mut csv = String::from(REPORT_CSV_HEADER);
    csv.push('\n');
    let mut txt = String::new();
    let mut it = reports.iter();
    for r in &results {
        if r.report.is_some() {
            let rep = it.next().expect("one report per successful cell");
            writeln!(csv, "{}", rep.csv_row()).unwrap();
            writeln!(txt, "{rep}").unwrap();
        } else {
            let why = r.report_error.clone().unwrap_or_else(|| "no forecasts".into());
            writeln!(csv, "{},{},NA,NA,NA,NA,NA,NA,NA,NA,NA", r.model, r.tau).unwrap();
            writeln!(txt, "model={}\ntau={}\nstatus=failed ({why})", r.model, r.tau).unwrap();
            out.fail(CliError::Estimation(format!("{} at tau={}: {why}", r.model, r.tau)));
        }
        if let Some((day, e)) = r.failures.first() {
            writeln!(txt, "failed_days={} (first: day {day}: {e})", r.failures.len()).unwrap();
        }
        txt.push('\n');
    }
    write(&cfg.output.join("report.csv"), csv.as_bytes())?;
    write(&cfg.output.join("report.txt"), txt.as_bytes())?;
    out.files.extend(["report.csv".to_string(), "report.txt".to_string()]);
    Ok(out)
}

fn report(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let base = cfg.dgp()?;
    let ex = cfg.experiment(base.n, base.m)?;
    let grid = ExperimentGrid {
        ns: ex.ns,
        ms: ex.ms,
        taus: cfg.taus.clone(),
        reps: ex.reps,
        models: cfg.models.clone(),
        base,
        true_quantile_reps: ex.true_quantile_reps,
        qmle: Default::default(),
    };
    let result = mae_experiment(&grid)?;
    let mut out = Outcome::new();
    emit(&mut out, &cfg.output, "mae.csv", |b| result.write_mae_csv(b))?;
    let mut tq = String::from("tau,q,std_error\n");
    for (tau, q) in &result.true_quantiles {
        writeln!(tq, "{tau},{},{}", q.q, q.std_error).unwrap();
    }
    write(&cfg.output.join("true_quantiles.csv"), tq.as_bytes())?;
    out.files.push("true_quantiles.csv".into());
    for &(n, m, r, seed) in &result.seeds {
        out.manifest_extra.push(format!("replication n={n} m={m} r={r} seed={seed}"));
    }
    Ok(out)
}
