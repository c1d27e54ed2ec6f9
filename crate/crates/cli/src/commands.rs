use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use serde_json::json;

use hjp_core::analytics::{cost_of_carry, first_difference, hac_regression, time_change_residuals, QqData};
use hjp_core::calibration::{calibrate, CalibrationResult, QuoteSlice};
use hjp_core::estimation::{
    estimate_diffusion, filter_intensities, fit_mle, pot_filter, MleResult, PotResult, ReturnSeries,
};
use hjp_core::fourier::FourierPricer;
use hjp_core::measure::{premia_series, to_q_params, PremiaPoint, RiskPremiumParams};
use hjp_core::sim::{simulate_path, EventSeries, Measure};
use hjp_core::{IntensityState, ModelParams};

use crate::config::{Meta, RunConfig};
use crate::error::{CliError, CliResult, StageExt};
use crate::output::{fmt, write_csv, write_csv_bytes, write_json};
use crate::{
    AnalyzeArgs, CalibrateArgs, Cli, Command, EstimateArgs, GofArgs, PipelineArgs, PremiaArgs, PriceArgs,
    SimulateArgs,
};

pub fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = cli.tol {
        if !(tol > 0.0) {
            return Err(CliError::config("--tol must be positive"));
        }
        cfg.calibration.quadrature.rel_tol = tol;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(&cfg, a),
        Command::Estimate(a) => estimate(&cfg, a),
        Command::Calibrate(a) => calibrate_cmd(&cfg, a),
        Command::Price(a) => price(&cfg, a),
        Command::Premia(a) => premia(&cfg, a),
        Command::Gof(a) => gof(&cfg, a),
        Command::Analyze(a) => analyze(&cfg, a),
        Command::Pipeline(a) => pipeline(&cfg, a),
    }
}

fn require_file(p: &Path) -> CliResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::config(format!("input file {} does not exist", p.display())))
    }
}

fn require_parent(p: &Path) -> CliResult<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => {
            Err(CliError::config(format!("output directory {} does not exist", d.display())))
        }
        _ => Ok(()),
    }
}

fn open(p: &Path) -> CliResult<BufReader<File>> {
    Ok(BufReader::new(File::open(p)?))
}

/// Reads a flat parameter file, or the `params` field of an `estimate` output.
fn load_params(p: &Path) -> CliResult<ModelParams> {
    let value: serde_json::Value = serde_json::from_reader(open(p)?)?;
    let inner = value.get("params").cloned().unwrap_or(value);
    let params: ModelParams =
        serde_json::from_value(inner).map_err(|e| CliError::data(format!("invalid parameters in {}: {e}", p.display())))?;
    params.validate().map_err(|e| CliError::data(format!("invalid parameters in {}: {e}", p.display())))?;
    Ok(params)
}

fn risk(a: &crate::RiskArgs) -> RiskPremiumParams {
    RiskPremiumParams::new(a.chi_plus, a.chi_minus)
}

fn simulate(cfg: &RunConfig, a: &SimulateArgs) -> CliResult<()> {
    require_file(&a.params)?;
    require_parent(&a.out)?;
    if !(a.horizon > 0.0) {
        return Err(CliError::config("--T must be positive"));
    }
    let meta = Meta::new("simulate", cfg, &json!({ "T": a.horizon }), &[&a.params])?;
    let params = load_params(&a.params)?;
    let path = simulate_path(&params, Measure::Physical, a.horizon, cfg.grid_step, cfg.seed, cfg.event_cap)?;
    info!("simulated {} jumps over {} years", path.events.len(), a.horizon);
    let mut body = Vec::new();
    path.write_csv(&mut body)?;
    write_csv_bytes(&a.out, &meta, &body)?;
    if let Some(events_out) = &a.events_out {
        let mut body = Vec::new();
        path.events.write_csv(&mut body)?;
        write_csv_bytes(events_out, &meta, &body)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PotSummary {
    nu_plus_hat: f64,
    nu_minus_hat: f64,
    n_jumps_plus: usize,
    n_jumps_minus: usize,
    n_filtered: usize,
    filtered_skew: f64,
    filtered_excess_kurtosis: f64,
    objective: f64,
}

/// Contents of `fit.json`: the likelihood fit plus threshold and diffusion
/// estimates and the assembled parameter record.
#[derive(Serialize)]
struct FitReport<'a> {
    #[serde(flatten)]
    mle: &'a MleResult,
    pot: PotSummary,
    mu_hat: f64,
    sigma_hat: f64,
    params: ModelParams,
}

struct Fit {
    returns: ReturnSeries,
    pot: PotResult,
    mle: MleResult,
    params: ModelParams,
}

fn fit_returns(cfg: &RunConfig, returns_path: &Path) -> CliResult<Fit> {
    let returns = ReturnSeries::read_csv(open(returns_path)?).stage("returns")?;
    let pot = pot_filter(&returns, &cfg.pot).stage("threshold")?;
    info!(
        "thresholds {} / {} give {} jumps",
        pot.nu_plus_hat,
        pot.nu_minus_hat,
        pot.jumps.len()
    );
    let mle = fit_mle(&pot.jumps, pot.nu_plus_hat, pot.nu_minus_hat, &cfg.mle).stage("likelihood")?;
    let (lp, lm) = mle.laws().stage("likelihood")?;
    let (mu, sigma) = estimate_diffusion(&returns, &pot, (&lp, &lm)).stage("diffusion")?;
    let params = mle.model_params(mu, sigma).stage("diffusion")?;
    Ok(Fit { returns, pot, mle, params })
}

fn fit_report(fit: &Fit) -> FitReport<'_> {
    let pot = &fit.pot;
    FitReport {
        mle: &fit.mle,
        pot: PotSummary {
            nu_plus_hat: pot.nu_plus_hat,
            nu_minus_hat: pot.nu_minus_hat,
            n_jumps_plus: pot.jumps.count(hjp_core::Side::Positive),
            n_jumps_minus: pot.jumps.count(hjp_core::Side::Negative),
            n_filtered: pot.n_filtered,
            filtered_skew: pot.filtered_moments.0,
            filtered_excess_kurtosis: pot.filtered_moments.1,
            objective: pot.objective,
        },
        mu_hat: fit.params.mu,
        sigma_hat: fit.params.sigma,
        params: fit.params,
    }
}

fn estimate(cfg: &RunConfig, a: &EstimateArgs) -> CliResult<()> {
    require_file(&a.returns)?;
    require_parent(&a.out)?;
    let meta = Meta::new("estimate", cfg, &json!({}), &[&a.returns])?;
    let fit = fit_returns(cfg, &a.returns)?;
    write_json(&a.out, &meta, &fit_report(&fit))
}

#[derive(Serialize)]
struct CalibrationReport<'a> {
    as_of_day: i64,
    spot: f64,
    rate: f64,
    state: IntensityState,
    #[serde(flatten)]
    result: &'a CalibrationResult,
}

fn calibrate_cmd(cfg: &RunConfig, a: &CalibrateArgs) -> CliResult<()> {
    require_file(&a.params)?;
    require_file(&a.quotes)?;
    require_parent(&a.out)?;
    let meta = Meta::new("calibrate", cfg, &json!({ "spot": a.spot, "rate": a.rate }), &[&a.params, &a.quotes])?;
    let params = load_params(&a.params)?;
    let mut slice = QuoteSlice::read_csv(open(&a.quotes)?, a.spot, a.rate).stage("quotes")?;
    slice.state = params.initial_state();
    let result = calibrate(&params, &slice, &cfg.calibration).stage("calibration")?;
    let report = CalibrationReport { as_of_day: slice.as_of_day, spot: slice.spot, rate: slice.rate, state: slice.state, result: &result };
    write_json(&a.out, &meta, &report)
}

fn price(cfg: &RunConfig, a: &PriceArgs) -> CliResult<()> {
    require_file(&a.params)?;
    require_parent(&a.out)?;
    let args = json!({
        "chi_plus": a.risk.chi_plus, "chi_minus": a.risk.chi_minus, "spot": a.spot,
        "rate": a.rate, "maturities": a.maturities, "strikes": a.strikes,
    });
    let meta = Meta::new("price", cfg, &args, &[&a.params])?;
    let params = load_params(&a.params)?;
    let q = to_q_params(&params, &risk(&a.risk), a.rate, &params.initial_state()).map_err(|e| CliError::data(e.to_string()))?;
    let pricer = FourierPricer::new(cfg.quadrature());
    pricer.prepare(&q, &a.maturities)?;
    let points = pricer.iv_surface(&q, &a.maturities, &a.strikes, a.spot)?;
    write_csv(&a.out, &meta, |w| {
        w.write_record(["maturity", "strike", "type", "price", "iv"])?;
        for p in &points {
            w.write_record([fmt(p.spec.tau), fmt(p.spec.strike), p.spec.kind.as_str().into(), fmt(p.price), fmt(p.iv)])?;
        }
        Ok(())
    })
}

fn write_premia(path: &Path, meta: &Meta, points: &[PremiaPoint]) -> CliResult<()> {
    write_csv(path, meta, |w| {
        w.write_record(["t", "lambda_plus", "lambda_minus", "gamma_plus", "gamma_minus"])?;
        for p in points {
            w.write_record([fmt(p.t), fmt(p.lambda_plus), fmt(p.lambda_minus), fmt(p.gamma_plus), fmt(p.gamma_minus)])?;
        }
        Ok(())
    })
}

fn premia(cfg: &RunConfig, a: &PremiaArgs) -> CliResult<()> {
    require_file(&a.params)?;
    require_file(&a.events)?;
    require_parent(&a.out)?;
    let args = json!({ "chi_plus": a.risk.chi_plus, "chi_minus": a.risk.chi_minus, "T": a.horizon });
    let meta = Meta::new("premia", cfg, &args, &[&a.params, &a.events])?;
    let params = load_params(&a.params)?;
    let events = EventSeries::read_csv(open(&a.events)?, a.horizon)?;
    let chi = risk(&a.risk);
    chi.validate(&params.law_plus, &params.law_minus).map_err(|e| CliError::data(e.to_string()))?;
    let n = (events.horizon() / cfg.grid_step).floor() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * cfg.grid_step).collect();
    let states = filter_intensities(&params.dynamics, events.events(), &params.initial_state(), &grid)?.at_grid;
    let points = premia_series(&params, &chi, &states)?;
    write_premia(&a.out, &meta, &points)
}

fn gof(cfg: &RunConfig, a: &GofArgs) -> CliResult<()> {
    require_file(&a.params)?;
    require_file(&a.events)?;
    require_parent(&a.out)?;
    let meta = Meta::new("gof", cfg, &json!({ "split": a.split }), &[&a.params, &a.events])?;
    let params = load_params(&a.params)?;
    let events = EventSeries::read_csv(open(&a.events)?, None)?;
    let qq: QqData = time_change_residuals(&params.dynamics, &events, Some(params.initial_state()), a.split);
    for s in [&qq.plus, &qq.minus] {
        info!(
            "{}: n={} KS={} critical(1%)={}",
            s.side.as_str(),
            s.points.len(),
            s.ks_statistic,
            s.ks_critical_1pct
        );
    }
    if a.out.extension().is_some_and(|e| e == "json") {
        return write_json(&a.out, &meta, &qq);
    }
    write_csv(&a.out, &meta, |w| {
        w.write_record(["side", "t", "sample", "in_sample", "rank", "empirical", "theoretical"])?;
        for s in [&qq.plus, &qq.minus] {
            for (i, p) in s.points.iter().enumerate() {
                w.write_record([
                    s.side.as_str().to_string(),
                    fmt(p.t),
                    fmt(p.sample),
                    p.in_sample.to_string(),
                    (i + 1).to_string(),
                    fmt(s.empirical[i]),
                    fmt(s.theoretical[i]),
                ])?;
            }
        }
        Ok(())
    })
}

fn read_columns(p: &Path) -> CliResult<BTreeMap<String, Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(open(p)?);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| CliError::data(format!("row {}: column {} is not numeric: {field:?}", line + 1, headers[j])))?;
            cols[j].push(v);
        }
    }
    Ok(headers.into_iter().zip(cols).collect())
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    response: &'a str,
    regressors: Vec<String>,
    differenced: bool,
    #[serde(flatten)]
    report: hjp_core::analytics::RegressionReport,
}

fn analyze(cfg: &RunConfig, a: &AnalyzeArgs) -> CliResult<()> {
    require_file(&a.data)?;
    require_parent(&a.out)?;
    let args = json!({
        "y": a.y, "x": a.x, "no_intercept": a.no_intercept, "lag": a.lag,
        "difference": a.difference, "carry": a.carry,
    });
    let meta = Meta::new("analyze", cfg, &args, &[&a.data])?;
    let mut cols = read_columns(&a.data)?;
    if let Some(names) = &a.carry {
        let get = |n: &String| cols.get(n).ok_or_else(|| CliError::config(format!("no column named {n:?}")));
        let (f, s, t) = (get(&names[0])?, get(&names[1])?, get(&names[2])?);
        let carry = (0..f.len()).map(|i| cost_of_carry(f[i], s[i], t[i])).collect();
        cols.insert("carry".into(), carry);
    }
    let mut take = |n: &String| -> CliResult<Vec<f64>> {
        let c = cols.get(n).ok_or_else(|| CliError::config(format!("no column named {n:?}")))?;
        Ok(if a.difference { first_difference(c) } else { c.clone() })
    };
    let y = take(&a.y)?;
    let x = a.x.iter().map(&mut take).collect::<CliResult<Vec<_>>>()?;
    let report = hac_regression(&y, &x, !a.no_intercept, a.lag)?;
    let mut regressors = Vec::new();
    if !a.no_intercept {
        regressors.push("intercept".to_string());
    }
    regressors.extend(a.x.iter().cloned());
    write_json(&a.out, &meta, &AnalyzeReport { response: &a.y, regressors, differenced: a.difference, report })
}

fn pipeline(cfg: &RunConfig, a: &PipelineArgs) -> CliResult<()> {
    require_file(&a.returns)?;
    require_file(&a.quotes)?;
    if !a.out.is_dir() {
        std::fs::create_dir_all(&a.out)
            .map_err(|e| CliError::config(format!("cannot create output directory {}: {e}", a.out.display())))?;
    }
    let meta = Meta::new("pipeline", cfg, &json!({ "spot": a.spot, "rate": a.rate }), &[&a.returns, &a.quotes])?;
    let mut slice = QuoteSlice::read_csv(open(&a.quotes)?, a.spot, a.rate).stage("quotes")?;

    let fit = fit_returns(cfg, &a.returns)?;
    let last_day = *fit.returns.days().last().expect("series is non-empty");
    if slice.as_of_day < last_day {
        return Err(CliError::data(format!(
            "quotes dated day {} precede the last return on day {last_day}",
            slice.as_of_day
        ))
        .at("quotes"));
    }
    let out = |name: &str| -> PathBuf { a.out.join(name) };
    write_json(&out("fit.json"), &meta, &fit_report(&fit))?;

    // model parameters stay fixed from here on
    let params = fit.params;
    let start = IntensityState::from_pair(0.0, params.dynamics.theta());
    let t_quote = fit.returns.day_to_time(slice.as_of_day);
    let mut grid = fit.returns.times();
    grid.push(t_quote);
    let filtered = filter_intensities(&params.dynamics, fit.pot.jumps.events(), &start, &grid).stage("filter")?;
    slice.state = *filtered.at_grid.last().expect("grid is non-empty");
    info!("state at the quote date: {:?}", slice.state);

    let result = calibrate(&params, &slice, &cfg.calibration).stage("calibration")?;
    let report = CalibrationReport { as_of_day: slice.as_of_day, spot: slice.spot, rate: slice.rate, state: slice.state, result: &result };
    write_json(&out("calibration.json"), &meta, &report)?;

    let chi = RiskPremiumParams::new(result.chi_plus_hat, result.chi_minus_hat);
    let points = premia_series(&params, &chi, &filtered.at_grid).stage("premia")?;
    write_premia(&out("premia.csv"), &meta, &points)
}
