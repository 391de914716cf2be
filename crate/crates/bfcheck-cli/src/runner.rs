//! Subcommand implementations: configuration resolution, artifact writing,
//! and the check/report pipelines.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rand::Rng;
use serde_json::json;

use bfcheck::engine::{run_sbc, EngineConfig, RecordSet};
use bfcheck::fault::FaultSpec;
use bfcheck::history::{
    build_histories, fp_power_table, fp_power_table_csv, history_curve, power_curve,
    HistoryCheck, HistoryConfig, HistoryCurve,
};
use bfcheck::scenario::{
    build_scenario, parse_scenario_spec, AcceptRule, ScenarioParams, SCENARIOS,
};
use bfcheck::stats::{
    dap_t_test, dap_welch, gaffke_test, log_gamma_ratio, miscalibration_test, null_table,
    sbc_sensitivity, sig4, CheckReport, Decision, DEFAULT_ALPHA,
};

use crate::config::FileConfig;
use crate::plot;
use crate::CommonArgs;

const DEFAULT_SIMS: usize = 1000;
const DEFAULT_DRAWS: usize = 999;
const BOOTSTRAP_B: usize = 2000;
const GAFFKE_MC: usize = 2000;

pub struct Settings {
    pub seed: u64,
    pub scenario: String,
    pub fault: Option<FaultSpec>,
    pub accept: Option<AcceptRule>,
    pub sims: usize,
    pub draws: usize,
    pub out: PathBuf,
    pub params: ScenarioParams,
    pub file: FileConfig,
}

fn resolve(common: &CommonArgs) -> Result<Settings> {
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let jobs = common.jobs.or(file.parse("jobs")?);
    if let Some(jobs) = jobs {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let seed = match common.seed.or(file.parse("seed")?) {
        Some(s) => s,
        None => {
            let s: u64 = rand::rng().random();
            println!("seed: {s} (drawn; pass --seed {s} to reproduce)");
            s
        }
    };
    let scenario = common
        .scenario
        .clone()
        .or(file.get("scenario").map(str::to_string))
        .unwrap_or_else(|| "binary-toy".to_string());
    if !SCENARIOS.contains(&scenario.as_str()) {
        bail!(
            "unknown scenario '{scenario}'; known scenarios: {}",
            SCENARIOS.join(", ")
        );
    }
    let fault = match common.fault.clone().or(file.get("fault").map(str::to_string)) {
        Some(f) => Some(f.parse::<FaultSpec>()?),
        None => None,
    };
    let accept = match common.accept.clone().or(file.get("accept").map(str::to_string)) {
        Some(a) => Some(a.parse::<AcceptRule>()?),
        None => None,
    };
    let mut params = ScenarioParams::default();
    if let Some(b0) = file.parse("b0")? {
        params.b0 = b0;
    }
    if let Some(b1) = file.parse("b1")? {
        params.b1 = b1;
    }
    if let Some(mu) = file.parse("good_mu")? {
        params.good_mu = mu;
    }
    if let Some(n) = file.parse("n_obs")? {
        params.n_obs = Some(n);
    }
    if let Some(y1) = file.get("y1") {
        params.y1 = y1
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| anyhow!("bad y1 entry '{v}'")))
            .collect::<Result<Vec<f64>>>()?;
    }
    Ok(Settings {
        seed,
        scenario,
        fault,
        accept,
        sims: common.sims.or(file.parse("sims")?).unwrap_or(DEFAULT_SIMS),
        draws: common.draws.or(file.parse("draws")?).unwrap_or(DEFAULT_DRAWS),
        out: common
            .out
            .clone()
            .or(file.get("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out")),
        params,
        file,
    })
}

fn run_records(settings: &Settings) -> Result<RecordSet> {
    let problem = build_scenario(
        &settings.scenario,
        settings.fault,
        settings.accept,
        &settings.params,
    )?;
    let config = EngineConfig::new(settings.sims, settings.seed).with_draws(settings.draws);
    Ok(run_sbc(&problem, &config)?)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

pub fn simulate(common: &CommonArgs) -> Result<bool> {
    let settings = resolve(common)?;
    let set = run_records(&settings)?;
    write(&settings.out.join("records.csv"), &set.to_csv())?;
    write(
        &settings.out.join("run.json"),
        &serde_json::to_string_pretty(&set.run_envelope())?,
    )?;
    println!(
        "wrote {} records for {} to {}",
        set.len(),
        set.problem_id,
        settings.out.display()
    );
    if !set.failed_sims.is_empty() {
        println!("warning: {} simulations failed", set.failed_sims.len());
    }
    Ok(false)
}

/// Every applicable check over a completed record set.
pub fn run_checks(set: &RecordSet, seed: u64) -> Result<Vec<CheckReport>> {
    let m = set.config.n_draws_m;
    let s = set.len();
    let mut reports = Vec::new();
    for name in &set.quantity_names {
        let ranks = set.ranks_of(name)?;
        let table = null_table(s, m, DEFAULT_ALPHA)?;
        let ratio = log_gamma_ratio(&ranks, m, &table)?;
        let decision = if ratio < 0.0 {
            Decision::Reject
        } else {
            Decision::Pass
        };
        reports.push(
            CheckReport::new(format!("sbc:{name}"), ratio, table.quantile, decision, s)
                .with_extra("sensitivity", sbc_sensitivity(s, DEFAULT_ALPHA)?),
        );
    }
    let probs = set.probs();
    let outcomes = set.outcomes();
    reports.push(miscalibration_test(
        &probs,
        &outcomes,
        BOOTSTRAP_B,
        seed ^ 0x6d69_7363,
    )?);
    let dap = if set.estimated_prior {
        dap_welch(&probs, &outcomes)
    } else {
        dap_t_test(&probs, set.prior_m1)
    };
    match dap {
        Ok(report) => reports.push(report),
        Err(bfcheck::Error::DegenerateInput) => {
            // All probabilities identical: fall back to the bounded-mean
            // test, which handles point masses.
            println!("note: DAP t-test degenerate (all probabilities identical); using the Gaffke test");
            reports.push(gaffke_test(&probs, set.prior_m1, GAFFKE_MC, seed ^ 0x6761)?);
        }
        Err(e) => return Err(e.into()),
    }
    Ok(reports)
}

pub fn check(common: &CommonArgs) -> Result<bool> {
    let settings = resolve(common)?;
    let set = run_records(&settings)?;
    let reports = run_checks(&set, settings.seed)?;
    let envelope = json!({
        "schema": "bfcheck/checks/v1",
        "problem_id": set.problem_id,
        "n_sims": set.len(),
        "seed": settings.seed,
        "checks": reports,
    });
    write(
        &settings.out.join("checks.json"),
        &serde_json::to_string_pretty(&envelope)?,
    )?;

    println!(
        "scenario {}  sims {}  draws {}  seed {}",
        set.problem_id,
        set.len(),
        set.config.n_draws_m,
        settings.seed
    );
    println!("{:<22} {:>12} {:>12}  {}", "check", "statistic", "p/level", "decision");
    for r in &reports {
        println!(
            "{:<22} {:>12} {:>12}  {}",
            r.check_name,
            sig4(r.statistic),
            sig4(r.threshold_or_pvalue),
            match r.decision {
                Decision::Pass => "pass",
                Decision::Reject => "REJECT",
            }
        );
    }
    // Table-style summary line.
    let dap = reports
        .iter()
        .find(|r| r.check_name.starts_with("dap"))
        .expect("dap report present");
    let misc = reports
        .iter()
        .find(|r| r.check_name == "miscalibration")
        .expect("miscalibration report present");
    let sens = sbc_sensitivity(set.len(), DEFAULT_ALPHA)?;
    println!(
        "DAP 95% CI: ({}, {})  Miscalibration: {} (Q95% {})  SBC sens.: {}",
        sig4(*dap.extras.get("ci_lo").unwrap_or(&f64::NAN)),
        sig4(*dap.extras.get("ci_hi").unwrap_or(&f64::NAN)),
        sig4(misc.statistic),
        sig4(*misc.extras.get("null_q95").unwrap_or(&f64::NAN)),
        sig4(sens)
    );
    Ok(reports.iter().any(|r| r.decision.is_reject()))
}

pub fn history(
    common: &CommonArgs,
    history_length: Option<usize>,
    histories: Option<usize>,
    checks: Option<&str>,
) -> Result<bool> {
    let mut settings = resolve(common)?;
    let length = history_length
        .or(settings.file.parse("history_length")?)
        .unwrap_or(200);
    let n_histories = histories
        .or(settings.file.parse("histories")?)
        .unwrap_or(bfcheck::history::DEFAULT_N_HISTORIES);
    let mut cfg = HistoryConfig::new(length);
    cfg.n_histories = n_histories;
    if let Some(mult) = settings.file.parse("pool_multiplier")? {
        cfg.pool_multiplier = mult;
    }
    settings.sims = cfg.pool_size();
    let set = run_records(&settings)?;

    let check_list: Vec<HistoryCheck> = match checks.or(settings.file.get("checks")) {
        Some(spec) => spec
            .split(',')
            .map(|c| c.trim().parse::<HistoryCheck>())
            .collect::<bfcheck::Result<_>>()?,
        None => {
            let mut list: Vec<HistoryCheck> = set
                .quantity_names
                .iter()
                .map(|q| HistoryCheck::Sbc {
                    quantity: q.clone(),
                })
                .collect();
            list.push(HistoryCheck::Miscalibration);
            list.push(HistoryCheck::Dap);
            list
        }
    };

    let indices = build_histories(&set, &cfg, settings.seed ^ 0x68697374)?;
    let mut csv = String::from(HistoryCurve::csv_header());
    println!("{:<22} {:>14}  {}", "check", "first 80% power", "final power");
    for check in &check_list {
        let curve = history_curve(&set, &indices, check, &cfg)?;
        let (power, first_80) = power_curve(&curve)?;
        curve.to_csv_rows(&mut csv);
        println!(
            "{:<22} {:>14}  {:.2}",
            curve.check_name,
            first_80.map_or("never".to_string(), |n| n.to_string()),
            power.last().copied().unwrap_or(0.0)
        );
    }
    write(&settings.out.join("curves.csv"), &csv)?;
    println!("wrote curves to {}", settings.out.display());
    Ok(false)
}

pub fn table(
    common: &CommonArgs,
    scenarios: Option<&str>,
    sizes: Option<&str>,
    runs: Option<usize>,
) -> Result<bool> {
    let settings = resolve(common)?;
    let scenario_spec = scenarios
        .map(str::to_string)
        .or(settings.file.get("scenarios").map(str::to_string))
        .unwrap_or_else(|| "good-cauchy,good-normal,poisson-nb+log-bias:2".to_string());
    let mut problems = Vec::new();
    for spec in scenario_spec.split(',') {
        let (name, fault, accept) = parse_scenario_spec(spec.trim())?;
        let problem = build_scenario(&name, fault, accept, &settings.params)?;
        problems.push((spec.trim().to_string(), problem));
    }
    let sizes: Vec<usize> = match sizes.or(settings.file.get("sizes")) {
        Some(s) => s
            .split(',')
            .map(|v| v.trim().parse::<usize>().map_err(|_| anyhow!("bad size '{v}'")))
            .collect::<Result<_>>()?,
        None => vec![10, 20, 50, 100],
    };
    let n_runs = runs.or(settings.file.parse("runs")?).unwrap_or(1000);
    let cells = fp_power_table(&problems, &sizes, n_runs, settings.seed)?;
    write(&settings.out.join("table.csv"), &fp_power_table_csv(&cells))?;
    println!("{:<34} {:>5} {:>14} {:>8} {:>8}", "scenario", "n", "test", "rate", "se");
    for c in &cells {
        println!(
            "{:<34} {:>5} {:>14} {:>8} {:>8}",
            c.scenario,
            c.n,
            c.test,
            sig4(c.rate),
            sig4(c.se)
        );
    }
    Ok(false)
}

pub fn report(common: &CommonArgs) -> Result<bool> {
    let settings = resolve(common)?;
    let out = &settings.out;
    let records_path = out.join("records.csv");
    let run_path = out.join("run.json");
    let curves_path = out.join("curves.csv");
    let have_records = records_path.exists() && run_path.exists();
    let have_curves = curves_path.exists();
    if !have_records && !have_curves {
        bail!("no records found in {} (run simulate or history first)", out.display());
    }
    let plots = out.join("plots");
    std::fs::create_dir_all(&plots)?;
    let mut written = Vec::new();

    if have_records {
        let envelope: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&run_path)?)
                .context("malformed run.json")?;
        let config: EngineConfig = serde_json::from_value(envelope["config"].clone())
            .context("malformed config in run.json")?;
        let problem_id = envelope["problem_id"].as_str().unwrap_or("unknown");
        let prior = envelope["prior_m1"].as_f64().unwrap_or(0.5);
        let estimated = envelope["estimated_prior"].as_bool().unwrap_or(false);
        let set = RecordSet::from_csv(
            &std::fs::read_to_string(&records_path)?,
            config,
            problem_id,
            prior,
            estimated,
        )?;
        if set.len() < 10 {
            bail!("need at least 10 records to plot, got {}", set.len());
        }
        let table = null_table(set.len(), set.config.n_draws_m, DEFAULT_ALPHA)?;
        for name in &set.quantity_names {
            let ranks = set.ranks_of(name)?;
            let svg = plot::plot_ecdf_diff(
                &ranks,
                set.config.n_draws_m,
                &table,
                &format!("{problem_id}: rank ECDF for {name}"),
            );
            let path = plots.join(format!("ecdf_{name}.svg"));
            write(&path, &svg)?;
            written.push(path);
        }
        if set.len() >= 20 {
            let svg = plot::plot_calibration(
                &set.probs(),
                &set.outcomes(),
                settings.seed ^ 0x706c6f74,
                &format!("{problem_id}: binary calibration"),
            );
            let path = plots.join("calibration.svg");
            write(&path, &svg)?;
            written.push(path);
        }
    }

    if have_curves {
        let parsed = parse_curves(&std::fs::read_to_string(&curves_path)?)?;
        for (check, (grid, values, rejects)) in parsed {
            let n_histories = values.len();
            let first_80 = first_80_from_rejects(&grid, &rejects);
            let (threshold, y_label) = if check.starts_with("sbc:") {
                (0.0, "log gamma ratio")
            } else {
                (DEFAULT_ALPHA, "p-value")
            };
            let svg = plot::plot_history(
                &grid,
                &values,
                threshold,
                first_80,
                &format!("{check} ({n_histories} histories)"),
                y_label,
            );
            let path = plots.join(format!("history_{}.svg", check.replace(':', "_")));
            write(&path, &svg)?;
            written.push(path);
        }
    }
    println!("wrote {} plots to {}", written.len(), plots.display());
    Ok(false)
}

type ParsedCurve = (Vec<usize>, Vec<Vec<Option<f64>>>, Vec<Vec<Option<bool>>>);

fn parse_curves(text: &str) -> Result<BTreeMap<String, ParsedCurve>> {
    let mut rows: BTreeMap<String, BTreeMap<usize, BTreeMap<usize, (Option<f64>, Option<bool>)>>> =
        BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        if k == 0 || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            bail!("malformed curves row: {line}");
        }
        let check = f[0].to_string();
        let history: usize = f[1].parse().context("bad history id")?;
        let n: usize = f[2].parse().context("bad n_sims")?;
        let value = if f[3] == "NA" { None } else { Some(f[3].parse()?) };
        let reject = if f[4] == "NA" {
            None
        } else {
            Some(f[4] == "1")
        };
        rows.entry(check)
            .or_default()
            .entry(history)
            .or_default()
            .insert(n, (value, reject));
    }
    let mut out = BTreeMap::new();
    for (check, histories) in rows {
        let grid: Vec<usize> = histories
            .values()
            .next()
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default();
        let mut values = Vec::new();
        let mut rejects = Vec::new();
        for per_history in histories.values() {
            values.push(grid.iter().map(|n| per_history[n].0).collect());
            rejects.push(grid.iter().map(|n| per_history[n].1).collect());
        }
        out.insert(check, (grid, values, rejects));
    }
    Ok(out)
}

fn first_80_from_rejects(grid: &[usize], rejects: &[Vec<Option<bool>>]) -> Option<usize> {
    let n_histories = rejects.len();
    for (j, &n) in grid.iter().enumerate() {
        let rejecting = rejects.iter().filter(|row| row[j] == Some(true)).count();
        if rejecting as f64 / n_histories as f64 >= 0.8 {
            return Some(n);
        }
    }
    None
}
