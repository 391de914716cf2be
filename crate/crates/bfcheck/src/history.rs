//! Statistic "histories": check statistics evaluated along growing prefixes
//! of simulations resampled without replacement from a shared pool, plus
//! power curves and false-positive/power tables over fresh runs.
//!
//! Reusing one pool instead of fresh simulations per history is the cost
//! control the curves are built on; the pool always holds at least ten times
//! as many simulations as one history.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bma::BmaProblem;
use crate::engine::{simulate_probs, RecordSet};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stats::{
    dap_t_test, dap_welch, gaffke_test, jzs_ttest_bf, log_gamma_ratio, miscalibration_test,
    null_table, precompute_null_tables, JZS_DECISION_LOG_BF,
};
use rand::Rng;

pub const DEFAULT_N_HISTORIES: usize = 100;
pub const DEFAULT_POOL_MULTIPLIER: usize = 10;
/// Bootstrap replicates for the miscalibration test along histories.
pub const DEFAULT_BOOTSTRAP_B: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryConfig {
    pub history_length: usize,
    pub n_histories: usize,
    /// Explicit grid step; `None` selects 1 for short histories and at most
    /// 10-simulation increments for longer ones.
    pub step: Option<usize>,
    pub pool_multiplier: usize,
    pub bootstrap_b: usize,
}

impl HistoryConfig {
    pub fn new(history_length: usize) -> Self {
        HistoryConfig {
            history_length,
            n_histories: DEFAULT_N_HISTORIES,
            step: None,
            pool_multiplier: DEFAULT_POOL_MULTIPLIER,
            bootstrap_b: DEFAULT_BOOTSTRAP_B,
        }
    }

    pub fn step(&self) -> usize {
        match self.step {
            Some(s) => s.max(1),
            None if self.history_length <= 300 => 1,
            None => self.history_length.div_ceil(300).min(10),
        }
    }

    pub fn pool_size(&self) -> usize {
        self.history_length * self.pool_multiplier
    }

    /// Strictly increasing prefix lengths ending exactly at the history
    /// length.
    pub fn grid(&self) -> Vec<usize> {
        let step = self.step();
        let mut grid: Vec<usize> = (1..=self.history_length)
            .filter(|k| k % step == 0)
            .collect();
        if grid.last() != Some(&self.history_length) {
            grid.push(self.history_length);
        }
        grid
    }
}

/// Which statistic a history tracks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HistoryCheck {
    /// log gamma ratio for one quantity's ranks; rejects when negative.
    Sbc { quantity: String },
    /// Bootstrap miscalibration p-value; rejects below 5%.
    Miscalibration,
    /// Data-averaged posterior t-test p-value (one-sample against the known
    /// prior, Welch against the indicators when the prior is estimated);
    /// rejects below 5%.
    Dap,
}

impl HistoryCheck {
    pub fn name(&self) -> String {
        match self {
            HistoryCheck::Sbc { quantity } => format!("sbc:{quantity}"),
            HistoryCheck::Miscalibration => "miscalibration".into(),
            HistoryCheck::Dap => "dap".into(),
        }
    }
}

impl FromStr for HistoryCheck {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(q) = s.strip_prefix("sbc:") {
            return Ok(HistoryCheck::Sbc {
                quantity: q.to_string(),
            });
        }
        match s {
            "miscalibration" => Ok(HistoryCheck::Miscalibration),
            "dap" => Ok(HistoryCheck::Dap),
            other => Err(Error::UnknownCheck(other.to_string())),
        }
    }
}

/// A check statistic along every history: per-history rows over the grid.
/// Prefixes where the check is undefined (too few simulations, degenerate
/// input) are recorded as missing, not dropped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryCurve {
    pub check_name: String,
    pub grid: Vec<usize>,
    pub values: Vec<Vec<Option<f64>>>,
    pub rejects: Vec<Vec<Option<bool>>>,
}

impl HistoryCurve {
    /// Long-format CSV rows: check, history_id, n_sims, statistic, reject.
    pub fn to_csv_rows(&self, out: &mut String) {
        for (h, (vals, rejs)) in self.values.iter().zip(&self.rejects).enumerate() {
            for ((&n, v), r) in self.grid.iter().zip(vals).zip(rejs) {
                let value = v.map_or(String::from("NA"), |x| format!("{x}"));
                let reject = r.map_or(String::from("NA"), |x| format!("{}", u8::from(x)));
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    self.check_name, h, n, value, reject
                ));
            }
        }
    }

    pub fn csv_header() -> &'static str {
        "check,history_id,n_sims,statistic,reject\n"
    }
}

/// Uniform without-replacement samples of pool indices, order randomized;
/// one independent stream per history.
pub fn build_histories(
    pool: &RecordSet,
    cfg: &HistoryConfig,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let need = cfg.pool_size();
    if pool.len() < need {
        return Err(Error::PoolTooSmall {
            pool: pool.len(),
            need,
        });
    }
    Ok((0..cfg.n_histories as u64)
        .map(|h| {
            let mut rng = stream_rng(seed, h);
            let mut indices: Vec<usize> = (0..pool.len()).collect();
            for i in 0..cfg.history_length {
                let j = rng.random_range(i..indices.len());
                indices.swap(i, j);
            }
            indices.truncate(cfg.history_length);
            indices
        })
        .collect())
}

/// One history's statistic and rejection indicator over every grid prefix.
pub fn evaluate_history(
    pool: &RecordSet,
    indices: &[usize],
    check: &HistoryCheck,
    cfg: &HistoryConfig,
) -> Result<(Vec<Option<f64>>, Vec<Option<bool>>)> {
    let m = pool.config.n_draws_m;
    let grid = cfg.grid();
    let mut values = Vec::with_capacity(grid.len());
    let mut rejects = Vec::with_capacity(grid.len());

    // Prefix data gathered once; each grid point reads a slice.
    let quantity_col = match check {
        HistoryCheck::Sbc { quantity } => Some(pool.quantity_position(quantity)?),
        _ => None,
    };
    let mut ranks: Vec<u32> = Vec::with_capacity(cfg.history_length);
    let mut probs: Vec<f64> = Vec::with_capacity(cfg.history_length);
    let mut outcomes: Vec<f64> = Vec::with_capacity(cfg.history_length);
    for &idx in indices {
        let r = &pool.records[idx];
        if let Some(col) = quantity_col {
            ranks.push(r.ranks[col]);
        } else {
            probs.push(r.p_m1);
            outcomes.push(f64::from(r.true_index));
        }
    }

    for &n in &grid {
        let (value, reject) = match check {
            HistoryCheck::Sbc { .. } => {
                if n < 2 {
                    (None, None)
                } else {
                    let table = null_table(n, m, crate::stats::DEFAULT_ALPHA)?;
                    let ratio = log_gamma_ratio(&ranks[..n], m, &table)?;
                    (Some(ratio), Some(ratio < 0.0))
                }
            }
            HistoryCheck::Miscalibration => {
                if n < 2 {
                    (None, None)
                } else {
                    let report = miscalibration_test(
                        &probs[..n],
                        &outcomes[..n],
                        cfg.bootstrap_b,
                        0x6d63_u64 ^ (n as u64),
                    )?;
                    (
                        Some(report.threshold_or_pvalue),
                        Some(report.decision.is_reject()),
                    )
                }
            }
            HistoryCheck::Dap => {
                if n < 2 {
                    (None, None)
                } else {
                    let result = if pool.estimated_prior {
                        dap_welch(&probs[..n], &outcomes[..n])
                    } else {
                        dap_t_test(&probs[..n], pool.prior_m1)
                    };
                    match result {
                        Ok(report) => (
                            Some(report.threshold_or_pvalue),
                            Some(report.decision.is_reject()),
                        ),
                        Err(Error::DegenerateInput) => (None, None),
                        Err(e) => return Err(e),
                    }
                }
            }
        };
        values.push(value);
        rejects.push(reject);
    }
    Ok((values, rejects))
}

/// All histories of one check, evaluated in parallel. Null tables for every
/// grid size are precomputed up front so histories share them.
pub fn history_curve(
    pool: &RecordSet,
    histories: &[Vec<usize>],
    check: &HistoryCheck,
    cfg: &HistoryConfig,
) -> Result<HistoryCurve> {
    if matches!(check, HistoryCheck::Sbc { .. }) {
        let sizes: Vec<usize> = cfg.grid().into_iter().filter(|&n| n >= 2).collect();
        precompute_null_tables(&sizes, pool.config.n_draws_m, crate::stats::DEFAULT_ALPHA)?;
    }
    let rows: Vec<(Vec<Option<f64>>, Vec<Option<bool>>)> = histories
        .par_iter()
        .map(|indices| evaluate_history(pool, indices, check, cfg))
        .collect::<Result<_>>()?;
    let (values, rejects) = rows.into_iter().unzip();
    Ok(HistoryCurve {
        check_name: check.name(),
        grid: cfg.grid(),
        values,
        rejects,
    })
}

/// Fraction of histories rejecting at each grid point, and the first grid
/// point reaching 80% power (if any). Missing evaluations count as
/// non-rejections.
pub fn power_curve(curve: &HistoryCurve) -> Result<(Vec<f64>, Option<usize>)> {
    let n_histories = curve.rejects.len();
    if n_histories < 20 {
        return Err(Error::NotEnoughData {
            need: 20,
            got: n_histories,
        });
    }
    let mut power = Vec::with_capacity(curve.grid.len());
    for j in 0..curve.grid.len() {
        let rejecting = curve
            .rejects
            .iter()
            .filter(|row| row[j] == Some(true))
            .count();
        power.push(rejecting as f64 / n_histories as f64);
    }
    let first_80 = power
        .iter()
        .position(|&p| p >= 0.8)
        .map(|j| curve.grid[j]);
    Ok((power, first_80))
}

/// One cell of the false-positive / power table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FpPowerCell {
    pub scenario: String,
    pub n: usize,
    pub test: String,
    pub rate: f64,
    pub se: f64,
}

/// Monte-Carlo Gaffke replicates used inside the table.
pub const TABLE_GAFFKE_MC: usize = 2000;

/// Rejection-rate table over fresh simulation runs: for each scenario and
/// sample size, the one-sample t-test, the Gaffke test, and the Bayesian
/// t-test at the three conventional prior scales (decision rule: Bayes
/// factor above 10 in favor of the alternative).
pub fn fp_power_table(
    scenarios: &[(String, BmaProblem)],
    sample_sizes: &[usize],
    n_runs: usize,
    seed: u64,
) -> Result<Vec<FpPowerCell>> {
    let jzs_scales = [1.0 / 12.0, std::f64::consts::FRAC_1_SQRT_2, 1.5];
    let mut cells = Vec::new();
    for (cell_id, (label, problem)) in scenarios.iter().enumerate() {
        for (size_id, &n) in sample_sizes.iter().enumerate() {
            let stream_base =
                (cell_id as u64) << 40 | (size_id as u64) << 32;
            let counts: Vec<[u64; 5]> = (0..n_runs as u64)
                .into_par_iter()
                .map(|run| {
                    let mut rng = stream_rng(seed, stream_base | run);
                    let (probs, _) =
                        simulate_probs(problem, n, &mut rng).expect("scenario simulates");
                    let prior = problem.prior_m1().prob();
                    let mut row = [0u64; 5];
                    if let Ok(report) = dap_t_test(&probs, prior) {
                        row[0] = u64::from(report.decision.is_reject());
                    }
                    if let Ok(report) =
                        gaffke_test(&probs, prior, TABLE_GAFFKE_MC, seed ^ (stream_base | run))
                    {
                        row[1] = u64::from(report.decision.is_reject());
                    }
                    let shifted: Vec<f64> = probs.iter().map(|&p| p - prior).collect();
                    for (k, &r) in jzs_scales.iter().enumerate() {
                        if let Ok(log_bf) = jzs_ttest_bf(&shifted, r) {
                            row[2 + k] = u64::from(log_bf > JZS_DECISION_LOG_BF);
                        }
                    }
                    row
                })
                .collect();
            let mut totals = [0u64; 5];
            for row in counts {
                for (t, r) in totals.iter_mut().zip(row) {
                    *t += r;
                }
            }
            let test_names = ["t", "gaffke", "jzs:1/12", "jzs:sqrt(2)/2", "jzs:3/2"];
            for (name, total) in test_names.iter().zip(totals) {
                let rate = total as f64 / n_runs as f64;
                cells.push(FpPowerCell {
                    scenario: label.clone(),
                    n,
                    test: name.to_string(),
                    rate,
                    se: (rate * (1.0 - rate) / n_runs as f64).sqrt(),
                });
            }
        }
    }
    Ok(cells)
}

/// CSV for the table, one row per (scenario, n, test).
pub fn fp_power_table_csv(cells: &[FpPowerCell]) -> String {
    let mut out = String::from("scenario,n,test,rate,se\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.scenario, c.n, c.test, c.rate, c.se
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_sbc, EngineConfig};
    use crate::zoo::BinaryToy;

    fn small_pool() -> RecordSet {
        let problem = BinaryToy::correct().problem().unwrap();
        run_sbc(&problem, &EngineConfig::new(300, 17).with_draws(99)).unwrap()
    }

    #[test]
    fn grid_rules() {
        let cfg = HistoryConfig::new(200);
        assert_eq!(cfg.step(), 1);
        assert_eq!(cfg.grid(), (1..=200).collect::<Vec<_>>());
        let cfg = HistoryConfig::new(5000);
        assert!(cfg.step() <= 10);
        let grid = cfg.grid();
        assert_eq!(*grid.last().unwrap(), 5000);
        for w in grid.windows(2) {
            assert!(w[1] > w[0] && w[1] - w[0] <= 10);
        }
        let cfg = HistoryConfig::new(1000);
        assert!(cfg.step() <= 10 && cfg.step() > 1);
    }

    #[test]
    fn histories_sample_without_replacement() {
        let pool = small_pool();
        let mut cfg = HistoryConfig::new(30);
        cfg.n_histories = 5;
        let histories = build_histories(&pool, &cfg, 3).unwrap();
        assert_eq!(histories.len(), 5);
        for h in &histories {
            assert_eq!(h.len(), 30);
            let mut sorted = h.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 30, "no repeats within a history");
        }
        let again = build_histories(&pool, &cfg, 3).unwrap();
        assert_eq!(histories, again);
        let different = build_histories(&pool, &cfg, 4).unwrap();
        assert_ne!(histories, different);
    }

    #[test]
    fn full_length_history_is_a_permutation() {
        let pool = small_pool();
        let mut cfg = HistoryConfig::new(300);
        cfg.n_histories = 1;
        cfg.pool_multiplier = 1;
        let histories = build_histories(&pool, &cfg, 0).unwrap();
        let mut h = histories[0].clone();
        h.sort_unstable();
        assert_eq!(h, (0..300).collect::<Vec<_>>());
    }

    #[test]
    fn pool_too_small_is_an_error() {
        let pool = small_pool();
        let cfg = HistoryConfig::new(31); // needs 310 > 300
        assert!(matches!(
            build_histories(&pool, &cfg, 0),
            Err(Error::PoolTooSmall { .. })
        ));
    }

    #[test]
    fn evaluate_history_uses_exact_prefixes() {
        let pool = small_pool();
        let mut cfg = HistoryConfig::new(25);
        cfg.n_histories = 2;
        let histories = build_histories(&pool, &cfg, 9).unwrap();
        let check = HistoryCheck::Dap;
        let (values, _) = evaluate_history(&pool, &histories[0], &check, &cfg).unwrap();
        // Recompute the prefix of length 10 by hand.
        let probs: Vec<f64> = histories[0][..10]
            .iter()
            .map(|&i| pool.records[i].p_m1)
            .collect();
        let want = dap_t_test(&probs, pool.prior_m1).unwrap().threshold_or_pvalue;
        assert_eq!(values[9], Some(want));
        // Grid point below the check minimum is missing.
        assert_eq!(values[0], None);
    }

    #[test]
    fn power_curve_trivial_cases() {
        let curve = HistoryCurve {
            check_name: "x".into(),
            grid: vec![5, 10],
            values: vec![vec![Some(0.0), Some(0.0)]; 25],
            rejects: vec![vec![Some(true), Some(true)]; 25],
        };
        let (power, first) = power_curve(&curve).unwrap();
        assert_eq!(power, vec![1.0, 1.0]);
        assert_eq!(first, Some(5));
        let never = HistoryCurve {
            rejects: vec![vec![Some(false), None]; 25],
            ..curve.clone()
        };
        let (power, first) = power_curve(&never).unwrap();
        assert_eq!(power, vec![0.0, 0.0]);
        assert_eq!(first, None);
        let short = HistoryCurve {
            rejects: vec![vec![Some(true)]; 3],
            grid: vec![5],
            values: vec![vec![Some(0.0)]; 3],
            check_name: "x".into(),
        };
        assert!(power_curve(&short).is_err());
    }

    #[test]
    fn history_checks_parse() {
        assert_eq!(
            "sbc:var_y".parse::<HistoryCheck>().unwrap(),
            HistoryCheck::Sbc {
                quantity: "var_y".into()
            }
        );
        assert_eq!(
            "miscalibration".parse::<HistoryCheck>().unwrap(),
            HistoryCheck::Miscalibration
        );
        assert!("nope".parse::<HistoryCheck>().is_err());
    }
}
