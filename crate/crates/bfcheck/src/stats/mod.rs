//! Check statistics: rank-uniformity (gamma statistic with Monte-Carlo null
//! quantiles), binary prediction calibration (isotonic recalibration with a
//! bootstrap null), data-averaged posterior tests, and the mean-Bayes-factor
//! summary.

mod calibration;
mod dap;
mod gamma;

pub use calibration::{miscalibration_mcb, miscalibration_test, pav_recalibrate};
pub use dap::{
    dap_t_test, dap_welch, gaffke_lower_bound, gaffke_test, good_check_summary, jzs_log_bf_from_t,
    jzs_ttest_bf, JZS_DECISION_LOG_BF,
};
pub use gamma::{
    ecdf_band, gamma_null_quantile, gamma_statistic, log_gamma_ratio, null_table,
    precompute_null_tables, sbc_sensitivity, GammaNullTable, DEFAULT_NULL_MC, NULL_TABLE_SEED,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Default significance level for every check.
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Pass,
    Reject,
}

impl Decision {
    pub fn is_reject(self) -> bool {
        matches!(self, Decision::Reject)
    }
}

/// One statistical check's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub statistic: f64,
    /// A p-value for p-value based tests, otherwise the configured level.
    pub threshold_or_pvalue: f64,
    pub decision: Decision,
    pub n_sims_used: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, f64>,
}

impl CheckReport {
    pub fn new(
        check_name: impl Into<String>,
        statistic: f64,
        threshold_or_pvalue: f64,
        decision: Decision,
        n_sims_used: usize,
    ) -> Self {
        CheckReport {
            check_name: check_name.into(),
            statistic,
            threshold_or_pvalue,
            decision,
            n_sims_used,
            extras: BTreeMap::new(),
        }
    }

    pub fn with_extra(mut self, key: &str, value: f64) -> Self {
        self.extras.insert(key.to_string(), value);
        self
    }
}

/// Formats a value with four significant digits for human-readable tables.
pub fn sig4(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (3 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Sample mean and variance (n-1 denominator).
pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() < 2 {
        0.0
    } else {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    };
    (mean, var)
}
