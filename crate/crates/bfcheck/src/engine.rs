//! End-to-end simulation: prior-predictive draws with rejection, posterior
//! model probabilities, rank extraction with uniform tie-breaking, derived
//! quantity ranking over mixed BMA draws, and the posterior-stage prior
//! adjustment.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bma::{
    compose_bma_draws, posterior_model_prob, prior_predictive_draw, BmaProblem, Dataset,
    ModelProb, TestQuantity,
};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng};
use crate::zoo::{nested_normal_log_marginals, nested_normal_quantities, NestedNormal};
use crate::bma::{BfComputer, Submodel};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// Default number of posterior draws ranked against per simulation; 999
/// draws give 1,000 equally likely ranks.
pub const DEFAULT_N_DRAWS: usize = 999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub n_sims: usize,
    /// Posterior draws per simulation (M).
    pub n_draws_m: usize,
    pub master_seed: u64,
    /// Quantity names to rank; empty means every quantity the problem has.
    pub quantities: Vec<String>,
}

impl EngineConfig {
    pub fn new(n_sims: usize, master_seed: u64) -> Self {
        EngineConfig {
            n_sims,
            n_draws_m: DEFAULT_N_DRAWS,
            master_seed,
            quantities: Vec::new(),
        }
    }

    pub fn with_draws(mut self, m: usize) -> Self {
        self.n_draws_m = m;
        self
    }

    pub fn with_quantities(mut self, names: Vec<String>) -> Self {
        self.quantities = names;
        self
    }
}

/// One completed simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub sim_id: u64,
    pub true_index: u8,
    pub p_m1: f64,
    /// Ranks, parallel to the record set's quantity names.
    pub ranks: Vec<u32>,
    pub accept_attempts: u32,
    pub data_mean: f64,
    pub data_var: f64,
    pub data_len: usize,
}

/// Ordered simulation results plus the configuration that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordSet {
    pub problem_id: String,
    pub config: EngineConfig,
    pub quantity_names: Vec<String>,
    pub prior_m1: f64,
    /// True when the problem carries an accept rule, so the implied model
    /// prior must be estimated from the simulations themselves.
    pub estimated_prior: bool,
    pub records: Vec<SimulationRecord>,
    /// Simulations whose candidate Bayes factor was not finite; surfaced
    /// rather than resampled so they cannot bias the accept distribution.
    pub failed_sims: Vec<u64>,
}

impl RecordSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn quantity_position(&self, name: &str) -> Result<usize> {
        self.quantity_names
            .iter()
            .position(|q| q == name)
            .ok_or_else(|| {
                Error::UnknownQuantity(name.to_string(), self.quantity_names.join(", "))
            })
    }

    /// Ranks of one quantity across all records.
    pub fn ranks_of(&self, name: &str) -> Result<Vec<u32>> {
        let k = self.quantity_position(name)?;
        Ok(self.records.iter().map(|r| r.ranks[k]).collect())
    }

    /// Posterior model probabilities, in simulation order.
    pub fn probs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.p_m1).collect()
    }

    /// True model indices as 0/1 outcomes, in simulation order.
    pub fn outcomes(&self) -> Vec<f64> {
        self.records.iter().map(|r| f64::from(r.true_index)).collect()
    }

    /// CSV with a fixed column order: sim_id, true_index, p_m1,
    /// rank_<quantity>..., accept_attempts, then the dataset summaries.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sim_id,true_index,p_m1");
        for q in &self.quantity_names {
            out.push_str(",rank_");
            out.push_str(q);
        }
        out.push_str(",accept_attempts,data_mean,data_var,data_len\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{}", r.sim_id, r.true_index, r.p_m1));
            for rank in &r.ranks {
                out.push_str(&format!(",{rank}"));
            }
            out.push_str(&format!(
                ",{},{},{},{}\n",
                r.accept_attempts, r.data_mean, r.data_var, r.data_len
            ));
        }
        out
    }

    /// Parses records written by [`RecordSet::to_csv`]; quantity names are
    /// recovered from the rank_* columns.
    pub fn from_csv(
        text: &str,
        config: EngineConfig,
        problem_id: &str,
        prior_m1: f64,
        estimated_prior: bool,
    ) -> Result<RecordSet> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::EmptyDataset)?;
        let cols: Vec<&str> = header.split(',').collect();
        let quantity_names: Vec<String> = cols
            .iter()
            .filter_map(|c| c.strip_prefix("rank_").map(str::to_string))
            .collect();
        let n_q = quantity_names.len();
        let mut records = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 + n_q {
                return Err(Error::Invalid(format!(
                    "malformed record row: expected {} fields, got {}",
                    7 + n_q,
                    f.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::Invalid(format!("malformed number '{s}' in records")))
            };
            records.push(SimulationRecord {
                sim_id: parse(f[0])? as u64,
                true_index: parse(f[1])? as u8,
                p_m1: parse(f[2])?,
                ranks: f[3..3 + n_q]
                    .iter()
                    .map(|s| parse(s).map(|v| v as u32))
                    .collect::<Result<Vec<u32>>>()?,
                accept_attempts: parse(f[3 + n_q])? as u32,
                data_mean: parse(f[4 + n_q])?,
                data_var: parse(f[5 + n_q])?,
                data_len: parse(f[6 + n_q])? as usize,
            });
        }
        Ok(RecordSet {
            problem_id: problem_id.to_string(),
            config,
            quantity_names,
            prior_m1,
            estimated_prior,
            records,
            failed_sims: Vec::new(),
        })
    }

    /// JSON envelope carrying the configuration and provenance.
    pub fn run_envelope(&self) -> serde_json::Value {
        json!({
            "schema": "bfcheck/run/v1",
            "problem_id": self.problem_id,
            "config": self.config,
            "quantities": self.quantity_names,
            "prior_m1": self.prior_m1,
            "estimated_prior": self.estimated_prior,
            "n_records": self.records.len(),
            "failed_sims": self.failed_sims,
        })
    }
}

/// Rank of `x` within `draws` with uniform tie-breaking: with l draws below
/// x and e draws equal to it, the rank is l + uniform{0..e}. -inf compares
/// below every finite value and ties with -inf, which realizes the
/// missing-parameter convention.
pub fn rank_from_draws(x: f64, draws: &[f64], rng: &mut SimRng) -> u32 {
    debug_assert!(!draws.is_empty(), "rank needs at least one draw");
    debug_assert!(!x.is_nan());
    let mut less = 0u32;
    let mut equal = 0u32;
    for &d in draws {
        if d < x {
            less += 1;
        } else if d == x {
            equal += 1;
        }
    }
    less + rng.random_range(0..=equal)
}

fn resolve_quantities<'p>(
    problem: &'p BmaProblem,
    config: &EngineConfig,
) -> Result<Vec<&'p TestQuantity>> {
    if config.quantities.is_empty() {
        return Ok(problem.quantities().iter().collect());
    }
    config
        .quantities
        .iter()
        .map(|name| {
            problem
                .quantities()
                .iter()
                .find(|q| q.name() == name)
                .ok_or_else(|| {
                    let known: Vec<&str> =
                        problem.quantities().iter().map(|q| q.name()).collect();
                    Error::UnknownQuantity(name.clone(), known.join(", "))
                })
        })
        .collect()
}

fn simulate_one(
    problem: &BmaProblem,
    quantities: &[&TestQuantity],
    m: usize,
    sim_id: u64,
    rng: &mut SimRng,
) -> Result<SimulationRecord> {
    let draw = prior_predictive_draw(problem, problem.data_size(), rng)?;
    let log_bf = problem.candidate_bf().log_bf10(&draw.data, rng)?;
    let p = posterior_model_prob(log_bf, problem.prior_m1())?;

    // Posterior draw pools for both submodels, then M mixed BMA draws whose
    // Bernoulli indices double as the model-index posterior sample.
    let pool0 = problem.model(0).posterior_draws(&draw.data, m, rng);
    let pool1 = problem.model(1).posterior_draws(&draw.data, m, rng);
    let pairs = compose_bma_draws(p, &pool0, &pool1, m, rng)?;

    let mut ranks = Vec::with_capacity(quantities.len());
    let mut values = Vec::with_capacity(m);
    for q in quantities {
        values.clear();
        // Parameter-free draws repeat the same (index, data) evaluation M
        // times; cache the two possible values.
        let mut missing_cache: [Option<f64>; 2] = [None, None];
        for &(index, theta) in &pairs {
            let v = match theta {
                Some(t) => q.eval(index, Some(t), &draw.data),
                None => *missing_cache[index]
                    .get_or_insert_with(|| q.eval(index, None, &draw.data)),
            };
            values.push(v);
        }
        let x = q.eval(draw.index, draw.theta, &draw.data);
        ranks.push(rank_from_draws(x, &values, rng));
    }

    Ok(SimulationRecord {
        sim_id,
        true_index: draw.index as u8,
        p_m1: p.prob(),
        ranks,
        accept_attempts: draw.attempts,
        data_mean: draw.data.mean(),
        data_var: draw.data.sample_variance(),
        data_len: draw.data.len(),
    })
}

/// Runs one simulation on an explicit stream, mainly useful for tests; the
/// stream for simulation `sim_id` is derived from (master_seed, sim_id).
pub fn run_single_simulation(
    problem: &BmaProblem,
    config: &EngineConfig,
    sim_id: u64,
    rng: &mut SimRng,
) -> Result<SimulationRecord> {
    let quantities = resolve_quantities(problem, config)?;
    simulate_one(problem, &quantities, config.n_draws_m, sim_id, rng)
}

/// Runs the full simulation study. Simulations execute in parallel on
/// independent counter-derived streams, so the result is a pure function of
/// (problem, config) regardless of thread count.
pub fn run_sbc(problem: &BmaProblem, config: &EngineConfig) -> Result<RecordSet> {
    if config.n_sims == 0 || config.n_draws_m == 0 {
        return Err(Error::Invalid(
            "n_sims and n_draws_m must both be at least 1".into(),
        ));
    }
    let quantities = resolve_quantities(problem, config)?;
    let results: Vec<(u64, Result<SimulationRecord>)> = (1..=config.n_sims as u64)
        .into_par_iter()
        .map(|sim_id| {
            let mut rng = stream_rng(config.master_seed, sim_id);
            (
                sim_id,
                simulate_one(problem, &quantities, config.n_draws_m, sim_id, &mut rng),
            )
        })
        .collect();

    let mut records = Vec::with_capacity(config.n_sims);
    let mut failed_sims = Vec::new();
    let mut first_err = None;
    for (sim_id, res) in results {
        match res {
            Ok(r) => records.push(r),
            Err(Error::InvalidBayesFactor(_)) | Err(Error::DatasetTooShort) => {
                failed_sims.push(sim_id)
            }
            Err(e) => first_err = first_err.or(Some(e)),
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    if failed_sims.len() * 100 > config.n_sims {
        return Err(Error::TooManyFailures {
            failed: failed_sims.len(),
            total: config.n_sims,
        });
    }
    Ok(RecordSet {
        problem_id: problem.id().to_string(),
        config: config.clone(),
        quantity_names: quantities.iter().map(|q| q.name().to_string()).collect(),
        prior_m1: problem.prior_m1().prob(),
        estimated_prior: problem.has_accept(),
        records,
        failed_sims,
    })
}

/// Lightweight simulation for data-averaged posterior tests: just the
/// posterior model probabilities and true indices, no ranking.
pub fn simulate_probs(
    problem: &BmaProblem,
    n_sims: usize,
    rng: &mut SimRng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut probs = Vec::with_capacity(n_sims);
    let mut outcomes = Vec::with_capacity(n_sims);
    for _ in 0..n_sims {
        let draw = prior_predictive_draw(problem, problem.data_size(), rng)?;
        let log_bf = problem.candidate_bf().log_bf10(&draw.data, rng)?;
        let p = posterior_model_prob(log_bf, problem.prior_m1())?;
        probs.push(p.prob());
        outcomes.push(draw.index as f64);
    }
    Ok((probs, outcomes))
}

// ---------------------------------------------------------------------------
// Posterior-stage runs

/// The model prior that makes the implied posterior model probability at the
/// conditioning dataset exactly 1/2: Pr(M1) = inv_logit(log m0(y1) - log
/// m1(y1)).
pub fn posterior_sbc_prior(log_marg0_y1: f64, log_marg1_y1: f64) -> Result<ModelProb> {
    if !log_marg0_y1.is_finite() || !log_marg1_y1.is_finite() {
        return Err(Error::Invalid(
            "posterior-stage prior needs finite log marginals".into(),
        ));
    }
    Ok(ModelProb::from_log_odds(log_marg0_y1 - log_marg1_y1))
}

/// Builds the conditioned nested-normal problem: the prior of mu becomes its
/// posterior given `y1` (a point mass at 0 under M0 stays parameter-free),
/// the model prior is adjusted so Pr(M1 | y1) = 1/2, and Bayes factors are
/// computed on the concatenated (y1, y2).
///
/// With `mismatched_prior`, mu is simulated from the original unconditioned
/// prior while the rest of the pipeline still assumes the conditioned model;
/// this reproduces the simulator/model mismatch failure mode.
pub fn posterior_sbc_problem(
    spec: NestedNormal,
    y1: &Dataset,
    mismatched_prior: bool,
) -> Result<BmaProblem> {
    if y1.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (log_m0_y1, log_m1_y1) = nested_normal_log_marginals(y1, &spec)?;
    let prior = posterior_sbc_prior(log_m0_y1, log_m1_y1)?;
    let log_bf_y1 = log_m1_y1 - log_m0_y1;
    let (cond_mean, cond_sd) = spec.posterior_of_mu(y1);

    let m0 = {
        let sd = spec.sigma_obs;
        Submodel::parameter_free(move |size, rng: &mut SimRng| {
            Dataset::new(
                (0..size)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        sd * z
                    })
                    .collect(),
            )
        })
    };
    let y1_owned = y1.clone();
    let m1 = {
        let s = spec;
        let y1_post = y1_owned.clone();
        Submodel::with_parameter(
            move |rng| {
                let z: f64 = StandardNormal.sample(rng);
                if mismatched_prior {
                    s.prior_sd_mu * z
                } else {
                    cond_mean + cond_sd * z
                }
            },
            move |mu, size, rng| {
                let normal = Normal::new(mu, s.sigma_obs).expect("positive sd");
                Dataset::new((0..size).map(|_| normal.sample(rng)).collect())
            },
            move |y2, m, rng| {
                let mut all = y1_post.values.clone();
                all.extend_from_slice(&y2.values);
                let (mean, sd) = s.posterior_of_mu(&Dataset::new(all));
                let normal = Normal::new(mean, sd).expect("positive sd");
                (0..m).map(|_| normal.sample(rng)).collect()
            },
        )
    };

    // Conditioned-model Bayes factor: log BF(y1 + y2) - log BF(y1).
    let cond_bf = move |y1_fixed: Dataset| {
        BfComputer::from_fn(move |y2| {
            let mut all = y1_fixed.values.clone();
            all.extend_from_slice(&y2.values);
            let (m0, m1) = nested_normal_log_marginals(&Dataset::new(all), &spec)?;
            Ok((m1 - m0) - log_bf_y1)
        })
    };
    let true_bf = cond_bf(y1_owned.clone());
    let candidate = cond_bf(y1_owned);

    let id = if mismatched_prior {
        "nested-normal-posterior-mismatched"
    } else {
        "nested-normal-posterior"
    };
    Ok(BmaProblem::new(id, m0, m1, 0.5, true_bf, candidate, spec.n_obs)?
        .with_prior(prior)
        .with_quantities(nested_normal_quantities(spec)))
}

/// Runs the posterior-stage study for the nested-normal pair.
pub fn run_posterior_sbc(
    spec: NestedNormal,
    y1: &Dataset,
    config: &EngineConfig,
) -> Result<RecordSet> {
    let problem = posterior_sbc_problem(spec, y1, false)?;
    run_sbc(&problem, config)
}

/// Human-readable per-quantity rank histogram, handy for debugging.
pub fn rank_histogram(ranks: &[u32], m: usize, bins: usize) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for &r in ranks {
        let bin = (r as usize * bins) / (m + 1);
        *hist.entry(bin).or_insert(0) += 1;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{BinaryToy, NestedNormal};
    use approx::assert_relative_eq;

    #[test]
    fn rank_from_draws_deterministic_cases() {
        let mut rng = stream_rng(0, 0);
        assert_eq!(rank_from_draws(0.5, &[0.1, 0.2, 0.9], &mut rng), 2);
        assert_eq!(rank_from_draws(2.0, &[0.1, 0.2, 0.9], &mut rng), 3);
        assert_eq!(rank_from_draws(0.0, &[0.1, 0.2, 0.9], &mut rng), 0);
    }

    #[test]
    fn rank_from_draws_breaks_ties_uniformly() {
        let mut rng = stream_rng(1, 0);
        let draws = [1.0, 1.0, 1.0];
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[rank_from_draws(1.0, &draws, &mut rng) as usize] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() < 0.01, "rank {k} frequency {freq}");
        }
    }

    #[test]
    fn rank_from_draws_full_tie_on_missing_parameter() {
        let mut rng = stream_rng(2, 0);
        let draws = vec![f64::NEG_INFINITY; 9];
        let mut seen = [false; 10];
        for _ in 0..1000 {
            seen[rank_from_draws(f64::NEG_INFINITY, &draws, &mut rng) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s), "all ranks 0..=9 reachable");
        // -inf sits below every finite value.
        assert_eq!(rank_from_draws(f64::NEG_INFINITY, &[0.0, 1.0], &mut rng), 0);
    }

    #[test]
    fn record_set_is_deterministic_and_dense() {
        let problem = BinaryToy::correct().problem().unwrap();
        let config = EngineConfig::new(50, 99).with_draws(99);
        let a = run_sbc(&problem, &config).unwrap();
        let b = run_sbc(&problem, &config).unwrap();
        assert_eq!(a.records, b.records);
        for (k, r) in a.records.iter().enumerate() {
            assert_eq!(r.sim_id, k as u64 + 1);
            assert!(r.p_m1 > 0.0 && r.p_m1 < 1.0);
            for &rank in &r.ranks {
                assert!(rank <= 99);
            }
        }
        assert_eq!(a.quantity_names, vec!["model_index", "log_lik"]);
        assert_eq!(a.len(), 50);
    }

    #[test]
    fn single_simulation_matches_batch() {
        let problem = BinaryToy::correct().problem().unwrap();
        let config = EngineConfig::new(10, 123).with_draws(50);
        let batch = run_sbc(&problem, &config).unwrap();
        let mut rng = stream_rng(123, 4);
        let single = run_single_simulation(&problem, &config, 4, &mut rng).unwrap();
        assert_eq!(batch.records[3], single);
    }

    #[test]
    fn constant_candidate_gives_half_probability() {
        let problem = BinaryToy::correct().problem().unwrap();
        let constant = crate::fault::apply_fault(
            BfComputer::from_fn(|_| Ok(0.0)),
            crate::fault::FaultSpec::ConstantEven,
        );
        let problem = problem.with_candidate(constant);
        let config = EngineConfig::new(20, 7).with_draws(20);
        let set = run_sbc(&problem, &config).unwrap();
        assert!(set.records.iter().all(|r| r.p_m1 == 0.5));
    }

    #[test]
    fn csv_round_trips() {
        let problem = BinaryToy::correct().problem().unwrap();
        let config = EngineConfig::new(8, 5).with_draws(10);
        let set = run_sbc(&problem, &config).unwrap();
        let csv = set.to_csv();
        let parsed = RecordSet::from_csv(&csv, config, "binary-toy", 0.5, false).unwrap();
        assert_eq!(parsed.records, set.records);
        assert_eq!(parsed.quantity_names, set.quantity_names);
        let envelope = set.run_envelope();
        assert_eq!(envelope["schema"], "bfcheck/run/v1");
    }

    #[test]
    fn quantity_filter_respects_order_and_rejects_unknown() {
        let problem = BinaryToy::correct().problem().unwrap();
        let config = EngineConfig::new(3, 5)
            .with_draws(10)
            .with_quantities(vec!["log_lik".into()]);
        let set = run_sbc(&problem, &config).unwrap();
        assert_eq!(set.quantity_names, vec!["log_lik"]);
        let bad = EngineConfig::new(3, 5).with_quantities(vec!["nope".into()]);
        assert!(run_sbc(&problem, &bad).is_err());
    }

    #[test]
    fn model_index_ranks_are_uniform_for_correct_candidate() {
        // Chi-square uniformity at 1% on binned ranks, 2,000 simulations.
        let problem = BinaryToy::correct().problem().unwrap();
        let config = EngineConfig::new(2000, 31).with_draws(999);
        let set = run_sbc(&problem, &config).unwrap();
        let ranks = set.ranks_of("model_index").unwrap();
        let bins = 20usize;
        let mut counts = vec![0f64; bins];
        for r in ranks {
            counts[(r as usize * bins) / 1000] += 1.0;
        }
        let expected = 2000.0 / bins as f64;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // 99th percentile of chi-square with 19 degrees of freedom.
        assert!(chi2 < 36.19, "chi2 {chi2}");
    }

    #[test]
    fn posterior_prior_adjustment_is_exact() {
        assert_relative_eq!(
            posterior_sbc_prior(0.0, 0.0).unwrap().prob(),
            0.5,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            posterior_sbc_prior(4f64.ln(), 0.0).unwrap().prob(),
            0.8,
            max_relative = 1e-12
        );
        // Defining property: feeding the y1 Bayes factor back in lands on
        // one half exactly.
        let spec = NestedNormal::default();
        let y1 = Dataset::new(vec![0.0, 0.0]);
        let (m0, m1) = nested_normal_log_marginals(&y1, &spec).unwrap();
        let prior = posterior_sbc_prior(m0, m1).unwrap();
        let p = posterior_model_prob(m1 - m0, prior).unwrap();
        assert_relative_eq!(p.prob(), 0.5, epsilon = 1e-12);
        assert!(posterior_sbc_prior(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn posterior_stage_problem_wires_the_conditioned_model() {
        let spec = NestedNormal::default();
        let y1 = Dataset::new(vec![0.0]);
        let problem = posterior_sbc_problem(spec, &y1, false).unwrap();
        // Implied Pr(M1 | y1) is exactly one half.
        let mut rng = stream_rng(0, 1);
        let bf_y1_cond = problem
            .true_bf()
            .log_bf10(&Dataset::new(vec![]), &mut rng);
        assert!(bf_y1_cond.is_err()); // empty y2 is rejected
        // The conditioned BF at y2 matches the marginal-ratio identity.
        let y2 = Dataset::new(vec![0.3, -0.2]);
        let got = problem.true_bf().log_bf10(&y2, &mut rng).unwrap();
        let all = Dataset::new(vec![0.0, 0.3, -0.2]);
        let (m0_all, m1_all) = nested_normal_log_marginals(&all, &spec).unwrap();
        let (m0_y1, m1_y1) = nested_normal_log_marginals(&y1, &spec).unwrap();
        assert_relative_eq!(
            got,
            (m1_all - m0_all) - (m1_y1 - m0_y1),
            epsilon = 1e-12
        );
        let p = posterior_model_prob(m1_y1 - m0_y1, problem.prior_m1()).unwrap();
        assert_relative_eq!(p.prob(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn failed_simulations_are_surfaced_not_dropped() {
        let problem = BinaryToy::correct().problem().unwrap();
        // Candidate that fails on y = 1.
        let flaky = BfComputer::from_fn(|y| {
            if y.values[0] > 0.5 {
                Ok(f64::NAN)
            } else {
                Ok(0.0)
            }
        });
        let problem = problem.with_candidate(flaky);
        let config = EngineConfig::new(100, 3).with_draws(10);
        match run_sbc(&problem, &config) {
            Err(Error::TooManyFailures { failed, total }) => {
                assert_eq!(total, 100);
                assert!(failed > 10);
            }
            other => panic!("expected TooManyFailures, got {other:?}"),
        }
    }
}
