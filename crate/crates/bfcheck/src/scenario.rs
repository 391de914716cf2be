//! Scenario registry: maps string identifiers (zoo model + optional fault +
//! optional accept rule) to fully wired problems. This is the surface the
//! CLI, the table builder, and the acceptance suite share.

use std::str::FromStr;

use crate::bma::{BmaProblem, Dataset};
use crate::engine::posterior_sbc_problem;
use crate::error::{Error, Result};
use crate::fault::{apply_fault, FaultSpec};
use crate::zoo::{BinaryToy, GoodPair, NestedNormal, PoissonNbToy};

pub const SCENARIOS: &[&str] = &[
    "binary-toy",
    "poisson-nb",
    "good-cauchy",
    "good-normal",
    "good-normal-mu1",
    "nested-normal",
    "nested-normal-posterior",
    "nested-normal-posterior-mismatched",
];

/// Dataset-level accept rules addressable from the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AcceptRule {
    /// Accept when lo <= mean(y) <= hi.
    MeanRange { lo: f64, hi: f64 },
}

impl FromStr for AcceptRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() == 3 && parts[0] == "mean-range" {
            let lo = parts[1]
                .parse()
                .map_err(|_| Error::UnknownAcceptRule(s.to_string()))?;
            let hi = parts[2]
                .parse()
                .map_err(|_| Error::UnknownAcceptRule(s.to_string()))?;
            return Ok(AcceptRule::MeanRange { lo, hi });
        }
        Err(Error::UnknownAcceptRule(s.to_string()))
    }
}

/// Tunable model parameters with sensible defaults for every scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    /// Candidate posterior probabilities for the binary pair.
    pub b0: f64,
    pub b1: f64,
    /// Known mean of the alternative null model in the Good normal pair.
    pub good_mu: f64,
    /// Observations per dataset where the model allows a choice.
    pub n_obs: Option<usize>,
    /// Conditioning dataset for the posterior-stage scenarios.
    pub y1: Vec<f64>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            b0: 0.2,
            b1: 0.8,
            good_mu: 2.0,
            n_obs: None,
            y1: vec![0.0],
        }
    }
}

/// Builds the problem for `name`, then wires in the fault and accept rule.
pub fn build_scenario(
    name: &str,
    fault: Option<FaultSpec>,
    accept: Option<AcceptRule>,
    params: &ScenarioParams,
) -> Result<BmaProblem> {
    let mut problem = match name {
        "binary-toy" => BinaryToy::with_candidate(params.b0, params.b1)?.problem()?,
        "poisson-nb" => {
            let mut spec = PoissonNbToy::default();
            if let Some(n) = params.n_obs {
                spec.n_obs = n;
            }
            spec.problem()?
        }
        "good-cauchy" => GoodPair::cauchy().problem()?,
        "good-normal" => GoodPair::normal(params.good_mu).problem()?,
        "good-normal-mu1" => GoodPair::normal(1.0).problem()?,
        "nested-normal" => {
            let mut spec = NestedNormal::default();
            if let Some(n) = params.n_obs {
                spec.n_obs = n;
            }
            spec.problem()?
        }
        "nested-normal-posterior" | "nested-normal-posterior-mismatched" => {
            let mut spec = NestedNormal::default();
            if let Some(n) = params.n_obs {
                spec.n_obs = n;
            }
            let mismatched = name.ends_with("mismatched");
            posterior_sbc_problem(spec, &Dataset::new(params.y1.clone()), mismatched)?
        }
        other => {
            return Err(Error::UnknownScenario(
                other.to_string(),
                SCENARIOS.join(", "),
            ))
        }
    };
    if let Some(f) = fault {
        let candidate = scenario_candidate(name, params)?;
        problem = problem.with_candidate(apply_fault(candidate, f));
    }
    if let Some(AcceptRule::MeanRange { lo, hi }) = accept {
        problem = problem.with_accept(move |y: &Dataset| {
            let m = y.mean();
            f64::from(m >= lo && m <= hi)
        });
    }
    Ok(problem)
}

/// A fresh candidate computer for the named scenario (the correct one the
/// faults wrap).
fn scenario_candidate(
    name: &str,
    params: &ScenarioParams,
) -> Result<crate::bma::BfComputer> {
    // Rebuild the scenario and steal its candidate; the zoo candidates are
    // stateless closures so this is cheap.
    let fresh = build_scenario(name, None, None, params)?;
    Ok(fresh.into_candidate())
}

/// Parses "name", "name+fault", or "name+fault+accept".
pub fn parse_scenario_spec(spec: &str) -> Result<(String, Option<FaultSpec>, Option<AcceptRule>)> {
    let mut parts = spec.split('+');
    let name = parts.next().unwrap_or_default().to_string();
    let mut fault = None;
    let mut accept = None;
    for part in parts {
        if let Ok(f) = part.parse::<FaultSpec>() {
            fault = Some(f);
        } else if let Ok(a) = part.parse::<AcceptRule>() {
            accept = Some(a);
        } else {
            return Err(Error::Invalid(format!(
                "cannot parse '{part}' as a fault or accept rule"
            )));
        }
    }
    Ok((name, fault, accept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_sbc, EngineConfig};

    #[test]
    fn all_scenarios_build_and_simulate() {
        for &name in SCENARIOS {
            let problem = build_scenario(name, None, None, &ScenarioParams::default()).unwrap();
            let set = run_sbc(&problem, &EngineConfig::new(5, 1).with_draws(20)).unwrap();
            assert_eq!(set.len(), 5, "scenario {name}");
        }
        assert!(build_scenario("bogus", None, None, &ScenarioParams::default()).is_err());
    }

    #[test]
    fn faulted_scenario_uses_corrupted_candidate() {
        let correct =
            build_scenario("binary-toy", None, None, &ScenarioParams::default()).unwrap();
        let flipped = build_scenario(
            "binary-toy",
            Some(FaultSpec::Flip),
            None,
            &ScenarioParams::default(),
        )
        .unwrap();
        let mut rng = crate::rng::stream_rng(0, 0);
        let y = Dataset::new(vec![1.0]);
        let a = correct.candidate_bf().log_bf10(&y, &mut rng).unwrap();
        let b = flipped.candidate_bf().log_bf10(&y, &mut rng).unwrap();
        assert_eq!(a, -b);
    }

    #[test]
    fn accept_rule_filters_datasets() {
        let accept = "mean-range:0.5:6".parse::<AcceptRule>().unwrap();
        let problem = build_scenario(
            "poisson-nb",
            None,
            Some(accept),
            &ScenarioParams::default(),
        )
        .unwrap();
        assert!(problem.has_accept());
        assert!("mean-range:bad".parse::<AcceptRule>().is_err());
    }

    #[test]
    fn scenario_spec_parsing() {
        let (name, fault, accept) =
            parse_scenario_spec("poisson-nb+log-bias:2+mean-range:0.5:6").unwrap();
        assert_eq!(name, "poisson-nb");
        assert_eq!(fault, Some(FaultSpec::LogBias { bias: 2.0 }));
        assert_eq!(accept, Some(AcceptRule::MeanRange { lo: 0.5, hi: 6.0 }));
        assert!(parse_scenario_spec("binary-toy+garbage").is_err());
    }
}
