//! Model pairs with closed-form Bayes factors, plus their data-dependent
//! test quantities.
//!
//! Everything here is exact: parameter-free likelihood ratios for the binary
//! and count pairs, single-observation density ratios for the Good pairs,
//! and rank-one multivariate-normal marginals for the nested-normal pair.
//! These are the ground truth the candidate computers are checked against.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Gamma, Normal, Poisson, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::bma::{BfComputer, BmaProblem, Dataset, Submodel, TestQuantity};
use crate::error::{Error, Result};
use crate::rng::SimRng;

// ---------------------------------------------------------------------------
// Densities

pub fn normal_log_pdf(y: f64, mean: f64, sd: f64) -> f64 {
    let z = (y - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
}

pub fn cauchy_log_pdf(y: f64, location: f64, scale: f64) -> f64 {
    let z = (y - location) / scale;
    -(PI * scale).ln() - (1.0 + z * z).ln()
}

pub fn poisson_log_pmf(y: u64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Poisson rate must be positive, got {lambda}"
        )));
    }
    Ok(y as f64 * lambda.ln() - lambda - ln_gamma(y as f64 + 1.0))
}

/// Negative binomial in the mean-dispersion parameterization:
/// variance = mu + mu^2/phi. Mass at y is
/// C(y+phi-1, y) (phi/(phi+mu))^phi (mu/(phi+mu))^y, via log-gamma.
pub fn nb2_log_pmf(y: u64, mu: f64, phi: f64) -> Result<f64> {
    if !(mu > 0.0) || !(phi > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "NB2 needs positive mean and dispersion, got mu={mu}, phi={phi}"
        )));
    }
    let yf = y as f64;
    Ok(ln_gamma(yf + phi) - ln_gamma(phi) - ln_gamma(yf + 1.0)
        + phi * (phi.ln() - (phi + mu).ln())
        + yf * (mu.ln() - (phi + mu).ln()))
}

/// Interprets a dataset value as a count.
fn as_count(v: f64) -> Result<u64> {
    if v < 0.0 {
        return Err(Error::NegativeCount(v));
    }
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::NonIntegerCount(v));
    }
    Ok(v as u64)
}

// ---------------------------------------------------------------------------
// Binary toy

/// Pr(y = 1) under each of the two parameter-free binary models.
pub const BINARY_P0: f64 = 0.2;
pub const BINARY_P1: f64 = 0.8;

/// Two parameter-free models over a single binary observation. The candidate
/// posterior is fully described by (b0, b1) = candidate Pr(M1 | y=0),
/// Pr(M1 | y=1); the correct values are (1/5, 4/5).
#[derive(Debug, Clone, Copy)]
pub struct BinaryToy {
    pub candidate: (f64, f64),
}

impl BinaryToy {
    pub fn correct() -> Self {
        BinaryToy {
            candidate: (1.0 - BINARY_P1, BINARY_P1),
        }
    }

    pub fn with_candidate(b0: f64, b1: f64) -> Result<Self> {
        for b in [b0, b1] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "candidate posterior probabilities must lie in (0,1), got {b}"
                )));
            }
        }
        Ok(BinaryToy { candidate: (b0, b1) })
    }

    pub fn problem(&self) -> Result<BmaProblem> {
        let (b0, b1) = self.candidate;
        let candidate = BfComputer::from_fn(move |y| {
            let b = if y.values[0] > 0.5 { b1 } else { b0 };
            // Even prior: log BF equals the posterior log-odds.
            Ok((b / (1.0 - b)).ln())
        });
        let true_bf = BfComputer::from_fn(|y| Ok(binary_toy_true_log_bf(y.values[0] as u8)));
        let m0 = Submodel::parameter_free(|size, rng: &mut SimRng| {
            Dataset::new((0..size).map(|_| f64::from(rng.random::<f64>() < BINARY_P0)).collect())
        })
        .with_log_marginal(|y| binary_log_lik(0, y));
        let m1 = Submodel::parameter_free(|size, rng: &mut SimRng| {
            Dataset::new((0..size).map(|_| f64::from(rng.random::<f64>() < BINARY_P1)).collect())
        })
        .with_log_marginal(|y| binary_log_lik(1, y));
        Ok(BmaProblem::new("binary-toy", m0, m1, 0.5, true_bf, candidate, 1)?
            .with_quantities(builtin_quantities("binary-toy")?))
    }
}

fn binary_log_lik(index: usize, y: &Dataset) -> f64 {
    let a = if index == 1 { BINARY_P1 } else { BINARY_P0 };
    y.values
        .iter()
        .map(|&v| if v > 0.5 { a.ln() } else { (1.0 - a).ln() })
        .sum()
}

/// log BF_{1,0} for the single binary observation.
pub fn binary_toy_true_log_bf(y: u8) -> f64 {
    assert!(y <= 1, "binary observation must be 0 or 1");
    if y == 1 {
        (BINARY_P1 / BINARY_P0).ln()
    } else {
        ((1.0 - BINARY_P1) / (1.0 - BINARY_P0)).ln()
    }
}

/// Exact pass/fail of a candidate (b0, b1) for the data-averaged posterior
/// identity and for binary prediction calibration, by enumerating the four
/// (model, observation) cells. DAP holds iff b0 + b1 = 1; calibration holds
/// iff (b0, b1) is the correct posterior or the prior.
pub fn binary_toy_analytic_gate(b0: f64, b1: f64) -> (bool, bool) {
    let tol = 1e-12;
    let dap_ok = (b0 + b1 - 1.0).abs() < tol;
    let calibration_ok = if (b0 - b1).abs() < tol {
        (b0 - 0.5).abs() < tol
    } else {
        (b0 - 0.2).abs() < tol && (b1 - 0.8).abs() < tol
    };
    (dap_ok, calibration_ok)
}

// ---------------------------------------------------------------------------
// Poisson vs negative binomial

/// Poisson(3) against NB2(3, 5) with N = 25 observations per dataset.
#[derive(Debug, Clone, Copy)]
pub struct PoissonNbToy {
    pub lambda: f64,
    pub mu: f64,
    pub phi: f64,
    pub n_obs: usize,
}

impl Default for PoissonNbToy {
    fn default() -> Self {
        PoissonNbToy {
            lambda: 3.0,
            mu: 3.0,
            phi: 5.0,
            n_obs: 25,
        }
    }
}

impl PoissonNbToy {
    pub fn true_log_bf(&self, y: &Dataset) -> Result<f64> {
        if y.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (lambda, mu, phi) = (self.lambda, self.mu, self.phi);
        let mut total = 0.0;
        for &v in &y.values {
            let k = as_count(v)?;
            total += nb2_log_pmf(k, mu, phi)? - poisson_log_pmf(k, lambda)?;
        }
        Ok(total)
    }

    pub fn problem(&self) -> Result<BmaProblem> {
        let spec = *self;
        let m0 = {
            let lambda = spec.lambda;
            Submodel::parameter_free(move |size, rng: &mut SimRng| {
                let pois = Poisson::new(lambda).expect("positive rate");
                Dataset::new((0..size).map(|_| pois.sample(rng)).collect())
            })
            .with_log_marginal(move |y| {
                y.values
                    .iter()
                    .map(|&v| poisson_log_pmf(v as u64, lambda).unwrap_or(f64::NEG_INFINITY))
                    .sum()
            })
        };
        let m1 = {
            let (mu, phi) = (spec.mu, spec.phi);
            Submodel::parameter_free(move |size, rng: &mut SimRng| {
                // Gamma-Poisson mixture: one rate per observation.
                let gamma = Gamma::new(phi, mu / phi).expect("positive shape/scale");
                Dataset::new(
                    (0..size)
                        .map(|_| {
                            let rate: f64 = gamma.sample(rng);
                            Poisson::new(rate.max(1e-300)).expect("positive rate").sample(rng)
                        })
                        .collect(),
                )
            })
            .with_log_marginal(move |y| {
                y.values
                    .iter()
                    .map(|&v| nb2_log_pmf(v as u64, mu, phi).unwrap_or(f64::NEG_INFINITY))
                    .sum()
            })
        };
        let t = spec;
        let true_bf = BfComputer::from_fn(move |y| t.true_log_bf(y));
        let c = spec;
        let candidate = BfComputer::from_fn(move |y| c.true_log_bf(y));
        Ok(
            BmaProblem::new("poisson-nb", m0, m1, 0.5, true_bf, candidate, spec.n_obs)?
                .with_quantities(builtin_quantities("poisson-nb")?),
        )
    }
}

/// log BF_{1,0} for the canonical Poisson(3) vs NB2(3, 5) pair.
pub fn poisson_nb_true_log_bf(y: &Dataset) -> Result<f64> {
    PoissonNbToy::default().true_log_bf(y)
}

// ---------------------------------------------------------------------------
// Good pairs (single observation, parameter free)

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GoodVariant {
    /// M0: y ~ Cauchy(0, 1).
    Cauchy,
    /// M0: y ~ N(mu, 1) for a fixed, known mu.
    NormalMu(f64),
}

/// M1 is always the standard normal; M0 is picked by the variant. The
/// mean Bayes factor in favor of the wrong model is exactly 1, which the
/// Good-check summary estimates; the Cauchy variant has infinite variance
/// and the normal variant has variance exp(mu^2) - 1.
#[derive(Debug, Clone, Copy)]
pub struct GoodPair {
    pub variant: GoodVariant,
}

impl GoodPair {
    pub fn cauchy() -> Self {
        GoodPair {
            variant: GoodVariant::Cauchy,
        }
    }

    pub fn normal(mu: f64) -> Self {
        GoodPair {
            variant: GoodVariant::NormalMu(mu),
        }
    }

    fn m0_log_pdf(&self, y: f64) -> f64 {
        match self.variant {
            GoodVariant::Cauchy => cauchy_log_pdf(y, 0.0, 1.0),
            GoodVariant::NormalMu(mu) => normal_log_pdf(y, mu, 1.0),
        }
    }

    pub fn problem(&self) -> Result<BmaProblem> {
        let pair = *self;
        let id = match pair.variant {
            GoodVariant::Cauchy => "good-cauchy",
            GoodVariant::NormalMu(_) => "good-normal",
        };
        let m0 = {
            let variant = pair.variant;
            Submodel::parameter_free(move |size, rng: &mut SimRng| {
                Dataset::new(
                    (0..size)
                        .map(|_| match variant {
                            GoodVariant::Cauchy => {
                                Cauchy::new(0.0, 1.0).expect("valid scale").sample(rng)
                            }
                            GoodVariant::NormalMu(mu) => {
                                let z: f64 = StandardNormal.sample(rng);
                                mu + z
                            }
                        })
                        .collect(),
                )
            })
            .with_log_marginal(move |y| {
                y.values.iter().map(|&v| pair.m0_log_pdf(v)).sum()
            })
        };
        let m1 = Submodel::parameter_free(|size, rng: &mut SimRng| {
            Dataset::new(
                (0..size)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        z
                    })
                    .collect(),
            )
        })
        .with_log_marginal(|y| y.values.iter().map(|&v| normal_log_pdf(v, 0.0, 1.0)).sum());
        let true_bf = BfComputer::from_fn(move |y| Ok(good_pair_true_log_bf(y.values[0], pair)));
        let candidate = BfComputer::from_fn(move |y| Ok(good_pair_true_log_bf(y.values[0], pair)));
        Ok(BmaProblem::new(id, m0, m1, 0.5, true_bf, candidate, 1)?
            .with_quantities(builtin_quantities(id)?))
    }
}

/// log BF_{1,0} for a single observation under a Good pair.
pub fn good_pair_true_log_bf(y: f64, pair: GoodPair) -> f64 {
    normal_log_pdf(y, 0.0, 1.0) - pair.m0_log_pdf(y)
}

// ---------------------------------------------------------------------------
// Nested normal pair

/// M0: y_i ~ N(0, sigma_obs); M1: mu ~ N(0, prior_sd_mu), y_i ~ N(mu,
/// sigma_obs). Both marginal likelihoods are multivariate-normal closed
/// forms, which makes this pair a convenient vehicle for posterior-stage
/// rank checks with analytic conjugate posteriors.
#[derive(Debug, Clone, Copy)]
pub struct NestedNormal {
    pub sigma_obs: f64,
    pub prior_sd_mu: f64,
    pub n_obs: usize,
}

impl Default for NestedNormal {
    fn default() -> Self {
        NestedNormal {
            sigma_obs: 1.0,
            prior_sd_mu: 1.0,
            n_obs: 5,
        }
    }
}

impl NestedNormal {
    /// Conjugate posterior (mean, sd) of mu given data under M1.
    pub fn posterior_of_mu(&self, y: &Dataset) -> (f64, f64) {
        let s2 = self.prior_sd_mu * self.prior_sd_mu;
        let o2 = self.sigma_obs * self.sigma_obs;
        let n = y.len() as f64;
        let precision = 1.0 / s2 + n / o2;
        let mean = (y.values.iter().sum::<f64>() / o2) / precision;
        (mean, (1.0 / precision).sqrt())
    }

    pub fn problem(&self) -> Result<BmaProblem> {
        let spec = *self;
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
            .with_log_marginal(move |y| {
                y.values.iter().map(|&v| normal_log_pdf(v, 0.0, sd)).sum()
            })
        };
        let m1 = {
            let s = spec;
            Submodel::with_parameter(
                move |rng| {
                    let z: f64 = StandardNormal.sample(rng);
                    s.prior_sd_mu * z
                },
                move |mu, size, rng| {
                    let normal = Normal::new(mu, s.sigma_obs).expect("positive sd");
                    Dataset::new((0..size).map(|_| normal.sample(rng)).collect())
                },
                move |y, m, rng| {
                    let (mean, sd) = s.posterior_of_mu(y);
                    let normal = Normal::new(mean, sd).expect("positive sd");
                    (0..m).map(|_| normal.sample(rng)).collect()
                },
            )
            .with_log_marginal(move |y| {
                nested_normal_log_marginals(y, &s).map(|(_, m1)| m1).unwrap_or(f64::NEG_INFINITY)
            })
        };
        let t = spec;
        let true_bf = BfComputer::from_fn(move |y| {
            let (m0, m1) = nested_normal_log_marginals(y, &t)?;
            Ok(m1 - m0)
        });
        let c = spec;
        let candidate = BfComputer::from_fn(move |y| {
            let (m0, m1) = nested_normal_log_marginals(y, &c)?;
            Ok(m1 - m0)
        });
        Ok(
            BmaProblem::new("nested-normal", m0, m1, 0.5, true_bf, candidate, spec.n_obs)?
                .with_quantities(builtin_quantities("nested-normal")?),
        )
    }
}

/// (log marginal under M0, log marginal under M1). The M1 marginal is
/// N(y | 0, sigma^2 I + prior_sd^2 J) computed through the rank-one
/// determinant and quadratic-form shortcuts.
pub fn nested_normal_log_marginals(y: &Dataset, spec: &NestedNormal) -> Result<(f64, f64)> {
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let o2 = spec.sigma_obs * spec.sigma_obs;
    let s2 = spec.prior_sd_mu * spec.prior_sd_mu;
    let n = y.len() as f64;
    let log_m0: f64 = y
        .values
        .iter()
        .map(|&v| normal_log_pdf(v, 0.0, spec.sigma_obs))
        .sum();
    let sum: f64 = y.values.iter().sum();
    let sum_sq: f64 = y.values.iter().map(|&v| v * v).sum();
    let log_det = n * o2.ln() + (1.0 + n * s2 / o2).ln();
    let quad = (sum_sq - s2 * sum * sum / (o2 + n * s2)) / o2;
    let log_m1 = -0.5 * (n * (2.0 * PI).ln() + log_det + quad);
    Ok((log_m0, log_m1))
}

// ---------------------------------------------------------------------------
// Test quantities

const ZOO_MODELS: &[&str] = &[
    "binary-toy",
    "poisson-nb",
    "good-cauchy",
    "good-normal",
    "nested-normal",
];

fn model_index_quantity() -> TestQuantity {
    TestQuantity::new("model_index", |index, _, _| index as f64)
}

/// The built-in test quantities for a zoo member: always the model index and
/// the log likelihood, plus the variance-targeting quantity for the count
/// pair and the location parameter for the nested-normal pair.
pub fn builtin_quantities(model: &str) -> Result<Vec<TestQuantity>> {
    let quantities = match model {
        "binary-toy" => vec![
            model_index_quantity(),
            TestQuantity::new("log_lik", |index, _, y| binary_log_lik(index, y)),
        ],
        "poisson-nb" => {
            let spec = PoissonNbToy::default();
            vec![
                model_index_quantity(),
                TestQuantity::new("log_lik", move |index, _, y| {
                    y.values
                        .iter()
                        .map(|&v| {
                            let k = v as u64;
                            if index == 0 {
                                poisson_log_pmf(k, spec.lambda)
                            } else {
                                nb2_log_pmf(k, spec.mu, spec.phi)
                            }
                            .unwrap_or(f64::NEG_INFINITY)
                        })
                        .sum()
                }),
                // Under the Poisson the variance equals the mean, so compare
                // the mean (i = 0) against the sample variance (i = 1).
                TestQuantity::new("var_y", |index, _, y| {
                    if index == 0 {
                        y.mean()
                    } else {
                        y.sample_variance()
                    }
                }),
            ]
        }
        "good-cauchy" | "good-normal" | "good-normal-mu1" => {
            let pair = match model {
                "good-cauchy" => GoodPair::cauchy(),
                "good-normal-mu1" => GoodPair::normal(1.0),
                _ => GoodPair::normal(2.0),
            };
            vec![
                model_index_quantity(),
                TestQuantity::new("log_lik", move |index, _, y| {
                    y.values
                        .iter()
                        .map(|&v| {
                            if index == 0 {
                                pair.m0_log_pdf(v)
                            } else {
                                normal_log_pdf(v, 0.0, 1.0)
                            }
                        })
                        .sum()
                }),
            ]
        }
        "nested-normal" => nested_normal_quantities(NestedNormal::default()),
        other => {
            return Err(Error::UnknownModel(
                other.to_string(),
                ZOO_MODELS.join(", "),
            ))
        }
    };
    Ok(quantities)
}

/// Quantities for a nested-normal style pair: model index, the conditional
/// log likelihood, and the location parameter itself (missing under M0, so
/// draws under M0 rank as -inf).
pub fn nested_normal_quantities(spec: NestedNormal) -> Vec<TestQuantity> {
    vec![
        model_index_quantity(),
        TestQuantity::new("log_lik", move |_, theta, y| {
            let mu = theta.unwrap_or(0.0);
            y.values
                .iter()
                .map(|&v| normal_log_pdf(v, mu, spec.sigma_obs))
                .sum()
        }),
        TestQuantity::new("mu", |_, theta, _| theta.unwrap_or(f64::NEG_INFINITY)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;

    #[test]
    fn binary_true_bf_values() {
        assert_relative_eq!(binary_toy_true_log_bf(1), 4f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(binary_toy_true_log_bf(0), -(4f64.ln()), epsilon = 1e-15);
        // Correct computation recovers the published calibrated posterior.
        let p = crate::bma::posterior_model_prob(
            binary_toy_true_log_bf(0),
            crate::bma::ModelProb::EVEN,
        )
        .unwrap();
        assert_relative_eq!(p.prob(), 0.2, max_relative = 1e-12);
    }

    #[test]
    fn binary_gate_enumerates_cells() {
        assert_eq!(binary_toy_analytic_gate(0.2, 0.8), (true, true));
        assert_eq!(binary_toy_analytic_gate(0.5, 0.5), (true, true));
        assert_eq!(binary_toy_analytic_gate(0.8, 0.2), (true, false)); // flipped
        assert_eq!(binary_toy_analytic_gate(0.3, 0.8), (false, false));
        assert_eq!(binary_toy_analytic_gate(0.1, 0.9), (true, false));
    }

    #[test]
    fn nb2_normalizes_and_matches_closed_forms() {
        let total: f64 = (0..=500u64)
            .map(|y| nb2_log_pmf(y, 3.0, 5.0).unwrap().exp())
            .sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-10);
        // Closed form at zero.
        assert_relative_eq!(
            nb2_log_pmf(0, 3.0, 5.0).unwrap(),
            5.0 * (5f64 / 8.0).ln(),
            epsilon = 1e-12
        );
        // Implied variance of NB2(3, 5) is mu + mu^2/phi = 4.8.
        let (mut mean, mut second) = (0.0, 0.0);
        for y in 0..=500u64 {
            let p = nb2_log_pmf(y, 3.0, 5.0).unwrap().exp();
            mean += y as f64 * p;
            second += (y as f64) * (y as f64) * p;
        }
        assert_relative_eq!(second - mean * mean, 4.8, epsilon = 1e-8);
        assert!(nb2_log_pmf(1, -1.0, 5.0).is_err());
        assert!(nb2_log_pmf(1, 3.0, 0.0).is_err());
    }

    #[test]
    fn poisson_normalizes() {
        let total: f64 = (0..=500u64)
            .map(|y| poisson_log_pmf(y, 3.0).unwrap().exp())
            .sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-10);
        assert!(poisson_log_pmf(1, 0.0).is_err());
    }

    #[test]
    fn poisson_nb_bf_matches_extended_precision_oracle() {
        // 50-digit arithmetic gives 25 * (log nb2(3;3,5) - log pois(3;3)) =
        // -6.0308810137679218122796203453807448574579919317538.
        let y = Dataset::new(vec![3.0; 25]);
        assert_relative_eq!(
            poisson_nb_true_log_bf(&y).unwrap(),
            -6.030881013767921812279620345,
            epsilon = 1e-12
        );
    }

    #[test]
    fn poisson_nb_bf_is_additive_and_exchangeable() {
        let y = Dataset::new(vec![0.0, 2.0, 3.0, 7.0, 1.0]);
        let doubled = Dataset::new([y.values.clone(), y.values.clone()].concat());
        let single = poisson_nb_true_log_bf(&y).unwrap();
        assert_relative_eq!(
            poisson_nb_true_log_bf(&doubled).unwrap(),
            2.0 * single,
            epsilon = 1e-12
        );
        let mut permuted = y.values.clone();
        permuted.reverse();
        assert_relative_eq!(
            poisson_nb_true_log_bf(&Dataset::new(permuted)).unwrap(),
            single,
            epsilon = 1e-12
        );
        assert!(poisson_nb_true_log_bf(&Dataset::new(vec![-1.0])).is_err());
        assert!(poisson_nb_true_log_bf(&Dataset::new(vec![])).is_err());
    }

    #[test]
    fn good_pair_closed_forms() {
        // Cauchy variant at zero: -log sqrt(2/pi).
        let got = good_pair_true_log_bf(0.0, GoodPair::cauchy());
        assert_relative_eq!(got, -0.5 * (2.0 / PI).ln(), epsilon = 1e-12);
        assert_relative_eq!(got, 0.2257913526, epsilon = 1e-9);
        // BF_{0,1}(y) = sqrt(2/pi) e^{y^2/2} / (1 + y^2), negated in log space.
        for y in [-2.5f64, -0.3, 0.0, 1.0, 4.2] {
            let direct = -((2.0 / PI).sqrt() * (y * y / 2.0).exp() / (1.0 + y * y)).ln();
            assert_relative_eq!(
                good_pair_true_log_bf(y, GoodPair::cauchy()),
                direct,
                epsilon = 1e-10
            );
        }
        // Normal variant with mu = 2 at the equidistant point y = 1.
        assert_relative_eq!(
            good_pair_true_log_bf(1.0, GoodPair::normal(2.0)),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn good_normal_bf_variance_matches_identity() {
        // Var(BF_{0,1} | M1) = exp(mu^2) - 1; estimate it at mu = 1 from
        // 1e5 standard-normal draws.
        let pair = GoodPair::normal(1.0);
        let mut rng = stream_rng(42, 0);
        let n = 100_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let y: f64 = StandardNormal.sample(&mut rng);
            let bf01 = (-good_pair_true_log_bf(y, pair)).exp();
            sum += bf01;
            sum_sq += bf01 * bf01;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!((var - (1f64.exp() - 1.0)).abs() < 0.1, "var {var}");
        // First moment: mean within 3 standard errors of 1.
        let sem = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sem, "mean {mean}, sem {sem}");
    }

    #[test]
    fn nested_normal_marginals() {
        let spec = NestedNormal::default();
        // n = 1: scalar convolution, variance 1 + 1.
        let y = Dataset::new(vec![0.7]);
        let (_, m1) = nested_normal_log_marginals(&y, &spec).unwrap();
        assert_relative_eq!(m1, normal_log_pdf(0.7, 0.0, 2f64.sqrt()), epsilon = 1e-12);
        // Zero data, n = 2: difference is the determinant term only.
        let y = Dataset::new(vec![0.0, 0.0]);
        let (m0, m1) = nested_normal_log_marginals(&y, &spec).unwrap();
        assert_relative_eq!(m1 - m0, -0.5 * 3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn nested_normal_marginal_matches_quadrature_oracle() {
        // Integrate N(y | mu 1, I) N(mu | 0, 1) dmu with adaptive Simpson.
        let spec = NestedNormal::default();
        let y = Dataset::new(vec![0.4, -1.1, 2.3]);
        let f = |mu: f64| {
            let lik: f64 = y.values.iter().map(|&v| normal_log_pdf(v, mu, 1.0)).sum();
            (lik + normal_log_pdf(mu, 0.0, 1.0)).exp()
        };
        let oracle = simpson_adaptive(&f, -12.0, 12.0, 1e-13);
        let (_, m1) = nested_normal_log_marginals(&y, &spec).unwrap();
        assert_relative_eq!(m1.exp(), oracle, max_relative = 1e-8);
    }

    #[test]
    fn marginal_densities_integrate_to_one() {
        // Discrete models by summation, continuous by quadrature; the Cauchy
        // tails are folded in through the u = 1/y substitution.
        let normal = |y: f64| normal_log_pdf(y, 0.0, 1.0).exp();
        let total = simpson_adaptive(&normal, -14.0, 14.0, 1e-12);
        assert_relative_eq!(total, 1.0, epsilon = 1e-9);
        let cauchy = |y: f64| cauchy_log_pdf(y, 0.0, 1.0).exp();
        let center = simpson_adaptive(&cauchy, -10.0, 10.0, 1e-12);
        let tail = |u: f64| {
            if u == 0.0 {
                1.0 / PI
            } else {
                cauchy_log_pdf(1.0 / u, 0.0, 1.0).exp() / (u * u)
            }
        };
        let tails = 2.0 * simpson_adaptive(&tail, 0.0, 0.1, 1e-12);
        assert_relative_eq!(center + tails, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn quantity_values_match_definitions() {
        let qs = builtin_quantities("poisson-nb").unwrap();
        let var_y = qs.iter().find(|q| q.name() == "var_y").unwrap();
        let y = Dataset::new(vec![1.0, 2.0, 3.0]);
        assert_relative_eq!(var_y.eval(0, None, &y), 2.0, epsilon = 1e-15);
        assert_relative_eq!(var_y.eval(1, None, &y), 1.0, epsilon = 1e-15);
        let log_lik = qs.iter().find(|q| q.name() == "log_lik").unwrap();
        let want: f64 = y
            .values
            .iter()
            .map(|&v| nb2_log_pmf(v as u64, 3.0, 5.0).unwrap())
            .sum();
        assert_relative_eq!(log_lik.eval(1, None, &y), want, epsilon = 1e-12);
        assert!(builtin_quantities("no-such-model").is_err());
    }

    #[test]
    fn nb_sampler_matches_nb2_moments() {
        let spec = PoissonNbToy::default();
        let problem = spec.problem().unwrap();
        let mut rng = stream_rng(9, 7);
        let n = 200_000usize;
        let data = problem.model(1).sample_data(None, n, &mut rng);
        let mean = data.mean();
        let var = data.sample_variance();
        assert!((mean - 3.0).abs() < 0.05, "mean {mean}");
        assert!((var - 4.8).abs() < 0.15, "var {var}");
    }

    // Test-only adaptive Simpson quadrature, used as an independent oracle.
    fn simpson_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
        }
        fn recurse(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            whole: f64,
            m: f64,
            fm: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let (left, lm, flm) = simpson(f, a, fa, m, fm);
            let (right, rm, frm) = simpson(f, m, fm, b, fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                left + right + delta / 15.0
            } else {
                recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                    + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
            }
        }
        let (fa, fb) = (f(a), f(b));
        let (whole, m, fm) = simpson(f, a, fa, b, fb);
        recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
    }
}
