//! Model-pair abstraction, BMA supermodel composition, and posterior model
//! probability arithmetic.
//!
//! All Bayes factors are kept in log space and model probabilities on the
//! log-odds scale; plain probabilities are formed only at the inverse-logit
//! boundary. Bayes factors overflow doubles quickly, and log-odds survive a
//! round trip through chained updates that a probability near 0 or 1 would
//! not.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use rand::Rng;

/// Consecutive rejection-sampling failures tolerated before giving up.
pub const MAX_REJECTIONS: u32 = 10_000;

/// One simulated dataset: an ordered run of observations plus optional named
/// scalars (group sizes and similar).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, f64>,
}

impl Dataset {
    pub fn new(values: Vec<f64>) -> Self {
        Dataset {
            values,
            meta: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Sample variance with the n-1 denominator; 0 for fewer than two points.
    pub fn sample_variance(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
    }
}

/// Numerically stable inverse logit.
pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-odds of a probability in (0, 1).
pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// A model probability stored on the log-odds scale.
///
/// Chained Bayes-factor updates stay exact up to one rounding of the
/// addition; [`ModelProb::prob`] materializes the probability only when a
/// plain number is needed and keeps it strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelProb {
    log_odds: f64,
}

impl ModelProb {
    /// The even prior, Pr = 1/2.
    pub const EVEN: ModelProb = ModelProb { log_odds: 0.0 };

    pub fn from_prob(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::DegeneratePrior(p));
        }
        Ok(ModelProb { log_odds: logit(p) })
    }

    pub fn from_log_odds(x: f64) -> Self {
        debug_assert!(!x.is_nan());
        ModelProb { log_odds: x }
    }

    pub fn log_odds(self) -> f64 {
        self.log_odds
    }

    pub fn prob(self) -> f64 {
        // Largest f64 below 1; keeps the open-interval contract even when
        // the log-odds are far beyond f64 probability resolution.
        const ONE_MINUS: f64 = 1.0 - f64::EPSILON / 2.0;
        inv_logit(self.log_odds).clamp(f64::MIN_POSITIVE, ONE_MINUS)
    }
}

/// Posterior model probability of M1 given a log Bayes factor and prior:
/// posterior odds = BF_{1,0} x prior odds.
pub fn posterior_model_prob(log_bf10: f64, prior_m1: ModelProb) -> Result<ModelProb> {
    if !log_bf10.is_finite() {
        return Err(Error::InvalidBayesFactor(log_bf10));
    }
    Ok(ModelProb::from_log_odds(log_bf10 + prior_m1.log_odds()))
}

type PriorSampler = Box<dyn Fn(&mut SimRng) -> f64 + Send + Sync>;
type DataSampler = Box<dyn Fn(Option<f64>, usize, &mut SimRng) -> Dataset + Send + Sync>;
type PosteriorSampler = Box<dyn Fn(&Dataset, usize, &mut SimRng) -> Vec<f64> + Send + Sync>;
type LogMarginal = Box<dyn Fn(&Dataset) -> f64 + Send + Sync>;

/// One half of a model pair.
///
/// Parameter-free models have no prior or posterior sampler; their draws are
/// the missing-parameter sentinel and their log marginal equals the log
/// likelihood of the data.
pub struct Submodel {
    prior: Option<PriorSampler>,
    data: DataSampler,
    posterior: Option<PosteriorSampler>,
    log_marginal: Option<LogMarginal>,
}

impl Submodel {
    /// A model without parameters: the data sampler receives `None`.
    pub fn parameter_free(
        data: impl Fn(usize, &mut SimRng) -> Dataset + Send + Sync + 'static,
    ) -> Self {
        Submodel {
            prior: None,
            data: Box::new(move |_, size, rng| data(size, rng)),
            posterior: None,
            log_marginal: None,
        }
    }

    /// A model with a scalar parameter.
    pub fn with_parameter(
        prior: impl Fn(&mut SimRng) -> f64 + Send + Sync + 'static,
        data: impl Fn(f64, usize, &mut SimRng) -> Dataset + Send + Sync + 'static,
        posterior: impl Fn(&Dataset, usize, &mut SimRng) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Submodel {
            prior: Some(Box::new(prior)),
            data: Box::new(move |theta, size, rng| {
                data(theta.expect("parameterized model needs a draw"), size, rng)
            }),
            posterior: Some(Box::new(posterior)),
            log_marginal: None,
        }
    }

    pub fn with_log_marginal(
        mut self,
        f: impl Fn(&Dataset) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.log_marginal = Some(Box::new(f));
        self
    }

    /// One prior draw; `None` for parameter-free models.
    pub fn draw_prior(&self, rng: &mut SimRng) -> Option<f64> {
        self.prior.as_ref().map(|p| p(rng))
    }

    pub fn sample_data(&self, theta: Option<f64>, size: usize, rng: &mut SimRng) -> Dataset {
        (self.data)(theta, size, rng)
    }

    /// `m` posterior draws given data; empty for parameter-free models.
    pub fn posterior_draws(&self, y: &Dataset, m: usize, rng: &mut SimRng) -> Vec<f64> {
        match &self.posterior {
            Some(p) => p(y, m, rng),
            None => Vec::new(),
        }
    }

    pub fn log_marginal(&self, y: &Dataset) -> Option<f64> {
        self.log_marginal.as_ref().map(|f| f(y))
    }
}

/// Computes log BF_{1,0} (nats) for a dataset. This is the quantity under
/// test: the "true" computer uses a closed form, the candidate is whatever
/// we want to validate (possibly wrapped in a fault).
pub struct BfComputer(Box<dyn Fn(&Dataset, &mut SimRng) -> Result<f64> + Send + Sync>);

impl BfComputer {
    pub fn new(f: impl Fn(&Dataset, &mut SimRng) -> Result<f64> + Send + Sync + 'static) -> Self {
        BfComputer(Box::new(f))
    }

    /// Convenience for deterministic computers.
    pub fn from_fn(f: impl Fn(&Dataset) -> Result<f64> + Send + Sync + 'static) -> Self {
        BfComputer(Box::new(move |y, _| f(y)))
    }

    pub fn log_bf10(&self, y: &Dataset, rng: &mut SimRng) -> Result<f64> {
        if y.is_empty() {
            return Err(Error::EmptyDataset);
        }
        (self.0)(y, rng)
    }
}

/// A scalar test quantity f(model index, parameter draw, data).
///
/// A missing parameter is evaluated as -inf by convention, so quantities
/// over parameters absent from one model still produce valid ranks.
pub struct TestQuantity {
    name: String,
    eval: Box<dyn Fn(usize, Option<f64>, &Dataset) -> f64 + Send + Sync>,
}

impl TestQuantity {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(usize, Option<f64>, &Dataset) -> f64 + Send + Sync + 'static,
    ) -> Self {
        TestQuantity {
            name: name.into(),
            eval: Box::new(eval),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, index: usize, theta: Option<f64>, y: &Dataset) -> f64 {
        (self.eval)(index, theta, y)
    }
}

type AcceptFn = Box<dyn Fn(&Dataset) -> f64 + Send + Sync>;

/// A pair of submodels plus everything needed to validate a Bayes factor
/// computation against them.
pub struct BmaProblem {
    id: String,
    models: [Submodel; 2],
    prior_m1: ModelProb,
    true_bf: BfComputer,
    candidate_bf: BfComputer,
    accept: Option<AcceptFn>,
    quantities: Vec<TestQuantity>,
    data_size: usize,
}

impl BmaProblem {
    pub fn new(
        id: impl Into<String>,
        model0: Submodel,
        model1: Submodel,
        prior_m1: f64,
        true_bf: BfComputer,
        candidate_bf: BfComputer,
        data_size: usize,
    ) -> Result<Self> {
        Ok(BmaProblem {
            id: id.into(),
            models: [model0, model1],
            prior_m1: ModelProb::from_prob(prior_m1)?,
            true_bf,
            candidate_bf,
            accept: None,
            quantities: Vec::new(),
            data_size: data_size.max(1),
        })
    }

    /// Probability that a dataset is accepted; default is the constant 1.
    pub fn with_accept(mut self, f: impl Fn(&Dataset) -> f64 + Send + Sync + 'static) -> Self {
        self.accept = Some(Box::new(f));
        self
    }

    pub fn with_quantities(mut self, quantities: Vec<TestQuantity>) -> Self {
        self.quantities = quantities;
        self
    }

    /// Replaces the candidate computer (used to inject faults).
    pub fn with_candidate(mut self, candidate: BfComputer) -> Self {
        self.candidate_bf = candidate;
        self
    }

    pub fn with_prior(mut self, prior_m1: ModelProb) -> Self {
        self.prior_m1 = prior_m1;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn model(&self, index: usize) -> &Submodel {
        &self.models[index]
    }

    pub fn prior_m1(&self) -> ModelProb {
        self.prior_m1
    }

    pub fn true_bf(&self) -> &BfComputer {
        &self.true_bf
    }

    pub fn candidate_bf(&self) -> &BfComputer {
        &self.candidate_bf
    }

    /// Consumes the problem, keeping only its candidate computer.
    pub fn into_candidate(self) -> BfComputer {
        self.candidate_bf
    }

    pub fn has_accept(&self) -> bool {
        self.accept.is_some()
    }

    pub fn quantities(&self) -> &[TestQuantity] {
        &self.quantities
    }

    pub fn data_size(&self) -> usize {
        self.data_size
    }
}

/// One draw from the prior predictive of the BMA supermodel.
#[derive(Debug, Clone)]
pub struct PriorDraw {
    pub index: usize,
    pub theta: Option<f64>,
    pub data: Dataset,
    pub attempts: u32,
}

/// Draws (index, parameters, data) from the BMA supermodel, rejecting whole
/// draws until the dataset is accepted.
///
/// The rejection loop redraws index, parameters and data together: rejecting
/// per-submodel would silently change the implied model prior.
pub fn prior_predictive_draw(
    problem: &BmaProblem,
    size: usize,
    rng: &mut SimRng,
) -> Result<PriorDraw> {
    assert!(size >= 1, "dataset size must be at least 1");
    let p1 = problem.prior_m1.prob();
    for attempt in 1..=MAX_REJECTIONS {
        let index = usize::from(rng.random::<f64>() < p1);
        let theta = problem.models[index].draw_prior(rng);
        let data = problem.models[index].sample_data(theta, size, rng);
        let keep = match &problem.accept {
            None => true,
            Some(accept) => rng.random::<f64>() < accept(&data),
        };
        if keep {
            return Ok(PriorDraw {
                index,
                theta,
                data,
                attempts: attempt,
            });
        }
    }
    Err(Error::AcceptRegionTooSmall(MAX_REJECTIONS))
}

/// `m` draws from the candidate BMA posterior: the model index is Bernoulli
/// in the posterior model probability, the parameter draw is resampled (with
/// replacement) from the matching submodel's posterior pool.
pub fn compose_bma_draws(
    p_m1: ModelProb,
    draws0: &[f64],
    draws1: &[f64],
    m: usize,
    rng: &mut SimRng,
) -> Result<Vec<(usize, Option<f64>)>> {
    if m == 0 {
        return Err(Error::NoDraws);
    }
    let p = p_m1.prob();
    let pools = [draws0, draws1];
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let index = usize::from(rng.random::<f64>() < p);
        let pool = pools[index];
        let theta = if pool.is_empty() {
            None
        } else {
            Some(pool[rng.random_range(0..pool.len())])
        };
        out.push((index, theta));
    }
    Ok(out)
}
