//! Fault injection: wraps a correct Bayes factor computer with one of five
//! corruption scenarios so every check's detection power can be measured
//! against known-wrong output.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use crate::bma::{BfComputer, Dataset};
use crate::error::{Error, Result};

pub const DEFAULT_NOISE_SD: f64 = 2.0;
pub const DEFAULT_BIAS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaultSpec {
    /// Negate the log Bayes factor (compute the inverse of the true BF).
    Flip,
    /// Report log BF = 0, i.e. posterior model probability 1/2 under an even
    /// prior, regardless of the data.
    ConstantEven,
    /// Compute the BF on the first ceil(n/2) observations only.
    IgnoreHalf,
    /// Add N(0, sd) noise to the log BF, one draw per dataset taken from the
    /// simulation's own stream.
    LogNoise { sd: f64 },
    /// Add a constant to the log BF.
    LogBias { bias: f64 },
}

impl fmt::Display for FaultSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultSpec::Flip => write!(f, "flip"),
            FaultSpec::ConstantEven => write!(f, "constant"),
            FaultSpec::IgnoreHalf => write!(f, "ignore-half"),
            FaultSpec::LogNoise { sd } => write!(f, "log-noise:{sd}"),
            FaultSpec::LogBias { bias } => write!(f, "log-bias:{bias}"),
        }
    }
}

impl FromStr for FaultSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>, default: f64| -> Result<f64> {
            match a {
                None => Ok(default),
                Some(a) => a
                    .parse::<f64>()
                    .map_err(|_| Error::UnknownFault(s.to_string())),
            }
        };
        match kind {
            "flip" => Ok(FaultSpec::Flip),
            "constant" => Ok(FaultSpec::ConstantEven),
            "ignore-half" => Ok(FaultSpec::IgnoreHalf),
            "log-noise" => {
                let sd = num(arg, DEFAULT_NOISE_SD)?;
                if !(sd > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "noise sd must be positive, got {sd}"
                    )));
                }
                Ok(FaultSpec::LogNoise { sd })
            }
            "log-bias" => Ok(FaultSpec::LogBias {
                bias: num(arg, DEFAULT_BIAS)?,
            }),
            _ => Err(Error::UnknownFault(s.to_string())),
        }
    }
}

/// Wraps `base` so it produces the corrupted Bayes factor.
pub fn apply_fault(base: BfComputer, fault: FaultSpec) -> BfComputer {
    match fault {
        FaultSpec::Flip => BfComputer::new(move |y, rng| Ok(-base.log_bf10(y, rng)?)),
        FaultSpec::ConstantEven => BfComputer::new(|_, _| Ok(0.0)),
        FaultSpec::IgnoreHalf => BfComputer::new(move |y, rng| {
            if y.len() < 2 {
                return Err(Error::DatasetTooShort);
            }
            let half = y.len().div_ceil(2);
            let prefix = Dataset::new(y.values[..half].to_vec());
            base.log_bf10(&prefix, rng)
        }),
        FaultSpec::LogNoise { sd } => BfComputer::new(move |y, rng| {
            let noise: f64 = StandardNormal.sample(rng);
            Ok(base.log_bf10(y, rng)? + sd * noise)
        }),
        FaultSpec::LogBias { bias } => {
            BfComputer::new(move |y, rng| Ok(base.log_bf10(y, rng)? + bias))
        }
    }
}
