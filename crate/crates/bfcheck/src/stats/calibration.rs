//! Binary prediction calibration through the Brier-score decomposition:
//! miscalibration is the Brier score of the forecasts minus the Brier score
//! of their isotonic recalibration, tested against a bootstrap null that
//! resamples outcomes as if the forecasts were correct.

use rayon::prelude::*;

use super::{CheckReport, Decision, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use rand::Rng;

fn validate_pairs(probs: &[f64], outcomes: &[f64]) -> Result<()> {
    if probs.len() != outcomes.len() {
        return Err(Error::LengthMismatch(probs.len(), outcomes.len()));
    }
    if probs.is_empty() {
        return Err(Error::NotEnoughData { need: 1, got: 0 });
    }
    for &p in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfUnitInterval(p));
        }
    }
    Ok(())
}

/// Weighted pool-adjacent-violators pass over values already in
/// nondecreasing predictor order. Returns one fitted value per block entry.
fn pav(values: &mut Vec<(f64, f64)>) {
    // (mean, weight) blocks; merge while the sequence decreases.
    let mut top = 0usize;
    for i in 0..values.len() {
        let mut block = values[i];
        while top > 0 && values[top - 1].0 >= block.0 {
            let prev = values[top - 1];
            let w = prev.1 + block.1;
            block = ((prev.0 * prev.1 + block.0 * block.1) / w, w);
            top -= 1;
        }
        values[top] = block;
        top += 1;
    }
    values.truncate(top);
}

/// Isotonic least-squares fit of outcomes as a function of the forecast
/// probabilities. Ties in the probabilities are pooled before fitting, so
/// equal forecasts always receive equal recalibrated values. The result is
/// aligned with the input order.
pub fn pav_recalibrate(probs: &[f64], outcomes: &[f64]) -> Result<Vec<f64>> {
    validate_pairs(probs, outcomes)?;
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    // Pool exact ties.
    let mut blocks: Vec<(f64, f64)> = Vec::new(); // (mean outcome, weight)
    let mut block_of_sorted: Vec<usize> = vec![0; order.len()];
    let mut k = 0usize;
    while k < order.len() {
        let p = probs[order[k]];
        let mut sum = 0.0;
        let mut count = 0.0;
        let start = k;
        while k < order.len() && probs[order[k]] == p {
            sum += outcomes[order[k]];
            count += 1.0;
            k += 1;
        }
        for slot in block_of_sorted.iter_mut().take(k).skip(start) {
            *slot = blocks.len();
        }
        blocks.push((sum / count, count));
    }
    let tie_blocks = blocks.clone();
    pav(&mut blocks);
    // Expand merged blocks back to per-observation fitted values.
    let mut fitted_by_block = Vec::with_capacity(tie_blocks.len());
    let mut merged = blocks.iter();
    let mut current = *merged.next().expect("at least one block");
    let mut remaining = current.1;
    for tb in &tie_blocks {
        if remaining <= 0.0 {
            current = *merged.next().expect("blocks cover all weight");
            remaining = current.1;
        }
        fitted_by_block.push(current.0);
        remaining -= tb.1;
    }
    let mut out = vec![0.0; probs.len()];
    for (sorted_pos, &orig) in order.iter().enumerate() {
        out[orig] = fitted_by_block[block_of_sorted[sorted_pos]];
    }
    Ok(out)
}

fn brier(forecast: &[f64], outcomes: &[f64]) -> f64 {
    forecast
        .iter()
        .zip(outcomes)
        .map(|(f, o)| (f - o) * (f - o))
        .sum::<f64>()
        / forecast.len() as f64
}

/// Miscalibration: Brier score of the forecasts minus the Brier score of
/// their isotonic recalibration. Nonnegative; zero when the forecasts are
/// already isotonic-optimal.
pub fn miscalibration_mcb(probs: &[f64], outcomes: &[f64]) -> Result<f64> {
    let recal = pav_recalibrate(probs, outcomes)?;
    Ok((brier(probs, outcomes) - brier(&recal, outcomes)).max(0.0))
}

/// MCB computed on forecasts pre-sorted ascending; used by the bootstrap
/// loop where the sort can be hoisted out.
fn mcb_sorted(sorted_probs: &[f64], outcomes_sorted: &[f64]) -> f64 {
    let mut blocks: Vec<(f64, f64)> = Vec::with_capacity(sorted_probs.len());
    let mut k = 0usize;
    while k < sorted_probs.len() {
        let p = sorted_probs[k];
        let mut sum = 0.0;
        let mut count = 0.0;
        while k < sorted_probs.len() && sorted_probs[k] == p {
            sum += outcomes_sorted[k];
            count += 1.0;
            k += 1;
        }
        blocks.push((sum / count, count));
    }
    let tie_blocks = blocks.clone();
    pav(&mut blocks);
    // Brier difference via block aggregates: for outcomes in {0,1},
    // sum (p - o)^2 - (f - o)^2 over a block with mean outcome m, weight w
    // is w [(p^2 - 2pm) - (f^2 - 2fm)].
    let mut diff = 0.0;
    let mut merged = blocks.iter();
    let mut current = *merged.next().expect("non-empty");
    let mut remaining = current.1;
    let mut idx = 0usize;
    for tb in &tie_blocks {
        if remaining <= 0.0 {
            current = *merged.next().expect("blocks cover all weight");
            remaining = current.1;
        }
        let f = current.0;
        let w = tb.1;
        let m = tb.0;
        let p = sorted_probs[idx];
        diff += w * ((p * p - 2.0 * p * m) - (f * f - 2.0 * f * m));
        idx += w as usize;
        remaining -= w;
    }
    (diff / sorted_probs.len() as f64).max(0.0)
}

/// Bootstrap miscalibration test: the null resamples outcomes as
/// Bernoulli(probs). The p-value uses the add-one estimator, so its floor is
/// 1/(B+1); extras carry the observed MCB and the null 95% quantile.
pub fn miscalibration_test(
    probs: &[f64],
    outcomes: &[f64],
    b: usize,
    seed: u64,
) -> Result<CheckReport> {
    validate_pairs(probs, outcomes)?;
    if b < 100 {
        return Err(Error::Invalid(format!(
            "need at least 100 bootstrap replicates, got {b}"
        )));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    let sorted_probs: Vec<f64> = order.iter().map(|&i| probs[i]).collect();
    let sorted_outcomes: Vec<f64> = order.iter().map(|&i| outcomes[i]).collect();
    let observed = mcb_sorted(&sorted_probs, &sorted_outcomes);

    let mut null: Vec<f64> = (0..b as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep);
            let resampled: Vec<f64> = sorted_probs
                .iter()
                .map(|&p| f64::from(rng.random::<f64>() < p))
                .collect();
            mcb_sorted(&sorted_probs, &resampled)
        })
        .collect();
    let exceed = null.iter().filter(|&&v| v >= observed).count();
    let p_value = (1 + exceed) as f64 / (b + 1) as f64;
    null.sort_unstable_by(f64::total_cmp);
    let q95 = null[((0.95 * b as f64).ceil() as usize).clamp(1, b) - 1];
    let decision = if p_value < DEFAULT_ALPHA {
        Decision::Reject
    } else {
        Decision::Pass
    };
    Ok(
        CheckReport::new("miscalibration", observed, p_value, decision, probs.len())
            .with_extra("mcb", observed)
            .with_extra("null_q95", q95)
            .with_extra("p_floor", 1.0 / (b + 1) as f64),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn pav_hand_cases() {
        // Already isotonic.
        assert_eq!(pav_recalibrate(&[0.2, 0.8], &[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        // Violating pair pools to its mean.
        assert_eq!(
            pav_recalibrate(&[0.8, 0.2], &[0.0, 1.0]).unwrap(),
            vec![0.5, 0.5]
        );
        // Constant outcomes stay put.
        assert_eq!(
            pav_recalibrate(&[0.3, 0.6, 0.9], &[1.0, 1.0, 1.0]).unwrap(),
            vec![1.0, 1.0, 1.0]
        );
        // Ties pooled before fitting.
        let fit = pav_recalibrate(&[0.5, 0.5, 0.9], &[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(fit, vec![0.5, 0.5, 1.0]);
    }

    #[test]
    fn mcb_hand_cases() {
        assert_relative_eq!(
            miscalibration_mcb(&[0.2, 0.8], &[0.0, 1.0]).unwrap(),
            0.04,
            epsilon = 1e-15
        );
        // Perfectly recalibrated input.
        assert_eq!(miscalibration_mcb(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        // Constant 1/2 with balanced outcomes: pooled fit is 1/2.
        assert_eq!(
            miscalibration_mcb(&[0.5, 0.5, 0.5, 0.5], &[0.0, 1.0, 1.0, 0.0]).unwrap(),
            0.0
        );
        assert!(miscalibration_mcb(&[0.5], &[1.0, 0.0]).is_err());
        assert!(miscalibration_mcb(&[1.5], &[1.0]).is_err());
    }

    /// Brute-force optimum over monotone step functions whose values are
    /// block means of some contiguous partition of the sorted sequence.
    fn brute_force_isotonic_sse(probs: &[f64], outcomes: &[f64]) -> f64 {
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
        let y: Vec<f64> = order.iter().map(|&i| outcomes[i]).collect();
        let n = y.len();
        let mut best = f64::INFINITY;
        for mask in 0..(1u32 << (n - 1)) {
            // mask bit k set = cut between k and k+1
            let mut fits = Vec::new();
            let mut block = vec![y[0]];
            for k in 1..n {
                if mask & (1 << (k - 1)) != 0 {
                    fits.push(block.clone());
                    block = Vec::new();
                }
                block.push(y[k]);
            }
            fits.push(block);
            let means: Vec<f64> =
                fits.iter().map(|b| b.iter().sum::<f64>() / b.len() as f64).collect();
            if means.windows(2).any(|w| w[0] > w[1]) {
                continue;
            }
            let mut sse = 0.0;
            for (b, m) in fits.iter().zip(&means) {
                sse += b.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
            }
            best = best.min(sse);
        }
        best
    }

    proptest! {
        #[test]
        fn pav_minimizes_sse_among_monotone_fits(
            probs in proptest::collection::vec(0.0f64..=1.0, 2..=6),
            bits in proptest::collection::vec(0u8..=1, 6)
        ) {
            let outcomes: Vec<f64> = probs.iter().enumerate()
                .map(|(k, _)| f64::from(bits[k % bits.len()]))
                .collect();
            let fit = pav_recalibrate(&probs, &outcomes).unwrap();
            // Nondecreasing along sorted probs.
            let mut order: Vec<usize> = (0..probs.len()).collect();
            order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
            for w in order.windows(2) {
                prop_assert!(fit[w[0]] <= fit[w[1]] + 1e-12);
            }
            let sse: f64 = fit.iter().zip(&outcomes).map(|(f, o)| (f - o) * (f - o)).sum();
            let best = brute_force_isotonic_sse(&probs, &outcomes);
            prop_assert!(sse <= best + 1e-9, "pav sse {sse} vs brute force {best}");
            // Never negative, and fast path agrees with the reference path.
            let mcb = miscalibration_mcb(&probs, &outcomes).unwrap();
            prop_assert!(mcb >= 0.0);
        }

        #[test]
        fn sorted_fast_path_matches_reference(
            probs in proptest::collection::vec(0.0f64..=1.0, 2..40),
            bits in proptest::collection::vec(0u8..=1, 40)
        ) {
            let outcomes: Vec<f64> = (0..probs.len()).map(|k| f64::from(bits[k])).collect();
            let reference = miscalibration_mcb(&probs, &outcomes).unwrap();
            let mut order: Vec<usize> = (0..probs.len()).collect();
            order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
            let sp: Vec<f64> = order.iter().map(|&i| probs[i]).collect();
            let so: Vec<f64> = order.iter().map(|&i| outcomes[i]).collect();
            prop_assert!((mcb_sorted(&sp, &so) - reference).abs() < 1e-12);
        }
    }

    #[test]
    fn bootstrap_test_basics() {
        // MCB = 0 gives a p-value near 1.
        let probs = vec![0.0, 1.0, 0.0, 1.0];
        let outcomes = vec![0.0, 1.0, 0.0, 1.0];
        let report = miscalibration_test(&probs, &outcomes, 200, 1).unwrap();
        assert!(report.threshold_or_pvalue > 0.9, "p {}", report.threshold_or_pvalue);
        assert_eq!(report.decision, Decision::Pass);
        assert!(miscalibration_test(&probs, &outcomes, 50, 1).is_err());
    }

    #[test]
    fn bootstrap_null_rejection_rate_is_controlled() {
        // Under the null (outcomes drawn from the forecasts) the rejection
        // rate at 5% stays at or below ~7% over 1,000 replications.
        let n = 150usize;
        let reps = 1000u64;
        let rejects: usize = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stream_rng(0x5eed, rep);
                let probs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                let outcomes: Vec<f64> = probs
                    .iter()
                    .map(|&p| f64::from(rng.random::<f64>() < p))
                    .collect();
                let report = miscalibration_test(&probs, &outcomes, 500, rep ^ 0x77).unwrap();
                usize::from(report.decision.is_reject())
            })
            .sum();
        let rate = rejects as f64 / reps as f64;
        assert!((0.02..=0.07).contains(&rate), "null rejection rate {rate}");
    }
}
