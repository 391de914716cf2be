//! Data-averaged posterior tests: the average posterior model probability
//! must equal the model prior under correct computation. One-sample t when
//! the prior is known, Welch when it is estimated from the simulations, a
//! nonparametric bounded-mean test for distributions too wild for the t
//! approximation, and a Bayesian t-test Bayes factor. Also the
//! mean-Bayes-factor summary with its nonparametric lower confidence bound.

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{mean_var, CheckReport, Decision, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng};
use rand::Rng;

/// Bayes factor threshold treated as evidence of miscalibration.
pub const JZS_DECISION_LOG_BF: f64 = 2.302585092994046; // ln 10

fn two_sided_t_pvalue(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// One-sample two-sided t-test of mean(probs) against the known prior.
pub fn dap_t_test(probs: &[f64], prior_m1: f64) -> Result<CheckReport> {
    if probs.len() < 2 {
        return Err(Error::NotEnoughData {
            need: 2,
            got: probs.len(),
        });
    }
    let n = probs.len() as f64;
    let (mean, var) = mean_var(probs);
    if var == 0.0 {
        return Err(Error::DegenerateInput);
    }
    let se = (var / n).sqrt();
    let t = (mean - prior_m1) / se;
    let df = n - 1.0;
    let p = two_sided_t_pvalue(t, df);
    let t_crit = StudentsT::new(0.0, 1.0, df)
        .expect("positive df")
        .inverse_cdf(1.0 - DEFAULT_ALPHA / 2.0);
    let decision = if p < DEFAULT_ALPHA {
        Decision::Reject
    } else {
        Decision::Pass
    };
    Ok(CheckReport::new("dap_t", t, p, decision, probs.len())
        .with_extra("mean_diff", mean - prior_m1)
        .with_extra("ci_lo", mean - prior_m1 - t_crit * se)
        .with_extra("ci_hi", mean - prior_m1 + t_crit * se))
}

/// Welch two-sample t-test of mean(probs) against the mean of the binary
/// indicator sample, for runs where the implied prior must be estimated.
pub fn dap_welch(probs: &[f64], indicators: &[f64]) -> Result<CheckReport> {
    if probs.len() < 2 || indicators.len() < 2 {
        return Err(Error::NotEnoughData {
            need: 2,
            got: probs.len().min(indicators.len()),
        });
    }
    let (m1, v1) = mean_var(probs);
    let (m2, v2) = mean_var(indicators);
    let n1 = probs.len() as f64;
    let n2 = indicators.len() as f64;
    let se2 = v1 / n1 + v2 / n2;
    if se2 == 0.0 {
        return Err(Error::DegenerateInput);
    }
    let t = (m1 - m2) / se2.sqrt();
    let df = se2 * se2
        / ((v1 / n1) * (v1 / n1) / (n1 - 1.0) + (v2 / n2) * (v2 / n2) / (n2 - 1.0));
    let p = two_sided_t_pvalue(t, df);
    let t_crit = StudentsT::new(0.0, 1.0, df)
        .expect("positive df")
        .inverse_cdf(1.0 - DEFAULT_ALPHA / 2.0);
    let se = se2.sqrt();
    let decision = if p < DEFAULT_ALPHA {
        Decision::Reject
    } else {
        Decision::Pass
    };
    Ok(CheckReport::new("dap_welch", t, p, decision, probs.len())
        .with_extra("mean_diff", m1 - m2)
        .with_extra("df", df)
        .with_extra("ci_lo", m1 - m2 - t_crit * se)
        .with_extra("ci_hi", m1 - m2 + t_crit * se))
}

/// Monte-Carlo lower confidence bound (confidence 1 - delta) for the mean of
/// a variable bounded in [0, 1], from the order-statistic construction: mass
/// beyond the largest observation is pushed to the lower support endpoint in
/// the mirrored problem.
pub fn gaffke_lower_bound(xs: &[f64], delta: f64, n_mc: usize, rng: &mut SimRng) -> f64 {
    1.0 - gaffke_upper_bound_mirrored(xs, delta, n_mc, rng)
}

/// Upper confidence bound for the mean of 1 - X, i.e. the mirrored problem;
/// kept private to one orientation so both bounds share one code path.
fn gaffke_upper_bound_mirrored(xs: &[f64], delta: f64, n_mc: usize, rng: &mut SimRng) -> f64 {
    let mut sorted: Vec<f64> = xs.iter().map(|&x| 1.0 - x).collect();
    sorted.sort_unstable_by(f64::total_cmp);
    gaffke_upper_bound_sorted(&sorted, delta, n_mc, rng)
}

/// Upper bound primitive on data sorted ascending: the (1-delta) quantile of
/// sum_i x_(i) (u_(i) - u_(i-1)) + (1 - u_(n)) over uniform order statistics
/// u, where the trailing term sends the unobserved upper tail to 1.
fn gaffke_upper_bound_sorted(sorted: &[f64], delta: f64, n_mc: usize, rng: &mut SimRng) -> f64 {
    let n = sorted.len();
    let mut stats = Vec::with_capacity(n_mc);
    let mut u = vec![0.0f64; n];
    for _ in 0..n_mc {
        for ui in u.iter_mut() {
            *ui = rng.random::<f64>();
        }
        u.sort_unstable_by(f64::total_cmp);
        let mut s = 1.0 - u[n - 1];
        let mut prev = 0.0;
        for (x, &ui) in sorted.iter().zip(u.iter()) {
            s += x * (ui - prev);
            prev = ui;
        }
        stats.push(s);
    }
    stats.sort_unstable_by(f64::total_cmp);
    let idx = (((1.0 - delta) * n_mc as f64).ceil() as usize).clamp(1, n_mc) - 1;
    stats[idx]
}

/// Two-sided nonparametric test of H0: E[X] = mu0 for X bounded in [0, 1]:
/// lower confidence bounds on X and on 1 - X at level alpha/2 each form an
/// interval, and the test rejects when mu0 falls outside it.
pub fn gaffke_test(xs: &[f64], mu0: f64, n_mc: usize, seed: u64) -> Result<CheckReport> {
    if xs.len() < 2 {
        return Err(Error::NotEnoughData {
            need: 2,
            got: xs.len(),
        });
    }
    for &x in xs {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfUnitInterval(x));
        }
    }
    let delta = DEFAULT_ALPHA / 2.0;
    let lower = gaffke_lower_bound(xs, delta, n_mc, &mut stream_rng(seed, 0));
    let mirrored: Vec<f64> = xs.iter().map(|&x| 1.0 - x).collect();
    let upper = 1.0 - gaffke_lower_bound(&mirrored, delta, n_mc, &mut stream_rng(seed, 1));
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let decision = if mu0 < lower || mu0 > upper {
        Decision::Reject
    } else {
        Decision::Pass
    };
    Ok(CheckReport::new("dap_gaffke", mean, DEFAULT_ALPHA, decision, xs.len())
        .with_extra("ci_lo", lower)
        .with_extra("ci_hi", upper)
        .with_extra("mu0", mu0))
}

/// log BF_{1,0} of the one-sample Bayesian t-test with a Cauchy(0, r) prior
/// on the standardized effect, computed by adaptive quadrature of the
/// g-mixture representation after the change of variables g = u/(1-u).
pub fn jzs_ttest_bf(xs: &[f64], r_scale: f64) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::NotEnoughData {
            need: 2,
            got: xs.len(),
        });
    }
    if !(r_scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "prior scale must be positive, got {r_scale}"
        )));
    }
    let (mean, var) = mean_var(xs);
    if var == 0.0 {
        return Err(Error::DegenerateInput);
    }
    let n = xs.len() as f64;
    let t = mean / (var / n).sqrt();
    Ok(jzs_log_bf_from_t(t, n, r_scale))
}

/// The same Bayes factor from the t statistic directly.
pub fn jzs_log_bf_from_t(t: f64, n: f64, r_scale: f64) -> f64 {
    let nu = n - 1.0;
    let r2 = r_scale * r_scale;
    // log of pi(g) * BF10(g) with g integrated against InvGamma(1/2, r^2/2):
    // pi(g) = r/sqrt(2 pi) g^{-3/2} exp(-r^2/(2g)).
    let log_f = |g: f64| -> f64 {
        let one_ng = 1.0 + n * g;
        r_scale.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 1.5 * g.ln() - r2 / (2.0 * g)
            - 0.5 * one_ng.ln()
            + 0.5 * (nu + 1.0) * ((1.0 + t * t / nu).ln() - (1.0 + t * t / (nu * one_ng)).ln())
    };
    // u in [0,1] with g = u/(1-u); at u -> 1 the integrand tends to
    // r (1 + t^2/nu)^{(nu+1)/2} / sqrt(2 pi n) after the Jacobian.
    let log_endpoint = r_scale.ln() - 0.5 * (2.0 * std::f64::consts::PI * n).ln()
        + 0.5 * (nu + 1.0) * (1.0 + t * t / nu).ln();
    let log_integrand = |u: f64| -> f64 {
        if u <= 0.0 {
            f64::NEG_INFINITY
        } else if u >= 1.0 {
            log_endpoint
        } else {
            let g = u / (1.0 - u);
            log_f(g) - 2.0 * (1.0 - u).ln()
        }
    };
    // Shift by the maximum over a coarse grid, then integrate the shifted
    // integrand adaptively.
    let coarse: Vec<f64> = (0..=200).map(|k| log_integrand(k as f64 / 200.0)).collect();
    let shift = coarse.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !shift.is_finite() {
        return f64::NEG_INFINITY;
    }
    let f = |u: f64| (log_integrand(u) - shift).exp();
    let mut integral = 0.0;
    for k in 0..100 {
        let a = k as f64 / 100.0;
        let b = (k + 1) as f64 / 100.0;
        integral += adaptive_simpson(&f, a, b, 1e-8 / 100.0, 30);
    }
    shift + integral.ln()
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(a: f64, fa: f64, fm: f64, b: f64, fb: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, fa, flm, m, fm);
        let right = simpson(m, fm, frm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, fa, fm, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, depth)
}

/// Truncation point for the nonparametric lower bound on the mean Bayes
/// factor: E[BF] >= E[min(BF, c)], and min(BF, c)/c is bounded in [0, 1].
pub const GOOD_LOWER_BOUND_TRUNCATION: f64 = 2.0;

/// Summary of Bayes factors observed in favor of the wrong model: their mean
/// should be 1. Only a lower confidence bound above 1 is conclusive evidence
/// of a problem; a small sample mean is not, since no useful upper bound
/// exists without extra assumptions.
pub fn good_check_summary(log_bfs_under_m1: &[f64], seed: u64) -> Result<CheckReport> {
    if log_bfs_under_m1.len() < 2 {
        return Err(Error::NotEnoughData {
            need: 2,
            got: log_bfs_under_m1.len(),
        });
    }
    let bfs: Vec<f64> = log_bfs_under_m1.iter().map(|&l| l.exp()).collect();
    let n = bfs.len() as f64;
    let (mean, var) = mean_var(&bfs);
    let sem = (var / n).sqrt();
    let c = GOOD_LOWER_BOUND_TRUNCATION;
    let scaled: Vec<f64> = bfs.iter().map(|&b| (b.min(c)) / c).collect();
    let lower =
        c * gaffke_lower_bound(&scaled, DEFAULT_ALPHA, 2000, &mut stream_rng(seed, 0));
    let decision = if lower > 1.0 {
        Decision::Reject
    } else {
        Decision::Pass
    };
    Ok(
        CheckReport::new("good_check", mean, 1.0, decision, bfs.len())
            .with_extra("sem", sem)
            .with_extra("variance", var)
            .with_extra("lower_bound", lower),
    )
}
