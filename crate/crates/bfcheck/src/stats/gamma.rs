//! Rank-uniformity testing via the minimal two-sided binomial tail
//! probability across the ECDF evaluation grid, with Monte-Carlo null
//! quantiles.
//!
//! No efficient closed form for the statistic's CDF is available, so the
//! rejection threshold is the empirical alpha-quantile over simulated sets
//! of iid uniform ranks, cached per (S, M, alpha, n_mc, seed).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Default Monte-Carlo replicates for null tables.
pub const DEFAULT_NULL_MC: usize = 10_000;
/// Seed for the shared null tables; independent of any simulation seed.
pub const NULL_TABLE_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Null-distribution summary for the gamma statistic at (S, M, alpha).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaNullTable {
    pub s: usize,
    pub m: usize,
    pub alpha: f64,
    pub quantile: f64,
    pub n_mc: usize,
    pub seed: u64,
}

/// Per-evaluation-point binomial CDF provider. The hot paths precompute a
/// band of CDF values around the null expectation for every grid point and
/// fall back to direct evaluation outside it.
struct BinomBand {
    s: u64,
    m: usize,
    lo: Vec<i64>,
    values: Vec<Vec<f64>>,
}

impl BinomBand {
    fn new(s: usize, m: usize) -> Self {
        let s_u = s as u64;
        let rows: Vec<(i64, Vec<f64>)> = (1..=m)
            .into_par_iter()
            .map(|j| {
                let z = j as f64 / (m as f64 + 1.0);
                let center = s as f64 * z;
                let sd = (s as f64 * z * (1.0 - z)).sqrt();
                let lo = ((center - 6.5 * sd - 2.0).floor() as i64).max(0);
                let hi = ((center + 6.5 * sd + 2.0).ceil() as i64).min(s as i64);
                let dist = Binomial::new(z, s_u).expect("z in (0,1)");
                let values = (lo..=hi).map(|r| dist.cdf(r as u64)).collect();
                (lo, values)
            })
            .collect();
        let (lo, values) = rows.into_iter().unzip();
        BinomBand { s: s_u, m, lo, values }
    }

    /// CDF of Binomial(S, j/(M+1)) at r, allowing r = -1 (gives 0).
    fn cdf(&self, j: usize, r: i64) -> f64 {
        if r < 0 {
            return 0.0;
        }
        if r >= self.s as i64 {
            return 1.0;
        }
        let row = &self.values[j - 1];
        let lo = self.lo[j - 1];
        let idx = r - lo;
        if idx >= 0 && (idx as usize) < row.len() {
            row[idx as usize]
        } else if idx < 0 {
            let z = j as f64 / (self.m as f64 + 1.0);
            Binomial::new(z, self.s).expect("z in (0,1)").cdf(r as u64)
        } else {
            let z = j as f64 / (self.m as f64 + 1.0);
            Binomial::new(z, self.s).expect("z in (0,1)").cdf(r as u64)
        }
    }
}

fn direct_cdf(s: u64, m: usize, j: usize, r: i64) -> f64 {
    if r < 0 {
        return 0.0;
    }
    if r >= s as i64 {
        return 1.0;
    }
    let z = j as f64 / (m as f64 + 1.0);
    Binomial::new(z, s).expect("z in (0,1)").cdf(r as u64)
}

/// Core statistic evaluation over rank counts. `counts[v]` is the number of
/// ranks equal to v. The step function R_j = #{ranks < j} is constant
/// between distinct rank values, and within such a block the lower tail is
/// minimized at the block's right edge and the upper tail at its left edge,
/// so only two CDF evaluations per distinct rank value are needed.
fn gamma_from_counts(counts: &[u64], m: usize, cdf: &dyn Fn(usize, i64) -> f64) -> f64 {
    let mut gamma = f64::INFINITY;
    let mut r_cur: i64 = 0;
    let mut block_start = 1usize;
    let eval_block = |a: usize, b: usize, r: i64, gamma: &mut f64| {
        let lower = 2.0 * cdf(b, r);
        let upper = 2.0 * (1.0 - cdf(a, r - 1));
        let v = lower.min(upper);
        if v < *gamma {
            *gamma = v;
        }
    };
    for (v, &c) in counts.iter().enumerate().take(m + 1) {
        if c == 0 {
            continue;
        }
        let jump = v + 1; // R_j increases at j = v + 1
        if jump > m {
            break;
        }
        if jump > block_start {
            eval_block(block_start, jump - 1, r_cur, &mut gamma);
        }
        r_cur += c as i64;
        block_start = jump;
    }
    if block_start <= m {
        eval_block(block_start, m, r_cur, &mut gamma);
    }
    gamma.min(1.0)
}

fn counts_from_ranks(ranks: &[u32], m: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; m + 1];
    for &r in ranks {
        if r as usize > m {
            return Err(Error::RankOutOfRange { rank: r, max: m });
        }
        counts[r as usize] += 1;
    }
    Ok(counts)
}

/// The gamma statistic: min over the grid z_j = j/(M+1), j = 1..M, of
/// 2 min(BinomCDF(R_j; S, z_j), 1 - BinomCDF(R_j - 1; S, z_j)) with
/// R_j = #{ranks < j}. Smaller values are stronger evidence against
/// uniformity; invariant under permutations of the ranks.
pub fn gamma_statistic(ranks: &[u32], m: usize) -> Result<f64> {
    if ranks.len() < 2 {
        return Err(Error::NotEnoughData {
            need: 2,
            got: ranks.len(),
        });
    }
    let counts = counts_from_ranks(ranks, m)?;
    let s = ranks.len() as u64;
    Ok(gamma_from_counts(&counts, m, &|j, r| direct_cdf(s, m, j, r)))
}

/// Empirical alpha-quantile of the gamma statistic over `n_mc` sets of S iid
/// uniform{0..M} ranks. Reproducible from its seed.
pub fn gamma_null_quantile(
    s: usize,
    m: usize,
    alpha: f64,
    n_mc: usize,
    seed: u64,
) -> Result<GammaNullTable> {
    if s < 2 {
        return Err(Error::NotEnoughData { need: 2, got: s });
    }
    if n_mc < 1000 {
        return Err(Error::Invalid(format!(
            "need at least 1,000 Monte-Carlo replicates, got {n_mc}"
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Invalid(format!("alpha must be in (0, 1], got {alpha}")));
    }
    let band = BinomBand::new(s, m);
    let mut stats: Vec<f64> = (0..n_mc as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep);
            let mut counts = vec![0u64; m + 1];
            for _ in 0..s {
                counts[rng.random_range(0..=m)] += 1;
            }
            gamma_from_counts(&counts, m, &|j, r| band.cdf(j, r))
        })
        .collect();
    stats.sort_unstable_by(f64::total_cmp);
    let idx = ((alpha * n_mc as f64).ceil() as usize).clamp(1, n_mc) - 1;
    Ok(GammaNullTable {
        s,
        m,
        alpha,
        quantile: stats[idx],
        n_mc,
        seed,
    })
}

/// log(gamma / null quantile); negative means rejection at the table's
/// alpha.
pub fn log_gamma_ratio(ranks: &[u32], m: usize, table: &GammaNullTable) -> Result<f64> {
    if table.s != ranks.len() || table.m != m {
        return Err(Error::MismatchedNullTable {
            table_s: table.s,
            table_m: table.m,
            s: ranks.len(),
            m,
        });
    }
    let gamma = gamma_statistic(ranks, m)?;
    Ok(gamma.ln() - table.quantile.ln())
}

type CacheKey = (usize, usize, u64, usize, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<GammaNullTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<GammaNullTable>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached null table for (s, m, alpha) at the default replicate count and
/// seed.
pub fn null_table(s: usize, m: usize, alpha: f64) -> Result<Arc<GammaNullTable>> {
    let key = (s, m, alpha.to_bits(), DEFAULT_NULL_MC, NULL_TABLE_SEED);
    if let Some(t) = cache().lock().unwrap().get(&key) {
        return Ok(Arc::clone(t));
    }
    let table = Arc::new(gamma_null_quantile(s, m, alpha, DEFAULT_NULL_MC, NULL_TABLE_SEED)?);
    cache()
        .lock()
        .unwrap()
        .entry(key)
        .or_insert_with(|| Arc::clone(&table));
    Ok(table)
}

/// Precomputes cached tables for several S values in parallel.
pub fn precompute_null_tables(sizes: &[usize], m: usize, alpha: f64) -> Result<()> {
    let missing: Vec<usize> = {
        let guard = cache().lock().unwrap();
        sizes
            .iter()
            .copied()
            .filter(|&s| {
                s >= 2 && !guard.contains_key(&(s, m, alpha.to_bits(), DEFAULT_NULL_MC, NULL_TABLE_SEED))
            })
            .collect()
    };
    let tables: Vec<GammaNullTable> = missing
        .par_iter()
        .map(|&s| gamma_null_quantile(s, m, alpha, DEFAULT_NULL_MC, NULL_TABLE_SEED))
        .collect::<Result<_>>()?;
    let mut guard = cache().lock().unwrap();
    for t in tables {
        let key = (t.s, t.m, t.alpha.to_bits(), t.n_mc, t.seed);
        guard.entry(key).or_insert_with(|| Arc::new(t));
    }
    Ok(())
}

/// Simultaneous ECDF band implied by a null table: for each grid point, the
/// widest ECDF-minus-uniform deviations that do not reject at the table's
/// quantile. Returns (z_j, lo, hi) triples subsampled to at most
/// `max_points`.
pub fn ecdf_band(table: &GammaNullTable, max_points: usize) -> Vec<(f64, f64, f64)> {
    let s = table.s as u64;
    let m = table.m;
    let q = table.quantile;
    let stride = (m / max_points.max(1)).max(1);
    let mut out = Vec::new();
    let mut js: Vec<usize> = (1..=m).filter(|j| j % stride == 0).collect();
    if js.last() != Some(&m) {
        js.push(m);
    }
    for j in js {
        let z = j as f64 / (m as f64 + 1.0);
        let dist = Binomial::new(z, s).expect("z in (0,1)");
        // Largest r whose upper tail does not reject.
        let (mut lo, mut hi) = (0i64, s as i64);
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            let tail = if mid == 0 { 1.0 } else { 1.0 - dist.cdf(mid as u64 - 1) };
            if 2.0 * tail >= q {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let upper_r = lo;
        // Smallest r whose lower tail does not reject.
        let (mut lo2, mut hi2) = (0i64, s as i64);
        while lo2 < hi2 {
            let mid = (lo2 + hi2) / 2;
            if 2.0 * dist.cdf(mid as u64) >= q {
                hi2 = mid;
            } else {
                lo2 = mid + 1;
            }
        }
        let lower_r = lo2;
        out.push((
            z,
            lower_r as f64 / table.s as f64 - z,
            upper_r as f64 / table.s as f64 - z,
        ));
    }
    out
}

/// The smallest absolute ECDF deviation at the middle of the rank
/// distribution that triggers rejection at `alpha`: the detectable
/// miscalibration for a study with S simulations.
pub fn sbc_sensitivity(s: usize, alpha: f64) -> Result<f64> {
    const M: usize = 999;
    if s < 2 {
        return Err(Error::NotEnoughData { need: 2, got: s });
    }
    let table = null_table(s, M, alpha)?;
    let dist = Binomial::new(0.5, s as u64).expect("valid binomial");
    let start = s / 2;
    for r in start..=s {
        let upper_tail = 2.0 * (1.0 - dist.cdf(r as u64 - 1));
        if upper_tail < table.quantile {
            return Ok(r as f64 / s as f64 - 0.5);
        }
    }
    Ok(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Direct O(S x M) evaluation straight from the definition.
    fn naive_gamma(ranks: &[u32], m: usize) -> f64 {
        let s = ranks.len() as u64;
        let mut gamma = f64::INFINITY;
        for j in 1..=m {
            let z = j as f64 / (m as f64 + 1.0);
            let r_j = ranks.iter().filter(|&&r| (r as usize) < j).count() as i64;
            let dist = Binomial::new(z, s).unwrap();
            let lower = if r_j >= s as i64 { 1.0 } else { dist.cdf(r_j as u64) };
            let upper = if r_j == 0 { 1.0 } else { 1.0 - dist.cdf(r_j as u64 - 1) };
            gamma = gamma.min(2.0 * lower.min(upper));
        }
        gamma.min(1.0)
    }

    #[test]
    fn matches_naive_evaluation() {
        let cases: Vec<(Vec<u32>, usize)> = vec![
            (vec![0, 0, 0, 0, 0], 9),
            (vec![0, 3, 3, 9, 9], 9),
            (vec![5, 5, 5, 5], 9),
            ((0..100).map(|k| k * 10).collect(), 999),
            (vec![999, 999, 0], 999),
            (vec![1, 2, 3, 4, 5, 6, 7, 8], 9),
        ];
        for (ranks, m) in cases {
            let fast = gamma_statistic(&ranks, m).unwrap();
            let slow = naive_gamma(&ranks, m);
            assert_relative_eq!(fast, slow, max_relative = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn agrees_with_naive_on_random_inputs(
            ranks in proptest::collection::vec(0u32..=19, 2..60)
        ) {
            let fast = gamma_statistic(&ranks, 19).unwrap();
            let slow = naive_gamma(&ranks, 19);
            prop_assert!((fast - slow).abs() <= 1e-12 * slow.max(1e-300));
        }

        #[test]
        fn permutation_invariant(mut ranks in proptest::collection::vec(0u32..=99, 5..40)) {
            let a = gamma_statistic(&ranks, 99).unwrap();
            ranks.reverse();
            ranks.rotate_left(2);
            let b = gamma_statistic(&ranks, 99).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn extreme_concentration_is_astronomically_small() {
        let ranks = vec![0u32; 100];
        let stat = gamma_statistic(&ranks, 999).unwrap();
        assert!(stat < 1e-200, "stat {stat}");
    }

    #[test]
    fn evenly_spread_ranks_are_not_rejected() {
        // Direct evaluation: the minimum sits at j = 1, where exactly one
        // of 100 ranks falls below z = 1/1000, giving
        // 2 (1 - 0.999^100) = 0.19041570577260014. Comfortably above any
        // 5% null quantile, so evenly spread ranks never reject.
        let ranks: Vec<u32> = (0..100).map(|j| j * 10).collect();
        let stat = gamma_statistic(&ranks, 999).unwrap();
        assert_relative_eq!(stat, naive_gamma(&ranks, 999), max_relative = 1e-12);
        assert_relative_eq!(stat, 0.19041570577260014, max_relative = 1e-12);
        let table = gamma_null_quantile(100, 999, 0.05, 2000, 3).unwrap();
        assert!(stat > table.quantile, "stat {stat} vs quantile {}", table.quantile);
        // Centered even spread avoids the edge effect entirely.
        let centered: Vec<u32> = (0..100).map(|j| j * 10 + 5).collect();
        let stat = gamma_statistic(&centered, 999).unwrap();
        assert!(stat > 0.5, "centered stat {stat}");
    }

    #[test]
    fn rank_out_of_range_is_an_error() {
        assert!(matches!(
            gamma_statistic(&[0, 1000], 999),
            Err(Error::RankOutOfRange { .. })
        ));
        assert!(gamma_statistic(&[1], 999).is_err());
    }

    #[test]
    fn null_table_reproducible_and_alpha_one_is_max() {
        let a = gamma_null_quantile(50, 99, 0.05, 1000, 7).unwrap();
        let b = gamma_null_quantile(50, 99, 0.05, 1000, 7).unwrap();
        assert_eq!(a, b);
        let top = gamma_null_quantile(50, 99, 1.0, 1000, 7).unwrap();
        let max = (0..1000u64)
            .map(|rep| {
                let mut rng = stream_rng(7, rep);
                let ranks: Vec<u32> = (0..50).map(|_| rng.random_range(0..=99) as u32).collect();
                gamma_statistic(&ranks, 99).unwrap()
            })
            .fold(f64::MIN, f64::max);
        assert_relative_eq!(top.quantile, max, max_relative = 1e-12);
    }

    #[test]
    fn null_quantile_nonincreasing_in_s() {
        let q100 = gamma_null_quantile(100, 999, 0.05, 4000, 11).unwrap().quantile;
        let q1000 = gamma_null_quantile(1000, 999, 0.05, 4000, 11).unwrap().quantile;
        // Monte-Carlo noise allowance: compare with slack.
        assert!(
            q1000 <= q100 * 1.25,
            "expected nonincreasing quantile, got {q100} -> {q1000}"
        );
    }

    #[test]
    fn log_ratio_semantics() {
        let table = gamma_null_quantile(100, 999, 0.05, 2000, 3).unwrap();
        let zeros = vec![0u32; 100];
        assert!(log_gamma_ratio(&zeros, 999, &table).unwrap() < -10.0);
        let mismatched = vec![0u32; 99];
        assert!(log_gamma_ratio(&mismatched, 999, &table).is_err());
    }

    #[test]
    fn null_calibration_near_nominal() {
        // Rejection rate under the null within [3%, 7%] at nominal 5%.
        let table = gamma_null_quantile(100, 999, 0.05, DEFAULT_NULL_MC, NULL_TABLE_SEED).unwrap();
        let n = 1000u64;
        let rejects = (0..n)
            .map(|rep| {
                let mut rng = stream_rng(0xabcdef, rep);
                let ranks: Vec<u32> =
                    (0..100).map(|_| rng.random_range(0..=999) as u32).collect();
                log_gamma_ratio(&ranks, 999, &table).unwrap() < 0.0
            })
            .filter(|&r| r)
            .count();
        let rate = rejects as f64 / n as f64;
        assert!((0.03..=0.07).contains(&rate), "null rejection rate {rate}");
    }

    #[test]
    fn null_distribution_matches_monte_carlo_oracle() {
        // KS distance between the statistic's distribution under uniform
        // ranks and an independent Monte-Carlo reference below 0.02.
        let s = 60usize;
        let m = 99usize;
        let draw = |seed: u64, n: usize| -> Vec<f64> {
            let mut out: Vec<f64> = (0..n as u64)
                .map(|rep| {
                    let mut rng = stream_rng(seed, rep);
                    let ranks: Vec<u32> =
                        (0..s).map(|_| rng.random_range(0..=m) as u32).collect();
                    gamma_statistic(&ranks, m).unwrap()
                })
                .collect();
            out.sort_unstable_by(f64::total_cmp);
            out
        };
        let a = draw(1, 20_000);
        let b = draw(2, 20_000);
        // Two-sample KS statistic.
        let (mut i, mut j, mut ks) = (0usize, 0usize, 0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            ks = ks.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        assert!(ks < 0.02, "KS distance {ks}");
    }

    #[test]
    fn sensitivity_matches_published_scale() {
        // 1/sqrt(S) scaling with the simultaneous-band constant.
        let d = sbc_sensitivity(2000, 0.05).unwrap();
        assert!((d - 0.036).abs() <= 0.002, "S=2000 sensitivity {d}");
    }
}
