//! Exact binomial tail tests for single names, multiple-testing adjustment,
//! and the sampling distribution of the number of rare names in a sample.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{adjusted_reference, ReferenceDistribution, TestCorpus};
use crate::error::{Error, Result};
use crate::sampling::{substream, Lane, MonteCarlo};
use crate::special::ln_choose;

/// Smallest tail probability ever reported. Exact tails that underflow are
/// floored here so a report never shows a p-value of exactly zero.
pub const TAIL_FLOOR: f64 = f64::MIN_POSITIVE;

fn check_p(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("probability {p} outside [0, 1]")))
    }
}

/// P(X = k) for X ~ binomial(n, p).
pub fn binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

// (P(X < k), P(X ≥ k)); the side away from the mean is summed directly and
// the other is its complement.
fn split(n: u64, p: f64, k: u64) -> (f64, f64) {
    if k == 0 {
        return (0.0, 1.0);
    }
    if k > n {
        return (1.0, 0.0);
    }
    if k as f64 > n as f64 * p {
        let upper: f64 = (k..=n).rev().map(|j| binomial_pmf(n, p, j)).sum();
        let upper = upper.min(1.0);
        (1.0 - upper, upper)
    } else {
        let lower: f64 = (0..k).rev().map(|j| binomial_pmf(n, p, j)).sum();
        let lower = lower.min(1.0);
        (lower, 1.0 - lower)
    }
}

/// P(X ≥ k) for X ~ binomial(n, p).
pub fn binomial_tail(n: u64, p: f64, k: u64) -> Result<f64> {
    check_p(p)?;
    if k > n {
        return Err(Error::domain(format!("k = {k} exceeds n = {n}")));
    }
    Ok(split(n, p, k).1)
}

/// P(X ≤ k) for X ~ binomial(n, p). Saturates at 1 for k ≥ n.
pub fn binomial_cdf(n: u64, p: f64, k: u64) -> Result<f64> {
    check_p(p)?;
    Ok(split(n, p, k.saturating_add(1)).0)
}

/// Smallest k with P(X ≤ k) ≥ q.
pub fn binomial_quantile(n: u64, p: f64, q: f64) -> Result<u64> {
    check_p(p)?;
    check_p(q)?;
    let mut acc = 0.0;
    for k in 0..=n {
        acc += binomial_pmf(n, p, k);
        if acc >= q {
            return Ok(k);
        }
    }
    Ok(n)
}

/// Which corpus slice and reference an individual-name test is run against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    /// Contested occurrences only, against the reference with contested
    /// occurrences removed and one artificial occurrence per corpus name.
    Contested,
    /// Contested occurrences only, against the unadjusted reference.
    ContestedRaw,
    /// Every occurrence, against the unadjusted reference.
    Full,
    /// Caller-supplied count and sample size, unadjusted reference.
    Custom { k_obs: u64, n: u64 },
}

impl TailMode {
    pub fn label(&self) -> String {
        match self {
            TailMode::Contested => "contested slice, adjusted reference".into(),
            TailMode::ContestedRaw => "contested slice, raw reference".into(),
            TailMode::Full => "all occurrences, raw reference".into(),
            TailMode::Custom { k_obs, n } => format!("custom k = {k_obs}, n = {n}, raw reference"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailTestResult {
    pub name_key: String,
    pub k_obs: u64,
    pub n: u64,
    pub p_name: f64,
    pub tail: f64,
    pub adjusted_tail: f64,
    pub assumption_label: String,
}

impl TailTestResult {
    pub fn from_triple(name: impl Into<String>, k_obs: u64, n: u64, p_name: f64, label: impl Into<String>) -> Result<Self> {
        let tail = binomial_tail(n, p_name, k_obs)?.max(TAIL_FLOOR);
        Ok(Self {
            name_key: name.into(),
            k_obs,
            n,
            p_name,
            tail,
            adjusted_tail: tail,
            assumption_label: label.into(),
        })
    }
}

/// Upper-tail test of how often `name` occurs in the chosen corpus slice.
pub fn name_tail_test(
    name: &str,
    corpus: &TestCorpus,
    reference: &ReferenceDistribution,
    mode: TailMode,
) -> Result<TailTestResult> {
    let (k_obs, n, p_name) = match mode {
        TailMode::Custom { k_obs, n } => {
            let p = reference
                .proportion(name)
                .ok_or_else(|| Error::MissingName(name.to_string()))?;
            (k_obs, n, p)
        }
        TailMode::Contested | TailMode::ContestedRaw | TailMode::Full => {
            if corpus.is_empty() {
                return Err(Error::domain("corpus is empty"));
            }
            if !reference.contains(name) {
                return Err(Error::MissingName(name.to_string()));
            }
            let slice = match mode {
                TailMode::Full => corpus.clone(),
                _ => corpus.contested(),
            };
            let p = if mode == TailMode::Contested {
                adjusted_reference(reference, corpus)?
                    .proportion(name)
                    .ok_or_else(|| Error::MissingName(name.to_string()))?
            } else {
                reference.proportion(name).unwrap()
            };
            (slice.count_of(name), slice.len() as u64, p)
        }
    };
    TailTestResult::from_triple(name, k_obs, n, p_name, mode.label())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    Bonferroni,
    Holm,
}

impl std::str::FromStr for Adjustment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bonferroni" => Ok(Adjustment::Bonferroni),
            "holm" => Ok(Adjustment::Holm),
            _ => Err(format!("unknown adjustment `{s}`")),
        }
    }
}

/// Family-wise adjusted p-values, in input order.
pub fn adjust(tails: &[f64], method: Adjustment) -> Result<Vec<f64>> {
    for &p in tails {
        check_p(p)?;
    }
    let m = tails.len() as f64;
    Ok(match method {
        Adjustment::Bonferroni => tails.iter().map(|&p| (p * m).min(1.0)).collect(),
        Adjustment::Holm => {
            let mut order: Vec<usize> = (0..tails.len()).collect();
            order.sort_by(|&a, &b| tails[a].partial_cmp(&tails[b]).unwrap().then(a.cmp(&b)));
            let mut out = vec![0.0; tails.len()];
            let mut running = 0.0f64;
            for (rank, &i) in order.iter().enumerate() {
                let v = ((m - rank as f64) * tails[i]).min(1.0);
                running = running.max(v);
                out[i] = running;
            }
            out
        }
    })
}

/// Applies `adjust` to a family of tail tests in place.
pub fn adjust_results(results: &mut [TailTestResult], method: Adjustment) -> Result<()> {
    let raw: Vec<f64> = results.iter().map(|r| r.tail).collect();
    for (r, a) in results.iter_mut().zip(adjust(&raw, method)?) {
        r.adjusted_tail = a;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    WithReplacement,
    WithoutReplacement,
}

impl std::str::FromStr for Sampling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "with_replacement" | "with-replacement" => Ok(Sampling::WithReplacement),
            "without_replacement" | "without-replacement" => Ok(Sampling::WithoutReplacement),
            _ => Err(format!("unknown sampling `{s}`")),
        }
    }
}

/// A pool of `total` occurrences of which `rare` belong to names seen once.
/// Each rare name contributes exactly one occurrence, so the number of rare
/// names drawn equals the number of rare occurrences drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RarePool {
    pub total: u64,
    pub rare: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloCheck {
    #[serde(rename = "B")]
    pub replications: u64,
    pub seed: u64,
    pub pmf: Vec<f64>,
    pub tv_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RareCountDistribution {
    pub pool: RarePool,
    pub n: u64,
    pub sampling: Sampling,
    pub pmf: Vec<f64>,
    pub cdf: Vec<f64>,
    pub monte_carlo: Option<MonteCarloCheck>,
}

impl RareCountDistribution {
    pub fn cdf_at(&self, k: u64) -> f64 {
        self.cdf
            .get(k as usize)
            .copied()
            .unwrap_or(1.0)
    }

    /// `threshold,cumulative_probability` rows.
    pub fn write_table_csv<W: Write>(&self, thresholds: impl IntoIterator<Item = u64>, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["threshold", "cumulative_probability"])?;
        for t in thresholds {
            out.write_record([t.to_string(), self.cdf_at(t).to_string()])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn exact_rare_pmf(pool: RarePool, n: u64, sampling: Sampling) -> Vec<f64> {
    match sampling {
        Sampling::WithReplacement => {
            let p = pool.rare as f64 / pool.total as f64;
            (0..=n).map(|k| binomial_pmf(n, p, k)).collect()
        }
        Sampling::WithoutReplacement => {
            let common = pool.total - pool.rare;
            let denom = ln_choose(pool.total, n);
            (0..=n)
                .map(|k| {
                    if k > pool.rare || n - k > common {
                        0.0
                    } else {
                        (ln_choose(pool.rare, k) + ln_choose(common, n - k) - denom).exp()
                    }
                })
                .collect()
        }
    }
}

fn simulate_rare_count<R: Rng>(pool: RarePool, n: u64, sampling: Sampling, rng: &mut R) -> u64 {
    match sampling {
        Sampling::WithReplacement => (0..n)
            .filter(|_| rng.random_range(0..pool.total) < pool.rare)
            .count() as u64,
        Sampling::WithoutReplacement => {
            let (mut rare_left, mut left, mut hits) = (pool.rare, pool.total, 0);
            for _ in 0..n {
                if rng.random_range(0..left) < rare_left {
                    rare_left -= 1;
                    hits += 1;
                }
                left -= 1;
            }
            hits
        }
    }
}

/// Distribution of the number of rare names in a sample of `n` from `pool`.
/// With `mc.replications > 0` a simulated pmf and its total-variation
/// distance from the exact pmf are attached.
pub fn rare_count_distribution(
    pool: RarePool,
    n: u64,
    sampling: Sampling,
    mc: MonteCarlo,
) -> Result<RareCountDistribution> {
    if pool.rare > pool.total {
        return Err(Error::domain(format!(
            "rare occurrences {} exceed pool total {}",
            pool.rare, pool.total
        )));
    }
    if pool.total == 0 {
        return Err(Error::domain("pool is empty"));
    }
    if sampling == Sampling::WithoutReplacement && n > pool.total {
        return Err(Error::domain(format!(
            "cannot draw {n} without replacement from {} occurrences",
            pool.total
        )));
    }
    let pmf = exact_rare_pmf(pool, n, sampling);
    let mut acc = 0.0;
    let cdf = pmf
        .iter()
        .map(|p| {
            acc += p;
            acc.min(1.0)
        })
        .collect();
    let monte_carlo = (mc.replications > 0).then(|| {
        let hist = (0..mc.replications)
            .into_par_iter()
            .fold(
                || vec![0u64; n as usize + 1],
                |mut h, r| {
                    let mut rng = substream(mc.seed, Lane::RareCount, r);
                    h[simulate_rare_count(pool, n, sampling, &mut rng) as usize] += 1;
                    h
                },
            )
            .reduce(
                || vec![0u64; n as usize + 1],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        let sim: Vec<f64> = hist
            .iter()
            .map(|&c| c as f64 / mc.replications as f64)
            .collect();
        let tv = 0.5 * sim.iter().zip(&pmf).map(|(a, b)| (a - b).abs()).sum::<f64>();
        MonteCarloCheck {
            replications: mc.replications,
            seed: mc.seed,
            pmf: sim,
            tv_distance: tv,
        }
    });
    Ok(RareCountDistribution {
        pool,
        n,
        sampling,
        pmf,
        cdf,
        monte_carlo,
    })
}

/// Published cumulative probabilities of drawing at most k rare names in a
/// sample of 53 from a pool of 2,582 occurrences.
pub const TABLE4_POOL_TOTAL: u64 = 2582;
pub const TABLE4_SAMPLE: u64 = 53;
pub const TABLE4: [(u64, f64); 8] = [
    (3, 0.003),
    (4, 0.011),
    (5, 0.032),
    (6, 0.073),
    (7, 0.14),
    (8, 0.24),
    (9, 0.36),
    (10, 0.50),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub pool: RarePool,
    pub n: u64,
    pub sampling: Sampling,
    pub max_abs_deviation: f64,
    /// (threshold, target, fitted)
    pub fitted: Vec<(u64, f64, f64)>,
}

/// Picks the rare-occurrence count R that minimises the largest absolute gap
/// between the exact cdf and `targets`.
pub fn calibrate_rare_pool(
    total: u64,
    n: u64,
    targets: &[(u64, f64)],
    sampling: Sampling,
) -> Result<Calibration> {
    if total == 0 || (sampling == Sampling::WithoutReplacement && n > total) {
        return Err(Error::domain("pool too small for the sample size"));
    }
    let mut best: Option<Calibration> = None;
    for rare in 0..=total {
        let pool = RarePool { total, rare };
        let pmf = exact_rare_pmf(pool, n, sampling);
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for p in &pmf {
            acc += p;
            cdf.push(acc.min(1.0));
        }
        let fitted: Vec<(u64, f64, f64)> = targets
            .iter()
            .map(|&(k, t)| (k, t, cdf.get(k as usize).copied().unwrap_or(1.0)))
            .collect();
        let dev = fitted
            .iter()
            .map(|(_, t, f)| (t - f).abs())
            .fold(0.0, f64::max);
        if best.as_ref().is_none_or(|b| dev < b.max_abs_deviation) {
            best = Some(Calibration {
                pool,
                n,
                sampling,
                max_abs_deviation: dev,
                fitted,
            });
        }
    }
    Ok(best.expect("at least one candidate"))
}
