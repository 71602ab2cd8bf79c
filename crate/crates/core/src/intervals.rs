//! Per-name confidence intervals under a historical reference and under a
//! uniform model, and the inside/outside classification of observed counts.
//!
//! Historical intervals are Monte Carlo percentile intervals: `B` multinomial
//! samples of size `n` are drawn from the reference and each name's count is
//! tallied. Endpoints are the equal-tail empirical quantiles, `lo` the
//! smallest count whose cumulative share reaches (1 − level)/2 and `hi` the
//! smallest count whose share reaches (1 + level)/2. The exact binomial
//! version of the same rule is available for cross-checking.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binomial::{binomial_pmf, binomial_quantile};
use crate::corpus::{ReferenceDistribution, TestCorpus};
use crate::error::{Error, Result};
use crate::sampling::{substream, Categorical, Lane, MonteCarlo};

pub const QUANTILE_RULE: &str =
    "equal-tail inverse-ECDF: lo = min k with F(k) >= (1-level)/2, hi = min k with F(k) >= (1+level)/2";

// (1 - 0.95) / 2 evaluates a hair above 0.025, which would push a boundary
// count that sits exactly on the quantile into the next integer.
fn tail_targets(level: f64) -> (f64, f64) {
    let nudge = 1.0 - 1e-12;
    ((1.0 - level) / 2.0 * nudge, (1.0 + level) / 2.0 * nudge)
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("level {level} outside (0, 1)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: u64,
    pub hi: u64,
}

impl Interval {
    pub fn contains(&self, k: u64) -> bool {
        self.lo <= k && k <= self.hi
    }

    pub fn width(&self) -> u64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameInterval {
    pub name_key: String,
    pub interval: Interval,
}

fn interval_from_histogram(hist: &[u64], total: u64, level: f64) -> Interval {
    let (q_lo, q_hi) = tail_targets(level);
    let b = total as f64;
    let mut lo = None;
    let mut hi = None;
    let mut cum = 0u64;
    for (k, &c) in hist.iter().enumerate() {
        cum += c;
        let share = cum as f64 / b;
        if lo.is_none() && share >= q_lo {
            lo = Some(k as u64);
        }
        if share >= q_hi {
            hi = Some(k as u64);
            break;
        }
    }
    let last = hist.len().saturating_sub(1) as u64;
    Interval {
        lo: lo.unwrap_or(last),
        hi: hi.unwrap_or(last),
    }
}

/// Per-name count histograms (index = count) from `B` multinomial samples.
pub fn simulate_name_counts<S: AsRef<str>>(
    reference: &ReferenceDistribution,
    names: &[S],
    n: u64,
    mc: MonteCarlo,
    lane: Lane,
) -> Result<Vec<Vec<u64>>> {
    let index: Vec<&str> = reference.iter().map(|(k, _)| k).collect();
    let sampler = Categorical::new(reference.iter().map(|(_, c)| c))
        .ok_or_else(|| Error::domain("reference distribution is empty"))?;
    // reference index -> position in `names`
    let mut track = vec![usize::MAX; index.len()];
    for (pos, name) in names.iter().enumerate() {
        let name = name.as_ref();
        let i = index
            .binary_search(&name)
            .map_err(|_| Error::MissingName(name.to_string()))?;
        track[i] = pos;
    }
    let width = n as usize + 1;
    let k = names.len();
    let hist = (0..mc.replications)
        .into_par_iter()
        .fold(
            || (vec![0u64; k * width], vec![0u64; k]),
            |(mut h, mut counts), r| {
                let mut rng = substream(mc.seed, lane, r);
                counts.iter_mut().for_each(|c| *c = 0);
                for _ in 0..n {
                    let t = track[sampler.sample(&mut rng)];
                    if t != usize::MAX {
                        counts[t] += 1;
                    }
                }
                for (pos, &c) in counts.iter().enumerate() {
                    h[pos * width + c as usize] += 1;
                }
                (h, counts)
            },
        )
        .map(|(h, _)| h)
        .reduce(
            || vec![0u64; k * width],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(hist.chunks(width).map(<[u64]>::to_vec).collect())
}

/// Monte Carlo percentile intervals for each of `names` at sample size `n`.
pub fn historical_intervals<S: AsRef<str>>(
    reference: &ReferenceDistribution,
    names: &[S],
    n: u64,
    level: f64,
    mc: MonteCarlo,
) -> Result<Vec<NameInterval>> {
    check_level(level)?;
    if n == 0 {
        return Err(Error::domain("sample size must be at least 1"));
    }
    if mc.replications == 0 {
        return Err(Error::domain("historical intervals need at least one replicate"));
    }
    let hists = simulate_name_counts(reference, names, n, mc, Lane::Interval)?;
    Ok(names
        .iter()
        .zip(hists)
        .map(|(name, h)| NameInterval {
            name_key: name.as_ref().to_string(),
            interval: interval_from_histogram(&h, mc.replications, level),
        })
        .collect())
}

/// Equal-tail interval of binomial(n, p) under the same quantile rule.
pub fn binomial_interval(n: u64, p: f64, level: f64) -> Result<Interval> {
    check_level(level)?;
    let (q_lo, q_hi) = tail_targets(level);
    Ok(Interval {
        lo: binomial_quantile(n, p, q_lo)?,
        hi: binomial_quantile(n, p, q_hi)?,
    })
}

/// Exact counterpart of [`historical_intervals`]: a single name's count is
/// binomial(n, p_name).
pub fn historical_intervals_exact<S: AsRef<str>>(
    reference: &ReferenceDistribution,
    names: &[S],
    n: u64,
    level: f64,
) -> Result<Vec<NameInterval>> {
    names
        .iter()
        .map(|name| {
            let name = name.as_ref();
            let p = reference
                .proportion(name)
                .ok_or_else(|| Error::MissingName(name.to_string()))?;
            Ok(NameInterval {
                name_key: name.to_string(),
                interval: binomial_interval(n, p, level)?,
            })
        })
        .collect()
}

/// Interval shared by every name when `n` draws are made uniformly over
/// `pool` equiprobable names.
pub fn uniform_intervals(pool: u64, n: u64, level: f64) -> Result<Interval> {
    if pool == 0 {
        return Err(Error::domain("uniform pool must hold at least one name"));
    }
    binomial_interval(n, 1.0 / pool as f64, level)
}

/// Probability mass binomial(n, p) puts on `interval`.
pub fn binomial_mass(n: u64, p: f64, interval: Interval) -> f64 {
    (interval.lo..=interval.hi.min(n))
        .map(|k| binomial_pmf(n, p, k))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    /// Inside both intervals.
    White,
    /// Inside the historical interval only.
    Black,
    /// Outside the historical interval.
    OutsideHistorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub name_key: String,
    pub observed: u64,
    pub hist_lo: u64,
    pub hist_hi: u64,
    pub unif_lo: u64,
    pub unif_hi: u64,
    pub outside_hist: bool,
    pub outside_unif: bool,
    pub marker: Marker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub n_outside_hist: usize,
    pub n_outside_unif: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalMeta {
    pub label: String,
    pub reference: String,
    pub level: f64,
    pub n: u64,
    #[serde(rename = "B")]
    pub replications: u64,
    pub seed: u64,
    pub uniform_pool: u64,
    pub quantile_rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    #[serde(flatten)]
    pub meta: IntervalMeta,
    pub summary: IntervalSummary,
    pub rows: Vec<IntervalRow>,
}

/// Flags each observed count against its historical interval and the shared
/// uniform interval.
pub fn classify(
    meta: IntervalMeta,
    observed: &[(String, u64)],
    hist: &[NameInterval],
    unif: Interval,
) -> Result<IntervalReport> {
    if observed.len() != hist.len() {
        return Err(Error::Shape(format!(
            "{} observed names vs {} intervals",
            observed.len(),
            hist.len()
        )));
    }
    let mut rows = Vec::with_capacity(observed.len());
    for ((name, count), h) in observed.iter().zip(hist) {
        if *name != h.name_key {
            return Err(Error::Shape(format!(
                "observed `{name}` aligned with interval for `{}`",
                h.name_key
            )));
        }
        let outside_hist = !h.interval.contains(*count);
        let outside_unif = !unif.contains(*count);
        let marker = match (outside_hist, outside_unif) {
            (true, _) => Marker::OutsideHistorical,
            (false, true) => Marker::Black,
            (false, false) => Marker::White,
        };
        rows.push(IntervalRow {
            name_key: name.clone(),
            observed: *count,
            hist_lo: h.interval.lo,
            hist_hi: h.interval.hi,
            unif_lo: unif.lo,
            unif_hi: unif.hi,
            outside_hist,
            outside_unif,
            marker,
        });
    }
    let summary = IntervalSummary {
        n_outside_hist: rows.iter().filter(|r| r.outside_hist).count(),
        n_outside_unif: rows.iter().filter(|r| r.outside_unif).count(),
    };
    Ok(IntervalReport {
        meta,
        summary,
        rows,
    })
}

/// Full audit of a corpus: names ordered by reference popularity, intervals at
/// the corpus size, classification against a uniform pool of `uniform_pool`
/// names. Every corpus name must be in `reference`; use an adjusted reference
/// when the corpus holds names the reference lacks.
pub fn interval_audit(
    corpus: &TestCorpus,
    reference: &ReferenceDistribution,
    uniform_pool: u64,
    level: f64,
    mc: MonteCarlo,
) -> Result<IntervalReport> {
    if corpus.is_empty() {
        return Err(Error::domain("corpus is empty"));
    }
    let n = corpus.len() as u64;
    let mut observed: Vec<(String, u64)> = corpus.counts().into_iter().collect();
    observed.sort_by(|a, b| {
        reference
            .count(&b.0)
            .cmp(&reference.count(&a.0))
            .then_with(|| a.0.cmp(&b.0))
    });
    let names: Vec<&str> = observed.iter().map(|(k, _)| k.as_str()).collect();
    let hist = historical_intervals(reference, &names, n, level, mc)?;
    let unif = uniform_intervals(uniform_pool, n, level)?;
    let meta = IntervalMeta {
        label: corpus.label.clone(),
        reference: reference.label.clone(),
        level,
        n,
        replications: mc.replications,
        seed: mc.seed,
        uniform_pool,
        quantile_rule: QUANTILE_RULE.to_string(),
    };
    classify(meta, &observed, &hist, unif)
}

impl IntervalReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "name", "observed", "hist_lo", "hist_hi", "unif_lo", "unif_hi", "outside_hist", "outside_unif",
        ])?;
        for r in &self.rows {
            out.write_record([
                r.name_key.clone(),
                r.observed.to_string(),
                r.hist_lo.to_string(),
                r.hist_hi.to_string(),
                r.unif_lo.to_string(),
                r.unif_hi.to_string(),
                r.outside_hist.to_string(),
                r.outside_unif.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Fraction of fresh simulated corpora whose count for each name falls inside
/// that name's interval.
pub fn empirical_coverage(
    reference: &ReferenceDistribution,
    intervals: &[NameInterval],
    n: u64,
    mc: MonteCarlo,
) -> Result<Vec<f64>> {
    let names: Vec<&str> = intervals.iter().map(|i| i.name_key.as_str()).collect();
    let hists = simulate_name_counts(reference, &names, n, mc, Lane::Names)?;
    Ok(intervals
        .iter()
        .zip(hists)
        .map(|(iv, h)| {
            let inside: u64 = (iv.interval.lo..=iv.interval.hi)
                .map(|k| h.get(k as usize).copied().unwrap_or(0))
                .sum();
            inside as f64 / mc.replications as f64
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> IntervalMeta {
        IntervalMeta {
            label: "t".into(),
            reference: "r".into(),
            level: 0.95,
            n: 10,
            replications: 0,
            seed: 0,
            uniform_pool: 10,
            quantile_rule: QUANTILE_RULE.into(),
        }
    }

    fn iv(name: &str, lo: u64, hi: u64) -> NameInterval {
        NameInterval {
            name_key: name.into(),
            interval: Interval { lo, hi },
        }
    }

    #[test]
    fn certain_name_gets_point_interval() {
        let r = ReferenceDistribution::from_counts("r", [("A", 7)]).unwrap();
        let out = historical_intervals(&r, &["A"], 12, 0.95, MonteCarlo::new(100, 1)).unwrap();
        assert_eq!(out[0].interval, Interval { lo: 12, hi: 12 });
    }

    #[test]
    fn near_zero_name_interval_matches_exact() {
        // binomial(10, 0.001): F(0) = 0.990 so both quantiles are 0
        let r = ReferenceDistribution::from_counts("r", [("A", 999), ("B", 1)]).unwrap();
        let exact = historical_intervals_exact(&r, &["B"], 10, 0.95).unwrap();
        assert_eq!(exact[0].interval, Interval { lo: 0, hi: 0 });
        let sim = historical_intervals(&r, &["B"], 10, 0.95, MonteCarlo::new(20_000, 3)).unwrap();
        assert_eq!(sim[0].interval, exact[0].interval);
        assert!(sim[0].interval.contains(0));
    }

    #[test]
    fn missing_name_is_error() {
        let r = ReferenceDistribution::from_counts("r", [("A", 1)]).unwrap();
        assert!(matches!(
            historical_intervals(&r, &["Z"], 5, 0.95, MonteCarlo::new(10, 1)),
            Err(Error::MissingName(_))
        ));
    }

    #[test]
    fn uniform_single_name() {
        assert_eq!(uniform_intervals(1, 9, 0.95).unwrap(), Interval { lo: 9, hi: 9 });
        assert!(uniform_intervals(0, 9, 0.95).is_err());
    }

    #[test]
    fn uniform_bands() {
        // binomial(53, 1/100): F(0) = 0.587, F(1) = 0.901, F(2) = 0.984
        assert_eq!(uniform_intervals(100, 53, 0.95).unwrap(), Interval { lo: 0, hi: 2 });
        // large pools put over 97.5% on {0, 1}
        assert_eq!(uniform_intervals(1000, 53, 0.95).unwrap(), Interval { lo: 0, hi: 1 });
    }

    #[test]
    fn classify_all_inside() {
        let obs = vec![("A".to_string(), 1), ("B".to_string(), 0)];
        let rep = classify(meta(), &obs, &[iv("A", 0, 3), iv("B", 0, 2)], Interval { lo: 0, hi: 1 }).unwrap();
        assert_eq!(rep.summary, IntervalSummary { n_outside_hist: 0, n_outside_unif: 0 });
        assert!(rep.rows.iter().all(|r| r.marker == Marker::White));
    }

    #[test]
    fn classify_hand_case() {
        let obs = vec![("A".to_string(), 5), ("B".to_string(), 2), ("C".to_string(), 1)];
        let hist = [iv("A", 2, 8), iv("B", 0, 1), iv("C", 0, 2)];
        let rep = classify(meta(), &obs, &hist, Interval { lo: 0, hi: 1 }).unwrap();
        let flags: Vec<_> = rep.rows.iter().map(|r| (r.outside_hist, r.outside_unif)).collect();
        assert_eq!(flags, vec![(false, true), (true, true), (false, false)]);
        assert_eq!(rep.rows[0].marker, Marker::Black);
        assert_eq!(rep.rows[1].marker, Marker::OutsideHistorical);
        assert_eq!(rep.summary, IntervalSummary { n_outside_hist: 1, n_outside_unif: 2 });
    }

    #[test]
    fn classify_misaligned() {
        let obs = vec![("A".to_string(), 5)];
        assert!(matches!(
            classify(meta(), &obs, &[], Interval { lo: 0, hi: 1 }),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            classify(meta(), &obs, &[iv("B", 0, 1)], Interval { lo: 0, hi: 1 }),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn classify_permutes_with_names() {
        let obs = vec![("A".to_string(), 5), ("B".to_string(), 2)];
        let hist = [iv("A", 2, 8), iv("B", 0, 1)];
        let rep = classify(meta(), &obs, &hist, Interval { lo: 0, hi: 1 }).unwrap();
        let obs_r: Vec<_> = obs.iter().rev().cloned().collect();
        let hist_r: Vec<_> = hist.iter().rev().cloned().collect();
        let rep_r = classify(meta(), &obs_r, &hist_r, Interval { lo: 0, hi: 1 }).unwrap();
        let mut back = rep_r.rows.clone();
        back.reverse();
        assert_eq!(back, rep.rows);
        assert_eq!(rep.summary, rep_r.summary);
    }

    #[test]
    fn simulation_is_worker_independent() {
        let r = ReferenceDistribution::from_counts("r", [("A", 40), ("B", 25), ("C", 5), ("D", 1)]).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| historical_intervals(&r, &["A", "C", "D"], 30, 0.9, MonteCarlo::new(3000, 11)).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
