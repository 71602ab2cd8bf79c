//! Method-validity simulation: draw corpora from known generators, run a test
//! method on each and record how often it rejects.
//!
//! Every method is reduced to a p-value and "rejects" when p ≤ α:
//!
//! * `gof_chi2`: asymptotic chi-squared p-value against the reference.
//! * `interval_overlap`: each distinct corpus name is checked against its
//!   exact historical interval at the corpus size; with `k` names and `m`
//!   outside, p = P(Binomial(k, 1 − level) ≥ m). At α = 0.05 this rejects
//!   exactly when `m` exceeds the 95th percentile of that binomial. The rule
//!   is defined here; the graphical method itself never stated one.
//! * `binomial_single_name`: upper binomial tail of one name's count.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binomial::binomial_tail;
use crate::corpus::{Occurrence, ReferenceDistribution, TestCorpus};
use crate::error::{Error, Result};
use crate::gof::{BinningSpec, GofPlan};
use crate::intervals::{binomial_interval, historical_intervals, uniform_intervals, Interval};
use crate::sampling::{substream, Categorical, Lane, MonteCarlo};

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Historical(ReferenceDistribution),
    Uniform {
        pool: Vec<String>,
    },
    /// Each occurrence comes from the reference with probability `weight`,
    /// otherwise from the uniform pool.
    Mixture {
        reference: ReferenceDistribution,
        pool: Vec<String>,
        weight: f64,
    },
}

fn synthetic_pool(m: u64) -> Vec<String> {
    let width = m.to_string().len();
    (1..=m).map(|i| format!("uniform-{i:0width$}")).collect()
}

impl Generator {
    pub fn historical(reference: ReferenceDistribution) -> Self {
        Generator::Historical(reference)
    }

    /// `m` equiprobable synthetic names, none of them in any reference.
    pub fn uniform(m: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("uniform pool must hold at least one name"));
        }
        Ok(Generator::Uniform {
            pool: synthetic_pool(m),
        })
    }

    /// Every reference name equally likely.
    pub fn uniform_over(reference: &ReferenceDistribution) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::domain("reference distribution is empty"));
        }
        Ok(Generator::Uniform {
            pool: reference.iter().map(|(k, _)| k.to_string()).collect(),
        })
    }

    pub fn mixture(reference: ReferenceDistribution, uniform: Generator, weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::domain(format!("mixture weight {weight} outside [0, 1]")));
        }
        let pool = match uniform {
            Generator::Uniform { pool } => pool,
            _ => return Err(Error::domain("mixture needs a uniform component")),
        };
        Ok(Generator::Mixture {
            reference,
            pool,
            weight,
        })
    }

    pub fn describe(&self) -> String {
        match self {
            Generator::Historical(r) => format!("historical({})", r.label),
            Generator::Uniform { pool } => format!("uniform(M={})", pool.len()),
            Generator::Mixture {
                reference,
                pool,
                weight,
            } => format!("mixture({}, M={}, weight={weight})", reference.label, pool.len()),
        }
    }

    fn prepare(&self) -> Result<Prepared<'_>> {
        fn hist(r: &ReferenceDistribution) -> Result<(Vec<&str>, Categorical)> {
            let names: Vec<&str> = r.iter().map(|(k, _)| k).collect();
            let cat = Categorical::new(r.iter().map(|(_, c)| c))
                .ok_or_else(|| Error::domain("reference distribution is empty"))?;
            Ok((names, cat))
        }
        Ok(match self {
            Generator::Historical(r) => Prepared {
                historical: Some(hist(r)?),
                pool: &[],
                weight: 1.0,
            },
            Generator::Uniform { pool } => Prepared {
                historical: None,
                pool,
                weight: 0.0,
            },
            Generator::Mixture {
                reference,
                pool,
                weight,
            } => Prepared {
                historical: Some(hist(reference)?),
                pool,
                weight: *weight,
            },
        })
    }
}

struct Prepared<'a> {
    historical: Option<(Vec<&'a str>, Categorical)>,
    pool: &'a [String],
    weight: f64,
}

impl Prepared<'_> {
    // Name draws and mixture coin flips use separate substreams, so a mixture
    // at weight 0 or 1 reproduces the pure generator draw for draw.
    fn draw(&self, n: u64, seed: u64, index: u64) -> Vec<Occurrence> {
        let mut names = substream(seed, Lane::Names, index);
        let mut coins = substream(seed, Lane::MixtureCoin, index);
        (0..n)
            .map(|_| {
                let from_reference = match (&self.historical, self.pool.is_empty()) {
                    (Some(_), true) => true,
                    (None, _) => false,
                    (Some(_), false) => coins.random::<f64>() < self.weight,
                };
                let name = if from_reference {
                    let (keys, cat) = self.historical.as_ref().unwrap();
                    keys[cat.sample(&mut names)].to_string()
                } else {
                    self.pool[names.random_range(0..self.pool.len())].clone()
                };
                Occurrence::new(name)
            })
            .collect()
    }
}

fn generate_indexed(generator: &Generator, n: u64, seed: u64, index: u64) -> Result<TestCorpus> {
    let prepared = generator.prepare()?;
    Ok(TestCorpus::new(generator.describe(), prepared.draw(n, seed, index)))
}

/// `n` i.i.d. occurrences from `generator`.
pub fn generate(generator: &Generator, n: u64, seed: u64) -> Result<TestCorpus> {
    if n == 0 {
        return Err(Error::domain("sample size must be at least 1"));
    }
    generate_indexed(generator, n, seed, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GofChi2,
    IntervalOverlap,
    BinomialSingleName,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gof_chi2" | "gof" => Ok(Method::GofChi2),
            "interval_overlap" | "intervals" => Ok(Method::IntervalOverlap),
            "binomial_single_name" | "binomial" => Ok(Method::BinomialSingleName),
            _ => Err(format!("unknown method `{s}`")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::GofChi2 => "gof_chi2",
            Method::IntervalOverlap => "interval_overlap",
            Method::BinomialSingleName => "binomial_single_name",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub binning: BinningSpec,
    /// Interval level for `interval_overlap` and the uniform band.
    pub level: f64,
    /// Name for `binomial_single_name`; the reference's most frequent name
    /// when unset.
    pub tail_name: Option<String>,
    /// Pool size of the uniform band reported by subsample experiments.
    pub uniform_pool: u64,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            binning: BinningSpec::default(),
            level: 0.95,
            tail_name: None,
            uniform_pool: 1000,
        }
    }
}

/// A method bound to a reference and sample size, reducing corpora to
/// p-values.
pub struct Evaluator {
    kind: EvalKind,
}

enum EvalKind {
    Gof(GofPlan),
    Overlap {
        intervals: BTreeMap<String, Interval>,
        miss_rate: f64,
    },
    Tail {
        name: String,
        n: u64,
        p: f64,
    },
}

impl Evaluator {
    pub fn new(method: Method, reference: &ReferenceDistribution, n: u64, settings: &MethodSettings) -> Result<Self> {
        let kind = match method {
            Method::GofChi2 => EvalKind::Gof(GofPlan::new(reference, n, &settings.binning)?),
            Method::IntervalOverlap => {
                let intervals = reference
                    .iter()
                    .map(|(k, c)| {
                        let p = c as f64 / reference.total() as f64;
                        Ok((k.to_string(), binomial_interval(n, p, settings.level)?))
                    })
                    .collect::<Result<_>>()?;
                EvalKind::Overlap {
                    intervals,
                    miss_rate: 1.0 - settings.level,
                }
            }
            Method::BinomialSingleName => {
                let name = match &settings.tail_name {
                    Some(name) => name.clone(),
                    None => reference
                        .ranked()
                        .first()
                        .map(|(k, _)| k.to_string())
                        .ok_or_else(|| Error::domain("reference distribution is empty"))?,
                };
                let p = reference
                    .proportion(&name)
                    .ok_or_else(|| Error::MissingName(name.clone()))?;
                EvalKind::Tail { name, n, p }
            }
        };
        Ok(Self { kind })
    }

    pub fn p_value(&self, corpus: &TestCorpus) -> Result<f64> {
        match &self.kind {
            EvalKind::Gof(plan) => plan.p_asymptotic(corpus),
            EvalKind::Overlap {
                intervals,
                miss_rate,
            } => {
                let counts = corpus.counts();
                let k = counts.len() as u64;
                let outside = counts
                    .iter()
                    .filter(|(name, &c)| {
                        let iv = intervals.get(*name).copied().unwrap_or(Interval { lo: 0, hi: 0 });
                        !iv.contains(c)
                    })
                    .count() as u64;
                binomial_tail(k, *miss_rate, outside)
            }
            EvalKind::Tail { name, n, p } => {
                let k = corpus.count_of(name).min(*n);
                binomial_tail(*n, *p, k)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub method: Method,
    pub generator: String,
    pub reference: String,
    pub n: u64,
    pub alpha: f64,
    pub replications: u64,
    pub rejection_rate: f64,
    /// Binomial standard error of `rejection_rate`.
    pub mc_se: f64,
    pub seed: u64,
}

/// Fraction of `reps` generated corpora on which `method` rejects at `alpha`.
#[allow(clippy::too_many_arguments)]
pub fn rejection_rate(
    method: Method,
    generator: &Generator,
    reference: &ReferenceDistribution,
    n: u64,
    alpha: f64,
    reps: u64,
    seed: u64,
    settings: &MethodSettings,
) -> Result<PowerResult> {
    if reps == 0 {
        return Err(Error::domain("need at least one replication"));
    }
    if n == 0 {
        return Err(Error::domain("sample size must be at least 1"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!("alpha {alpha} outside [0, 1]")));
    }
    let eval = Evaluator::new(method, reference, n, settings)?;
    let prepared = generator.prepare()?;
    let rejections: Vec<bool> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let corpus = TestCorpus::new("sim", prepared.draw(n, seed, r));
            Ok(eval.p_value(&corpus)? <= alpha)
        })
        .collect::<Result<_>>()?;
    let hits = rejections.iter().filter(|&&x| x).count();
    let rate = hits as f64 / reps as f64;
    Ok(PowerResult {
        method,
        generator: generator.describe(),
        reference: reference.label.clone(),
        n,
        alpha,
        replications: reps,
        rejection_rate: rate,
        mc_se: (rate * (1.0 - rate) / reps as f64).sqrt(),
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthRow {
    pub n: u64,
    pub lo: u64,
    pub hi: u64,
    pub count_width: u64,
    /// count_width / n
    pub proportion_width: f64,
    /// count_width / √n, flat when widths shrink like 1/√n on the
    /// proportion scale
    pub normalized: f64,
    /// proportion_width relative to the first size
    pub relative: f64,
}

/// Historical interval width for `name` at each sample size.
pub fn ci_width_scaling(
    reference: &ReferenceDistribution,
    name: &str,
    sizes: &[u64],
    level: f64,
    mc: MonteCarlo,
) -> Result<Vec<WidthRow>> {
    let mut rows: Vec<WidthRow> = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let iv = historical_intervals(reference, &[name], n, level, mc)?[0].interval;
        let proportion_width = iv.width() as f64 / n as f64;
        let first = rows.first().map_or(proportion_width, |r| r.proportion_width);
        rows.push(WidthRow {
            n,
            lo: iv.lo,
            hi: iv.hi,
            count_width: iv.width(),
            proportion_width,
            normalized: iv.width() as f64 / (n as f64).sqrt(),
            relative: if first > 0.0 { proportion_width / first } else { f64::NAN },
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleSummary {
    pub method: Method,
    pub corpus: String,
    pub n_sub: u64,
    pub reps: u64,
    pub seed: u64,
    pub alpha: f64,
    pub rejection_rate: f64,
    pub median_p: f64,
    /// p-value quantiles at 5, 25, 50, 75 and 95 percent
    pub p_quantiles: [f64; 5],
    pub uniform_band: Interval,
    /// Share of subsamples where every name's count sits inside the uniform
    /// band.
    pub inside_uniform_band: f64,
}

fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Repeatedly subsamples `n_sub` occurrences without replacement and runs
/// `method` on each subsample.
#[allow(clippy::too_many_arguments)]
pub fn subsample_experiment(
    corpus: &TestCorpus,
    n_sub: u64,
    reps: u64,
    reference: &ReferenceDistribution,
    method: Method,
    alpha: f64,
    seed: u64,
    settings: &MethodSettings,
) -> Result<SubsampleSummary> {
    if n_sub == 0 || n_sub > corpus.len() as u64 {
        return Err(Error::domain(format!(
            "subsample size {n_sub} must be in 1..={}",
            corpus.len()
        )));
    }
    if reps == 0 {
        return Err(Error::domain("need at least one replication"));
    }
    let eval = Evaluator::new(method, reference, n_sub, settings)?;
    let band = uniform_intervals(settings.uniform_pool, n_sub, settings.level)?;
    let outcomes: Vec<(f64, bool)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, Lane::Subsample, r);
            let mut idx: Vec<usize> = (0..corpus.len()).collect();
            for i in 0..n_sub as usize {
                let j = rng.random_range(i..idx.len());
                idx.swap(i, j);
            }
            let sub = TestCorpus::new(
                corpus.label.clone(),
                idx[..n_sub as usize]
                    .iter()
                    .map(|&i| corpus.occurrences[i].clone())
                    .collect(),
            );
            let inside = sub.counts().values().all(|&c| band.contains(c));
            Ok((eval.p_value(&sub)?, inside))
        })
        .collect::<Result<_>>()?;
    let mut ps: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |x| sorted_quantile(&ps, x);
    Ok(SubsampleSummary {
        method,
        corpus: corpus.label.clone(),
        n_sub,
        reps,
        seed,
        alpha,
        rejection_rate: ps.iter().filter(|&&p| p <= alpha).count() as f64 / reps as f64,
        median_p: q(0.5),
        p_quantiles: [q(0.05), q(0.25), q(0.5), q(0.75), q(0.95)],
        uniform_band: band,
        inside_uniform_band: outcomes.iter().filter(|o| o.1).count() as f64 / reps as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Historical,
    Uniform,
    Mixture,
}

/// One experiment from a flat key-value config block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub generator: GeneratorKind,
    /// Synthetic pool size; when absent the uniform component is spread over
    /// the reference's own names.
    pub uniform_m: Option<u64>,
    pub weight: f64,
    pub n: u64,
    pub reps: u64,
    pub alpha: f64,
    pub seed: u64,
    pub method: Method,
    pub settings: MethodSettings,
}

impl ExperimentConfig {
    pub fn generator(&self, reference: &ReferenceDistribution) -> Result<Generator> {
        let uniform = || match self.uniform_m {
            Some(m) => Generator::uniform(m),
            None => Generator::uniform_over(reference),
        };
        match self.generator {
            GeneratorKind::Historical => Ok(Generator::historical(reference.clone())),
            GeneratorKind::Uniform => uniform(),
            GeneratorKind::Mixture => Generator::mixture(reference.clone(), uniform()?, self.weight),
        }
    }

    pub fn run(&self, reference: &ReferenceDistribution) -> Result<PowerResult> {
        rejection_rate(
            self.method,
            &self.generator(reference)?,
            reference,
            self.n,
            self.alpha,
            self.reps,
            self.seed,
            &self.settings,
        )
    }
}

/// Parses `key = value` blocks separated by blank lines. `#` starts a
/// comment.
pub fn parse_experiments(text: &str) -> Result<Vec<ExperimentConfig>> {
    let mut blocks: Vec<Vec<(usize, String, String)>> = vec![Vec::new()];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            if !blocks.last().unwrap().is_empty() {
                blocks.push(Vec::new());
            }
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        blocks
            .last_mut()
            .unwrap()
            .push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    blocks
        .into_iter()
        .filter(|b| !b.is_empty())
        .map(|b| parse_block(&b))
        .collect()
}

fn parse_block(entries: &[(usize, String, String)]) -> Result<ExperimentConfig> {
    let mut map = BTreeMap::new();
    for (line, k, v) in entries {
        if map.insert(k.as_str(), (*line, v.as_str())).is_some() {
            return Err(Error::Config(format!("line {line}: duplicate key `{k}`")));
        }
    }
    fn get<T: std::str::FromStr>(map: &BTreeMap<&str, (usize, &str)>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match map.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("line {line}: bad `{key}`: {e}"))),
        }
    }
    fn need<T: std::str::FromStr>(map: &BTreeMap<&str, (usize, &str)>, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        get(map, key)?.ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }
    const KNOWN: &[&str] = &[
        "generator", "uniform_m", "weight", "n", "reps", "alpha", "seed", "method", "top_k",
        "rare_threshold", "min_expected", "level", "name", "uniform_pool",
    ];
    if let Some((k, (line, _))) = map.iter().find(|(k, _)| !KNOWN.contains(k)) {
        return Err(Error::Config(format!("line {line}: unknown key `{k}`")));
    }
    let generator = match need::<String>(&map, "generator")?.as_str() {
        "historical" => GeneratorKind::Historical,
        "uniform" => GeneratorKind::Uniform,
        "mixture" => GeneratorKind::Mixture,
        other => return Err(Error::Config(format!("unknown generator `{other}`"))),
    };
    let defaults = BinningSpec::default();
    let settings = MethodSettings {
        binning: BinningSpec {
            top_k: get(&map, "top_k")?.unwrap_or(defaults.top_k),
            rare_threshold: get(&map, "rare_threshold")?.unwrap_or(defaults.rare_threshold),
            min_expected: get(&map, "min_expected")?.unwrap_or(defaults.min_expected),
            pool_policy: defaults.pool_policy,
        },
        level: get(&map, "level")?.unwrap_or(0.95),
        tail_name: get(&map, "name")?,
        uniform_pool: get(&map, "uniform_pool")?.unwrap_or(1000),
    };
    Ok(ExperimentConfig {
        generator,
        uniform_m: get(&map, "uniform_m")?,
        weight: get(&map, "weight")?.unwrap_or(0.5),
        n: need(&map, "n")?,
        reps: need(&map, "reps")?,
        alpha: get(&map, "alpha")?.unwrap_or(0.05),
        seed: need(&map, "seed")?,
        method: need(&map, "method")?,
        settings,
    })
}

pub fn write_power_csv<W: Write>(results: &[PowerResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "method", "generator", "reference", "n", "alpha", "reps", "seed", "rejection_rate", "mc_se",
    ])?;
    for r in results {
        out.write_record([
            r.method.to_string(),
            r.generator.clone(),
            r.reference.clone(),
            r.n.to_string(),
            r.alpha.to_string(),
            r.replications.to_string(),
            r.seed.to_string(),
            r.rejection_rate.to_string(),
            r.mc_se.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
