//! Chi-squared goodness-of-fit of a corpus against a reference distribution.
//!
//! Names are binned before testing: the `top_k` most frequent reference names
//! keep their own bins, names at or below `rare_threshold` share a rare bin,
//! and everything else falls into an "other" bin. Bins whose expected count is
//! under `min_expected` are then pooled. Corpus names missing from the
//! reference have reference count zero, so they land in the rare bin.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ReferenceDistribution, TestCorpus};
use crate::error::{Error, Result};
use crate::sampling::{substream, Lane, MonteCarlo, WeightedReal};
use crate::special::gamma_q;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoolPolicy {
    /// Deficient named bins go into "other" first; anything still deficient
    /// is then pooled ascending.
    PoolIntoOther,
    /// Repeatedly merge the smallest-expected bin with the next smallest.
    #[default]
    PoolAscending,
}

impl std::str::FromStr for PoolPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pool_into_other" | "into-other" | "other" => Ok(PoolPolicy::PoolIntoOther),
            "pool_ascending" | "ascending" => Ok(PoolPolicy::PoolAscending),
            _ => Err(format!("unknown pool policy `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub top_k: usize,
    pub rare_threshold: u64,
    pub min_expected: f64,
    pub pool_policy: PoolPolicy,
}

impl Default for BinningSpec {
    fn default() -> Self {
        Self {
            top_k: 12,
            rare_threshold: 1,
            min_expected: 5.0,
            pool_policy: PoolPolicy::PoolAscending,
        }
    }
}

impl BinningSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.min_expected.is_finite() || self.min_expected <= 0.0 {
            return Err(Error::domain(format!(
                "min_expected must be positive, got {}",
                self.min_expected
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinKind {
    Named,
    Rare,
    Other,
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub label: String,
    pub kind: BinKind,
    pub reference_count: u64,
    pub probability: f64,
    pub contains_rare: bool,
}

/// Bins for one (reference, corpus size, spec) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct BinLayout {
    bins: Vec<Bin>,
    assign: BTreeMap<String, usize>,
    unseen: Option<usize>,
    n: u64,
}

impl BinLayout {
    pub fn bins(&self) -> &[Bin] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.probability).collect()
    }

    pub fn expected(&self) -> Vec<f64> {
        self.expected_for(self.n)
    }

    pub fn expected_for(&self, n: u64) -> Vec<f64> {
        self.bins.iter().map(|b| n as f64 * b.probability).collect()
    }

    pub fn bin_of(&self, name: &str) -> Option<usize> {
        self.assign.get(name).copied().or(self.unseen)
    }

    /// Per-bin counts of a corpus.
    pub fn observe(&self, corpus: &TestCorpus) -> Result<Vec<u64>> {
        let mut counts = vec![0u64; self.bins.len()];
        for o in &corpus.occurrences {
            let i = self
                .bin_of(&o.name_key)
                .ok_or_else(|| Error::MissingName(o.name_key.clone()))?;
            counts[i] += 1;
        }
        Ok(counts)
    }
}

struct WorkBin {
    label: String,
    kind: BinKind,
    weight: u64,
    members: Vec<usize>,
    contains_rare: bool,
}

/// Lays out bins for a corpus of size `n`.
pub fn make_bins(reference: &ReferenceDistribution, n: u64, spec: &BinningSpec) -> Result<BinLayout> {
    spec.validate()?;
    if reference.is_empty() {
        return Err(Error::domain("reference distribution is empty"));
    }
    if n == 0 {
        return Err(Error::domain("corpus size must be at least 1"));
    }
    let ranked = reference.ranked();
    // name index -> initial bin index
    let mut initial: Vec<(String, usize)> = Vec::with_capacity(ranked.len());
    let mut work: Vec<WorkBin> = Vec::new();
    let mut rare_bin = None;
    let mut other_bin = None;

    let mut named = 0usize;
    for (name, count) in &ranked {
        if *count <= spec.rare_threshold {
            continue;
        }
        if named < spec.top_k {
            initial.push((name.to_string(), work.len()));
            work.push(WorkBin {
                label: name.to_string(),
                kind: BinKind::Named,
                weight: *count,
                members: vec![work.len()],
                contains_rare: false,
            });
            named += 1;
        }
    }
    for (name, count) in &ranked {
        if *count <= spec.rare_threshold {
            let i = *rare_bin.get_or_insert_with(|| {
                work.push(WorkBin {
                    label: "rare".into(),
                    kind: BinKind::Rare,
                    weight: 0,
                    members: vec![work.len()],
                    contains_rare: true,
                });
                work.len() - 1
            });
            work[i].weight += count;
            initial.push((name.to_string(), i));
        }
    }
    for (name, count) in ranked.iter().filter(|(_, c)| *c > spec.rare_threshold).skip(named) {
        let i = *other_bin.get_or_insert_with(|| {
            work.push(WorkBin {
                label: "other".into(),
                kind: BinKind::Other,
                weight: 0,
                members: vec![work.len()],
                contains_rare: false,
            });
            work.len() - 1
        });
        work[i].weight += count;
        initial.push((name.to_string(), i));
    }

    let total = reference.total() as f64;
    let expected = |w: &WorkBin| n as f64 * w.weight as f64 / total;

    if spec.pool_policy == PoolPolicy::PoolIntoOther {
        let deficient: Vec<usize> = (0..work.len())
            .filter(|&i| work[i].kind == BinKind::Named && expected(&work[i]) < spec.min_expected)
            .collect();
        if !deficient.is_empty() {
            let target = match work.iter().position(|w| w.kind == BinKind::Other) {
                Some(i) => i,
                None => {
                    work.push(WorkBin {
                        label: "other".into(),
                        kind: BinKind::Other,
                        weight: 0,
                        members: vec![],
                        contains_rare: false,
                    });
                    work.len() - 1
                }
            };
            for &i in &deficient {
                let moved = std::mem::take(&mut work[i].members);
                work[target].weight += work[i].weight;
                work[target].members.extend(moved);
                work[i].weight = 0;
            }
            work.retain(|w| !w.members.is_empty());
        }
    }

    // ascending merge of whatever is still short
    loop {
        if work.len() < 2 {
            break;
        }
        let mut order: Vec<usize> = (0..work.len()).collect();
        // stable sort: ties go to the earlier bin, never to label text
        order.sort_by(|&a, &b| expected(&work[a]).partial_cmp(&expected(&work[b])).unwrap());
        let smallest = order[0];
        if expected(&work[smallest]) >= spec.min_expected {
            break;
        }
        let partner = order[1];
        // the merged bin keeps the earlier position; labels read in bin order
        let absorbed = work.remove(smallest.max(partner));
        let w = &mut work[smallest.min(partner)];
        w.label = format!("{}+{}", w.label, absorbed.label);
        w.kind = BinKind::Pooled;
        w.weight += absorbed.weight;
        w.members.extend(absorbed.members);
        w.contains_rare |= absorbed.contains_rare;
    }

    if work.len() < 2 {
        return Err(Error::InfeasibleBinning(format!(
            "cannot form two bins with expected count >= {} at n = {n}",
            spec.min_expected
        )));
    }

    // drop empty bins (possible only for a pre-created other)
    work.retain(|w| w.weight > 0);
    if work.len() < 2 {
        return Err(Error::InfeasibleBinning(format!(
            "only one non-empty bin at n = {n}"
        )));
    }

    let mut remap = BTreeMap::new();
    for (new, w) in work.iter().enumerate() {
        for &m in &w.members {
            remap.insert(m, new);
        }
    }
    let assign = initial
        .into_iter()
        .map(|(name, old)| (name, remap[&old]))
        .collect();
    let unseen = rare_bin.and_then(|i| remap.get(&i).copied());
    let bins = work
        .into_iter()
        .map(|w| Bin {
            probability: w.weight as f64 / total,
            label: w.label,
            kind: w.kind,
            reference_count: w.weight,
            contains_rare: w.contains_rare,
        })
        .collect();
    Ok(BinLayout {
        bins,
        assign,
        unseen,
        n,
    })
}

/// Σ (O − E)² / E.
pub fn chi2_statistic(observed: &[u64], expected: &[f64]) -> Result<f64> {
    if observed.len() != expected.len() {
        return Err(Error::Shape(format!(
            "{} observed bins vs {} expected",
            observed.len(),
            expected.len()
        )));
    }
    if let Some(e) = expected.iter().find(|&&e| e.is_nan() || e <= 0.0) {
        return Err(Error::domain(format!("expected count {e} is not positive")));
    }
    Ok(statistic_unchecked(observed, expected))
}

fn statistic_unchecked(observed: &[u64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum()
}

/// Upper tail of the chi-squared distribution, Q(dof/2, x/2).
pub fn chi2_sf(x: f64, dof: u32) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return 1.0;
    }
    if dof == 0 {
        return 0.0;
    }
    gamma_q(dof as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub bin_label: String,
    pub observed: u64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub label: String,
    pub reference: String,
    pub n: u64,
    pub statistic: f64,
    pub dof: u32,
    pub p_asymptotic: f64,
    pub p_monte_carlo: Option<f64>,
    #[serde(rename = "B")]
    pub replications: u64,
    pub seed: u64,
    pub binning: BinningSpec,
    pub bins: Vec<BinRow>,
}

impl GofResult {
    /// Per-bin CSV for bar charts of observed vs expected shares.
    pub fn write_bins_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bin_label", "observed", "expected", "observed_share", "expected_share"])?;
        let n = self.n as f64;
        for b in &self.bins {
            out.write_record([
                b.bin_label.clone(),
                b.observed.to_string(),
                b.expected.to_string(),
                (b.observed as f64 / n).to_string(),
                (b.expected / n).to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

// R's chisq.test uses the same slack when comparing simulated statistics.
const TIE_SLACK: f64 = 1.0 - 64.0 * f64::EPSILON;

/// A layout with its expected counts, reusable across many corpora of the
/// same size.
#[derive(Debug, Clone)]
pub struct GofPlan {
    layout: BinLayout,
    expected: Vec<f64>,
    sampler: WeightedReal,
}

impl GofPlan {
    pub fn new(reference: &ReferenceDistribution, n: u64, spec: &BinningSpec) -> Result<Self> {
        let layout = make_bins(reference, n, spec)?;
        let expected = layout.expected();
        let sampler = WeightedReal::new(&layout.probabilities())
            .ok_or_else(|| Error::InfeasibleBinning("zero reference mass".into()))?;
        Ok(Self {
            layout,
            expected,
            sampler,
        })
    }

    pub fn layout(&self) -> &BinLayout {
        &self.layout
    }

    pub fn dof(&self) -> u32 {
        (self.layout.len() - 1) as u32
    }

    pub fn statistic(&self, observed: &[u64]) -> f64 {
        statistic_unchecked(observed, &self.expected)
    }

    pub fn p_asymptotic(&self, corpus: &TestCorpus) -> Result<f64> {
        let obs = self.layout.observe(corpus)?;
        Ok(chi2_sf(self.statistic(&obs), self.dof()))
    }

    /// (1 + #{replicates ≥ observed}) / (B + 1), replicates drawn as n
    /// independent draws from the bin probabilities.
    pub fn p_monte_carlo(&self, statistic: f64, mc: MonteCarlo) -> f64 {
        let n = self.layout.n;
        let threshold = statistic * TIE_SLACK;
        let k = (0..mc.replications)
            .into_par_iter()
            .map_init(
                || vec![0u64; self.layout.len()],
                |buf, r| {
                    let mut rng = substream(mc.seed, Lane::GofReplicate, r);
                    self.sampler.counts(n, &mut rng, buf);
                    self.statistic(buf) >= threshold
                },
            )
            .filter(|&hit| hit)
            .count() as u64;
        (1 + k) as f64 / (mc.replications + 1) as f64
    }
}

/// Goodness-of-fit of `corpus` against `reference`. Set `mc.replications` to
/// zero to skip the Monte Carlo p-value.
pub fn gof_test(
    corpus: &TestCorpus,
    reference: &ReferenceDistribution,
    spec: &BinningSpec,
    mc: MonteCarlo,
) -> Result<GofResult> {
    if corpus.is_empty() {
        return Err(Error::domain("corpus is empty"));
    }
    let n = corpus.len() as u64;
    let plan = GofPlan::new(reference, n, spec)?;
    let observed = plan.layout.observe(corpus)?;
    let statistic = plan.statistic(&observed);
    let dof = plan.dof();
    let p_monte_carlo = (mc.replications > 0).then(|| plan.p_monte_carlo(statistic, mc));
    let bins = plan
        .layout
        .bins
        .iter()
        .zip(&observed)
        .zip(&plan.expected)
        .map(|((b, &o), &e)| BinRow {
            bin_label: b.label.clone(),
            observed: o,
            expected: e,
        })
        .collect();
    Ok(GofResult {
        label: corpus.label.clone(),
        reference: reference.label.clone(),
        n,
        statistic,
        dof,
        p_asymptotic: chi2_sf(statistic, dof),
        p_monte_carlo,
        replications: mc.replications,
        seed: mc.seed,
        binning: *spec,
        bins,
    })
}
