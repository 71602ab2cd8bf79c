use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use onomastat_core::binomial::{adjust_results, calibrate_rare_pool, Calibration, TABLE4, TABLE4_POOL_TOTAL, TABLE4_SAMPLE};
use onomastat_core::corpus::{parse_corpora, parse_lexicon, parse_normalization, write_exclusions_csv, Normalization};
use onomastat_core::gof::PoolPolicy;
use onomastat_core::intervals::interval_audit;
use onomastat_core::power::{
    ci_width_scaling, parse_experiments, subsample_experiment, write_power_csv, MethodSettings, SubsampleSummary,
    WidthRow,
};
use onomastat_core::qualifiers::{QualifierOptions, TierThresholds};
use onomastat_core::*;

use crate::{ensure_dir, io_error, resolve_input, write_bytes, write_json, CliError, CliResult, OutArgs};

#[derive(Serialize)]
pub(crate) struct Report<'a, T: Serialize> {
    pub manifest: &'a RunManifest,
    pub results: &'a T,
}

/// The part of a JSON report needed to replay it.
#[derive(Debug, Deserialize)]
pub struct ReportFile {
    pub manifest: RunManifest,
}

#[derive(Debug, Args, Clone)]
pub struct BinningArgs {
    /// Named bins for the most frequent non-rare names.
    #[arg(long, default_value_t = 12)]
    pub top_k: usize,
    /// Names with reference count at or below this go to the rare bin.
    #[arg(long, default_value_t = 1)]
    pub rare_threshold: u64,
    /// Smallest expected count a bin may keep before pooling.
    #[arg(long, default_value_t = 5.0)]
    pub min_expected: f64,
    /// `ascending` or `into-other`.
    #[arg(long, default_value = "ascending")]
    pub pool_policy: PoolPolicy,
}

impl BinningArgs {
    fn spec(&self) -> BinningSpec {
        BinningSpec {
            top_k: self.top_k,
            rare_threshold: self.rare_threshold,
            min_expected: self.min_expected,
            pool_policy: self.pool_policy,
        }
    }
}

fn require_seed(seed: Option<u64>, why: &str) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::Usage(format!("--seed is required {why}")))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn load_reference(path: &Path) -> CliResult<ReferenceDistribution> {
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "reference".into());
    Ok(ReferenceDistribution::read_csv(resolve_input(path), label)?)
}

fn load_corpora(path: &Path, labels: &[String]) -> CliResult<Vec<TestCorpus>> {
    let all = parse_corpora(resolve_input(path))?;
    if labels.is_empty() {
        return Ok(all);
    }
    labels
        .iter()
        .map(|l| {
            all.iter()
                .find(|c| &c.label == l)
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("no corpus labelled `{l}` in {}", path.display())))
        })
        .collect()
}

/// File-name-safe form of a corpus label.
fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> onomastat_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn csv_rows<I, R>(header: &[&str], rows: I) -> CliResult<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Core(Error::from(e));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
}

struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    /// Writes the JSON report first in the output list, then its CSV
    /// projections.
    fn finish<T: Serialize>(self, json_name: &str, mut manifest: RunManifest, body: &T) -> CliResult<()> {
        ensure_dir(&self.dir)?;
        manifest = manifest.output(json_name);
        for (name, _) in &self.files {
            manifest = manifest.output(name.clone());
        }
        write_json(&self.dir, json_name, &manifest, body)?;
        for (name, bytes) in &self.files {
            write_bytes(&self.dir, name, bytes)?;
        }
        Ok(())
    }
}

fn parse_window(s: &str) -> Result<(i32, i32), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<i32>().map_err(|e| format!("bad year `{v}`: {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Lexicon CSV.
    #[arg(long)]
    pub lexicon: PathBuf,
    /// raw_form,name_key CSV overriding the lexicon's name keys.
    #[arg(long)]
    pub normalization: Option<PathBuf>,
    /// Inclusion window in astronomical years, e.g. -3:73.
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
    pub criteria_window: Option<(i32, i32)>,
    /// Keep records flagged fictitious.
    #[arg(long)]
    pub allow_fictitious: bool,
    /// Label for the combined reference.
    #[arg(long, default_value = "reference")]
    pub label: String,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Serialize)]
struct IterationSummary {
    source_type: SourceType,
    file: String,
    total: u64,
    distinct_names: usize,
}

#[derive(Serialize)]
struct IngestSummary {
    records: usize,
    included: u64,
    excluded: usize,
    distinct_names: usize,
    exclusion_reasons: BTreeMap<String, u64>,
    iterations: Vec<IterationSummary>,
}

pub fn ingest(a: IngestArgs, manifest: RunManifest) -> CliResult<String> {
    let norm = match &a.normalization {
        Some(p) => parse_normalization(resolve_input(p))?,
        None => Normalization::new(),
    };
    let records = parse_lexicon(resolve_input(&a.lexicon), &norm)?;
    let mut criteria = InclusionCriteria {
        allow_fictitious: a.allow_fictitious,
        ..Default::default()
    };
    if let Some((lo, hi)) = a.criteria_window {
        criteria = criteria.with_window(lo, hi)?;
    }
    let selection = apply_criteria(&records, &criteria);
    let reference = selection.reference.with_label(a.label.clone());
    let parts = split_iterations(&records, &criteria);
    if records.is_empty() {
        eprintln!("warning: {} holds no records; the reference is empty", a.lexicon.display());
    }

    let mut out = Outputs::new(&a.out.out);
    out.add("reference.csv", csv_bytes(|w| reference.write_csv(w))?);
    let mut iterations = Vec::new();
    for (source, part) in SourceType::ALL.iter().zip(parts.as_array()) {
        let file = format!("reference_{}.csv", source.token());
        out.add(file.clone(), csv_bytes(|w| part.write_csv(w))?);
        iterations.push(IterationSummary {
            source_type: *source,
            file,
            total: part.total(),
            distinct_names: part.len(),
        });
    }
    out.add("exclusions.csv", csv_bytes(|w| write_exclusions_csv(&selection.excluded, w))?);

    let mut reasons = BTreeMap::new();
    for e in &selection.excluded {
        let key = serde_json::to_value(&e.reason)
            .ok()
            .and_then(|v| v.get("criterion").and_then(|c| c.as_str()).map(str::to_string))
            .unwrap_or_else(|| "other".into());
        *reasons.entry(key).or_insert(0) += 1;
    }
    let summary = IngestSummary {
        records: records.len(),
        included: reference.total(),
        excluded: selection.excluded.len(),
        distinct_names: reference.len(),
        exclusion_reasons: reasons,
        iterations,
    };
    let mut manifest = manifest.input(path_str(&a.lexicon)).criterion("window", [criteria.window_lo, criteria.window_hi]);
    if let Some(p) = &a.normalization {
        manifest = manifest.input(path_str(p));
    }
    let manifest = manifest
        .criterion("gender", criteria.gender_required)
        .criterion("region", criteria.region_required)
        .criterion("allow_fictitious", criteria.allow_fictitious);
    out.finish("ingest.json", manifest, &summary)?;
    Ok(format!(
        "{} records: {} included ({} names), {} excluded",
        summary.records, summary.included, summary.distinct_names, summary.excluded
    ))
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Corpus CSV (label,name_key,attested,qualifier_kind).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Reference CSV (name_key,count).
    #[arg(long)]
    pub reference: PathBuf,
    /// Only these corpus labels (repeatable).
    #[arg(long)]
    pub label: Vec<String>,
    /// Remove contested occurrences from the reference and add one per corpus
    /// name before testing.
    #[arg(long)]
    pub adjust_reference: bool,
    #[command(flatten)]
    pub binning: BinningArgs,
    /// Monte Carlo replications; 0 skips the simulated p-value.
    #[arg(long = "B", default_value_t = 10_000)]
    pub replications: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

fn reference_for(reference: &ReferenceDistribution, corpus: &TestCorpus, adjust: bool) -> CliResult<ReferenceDistribution> {
    Ok(if adjust {
        adjusted_reference(reference, corpus)?
    } else {
        reference.clone()
    })
}

pub fn test(a: TestArgs, manifest: RunManifest) -> CliResult<String> {
    let seed = if a.replications > 0 {
        require_seed(a.seed, "when --B is positive")?
    } else {
        a.seed.unwrap_or(0)
    };
    let spec = a.binning.spec();
    let reference = load_reference(&a.reference)?;
    let corpora = load_corpora(&a.corpus, &a.label)?;
    let mc = MonteCarlo::new(a.replications, seed);
    let results = corpora
        .iter()
        .map(|c| Ok(gof_test(c, &reference_for(&reference, c, a.adjust_reference)?, &spec, mc)?))
        .collect::<CliResult<Vec<GofResult>>>()?;

    let mut out = Outputs::new(&a.out.out);
    out.add(
        "gof.csv",
        csv_rows(
            &["label", "n", "statistic", "dof", "p_asymptotic", "p_monte_carlo"],
            results.iter().map(|r| {
                vec![
                    r.label.clone(),
                    r.n.to_string(),
                    r.statistic.to_string(),
                    r.dof.to_string(),
                    r.p_asymptotic.to_string(),
                    r.p_monte_carlo.map(|p| p.to_string()).unwrap_or_default(),
                ]
            }),
        )?,
    );
    for r in &results {
        out.add(format!("gof_bins_{}.csv", slug(&r.label)), csv_bytes(|w| r.write_bins_csv(w))?);
    }
    let manifest = manifest
        .input(path_str(&a.corpus))
        .input(path_str(&a.reference))
        .param("binning", spec)
        .param("adjust_reference", a.adjust_reference)
        .random(Some(a.replications), seed);
    out.finish("gof.json", manifest, &results)?;
    Ok(results
        .iter()
        .map(|r| {
            format!(
                "{}: X2 = {:.4}, dof = {}, p = {:.4}{}",
                r.label,
                r.statistic,
                r.dof,
                r.p_asymptotic,
                r.p_monte_carlo.map(|p| format!(", p_mc = {p:.4}")).unwrap_or_default()
            )
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

#[derive(Debug, Args)]
pub struct IntervalsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub label: Vec<String>,
    #[arg(long)]
    pub adjust_reference: bool,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Names in the uniform comparison pool; defaults to the reference's
    /// distinct-name count.
    #[arg(long)]
    pub uniform_pool: Option<u64>,
    #[arg(long = "B", default_value_t = 10_000)]
    pub replications: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn intervals(a: IntervalsArgs, manifest: RunManifest) -> CliResult<String> {
    let seed = require_seed(a.seed, "for interval simulation")?;
    let reference = load_reference(&a.reference)?;
    let corpora = load_corpora(&a.corpus, &a.label)?;
    let pool = a.uniform_pool.unwrap_or(reference.len() as u64);
    let mc = MonteCarlo::new(a.replications, seed);
    let reports = corpora
        .iter()
        .map(|c| Ok(interval_audit(c, &reference_for(&reference, c, a.adjust_reference)?, pool, a.level, mc)?))
        .collect::<CliResult<Vec<IntervalReport>>>()?;
    let mut out = Outputs::new(&a.out.out);
    for r in &reports {
        out.add(format!("intervals_{}.csv", slug(&r.meta.label)), csv_bytes(|w| r.write_csv(w))?);
    }
    let manifest = manifest
        .input(path_str(&a.corpus))
        .input(path_str(&a.reference))
        .param("level", a.level)
        .param("uniform_pool", pool)
        .param("adjust_reference", a.adjust_reference)
        .random(Some(a.replications), seed);
    out.finish("intervals.json", manifest, &reports)?;
    Ok(reports
        .iter()
        .map(|r| {
            format!(
                "{}: {} outside historical, {} outside uniform",
                r.meta.label, r.summary.n_outside_hist, r.summary.n_outside_unif
            )
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeArg {
    Contested,
    ContestedRaw,
    Full,
    Custom,
}

impl std::str::FromStr for ModeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "contested" | "contested-53" => Ok(ModeArg::Contested),
            "contested-raw" => Ok(ModeArg::ContestedRaw),
            "full" | "full-82" => Ok(ModeArg::Full),
            "custom" => Ok(ModeArg::Custom),
            _ => Err(format!("unknown mode `{s}`")),
        }
    }
}

#[derive(Debug, Args)]
pub struct TailArgs {
    /// Corpus CSV; not needed in custom mode.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub reference: PathBuf,
    /// Corpus label when the file holds several corpora.
    #[arg(long)]
    pub label: Option<String>,
    /// Name to test (repeatable).
    #[arg(long, required = true)]
    pub name: Vec<String>,
    /// contested (alias contested-53), contested-raw, full (alias full-82) or
    /// custom.
    #[arg(long, default_value = "contested")]
    pub mode: ModeArg,
    /// Observed count, custom mode only.
    #[arg(long)]
    pub k: Option<u64>,
    /// Sample size, custom mode only.
    #[arg(long)]
    pub n: Option<u64>,
    /// Multiple-testing adjustment across the tested names.
    #[arg(long, default_value = "holm")]
    pub adjust: Adjustment,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Serialize)]
struct TailRow {
    #[serde(flatten)]
    result: TailTestResult,
    significant: bool,
}

#[derive(Serialize)]
struct TailReport {
    corpus: Option<String>,
    alpha: f64,
    adjustment: Adjustment,
    rows: Vec<TailRow>,
}

pub fn tail(a: TailArgs, manifest: RunManifest) -> CliResult<String> {
    let reference = load_reference(&a.reference)?;
    let mode = match a.mode {
        ModeArg::Contested => TailMode::Contested,
        ModeArg::ContestedRaw => TailMode::ContestedRaw,
        ModeArg::Full => TailMode::Full,
        ModeArg::Custom => match (a.k, a.n) {
            (Some(k_obs), Some(n)) => TailMode::Custom { k_obs, n },
            _ => return Err(CliError::Usage("custom mode needs --k and --n".into())),
        },
    };
    let corpus = match (&a.corpus, mode) {
        (_, TailMode::Custom { .. }) => TestCorpus::new("custom", vec![]),
        (None, _) => return Err(CliError::Usage("--corpus is required outside custom mode".into())),
        (Some(p), _) => {
            let labels: Vec<String> = a.label.iter().cloned().collect();
            let mut found = load_corpora(p, &labels)?;
            if found.len() != 1 {
                return Err(CliError::Usage(format!(
                    "{} holds {} corpora; pick one with --label",
                    p.display(),
                    found.len()
                )));
            }
            found.remove(0)
        }
    };
    let mut results = a
        .name
        .iter()
        .map(|n| name_tail_test(n, &corpus, &reference, mode))
        .collect::<onomastat_core::Result<Vec<_>>>()?;
    adjust_results(&mut results, a.adjust)?;
    let report = TailReport {
        corpus: a.corpus.as_ref().map(|_| corpus.label.clone()),
        alpha: a.alpha,
        adjustment: a.adjust,
        rows: results
            .into_iter()
            .map(|r| TailRow {
                significant: r.adjusted_tail <= a.alpha,
                result: r,
            })
            .collect(),
    };
    let mut out = Outputs::new(&a.out.out);
    out.add(
        "tail.csv",
        csv_rows(
            &["name", "k_obs", "n", "p_name", "tail", "adjusted_tail", "significant", "assumption"],
            report.rows.iter().map(|r| {
                let t = &r.result;
                vec![
                    t.name_key.clone(),
                    t.k_obs.to_string(),
                    t.n.to_string(),
                    t.p_name.to_string(),
                    t.tail.to_string(),
                    t.adjusted_tail.to_string(),
                    r.significant.to_string(),
                    t.assumption_label.clone(),
                ]
            }),
        )?,
    );
    let mut manifest = manifest.input(path_str(&a.reference));
    if let Some(p) = &a.corpus {
        manifest = manifest.input(path_str(p));
    }
    let manifest = manifest
        .param("mode", mode)
        .param("adjustment", a.adjust)
        .param("alpha", a.alpha);
    out.finish("tail.json", manifest, &report)?;
    Ok(report
        .rows
        .iter()
        .map(|r| {
            format!(
                "{}: k = {} of n = {}, p_name = {:.5}, tail = {:.4} ({})",
                r.result.name_key, r.result.k_obs, r.result.n, r.result.p_name, r.result.tail, r.result.assumption_label
            )
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

fn parse_thresholds(s: &str) -> Result<Vec<u64>, String> {
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: u64 = lo.parse().map_err(|e| format!("{e}"))?;
        let hi: u64 = hi.parse().map_err(|e| format!("{e}"))?;
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|e| format!("bad threshold `{t}`: {e}"))).collect()
}

#[derive(Debug, Args)]
pub struct Table4Args {
    /// `without-replacement` (hypergeometric) or `with-replacement`
    /// (binomial).
    #[arg(long, default_value = "without-replacement")]
    pub sampling: Sampling,
    #[arg(long, default_value_t = TABLE4_POOL_TOTAL)]
    pub pool_total: u64,
    /// Rare-name occurrences in the pool; calibrated against the published
    /// cumulative probabilities when omitted.
    #[arg(long)]
    pub rare: Option<u64>,
    #[arg(long, default_value_t = TABLE4_SAMPLE)]
    pub n: u64,
    /// Thresholds as `3..10` or `3,5,8`.
    #[arg(long, default_value = "3..10", value_parser = parse_thresholds)]
    pub thresholds: ::std::vec::Vec<u64>,
    /// Replications of the Monte Carlo cross-check; 0 skips it.
    #[arg(long = "B", default_value_t = 100_000)]
    pub replications: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Serialize)]
struct Table4Row {
    threshold: u64,
    published: Option<f64>,
    cumulative_probability: f64,
    monte_carlo: Option<f64>,
}

#[derive(Serialize)]
struct Table4Report {
    calibration: Option<Calibration>,
    tolerance: f64,
    max_abs_deviation: Option<f64>,
    within_tolerance: Option<bool>,
    rows: Vec<Table4Row>,
    distribution: RareCountDistribution,
}

/// Published values are given to 0.1 percentage points or coarser.
const TABLE4_TOLERANCE: f64 = 0.003;

pub fn table4(a: Table4Args, manifest: RunManifest) -> CliResult<String> {
    let seed = if a.replications > 0 {
        require_seed(a.seed, "when --B is positive")?
    } else {
        a.seed.unwrap_or(0)
    };
    let thresholds: Vec<u64> = a.thresholds.clone();
    let calibration = match a.rare {
        Some(_) => None,
        None => Some(calibrate_rare_pool(a.pool_total, a.n, &TABLE4, a.sampling)?),
    };
    let pool = match (a.rare, &calibration) {
        (Some(rare), _) => RarePool { total: a.pool_total, rare },
        (None, Some(c)) => c.pool,
        (None, None) => unreachable!(),
    };
    let dist = rare_count_distribution(pool, a.n, a.sampling, MonteCarlo::new(a.replications, seed))?;
    let published: BTreeMap<u64, f64> = TABLE4.iter().copied().collect();
    let comparable = pool.total == TABLE4_POOL_TOTAL && a.n == TABLE4_SAMPLE;
    let mc_cdf = dist.monte_carlo.as_ref().map(|m| {
        let mut acc = 0.0;
        m.pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect::<Vec<f64>>()
    });
    let rows: Vec<Table4Row> = thresholds
        .iter()
        .map(|&t| Table4Row {
            threshold: t,
            published: comparable.then(|| published.get(&t).copied()).flatten(),
            cumulative_probability: dist.cdf_at(t),
            monte_carlo: mc_cdf.as_ref().map(|c| c.get(t as usize).copied().unwrap_or(1.0)),
        })
        .collect();
    let max_dev = rows
        .iter()
        .filter_map(|r| r.published.map(|p| (p - r.cumulative_probability).abs()))
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
    let report = Table4Report {
        calibration,
        tolerance: TABLE4_TOLERANCE,
        max_abs_deviation: max_dev,
        within_tolerance: max_dev.map(|d| d <= TABLE4_TOLERANCE),
        rows,
        distribution: dist,
    };
    let mut out = Outputs::new(&a.out.out);
    out.add(
        "table4.csv",
        csv_rows(
            &["threshold", "published", "cumulative_probability", "monte_carlo"],
            report.rows.iter().map(|r| {
                vec![
                    r.threshold.to_string(),
                    r.published.map(|p| p.to_string()).unwrap_or_default(),
                    r.cumulative_probability.to_string(),
                    r.monte_carlo.map(|p| p.to_string()).unwrap_or_default(),
                ]
            }),
        )?,
    );
    let manifest = manifest
        .param("sampling", a.sampling)
        .param("pool", pool)
        .param("n", a.n)
        .param("thresholds", &thresholds)
        .random(Some(a.replications), seed);
    out.finish("table4.json", manifest, &report)?;
    let mut msg = format!("pool {} of {} rare, n = {}, {:?}", pool.rare, pool.total, a.n, a.sampling);
    if let Some(d) = max_dev {
        msg.push_str(&format!("; max deviation from published {:.4}", d));
    }
    if let Some(m) = &report.distribution.monte_carlo {
        msg.push_str(&format!("; Monte Carlo TV distance {:.5}", m.tv_distance));
    }
    Ok(msg)
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long)]
    pub reference: PathBuf,
    /// Experiment file: `key = value` blocks separated by blank lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override every experiment's alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Report historical-interval widths of this name across --sizes.
    #[arg(long)]
    pub width_name: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "53,212,848")]
    pub sizes: Vec<u64>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Replications for width scaling.
    #[arg(long = "B", default_value_t = 10_000)]
    pub replications: u64,
    /// Subsample this corpus (with --n-sub, --reps, --method).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub n_sub: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    pub reps: u64,
    #[arg(long, default_value = "gof_chi2")]
    pub method: Method,
    #[arg(long)]
    pub uniform_pool: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Serialize)]
struct PowerReport {
    interval_rule: &'static str,
    experiments: Vec<PowerResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    widths: Option<Vec<WidthRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    subsample: Option<SubsampleSummary>,
}

const INTERVAL_RULE: &str = "interval_overlap rejects when the number of names outside their exact historical \
     intervals exceeds the 95th percentile of Binomial(#names, 1 - level) (generalised to P(X >= outside) <= alpha); \
     this rule is defined by this tool";

pub fn power(a: PowerArgs, manifest: RunManifest) -> CliResult<String> {
    let reference = load_reference(&a.reference)?;
    if a.config.is_none() && a.width_name.is_none() && a.corpus.is_none() {
        return Err(CliError::Usage("nothing to do: give --config, --width-name or --corpus".into()));
    }
    let mut manifest = manifest.input(path_str(&a.reference));
    let mut experiments = Vec::new();
    if let Some(p) = &a.config {
        let path = resolve_input(p);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Core(io_error(&path, e)))?;
        for mut cfg in parse_experiments(&text)? {
            if let Some(alpha) = a.alpha {
                cfg.alpha = alpha;
            }
            experiments.push(cfg.run(&reference)?);
        }
        manifest = manifest.input(path_str(p));
    }
    let widths = match &a.width_name {
        Some(name) => {
            let seed = require_seed(a.seed, "for width scaling")?;
            manifest = manifest.random(Some(a.replications), seed);
            Some(ci_width_scaling(&reference, name, &a.sizes, a.level, MonteCarlo::new(a.replications, seed))?)
        }
        None => None,
    };
    let subsample = match &a.corpus {
        Some(p) => {
            let seed = require_seed(a.seed, "for subsampling")?;
            let labels: Vec<String> = a.label.iter().cloned().collect();
            let corpora = load_corpora(p, &labels)?;
            let corpus = corpora
                .first()
                .ok_or_else(|| CliError::Usage(format!("{} holds no corpora", p.display())))?;
            let n_sub = a.n_sub.ok_or_else(|| CliError::Usage("--n-sub is required with --corpus".into()))?;
            let settings = MethodSettings {
                level: a.level,
                uniform_pool: a.uniform_pool.unwrap_or(reference.len() as u64),
                ..Default::default()
            };
            let replications = manifest.replications;
            manifest = manifest.input(path_str(p)).random(replications, seed);
            Some(subsample_experiment(
                corpus,
                n_sub,
                a.reps,
                &reference,
                a.method,
                a.alpha.unwrap_or(0.05),
                seed,
                &settings,
            )?)
        }
        None => None,
    };
    let report = PowerReport {
        interval_rule: INTERVAL_RULE,
        experiments,
        widths,
        subsample,
    };
    let mut out = Outputs::new(&a.out.out);
    if !report.experiments.is_empty() {
        out.add("power.csv", csv_bytes(|w| write_power_csv(&report.experiments, w))?);
    }
    if let Some(ws) = &report.widths {
        out.add(
            "widths.csv",
            csv_rows(
                &["n", "lo", "hi", "count_width", "proportion_width", "normalized", "relative"],
                ws.iter().map(|w| {
                    vec![
                        w.n.to_string(),
                        w.lo.to_string(),
                        w.hi.to_string(),
                        w.count_width.to_string(),
                        w.proportion_width.to_string(),
                        w.normalized.to_string(),
                        w.relative.to_string(),
                    ]
                }),
            )?,
        );
    }
    let manifest = manifest
        .param("level", a.level)
        .param("sizes", &a.sizes)
        .param("alpha_override", a.alpha);
    out.finish("power.json", manifest, &report)?;
    let mut lines: Vec<String> = report
        .experiments
        .iter()
        .map(|r| {
            format!(
                "{} on {} (n = {}, alpha = {}): rate {:.4} ± {:.4}",
                r.method, r.generator, r.n, r.alpha, r.rejection_rate, r.mc_se
            )
        })
        .collect();
    if let Some(ws) = &report.widths {
        lines.extend(ws.iter().map(|w| format!("n = {}: width {} (relative {:.3})", w.n, w.count_width, w.relative)));
    }
    if let Some(s) = &report.subsample {
        lines.push(format!(
            "subsample n = {}: rejection rate {:.4}, median p {:.4}, inside uniform band {:.4}",
            s.n_sub, s.rejection_rate, s.median_p, s.inside_uniform_band
        ));
    }
    Ok(lines.join("\n"))
}

#[derive(Debug, Args)]
pub struct QualifiersArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub label: Vec<String>,
    /// Smallest reference count of the top tier.
    #[arg(long, default_value_t = 102)]
    pub tier_top: u64,
    /// Smallest reference count of the middle tier.
    #[arg(long, default_value_t = 6)]
    pub tier_mid: u64,
    /// Tier against the full reference instead of removing each corpus's own
    /// occurrences.
    #[arg(long)]
    pub no_exclude_own: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn qualifiers(a: QualifiersArgs, manifest: RunManifest) -> CliResult<String> {
    if a.tier_mid > a.tier_top {
        return Err(CliError::Core(Error::Domain("--tier-mid exceeds --tier-top".into())));
    }
    let reference = load_reference(&a.reference)?;
    let corpora = load_corpora(&a.corpus, &a.label)?;
    let options = QualifierOptions {
        thresholds: TierThresholds {
            top: a.tier_top,
            mid: a.tier_mid,
        },
        exclude_own: !a.no_exclude_own,
    };
    let table = qualifier_table(&corpora, &reference, options);
    let mut out = Outputs::new(&a.out.out);
    out.add("qualifiers.csv", csv_bytes(|w| table.write_csv(w))?);
    let manifest = manifest
        .input(path_str(&a.corpus))
        .input(path_str(&a.reference))
        .param("thresholds", options.thresholds)
        .param("exclude_own", options.exclude_own);
    out.finish("qualifiers.json", manifest, &table)?;
    Ok(table
        .rows
        .iter()
        .map(|r| format!("{}: {} ({} / {} / {})", r.corpus, r.total, r.tier_top, r.tier_mid, r.tier_low))
        .collect::<Vec<_>>()
        .join("\n"))
}
