//! Lexicon and corpus ingestion, inclusion criteria and reference
//! distributions.
//!
//! Years use the astronomical convention (1 BCE = 0, 4 BCE = −3). A lexicon
//! record passes the date criterion unless its whole `[date_lo, date_hi]`
//! range misses the window, i.e. it is only excluded when it is definitely
//! datable outside the window.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! token_enum {
    ($(#[$m:meta])* $name:ident, $field:literal { $($variant:ident => $tok:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const FIELD: &'static str = $field;

            pub fn token(self) -> &'static str {
                match self {
                    $($name::$variant => $tok),+
                }
            }

            pub fn from_token(s: &str) -> Option<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($tok => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.token())
            }
        }

        impl std::str::FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                Self::from_token(s).ok_or_else(|| format!("unknown {} `{}`", $field, s))
            }
        }
    };
}

token_enum!(Gender, "gender" { Male => "male", Female => "female", Unknown => "unknown" });
token_enum!(Region, "region" { Palestine => "palestine", Diaspora => "diaspora", Unknown => "unknown" });
token_enum!(
    /// Source iteration a lexicon record belongs to.
    SourceType, "source_type" {
        Ossuary => "ossuary",
        InscriptionPapyri => "inscription_papyri",
        Literary => "literary",
    }
);
token_enum!(
    /// Titles ("high priest", "king") are recorded but never counted as
    /// disambiguating.
    QualifierKind, "qualifier_kind" { Disambiguating => "disambiguating", Title => "title" }
);

/// One attested name occurrence from the lexicon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconRecord {
    pub record_id: String,
    pub name_key: String,
    pub raw_form: String,
    pub gender: Gender,
    pub region: Region,
    pub date_lo: i32,
    pub date_hi: i32,
    pub source_type: SourceType,
    pub fictitious: bool,
    pub excluded_reason: Option<String>,
}

/// raw_form → name_key table. Orthography is contested, so there is no
/// built-in table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Normalization(BTreeMap<String, String>);

impl Normalization {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, raw: impl Into<String>, key: impl Into<String>) {
        self.0.insert(raw.into(), key.into());
    }

    pub fn lookup(&self, raw: &str) -> Option<&str> {
        self.0.get(raw).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Normalization {
    fn from_iter<T: IntoIterator<Item = (K, V)>>(iter: T) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionCriteria {
    pub gender_required: Gender,
    pub region_required: Region,
    pub window_lo: i32,
    pub window_hi: i32,
    pub allow_fictitious: bool,
    pub source_types: BTreeSet<SourceType>,
}

impl Default for InclusionCriteria {
    /// Jewish males from Palestine, 4 BCE to 73 CE, fictitious records
    /// excluded, every source type.
    fn default() -> Self {
        Self {
            gender_required: Gender::Male,
            region_required: Region::Palestine,
            window_lo: -3,
            window_hi: 73,
            allow_fictitious: false,
            source_types: SourceType::ALL.iter().copied().collect(),
        }
    }
}

impl InclusionCriteria {
    pub fn with_window(mut self, lo: i32, hi: i32) -> Result<Self> {
        if lo > hi {
            return Err(Error::domain(format!("window {lo}:{hi} has lo > hi")));
        }
        self.window_lo = lo;
        self.window_hi = hi;
        Ok(self)
    }

    pub fn only_source(&self, source: SourceType) -> Self {
        let mut c = self.clone();
        c.source_types.retain(|&s| s == source);
        c
    }

    /// First failing criterion, or `None` when the record is included.
    pub fn check(&self, r: &LexiconRecord) -> Option<ExclusionReason> {
        if let Some(reason) = &r.excluded_reason {
            return Some(ExclusionReason::Flagged(reason.clone()));
        }
        if r.gender != self.gender_required {
            return Some(ExclusionReason::Gender(r.gender));
        }
        if r.region != self.region_required {
            return Some(ExclusionReason::Region(r.region));
        }
        if r.date_hi < self.window_lo || r.date_lo > self.window_hi {
            return Some(ExclusionReason::OutsideWindow {
                lo: r.date_lo,
                hi: r.date_hi,
            });
        }
        if r.fictitious && !self.allow_fictitious {
            return Some(ExclusionReason::Fictitious);
        }
        if !self.source_types.contains(&r.source_type) {
            return Some(ExclusionReason::SourceType(r.source_type));
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "criterion", rename_all = "snake_case")]
pub enum ExclusionReason {
    Flagged(String),
    Gender(Gender),
    Region(Region),
    OutsideWindow { lo: i32, hi: i32 },
    Fictitious,
    SourceType(SourceType),
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExclusionReason::Flagged(r) => write!(f, "flagged: {r}"),
            ExclusionReason::Gender(g) => write!(f, "gender {g}"),
            ExclusionReason::Region(r) => write!(f, "region {r}"),
            ExclusionReason::OutsideWindow { lo, hi } => write!(f, "dated {lo}..{hi} outside window"),
            ExclusionReason::Fictitious => f.write_str("fictitious"),
            ExclusionReason::SourceType(s) => write!(f, "source type {s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub record_id: String,
    pub name_key: String,
    pub reason: ExclusionReason,
}

/// Name → occurrence count, with the total kept alongside.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceDistribution {
    pub label: String,
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl ReferenceDistribution {
    pub fn empty(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    /// Repeated names are summed. Zero counts are a domain error.
    pub fn from_counts<S: Into<String>>(
        label: impl Into<String>,
        counts: impl IntoIterator<Item = (S, u64)>,
    ) -> Result<Self> {
        let mut dist = Self::empty(label);
        for (name, c) in counts {
            let name = name.into();
            if c == 0 {
                return Err(Error::domain(format!("zero count for `{name}`")));
            }
            if name.is_empty() {
                return Err(Error::domain("empty name_key"));
            }
            *dist.counts.entry(name).or_insert(0) += c;
            dist.total += c;
        }
        Ok(dist)
    }

    fn from_map(label: impl Into<String>, mut counts: BTreeMap<String, u64>) -> Self {
        counts.retain(|_, c| *c > 0);
        let total = counts.values().sum();
        Self {
            label: label.into(),
            counts,
            total,
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, name: &str) -> u64 {
        self.counts.get(name).copied().unwrap_or(0)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.counts.contains_key(name)
    }

    pub fn proportion(&self, name: &str) -> Option<f64> {
        let c = *self.counts.get(name)?;
        Some(c as f64 / self.total as f64)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Names by descending count, ties broken by name.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Reads a `name_key,count` CSV.
    pub fn read_csv(path: impl AsRef<Path>, label: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path, label)
    }

    pub fn from_reader<R: Read>(reader: R, path: &Path, label: impl Into<String>) -> Result<Self> {
        let table = Table::new(reader, path, &["name_key", "count"])?;
        let mut counts = Vec::new();
        for row in table.rows() {
            let row = row?;
            let name = row.required("name_key")?.to_string();
            let count: u64 = row.parse("count")?;
            if count == 0 {
                return Err(row.error("count must be at least 1"));
            }
            counts.push((name, count));
        }
        Self::from_counts(label, counts)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["name_key", "count"])?;
        for (name, count) in self.ranked() {
            out.write_record([name, &count.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub name_key: String,
    /// Externally attested in historical records; `false` marks a contested
    /// occurrence.
    pub attested: bool,
    pub qualifier: Option<QualifierKind>,
}

impl Occurrence {
    pub fn new(name_key: impl Into<String>) -> Self {
        Self {
            name_key: name_key.into(),
            attested: false,
            qualifier: None,
        }
    }

    pub fn attested(mut self, attested: bool) -> Self {
        self.attested = attested;
        self
    }

    pub fn qualified(mut self, kind: QualifierKind) -> Self {
        self.qualifier = Some(kind);
        self
    }
}

/// Name occurrences from one text or combination of texts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCorpus {
    pub label: String,
    pub occurrences: Vec<Occurrence>,
}

impl TestCorpus {
    pub fn new(label: impl Into<String>, occurrences: Vec<Occurrence>) -> Self {
        Self {
            label: label.into(),
            occurrences,
        }
    }

    /// Contested occurrences of the given names.
    pub fn from_names<S: AsRef<str>>(label: impl Into<String>, names: &[S]) -> Self {
        Self::new(
            label,
            names.iter().map(|n| Occurrence::new(n.as_ref())).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.occurrences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occurrences.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<String, u64> {
        let mut m = BTreeMap::new();
        for o in &self.occurrences {
            *m.entry(o.name_key.clone()).or_insert(0) += 1;
        }
        m
    }

    pub fn count_of(&self, name: &str) -> u64 {
        self.occurrences.iter().filter(|o| o.name_key == name).count() as u64
    }

    pub fn distinct_names(&self) -> usize {
        self.occurrences
            .iter()
            .map(|o| o.name_key.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Only the contested (not externally attested) occurrences.
    pub fn contested(&self) -> TestCorpus {
        TestCorpus {
            label: format!("{}-contested", self.label),
            occurrences: self
                .occurrences
                .iter()
                .filter(|o| !o.attested)
                .cloned()
                .collect(),
        }
    }
}

/// Records that passed the criteria, plus the audit trail for the rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filtered {
    pub included: Vec<LexiconRecord>,
    pub excluded: Vec<Exclusion>,
}

pub fn filter_records(records: &[LexiconRecord], criteria: &InclusionCriteria) -> Filtered {
    let mut included = Vec::new();
    let mut excluded = Vec::new();
    for r in records {
        match criteria.check(r) {
            None => included.push(r.clone()),
            Some(reason) => excluded.push(Exclusion {
                record_id: r.record_id.clone(),
                name_key: r.name_key.clone(),
                reason,
            }),
        }
    }
    Filtered { included, excluded }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub reference: ReferenceDistribution,
    pub excluded: Vec<Exclusion>,
}

/// Aggregates the records that meet `criteria` into a reference distribution.
pub fn apply_criteria(records: &[LexiconRecord], criteria: &InclusionCriteria) -> Selection {
    let Filtered { included, excluded } = filter_records(records, criteria);
    let mut counts = BTreeMap::new();
    for r in &included {
        *counts.entry(r.name_key.clone()).or_insert(0u64) += 1;
    }
    Selection {
        reference: ReferenceDistribution::from_map("reference", counts),
        excluded,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Iterations {
    pub ossuary: ReferenceDistribution,
    pub inscription_papyri: ReferenceDistribution,
    pub literary: ReferenceDistribution,
}

impl Iterations {
    pub fn as_array(&self) -> [&ReferenceDistribution; 3] {
        [&self.ossuary, &self.inscription_papyri, &self.literary]
    }
}

/// One reference per source type: ossuaries, other inscriptions and papyri,
/// literary occurrences.
pub fn split_iterations(records: &[LexiconRecord], criteria: &InclusionCriteria) -> Iterations {
    let part = |s: SourceType| {
        apply_criteria(records, &criteria.only_source(s))
            .reference
            .with_label(s.token())
    };
    Iterations {
        ossuary: part(SourceType::Ossuary),
        inscription_papyri: part(SourceType::InscriptionPapyri),
        literary: part(SourceType::Literary),
    }
}

/// Removes each contested corpus occurrence from the reference, then adds one
/// artificial occurrence for every distinct corpus name.
pub fn adjusted_reference(
    reference: &ReferenceDistribution,
    corpus: &TestCorpus,
) -> Result<ReferenceDistribution> {
    let mut counts: BTreeMap<String, u64> = reference
        .iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    for (name, removed) in corpus.contested().counts() {
        let available = counts.get(&name).copied().unwrap_or(0);
        if removed > available {
            return Err(Error::DataInconsistency {
                name,
                available,
                requested: removed,
            });
        }
        counts.insert(name, available - removed);
    }
    for name in corpus.counts().into_keys() {
        *counts.entry(name).or_insert(0) += 1;
    }
    let label = if corpus.is_empty() {
        reference.label.clone()
    } else {
        format!("{}-adjusted", reference.label)
    };
    Ok(ReferenceDistribution::from_map(label, counts))
}

/// Fraction of distinct reference names with count ≤ `threshold`.
pub fn rare_share(reference: &ReferenceDistribution, threshold: u64) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::UndefinedFraction("empty reference".into()));
    }
    let rare = reference.iter().filter(|&(_, c)| c <= threshold).count();
    Ok(rare as f64 / reference.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RareBasis {
    #[default]
    Occurrences,
    DistinctNames,
}

/// Share of a corpus whose names are rare in the reference. Names absent from
/// the reference count as rare.
pub fn corpus_rare_share(
    corpus: &TestCorpus,
    reference: &ReferenceDistribution,
    threshold: u64,
    basis: RareBasis,
) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::UndefinedFraction("empty corpus".into()));
    }
    let is_rare = |name: &str| reference.count(name) <= threshold;
    let (rare, total) = match basis {
        RareBasis::Occurrences => (
            corpus.occurrences.iter().filter(|o| is_rare(&o.name_key)).count(),
            corpus.len(),
        ),
        RareBasis::DistinctNames => {
            let counts = corpus.counts();
            (counts.keys().filter(|n| is_rare(n)).count(), counts.len())
        }
    };
    Ok(rare as f64 / total as f64)
}

pub const LEXICON_COLUMNS: &[&str] = &[
    "record_id",
    "name_key",
    "raw_form",
    "gender",
    "region",
    "date_lo",
    "date_hi",
    "source_type",
    "fictitious",
    "excluded_reason",
];

pub fn parse_lexicon(path: impl AsRef<Path>, normalization: &Normalization) -> Result<Vec<LexiconRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_lexicon(file, path, normalization)
}

pub fn read_lexicon<R: Read>(
    reader: R,
    path: &Path,
    normalization: &Normalization,
) -> Result<Vec<LexiconRecord>> {
    let table = Table::new(reader, path, LEXICON_COLUMNS)?;
    let mut out = Vec::new();
    for row in table.rows() {
        let row = row?;
        let raw_form = row.get("raw_form").to_string();
        let name_key = match normalization.lookup(&raw_form) {
            Some(k) => k.to_string(),
            None => row.get("name_key").to_string(),
        };
        if name_key.is_empty() {
            return Err(row.error("name_key is empty and raw_form has no normalization entry"));
        }
        let date_lo: i32 = row.parse("date_lo")?;
        let date_hi: i32 = row.parse("date_hi")?;
        if date_lo > date_hi {
            return Err(row.error(format!("date_lo {date_lo} > date_hi {date_hi}")));
        }
        let excluded_reason = match row.get("excluded_reason") {
            "" => None,
            s => Some(s.to_string()),
        };
        out.push(LexiconRecord {
            record_id: row.required("record_id")?.to_string(),
            name_key,
            raw_form,
            gender: row.token("gender", Gender::from_token)?,
            region: row.token("region", Region::from_token)?,
            date_lo,
            date_hi,
            source_type: row.token("source_type", SourceType::from_token)?,
            fictitious: row.boolean("fictitious")?,
            excluded_reason,
        });
    }
    Ok(out)
}

pub fn parse_normalization(path: impl AsRef<Path>) -> Result<Normalization> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_normalization(file, path)
}

pub fn read_normalization<R: Read>(reader: R, path: &Path) -> Result<Normalization> {
    let table = Table::new(reader, path, &["raw_form", "name_key"])?;
    let mut map = Normalization::new();
    for row in table.rows() {
        let row = row?;
        map.insert(row.required("raw_form")?, row.required("name_key")?);
    }
    Ok(map)
}

pub const CORPUS_COLUMNS: &[&str] = &["label", "name_key", "attested", "qualifier_kind"];

/// Reads a corpus CSV, which may hold several labelled corpora. They are
/// returned in order of first appearance.
pub fn parse_corpora(path: impl AsRef<Path>) -> Result<Vec<TestCorpus>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpora(file, path)
}

pub fn read_corpora<R: Read>(reader: R, path: &Path) -> Result<Vec<TestCorpus>> {
    let table = Table::new(reader, path, CORPUS_COLUMNS)?;
    let mut corpora: Vec<TestCorpus> = Vec::new();
    for row in table.rows() {
        let row = row?;
        let label = row.required("label")?;
        let qualifier = match row.get("qualifier_kind") {
            "" => None,
            _ => Some(row.token("qualifier_kind", QualifierKind::from_token)?),
        };
        let occ = Occurrence {
            name_key: row.required("name_key")?.to_string(),
            attested: row.boolean("attested")?,
            qualifier,
        };
        match corpora.iter_mut().find(|c| c.label == label) {
            Some(c) => c.occurrences.push(occ),
            None => corpora.push(TestCorpus::new(label, vec![occ])),
        }
    }
    Ok(corpora)
}

pub fn write_exclusions_csv<W: Write>(excluded: &[Exclusion], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["record_id", "name_key", "reason"])?;
    for e in excluded {
        out.write_record([&e.record_id, &e.name_key, &e.reason.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

// Header-indexed CSV access with line-numbered errors.
struct Table<R: Read> {
    path: PathBuf,
    columns: BTreeMap<String, usize>,
    reader: csv::Reader<R>,
}

impl<R: Read> Table<R> {
    fn new(reader: R, path: &Path, required: &[&str]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = reader.headers().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?;
        let columns: BTreeMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        for col in required {
            if !columns.contains_key(*col) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("missing column `{col}`"),
                });
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            columns,
            reader,
        })
    }

    fn rows(self) -> impl Iterator<Item = Result<Row>> {
        let Table {
            path,
            columns,
            reader,
        } = self;
        let columns = std::rc::Rc::new(columns);
        reader.into_records().map(move |rec| {
            let rec = rec.map_err(|e| Error::Parse {
                path: path.clone(),
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            Ok(Row {
                line: rec.position().map(|p| p.line()).unwrap_or(0),
                path: path.clone(),
                columns: columns.clone(),
                record: rec,
            })
        })
    }
}

struct Row {
    path: PathBuf,
    line: u64,
    columns: std::rc::Rc<BTreeMap<String, usize>>,
    record: csv::StringRecord,
}

impl Row {
    fn get(&self, col: &str) -> &str {
        self.columns
            .get(col)
            .and_then(|&i| self.record.get(i))
            .unwrap_or("")
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            message: message.into(),
        }
    }

    fn required(&self, col: &str) -> Result<&str> {
        match self.get(col) {
            "" => Err(self.error(format!("empty `{col}`"))),
            s => Ok(s),
        }
    }

    fn parse<T: std::str::FromStr>(&self, col: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let s = self.required(col)?;
        s.parse()
            .map_err(|e| self.error(format!("bad `{col}` value `{s}`: {e}")))
    }

    fn boolean(&self, col: &'static str) -> Result<bool> {
        match self.get(col).to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" | "y" | "t" => Ok(true),
            "false" | "0" | "no" | "n" | "f" | "" => Ok(false),
            other => Err(Error::Schema {
                path: self.path.clone(),
                line: self.line,
                field: col,
                token: other.to_string(),
            }),
        }
    }

    fn token<T>(&self, col: &'static str, parse: fn(&str) -> Option<T>) -> Result<T> {
        let s = self.get(col);
        parse(s).ok_or_else(|| Error::Schema {
            path: self.path.clone(),
            line: self.line,
            field: col,
            token: s.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "record_id,name_key,raw_form,gender,region,date_lo,date_hi,source_type,fictitious,excluded_reason\n";

    fn lex(body: &str, norm: &Normalization) -> Result<Vec<LexiconRecord>> {
        let text = format!("{HEADER}{body}");
        read_lexicon(text.as_bytes(), Path::new("lex.csv"), norm)
    }

    fn rec(id: &str, name: &str, gender: Gender, lo: i32, hi: i32, src: SourceType) -> LexiconRecord {
        LexiconRecord {
            record_id: id.into(),
            name_key: name.into(),
            raw_form: name.into(),
            gender,
            region: Region::Palestine,
            date_lo: lo,
            date_hi: hi,
            source_type: src,
            fictitious: false,
            excluded_reason: None,
        }
    }

    #[test]
    fn header_only_lexicon_is_empty() {
        assert!(lex("", &Normalization::new()).unwrap().is_empty());
    }

    #[test]
    fn reversed_dates_are_rejected_with_line() {
        let err = lex("r1,Simon,Simon,male,palestine,10,5,ossuary,false,\n", &Normalization::new())
            .unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("date_lo"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn unknown_token_is_schema_error() {
        let err = lex("r1,Simon,Simon,male,galilee,0,5,ossuary,false,\n", &Normalization::new())
            .unwrap_err();
        assert!(matches!(err, Error::Schema { field: "region", line: 2, .. }), "{err:?}");
    }

    #[test]
    fn short_row_is_parse_error() {
        let err = lex("r1,Simon,Simon,male\n", &Normalization::new()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn variant_spellings_collapse_to_one_key() {
        let norm: Normalization = [("Simeon", "Simon"), ("Shimon", "Simon"), ("Simon", "Simon")]
            .into_iter()
            .collect();
        let body = "r1,,Simeon,male,palestine,0,10,ossuary,false,\n\
                    r2,,Shimon,male,palestine,0,10,literary,false,\n\
                    r3,X,Simon,male,palestine,0,10,literary,0,\n";
        let recs = lex(body, &norm).unwrap();
        assert_eq!(recs.len(), 3);
        let keys: BTreeSet<_> = recs.iter().map(|r| r.name_key.as_str()).collect();
        assert_eq!(keys.into_iter().collect::<Vec<_>>(), vec!["Simon"]);
    }

    #[test]
    fn missing_name_key_without_mapping_fails() {
        let err = lex("r1,,Zakron,male,palestine,0,10,ossuary,false,\n", &Normalization::new())
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn window_uses_interval_intersection() {
        let c = InclusionCriteria::default();
        let early = rec("a", "Nittai", Gender::Male, -120, -100, SourceType::Literary);
        let broad = rec("b", "Judah", Gender::Male, -50, 100, SourceType::Literary);
        assert!(matches!(c.check(&early), Some(ExclusionReason::OutsideWindow { .. })));
        assert_eq!(c.check(&broad), None);
        let edge = rec("c", "Judah", Gender::Male, 73, 200, SourceType::Literary);
        assert_eq!(c.check(&edge), None);
    }

    #[test]
    fn females_are_filtered_out() {
        let recs = vec![
            rec("1", "Simon", Gender::Male, 0, 10, SourceType::Ossuary),
            rec("2", "Mary", Gender::Female, 0, 10, SourceType::Ossuary),
            rec("3", "Simon", Gender::Male, 0, 10, SourceType::Literary),
            rec("4", "Salome", Gender::Female, 0, 10, SourceType::Ossuary),
            rec("5", "John", Gender::Male, 0, 10, SourceType::Ossuary),
        ];
        let sel = apply_criteria(&recs, &InclusionCriteria::default());
        assert_eq!(sel.reference.total(), 3);
        assert_eq!(sel.reference.count("Simon"), 2);
        assert_eq!(sel.reference.count("John"), 1);
        assert_eq!(sel.excluded.len(), 2);
        assert!(sel
            .excluded
            .iter()
            .all(|e| e.reason == ExclusionReason::Gender(Gender::Female)));
    }

    #[test]
    fn flagged_records_keep_their_reason() {
        let mut r = rec("9", "Ezra", Gender::Male, 0, 10, SourceType::Ossuary);
        r.excluded_reason = Some("misread inscription".into());
        let sel = apply_criteria(&[r], &InclusionCriteria::default());
        assert!(sel.reference.is_empty());
        assert_eq!(
            sel.excluded[0].reason,
            ExclusionReason::Flagged("misread inscription".into())
        );
    }

    #[test]
    fn iterations_partition_by_source() {
        let recs = vec![
            rec("1", "Simon", Gender::Male, 0, 10, SourceType::Ossuary),
            rec("2", "Simon", Gender::Male, 0, 10, SourceType::Ossuary),
            rec("3", "John", Gender::Male, 0, 10, SourceType::InscriptionPapyri),
            rec("4", "Judah", Gender::Male, 0, 10, SourceType::Literary),
            rec("5", "Judah", Gender::Male, 0, 10, SourceType::Literary),
            rec("6", "Levi", Gender::Male, 0, 10, SourceType::Literary),
        ];
        let it = split_iterations(&recs, &InclusionCriteria::default());
        assert_eq!(it.ossuary.total(), 2);
        assert_eq!(it.inscription_papyri.total(), 1);
        assert_eq!(it.literary.total(), 3);
        let sum: u64 = it.as_array().iter().map(|d| d.total()).sum();
        assert_eq!(sum, 6);
    }

    #[test]
    fn all_literary_leaves_other_iterations_empty() {
        let recs = vec![rec("1", "Simon", Gender::Male, 0, 10, SourceType::Literary)];
        let it = split_iterations(&recs, &InclusionCriteria::default());
        assert!(it.ossuary.is_empty());
        assert!(it.inscription_papyri.is_empty());
        assert_eq!(it.literary.total(), 1);
    }

    #[test]
    fn adjustment_removes_contested_and_adds_one_per_name() {
        let reference = ReferenceDistribution::from_counts("r", [("A", 5), ("B", 2)]).unwrap();
        let corpus = TestCorpus::from_names("c", &["A", "A"]);
        let adj = adjusted_reference(&reference, &corpus).unwrap();
        assert_eq!(adj.count("A"), 4);
        assert_eq!(adj.count("B"), 2);
        assert_eq!(adj.total(), 6);
    }

    #[test]
    fn adjustment_without_contested_only_adds() {
        let reference = ReferenceDistribution::from_counts("r", [("A", 5), ("B", 2)]).unwrap();
        let corpus = TestCorpus::new(
            "c",
            vec![
                Occurrence::new("A").attested(true),
                Occurrence::new("C").attested(true),
                Occurrence::new("C").attested(true),
            ],
        );
        let adj = adjusted_reference(&reference, &corpus).unwrap();
        assert_eq!(adj.count("A"), 6);
        assert_eq!(adj.count("B"), 2);
        assert_eq!(adj.count("C"), 1);
    }

    #[test]
    fn adjustment_underflow_names_the_key() {
        let reference = ReferenceDistribution::from_counts("r", [("A", 1)]).unwrap();
        let corpus = TestCorpus::from_names("c", &["A", "A"]);
        match adjusted_reference(&reference, &corpus) {
            Err(Error::DataInconsistency { name, .. }) => assert_eq!(name, "A"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_corpus_adjustment_is_identity() {
        let reference = ReferenceDistribution::from_counts("r", [("A", 5), ("B", 2)]).unwrap();
        let adj = adjusted_reference(&reference, &TestCorpus::new("c", vec![])).unwrap();
        assert_eq!(adj, reference);
    }

    #[test]
    fn rare_share_all_singletons() {
        let r = ReferenceDistribution::from_counts("r", [("A", 1), ("B", 1)]).unwrap();
        assert_eq!(rare_share(&r, 1).unwrap(), 1.0);
    }

    #[test]
    fn rare_share_empty_is_undefined() {
        assert!(matches!(
            rare_share(&ReferenceDistribution::empty("r"), 1),
            Err(Error::UndefinedFraction(_))
        ));
        let r = ReferenceDistribution::from_counts("r", [("A", 1)]).unwrap();
        assert!(corpus_rare_share(&TestCorpus::new("c", vec![]), &r, 1, RareBasis::Occurrences).is_err());
    }

    #[test]
    fn corpus_rare_share_bases_differ() {
        let r = ReferenceDistribution::from_counts("r", [("A", 10), ("B", 1)]).unwrap();
        let c = TestCorpus::from_names("c", &["A", "A", "A", "B", "Z"]);
        assert_eq!(corpus_rare_share(&c, &r, 1, RareBasis::Occurrences).unwrap(), 2.0 / 5.0);
        assert_eq!(corpus_rare_share(&c, &r, 1, RareBasis::DistinctNames).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn corpora_group_by_label() {
        let text = "label,name_key,attested,qualifier_kind\n\
                    Matt,Simon,true,disambiguating\n\
                    Mark,John,false,\n\
                    Matt,Caiaphas,true,title\n";
        let cs = read_corpora(text.as_bytes(), Path::new("c.csv")).unwrap();
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].label, "Matt");
        assert_eq!(cs[0].len(), 2);
        assert_eq!(cs[0].occurrences[1].qualifier, Some(QualifierKind::Title));
        assert!(!cs[1].occurrences[0].attested);
    }

    #[test]
    fn reference_csv_round_trip() {
        let r = ReferenceDistribution::from_counts("r", [("Simon", 184), ("Levi", 3)]).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let back = ReferenceDistribution::from_reader(buf.as_slice(), Path::new("r.csv"), "r").unwrap();
        assert_eq!(back, r);
    }
}
