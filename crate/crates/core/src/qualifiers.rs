//! Disambiguating qualifiers counted by the popularity tier of the qualified
//! name.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{QualifierKind, ReferenceDistribution, TestCorpus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Low,
    Mid,
    Top,
}

/// Reference-count cutoffs: `count >= top` is top, `count >= mid` is mid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierThresholds {
    pub top: u64,
    pub mid: u64,
}

impl Default for TierThresholds {
    fn default() -> Self {
        Self { top: 102, mid: 6 }
    }
}

impl TierThresholds {
    pub fn tier(&self, count: u64) -> Tier {
        if count >= self.top {
            Tier::Top
        } else if count >= self.mid {
            Tier::Mid
        } else {
            Tier::Low
        }
    }
}

/// Tier of `name`, after removing the excluded corpus's own occurrences from
/// the reference count so the text is not scored against itself.
pub fn tier_of(
    name: &str,
    reference: &ReferenceDistribution,
    exclude: Option<&TestCorpus>,
    thresholds: TierThresholds,
) -> Tier {
    let own = exclude.map_or(0, |c| c.count_of(name));
    thresholds.tier(reference.count(name).saturating_sub(own))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualifierRow {
    pub corpus: String,
    pub total: u64,
    pub tier_top: u64,
    pub tier_mid: u64,
    pub tier_low: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualifierOptions {
    pub thresholds: TierThresholds,
    /// Subtract each corpus's own occurrences before tiering.
    pub exclude_own: bool,
}

impl Default for QualifierOptions {
    fn default() -> Self {
        Self {
            thresholds: TierThresholds::default(),
            exclude_own: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualifierTable {
    pub reference: String,
    pub thresholds: TierThresholds,
    pub rows: Vec<QualifierRow>,
}

impl QualifierTable {
    pub fn row(&self, corpus: &str) -> Option<&QualifierRow> {
        self.rows.iter().find(|r| r.corpus == corpus)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["corpus", "total", "tier_top", "tier_mid", "tier_low"])?;
        for r in &self.rows {
            out.write_record([
                r.corpus.clone(),
                r.total.to_string(),
                r.tier_top.to_string(),
                r.tier_mid.to_string(),
                r.tier_low.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Counts disambiguating qualifiers per corpus. Titles are ignored.
pub fn qualifier_table(
    corpora: &[TestCorpus],
    reference: &ReferenceDistribution,
    options: QualifierOptions,
) -> QualifierTable {
    let rows = corpora
        .iter()
        .map(|c| {
            let mut row = QualifierRow {
                corpus: c.label.clone(),
                total: 0,
                tier_top: 0,
                tier_mid: 0,
                tier_low: 0,
            };
            let exclude = options.exclude_own.then_some(c);
            for o in &c.occurrences {
                if o.qualifier != Some(QualifierKind::Disambiguating) {
                    continue;
                }
                row.total += 1;
                match tier_of(&o.name_key, reference, exclude, options.thresholds) {
                    Tier::Top => row.tier_top += 1,
                    Tier::Mid => row.tier_mid += 1,
                    Tier::Low => row.tier_low += 1,
                }
            }
            row
        })
        .collect();
    QualifierTable {
        reference: reference.label.clone(),
        thresholds: options.thresholds,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Occurrence;

    fn reference() -> ReferenceDistribution {
        ReferenceDistribution::from_counts("r", [("Simon", 184), ("Hananiah", 75), ("Solo", 1), ("Judah", 102)])
            .unwrap()
    }

    #[test]
    fn anchor_tiers() {
        let r = reference();
        let t = TierThresholds::default();
        assert_eq!(tier_of("Simon", &r, None, t), Tier::Top);
        assert_eq!(tier_of("Hananiah", &r, None, t), Tier::Mid);
        assert_eq!(tier_of("Solo", &r, None, t), Tier::Low);
        assert_eq!(tier_of("Judah", &r, None, t), Tier::Top);
    }

    #[test]
    fn exclusion_can_drop_a_tier() {
        let r = reference();
        let c = TestCorpus::from_names("x", &["Judah"]);
        assert_eq!(tier_of("Judah", &r, Some(&c), TierThresholds::default()), Tier::Mid);
        let solo = TestCorpus::from_names("y", &["Solo", "Solo"]);
        assert_eq!(tier_of("Solo", &r, Some(&solo), TierThresholds::default()), Tier::Low);
    }

    #[test]
    fn no_qualifiers_gives_zero_row() {
        let c = TestCorpus::from_names("plain", &["Simon", "Solo"]);
        let t = qualifier_table(&[c], &reference(), QualifierOptions::default());
        assert_eq!(
            t.rows[0],
            QualifierRow {
                corpus: "plain".into(),
                total: 0,
                tier_top: 0,
                tier_mid: 0,
                tier_low: 0
            }
        );
    }

    #[test]
    fn titles_are_not_counted() {
        let c = TestCorpus::new(
            "t",
            vec![
                Occurrence::new("Simon").qualified(QualifierKind::Disambiguating),
                Occurrence::new("Hananiah").qualified(QualifierKind::Title),
                Occurrence::new("Solo").qualified(QualifierKind::Disambiguating),
            ],
        );
        let t = qualifier_table(&[c], &reference(), QualifierOptions::default());
        let row = t.row("t").unwrap();
        assert_eq!((row.total, row.tier_top, row.tier_mid, row.tier_low), (2, 1, 0, 1));
    }

    #[test]
    fn csv_shape() {
        let c = TestCorpus::new("m", vec![Occurrence::new("Simon").qualified(QualifierKind::Disambiguating)]);
        let t = qualifier_table(&[c], &reference(), QualifierOptions::default());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "corpus,total,tier_top,tier_mid,tier_low\nm,1,1,0,0\n"
        );
    }
}
