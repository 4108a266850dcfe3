//! Prevalence of smells over the union of packages of many ponds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::model::{is_supported, Ecosystem, PackageCoordinate, SmellId};
use crate::pond::{DirtyPond, PondError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmellCount {
    pub count: usize,
    /// `count / total_unique_packages`, as a pair to keep it exact.
    pub fraction: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePond {
    pub project: PackageCoordinate,
    pub analyzed_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrevalenceReport {
    pub ecosystem: Ecosystem,
    pub total_unique_packages: usize,
    /// Supported smells only.
    pub per_smell: BTreeMap<SmellId, SmellCount>,
    pub unsupported: BTreeSet<SmellId>,
    pub source_ponds: Vec<SourcePond>,
}

/// Ponds that disagree about the smells of one package.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub coordinate: PackageCoordinate,
    /// Verdict that was kept, from the most recent pond.
    pub kept: Verdict,
    pub discarded: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Verdict {
    pub analyzed_at: Timestamp,
    pub project: PackageCoordinate,
    pub smells: BTreeSet<SmellId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregate {
    pub reports: Vec<PrevalenceReport>,
    pub conflicts: Vec<Conflict>,
}

/// Deduplicates packages across `ponds` and counts, per ecosystem, how many
/// unique packages exhibit each smell. When ponds disagree about a
/// package, the most recent analysis wins (ties broken by project
/// coordinate) and the disagreement is listed.
pub fn aggregate(ponds: &[DirtyPond]) -> Result<Aggregate, PondError> {
    let mut verdicts: BTreeMap<&PackageCoordinate, Vec<Verdict>> = BTreeMap::new();
    let mut sources: BTreeMap<Ecosystem, Vec<SourcePond>> = BTreeMap::new();

    for pond in ponds {
        pond.validate()?;
        sources.entry(pond.project.ecosystem).or_default().push(SourcePond {
            project: pond.project.clone(),
            analyzed_at: pond.analyzed_at,
        });
        let mut smells: BTreeMap<&PackageCoordinate, BTreeSet<SmellId>> = BTreeMap::new();
        for node in pond.tree.nodes.iter().filter(|n| !n.local) {
            smells.entry(&node.coordinate).or_default();
        }
        for f in &pond.findings {
            smells.entry(&f.coordinate).or_default().insert(f.smell);
        }
        for (coord, smells) in smells {
            verdicts.entry(coord).or_default().push(Verdict {
                analyzed_at: pond.analyzed_at,
                project: pond.project.clone(),
                smells,
            });
        }
    }

    let mut out = Aggregate::default();
    let mut totals: BTreeMap<Ecosystem, usize> = BTreeMap::new();
    let mut counts: BTreeMap<Ecosystem, BTreeMap<SmellId, usize>> = BTreeMap::new();
    for (coord, mut list) in verdicts {
        list.sort();
        let kept = list.pop().expect("at least one verdict");
        list.dedup();
        let discarded: Vec<Verdict> = list.into_iter().filter(|v| v.smells != kept.smells).collect();
        *totals.entry(coord.ecosystem).or_default() += 1;
        let per = counts.entry(coord.ecosystem).or_default();
        for smell in &kept.smells {
            *per.entry(*smell).or_default() += 1;
        }
        if !discarded.is_empty() {
            out.conflicts.push(Conflict {
                coordinate: coord.clone(),
                kept,
                discarded,
            });
        }
    }

    for (eco, mut source_ponds) in sources {
        source_ponds.sort_by(|a, b| (a.analyzed_at, &a.project).cmp(&(b.analyzed_at, &b.project)));
        let total = totals.get(&eco).copied().unwrap_or(0);
        let per = counts.remove(&eco).unwrap_or_default();
        let mut per_smell = BTreeMap::new();
        let mut unsupported = BTreeSet::new();
        for smell in SmellId::ALL {
            if is_supported(smell, eco) {
                let count = per.get(&smell).copied().unwrap_or(0);
                per_smell.insert(
                    smell,
                    SmellCount {
                        count,
                        fraction: (count, total),
                    },
                );
            } else {
                unsupported.insert(smell);
            }
        }
        out.reports.push(PrevalenceReport {
            ecosystem: eco,
            total_unique_packages: total,
            per_smell,
            unsupported,
            source_ponds,
        });
    }
    Ok(out)
}

/// `count / total` as a percentage with one decimal, rounded half up,
/// computed in integers.
pub fn format_percent(count: usize, total: usize) -> String {
    if total == 0 {
        return "0.0%".to_string();
    }
    let tenths = (count as u128 * 2000 + total as u128) / (2 * total as u128);
    format!("{}.{}%", tenths / 10, tenths % 10)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub ecosystem: Ecosystem,
    pub smell_id: u8,
    pub smell: SmellId,
    pub title: String,
    /// Absent for smells the ecosystem does not support.
    pub count: Option<usize>,
    pub total: usize,
    pub percent: Option<String>,
}

pub fn distribution_rows(reports: &[PrevalenceReport]) -> Vec<DistributionRow> {
    let mut rows = Vec::new();
    for report in reports {
        for smell in SmellId::ALL {
            let count = report.per_smell.get(&smell).map(|c| c.count);
            rows.push(DistributionRow {
                ecosystem: report.ecosystem,
                smell_id: smell.id(),
                smell,
                title: smell.title().to_string(),
                count,
                total: report.total_unique_packages,
                percent: count.map(|c| format_percent(c, report.total_unique_packages)),
            });
        }
    }
    rows
}

/// Plain-text table and the plot-ready JSON data for `reports`.
pub fn render_distribution(reports: &[PrevalenceReport]) -> (String, String) {
    let rows = distribution_rows(reports);
    let mut text = String::new();
    for report in reports {
        let _ = writeln!(
            text,
            "{} ({} unique packages, {} projects)",
            report.ecosystem.display_name(),
            report.total_unique_packages,
            report.source_ponds.len()
        );
        let _ = writeln!(text, "{:<3} {:<26} {:>7} {:>7}", "#", "Smell", "Count", "Share");
        for row in rows.iter().filter(|r| r.ecosystem == report.ecosystem) {
            let count = row.count.map_or("n/a".to_string(), |c| c.to_string());
            let share = row.percent.clone().unwrap_or_else(|| "n/a".to_string());
            let _ = writeln!(text, "{:<3} {:<26} {:>7} {:>7}", row.smell_id, row.title, count, share);
        }
        text.push('\n');
    }
    let mut data = serde_json::to_string_pretty(&rows).expect("rows serialize");
    data.push('\n');
    (text, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_rounding() {
        assert_eq!(format_percent(4, 871), "0.5%");
        assert_eq!(format_percent(1, 3), "33.3%");
        assert_eq!(format_percent(2, 3), "66.7%");
        assert_eq!(format_percent(1, 8), "12.5%");
        assert_eq!(format_percent(1, 2000), "0.1%");
        assert_eq!(format_percent(0, 5), "0.0%");
        assert_eq!(format_percent(5, 5), "100.0%");
    }

    #[test]
    fn empty_input() {
        let agg = aggregate(&[]).unwrap();
        assert!(agg.reports.is_empty());
        let (text, data) = render_distribution(&agg.reports);
        assert_eq!(text, "");
        assert_eq!(data, "[]\n");
    }
}
