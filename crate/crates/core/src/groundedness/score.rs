use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Decision, SourceGroupKind, Unit, Verdict};
use crate::credibility::{CellKey, GroupBy, GroupError, MetricResult};
use crate::transcript::Transcript;

pub const DEFAULT_ALPHA: f64 = 0.5;

/// Where a verifiable unit lands once its group verdicts are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rollup {
    /// Supported by at least one group.
    Supported,
    /// Contradicted by some group and supported by none.
    Unsupported,
    /// Every verdict Unverifiable, or no verdicts at all.
    Undecidable,
}

pub fn rollup<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> Rollup {
    let mut contradicted = false;
    for v in verdicts {
        match v.decision {
            Decision::Supported => return Rollup::Supported,
            Decision::Contradicted => contradicted = true,
            Decision::Unverifiable => {}
        }
    }
    if contradicted {
        Rollup::Unsupported
    } else {
        Rollup::Undecidable
    }
}

/// Per-response groundedness. Rates and HS are `None` when the response has
/// no verifiable units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundednessReport {
    pub units: usize,
    pub verifiable: usize,
    pub supported: usize,
    pub supported_credible: usize,
    pub supported_non_credible: usize,
    pub unsupported: usize,
    pub undecidable: usize,
    pub alpha: f64,
    pub gs: Option<f64>,
    pub cg: Option<f64>,
    pub ncg: Option<f64>,
    pub hs: Option<f64>,
}

impl GroundednessReport {
    pub fn from_counts(
        units: usize,
        verifiable: usize,
        supported: usize,
        supported_credible: usize,
        supported_non_credible: usize,
        unsupported: usize,
        alpha: f64,
    ) -> Self {
        let undecidable = verifiable - supported - unsupported;
        let frac = |x: usize| (verifiable > 0).then(|| x as f64 / verifiable as f64);
        Self {
            units,
            verifiable,
            supported,
            supported_credible,
            supported_non_credible,
            unsupported,
            undecidable,
            alpha,
            gs: frac(supported),
            cg: frac(supported_credible),
            ncg: frac(supported_non_credible),
            hs: (verifiable > 0)
                .then(|| (unsupported as f64 + alpha * undecidable as f64) / (verifiable as f64).sqrt()),
        }
    }

    pub fn no_verifiable_units(&self) -> bool {
        self.verifiable == 0
    }
}

/// Scores one response from its units and their verdicts.
pub fn scores(units: &[Unit], verdicts: &[Verdict], alpha: f64) -> GroundednessReport {
    let mut by_unit: BTreeMap<&str, Vec<&Verdict>> = BTreeMap::new();
    for v in verdicts {
        by_unit.entry(v.unit_id.as_str()).or_default().push(v);
    }
    let (mut v, mut s, mut sc, mut snc, mut us) = (0, 0, 0, 0, 0);
    for unit in units.iter().filter(|u| u.label.is_verifiable()) {
        v += 1;
        let vs = by_unit.get(unit.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let supported_by = |kind| vs.iter().any(|x| x.group == kind && x.decision == Decision::Supported);
        sc += usize::from(supported_by(SourceGroupKind::Credible));
        snc += usize::from(supported_by(SourceGroupKind::NonCredible));
        match rollup(vs.iter().copied()) {
            Rollup::Supported => s += 1,
            Rollup::Unsupported => us += 1,
            Rollup::Undecidable => {}
        }
    }
    GroundednessReport::from_counts(units.len(), v, s, sc, snc, us, alpha)
}

/// Share of units whose label is not Fact or Claim; `None` without units.
pub fn unclassified_share<'a>(units: impl IntoIterator<Item = &'a Unit>) -> Option<f64> {
    let (mut total, mut other) = (0usize, 0usize);
    for u in units {
        total += 1;
        other += usize::from(!u.label.is_verifiable());
    }
    (total > 0).then(|| other as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingRow {
    pub key: CellKey,
    pub responses: usize,
    pub verifiable: u64,
    pub unsupported: u64,
    pub undecidable: u64,
    pub gs: MetricResult,
    pub cg: MetricResult,
    pub ncg: MetricResult,
    /// Mean per-response HS over responses that have verifiable units.
    pub hs_mean: Option<f64>,
    pub hs_responses: usize,
}

impl GroundingRow {
    pub fn is_undefined(&self) -> bool {
        self.verifiable == 0
    }
}

fn row(key: CellKey, reports: &[&GroundednessReport], confidence: f64) -> Result<GroundingRow, GroupError> {
    let sum = |f: fn(&GroundednessReport) -> usize| reports.iter().map(|r| f(r) as u64).sum::<u64>();
    let v = sum(|r| r.verifiable);
    let hs: Vec<f64> = reports.iter().filter_map(|r| r.hs).collect();
    Ok(GroundingRow {
        key,
        responses: reports.len(),
        verifiable: v,
        unsupported: sum(|r| r.unsupported),
        undecidable: sum(|r| r.undecidable),
        gs: MetricResult::from_counts(sum(|r| r.supported), v, confidence)?,
        cg: MetricResult::from_counts(sum(|r| r.supported_credible), v, confidence)?,
        ncg: MetricResult::from_counts(sum(|r| r.supported_non_credible), v, confidence)?,
        hs_mean: (!hs.is_empty()).then(|| hs.iter().sum::<f64>() / hs.len() as f64),
        hs_responses: hs.len(),
    })
}

/// GS, CG and NCG per cell with unit counts pooled across responses, then
/// the Overall row.
pub fn aggregate_grounding(
    items: &[(&Transcript, &GroundednessReport)],
    group_by: &GroupBy,
    confidence: f64,
) -> Result<Vec<GroundingRow>, GroupError> {
    let mut rows = Vec::new();
    if !group_by.is_empty() {
        let mut cells: BTreeMap<CellKey, Vec<&GroundednessReport>> = BTreeMap::new();
        for (t, r) in items {
            cells.entry(CellKey::of(t, group_by)?).or_default().push(r);
        }
        for (key, reports) in cells {
            rows.push(row(key, &reports, confidence)?);
        }
    }
    let all: Vec<_> = items.iter().map(|(_, r)| *r).collect();
    rows.push(row(CellKey::overall(), &all, confidence)?);
    Ok(rows)
}
