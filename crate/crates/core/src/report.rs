//! Distributional reports: per-individual weights and utilities, per-group
//! welfare shares, and comparisons between fairness regimes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Provenance;
use crate::error::{Error, Result};
use crate::model::{Allocation, Dataset, Group};
use crate::welfare::{WeightFunction, WelfareWeight};

pub const DEFAULT_HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub index: usize,
    pub group: Group,
    pub income: f64,
    pub label: i8,
    pub margin: f64,
    pub weight: f64,
    pub marginal_gain: f64,
    pub utility: f64,
    pub allocated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAggregate {
    pub group: Group,
    pub count: usize,
    pub positive_rate: f64,
    /// `None` when the group has no positive labels.
    pub tpr: Option<f64>,
    pub mean_weight: f64,
    pub welfare: f64,
    pub welfare_share: f64,
}

/// Equal-width bins over the pooled weight range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightHistogram {
    pub min: f64,
    pub max: f64,
    pub bins: usize,
    pub counts: BTreeMap<Group, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub regime: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub n: usize,
    pub income_checksum: String,
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched: Option<bool>,
    pub weights: WeightFunction,
    pub total_welfare: f64,
    pub groups: Vec<GroupAggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<WeightHistogram>,
    pub rows: Vec<ReportRow>,
}

/// SHA-256 over the little-endian bytes of every income, in row order.
pub fn income_checksum(incomes: impl IntoIterator<Item = f64>) -> String {
    let mut hasher = Sha256::new();
    for m in incomes {
        hasher.update(m.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Weights, utilities and welfare shares for one allocation.
///
/// Total welfare is `W = sum_i w_i u(x^m_i, y_i)` and group `g`'s share is
/// its partial sum over `W`. Shares are only meaningful for `W > 0`, so a
/// non-positive total is an error.
pub fn build_report(
    dataset: &Dataset,
    margins: &[f64],
    allocation: &Allocation,
    wf: &WeightFunction,
    regime: &str,
) -> Result<WelfareReport> {
    wf.validate()?;
    for (what, found) in [("margins", margins.len()), ("allocation", allocation.len())] {
        if found != dataset.len() {
            return Err(Error::LengthMismatch {
                what,
                expected: dataset.len(),
                found,
            });
        }
    }

    let mut rows = Vec::with_capacity(dataset.len());
    for (i, (ind, &h)) in dataset.individuals().iter().zip(margins).enumerate() {
        let allocated = allocation.is_allocated(i);
        let weight = wf.weight(h, ind.income)?;
        rows.push(ReportRow {
            index: i,
            group: ind.group,
            income: ind.income,
            label: ind.label.sign() as i8,
            margin: h,
            weight,
            marginal_gain: wf.marginal_gain(h, ind.income)?,
            utility: wf.utility.utility(ind.income, allocated)?,
            allocated,
        });
    }

    let total_welfare: f64 = rows.iter().map(|r| r.weight * r.utility).sum();
    if !(total_welfare > 0.0 && total_welfare.is_finite()) {
        return Err(Error::ReportUndefined(total_welfare));
    }

    let mut groups = Vec::new();
    for g in Group::ALL {
        let members: Vec<&ReportRow> = rows.iter().filter(|r| r.group == g).collect();
        if members.is_empty() {
            continue;
        }
        let count = members.len();
        let positives = members.iter().filter(|r| r.allocated).count();
        let labelled: Vec<&&ReportRow> = members.iter().filter(|r| r.label > 0).collect();
        let tpr = (!labelled.is_empty())
            .then(|| labelled.iter().filter(|r| r.allocated).count() as f64 / labelled.len() as f64);
        let welfare: f64 = members.iter().map(|r| r.weight * r.utility).sum();
        groups.push(GroupAggregate {
            group: g,
            count,
            positive_rate: positives as f64 / count as f64,
            tpr,
            mean_weight: members.iter().map(|r| r.weight).sum::<f64>() / count as f64,
            welfare,
            welfare_share: welfare / total_welfare,
        });
    }

    Ok(WelfareReport {
        regime: regime.to_string(),
        provenance: None,
        n: dataset.len(),
        income_checksum: income_checksum(dataset.individuals().iter().map(|i| i.income)),
        budget: allocation.budget(),
        matched: None,
        weights: *wf,
        total_welfare,
        groups,
        histogram: None,
        rows,
    })
}

impl WelfareReport {
    /// Re-check the report's internal invariants (after deserialization, say).
    pub fn validate(&self) -> Result<()> {
        let broken = |reason: String| Error::config("report", reason);
        if self.rows.len() != self.n {
            return Err(broken(format!("{} rows for n = {}", self.rows.len(), self.n)));
        }
        if self.rows.iter().filter(|r| r.allocated).count() != self.budget {
            return Err(broken("budget differs from the number of allocated rows".into()));
        }
        let share_sum: f64 = self.groups.iter().map(|g| g.welfare_share).sum();
        if (share_sum - 1.0).abs() > 1e-9 {
            return Err(broken(format!("welfare shares sum to {share_sum}")));
        }
        let recomputed: f64 = self
            .rows
            .iter()
            .map(
                |r| Ok(self.weights.weight(r.margin, r.income)? * self.weights.utility.utility(r.income, r.allocated)?),
            )
            .sum::<Result<f64>>()?;
        if ((recomputed - self.total_welfare) / self.total_welfare).abs() > 1e-9 {
            return Err(broken(format!(
                "total welfare {} disagrees with recomputed {}",
                self.total_welfare, recomputed
            )));
        }
        Ok(())
    }

    pub fn allocation(&self) -> Allocation {
        Allocation::from_assignments(self.rows.iter().map(|r| r.allocated).collect())
    }

    pub fn group(&self, g: Group) -> Option<&GroupAggregate> {
        self.groups.iter().find(|a| a.group == g)
    }

    pub fn weight_histogram(&self, bins: usize) -> WeightHistogram {
        let bins = bins.max(1);
        let (min, max) = self
            .rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r.weight), hi.max(r.weight))
            });
        let width = (max - min) / bins as f64;
        let mut counts: BTreeMap<Group, Vec<usize>> = BTreeMap::new();
        for g in &self.groups {
            counts.insert(g.group, vec![0; bins]);
        }
        for r in &self.rows {
            let bin = if width > 0.0 {
                (((r.weight - min) / width) as usize).min(bins - 1)
            } else {
                0
            };
            if let Some(c) = counts.get_mut(&r.group) {
                c[bin] += 1;
            }
        }
        WeightHistogram { min, max, bins, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDelta {
    pub group: Group,
    pub positive_rate: f64,
    pub mean_weight: f64,
    pub welfare_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlippedIndividual {
    pub index: usize,
    pub group: Group,
    pub income: f64,
    /// Fraction of incomes at or below this one.
    pub income_quantile: f64,
    pub baseline_allocated: bool,
    pub allocated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeComparison {
    pub regime: String,
    pub group_deltas: Vec<GroupDelta>,
    pub total_welfare_delta: f64,
    pub flipped_count: usize,
    pub flipped: Vec<FlippedIndividual>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub comparisons: Vec<RegimeComparison>,
}

/// Deltas of every report against the first one.
pub fn compare_regimes(reports: &[WelfareReport]) -> Result<ComparisonTable> {
    if reports.len() < 2 {
        return Err(Error::config("reports", "at least two reports are needed"));
    }
    let base = &reports[0];
    for r in &reports[1..] {
        if r.n != base.n || r.income_checksum != base.income_checksum {
            return Err(Error::DatasetMismatch(format!(
                "`{}` (n={}) vs `{}` (n={})",
                base.regime, base.n, r.regime, r.n
            )));
        }
    }

    let mut sorted_incomes: Vec<f64> = base.rows.iter().map(|r| r.income).collect();
    sorted_incomes.sort_by(f64::total_cmp);
    let quantile = |m: f64| sorted_incomes.partition_point(|&v| v <= m) as f64 / sorted_incomes.len() as f64;

    let comparisons = reports
        .iter()
        .map(|r| {
            let group_deltas = base
                .groups
                .iter()
                .filter_map(|b| {
                    r.group(b.group).map(|a| GroupDelta {
                        group: b.group,
                        positive_rate: a.positive_rate - b.positive_rate,
                        mean_weight: a.mean_weight - b.mean_weight,
                        welfare_share: a.welfare_share - b.welfare_share,
                    })
                })
                .collect();
            let flipped: Vec<FlippedIndividual> = base
                .rows
                .iter()
                .zip(&r.rows)
                .filter(|(b, a)| b.allocated != a.allocated)
                .map(|(b, a)| FlippedIndividual {
                    index: b.index,
                    group: b.group,
                    income: b.income,
                    income_quantile: quantile(b.income),
                    baseline_allocated: b.allocated,
                    allocated: a.allocated,
                })
                .collect();
            RegimeComparison {
                regime: r.regime.clone(),
                group_deltas,
                total_welfare_delta: r.total_welfare - base.total_welfare,
                flipped_count: flipped.len(),
                flipped,
            }
        })
        .collect();

    Ok(ComparisonTable {
        baseline: base.regime.clone(),
        provenance: None,
        comparisons,
    })
}

impl ComparisonTable {
    /// Aligned plain-text rendering for terminals.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "baseline: {}", self.baseline);
        let _ = writeln!(
            out,
            "{:<24} {:>5} {:>14} {:>14} {:>14} {:>8}",
            "regime", "group", "d_pos_rate", "d_mean_weight", "d_share", "flipped"
        );
        for c in &self.comparisons {
            for (i, d) in c.group_deltas.iter().enumerate() {
                let flipped = if i == 0 {
                    c.flipped_count.to_string()
                } else {
                    String::new()
                };
                let _ = writeln!(
                    out,
                    "{:<24} {:>5} {:>+14.6} {:>+14.6} {:>+14.6} {:>8}",
                    if i == 0 { c.regime.as_str() } else { "" },
                    d.group,
                    d.positive_rate,
                    d.mean_weight,
                    d.welfare_share,
                    flipped
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Individual, Label};
    use crate::welfare::{greedy_allocate, UtilityModel};

    fn hand_dataset() -> Dataset {
        let groups = [Group::Zero, Group::Zero, Group::One, Group::One];
        let margins = [1.0, -1.0, 1.0, -1.0];
        Dataset::new(
            groups
                .iter()
                .zip(margins)
                .map(|(&g, h)| Individual::new(vec![h], 100.0, g, Label::from_score(h)).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn log_wf() -> WeightFunction {
        WeightFunction::new(1.0, 1.0, UtilityModel::ConcaveLog { loan_amount: 100.0 }).unwrap()
    }

    #[test]
    fn hand_computed_shares() {
        let ds = hand_dataset();
        let margins = [1.0, -1.0, 1.0, -1.0];
        let alloc = Allocation::from_margins(&margins);
        let r = build_report(&ds, &margins, &alloc, &log_wf(), "unconstrained").unwrap();

        // four-term hand sum: w = e^{±1} / ln 2, u = ln 200 (allocated) or ln 100
        let ln2 = 2.0f64.ln();
        let per_group = std::f64::consts::E / ln2 * 200.0f64.ln() + (-1.0f64).exp() / ln2 * 100.0f64.ln();
        assert!((r.total_welfare - 2.0 * per_group).abs() <= 1e-12 * r.total_welfare);
        assert_eq!(r.groups.len(), 2);
        for g in &r.groups {
            assert!((g.welfare_share - 0.5).abs() < 1e-15);
            assert_eq!(g.positive_rate, 0.5);
            assert_eq!(g.tpr, Some(1.0));
        }
        r.validate().unwrap();
    }

    #[test]
    fn single_group_owns_everything() {
        let ds = Dataset::new(vec![
            Individual::new(vec![0.3], 50.0, Group::One, Label::Positive).unwrap(),
            Individual::new(vec![-0.2], 80.0, Group::One, Label::Negative).unwrap(),
        ])
        .unwrap();
        let margins = [0.3, -0.2];
        let r = build_report(&ds, &margins, &Allocation::from_margins(&margins), &log_wf(), "x").unwrap();
        assert_eq!(r.groups.len(), 1);
        assert_eq!(r.groups[0].welfare_share, 1.0);
    }

    #[test]
    fn non_positive_welfare_is_rejected() {
        // additively separable utility at income 0.5: log(0.5) < 0 and nobody allocated
        let ds = Dataset::new(vec![
            Individual::new(vec![0.0], 0.5, Group::Zero, Label::Negative).unwrap()
        ])
        .unwrap();
        let wf = WeightFunction::new(1.0, 1.0, UtilityModel::AdditivelySeparable { gamma: 0.1 }).unwrap();
        let r = build_report(&ds, &[-1.0], &Allocation::from_assignments(vec![false]), &wf, "x");
        assert!(matches!(r, Err(Error::ReportUndefined(_))));
    }

    #[test]
    fn json_round_trip_revalidates() {
        let ds = hand_dataset();
        let margins = [1.0, -1.0, 1.0, -1.0];
        let mut r = build_report(&ds, &margins, &Allocation::from_margins(&margins), &log_wf(), "a").unwrap();
        r.histogram = Some(r.weight_histogram(DEFAULT_HISTOGRAM_BINS));
        let s = serde_json::to_string_pretty(&r).unwrap();
        let back: WelfareReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        back.validate().unwrap();
        assert_eq!(serde_json::to_string_pretty(&back).unwrap(), s);
    }

    #[test]
    fn histogram_counts_everyone() {
        let ds = hand_dataset();
        let margins = [1.0, -1.0, 0.5, -1.0];
        let r = build_report(&ds, &margins, &Allocation::from_margins(&margins), &log_wf(), "a").unwrap();
        let h = r.weight_histogram(4);
        let total: usize = h.counts.values().flatten().sum();
        assert_eq!(total, 4);
        assert_eq!(h.counts[&Group::Zero][3], 1);
        assert_eq!(h.counts[&Group::Zero][0], 1);
    }

    #[test]
    fn comparison_against_itself_is_zero() {
        let ds = hand_dataset();
        let margins = [1.0, -1.0, 1.0, -1.0];
        let r = build_report(&ds, &margins, &Allocation::from_margins(&margins), &log_wf(), "a").unwrap();
        let table = compare_regimes(&[r.clone(), r]).unwrap();
        for c in &table.comparisons {
            assert_eq!(c.flipped_count, 0);
            assert_eq!(c.total_welfare_delta, 0.0);
            for d in &c.group_deltas {
                assert_eq!((d.positive_rate, d.mean_weight, d.welfare_share), (0.0, 0.0, 0.0));
            }
        }
        assert!(table.render_text().contains("baseline: a"));
    }

    #[test]
    fn flipped_count_is_hamming_distance() {
        let ds = hand_dataset();
        let margins = [1.0, -1.0, 1.0, -1.0];
        let a = Allocation::from_margins(&margins);
        let b = Allocation::from_assignments(vec![false, true, true, false]);
        let ra = build_report(&ds, &margins, &a, &log_wf(), "a").unwrap();
        let rb = build_report(&ds, &margins, &b, &log_wf(), "b").unwrap();
        let table = compare_regimes(&[ra, rb]).unwrap();
        assert_eq!(table.comparisons[1].flipped_count, a.hamming(&b));
        assert_eq!(table.comparisons[1].flipped[0].income_quantile, 1.0);
    }

    #[test]
    fn mismatched_datasets_rejected() {
        let ds = hand_dataset();
        let margins = [1.0, -1.0, 1.0, -1.0];
        let a = build_report(&ds, &margins, &Allocation::from_margins(&margins), &log_wf(), "a").unwrap();
        let mut b = a.clone();
        b.income_checksum = income_checksum([1.0]);
        assert!(matches!(
            compare_regimes(&[a.clone(), b]),
            Err(Error::DatasetMismatch(_))
        ));
        assert!(compare_regimes(&[a]).is_err());
    }

    #[test]
    fn matched_allocation_maximizes_welfare_on_small_instances() {
        // exhaustive check over all same-budget allocations, n = 10
        let incomes = [12.0, 40.0, 95.0, 300.0, 1000.0, 20.0, 5000.0, 64.0, 11.0, 777.0];
        let margins = [0.4, -0.3, 1.2, -2.0, 0.05, 0.9, -0.7, 0.33, -0.01, 2.2];
        let groups = [0, 1, 0, 1, 1, 0, 0, 1, 1, 0];
        let ds = Dataset::new(
            (0..10)
                .map(|i| {
                    Individual::new(
                        vec![margins[i]],
                        incomes[i],
                        Group::try_from(groups[i]).unwrap(),
                        Label::from_score(margins[i]),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap();
        let wf = log_wf();
        let budget = margins.iter().filter(|&&h| h > 0.0).count();
        let matched = greedy_allocate(&margins, &incomes, &wf, budget).unwrap();
        let best = build_report(&ds, &margins, &matched, &wf, "m").unwrap().total_welfare;
        for mask in 0u32..(1 << 10) {
            if mask.count_ones() as usize != budget {
                continue;
            }
            let alloc = Allocation::from_assignments((0..10).map(|i| mask & (1 << i) != 0).collect());
            let w = build_report(&ds, &margins, &alloc, &wf, "x").unwrap().total_welfare;
            assert!(w <= best + 1e-9 * best.abs());
        }
    }
}
