//! Fairness adjustments: group-specific thresholds applied as positive affine
//! transforms of the margins (post-processing), and a decision-boundary
//! covariance penalty added to SVM training (in-processing).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{positive_count, Allocation, Dataset, Group, LinearClassifier};
use crate::svm::{subgradient_descent, AbsLinearPenalty, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupThreshold {
    pub tau: f64,
    pub scale: f64,
}

/// Per-group affine maps `h' = scale_g (h - tau_g) + tau_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub tau_0: f64,
    pub groups: BTreeMap<Group, GroupThreshold>,
}

impl ThresholdSet {
    /// Unit slopes, the given per-group thresholds, and `tau_0 = 0`.
    pub fn with_thresholds(taus: [f64; 2]) -> Self {
        let groups = Group::ALL
            .iter()
            .map(|&g| {
                (
                    g,
                    GroupThreshold {
                        tau: taus[g.index()],
                        scale: 1.0,
                    },
                )
            })
            .collect();
        ThresholdSet { tau_0: 0.0, groups }
    }

    pub fn identity() -> Self {
        Self::with_thresholds([0.0, 0.0])
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tau_0.is_finite() {
            return Err(Error::config("tau_0", "must be finite"));
        }
        for (g, th) in &self.groups {
            if !th.tau.is_finite() {
                return Err(Error::config(format!("groups.{g}.tau"), "must be finite"));
            }
            if !(th.scale > 0.0 && th.scale.is_finite()) {
                return Err(Error::config(
                    format!("groups.{g}.scale"),
                    "must be positive and finite",
                ));
            }
        }
        Ok(())
    }

    pub fn get(&self, group: Group) -> Result<&GroupThreshold> {
        self.groups.get(&group).ok_or(Error::UnknownGroup(group.index() as i64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriterionKind {
    #[serde(rename = "dp")]
    DemographicParity,
    #[serde(rename = "eo")]
    EqualOpportunity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FairnessCriterion {
    pub kind: CriterionKind,
    /// Gap tolerated on top of the discreteness bound when reporting compliance.
    pub tolerance: f64,
}

impl Default for FairnessCriterion {
    fn default() -> Self {
        FairnessCriterion {
            kind: CriterionKind::DemographicParity,
            tolerance: 0.0,
        }
    }
}

impl FairnessCriterion {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::config("fairness.tolerance", "must be non-negative"));
        }
        Ok(())
    }
}

/// Split `total` across groups proportionally to `sizes` by largest remainder.
/// Ties in the remainder go to the lower group index.
pub fn largest_remainder(total: usize, sizes: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let mut counts: Vec<usize> = sizes.iter().map(|&s| total * s / n).collect();
    let mut remainders: Vec<(usize, usize)> = sizes.iter().enumerate().map(|(g, &s)| (total * s % n, g)).collect();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let left = total - counts.iter().sum::<usize>();
    for &(_, g) in remainders.iter().take(left) {
        counts[g] += 1;
    }
    counts
}

/// Threshold admitting exactly the top `k` of `sorted_desc` (when those
/// margins are distinct at the cut): the midpoint between the last admitted
/// and the first excluded margin.
fn cut_threshold(sorted_desc: &[f64], k: usize) -> f64 {
    match (k, sorted_desc.len()) {
        (_, 0) => 0.0,
        (0, _) => {
            let top = sorted_desc[0];
            top + top.abs().max(1.0)
        }
        (k, len) if k >= len => {
            let last = sorted_desc[len - 1];
            last - last.abs().max(1.0)
        }
        (k, _) => {
            let admitted = sorted_desc[k - 1];
            let excluded = sorted_desc[k];
            let mid = excluded + (admitted - excluded) / 2.0;
            if mid < admitted && mid >= excluded {
                mid
            } else {
                excluded
            }
        }
    }
}

fn sorted_desc(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Group thresholds meeting the criterion.
///
/// Demographic parity keeps the classifier's total positive count `B` and
/// splits it across groups proportionally to group size. Equal opportunity
/// targets the pooled true-positive rate in each group, rounded to the
/// nearest attainable count; the total number of positives may change.
pub fn find_group_thresholds(
    dataset: &Dataset,
    margins: &[f64],
    criterion: &FairnessCriterion,
) -> Result<ThresholdSet> {
    criterion.validate()?;
    if margins.len() != dataset.len() {
        return Err(Error::LengthMismatch {
            what: "margins",
            expected: dataset.len(),
            found: margins.len(),
        });
    }
    dataset.require_both_groups()?;
    let inds = dataset.individuals();

    let taus = match criterion.kind {
        CriterionKind::DemographicParity => {
            let budget = positive_count(margins);
            let sizes: Vec<usize> = Group::ALL.iter().map(|&g| dataset.group_size(g)).collect();
            let quota = largest_remainder(budget, &sizes);
            let mut taus = [0.0; 2];
            for g in Group::ALL {
                let members = sorted_desc(inds.iter().zip(margins).filter(|(i, _)| i.group == g).map(|(_, &h)| h));
                taus[g.index()] = cut_threshold(&members, quota[g.index()]);
            }
            taus
        }
        CriterionKind::EqualOpportunity => {
            let mut positives = [0usize; 2];
            for g in Group::ALL {
                positives[g.index()] = inds.iter().filter(|i| i.group == g && i.label.is_positive()).count();
                if positives[g.index()] == 0 {
                    return Err(Error::NoPositives(g));
                }
            }
            let total_pos = positives[0] + positives[1];
            let true_pos = inds
                .iter()
                .zip(margins)
                .filter(|(i, &h)| i.label.is_positive() && h > 0.0)
                .count();
            let mut taus = [0.0; 2];
            for g in Group::ALL {
                let n_pos = positives[g.index()];
                // round(true_pos * n_pos / total_pos), halves rounded up
                let target = (2 * true_pos * n_pos + total_pos) / (2 * total_pos);
                let members = sorted_desc(
                    inds.iter()
                        .zip(margins)
                        .filter(|(i, _)| i.group == g && i.label.is_positive())
                        .map(|(_, &h)| h),
                );
                taus[g.index()] = cut_threshold(&members, target);
            }
            taus
        }
    };
    Ok(ThresholdSet::with_thresholds(taus))
}

/// `h'_i = scale_g (h_i - tau_g) + tau_0` for each individual's group `g`.
pub fn post_process(margins: &[f64], groups: &[Group], ts: &ThresholdSet) -> Result<Vec<f64>> {
    if margins.len() != groups.len() {
        return Err(Error::LengthMismatch {
            what: "groups",
            expected: margins.len(),
            found: groups.len(),
        });
    }
    ts.validate()?;
    margins
        .iter()
        .zip(groups)
        .map(|(&h, &g)| {
            let th = ts.get(g)?;
            Ok(th.scale * (h - th.tau) + ts.tau_0)
        })
        .collect()
}

/// Positive rate and true-positive rate per group, with the two gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityGaps {
    pub positive_rate: [f64; 2],
    pub tpr: [Option<f64>; 2],
    pub positive_rate_gap: f64,
    pub tpr_gap: Option<f64>,
}

pub fn parity_gaps(dataset: &Dataset, allocation: &Allocation) -> Result<ParityGaps> {
    if allocation.len() != dataset.len() {
        return Err(Error::LengthMismatch {
            what: "allocation",
            expected: dataset.len(),
            found: allocation.len(),
        });
    }
    dataset.require_both_groups()?;
    let mut positive_rate = [0.0; 2];
    let mut tpr = [None; 2];
    for g in Group::ALL {
        let (mut n, mut pos, mut n_lab, mut tp) = (0usize, 0usize, 0usize, 0usize);
        for (i, ind) in dataset.individuals().iter().enumerate() {
            if ind.group != g {
                continue;
            }
            n += 1;
            let a = allocation.is_allocated(i);
            pos += a as usize;
            if ind.label.is_positive() {
                n_lab += 1;
                tp += a as usize;
            }
        }
        positive_rate[g.index()] = pos as f64 / n as f64;
        tpr[g.index()] = (n_lab > 0).then(|| tp as f64 / n_lab as f64);
    }
    let tpr_gap = match tpr {
        [Some(a), Some(b)] => Some((a - b).abs()),
        _ => None,
    };
    Ok(ParityGaps {
        positive_rate,
        tpr,
        positive_rate_gap: (positive_rate[0] - positive_rate[1]).abs(),
        tpr_gap,
    })
}

/// Centered group-tag direction `(1/n) sum (z_i - zbar) x_i`; its dot product with
/// `theta` equals the decision-boundary covariance.
fn covariance_direction(dataset: &Dataset) -> Result<Vec<f64>> {
    dataset.require_both_groups()?;
    let n = dataset.len() as f64;
    let z_mean = dataset.individuals().iter().map(|i| i.group.as_f64()).sum::<f64>() / n;
    let mut dir = vec![0.0; dataset.dim()];
    for ind in dataset.individuals() {
        let dz = ind.group.as_f64() - z_mean;
        for (c, x) in dir.iter_mut().zip(&ind.features) {
            *c += dz * x;
        }
    }
    dir.iter_mut().for_each(|c| *c /= n);
    Ok(dir)
}

/// Decision-boundary covariance `(1/n) sum (z_i - zbar) h(x_i)`.
pub fn covariance_proxy(classifier: &LinearClassifier, dataset: &Dataset) -> Result<f64> {
    let margins = classifier.margins(dataset)?;
    dataset.require_both_groups()?;
    let n = dataset.len() as f64;
    let z_mean = dataset.individuals().iter().map(|i| i.group.as_f64()).sum::<f64>() / n;
    let total: f64 = dataset
        .individuals()
        .iter()
        .zip(&margins)
        .map(|(i, h)| (i.group.as_f64() - z_mean) * h)
        .sum();
    Ok(total / n)
}

/// SVM training with `fair_lambda * |covariance_proxy|` added to the objective.
pub fn train_fair_svm(dataset: &Dataset, config: &TrainConfig, fair_lambda: f64) -> Result<LinearClassifier> {
    Ok(train_fair_svm_traced(dataset, config, fair_lambda)?.classifier)
}

pub fn train_fair_svm_traced(dataset: &Dataset, config: &TrainConfig, fair_lambda: f64) -> Result<TrainOutcome> {
    if !(fair_lambda >= 0.0 && fair_lambda.is_finite()) {
        return Err(Error::config("fair_lambda", "must be non-negative and finite"));
    }
    let direction = covariance_direction(dataset)?;
    if fair_lambda == 0.0 {
        return subgradient_descent(dataset, config, None);
    }
    let penalty = AbsLinearPenalty {
        strength: fair_lambda,
        direction,
    };
    subgradient_descent(dataset, config, Some(&penalty))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Individual, Label};
    use crate::svm::train_svm;

    fn person(x: f64, g: Group, label: Label) -> Individual {
        Individual::new(vec![x], 100.0, g, label).unwrap()
    }

    fn two_groups(n0: usize, n1: usize) -> (Dataset, Vec<f64>) {
        let mut inds = Vec::new();
        let mut margins = Vec::new();
        for i in 0..n0 {
            let h = 2.0 - i as f64 * 0.37;
            inds.push(person(h, Group::Zero, Label::from_score(h + 0.5)));
            margins.push(h);
        }
        for i in 0..n1 {
            let h = 0.5 - i as f64 * 0.29;
            inds.push(person(h, Group::One, Label::from_score(h + 0.5)));
            margins.push(h);
        }
        (Dataset::new(inds).unwrap(), margins)
    }

    fn kendall_concordant(a: &[f64], b: &[f64]) -> bool {
        for i in 0..a.len() {
            for j in 0..a.len() {
                if a[i] > a[j] && !(b[i] > b[j]) {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder(6, &[10, 10]), vec![3, 3]);
        // oracle: quotas (8*30/40, 8*10/40) = (6, 2) exactly
        assert_eq!(largest_remainder(8, &[30, 10]), vec![6, 2]);
        // quotas (7*3/7, 7*4/7)... and a genuine remainder case: (5*1/3, 5*2/3) = (1.67, 3.33)
        assert_eq!(largest_remainder(5, &[1, 2]), vec![2, 3]);
        assert_eq!(largest_remainder(1, &[1, 1]), vec![1, 0]);
        assert_eq!(largest_remainder(0, &[4, 9]), vec![0, 0]);
    }

    #[test]
    fn dp_equal_split() {
        // group 0 holds 4 positives, group 1 holds 2: DP moves to 3 and 3
        let mut inds = Vec::new();
        let mut margins = Vec::new();
        for g in Group::ALL {
            let npos = if g == Group::Zero { 4 } else { 2 };
            for i in 0..10 {
                let h = if i < npos { 1.0 + i as f64 } else { -1.0 - i as f64 };
                inds.push(person(h, g, Label::from_score(h)));
                margins.push(h);
            }
        }
        let ds = Dataset::new(inds).unwrap();
        let ts = find_group_thresholds(&ds, &margins, &FairnessCriterion::default()).unwrap();
        let adjusted = post_process(&margins, &ds.groups(), &ts).unwrap();
        let alloc = Allocation::from_margins(&adjusted);
        assert_eq!(alloc.budget(), 6);
        let gaps = parity_gaps(&ds, &alloc).unwrap();
        assert_eq!(gaps.positive_rate, [0.3, 0.3]);
    }

    #[test]
    fn dp_admits_top_k_per_group() {
        let (ds, margins) = two_groups(30, 10);
        let ts = find_group_thresholds(&ds, &margins, &FairnessCriterion::default()).unwrap();
        let adjusted = post_process(&margins, &ds.groups(), &ts).unwrap();
        let alloc = Allocation::from_margins(&adjusted);
        assert_eq!(alloc.budget(), positive_count(&margins));
        let quota = largest_remainder(positive_count(&margins), &[30, 10]);
        for g in Group::ALL {
            let idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.individuals()[i].group == g).collect();
            let admitted = idx.iter().filter(|&&i| alloc.is_allocated(i)).count();
            assert_eq!(admitted, quota[g.index()]);
            // margins in the fixture are strictly decreasing within each group
            for (rank, &i) in idx.iter().enumerate() {
                assert_eq!(alloc.is_allocated(i), rank < quota[g.index()]);
            }
        }
    }

    #[test]
    fn eo_balances_true_positive_rates() {
        let (ds, margins) = two_groups(25, 17);
        let criterion = FairnessCriterion {
            kind: CriterionKind::EqualOpportunity,
            tolerance: 0.0,
        };
        let ts = find_group_thresholds(&ds, &margins, &criterion).unwrap();
        let alloc = Allocation::from_margins(&post_process(&margins, &ds.groups(), &ts).unwrap());
        let gaps = parity_gaps(&ds, &alloc).unwrap();
        let n_pos: Vec<usize> = Group::ALL
            .iter()
            .map(|&g| {
                ds.individuals()
                    .iter()
                    .filter(|i| i.group == g && i.label.is_positive())
                    .count()
            })
            .collect();
        let bound = 1.0 / *n_pos.iter().min().unwrap() as f64;
        assert!(gaps.tpr_gap.unwrap() <= bound);
    }

    #[test]
    fn missing_groups_and_positives_rejected() {
        let ds = Dataset::new(vec![person(1.0, Group::Zero, Label::Positive)]).unwrap();
        assert!(matches!(
            find_group_thresholds(&ds, &[1.0], &FairnessCriterion::default()),
            Err(Error::MissingGroup(Group::One))
        ));
        let ds = Dataset::new(vec![
            person(1.0, Group::Zero, Label::Positive),
            person(1.0, Group::One, Label::Negative),
        ])
        .unwrap();
        let eo = FairnessCriterion {
            kind: CriterionKind::EqualOpportunity,
            tolerance: 0.0,
        };
        assert!(matches!(
            find_group_thresholds(&ds, &[1.0, 1.0], &eo),
            Err(Error::NoPositives(Group::One))
        ));
    }

    #[test]
    fn post_process_examples() {
        let margins = [2.0, 1.0, -1.0];
        let groups = [Group::Zero; 3];
        assert_eq!(
            post_process(&margins, &groups, &ThresholdSet::identity()).unwrap(),
            margins
        );

        let ts = ThresholdSet::with_thresholds([1.5, 0.0]);
        let out = post_process(&margins, &groups, &ts).unwrap();
        assert_eq!(out, vec![0.5, -0.5, -2.5]);
        assert_eq!(Allocation::from_margins(&out).assignments(), &[true, false, false]);
    }

    #[test]
    fn post_process_rejects_unknown_group_and_bad_scale() {
        let mut ts = ThresholdSet::identity();
        ts.groups.remove(&Group::One);
        assert!(matches!(
            post_process(&[1.0], &[Group::One], &ts),
            Err(Error::UnknownGroup(1))
        ));
        let mut ts = ThresholdSet::identity();
        ts.groups.get_mut(&Group::Zero).unwrap().scale = 0.0;
        assert!(post_process(&[1.0], &[Group::Zero], &ts).is_err());
    }

    #[test]
    fn threshold_json_shape() {
        let ts = ThresholdSet::with_thresholds([0.25, -1.5]);
        let s = serde_json::to_string(&ts).unwrap();
        assert_eq!(
            s,
            r#"{"tau_0":0.0,"groups":{"0":{"tau":0.25,"scale":1.0},"1":{"tau":-1.5,"scale":1.0}}}"#
        );
        let back: ThresholdSet = serde_json::from_str(&s).unwrap();
        assert_eq!(back, ts);
        assert!(serde_json::from_str::<ThresholdSet>(r#"{"tau_0":0,"groups":{"7":{"tau":0,"scale":1}}}"#).is_err());
    }

    #[test]
    fn covariance_examples() {
        let ds = Dataset::new(vec![
            person(0.0, Group::Zero, Label::Negative),
            person(2.0, Group::One, Label::Positive),
        ])
        .unwrap();
        let c = LinearClassifier::new(vec![1.0], 0.0);
        assert_eq!(covariance_proxy(&c, &ds).unwrap(), 0.5);

        let flat = LinearClassifier::new(vec![0.0], 3.0);
        assert_eq!(covariance_proxy(&flat, &ds).unwrap(), 0.0);

        let mirror = Dataset::new(vec![
            person(1.0, Group::Zero, Label::Positive),
            person(-1.0, Group::Zero, Label::Negative),
            person(-1.0, Group::One, Label::Negative),
            person(1.0, Group::One, Label::Positive),
        ])
        .unwrap();
        assert_eq!(covariance_proxy(&c, &mirror).unwrap(), 0.0);

        let single = Dataset::new(vec![person(1.0, Group::Zero, Label::Positive)]).unwrap();
        assert!(covariance_proxy(&c, &single).is_err());
    }

    #[test]
    fn zero_fairness_weight_reproduces_plain_training() {
        let (ds, _) = two_groups(20, 15);
        let config = TrainConfig {
            epochs: 20,
            seed: 4,
            ..TrainConfig::default()
        };
        let plain = train_svm(&ds, &config).unwrap();
        let fair = train_fair_svm(&ds, &config, 0.0).unwrap();
        assert_eq!(
            plain.theta.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            fair.theta.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(plain.b.to_bits(), fair.b.to_bits());
    }

    #[test]
    fn huge_fairness_weight_kills_covariance() {
        let (ds, _) = two_groups(20, 15);
        let config = TrainConfig {
            epochs: 30,
            seed: 4,
            ..TrainConfig::default()
        };
        let c = train_fair_svm(&ds, &config, 1e6).unwrap();
        assert!(covariance_proxy(&c, &ds).unwrap().abs() <= 1e-2);
        assert!(train_fair_svm(&ds, &config, -1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn post_process_preserves_group_order(
                ticks in proptest::collection::vec((-4000i32..4000, any::<bool>()), 2..40),
                tau0 in -2.0f64..2.0,
                tau1 in -2.0f64..2.0,
                s0 in 0.1f64..10.0,
                s1 in 0.1f64..10.0,
            ) {
                // margins on a 1e-3 grid so that distinct inputs stay distinct after the affine map
                let margins: Vec<f64> = ticks.iter().map(|&(t, _)| t as f64 / 1000.0).collect();
                let groups: Vec<Group> = ticks.iter().map(|&(_, g)| if g { Group::One } else { Group::Zero }).collect();
                let mut ts = ThresholdSet::with_thresholds([tau0, tau1]);
                ts.groups.get_mut(&Group::Zero).unwrap().scale = s0;
                ts.groups.get_mut(&Group::One).unwrap().scale = s1;
                let out = post_process(&margins, &groups, &ts).unwrap();
                for g in Group::ALL {
                    let a: Vec<f64> = (0..margins.len()).filter(|&i| groups[i] == g).map(|i| margins[i]).collect();
                    let b: Vec<f64> = (0..margins.len()).filter(|&i| groups[i] == g).map(|i| out[i]).collect();
                    prop_assert!(kendall_concordant(&a, &b));
                }
                for i in 0..margins.len() {
                    let th = ts.get(groups[i]).unwrap();
                    prop_assert_eq!(out[i] > 0.0, margins[i] > th.tau);
                }
            }

            #[test]
            fn dp_preserves_budget_and_bounds_gap(
                mut ticks in proptest::collection::vec((-100000i32..100000, any::<bool>()), 2..80),
            ) {
                ticks.sort_by_key(|t| t.0);
                ticks.dedup_by_key(|t| t.0);
                let margins: Vec<f64> = ticks.iter().map(|&(t, _)| t as f64 / 1000.0).collect();
                let inds: Vec<Individual> = ticks
                    .iter()
                    .map(|&(t, g)| person(t as f64, if g { Group::One } else { Group::Zero }, Label::Positive))
                    .collect();
                let ds = Dataset::new(inds).unwrap();
                prop_assume!(ds.has_both_groups());
                let ts = find_group_thresholds(&ds, &margins, &FairnessCriterion::default()).unwrap();
                let alloc = Allocation::from_margins(&post_process(&margins, &ds.groups(), &ts).unwrap());
                prop_assert_eq!(alloc.budget(), positive_count(&margins));
                let gaps = parity_gaps(&ds, &alloc).unwrap();
                let bound = 1.0 / ds.group_size(Group::Zero).min(ds.group_size(Group::One)) as f64;
                prop_assert!(gaps.positive_rate_gap <= bound + 1e-12);
            }
        }
    }
}
