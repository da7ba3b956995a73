use crate::error::{Error, Result};
use crate::model::{positive_count, Allocation, Dataset, LinearClassifier};

use super::utility::WelfareWeight;

/// Solve the planner's unit-cost binary knapsack greedily.
///
/// Individuals are taken in decreasing order of marginal gain `w * delta_u`
/// until `budget` goods are handed out. Equal gains go to the lower index.
/// With unit costs this greedy rule is exact.
pub fn greedy_allocate<W: WelfareWeight + ?Sized>(
    margins: &[f64],
    incomes: &[f64],
    wf: &W,
    budget: usize,
) -> Result<Allocation> {
    if incomes.len() != margins.len() {
        return Err(Error::LengthMismatch {
            what: "incomes",
            expected: margins.len(),
            found: incomes.len(),
        });
    }
    let n = margins.len();
    if budget > n {
        return Err(Error::BudgetExceedsPopulation { budget, n });
    }
    let gains = marginal_gains(margins, incomes, wf)?;

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps lower indices first among equal gains
    order.sort_by(|&i, &j| gains[j].total_cmp(&gains[i]));

    let mut assignments = vec![false; n];
    for &i in order.iter().take(budget) {
        assignments[i] = true;
    }
    Ok(Allocation::from_assignments(assignments))
}

pub fn marginal_gains<W: WelfareWeight + ?Sized>(margins: &[f64], incomes: &[f64], wf: &W) -> Result<Vec<f64>> {
    margins
        .iter()
        .zip(incomes)
        .map(|(&h, &m)| wf.marginal_gain(h, m))
        .collect()
}

/// Outcome of running the planner against a classifier's own decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedAllocation {
    pub allocation: Allocation,
    pub classifier_allocation: Allocation,
    pub margins: Vec<f64>,
    pub matched: bool,
}

/// Greedy welfare allocation with the budget set to the classifier's
/// positive count, compared against the classifier's own sign rule.
pub fn matched_allocation<W: WelfareWeight + ?Sized>(
    classifier: &LinearClassifier,
    dataset: &Dataset,
    wf: &W,
) -> Result<MatchedAllocation> {
    let margins = classifier.margins(dataset)?;
    matched_allocation_from_margins(margins, &dataset.incomes(), wf)
}

/// As [`matched_allocation`], for margins that were already computed (or
/// post-processed).
pub fn matched_allocation_from_margins<W: WelfareWeight + ?Sized>(
    margins: Vec<f64>,
    incomes: &[f64],
    wf: &W,
) -> Result<MatchedAllocation> {
    let budget = positive_count(&margins);
    let allocation = greedy_allocate(&margins, incomes, wf, budget)?;
    let classifier_allocation = Allocation::from_margins(&margins);
    let matched = allocation == classifier_allocation;
    Ok(MatchedAllocation {
        allocation,
        classifier_allocation,
        margins,
        matched,
    })
}

/// `sum_i w_i v_i` where `v_i = delta_u_i` if allocated, else 0.
pub fn knapsack_value<W: WelfareWeight + ?Sized>(
    margins: &[f64],
    incomes: &[f64],
    wf: &W,
    allocation: &Allocation,
) -> Result<f64> {
    let gains = marginal_gains(margins, incomes, wf)?;
    Ok(gains
        .iter()
        .zip(allocation.assignments())
        .filter(|(_, &a)| a)
        .map(|(g, _)| g)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Group, Individual, Label};
    use crate::welfare::{IncomeBlindWeight, UtilityModel, WeightFunction};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wf() -> WeightFunction {
        WeightFunction::default()
    }

    /// Exhaustive search over all subsets of size `budget`; returns the best value.
    fn brute_force_best(gains: &[f64], budget: usize) -> (f64, Vec<bool>) {
        let n = gains.len();
        let mut best = (f64::NEG_INFINITY, vec![]);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != budget {
                continue;
            }
            let mut value = 0.0;
            for (i, g) in gains.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    value += g;
                }
            }
            if value > best.0 {
                best = (value, (0..n).map(|i| mask & (1 << i) != 0).collect());
            }
        }
        best
    }

    #[test]
    fn greedy_examples() {
        let incomes = [100.0, 100.0, 100.0];
        let a = greedy_allocate(&[2.0, -1.0, 0.5], &incomes, &wf(), 2).unwrap();
        assert_eq!(a.assignments(), &[true, false, true]);
        let a = greedy_allocate(&[2.0, -1.0, 0.5], &incomes, &wf(), 0).unwrap();
        assert_eq!(a.assignments(), &[false, false, false]);
        assert!(matches!(
            greedy_allocate(&[1.0], &[10.0], &wf(), 2),
            Err(Error::BudgetExceedsPopulation { budget: 2, n: 1 })
        ));
    }

    #[test]
    fn greedy_ties_go_to_lower_index() {
        let a = greedy_allocate(&[1.0, 1.0, 1.0], &[10.0, 20.0, 30.0], &wf(), 2).unwrap();
        assert_eq!(a.assignments(), &[true, true, false]);
    }

    #[test]
    fn greedy_matches_enumeration_on_eight() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let margins: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let incomes: Vec<f64> = (0..8).map(|_| rng.random_range(10.0..1e5)).collect();
        let w = wf();
        let a = greedy_allocate(&margins, &incomes, &w, 3).unwrap();
        // the oracle evaluates w * v_i with its own arithmetic
        let gains: Vec<f64> = margins
            .iter()
            .zip(&incomes)
            .map(|(&h, &m)| (h.exp() / (100.0f64 / m).ln_1p()) * (100.0f64 / m).ln_1p())
            .collect();
        let (best, best_set) = brute_force_best(&gains, 3);
        assert_eq!(a.assignments(), best_set.as_slice());
        let greedy_value = knapsack_value(&margins, &incomes, &w, &a).unwrap();
        assert!((greedy_value - best).abs() <= 1e-12 * best.abs());
    }

    #[test]
    fn matched_with_tie_inside_budget() {
        let ds = Dataset::new(
            [1.0, 1.0, -1.0]
                .iter()
                .zip([50.0, 5000.0, 10.0])
                .map(|(&x, m)| Individual::new(vec![x], m, Group::Zero, Label::Positive).unwrap())
                .collect(),
        )
        .unwrap();
        let c = LinearClassifier::new(vec![1.0], 0.0);
        let out = matched_allocation(&c, &ds, &wf()).unwrap();
        assert!(out.matched);
        assert_eq!(out.allocation.assignments(), &[true, true, false]);
    }

    #[test]
    fn income_blind_weights_break_matching_under_concave_utility() {
        // poorer individual with slightly lower margin gains more from the loan
        let blind = IncomeBlindWeight {
            beta: 1.0,
            k: 1.0,
            utility: UtilityModel::ConcaveLog { loan_amount: 100.0 },
        };
        let out = matched_allocation_from_margins(vec![0.2, 0.1, -1.0], &[1e6, 10.0, 50.0], &blind).unwrap();
        assert!(!out.matched);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize)> {
            (1usize..=12).prop_flat_map(|n| {
                (
                    proptest::collection::vec(-5.0f64..5.0, n),
                    proptest::collection::vec(10.0f64..1e6, n),
                    0..=n,
                )
            })
        }

        proptest! {
            #[test]
            fn greedy_is_exact_for_unit_costs((margins, incomes, budget) in instance()) {
                let w = wf();
                let a = greedy_allocate(&margins, &incomes, &w, budget).unwrap();
                prop_assert_eq!(a.budget(), budget);
                let gains = marginal_gains(&margins, &incomes, &w).unwrap();
                let (best, _) = brute_force_best(&gains, budget);
                let value = knapsack_value(&margins, &incomes, &w, &a).unwrap();
                prop_assert!(value >= best - 1e-12 * best.abs().max(1.0));
            }

            #[test]
            fn distinct_margins_always_match(
                mut margins in proptest::collection::vec(-5.0f64..5.0, 1..60),
                incomes_seed in any::<u64>(),
                family in 0usize..3,
            ) {
                margins.sort_by(f64::total_cmp);
                margins.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
                let mut rng = ChaCha8Rng::seed_from_u64(incomes_seed);
                let incomes: Vec<f64> = margins.iter().map(|_| rng.random_range(10.0..1e6)).collect();
                let utility = [
                    UtilityModel::Linear { gamma: 1.0 },
                    UtilityModel::AdditivelySeparable { gamma: 2.0 },
                    UtilityModel::ConcaveLog { loan_amount: 100.0 },
                ][family];
                let w = WeightFunction::new(1.0, 1.0, utility).unwrap();
                let out = matched_allocation_from_margins(margins, &incomes, &w).unwrap();
                prop_assert!(out.matched);
            }
        }
    }
}
