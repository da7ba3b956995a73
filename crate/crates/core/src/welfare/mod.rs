//! Utility families, implied welfare weights, the planner's greedy allocation
//! and numerical checks on the weight conditions.

mod allocate;
mod conditions;
mod utility;

pub use allocate::{
    greedy_allocate, knapsack_value, marginal_gains, matched_allocation, matched_allocation_from_margins,
    MatchedAllocation,
};
#[cfg(test)]
pub(crate) use conditions::draw_income;
pub(crate) use conditions::validate_probe;
pub use conditions::{
    check_indifference, check_weight_conditions, ConditionReport, Expectation, Violation, INDIFFERENCE_REL_TOL,
};
pub use utility::{IncomeBlindWeight, UtilityModel, WeightFunction, WelfareWeight};
