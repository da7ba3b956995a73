use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Utility of income `x^m` with or without the allocated good.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum UtilityModel {
    /// `u = x^m + gamma y`
    Linear { gamma: f64 },
    /// `u = log x^m + gamma y`
    #[serde(rename = "addsep")]
    AdditivelySeparable { gamma: f64 },
    /// `u = log(x^m + L y)`, with `L` the loan amount.
    #[serde(rename = "log")]
    ConcaveLog { loan_amount: f64 },
}

impl Default for UtilityModel {
    fn default() -> Self {
        UtilityModel::ConcaveLog { loan_amount: 100.0 }
    }
}

fn check_income(income: f64) -> Result<()> {
    if income > 0.0 && income.is_finite() {
        Ok(())
    } else if !income.is_finite() {
        Err(Error::NonFinite("income"))
    } else {
        Err(Error::NonPositiveIncome(income))
    }
}

impl UtilityModel {
    pub fn validate(&self) -> Result<()> {
        let (field, value) = match *self {
            UtilityModel::Linear { gamma } => ("utility.gamma", gamma),
            UtilityModel::AdditivelySeparable { gamma } => ("utility.gamma", gamma),
            UtilityModel::ConcaveLog { loan_amount } => ("utility.loan_amount", loan_amount),
        };
        if value > 0.0 && value.is_finite() {
            Ok(())
        } else {
            Err(Error::config(
                field,
                format!("must be positive and finite, got {value}"),
            ))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UtilityModel::Linear { .. } => "linear",
            UtilityModel::AdditivelySeparable { .. } => "addsep",
            UtilityModel::ConcaveLog { .. } => "log",
        }
    }

    pub fn utility(&self, income: f64, allocated: bool) -> Result<f64> {
        check_income(income)?;
        let y = if allocated { 1.0 } else { 0.0 };
        Ok(match *self {
            UtilityModel::Linear { gamma } => income + gamma * y,
            UtilityModel::AdditivelySeparable { gamma } => income.ln() + gamma * y,
            UtilityModel::ConcaveLog { loan_amount } => (income + loan_amount * y).ln(),
        })
    }

    /// `u(x^m, 1) - u(x^m, 0)`, strictly positive.
    pub fn delta_u(&self, income: f64) -> Result<f64> {
        check_income(income)?;
        Ok(match *self {
            UtilityModel::Linear { gamma } | UtilityModel::AdditivelySeparable { gamma } => gamma,
            UtilityModel::ConcaveLog { loan_amount } => (loan_amount / income).ln_1p(),
        })
    }

    /// `d(delta u)/d(x^m)`; zero for the linear families.
    pub fn delta_u_slope(&self, income: f64) -> Result<f64> {
        check_income(income)?;
        Ok(match *self {
            UtilityModel::Linear { .. } | UtilityModel::AdditivelySeparable { .. } => 0.0,
            UtilityModel::ConcaveLog { loan_amount } => -loan_amount / (income * (income + loan_amount)),
        })
    }

    pub fn is_concave(&self) -> bool {
        matches!(self, UtilityModel::ConcaveLog { .. })
    }
}

/// Anything that assigns a social weight to an (margin, income) pair.
///
/// The condition checkers are generic over this so that alternative weight
/// rules (such as [`IncomeBlindWeight`]) can be run through the same probes.
pub trait WelfareWeight {
    fn utility(&self) -> &UtilityModel;

    fn weight(&self, margin: f64, income: f64) -> Result<f64>;

    /// `w * delta_u`: the welfare gained by allocating to this individual.
    fn marginal_gain(&self, margin: f64, income: f64) -> Result<f64> {
        Ok(self.weight(margin, income)? * self.utility().delta_u(income)?)
    }
}

/// Implied welfare weights of multiplicative form
/// `w(h, x^m) = exp(beta h) * k / delta_u(x^m)`.
///
/// With this form the marginal gain `w * delta_u` collapses to
/// `k exp(beta h)`, which depends on the margin alone, so greedy welfare
/// maximization orders individuals exactly as the classifier does.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightFunction {
    pub beta: f64,
    pub k: f64,
    pub utility: UtilityModel,
}

impl Default for WeightFunction {
    fn default() -> Self {
        WeightFunction {
            beta: 1.0,
            k: 1.0,
            utility: UtilityModel::default(),
        }
    }
}

impl WeightFunction {
    pub fn new(beta: f64, k: f64, utility: UtilityModel) -> Result<Self> {
        let wf = WeightFunction { beta, k, utility };
        wf.validate()?;
        Ok(wf)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config(
                "weights.beta",
                format!("must be positive and finite, got {}", self.beta),
            ));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::config(
                "weights.k",
                format!("must be positive and finite, got {}", self.k),
            ));
        }
        self.utility.validate()
    }

    /// The margin transform `f(h) = exp(beta h)`.
    pub fn margin_factor(&self, margin: f64) -> f64 {
        (self.beta * margin).exp()
    }

    /// The income factor `g(x^m) = k / delta_u(x^m)`.
    pub fn income_factor(&self, income: f64) -> Result<f64> {
        Ok(self.k / self.utility.delta_u(income)?)
    }
}

impl WelfareWeight for WeightFunction {
    fn utility(&self) -> &UtilityModel {
        &self.utility
    }

    fn weight(&self, margin: f64, income: f64) -> Result<f64> {
        Ok(self.margin_factor(margin) * self.income_factor(income)?)
    }
}

/// Weights `k exp(beta h)` that ignore income entirely.
///
/// Order-preserving under linear utility but not under concave utility,
/// where it lets income leak into the marginal gain. Useful as a negative
/// control for the condition checkers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncomeBlindWeight {
    pub beta: f64,
    pub k: f64,
    pub utility: UtilityModel,
}

impl WelfareWeight for IncomeBlindWeight {
    fn utility(&self) -> &UtilityModel {
        &self.utility
    }

    fn weight(&self, margin: f64, income: f64) -> Result<f64> {
        check_income(income)?;
        Ok(self.k * (self.beta * margin).exp())
    }
}
