//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime
//! failure (I/O, or a classifier whose allocation the planner does not
//! reproduce), 3 a check suite found violations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{
    fmt_f64, generate_population, load_csv, load_json, save_csv, save_json, write_table, PipelineConfig, Provenance,
};
use crate::error::{Error, Result};
use crate::fairness::{
    covariance_proxy, find_group_thresholds, parity_gaps, post_process, train_fair_svm_traced, CriterionKind,
    FairnessCriterion, GroupThreshold, ThresholdSet,
};
use crate::geometry::{build_transform, check_eq4, check_gradients, Eq4Sample, GradientCase, HyperplaneProjection};
use crate::model::{Allocation, Dataset, Group, LinearClassifier};
use crate::report::{build_report, compare_regimes, WelfareReport};
use crate::svm::{train_svm_traced, training_accuracy};
use crate::welfare::{
    check_indifference, check_weight_conditions, marginal_gains, matched_allocation_from_margins, ConditionReport,
    UtilityModel, WeightFunction, WelfareWeight,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_VIOLATIONS: i32 = 3;

/// Violations printed before the rest are summarized as a count.
const MAX_PRINTED_VIOLATIONS: usize = 20;
/// Smallest transported distance kept in the gradient suite.
const GRAD_MIN_DISTANCE: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(
    name = "fairwelfare",
    version,
    about = "Implied welfare weights for linear classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UtilityArg {
    Linear,
    Addsep,
    Log,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CriterionArg {
    Dp,
    Eo,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Suite {
    Eq1,
    Eq3,
    Eq4,
    Grad,
}

#[derive(Debug, clap::Args)]
struct WeightArgs {
    #[arg(long, value_enum)]
    utility: Option<UtilityArg>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic lending population.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a linear SVM, optionally with the covariance penalty.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Penalty weight; without a value, the configured `fairness.fair_lambda`.
        #[arg(long, num_args = 0..=1)]
        fair_lambda: Option<Option<f64>>,
    },
    /// Fit group thresholds for a parity criterion.
    Fairify {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        criterion: Option<CriterionArg>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        margins_out: Option<PathBuf>,
    },
    /// Dump implied welfare weights per individual.
    Weights {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the planner's allocation and write a welfare report.
    Allocate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        weights: WeightArgs,
        /// Label for this regime in the report.
        #[arg(long)]
        regime: Option<String>,
        #[arg(long)]
        report: PathBuf,
        /// Also write the per-individual rows as CSV.
        #[arg(long)]
        rows_out: Option<PathBuf>,
    },
    /// Compare reports against the first one.
    Compare {
        #[arg(long, num_args = 2.., required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Numerically check the weight and geometry conditions.
    Check {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Classifier file. Plain `{"theta": [...], "b": ...}` files are accepted too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub theta: Vec<f64>,
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fair_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl ModelFile {
    pub fn classifier(&self) -> LinearClassifier {
        LinearClassifier::new(self.theta.clone(), self.b)
    }
}

/// Threshold file: the threshold set's own fields, plus the criterion that
/// produced it and a provenance stamp. Bare threshold sets are accepted too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdFile {
    pub tau_0: f64,
    pub groups: BTreeMap<Group, GroupThreshold>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<FairnessCriterion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl ThresholdFile {
    pub fn thresholds(&self) -> ThresholdSet {
        ThresholdSet {
            tau_0: self.tau_0,
            groups: self.groups.clone(),
        }
    }
}

enum Failure {
    Error(Error),
    Unmatched(usize),
    Violations(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

/// Parse `args` (program name first) and run the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            if e.is_runtime() {
                EXIT_RUNTIME
            } else {
                EXIT_INVALID
            }
        }
        Err(Failure::Unmatched(n)) => {
            eprintln!("error: planner allocation differs from the classifier on {n} individuals");
            EXIT_RUNTIME
        }
        Err(Failure::Violations(n)) => {
            eprintln!("error: {n} violations found");
            EXIT_VIOLATIONS
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let config = match path {
        Some(p) => load_json(p)?,
        None => PipelineConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

/// Validate the resolved config, print its digest and return the stamp.
fn resolve(config: &PipelineConfig) -> Result<Provenance> {
    config.validate()?;
    let stamp = Provenance::for_config(config);
    println!("config digest: {}", stamp.config_digest);
    Ok(stamp)
}

fn apply_weight_args(config: &mut PipelineConfig, args: &WeightArgs) {
    if let Some(u) = args.utility {
        let current = config.weights.utility;
        config.weights.utility = match (u, current) {
            (UtilityArg::Linear, UtilityModel::Linear { .. })
            | (UtilityArg::Addsep, UtilityModel::AdditivelySeparable { .. })
            | (UtilityArg::Log, UtilityModel::ConcaveLog { .. }) => current,
            (UtilityArg::Linear, _) => UtilityModel::Linear { gamma: 1.0 },
            (UtilityArg::Addsep, _) => UtilityModel::AdditivelySeparable { gamma: 1.0 },
            (UtilityArg::Log, _) => UtilityModel::default(),
        };
    }
    if let Some(beta) = args.beta {
        config.weights.beta = beta;
    }
}

fn criterion_kind(arg: CriterionArg) -> CriterionKind {
    match arg {
        CriterionArg::Dp => CriterionKind::DemographicParity,
        CriterionArg::Eo => CriterionKind::EqualOpportunity,
    }
}

fn kind_name(kind: CriterionKind) -> &'static str {
    match kind {
        CriterionKind::DemographicParity => "dp",
        CriterionKind::EqualOpportunity => "eo",
    }
}

/// Margins of `model` on `dataset`, post-processed when thresholds are given.
fn scored(dataset: &Dataset, model: &ModelFile, thresholds: Option<&ThresholdFile>) -> Result<Vec<f64>> {
    let margins = model.classifier().margins(dataset)?;
    match thresholds {
        Some(t) => post_process(&margins, &dataset.groups(), &t.thresholds()),
        None => Ok(margins),
    }
}

fn default_regime(model: &ModelFile, thresholds: Option<&ThresholdFile>) -> String {
    match (thresholds, model.fair_lambda) {
        (Some(t), _) => match t.criterion {
            Some(c) => format!("post_process_{}", kind_name(c.kind)),
            None => "post_process".to_string(),
        },
        (None, Some(_)) => "inprocess_cov".to_string(),
        (None, None) => "unconstrained".to_string(),
    }
}

/// Welfare shares need positive utilities; say so before the report fails.
fn warn_nonpositive_utility(dataset: &Dataset, utility: &UtilityModel) -> Result<()> {
    let mut count = 0;
    for ind in dataset.individuals() {
        if utility.utility(ind.income, false)? <= 0.0 {
            count += 1;
        }
    }
    if count > 0 {
        eprintln!(
            "warning: {count} individuals have non-positive {} utility without the good",
            utility.name()
        );
    }
    Ok(())
}

fn dispatch(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Gen { config, out } => {
            let config = load_config(config.as_deref())?;
            let stamp = resolve(&config)?;
            let dataset = generate_population(&config.generator)?;
            save_csv(&dataset, &out, Some(&stamp))?;
            println!(
                "generated {} individuals (group 0: {}, group 1: {}), d = {}",
                dataset.len(),
                dataset.group_size(Group::Zero),
                dataset.group_size(Group::One),
                dataset.dim()
            );
        }

        Command::Train {
            data,
            config,
            out,
            fair_lambda,
        } => {
            let mut config = load_config(config.as_deref())?;
            let fair_lambda = fair_lambda.map(|v| v.unwrap_or(config.fairness.fair_lambda));
            if let Some(l) = fair_lambda {
                config.fairness.fair_lambda = l;
            }
            let stamp = resolve(&config)?;
            let dataset = load_csv(&data)?;
            let outcome = match fair_lambda {
                Some(l) => train_fair_svm_traced(&dataset, &config.train, l)?,
                None => train_svm_traced(&dataset, &config.train)?,
            };
            let c = &outcome.classifier;
            println!("objective: {}", outcome.objective);
            println!("training accuracy: {}", training_accuracy(c, &dataset)?);
            if dataset.has_both_groups() {
                println!("covariance proxy: {}", covariance_proxy(c, &dataset)?);
            }
            let file = ModelFile {
                theta: c.theta.clone(),
                b: c.b,
                fair_lambda,
                provenance: Some(stamp),
            };
            save_json(&file, &out)?;
        }

        Command::Fairify {
            data,
            model,
            config,
            criterion,
            out,
            margins_out,
        } => {
            let mut config = load_config(config.as_deref())?;
            if let Some(c) = criterion {
                config.fairness.criterion.kind = criterion_kind(c);
            }
            let stamp = resolve(&config)?;
            let dataset = load_csv(&data)?;
            let model: ModelFile = load_json(&model)?;
            let margins = model.classifier().margins(&dataset)?;
            let criterion = config.fairness.criterion;
            let thresholds = find_group_thresholds(&dataset, &margins, &criterion)?;
            let adjusted = post_process(&margins, &dataset.groups(), &thresholds)?;

            let before = parity_gaps(&dataset, &Allocation::from_margins(&margins))?;
            let after = parity_gaps(&dataset, &Allocation::from_margins(&adjusted))?;
            println!("criterion: {}", kind_name(criterion.kind));
            println!(
                "positive-rate gap: {} -> {}",
                before.positive_rate_gap, after.positive_rate_gap
            );
            if let (Some(b), Some(a)) = (before.tpr_gap, after.tpr_gap) {
                println!("tpr gap: {b} -> {a}");
            }
            println!(
                "positives: {} -> {}",
                Allocation::from_margins(&margins).budget(),
                Allocation::from_margins(&adjusted).budget()
            );

            save_json(
                &ThresholdFile {
                    tau_0: thresholds.tau_0,
                    groups: thresholds.groups,
                    criterion: Some(criterion),
                    provenance: Some(stamp.clone()),
                },
                &out,
            )?;
            if let Some(path) = margins_out {
                let header = ["index", "group", "margin", "adjusted_margin"].map(String::from);
                let rows: Vec<Vec<String>> = dataset
                    .individuals()
                    .iter()
                    .zip(margins.iter().zip(&adjusted))
                    .enumerate()
                    .map(|(i, (ind, (h, a)))| vec![i.to_string(), ind.group.to_string(), fmt_f64(*h), fmt_f64(*a)])
                    .collect();
                write_table(&path, &header, &rows, Some(&stamp))?;
            }
        }

        Command::Weights {
            data,
            model,
            thresholds,
            config,
            weights,
            out,
        } => {
            let mut config = load_config(config.as_deref())?;
            apply_weight_args(&mut config, &weights);
            let stamp = resolve(&config)?;
            let dataset = load_csv(&data)?;
            let model: ModelFile = load_json(&model)?;
            let thresholds: Option<ThresholdFile> = thresholds.as_deref().map(load_json).transpose()?;
            let margins = scored(&dataset, &model, thresholds.as_ref())?;
            let wf = config.weights;
            warn_nonpositive_utility(&dataset, &wf.utility)?;
            let incomes = dataset.incomes();
            let gains = marginal_gains(&margins, &incomes, &wf)?;

            let header = ["index", "group", "income", "margin", "weight", "marginal_gain"].map(String::from);
            let mut rows = Vec::with_capacity(dataset.len());
            for (i, ind) in dataset.individuals().iter().enumerate() {
                rows.push(vec![
                    i.to_string(),
                    ind.group.to_string(),
                    fmt_f64(ind.income),
                    fmt_f64(margins[i]),
                    fmt_f64(wf.weight(margins[i], ind.income)?),
                    fmt_f64(gains[i]),
                ]);
            }
            write_table(&out, &header, &rows, Some(&stamp))?;
            println!(
                "wrote weights for {} individuals (utility {})",
                dataset.len(),
                wf.utility.name()
            );
        }

        Command::Allocate {
            data,
            model,
            thresholds,
            config,
            weights,
            regime,
            report,
            rows_out,
        } => {
            let mut config = load_config(config.as_deref())?;
            apply_weight_args(&mut config, &weights);
            let stamp = resolve(&config)?;
            let dataset = load_csv(&data)?;
            let model: ModelFile = load_json(&model)?;
            let thresholds: Option<ThresholdFile> = thresholds.as_deref().map(load_json).transpose()?;
            let margins = scored(&dataset, &model, thresholds.as_ref())?;
            let wf = config.weights;
            warn_nonpositive_utility(&dataset, &wf.utility)?;
            let regime = regime.unwrap_or_else(|| default_regime(&model, thresholds.as_ref()));

            let matched = matched_allocation_from_margins(margins, &dataset.incomes(), &wf)?;
            let mut out: WelfareReport = build_report(&dataset, &matched.margins, &matched.allocation, &wf, &regime)?;
            out.matched = Some(matched.matched);
            out.histogram = Some(out.weight_histogram(config.report.histogram_bins));
            out.provenance = Some(stamp);
            save_json(&out, &report)?;
            if let Some(path) = rows_out {
                let header = [
                    "index",
                    "group",
                    "income",
                    "label",
                    "margin",
                    "weight",
                    "marginal_gain",
                    "utility",
                    "allocated",
                ]
                .map(String::from);
                let rows: Vec<Vec<String>> = out
                    .rows
                    .iter()
                    .map(|r| {
                        vec![
                            r.index.to_string(),
                            r.group.to_string(),
                            fmt_f64(r.income),
                            r.label.to_string(),
                            fmt_f64(r.margin),
                            fmt_f64(r.weight),
                            fmt_f64(r.marginal_gain),
                            fmt_f64(r.utility),
                            u8::from(r.allocated).to_string(),
                        ]
                    })
                    .collect();
                write_table(&path, &header, &rows, out.provenance.as_ref())?;
            }

            println!("regime: {regime}");
            println!("budget: {}", out.budget);
            println!("matched: {}", matched.matched);
            println!("total welfare: {}", out.total_welfare);
            for g in &out.groups {
                println!(
                    "group {}: n = {}, positive rate = {}, welfare share = {}",
                    g.group, g.count, g.positive_rate, g.welfare_share
                );
            }
            if !matched.matched {
                return Err(Failure::Unmatched(
                    matched.allocation.hamming(&matched.classifier_allocation),
                ));
            }
        }

        Command::Compare { reports, out } => {
            let loaded: Vec<WelfareReport> = reports.iter().map(|p| load_json(p)).collect::<Result<_>>()?;
            for r in &loaded {
                r.validate()?;
            }
            let digests: Vec<&str> = loaded
                .iter()
                .filter_map(|r| r.provenance.as_ref().map(|p| p.config_digest.as_str()))
                .collect();
            let mut table = compare_regimes(&loaded)?;
            // a comparison has no config of its own; it inherits the baseline's stamp
            table.provenance = loaded[0].provenance.clone();
            if let Some(p) = &table.provenance {
                println!("config digest: {}", p.config_digest);
            }
            if digests.windows(2).any(|w| w[0] != w[1]) {
                println!("note: reports were produced under different configs");
            }
            save_json(&table, &out)?;
            print!("{}", table.render_text());
        }

        Command::Check { suite, config } => {
            let config = load_config(config.as_deref())?;
            resolve(&config)?;
            let report = run_suite(suite, &config)?;
            println!(
                "samples: {}, violations: {}, max |dw_f| at dh = 0: {:e}",
                report.n_samples,
                report.violations.len(),
                report.max_abs_error_at_dh_zero
            );
            for v in report.violations.iter().take(MAX_PRINTED_VIOLATIONS) {
                eprintln!(
                    "violation: {} (observed {}, expected {:?})",
                    v.sample, v.observed, v.expected
                );
            }
            if report.violations.len() > MAX_PRINTED_VIOLATIONS {
                eprintln!(
                    "violation: ... {} more not shown",
                    report.violations.len() - MAX_PRINTED_VIOLATIONS
                );
            }
            if !report.passed() {
                return Err(Failure::Violations(report.violations.len()));
            }
        }
    }
    Ok(())
}

fn run_suite(suite: Suite, config: &PipelineConfig) -> Result<ConditionReport> {
    let c = &config.check;
    let wf: &WeightFunction = &config.weights;
    match suite {
        Suite::Eq1 => check_weight_conditions(wf, c.samples, c.seed, c.step, c.tol),
        Suite::Eq3 => check_indifference(wf, c.samples, c.seed),
        Suite::Grad => {
            let cases = GradientCase::random_batch(c.grad_cases, c.seed, 2..=10, GRAD_MIN_DISTANCE);
            check_gradients(&cases, c.step, c.grad_rel_tol)
        }
        Suite::Eq4 => {
            let dataset = generate_population(&config.generator)?;
            let h = train_svm_traced(&dataset, &config.train)?.classifier;
            let h_prime = train_fair_svm_traced(&dataset, &config.train, config.fairness.fair_lambda)?.classifier;
            let hp = HyperplaneProjection::new(&h)?;
            let t = build_transform(&h, &h_prime)?;
            let samples: Vec<Eq4Sample> = dataset
                .individuals()
                .iter()
                .take(c.samples)
                .map(|ind| Eq4Sample {
                    x: ind.features.clone(),
                    income: ind.income,
                })
                .collect();
            check_eq4(wf, &samples, &hp, &t, c.seed, c.step, c.tol)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(args)
    }

    #[test]
    fn help_and_version_are_not_errors() {
        for flag in ["--help", "--version"] {
            assert!(!parse(&["fairwelfare", flag]).unwrap_err().use_stderr());
        }
    }

    #[test]
    fn unknown_flags_are_rejected() {
        for args in [
            &["fairwelfare", "gen", "--out", "x.csv", "--bogus"][..],
            &["fairwelfare", "frobnicate"],
            &["fairwelfare", "check", "--suite", "eq9"],
            &["fairwelfare", "compare", "--reports", "a.json", "--out", "t.json"],
        ] {
            assert!(parse(args).unwrap_err().use_stderr(), "{args:?}");
        }
    }

    #[test]
    fn fair_lambda_value_is_optional() {
        let Command::Train { fair_lambda, .. } =
            parse(&["fairwelfare", "train", "--data", "d", "--out", "m", "--fair-lambda"])
                .unwrap()
                .command
        else {
            panic!("expected train");
        };
        assert_eq!(fair_lambda, Some(None));
    }

    #[test]
    fn missing_input_file_is_runtime() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.csv");
        let model = dir.path().join("m.json");
        let code = run([
            "fairwelfare".into(),
            "train".into(),
            "--data".into(),
            missing.into_os_string(),
            "--out".into(),
            model.into_os_string(),
        ]);
        assert_eq!(code, EXIT_RUNTIME);
    }

    #[test]
    fn utility_override_keeps_configured_parameter() {
        let mut config = PipelineConfig::default();
        config.weights.utility = UtilityModel::ConcaveLog { loan_amount: 250.0 };
        apply_weight_args(
            &mut config,
            &WeightArgs {
                utility: Some(UtilityArg::Log),
                beta: Some(2.0),
            },
        );
        assert_eq!(config.weights.utility, UtilityModel::ConcaveLog { loan_amount: 250.0 });
        assert_eq!(config.weights.beta, 2.0);
        apply_weight_args(
            &mut config,
            &WeightArgs {
                utility: Some(UtilityArg::Linear),
                beta: None,
            },
        );
        assert_eq!(config.weights.utility, UtilityModel::Linear { gamma: 1.0 });
    }

    #[test]
    fn bare_threshold_set_is_a_threshold_file() {
        let text = r#"{"tau_0":0.0,"groups":{"0":{"tau":0.25,"scale":1.0},"1":{"tau":-1.5,"scale":1.0}}}"#;
        let t: ThresholdFile = serde_json::from_str(text).unwrap();
        assert_eq!(t.thresholds(), ThresholdSet::with_thresholds([0.25, -1.5]));
        assert_eq!(t.criterion, None);
    }

    #[test]
    fn plain_classifier_json_is_a_model_file() {
        let m: ModelFile = serde_json::from_str(r#"{"theta": [1.0, -2.0], "b": 0.5}"#).unwrap();
        assert_eq!(m.classifier(), LinearClassifier::new(vec![1.0, -2.0], 0.5));
        assert!(serde_json::from_str::<ModelFile>(r#"{"theta": [1.0], "b": 0.5, "x": 1}"#).is_err());
    }
}
