//! Cross-validated evaluation, significance tests and the ablation grid.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use persona_core::ensemble::{train_member, vote_document, BaggedTraitModel, BaggingSpec};
use persona_core::folds::{make_folds, FoldPlan};
use persona_core::linalg::Matrix;
use persona_core::stats::paired_t_test;
use persona_core::svm::{Label, SvmConfig, TrainReport};
use persona_core::PersonalityTrait;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ceb::EmbeddingStore;
use crate::chunks::StoredChunk;
use crate::config::{EmbeddingSource, RunConfig, Variant};
use crate::corpus::Corpus;
use crate::dataset::{assemble, check_coverage, Dataset};
use crate::error::{Error, Result};

pub const REPORT_VERSION: u32 = 1;
/// Significance level for the `*` annotation.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;
/// Reference average accuracy of the bagged configuration and the window the
/// ablation grid checks against.
pub const TARGET_ACCURACY: f64 = 0.5903;
pub const TARGET_TOLERANCE: f64 = 0.005;

/// Trains all ensemble members in parallel; the result equals sequential
/// training because every member has its own seed.
pub fn train_trait(
    x: &Matrix,
    y: &[Label],
    trait_: PersonalityTrait,
    spec: &BaggingSpec,
    config: &SvmConfig,
) -> Result<(BaggedTraitModel, Vec<TrainReport>)> {
    let trained = (0..spec.n_estimators)
        .into_par_iter()
        .map(|bag| train_member(x, y, bag, spec, config))
        .collect::<persona_core::Result<Vec<_>>>()?;
    let (members, reports) = trained.into_iter().map(|t| (t.model, t.report)).unzip();
    Ok((BaggedTraitModel::new(trait_, members, *spec)?, reports))
}

/// The more frequent label; a tie goes to positive, matching `sign(0) = +1`.
pub fn majority_label(labels: impl IntoIterator<Item = bool>) -> Label {
    let balance: i64 = labels.into_iter().map(|l| if l { 1 } else { -1 }).sum();
    Label::from_decision(balance as f64)
}

/// Document vote, or `fallback` for an essay without chunks.
pub fn predict_essay(model: &BaggedTraitModel, chunks: &[Vec<f64>], fallback: Label) -> Result<Label> {
    if chunks.is_empty() {
        return Ok(fallback);
    }
    Ok(vote_document(model, chunks)?.label)
}

/// What produces predictions inside the cross-validation harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Classifier {
    /// Training folds' majority class for every essay.
    Majority,
    Svm {
        svm: SvmConfig,
        bagging: BaggingSpec,
    },
    /// Harness checks: returns the true label, or its opposite.
    Oracle,
    AntiOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitReport {
    #[serde(rename = "trait")]
    pub trait_code: String,
    pub fold_accuracies: Vec<f64>,
    pub fold_sizes: Vec<usize>,
    pub correct: usize,
    pub total: usize,
    /// Essay-level accuracy pooled over folds, `correct / total`.
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub variant: String,
    pub config_fingerprint: String,
    pub k: usize,
    pub seed: u64,
    pub n_essays: usize,
    pub per_trait: Vec<TraitReport>,
    /// Unweighted mean of the five trait accuracies.
    pub average_accuracy: f64,
    /// Ensemble members that stopped at `max_iter` before converging.
    pub nonconverged_members: usize,
}

impl EvalReport {
    pub fn trait_report(&self, t: PersonalityTrait) -> Option<&TraitReport> {
        self.per_trait.iter().find(|r| r.trait_code == t.code())
    }

    /// Per fold, the mean accuracy over traits.
    pub fn fold_averages(&self) -> Vec<f64> {
        let k = self.k;
        (0..k)
            .map(|f| self.per_trait.iter().map(|r| r.fold_accuracies[f]).sum::<f64>() / self.per_trait.len() as f64)
            .collect()
    }
}

struct FoldOutcome {
    correct: usize,
    total: usize,
    nonconverged: usize,
}

fn check_no_leakage(dataset: &Dataset, plan: &FoldPlan, fold: usize, t: PersonalityTrait) -> Result<()> {
    let train: HashSet<&str> = plan.train_indices(fold).iter().map(|&i| dataset.essays[i].author_id.as_str()).collect();
    let shared: Vec<String> = plan
        .test_indices(fold)
        .iter()
        .map(|&i| dataset.essays[i].author_id.as_str())
        .filter(|a| train.contains(a))
        .map(String::from)
        .collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::Leakage { trait_code: t.code(), fold, authors: shared })
    }
}

fn run_fold(
    dataset: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    t: PersonalityTrait,
    classifier: &Classifier,
) -> Result<FoldOutcome> {
    check_no_leakage(dataset, plan, fold, t)?;
    let train = plan.train_indices(fold);
    let test = plan.test_indices(fold);
    let truth = |i: usize| dataset.essays[i].labels.get(t);
    let fallback = majority_label(train.iter().map(|&i| truth(i)));
    let mut nonconverged = 0;
    let predictions: Vec<bool> = match classifier {
        Classifier::Majority => test.iter().map(|_| fallback.is_positive()).collect(),
        Classifier::Oracle => test.iter().map(|&i| truth(i)).collect(),
        Classifier::AntiOracle => test.iter().map(|&i| !truth(i)).collect(),
        Classifier::Svm { svm, bagging } => {
            let (x, y) = dataset.stack(&train, t)?;
            let (model, reports) = train_trait(&x, &y, t, bagging, svm)?;
            nonconverged = reports.iter().filter(|r| !r.converged).count();
            test.iter()
                .map(|&i| predict_essay(&model, &dataset.essays[i].chunks, fallback).map(Label::is_positive))
                .collect::<Result<_>>()?
        }
    };
    let correct = test.iter().zip(&predictions).filter(|(&i, &p)| truth(i) == p).count();
    Ok(FoldOutcome { correct, total: test.len(), nonconverged })
}

/// k-fold cross-validation over every trait; folds are stratified per trait
/// and grouped by essay. Trait×fold jobs run in parallel and are reduced in
/// a fixed order.
pub fn run_cv(dataset: &Dataset, classifier: &Classifier, k: usize, seed: u64) -> Result<(Vec<TraitReport>, usize)> {
    let plans = PersonalityTrait::ALL
        .iter()
        .map(|&t| make_folds(&dataset.labels(t), k, seed))
        .collect::<persona_core::Result<Vec<_>>>()?;
    for (t, plan) in PersonalityTrait::ALL.iter().zip(&plans) {
        if plan.stratification_waived {
            eprintln!("warning: {} uses leave-one-out folds; stratification is not checked", t.code());
        }
    }
    let jobs: Vec<(usize, usize)> = (0..5).flat_map(|ti| (0..k).map(move |f| (ti, f))).collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(ti, f)| run_fold(dataset, &plans[ti], f, PersonalityTrait::ALL[ti], classifier))
        .collect::<Result<Vec<_>>>()?;

    let mut nonconverged = 0;
    let reports = PersonalityTrait::ALL
        .iter()
        .enumerate()
        .map(|(ti, t)| {
            let folds = &outcomes[ti * k..(ti + 1) * k];
            nonconverged += folds.iter().map(|o| o.nonconverged).sum::<usize>();
            let correct = folds.iter().map(|o| o.correct).sum();
            let total = folds.iter().map(|o| o.total).sum();
            TraitReport {
                trait_code: t.code().to_string(),
                fold_accuracies: folds.iter().map(|o| o.correct as f64 / o.total as f64).collect(),
                fold_sizes: folds.iter().map(|o| o.total).collect(),
                correct,
                total,
                mean_accuracy: correct as f64 / total as f64,
            }
        })
        .collect();
    Ok((reports, nonconverged))
}

pub fn build_report(
    variant: &str,
    config: &RunConfig,
    n_essays: usize,
    per_trait: Vec<TraitReport>,
    nonconverged: usize,
) -> EvalReport {
    let average_accuracy = per_trait.iter().map(|r| r.mean_accuracy).sum::<f64>() / per_trait.len() as f64;
    EvalReport {
        version: REPORT_VERSION,
        variant: variant.to_string(),
        config_fingerprint: config.fingerprint(),
        k: per_trait.first().map_or(config.eval.k, |r| r.fold_accuracies.len()),
        seed: config.eval.seed,
        n_essays,
        per_trait,
        average_accuracy,
        nonconverged_members: nonconverged,
    }
}

/// Loaded inputs shared by every evaluated configuration.
#[derive(Debug, Default)]
pub struct Inputs {
    pub corpus: Corpus,
    pub chunks: Vec<StoredChunk>,
    pub contextual: Option<EmbeddingStore>,
    pub static_vectors: Option<EmbeddingStore>,
}

impl Inputs {
    fn store(&self, source: EmbeddingSource) -> Result<&EmbeddingStore> {
        let (store, what) = match source {
            EmbeddingSource::Contextual => (&self.contextual, "paths.embeddings_ceb"),
            EmbeddingSource::Static => (&self.static_vectors, "paths.static_ceb"),
        };
        store.as_ref().ok_or_else(|| Error::Config(format!("{what} is required for this configuration")))
    }

    /// Checks chunk/embedding coverage for each loaded store.
    pub fn check_coverage(&self) -> Result<()> {
        for store in [&self.contextual, &self.static_vectors].into_iter().flatten() {
            check_coverage(store, &self.chunks, false)?;
        }
        Ok(())
    }

    pub fn dataset(&self, config: &RunConfig, needs_features: bool) -> Result<Dataset> {
        if !needs_features {
            return Ok(Dataset::labels_only(&self.corpus));
        }
        assemble(&self.corpus, &self.chunks, self.store(config.pipeline.embeddings)?, &config.pipeline)
    }
}

fn classifier_for(config: &RunConfig, variant: Option<Variant>) -> Classifier {
    match variant {
        Some(Variant::MajorityBaseline) => Classifier::Majority,
        _ => Classifier::Svm { svm: config.svm_config(), bagging: config.bagging.spec() },
    }
}

/// Evaluates one variant (or the configuration as given, when `variant` is
/// `None`). Returns the report and the wall-clock time.
pub fn evaluate(inputs: &Inputs, base: &RunConfig, variant: Option<Variant>) -> Result<(EvalReport, Duration)> {
    let start = Instant::now();
    let config = variant.map_or_else(|| base.clone(), |v| v.apply(base));
    let dataset = inputs.dataset(&config, variant.is_none_or(Variant::needs_embeddings))?;
    let (per_trait, nonconverged) =
        run_cv(&dataset, &classifier_for(&config, variant), config.eval.k, config.eval.seed)?;
    let name = variant.map_or_else(|| "config".to_string(), |v| v.to_string());
    Ok((build_report(&name, &config, dataset.essays.len(), per_trait, nonconverged), start.elapsed()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceResult {
    pub variant_a: String,
    pub variant_b: String,
    /// Trait code, or `"average"` for per-fold means over traits.
    pub scope: String,
    /// `±∞` (serialized as null) for degenerate constant differences.
    pub t_statistic: f64,
    pub p_value: f64,
    pub df: usize,
    pub degenerate: bool,
}

/// Paired t-tests of `a` against `b`, per trait and on the fold averages.
pub fn compare(a: &EvalReport, b: &EvalReport) -> Result<Vec<SignificanceResult>> {
    let mut scopes: Vec<(String, Vec<f64>, Vec<f64>)> = a
        .per_trait
        .iter()
        .zip(&b.per_trait)
        .map(|(x, y)| (x.trait_code.clone(), x.fold_accuracies.clone(), y.fold_accuracies.clone()))
        .collect();
    scopes.push(("average".into(), a.fold_averages(), b.fold_averages()));
    scopes
        .into_iter()
        .map(|(scope, x, y)| {
            let r = paired_t_test(&x, &y)?;
            Ok(SignificanceResult {
                variant_a: a.variant.clone(),
                variant_b: b.variant.clone(),
                scope,
                t_statistic: r.t_statistic,
                p_value: r.p_value,
                df: r.df,
                degenerate: r.degenerate,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub grid: String,
    pub report: EvalReport,
    /// Tests against the bagged configuration at the same grid point.
    pub vs_bb_svm: Vec<SignificanceResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderingCheck {
    pub grid: String,
    pub better: String,
    pub worse: String,
    pub better_average: f64,
    pub worse_average: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetCheck {
    pub accuracy: f64,
    pub tolerance: f64,
    pub reached: bool,
    pub best_grid: Option<String>,
    pub best_average: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub version: u32,
    pub config_fingerprint: String,
    pub rows: Vec<AblationRow>,
    pub orderings: Vec<OrderingCheck>,
    pub target: TargetCheck,
}

/// Runs every variant at every grid point. Each variant's features are
/// assembled once and reused across the grid.
pub fn ablate(
    inputs: &Inputs,
    base: &RunConfig,
    variants: &[Variant],
    mut progress: impl FnMut(&str, &str, Duration),
) -> Result<AblationReport> {
    let grid = base.grid();
    let mut by_variant: Vec<Vec<EvalReport>> = Vec::new();
    for &v in variants {
        let first = v.apply(&base.with_grid_point(&grid[0]));
        let dataset = inputs.dataset(&first, v.needs_embeddings())?;
        let mut reports = Vec::new();
        for g in &grid {
            let start = Instant::now();
            let config = v.apply(&base.with_grid_point(g));
            let (per_trait, nc) = run_cv(&dataset, &classifier_for(&config, Some(v)), config.eval.k, config.eval.seed)?;
            reports.push(build_report(&v.to_string(), &config, dataset.essays.len(), per_trait, nc));
            progress(&v.to_string(), &g.to_string(), start.elapsed());
            if v == Variant::MajorityBaseline {
                // Independent of the SVM grid.
                let r = reports[0].clone();
                reports.resize(grid.len(), r);
                break;
            }
        }
        by_variant.push(reports);
    }

    let bb = variants.iter().position(|&v| v == Variant::BbSvm);
    let mut rows = Vec::new();
    let mut orderings = Vec::new();
    for (gi, g) in grid.iter().enumerate() {
        for (vi, &v) in variants.iter().enumerate() {
            let report = by_variant[vi][gi].clone();
            let vs_bb_svm = match bb {
                Some(b) if b != vi => compare(&by_variant[b][gi], &report)?,
                _ => Vec::new(),
            };
            rows.push(AblationRow { grid: g.to_string(), report, vs_bb_svm });
            if let (Some(b), Variant::M13 | Variant::M9 | Variant::M8) = (bb, v) {
                let better = by_variant[b][gi].average_accuracy;
                let worse = by_variant[vi][gi].average_accuracy;
                orderings.push(OrderingCheck {
                    grid: g.to_string(),
                    better: Variant::BbSvm.to_string(),
                    worse: v.to_string(),
                    better_average: better,
                    worse_average: worse,
                    holds: better > worse,
                });
            }
        }
    }

    let best = bb.and_then(|b| {
        by_variant[b]
            .iter()
            .zip(&grid)
            .min_by(|(x, _), (y, _)| {
                (x.average_accuracy - TARGET_ACCURACY).abs().total_cmp(&(y.average_accuracy - TARGET_ACCURACY).abs())
            })
            .map(|(r, g)| (g.to_string(), r.average_accuracy))
    });
    let target = TargetCheck {
        accuracy: TARGET_ACCURACY,
        tolerance: TARGET_TOLERANCE,
        reached: best.as_ref().is_some_and(|(_, a)| (a - TARGET_ACCURACY).abs() <= TARGET_TOLERANCE),
        best_grid: best.as_ref().map(|(g, _)| g.clone()),
        best_average: best.map(|(_, a)| a),
    };
    Ok(AblationReport { version: REPORT_VERSION, config_fingerprint: base.fingerprint(), rows, orderings, target })
}

/// One line of a rendered table.
pub struct TableRow<'a> {
    pub name: String,
    pub report: &'a EvalReport,
    /// Significance of each trait and of the average against the reference row.
    pub significant: [bool; 6],
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Aligned text table: traits as columns, variants as rows. `*` marks
/// p ≤ 0.05 against the reference configuration.
pub fn render_table(rows: &[TableRow<'_>]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max("Variant".len());
    let mut out = String::new();
    let _ = write!(out, "{:<width$}", "Variant");
    for t in PersonalityTrait::ALL {
        let _ = write!(out, "  {:>7}", t.code());
    }
    let _ = writeln!(out, "  {:>8}", "Average");
    for r in rows {
        let _ = write!(out, "{:<width$}", r.name);
        for (i, t) in PersonalityTrait::ALL.iter().enumerate() {
            let v = r.report.trait_report(*t).map_or_else(|| "-".to_string(), |tr| pct(tr.mean_accuracy));
            let mark = if r.significant[i] { "*" } else { " " };
            let _ = write!(out, "  {:>6}{mark}", v);
        }
        let mark = if r.significant[5] { "*" } else { " " };
        let _ = writeln!(out, "  {:>7}{mark}", pct(r.report.average_accuracy));
    }
    out
}

pub fn significance_marks(tests: &[SignificanceResult]) -> [bool; 6] {
    let mut marks = [false; 6];
    for (i, t) in tests.iter().take(6).enumerate() {
        marks[i] = t.p_value <= SIGNIFICANCE_LEVEL;
    }
    marks
}

pub fn render_ablation(report: &AblationReport) -> String {
    let mut out = String::new();
    let mut grids: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !grids.contains(&r.grid.as_str()) {
            grids.push(&r.grid);
        }
    }
    for g in grids {
        let _ = writeln!(out, "[{g}]");
        let rows: Vec<TableRow<'_>> = report
            .rows
            .iter()
            .filter(|r| r.grid == g)
            .map(|r| TableRow {
                name: r.report.variant.clone(),
                report: &r.report,
                significant: significance_marks(&r.vs_bb_svm),
            })
            .collect();
        out.push_str(&render_table(&rows));
        out.push('\n');
    }
    for o in &report.orderings {
        let _ = writeln!(
            out,
            "[{}] {} ({}) > {} ({}): {}",
            o.grid,
            o.better,
            pct(o.better_average),
            o.worse,
            pct(o.worse_average),
            if o.holds { "holds" } else { "does not hold" }
        );
    }
    let t = &report.target;
    match (&t.best_grid, t.best_average) {
        (Some(g), Some(a)) => {
            let _ = writeln!(
                out,
                "closest bb-svm average to {}±{}: {} at [{g}] ({})",
                pct(t.accuracy),
                pct(t.tolerance),
                pct(a),
                if t.reached { "within tolerance" } else { "outside tolerance" }
            );
        }
        _ => {
            let _ = writeln!(out, "bb-svm not in the variant list; target check skipped");
        }
    }
    out
}
