//! Outlier detection over embeddings and the shared scoring harness: exact
//! k-NN outlier scores, rank-based ROC AUC, next-item accuracy, and a
//! parameter sweep over (method, k, d, epochs).
//!
//! Labels enter only here, to score detection quality after the fact; every
//! fitting step upstream is label-blind.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use crate::baselines::{run_method, Method};
use crate::data::{AttributedSequence, Dataset, Label};
use crate::error::{Error, Result};
use crate::numeric::Vector;
use crate::training::{ModelParams, TrainingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMetric {
    Euclidean,
    Cosine,
}

impl DistanceMetric {
    pub fn parse(name: &str) -> Result<DistanceMetric> {
        match name.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(DistanceMetric::Euclidean),
            "cosine" => Ok(DistanceMetric::Cosine),
            other => Err(Error::config(format!(
                "unknown distance metric {other:?}; expected euclidean or cosine"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::Cosine => "cosine",
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreVariant {
    /// Distance to the k-th nearest other point.
    KthDistance,
    /// Mean distance to the k nearest other points.
    MeanOfK,
}

impl ScoreVariant {
    pub fn parse(name: &str) -> Result<ScoreVariant> {
        match name.to_ascii_lowercase().as_str() {
            "kth" => Ok(ScoreVariant::KthDistance),
            "mean" => Ok(ScoreVariant::MeanOfK),
            other => Err(Error::config(format!(
                "unknown score variant {other:?}; expected kth or mean"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreVariant::KthDistance => "kth",
            ScoreVariant::MeanOfK => "mean",
        }
    }
}

fn distance(a: &Vector, b: &Vector, metric: DistanceMetric) -> f64 {
    match metric {
        DistanceMetric::Euclidean => {
            let mut sum = 0.0;
            for (x, y) in a.iter().zip(b.iter()) {
                let d = x - y;
                sum += d * d;
            }
            sum.sqrt()
        }
        DistanceMetric::Cosine => {
            let na = a.norm();
            let nb = b.norm();
            if na == 0.0 && nb == 0.0 {
                0.0
            } else if na == 0.0 || nb == 0.0 {
                1.0
            } else {
                1.0 - a.dot(b) / (na * nb)
            }
        }
    }
}

/// Exact k-NN outlier scores with the default scheme: Euclidean distance to
/// the k-th nearest other point.
pub fn knn_outlier_scores(embeddings: &[Vector], k: usize) -> Result<Vec<f64>> {
    knn_outlier_scores_with(embeddings, k, DistanceMetric::Euclidean, ScoreVariant::KthDistance)
}

/// Exact O(n^2) neighbor scoring; no approximate index, which is the point
/// at this scale.
pub fn knn_outlier_scores_with(
    embeddings: &[Vector],
    k: usize,
    metric: DistanceMetric,
    variant: ScoreVariant,
) -> Result<Vec<f64>> {
    let n = embeddings.len();
    if k == 0 {
        return Err(Error::input("neighbor count k must be at least 1"));
    }
    if k >= n {
        return Err(Error::input(format!(
            "k = {k} needs at least {} instances, got {n}",
            k + 1
        )));
    }
    let dim = embeddings[0].dim();
    if embeddings.iter().any(|e| e.dim() != dim) {
        return Err(Error::input("embeddings must all share one dimension"));
    }
    let mut scores = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n - 1);
    for i in 0..n {
        dists.clear();
        for j in 0..n {
            if j != i {
                dists.push(distance(&embeddings[i], &embeddings[j], metric));
            }
        }
        dists.select_nth_unstable_by(k - 1, f64::total_cmp);
        let score = match variant {
            ScoreVariant::KthDistance => dists[k - 1],
            ScoreVariant::MeanOfK => dists[..k].iter().sum::<f64>() / k as f64,
        };
        scores.push(score);
    }
    Ok(scores)
}

/// 1-based ranks by ascending value; tied values share their average rank.
pub(crate) fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0f64; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let shared = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = shared;
        }
        start = end;
    }
    ranks
}

/// Probability that a random outlier outscores a random inlier, ties counted
/// half (the rank formulation, identical to pair counting).
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::input(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::input("outlier scores must be finite"));
    }
    let n_out = labels.iter().filter(|l| **l == Label::Outlier).count();
    let n_in = labels.len() - n_out;
    if n_out == 0 || n_in == 0 {
        return Err(Error::input("AUC needs at least one inlier and one outlier"));
    }
    let ranks = average_ranks(scores);
    let outlier_rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l == Label::Outlier)
        .map(|(r, _)| r)
        .sum();
    let m = n_out as f64;
    Ok((outlier_rank_sum - m * (m + 1.0) / 2.0) / (m * n_in as f64))
}

/// Fraction of next-item predictions whose argmax hits the actual next item,
/// pooled over all steps of all given instances.
pub fn next_item_accuracy(
    model: &ModelParams,
    instances: &[AttributedSequence],
) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::input("no instances to score"));
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for inst in instances {
        let condition = if model.config.conditioning {
            Some(model.attribute.forward(&inst.attributes)?.0)
        } else {
            None
        };
        let (trace, _) = model.sequence.forward(condition.as_ref(), &inst.items)?;
        for (y, &target) in trace.predictions.iter().zip(&trace.targets) {
            if y.argmax() == Some(target) {
                correct += 1;
            }
            total += 1;
        }
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone)]
pub struct OutlierReport {
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
    pub k: usize,
    pub metric: DistanceMetric,
    pub auc: f64,
}

/// Score an embedding cloud and grade it against labels in one step.
pub fn detect_outliers(
    embeddings: &[Vector],
    labels: &[Label],
    k: usize,
    metric: DistanceMetric,
    variant: ScoreVariant,
) -> Result<OutlierReport> {
    let scores = knn_outlier_scores_with(embeddings, k, metric, variant)?;
    let auc = roc_auc(&scores, labels)?;
    Ok(OutlierReport { scores, labels: labels.to_vec(), k, metric, auc })
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    pub neighbor_grid: Vec<usize>,
    pub dim_grid: Vec<usize>,
    pub epoch_grid: Vec<usize>,
    /// Everything not on a sweep axis (seed, learning rate, batch size ...)
    /// comes from here; hidden_dim / epochs / pretrain_epochs are overridden
    /// per cell, with pretraining given the same budget as the sequence
    /// phase.
    pub base: TrainingConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub method: Method,
    pub k: usize,
    pub d: usize,
    pub epochs: usize,
    pub auc: f64,
    pub wall_seconds: f64,
}

impl SweepCell {
    /// The cell as one CSV row matching the
    /// `method,k,d,epochs,auc,wall_seconds` header.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.method, self.k, self.d, self.epochs, self.auc, self.wall_seconds
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

/// Fit every requested method at every (d, epochs), score at every k, and
/// record one AUC per grid cell. Score-based methods have no embedding, so
/// one fit covers all their cells. Training time is attributed to every cell
/// that shares the trained model.
pub fn run_sweep(dataset: &Dataset, sweep: &SweepConfig) -> Result<SweepResult> {
    if sweep.methods.is_empty() {
        return Err(Error::config("sweep needs at least one method"));
    }
    if sweep.neighbor_grid.is_empty() || sweep.dim_grid.is_empty() || sweep.epoch_grid.is_empty()
    {
        return Err(Error::config("sweep grids must be non-empty"));
    }
    let labels = dataset.labels()?;
    let mut cells = Vec::new();
    for &method in &sweep.methods {
        if method.is_score_based() {
            let start = Instant::now();
            let output = run_method(method, dataset, &sweep.base)?;
            let auc = roc_auc(output.scores().expect("score-based method"), &labels)?;
            let wall_seconds = start.elapsed().as_secs_f64();
            log::info!("swept {method}: auc {auc:.4}");
            for &d in &sweep.dim_grid {
                for &epochs in &sweep.epoch_grid {
                    for &k in &sweep.neighbor_grid {
                        cells.push(SweepCell { method, k, d, epochs, auc, wall_seconds });
                    }
                }
            }
        } else {
            for &d in &sweep.dim_grid {
                for &epochs in &sweep.epoch_grid {
                    let config = TrainingConfig {
                        hidden_dim: d,
                        epochs,
                        pretrain_epochs: epochs,
                        ..sweep.base.clone()
                    };
                    let fit_start = Instant::now();
                    let output = run_method(method, dataset, &config)?;
                    let fit_seconds = fit_start.elapsed().as_secs_f64();
                    let embeddings = output.embeddings().expect("embedding method");
                    for &k in &sweep.neighbor_grid {
                        let score_start = Instant::now();
                        let scores = knn_outlier_scores(embeddings, k)?;
                        let auc = roc_auc(&scores, &labels)?;
                        let wall_seconds = fit_seconds + score_start.elapsed().as_secs_f64();
                        log::info!("swept {method} k={k} d={d} epochs={epochs}: auc {auc:.4}");
                        cells.push(SweepCell { method, k, d, epochs, auc, wall_seconds });
                    }
                }
            }
        }
    }
    Ok(SweepResult { cells })
}

/// One row per cell under a `method,k,d,epochs,auc,wall_seconds` header.
pub fn write_sweep_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    writeln!(writer, "method,k,d,epochs,auc,wall_seconds")?;
    for cell in &result.cells {
        writeln!(writer, "{}", cell.csv_row())?;
    }
    writer.flush()?;
    Ok(())
}
