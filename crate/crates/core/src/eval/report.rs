//! Split evaluation, the per-seed report, and cross-seed aggregation.

use std::path::Path;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::training::batch_tensors;

use super::metrics::{
    binarize, class_prf, instrument_metrics, ConfusionCounts, MetricClass, Prf,
};

/// Fixed decision threshold for turning probabilities into predictions.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Bags scored per forward pass during evaluation.
const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelReport {
    pub label: String,
    pub counts: ConfusionCounts,
    pub positive: Prf,
    pub negative: Prf,
    pub instrument: Prf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub seed: u64,
    pub threshold: f64,
    pub split: &'static str,
    pub labels: Vec<LabelReport>,
    /// Unweighted mean of the per-label instrument-wise metrics.
    pub overall: Prf,
}

/// Eval-mode scoring of one split: confusion counts over observed labels
/// only, then the two-level macro metrics. Pure in (params, dataset,
/// threshold); repeated calls are bit-identical.
pub fn evaluate(
    params: &ModelParams,
    dataset: &Dataset,
    split: Split,
    threshold: f64,
    seed: u64,
) -> Result<EvalReport> {
    if params.n_labels() != dataset.n_labels() || params.feature_dim() != dataset.feature_dim() {
        return Err(Error::Shape(format!(
            "checkpoint ({} labels, dim {}) does not fit dataset ({} labels, dim {})",
            params.n_labels(),
            params.feature_dim(),
            dataset.n_labels(),
            dataset.feature_dim()
        )));
    }
    let indices = dataset.indices_of(split);
    if indices.is_empty() {
        return Err(Error::Data(format!("split {:?} is empty", split.as_str())));
    }

    let n_labels = dataset.n_labels();
    let mut counts = vec![ConfusionCounts::default(); n_labels];
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, _, _) = batch_tensors(dataset, chunk);
        let pass = params.forward_eval(&x)?;
        let preds = binarize(&pass.bag_scores, threshold);
        for (row, &bag_idx) in chunk.iter().enumerate() {
            let bag = &dataset.bags()[bag_idx];
            for l in 0..n_labels {
                if bag.mask[l] {
                    counts[l].record(bag.labels[l], preds[row * n_labels + l]);
                }
            }
        }
    }

    let labels: Vec<LabelReport> = dataset
        .label_names()
        .iter()
        .zip(&counts)
        .map(|(name, c)| LabelReport {
            label: name.clone(),
            counts: *c,
            positive: class_prf(c, MetricClass::Positive),
            negative: class_prf(c, MetricClass::Negative),
            instrument: instrument_metrics(c),
        })
        .collect();

    let n = labels.len() as f64;
    let overall = Prf {
        precision: labels.iter().map(|l| l.instrument.precision).sum::<f64>() / n,
        recall: labels.iter().map(|l| l.instrument.recall).sum::<f64>() / n,
        f1: labels.iter().map(|l| l.instrument.f1).sum::<f64>() / n,
    };

    Ok(EvalReport {
        seed,
        threshold,
        split: split.as_str(),
        labels,
        overall,
    })
}

const REPORT_HEADER: [&str; 11] = [
    "seed", "label", "pos_P", "pos_R", "pos_F1", "neg_P", "neg_R", "neg_F1", "macro_P",
    "macro_R", "macro_F1",
];

/// Writes the report as CSV: one row per label plus an OVERALL row.
pub fn write_report_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPORT_HEADER)?;
    let row = |label: &str, pos: &Prf, neg: &Prf, mac: &Prf| {
        vec![
            report.seed.to_string(),
            label.to_string(),
            pos.precision.to_string(),
            pos.recall.to_string(),
            pos.f1.to_string(),
            neg.precision.to_string(),
            neg.recall.to_string(),
            neg.f1.to_string(),
            mac.precision.to_string(),
            mac.recall.to_string(),
            mac.f1.to_string(),
        ]
    };
    for l in &report.labels {
        w.write_record(row(&l.label, &l.positive, &l.negative, &l.instrument))?;
    }
    // The OVERALL row repeats the overall macro in the macro columns; the
    // class columns hold the unweighted means of the per-label class metrics.
    let n = report.labels.len() as f64;
    let mean = |f: &dyn Fn(&LabelReport) -> f64| {
        report.labels.iter().map(f).sum::<f64>() / n
    };
    let pos = Prf {
        precision: mean(&|l| l.positive.precision),
        recall: mean(&|l| l.positive.recall),
        f1: mean(&|l| l.positive.f1),
    };
    let neg = Prf {
        precision: mean(&|l| l.negative.precision),
        recall: mean(&|l| l.negative.recall),
        f1: mean(&|l| l.negative.f1),
    };
    w.write_record(row("OVERALL", &pos, &neg, &report.overall))?;
    w.flush()?;
    Ok(())
}

/// One evaluation CSV parsed back: (seed, label rows, overall macro Prf).
pub struct ParsedReport {
    pub seed: u64,
    pub labels: Vec<String>,
    pub overall: Prf,
}

pub fn read_report_csv(path: &Path) -> Result<ParsedReport> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.iter().ne(REPORT_HEADER) {
        return Err(Error::Data(format!(
            "{} is not an evaluation report (header {:?})",
            path.display(),
            header
        )));
    }
    let mut seed = 0u64;
    let mut labels = Vec::new();
    let mut overall = None;
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Data(format!("bad number {:?} in {}", &rec[i], path.display())))
        };
        if &rec[1] == "OVERALL" {
            overall = Some(Prf {
                precision: get(8)?,
                recall: get(9)?,
                f1: get(10)?,
            });
        } else {
            labels.push(rec[1].to_string());
        }
        seed = rec[0]
            .parse()
            .map_err(|_| Error::Data(format!("bad seed {:?}", &rec[0])))?;
    }
    let overall = overall
        .ok_or_else(|| Error::Data(format!("{} has no OVERALL row", path.display())))?;
    Ok(ParsedReport {
        seed,
        labels,
        overall,
    })
}

/// Five-number summary plus mean, the statistics a box plot displays.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Linear-interpolation quantile of sorted values (the box-plot convention).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

fn summarize(metric: &str, values: &[f64]) -> SummaryRow {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("metrics are finite"));
    SummaryRow {
        metric: metric.to_string(),
        min: sorted[0],
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        mean: values.iter().sum::<f64>() / values.len() as f64,
    }
}

/// Cross-seed distribution summary of the overall macro metrics.
pub fn aggregate_seeds(reports: &[ParsedReport]) -> Result<Vec<SummaryRow>> {
    if reports.is_empty() {
        return Err(Error::InvalidArg("no reports to aggregate".into()));
    }
    for r in &reports[1..] {
        if r.labels != reports[0].labels {
            return Err(Error::Data(format!(
                "label vocabularies differ across reports: {:?} vs {:?}",
                reports[0].labels, r.labels
            )));
        }
    }
    let pick = |f: &dyn Fn(&ParsedReport) -> f64| -> Vec<f64> {
        reports.iter().map(f).collect()
    };
    Ok(vec![
        summarize("macro_P", &pick(&|r| r.overall.precision)),
        summarize("macro_R", &pick(&|r| r.overall.recall)),
        summarize("macro_F1", &pick(&|r| r.overall.f1)),
    ])
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "min", "q1", "median", "q3", "max", "mean"])?;
    for r in rows {
        w.write_record([
            r.metric.clone(),
            r.min.to_string(),
            r.q1.to_string(),
            r.median.to_string(),
            r.q3.to_string(),
            r.max.to_string(),
            r.mean.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
