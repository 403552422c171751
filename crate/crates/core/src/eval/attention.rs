//! Attention-weight export: per (sample, label) instance scores, attention
//! weights, and bag score as JSON, with an optional SVG rendering of
//! per-label horizontal strips (one cell per instance, opacity scaled to
//! the strip's maximum weight).

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::training::batch_tensors;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelAttention {
    pub label: String,
    pub bag_score: f64,
    pub instance_scores: Vec<f64>,
    pub attention_weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleAttention {
    pub sample_key: String,
    pub bag_size: usize,
    pub labels: Vec<LabelAttention>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionExport {
    pub samples: Vec<SampleAttention>,
}

/// Eval-mode attention records for the requested sample keys, in request
/// order. Requires an instance-level model (attention or mean pooling).
pub fn export_attention(
    params: &ModelParams,
    dataset: &Dataset,
    sample_keys: &[String],
) -> Result<AttentionExport> {
    if sample_keys.is_empty() {
        return Err(Error::InvalidArg("no sample keys requested".into()));
    }
    let mut indices = Vec::with_capacity(sample_keys.len());
    for key in sample_keys {
        indices.push(
            dataset
                .index_of_key(key)
                .ok_or_else(|| Error::Data(format!("unknown sample key {key:?}")))?,
        );
    }

    let (x, _, _) = batch_tensors(dataset, &indices);
    let pass = params.forward_eval(&x)?;
    let (f, w) = match (pass.instance_scores, pass.attention) {
        (Some(f), Some(w)) => (f, w),
        _ => {
            return Err(Error::InvalidArg(
                "attention export needs an instance-level model (att or fc_t)".into(),
            ))
        }
    };

    let (r, n_labels) = (dataset.bag_size(), dataset.n_labels());
    let mut samples = Vec::with_capacity(indices.len());
    for (row, key) in sample_keys.iter().enumerate() {
        let mut labels = Vec::with_capacity(n_labels);
        for (l, name) in dataset.label_names().iter().enumerate() {
            labels.push(LabelAttention {
                label: name.clone(),
                bag_score: pass.bag_scores.at2(row, l),
                instance_scores: (0..r).map(|i| f.at3(row, i, l)).collect(),
                attention_weights: (0..r).map(|i| w.at3(row, i, l)).collect(),
            });
        }
        samples.push(SampleAttention {
            sample_key: key.clone(),
            bag_size: r,
            labels,
        });
    }
    Ok(AttentionExport { samples })
}

const CELL_W: f64 = 26.0;
const CELL_H: f64 = 16.0;
const CELL_GAP: f64 = 2.0;
const LABEL_W: f64 = 140.0;
const STRIP_GAP: f64 = 8.0;
const MARGIN: f64 = 10.0;

/// SVG 1.1 rendering of one sample: one horizontal strip per label, one
/// cell per instance, fill opacity proportional to the attention weight
/// normalized so each strip's maximum is fully opaque.
pub fn render_attention_svg(sample: &SampleAttention) -> String {
    let r = sample.bag_size;
    let n_labels = sample.labels.len();
    let width = LABEL_W + r as f64 * (CELL_W + CELL_GAP) + 2.0 * MARGIN;
    let height = MARGIN * 2.0 + 14.0 + n_labels as f64 * (CELL_H + STRIP_GAP);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{MARGIN}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" font-weight=\"bold\">{}</text>\n",
        MARGIN + 10.0,
        xml_escape(&sample.sample_key)
    ));
    for (l, lab) in sample.labels.iter().enumerate() {
        let y = MARGIN + 20.0 + l as f64 * (CELL_H + STRIP_GAP);
        svg.push_str(&format!(
            "  <text x=\"{MARGIN}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{} ({:.3})</text>\n",
            y + CELL_H - 4.0,
            xml_escape(&lab.label),
            lab.bag_score
        ));
        let max_w = lab
            .attention_weights
            .iter()
            .fold(f64::MIN_POSITIVE, |a, &b| a.max(b));
        for (i, &wv) in lab.attention_weights.iter().enumerate() {
            let x = LABEL_W + MARGIN + i as f64 * (CELL_W + CELL_GAP);
            let opacity = (wv / max_w).clamp(0.0, 1.0);
            svg.push_str(&format!(
                "  <rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{CELL_W}\" height=\"{CELL_H}\" fill=\"#1f77b4\" fill-opacity=\"{opacity:.4}\" stroke=\"#333\" stroke-width=\"0.5\"/>\n"
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
