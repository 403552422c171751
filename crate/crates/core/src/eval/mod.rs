//! Two-level macro metric protocol, per-seed reports, cross-seed
//! aggregation, and attention-weight export.

mod attention;
mod metrics;
mod report;

pub use attention::{
    export_attention, render_attention_svg, AttentionExport, LabelAttention, SampleAttention,
};
pub use metrics::{binarize, class_prf, instrument_metrics, ConfusionCounts, MetricClass, Prf};
pub use report::{
    aggregate_seeds, evaluate, read_report_csv, write_report_csv, write_summary_csv, EvalReport,
    LabelReport, ParsedReport, SummaryRow, DEFAULT_THRESHOLD,
};
