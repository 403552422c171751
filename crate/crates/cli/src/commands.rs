//! Subcommand implementations.

use std::fs;
use std::path::PathBuf;

use clap::Args;

use miml_core::data::{
    generate_synthetic, load_dataset, openmic, save_dataset, Split, SynthSpec,
};
use miml_core::error::{Error, Result};
use miml_core::eval::{
    aggregate_seeds, evaluate as evaluate_split, export_attention, read_report_csv,
    render_attention_svg, write_report_csv, write_summary_csv, DEFAULT_THRESHOLD,
};
use miml_core::model::{load_checkpoint, ModelKind};
use miml_core::rng::RngStream;
use miml_core::training::{run_seeds, train as train_model, TrainConfig};

use crate::outdir::StagedDir;

#[derive(Args)]
pub struct ConvertArgs {
    /// NPZ container with arrays X, Y_true, Y_mask, sample_key
    #[arg(long)]
    pub npz: PathBuf,
    /// Text file listing training sample keys (one per line, optional header)
    #[arg(long)]
    pub train_split: PathBuf,
    /// Text file listing test sample keys
    #[arg(long)]
    pub test_split: PathBuf,
    /// JSON map of label name -> column index; positional names when absent
    #[arg(long)]
    pub classmap: Option<PathBuf>,
    /// Output dataset directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Generator spec JSON (see README for the schema)
    #[arg(long)]
    pub spec: PathBuf,
    /// Output dataset directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset directory (from convert or synth)
    #[arg(long)]
    pub data: PathBuf,
    /// Training config JSON; defaults apply when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model architecture
    #[arg(long, value_parser = ["att", "fc_t", "fc"])]
    pub model: String,
    /// Training seed (overrides the config file)
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Comma-separated seeds; trains one model per seed into <out>/seed_<n>
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Validation fraction (overrides the config file)
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Epoch count (overrides the config file)
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size (overrides the config file)
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Learning rate (overrides the config file)
    #[arg(long)]
    pub lr: Option<f64>,
    /// Output directory: checkpoint plus history.csv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Checkpoint directory written by train
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    /// Split to score
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
    pub split: String,
    /// Output CSV path
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct AttentionArgs {
    /// Checkpoint directory written by train
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated sample keys to export
    #[arg(long, value_delimiter = ',', required = true)]
    pub keys: Vec<String>,
    /// Output directory: attention.json plus optional SVGs
    #[arg(long)]
    pub out: PathBuf,
    /// Also render one SVG of attention strips per sample
    #[arg(long)]
    pub svg: bool,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Evaluation CSVs, or run directories containing eval.csv
    #[arg(long, required = true, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    /// Output CSV of per-metric five-number summaries plus means
    #[arg(long)]
    pub out: PathBuf,
}

pub fn convert(args: ConvertArgs) -> Result<()> {
    let dataset = openmic::import_openmic(
        &args.npz,
        &args.train_split,
        &args.test_split,
        args.classmap.as_deref(),
    )?;
    let staged = StagedDir::new(&args.out)?;
    save_dataset(&dataset, staged.path())?;
    staged.commit()?;

    println!(
        "converted: N={} L={} R={} D={} (train {}, test {})",
        dataset.n_bags(),
        dataset.n_labels(),
        dataset.bag_size(),
        dataset.feature_dim(),
        dataset.indices_of(Split::Train).len(),
        dataset.indices_of(Split::Test).len(),
    );
    println!("label\tobserved\tpositive");
    for (name, observed, positive) in openmic::observed_counts(&dataset) {
        println!("{name}\t{observed}\t{positive}");
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let spec: SynthSpec = serde_json::from_slice(&fs::read(&args.spec)?)?;
    let (dataset, truth) = generate_synthetic(&spec)?;
    let staged = StagedDir::new(&args.out)?;
    save_dataset(&dataset, staged.path())?;
    // Planted-label record, one entry per bag keyed like the dataset.
    let truth_json: Vec<serde_json::Value> = dataset
        .bags()
        .iter()
        .zip(&truth)
        .map(|(bag, planted)| {
            serde_json::json!({
                "sample_key": bag.sample_key,
                "planted_labels": planted,
            })
        })
        .collect();
    let mut bytes = serde_json::to_vec_pretty(&truth_json)?;
    bytes.push(b'\n');
    fs::write(staged.path().join("instance_truth.json"), bytes)?;
    staged.commit()?;
    println!(
        "generated: N={} L={} R={} D={} (train {}, test {})",
        dataset.n_bags(),
        dataset.n_labels(),
        dataset.bag_size(),
        dataset.feature_dim(),
        dataset.indices_of(Split::Train).len(),
        dataset.indices_of(Split::Test).len(),
    );
    Ok(())
}

fn resolved_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => TrainConfig::from_json_file(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(v) = args.val_fraction {
        cfg.val_fraction = v;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = args.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = args.lr {
        cfg.lr = lr;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(args: TrainArgs) -> Result<()> {
    let kind = ModelKind::parse(&args.model)?;
    let mut cfg = resolved_config(&args)?;
    let mut dataset = load_dataset(&args.data)?;

    // Datasets arrive with train/test assignments only; carve validation
    // from the train split, seeded by the config seed so reruns agree.
    if dataset.indices_of(Split::Val).is_empty() {
        dataset = dataset.split_validation(
            cfg.val_fraction,
            &mut RngStream::from_seed(cfg.seed),
        )?;
    }

    let staged = StagedDir::new(&args.out)?;
    match &args.seeds {
        Some(seeds) => {
            cfg.checkpoint_dir = Some(staged.path().to_path_buf());
            let outcomes = run_seeds(kind, &dataset, &cfg, seeds)?;
            staged.commit()?;
            for o in &outcomes {
                println!(
                    "seed {}: best epoch {} val_loss {:.6}",
                    o.seed, o.best_epoch, o.best_val_loss
                );
            }
        }
        None => {
            cfg.checkpoint_dir = Some(staged.path().to_path_buf());
            let outcome = train_model(kind, &dataset, &cfg)?;
            staged.commit()?;
            println!(
                "trained {} for {} epochs: best epoch {} val_loss {:.6}",
                kind.as_str(),
                cfg.epochs,
                outcome.best_epoch,
                outcome.best_val_loss
            );
        }
    }
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let (params, meta) = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset(&args.data)?;
    let split = Split::parse(&args.split)?;
    let report = evaluate_split(&params, &dataset, split, DEFAULT_THRESHOLD, meta.seed)?;

    // Stage through a temp file so a failure leaves no partial CSV.
    let tmp = tempfile_path(&args.out);
    write_report_csv(&report, &tmp)?;
    fs::rename(&tmp, &args.out)?;

    println!(
        "{} on {}: macro P {:.4} / R {:.4} / F1 {:.4} over {} labels",
        meta.architecture,
        report.split,
        report.overall.precision,
        report.overall.recall,
        report.overall.f1,
        report.labels.len()
    );
    Ok(())
}

fn tempfile_path(target: &std::path::Path) -> PathBuf {
    let parent = target.parent().unwrap_or_else(|| std::path::Path::new("."));
    let name = target
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    parent.join(format!(".{name}.partial"))
}

pub fn attention(args: AttentionArgs) -> Result<()> {
    let (params, _) = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset(&args.data)?;
    let export = export_attention(&params, &dataset, &args.keys)?;

    let staged = StagedDir::new(&args.out)?;
    let mut json = serde_json::to_vec_pretty(&export)?;
    json.push(b'\n');
    fs::write(staged.path().join("attention.json"), json)?;
    if args.svg {
        for sample in &export.samples {
            fs::write(
                staged.path().join(format!("{}.svg", sample.sample_key)),
                render_attention_svg(sample),
            )?;
        }
    }
    staged.commit()?;
    println!(
        "exported attention for {} sample(s) x {} label(s){}",
        export.samples.len(),
        export.samples.first().map(|s| s.labels.len()).unwrap_or(0),
        if args.svg { " with SVG strips" } else { "" }
    );
    Ok(())
}

pub fn report(args: ReportArgs) -> Result<()> {
    let mut parsed = Vec::with_capacity(args.runs.len());
    for run in &args.runs {
        let csv_path = if run.is_dir() { run.join("eval.csv") } else { run.clone() };
        if !csv_path.exists() {
            return Err(Error::Data(format!(
                "{} does not exist (expected an evaluation CSV)",
                csv_path.display()
            )));
        }
        parsed.push(read_report_csv(&csv_path)?);
    }
    let rows = aggregate_seeds(&parsed)?;

    let tmp = tempfile_path(&args.out);
    write_summary_csv(&rows, &tmp)?;
    fs::rename(&tmp, &args.out)?;

    println!("metric\tmin\tq1\tmedian\tq3\tmax\tmean");
    for r in &rows {
        println!(
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            r.metric, r.min, r.q1, r.median, r.q3, r.max, r.mean
        );
    }
    Ok(())
}
