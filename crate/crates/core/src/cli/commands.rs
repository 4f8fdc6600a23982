use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use crate::analytics::{
    collect_observations, concept_table, explain_graph, region_report, render_matrix,
    write_concept_tables, ConceptStats, Grouping,
};
use crate::error::{Error, Result};
use crate::ingestion::{
    build_samples, generate_synthetic, load_detections, load_scenes, split_dataset,
    write_detections, write_scenes, BuildOptions, EmbeddingTable, PlantedRule, Sample, Split,
    SyntheticConfig,
};
use crate::io::write_atomic;
use crate::training::{
    evaluate, gradcheck, load_checkpoint, save_checkpoint, tiny_instance, train, write_metrics_log,
    AblationMode, Evaluation, GradcheckConfig, GroupReport, SolverModel, TrainConfig,
    ABLATION_ROWS,
};

use super::config::{RunConfig, SplitPart, Sweep};

/// Node counts covered by `--sweep n`.
pub const SWEEP_N: [usize; 10] = [2, 4, 6, 8, 10, 12, 14, 16, 18, 20];
/// GCN depths covered by `--sweep layers`.
pub const SWEEP_LAYERS: [usize; 8] = [1, 2, 3, 4, 5, 6, 7, 8];

/// Loads samples. Without detections, a mode that ignores objects can run
/// from the scene file alone.
pub fn load_samples(cfg: &RunConfig, mode: AblationMode) -> Result<Vec<Sample>> {
    let ds = &cfg.dataset;
    let scenes = cfg
        .scenes
        .as_deref()
        .map(|p| load_scenes(p, ds.d1))
        .transpose()?;
    let samples = match (&cfg.detections, scenes) {
        (Some(det), scenes) => {
            let emb = cfg.embeddings.as_deref().ok_or_else(|| {
                Error::Config("--embeddings is required with --detections".into())
            })?;
            let table = EmbeddingTable::load(emb, Some(ds.d2))?;
            let records = load_detections(det, ds.n, ds.d1)?;
            let options = BuildOptions {
                allow_unknown: cfg.allow_unknown,
            };
            build_samples(&records, &table, scenes.as_deref(), options)?
        }
        (None, Some(scenes)) if !mode.use_objects => scenes
            .iter()
            .map(|s| Sample::scene_only(s, ds.n, ds.d2))
            .collect(),
        (None, _) => {
            let what = if mode.use_objects {
                "--detections"
            } else {
                "--scenes or --detections"
            };
            return Err(Error::Config(format!("{what} is required")));
        }
    };
    for s in &samples {
        s.validate(ds)?;
    }
    if samples.is_empty() {
        return Err(Error::Empty("dataset".into()));
    }
    Ok(samples)
}

fn checkpoint_model(cfg: &RunConfig) -> Result<(SolverModel, RunConfig)> {
    let path = cfg
        .checkpoint
        .as_deref()
        .ok_or_else(|| Error::Config("--checkpoint is required".into()))?;
    let (model, _) = load_checkpoint(path)?;
    let mut cfg = cfg.clone();
    cfg.dataset.d1 = model.config.d1;
    cfg.dataset.d2 = model.config.d2;
    cfg.dataset.classes = model.config.classes;
    Ok((model, cfg))
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainReport {
    pub best_epoch: Option<usize>,
    pub train: Evaluation,
    pub val: Option<Evaluation>,
    pub test: Option<Evaluation>,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

fn eval_opt(model: &SolverModel, samples: &[Sample]) -> Result<Option<Evaluation>> {
    if samples.is_empty() {
        Ok(None)
    } else {
        evaluate(model, samples).map(Some)
    }
}

/// Trains, then writes `checkpoint.json`, `metrics.jsonl` and `evaluation.json` under `--out`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    let samples = load_samples(cfg, cfg.train.mode)?;
    let split = split_dataset(&samples, cfg.dataset.split, cfg.train.seed)?;
    let outcome = train(&split, &cfg.model, &cfg.train)?;
    let checkpoint = cfg.out.join("checkpoint.json");
    let metrics = cfg.out.join("metrics.jsonl");
    let best_metrics = outcome.best_epoch.map(|e| outcome.metrics[e].clone());
    save_checkpoint(
        &checkpoint,
        &outcome.model,
        outcome.best_epoch,
        best_metrics,
    )?;
    write_metrics_log(&metrics, &outcome.metrics)?;
    let report = TrainReport {
        best_epoch: outcome.best_epoch,
        train: evaluate(&outcome.model, &split.train)?,
        val: eval_opt(&outcome.model, &split.val)?,
        test: eval_opt(&outcome.model, &split.test)?,
        checkpoint,
        metrics,
    };
    write_atomic(
        &cfg.out.join("evaluation.json"),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    Ok(report)
}

pub fn cmd_evaluate(cfg: &RunConfig, part: SplitPart) -> Result<Evaluation> {
    let (model, cfg) = checkpoint_model(cfg)?;
    let samples = load_samples(&cfg, model.mode)?;
    let chosen = match part {
        SplitPart::All => samples,
        part => {
            let s = split_dataset(&samples, cfg.dataset.split, cfg.train.seed)?;
            match part {
                SplitPart::Train => s.train,
                SplitPart::Val => s.val,
                _ => s.test,
            }
        }
    };
    evaluate(&model, &chosen)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub key: String,
    pub description: String,
    pub train_acc: Option<f64>,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub best_epoch: Option<usize>,
    /// Why the row was not trained, if it was not.
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationTable {
    pub sweep: Option<Sweep>,
    pub rows: Vec<AblationRow>,
}

fn fmt_acc(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{:.2}", 100.0 * v))
}

impl AblationTable {
    /// Tab-separated, accuracies in percent.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("row\tdescription\ttrain_acc\tval_acc\ttest_acc\tbest_epoch\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.key,
                r.skipped
                    .as_ref()
                    .map_or(r.description.clone(), |why| format!(
                        "{} ({why})",
                        r.description
                    )),
                fmt_acc(r.train_acc),
                fmt_acc(r.val_acc),
                fmt_acc(r.test_acc),
                r.best_epoch.map_or("-".into(), |e| e.to_string())
            );
        }
        out
    }
}

fn run_row(
    key: String,
    description: String,
    split: &Split<Sample>,
    cfg: &RunConfig,
    tc: &TrainConfig,
) -> Result<AblationRow> {
    let mc = cfg.model.clone();
    let out = train(split, &mc, tc)?;
    Ok(AblationRow {
        key,
        description,
        train_acc: Some(evaluate(&out.model, &split.train)?.accuracy),
        val_acc: eval_opt(&out.model, &split.val)?.map(|e| e.accuracy),
        test_acc: eval_opt(&out.model, &split.test)?.map(|e| e.accuracy),
        best_epoch: out.best_epoch,
        skipped: None,
    })
}

/// Trains one model per row with the same seed and budget. `has_objects`
/// false marks object-based rows as skipped.
pub fn ablation_table(
    samples: &[Sample],
    cfg: &RunConfig,
    sweep: Option<Sweep>,
    has_objects: bool,
) -> Result<AblationTable> {
    let mut rows = Vec::new();
    match sweep {
        None => {
            let split = split_dataset(samples, cfg.dataset.split, cfg.train.seed)?;
            for (slug, description, mode) in ABLATION_ROWS {
                if mode.use_objects && !has_objects {
                    rows.push(AblationRow {
                        key: slug.into(),
                        description: description.into(),
                        train_acc: None,
                        val_acc: None,
                        test_acc: None,
                        best_epoch: None,
                        skipped: Some("no detections given".into()),
                    });
                    continue;
                }
                log::info!("ablation row {slug}");
                let tc = TrainConfig {
                    mode,
                    ..cfg.train.clone()
                };
                rows.push(run_row(slug.into(), description.into(), &split, cfg, &tc)?);
            }
        }
        Some(Sweep::N) => {
            if !has_objects {
                return Err(Error::Config("--sweep n needs detections".into()));
            }
            for k in SWEEP_N {
                let resized: Vec<Sample> = samples.iter().map(|s| s.with_node_count(k)).collect();
                let split = split_dataset(&resized, cfg.dataset.split, cfg.train.seed)?;
                rows.push(run_row(
                    format!("N={k}"),
                    format!("{k} object slots"),
                    &split,
                    cfg,
                    &cfg.train,
                )?);
            }
        }
        Some(Sweep::Layers) => {
            let split = split_dataset(samples, cfg.dataset.split, cfg.train.seed)?;
            for l in SWEEP_LAYERS {
                let mut c = cfg.clone();
                c.model.layers = l;
                rows.push(run_row(
                    format!("L={l}"),
                    format!("{l} GCN layers"),
                    &split,
                    &c,
                    &cfg.train,
                )?);
            }
        }
    }
    Ok(AblationTable { sweep, rows })
}

/// Writes `ablation.tsv`, `ablation_n.tsv` or `ablation_layers.tsv` under `--out`.
pub fn cmd_ablate(cfg: &RunConfig, sweep: Option<Sweep>) -> Result<AblationTable> {
    let has_objects = cfg.detections.is_some();
    let load_mode = if has_objects {
        AblationMode::FULL
    } else {
        AblationMode::SCENE_ONLY
    };
    let samples = load_samples(cfg, load_mode)?;
    let table = ablation_table(&samples, cfg, sweep, has_objects)?;
    let name = match sweep {
        None => "ablation.tsv",
        Some(Sweep::N) => "ablation_n.tsv",
        Some(Sweep::Layers) => "ablation_layers.tsv",
    };
    write_atomic(&cfg.out.join(name), table.to_tsv().as_bytes())?;
    Ok(table)
}

/// Gradient check on the built-in tiny instance; an error if any group fails.
pub fn cmd_gradcheck(seed: u64, mode: AblationMode) -> Result<Vec<GroupReport>> {
    let (model, samples) = tiny_instance(seed, mode)?;
    gradcheck(&model, &samples, &GradcheckConfig::default())
}

pub fn render_gradcheck(reports: &[GroupReport]) -> String {
    let mut out = String::from("group\trel_error\tstatus\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{}\t{:.3e}\t{}",
            r.group,
            r.rel_error,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    out
}

/// Region report plus masked-affinity dump for one image.
pub fn cmd_explain(cfg: &RunConfig, image_id: &str) -> Result<String> {
    let (model, cfg) = checkpoint_model(cfg)?;
    let samples = load_samples(&cfg, model.mode)?;
    let Some(sample) = samples.iter().find(|s| s.image_id == image_id) else {
        let shown: Vec<&str> = samples
            .iter()
            .take(5)
            .map(|s| s.image_id.as_str())
            .collect();
        return Err(Error::Config(format!(
            "unknown image id {image_id:?}; available ids include {} ({} total)",
            shown.join(", "),
            samples.len()
        )));
    };
    let report = region_report(&model, sample)?;
    let graph = explain_graph(&model, sample)?;
    let mut text = report.to_text();
    text.push_str("\nmasked affinity\n");
    text.push_str(&render_matrix(&graph.masked_affinity));
    let safe: String = image_id
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    write_atomic(
        &cfg.out.join(format!("explain_{safe}.txt")),
        text.as_bytes(),
    )?;
    Ok(text)
}

/// Ranked concept tables written as CSV under `--out`.
pub fn cmd_concepts(
    cfg: &RunConfig,
    top_k: usize,
    grouping: Grouping,
) -> Result<Vec<ConceptStats>> {
    let (model, cfg) = checkpoint_model(cfg)?;
    let samples = load_samples(&cfg, model.mode)?;
    let obs = collect_observations(&model, &samples, grouping)?;
    let categories: BTreeSet<usize> = match grouping {
        Grouping::Gold => samples.iter().map(|s| s.label).collect(),
        Grouping::Predicted => obs.iter().map(|o| o.category).collect(),
    };
    let categories: Vec<usize> = categories.into_iter().collect();
    let rows = concept_table(&obs, &categories, top_k)?;
    write_concept_tables(&cfg.out, &rows)?;
    Ok(rows)
}

pub fn render_concepts(rows: &[ConceptStats]) -> String {
    let mut out = String::from("category\trank\tconcept\tN\tf\ta\tw\ttfidf\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.4}\t{:.3}\t{:.4}\t{:.4}",
            r.category, r.rank, r.concept, r.count, r.frequency, r.attention, r.weighted, r.tfidf
        );
    }
    out
}

/// Writes `detections.jsonl`, `embeddings.txt`, `scenes.jsonl` and a
/// `config.toml` with matching dimensions and paths.
pub fn cmd_synth(
    out: &std::path::Path,
    config: &SyntheticConfig,
    seed: u64,
    rule: PlantedRule,
) -> Result<Vec<PathBuf>> {
    let ds = generate_synthetic(config, seed, rule)?;
    let det = out.join("detections.jsonl");
    let emb = out.join("embeddings.txt");
    let sce = out.join("scenes.jsonl");
    let conf = out.join("config.toml");
    write_detections(&det, &ds.records)?;
    ds.table.save(&emb)?;
    write_scenes(&sce, &ds.scenes)?;
    let toml_text = format!(
        "detections = {:?}\nembeddings = {:?}\nscenes = {:?}\nn = {}\nd1 = {}\nd2 = {}\nclasses = {}\nseed = {seed}\n",
        det.display().to_string(),
        emb.display().to_string(),
        sce.display().to_string(),
        config.n,
        config.d1,
        config.d2,
        config.classes
    );
    write_atomic(&conf, toml_text.as_bytes())?;
    Ok(vec![det, emb, sce, conf])
}
