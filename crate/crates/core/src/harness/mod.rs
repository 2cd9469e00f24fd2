//! Pipeline commands behind the `gqa` binary: synthesis, pseudo-MOS labelling,
//! full-reference metrics, the three training stages and evaluation.
//!
//! Every command reads and writes plain files so stages can run separately.
//! Training commands share one output directory; each stage looks there for
//! the previous stage's checkpoint unless one is given explicitly.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, Profile};

use crate::cloud::{load_cloud, normalize_unit_sphere, CloudFormat, PointCloud};
use crate::distort::{generate_dataset, DistortionType};
use crate::error::{GqaError, Result};
use crate::eval::{mean_std, ScoreStats};
use crate::manifest::Manifest;
use crate::metrics::{evaluate, pseudo_mos_prepared, rank_by_metric, MetricId, PreparedCloud};
use crate::nn::{Checkpoint, CheckpointConfig, GqaNet, Stage};
use crate::rng::Seed;
use crate::shapes::{desk_reference, Shape};
use crate::train::{
    finetune_scores, list_ndcg, load_lists, partition_lists, patch_lists, pretrain_mpfe, score_lists, split_references,
    train_lrl, EpochLog, PatchedList, TrainConfig,
};

/// Element type used for training and inference from the command line.
pub type Real = f32;

pub const PRETRAIN_CHECKPOINT: &str = "checkpoint_pretrain.json";
pub const TRAIN_CHECKPOINT: &str = "checkpoint_train.json";
pub const FINETUNE_CHECKPOINT: &str = "checkpoint_finetune.json";

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| GqaError::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        mkdir(dir)?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> GqaError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => GqaError::io(path, io),
        other => GqaError::Parse { path: path.into(), line: 0, msg: format!("{other:?}") },
    }
}

fn write_rows<R: AsRef<[String]>>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r.as_ref()).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| GqaError::io(path, e))
}

/// `dtype,metric,value` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dtype: String,
    pub metric: String,
    pub value: f64,
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows.iter().map(|r| vec![r.dtype.clone(), r.metric.clone(), r.value.to_string()]).collect();
    write_rows(path, &["dtype", "metric", "value"], &rows)
}

/// Writes a training log; `names` are the train and validation column names.
pub fn write_log(path: &Path, logs: &[EpochLog], names: [&str; 2]) -> Result<()> {
    let with_val = logs.iter().any(|l| l.val.is_some());
    let mut header = vec!["epoch", "loss", names[0]];
    if with_val {
        header.push(names[1]);
    }
    let rows: Vec<Vec<String>> = logs
        .iter()
        .map(|l| {
            let mut r = vec![l.epoch.to_string(), l.loss.to_string(), l.train.to_string()];
            if with_val {
                r.push(l.val.map_or_else(String::new, |v| v.to_string()));
            }
            r
        })
        .collect();
    write_rows(path, &header, &rows)
}

// ---------------------------------------------------------------- synth

/// Where reference clouds come from.
#[derive(Debug, Clone)]
pub enum ReferenceSource {
    /// Every `.ply` / `.xyz` file in a directory, named by file stem.
    Dir(PathBuf),
    /// The first `count` built-in synthetic shapes.
    Builtin(usize),
}

/// Loads reference clouds, normalized to the unit sphere and sorted by id.
pub fn load_references(source: &ReferenceSource, seed: Seed) -> Result<Vec<(String, PointCloud)>> {
    match source {
        ReferenceSource::Builtin(count) => {
            if *count == 0 || *count > Shape::ALL.len() {
                return Err(GqaError::Config(format!("builtin reference count must be in 1..={}", Shape::ALL.len())));
            }
            Shape::ALL[..*count]
                .iter()
                .map(|&s| Ok((s.name().to_string(), desk_reference(s, seed.derive_str(s.name(), &[]))?)))
                .collect()
        }
        ReferenceSource::Dir(dir) => {
            let entries = fs::read_dir(dir).map_err(|e| GqaError::io(dir, e))?;
            let mut files: Vec<(String, PathBuf, CloudFormat)> = Vec::new();
            for e in entries {
                let path = e.map_err(|e| GqaError::io(dir, e))?.path();
                if let (Some(fmt), Some(stem)) = (CloudFormat::from_path(&path), path.file_stem().and_then(|s| s.to_str())) {
                    files.push((stem.to_string(), path.clone(), fmt));
                }
            }
            if files.is_empty() {
                return Err(GqaError::InvalidArgument(format!("no .ply or .xyz files in {}", dir.display())));
            }
            files.sort_by(|a, b| a.0.cmp(&b.0));
            files
                .into_iter()
                .map(|(id, path, fmt)| Ok((id, normalize_unit_sphere(&load_cloud(&path, fmt)?))))
                .collect()
        }
    }
}

/// Synthesizes a dataset and writes `out/manifest.json`.
pub fn cmd_synth(
    source: &ReferenceSource,
    dtypes: &[DistortionType],
    levels: usize,
    seed: Seed,
    out: &Path,
) -> Result<Manifest> {
    if let Some(d) = dtypes.iter().find(|d| !d.is_generatable()) {
        return Err(GqaError::ExternalOnlyDistortion(d.tag().into()));
    }
    let refs = load_references(source, seed)?;
    generate_dataset(&refs, dtypes, levels, out, seed)
}

// ---------------------------------------------------------------- pmos

/// Labels every item of the manifest with its pseudo-MOS and saves it to `out`
/// (in place when `out` is `None`). Pristine items get exactly 1.
pub fn cmd_pmos(manifest_path: &Path, out: Option<&Path>) -> Result<Manifest> {
    let mut m = Manifest::load(manifest_path)?;
    let mut prepared: BTreeMap<String, PreparedCloud> = BTreeMap::new();
    for r in &m.references {
        prepared.insert(r.id.clone(), PreparedCloud::with_default_normals(&m.load_reference(&r.id)?)?);
    }
    let mut labels = Vec::with_capacity(m.lists.len());
    for list in &m.lists {
        let reference = &prepared[&list.reference];
        let mut values = Vec::with_capacity(list.items.len());
        for item in &list.items {
            if item.level == 0 {
                values.push(1.0);
                continue;
            }
            let mut cloud = m.load_item(item)?;
            cloud.clear_normals();
            values.push(pseudo_mos_prepared(reference, &PreparedCloud::with_default_normals(&cloud)?)?);
        }
        labels.push(values);
    }
    for (list, values) in m.lists.iter_mut().zip(labels) {
        for (item, v) in list.items.iter_mut().zip(values) {
            item.pseudo_mos = Some(v);
        }
    }
    let target = out.map_or_else(|| manifest_path.to_path_buf(), Path::to_path_buf);
    if target != manifest_path {
        // item paths are relative to the manifest directory
        let same_dir = target.parent().map(|p| p.canonicalize().ok()) == manifest_path.parent().map(|p| p.canonicalize().ok());
        if !same_dir {
            return Err(GqaError::InvalidArgument("pseudo-MOS manifest must stay next to the dataset".into()));
        }
    }
    m.save(&target)?;
    Ok(m)
}

// ---------------------------------------------------------------- metric

#[derive(Debug, Clone, PartialEq)]
pub struct MetricNdcgRow {
    pub list_id: String,
    pub dtype: DistortionType,
    pub metric: MetricId,
    pub ndcg_ab: f64,
    pub ndcg_ba: f64,
    pub ndcg_symmetric: f64,
}

/// Per-dtype mean of `value` plus an overall `MEAN` row, for each metric name.
fn per_dtype_means(rows: &[(String, String, f64)]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut overall: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (dtype, metric, v) in rows {
        groups.entry((metric.clone(), dtype.clone())).or_default().push(*v);
        overall.entry(metric.clone()).or_default().push(*v);
    }
    let mut out = Vec::new();
    for (metric, all) in overall {
        for ((m, dtype), vs) in &groups {
            if *m == metric {
                out.push(SummaryRow { dtype: dtype.clone(), metric: metric.clone(), value: mean_std(vs).0 });
            }
        }
        out.push(SummaryRow { dtype: "MEAN".into(), metric, value: mean_std(&all).0 });
    }
    out
}

/// Evaluates full-reference metrics on every list, ranks the items by each metric and
/// reports NDCG per list (`metric_ndcg.csv`), per-item values (`metric_values.csv`)
/// and per-dtype means (`metric_summary.csv`).
pub fn cmd_metric(manifest_path: &Path, metrics: &[MetricId], out: &Path) -> Result<Vec<MetricNdcgRow>> {
    if metrics.is_empty() {
        return Err(GqaError::Config("no metrics selected".into()));
    }
    let m = Manifest::load(manifest_path)?;
    let need_normals = metrics.iter().any(|x| x.needs_normals());
    let prep = |c: &PointCloud| -> Result<PreparedCloud> {
        if need_normals {
            let mut c = c.clone();
            c.clear_normals();
            PreparedCloud::with_default_normals(&c)
        } else {
            Ok(PreparedCloud { index: c.index(), cloud: c.clone() })
        }
    };
    let mut refs = BTreeMap::new();
    for r in &m.references {
        refs.insert(r.id.clone(), prep(&m.load_reference(&r.id)?)?);
    }
    let mut value_rows = Vec::new();
    let mut ndcg_rows = Vec::new();
    for list in &m.lists {
        let reference = &refs[&list.reference];
        let items = list.items.iter().map(|i| prep(&m.load_item(i)?)).collect::<Result<Vec<_>>>()?;
        for &metric in metrics {
            let results = items.iter().map(|it| evaluate(metric, reference, it)).collect::<Result<Vec<_>>>()?;
            for (item, r) in list.items.iter().zip(&results) {
                value_rows.push(vec![
                    list.id.clone(),
                    item.level.to_string(),
                    metric.to_string(),
                    r.ab.to_string(),
                    r.ba.to_string(),
                    r.symmetric.to_string(),
                ]);
            }
            let o = metric.orientation();
            let nd = |vals: Vec<f64>| list_ndcg_by(&vals, o);
            ndcg_rows.push(MetricNdcgRow {
                list_id: list.id.clone(),
                dtype: list.dtype,
                metric,
                ndcg_ab: nd(results.iter().map(|r| r.ab).collect())?,
                ndcg_ba: nd(results.iter().map(|r| r.ba).collect())?,
                ndcg_symmetric: nd(results.iter().map(|r| r.symmetric).collect())?,
            });
        }
    }
    mkdir(out)?;
    write_rows(&out.join("metric_values.csv"), &["list_id", "level", "metric", "direction_ab", "direction_ba", "symmetric"], &value_rows)?;
    let rows: Vec<Vec<String>> = ndcg_rows
        .iter()
        .map(|r| {
            vec![r.list_id.clone(), r.metric.to_string(), r.ndcg_ab.to_string(), r.ndcg_ba.to_string(), r.ndcg_symmetric.to_string()]
        })
        .collect();
    write_rows(&out.join("metric_ndcg.csv"), &["list_id", "metric", "direction_ab", "direction_ba", "symmetric"], &rows)?;
    let flat: Vec<(String, String, f64)> =
        ndcg_rows.iter().map(|r| (r.dtype.to_string(), r.metric.to_string(), r.ndcg_symmetric)).collect();
    write_summary(&out.join("metric_summary.csv"), &per_dtype_means(&flat))?;
    Ok(ndcg_rows)
}

fn list_ndcg_by(values: &[f64], orientation: crate::metrics::Orientation) -> Result<f64> {
    crate::eval::ndcg::<f64>(&rank_by_metric(values, orientation))
}

// ---------------------------------------------------------------- training

/// Which references a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    All,
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = GqaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Split::All),
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(GqaError::Config(format!("unknown split {s:?} (expected all, train or test)"))),
        }
    }
}

fn stage_seed(seed: Seed, stage: &str) -> u64 {
    seed.derive_str(stage, &[]).0
}

fn patch_seed(seed: Seed) -> Seed {
    seed.derive_str("patches", &[])
}

fn split_seed(seed: Seed) -> Seed {
    seed.derive_str("split", &[])
}

/// Training and test lists of a manifest, patched.
struct Prepared {
    train: Vec<PatchedList>,
    test: Vec<PatchedList>,
}

fn prepare(manifest_path: &Path, ck: &CheckpointConfig) -> Result<Prepared> {
    let m = Manifest::load(manifest_path)?;
    let (refs, lists) = load_lists(&m)?;
    let seed = Seed(ck.seed);
    let mode = crate::train::PatchMode { config: ck.patch, no_patching: ck.no_patching };
    let patched = patch_lists(&refs, &lists, mode, patch_seed(seed))?;
    let (_, test_refs) = split_references(&m.reference_ids(), ck.holdout_fraction, split_seed(seed));
    let (train, test) = partition_lists(&patched, |l| l.reference.as_str(), &test_refs);
    Ok(Prepared { train, test })
}

fn select(p: Prepared, split: Split) -> Vec<PatchedList> {
    match split {
        Split::All => p.train.into_iter().chain(p.test).collect(),
        Split::Train => p.train,
        Split::Test => p.test,
    }
}

fn checkpoint_config(cfg: &ExperimentConfig, seed: Seed) -> CheckpointConfig {
    CheckpointConfig {
        net: cfg.net,
        patch: cfg.patch,
        uniform_weights: cfg.uniform_weights,
        no_patching: cfg.no_patching,
        seed: seed.0,
        holdout_fraction: cfg.holdout_fraction,
    }
}

fn load_stage(path: &Path, min: Stage, wanted_by: &str) -> Result<Checkpoint<Real>> {
    if !path.is_file() {
        return Err(GqaError::Staging(format!(
            "{wanted_by} needs a {min:?} checkpoint; {} does not exist (run the previous stage first)",
            path.display()
        )));
    }
    let ck = Checkpoint::load(path)?;
    if ck.stage < min {
        return Err(GqaError::Staging(format!("{} is a {:?} checkpoint; {wanted_by} needs {min:?} or later", path.display(), ck.stage)));
    }
    Ok(ck)
}

fn stage_config(base: &TrainConfig, seed: Seed, stage: &str) -> TrainConfig {
    TrainConfig { seed: stage_seed(seed, stage), ..*base }
}

/// Summary of one training command.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub logs: Vec<EpochLog>,
}

/// Pre-trains the MPFE and classifier on the training references.
pub fn cmd_pretrain(manifest_path: &Path, cfg: &ExperimentConfig, seed: Seed, out: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ck_cfg = checkpoint_config(cfg, seed);
    let data = prepare(manifest_path, &ck_cfg)?;
    let mut net = GqaNet::<Real>::init(cfg.net, seed.derive_str("init", &[]));
    let logs = pretrain_mpfe(&mut net, &data.train, &data.test, &stage_config(&cfg.pretrain, seed, "pretrain"), cfg.pretrain_batching)?;
    mkdir(out)?;
    let path = out.join(PRETRAIN_CHECKPOINT);
    Checkpoint { stage: Stage::Pretrained, config: ck_cfg, net }.save(&path)?;
    write_log(&out.join("pretrain_log.csv"), &logs, ["acc_train", "acc_test"])?;
    Ok(TrainOutcome { checkpoint: path, logs })
}

/// listMLE training of the heads on top of a pre-trained MPFE.
pub fn cmd_train(
    manifest_path: &Path,
    cfg: &ExperimentConfig,
    seed: Seed,
    checkpoint: Option<&Path>,
    out: &Path,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let src = checkpoint.map_or_else(|| out.join(PRETRAIN_CHECKPOINT), Path::to_path_buf);
    let mut ck = load_stage(&src, Stage::Pretrained, "train")?;
    ck.config.uniform_weights = cfg.uniform_weights;
    let data = prepare(manifest_path, &ck.config)?;
    let logs = train_lrl(&mut ck.net, &data.train, &data.test, &stage_config(&cfg.train, seed, "train"), cfg.uniform_weights)?;
    ck.stage = Stage::Ranked;
    mkdir(out)?;
    let path = out.join(TRAIN_CHECKPOINT);
    ck.save(&path)?;
    write_log(&out.join("train_log.csv"), &logs, ["ndcg_train", "ndcg_val"])?;
    Ok(TrainOutcome { checkpoint: path, logs })
}

/// Fits the heads to pseudo-MOS labels; the MPFE stays frozen.
pub fn cmd_finetune(
    manifest_path: &Path,
    cfg: &ExperimentConfig,
    seed: Seed,
    checkpoint: Option<&Path>,
    out: &Path,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let src = checkpoint.map_or_else(|| out.join(TRAIN_CHECKPOINT), Path::to_path_buf);
    let mut ck = load_stage(&src, Stage::Pretrained, "finetune")?;
    let data = prepare(manifest_path, &ck.config)?;
    let uniform = ck.config.uniform_weights;
    let logs = finetune_scores(&mut ck.net, &data.train, &data.test, &stage_config(&cfg.finetune, seed, "finetune"), uniform)?;
    ck.stage = Stage::Finetuned;
    mkdir(out)?;
    let path = out.join(FINETUNE_CHECKPOINT);
    ck.save(&path)?;
    write_log(&out.join("finetune_log.csv"), &logs, ["plcc_train", "plcc_val"])?;
    Ok(TrainOutcome { checkpoint: path, logs })
}

// ---------------------------------------------------------------- rank / score / eval

/// One scored list item, as written to `predictions.csv` / `scores.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub list_id: String,
    pub dtype: String,
    pub level: usize,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_mos: Option<f64>,
}

fn predict(lists: &[PatchedList], ck: &Checkpoint<Real>) -> Vec<Prediction> {
    let scores = score_lists(&ck.net, lists, ck.config.uniform_weights);
    let mut out = Vec::new();
    for (l, s) in lists.iter().zip(scores) {
        for ((&level, v), p) in l.levels.iter().zip(s).zip(&l.pseudo_mos) {
            out.push(Prediction { list_id: l.id.clone(), dtype: l.dtype.to_string(), level, score: v as f64, pseudo_mos: *p });
        }
    }
    out
}

fn write_predictions(path: &Path, preds: &[Prediction], with_mos: bool) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["list_id", "dtype", "level", "score"];
    if with_mos {
        header.push("pseudo_mos");
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for p in preds {
        let mut r = vec![p.list_id.clone(), p.dtype.clone(), p.level.to_string(), p.score.to_string()];
        if with_mos {
            r.push(p.pseudo_mos.map_or_else(String::new, |v| v.to_string()));
        }
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| GqaError::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        out.push(rec.map_err(|e: csv::Error| GqaError::Parse { path: path.into(), line: i + 2, msg: e.to_string() })?);
    }
    if out.is_empty() {
        return Err(GqaError::Parse { path: path.into(), line: 1, msg: "no predictions".into() });
    }
    Ok(out)
}

/// Groups predictions by list, keeping file order and sorting items by level.
fn group_lists(preds: &[Prediction]) -> Vec<(String, String, Vec<&Prediction>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, (String, Vec<&Prediction>)> = BTreeMap::new();
    for p in preds {
        let g = groups.entry(p.list_id.clone()).or_insert_with(|| {
            order.push(p.list_id.clone());
            (p.dtype.clone(), Vec::new())
        });
        g.1.push(p);
    }
    order
        .into_iter()
        .map(|id| {
            let (dtype, mut items) = groups.remove(&id).expect("grouped");
            items.sort_by_key(|p| p.level);
            (id, dtype, items)
        })
        .collect()
}

/// NDCG of every list in a prediction table, `(list_id, dtype, ndcg)`.
pub fn prediction_ndcg(preds: &[Prediction]) -> Result<Vec<(String, String, f64)>> {
    group_lists(preds)
        .into_iter()
        .map(|(id, dtype, items)| {
            let scores: Vec<f64> = items.iter().map(|p| p.score).collect();
            Ok((id, dtype, list_ndcg(&scores)?))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RankReport {
    pub predictions: Vec<Prediction>,
    /// `ndcg` per dtype plus `MEAN`.
    pub summary: Vec<SummaryRow>,
}

impl RankReport {
    pub fn mean_ndcg(&self) -> f64 {
        self.summary.iter().find(|r| r.dtype == "MEAN").map_or(f64::NAN, |r| r.value)
    }
}

/// Scores every list of the chosen split and reports NDCG per dtype.
pub fn cmd_rank(manifest_path: &Path, checkpoint: &Path, split: Split, out: &Path) -> Result<RankReport> {
    let ck = load_stage(checkpoint, Stage::Init, "rank")?;
    let lists = select(prepare(manifest_path, &ck.config)?, split);
    if lists.is_empty() {
        return Err(GqaError::InvalidArgument(format!("split {split:?} selects no lists")));
    }
    let predictions = predict(&lists, &ck);
    let per_list = prediction_ndcg(&predictions)?;
    let flat: Vec<(String, String, f64)> = per_list.into_iter().map(|(_, d, v)| (d, "ndcg".into(), v)).collect();
    let summary = per_dtype_means(&flat);
    mkdir(out)?;
    write_predictions(&out.join("predictions.csv"), &predictions, false)?;
    write_summary(&out.join("rank_report.csv"), &summary)?;
    Ok(RankReport { predictions, summary })
}

fn stats_of(preds: &[Prediction]) -> Result<ScoreStats> {
    let labelled: Vec<&Prediction> = preds.iter().filter(|p| p.pseudo_mos.is_some()).collect();
    if labelled.len() != preds.len() {
        return Err(GqaError::Manifest("some items have no pseudo-MOS; run pmos first".into()));
    }
    let pred: Vec<f64> = labelled.iter().map(|p| p.score).collect();
    let truth: Vec<f64> = labelled.iter().map(|p| p.pseudo_mos.expect("filtered")).collect();
    ScoreStats::compute(&pred, &truth)
}

#[derive(Debug, Clone)]
pub struct ScoreReport {
    pub predictions: Vec<Prediction>,
    pub stats: ScoreStats,
}

/// Predicts absolute scores and compares them with the pseudo-MOS labels.
pub fn cmd_score(manifest_path: &Path, checkpoint: &Path, split: Split, out: &Path) -> Result<ScoreReport> {
    let ck = load_stage(checkpoint, Stage::Init, "score")?;
    let lists = select(prepare(manifest_path, &ck.config)?, split);
    if lists.is_empty() {
        return Err(GqaError::InvalidArgument(format!("split {split:?} selects no lists")));
    }
    let predictions = predict(&lists, &ck);
    let stats = stats_of(&predictions)?;
    mkdir(out)?;
    write_predictions(&out.join("scores.csv"), &predictions, true)?;
    let rows: Vec<Vec<String>> = [("RMSE", stats.rmse), ("PLCC", stats.plcc), ("KRCC", stats.krcc), ("SRCC", stats.srcc)]
        .iter()
        .map(|(k, v)| vec![k.to_string(), v.to_string()])
        .collect();
    write_rows(&out.join("score_report.csv"), &["metric", "value"], &rows)?;
    Ok(ScoreReport { predictions, stats })
}

/// Summarizes a prediction table: NDCG mean and standard deviation per dtype and
/// overall, plus score statistics when pseudo-MOS labels are present.
pub fn cmd_eval(predictions_path: &Path, out: &Path) -> Result<Vec<SummaryRow>> {
    let preds = read_predictions(predictions_path)?;
    let per_list = prediction_ndcg(&preds)?;
    let mut by_dtype: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (_, d, v) in &per_list {
        by_dtype.entry(d.clone()).or_default().push(*v);
    }
    let mut rows = Vec::new();
    let mut push = |dtype: &str, vals: &[f64]| {
        let (mean, std) = mean_std(vals);
        rows.push(SummaryRow { dtype: dtype.into(), metric: "ndcg_mean".into(), value: mean });
        rows.push(SummaryRow { dtype: dtype.into(), metric: "ndcg_std".into(), value: std });
    };
    for (d, vals) in &by_dtype {
        push(d, vals);
    }
    let all: Vec<f64> = per_list.iter().map(|x| x.2).collect();
    push("MEAN", &all);
    if preds.iter().all(|p| p.pseudo_mos.is_some()) {
        let s = stats_of(&preds)?;
        for (k, v) in [("rmse", s.rmse), ("plcc", s.plcc), ("krcc", s.krcc), ("srcc", s.srcc)] {
            rows.push(SummaryRow { dtype: "MEAN".into(), metric: k.into(), value: v });
        }
    }
    write_summary(&out.join("eval_summary.csv"), &rows)?;
    Ok(rows)
}
