//! Training loops: MPFE pre-training by distortion-level classification,
//! list-wise rank training of the heads, and score fine-tuning.
//!
//! Rank training and fine-tuning keep the MPFE frozen, so patch features are
//! computed once per run and only the heads are evaluated per step.

mod adam;
mod listmle;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use listmle::{listmle_grad, listmle_loss};

use crate::cloud::PointCloud;
use crate::distort::{DistortionType, RankedList};
use crate::error::{GqaError, Result};
use crate::eval::{ndcg, plcc, Ranking};
use crate::manifest::Manifest;
use crate::nn::{cross_entropy, patch_coords, GqaNet, ParamGroup, FEATURE_DIM, NUM_CLASSES};
use crate::patch::{extract_patches_with, generate_anchors, whole_cloud_patch, AnchorSet, PatchConfig, PatchSet};
use crate::rng::Seed;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Clouds (or patches, see [`Batching`]) per pre-training step and clouds per
    /// fine-tuning step; rank training always steps once per list.
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub schedule: LrSchedule,
}

/// Learning rate over the epochs of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `adam.lr` at the first epoch towards zero after the last.
    Cosine,
}

impl TrainConfig {
    /// Learning rate of epoch `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.adam.lr,
            LrSchedule::Cosine => {
                let t = (epoch - 1) as f64 / self.epochs as f64;
                0.5 * self.adam.lr * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || !(self.adam.lr > 0.0) || self.batch_size == 0 {
            return Err(GqaError::Config(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

/// One degraded list held in memory, best quality first.
#[derive(Debug, Clone)]
pub struct CloudList {
    pub id: String,
    pub reference: String,
    pub dtype: DistortionType,
    pub levels: Vec<usize>,
    pub clouds: Vec<PointCloud>,
    pub pseudo_mos: Vec<Option<f64>>,
}

impl CloudList {
    pub fn from_ranked(id: impl Into<String>, reference: impl Into<String>, list: &RankedList) -> Self {
        CloudList {
            id: id.into(),
            reference: reference.into(),
            dtype: list.dtype,
            levels: list.ranks(),
            clouds: list.items.iter().map(|i| i.cloud.clone()).collect(),
            pseudo_mos: vec![None; list.len()],
        }
    }
}

/// Loads every reference and list of a manifest.
pub fn load_lists(manifest: &Manifest) -> Result<(BTreeMap<String, PointCloud>, Vec<CloudList>)> {
    let mut refs = BTreeMap::new();
    for r in &manifest.references {
        refs.insert(r.id.clone(), manifest.load_reference(&r.id)?);
    }
    let mut lists = Vec::with_capacity(manifest.lists.len());
    for l in &manifest.lists {
        let clouds = l.items.iter().map(|i| manifest.load_item(i)).collect::<Result<Vec<_>>>()?;
        lists.push(CloudList {
            id: l.id.clone(),
            reference: l.reference.clone(),
            dtype: l.dtype,
            levels: l.items.iter().map(|i| i.level).collect(),
            clouds,
            pseudo_mos: l.items.iter().map(|i| i.pseudo_mos).collect(),
        });
    }
    Ok((refs, lists))
}

/// Patch sets of every item of one list.
#[derive(Debug, Clone)]
pub struct PatchedList {
    pub id: String,
    pub reference: String,
    pub dtype: DistortionType,
    pub levels: Vec<usize>,
    pub patches: Vec<PatchSet>,
    pub pseudo_mos: Vec<Option<f64>>,
}

impl PatchedList {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchMode {
    pub config: PatchConfig,
    /// Replace the N anchored patches by one whole-cloud patch.
    pub no_patching: bool,
}

pub fn anchor_seed(seed: Seed, reference: &str) -> Seed {
    seed.derive_str(reference, &[0x414e_4348])
}

fn patch_seed(seed: Seed, list: &str, level: usize) -> Seed {
    seed.derive_str(list, &[0x5041_5443, level as u64])
}

/// Patches one cloud against precomputed anchors.
pub fn patch_cloud(cloud: &PointCloud, anchors: &AnchorSet, mode: PatchMode, seed: Seed) -> Result<PatchSet> {
    if mode.no_patching {
        whole_cloud_patch(cloud, mode.config.points, seed)
    } else {
        extract_patches_with(&cloud.index(), anchors, mode.config.radius, mode.config.points, seed)
    }
}

/// Patches a cloud with no known reference, sampling anchors on the cloud itself.
pub fn patch_standalone(cloud: &PointCloud, mode: PatchMode, seed: Seed) -> Result<PatchSet> {
    let anchors = if mode.no_patching {
        AnchorSet { anchors: Vec::new(), seed }
    } else {
        generate_anchors(cloud, mode.config.count.min(cloud.len()), anchor_seed(seed, ""))?
    };
    patch_cloud(cloud, &anchors, mode, seed)
}

/// Patches every list; anchors come from each list's reference and are shared by its items.
pub fn patch_lists(
    references: &BTreeMap<String, PointCloud>,
    lists: &[CloudList],
    mode: PatchMode,
    seed: Seed,
) -> Result<Vec<PatchedList>> {
    mode.config.validate()?;
    let mut anchors: BTreeMap<&str, AnchorSet> = BTreeMap::new();
    let mut out = Vec::with_capacity(lists.len());
    for list in lists {
        let reference = references
            .get(&list.reference)
            .ok_or_else(|| GqaError::Manifest(format!("list {} names unknown reference {}", list.id, list.reference)))?;
        if !anchors.contains_key(list.reference.as_str()) {
            let a = if mode.no_patching {
                AnchorSet { anchors: Vec::new(), seed }
            } else {
                generate_anchors(reference, mode.config.count, anchor_seed(seed, &list.reference))?
            };
            anchors.insert(&list.reference, a);
        }
        let a = &anchors[list.reference.as_str()];
        let patches = list
            .clouds
            .iter()
            .zip(&list.levels)
            .map(|(c, &level)| patch_cloud(c, a, mode, patch_seed(seed, &list.id, level)))
            .collect::<Result<Vec<_>>>()?;
        out.push(PatchedList {
            id: list.id.clone(),
            reference: list.reference.clone(),
            dtype: list.dtype,
            levels: list.levels.clone(),
            patches,
            pseudo_mos: list.pseudo_mos.clone(),
        });
    }
    Ok(out)
}

/// Splits reference ids into `(train, test)` by seeded shuffle. At least one id is
/// held out whenever there are two or more.
pub fn split_references(ids: &[String], holdout_fraction: f64, seed: Seed) -> (Vec<String>, Vec<String>) {
    let mut ids = ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() < 2 || holdout_fraction <= 0.0 {
        return (ids, Vec::new());
    }
    ids.shuffle(&mut seed.rng(0x5350_4c54));
    let n_test = ((ids.len() as f64 * holdout_fraction).round() as usize).clamp(1, ids.len() - 1);
    let test = ids.split_off(ids.len() - n_test);
    let mut train = ids;
    train.sort();
    let mut test = test;
    test.sort();
    (train, test)
}

/// Splits lists by reference membership.
pub fn partition_lists<L: Clone>(lists: &[L], reference: impl Fn(&L) -> &str, test_refs: &[String]) -> (Vec<L>, Vec<L>) {
    lists.iter().cloned().partition(|l| !test_refs.iter().any(|t| t == reference(l)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train: f64,
    pub val: Option<f64>,
}

fn shuffled(len: usize, seed: Seed, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut seed.derive(&[epoch as u64]).rng(0x4550_4f43));
    order
}

fn class_of(list: &PatchedList, item: usize) -> Result<usize> {
    let level = list.levels[item];
    if !list.dtype.is_generatable() {
        return Err(GqaError::InvalidArgument(format!("list {} has no generatable level labels", list.id)));
    }
    if level >= NUM_CLASSES {
        return Err(GqaError::InvalidArgument(format!("level {level} exceeds the {NUM_CLASSES}-class head")));
    }
    Ok(level)
}

/// Fraction of patches whose predicted level matches the true one.
pub fn patch_accuracy<T: Scalar>(net: &GqaNet<T>, lists: &[PatchedList]) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for list in lists {
        for (item, ps) in list.patches.iter().enumerate() {
            let label = class_of(list, item)?;
            let (logits, _) = net.classifier_forward(&net.patch_features(ps));
            for row in logits.chunks_exact(NUM_CLASSES) {
                hit += usize::from(argmax(row) == label);
                total += 1;
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}

/// How pre-training groups patches into optimizer steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batching {
    /// `batch_size` whole clouds per step, each contributing its N patches
    /// under one shared label.
    Cloud,
    /// `batch_size` patches per step, shuffled across all training clouds.
    Patches,
}

/// Trains h1-h4 and the classifier to predict each patch's distortion level.
/// The loss is the mean cross-entropy over the patches of a step.
pub fn pretrain_mpfe<T: Scalar>(
    net: &mut GqaNet<T>,
    train: &[PatchedList],
    test: &[PatchedList],
    cfg: &TrainConfig,
    batching: Batching,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    let clouds: Vec<(usize, usize)> = train
        .iter()
        .enumerate()
        .filter(|(_, l)| l.dtype.is_generatable())
        .flat_map(|(li, l)| (0..l.len()).map(move |i| (li, i)))
        .collect();
    if clouds.is_empty() {
        return Err(GqaError::InvalidArgument("no lists with generatable distortion labels".into()));
    }
    for &(li, i) in &clouds {
        class_of(&train[li], i)?;
    }
    let patches: Vec<(usize, usize, usize)> =
        clouds.iter().flat_map(|&(li, i)| (0..train[li].patches[i].len()).map(move |j| (li, i, j))).collect();
    let mut opt = Adam::new(net, cfg.adam, &ParamGroup::PRETRAIN);
    let seed = Seed(cfg.seed);
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        opt.config.lr = cfg.lr_at(epoch);
        let steps: Vec<Vec<(usize, usize, usize)>> = match batching {
            Batching::Cloud => shuffled(clouds.len(), seed, epoch)
                .chunks(cfg.batch_size)
                .map(|c| {
                    c.iter()
                        .flat_map(|&s| {
                            let (li, i) = clouds[s];
                            (0..train[li].patches[i].len()).map(move |j| (li, i, j))
                        })
                        .collect()
                })
                .collect(),
            Batching::Patches => shuffled(patches.len(), seed, epoch)
                .chunks(cfg.batch_size)
                .map(|c| c.iter().map(|&s| patches[s]).collect())
                .collect(),
        };
        let (mut loss_sum, mut hit) = (0.0, 0usize);
        for step in &steps {
            let labels: Vec<usize> = step.iter().map(|&(li, i, _)| train[li].levels[i]).collect();
            let (feats, caches): (Vec<Vec<T>>, Vec<_>) = step
                .iter()
                .map(|&(li, i, j)| net.mpfe_forward(&patch_coords(&train[li].patches[i].patches[j])))
                .unzip();
            let (logits, cache) = net.classifier_forward(&feats.concat());
            let (loss, dlogits) = cross_entropy(&logits, &labels, NUM_CLASSES);
            loss_sum += loss.as_f64() * step.len() as f64;
            hit += logits.chunks_exact(NUM_CLASSES).zip(&labels).filter(|(row, &y)| argmax(row) == y).count();
            let mut grad = net.zeros_like();
            let dfeat = net.classifier_backward(&cache, &dlogits, &mut grad);
            for (c, d) in caches.iter().zip(dfeat.chunks_exact(FEATURE_DIM)) {
                net.mpfe_backward(c, d, &mut grad);
            }
            opt.update(net, &grad);
        }
        let val = if test.is_empty() { None } else { Some(patch_accuracy(net, test)?) };
        let n = patches.len() as f64;
        let log = EpochLog { epoch, loss: loss_sum / n, train: hit as f64 / n, val };
        log::info!("pretrain epoch {epoch}: loss {:.4} acc {:.3} test {:?}", log.loss, log.train, log.val);
        logs.push(log);
    }
    Ok(logs)
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    (0..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b })
}

/// Frozen-MPFE features, `[list][item] -> N x 64`.
pub fn list_features<T: Scalar>(net: &GqaNet<T>, lists: &[PatchedList]) -> Vec<Vec<Vec<T>>> {
    lists.iter().map(|l| l.patches.iter().map(|ps| net.patch_features(ps)).collect()).collect()
}

pub fn scores_from_features<T: Scalar>(net: &GqaNet<T>, feats: &[Vec<Vec<T>>], uniform: bool) -> Vec<Vec<T>> {
    feats.iter().map(|l| l.iter().map(|f| net.heads_forward(f, uniform).score).collect()).collect()
}

/// Model index of every item of every list.
pub fn score_lists<T: Scalar>(net: &GqaNet<T>, lists: &[PatchedList], uniform: bool) -> Vec<Vec<T>> {
    scores_from_features(net, &list_features(net, lists), uniform)
}

/// NDCG of one list's scores against its best-first item order.
pub fn list_ndcg<T: Scalar>(scores: &[T]) -> Result<f64> {
    ndcg::<f64>(&Ranking::from_scores(scores, true))
}

pub fn mean_ndcg<T: Scalar>(scores: &[Vec<T>]) -> Result<f64> {
    if scores.is_empty() {
        return Err(GqaError::InvalidArgument("no lists to evaluate".into()));
    }
    let total = scores.iter().map(|s| list_ndcg(s)).sum::<Result<f64>>()?;
    Ok(total / scores.len() as f64)
}

fn heads_groups(uniform: bool) -> Vec<ParamGroup> {
    if uniform {
        vec![ParamGroup::IndexHead]
    } else {
        ParamGroup::HEADS.to_vec()
    }
}

/// listMLE training of the index and weight heads; one step per list.
pub fn train_lrl<T: Scalar>(
    net: &mut GqaNet<T>,
    train: &[PatchedList],
    val: &[PatchedList],
    cfg: &TrainConfig,
    uniform: bool,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(GqaError::InvalidArgument("no training lists".into()));
    }
    let feats = list_features(net, train);
    let val_feats = list_features(net, val);
    let mut opt = Adam::new(net, cfg.adam, &heads_groups(uniform));
    let seed = Seed(cfg.seed);
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        opt.config.lr = cfg.lr_at(epoch);
        let mut loss_sum = 0.0;
        for li in shuffled(train.len(), seed, epoch) {
            let outs: Vec<_> = feats[li].iter().map(|f| net.heads_forward(f, uniform)).collect();
            let scores: Vec<T> = outs.iter().map(|o| o.score).collect();
            let order: Vec<usize> = (0..scores.len()).collect();
            loss_sum += listmle_loss(&scores, &order).as_f64();
            let ds = listmle_grad(&scores, &order);
            let mut grad = net.zeros_like();
            for (o, d) in outs.iter().zip(ds) {
                net.heads_backward(o, d, &mut grad, false);
            }
            opt.update(net, &grad);
        }
        let train_ndcg = mean_ndcg(&scores_from_features(net, &feats, uniform))?;
        let val_ndcg = if val.is_empty() { None } else { Some(mean_ndcg(&scores_from_features(net, &val_feats, uniform))?) };
        let log = EpochLog { epoch, loss: loss_sum / train.len() as f64, train: train_ndcg, val: val_ndcg };
        log::info!("rank epoch {epoch}: loss {:.4} ndcg {:.4} val {:?}", log.loss, log.train, log.val);
        logs.push(log);
    }
    Ok(logs)
}

fn labelled<T: Scalar>(lists: &[PatchedList]) -> Result<Vec<(usize, usize, T)>> {
    let mut out = Vec::new();
    for (li, l) in lists.iter().enumerate() {
        for (i, p) in l.pseudo_mos.iter().enumerate() {
            let p = p.ok_or_else(|| GqaError::Manifest(format!("list {} level {} has no pseudo-MOS", l.id, l.levels[i])))?;
            out.push((li, i, T::lit(p)));
        }
    }
    Ok(out)
}

/// Pearson correlation of predicted scores with pseudo-MOS over every labelled item.
pub fn score_plcc<T: Scalar>(scores: &[Vec<T>], lists: &[PatchedList]) -> Result<f64> {
    let items = labelled::<T>(lists)?;
    let pred: Vec<T> = items.iter().map(|&(l, i, _)| scores[l][i]).collect();
    let truth: Vec<T> = items.iter().map(|x| x.2).collect();
    Ok(plcc(&pred, &truth)?.as_f64())
}

/// Fine-tunes the heads to regress pseudo-MOS with the mean squared error over batches of K clouds.
pub fn finetune_scores<T: Scalar>(
    net: &mut GqaNet<T>,
    train: &[PatchedList],
    val: &[PatchedList],
    cfg: &TrainConfig,
    uniform: bool,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    let items = labelled::<T>(train)?;
    labelled::<T>(val)?;
    if items.is_empty() {
        return Err(GqaError::InvalidArgument("no labelled training items".into()));
    }
    let feats = list_features(net, train);
    let val_feats = list_features(net, val);
    let mut opt = Adam::new(net, cfg.adam, &heads_groups(uniform));
    let seed = Seed(cfg.seed);
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        opt.config.lr = cfg.lr_at(epoch);
        let order = shuffled(items.len(), seed, epoch);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let k = T::lit(batch.len() as f64);
            let mut grad = net.zeros_like();
            for &s in batch {
                let (li, i, target) = items[s];
                let out = net.heads_forward(&feats[li][i], uniform);
                let err = out.score - target;
                loss_sum += (err * err).as_f64();
                net.heads_backward(&out, T::lit(2.0) * err / k, &mut grad, false);
            }
            opt.update(net, &grad);
        }
        let train_plcc = score_plcc(&scores_from_features(net, &feats, uniform), train).unwrap_or(f64::NAN);
        let val_plcc = if val.is_empty() { None } else { Some(score_plcc(&scores_from_features(net, &val_feats, uniform), val).unwrap_or(f64::NAN)) };
        let log = EpochLog { epoch, loss: loss_sum / items.len() as f64, train: train_plcc, val: val_plcc };
        log::info!("finetune epoch {epoch}: loss {:.5} plcc {:.4} val {:?}", log.loss, log.train, log.val);
        logs.push(log);
    }
    Ok(logs)
}
