//! GQANet: multi-scale EdgeConv patch features, index/weight heads and the
//! pre-training classifier.

use serde::{Deserialize, Serialize};

use super::layers::{knn_graph, sigmoid, softplus, EdgeConv, EdgeConvCache, Mlp, MlpCache};
use super::tensor::Tensor;
use crate::error::{GqaError, Result};
use crate::patch::{Patch, PatchSet};
use crate::rng::Seed;
use crate::scalar::{logsumexp, Scalar};

pub const FEATURE_DIM: usize = 64;
pub const NUM_CLASSES: usize = 11;
const EDGE_WIDTH: usize = 32;
const INDEX_WIDTHS: [usize; 4] = [FEATURE_DIM, 32, 16, 1];
const WEIGHT_WIDTHS: [usize; 3] = [FEATURE_DIM, 16, 1];
const CLASSIFIER_WIDTHS: [usize; 4] = [FEATURE_DIM, 64, 32, NUM_CLASSES];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// EdgeConv neighbors (self included), clamped to `n - 1`.
    pub k: usize,
    pub slope: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { k: 20, slope: 0.01 }
    }
}

impl NetConfig {
    pub fn effective_k(&self, n: usize) -> usize {
        self.k.min(n.saturating_sub(1)).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Mpfe,
    IndexHead,
    WeightHead,
    Classifier,
}

impl ParamGroup {
    pub const HEADS: [ParamGroup; 2] = [ParamGroup::IndexHead, ParamGroup::WeightHead];
    pub const PRETRAIN: [ParamGroup; 2] = [ParamGroup::Mpfe, ParamGroup::Classifier];
}

#[derive(Debug, Clone, PartialEq)]
pub struct GqaNet<T> {
    pub config: NetConfig,
    pub h1: EdgeConv<T>,
    pub h2: EdgeConv<T>,
    pub h3: EdgeConv<T>,
    pub h4: EdgeConv<T>,
    pub index_head: Mlp<T>,
    pub weight_head: Mlp<T>,
    pub classifier: Mlp<T>,
}

#[derive(Debug, Clone)]
pub struct MpfeCache<T> {
    n: usize,
    c1: EdgeConvCache<T>,
    c2: EdgeConvCache<T>,
    c3: EdgeConvCache<T>,
    c4: EdgeConvCache<T>,
}

#[derive(Debug, Clone)]
pub struct HeadsOutput<T> {
    pub indices: Vec<T>,
    pub weights: Vec<T>,
    pub score: T,
    weight_pre: Vec<T>,
    uniform: bool,
    index_cache: MlpCache<T>,
    weight_cache: Option<MlpCache<T>>,
}

/// `I = sum(W_i I_i) / sum(W_i)`.
pub fn model_index<T: Scalar>(indices: &[T], weights: &[T]) -> Result<T> {
    if indices.is_empty() || indices.len() != weights.len() {
        return Err(GqaError::InvalidArgument("indices and weights must be non-empty and aligned".into()));
    }
    if weights.iter().any(|w| !(*w > T::zero())) {
        return Err(GqaError::InvalidArgument("patch weights must be positive".into()));
    }
    let total: T = weights.iter().copied().sum();
    Ok(indices.iter().zip(weights).map(|(i, w)| *i * *w).sum::<T>() / total)
}

/// Patch coordinates as a flat `n x 3` array.
pub fn patch_coords<T: Scalar>(patch: &Patch) -> Vec<T> {
    patch.coords.iter().flat_map(|p| p.to_array()).map(T::lit).collect()
}

/// Mean cross-entropy of `logits` (`m x classes`) against `labels`, with its gradient.
pub fn cross_entropy<T: Scalar>(logits: &[T], labels: &[usize], classes: usize) -> (T, Vec<T>) {
    let m = labels.len();
    let inv = T::one() / T::lit(m as f64);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); logits.len()];
    for (i, (row, &y)) in logits.chunks_exact(classes).zip(labels).enumerate() {
        let lse = logsumexp(row);
        loss += lse - row[y];
        for (c, &z) in row.iter().enumerate() {
            let p = (z - lse).exp();
            grad[i * classes + c] = (p - if c == y { T::one() } else { T::zero() }) * inv;
        }
    }
    (loss * inv, grad)
}

fn concat_rows<T: Scalar>(a: &[T], b: &[T], n: usize) -> Vec<T> {
    let (da, db) = (a.len() / n, b.len() / n);
    let mut out = Vec::with_capacity(a.len() + b.len());
    for i in 0..n {
        out.extend_from_slice(&a[i * da..(i + 1) * da]);
        out.extend_from_slice(&b[i * db..(i + 1) * db]);
    }
    out
}

fn split_rows<T: Scalar>(x: &[T], n: usize, da: usize) -> (Vec<T>, Vec<T>) {
    let d = x.len() / n;
    let mut a = Vec::with_capacity(n * da);
    let mut b = Vec::with_capacity(n * (d - da));
    for row in x.chunks_exact(d) {
        a.extend_from_slice(&row[..da]);
        b.extend_from_slice(&row[da..]);
    }
    (a, b)
}

fn add_into<T: Scalar>(acc: &mut [T], x: &[T]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += *b;
    }
}

/// Zeroes the last layer so the classifier starts at exactly uniform logits. With
/// random logits the first Adam steps shrink them hard, and the shock kills most
/// hidden units before the features carry any level information.
fn zero_output<T: Scalar>(mut mlp: Mlp<T>) -> Mlp<T> {
    let last = mlp.layers.last_mut().expect("non-empty stack");
    last.weight.data_mut().iter_mut().for_each(|w| *w = T::zero());
    mlp
}

impl<T: Scalar> GqaNet<T> {
    pub fn init(config: NetConfig, seed: Seed) -> Self {
        let s = |i: u64| seed.derive(&[i]);
        GqaNet {
            config,
            h1: EdgeConv::init(3, EDGE_WIDTH, s(1)),
            h2: EdgeConv::init(EDGE_WIDTH, EDGE_WIDTH, s(2)),
            h3: EdgeConv::init(EDGE_WIDTH, EDGE_WIDTH, s(3)),
            h4: EdgeConv::init(2 * EDGE_WIDTH, EDGE_WIDTH, s(4)),
            index_head: Mlp::init(&INDEX_WIDTHS, s(5)),
            weight_head: Mlp::init(&WEIGHT_WIDTHS, s(6)),
            classifier: zero_output(Mlp::init(&CLASSIFIER_WIDTHS, s(7))),
        }
    }

    fn slope(&self) -> T {
        T::lit(self.config.slope)
    }

    /// Every parameter tensor with its canonical name, in a fixed order.
    pub fn params(&self) -> Vec<(String, ParamGroup, &Tensor<T>)> {
        let mut out = Vec::new();
        for (name, l) in [("h1", &self.h1), ("h2", &self.h2), ("h3", &self.h3), ("h4", &self.h4)] {
            out.push((format!("{name}.weight"), ParamGroup::Mpfe, &l.weight));
            out.push((format!("{name}.bias"), ParamGroup::Mpfe, &l.bias));
        }
        for (name, group, mlp) in [
            ("index_head", ParamGroup::IndexHead, &self.index_head),
            ("weight_head", ParamGroup::WeightHead, &self.weight_head),
            ("classifier", ParamGroup::Classifier, &self.classifier),
        ] {
            for (i, l) in mlp.layers.iter().enumerate() {
                out.push((format!("{name}.{i}.weight"), group, &l.weight));
                out.push((format!("{name}.{i}.bias"), group, &l.bias));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, ParamGroup, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (name, l) in [("h1", &mut self.h1), ("h2", &mut self.h2), ("h3", &mut self.h3), ("h4", &mut self.h4)] {
            out.push((format!("{name}.weight"), ParamGroup::Mpfe, &mut l.weight));
            out.push((format!("{name}.bias"), ParamGroup::Mpfe, &mut l.bias));
        }
        for (name, group, mlp) in [
            ("index_head", ParamGroup::IndexHead, &mut self.index_head),
            ("weight_head", ParamGroup::WeightHead, &mut self.weight_head),
            ("classifier", ParamGroup::Classifier, &mut self.classifier),
        ] {
            for (i, l) in mlp.layers.iter_mut().enumerate() {
                out.push((format!("{name}.{i}.weight"), group, &mut l.weight));
                out.push((format!("{name}.{i}.bias"), group, &mut l.bias));
            }
        }
        out
    }

    /// Same architecture with every parameter zero; used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.params_mut().into_iter().for_each(|(_, _, t)| t.fill(T::zero()));
        z
    }

    pub fn cast<U: Scalar>(&self) -> GqaNet<U> {
        let mut out = GqaNet::<U>::init(self.config, Seed(0));
        for ((_, _, dst), (_, _, src)) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.cast();
        }
        out
    }

    /// 64-d feature of one `n x 3` patch.
    pub fn mpfe_forward(&self, coords: &[T]) -> (Vec<T>, MpfeCache<T>) {
        let n = coords.len() / 3;
        let k = self.config.effective_k(n);
        let slope = self.slope();
        let (g1, c1) = self.h1.forward(coords, n, &knn_graph(coords, n, 3, k), k, slope);
        let graph = knn_graph(&g1, n, EDGE_WIDTH, k);
        let (a, c2) = self.h2.forward(&g1, n, &graph, k, slope);
        let (f1, c3) = self.h3.forward(&g1, n, &graph, k, slope);
        let cat = concat_rows(&g1, &a, n);
        let (f2, c4) = self.h4.forward(&cat, n, &knn_graph(&cat, n, 2 * EDGE_WIDTH, k), k, slope);
        let inv = T::one() / T::lit(n as f64);
        let mut feat = vec![T::zero(); FEATURE_DIM];
        for i in 0..n {
            add_into(&mut feat[..EDGE_WIDTH], &f1[i * EDGE_WIDTH..(i + 1) * EDGE_WIDTH]);
            add_into(&mut feat[EDGE_WIDTH..], &f2[i * EDGE_WIDTH..(i + 1) * EDGE_WIDTH]);
        }
        feat.iter_mut().for_each(|v| *v *= inv);
        (feat, MpfeCache { n, c1, c2, c3, c4 })
    }

    pub fn mpfe_backward(&self, cache: &MpfeCache<T>, dfeat: &[T], grad: &mut GqaNet<T>) {
        let n = cache.n;
        let slope = self.slope();
        let inv = T::one() / T::lit(n as f64);
        let df1: Vec<T> = (0..n).flat_map(|_| dfeat[..EDGE_WIDTH].iter().map(move |&g| g * inv)).collect();
        let df2: Vec<T> = (0..n).flat_map(|_| dfeat[EDGE_WIDTH..].iter().map(move |&g| g * inv)).collect();
        let dcat = self.h4.backward(&cache.c4, &df2, slope, &mut grad.h4, true).expect("dx requested");
        let (mut dg1, da) = split_rows(&dcat, n, EDGE_WIDTH);
        add_into(&mut dg1, &self.h2.backward(&cache.c2, &da, slope, &mut grad.h2, true).expect("dx requested"));
        add_into(&mut dg1, &self.h3.backward(&cache.c3, &df1, slope, &mut grad.h3, true).expect("dx requested"));
        self.h1.backward(&cache.c1, &dg1, slope, &mut grad.h1, false);
    }

    /// Features of every patch, `N x 64`.
    pub fn patch_features(&self, patches: &PatchSet) -> Vec<T> {
        patches.patches.iter().flat_map(|p| self.mpfe_forward(&patch_coords(p)).0).collect()
    }

    /// Patch indices, weights and the aggregated model index from `N x 64` features.
    /// With `uniform` every weight is 1 and the weight head is bypassed.
    pub fn heads_forward(&self, feats: &[T], uniform: bool) -> HeadsOutput<T> {
        let m = feats.len() / FEATURE_DIM;
        let slope = self.slope();
        let (indices, index_cache) = self.index_head.forward(feats, m, slope);
        let (weight_pre, weight_cache, weights) = if uniform {
            (vec![T::zero(); m], None, vec![T::one(); m])
        } else {
            let (z, c) = self.weight_head.forward(feats, m, slope);
            let w = z.iter().map(|&v| softplus(v)).collect();
            (z, Some(c), w)
        };
        let score = model_index(&indices, &weights).expect("softplus weights are positive");
        HeadsOutput { indices, weights, score, weight_pre, uniform, index_cache, weight_cache }
    }

    /// Backpropagates `d loss / d score`; returns `d loss / d feats` when asked.
    pub fn heads_backward(&self, out: &HeadsOutput<T>, dscore: T, grad: &mut GqaNet<T>, want_dfeat: bool) -> Option<Vec<T>> {
        let slope = self.slope();
        let total: T = out.weights.iter().copied().sum();
        let dind: Vec<T> = out.weights.iter().map(|&w| dscore * w / total).collect();
        let mut dfeat = self.index_head.backward(&out.index_cache, &dind, slope, &mut grad.index_head, want_dfeat);
        if !out.uniform {
            let dz: Vec<T> = out
                .indices
                .iter()
                .zip(&out.weight_pre)
                .map(|(&i, &z)| dscore * (i - out.score) / total * sigmoid(z))
                .collect();
            let cache = out.weight_cache.as_ref().expect("weight head ran");
            let dw = self.weight_head.backward(cache, &dz, slope, &mut grad.weight_head, want_dfeat);
            if let (Some(a), Some(b)) = (dfeat.as_mut(), dw) {
                add_into(a, &b);
            }
        }
        dfeat
    }

    pub fn patch_index(&self, feat: &[T]) -> T {
        self.index_head.forward(feat, 1, self.slope()).0[0]
    }

    pub fn patch_weight(&self, feat: &[T]) -> T {
        softplus(self.weight_head.forward(feat, 1, self.slope()).0[0])
    }

    /// Model quality index of one cloud.
    pub fn forward(&self, patches: &PatchSet, uniform: bool) -> T {
        self.heads_forward(&self.patch_features(patches), uniform).score
    }

    pub fn classifier_forward(&self, feats: &[T]) -> (Vec<T>, MlpCache<T>) {
        self.classifier.forward(feats, feats.len() / FEATURE_DIM, self.slope())
    }

    pub fn classifier_backward(&self, cache: &MlpCache<T>, dlogits: &[T], grad: &mut GqaNet<T>) -> Vec<T> {
        self.classifier.backward(cache, dlogits, self.slope(), &mut grad.classifier, true).expect("dx requested")
    }
}

/// Forward state of one cloud kept for a full backward pass.
#[derive(Debug, Clone)]
pub struct CloudForward<T> {
    pub mpfe: Vec<MpfeCache<T>>,
    pub heads: HeadsOutput<T>,
}

impl<T: Scalar> GqaNet<T> {
    pub fn forward_full(&self, patches: &PatchSet, uniform: bool) -> CloudForward<T> {
        let (feats, mpfe): (Vec<Vec<T>>, Vec<MpfeCache<T>>) =
            patches.patches.iter().map(|p| self.mpfe_forward(&patch_coords(p))).unzip();
        let heads = self.heads_forward(&feats.concat(), uniform);
        CloudForward { mpfe, heads }
    }

    /// Gradients of every parameter reached from the model index, MPFE included.
    pub fn backward_full(&self, fw: &CloudForward<T>, dscore: T, grad: &mut GqaNet<T>) {
        let dfeat = self.heads_backward(&fw.heads, dscore, grad, true).expect("dfeat requested");
        for (cache, d) in fw.mpfe.iter().zip(dfeat.chunks_exact(FEATURE_DIM)) {
            self.mpfe_backward(cache, d, grad);
        }
    }
}
