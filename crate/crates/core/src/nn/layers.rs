//! Affine layers, EdgeConv and their hand-written backward passes.
//!
//! Matrices are row-major slices; `x` is `m x d_in`, weights are `d_out x d_in`.

use rand::Rng;

use super::tensor::Tensor;
use crate::rng::Seed;
use crate::scalar::Scalar;

#[inline]
pub fn leaky_relu<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        slope * x
    }
}

#[inline]
pub fn leaky_relu_grad<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        slope
    }
}

/// `ln(1 + e^x)` without overflow, floored at the smallest positive normal so
/// it stays strictly positive where `e^x` underflows.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    (x.max(T::zero()) + (-x.abs()).exp().ln_1p()).max(T::min_positive_value())
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `y = x w^T` for `x: m x k`, `w: o x k`.
pub fn matmul_nt<T: Scalar>(x: &[T], m: usize, k: usize, w: &[T], o: usize) -> Vec<T> {
    debug_assert_eq!(x.len(), m * k);
    debug_assert_eq!(w.len(), o * k);
    let mut wt = vec![T::zero(); k * o];
    for c in 0..o {
        for t in 0..k {
            wt[t * o + c] = w[c * k + t];
        }
    }
    let mut y = vec![T::zero(); m * o];
    for i in 0..m {
        let yi = &mut y[i * o..(i + 1) * o];
        for (t, &a) in x[i * k..(i + 1) * k].iter().enumerate() {
            for (v, &b) in yi.iter_mut().zip(&wt[t * o..(t + 1) * o]) {
                *v += a * b;
            }
        }
    }
    y
}

/// `dw += dy^T x` for `dy: m x o`, `x: m x k`.
pub fn accumulate_tn<T: Scalar>(dy: &[T], x: &[T], m: usize, o: usize, k: usize, dw: &mut [T]) {
    for i in 0..m {
        let xi = &x[i * k..(i + 1) * k];
        for c in 0..o {
            let g = dy[i * o + c];
            if g == T::zero() {
                continue;
            }
            for (d, a) in dw[c * k..(c + 1) * k].iter_mut().zip(xi) {
                *d += g * *a;
            }
        }
    }
}

/// `dx += dy w` for `dy: m x o`, `w: o x k`.
pub fn accumulate_nn<T: Scalar>(dy: &[T], w: &[T], m: usize, o: usize, k: usize, dx: &mut [T]) {
    for i in 0..m {
        let dxi = &mut dx[i * k..(i + 1) * k];
        for c in 0..o {
            let g = dy[i * o + c];
            if g == T::zero() {
                continue;
            }
            for (d, a) in dxi.iter_mut().zip(&w[c * k..(c + 1) * k]) {
                *d += g * *a;
            }
        }
    }
}

fn uniform_init<T: Scalar>(out: usize, fan_in: usize, seed: Seed) -> Tensor<T> {
    // He-uniform: keeps activation scale roughly constant through leaky-ReLU layers
    let bound = (6.0 / fan_in as f64).sqrt();
    let mut rng = seed.rng(0);
    let data = (0..out * fan_in).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
    Tensor::new(vec![out, fan_in], data).expect("shape matches")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn init(d_in: usize, d_out: usize, seed: Seed) -> Self {
        Linear { weight: uniform_init(d_out, d_in, seed), bias: Tensor::zeros(&[d_out]) }
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &[T], m: usize) -> Vec<T> {
        let o = self.d_out();
        let mut y = matmul_nt(x, m, self.d_in(), self.weight.data(), o);
        for row in y.chunks_exact_mut(o) {
            for (v, b) in row.iter_mut().zip(self.bias.data()) {
                *v += *b;
            }
        }
        y
    }

    /// Accumulates parameter gradients into `grad`; returns `dx` when asked.
    pub fn backward(&self, x: &[T], dy: &[T], m: usize, grad: &mut Linear<T>, want_dx: bool) -> Option<Vec<T>> {
        let (k, o) = (self.d_in(), self.d_out());
        accumulate_tn(dy, x, m, o, k, grad.weight.data_mut());
        let db = grad.bias.data_mut();
        for row in dy.chunks_exact(o) {
            for (d, g) in db.iter_mut().zip(row) {
                *d += *g;
            }
        }
        want_dx.then(|| {
            let mut dx = vec![T::zero(); m * k];
            accumulate_nn(dy, self.weight.data(), m, o, k, &mut dx);
            dx
        })
    }
}

/// Affine stack with leaky-ReLU between layers and a linear last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
}

/// Inputs of every layer plus the final output.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    inputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    m: usize,
}

impl<T: Scalar> Mlp<T> {
    pub fn init(widths: &[usize], seed: Seed) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::init(w[0], w[1], seed.derive(&[i as u64])))
            .collect();
        Mlp { layers }
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().map_or(0, Linear::d_out)
    }

    pub fn forward(&self, x: &[T], m: usize, slope: T) -> (Vec<T>, MlpCache<T>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h, m);
            inputs.push(std::mem::replace(&mut h, Vec::new()));
            h = if i + 1 < self.layers.len() { z.iter().map(|&v| leaky_relu(v, slope)).collect() } else { z.clone() };
            pre.push(z);
        }
        (h, MlpCache { inputs, pre, m })
    }

    pub fn backward(&self, cache: &MlpCache<T>, dy: &[T], slope: T, grad: &mut Mlp<T>, want_dx: bool) -> Option<Vec<T>> {
        let mut d = dy.to_vec();
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            if i < last {
                for (g, z) in d.iter_mut().zip(&cache.pre[i]) {
                    *g *= leaky_relu_grad(*z, slope);
                }
            }
            let need = want_dx || i > 0;
            match self.layers[i].backward(&cache.inputs[i], &d, cache.m, &mut grad.layers[i], need) {
                Some(dx) => d = dx,
                None => return None,
            }
        }
        Some(d)
    }
}

/// Indices of the `k` nearest rows of `feat` (`n x d`) for each row, itself included.
/// Distance ties are broken by lower index; each neighbor set is returned in ascending
/// index order.
pub fn knn_graph<T: Scalar>(feat: &[T], n: usize, d: usize, k: usize) -> Vec<usize> {
    assert!(k >= 1 && k <= n, "k = {k} for {n} points");
    // column-major copy so the distance loop runs over contiguous points
    let mut cols = vec![T::zero(); n * d];
    for i in 0..n {
        for t in 0..d {
            cols[t * n + i] = feat[i * d + t];
        }
    }
    // squared distances of non-negative floats order like their bit patterns
    let mut d2 = vec![0u64; n * n];
    let mut acc = vec![T::zero(); n];
    for i in 0..n {
        acc.fill(T::zero());
        for t in 0..d {
            let xi = feat[i * d + t];
            for (a, &xj) in acc.iter_mut().zip(&cols[t * n..(t + 1) * n]) {
                let diff = xj - xi;
                *a += diff * diff;
            }
        }
        for (dst, a) in d2[i * n..(i + 1) * n].iter_mut().zip(&acc) {
            *dst = a.as_f64().to_bits();
        }
    }
    let mut out = Vec::with_capacity(n * k);
    let mut keys: Vec<(u64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        keys.clear();
        keys.extend(d2[i * n..(i + 1) * n].iter().enumerate().map(|(j, &b)| (b, j)));
        if k < n {
            keys.select_nth_unstable(k - 1);
        }
        let start = out.len();
        out.extend(keys[..k].iter().map(|p| p.1));
        out[start..].sort_unstable();
    }
    out
}

/// EdgeConv: `out_i = max_j act(W [f_i ; f_j - f_i] + b)` over the k-NN graph.
///
/// Split `W = [Wa | Wb]`; the pre-activation is `(Wa - Wb) f_i + Wb f_j + b`, and since
/// the activation is monotone the max moves inside: `act(P_i + max_j Q_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConv<T> {
    /// `d_out x 2 d_in`.
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct EdgeConvCache<T> {
    input: Vec<T>,
    pre: Vec<T>,
    q: Vec<T>,
    /// Max of `q` over each point's neighbors.
    mx: Vec<T>,
    graph: Vec<usize>,
    k: usize,
    n: usize,
}

impl<T: Scalar> EdgeConv<T> {
    pub fn init(d_in: usize, d_out: usize, seed: Seed) -> Self {
        EdgeConv { weight: uniform_init(d_out, 2 * d_in, seed), bias: Tensor::zeros(&[d_out]) }
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[1] / 2
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[0]
    }

    fn split(&self) -> (Vec<T>, Vec<T>) {
        let (di, o) = (self.d_in(), self.d_out());
        let mut wd = Vec::with_capacity(o * di);
        let mut wb = Vec::with_capacity(o * di);
        for row in self.weight.data().chunks_exact(2 * di) {
            let (a, b) = row.split_at(di);
            wd.extend(a.iter().zip(b).map(|(x, y)| *x - *y));
            wb.extend_from_slice(b);
        }
        (wd, wb)
    }

    /// `graph` holds `k` neighbor indices per point.
    pub fn forward(&self, x: &[T], n: usize, graph: &[usize], k: usize, slope: T) -> (Vec<T>, EdgeConvCache<T>) {
        let (di, o) = (self.d_in(), self.d_out());
        let (wd, wb) = self.split();
        let p = matmul_nt(x, n, di, &wd, o);
        let q = matmul_nt(x, n, di, &wb, o);
        let mut mx = vec![T::zero(); n * o];
        for i in 0..n {
            let nb = &graph[i * k..(i + 1) * k];
            let best = &mut mx[i * o..(i + 1) * o];
            best.copy_from_slice(&q[nb[0] * o..(nb[0] + 1) * o]);
            for &j in &nb[1..] {
                for (b, &v) in best.iter_mut().zip(&q[j * o..(j + 1) * o]) {
                    *b = b.max(v);
                }
            }
        }
        let mut pre = vec![T::zero(); n * o];
        for (e, z) in pre.iter_mut().enumerate() {
            *z = p[e] + mx[e] + self.bias.data()[e % o];
        }
        let out = pre.iter().map(|&v| leaky_relu(v, slope)).collect();
        (out, EdgeConvCache { input: x.to_vec(), pre, q, mx, graph: graph.to_vec(), k, n })
    }

    pub fn backward(&self, cache: &EdgeConvCache<T>, dy: &[T], slope: T, grad: &mut EdgeConv<T>, want_dx: bool) -> Option<Vec<T>> {
        let (di, o, n) = (self.d_in(), self.d_out(), cache.n);
        let dp: Vec<T> = dy.iter().zip(&cache.pre).map(|(g, z)| *g * leaky_relu_grad(*z, slope)).collect();
        // subgradient of the max: the lowest-index neighbor attaining it
        let k = cache.k;
        let mut dq = vec![T::zero(); n * o];
        for i in 0..n {
            let nb = &cache.graph[i * k..(i + 1) * k];
            for c in 0..o {
                let e = i * o + c;
                if dp[e] == T::zero() {
                    continue;
                }
                let j = *nb.iter().find(|&&j| cache.q[j * o + c] == cache.mx[e]).expect("max is attained");
                dq[j * o + c] += dp[e];
            }
        }
        let mut dwd = vec![T::zero(); o * di];
        let mut dwb = vec![T::zero(); o * di];
        accumulate_tn(&dp, &cache.input, n, o, di, &mut dwd);
        accumulate_tn(&dq, &cache.input, n, o, di, &mut dwb);
        // W = [Wa | Wb] with Wd = Wa - Wb feeding P and Wb feeding Q
        for (c, row) in grad.weight.data_mut().chunks_exact_mut(2 * di).enumerate() {
            for t in 0..di {
                row[t] += dwd[c * di + t];
                row[di + t] += dwb[c * di + t] - dwd[c * di + t];
            }
        }
        let db = grad.bias.data_mut();
        for row in dp.chunks_exact(o) {
            for (d, g) in db.iter_mut().zip(row) {
                *d += *g;
            }
        }
        want_dx.then(|| {
            let (wd, wb) = self.split();
            let mut dx = vec![T::zero(); n * di];
            accumulate_nn(&dp, &wd, n, o, di, &mut dx);
            accumulate_nn(&dq, &wb, n, o, di, &mut dx);
            dx
        })
    }
}
