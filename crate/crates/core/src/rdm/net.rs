//! Point classifier: per-provenance input projection, stacked EdgeConv
//! blocks with KNN recomputed in feature space, a global max-pooled
//! descriptor and a per-point scoring head.
//!
//! EdgeConv with edge feature `[h_i, h_j − h_i]` and a shared linear map
//! followed by LeakyReLU factorises as
//! `out_i = lrelu(h_i (W_s − W_n) + b + max_j h_j W_n)`, because LeakyReLU is
//! monotone. Only the factorised form is evaluated.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::focal::{sigmoid, Focal};
use super::label::knn_graph;
use crate::cloud::{FeaturedCloud, Provenance};
use crate::error::{Error, Result};

pub const LEAK: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Topology {
    pub input_width: usize,
    pub block_widths: Vec<usize>,
    pub global_width: usize,
    pub head_width: usize,
    pub k: usize,
    pub dropout: f64,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            input_width: 32,
            block_widths: vec![64, 64, 128],
            global_width: 256,
            head_width: 128,
            k: 20,
            dropout: 0.5,
        }
    }
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        let widths_ok = self.input_width > 0
            && !self.block_widths.is_empty()
            && self.block_widths.iter().all(|&w| w > 0)
            && self.global_width > 0
            && self.head_width > 0;
        if !widths_ok || self.k == 0 || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!("invalid topology {self:?}")));
        }
        Ok(())
    }

    fn concat_width(&self) -> usize {
        self.block_widths.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    fn zeros(i: usize, o: usize) -> Self {
        Self {
            w: Array2::zeros((i, o)),
            b: Array1::zeros(o),
        }
    }

    fn init(i: usize, o: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / ((1.0 + LEAK * LEAK) * i as f64)).sqrt();
        Self {
            w: Array2::from_shape_fn((i, o), |_| rng.random_range(-bound..bound)),
            b: Array1::zeros(o),
        }
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConv {
    pub w_self: Array2<f64>,
    pub w_nbr: Array2<f64>,
    pub b: Array1<f64>,
}

impl EdgeConv {
    fn zeros(i: usize, o: usize) -> Self {
        Self {
            w_self: Array2::zeros((i, o)),
            w_nbr: Array2::zeros((i, o)),
            b: Array1::zeros(o),
        }
    }

    fn init(i: usize, o: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / ((1.0 + LEAK * LEAK) * 2.0 * i as f64)).sqrt();
        Self {
            w_self: Array2::from_shape_fn((i, o), |_| rng.random_range(-bound..bound)),
            w_nbr: Array2::from_shape_fn((i, o), |_| rng.random_range(-bound..bound)),
            b: Array1::zeros(o),
        }
    }
}

/// Learned tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input_nca: Linear,
    pub input_saa: Linear,
    pub blocks: Vec<EdgeConv>,
    pub global: Linear,
    pub head: Linear,
    pub out: Linear,
}

impl Network {
    fn build(t: &Topology, mut lin: impl FnMut(usize, usize) -> Linear, mut edge: impl FnMut(usize, usize) -> EdgeConv) -> Self {
        let input_nca = lin(Provenance::Nca.feature_count(), t.input_width);
        let input_saa = lin(Provenance::Saa.feature_count(), t.input_width);
        let mut blocks = Vec::new();
        let mut w = t.input_width;
        for &o in &t.block_widths {
            blocks.push(edge(w, o));
            w = o;
        }
        let c = t.concat_width();
        Self {
            input_nca,
            input_saa,
            blocks,
            global: lin(c, t.global_width),
            head: lin(c + t.global_width, t.head_width),
            out: lin(t.head_width, 1),
        }
    }

    pub fn zeros(t: &Topology) -> Self {
        Self::build(t, Linear::zeros, EdgeConv::zeros)
    }

    pub fn init(t: &Topology, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = std::cell::RefCell::new(&mut rng);
        Self::build(
            t,
            |i, o| Linear::init(i, o, &mut rng.borrow_mut()),
            |i, o| EdgeConv::init(i, o, &mut rng.borrow_mut()),
        )
    }

    /// `(name, shape)` of every tensor in canonical order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut names = Vec::new();
        for name in ["input_nca", "input_saa"] {
            names.push(format!("{name}.w"));
            names.push(format!("{name}.b"));
        }
        for i in 0..self.blocks.len() {
            for part in ["w_self", "w_nbr", "b"] {
                names.push(format!("block{i}.{part}"));
            }
        }
        for name in ["global", "head", "out"] {
            names.push(format!("{name}.w"));
            names.push(format!("{name}.b"));
        }
        names.into_iter().zip(self.shapes()).collect()
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        let mut v = Vec::new();
        for l in [&self.input_nca, &self.input_saa] {
            v.push(l.w.shape().to_vec());
            v.push(l.b.shape().to_vec());
        }
        for b in &self.blocks {
            v.push(b.w_self.shape().to_vec());
            v.push(b.w_nbr.shape().to_vec());
            v.push(b.b.shape().to_vec());
        }
        for l in [&self.global, &self.head, &self.out] {
            v.push(l.w.shape().to_vec());
            v.push(l.b.shape().to_vec());
        }
        v
    }

    /// Tensor storage in the order of [`Network::layout`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for l in [&self.input_nca, &self.input_saa] {
            v.push(l.w.as_slice().expect("standard layout"));
            v.push(l.b.as_slice().expect("standard layout"));
        }
        for b in &self.blocks {
            v.push(b.w_self.as_slice().expect("standard layout"));
            v.push(b.w_nbr.as_slice().expect("standard layout"));
            v.push(b.b.as_slice().expect("standard layout"));
        }
        for l in [&self.global, &self.head, &self.out] {
            v.push(l.w.as_slice().expect("standard layout"));
            v.push(l.b.as_slice().expect("standard layout"));
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for l in [&mut self.input_nca, &mut self.input_saa] {
            v.push(l.w.as_slice_mut().expect("standard layout"));
            v.push(l.b.as_slice_mut().expect("standard layout"));
        }
        for b in &mut self.blocks {
            v.push(b.w_self.as_slice_mut().expect("standard layout"));
            v.push(b.w_nbr.as_slice_mut().expect("standard layout"));
            v.push(b.b.as_slice_mut().expect("standard layout"));
        }
        for l in [&mut self.global, &mut self.head, &mut self.out] {
            v.push(l.w.as_slice_mut().expect("standard layout"));
            v.push(l.b.as_slice_mut().expect("standard layout"));
        }
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Per-feature z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Statistics over every row of every cloud. Features with zero spread
    /// get unit scale.
    pub fn fit<'a>(dim: usize, clouds: impl Iterator<Item = &'a FeaturedCloud>) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let clouds: Vec<&FeaturedCloud> = clouds.collect();
        for c in &clouds {
            for row in c.rows() {
                n += 1;
                for (s, v) in sum.iter_mut().zip(row) {
                    *s += v;
                }
            }
        }
        if n == 0 {
            return Self::identity(dim);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for c in &clouds {
            for row in c.rows() {
                for ((q, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                    *q += (v - m) * (v - m);
                }
            }
        }
        let scale = sq
            .iter()
            .map(|q| {
                let sd = (q / n as f64).sqrt();
                if sd > 1e-9 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.mean.len() != dim
            || self.scale.len() != dim
            || self.mean.iter().any(|m| !m.is_finite())
            || self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite()))
        {
            return Err(Error::InvalidParameter(format!("bad normalization statistics for {dim} features")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub topology: Topology,
    pub network: Network,
    pub norm_nca: Normalization,
    pub norm_saa: Normalization,
    pub seed: u64,
    /// Validation F1 of the checkpoint, when trained.
    pub val_f1: Option<f64>,
}

impl ClassifierModel {
    pub fn new(topology: Topology, seed: u64) -> Result<Self> {
        topology.validate()?;
        Ok(Self {
            network: Network::init(&topology, seed),
            topology,
            norm_nca: Normalization::identity(Provenance::Nca.feature_count()),
            norm_saa: Normalization::identity(Provenance::Saa.feature_count()),
            seed,
            val_f1: None,
        })
    }

    /// A model whose output is `sigmoid(logit)` for every point.
    pub fn constant(topology: Topology, logit: f64) -> Result<Self> {
        let mut m = Self::new(topology, 0)?;
        m.network.out.w.fill(0.0);
        m.network.out.b.fill(logit);
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.norm_nca.validate(Provenance::Nca.feature_count())?;
        self.norm_saa.validate(Provenance::Saa.feature_count())?;
        if self.network.layout() != Network::zeros(&self.topology).layout() {
            return Err(Error::InvalidParameter("tensor shapes do not match topology".into()));
        }
        if !self.network.all_finite() {
            return Err(Error::InvalidParameter("non-finite weights".into()));
        }
        Ok(())
    }

    fn normalization(&self, p: Provenance) -> Result<&Normalization> {
        match p {
            Provenance::Nca => Ok(&self.norm_nca),
            Provenance::Saa => Ok(&self.norm_saa),
            Provenance::Reference => Err(Error::InvalidInput(
                "classifier needs NCA or SAA features, got a geometry-only cloud".into(),
            )),
        }
    }

    pub(crate) fn normalized_input(&self, cloud: &FeaturedCloud) -> Result<Array2<f64>> {
        let norm = self.normalization(cloud.provenance())?;
        let d = cloud.dim();
        Ok(Array2::from_shape_fn((cloud.len(), d), |(i, c)| {
            (cloud.row(i)[c] - norm.mean[c]) / norm.scale[c]
        }))
    }

    /// Clean-class probability of every point, inference mode.
    pub fn predict(&self, cloud: &FeaturedCloud) -> Result<Vec<f64>> {
        Ok(self.logits(cloud)?.iter().map(|&z| sigmoid(z)).collect())
    }

    pub fn logits(&self, cloud: &FeaturedCloud) -> Result<Vec<f64>> {
        if cloud.is_empty() {
            self.normalization(cloud.provenance())?;
            return Ok(Vec::new());
        }
        let x = self.normalized_input(cloud)?;
        let (z, _) = forward(&self.network, &self.topology, cloud, x, None)?;
        Ok(z.to_vec())
    }

    /// Mean focal loss against the cloud's labels and its gradient with
    /// respect to every weight, inference mode.
    pub fn loss_gradient(&self, cloud: &FeaturedCloud, focal: Focal) -> Result<(f64, Network)> {
        let labels = cloud
            .labels()
            .ok_or_else(|| Error::InvalidInput("cloud has no labels".into()))?;
        if cloud.is_empty() {
            return Err(Error::InvalidInput("empty cloud".into()));
        }
        let mut grad = Network::zeros(&self.topology);
        let loss = loss_and_grad(self, cloud, labels, focal, None, &mut grad)?;
        Ok((loss, grad))
    }
}

fn lrelu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAK * v
    }
}

fn lrelu_grad(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        LEAK
    }
}

/// Neighbour lists (flattened, `k` per point). With a single point the
/// point is its own neighbour.
fn neighbours(features: ArrayView2<f64>, k: usize) -> Result<(usize, Vec<usize>)> {
    let n = features.nrows();
    if n == 1 {
        return Ok((1, vec![0]));
    }
    let k = k.min(n - 1);
    let g = knn_graph(features, k)?;
    Ok((k, (0..n).flat_map(|i| g.neighbors(i).to_vec()).collect()))
}

struct BlockCache {
    /// Chosen neighbour per (point, channel).
    argmax: Array2<usize>,
    pre: Array2<f64>,
}

pub(crate) struct Cache {
    provenance: Provenance,
    x: Array2<f64>,
    pre_in: Array2<f64>,
    /// `h[0]` is the projected input, `h[l + 1]` block `l`'s output.
    h: Vec<Array2<f64>>,
    blocks: Vec<BlockCache>,
    hcat: Array2<f64>,
    pre_global: Array2<f64>,
    global_arg: Vec<usize>,
    feat: Array2<f64>,
    pre_head: Array2<f64>,
    mask: Option<Array2<f64>>,
    head_out: Array2<f64>,
}

fn edge_conv(block: &EdgeConv, h: &Array2<f64>, k: usize, nbrs: Vec<usize>) -> (Array2<f64>, BlockCache) {
    let n = h.nrows();
    let a = h.dot(&(&block.w_self - &block.w_nbr)) + &block.b;
    let b = h.dot(&block.w_nbr);
    let c = a.ncols();
    let mut pre = a;
    let mut argmax = Array2::zeros((n, c));
    for i in 0..n {
        let list = &nbrs[i * k..(i + 1) * k];
        for ch in 0..c {
            let mut best = list[0];
            let mut bv = b[[best, ch]];
            for &j in &list[1..] {
                if b[[j, ch]] > bv {
                    bv = b[[j, ch]];
                    best = j;
                }
            }
            pre[[i, ch]] += bv;
            argmax[[i, ch]] = best;
        }
    }
    let out = pre.mapv(lrelu);
    (out, BlockCache { argmax, pre })
}

/// Forward pass on normalized features `x`. With `dropout_rng` the head
/// applies inverted dropout.
pub(crate) fn forward(
    net: &Network,
    topo: &Topology,
    cloud: &FeaturedCloud,
    x: Array2<f64>,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(Array1<f64>, Cache)> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("empty cloud".into()));
    }
    let input = match cloud.provenance() {
        Provenance::Nca => &net.input_nca,
        Provenance::Saa => &net.input_saa,
        Provenance::Reference => return Err(Error::InvalidInput("geometry-only cloud".into())),
    };
    if x.ncols() != input.w.nrows() {
        return Err(Error::InvalidInput(format!(
            "{} features, model expects {}",
            x.ncols(),
            input.w.nrows()
        )));
    }
    let pre_in = input.apply(x.view());
    let mut h = vec![pre_in.mapv(lrelu)];
    let mut blocks = Vec::new();
    let xyz = Array2::from_shape_fn((n, 3), |(i, c)| cloud.row(i)[c]);
    for (l, block) in net.blocks.iter().enumerate() {
        let (k, nbrs) = if l == 0 {
            neighbours(xyz.view(), topo.k)?
        } else {
            neighbours(h[l].view(), topo.k)?
        };
        let (out, cache) = edge_conv(block, &h[l], k, nbrs);
        h.push(out);
        blocks.push(cache);
    }
    let hcat = concatenate(Axis(1), &h[1..].iter().map(|a| a.view()).collect::<Vec<_>>()).expect("equal rows");
    let pre_global = net.global.apply(hcat.view());
    let gw = pre_global.ncols();
    let mut global_arg = vec![0usize; gw];
    let mut gvec = Array1::zeros(gw);
    for c in 0..gw {
        let mut best = 0;
        for i in 1..n {
            if pre_global[[i, c]] > pre_global[[best, c]] {
                best = i;
            }
        }
        global_arg[c] = best;
        gvec[c] = lrelu(pre_global[[best, c]]);
    }
    let gb = gvec.broadcast((n, gw)).expect("broadcast").to_owned();
    let feat = concatenate(Axis(1), &[hcat.view(), gb.view()]).expect("equal rows");
    let pre_head = net.head.apply(feat.view());
    let mut head_out = pre_head.mapv(lrelu);
    let mask = dropout_rng.filter(|_| topo.dropout > 0.0).map(|rng| {
        let keep = 1.0 - topo.dropout;
        Array2::from_shape_fn(head_out.raw_dim(), |_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
    });
    if let Some(m) = &mask {
        head_out *= m;
    }
    let logits = net.out.apply(head_out.view()).column(0).to_owned();
    Ok((
        logits,
        Cache {
            provenance: cloud.provenance(),
            x,
            pre_in,
            h,
            blocks,
            hcat,
            pre_global,
            global_arg,
            feat,
            pre_head,
            mask,
            head_out,
        },
    ))
}

fn linear_backward(layer: &Linear, grad: &mut Linear, x: ArrayView2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    grad.w += &x.t().dot(dy);
    grad.b += &dy.sum_axis(Axis(0));
    dy.dot(&layer.w.t())
}

/// Accumulates parameter gradients of `Σ_i dlogits_i · z_i` into `grad`.
pub(crate) fn backward(net: &Network, cache: &Cache, dlogits: &Array1<f64>, grad: &mut Network) {
    let n = dlogits.len();
    let dz = dlogits.clone().insert_axis(Axis(1));
    let mut dhead = linear_backward(&net.out, &mut grad.out, cache.head_out.view(), &dz);
    if let Some(m) = &cache.mask {
        dhead *= m;
    }
    Zip::from(&mut dhead).and(&cache.pre_head).for_each(|d, &p| *d *= lrelu_grad(p));
    let dfeat = linear_backward(&net.head, &mut grad.head, cache.feat.view(), &dhead);

    let cw = cache.hcat.ncols();
    let mut dhcat = dfeat.slice(s![.., ..cw]).to_owned();
    let dg = dfeat.slice(s![.., cw..]).sum_axis(Axis(0));
    let mut dpre_global = Array2::zeros(cache.pre_global.raw_dim());
    for (c, &i) in cache.global_arg.iter().enumerate() {
        dpre_global[[i, c]] = dg[c] * lrelu_grad(cache.pre_global[[i, c]]);
    }
    dhcat += &linear_backward(&net.global, &mut grad.global, cache.hcat.view(), &dpre_global);

    let mut offset = 0;
    let mut dh: Vec<Array2<f64>> = Vec::new();
    for h in &cache.h[1..] {
        let w = h.ncols();
        dh.push(dhcat.slice(s![.., offset..offset + w]).to_owned());
        offset += w;
    }
    let mut dh_in = Array2::<f64>::zeros(cache.h[0].raw_dim());
    for l in (0..net.blocks.len()).rev() {
        let block = &net.blocks[l];
        let bc = &cache.blocks[l];
        let mut da = std::mem::replace(&mut dh[l], Array2::zeros((0, 0)));
        Zip::from(&mut da).and(&bc.pre).for_each(|d, &p| *d *= lrelu_grad(p));
        let c = da.ncols();
        let mut db = Array2::<f64>::zeros((n, c));
        for i in 0..n {
            for ch in 0..c {
                db[[bc.argmax[[i, ch]], ch]] += da[[i, ch]];
            }
        }
        let h = &cache.h[l];
        let g = &mut grad.blocks[l];
        g.w_self += &h.t().dot(&da);
        g.w_nbr += &h.t().dot(&(&db - &da));
        g.b += &da.sum_axis(Axis(0));
        let dprev = da.dot(&(&block.w_self - &block.w_nbr).t()) + db.dot(&block.w_nbr.t());
        if l == 0 {
            dh_in = dprev;
        } else {
            dh[l - 1] += &dprev;
        }
    }
    Zip::from(&mut dh_in).and(&cache.pre_in).for_each(|d, &p| *d *= lrelu_grad(p));
    let (input, ginput) = match cache.provenance {
        Provenance::Nca => (&net.input_nca, &mut grad.input_nca),
        _ => (&net.input_saa, &mut grad.input_saa),
    };
    linear_backward(input, ginput, cache.x.view(), &dh_in);
}

/// Mean focal loss of one cloud and its parameter gradient.
pub(crate) fn loss_and_grad(
    model: &ClassifierModel,
    cloud: &FeaturedCloud,
    labels: &[u8],
    focal: Focal,
    dropout_rng: Option<&mut ChaCha8Rng>,
    grad: &mut Network,
) -> Result<f64> {
    let x = model.normalized_input(cloud)?;
    let (z, cache) = forward(&model.network, &model.topology, cloud, x, dropout_rng)?;
    let n = z.len() as f64;
    let mut loss = 0.0;
    let mut dz = Array1::zeros(z.len());
    for (i, (&zi, &l)) in z.iter().zip(labels).enumerate() {
        let (li, gi) = focal.term_and_grad_logit(zi, l);
        loss += li;
        dz[i] = gi / n;
    }
    backward(&model.network, &cache, &dz, grad);
    Ok(loss / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_topology() -> Topology {
        Topology {
            input_width: 8,
            block_widths: vec![8, 8, 12],
            global_width: 16,
            head_width: 8,
            k: 3,
            dropout: 0.5,
        }
    }

    fn random_cloud(p: Provenance, n: usize, seed: u64) -> FeaturedCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = p.feature_count();
        FeaturedCloud::from_rows(p, (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn default_topology_sizes() {
        let t = Topology::default();
        let net = Network::init(&t, 0);
        assert_eq!(net.global.w.shape(), &[256, 256]);
        assert_eq!(net.head.w.shape(), &[512, 128]);
        assert_eq!(net.blocks[2].w_self.shape(), &[64, 128]);
        assert_eq!(net.layout().len(), net.tensors().len());
    }

    #[test]
    fn zero_output_layer_gives_one_half() {
        let m = ClassifierModel::constant(small_topology(), 0.0).unwrap();
        let p = m.predict(&random_cloud(Provenance::Nca, 10, 1)).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn reference_cloud_and_empty_input() {
        let m = ClassifierModel::new(small_topology(), 1).unwrap();
        let r = FeaturedCloud::from_positions(&[[0.0; 3], [1.0; 3]]);
        assert!(matches!(m.predict(&r), Err(Error::InvalidInput(_))));
        assert!(m.predict(&FeaturedCloud::new(Provenance::Saa)).unwrap().is_empty());
        assert_eq!(m.predict(&random_cloud(Provenance::Saa, 1, 2)).unwrap().len(), 1);
    }

    #[test]
    fn permuting_points_permutes_outputs() {
        let m = ClassifierModel::new(small_topology(), 4).unwrap();
        let c = random_cloud(Provenance::Nca, 24, 5);
        let perm: Vec<usize> = (0..24).map(|i| (i * 7 + 3) % 24).collect();
        let pc = c.select(&perm);
        let a = m.predict(&c).unwrap();
        let b = m.predict(&pc).unwrap();
        for (i, &j) in perm.iter().enumerate() {
            assert!((b[i] - a[j]).abs() < 1e-12);
        }
    }

    fn check_gradients(provenance: Provenance, with_dropout: bool) {
        let topo = small_topology();
        let mut model = ClassifierModel::new(topo, 7).unwrap();
        model.network.out.b.fill(0.1);
        let cloud = random_cloud(provenance, 8, 8);
        let labels = [1, 0, 0, 1, 1, 0, 1, 0];
        let focal = Focal::default();
        let rng = || with_dropout.then(|| ChaCha8Rng::seed_from_u64(99));
        let mut grad = Network::zeros(&model.topology);
        let mut r = rng();
        loss_and_grad(&model, &cloud, &labels, focal, r.as_mut(), &mut grad).unwrap();
        let analytic: Vec<Vec<f64>> = grad.tensors().iter().map(|t| t.to_vec()).collect();
        let loss_at = |m: &ClassifierModel| {
            let mut g = Network::zeros(&m.topology);
            let mut r = rng();
            loss_and_grad(m, &cloud, &labels, focal, r.as_mut(), &mut g).unwrap()
        };
        let names = model.network.layout();
        let mut checked = 0;
        for t in 0..analytic.len() {
            let len = analytic[t].len();
            if (provenance == Provenance::Nca && names[t].0.starts_with("input_saa"))
                || (provenance == Provenance::Saa && names[t].0.starts_with("input_nca"))
            {
                assert!(analytic[t].iter().all(|&g| g == 0.0));
                continue;
            }
            for idx in [0, len / 3, len / 2, len - 1] {
                let h = 1e-6;
                let mut plus = model.clone();
                plus.network.tensors_mut()[t][idx] += h;
                let mut minus = model.clone();
                minus.network.tensors_mut()[t][idx] -= h;
                let num = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                let a = analytic[t][idx];
                let scale = a.abs().max(num.abs());
                if scale < 1e-9 {
                    continue;
                }
                assert!((a - num).abs() / scale < 1e-4, "{} [{idx}]: {a} vs {num}", names[t].0);
                checked += 1;
            }
        }
        assert!(checked > 20, "{checked}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradients(Provenance::Nca, false);
        check_gradients(Provenance::Saa, false);
        check_gradients(Provenance::Nca, true);
    }

    #[test]
    fn normalization_fit_and_degenerate_feature() {
        let c = FeaturedCloud::from_rows(Provenance::Saa, vec![0.0, 1.0, 5.0, 2.0, 2.0, 1.0, 5.0, 4.0]).unwrap();
        let n = Normalization::fit(4, std::iter::once(&c));
        assert_eq!(n.mean, vec![1.0, 1.0, 5.0, 3.0]);
        assert_eq!(n.scale, vec![1.0, 1.0, 1.0, 1.0]);
        n.validate(4).unwrap();
        assert!(Normalization { mean: vec![0.0; 4], scale: vec![0.0; 4] }.validate(4).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(24))]
        #[test]
        fn outputs_follow_any_permutation(
            seed in 0u64..1000,
            n in 2usize..40,
            shift in 1usize..39,
            saa in proptest::bool::ANY,
        ) {
            let p = if saa { Provenance::Saa } else { Provenance::Nca };
            let model = ClassifierModel::new(small_topology(), seed).unwrap();
            let cloud = random_cloud(p, n, seed + 1);
            let mut order: Vec<usize> = (0..n).collect();
            order.rotate_left(shift % n);
            order.swap(0, n - 1);
            let z = model.logits(&cloud).unwrap();
            let zp = model.logits(&cloud.select(&order)).unwrap();
            for (k, &i) in order.iter().enumerate() {
                proptest::prop_assert!((zp[k] - z[i]).abs() <= 1e-6);
            }
        }
    }
}
