//! Architectures, parameter initialisation and the forward pass.

use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParamEntry, ParamKind, ParamSet, Role};
use crate::tensor::{Gradients, Graph, NodeId, Tensor};

pub const GN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub out_channels: usize,
    pub convs: usize,
}

/// A VGG-style classifier: blocks of `3x3 conv -> GN -> ReLU`, each block
/// closed by a `2x2` max-pool, then a flatten and an MLP head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub conv_blocks: Vec<ConvBlock>,
    pub gn_groups: usize,
    pub head_dims: Vec<usize>,
    pub num_classes: usize,
    pub input_shape: [usize; 3],
}

impl ModelSpec {
    /// Desk-scale preset: four single-conv blocks, 512-wide flatten.
    pub fn vgg_lite() -> Self {
        let block = |c| ConvBlock { out_channels: c, convs: 1 };
        ModelSpec {
            name: "vgg-lite".into(),
            conv_blocks: vec![block(32), block(64), block(128), block(128)],
            gn_groups: 8,
            head_dims: vec![128],
            num_classes: 10,
            input_shape: [1, 32, 32],
        }
    }

    /// VGG-16 feature extractor (13 convs) with group normalisation.
    pub fn vgg16_gn() -> Self {
        let block = |c, n| ConvBlock { out_channels: c, convs: n };
        ModelSpec {
            name: "vgg16-gn".into(),
            conv_blocks: vec![block(64, 2), block(128, 2), block(256, 3), block(512, 3), block(512, 3)],
            gn_groups: 32,
            head_dims: vec![512, 512],
            num_classes: 10,
            input_shape: [1, 32, 32],
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "vgg-lite" => Ok(Self::vgg_lite()),
            "vgg16-gn" => Ok(Self::vgg16_gn()),
            other => Err(Error::config(format!("unknown preset `{other}` (expected vgg-lite or vgg16-gn)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_blocks.is_empty() || self.conv_blocks.iter().any(|b| b.convs == 0 || b.out_channels == 0) {
            return Err(Error::config("every conv block needs at least one conv and one channel"));
        }
        if self.gn_groups == 0 {
            return Err(Error::config("gn_groups must be positive"));
        }
        for b in &self.conv_blocks {
            if b.out_channels % self.gn_groups != 0 {
                return Err(Error::config(format!(
                    "gn_groups {} does not divide {} channels",
                    self.gn_groups, b.out_channels
                )));
            }
        }
        let scale = 1usize << self.conv_blocks.len();
        let [c, h, w] = self.input_shape;
        if c == 0 || h % scale != 0 || w % scale != 0 || h < scale || w < scale {
            return Err(Error::config(format!("input {h}x{w} cannot be pooled {} times", self.conv_blocks.len())));
        }
        if self.num_classes < 2 || self.head_dims.contains(&0) {
            return Err(Error::config("head needs at least two classes and non-empty hidden layers"));
        }
        Ok(())
    }

    pub fn num_convs(&self) -> usize {
        self.conv_blocks.iter().map(|b| b.convs).sum()
    }

    /// Width of the flattened extractor output.
    pub fn feature_dim(&self) -> usize {
        let scale = 1usize << self.conv_blocks.len();
        let last = self.conv_blocks.last().map_or(0, |b| b.out_channels);
        last * (self.input_shape[1] / scale) * (self.input_shape[2] / scale)
    }

    /// `(layer name, in_channels, out_channels)` for every conv in order.
    fn conv_layers(&self) -> Vec<(String, usize, usize)> {
        let mut layers = Vec::new();
        let mut in_ch = self.input_shape[0];
        for (bi, block) in self.conv_blocks.iter().enumerate() {
            for ci in 0..block.convs {
                layers.push((format!("{}_{}", bi + 1, ci + 1), in_ch, block.out_channels));
                in_ch = block.out_channels;
            }
        }
        layers
    }

    /// `(layer name, in_dim, out_dim)` for every head layer in order.
    fn head_layers(&self) -> Vec<(String, usize, usize)> {
        let mut dims = vec![self.feature_dim()];
        dims.extend(&self.head_dims);
        dims.push(self.num_classes);
        dims.windows(2).enumerate().map(|(i, w)| (format!("fc{}", i + 1), w[0], w[1])).collect()
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f32) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

/// Weights are `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, i.e. variance `1/(3 fan_in)`.
fn init_bound(fan_in: usize) -> f32 {
    (1.0 / fan_in as f64).sqrt() as f32
}

pub fn init_extractor(spec: &ModelSpec, role: Role, rng: &mut ChaCha8Rng) -> ParamSet {
    let mut p = ParamSet::new(role);
    for (name, cin, cout) in spec.conv_layers() {
        let w = uniform(rng, &[cout, cin, 3, 3], init_bound(cin * 9));
        p.insert(format!("conv{name}.weight"), ParamEntry::new(w, ParamKind::ConvKernel));
        p.insert(format!("conv{name}.bias"), ParamEntry::new(Tensor::zeros(&[cout]), ParamKind::ConvBias));
        p.insert(format!("gn{name}.gamma"), ParamEntry::new(Tensor::full(&[cout], 1.0), ParamKind::NormScale));
        p.insert(format!("gn{name}.beta"), ParamEntry::new(Tensor::zeros(&[cout]), ParamKind::NormShift));
    }
    p
}

pub fn init_head(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> ParamSet {
    let mut p = ParamSet::new(Role::TaskHead);
    for (name, din, dout) in spec.head_layers() {
        let w = uniform(rng, &[dout, din], init_bound(din));
        p.insert(format!("{name}.weight"), ParamEntry::new(w, ParamKind::LinearWeight));
        p.insert(format!("{name}.bias"), ParamEntry::new(Tensor::zeros(&[dout]), ParamKind::LinearBias));
    }
    p
}

/// A task head shared by several models. Mutations through any handle are
/// visible through all of them.
pub type SharedHead = Arc<RwLock<ParamSet>>;

pub fn share(head: ParamSet) -> SharedHead {
    Arc::new(RwLock::new(head))
}

/// Read access to a shared head. A poisoned lock still holds valid data.
pub fn read_head(head: &SharedHead) -> RwLockReadGuard<'_, ParamSet> {
    head.read().unwrap_or_else(|e| e.into_inner())
}

pub fn write_head(head: &SharedHead) -> RwLockWriteGuard<'_, ParamSet> {
    head.write().unwrap_or_else(|e| e.into_inner())
}

/// An extractor paired with a (possibly shared) task head.
#[derive(Clone, Debug)]
pub struct Model {
    pub spec: Arc<ModelSpec>,
    pub extractor: ParamSet,
    pub head: SharedHead,
}

impl Model {
    pub fn new(spec: Arc<ModelSpec>, extractor: ParamSet, head: SharedHead) -> Self {
        Model { spec, extractor, head }
    }

    pub fn forward(&self, batch: Tensor) -> Result<Tensor> {
        let head = read_head(&self.head);
        forward(&self.spec, &self.extractor, &head, batch)
    }
}

/// `n` dataset-specific extractors, the aggregated extractor and one head.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub spec: Arc<ModelSpec>,
    pub extractors: Vec<ParamSet>,
    pub star: ParamSet,
    pub head: SharedHead,
}

impl Bundle {
    /// Model `N_i` (0-based `i`). Shares this bundle's head.
    pub fn model(&self, i: usize) -> Model {
        Model::new(self.spec.clone(), self.extractors[i].clone(), self.head.clone())
    }

    /// The aggregated model `N*`.
    pub fn star_model(&self) -> Model {
        Model::new(self.spec.clone(), self.star.clone(), self.head.clone())
    }
}

/// Initialise `n + 1` extractors and one head from a single seeded stream:
/// extractors `1..=n`, then the aggregated extractor, then the head.
pub fn build_bundle(spec: &ModelSpec, n: usize, seed: u64) -> Result<Bundle> {
    if n == 0 {
        return Err(Error::config("a bundle needs at least one dataset-specific extractor"));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extractors = (1..=n).map(|i| init_extractor(spec, Role::Extractor(i), &mut rng)).collect();
    let star = init_extractor(spec, Role::ExtractorStar, &mut rng);
    let head = init_head(spec, &mut rng);
    Ok(Bundle { spec: Arc::new(spec.clone()), extractors, star, head: share(head) })
}

/// Graph leaves of one parameter set, in set order.
pub struct Leaves(Vec<(String, NodeId)>);

impl Leaves {
    fn register<'p>(graph: &mut Graph<'p>, params: &'p ParamSet) -> Self {
        Leaves(params.iter().map(|(k, e)| (k.to_string(), graph.param(&e.tensor))).collect())
    }

    fn node(&self, key: &str) -> Result<NodeId> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, id)| *id)
            .ok_or_else(|| Error::shape(format!("parameter `{key}` missing")))
    }

    /// Gather gradients into a set shaped like `template`; missing gradients are zero.
    pub fn gradients(&self, grads: &Gradients, template: &ParamSet) -> ParamSet {
        let mut out = template.zeros_like(Role::Derived);
        for (key, id) in &self.0 {
            if let (Some(g), Some(slot)) = (grads.get(*id), out.get_mut(key)) {
                slot.tensor = g.clone();
            }
        }
        out
    }
}

/// Logits node of a full extractor + head pass recorded on `graph`.
pub struct Recorded {
    pub logits: NodeId,
    pub extractor: Leaves,
    pub head: Leaves,
}

pub fn record_forward<'p>(
    graph: &mut Graph<'p>,
    spec: &ModelSpec,
    extractor: &'p ParamSet,
    head: &'p ParamSet,
    batch: Tensor,
) -> Result<Recorded> {
    let [_, c, h, w] = batch.dims4()?;
    if [c, h, w] != spec.input_shape {
        return Err(Error::shape(format!("batch images are {c}x{h}x{w}, model expects {:?}", spec.input_shape)));
    }
    let ex = Leaves::register(graph, extractor);
    let hd = Leaves::register(graph, head);
    let mut x = graph.constant(batch);
    let mut layers = spec.conv_layers().into_iter();
    for block in &spec.conv_blocks {
        for (name, _, _) in layers.by_ref().take(block.convs) {
            let k = ex.node(&format!("conv{name}.weight"))?;
            let b = ex.node(&format!("conv{name}.bias"))?;
            x = graph.conv2d(x, k, b, 1, 1)?;
            let gamma = ex.node(&format!("gn{name}.gamma"))?;
            let beta = ex.node(&format!("gn{name}.beta"))?;
            x = graph.group_norm(x, gamma, beta, spec.gn_groups, GN_EPS)?;
            x = graph.relu(x)?;
        }
        x = graph.max_pool2d(x, 2, 2)?;
    }
    x = graph.flatten(x)?;
    let head_layers = spec.head_layers();
    let last = head_layers.len() - 1;
    for (i, (name, _, _)) in head_layers.iter().enumerate() {
        let wgt = hd.node(&format!("{name}.weight"))?;
        let b = hd.node(&format!("{name}.bias"))?;
        x = graph.linear(x, wgt, b)?;
        if i < last {
            x = graph.relu(x)?;
        }
    }
    Ok(Recorded { logits: x, extractor: ex, head: hd })
}

/// Inference-only forward pass: `[N, 1, 32, 32] -> [N, num_classes]` logits.
pub fn forward(spec: &ModelSpec, extractor: &ParamSet, head: &ParamSet, batch: Tensor) -> Result<Tensor> {
    let mut graph = Graph::inference();
    let rec = record_forward(&mut graph, spec, extractor, head, batch)?;
    Ok(graph.value(rec.logits).clone())
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict(logits: &Tensor) -> Result<Vec<usize>> {
    let [_, k] = logits.dims2()?;
    if k == 0 {
        return Err(Error::shape("logits have no classes"));
    }
    Ok(logits
        .data()
        .chunks_exact(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect())
}
