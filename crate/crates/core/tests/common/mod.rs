//! Shared helpers for the integration tests: a central finite-difference
//! gradient checker and random tensors.

#![allow(dead_code)]

pub mod ops;

use aggnet::tensor::{Graph, NodeId};
use aggnet::{Result, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Step for central differences.
pub const FD_STEP: f32 = 1e-3;

/// Relative-error bound for single ops.
pub const FD_TOLERANCE: f64 = 1e-3;

/// Gradient norms below this are compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;

/// `||a - n|| / max(||a||, ||n||, floor)` over a whole gradient tensor. Per
/// coordinate the f32 forward pass leaves differencing noise of order
/// 1e-7 * |loss| / h, which swamps coordinates whose gradient is near zero.
pub fn relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(floor)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values in `[-1, 1]` bounded away from zero by `gap`.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f32) -> Tensor {
    let mut t = uniform(rng, shape, gap, 1.0);
    for v in t.data_mut() {
        if rng.random_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

/// Distinct values whose pairwise gaps are at least `gap`, in random order.
pub fn distinct(rng: &mut ChaCha8Rng, shape: &[usize], gap: f32) -> Tensor {
    let n: usize = shape.iter().product();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let data = order.iter().map(|&k| (k as f32 - n as f32 / 2.0) * gap).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FdOutcome {
    /// Largest per-tensor relative error.
    pub worst: f64,
    /// Which input it belongs to, and that input's analytic gradient norm.
    pub input: usize,
    pub norm: f64,
    pub coordinates: usize,
}

impl FdOutcome {
    pub fn merge(self, other: FdOutcome) -> FdOutcome {
        let coordinates = self.coordinates + other.coordinates;
        let best = if other.worst > self.worst { other } else { self };
        FdOutcome { coordinates, ..best }
    }
}

/// Compare the tape's gradient of the scalar built by `build` against central
/// differences for every coordinate of every input.
///
/// The perturbation actually applied is `(x + h) - (x - h)` in f32, so the
/// quotient divides by the true step rather than the nominal one.
pub fn check_gradients<F>(inputs: &[Tensor], build: F) -> Result<FdOutcome>
where
    F: for<'g> Fn(&mut Graph<'g>, &[NodeId]) -> Result<NodeId>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = xs.iter().map(|x| g.variable(x.clone())).collect();
        let root = build(&mut g, &ids)?;
        Ok(g.scalar(root).unwrap_or(g.value(root).data()[0] as f64))
    };

    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|x| g.variable(x.clone())).collect();
    let root = build(&mut g, &ids)?;
    let grads = g.backward(root)?;

    let mut out = FdOutcome::default();
    let mut work = inputs.to_vec();
    for (k, id) in ids.iter().enumerate() {
        let zero = Tensor::zeros(inputs[k].shape());
        let analytic = grads.get(*id).unwrap_or(&zero);
        assert_eq!(analytic.shape(), inputs[k].shape(), "gradient shape of input {k}");
        let mut numeric = Vec::with_capacity(inputs[k].len());
        for j in 0..inputs[k].len() {
            let x = inputs[k].data()[j];
            let (up, down) = (x + FD_STEP, x - FD_STEP);
            work[k].data_mut()[j] = up;
            let fp = eval(&work)?;
            work[k].data_mut()[j] = down;
            let fm = eval(&work)?;
            work[k].data_mut()[j] = x;
            numeric.push((fp - fm) / (up as f64 - down as f64));
        }
        let analytic: Vec<f64> = analytic.data().iter().map(|&a| a as f64).collect();
        let err = relative_error(&analytic, &numeric, FD_FLOOR);
        let norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        out = out.merge(FdOutcome { worst: err, input: k, norm, coordinates: numeric.len() });
    }
    Ok(out)
}

use aggnet::aggregation::{aggregate, aggregation_loss, subtract, AggregationOp};
use aggnet::{ParamEntry, ParamKind, ParamSet, Role};

pub type Layout = Vec<(String, Vec<usize>, ParamKind)>;

/// A few conv layers with their norm parameters, shaped like an extractor.
pub fn random_layout(rng: &mut ChaCha8Rng) -> Layout {
    let mut out = Vec::new();
    let mut c = 1;
    for l in 0..rng.random_range(1..=3) {
        let f = rng.random_range(1..=4);
        let k = [1, 3][rng.random_range(0..2)];
        out.push((format!("conv{l}.weight"), vec![f, c, k, k], ParamKind::ConvKernel));
        out.push((format!("conv{l}.bias"), vec![f], ParamKind::ConvBias));
        out.push((format!("gn{l}.weight"), vec![f], ParamKind::NormScale));
        out.push((format!("gn{l}.bias"), vec![f], ParamKind::NormShift));
        c = f;
    }
    out
}

/// Values with magnitude in `[lo, hi]` and random sign.
pub fn random_set(rng: &mut ChaCha8Rng, layout: &Layout, role: Role, lo: f32, hi: f32) -> ParamSet {
    let mut p = ParamSet::new(role);
    for (key, shape, kind) in layout {
        let mut t = uniform(rng, shape, lo, hi);
        t.data_mut().iter_mut().for_each(|v| {
            if rng.random_bool(0.5) {
                *v = -*v
            }
        });
        p.insert(key.clone(), ParamEntry::new(t, *kind));
    }
    p
}

fn is_conv(kind: ParamKind) -> bool {
    matches!(kind, ParamKind::ConvKernel | ParamKind::ConvBias)
}

/// Elementwise combine by direct indexing: an f32 left fold, divided by the
/// operand count for the mean.
pub fn oracle_combine(parts: &[&ParamSet], key: &str, op: AggregationOp) -> Vec<f32> {
    let len = parts[0].get(key).unwrap().tensor.len();
    (0..len)
        .map(|j| {
            let mut acc = parts[0].get(key).unwrap().tensor.data()[j];
            for p in &parts[1..] {
                acc += p.get(key).unwrap().tensor.data()[j];
            }
            match op {
                AggregationOp::Sum => acc,
                AggregationOp::Mean => acc / parts.len() as f32,
            }
        })
        .collect()
}

/// `sum_l ||star_l - combine_l||^2` over convolution entries, element by element.
pub fn oracle_loss(star: &ParamSet, parts: &[&ParamSet], op: AggregationOp) -> f64 {
    let mut loss = 0.0;
    for (key, entry) in star.iter() {
        if !is_conv(entry.kind) {
            continue;
        }
        let combined = oracle_combine(parts, key, op);
        for (j, &c) in combined.iter().enumerate() {
            let r = entry.tensor.data()[j] as f64 - c as f64;
            loss += r * r;
        }
    }
    loss
}

/// Outcome of the algebra checks over `instances` random instances.
#[derive(Debug, Default)]
pub struct AlgebraOutcome {
    pub commutative: bool,
    pub only_conv_entries: bool,
    /// max over elements of |(A ⊕ B) ⊖ B − A| / (|A| + 1e-12)
    pub inverse_rel: f64,
    pub zero_on_exact: bool,
    pub loss_oracle_err: f64,
    pub instances: usize,
}

pub fn run_algebra(seed: u64, instances: usize) -> AlgebraOutcome {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out =
        AlgebraOutcome { commutative: true, only_conv_entries: true, zero_on_exact: true, ..Default::default() };
    for _ in 0..instances {
        let layout = random_layout(&mut rng);
        let a = random_set(&mut rng, &layout, Role::Extractor(1), 0.1, 1.0);
        let b = random_set(&mut rng, &layout, Role::Extractor(2), 0.1, 1.0);
        let c = random_set(&mut rng, &layout, Role::Extractor(3), 0.1, 1.0);

        let ab = aggregate(&[&a, &b], AggregationOp::Sum).unwrap().params;
        let ba = aggregate(&[&b, &a], AggregationOp::Sum).unwrap().params;
        out.commutative &= ab.iter().zip(ba.iter()).all(|((_, x), (_, y))| {
            x.tensor.data().iter().zip(y.tensor.data()).all(|(p, q)| p.to_bits() == q.to_bits())
        });
        out.only_conv_entries &= ab.iter().all(|(_, e)| is_conv(e.kind));

        let back = subtract(&ab, &b, AggregationOp::Sum).unwrap();
        out.only_conv_entries &= back.iter().all(|(_, e)| is_conv(e.kind));
        for (key, e) in back.iter() {
            for (&r, &w) in e.tensor.data().iter().zip(a.get(key).unwrap().tensor.data()) {
                out.inverse_rel = out.inverse_rel.max((r as f64 - w as f64).abs() / (w.abs() as f64 + 1e-12));
            }
        }

        for op in [AggregationOp::Sum, AggregationOp::Mean] {
            // star equal to the combine on conv entries, arbitrary elsewhere
            let mut exact = random_set(&mut rng, &layout, Role::ExtractorStar, 0.1, 1.0);
            for (key, e) in exact.iter_mut() {
                if is_conv(e.kind) {
                    e.tensor.data_mut().copy_from_slice(&oracle_combine(&[&a, &b, &c], key, op));
                }
            }
            out.zero_on_exact &= aggregation_loss(&exact, &[&a, &b, &c], op).unwrap() == 0.0;

            let star = random_set(&mut rng, &layout, Role::ExtractorStar, 0.0, 3.0);
            let got = aggregation_loss(&star, &[&a, &b, &c], op).unwrap();
            let want = oracle_loss(&star, &[&a, &b, &c], op);
            out.loss_oracle_err = out.loss_oracle_err.max((got - want).abs() / want.max(1.0));
        }
        out.instances += 1;
    }
    out
}

use aggnet::model::{read_head, ModelSpec};
use aggnet::train::{initial_bundle, joint_objective, Batch, JointBatch, JointParams, JointWeights};

/// The desk preset cut down to its first two conv blocks.
pub fn micro_spec() -> ModelSpec {
    let mut spec = ModelSpec::vgg_lite();
    spec.name = "vgg-lite-2".into();
    spec.conv_blocks.truncate(2);
    spec
}

pub fn random_batch(rng: &mut ChaCha8Rng, size: usize, classes: usize) -> Batch {
    Batch {
        images: uniform(rng, &[size, 1, 32, 32], 0.0, 1.0),
        labels: (0..size).map(|_| rng.random_range(0..classes)).collect(),
    }
}

pub fn coordinate(params: &mut JointParams, mut flat: usize) -> &mut f32 {
    let sets = params.extractors.iter_mut().chain([&mut params.star, &mut params.head]);
    for set in sets {
        for (_, e) in set.iter_mut() {
            if flat < e.tensor.len() {
                return &mut e.tensor.data_mut()[flat];
            }
            flat -= e.tensor.len();
        }
    }
    panic!("coordinate out of range")
}

pub fn coordinate_value(grads: &JointParams, mut flat: usize) -> f32 {
    for set in grads.extractors.iter().chain([&grads.star, &grads.head]) {
        for (_, e) in set.iter() {
            if flat < e.tensor.len() {
                return e.tensor.data()[flat];
            }
            flat -= e.tensor.len();
        }
    }
    panic!("coordinate out of range")
}

/// Result of [`objective_fd`].
#[derive(Debug)]
pub struct ObjectiveCheck {
    pub error: f64,
    pub coordinates: usize,
    /// Draws redrawn because a relu or pooling kink lay within the step.
    pub redrawn: usize,
}

/// Relative error of the analytic gradient of the full joint objective on the
/// two-block micro bundle (batch 2 per term) against central differences over
/// `coords` coordinates drawn uniformly from all of its parameters.
///
/// A draw is redrawn when a relu or pooling kink lies within the step: the
/// central differences at `h` and `h/2` disagree, or the gap between the
/// one-sided slopes does not shrink linearly with the step. Both tests use
/// function values only, never the analytic gradient.
pub fn objective_fd(seed: u64, coords: usize) -> ObjectiveCheck {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = micro_spec();
    let mut config = aggnet::config::TrainConfig::joint(0, seed);
    config.preset = aggnet::config::PresetRef::Inline(spec.clone());
    let bundle = initial_bundle(&config).unwrap();
    let params =
        JointParams { extractors: bundle.extractors, star: bundle.star, head: read_head(&bundle.head).clone() };
    let batch = JointBatch {
        parts: (0..2).map(|_| random_batch(&mut rng, 2, spec.num_classes)).collect(),
        union: random_batch(&mut rng, 2, spec.num_classes),
    };
    let weights = JointWeights::uniform(2, 1.0);
    let op = AggregationOp::Sum;
    let eval = joint_objective(&spec, &params, &batch, &weights, op, true).unwrap();
    let grads = eval.grads.unwrap();
    let total: usize = params.extractors.iter().chain([&params.star, &params.head]).map(|p| p.num_scalars()).sum();

    let f0 = eval.total;
    let mut work = params.clone();
    // one-sided slopes (right, left) at `step`
    let mut slopes = |flat: usize, step: f32| {
        let x = *coordinate(&mut work, flat);
        let (up, down) = (x + step, x - step);
        *coordinate(&mut work, flat) = up;
        let fp = joint_objective(&spec, &work, &batch, &weights, op, false).unwrap().total;
        *coordinate(&mut work, flat) = down;
        let fm = joint_objective(&spec, &work, &batch, &weights, op, false).unwrap().total;
        *coordinate(&mut work, flat) = x;
        let central = (fp - fm) / (up as f64 - down as f64);
        (central, (fp - f0) / (up as f64 - x as f64) - (f0 - fm) / (x as f64 - down as f64))
    };
    let mut analytic = Vec::with_capacity(coords);
    let mut numeric = Vec::with_capacity(coords);
    let mut redrawn = 0;
    while numeric.len() < coords {
        let flat = rng.random_range(0..total);
        let ((full, spread), (half, half_spread)) = (slopes(flat, FD_STEP), slopes(flat, FD_STEP / 2.0));
        let scale = full.abs().max(half.abs());
        // smooth: the central estimates agree and the one-sided spread is linear in the step
        let kink =
            (full - half).abs() > 1e-2 * scale + 1e-4 || (spread - 2.0 * half_spread).abs() > 1e-2 * scale + 1e-3;
        if kink {
            redrawn += 1;
            continue;
        }
        numeric.push(full);
        analytic.push(coordinate_value(&grads, flat) as f64);
    }
    ObjectiveCheck { error: relative_error(&analytic, &numeric, FD_FLOOR), coordinates: coords, redrawn }
}
