//! Joint aggregation-regularised training, the independent-training baseline,
//! and evaluation.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aggregation::{aggregation_loss_grad, AggregationOp};
use crate::config::{Mode, TrainConfig};
use crate::data::{augment_hflip, union_all, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::model::{
    build_bundle, forward, init_head, predict, read_head, record_forward, share, write_head, Bundle, Model, ModelSpec,
    SharedHead,
};
use crate::params::{ParamSet, Role};
use crate::tensor::{Graph, Tensor};

/// Batch size used for evaluation passes.
const EVAL_BATCH: usize = 128;

/// Mix a tuple of stream coordinates into one generator seed.
pub fn stream_seed(parts: &[u64]) -> u64 {
    // splitmix64 finaliser over a running xor
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

// stream ids
const STREAM_SPLIT: u64 = 1;
const STREAM_ORDER: u64 = 2;
const STREAM_AUGMENT: u64 = 3;
const STREAM_INIT: u64 = 4;

/// Endless reshuffled pass over `0..len`.
struct Sampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(len: usize, seed: u64) -> Self {
        let mut s = Sampler { order: (0..len).collect(), pos: 0, rng: ChaCha8Rng::seed_from_u64(seed) };
        s.order.shuffle(&mut s.rng);
        s
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// One labelled batch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

/// One optimisation step's inputs: a batch per dataset plus a union batch.
#[derive(Clone, Debug)]
pub struct JointBatch {
    pub parts: Vec<Batch>,
    pub union: Batch,
}

/// Term weights of the joint objective.
#[derive(Clone, Debug)]
pub struct JointWeights {
    /// `n + 1` task-loss weights: dataset-specific terms, then the union term.
    pub task: Vec<f64>,
    pub lambda_agg: f64,
}

impl JointWeights {
    pub fn uniform(n: usize, lambda_agg: f64) -> Self {
        JointWeights { task: vec![1.0; n + 1], lambda_agg }
    }
}

/// Parameters of the joint objective.
#[derive(Clone, Debug)]
pub struct JointParams {
    pub extractors: Vec<ParamSet>,
    pub star: ParamSet,
    pub head: ParamSet,
}

/// Value of `J = sum_i L_Ti + L_T* + lambda * L_agg`, its parts and gradients.
#[derive(Clone, Debug)]
pub struct ObjectiveEval {
    pub total: f64,
    /// Unweighted task losses, dataset-specific first, union last.
    pub task: Vec<f64>,
    pub agg: f64,
    /// Correct predictions per task term.
    pub correct: Vec<usize>,
    pub grads: Option<JointParams>,
}

fn scaled(mut p: ParamSet, w: f64) -> ParamSet {
    if w != 1.0 {
        for (_, e) in p.iter_mut() {
            e.tensor.data_mut().iter_mut().for_each(|v| *v = (*v as f64 * w) as f32);
        }
    }
    p
}

fn add_scaled(acc: &mut ParamSet, g: &ParamSet, w: f64) -> Result<()> {
    acc.check_compatible(g)?;
    for ((_, a), (_, b)) in acc.iter_mut().zip(g.iter()) {
        for (x, &y) in a.tensor.data_mut().iter_mut().zip(b.tensor.data()) {
            *x += (w * y as f64) as f32;
        }
    }
    Ok(())
}

fn count_correct(logits: &Tensor, labels: &[usize]) -> Result<usize> {
    Ok(predict(logits)?.iter().zip(labels).filter(|(p, l)| p == l).count())
}

/// Gradients of one task term: extractor, then head.
type TermGrads = Option<(ParamSet, ParamSet)>;

/// Loss, correct count and (optionally) gradients of one task term.
fn task_term(
    spec: &ModelSpec,
    extractor: &ParamSet,
    head: &ParamSet,
    batch: &Batch,
    weight: f64,
    with_grad: bool,
) -> Result<(f64, usize, TermGrads)> {
    let record = with_grad && weight != 0.0;
    let mut graph = if record { Graph::new() } else { Graph::inference() };
    let rec = record_forward(&mut graph, spec, extractor, head, batch.images.clone())?;
    let loss = graph.softmax_cross_entropy(rec.logits, &batch.labels)?;
    let value = graph.scalar(loss).expect("loss is a scalar node");
    let correct = count_correct(graph.value(rec.logits), &batch.labels)?;
    let grads = if !with_grad {
        None
    } else if record {
        let g = graph.backward(loss)?;
        Some((scaled(rec.extractor.gradients(&g, extractor), weight), scaled(rec.head.gradients(&g, head), weight)))
    } else {
        Some((extractor.zeros_like(Role::Derived), head.zeros_like(Role::Derived)))
    };
    Ok((value, correct, grads))
}

/// Evaluate the joint objective on one step's batches. Head gradients from the
/// `n + 1` task terms are accumulated in term order.
pub fn joint_objective(
    spec: &ModelSpec,
    params: &JointParams,
    batch: &JointBatch,
    weights: &JointWeights,
    op: AggregationOp,
    with_grad: bool,
) -> Result<ObjectiveEval> {
    let n = params.extractors.len();
    if batch.parts.len() != n || weights.task.len() != n + 1 {
        return Err(Error::config(format!(
            "{} extractors, {} batches, {} task weights",
            n,
            batch.parts.len(),
            weights.task.len()
        )));
    }
    let mut task = Vec::with_capacity(n + 1);
    let mut correct = Vec::with_capacity(n + 1);
    let mut ext_grads = Vec::with_capacity(n);
    let mut head_grad = params.head.zeros_like(Role::Derived);
    let mut total = 0.0;
    for (i, (ex, b)) in params.extractors.iter().zip(&batch.parts).enumerate() {
        let (loss, c, g) = task_term(spec, ex, &params.head, b, weights.task[i], with_grad)?;
        total += weights.task[i] * loss;
        task.push(loss);
        correct.push(c);
        if let Some((ge, gh)) = g {
            ext_grads.push(ge);
            head_grad.accumulate(&gh)?;
        }
    }
    let (loss, c, g) = task_term(spec, &params.star, &params.head, &batch.union, weights.task[n], with_grad)?;
    total += weights.task[n] * loss;
    task.push(loss);
    correct.push(c);

    let parts: Vec<&ParamSet> = params.extractors.iter().collect();
    let agg = aggregation_loss_grad(&params.star, &parts, op)?;
    total += weights.lambda_agg * agg.loss;
    if !total.is_finite() {
        return Err(Error::numerics(format!("objective is not finite (task {task:?}, agg {})", agg.loss)));
    }

    let grads = match g {
        Some((mut star_grad, gh)) if with_grad => {
            head_grad.accumulate(&gh)?;
            add_scaled(&mut star_grad, &agg.star, weights.lambda_agg)?;
            for (ge, ga) in ext_grads.iter_mut().zip(&agg.parts) {
                add_scaled(ge, ga, weights.lambda_agg)?;
            }
            Some(JointParams { extractors: ext_grads, star: star_grad, head: head_grad })
        }
        _ => None,
    };
    Ok(ObjectiveEval { total, task, agg: agg.loss, correct, grads })
}

/// Per-model metrics for one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelMetrics {
    pub model: String,
    pub train_accuracy: f64,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    /// 1-based.
    pub epoch: usize,
    pub models: Vec<ModelMetrics>,
    /// Epoch means over optimisation steps.
    pub loss_task: f64,
    pub loss_agg: f64,
    pub loss_total: f64,
    /// Aggregation loss after the epoch's last update.
    pub loss_agg_end: f64,
    /// Sum of validation task losses plus `lambda * loss_agg_end`.
    pub val_total: f64,
}

/// How heads are attached to the trained extractors.
#[derive(Clone, Debug)]
pub enum Heads {
    /// One head shared by every model (joint training).
    Shared(SharedHead),
    /// Independent heads (baseline).
    PerModel { extractors: Vec<SharedHead>, star: SharedHead },
}

#[derive(Clone, Debug)]
pub struct TrainedBundle {
    pub spec: Arc<ModelSpec>,
    pub config: TrainConfig,
    pub extractors: Vec<ParamSet>,
    pub star: ParamSet,
    pub heads: Heads,
    pub history: Vec<MetricsRecord>,
    /// `(J, L_agg)` at the first optimisation step, before any update.
    pub initial: Option<(f64, f64)>,
    /// Which of `N_1..N_n, N*` the run actually trained.
    pub trained: Vec<bool>,
}

impl TrainedBundle {
    pub fn head_for(&self, i: usize) -> SharedHead {
        match &self.heads {
            Heads::Shared(h) => h.clone(),
            Heads::PerModel { extractors, .. } => extractors[i].clone(),
        }
    }

    pub fn star_head(&self) -> SharedHead {
        match &self.heads {
            Heads::Shared(h) => h.clone(),
            Heads::PerModel { star, .. } => star.clone(),
        }
    }

    /// `N_i`, 0-based.
    pub fn model(&self, i: usize) -> Model {
        Model::new(self.spec.clone(), self.extractors[i].clone(), self.head_for(i))
    }

    pub fn star_model(&self) -> Model {
        Model::new(self.spec.clone(), self.star.clone(), self.star_head())
    }
}

pub fn model_name(i: usize) -> String {
    format!("N{}", i + 1)
}

pub const STAR_NAME: &str = "Nstar";

fn check_datasets(spec: &ModelSpec, datasets: &[LabeledDataset], n: usize) -> Result<()> {
    if datasets.len() != n {
        return Err(Error::data(format!("{} datasets for n = {n}", datasets.len())));
    }
    for d in datasets {
        if d.num_classes != spec.num_classes {
            return Err(Error::data(format!(
                "dataset `{}` has {} classes, model has {}",
                d.name, d.num_classes, spec.num_classes
            )));
        }
        if d.image_shape() != spec.input_shape {
            return Err(Error::data(format!(
                "dataset `{}` images are {:?}, model expects {:?}",
                d.name,
                d.image_shape(),
                spec.input_shape
            )));
        }
        if d.len() < 2 {
            return Err(Error::data(format!("dataset `{}` is too small to train on", d.name)));
        }
    }
    Ok(())
}

/// Train/validation splits of each dataset plus the union of the training parts.
struct Prepared {
    train: Vec<LabeledDataset>,
    val: Vec<LabeledDataset>,
    union_train: LabeledDataset,
    union_val: LabeledDataset,
}

fn prepare(config: &TrainConfig, datasets: &[LabeledDataset]) -> Result<Prepared> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, d) in datasets.iter().enumerate() {
        let test_placeholder = LabeledDataset::empty_like(d);
        let split = Split::new(d, test_placeholder, stream_seed(&[config.seed, STREAM_SPLIT, i as u64]))?;
        train.push(split.train);
        val.push(split.val);
    }
    let union_train = union_all(&train)?;
    let union_val = union_all(&val)?;
    Ok(Prepared { train, val, union_train, union_val })
}

fn draw(ds: &LabeledDataset, idx: &[usize], augment: Option<u64>) -> Result<Batch> {
    let (images, labels) = ds.gather(idx);
    let images = match augment {
        Some(seed) => augment_hflip(&images, &mut ChaCha8Rng::seed_from_u64(seed))?,
        None => images,
    };
    Ok(Batch { images, labels })
}

/// Accuracy and mean loss of one extractor + head on a dataset.
pub fn evaluate_params(
    spec: &ModelSpec,
    extractor: &ParamSet,
    head: &ParamSet,
    dataset: &LabeledDataset,
) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::data(format!("cannot evaluate on empty dataset `{}`", dataset.name)));
    }
    let mut correct = 0usize;
    let mut loss = 0.0f64;
    let all: Vec<usize> = (0..dataset.len()).collect();
    for chunk in all.chunks(EVAL_BATCH) {
        let (images, labels) = dataset.gather(chunk);
        let logits = forward(spec, extractor, head, images)?;
        correct += count_correct(&logits, &labels)?;
        let (l, _) = crate::tensor::kernels::softmax_cross_entropy_forward(&logits, &labels)?;
        loss += l * chunk.len() as f64;
    }
    Ok((correct as f64 / dataset.len() as f64, loss / dataset.len() as f64))
}

/// Fraction of `dataset` a classifier labels correctly. `logits_of` maps a batch
/// of images to logits.
pub fn evaluate_with<F>(dataset: &LabeledDataset, mut logits_of: F) -> Result<f64>
where
    F: FnMut(Tensor) -> Result<Tensor>,
{
    if dataset.is_empty() {
        return Err(Error::data(format!("cannot evaluate on empty dataset `{}`", dataset.name)));
    }
    let all: Vec<usize> = (0..dataset.len()).collect();
    let mut correct = 0usize;
    for chunk in all.chunks(EVAL_BATCH) {
        let (images, labels) = dataset.gather(chunk);
        correct += count_correct(&logits_of(images)?, &labels)?;
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Test accuracy in `[0, 1]`; no augmentation.
pub fn evaluate(model: &Model, dataset: &LabeledDataset) -> Result<f64> {
    let head = read_head(&model.head);
    evaluate_with(dataset, |x| forward(&model.spec, &model.extractor, &head, x))
}

/// Running sums over an epoch.
#[derive(Default)]
struct EpochAccum {
    steps: usize,
    task: Vec<f64>,
    correct: Vec<usize>,
    seen: Vec<usize>,
    agg: f64,
    total: f64,
}

/// Jointly optimise `sum_i L_Ti + L_T* + lambda * L_agg` over all extractors
/// and the shared head. `datasets` are the training sets `D_1..D_n`; 10% of
/// each is held out for validation.
pub fn joint_train(config: &TrainConfig, datasets: &[LabeledDataset]) -> Result<TrainedBundle> {
    config.validate()?;
    if config.mode != Mode::Joint {
        return Err(Error::config(format!("joint_train called with mode {:?}", config.mode)));
    }
    let spec = config.preset.resolve()?;
    check_datasets(&spec, datasets, config.n)?;
    let prep = prepare(config, datasets)?;
    let bundle = initial_bundle(config)?;
    let n = config.n;
    let mut params =
        JointParams { extractors: bundle.extractors, star: bundle.star, head: read_head(&bundle.head).clone() };
    let weights = JointWeights::uniform(n, config.lambda_agg);
    let lr = config.lr as f32;
    let bs = config.batch_size;
    let steps_per_epoch = prep.train.iter().map(|d| d.len()).max().unwrap_or(0).div_ceil(bs);

    let mut samplers: Vec<Sampler> = prep
        .train
        .iter()
        .enumerate()
        .map(|(i, d)| Sampler::new(d.len(), stream_seed(&[config.seed, STREAM_ORDER, i as u64])))
        .collect();
    let mut union_sampler = Sampler::new(prep.union_train.len(), stream_seed(&[config.seed, STREAM_ORDER, n as u64]));

    let mut history = Vec::with_capacity(config.epochs);
    let mut initial = None;
    let mut global_step = 0u64;
    for epoch in 0..config.epochs {
        let mut acc =
            EpochAccum { task: vec![0.0; n + 1], correct: vec![0; n + 1], seen: vec![0; n + 1], ..Default::default() };
        for step in 0..steps_per_epoch {
            let aug = |term: usize| {
                config
                    .hflip
                    .then(|| stream_seed(&[config.seed, STREAM_AUGMENT, epoch as u64, step as u64, term as u64]))
            };
            let parts = prep
                .train
                .iter()
                .zip(samplers.iter_mut())
                .enumerate()
                .map(|(i, (d, s))| draw(d, &s.next_batch(bs.min(d.len())), aug(i)))
                .collect::<Result<Vec<_>>>()?;
            let union = draw(&prep.union_train, &union_sampler.next_batch(bs.min(prep.union_train.len())), aug(n))?;
            let batch = JointBatch { parts, union };
            let eval = joint_objective(&spec, &params, &batch, &weights, config.aggregation, true)
                .map_err(|e| e.at_step(global_step))?;
            if initial.is_none() {
                initial = Some((eval.total, eval.agg));
            }
            let grads = eval.grads.as_ref().expect("requested gradients");
            for (p, g) in params.extractors.iter_mut().zip(&grads.extractors) {
                p.sgd_step(g, lr)?;
            }
            params.star.sgd_step(&grads.star, lr)?;
            params.head.sgd_step(&grads.head, lr)?;

            acc.steps += 1;
            acc.agg += eval.agg;
            acc.total += eval.total;
            for t in 0..=n {
                let m = if t < n { batch.parts[t].labels.len() } else { batch.union.labels.len() };
                acc.task[t] += eval.task[t];
                acc.correct[t] += eval.correct[t];
                acc.seen[t] += m;
            }
            global_step += 1;
        }

        let parts: Vec<&ParamSet> = params.extractors.iter().collect();
        let agg_end = aggregation_loss_grad(&params.star, &parts, config.aggregation)?.loss;
        let steps = acc.steps.max(1) as f64;
        let mut models = Vec::with_capacity(n + 1);
        let mut val_total = config.lambda_agg * agg_end;
        for t in 0..=n {
            let (name, ex, val) = if t < n {
                (model_name(t), &params.extractors[t], &prep.val[t])
            } else {
                (STAR_NAME.to_string(), &params.star, &prep.union_val)
            };
            let (val_accuracy, val_loss) =
                if val.is_empty() { (f64::NAN, f64::NAN) } else { evaluate_params(&spec, ex, &params.head, val)? };
            val_total += val_loss;
            models.push(ModelMetrics {
                model: name,
                train_accuracy: acc.correct[t] as f64 / acc.seen[t].max(1) as f64,
                train_loss: acc.task[t] / steps,
                val_accuracy,
                val_loss,
            });
        }
        history.push(MetricsRecord {
            epoch: epoch + 1,
            models,
            loss_task: acc.task.iter().sum::<f64>() / steps,
            loss_agg: acc.agg / steps,
            loss_total: acc.total / steps,
            loss_agg_end: agg_end,
            val_total,
        });
    }

    let head = share(params.head);
    Ok(TrainedBundle {
        spec: Arc::new(spec),
        config: config.clone(),
        extractors: params.extractors,
        star: params.star,
        heads: Heads::Shared(head),
        history,
        initial,
        trained: vec![true; n + 1],
    })
}

/// The parameters a run with `config` starts from.
pub fn initial_bundle(config: &TrainConfig) -> Result<Bundle> {
    build_bundle(&config.preset.resolve()?, config.n, stream_seed(&[config.seed, STREAM_INIT]))
}

/// Cross-entropy training of a single extractor + head on one dataset.
/// Returns per-epoch `(train_acc, train_loss, val_acc, val_loss)`.
fn train_single(
    spec: &ModelSpec,
    extractor: &mut ParamSet,
    head: &mut ParamSet,
    train: &LabeledDataset,
    val: &LabeledDataset,
    config: &TrainConfig,
    term: u64,
) -> Result<Vec<(f64, f64, f64, f64)>> {
    let bs = config.batch_size.min(train.len());
    let steps = train.len().div_ceil(bs);
    let mut sampler = Sampler::new(train.len(), stream_seed(&[config.seed, STREAM_ORDER, term]));
    let lr = config.lr as f32;
    let mut out = Vec::with_capacity(config.epochs);
    let mut global_step = 0u64;
    for epoch in 0..config.epochs {
        let (mut correct, mut seen, mut loss_sum) = (0usize, 0usize, 0.0f64);
        for step in 0..steps {
            let aug =
                config.hflip.then(|| stream_seed(&[config.seed, STREAM_AUGMENT, epoch as u64, step as u64, term]));
            let batch = draw(train, &sampler.next_batch(bs), aug)?;
            let (loss, c, g) =
                task_term(spec, extractor, head, &batch, 1.0, true).map_err(|e| e.at_step(global_step))?;
            let (ge, gh) = g.expect("requested gradients");
            extractor.sgd_step(&ge, lr)?;
            head.sgd_step(&gh, lr)?;
            correct += c;
            seen += batch.labels.len();
            loss_sum += loss;
            global_step += 1;
        }
        let (va, vl) = if val.is_empty() { (f64::NAN, f64::NAN) } else { evaluate_params(spec, extractor, head, val)? };
        out.push((correct as f64 / seen.max(1) as f64, loss_sum / steps.max(1) as f64, va, vl));
    }
    Ok(out)
}

/// Independent training: no shared head and no aggregation term.
/// `baseline-separate` trains every `N_i` on `D_i`; `baseline-star` trains
/// only `N*` on the union. Untrained models keep their initial weights.
pub fn baseline_train(config: &TrainConfig, datasets: &[LabeledDataset]) -> Result<TrainedBundle> {
    config.validate()?;
    if config.mode == Mode::Joint {
        return Err(Error::config("baseline_train needs a baseline mode"));
    }
    let spec = config.preset.resolve()?;
    check_datasets(&spec, datasets, config.n)?;
    let prep = prepare(config, datasets)?;
    let n = config.n;
    let bundle = initial_bundle(config)?;
    // Independent heads come from their own stream so N_i's head differs from N*'s.
    let mut head_rng = ChaCha8Rng::seed_from_u64(stream_seed(&[config.seed, STREAM_INIT, 1]));
    let mut heads: Vec<ParamSet> = (0..=n).map(|_| init_head(&spec, &mut head_rng)).collect();
    let mut extractors = bundle.extractors;
    let mut star = bundle.star;

    let mut per_model: Vec<Vec<(f64, f64, f64, f64)>> = vec![Vec::new(); n + 1];
    if config.mode == Mode::BaselineSeparate {
        for i in 0..n {
            per_model[i] =
                train_single(&spec, &mut extractors[i], &mut heads[i], &prep.train[i], &prep.val[i], config, i as u64)?;
        }
    } else {
        per_model[n] =
            train_single(&spec, &mut star, &mut heads[n], &prep.union_train, &prep.union_val, config, n as u64)?;
    }
    let trained: Vec<bool> = (0..=n).map(|t| (t < n) == (config.mode == Mode::BaselineSeparate)).collect();

    let history = (0..config.epochs)
        .map(|e| {
            let models: Vec<ModelMetrics> = (0..=n)
                .filter(|&t| trained[t])
                .map(|t| {
                    let (ta, tl, va, vl) = per_model[t][e];
                    let model = if t < n { model_name(t) } else { STAR_NAME.to_string() };
                    ModelMetrics { model, train_accuracy: ta, train_loss: tl, val_accuracy: va, val_loss: vl }
                })
                .collect();
            let loss_task = models.iter().map(|m| m.train_loss).sum();
            let val_total = models.iter().map(|m| m.val_loss).sum();
            MetricsRecord {
                epoch: e + 1,
                models,
                loss_task,
                loss_agg: 0.0,
                loss_total: loss_task,
                loss_agg_end: 0.0,
                val_total,
            }
        })
        .collect();

    let star_head = share(heads.pop().expect("n + 1 heads"));
    Ok(TrainedBundle {
        spec: Arc::new(spec),
        config: config.clone(),
        extractors,
        star,
        heads: Heads::PerModel { extractors: heads.into_iter().map(share).collect(), star: star_head },
        history,
        initial: None,
        trained,
    })
}

/// Dispatch on `config.mode`.
pub fn train(config: &TrainConfig, datasets: &[LabeledDataset]) -> Result<TrainedBundle> {
    match config.mode {
        Mode::Joint => joint_train(config, datasets),
        Mode::BaselineSeparate | Mode::BaselineStar => baseline_train(config, datasets),
    }
}

/// Overwrite a shared head in place (all models holding it observe the change).
pub fn replace_head(head: &SharedHead, value: ParamSet) {
    *write_head(head) = value;
}
