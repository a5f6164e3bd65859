//! Parameter algebra over extractor weights: the combine operator, its
//! inverse, the aggregation regulariser and test-time model composition.
//!
//! Only aggregable entries (convolution kernels and biases) take part.
//! Normalisation parameters are carried over from a donor extractor.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelSpec, SharedHead};
use crate::params::{ParamSet, Role};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationOp {
    /// Elementwise sum; inverted by subtraction.
    #[default]
    Sum,
    /// Elementwise mean; inverting it needs the operand count.
    Mean,
}

impl AggregationOp {
    /// Weight each of `n` parts receives in the combine.
    pub fn part_coefficient(self, n: usize) -> f64 {
        match self {
            AggregationOp::Sum => 1.0,
            AggregationOp::Mean => 1.0 / n as f64,
        }
    }
}

/// Aggregable entries produced by combining `count` extractors.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub params: ParamSet,
    pub count: usize,
    /// Keys present in the operands that were not aggregated.
    pub skipped: Vec<String>,
}

impl Aggregate {
    /// A single extractor viewed as a one-operand aggregate.
    pub fn leaf(part: &ParamSet) -> Self {
        Aggregate {
            params: relabel(part.aggregable_only()),
            count: 1,
            skipped: part.iter().filter(|(_, e)| !e.aggregable).map(|(k, _)| k.to_string()).collect(),
        }
    }
}

fn relabel(mut p: ParamSet) -> ParamSet {
    p.set_role(Role::Composed);
    p
}

fn check_parts(parts: &[&ParamSet]) -> Result<()> {
    let first = parts.first().ok_or_else(|| Error::config("cannot aggregate an empty list"))?;
    for p in parts {
        if !p.role().is_extractor() {
            return Err(Error::config(format!("only extractor sets can be aggregated, got {:?}", p.role())));
        }
        first.check_compatible(p)?;
    }
    Ok(())
}

/// Combine the aggregable entries of `parts`, folding left to right.
pub fn aggregate(parts: &[&ParamSet], op: AggregationOp) -> Result<Aggregate> {
    check_parts(parts)?;
    let mut acc = Aggregate::leaf(parts[0]);
    for p in &parts[1..] {
        for ((_, a), (_, b)) in acc.params.iter_mut().zip(p.iter().filter(|(_, e)| e.aggregable)) {
            a.tensor.add_assign(&b.tensor)?;
        }
    }
    if op == AggregationOp::Mean && parts.len() > 1 {
        let k = parts.len() as f32;
        for (_, e) in acc.params.iter_mut() {
            e.tensor.data_mut().iter_mut().for_each(|v| *v /= k);
        }
    }
    acc.count = parts.len();
    Ok(acc)
}

fn zip_aggregable(a: &ParamSet, b: &ParamSet, f: impl Fn(f32, f32) -> f32) -> Result<ParamSet> {
    let mut out = relabel(a.aggregable_only());
    let bs = b.aggregable_only();
    out.check_compatible(&bs)?;
    for ((_, x), (_, y)) in out.iter_mut().zip(bs.iter()) {
        for (u, &v) in x.tensor.data_mut().iter_mut().zip(y.tensor.data()) {
            *u = f(*u, v);
        }
    }
    Ok(out)
}

/// Undo `part`'s contribution to `whole`. Only the sum has a count-free inverse;
/// use [`remove`] for the mean.
pub fn subtract(whole: &ParamSet, part: &ParamSet, op: AggregationOp) -> Result<ParamSet> {
    match op {
        AggregationOp::Sum => zip_aggregable(whole, part, |w, p| w - p),
        AggregationOp::Mean => Err(Error::config("the mean has no inverse without the operand count")),
    }
}

/// `a ⊕ b` for aggregates of arbitrary operand counts.
pub fn merge(a: &Aggregate, b: &Aggregate, op: AggregationOp) -> Result<Aggregate> {
    let count = a.count + b.count;
    let params = match op {
        AggregationOp::Sum => zip_aggregable(&a.params, &b.params, |x, y| x + y)?,
        AggregationOp::Mean => {
            let (ca, cb, c) = (a.count as f64, b.count as f64, count as f64);
            zip_aggregable(&a.params, &b.params, |x, y| ((ca * x as f64 + cb * y as f64) / c) as f32)?
        }
    };
    Ok(Aggregate { params, count, skipped: union_sorted(&a.skipped, &b.skipped) })
}

/// `a ⊖ b`: remove `b`'s operands from `a`.
pub fn remove(a: &Aggregate, b: &Aggregate, op: AggregationOp) -> Result<Aggregate> {
    let params = match op {
        AggregationOp::Sum => zip_aggregable(&a.params, &b.params, |x, y| x - y)?,
        AggregationOp::Mean => {
            if a.count <= b.count {
                return Err(Error::config(format!("cannot remove {} operands from a mean over {}", b.count, a.count)));
            }
            let (ca, cb) = (a.count as f64, b.count as f64);
            zip_aggregable(&a.params, &b.params, |x, y| ((ca * x as f64 - cb * y as f64) / (ca - cb)) as f32)?
        }
    };
    let count = a.count.saturating_sub(b.count);
    Ok(Aggregate { params, count, skipped: union_sorted(&a.skipped, &b.skipped) })
}

fn union_sorted(a: &[String], b: &[String]) -> Vec<String> {
    let mut out = a.to_vec();
    for k in b {
        if !out.contains(k) {
            out.push(k.clone());
        }
    }
    out
}

fn check_star(star: &ParamSet, parts: &[&ParamSet]) -> Result<()> {
    if parts.is_empty() {
        return Err(Error::config("aggregation loss needs at least one part"));
    }
    let s = star.aggregable_only();
    for p in parts {
        s.check_compatible(&p.aggregable_only())?;
    }
    Ok(())
}

/// The combine exactly as [`aggregate`] rounds it, so a star built by
/// `aggregate` has zero loss.
fn combine_f32(tensors: &[&[f32]], op: AggregationOp) -> Vec<f32> {
    let mut acc = tensors[0].to_vec();
    for t in &tensors[1..] {
        acc.iter_mut().zip(*t).for_each(|(a, &b)| *a += b);
    }
    if op == AggregationOp::Mean && tensors.len() > 1 {
        let k = tensors.len() as f32;
        acc.iter_mut().for_each(|v| *v /= k);
    }
    acc
}

/// Sum over aggregable layers of `||W* - combine(W_1..W_n)||_F^2`, in `f64`.
pub fn aggregation_loss(star: &ParamSet, parts: &[&ParamSet], op: AggregationOp) -> Result<f64> {
    Ok(aggregation_loss_grad(star, parts, op)?.loss)
}

/// Value and gradients of the aggregation loss.
pub struct AggregationGrad {
    pub loss: f64,
    /// Same layout as `star`; zero on non-aggregable entries.
    pub star: ParamSet,
    /// One per part, same layout as the part.
    pub parts: Vec<ParamSet>,
}

pub fn aggregation_loss_grad(star: &ParamSet, parts: &[&ParamSet], op: AggregationOp) -> Result<AggregationGrad> {
    check_star(star, parts)?;
    let c = op.part_coefficient(parts.len());
    let mut loss = 0.0f64;
    let mut star_grad = star.zeros_like(Role::Derived);
    let mut part_grads: Vec<ParamSet> = parts.iter().map(|p| p.zeros_like(Role::Derived)).collect();
    let keys: Vec<String> = star.aggregable_keys().map(str::to_string).collect();
    for key in &keys {
        let w = star.tensor(key)?.data();
        let tensors: Vec<&[f32]> = parts.iter().map(|p| p.tensor(key).map(|t| t.data())).collect::<Result<_>>()?;
        let combined = combine_f32(&tensors, op);
        let mut residual = Vec::with_capacity(w.len());
        for (&ws, &cw) in w.iter().zip(&combined) {
            let r = ws as f64 - cw as f64;
            loss += r * r;
            residual.push(r);
        }
        let sg = star_grad.get_mut(key).expect("same layout");
        for (g, r) in sg.tensor.data_mut().iter_mut().zip(&residual) {
            *g = (2.0 * r) as f32;
        }
        for pg in &mut part_grads {
            let e = pg.get_mut(key).expect("same layout");
            for (g, r) in e.tensor.data_mut().iter_mut().zip(&residual) {
                *g = (-2.0 * c * r) as f32;
            }
        }
    }
    Ok(AggregationGrad { loss, star: star_grad, parts: part_grads })
}

/// Build a model whose aggregable entries are `combine(parts)`, whose
/// remaining extractor entries come from `donor`, and which uses `head`.
pub fn compose_model(
    spec: Arc<ModelSpec>,
    parts: &[&ParamSet],
    donor: &ParamSet,
    head: SharedHead,
    op: AggregationOp,
) -> Result<Model> {
    let agg = aggregate(parts, op)?;
    Ok(Model::new(spec, with_donor(&agg.params, donor)?, head))
}

/// Overlay aggregable `weights` on a copy of `donor`.
pub fn with_donor(weights: &ParamSet, donor: &ParamSet) -> Result<ParamSet> {
    if !donor.role().is_extractor() {
        return Err(Error::config(format!("donor must be an extractor, got {:?}", donor.role())));
    }
    donor.aggregable_only().check_compatible(weights)?;
    let mut out = donor.clone();
    out.set_role(Role::Composed);
    for (key, entry) in weights.iter() {
        out.get_mut(key).expect("checked compatible").tensor = entry.tensor.clone();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_bundle, ModelSpec};
    use crate::params::{ParamEntry, ParamKind};
    use crate::tensor::Tensor;

    fn set(role: Role, conv: &[f32], scale: &[f32]) -> ParamSet {
        let mut p = ParamSet::new(role);
        p.insert("a", ParamEntry::new(Tensor::new(vec![conv.len()], conv.to_vec()).unwrap(), ParamKind::ConvKernel));
        p.insert("g", ParamEntry::new(Tensor::new(vec![scale.len()], scale.to_vec()).unwrap(), ParamKind::NormScale));
        p
    }

    fn values(p: &ParamSet, key: &str) -> Vec<f32> {
        p.tensor(key).unwrap().data().to_vec()
    }

    #[test]
    fn sum_is_elementwise() {
        let a = set(Role::Extractor(1), &[1.0, 2.0], &[1.0]);
        let b = set(Role::Extractor(2), &[0.5, -2.0], &[3.0]);
        let agg = aggregate(&[&a, &b], AggregationOp::Sum).unwrap();
        assert_eq!(values(&agg.params, "a"), [1.5, 0.0]);
        assert!(agg.params.get("g").is_none());
        assert_eq!(agg.skipped, ["g"]);
        assert_eq!(agg.count, 2);
    }

    #[test]
    fn single_part_is_identity() {
        let a = set(Role::Extractor(1), &[1.0, -7.25], &[1.0]);
        let agg = aggregate(&[&a], AggregationOp::Sum).unwrap();
        assert_eq!(agg.params.tensor("a").unwrap(), a.tensor("a").unwrap());
        let mean = aggregate(&[&a], AggregationOp::Mean).unwrap();
        assert_eq!(mean.params.tensor("a").unwrap(), a.tensor("a").unwrap());
    }

    #[test]
    fn subtracting_itself_gives_zero() {
        let a = set(Role::Extractor(1), &[1.0, -7.25, 3.5], &[1.0]);
        let d = subtract(&a, &a, AggregationOp::Sum).unwrap();
        assert_eq!(values(&d, "a"), [0.0; 3]);
        assert!(d.get("g").is_none());
    }

    #[test]
    fn errors() {
        let a = set(Role::Extractor(1), &[1.0], &[1.0]);
        let wide = set(Role::Extractor(2), &[1.0, 2.0], &[1.0]);
        let head = set(Role::TaskHead, &[1.0], &[1.0]);
        assert!(matches!(aggregate(&[], AggregationOp::Sum), Err(Error::Config(_))));
        assert!(matches!(aggregate(&[&a, &wide], AggregationOp::Sum), Err(Error::Shape(_))));
        assert!(matches!(aggregate(&[&a, &head], AggregationOp::Sum), Err(Error::Config(_))));
        assert!(matches!(subtract(&a, &a, AggregationOp::Mean), Err(Error::Config(_))));
        assert!(matches!(subtract(&a, &wide, AggregationOp::Sum), Err(Error::Shape(_))));
        assert!(matches!(aggregation_loss(&a, &[&wide], AggregationOp::Sum), Err(Error::Shape(_))));
        assert!(matches!(aggregation_loss(&a, &[], AggregationOp::Sum), Err(Error::Config(_))));
    }

    #[test]
    fn loss_hand_value_and_gradient() {
        let star = set(Role::ExtractorStar, &[3.0], &[5.0]);
        let p = set(Role::Extractor(1), &[1.0], &[0.0]);
        let q = set(Role::Extractor(2), &[1.0], &[0.0]);
        let g = aggregation_loss_grad(&star, &[&p, &q], AggregationOp::Sum).unwrap();
        assert_eq!(g.loss, 1.0);
        assert_eq!(values(&g.star, "a"), [2.0]);
        assert_eq!(values(&g.star, "g"), [0.0]);
        assert_eq!(values(&g.parts[0], "a"), [-2.0]);
        assert_eq!(values(&g.parts[1], "a"), [-2.0]);
    }

    #[test]
    fn loss_is_zero_on_the_constraint() {
        let p = set(Role::Extractor(1), &[0.1, 0.7, -3.3], &[0.0]);
        let q = set(Role::Extractor(2), &[0.2, 1e-4, 9.1], &[0.0]);
        for op in [AggregationOp::Sum, AggregationOp::Mean] {
            let mut star = with_donor(&aggregate(&[&p, &q], op).unwrap().params, &p).unwrap();
            star.set_role(Role::ExtractorStar);
            assert_eq!(aggregation_loss(&star, &[&p, &q], op).unwrap(), 0.0);
        }
    }

    #[test]
    fn mean_merge_and_remove_track_counts() {
        let a = set(Role::Extractor(1), &[2.0], &[0.0]);
        let b = set(Role::Extractor(2), &[4.0], &[0.0]);
        let c = set(Role::Extractor(3), &[9.0], &[0.0]);
        let op = AggregationOp::Mean;
        let ab = merge(&Aggregate::leaf(&a), &Aggregate::leaf(&b), op).unwrap();
        let abc = merge(&ab, &Aggregate::leaf(&c), op).unwrap();
        assert_eq!(values(&abc.params, "a"), [5.0]);
        assert_eq!(abc.count, 3);
        let ac = remove(&abc, &Aggregate::leaf(&b), op).unwrap();
        assert_eq!(values(&ac.params, "a"), [5.5]);
        assert_eq!(ac.count, 2);
        assert!(matches!(remove(&ab, &ab, op), Err(Error::Config(_))));
    }

    #[test]
    fn identity_composition_reproduces_the_extractor() {
        let bundle = build_bundle(&ModelSpec::vgg_lite(), 2, 3).unwrap();
        let m = compose_model(
            bundle.spec.clone(),
            &[&bundle.extractors[0]],
            &bundle.extractors[0],
            bundle.head.clone(),
            AggregationOp::Sum,
        )
        .unwrap();
        for ((ka, ea), (kb, eb)) in m.extractor.iter().zip(bundle.extractors[0].iter()) {
            assert_eq!(ka, kb);
            assert_eq!(ea, eb);
        }
        assert_eq!(m.extractor.role(), &Role::Composed);
    }

    #[test]
    fn donor_supplies_norm_parameters() {
        let a = set(Role::Extractor(1), &[1.0], &[0.25]);
        let b = set(Role::Extractor(2), &[2.0], &[0.5]);
        let star = set(Role::ExtractorStar, &[0.0], &[0.75]);
        let out = with_donor(&aggregate(&[&a, &b], AggregationOp::Sum).unwrap().params, &star).unwrap();
        assert_eq!(values(&out, "a"), [3.0]);
        assert_eq!(values(&out, "g"), [0.75]);
        let head = set(Role::TaskHead, &[0.0], &[0.0]);
        assert!(matches!(with_donor(&out.aggregable_only(), &head), Err(Error::Config(_))));
    }
}
