//! Finite-difference cases for every differentiable op, shared by the
//! autodiff tests and the acceptance run.

use aggnet::tensor::{Graph, NodeId};
use aggnet::{Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

pub const TRIALS: usize = 20;

pub struct OpCase {
    pub name: &'static str,
    pub seed: u64,
    pub tolerance: f64,
    pub trial: fn(&mut ChaCha8Rng) -> Result<FdOutcome>,
}

impl OpCase {
    /// Worst error over [`TRIALS`] random shapes.
    pub fn run(&self) -> Result<FdOutcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut all = FdOutcome::default();
        for _ in 0..TRIALS {
            all = all.merge((self.trial)(&mut rng)?);
        }
        Ok(all)
    }
}

/// Single ops first, then a small network chaining all of them.
pub fn cases() -> Vec<OpCase> {
    vec![
        OpCase { name: "conv2d", seed: 10, tolerance: FD_TOLERANCE, trial: conv2d },
        OpCase { name: "group_norm", seed: 11, tolerance: FD_TOLERANCE, trial: group_norm },
        OpCase { name: "relu", seed: 12, tolerance: FD_TOLERANCE, trial: relu },
        OpCase { name: "max_pool2d", seed: 13, tolerance: FD_TOLERANCE, trial: max_pool2d },
        OpCase { name: "linear", seed: 14, tolerance: FD_TOLERANCE, trial: linear },
        OpCase { name: "softmax_cross_entropy", seed: 15, tolerance: FD_TOLERANCE, trial: softmax_cross_entropy },
        OpCase { name: "weighted_sum", seed: 16, tolerance: FD_TOLERANCE, trial: weighted_sum },
        OpCase { name: "sum", seed: 17, tolerance: FD_TOLERANCE, trial: sum },
        OpCase { name: "flatten", seed: 18, tolerance: FD_TOLERANCE, trial: flatten },
        OpCase { name: "composed", seed: 19, tolerance: 1e-2, trial: composed_network },
    ]
}

pub fn case(name: &str) -> OpCase {
    cases().into_iter().find(|c| c.name == name).unwrap()
}

fn weighted(g: &mut Graph<'_>, y: NodeId, w: &Tensor) -> Result<NodeId> {
    g.weighted_sum(y, w.clone())
}

fn conv2d(rng: &mut ChaCha8Rng) -> Result<FdOutcome> {
    let (n, c, f) = (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3));
    let k = [1, 3][rng.random_range(0..2)];
    let stride = rng.random_range(1..=2);
    let pad = rng.random_range(0..=1);
    let out = rng.random_range(1..=4);
    let h = (out - 1) * stride + k - 2 * pad;
    let h = if h < 1 { h + stride * 2 } else { h };
    let x = uniform(rng, &[n, c, h, h], -1.0, 1.0);
    let kern = uniform(rng, &[f, c, k, k], -1.0, 1.0);
    let b = uniform(rng, &[f], -1.0, 1.0);
    let ho = (h + 2 * pad - k) / stride + 1;
    let w = uniform(rng, &[n, f, ho, ho], -1.0, 1.0);
    check_gradients(&[x, kern, b], |g, x| {
        let y = g.conv2d(x[0], x[1], x[2], stride, pad)?;
        weighted(g, y, &w)
    })
}

fn group_norm(rng: &mut ChaCha8Rng) -> Result<FdOutcome> {
    let groups = rng.random_range(1..=2);
    let c = groups * rng.random_range(1..=3);
    let (n, h, w) = (rng.random_range(1..=2), rng.random_range(2..=4), rng.random_range(2..=4));
    let x = uniform(rng, &[n, c, h, w], -2.0, 2.0);
    let gamma = uniform(rng, &[c], 0.5, 1.5);
    let beta = uniform(rng, &[c], -0.5, 0.5);
    let wts = uniform(rng, &[n, c, h, w], -1.0, 1.0);
    check_gradients(&[x, gamma, beta], |g, x| {
        let y = g.group_norm(x[0], x[1], x[2], groups, 1e-5)?;
        weighted(g, y, &wts)
    })
}

fn relu(rng: &mut ChaCha8Rng) -> Result<FdOutcome> {
    let shape = [rng.random_range(1..=3), rng.random_range(1..=8)];
    let x = away_from_zero(rng, &shape, 0.05);
    let w = uniform(rng, &shape, -1.0, 1.0);
    check_gradients(&[x], |g, x| {
        let y = g.relu(x[0])?;
        weighted(g, y, &w)
    })
}

fn max_pool2d(rng: &mut ChaCha8Rng) -> Result<FdOutcome> {
    let shape =
        [rng.random_range(1..=2), rng.random_range(1..=2), 2 * rng.random_range(1..=3), 2 * rng.random_range(1..=3)];
    let x = distinct(rng, &shape, 0.01);
    let w = uniform(rng, &[shape[0], shape[1], shape[2] / 2, shape[3] / 2], -1.0, 1.0);
    check_gradients(&[x], |g, x| {
        let y = g.max_pool2d(x[0], 2, 2)?;
        weighted(g, y, &w)
    })
}

fn linear(rng: &mut ChaCha8Rng) -> Result<FdOutcome> {
    let (n, d, k) = (rng.random_range(1..=4), rng.random_range(1..=6), rng.random_range(1..=5));
    let x = uniform(rng, &[n, d], -1.0, 1.0);
    let wt = uniform(rng, &[k, d], -1.0, 1.0);
    let b = uniform(rng, &[k], -1.0, 1.0);
    let w = uniform(rng, &[n, k], -1.0, 1.0);
    check_gradients(&[x, wt, b], |g, x| {
        let y = g.linear(x[0], x[1], x[2])?;
        weighted(g, y, &w)
    })
}

fn softmax_cross_entropy(rng: &mut ChaCha8Rng) -> Result<FdOutcome> {
    let (n, k) = (rng.random_range(1..=4), rng.random_range(2..=6));
    let logits = uniform(rng, &[n, k], -3.0, 3.0);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    check_gradients(&[logits], |g, x| g.softmax_cross_entropy(x[0], &labels))
}

fn weighted_sum(rng: &mut ChaCha8Rng) -> Result<FdOutcome> {
    let shape = [rng.random_range(1..=3), rng.random_range(1..=5)];
    let x = uniform(rng, &shape, -1.0, 1.0);
    let w = uniform(rng, &shape, -1.0, 1.0);
    check_gradients(&[x], |g, x| weighted(g, x[0], &w))
}

fn sum(rng: &mut ChaCha8Rng) -> Result<FdOutcome> {
    let shape = [rng.random_range(1..=3), rng.random_range(1..=5)];
    let x = uniform(rng, &shape, -1.0, 1.0);
    check_gradients(&[x], |g, x| g.sum(x[0]))
}

fn flatten(rng: &mut ChaCha8Rng) -> Result<FdOutcome> {
    let shape = [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3)];
    let x = uniform(rng, &shape, -1.0, 1.0);
    let w = uniform(rng, &[shape[0], shape[1] * shape[2] * shape[3]], -1.0, 1.0);
    check_gradients(&[x], |g, x| {
        let y = g.flatten(x[0])?;
        weighted(g, y, &w)
    })
}

/// Smallest distance of a pre-activation to the relu kink, and smallest gap
/// between the two largest entries of any 2x2 window after relu.
fn kink_margin(pre: &Tensor) -> f32 {
    let relu_gap = pre.data().iter().fold(f32::MAX, |m, v| m.min(v.abs()));
    let s = pre.shape();
    let (h, w) = (s[2], s[3]);
    let mut pool_gap = f32::MAX;
    for plane in pre.data().chunks(h * w) {
        for oy in 0..h / 2 {
            for ox in 0..w / 2 {
                let mut v: Vec<f32> = (0..4).map(|k| plane[(2 * oy + k / 2) * w + 2 * ox + k % 2].max(0.0)).collect();
                v.sort_by(|a, b| b.total_cmp(a));
                if v[0] > 0.0 {
                    pool_gap = pool_gap.min(v[0] - v[1]);
                }
            }
        }
    }
    relu_gap.min(pool_gap)
}

fn composed_network(rng: &mut ChaCha8Rng) -> Result<FdOutcome> {
    // conv -> group norm -> relu -> pool -> flatten -> linear -> loss, with
    // samples whose activations sit near a relu or pooling kink redrawn. Under
    // a single group only the difference of the conv biases reaches the loss,
    // so that gradient is small and f32 noise needs the network-level bound.
    loop {
        let n = rng.random_range(1..=2);
        let x = uniform(rng, &[n, 1, 4, 4], -1.0, 1.0);
        let kern = uniform(rng, &[2, 1, 3, 3], -1.0, 1.0);
        let b = uniform(rng, &[2], -0.1, 0.1);
        let gamma = uniform(rng, &[2], 0.5, 1.5);
        let beta = uniform(rng, &[2], -0.5, 0.5);
        let wt = uniform(rng, &[3, 8], -1.0, 1.0);
        let bl = uniform(rng, &[3], -0.1, 0.1);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let inputs = [x, kern, b, gamma, beta, wt, bl];
        let mut g = Graph::inference();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let y = g.conv2d(ids[0], ids[1], ids[2], 1, 1)?;
        let y = g.group_norm(y, ids[3], ids[4], 1, 1e-5)?;
        if kink_margin(g.value(y)) < 0.05 {
            continue;
        }
        return check_gradients(&inputs, |g, p| {
            let y = g.conv2d(p[0], p[1], p[2], 1, 1)?;
            let y = g.group_norm(y, p[3], p[4], 1, 1e-5)?;
            let y = g.relu(y)?;
            let y = g.max_pool2d(y, 2, 2)?;
            let y = g.flatten(y)?;
            let y = g.linear(y, p[5], p[6])?;
            g.softmax_cross_entropy(y, &labels)
        });
    }
}
