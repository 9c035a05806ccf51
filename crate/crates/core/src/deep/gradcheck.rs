//! Central finite-difference checks of every differentiable operation.

use rand::Rng;

use super::net::{Network, NetworkSpec};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng::{Domain, Stream, StreamFactory};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Pass threshold on the largest relative error.
pub const FD_TOLERANCE: f64 = 1e-4;
/// Floor on the relative-error denominator so that vanishing gradients are
/// compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;

/// Largest relative error between tape and finite-difference gradients
/// over every entry of every input of one operation.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub layer: &'static str,
    pub config: u64,
    pub entries: usize,
    pub max_rel_err: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err < FD_TOLERANCE
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

fn random_tensor(rng: &mut Stream, shape: Vec<usize>, scale: f64) -> Tensor {
    let count: usize = shape.iter().product();
    let data = (0..count).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::new(shape, data).expect("count matches shape")
}

/// Compares tape gradients of `build(leaves)` against central differences
/// in every leaf entry.
pub fn check_op<F>(layer: &'static str, config: u64, leaves: Vec<Tensor>, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = build(&mut tape, &vars)?;
        Ok(tape.value(root).item())
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = build(&mut tape, &vars)?;
    let grads = tape.backward(root)?;

    let mut worst = 0.0f64;
    let mut entries = 0;
    let mut probe = leaves.clone();
    for (k, &v) in vars.iter().enumerate() {
        let analytic = grads.get(v, &tape);
        for i in 0..leaves[k].len() {
            let base = leaves[k].data()[i];
            probe[k].data_mut()[i] = base + FD_STEP;
            let up = eval(&probe)?;
            probe[k].data_mut()[i] = base - FD_STEP;
            let down = eval(&probe)?;
            probe[k].data_mut()[i] = base;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic.data()[i], numeric));
            entries += 1;
        }
    }
    Ok(GradCheck {
        layer,
        config,
        entries,
        max_rel_err: worst,
    })
}

/// Runs every layer check on shapes drawn from configuration `config`.
pub fn check_layers(config: u64) -> Result<Vec<GradCheck>> {
    let mut rng = StreamFactory::new(config).stream(Domain::Oracle, 0xFD, config);
    let b = rng.gen_range(2..=3);
    let ci = rng.gen_range(1..=3);
    let co = rng.gen_range(1..=4);
    let l = rng.gen_range(4..=9);
    let mut out = Vec::new();

    // projecting on a random direction makes every output entry matter
    let proj = |rng: &mut Stream, n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };

    let x = random_tensor(&mut rng, vec![b, ci, l], 1.0);
    let w = random_tensor(&mut rng, vec![co, ci, 3], 1.0);
    let r = proj(&mut rng, b * co * l);
    out.push(check_op("conv1d", config, vec![x.clone(), w], |t, v| {
        let y = t.conv1d(v[0], v[1], 1)?;
        t.weighted_sum(y, &r)
    })?);

    let gamma = random_tensor(&mut rng, vec![ci], 2.0);
    let r = proj(&mut rng, b * ci * l);
    out.push(check_op("batch_norm_train", config, vec![x.clone(), gamma.clone()], |t, v| {
        let y = t.batch_norm(v[0], v[1], 1e-5, None)?;
        t.weighted_sum(y, &r)
    })?);
    let mean: Vec<f64> = (0..ci).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let var: Vec<f64> = (0..ci).map(|_| rng.gen_range(0.5..2.0)).collect();
    out.push(check_op("batch_norm_eval", config, vec![x.clone(), gamma], |t, v| {
        let y = t.batch_norm(v[0], v[1], 1e-5, Some((&mean, &var)))?;
        t.weighted_sum(y, &r)
    })?);

    out.push(check_op("leaky_relu", config, vec![x.clone()], |t, v| {
        let y = t.leaky_relu(v[0], 0.01);
        t.weighted_sum(y, &r)
    })?);

    let r_pool = proj(&mut rng, b * ci * (l / 2));
    out.push(check_op("max_pool", config, vec![x.clone()], |t, v| {
        let y = t.max_pool(v[0], 2)?;
        t.weighted_sum(y, &r_pool)
    })?);

    let r_avg = proj(&mut rng, b * ci);
    out.push(check_op("avg_pool", config, vec![x], |t, v| {
        let y = t.avg_pool(v[0])?;
        t.weighted_sum(y, &r_avg)
    })?);

    let xf = random_tensor(&mut rng, vec![b, ci * l], 1.0);
    let wf = random_tensor(&mut rng, vec![co, ci * l], 1.0);
    let r_fc = proj(&mut rng, b * co);
    out.push(check_op("linear", config, vec![xf, wf.clone()], |t, v| {
        let y = t.linear(v[0], v[1])?;
        t.weighted_sum(y, &r_fc)
    })?);

    let y = random_tensor(&mut rng, vec![b, co], 1.0);
    let center = proj(&mut rng, co);
    out.push(check_op("mean_sq_dist", config, vec![y], |t, v| t.mean_sq_dist(v[0], &center))?);

    let beta = rng.gen_range(0.01..1.0);
    out.push(check_op("weight_penalty", config, vec![wf], |t, v| Ok(t.penalty(v, beta)))?);

    out.push(check_network(config, &mut rng)?);
    Ok(out)
}

/// Whole-loss check on a tiny network (channels 2 → 3 → 4, m = 8) in
/// training mode, differentiating with respect to every weight.
fn check_network(config: u64, rng: &mut Stream) -> Result<GradCheck> {
    let spec = NetworkSpec {
        channels: vec![3, 4],
        embed_dim: 4,
        ..NetworkSpec::default()
    };
    let net = Network::init(&spec, config)?;
    let b = rng.gen_range(3..=5);
    let batch = random_tensor(rng, vec![b, 2, 8], 1.5);
    let center: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let beta = 0.01;
    check_op("dsvdd_loss", config, net.params().to_vec(), |t, v| {
        let input = t.leaf(batch.clone());
        let fwd = net.forward_tape_with(t, input, v.to_vec(), true)?;
        let dist = t.mean_sq_dist(fwd.output, &center)?;
        let penalty = t.penalty(v, beta);
        t.add(dist, penalty)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_passes_on_a_few_configurations() {
        for config in 0..3 {
            for check in check_layers(config).unwrap() {
                assert!(check.passed(), "{check:?}");
                assert!(check.entries > 0);
            }
        }
    }

    #[test]
    fn a_kink_is_flagged() {
        // with tied inputs the pool routes the whole gradient to the first
        // entry while the central difference splits it
        let x = Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap();
        let check = check_op("tied_pool", 0, vec![x], |t, v| {
            let y = t.max_pool(v[0], 2)?;
            t.weighted_sum(y, &[1.0])
        })
        .unwrap();
        assert!(!check.passed());
        assert!((check.max_rel_err - 1.0).abs() < 1e-9);
    }
}
