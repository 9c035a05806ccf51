//! The bias-free 1D convolutional embedding network.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::{Domain, StreamFactory};

/// Layer hyperparameters. Each stage is conv → scale-only batch norm →
/// leaky ReLU → max pool; then average pooling to length one and a
/// bias-free linear map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub in_channels: usize,
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub padding: usize,
    pub pool_size: usize,
    pub leaky_slope: f64,
    pub embed_dim: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            in_channels: 2,
            channels: vec![32, 64, 128],
            kernel_size: 3,
            padding: 1,
            pool_size: 2,
            leaky_slope: 0.01,
            embed_dim: 128,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.in_channels == 0 || self.embed_dim == 0 || self.channels.is_empty() {
            return bad("network needs input channels, at least one stage and an embedding");
        }
        if self.channels.contains(&0) {
            return bad("stage channel counts must be positive");
        }
        if self.kernel_size == 0 || 2 * self.padding + 1 != self.kernel_size {
            return bad("convolutions must preserve length (kernel = 2·padding + 1)");
        }
        if self.pool_size < 2 {
            return bad("pool size must be at least 2");
        }
        if !(self.bn_eps > 0.0) || !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return bad("batch norm eps must be positive and momentum in (0, 1]");
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky slope must be finite");
        }
        Ok(())
    }

    /// Smallest input length that survives every pooling stage.
    pub fn min_length(&self) -> usize {
        self.pool_size.pow(self.channels.len() as u32)
    }

    pub fn check_length(&self, m: usize) -> Result<()> {
        if m < self.min_length() {
            return Err(Error::InvalidParameter(format!(
                "input length {m} is shorter than the {} the pooling stages need",
                self.min_length()
            )));
        }
        Ok(())
    }
}

/// Running batch-norm statistics of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Trainable tensors plus batch-norm running statistics.
///
/// Parameter order: for each stage the conv weight `(out, in, k)` then the
/// batch-norm scale `(out)`, and finally the linear weight `(embed, last)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<Tensor>,
    running: Vec<RunningStats>,
}

/// Outcome of a recorded forward pass.
pub struct TapeForward {
    pub output: Var,
    pub params: Vec<Var>,
    /// Training-mode batch norm nodes, one per stage.
    pub norms: Vec<Var>,
}

impl Network {
    /// Seeded uniform weights on `±√(6/fan_in)`; batch-norm scales start at 1
    /// and running statistics at mean 0, variance 1.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let factory = StreamFactory::new(seed);
        let mut params = Vec::new();
        let mut running = Vec::new();
        let mut c_in = spec.in_channels;
        let uniform = |shape: Vec<usize>, fan_in: usize, index: u64| {
            let bound = (6.0 / fan_in as f64).sqrt();
            let mut rng = factory.stream(Domain::NetworkInit, 0, index);
            let count: usize = shape.iter().product();
            let data = (0..count).map(|_| rng.gen_range(-bound..bound)).collect();
            Tensor::new(shape, data).expect("count matches shape")
        };
        for (s, &c_out) in spec.channels.iter().enumerate() {
            params.push(uniform(vec![c_out, c_in, spec.kernel_size], c_in * spec.kernel_size, s as u64));
            params.push(Tensor::filled(vec![c_out], 1.0));
            running.push(RunningStats {
                mean: vec![0.0; c_out],
                var: vec![1.0; c_out],
            });
            c_in = c_out;
        }
        params.push(uniform(vec![spec.embed_dim, c_in], c_in, spec.channels.len() as u64));
        Ok(Self {
            spec: spec.clone(),
            params,
            running,
        })
    }

    pub fn from_parts(spec: NetworkSpec, params: Vec<Tensor>, running: Vec<RunningStats>) -> Result<Self> {
        spec.validate()?;
        let reference = Self::init(&spec, 0)?;
        if params.len() != reference.params.len() || running.len() != reference.running.len() {
            return Err(Error::InvalidData("parameter count does not match the network spec".into()));
        }
        for (p, r) in params.iter().zip(&reference.params) {
            if p.shape() != r.shape() || p.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "parameter of shape {:?} does not fit expected {:?} or is not finite",
                    p.shape(),
                    r.shape()
                )));
            }
        }
        for (s, &c) in running.iter().zip(&spec.channels) {
            if s.mean.len() != c || s.var.len() != c || s.var.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::InvalidData("running statistics do not fit the spec".into()));
            }
        }
        Ok(Self { spec, params, running })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn running(&self) -> &[RunningStats] {
        &self.running
    }

    /// Names of the trainable tensors in parameter order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for s in 0..self.spec.channels.len() {
            names.push(format!("conv{s}.weight"));
            names.push(format!("norm{s}.scale"));
        }
        names.push("fc.weight".to_string());
        names
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        x.expect_rank(3, "network input")?;
        if x.shape()[1] != self.spec.in_channels {
            return Err(Error::DimensionMismatch {
                expected: self.spec.in_channels,
                got: x.shape()[1],
            });
        }
        self.spec.check_length(x.shape()[2])
    }

    /// Records a forward pass. `train` selects batch statistics.
    pub fn forward_tape(&self, tape: &mut Tape, input: Var, train: bool) -> Result<TapeForward> {
        let params: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        self.forward_tape_with(tape, input, params, train)
    }

    /// Like [`Network::forward_tape`] with the weights taken from `params`
    /// (already on the tape) instead of `self`; running statistics still
    /// come from `self`.
    pub fn forward_tape_with(&self, tape: &mut Tape, input: Var, params: Vec<Var>, train: bool) -> Result<TapeForward> {
        self.check_input(tape.value(input))?;
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        let mut norms = Vec::new();
        let mut h = input;
        for s in 0..self.spec.channels.len() {
            h = tape.conv1d(h, params[2 * s], self.spec.padding)?;
            let stats = &self.running[s];
            let running = (!train).then_some((stats.mean.as_slice(), stats.var.as_slice()));
            h = tape.batch_norm(h, params[2 * s + 1], self.spec.bn_eps, running)?;
            if train {
                norms.push(h);
            }
            h = tape.leaky_relu(h, self.spec.leaky_slope);
            h = tape.max_pool(h, self.spec.pool_size)?;
        }
        h = tape.avg_pool(h)?;
        let output = tape.linear(h, *params.last().expect("linear weight"))?;
        Ok(TapeForward { output, params, norms })
    }

    /// Evaluation-mode forward pass without recording: `(B, C, m) → (B, embed)`.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for s in 0..self.spec.channels.len() {
            h = ops::conv1d(&h, &self.params[2 * s], self.spec.padding)?;
            let stats = &self.running[s];
            h = ops::batch_norm(
                &h,
                &self.params[2 * s + 1],
                self.spec.bn_eps,
                Some((&stats.mean, &stats.var)),
            )?
            .0;
            h = ops::leaky_relu(&h, self.spec.leaky_slope);
            h = ops::max_pool(&h, self.spec.pool_size)?.0;
        }
        h = ops::avg_pool(&h)?;
        ops::linear(&h, self.params.last().expect("linear weight"))
    }

    /// Folds the batch statistics of a training pass into the running
    /// statistics; the variance enters with the unbiased `n/(n−1)` factor.
    pub fn update_running(&mut self, tape: &Tape, fwd: &TapeForward) {
        let momentum = self.spec.bn_momentum;
        for (stats, &node) in self.running.iter_mut().zip(&fwd.norms) {
            let shape = tape.value(node).shape();
            let n = (shape[0] * shape[2]) as f64;
            let (mean, var) = tape.norm_stats(node).expect("training-mode node");
            for c in 0..stats.mean.len() {
                stats.mean[c] = (1.0 - momentum) * stats.mean[c] + momentum * mean[c];
                stats.var[c] = (1.0 - momentum) * stats.var[c] + momentum * var[c] * n / (n - 1.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(b: usize, m: usize, seed: u64) -> Tensor {
        let mut rng = StreamFactory::new(seed).stream(Domain::Oracle, 0, 0);
        let data = (0..b * 2 * m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Tensor::new(vec![b, 2, m], data).unwrap()
    }

    #[test]
    fn output_shape_and_bias_freedom() {
        let net = Network::init(&NetworkSpec::default(), 3).unwrap();
        let y = net.forward_eval(&batch(64, 16, 1)).unwrap();
        assert_eq!(y.shape(), &[64, 128]);
        let names = net.param_names();
        assert_eq!(names.len(), 7);
        assert!(names.iter().all(|n| n.ends_with(".weight") || n.ends_with(".scale")));
        assert!(!names.iter().any(|n| n.contains("bias") || n.contains("shift")));
        let shapes: Vec<_> = net.params().iter().map(|p| p.shape().to_vec()).collect();
        assert_eq!(
            shapes,
            vec![
                vec![32, 2, 3],
                vec![32],
                vec![64, 32, 3],
                vec![64],
                vec![128, 64, 3],
                vec![128],
                vec![128, 128]
            ]
        );
    }

    #[test]
    fn init_respects_bounds_and_seed() {
        let spec = NetworkSpec::default();
        let a = Network::init(&spec, 11).unwrap();
        assert_eq!(a, Network::init(&spec, 11).unwrap());
        assert_ne!(a, Network::init(&spec, 12).unwrap());
        let bound = (6.0f64 / 6.0).sqrt();
        assert!(a.params()[0].data().iter().all(|v| v.abs() <= bound));
        let bound = (6.0f64 / 128.0).sqrt();
        assert!(a.params()[6].data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let mut net = Network::init(&NetworkSpec::default(), 5).unwrap();
        for p in net.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let y = net.forward_eval(&batch(4, 16, 2)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_rows_are_independent() {
        let net = Network::init(&NetworkSpec::default(), 7).unwrap();
        let x = batch(5, 16, 9);
        let y = net.forward_eval(&x).unwrap();
        for b in 0..5 {
            let row = Tensor::new(vec![1, 2, 16], x.data()[b * 32..(b + 1) * 32].to_vec()).unwrap();
            let single = net.forward_eval(&row).unwrap();
            assert_eq!(single.data(), &y.data()[b * 128..(b + 1) * 128]);
        }
        let mut dup = x.data()[..32].to_vec();
        dup.extend_from_slice(&x.data()[..32]);
        let y = net.forward_eval(&Tensor::new(vec![2, 2, 16], dup).unwrap()).unwrap();
        assert_eq!(&y.data()[..128], &y.data()[128..]);
    }

    #[test]
    fn tape_matches_eval_pass() {
        let net = Network::init(&NetworkSpec::default(), 8).unwrap();
        let x = batch(3, 16, 4);
        let mut tape = Tape::new();
        let input = tape.leaf(x.clone());
        let fwd = net.forward_tape(&mut tape, input, false).unwrap();
        assert_eq!(tape.value(fwd.output), &net.forward_eval(&x).unwrap());
    }

    #[test]
    fn rejects_bad_shapes() {
        let net = Network::init(&NetworkSpec::default(), 1).unwrap();
        assert!(net.forward_eval(&batch(2, 4, 1)).is_err());
        assert!(net.forward_eval(&Tensor::zeros(vec![2, 3, 16])).is_err());
        assert!(net.forward_eval(&Tensor::zeros(vec![2, 32])).is_err());
        let bad = NetworkSpec {
            kernel_size: 4,
            ..NetworkSpec::default()
        };
        assert!(Network::init(&bad, 0).is_err());
    }

    #[test]
    fn running_statistics_follow_momentum() {
        let spec = NetworkSpec {
            channels: vec![2],
            embed_dim: 3,
            ..NetworkSpec::default()
        };
        let mut net = Network::init(&spec, 2).unwrap();
        let x = batch(4, 8, 3);
        let mut tape = Tape::new();
        let input = tape.leaf(x);
        let fwd = net.forward_tape(&mut tape, input, true).unwrap();
        let (mean, var) = tape.norm_stats(fwd.norms[0]).unwrap().clone();
        net.update_running(&tape, &fwd);
        let n = 32.0;
        for c in 0..2 {
            assert!((net.running()[0].mean[c] - 0.1 * mean[c]).abs() < 1e-15);
            assert!((net.running()[0].var[c] - (0.9 + 0.1 * var[c] * n / (n - 1.0))).abs() < 1e-15);
        }
    }
}
