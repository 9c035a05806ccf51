//! Deep SVDD: a bias-free convolutional embedding trained to pull
//! target-free cells toward a fixed center `c`; the score of a cell is
//! `‖ψ(z) − c‖²`.
//!
//! Cells enter the network as two channels (real and imaginary parts),
//! standardized per channel with statistics of the training split.

pub mod gradcheck;
pub mod io;
pub mod net;
pub mod ops;
pub mod tape;
pub mod tensor;
pub mod train;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::CVector;

pub use net::{Network, NetworkSpec, RunningStats};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
pub use train::{dsvdd_loss, init_center, train, EpochLog, TrainConfig};

/// Per-channel mean and standard deviation; index 0 is the real channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardization {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl Standardization {
    /// No-op statistics.
    pub fn identity() -> Self {
        Self {
            mean: [0.0; 2],
            std: [1.0; 2],
        }
    }

    /// Population mean and standard deviation of each channel over every
    /// entry of every training cell.
    pub fn fit(cells: &[CVector]) -> Result<Self> {
        let m = cells.first().ok_or(Error::EmptyInput("training set"))?.len();
        let n = (cells.len() * m) as f64;
        let mut mean = [0.0; 2];
        for z in cells {
            if z.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: z.len() });
            }
            for c in z.as_slice() {
                mean[0] += c.re;
                mean[1] += c.im;
            }
        }
        mean = mean.map(|s| s / n);
        let mut var = [0.0; 2];
        for z in cells {
            for c in z.as_slice() {
                var[0] += (c.re - mean[0]).powi(2);
                var[1] += (c.im - mean[1]).powi(2);
            }
        }
        let std = var.map(|v| (v / n).sqrt());
        let out = Self { mean, std };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.std.iter().any(|&s| !(s > 0.0 && s.is_finite())) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Degenerate(format!(
                "channel standard deviations {:?} must be positive and finite",
                self.std
            )));
        }
        Ok(())
    }
}

/// `(2, m)` tensor with real parts in channel 0 and imaginary parts in
/// channel 1, standardized with `norm`.
pub fn embed_complex(z: &CVector, norm: &Standardization) -> Tensor {
    let data = z
        .as_slice()
        .iter()
        .map(|c| (c.re - norm.mean[0]) / norm.std[0])
        .chain(z.as_slice().iter().map(|c| (c.im - norm.mean[1]) / norm.std[1]))
        .collect();
    Tensor::new(vec![2, z.len()], data).expect("2m values")
}

/// A trained Deep SVDD detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DsvddModel {
    network: Network,
    center: Vec<f64>,
    standardization: Standardization,
    log: Vec<EpochLog>,
}

impl DsvddModel {
    pub fn new(network: Network, center: Vec<f64>, standardization: Standardization, log: Vec<EpochLog>) -> Result<Self> {
        if center.len() != network.spec().embed_dim {
            return Err(Error::DimensionMismatch {
                expected: network.spec().embed_dim,
                got: center.len(),
            });
        }
        if center.iter().any(|v| !v.is_finite()) || center.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidData("center must be finite and nonzero".into()));
        }
        standardization.validate()?;
        Ok(Self {
            network,
            center,
            standardization,
            log,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn log(&self) -> &[EpochLog] {
        &self.log
    }

    /// Evaluation-mode embedding `ψ(z)`.
    pub fn embed(&self, z: &CVector) -> Result<Vec<f64>> {
        self.network.spec().check_length(z.len())?;
        let x = embed_complex(z, &self.standardization);
        let shape = vec![1, 2, z.len()];
        let out = self.network.forward_eval(&Tensor::new(shape, x.into_data())?)?;
        Ok(out.into_data())
    }

    pub fn score(&self, z: &CVector) -> Result<f64> {
        let e = self.embed(z)?;
        Ok(e.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum())
    }

    /// Scores of many cells, in input order. Equal to scoring one by one.
    pub fn score_batch(&self, cells: &[CVector]) -> Result<Vec<f64>> {
        let d = self.center.len();
        let chunks: Vec<Vec<f64>> = cells
            .par_chunks(train::EVAL_CHUNK)
            .map(|chunk| {
                let refs: Vec<&CVector> = chunk.iter().collect();
                let out = self.network.forward_eval(&train::stack(&refs, &self.standardization)?)?;
                ops::row_sq_dist(&out, &self.center).map(|v| {
                    debug_assert_eq!(v.len() * d, out.len());
                    v
                })
            })
            .collect::<Result<_>>()?;
        Ok(chunks.concat())
    }
}

pub fn dsvdd_score(z: &CVector, model: &DsvddModel) -> Result<f64> {
    model.score(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{synthesize_sample, Scenario};
    use crate::rng::{Domain, StreamFactory};

    fn cells(n: usize, seed: u64) -> Vec<CVector> {
        let scn = Scenario::default();
        let f = StreamFactory::new(seed);
        (0..n)
            .map(|i| {
                synthesize_sample(&scn, false, None, None, &mut f.stream(Domain::Train, 0, i as u64))
                    .unwrap()
                    .cell
            })
            .collect()
    }

    fn small_config() -> (NetworkSpec, TrainConfig) {
        let spec = NetworkSpec {
            channels: vec![4, 6, 8],
            embed_dim: 8,
            ..NetworkSpec::default()
        };
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 16,
            milestones: vec![2],
            seed: 5,
            ..TrainConfig::default()
        };
        (spec, cfg)
    }

    #[test]
    fn embedding_layout() {
        let z = CVector::from_parts(&[(1.0, 2.0)]).unwrap();
        let t = embed_complex(&z, &Standardization::identity());
        assert_eq!(t.shape(), &[2, 1]);
        assert_eq!(t.data(), &[1.0, 2.0]);
        let z = CVector::from_real(&[3.0, -1.0, 0.5]).unwrap();
        assert_eq!(&embed_complex(&z, &Standardization::identity()).data()[3..], &[0.0; 3]);
        let z = &cells(1, 1)[0];
        assert_eq!(embed_complex(z, &Standardization::identity()).shape(), &[2, 16]);
    }

    #[test]
    fn standardization_statistics() {
        let pts = vec![
            CVector::from_parts(&[(1.0, 0.0), (3.0, 2.0)]).unwrap(),
            CVector::from_parts(&[(1.0, 0.0), (3.0, 2.0)]).unwrap(),
        ];
        let s = Standardization::fit(&pts).unwrap();
        assert_eq!(s.mean, [2.0, 1.0]);
        assert_eq!(s.std, [1.0, 1.0]);
        let flat = vec![CVector::from_real(&[1.0, 1.0]).unwrap()];
        assert!(matches!(Standardization::fit(&flat), Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_linear_map_gives_floor_center() {
        let spec = NetworkSpec {
            channels: vec![2],
            embed_dim: 3,
            ..NetworkSpec::default()
        };
        let mut net = Network::init(&spec, 1).unwrap();
        for v in net.params_mut()[2].data_mut() {
            *v = 0.0;
        }
        let data = cells(10, 3);
        let c = init_center(&net, &Standardization::fit(&data).unwrap(), &data).unwrap();
        assert_eq!(c, vec![0.1; 3]);
    }

    #[test]
    fn training_is_deterministic_and_center_frozen() {
        let (spec, cfg) = small_config();
        let data = cells(200, 7);
        let a = train(&spec, &data, &cfg).unwrap();
        let b = train(&spec, &data, &cfg).unwrap();
        assert_eq!(a, b);
        // center computed from the initial weights is what the model keeps
        let net0 = Network::init(&spec, cfg.seed).unwrap();
        let c0 = init_center(&net0, a.standardization(), &data).unwrap();
        assert_eq!(a.center(), c0.as_slice());
        assert_eq!(a.log().len(), 3);
        assert_eq!(a.log()[2].lr, cfg.learning_rate * 0.1);
        assert!(a.log().iter().all(|e| e.mean_loss.is_finite() && e.mean_loss >= 0.0));
        assert_ne!(a.network(), &net0);
    }

    #[test]
    fn batch_scoring_matches_single_scoring() {
        let (spec, cfg) = small_config();
        let data = cells(120, 9);
        let model = train(&spec, &data, &cfg).unwrap();
        let probe = cells(300, 10);
        let batch = model.score_batch(&probe).unwrap();
        for (z, s) in probe.iter().zip(&batch) {
            assert_eq!(model.score(z).unwrap(), *s);
            assert!(*s >= 0.0);
        }
        let mean = batch.iter().sum::<f64>() / batch.len() as f64;
        let var = batch.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / batch.len() as f64;
        assert!(var > 0.0);
        let short = CVector::from_real(&[1.0, 2.0]).unwrap();
        assert!(model.score(&short).is_err());
    }

    #[test]
    fn score_is_zero_at_the_center() {
        let (spec, cfg) = small_config();
        let data = cells(50, 2);
        let model = train(&spec, &data, &cfg).unwrap();
        let e = model.embed(&data[0]).unwrap();
        let at_center = DsvddModel::new(model.network().clone(), e, *model.standardization(), vec![]).unwrap();
        assert_eq!(at_center.score(&data[0]).unwrap(), 0.0);
    }
}
