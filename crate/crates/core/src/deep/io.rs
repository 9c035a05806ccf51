//! Binary model format for trained Deep SVDD detectors and the epoch-loss
//! CSV.
//!
//! All values little-endian:
//!
//! ```text
//!   magic          8 bytes  "SVDDNET\0"
//!   version        u32      1
//!   in_channels    u32
//!   n_stages       u32, then n_stages u32 channel counts
//!   kernel_size    u32
//!   padding        u32
//!   pool_size      u32
//!   leaky_slope    f64
//!   embed_dim      u32
//!   bn_eps         f64
//!   bn_momentum    f64
//!   standardization  4 f64: mean_re, mean_im, std_re, std_im
//!   center         embed_dim f64
//!   n_params       u32, then per tensor: rank u32, rank u32 dims, values f64
//!                  (order: conv0.weight, norm0.scale, …, fc.weight)
//!   running stats  per stage: channels f64 means, then channels f64 variances
//!   n_epochs       u32, then per epoch: epoch u32, mean_loss f64, lr f64
//! ```

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::net::{Network, NetworkSpec, RunningStats};
use super::tensor::Tensor;
use super::train::EpochLog;
use super::{DsvddModel, Standardization};
use crate::error::{Error, Result};
use crate::sim::io::{read_f64, read_u32};

const MAGIC: &[u8; 8] = b"SVDDNET\0";
const VERSION: u32 = 1;
/// Sanity bound on any stored count.
const MAX_COUNT: u32 = 1 << 24;

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_count<R: Read>(r: &mut R) -> Result<usize> {
    let v = read_u32(r)?;
    if v > MAX_COUNT {
        return Err(Error::Format(format!("implausible count {v}")));
    }
    Ok(v as usize)
}

fn get_vec<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| read_f64(r)).collect()
}

pub fn write_model<W: Write>(w: &mut W, model: &DsvddModel) -> Result<()> {
    let net = model.network();
    let spec = net.spec();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    put_u32(w, spec.in_channels)?;
    put_u32(w, spec.channels.len())?;
    for &c in &spec.channels {
        put_u32(w, c)?;
    }
    put_u32(w, spec.kernel_size)?;
    put_u32(w, spec.padding)?;
    put_u32(w, spec.pool_size)?;
    put_f64(w, spec.leaky_slope)?;
    put_u32(w, spec.embed_dim)?;
    put_f64(w, spec.bn_eps)?;
    put_f64(w, spec.bn_momentum)?;
    let s = model.standardization();
    for v in [s.mean[0], s.mean[1], s.std[0], s.std[1]] {
        put_f64(w, v)?;
    }
    for &v in model.center() {
        put_f64(w, v)?;
    }
    put_u32(w, net.params().len())?;
    for p in net.params() {
        put_u32(w, p.shape().len())?;
        for &d in p.shape() {
            put_u32(w, d)?;
        }
        for &v in p.data() {
            put_f64(w, v)?;
        }
    }
    for stats in net.running() {
        for &v in stats.mean.iter().chain(&stats.var) {
            put_f64(w, v)?;
        }
    }
    put_u32(w, model.log().len())?;
    for e in model.log() {
        put_u32(w, e.epoch)?;
        put_f64(w, e.mean_loss)?;
        put_f64(w, e.lr)?;
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<DsvddModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a Deep SVDD model file".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let in_channels = get_count(r)?;
    let n_stages = get_count(r)?;
    let channels = (0..n_stages).map(|_| get_count(r)).collect::<Result<Vec<_>>>()?;
    let spec = NetworkSpec {
        in_channels,
        channels,
        kernel_size: get_count(r)?,
        padding: get_count(r)?,
        pool_size: get_count(r)?,
        leaky_slope: read_f64(r)?,
        embed_dim: get_count(r)?,
        bn_eps: read_f64(r)?,
        bn_momentum: read_f64(r)?,
    };
    spec.validate().map_err(|e| Error::Format(format!("stored network spec: {e}")))?;
    let s = get_vec(r, 4)?;
    let standardization = Standardization {
        mean: [s[0], s[1]],
        std: [s[2], s[3]],
    };
    let center = get_vec(r, spec.embed_dim)?;
    let n_params = get_count(r)?;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let rank = get_count(r)?;
        let shape = (0..rank).map(|_| get_count(r)).collect::<Result<Vec<_>>>()?;
        let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let count = count
            .filter(|&c| c <= MAX_COUNT as usize)
            .ok_or_else(|| Error::Format(format!("implausible tensor shape {shape:?}")))?;
        params.push(Tensor::new(shape, get_vec(r, count)?)?);
    }
    let running = spec
        .channels
        .iter()
        .map(|&c| {
            Ok(RunningStats {
                mean: get_vec(r, c)?,
                var: get_vec(r, c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_epochs = get_count(r)?;
    let log = (0..n_epochs)
        .map(|_| {
            Ok(EpochLog {
                epoch: get_count(r)?,
                mean_loss: read_f64(r)?,
                lr: read_f64(r)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let network = Network::from_parts(spec, params, running)?;
    DsvddModel::new(network, center, standardization, log)
}

pub fn save_model(path: &Path, model: &DsvddModel) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<DsvddModel> {
    read_model(&mut BufReader::new(std::fs::File::open(path)?))
}

/// CSV with columns `epoch,mean_loss,lr`, one row per epoch.
pub fn write_epoch_log<W: Write>(w: &mut W, log: &[EpochLog]) -> Result<()> {
    writeln!(w, "epoch,mean_loss,lr")?;
    for e in log {
        writeln!(w, "{},{},{}", e.epoch, e.mean_loss, e.lr)?;
    }
    Ok(())
}
