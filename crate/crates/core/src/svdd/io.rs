//! Binary model format for fitted `f64` SVDD descriptions.
//!
//! ```text
//!   magic        8 bytes  "SVDDMDL\0"
//!   version      u32      1
//!   m            u32      cell dimension
//!   n_support    u64
//!   n_train      u64
//!   gamma        f64
//!   nu           f64
//!   const_term   f64      Σ_ij α_i α_j k(z_i, z_j)
//!   alphas       n_support f64
//!   points       n_support × 2m f64, re, im interleaved
//! ```
//!
//! The constant is recomputed on load and must match the stored value.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::SvddModel;
use crate::error::{Error, Result};
use crate::linalg::ComplexVector;
use crate::sim::io::{read_complex, read_f64, read_u32, read_u64, write_complex};

const MAGIC: &[u8; 8] = b"SVDDMDL\0";
const VERSION: u32 = 1;

pub fn write_model<W: Write>(w: &mut W, model: &SvddModel<f64>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let m = u32::try_from(model.dim()).map_err(|_| Error::Format("dimension too large".into()))?;
    w.write_all(&m.to_le_bytes())?;
    w.write_all(&(model.alphas().len() as u64).to_le_bytes())?;
    w.write_all(&(model.n_train() as u64).to_le_bytes())?;
    for v in [model.gamma(), model.nu(), model.const_term()] {
        w.write_all(&v.to_le_bytes())?;
    }
    for a in model.alphas() {
        w.write_all(&a.to_le_bytes())?;
    }
    for x in model.support_points() {
        write_complex(w, x.as_slice())?;
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<SvddModel<f64>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an SVDD model file".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let m = read_u32(r)? as usize;
    let n_support = read_u64(r)? as usize;
    let n_train = read_u64(r)? as usize;
    if m == 0 || n_support == 0 || n_support > n_train {
        return Err(Error::Format(format!("bad model sizes m={m} support={n_support} train={n_train}")));
    }
    let gamma = read_f64(r)?;
    let nu = read_f64(r)?;
    let stored_const = read_f64(r)?;
    let alphas = (0..n_support).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
    let points = (0..n_support)
        .map(|_| ComplexVector::new(read_complex(r, m)?))
        .collect::<Result<Vec<_>>>()?;
    let model = SvddModel::from_parts(points, alphas, gamma, nu, n_train)?;
    if (model.const_term() - stored_const).abs() > 1e-9 * stored_const.abs().max(1.0) {
        return Err(Error::Format(format!(
            "stored constant {stored_const} disagrees with recomputed {}",
            model.const_term()
        )));
    }
    Ok(model)
}

pub fn save_model(path: &Path, model: &SvddModel<f64>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SvddModel<f64>> {
    read_model(&mut BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svdd::SolverOptions;

    fn model() -> SvddModel<f64> {
        let pts: Vec<_> = (0..30)
            .map(|i| {
                let t = i as f64 * 0.37;
                ComplexVector::from_parts(&[(t.sin(), t.cos()), (0.5 * t.cos(), -t.sin())]).unwrap()
            })
            .collect();
        SvddModel::fit(&pts, 0.2, &SolverOptions::default()).unwrap().model
    }

    #[test]
    fn round_trip_preserves_scores() {
        let model = model();
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();
        let n = model.alphas().len();
        assert_eq!(buf.len(), 8 + 4 + 4 + 8 + 8 + 24 + 8 * n + 32 * n);
        let back = read_model(&mut buf.as_slice()).unwrap();
        assert_eq!(back, model);
        let z = ComplexVector::from_parts(&[(0.3, 0.1), (-0.2, 0.9)]).unwrap();
        assert_eq!(back.score(&z).unwrap(), model.score(&z).unwrap());
    }

    #[test]
    fn rejects_tampering() {
        let mut buf = Vec::new();
        write_model(&mut buf, &model()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_model(&mut bad.as_slice()).is_err());
        // corrupt the stored constant
        let mut bad = buf.clone();
        bad[48..56].copy_from_slice(&123.0f64.to_le_bytes());
        assert!(matches!(read_model(&mut bad.as_slice()), Err(Error::Format(_))));
        assert!(read_model(&mut &buf[..buf.len() - 3]).is_err());
    }
}
