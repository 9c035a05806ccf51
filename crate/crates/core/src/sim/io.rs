//! Binary interchange format for simulated datasets.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! header
//!   magic        8 bytes  "SVDDSCN\0"
//!   version      u32      1
//!   split kind   u8       0 train, 1 calibration, 2 verification, 3 test
//!   family       u8       0 gaussian, 1 compound_gaussian
//!   reserved     u16      0
//!   m            u32      cell dimension
//!   k            u32      secondary columns stored per sample (0 for train)
//!   master seed  u64
//!   count        u64      number of samples
//! grid (test split only)
//!   n_snr u32, then n_snr f64 SNR values in dB
//!   n_bins u32, then n_bins u32 Doppler bins
//! per sample
//!   label        u8       0 = h0, 1 = h1
//!   snr_db       f64      NaN when no target
//!   doppler      i64      -1 when no target
//!   phase        f64      target phase φ in radians
//!   cell         2m f64   re, im interleaved
//!   secondary    2mk f64  column by column, re, im interleaved
//! ```
//!
//! Test files store the target-free draws; target cells are rebuilt from
//! the grid when the split is loaded.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{ClutterFamily, Sample, Target, TestSplit};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVector};

const MAGIC: &[u8; 8] = b"SVDDSCN\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Calibration,
    Verification,
    Test,
}

impl SplitKind {
    fn code(self) -> u8 {
        match self {
            SplitKind::Train => 0,
            SplitKind::Calibration => 1,
            SplitKind::Verification => 2,
            SplitKind::Test => 3,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => SplitKind::Train,
            1 => SplitKind::Calibration,
            2 => SplitKind::Verification,
            3 => SplitKind::Test,
            other => return Err(Error::Format(format!("unknown split kind {other}"))),
        })
    }

    pub fn file_name(self) -> &'static str {
        match self {
            SplitKind::Train => "train.bin",
            SplitKind::Calibration => "calibration.bin",
            SplitKind::Verification => "verification.bin",
            SplitKind::Test => "test.bin",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub kind: SplitKind,
    pub family: ClutterFamily,
    pub m: usize,
    pub k: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
    pub grid: Option<(Vec<f64>, Vec<usize>)>,
}

impl Dataset {
    pub fn into_test_split(self) -> Result<TestSplit> {
        let (snr, bins) = self
            .grid
            .ok_or_else(|| Error::Format("dataset is not a test split".into()))?;
        TestSplit::new(snr, bins, self.samples)
    }
}

pub fn write_dataset<W: Write>(
    w: &mut W,
    header: &DatasetHeader,
    samples: &[Sample],
    grid: Option<(&[f64], &[usize])>,
) -> Result<()> {
    if (header.kind == SplitKind::Test) != grid.is_some() {
        return Err(Error::Format("a grid section is written for test splits only".into()));
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[header.kind.code(), header.family.code()])?;
    w.write_all(&0u16.to_le_bytes())?;
    w.write_all(&to_u32(header.m)?.to_le_bytes())?;
    w.write_all(&to_u32(header.k)?.to_le_bytes())?;
    w.write_all(&header.master_seed.to_le_bytes())?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    if let Some((snr, bins)) = grid {
        w.write_all(&to_u32(snr.len())?.to_le_bytes())?;
        for s in snr {
            w.write_all(&s.to_le_bytes())?;
        }
        w.write_all(&to_u32(bins.len())?.to_le_bytes())?;
        for &b in bins {
            w.write_all(&to_u32(b)?.to_le_bytes())?;
        }
    }
    for s in samples {
        if s.cell.len() != header.m || s.secondary.cols() != header.k {
            return Err(Error::Format("sample shape disagrees with header".into()));
        }
        let (label, snr, doppler) = match s.target {
            Some(t) => (1u8, t.snr_db, t.doppler as i64),
            None => (0u8, f64::NAN, -1i64),
        };
        w.write_all(&[label])?;
        w.write_all(&snr.to_le_bytes())?;
        w.write_all(&doppler.to_le_bytes())?;
        w.write_all(&s.phase.to_le_bytes())?;
        write_complex(w, s.cell.as_slice())?;
        write_complex(w, s.secondary.as_col_major())?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(r: &mut R) -> Result<Dataset> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a dataset file (bad magic)".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let mut codes = [0u8; 2];
    r.read_exact(&mut codes)?;
    let kind = SplitKind::from_code(codes[0])?;
    let family = ClutterFamily::from_code(codes[1])?;
    let mut reserved = [0u8; 2];
    r.read_exact(&mut reserved)?;
    let m = read_u32(r)? as usize;
    let k = read_u32(r)? as usize;
    let master_seed = read_u64(r)?;
    let count = read_u64(r)? as usize;
    if m == 0 {
        return Err(Error::Format("dataset has m = 0".into()));
    }
    let grid = if kind == SplitKind::Test {
        let n_snr = read_u32(r)? as usize;
        let snr = (0..n_snr).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        let n_bins = read_u32(r)? as usize;
        let bins = (0..n_bins)
            .map(|_| read_u32(r).map(|b| b as usize))
            .collect::<Result<Vec<_>>>()?;
        Some((snr, bins))
    } else {
        None
    };
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let mut label = [0u8; 1];
        r.read_exact(&mut label)?;
        let snr_db = read_f64(r)?;
        let doppler = read_i64(r)?;
        let phase = read_f64(r)?;
        let target = match label[0] {
            0 => None,
            1 => {
                if doppler < 0 || !snr_db.is_finite() {
                    return Err(Error::Format("h1 sample without target parameters".into()));
                }
                Some(Target {
                    snr_db,
                    doppler: doppler as usize,
                })
            }
            other => return Err(Error::Format(format!("bad label byte {other}"))),
        };
        let cell = ComplexVector::new(read_complex(r, m)?)?;
        let secondary = ComplexMatrix::from_col_major(m, k, read_complex(r, m * k)?)?;
        samples.push(Sample {
            cell,
            secondary,
            target,
            phase,
        });
    }
    Ok(Dataset {
        header: DatasetHeader {
            kind,
            family,
            m,
            k,
            master_seed,
        },
        samples,
        grid,
    })
}

pub fn save_split(
    path: &Path,
    kind: SplitKind,
    family: ClutterFamily,
    master_seed: u64,
    samples: &[Sample],
) -> Result<()> {
    let first = samples.first().ok_or(Error::EmptyInput("split"))?;
    let header = DatasetHeader {
        kind,
        family,
        m: first.cell.len(),
        k: first.secondary.cols(),
        master_seed,
    };
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_dataset(&mut w, &header, samples, None)?;
    w.flush()?;
    Ok(())
}

pub fn save_test_split(path: &Path, family: ClutterFamily, master_seed: u64, test: &TestSplit) -> Result<()> {
    let first = test.base().first().ok_or(Error::EmptyInput("test split"))?;
    let header = DatasetHeader {
        kind: SplitKind::Test,
        family,
        m: first.cell.len(),
        k: first.secondary.cols(),
        master_seed,
    };
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_dataset(
        &mut w,
        &header,
        test.base(),
        Some((&test.snr_grid_db, &test.doppler_bins)),
    )?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    read_dataset(&mut r)
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("value {v} does not fit in u32")))
}

pub(crate) fn write_complex<W: Write>(w: &mut W, values: &[Complex64]) -> Result<()> {
    for z in values {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_complex<R: Read>(r: &mut R, n: usize) -> Result<Vec<Complex64>> {
    (0..n)
        .map(|_| Ok(Complex64::new(read_f64(r)?, read_f64(r)?)))
        .collect()
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_i64<R: Read>(r: &mut R) -> Result<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(i64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Scenario, SceneGenerator};

    fn scenario() -> Scenario {
        Scenario {
            clutter_family: ClutterFamily::CompoundGaussian,
            m: 4,
            k_secondary: 2,
            n_train: 3,
            n_cal: 3,
            n_verify: 2,
            n_test: 4,
            snr_grid_db: vec![-5.0, 5.0],
            doppler_bins: vec![1, 3],
            ..Scenario::default()
        }
    }

    #[test]
    fn splits_survive_a_round_trip() {
        let scn = scenario();
        let splits = SceneGenerator::new(&scn).unwrap().make_splits().unwrap();
        let dir = std::env::temp_dir().join(format!("svdd-cfar-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();

        let path = dir.join("cal.bin");
        save_split(&path, SplitKind::Calibration, scn.clutter_family, 9, &splits.calibration).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.header.k, 2);
        assert_eq!(back.header.master_seed, 9);
        assert_eq!(back.samples, splits.calibration);

        let path = dir.join("test.bin");
        save_test_split(&path, scn.clutter_family, 9, &splits.test).unwrap();
        let test = load_dataset(&path).unwrap().into_test_split().unwrap();
        assert_eq!(test.snr_grid_db, vec![-5.0, 5.0]);
        assert_eq!(test.samples_at(1, 5.0).unwrap(), splits.test.samples_at(1, 5.0).unwrap());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn layout_is_fixed() {
        let scn = Scenario {
            n_train: 1,
            ..scenario()
        };
        let splits = SceneGenerator::new(&scn).unwrap().make_splits().unwrap();
        let header = DatasetHeader {
            kind: SplitKind::Train,
            family: scn.clutter_family,
            m: 4,
            k: 0,
            master_seed: 1,
        };
        let mut buf = Vec::new();
        write_dataset(&mut buf, &header, &splits.train, None).unwrap();
        // 40-byte header, then 1 + 8 + 8 + 8 bytes of metadata and 2·4 f64
        assert_eq!(buf.len(), 40 + 25 + 64);
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(buf[12], 0);
        assert_eq!(buf[13], 1);
        let re0 = f64::from_le_bytes(buf[65..73].try_into().unwrap());
        assert_eq!(re0, splits.train[0].cell[0].re);
    }

    #[test]
    fn rejects_corrupt_input() {
        let mut bad = b"NOTMAGIC".to_vec();
        bad.extend_from_slice(&[0; 40]);
        assert!(matches!(read_dataset(&mut bad.as_slice()), Err(Error::Format(_))));
        let mut truncated = MAGIC.to_vec();
        truncated.extend_from_slice(&1u32.to_le_bytes());
        assert!(matches!(read_dataset(&mut truncated.as_slice()), Err(Error::Io(_))));
    }
}
