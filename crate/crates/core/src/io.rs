//! The `OCTV` binary volume container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size        field
//! 0       4           magic "OCTV" (4F 43 54 56)
//! 4       1           version = 1
//! 5       1           rank, 3 or 4
//! 6       6           reserved, zero
//! 12      4*rank      u32 extents: n_b, [n_r,] n_a, n_s
//! ..      4*product   IEEE-754 binary32 payload, sample index fastest
//! ```
//!
//! There is no padding and no trailing data. Values are narrowed to binary32
//! on write; anything loaded from a container therefore round-trips through
//! [`save_volume`] bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::volume::{AngioVolume, Dims, RepeatScanVolume};

pub const MAGIC: [u8; 4] = *b"OCTV";
pub const VERSION: u8 = 1;
const FIXED_HEADER: usize = 12;

/// Either kind of volume the container can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Repeats(RepeatScanVolume),
    Angio(AngioVolume),
}

impl Volume {
    pub fn rank(&self) -> u8 {
        match self {
            Volume::Repeats(_) => 4,
            Volume::Angio(_) => 3,
        }
    }

    fn extents(&self) -> Vec<usize> {
        match self {
            Volume::Repeats(v) => {
                let d = v.dims();
                vec![d.n_b, d.n_r, d.n_a, d.n_s]
            }
            Volume::Angio(v) => v.shape().to_vec(),
        }
    }

    fn values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            Volume::Repeats(v) => Box::new(v.data().iter().copied()),
            Volume::Angio(v) => Box::new(v.data().iter().copied()),
        }
    }
}

impl From<RepeatScanVolume> for Volume {
    fn from(v: RepeatScanVolume) -> Self {
        Volume::Repeats(v)
    }
}

impl From<AngioVolume> for Volume {
    fn from(v: AngioVolume) -> Self {
        Volume::Angio(v)
    }
}

/// Serializes a volume into container bytes.
pub fn encode(vol: &Volume) -> Result<Vec<u8>> {
    let extents = vol.extents();
    let count: usize = extents.iter().product();
    let mut out = Vec::with_capacity(FIXED_HEADER + 4 * extents.len() + 4 * count);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(vol.rank());
    out.extend_from_slice(&[0u8; 6]);
    for &e in &extents {
        let e = u32::try_from(e)
            .map_err(|_| Error::InvalidDims(format!("extent {e} does not fit in u32")))?;
        out.extend_from_slice(&e.to_le_bytes());
    }
    for (i, v) in vol.values().enumerate() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(Error::InvalidData(format!(
                "element {i} ({v}) is not representable as binary32"
            )));
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(out)
}

/// Parses container bytes; `path` is only used for diagnostics.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Volume> {
    let path_buf = || path.to_path_buf();
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(Error::BadMagic { path: path_buf() });
    }
    if bytes.len() < FIXED_HEADER {
        return Err(malformed(path_buf(), "header shorter than 12 bytes"));
    }
    if bytes[4] != VERSION {
        return Err(Error::VersionMismatch {
            path: path_buf(),
            found: bytes[4],
            expected: VERSION,
        });
    }
    let rank = bytes[5];
    if rank != 3 && rank != 4 {
        return Err(malformed(path_buf(), &format!("rank {rank} is not 3 or 4")));
    }
    if bytes[6..12].iter().any(|&b| b != 0) {
        return Err(malformed(path_buf(), "reserved bytes are not zero"));
    }
    let dims_end = FIXED_HEADER + 4 * rank as usize;
    if bytes.len() < dims_end {
        return Err(malformed(path_buf(), "extents cut short"));
    }
    let extents: Vec<usize> = bytes[FIXED_HEADER..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    if extents.contains(&0) {
        return Err(Error::InvalidDims(format!(
            "{}: zero extent in {:?}",
            path.display(),
            extents
        )));
    }
    let count = extents
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .filter(|c| c.checked_mul(4).is_some())
        .ok_or_else(|| malformed(path_buf(), "extents overflow"))?;
    let payload = &bytes[dims_end..];
    let expected = count * 4;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            path: path_buf(),
            found: payload.len(),
            expected,
        });
    }
    if payload.len() > expected {
        return Err(malformed(
            path_buf(),
            &format!("{} trailing bytes after payload", payload.len() - expected),
        ));
    }
    let mut values = Vec::with_capacity(count);
    for (index, c) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(c.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFiniteValue {
                path: path_buf(),
                index,
            });
        }
        values.push(f64::from(v));
    }
    let vol = if rank == 4 {
        let dims = Dims::new(extents[0], extents[1], extents[2], extents[3])?;
        Volume::Repeats(RepeatScanVolume::from_vec(dims, values)?)
    } else {
        Volume::Angio(AngioVolume::from_vec(
            [extents[0], extents[1], extents[2]],
            values,
        )?)
    };
    Ok(vol)
}

fn malformed(path: PathBuf, reason: &str) -> Error {
    Error::MalformedHeader {
        path,
        reason: reason.to_string(),
    }
}

pub fn save_volume(vol: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(vol)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode(&bytes, path)
}

pub fn save_repeats(vol: &RepeatScanVolume, path: impl AsRef<Path>) -> Result<()> {
    save_volume(&Volume::Repeats(vol.clone()), path)
}

pub fn save_angio(vol: &AngioVolume, path: impl AsRef<Path>) -> Result<()> {
    save_volume(&Volume::Angio(vol.clone()), path)
}

/// Loads a rank-4 container.
pub fn load_repeats(path: impl AsRef<Path>) -> Result<RepeatScanVolume> {
    let path = path.as_ref();
    match load_volume(path)? {
        Volume::Repeats(v) => Ok(v),
        Volume::Angio(_) => Err(Error::RankMismatch {
            path: path.to_path_buf(),
            expected: 4,
            found: 3,
        }),
    }
}

/// Loads a rank-3 container.
pub fn load_angio(path: impl AsRef<Path>) -> Result<AngioVolume> {
    let path = path.as_ref();
    match load_volume(path)? {
        Volume::Angio(v) => Ok(v),
        Volume::Repeats(_) => Err(Error::RankMismatch {
            path: path.to_path_buf(),
            expected: 3,
            found: 4,
        }),
    }
}
