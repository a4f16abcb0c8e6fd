//! Checkpoint files: a posterior plus everything needed to resume.
//!
//! A checkpoint is self-describing: it stores the architecture (including
//! receptive-field topology, without which masked variances cannot be
//! recomputed), the posterior matrices, the three stream seeds, the number
//! of completed epochs, and the dropout keep-probability the run was
//! trained with (1.0 when dropout was off). Loading a checkpoint and
//! continuing therefore reproduces an uninterrupted run bit for bit.
//!
//! Layout (little-endian throughout, after the 4-byte magic):
//!
//! ```text
//! "EBP1" | mode u8 (0 binary, 1 real) | depth u32 | sizes (depth+1) x u32
//! | per layer: topology tag u8 (0 dense; 1 masked + in_h, in_w, block u32)
//! | per layer: h matrix f64s            (binary)
//!   per layer: mean then var matrix     (real)
//! | seed_init u64 | seed_shuffle u64 | seed_dropout u64
//! | epoch u32 | keep_prob f64
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::matrix::Matrix;
use crate::model::{Architecture, BinaryPosterior, LayerTopology, ModelError, Posterior, RealPosterior};
use crate::spatial::ConnectivityMask;

const MAGIC: &[u8; 4] = b"EBP1";
const MODE_BINARY: u8 = 0;
const MODE_REAL: u8 = 1;
const TAG_DENSE: u8 = 0;
const TAG_MASKED: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad checkpoint magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unknown posterior mode tag {0}")]
    BadMode(u8),
    #[error("unknown topology tag {0}")]
    BadTopologyTag(u8),
    #[error("invalid stored architecture: {0}")]
    Model(#[from] ModelError),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// The three independent stream seeds of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    /// Weight initialization.
    pub init: u64,
    /// Presentation order (and training-subset selection).
    pub shuffle: u64,
    /// Dropout masks.
    pub dropout: u64,
}

/// A posterior frozen mid-run, with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub posterior: Posterior,
    pub seeds: Seeds,
    /// Completed training epochs.
    pub epoch: u32,
    /// Keep-probability the run trains with; 1.0 means no dropout.
    pub keep_prob: f64,
}

fn write_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_matrix(w: &mut impl Write, m: &Matrix) -> io::Result<()> {
    for v in m.data() {
        write_f64(w, *v)?;
    }
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u8(r: &mut impl Read) -> io::Result<u8> {
    Ok(read_exact::<1>(r)?[0])
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    Ok(f64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_matrix(r: &mut impl Read, rows: usize, cols: usize) -> io::Result<Matrix> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(read_f64(r)?);
    }
    Ok(Matrix::from_vec(rows, cols, data))
}

fn write_architecture(w: &mut impl Write, arch: &Architecture) -> io::Result<()> {
    write_u32(w, arch.depth() as u32)?;
    for level in 0..=arch.depth() {
        write_u32(w, arch.size(level) as u32)?;
    }
    for l in 1..=arch.depth() {
        match arch.topology(l) {
            LayerTopology::Dense => w.write_all(&[TAG_DENSE])?,
            LayerTopology::Masked(mask) => {
                w.write_all(&[TAG_MASKED])?;
                let (h, width) = mask.input_grid();
                write_u32(w, h as u32)?;
                write_u32(w, width as u32)?;
                write_u32(w, mask.block() as u32)?;
            }
        }
    }
    Ok(())
}

fn read_architecture(r: &mut impl Read) -> Result<Architecture, CheckpointError> {
    let depth = read_u32(r)? as usize;
    if depth == 0 || depth > 1024 {
        return Err(CheckpointError::Corrupt(format!("implausible depth {depth}")));
    }
    let mut sizes = Vec::with_capacity(depth + 1);
    for _ in 0..=depth {
        sizes.push(read_u32(r)? as usize);
    }
    let mut topology = Vec::with_capacity(depth);
    for _ in 0..depth {
        match read_u8(r)? {
            TAG_DENSE => topology.push(LayerTopology::Dense),
            TAG_MASKED => {
                let h = read_u32(r)? as usize;
                let width = read_u32(r)? as usize;
                let block = read_u32(r)? as usize;
                let mask = ConnectivityMask::build((h, width), block)
                    .map_err(|e| CheckpointError::Model(ModelError::Topology(e)))?;
                topology.push(LayerTopology::Masked(mask));
            }
            tag => return Err(CheckpointError::BadTopologyTag(tag)),
        }
    }
    Ok(Architecture::with_topology(sizes, topology)?)
}

/// Serializes a checkpoint to any writer.
pub fn write_to(w: &mut impl Write, cp: &Checkpoint) -> Result<(), CheckpointError> {
    if !(cp.keep_prob > 0.0 && cp.keep_prob <= 1.0) {
        return Err(CheckpointError::Corrupt(format!("keep probability {} outside (0, 1]", cp.keep_prob)));
    }
    w.write_all(MAGIC)?;
    let arch = cp.posterior.arch();
    match &cp.posterior {
        Posterior::Binary(post) => {
            w.write_all(&[MODE_BINARY])?;
            write_architecture(w, arch)?;
            for m in post.layers() {
                write_matrix(w, m)?;
            }
        }
        Posterior::Real(post) => {
            w.write_all(&[MODE_REAL])?;
            write_architecture(w, arch)?;
            for l in 1..=arch.depth() {
                write_matrix(w, post.mean_layer(l))?;
                write_matrix(w, post.var_layer(l))?;
            }
        }
    }
    write_u64(w, cp.seeds.init)?;
    write_u64(w, cp.seeds.shuffle)?;
    write_u64(w, cp.seeds.dropout)?;
    write_u32(w, cp.epoch)?;
    write_f64(w, cp.keep_prob)?;
    Ok(())
}

/// Deserializes a checkpoint, validating magic, tags, architecture, and
/// the absence of trailing bytes.
pub fn read_from(r: &mut impl Read) -> Result<Checkpoint, CheckpointError> {
    let magic = read_exact::<4>(r)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let mode = read_u8(r)?;
    let arch = Arc::new(read_architecture(r)?);
    let posterior = match mode {
        MODE_BINARY => {
            let mut layers = Vec::with_capacity(arch.depth());
            for l in 1..=arch.depth() {
                let (rows, cols) = arch.weight_shape(l);
                layers.push(read_matrix(r, rows, cols)?);
            }
            Posterior::Binary(BinaryPosterior::from_parts(Arc::clone(&arch), layers)?)
        }
        MODE_REAL => {
            let mut means = Vec::with_capacity(arch.depth());
            let mut vars = Vec::with_capacity(arch.depth());
            for l in 1..=arch.depth() {
                let (rows, cols) = arch.weight_shape(l);
                means.push(read_matrix(r, rows, cols)?);
                vars.push(read_matrix(r, rows, cols)?);
            }
            Posterior::Real(RealPosterior::from_parts(Arc::clone(&arch), means, vars)?)
        }
        tag => return Err(CheckpointError::BadMode(tag)),
    };
    let seeds = Seeds { init: read_u64(r)?, shuffle: read_u64(r)?, dropout: read_u64(r)? };
    let epoch = read_u32(r)?;
    let keep_prob = read_f64(r)?;
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(CheckpointError::Corrupt(format!("keep probability {keep_prob} outside (0, 1]")));
    }
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => Ok(Checkpoint { posterior, seeds, epoch, keep_prob }),
        _ => Err(CheckpointError::Corrupt("trailing bytes after checkpoint".into())),
    }
}

/// Writes a checkpoint file.
pub fn save(path: &Path, cp: &Checkpoint) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_to(&mut w, cp)?;
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint file.
pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    read_from(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_binary() -> Checkpoint {
        let arch = Arc::new(Architecture::dense(&[4, 3, 2]).unwrap());
        Checkpoint {
            posterior: Posterior::Binary(BinaryPosterior::init(&arch, 11)),
            seeds: Seeds { init: 11, shuffle: 22, dropout: 33 },
            epoch: 7,
            keep_prob: 0.8,
        }
    }

    fn sample_real_masked() -> Checkpoint {
        let arch = Arc::new(Architecture::spatial((5, 5), &[3], 2).unwrap());
        Checkpoint {
            posterior: Posterior::Real(RealPosterior::init(&arch, 44)),
            seeds: Seeds { init: 44, shuffle: 55, dropout: 66 },
            epoch: 0,
            keep_prob: 1.0,
        }
    }

    fn round_trip(cp: &Checkpoint) -> Checkpoint {
        let mut bytes = Vec::new();
        write_to(&mut bytes, cp).unwrap();
        read_from(&mut bytes.as_slice()).unwrap()
    }

    #[test]
    fn binary_checkpoint_round_trips_bit_exactly() {
        let cp = sample_binary();
        assert_eq!(round_trip(&cp), cp);
    }

    #[test]
    fn masked_real_checkpoint_round_trips_with_topology() {
        let cp = sample_real_masked();
        let back = round_trip(&cp);
        assert_eq!(back, cp);
        // The restored architecture still knows its receptive fields.
        assert!(matches!(back.posterior.arch().topology(1), LayerTopology::Masked(_)));
        assert_eq!(back.posterior.arch().fan_in(1), 10);
    }

    #[test]
    fn file_round_trip_matches_memory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let cp = sample_binary();
        save(&path, &cp).unwrap();
        assert_eq!(load(&path).unwrap(), cp);
    }

    #[test]
    fn foreign_and_damaged_files_are_rejected() {
        let cp = sample_binary();
        let mut bytes = Vec::new();
        write_to(&mut bytes, &cp).unwrap();

        let mut wrong_magic = bytes.clone();
        wrong_magic[..4].copy_from_slice(b"NOPE");
        assert!(matches!(read_from(&mut wrong_magic.as_slice()), Err(CheckpointError::BadMagic(_))));

        let mut bad_mode = bytes.clone();
        bad_mode[4] = 9;
        assert!(matches!(read_from(&mut bad_mode.as_slice()), Err(CheckpointError::BadMode(9))));

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(read_from(&mut &truncated[..]), Err(CheckpointError::Io(_))));

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(read_from(&mut trailing.as_slice()), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn keep_probability_is_validated_on_both_ends() {
        let mut cp = sample_binary();
        cp.keep_prob = 0.0;
        let mut bytes = Vec::new();
        assert!(matches!(write_to(&mut bytes, &cp), Err(CheckpointError::Corrupt(_))));
    }
}
