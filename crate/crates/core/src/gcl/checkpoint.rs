//! Binary checkpoints of encoder parameters.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::{self, FormatError};
use crate::gcl::params::{EncoderParams, Objective};
use crate::graph::Layout;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MGCP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub layout: Layout,
    pub config_hash: u64,
}

/// Writes header, a `(name, rows, cols)` directory, then every tensor as 32-bit floats.
pub fn write_checkpoint(ckpt: &Checkpoint, w: &mut impl Write) -> std::io::Result<()> {
    let tensors = ckpt.params.named_tensors();
    w.write_all(&CHECKPOINT_MAGIC)?;
    binio::write_u32(w, CHECKPOINT_VERSION)?;
    binio::write_u8(w, ckpt.params.objective.tag())?;
    binio::write_u8(w, ckpt.layout.tag())?;
    binio::write_u64(w, ckpt.config_hash)?;
    binio::write_u32(w, tensors.len() as u32)?;
    for (name, t) in &tensors {
        binio::write_str(w, name)?;
        binio::write_u32(w, t.rows as u32)?;
        binio::write_u32(w, t.cols as u32)?;
    }
    for (_, t) in &tensors {
        binio::write_f32s(w, t.data.iter().map(|&x| x as f32))?;
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint, FormatError> {
    binio::read_magic(r, CHECKPOINT_MAGIC)?;
    let version = binio::read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let tag = binio::read_u8(r)?;
    let objective = Objective::from_tag(tag).ok_or_else(|| FormatError::Invalid(format!("objective tag {tag}")))?;
    let tag = binio::read_u8(r)?;
    let layout = Layout::from_tag(tag).ok_or_else(|| FormatError::Invalid(format!("layout tag {tag}")))?;
    let config_hash = binio::read_u64(r)?;
    let count = binio::read_u32(r)? as usize;
    let mut directory = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let name = binio::read_str(r)?;
        let rows = binio::read_u32(r)? as usize;
        let cols = binio::read_u32(r)? as usize;
        directory.push((name, rows, cols));
    }
    let dim = directory
        .iter()
        .find(|(n, _, _)| n == "encoder.w1")
        .map(|&(_, rows, _)| rows)
        .ok_or_else(|| FormatError::Invalid("missing tensor encoder.w1".into()))?;
    if dim == 0 || dim > 1 << 16 {
        return Err(FormatError::Invalid(format!("dimension {dim}")));
    }
    // the values are overwritten below; initialization only fixes shapes
    let mut params = EncoderParams::init(objective, dim, &mut ChaCha8Rng::seed_from_u64(0));
    let mut slots: HashMap<String, _> = params.named_tensors_mut().into_iter().collect();
    if slots.len() != directory.len() {
        return Err(FormatError::Invalid(format!("expected {} tensors for {objective}, found {}", slots.len(), directory.len())));
    }
    for (name, rows, cols) in &directory {
        let t = slots.get_mut(name).ok_or_else(|| FormatError::Invalid(format!("unexpected tensor {name}")))?;
        if (t.rows, t.cols) != (*rows, *cols) {
            return Err(FormatError::Invalid(format!("tensor {name} has shape {rows}x{cols}, expected {}x{}", t.rows, t.cols)));
        }
        let values = binio::read_f32s(r, rows * cols)?;
        if values.iter().any(|x| !x.is_finite()) {
            return Err(FormatError::Invalid(format!("non-finite value in {name}")));
        }
        t.data = values.into_iter().map(f64::from).collect();
    }
    drop(slots);
    Ok(Checkpoint { params, layout, config_hash })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_for_every_objective() {
        for o in Objective::ALL {
            let mut params = EncoderParams::init(o, 6, &mut ChaCha8Rng::seed_from_u64(3));
            params.round_to_f32();
            let ckpt = Checkpoint { params, layout: Layout::Opt, config_hash: 0xabcdef };
            let mut buf = Vec::new();
            write_checkpoint(&ckpt, &mut buf).unwrap();
            assert_eq!(&buf[..4], b"MGCP");
            let back = read_checkpoint(&mut buf.as_slice()).unwrap();
            assert_eq!(back, ckpt);
        }
    }

    #[test]
    fn corrupt_inputs_fail() {
        let params = EncoderParams::init(Objective::Bgrl, 4, &mut ChaCha8Rng::seed_from_u64(3));
        let ckpt = Checkpoint { params, layout: Layout::Slt, config_hash: 1 };
        let mut buf = Vec::new();
        write_checkpoint(&ckpt, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(matches!(read_checkpoint(&mut bad.as_slice()), Err(FormatError::Invalid(_))));
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(matches!(read_checkpoint(&mut bad.as_slice()), Err(FormatError::UnsupportedVersion(2))));
        buf.truncate(buf.len() - 1);
        assert!(read_checkpoint(&mut buf.as_slice()).is_err());
    }
}
