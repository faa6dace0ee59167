//! Flat binary silo export/import for fixed-corpus regression tests.
//!
//! Layout: header `(count: u64, h: u32, w: u32)` followed by per-sample
//! source then target payloads as little-endian f64. Subject ids are
//! positional.

use std::io::{Read, Write};
use std::path::Path;

use crate::data::PairedSample;
use crate::error::{Error, Result};
use crate::tensor::TensorBuffer;

pub fn export_silo<W: Write>(samples: &[PairedSample], mut out: W) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to export"));
    }
    let shape = samples[0].source.shape().to_vec();
    let (h, w) = (shape[0], shape[1]);
    for s in samples {
        if s.source.shape() != shape.as_slice() || s.target.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: shape,
                actual: s.source.shape().to_vec(),
            });
        }
    }
    out.write_all(&(samples.len() as u64).to_le_bytes())?;
    out.write_all(&(h as u32).to_le_bytes())?;
    out.write_all(&(w as u32).to_le_bytes())?;
    for s in samples {
        for img in [&s.source, &s.target] {
            for v in img.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn import_silo<R: Read>(mut input: R) -> Result<Vec<PairedSample>> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    let count = u64::from_le_bytes(header[0..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    if count == 0 || h == 0 || w == 0 || count > 1_000_000 {
        return Err(Error::Decode("implausible silo header".into()));
    }
    let read_image = |input: &mut R| -> Result<TensorBuffer> {
        let mut buf = vec![0u8; h * w * 8];
        input.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        TensorBuffer::new(vec![h, w], data)
    };
    let mut samples = Vec::with_capacity(count);
    for subject in 0..count {
        let source = read_image(&mut input)?;
        let target = read_image(&mut input)?;
        samples.push(PairedSample {
            source,
            target,
            subject_id: subject as u32,
        });
    }
    Ok(samples)
}

pub fn write_silo_file<P: AsRef<Path>>(samples: &[PairedSample], path: P) -> Result<()> {
    let file = std::fs::File::create(path)?;
    export_silo(samples, std::io::BufWriter::new(file))
}

pub fn read_silo_file<P: AsRef<Path>>(path: P) -> Result<Vec<PairedSample>> {
    let file = std::fs::File::open(path)?;
    import_silo(std::io::BufReader::new(file))
}
