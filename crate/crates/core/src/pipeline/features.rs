//! FEAT1 feature matrices: magic, u32 rows, u32 columns, then f32 values
//! row-major, little-endian.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::PipelineError;

pub const FEAT_MAGIC: &[u8; 6] = b"FEAT1\0";

pub fn encode_features(f: &Array2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(14 + f.len() * 4);
    out.extend_from_slice(FEAT_MAGIC);
    out.extend_from_slice(&(f.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(f.ncols() as u32).to_le_bytes());
    for v in f.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

fn bad(msg: impl Into<String>) -> PipelineError {
    PipelineError::DimensionMismatch(format!("feature file: {}", msg.into()))
}

pub fn decode_features(bytes: &[u8]) -> Result<Array2<f64>, PipelineError> {
    if bytes.len() < 14 {
        return Err(bad("truncated header"));
    }
    if &bytes[..6] != FEAT_MAGIC {
        return Err(bad("bad magic, expected FEAT1"));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    let body = &bytes[14..];
    if Some(body.len()) != rows.checked_mul(cols).and_then(|n| n.checked_mul(4)) {
        return Err(bad(format!("{} body bytes for {rows}x{cols}", body.len())));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

pub fn write_features(f: &Array2<f64>, path: impl AsRef<Path>) -> Result<(), PipelineError> {
    let path = path.as_ref();
    fs::write(path, encode_features(f)).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Array2<f64>, PipelineError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_features(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_of_f32_values() {
        let f = Array2::from_shape_fn((3, 2), |(r, c)| f64::from((r * 2 + c) as f32 * 0.3f32));
        assert_eq!(decode_features(&encode_features(&f)).unwrap(), f);
        let bytes = encode_features(&f);
        assert!(decode_features(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_features(b"PGRM1\0\0\0\0\0\0\0\0\0").is_err());
    }
}
