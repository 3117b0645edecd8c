//! Frame-wise phoneme posteriors: storage, PGRM1/CSV serialization and a
//! synthetic generator with known keyword placements.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::phoneme::{PhonemeInventory, PhonemeSeq};

pub const PGRM_MAGIC: &[u8; 6] = b"PGRM1\0";
pub const DEFAULT_FRAME_SHIFT_S: f32 = 0.01;
/// Allowed deviation of a row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum PgrmError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic bytes, expected PGRM1")]
    BadMagic,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("row {row} sums to {sum}, not 1")]
    RowNotNormalized { row: usize, sum: f64 },
    #[error("value {value} at row {row}, column {col} is not a probability")]
    ValueOutOfRange { row: usize, col: usize, value: f32 },
    #[error("file is truncated")]
    TruncatedFile,
    #[error("CSV header does not match the inventory: {0}")]
    HeaderMismatch(String),
    #[error("parse error at CSV record {record}: {message}")]
    ParseError { record: usize, message: String },
    #[error("keyword does not fit: needs frames up to {needed}, stream has {available}")]
    SpecOverflow { needed: usize, available: usize },
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PgrmError + '_ {
    move |source| PgrmError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Borrowed view of consecutive posteriorgram rows.
#[derive(Debug, Clone, Copy)]
pub struct Frames<'a> {
    values: &'a [f32],
    vocab_size: usize,
}

impl<'a> Frames<'a> {
    pub fn new(values: &'a [f32], vocab_size: usize) -> Self {
        assert!(vocab_size > 0 && values.len().is_multiple_of(vocab_size));
        Self { values, vocab_size }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.vocab_size
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn row(&self, t: usize) -> &'a [f32] {
        &self.values[t * self.vocab_size..(t + 1) * self.vocab_size]
    }

    pub fn rows(&self) -> impl Iterator<Item = &'a [f32]> + 'a {
        self.values.chunks_exact(self.vocab_size)
    }
}

/// T×V matrix of per-frame label probabilities; every row is a distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriorgram {
    values: Vec<f32>,
    vocab_size: usize,
    frame_shift_s: f32,
}

impl Posteriorgram {
    pub fn new(values: Vec<f32>, vocab_size: usize, frame_shift_s: f32) -> Result<Self, PgrmError> {
        if vocab_size == 0 {
            return Err(PgrmError::DimensionMismatch(
                "vocabulary size is zero".into(),
            ));
        }
        if values.is_empty() || !values.len().is_multiple_of(vocab_size) {
            return Err(PgrmError::DimensionMismatch(format!(
                "{} values do not form whole rows of width {vocab_size}",
                values.len()
            )));
        }
        if !(frame_shift_s.is_finite() && frame_shift_s > 0.0) {
            return Err(PgrmError::DimensionMismatch(format!(
                "frame shift {frame_shift_s} must be positive"
            )));
        }
        validate_rows(&values, vocab_size)?;
        Ok(Self {
            values,
            vocab_size,
            frame_shift_s,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>], frame_shift_s: f32) -> Result<Self, PgrmError> {
        let vocab = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != vocab) {
            return Err(PgrmError::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.concat(), vocab, frame_shift_s)
    }

    pub fn num_frames(&self) -> usize {
        self.values.len() / self.vocab_size
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn frame_shift_s(&self) -> f32 {
        self.frame_shift_s
    }

    pub fn duration_s(&self) -> f64 {
        self.num_frames() as f64 * shift_as_f64(self.frame_shift_s)
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.values[t * self.vocab_size..(t + 1) * self.vocab_size]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frames(&self) -> Frames<'_> {
        Frames::new(&self.values, self.vocab_size)
    }

    /// Rows `start..=end`.
    pub fn frames_range(&self, start: usize, end: usize) -> Frames<'_> {
        assert!(
            start <= end && end < self.num_frames(),
            "frame range out of bounds"
        );
        Frames::new(
            &self.values[start * self.vocab_size..(end + 1) * self.vocab_size],
            self.vocab_size,
        )
    }

    pub fn check_inventory(&self, inv: &PhonemeInventory) -> Result<(), PgrmError> {
        if inv.len() != self.vocab_size {
            return Err(PgrmError::DimensionMismatch(format!(
                "posteriorgram has {} columns, inventory has {} symbols",
                self.vocab_size,
                inv.len()
            )));
        }
        Ok(())
    }
}

fn validate_rows(values: &[f32], vocab_size: usize) -> Result<(), PgrmError> {
    for (row, chunk) in values.chunks_exact(vocab_size).enumerate() {
        let mut sum = 0.0f64;
        for (col, &value) in chunk.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(PgrmError::ValueOutOfRange { row, col, value });
            }
            sum += f64::from(value);
        }
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(PgrmError::RowNotNormalized { row, sum });
        }
    }
    Ok(())
}

/// Widens a frame shift through its shortest decimal form, so `0.01f32`
/// becomes exactly `0.01`.
pub fn shift_as_f64(frame_shift_s: f32) -> f64 {
    frame_shift_s
        .to_string()
        .parse()
        .expect("a float prints as a parsable decimal")
}

pub fn encode_pgrm(pg: &Posteriorgram) -> Vec<u8> {
    let mut out = Vec::with_capacity(18 + pg.values.len() * 4);
    out.extend_from_slice(PGRM_MAGIC);
    out.extend_from_slice(&(pg.num_frames() as u32).to_le_bytes());
    out.extend_from_slice(&(pg.vocab_size as u32).to_le_bytes());
    out.extend_from_slice(&pg.frame_shift_s.to_le_bytes());
    for v in &pg.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn le_u32(bytes: &[u8], at: usize) -> Result<u32, PgrmError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or(PgrmError::TruncatedFile)
}

pub fn decode_pgrm(bytes: &[u8]) -> Result<Posteriorgram, PgrmError> {
    if bytes.len() < PGRM_MAGIC.len() {
        return Err(PgrmError::TruncatedFile);
    }
    if &bytes[..6] != PGRM_MAGIC {
        return Err(PgrmError::BadMagic);
    }
    let frames = le_u32(bytes, 6)? as usize;
    let vocab = le_u32(bytes, 10)? as usize;
    let shift = f32::from_bits(le_u32(bytes, 14)?);
    let count = frames
        .checked_mul(vocab)
        .ok_or_else(|| PgrmError::DimensionMismatch("header dimensions overflow".into()))?;
    let body = &bytes[18.min(bytes.len())..];
    if body.len() < count * 4 {
        return Err(PgrmError::TruncatedFile);
    }
    if body.len() > count * 4 {
        return Err(PgrmError::DimensionMismatch(format!(
            "{} trailing bytes after {frames}x{vocab} values",
            body.len() - count * 4
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Posteriorgram::new(values, vocab, shift)
}

pub fn write_pgrm(pg: &Posteriorgram, path: impl AsRef<Path>) -> Result<(), PgrmError> {
    let path = path.as_ref();
    fs::write(path, encode_pgrm(pg)).map_err(io_err(path))
}

pub fn read_pgrm(path: impl AsRef<Path>) -> Result<Posteriorgram, PgrmError> {
    let path = path.as_ref();
    decode_pgrm(&fs::read(path).map_err(io_err(path))?)
}

/// Reads a CSV posteriorgram whose header lists the inventory symbols in order.
pub fn read_csv(
    path: impl AsRef<Path>,
    inv: &PhonemeInventory,
    frame_shift_s: f32,
) -> Result<Posteriorgram, PgrmError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    parse_csv(file, inv, frame_shift_s)
}

pub fn parse_csv(
    reader: impl std::io::Read,
    inv: &PhonemeInventory,
    frame_shift_s: f32,
) -> Result<Posteriorgram, PgrmError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| PgrmError::HeaderMismatch(e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != inv.symbols() {
        return Err(PgrmError::HeaderMismatch(format!(
            "expected {} inventory symbols in order, got {:?}",
            inv.len(),
            names.iter().take(4).collect::<Vec<_>>()
        )));
    }
    let mut values = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| PgrmError::ParseError {
            record: i + 1,
            message: e.to_string(),
        })?;
        for field in record.iter() {
            let v: f32 = field.trim().parse().map_err(|_| PgrmError::ParseError {
                record: i + 1,
                message: format!("{field:?} is not a number"),
            })?;
            values.push(v);
        }
    }
    Posteriorgram::new(values, inv.len(), frame_shift_s)
}

/// Writes a CSV posteriorgram. Values use the shortest representation that
/// parses back to the same `f32`.
pub fn write_csv(
    pg: &Posteriorgram,
    inv: &PhonemeInventory,
    path: impl AsRef<Path>,
) -> Result<(), PgrmError> {
    pg.check_inventory(inv)?;
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "{}", inv.symbols().join(","))?;
        for row in pg.frames().rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()
    };
    write().map_err(io_err(path))
}

/// One synthesized keyword occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub keyword: PhonemeSeq,
    pub total_frames: usize,
    pub frames_per_phoneme: usize,
    pub insert_at: usize,
    pub peak_prob: f64,
    pub seed: u64,
}

/// Frames occupied by a planted keyword, inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub start_frame: usize,
    pub end_frame: usize,
    pub keyword: PhonemeSeq,
}

/// A keyword placement inside a multi-keyword synthetic stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub keyword: PhonemeSeq,
    pub insert_at: usize,
    pub frames_per_phoneme: usize,
}

/// Row with `peak` on `target` and the remainder spread evenly over the
/// other symbols, before jitter.
pub fn base_row(target: usize, peak: f64, vocab_size: usize) -> Vec<f64> {
    let rest = (1.0 - peak) / (vocab_size - 1) as f64;
    (0..vocab_size)
        .map(|i| if i == target { peak } else { rest })
        .collect()
}

pub fn synthesize(
    spec: &SynthSpec,
    inv: &PhonemeInventory,
) -> Result<(Posteriorgram, GroundTruth), PgrmError> {
    let plant = Plant {
        keyword: spec.keyword.clone(),
        insert_at: spec.insert_at,
        frames_per_phoneme: spec.frames_per_phoneme,
    };
    let (pg, mut truths) = synthesize_stream(
        spec.total_frames,
        std::slice::from_ref(&plant),
        spec.peak_prob,
        spec.seed,
        inv,
    )?;
    Ok((pg, truths.remove(0)))
}

/// Synthesizes a stream with any number of non-overlapping plants. Background
/// frames peak on blank; plant frames peak on the current keyword phoneme,
/// except that the first frame of a phoneme repeating its predecessor peaks
/// on blank.
/// Each row then receives multiplicative jitter `u ~ U[1-e, 1+e]` per entry,
/// `e = 0.2 (1 - peak)`, and is renormalized.
pub fn synthesize_stream(
    total_frames: usize,
    plants: &[Plant],
    peak_prob: f64,
    seed: u64,
    inv: &PhonemeInventory,
) -> Result<(Posteriorgram, Vec<GroundTruth>), PgrmError> {
    let vocab = inv.len();
    if total_frames == 0 {
        return Err(PgrmError::InvalidSpec(
            "total_frames must be at least 1".into(),
        ));
    }
    if !(peak_prob > 1.0 / vocab as f64 && peak_prob <= 1.0) {
        return Err(PgrmError::InvalidSpec(format!(
            "peak_prob {peak_prob} must lie in (1/{vocab}, 1]"
        )));
    }
    let mut targets = vec![inv.blank_index(); total_frames];
    let mut occupied = vec![false; total_frames];
    let mut truths = Vec::with_capacity(plants.len());
    for plant in plants {
        if plant.frames_per_phoneme == 0 {
            return Err(PgrmError::InvalidSpec(
                "frames_per_phoneme must be at least 1".into(),
            ));
        }
        let span = plant.keyword.len() * plant.frames_per_phoneme;
        let needed = plant.insert_at + span;
        if needed > total_frames {
            return Err(PgrmError::SpecOverflow {
                needed,
                available: total_frames,
            });
        }
        let tokens = plant.keyword.tokens();
        let repeats = tokens.windows(2).any(|w| w[0] == w[1]);
        if repeats && plant.frames_per_phoneme < 2 {
            return Err(PgrmError::InvalidSpec(
                "a repeated phoneme needs frames_per_phoneme of at least 2".into(),
            ));
        }
        for (i, &tok) in tokens.iter().enumerate() {
            let from = plant.insert_at + i * plant.frames_per_phoneme;
            let repeat = i > 0 && tokens[i - 1] == tok;
            for t in from..from + plant.frames_per_phoneme {
                if occupied[t] {
                    return Err(PgrmError::InvalidSpec(format!(
                        "plants overlap at frame {t}"
                    )));
                }
                occupied[t] = true;
                targets[t] = if repeat && t == from {
                    inv.blank_index()
                } else {
                    tok
                };
            }
        }
        truths.push(GroundTruth {
            start_frame: plant.insert_at,
            end_frame: needed - 1,
            keyword: plant.keyword.clone(),
        });
    }

    let eps = 0.2 * (1.0 - peak_prob);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(total_frames * vocab);
    for &target in &targets {
        let mut row = base_row(target, peak_prob, vocab);
        for v in row.iter_mut() {
            *v *= rng.random_range(1.0 - eps..=1.0 + eps);
        }
        let sum: f64 = row.iter().sum();
        values.extend(row.iter().map(|v| (v / sum) as f32));
    }
    let pg = Posteriorgram::new(values, vocab, DEFAULT_FRAME_SHIFT_S)?;
    Ok((pg, truths))
}
