//! Binary snapshot formats.
//!
//! Batch stream (little endian):
//!
//! ```text
//! magic "SRLB" | version u8 | provenance u8 (0 raw, 1 reshuffled) | pairs u32
//! per pair:  record_len u32 | rank u32 | weight f64 | hi | lo
//! trajectory: query_id u64 | rollout_index u32 | n u32 | tokens u32 x n
//!             | old_logprobs f64 x n | reward f64 | advantage f64
//! ```
//!
//! Checkpoint:
//!
//! ```text
//! magic "SRCK" | version u8 | vocab_size u32 | max_depth u32 | count u64 | logits f64 x count
//! ```
//!
//! Scalars are always stored as `f64`, which is lossless for `f32` tables.

use thiserror::Error;

use crate::error::Error;
use crate::policy::Policy;
use crate::scalar::Scalar;
use crate::types::{Provenance, TrainBatch, Trajectory, TrajectoryPair};

pub const BATCH_MAGIC: [u8; 4] = *b"SRLB";
pub const BATCH_VERSION: u8 = 1;
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SRCK";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("payload truncated at byte {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("decoded value violates an invariant: {0}")]
    Invariant(#[from] Error),
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let left = self.bytes.len() - self.pos;
        if left < n {
            return Err(CodecError::Truncated {
                offset: self.pos,
                needed: n - left,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn put_f<F: Scalar>(out: &mut Vec<u8>, v: F) {
    out.extend_from_slice(&v.to_f64_lossless().to_le_bytes());
}

fn encode_trajectory<F: Scalar>(out: &mut Vec<u8>, t: &Trajectory<F>) {
    out.extend_from_slice(&t.query_id.to_le_bytes());
    out.extend_from_slice(&t.rollout_index.to_le_bytes());
    out.extend_from_slice(&(t.tokens.len() as u32).to_le_bytes());
    for tok in &t.tokens {
        out.extend_from_slice(&tok.to_le_bytes());
    }
    for &lp in &t.old_logprobs {
        put_f(out, lp);
    }
    put_f(out, t.reward);
    put_f(out, t.advantage);
}

fn decode_trajectory<F: Scalar>(r: &mut Reader<'_>) -> Result<Trajectory<F>, CodecError> {
    let query_id = r.u64()?;
    let rollout_index = r.u32()?;
    let n = r.u32()? as usize;
    // bound the allocation by what is actually left
    if n > r.remaining() / 12 {
        return Err(CodecError::Truncated {
            offset: r.pos,
            needed: n * 12 - r.remaining(),
        });
    }
    let tokens = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let old_logprobs = (0..n)
        .map(|_| r.f64().map(F::from_f64_exact))
        .collect::<Result<Vec<_>, _>>()?;
    let reward = F::from_f64_exact(r.f64()?);
    let advantage = F::from_f64_exact(r.f64()?);
    Ok(Trajectory {
        query_id,
        rollout_index,
        tokens,
        old_logprobs,
        reward,
        advantage,
    })
}

pub fn serialize_batch<F: Scalar>(batch: &TrainBatch<F>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&BATCH_MAGIC);
    out.push(BATCH_VERSION);
    out.push(match batch.provenance {
        Provenance::Raw => 0,
        Provenance::Reshuffled => 1,
    });
    out.extend_from_slice(&(batch.pairs.len() as u32).to_le_bytes());
    let mut record = Vec::new();
    for p in &batch.pairs {
        record.clear();
        record.extend_from_slice(&p.rank.to_le_bytes());
        put_f(&mut record, p.weight);
        encode_trajectory(&mut record, &p.hi);
        encode_trajectory(&mut record, &p.lo);
        out.extend_from_slice(&(record.len() as u32).to_le_bytes());
        out.extend_from_slice(&record);
    }
    out
}

pub fn deserialize_batch<F: Scalar>(bytes: &[u8]) -> Result<TrainBatch<F>, CodecError> {
    let mut r = Reader::new(bytes);
    let magic = r
        .take(4)
        .map_err(|_| CodecError::MalformedHeader("shorter than the magic".into()))?;
    if magic != BATCH_MAGIC {
        return Err(CodecError::MalformedHeader(format!("bad magic {magic:?}")));
    }
    let version = r.u8()?;
    if version != BATCH_VERSION {
        return Err(CodecError::MalformedHeader(format!(
            "unsupported version {version}"
        )));
    }
    let provenance = match r.u8()? {
        0 => Provenance::Raw,
        1 => Provenance::Reshuffled,
        other => {
            return Err(CodecError::MalformedHeader(format!(
                "unknown provenance tag {other}"
            )))
        }
    };
    let count = r.u32()? as usize;
    let mut pairs = Vec::with_capacity(count.min(r.remaining() / 4));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let body = r.take(len)?;
        let mut rec = Reader::new(body);
        let rank = rec.u32()?;
        let weight = F::from_f64_exact(rec.f64()?);
        let hi = decode_trajectory(&mut rec)?;
        let lo = decode_trajectory(&mut rec)?;
        if rec.remaining() != 0 {
            return Err(CodecError::MalformedRecord(format!(
                "{} unread bytes in pair record",
                rec.remaining()
            )));
        }
        let pair = TrajectoryPair {
            hi,
            lo,
            rank,
            weight,
        };
        pair.validate()?;
        pairs.push(pair);
    }
    if r.remaining() != 0 {
        return Err(CodecError::MalformedRecord(format!(
            "{} trailing bytes after the last pair",
            r.remaining()
        )));
    }
    Ok(TrainBatch { pairs, provenance })
}

pub fn encode_checkpoint<F: Scalar>(policy: &Policy<F>) -> Vec<u8> {
    let logits = policy.logits();
    let mut out = Vec::with_capacity(21 + 8 * logits.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&policy.vocab_size().to_le_bytes());
    out.extend_from_slice(&(policy.max_depth() as u32).to_le_bytes());
    out.extend_from_slice(&(logits.len() as u64).to_le_bytes());
    for &l in logits {
        put_f(&mut out, l);
    }
    out
}

pub fn decode_checkpoint<F: Scalar>(bytes: &[u8]) -> Result<Policy<F>, CodecError> {
    let mut r = Reader::new(bytes);
    let magic = r
        .take(4)
        .map_err(|_| CodecError::MalformedHeader("shorter than the magic".into()))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(CodecError::MalformedHeader(format!("bad magic {magic:?}")));
    }
    let version = r.u8()?;
    if version != CHECKPOINT_VERSION {
        return Err(CodecError::MalformedHeader(format!(
            "unsupported version {version}"
        )));
    }
    let vocab = r.u32()?;
    let depth = r.u32()? as usize;
    let count = r.u64()? as usize;
    if count > r.remaining() / 8 {
        return Err(CodecError::Truncated {
            offset: r.pos,
            needed: count * 8 - r.remaining(),
        });
    }
    let logits = (0..count)
        .map(|_| r.f64().map(F::from_f64_exact))
        .collect::<Result<Vec<_>, _>>()?;
    if r.remaining() != 0 {
        return Err(CodecError::MalformedRecord("trailing bytes".into()));
    }
    Ok(Policy::from_logits(vocab, depth, logits)?)
}
