//! Versioned binary checkpoint encoding.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "TMVMCKPT" | version u32
//! dims: token_dim, text_dim, embed_dim, k                        (u64 x4)
//! config: batch_size, epochs, warmup_epochs (u64), peak_lr, gamma,
//!         epsilon, alpha, tau (f64), seed (u64), variant (u8),
//!         checkpoint_every (u64), k (u64), embed_dim (u64)
//! progress: epoch, step, adam_step                                (u64 x3)
//! rng: seed u64, stream u64, word_pos u128
//! tensors: values, first moments, second moments; each group holds mask_w,
//!          mask_b, vproj_w, tproj_w as row-major f64
//! history: count u64, then (step u64, epoch u64, lr, contrastive,
//!          variance, total f64) per record
//! ```
//!
//! Tensors are stored at full 64-bit width so that a resumed run continues
//! bit-exactly.

use alloc::format;
use alloc::vec::Vec;

use super::{StepRecord, TrainConfig};
use crate::error::{Error, Result};
use crate::losses::{LossBreakdown, LossConfig};
use crate::numerics::{AdamState, Matrix, ParamTensor, RngState};
use crate::prototypes::{HeadParameters, Variant};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TMVMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointState {
    pub config: TrainConfig,
    pub params: HeadParameters,
    pub adam: AdamState,
    pub rng: RngState,
    pub epoch: usize,
    pub step: usize,
    pub history: Vec<StepRecord>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn raw_u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn matrix(&mut self, m: &Matrix) {
        m.as_slice().iter().for_each(|&v| self.f64(v));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn raw_u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn u64(&mut self, what: &str) -> Result<usize> {
        let v = self.raw_u64(what)?;
        usize::try_from(v).map_err(|_| Error::Checkpoint(format!("{what} out of range: {v}")))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint(format!("{what} shape overflows")))?;
        let bytes = self.take(n.saturating_mul(8), what)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

fn variant_code(v: Variant) -> u8 {
    match v {
        Variant::Mask => 0,
        Variant::Part => 1,
        Variant::Baseline => 2,
    }
}

pub fn encode_checkpoint(state: &CheckpointState) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.0.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let p = &state.params;
    for d in [p.token_dim(), p.text_dim(), p.embed_dim(), p.k()] {
        w.u64(d);
    }
    let c = &state.config;
    w.u64(c.batch_size);
    w.u64(c.epochs);
    w.u64(c.warmup_epochs);
    for v in [c.peak_lr, c.loss.gamma, c.loss.epsilon, c.loss.alpha, c.loss.tau] {
        w.f64(v);
    }
    w.raw_u64(c.seed);
    w.0.push(variant_code(c.variant));
    w.u64(c.checkpoint_every);
    w.u64(c.k);
    w.u64(c.embed_dim);

    w.u64(state.epoch);
    w.u64(state.step);
    w.raw_u64(state.adam.step);
    w.raw_u64(state.rng.seed);
    w.raw_u64(state.rng.stream);
    w.0.extend_from_slice(&state.rng.word_pos.to_le_bytes());

    for t in p.tensors() {
        w.matrix(&t.value);
    }
    for m in state.adam.first.iter().chain(&state.adam.second) {
        w.matrix(m);
    }
    w.u64(state.history.len());
    for r in &state.history {
        w.u64(r.step);
        w.u64(r.epoch);
        for v in [r.lr, r.loss.contrastive, r.loss.variance, r.loss.total] {
            w.f64(v);
        }
    }
    w.0
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<CheckpointState> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let token_dim = r.u64("token_dim")?;
    let text_dim = r.u64("text_dim")?;
    let embed_dim = r.u64("embed_dim")?;
    let k = r.u64("k")?;

    let batch_size = r.u64("batch_size")?;
    let epochs = r.u64("epochs")?;
    let warmup_epochs = r.u64("warmup_epochs")?;
    let peak_lr = r.f64("peak_lr")?;
    let loss = LossConfig {
        gamma: r.f64("gamma")?,
        epsilon: r.f64("epsilon")?,
        alpha: r.f64("alpha")?,
        tau: r.f64("tau")?,
    };
    let seed = r.raw_u64("seed")?;
    let variant = match r.take(1, "variant")?[0] {
        0 => Variant::Mask,
        1 => Variant::Part,
        2 => Variant::Baseline,
        other => return Err(Error::Checkpoint(format!("unknown variant code {other}"))),
    };
    let checkpoint_every = r.u64("checkpoint_every")?;
    let config = TrainConfig {
        k: r.u64("config k")?,
        embed_dim: r.u64("config embed_dim")?,
        batch_size,
        epochs,
        warmup_epochs,
        peak_lr,
        loss,
        seed,
        variant,
        checkpoint_every,
    };

    let epoch = r.u64("epoch")?;
    let step = r.u64("step")?;
    let adam_step = r.raw_u64("adam step")?;
    let rng = RngState {
        seed: r.raw_u64("rng seed")?,
        stream: r.raw_u64("rng stream")?,
        word_pos: u128::from_le_bytes(r.take(16, "rng position")?.try_into().expect("16 bytes")),
    };

    let shapes = [(token_dim, k), (1, k), (token_dim, embed_dim), (text_dim, embed_dim)];
    let mut read_group =
        |what: &str| -> Result<Vec<Matrix>> { shapes.iter().map(|&(rows, cols)| r.matrix(rows, cols, what)).collect() };
    let values = read_group("parameters")?;
    let first = read_group("first moments")?;
    let second = read_group("second moments")?;
    let mut it = values.into_iter().map(ParamTensor::new);
    let params = HeadParameters {
        mask_w: it.next().expect("4 tensors"),
        mask_b: it.next().expect("4 tensors"),
        vproj_w: it.next().expect("4 tensors"),
        tproj_w: it.next().expect("4 tensors"),
    };

    let count = r.u64("history length")?;
    let mut history = Vec::with_capacity(count.min(bytes.len() / 48));
    for _ in 0..count {
        let step = r.u64("history step")?;
        let epoch = r.u64("history epoch")?;
        let lr = r.f64("history lr")?;
        let loss = LossBreakdown {
            contrastive: r.f64("history contrastive")?,
            variance: r.f64("history variance")?,
            total: r.f64("history total")?,
        };
        history.push(StepRecord { step, epoch, lr, loss });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(CheckpointState {
        config,
        params,
        adam: AdamState {
            first,
            second,
            step: adam_step,
        },
        rng,
        epoch,
        step,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_corpus, SynthConfig};
    use crate::trainer::Trainer;

    fn state_after(epochs_run: usize) -> (CheckpointState, crate::dataset::Corpus) {
        let corpus = synth_corpus(&SynthConfig {
            num_videos: 6,
            captions_per_video: 2,
            latent_dim: 4,
            tokens: 5,
            token_dim: 6,
            text_dim: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        let cfg = TrainConfig {
            embed_dim: 4,
            batch_size: 3,
            epochs: 4,
            warmup_epochs: 1,
            peak_lr: 1e-2,
            k: 2,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(cfg, &corpus).unwrap();
        for _ in 0..epochs_run {
            t.run_epoch(&corpus).unwrap();
        }
        (t.checkpoint(), corpus)
    }

    #[test]
    fn round_trip() {
        let (state, _) = state_after(2);
        let bytes = encode_checkpoint(&state);
        assert_eq!(decode_checkpoint(&bytes).unwrap(), state);
    }

    #[test]
    fn resume_is_bit_exact() {
        let (full, corpus) = state_after(4);
        let (mid, _) = state_after(2);
        let mut resumed = Trainer::resume(decode_checkpoint(&encode_checkpoint(&mid)).unwrap(), &corpus).unwrap();
        while !resumed.is_finished() {
            resumed.run_epoch(&corpus).unwrap();
        }
        assert_eq!(resumed.checkpoint(), full);
    }

    #[test]
    fn wrong_version() {
        let (state, _) = state_after(0);
        let mut bytes = encode_checkpoint(&state);
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert_eq!(
            decode_checkpoint(&bytes).unwrap_err(),
            Error::CheckpointVersion { found: 7, expected: 1 }
        );
    }

    #[test]
    fn truncated_and_garbage() {
        let (state, _) = state_after(1);
        let bytes = encode_checkpoint(&state);
        for cut in [0, 5, 40, bytes.len() - 1] {
            assert!(matches!(decode_checkpoint(&bytes[..cut]), Err(Error::Checkpoint(_))));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        assert!(decode_checkpoint(b"NOTACKPT\x01\0\0\0").is_err());
    }
}
