use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Corpus, TextRecord, VideoRecord};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Parameters of the synthetic multi-event corpus.
///
/// Each video contains `events_per_video` latent events; its tokens are noisy
/// images of the event centers and each caption describes exactly one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_videos: usize,
    pub captions_per_video: usize,
    pub events_per_video: usize,
    pub latent_dim: usize,
    /// Tokens per video including the class token.
    pub tokens: usize,
    pub token_dim: usize,
    pub text_dim: usize,
    pub token_noise: f64,
    pub caption_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_videos: 64,
            captions_per_video: 3,
            events_per_video: 3,
            latent_dim: 16,
            tokens: 13,
            token_dim: 32,
            text_dim: 24,
            token_noise: 0.1,
            caption_noise: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_videos", self.num_videos),
            ("captions_per_video", self.captions_per_video),
            ("events_per_video", self.events_per_video),
            ("latent_dim", self.latent_dim),
            ("tokens", self.tokens),
            ("token_dim", self.token_dim),
            ("text_dim", self.text_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Argument(format!("synth: {name} must be at least 1")));
        }
        if self.tokens < self.events_per_video + 1 {
            return Err(Error::Argument(format!(
                "synth: tokens ({}) must be at least events_per_video + 1 ({})",
                self.tokens,
                self.events_per_video + 1
            )));
        }
        for (name, v) in [("token_noise", self.token_noise), ("caption_noise", self.caption_noise)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Argument(format!(
                    "synth: {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

fn gaussian_matrix(rng: &mut RngStream, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| scale * rng.normal()).collect();
    Matrix::from_vec(rows, cols, data).expect("sized above")
}

fn add_noise(rng: &mut RngStream, row: &mut [f64], std: f64) {
    if std > 0.0 {
        row.iter_mut().for_each(|x| *x += std * rng.normal());
    }
}

/// Generates a corpus deterministically from `cfg`.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = RngStream::new(cfg.seed);
    // Shared latent → token / text maps; scaled so mapped vectors have O(1) entries.
    let scale = 1.0 / libm::sqrt(cfg.latent_dim as f64);
    let to_tokens = gaussian_matrix(&mut rng, cfg.latent_dim, cfg.token_dim, scale);
    let to_text = gaussian_matrix(&mut rng, cfg.latent_dim, cfg.text_dim, scale);

    let mut videos = Vec::with_capacity(cfg.num_videos);
    let mut texts = Vec::with_capacity(cfg.num_videos * cfg.captions_per_video);
    for v in 0..cfg.num_videos {
        let centers = gaussian_matrix(&mut rng, cfg.events_per_video, cfg.latent_dim, 1.0);
        let token_images = centers.matmul(&to_tokens)?;
        let text_images = centers.matmul(&to_text)?;

        let mut tokens = Matrix::zeros(cfg.tokens, cfg.token_dim);
        for j in 1..cfg.tokens {
            let event = (j - 1) % cfg.events_per_video;
            let row = tokens.row_mut(j);
            row.copy_from_slice(token_images.row(event));
            add_noise(&mut rng, row, cfg.token_noise);
        }
        let inv = 1.0 / (cfg.tokens - 1) as f64;
        for c in 0..cfg.token_dim {
            let mean = (1..cfg.tokens).map(|j| tokens[(j, c)]).sum::<f64>() * inv;
            tokens[(0, c)] = mean;
        }
        add_noise(&mut rng, tokens.row_mut(0), cfg.token_noise);

        let video_id = format!("v{v:04}");
        for c in 0..cfg.captions_per_video {
            let event = rng.below(cfg.events_per_video);
            let mut features = text_images.row(event).to_vec();
            add_noise(&mut rng, &mut features, cfg.caption_noise);
            texts.push(TextRecord {
                id: format!("t{v:04}_{c}"),
                video_id: video_id.clone(),
                features,
                event_label: Some(event as u32),
            });
        }
        videos.push(VideoRecord { id: video_id, tokens });
    }
    Corpus::new(videos, texts)
}
