//! Flat `key = value` run configuration.
//!
//! A config file holds one assignment per line; `#` starts a comment. Command
//! line overrides are applied afterwards in order. Unknown keys, duplicate
//! keys within a file and unparsable values are rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use tmvm_core::dataset::SynthConfig;
use tmvm_core::diagnostics::DEFAULT_PAIR_CAP;
use tmvm_core::eval::Directions;
use tmvm_core::prototypes::Variant;
use tmvm_core::trainer::TrainConfig;

use crate::error::{Error, Result};

/// Text vectors used by the ambiguity diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextSpace {
    Raw,
    Projected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub train: TrainConfig,
    /// Manifest to load instead of generating a synthetic corpus.
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub video_id: Option<String>,
    pub directions: Directions,
    pub text_space: TextSpace,
    pub pair_cap: usize,
    pub gradcheck_seeds: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
            corpus: None,
            checkpoint: None,
            resume: None,
            video_id: None,
            directions: Directions::Both,
            text_space: TextSpace::Raw,
            pair_cap: DEFAULT_PAIR_CAP,
            gradcheck_seeds: 20,
        }
    }
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "seed",
    "num_videos",
    "captions_per_video",
    "events_per_video",
    "latent_dim",
    "tokens",
    "token_dim",
    "text_dim",
    "token_noise",
    "caption_noise",
    "variant",
    "k",
    "embed_dim",
    "batch_size",
    "epochs",
    "warmup_epochs",
    "peak_lr",
    "checkpoint_every",
    "gamma",
    "epsilon",
    "alpha",
    "tau",
    "corpus",
    "checkpoint",
    "resume",
    "video_id",
    "directions",
    "text_space",
    "pair_cap",
    "gradcheck_seeds",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let s = &mut self.synth;
        let t = &mut self.train;
        match key {
            "seed" => {
                let seed = parse(key, value)?;
                s.seed = seed;
                t.seed = seed;
            }
            "num_videos" => s.num_videos = parse(key, value)?,
            "captions_per_video" => s.captions_per_video = parse(key, value)?,
            "events_per_video" => s.events_per_video = parse(key, value)?,
            "latent_dim" => s.latent_dim = parse(key, value)?,
            "tokens" => s.tokens = parse(key, value)?,
            "token_dim" => s.token_dim = parse(key, value)?,
            "text_dim" => s.text_dim = parse(key, value)?,
            "token_noise" => s.token_noise = parse(key, value)?,
            "caption_noise" => s.caption_noise = parse(key, value)?,
            "variant" => {
                t.variant = Variant::parse(value).ok_or_else(|| {
                    Error::Config(format!("`variant`: expected mask, part or baseline, got `{value}`"))
                })?
            }
            "k" => t.k = parse(key, value)?,
            "embed_dim" => t.embed_dim = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "warmup_epochs" => t.warmup_epochs = parse(key, value)?,
            "peak_lr" => t.peak_lr = parse(key, value)?,
            "checkpoint_every" => t.checkpoint_every = parse(key, value)?,
            "gamma" => t.loss.gamma = parse(key, value)?,
            "epsilon" => t.loss.epsilon = parse(key, value)?,
            "alpha" => t.loss.alpha = parse(key, value)?,
            "tau" => t.loss.tau = parse(key, value)?,
            "corpus" => self.corpus = optional_path(value),
            "checkpoint" => self.checkpoint = optional_path(value),
            "resume" => self.resume = optional_path(value),
            "video_id" => self.video_id = (!value.is_empty()).then(|| value.to_owned()),
            "directions" => {
                self.directions = match value {
                    "both" => Directions::Both,
                    "t2v" => Directions::TextToVideo,
                    "v2t" => Directions::VideoToText,
                    _ => {
                        return Err(Error::Config(format!(
                            "`directions`: expected both, t2v or v2t, got `{value}`"
                        )))
                    }
                }
            }
            "text_space" => {
                self.text_space = match value {
                    "raw" => TextSpace::Raw,
                    "projected" => TextSpace::Projected,
                    _ => {
                        return Err(Error::Config(format!(
                            "`text_space`: expected raw or projected, got `{value}`"
                        )))
                    }
                }
            }
            "pair_cap" => self.pair_cap = parse(key, value)?,
            "gradcheck_seeds" => self.gradcheck_seeds = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.synth;
        let t = &self.train;
        Some(match key {
            "seed" => t.seed.to_string(),
            "num_videos" => s.num_videos.to_string(),
            "captions_per_video" => s.captions_per_video.to_string(),
            "events_per_video" => s.events_per_video.to_string(),
            "latent_dim" => s.latent_dim.to_string(),
            "tokens" => s.tokens.to_string(),
            "token_dim" => s.token_dim.to_string(),
            "text_dim" => s.text_dim.to_string(),
            "token_noise" => s.token_noise.to_string(),
            "caption_noise" => s.caption_noise.to_string(),
            "variant" => t.variant.name().to_owned(),
            "k" => t.k.to_string(),
            "embed_dim" => t.embed_dim.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "epochs" => t.epochs.to_string(),
            "warmup_epochs" => t.warmup_epochs.to_string(),
            "peak_lr" => t.peak_lr.to_string(),
            "checkpoint_every" => t.checkpoint_every.to_string(),
            "gamma" => t.loss.gamma.to_string(),
            "epsilon" => t.loss.epsilon.to_string(),
            "alpha" => t.loss.alpha.to_string(),
            "tau" => t.loss.tau.to_string(),
            "corpus" => show_path(&self.corpus),
            "checkpoint" => show_path(&self.checkpoint),
            "resume" => show_path(&self.resume),
            "video_id" => self.video_id.clone().unwrap_or_default(),
            "directions" => match self.directions {
                Directions::Both => "both",
                Directions::TextToVideo => "t2v",
                Directions::VideoToText => "v2t",
            }
            .to_owned(),
            "text_space" => match self.text_space {
                TextSpace::Raw => "raw",
                TextSpace::Projected => "projected",
            }
            .to_owned(),
            "pair_cap" => self.pair_cap.to_string(),
            "gradcheck_seeds" => self.gradcheck_seeds.to_string(),
            _ => return None,
        })
    }

    /// Applies the assignments in `text`; `origin` names the source in errors.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected `key = value`", i + 1)))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(Error::Config(format!("{origin}:{}: duplicate key `{key}`", i + 1)));
            }
            seen.push(key);
            self.set(key, value).map_err(|e| {
                Error::Config(format!(
                    "{origin}:{}: {}",
                    i + 1,
                    e.to_string().trim_start_matches("config: ")
                ))
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not `key=value`")))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Checks everything that does not depend on a loaded corpus.
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.loss.validate()?;
        let t = &self.train;
        if t.embed_dim == 0 {
            return Err(Error::Config("`embed_dim` must be at least 1".into()));
        }
        if t.batch_size == 0 {
            return Err(Error::Config("`batch_size` must be at least 1".into()));
        }
        if !(t.peak_lr.is_finite() && t.peak_lr >= 0.0) {
            return Err(Error::Config(format!(
                "`peak_lr` must be finite and >= 0, got {}",
                t.peak_lr
            )));
        }
        if t.warmup_epochs > t.epochs {
            return Err(Error::Config(format!(
                "`warmup_epochs` ({}) exceeds `epochs` ({})",
                t.warmup_epochs, t.epochs
            )));
        }
        if self.gradcheck_seeds == 0 {
            return Err(Error::Config("`gradcheck_seeds` must be at least 1".into()));
        }
        if self.pair_cap == 0 {
            return Err(Error::Config("`pair_cap` must be at least 1".into()));
        }
        Ok(())
    }

    /// Canonical `key = value` listing of every key.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            writeln!(s, "{key} = {}", self.get(key).expect("listed key")).unwrap();
        }
        s
    }

    /// First 16 hex digits of the SHA-256 of [`echo`](Self::echo).
    pub fn hash(&self) -> String {
        Sha256::digest(self.echo().as_bytes())
            .iter()
            .take(8)
            .fold(String::new(), |mut s, b| {
                write!(s, "{b:02x}").unwrap();
                s
            })
    }

    /// `<out_dir>/<label>-<hash>-s<seed>`.
    pub fn run_dir(&self, out_dir: &Path, label: &str) -> PathBuf {
        out_dir.join(format!("{label}-{}-s{}", self.hash(), self.train.seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.apply_overrides(&[
            "alpha=0",
            "variant=part",
            "corpus=data/m.jsonl",
            "seed=7",
            "directions=t2v",
        ])
        .unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.echo(), "echo").unwrap();
        assert_eq!(c, d);
        assert_eq!(c.hash(), d.hash());
        assert_eq!(c.synth.seed, 7);
    }

    #[test]
    fn every_key_is_settable() {
        let c = RunConfig::default();
        for key in KEYS {
            let mut d = c.clone();
            d.set(key, &c.get(key).unwrap()).unwrap();
            assert_eq!(c, d, "{key}");
        }
        assert_eq!(c.echo().lines().count(), KEYS.len());
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let mut c = RunConfig::default();
        assert!(c
            .apply_text("lr = 3", "f")
            .unwrap_err()
            .to_string()
            .contains("unknown key `lr`"));
        let e = c.apply_text("k = 2\nk = 3", "f").unwrap_err().to_string();
        assert!(e.contains("f:2") && e.contains("duplicate"), "{e}");
        assert!(c.apply_text("k 2", "f").is_err());
        assert!(c.apply_overrides(&["k=two"]).is_err());
        assert!(c.apply_overrides(&["variant=grid"]).is_err());
        assert!(c.apply_overrides(&["k"]).is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let mut c = RunConfig::default();
        c.apply_text("# header\n\nepochs = 3 # short\n", "f").unwrap();
        assert_eq!(c.train.epochs, 3);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.set("tau", "0.07").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        assert!(a
            .run_dir(Path::new("out"), "train")
            .ends_with(format!("train-{}-s0", a.hash())));
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        c.set("warmup_epochs", "60").unwrap();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.set("tau", "0").unwrap();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.set("tokens", "2").unwrap();
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }
}
