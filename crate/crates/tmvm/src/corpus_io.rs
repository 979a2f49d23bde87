//! JSON-lines corpus manifests with raw f32 blobs.
//!
//! Video records point at a blob of `rows x cols` little-endian f32 values in
//! row-major order. Text records carry their features inline or in a blob.
//! Blob paths are relative to the manifest's directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tmvm_core::dataset::{Corpus, TextRecord, VideoRecord};
use tmvm_core::Matrix;

use crate::error::{Error, Result};

/// Directory next to the manifest that holds video blobs written by
/// [`save_corpus`].
pub const BLOB_DIR: &str = "blobs";

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Record {
    Video {
        id: String,
        blob: String,
        rows: usize,
        cols: usize,
    },
    Text {
        id: String,
        video_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        features: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        blob: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        event_label: Option<u32>,
    },
}

fn base_dir(manifest: &Path) -> &Path {
    manifest.parent().unwrap_or_else(|| Path::new("."))
}

fn read_blob(record: &str, path: &Path, shape: Option<(usize, usize)>) -> Result<Vec<f64>> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingBlob {
                record: record.to_owned(),
                path: path.to_owned(),
            })
        }
        Err(e) => return Err(Error::io(path)(e)),
    };
    let (rows, cols) = shape.unwrap_or((1, bytes.len() / 4));
    let expected = (rows * cols * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::BlobLength {
            record: record.to_owned(),
            path: path.to_owned(),
            rows,
            cols,
            expected,
            found: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect())
}

fn write_blob(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(Error::io(path))
}

/// Reads and validates a corpus manifest.
pub fn load_corpus(manifest: &Path) -> Result<Corpus> {
    let text = fs::read_to_string(manifest).map_err(Error::io(manifest))?;
    let base = base_dir(manifest);
    let mut videos = Vec::new();
    let mut texts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Manifest {
            path: manifest.to_owned(),
            line: i + 1,
            message,
        };
        let record: Record = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        match record {
            Record::Video { id, blob, rows, cols } => {
                let data = read_blob(&id, &base.join(&blob), Some((rows, cols)))?;
                let tokens = Matrix::from_vec(rows, cols, data)?;
                videos.push(VideoRecord { id, tokens });
            }
            Record::Text {
                id,
                video_id,
                features,
                blob,
                event_label,
            } => {
                let features = match (features, blob) {
                    (Some(f), None) => f,
                    (None, Some(b)) => read_blob(&id, &base.join(b), None)?,
                    _ => return Err(bad(format!("text `{id}` needs exactly one of `features` or `blob`"))),
                };
                texts.push(TextRecord {
                    id,
                    video_id,
                    features,
                    event_label,
                });
            }
        }
    }
    Ok(Corpus::new(videos, texts)?)
}

/// Writes `corpus` as a manifest plus one blob per video under
/// [`BLOB_DIR`]. Values are stored at f32 precision, so loading the result
/// gives `corpus.to_storage_precision()`.
pub fn save_corpus(corpus: &Corpus, manifest: &Path) -> Result<()> {
    let base = base_dir(manifest);
    let blob_dir = base.join(BLOB_DIR);
    fs::create_dir_all(&blob_dir).map_err(Error::io(&blob_dir))?;
    let file = fs::File::create(manifest).map_err(Error::io(manifest))?;
    let mut out = BufWriter::new(file);
    let mut emit = |record: &Record| -> Result<()> {
        let line = serde_json::to_string(record).expect("records serialize");
        writeln!(&mut out, "{line}").map_err(Error::io(manifest))
    };
    for (i, v) in corpus.videos().iter().enumerate() {
        let rel = format!("{BLOB_DIR}/video_{i:06}.f32");
        write_blob(&base.join(&rel), v.tokens.as_slice())?;
        emit(&Record::Video {
            id: v.id.clone(),
            blob: rel,
            rows: v.tokens.rows(),
            cols: v.tokens.cols(),
        })?;
    }
    for t in corpus.texts() {
        emit(&Record::Text {
            id: t.id.clone(),
            video_id: t.video_id.clone(),
            features: Some(t.features.iter().map(|&x| x as f32 as f64).collect()),
            blob: None,
            event_label: t.event_label,
        })?;
    }
    out.flush().map_err(Error::io(manifest))
}

/// Manifest location inside a directory written by the synth command.
pub fn manifest_in(dir: &Path) -> PathBuf {
    dir.join("corpus").join("manifest.jsonl")
}

#[cfg(test)]
mod tests {
    use super::*;
    use tmvm_core::dataset::{synth_corpus, SynthConfig};

    fn small() -> Corpus {
        synth_corpus(&SynthConfig {
            num_videos: 2,
            captions_per_video: 2,
            latent_dim: 4,
            tokens: 5,
            token_dim: 8,
            text_dim: 6,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let c = small();
        save_corpus(&c, &path).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), c.to_storage_precision());
    }

    #[test]
    fn text_blob_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let c = small();
        save_corpus(&c, &path).unwrap();
        let t = &c.texts()[0];
        write_blob(&dir.path().join("t.f32"), &t.features).unwrap();
        let body = fs::read_to_string(&path).unwrap();
        let first_text = body.lines().position(|l| l.contains("\"text\"")).unwrap();
        let mut lines: Vec<String> = body.lines().map(str::to_owned).collect();
        lines[first_text] = format!(
            r#"{{"kind":"text","id":"{}","video_id":"{}","blob":"t.f32","event_label":{}}}"#,
            t.id,
            t.video_id,
            t.event_label.unwrap()
        );
        fs::write(&path, lines.join("\n")).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), c.to_storage_precision());
    }

    #[test]
    fn text_needs_one_feature_source() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        fs::write(&path, r#"{"kind":"text","id":"t","video_id":"v"}"#).unwrap();
        let e = load_corpus(&path).unwrap_err();
        assert!(matches!(e, Error::Manifest { line: 1, .. }), "{e}");
    }

    #[test]
    fn unknown_fields_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        fs::write(
            &path,
            r#"{"kind":"video","id":"v","blob":"b","rows":1,"cols":1,"extra":2}"#,
        )
        .unwrap();
        assert!(matches!(load_corpus(&path), Err(Error::Manifest { .. })));
    }
}
