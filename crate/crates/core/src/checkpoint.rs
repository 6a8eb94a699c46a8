//! Versioned, checksummed plain-text checkpoint container.
//!
//! ```text
//! aircast-checkpoint 1
//! kind cnn
//! seed 7
//! config <key> <value>
//! stat <name> <len> <v1> <v2> ...
//! tensor <name> <rank> <d1> ... <dr>
//! <row-major values, space separated>
//! checksum sha256 <hex digest of every preceding byte>
//! ```
//!
//! Floats are written in shortest round-trip form, so a save/load cycle is
//! bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "aircast-checkpoint";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Cnn,
    Lstm,
    Hybrid,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Lstm => "lstm",
            ModelKind::Hybrid => "hybrid",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(ModelKind::Cnn),
            "lstm" => Ok(ModelKind::Lstm),
            "hybrid" => Ok(ModelKind::Hybrid),
            other => Err(Error::MalformedCheckpoint(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub kind: ModelKind,
    pub seed: u64,
    /// Echo of the training configuration.
    pub config: BTreeMap<String, String>,
    /// Normalization statistics and training history.
    pub stats: BTreeMap<String, Vec<f64>>,
    pub tensors: Vec<(String, Tensor)>,
}

impl ModelCheckpoint {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        Self { kind, seed, config: BTreeMap::new(), stats: BTreeMap::new(), tensors: Vec::new() }
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidArgument(format!(
                "expected a {} checkpoint, found {}",
                kind.name(),
                self.kind.name()
            )));
        }
        Ok(())
    }

    pub fn set_config(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        assert!(
            !key.is_empty() && !key.contains(char::is_whitespace) && !value.contains(char::is_whitespace),
            "config entries must be single tokens"
        );
        self.config.insert(key.to_string(), value);
    }

    pub fn config_value<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .config
            .get(key)
            .ok_or_else(|| Error::MalformedCheckpoint(format!("missing config entry '{key}'")))?;
        raw.parse()
            .map_err(|_| Error::MalformedCheckpoint(format!("config entry '{key}' has bad value '{raw}'")))
    }

    pub fn set_stat(&mut self, name: &str, values: Vec<f64>) {
        self.stats.insert(name.to_string(), values);
    }

    pub fn stat(&self, name: &str) -> Result<&[f64]> {
        self.stats
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MalformedCheckpoint(format!("missing statistic '{name}'")))
    }

    pub fn push_tensor(&mut self, name: &str, tensor: Tensor) {
        self.tensors.push((name.to_string(), tensor));
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::MalformedCheckpoint(format!("missing tensor '{name}'")))
    }

    pub fn to_text(&self) -> String {
        let mut body = String::new();
        writeln!(body, "{MAGIC} {CHECKPOINT_VERSION}").unwrap();
        writeln!(body, "kind {}", self.kind.name()).unwrap();
        writeln!(body, "seed {}", self.seed).unwrap();
        for (k, v) in &self.config {
            writeln!(body, "config {k} {v}").unwrap();
        }
        for (name, values) in &self.stats {
            write!(body, "stat {name} {}", values.len()).unwrap();
            for v in values {
                write!(body, " {v:?}").unwrap();
            }
            body.push('\n');
        }
        for (name, tensor) in &self.tensors {
            write!(body, "tensor {name} {}", tensor.shape().len()).unwrap();
            for d in tensor.shape() {
                write!(body, " {d}").unwrap();
            }
            body.push('\n');
            let mut first = true;
            for v in tensor.data() {
                if !first {
                    body.push(' ');
                }
                first = false;
                write!(body, "{v:?}").unwrap();
            }
            body.push('\n');
        }
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        writeln!(body, "checksum sha256 {digest}").unwrap();
        body
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let header = text.lines().next().ok_or_else(|| Error::MalformedCheckpoint("empty file".into()))?;
        let mut parts = header.split(' ');
        if parts.next() != Some(MAGIC) {
            return Err(Error::MalformedCheckpoint("not an aircast checkpoint".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::MalformedCheckpoint("unreadable version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch { found: version, supported: CHECKPOINT_VERSION });
        }

        let trimmed = text.strip_suffix('\n').ok_or(Error::ChecksumFailure)?;
        let split = trimmed.rfind('\n').ok_or(Error::ChecksumFailure)?;
        let (body, footer) = (&text[..split + 1], &trimmed[split + 1..]);
        let expected = footer.strip_prefix("checksum sha256 ").ok_or(Error::ChecksumFailure)?;
        if hex::encode(Sha256::digest(body.as_bytes())) != expected {
            return Err(Error::ChecksumFailure);
        }

        let mut lines = body.lines().skip(1);
        let mut ck: Option<ModelCheckpoint> = None;
        let mut kind = None;
        let mut seed = None;
        while let Some(line) = lines.next() {
            let mut tokens = line.split(' ');
            let tag = tokens.next().unwrap_or_default();
            match tag {
                "kind" => kind = Some(tokens.next().unwrap_or_default().parse::<ModelKind>()?),
                "seed" => seed = Some(parse_token::<u64>(tokens.next(), "seed")?),
                _ => {
                    let ck = match (&mut ck, kind, seed) {
                        (Some(ck), _, _) => ck,
                        (None, Some(k), Some(s)) => ck.insert(ModelCheckpoint::new(k, s)),
                        _ => return Err(Error::MalformedCheckpoint("kind and seed must come first".into())),
                    };
                    match tag {
                        "config" => {
                            let key = tokens.next().unwrap_or_default().to_string();
                            let value = tokens.next().unwrap_or_default().to_string();
                            ck.config.insert(key, value);
                        }
                        "stat" => {
                            let name = tokens.next().unwrap_or_default().to_string();
                            let len: usize = parse_token(tokens.next(), "stat length")?;
                            let values = tokens.map(|t| parse_token::<f64>(Some(t), "stat value")).collect::<Result<Vec<_>>>()?;
                            if values.len() != len {
                                return Err(Error::MalformedCheckpoint(format!("stat '{name}' length mismatch")));
                            }
                            ck.stats.insert(name, values);
                        }
                        "tensor" => {
                            let name = tokens.next().unwrap_or_default().to_string();
                            let rank: usize = parse_token(tokens.next(), "tensor rank")?;
                            let shape = tokens.map(|t| parse_token::<usize>(Some(t), "dimension")).collect::<Result<Vec<_>>>()?;
                            if shape.len() != rank {
                                return Err(Error::MalformedCheckpoint(format!("tensor '{name}' rank mismatch")));
                            }
                            let data_line = lines
                                .next()
                                .ok_or_else(|| Error::MalformedCheckpoint(format!("tensor '{name}' has no data")))?;
                            let data = if data_line.is_empty() {
                                Vec::new()
                            } else {
                                data_line
                                    .split(' ')
                                    .map(|t| parse_token::<f64>(Some(t), "tensor value"))
                                    .collect::<Result<Vec<_>>>()?
                            };
                            let tensor = Tensor::from_vec(&shape, data)
                                .map_err(|e| Error::MalformedCheckpoint(format!("tensor '{name}': {e}")))?;
                            ck.tensors.push((name, tensor));
                        }
                        other => return Err(Error::MalformedCheckpoint(format!("unknown entry '{other}'"))),
                    }
                }
            }
        }
        match (ck, kind, seed) {
            (Some(ck), _, _) => Ok(ck),
            (None, Some(k), Some(s)) => Ok(ModelCheckpoint::new(k, s)),
            _ => Err(Error::MalformedCheckpoint("missing kind or seed".into())),
        }
    }
}

fn parse_token<T: FromStr>(token: Option<&str>, what: &str) -> Result<T> {
    token
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::MalformedCheckpoint(format!("unreadable {what}")))
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_checkpoint(checkpoint: &ModelCheckpoint, path: &Path) -> Result<()> {
    write_atomic(path, checkpoint.to_text().as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let text = String::from_utf8(bytes).map_err(|_| Error::ChecksumFailure)?;
    ModelCheckpoint::from_text(&text)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn sample() -> ModelCheckpoint {
        let mut ck = ModelCheckpoint::new(ModelKind::Hybrid, 7);
        ck.set_config("alpha", 0.3);
        ck.set_config("hidden", 4);
        ck.set_stat("series_minmax", vec![3.25, 81.0]);
        ck.set_stat("empty", vec![]);
        ck.push_tensor("w", Tensor::from_vec(&[2, 3], vec![0.1, -2.5e-17, 3.0, 1e300, -0.0, 7.123456789012345]).unwrap());
        ck.push_tensor("b", Tensor::from_vec(&[1], vec![0.5]).unwrap());
        ck.push_tensor("none", Tensor::zeros(&[0]));
        ck
    }

    #[test]
    fn text_round_trip() {
        let ck = sample();
        let back = ModelCheckpoint::from_text(&ck.to_text()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.config_value::<f64>("alpha").unwrap(), 0.3);
        assert!(back.tensor("w").unwrap().data()[4].is_sign_negative());
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let text = sample().to_text();
        let mut bytes = text.into_bytes();
        let pos = bytes.iter().position(|&b| b == b'7').unwrap();
        bytes[pos] = b'8';
        let err = ModelCheckpoint::from_text(std::str::from_utf8(&bytes).unwrap()).unwrap_err();
        assert!(matches!(err, Error::ChecksumFailure), "{err}");
    }

    #[test]
    fn truncation_fails_checksum() {
        let text = sample().to_text();
        let cut = &text[..text.len() / 2];
        assert!(matches!(ModelCheckpoint::from_text(cut), Err(Error::ChecksumFailure)));
    }

    #[test]
    fn future_version_rejected() {
        let text = sample().to_text().replacen("aircast-checkpoint 1", "aircast-checkpoint 2", 1);
        assert!(matches!(
            ModelCheckpoint::from_text(&text),
            Err(Error::VersionMismatch { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn file_round_trip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&sample(), &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), sample());
        assert!(matches!(load_checkpoint(&dir.path().join("nope")), Err(Error::FileNotFound(_))));
    }

    proptest! {
        #[test]
        fn arbitrary_floats_round_trip(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..40)) {
            let mut ck = ModelCheckpoint::new(ModelKind::Lstm, 1);
            ck.push_tensor("t", Tensor::from_vec(&[values.len()], values.clone()).unwrap());
            ck.set_stat("s", values);
            let back = ModelCheckpoint::from_text(&ck.to_text()).unwrap();
            prop_assert_eq!(back, ck);
        }
    }
}
