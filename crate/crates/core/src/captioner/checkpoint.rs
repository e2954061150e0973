//! Checkpoint file format "GZC1": magic, format version, a config echo
//! string, then named parameter records (name, shape, 64-bit little-endian
//! values). The echo carries the model dimensions, the vocabulary and
//! whatever run settings the caller adds, so a checkpoint alone restores a
//! working model.

use super::{Captioner, ModelConfig, Vocabulary};
use crate::attention::AttentionVariant;
use crate::tensor::{ParamSet, Tensor};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

const MAGIC: &[u8; 4] = b"GZC1";
const VERSION: u32 = 1;

#[derive(Debug)]
pub enum CheckpointError {
    Io(std::io::Error),
    BadMagic,
    BadVersion(u32),
    Truncated,
    BadEcho(String),
    BadParam(String),
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(e) => write!(f, "checkpoint io: {e}"),
            Self::BadMagic => write!(f, "not a GZC1 checkpoint"),
            Self::BadVersion(v) => write!(f, "unsupported checkpoint version {v}"),
            Self::Truncated => write!(f, "checkpoint ends early"),
            Self::BadEcho(m) => write!(f, "config echo: {m}"),
            Self::BadParam(m) => write!(f, "parameter record: {m}"),
        }
    }
}

impl std::error::Error for CheckpointError {}

impl From<std::io::Error> for CheckpointError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

/// Space-separated `key=value` line, keys sorted. Values must not contain
/// spaces; the vocabulary packs into one comma-joined value.
pub fn format_echo(entries: &BTreeMap<String, String>) -> String {
    entries
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_echo(echo: &str) -> Result<BTreeMap<String, String>, CheckpointError> {
    let mut map = BTreeMap::new();
    for part in echo.split(' ').filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CheckpointError::BadEcho(format!("entry '{part}' lacks '='")))?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

fn push_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

/// Serializes the model. `extra` entries (seed, training settings) merge
/// into the echo next to the model keys.
pub fn save_checkpoint(
    path: &Path,
    captioner: &Captioner,
    extra: &BTreeMap<String, String>,
) -> Result<(), CheckpointError> {
    let mut echo = extra.clone();
    echo.insert("variant".into(), captioner.config.variant.as_str().into());
    echo.insert("feature_dim".into(), captioner.config.feature_dim.to_string());
    echo.insert("embed_dim".into(), captioner.config.embed_dim.to_string());
    echo.insert("hidden_dim".into(), captioner.config.hidden_dim.to_string());
    echo.insert("proj_dim".into(), captioner.config.proj_dim.to_string());
    echo.insert("vocab".into(), captioner.vocab.tokens().join(","));

    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    push_str(&mut buf, &format_echo(&echo));
    buf.extend_from_slice(&(captioner.params().len() as u32).to_le_bytes());
    for (name, tensor) in captioner.params().iter() {
        push_str(&mut buf, name);
        let shape = tensor.shape();
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &e in shape {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in tensor.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| CheckpointError::BadEcho("invalid utf-8".into()))
    }
}

fn echo_field<'m>(
    map: &'m BTreeMap<String, String>,
    key: &str,
) -> Result<&'m str, CheckpointError> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| CheckpointError::BadEcho(format!("missing key '{key}'")))
}

fn echo_usize(map: &BTreeMap<String, String>, key: &str) -> Result<usize, CheckpointError> {
    echo_field(map, key)?
        .parse()
        .map_err(|_| CheckpointError::BadEcho(format!("key '{key}' is not an integer")))
}

/// Restores the model plus the full echo map.
pub fn load_checkpoint(
    path: &Path,
) -> Result<(Captioner, BTreeMap<String, String>), CheckpointError> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let echo = parse_echo(&r.string()?)?;
    let variant = AttentionVariant::from_str(echo_field(&echo, "variant")?)
        .map_err(|e| CheckpointError::BadEcho(e.to_string()))?;
    let config = ModelConfig {
        variant,
        feature_dim: echo_usize(&echo, "feature_dim")?,
        embed_dim: echo_usize(&echo, "embed_dim")?,
        hidden_dim: echo_usize(&echo, "hidden_dim")?,
        proj_dim: echo_usize(&echo, "proj_dim")?,
    };
    let vocab = Vocabulary::from_tokens(
        echo_field(&echo, "vocab")?
            .split(',')
            .map(str::to_string)
            .collect(),
    )
    .map_err(|e| CheckpointError::BadEcho(e.to_string()))?;

    let n_params = r.u32()? as usize;
    let mut params = ParamSet::new();
    for _ in 0..n_params {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut values = Vec::with_capacity(numel);
        for _ in 0..numel {
            let raw = r.take(8)?;
            values.push(f64::from_le_bytes(raw.try_into().unwrap()));
        }
        let tensor = Tensor::new(shape, values)
            .map_err(|e| CheckpointError::BadParam(format!("{name}: {e}")))?;
        params
            .insert(&name, tensor)
            .map_err(|e| CheckpointError::BadParam(e.to_string()))?;
    }
    Ok((Captioner::from_parts(config, vocab, params), echo))
}
