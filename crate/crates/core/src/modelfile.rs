//! Self-describing model container shared by every model kind.
//!
//! The file is one JSON document followed by a line
//! `checksum: sha256 <hex>` covering every byte before it. Tensor values are
//! written as hexadecimal floats (`0x1.8p+1`) so a load reproduces each bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::layers::ParamStore;

pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_PREFIX: &str = "checksum: sha256 ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabRecord {
    pub tokens: Vec<String>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format_version: u32,
    pub model_kind: String,
    pub config: serde_json::Value,
    pub vocabularies: BTreeMap<String, VocabRecord>,
    pub tensors: Vec<TensorRecord>,
}

impl ModelDocument {
    pub fn new(model_kind: &str, config: serde_json::Value) -> Self {
        ModelDocument {
            format_version: FORMAT_VERSION,
            model_kind: model_kind.to_string(),
            config,
            vocabularies: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push_params(&mut self, store: &ParamStore) {
        for (name, t) in store.names().iter().zip(store.values()) {
            self.tensors.push(TensorRecord {
                name: name.clone(),
                shape: t.shape().to_vec(),
                values: t.data().iter().map(|&x| format_hex(x)).collect(),
            });
        }
    }

    /// Copies stored tensors into `store`, which must already hold tensors of
    /// the same names and shapes in the same order.
    pub fn fill_params(&self, store: &mut ParamStore) -> Result<()> {
        if self.tensors.len() != store.len() {
            return Err(Error::Model(format!(
                "expected {} tensors, file has {}",
                store.len(),
                self.tensors.len()
            )));
        }
        let names = store.names().to_vec();
        for ((rec, name), slot) in self.tensors.iter().zip(&names).zip(store.values_mut()) {
            if &rec.name != name || rec.shape != slot.shape() {
                return Err(Error::Model(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    rec.name,
                    rec.shape,
                    name,
                    slot.shape()
                )));
            }
            let values = rec
                .values
                .iter()
                .map(|s| parse_hex(s))
                .collect::<Result<Vec<f64>>>()?;
            *slot = Tensor::new(rec.shape.clone(), values)
                .map_err(|_| Error::Model(format!("tensor {} has the wrong value count", rec.name)))?;
        }
        Ok(())
    }

    pub fn vocab(&self, name: &str) -> Result<&VocabRecord> {
        self.vocabularies
            .get(name)
            .ok_or_else(|| Error::Model(format!("missing vocabulary {name}")))
    }

    pub fn to_text(&self) -> Result<String> {
        let body = serde_json::to_string(self).map_err(|e| Error::Model(e.to_string()))?;
        let mut out = body;
        out.push('\n');
        let digest = hex_digest(out.as_bytes());
        out.push_str(CHECKSUM_PREFIX);
        out.push_str(&digest);
        out.push('\n');
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let trimmed = text.strip_suffix('\n').unwrap_or(text);
        let split = trimmed
            .rfind('\n')
            .ok_or_else(|| Error::Model("model file is truncated (no checksum line)".into()))?;
        let (body, tail) = trimmed.split_at(split + 1);
        let expected = tail
            .strip_prefix(CHECKSUM_PREFIX)
            .ok_or_else(|| Error::Model("model file is truncated (no checksum line)".into()))?;
        if hex_digest(body.as_bytes()) != expected {
            return Err(Error::Model("checksum mismatch".into()));
        }
        let value: serde_json::Value =
            serde_json::from_str(body).map_err(|e| Error::Model(format!("malformed model file: {e}")))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => return Err(Error::Model(format!("unsupported format_version {v}"))),
            None => return Err(Error::Model("missing format_version".into())),
        }
        serde_json::from_value(value).map_err(|e| Error::Model(format!("malformed model file: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

const FRAC_BITS: u32 = 52;
const FRAC_MASK: u64 = (1 << FRAC_BITS) - 1;

/// Hexadecimal float text, e.g. `0x1.8p+1` for 3.0. Subnormals use a `0x0.`
/// mantissa with exponent -1022.
pub fn format_hex(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    let sign = if x.is_sign_negative() { "-" } else { "" };
    if x.is_infinite() {
        return format!("{sign}inf");
    }
    let bits = x.to_bits();
    let exp_bits = ((bits >> FRAC_BITS) & 0x7ff) as i32;
    let frac = bits & FRAC_MASK;
    let (lead, exp) = match (exp_bits, frac) {
        (0, 0) => (0, 0),
        (0, _) => (0, -1022),
        _ => (1, exp_bits - 1023),
    };
    let digits = format!("{frac:013x}");
    let digits = digits.trim_end_matches('0');
    let dot = if digits.is_empty() { "" } else { "." };
    format!("{sign}0x{lead}{dot}{digits}p{exp:+}")
}

/// Inverse of [`format_hex`].
pub fn parse_hex(s: &str) -> Result<f64> {
    let bad = || Error::Model(format!("bad hexadecimal float {s:?}"));
    let (neg, rest) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s),
    };
    let magnitude = match rest {
        "nan" if !neg => return Ok(f64::NAN),
        "inf" => f64::INFINITY,
        _ => {
            let rest = rest.strip_prefix("0x").ok_or_else(bad)?;
            let (mantissa, exp) = rest.split_once('p').ok_or_else(bad)?;
            let exp: i32 = exp.parse().map_err(|_| bad())?;
            let (lead, digits) = match mantissa.split_once('.') {
                Some((l, d)) if !d.is_empty() => (l, d),
                Some(_) => return Err(bad()),
                None => (mantissa, ""),
            };
            if digits.len() > 13 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(bad());
            }
            let frac = if digits.is_empty() {
                0
            } else {
                u64::from_str_radix(digits, 16).map_err(|_| bad())? << (4 * (13 - digits.len()))
            };
            let bits = match (lead, exp) {
                ("1", -1022..=1023) => ((exp + 1023) as u64) << FRAC_BITS | frac,
                ("0", 0) if frac == 0 => 0,
                ("0", -1022) if frac != 0 => frac,
                _ => return Err(bad()),
            };
            f64::from_bits(bits)
        }
    };
    Ok(if neg { -magnitude } else { magnitude })
}
