//! Synthetic protocols with exact ground truth.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FieldRecord, FieldType, GroundTruth, Message, Segmentation};

/// Upper bound on the width of any single field.
pub const MAX_FIELD_WIDTH: usize = 65_535;

const DEFAULT_CHARSET: &str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldKind {
    /// Fixed bytes, given as hex.
    Const(String),
    Uint {
        width: usize,
        min: u32,
        max: u32,
    },
    Enum(Vec<u8>),
    Flags {
        width: usize,
    },
    Chars {
        min_len: usize,
        max_len: usize,
        #[serde(default)]
        charset: Option<String>,
        #[serde(default)]
        null_terminated: bool,
    },
    Padding {
        width: usize,
    },
    /// Byte length of an earlier variable-length field.
    LengthOf {
        field: String,
        #[serde(default = "one")]
        width: usize,
    },
    Payload {
        min_len: usize,
        max_len: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    #[serde(default)]
    pub optional: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub name: String,
    pub fields: Vec<FieldSpec>,
    pub message_count: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub little_endian: bool,
}

impl FieldKind {
    fn is_variable(&self) -> bool {
        match self {
            FieldKind::Chars { min_len, max_len, .. } | FieldKind::Payload { min_len, max_len } => min_len != max_len,
            _ => false,
        }
    }

    fn min_width(&self) -> usize {
        match self {
            FieldKind::Const(h) => h.len() / 2,
            FieldKind::Uint { width, .. } | FieldKind::Flags { width } | FieldKind::Padding { width } => *width,
            FieldKind::LengthOf { width, .. } => *width,
            FieldKind::Enum(_) => 1,
            FieldKind::Chars {
                min_len,
                null_terminated,
                ..
            } => min_len + usize::from(*null_terminated),
            FieldKind::Payload { min_len, .. } => *min_len,
        }
    }

    fn max_width(&self) -> usize {
        match self {
            FieldKind::Chars {
                max_len,
                null_terminated,
                ..
            } => max_len + usize::from(*null_terminated),
            FieldKind::Payload { max_len, .. } => *max_len,
            k => k.min_width(),
        }
    }

    fn field_type(&self) -> FieldType {
        match self {
            FieldKind::Const(_) | FieldKind::Enum(_) => FieldType::Id,
            FieldKind::Uint { .. } | FieldKind::LengthOf { .. } => FieldType::Number,
            FieldKind::Flags { .. } => FieldType::Flags,
            FieldKind::Chars { .. } => FieldType::Char,
            FieldKind::Padding { .. } => FieldType::Pad,
            FieldKind::Payload { .. } => FieldType::Unknown,
        }
    }
}

fn max_for_width(width: usize) -> u64 {
    (1u64 << (8 * width)) - 1
}

impl ProtocolSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ProtocolSpec = serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |f: &FieldSpec, msg: &str| Err(Error::Spec(format!("field {:?}: {msg}", f.name)));
        if self.fields.iter().all(|f| matches!(f.kind, FieldKind::Const(_))) {
            return Err(Error::Spec("at least one non-const field is required".into()));
        }
        let mut names = BTreeSet::new();
        for (i, f) in self.fields.iter().enumerate() {
            if !names.insert(f.name.as_str()) {
                return err(f, "duplicate name");
            }
            if f.kind.max_width() > MAX_FIELD_WIDTH {
                return err(f, "field wider than 65535 bytes");
            }
            match &f.kind {
                FieldKind::Const(h) => match hex::decode(h) {
                    Ok(b) if !b.is_empty() => {}
                    _ => return err(f, "const needs non-empty hex bytes"),
                },
                FieldKind::Uint { width, min, max } => {
                    if !(1..=4).contains(width) {
                        return err(f, "uint width must be 1..=4");
                    }
                    if min > max || u64::from(*max) > max_for_width(*width) {
                        return err(f, "uint range does not fit its width");
                    }
                }
                FieldKind::Enum(set) if set.is_empty() => return err(f, "empty enum set"),
                FieldKind::Enum(_) => {}
                FieldKind::Flags { width } | FieldKind::Padding { width } if *width == 0 => {
                    return err(f, "width must be at least 1")
                }
                FieldKind::Flags { .. } | FieldKind::Padding { .. } => {}
                FieldKind::Chars {
                    min_len,
                    max_len,
                    charset,
                    null_terminated,
                } => {
                    if min_len > max_len || (*max_len == 0 && !null_terminated) {
                        return err(f, "bad length range");
                    }
                    if charset.as_deref().is_some_and(|c| c.is_empty() || c.bytes().any(|b| b == 0)) {
                        return err(f, "charset must be non-empty and free of nulls");
                    }
                }
                FieldKind::Payload { min_len, max_len } => {
                    if min_len > max_len || *max_len == 0 {
                        return err(f, "bad length range");
                    }
                }
                FieldKind::LengthOf { field, width } => {
                    if !(1..=4).contains(width) {
                        return err(f, "length width must be 1..=4");
                    }
                    let Some(target) = self.fields[..i].iter().find(|g| &g.name == field) else {
                        return err(f, "length_of must reference an earlier field");
                    };
                    if !target.kind.is_variable() {
                        return err(f, "length_of must reference a variable-length field");
                    }
                    if target.kind.max_width() as u64 > max_for_width(*width) {
                        return err(f, "length does not fit its width");
                    }
                }
            }
        }
        if !self.fields.iter().any(|f| !f.optional && f.kind.min_width() > 0) {
            return Err(Error::Spec("messages could be empty".into()));
        }
        Ok(())
    }
}

fn emit_uint(out: &mut Vec<u8>, v: u64, width: usize, little_endian: bool) {
    let be = v.to_be_bytes();
    let bytes = &be[8 - width..];
    if little_endian {
        out.extend(bytes.iter().rev());
    } else {
        out.extend_from_slice(bytes);
    }
}

/// Generates `spec.message_count` messages and their true field layout.
pub fn generate(spec: &ProtocolSpec) -> Result<(Vec<Message>, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut messages = Vec::with_capacity(spec.message_count);
    let mut truth = GroundTruth::default();
    for id in 0..spec.message_count as u64 {
        let mut payload = Vec::new();
        let mut fields: Vec<FieldRecord> = Vec::new();
        let mut lengths: Vec<Option<usize>> = Vec::with_capacity(spec.fields.len());
        for f in &spec.fields {
            if f.optional && !rng.gen_bool(0.5) {
                lengths.push(None);
                continue;
            }
            let start = payload.len();
            match &f.kind {
                FieldKind::Const(h) => payload.extend(hex::decode(h).unwrap_or_default()),
                FieldKind::Uint { width, min, max } => {
                    let v = rng.gen_range(*min..=*max);
                    emit_uint(&mut payload, u64::from(v), *width, spec.little_endian);
                }
                FieldKind::Enum(set) => payload.push(*set.choose(&mut rng).unwrap_or(&0)),
                FieldKind::Flags { width } => {
                    for _ in 0..*width {
                        let mut b = 0u8;
                        for bit in 0..8 {
                            if rng.gen_bool(0.3) {
                                b |= 1 << bit;
                            }
                        }
                        payload.push(b);
                    }
                }
                FieldKind::Chars {
                    min_len,
                    max_len,
                    charset,
                    null_terminated,
                } => {
                    let cs = charset.as_deref().unwrap_or(DEFAULT_CHARSET).as_bytes();
                    let n = rng.gen_range(*min_len..=*max_len);
                    for _ in 0..n {
                        payload.push(cs[rng.gen_range(0..cs.len())]);
                    }
                    if *null_terminated {
                        payload.push(0);
                    }
                }
                FieldKind::Padding { width } => payload.extend(std::iter::repeat(0).take(*width)),
                FieldKind::LengthOf { field, width } => {
                    let idx = spec.fields.iter().position(|g| &g.name == field).unwrap_or(0);
                    let n = lengths.get(idx).copied().flatten().unwrap_or(0);
                    emit_uint(&mut payload, n as u64, *width, spec.little_endian);
                }
                FieldKind::Payload { min_len, max_len } => {
                    let n = rng.gen_range(*min_len..=*max_len);
                    payload.extend((0..n).map(|_| rng.gen::<u8>()));
                }
            }
            let end = payload.len();
            lengths.push(Some(end - start));
            if end > start {
                fields.push((start, end, f.kind.field_type()));
            }
        }
        let len = payload.len();
        let cuts: Vec<usize> = fields.iter().map(|f| f.1).filter(|&e| e < len).collect();
        messages.push(Message::new(id, payload, format!("{}:{id}", spec.name))?);
        truth.insert(id, cuts, Some(fields));
    }
    Ok((messages, truth))
}

/// Copies the true cuts and moves a seeded random `fraction` of them by
/// `delta`. A shift that leaves the message or lands on another cut is
/// not applied.
pub fn perturb(truth: &GroundTruth, messages: &[Message], delta: i64, fraction: f64, seed: u64) -> Result<Vec<Segmentation>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::usage(format!("fraction {fraction} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(messages.len());
    for m in messages {
        let Some(t) = truth.cuts(m.id) else { continue };
        let mut cuts: BTreeSet<usize> = t.iter().copied().collect();
        let picked: Vec<bool> = t.iter().map(|_| rng.gen_bool(fraction)).collect();
        let mut order: Vec<usize> = (0..t.len()).collect();
        // move the cut nearest the shift direction first so runs of cuts can follow
        if delta > 0 {
            order.reverse();
        }
        for i in order {
            if !picked[i] {
                continue;
            }
            let c = t[i];
            let Some(n) = c.checked_add_signed(delta as isize) else { continue };
            if n == 0 || n >= m.len() || cuts.contains(&n) {
                continue;
            }
            cuts.remove(&c);
            cuts.insert(n);
        }
        out.push(Segmentation::new(m.id, cuts.into_iter().collect(), m.len())?);
    }
    Ok(out)
}

/// Names of the bundled reference protocols.
pub const BUNDLED: [&str; 6] = [
    "fixed_structure",
    "mixed",
    "char_bearing",
    "null_separated",
    "tightly_packed",
    "optional_field",
];

/// One of the bundled reference protocols.
pub fn bundled(name: &str) -> Result<ProtocolSpec> {
    let text = match name {
        "fixed_structure" => include_str!("../fixtures/specs/fixed_structure.json"),
        "mixed" => include_str!("../fixtures/specs/mixed.json"),
        "char_bearing" => include_str!("../fixtures/specs/char_bearing.json"),
        "null_separated" => include_str!("../fixtures/specs/null_separated.json"),
        "tightly_packed" => include_str!("../fixtures/specs/tightly_packed.json"),
        "optional_field" => include_str!("../fixtures/specs/optional_field.json"),
        _ => return Err(Error::Spec(format!("no bundled spec named {name:?}"))),
    };
    ProtocolSpec::from_json(text)
}
