//! Domain types shared by every stage: messages, segmentations, segment
//! views and the analysis parameter set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One application-layer payload taken from a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub id: u64,
    pub payload: Vec<u8>,
    /// Provenance, e.g. `capture.pcap#17` or `trace.hex:3`.
    pub source: String,
}

impl Message {
    pub fn new(id: u64, payload: Vec<u8>, source: impl Into<String>) -> Result<Self> {
        if payload.is_empty() {
            return Err(Error::usage(format!("message {id} has an empty payload")));
        }
        Ok(Message {
            id,
            payload,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_empty()
    }
}

/// Interior cut offsets of one message. The message ends (0 and len) are
/// implicit and never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Segmentation {
    pub message_id: u64,
    cuts: Vec<usize>,
}

impl Segmentation {
    /// Builds a segmentation after checking that `cuts` is strictly
    /// increasing and inside `(0, len)`.
    pub fn new(message_id: u64, cuts: Vec<usize>, len: usize) -> Result<Self> {
        let mut prev: Option<usize> = None;
        for &c in &cuts {
            if c == 0 || c >= len {
                return Err(Error::OutOfRange {
                    id: message_id,
                    msg: format!("cut {c} outside (0, {len})"),
                });
            }
            if prev.is_some_and(|p| c <= p) {
                return Err(Error::OutOfRange {
                    id: message_id,
                    msg: format!("cuts not strictly increasing at {c}"),
                });
            }
            prev = Some(c);
        }
        Ok(Segmentation { message_id, cuts })
    }

    /// Builds a segmentation from an arbitrary collection of offsets,
    /// dropping duplicates and anything outside `(0, len)`.
    pub fn from_offsets<I: IntoIterator<Item = usize>>(message_id: u64, offsets: I, len: usize) -> Self {
        let set: BTreeSet<usize> = offsets.into_iter().filter(|&c| c > 0 && c < len).collect();
        Segmentation {
            message_id,
            cuts: set.into_iter().collect(),
        }
    }

    pub fn unsegmented(message_id: u64) -> Self {
        Segmentation {
            message_id,
            cuts: Vec::new(),
        }
    }

    pub fn cuts(&self) -> &[usize] {
        &self.cuts
    }

    pub fn into_cuts(self) -> Vec<usize> {
        self.cuts
    }

    /// `(start, end)` of every implied segment, in order.
    pub fn bounds(&self, len: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.cuts.len() + 1);
        let mut start = 0;
        for &c in &self.cuts {
            out.push((start, c));
            start = c;
        }
        out.push((start, len));
        out
    }

    pub fn is_valid_for(&self, msg: &Message) -> bool {
        self.message_id == msg.id
            && self.cuts.windows(2).all(|w| w[0] < w[1])
            && self.cuts.iter().all(|&c| c > 0 && c < msg.len())
    }
}

/// A view of bytes `[start, end)` of one message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SegmentRef {
    pub message_id: u64,
    pub start: usize,
    pub end: usize,
    #[serde(with = "hex_bytes")]
    pub values: Vec<u8>,
}

impl SegmentRef {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

mod hex_bytes {
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }
}

/// Splits `msg` at the cuts of `seg`.
pub fn segments_of(seg: &Segmentation, msg: &Message) -> Result<Vec<SegmentRef>> {
    if seg.message_id != msg.id {
        return Err(Error::usage(format!(
            "segmentation for message {} applied to message {}",
            seg.message_id, msg.id
        )));
    }
    Ok(seg
        .bounds(msg.len())
        .into_iter()
        .map(|(start, end)| SegmentRef {
            message_id: msg.id,
            start,
            end,
            values: msg.payload[start..end].to_vec(),
        })
        .collect())
}

/// Field type labels carried by ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    Char,
    Number,
    Flags,
    Id,
    Pad,
    Unknown,
}

/// A labelled field: `[start, end)` and its type.
pub type FieldRecord = (usize, usize, FieldType);

/// True field boundaries per message, optionally with field records.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    entries: BTreeMap<u64, (Vec<usize>, Option<Vec<FieldRecord>>)>,
}

impl GroundTruth {
    pub fn insert(&mut self, id: u64, cuts: Vec<usize>, fields: Option<Vec<FieldRecord>>) {
        self.entries.insert(id, (cuts, fields));
    }

    pub fn cuts(&self, id: u64) -> Option<&[usize]> {
        self.entries.get(&id).map(|e| e.0.as_slice())
    }

    pub fn fields(&self, id: u64) -> Option<&[FieldRecord]> {
        self.entries.get(&id).and_then(|e| e.1.as_deref())
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[usize])> {
        self.entries.iter().map(|(id, e)| (*id, e.0.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The true cuts as segmentations, e.g. as the input of a perturbation.
    pub fn segmentations(&self) -> Vec<Segmentation> {
        self.iter()
            .map(|(id, c)| Segmentation {
                message_id: id,
                cuts: c.to_vec(),
            })
            .collect()
    }
}

/// Tunables of the variance analysis. Defaults are the empirically
/// determined values used throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    /// Scree minimum: upper cap of the eigenvalue significance threshold.
    pub p_s: f64,
    /// Absolute maximum of significant principal components.
    pub p_p: usize,
    /// Maximum significant components relative to the dimension.
    pub p_q: f64,
    /// Length difference ratio above which a cluster is split by length.
    pub p_l: f64,
    /// Minimum cluster size for a component analysis.
    pub p_n: usize,
    /// Significant loading contribution (rule A).
    pub p_c: f64,
    /// Significant relative loading difference (rules A and B).
    pub p_d: f64,
    /// Near-zero loading threshold (rule B).
    pub p_nz: f64,
    /// Number of near-zero positions preceding a rule B boundary.
    pub p_b: usize,
    /// Notable loading contribution (rule B).
    pub p_t: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams {
            p_s: 10.0,
            p_p: 4,
            p_q: 0.5,
            p_l: 0.5,
            p_n: 6,
            p_c: 0.1,
            p_d: 0.98,
            p_nz: 0.05,
            p_b: 4,
            p_t: 0.005,
        }
    }
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("p_q", self.p_q),
            ("p_l", self.p_l),
            ("p_c", self.p_c),
            ("p_d", self.p_d),
            ("p_nz", self.p_nz),
            ("p_t", self.p_t),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::usage(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if !(self.p_s > 0.0) {
            return Err(Error::usage("p_s must be positive"));
        }
        if self.p_p == 0 || self.p_n == 0 || self.p_b == 0 {
            return Err(Error::usage("p_p, p_n and p_b must be positive integers"));
        }
        Ok(())
    }

    /// Sets one parameter by name, as used by `--param name=value`.
    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        let f = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::usage(format!("parameter {name}: not a number: {value}")))
        };
        let u = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::usage(format!("parameter {name}: not a positive integer: {value}")))
        };
        match name {
            "p_s" => self.p_s = f()?,
            "p_p" => self.p_p = u()?,
            "p_q" => self.p_q = f()?,
            "p_l" => self.p_l = f()?,
            "p_n" => self.p_n = u()?,
            "p_c" => self.p_c = f()?,
            "p_d" => self.p_d = f()?,
            "p_nz" => self.p_nz = f()?,
            "p_b" => self.p_b = u()?,
            "p_t" => self.p_t = f()?,
            _ => return Err(Error::usage(format!("unknown parameter {name}"))),
        }
        Ok(())
    }
}
