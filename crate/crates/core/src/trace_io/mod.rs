//! Trace ingestion (pcap, hex lines) and JSON segmentation/ground-truth
//! files.

pub mod hexlines;
pub mod json;
pub mod pcap;

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{GroundTruth, Message, Segmentation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Pcap,
    Hexlines,
}

impl Format {
    /// `.pcap`/`.cap` files are captures, anything else is read as hex lines.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("pcap") | Some("cap") => Format::Pcap,
            _ => Format::Hexlines,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    UdpPayload,
    TcpPayload,
    RawFrame,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSpec {
    pub path: PathBuf,
    pub format: Format,
    pub layer: Layer,
    pub port: Option<u16>,
    pub max_messages: Option<usize>,
    pub dedupe: bool,
}

impl TraceSpec {
    /// Defaults: format from the extension, UDP payloads, deduplication on.
    pub fn new(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        TraceSpec {
            format: Format::from_path(&path),
            path,
            layer: Layer::UdpPayload,
            port: None,
            max_messages: None,
            dedupe: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.port.is_some() && self.layer == Layer::RawFrame {
            return Err(Error::usage("a port filter needs the udp or tcp payload layer"));
        }
        if self.max_messages == Some(0) {
            return Err(Error::usage("max_messages must be at least 1"));
        }
        Ok(())
    }
}

/// Message ids are positions in the extracted sequence before
/// deduplication, so ground truth written alongside a trace keeps matching
/// after duplicates are dropped.
pub fn load_trace(spec: &TraceSpec) -> Result<Vec<Message>> {
    spec.validate()?;
    let bytes = fs::read(&spec.path).map_err(|e| Error::ingest(&spec.path, e.to_string()))?;
    let name = spec.path.display().to_string();
    let raw: Vec<(String, Vec<u8>)> = match spec.format {
        Format::Pcap => pcap::extract(&bytes, spec.layer, spec.port)
            .map_err(|e| Error::ingest(&spec.path, e.to_string()))?
            .into_iter()
            .map(|(frame, p)| (format!("{name}#{frame}"), p))
            .collect(),
        Format::Hexlines => {
            let text = String::from_utf8(bytes).map_err(|_| Error::ingest(&spec.path, "not UTF-8 text"))?;
            hexlines::parse(&text)
                .map_err(|e| Error::ingest(&spec.path, e.to_string()))?
                .into_iter()
                .map(|(line, p)| (format!("{name}:{line}"), p))
                .collect()
        }
    };
    Ok(assemble(raw, spec.dedupe, spec.max_messages))
}

/// Numbers payloads, drops duplicates and truncates.
pub fn assemble(raw: Vec<(String, Vec<u8>)>, dedupe: bool, max_messages: Option<usize>) -> Vec<Message> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, (source, payload)) in raw.into_iter().enumerate() {
        if payload.is_empty() {
            continue;
        }
        if dedupe && !seen.insert(payload.clone()) {
            continue;
        }
        if max_messages.is_some_and(|n| out.len() >= n) {
            break;
        }
        out.push(Message {
            id: i as u64,
            payload,
            source,
        });
    }
    out
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::ingest(path, e.to_string()))
}

pub fn load_ground_truth(path: &Path, messages: &[Message]) -> Result<GroundTruth> {
    json::parse_ground_truth(&read_text(path)?, messages)
}

pub fn load_segmentation(path: &Path, messages: &[Message]) -> Result<Vec<Segmentation>> {
    json::parse_segmentations(&read_text(path)?, messages)
}

pub fn save_segmentation(path: &Path, segs: &[Segmentation]) -> Result<()> {
    write_atomic(path, json::render_segmentations(segs).as_bytes())
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
