//! Base segmenters, refinement passes and the pipelines that chain them.

pub mod bitcong;
pub mod nulls;
pub mod passes;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::cluster::{self, ClusterNode, Verdict};
use crate::error::{Error, Result};
use crate::model::{segments_of, AnalysisParams, Message, SegmentRef, Segmentation};
use crate::rules::{self, BoundaryEdit, Provenance};

pub use bitcong::bit_congruence_segmenter;
pub use nulls::{null_refine, null_segmenter};
pub use passes::{crop_chars, crop_distinct, entropy_merge, merge_chars, split_fixed};

pub fn is_char_byte(b: u8) -> bool {
    matches!(b, 0x09 | 0x0a | 0x0d | 0x20..=0x7e)
}

/// At least three bytes, all printable ASCII or tab/LF/CR.
pub fn char_heuristic(bytes: &[u8]) -> bool {
    bytes.len() >= 3 && bytes.iter().all(|&b| is_char_byte(b))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Base {
    NullBytes,
    BitCongruence,
    /// A segmentation produced elsewhere; messages it omits stay unsegmented.
    External(Vec<Segmentation>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    EntropyMerge,
    NullBytesRefine,
    MergeChars,
    CropChars,
    Pca,
    CropDistinct,
    SplitFixed,
}

impl std::str::FromStr for Pass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "entropy_merge" => Pass::EntropyMerge,
            "null_bytes_refine" => Pass::NullBytesRefine,
            "merge_chars" => Pass::MergeChars,
            "crop_chars" => Pass::CropChars,
            "pca" => Pass::Pca,
            "crop_distinct" => Pass::CropDistinct,
            "split_fixed" => Pass::SplitFixed,
            _ => return Err(Error::usage(format!("unknown pass {s}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub base: Base,
    pub passes: Vec<Pass>,
    pub params: AnalysisParams,
    pub max_depth: usize,
    pub sigma: f64,
    pub split_chunk: usize,
    /// Segments shorter than this are left out of the clustering.
    pub min_segment_len: usize,
}

impl Pipeline {
    pub fn new(base: Base, passes: Vec<Pass>) -> Self {
        Pipeline {
            base,
            passes,
            params: AnalysisParams::default(),
            max_depth: cluster::DEFAULT_MAX_DEPTH,
            sigma: bitcong::DEFAULT_SIGMA,
            split_chunk: passes::SPLIT_CHUNK,
            min_segment_len: 2,
        }
    }

    /// Null-byte segmenter, char cropping, PCA, frequent-value cropping,
    /// first-segment splitting.
    pub fn nullpca() -> Self {
        Pipeline::new(
            Base::NullBytes,
            vec![Pass::CropChars, Pass::Pca, Pass::CropDistinct, Pass::SplitFixed],
        )
    }

    /// `base` (bit congruence or external), entropy merging, null-byte
    /// refinement, char cropping, PCA, frequent-value cropping,
    /// first-segment splitting.
    pub fn nemepca(base: Base) -> Self {
        Pipeline::new(
            base,
            vec![
                Pass::EntropyMerge,
                Pass::NullBytesRefine,
                Pass::CropChars,
                Pass::Pca,
                Pass::CropDistinct,
                Pass::SplitFixed,
            ],
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.passes.iter().filter(|p| **p == Pass::Pca).count() > 1 {
            return Err(Error::usage("the pca pass may appear only once"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::usage("sigma must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOutput {
    /// One per message, in trace order.
    pub segmentations: Vec<Segmentation>,
    pub edits: Vec<BoundaryEdit>,
    /// Cluster forest of the pca pass, empty if it did not run.
    pub clusters: Vec<ClusterNode>,
}

fn per_message<F>(msgs: &[Message], segs: &[Segmentation], f: F) -> Vec<Segmentation>
where
    F: Fn(&Segmentation, &Message) -> Segmentation + Sync,
{
    msgs.par_iter().zip(segs.par_iter()).map(|(m, s)| f(s, m)).collect()
}

fn record(before: &[Segmentation], after: &[Segmentation], provenance: Provenance, log: &mut Vec<BoundaryEdit>) {
    for (b, a) in before.iter().zip(after) {
        log.extend(rules::diff_edits(b, a, provenance));
    }
}

/// Outcome of one pca pass.
pub struct PcaPass {
    pub segmentations: Vec<Segmentation>,
    pub edits: Vec<BoundaryEdit>,
    pub clusters: Vec<ClusterNode>,
}

/// Clusters all current segments, interprets each cluster fit for analysis
/// and applies the resulting cut edits trace-wide.
pub fn pca_pass(msgs: &[Message], segs: &[Segmentation], pipeline: &Pipeline) -> PcaPass {
    let mut all: Vec<SegmentRef> = Vec::new();
    for (m, s) in msgs.iter().zip(segs) {
        match segments_of(s, m) {
            Ok(refs) => all.extend(refs.into_iter().filter(|r| r.len() >= pipeline.min_segment_len)),
            Err(e) => log::warn!("message {}: {e}", m.id),
        }
    }
    if all.is_empty() {
        return PcaPass {
            segmentations: segs.to_vec(),
            edits: Vec::new(),
            clusters: Vec::new(),
        };
    }
    let roots = match cluster::recursive_cluster(&all, &pipeline.params, pipeline.max_depth) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("clustering skipped: {e}");
            Vec::new()
        }
    };
    let mut by_id: BTreeMap<u64, Segmentation> = segs.iter().map(|s| (s.message_id, s.clone())).collect();
    let lengths: BTreeMap<u64, usize> = msgs.iter().map(|m| (m.id, m.len())).collect();
    let leaves: Vec<&ClusterNode> = roots
        .iter()
        .flat_map(|r| r.leaves())
        .filter(|n| n.verdict == Verdict::PcaSuitable)
        .collect();
    let proposed: Vec<BoundaryEdit> = leaves
        .par_iter()
        .flat_map_iter(|node| {
            let Some(a) = node.analysis.as_ref() else {
                return Vec::new();
            };
            let positions = rules::cluster_positions(a, &pipeline.params);
            rules::apply_cluster_edits(&a.overlay, &positions, &by_id, &lengths)
        })
        .collect();
    let applied = rules::apply_edits(&mut by_id, &lengths, &proposed);
    let segmentations = segs
        .iter()
        .map(|s| by_id.get(&s.message_id).cloned().unwrap_or_else(|| s.clone()))
        .collect();
    PcaPass {
        segmentations,
        edits: applied,
        clusters: roots,
    }
}

fn base_segmentation(msgs: &[Message], pipeline: &Pipeline) -> Vec<Segmentation> {
    match &pipeline.base {
        Base::NullBytes => msgs.par_iter().map(null_segmenter).collect(),
        Base::BitCongruence => msgs.par_iter().map(|m| bit_congruence_segmenter(m, pipeline.sigma)).collect(),
        Base::External(list) => {
            let by_id: BTreeMap<u64, &Segmentation> = list.iter().map(|s| (s.message_id, s)).collect();
            msgs.iter()
                .map(|m| match by_id.get(&m.id) {
                    Some(s) if s.is_valid_for(m) => (*s).clone(),
                    Some(_) => {
                        log::warn!("message {}: external segmentation does not fit, ignored", m.id);
                        Segmentation::unsegmented(m.id)
                    }
                    None => Segmentation::unsegmented(m.id),
                })
                .collect()
        }
    }
}

/// Runs the base segmenter and then every pass in order.
pub fn run_pipeline(msgs: &[Message], pipeline: &Pipeline) -> Result<PipelineOutput> {
    pipeline.validate()?;
    let mut segs = base_segmentation(msgs, pipeline);
    let mut out = PipelineOutput::default();
    for pass in &pipeline.passes {
        let (next, provenance) = match pass {
            Pass::EntropyMerge => (per_message(msgs, &segs, entropy_merge), Provenance::EntropyMerge),
            Pass::NullBytesRefine => (per_message(msgs, &segs, null_refine), Provenance::Nullbytes),
            Pass::MergeChars => (per_message(msgs, &segs, merge_chars), Provenance::CropChars),
            Pass::CropChars => (per_message(msgs, &segs, crop_chars), Provenance::CropChars),
            Pass::CropDistinct => (crop_distinct(&segs, msgs), Provenance::CropDistinct),
            Pass::SplitFixed => {
                let chunk = pipeline.split_chunk;
                (per_message(msgs, &segs, |s, m| split_fixed(s, m, chunk)), Provenance::SplitFixed)
            }
            Pass::Pca => {
                let r = pca_pass(msgs, &segs, pipeline);
                out.edits.extend(r.edits);
                out.clusters = r.clusters;
                segs = r.segmentations;
                continue;
            }
        };
        record(&segs, &next, provenance, &mut out.edits);
        segs = next;
    }
    out.segmentations = segs;
    Ok(out)
}
