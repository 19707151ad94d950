//! Interpretation of a cluster's principal components: the maximum
//! loading per relative position, the two boundary rules, boundaries that
//! most members share, and the translation of relative positions into cut
//! edits on the messages.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::cluster::ClusterAnalysis;
use crate::dissim::Overlay;
use crate::error::{Error, Result};
use crate::model::{AnalysisParams, Segmentation};
use crate::pca::PcaResult;

/// `m[k]`: the largest absolute loading at column `k` over all significant
/// components.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionVector {
    pub m: Vec<f64>,
    pub n_sig: usize,
}

pub fn contribution(pca: &PcaResult) -> Result<ContributionVector> {
    let sig: Vec<&Vec<f64>> = pca
        .eigenvalues
        .iter()
        .zip(&pca.loadings)
        .filter(|(l, _)| **l > pca.q_s)
        .map(|(_, w)| w)
        .collect();
    if sig.is_empty() {
        return Err(Error::NoSignal);
    }
    let dim = sig[0].len();
    let m = (0..dim).map(|k| sig.iter().map(|w| w[k].abs()).fold(0.0, f64::max)).collect();
    Ok(ContributionVector { m, n_sig: sig.len() })
}

/// Field end: a significant loading followed by a near-total drop.
pub fn rule_a(c: &ContributionVector, p: &AnalysisParams) -> Vec<usize> {
    let m = &c.m;
    (1..m.len())
        .filter(|&k| m[k - 1] > p.p_c && m[k] <= p.p_c && (m[k - 1] - m[k]) / m[k - 1] > p.p_d)
        .collect()
}

/// Field start: a notable loading right after `p_b` near-zero positions,
/// rising steeply from its predecessor.
pub fn rule_b(c: &ContributionVector, p: &AnalysisParams) -> Vec<usize> {
    let m = &c.m;
    (p.p_b..m.len())
        .filter(|&k| {
            (1..=p.p_b).all(|j| m[k - j] < p.p_nz) && m[k] > p.p_t && (m[k] - m[k - 1]) / m[k] > p.p_d
        })
        .collect()
}

/// Positions `k` where `b[k]` beats both neighbors and reaches a majority
/// of `members`. Out-of-range neighbors count as zero.
pub fn majority_peaks(b: &[usize], members: usize) -> Vec<usize> {
    let quorum = members.div_ceil(2);
    (0..b.len())
        .filter(|&k| {
            let left = if k == 0 { 0 } else { b[k - 1] };
            let right = b.get(k + 1).copied().unwrap_or(0);
            b[k] > left && b[k] > right && b[k] >= quorum
        })
        .collect()
}

/// Relative positions where the aligned segment starts and ends of most
/// members coincide and outnumber both neighboring positions.
pub fn common_aligned_cuts(ov: &Overlay) -> Vec<usize> {
    let mut b = vec![0usize; ov.width + 1];
    for (m, &shift) in ov.members.iter().zip(&ov.shifts) {
        b[shift] += 1;
        b[shift + m.len()] += 1;
    }
    majority_peaks(&b, ov.members.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    RuleA,
    RuleB,
    CommonAligned,
    Nullbytes,
    CropChars,
    CropDistinct,
    SplitFixed,
    EntropyMerge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Add,
    MoveFrom(usize),
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BoundaryEdit {
    pub message_id: u64,
    pub offset: usize,
    pub kind: EditKind,
    pub provenance: Provenance,
}

/// Rule and alignment positions of one analysed cluster, in overlay
/// coordinates. A rule firing at matrix column `k` marks the cut right
/// before that column's relative position.
pub fn cluster_positions(a: &ClusterAnalysis, params: &AnalysisParams) -> Vec<(usize, Provenance)> {
    let mut out: BTreeMap<usize, Provenance> = BTreeMap::new();
    if let Ok(c) = contribution(&a.pca) {
        for k in rule_a(&c, params) {
            out.entry(a.columns[k]).or_insert(Provenance::RuleA);
        }
        for k in rule_b(&c, params) {
            out.entry(a.columns[k]).or_insert(Provenance::RuleB);
        }
    }
    for k in common_aligned_cuts(&a.overlay) {
        out.entry(k).or_insert(Provenance::CommonAligned);
    }
    out.into_iter().collect()
}

/// Translates relative positions into per-member cut edits against the
/// current cuts of each member's message.
///
/// A position that already is a cut is kept. Otherwise an adjacent cut
/// (distance 1) that is not itself an interior target is moved onto it; rule A
/// prefers the following cut, rule B and alignment peaks the preceding
/// one. Anything else is added. Positions outside a member's own bytes or
/// outside the message are skipped for that member.
pub fn apply_cluster_edits(
    ov: &Overlay,
    positions: &[(usize, Provenance)],
    cuts: &BTreeMap<u64, Segmentation>,
    lengths: &BTreeMap<u64, usize>,
) -> Vec<BoundaryEdit> {
    let mut edits = Vec::new();
    for (member, &shift) in ov.members.iter().zip(&ov.shifts) {
        let Some(len) = lengths.get(&member.message_id).copied() else {
            continue;
        };
        let Some(seg) = cuts.get(&member.message_id) else {
            continue;
        };
        let mut current: BTreeSet<usize> = seg.cuts().iter().copied().collect();
        // the member's own bounds already are cuts, and a correction may
        // need to move them
        let end = member.start + member.len();
        let targets: Vec<(usize, Provenance)> = positions
            .iter()
            .filter(|(k, _)| *k >= shift && *k <= shift + member.len())
            .map(|&(k, p)| (member.start + k - shift, p))
            .filter(|&(a, _)| a > 0 && a < len && a != member.start && a != end)
            .collect();
        let mut anchored: BTreeSet<usize> = targets.iter().map(|t| t.0).filter(|a| current.contains(a)).collect();
        for &(a, provenance) in &targets {
            if anchored.contains(&a) {
                continue;
            }
            let before = a.checked_sub(1).filter(|c| current.contains(c) && !anchored.contains(c));
            let after = Some(a + 1).filter(|c| current.contains(c) && !anchored.contains(c));
            let from = match provenance {
                Provenance::RuleA => after.or(before),
                _ => before.or(after),
            };
            let kind = match from {
                Some(old) => {
                    current.remove(&old);
                    EditKind::MoveFrom(old)
                }
                None => EditKind::Add,
            };
            current.insert(a);
            anchored.insert(a);
            edits.push(BoundaryEdit {
                message_id: member.message_id,
                offset: a,
                kind,
                provenance,
            });
        }
    }
    edits
}

/// Applies edits ordered by `(message_id, offset)`. A move whose source
/// cut is gone, or whose target already exists, is skipped.
pub fn apply_edits(segs: &mut BTreeMap<u64, Segmentation>, lengths: &BTreeMap<u64, usize>, edits: &[BoundaryEdit]) -> Vec<BoundaryEdit> {
    let mut sorted = edits.to_vec();
    sorted.sort_by_key(|e| (e.message_id, e.offset, e.kind, e.provenance));
    let mut applied = Vec::new();
    let mut by_msg: BTreeMap<u64, Vec<BoundaryEdit>> = BTreeMap::new();
    for e in sorted {
        by_msg.entry(e.message_id).or_default().push(e);
    }
    for (id, list) in by_msg {
        let (Some(seg), Some(&len)) = (segs.get(&id), lengths.get(&id)) else {
            continue;
        };
        let mut set: BTreeSet<usize> = seg.cuts().iter().copied().collect();
        for e in list {
            if e.offset == 0 || e.offset >= len {
                continue;
            }
            let done = match e.kind {
                EditKind::Add => set.insert(e.offset),
                EditKind::MoveFrom(old) => {
                    if set.contains(&old) && !set.contains(&e.offset) {
                        set.remove(&old);
                        set.insert(e.offset);
                        true
                    } else {
                        false
                    }
                }
                EditKind::Remove => set.remove(&e.offset),
            };
            if done {
                applied.push(e);
            }
        }
        segs.insert(id, Segmentation::from_offsets(id, set, len));
    }
    applied
}

/// Add/remove records describing the difference between two cut lists.
pub fn diff_edits(before: &Segmentation, after: &Segmentation, provenance: Provenance) -> Vec<BoundaryEdit> {
    let b: BTreeSet<usize> = before.cuts().iter().copied().collect();
    let a: BTreeSet<usize> = after.cuts().iter().copied().collect();
    let id = after.message_id;
    let mut out: Vec<BoundaryEdit> = b
        .difference(&a)
        .map(|&offset| BoundaryEdit {
            message_id: id,
            offset,
            kind: EditKind::Remove,
            provenance,
        })
        .chain(a.difference(&b).map(|&offset| BoundaryEdit {
            message_id: id,
            offset,
            kind: EditKind::Add,
            provenance,
        }))
        .collect();
    out.sort_by_key(|e| e.offset);
    out
}
