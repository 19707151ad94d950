//! Null-byte segmenter and refinement. Nulls after a char sequence are
//! read as its terminator and join it; other nulls are read as unset high
//! bytes of a number and join the following segment.

use std::collections::BTreeSet;

use super::char_heuristic;
use crate::model::{Message, Segmentation};

/// Maximal runs of 0x00 as `[start, end)`.
pub fn null_runs(payload: &[u8]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < payload.len() {
        if payload[i] == 0 {
            let start = i;
            while i < payload.len() && payload[i] == 0 {
                i += 1;
            }
            runs.push((start, i));
        } else {
            i += 1;
        }
    }
    runs
}

/// The maximal non-null run that ends right before `at`.
fn preceding_run(payload: &[u8], at: usize) -> &[u8] {
    let start = payload[..at].iter().rposition(|&b| b == 0).map_or(0, |p| p + 1);
    &payload[start..at]
}

/// Where the boundary next to a null run belongs: after the run if it
/// terminates a char sequence, before it otherwise. A run at the message
/// start joins what follows.
fn anchor(payload: &[u8], run: (usize, usize)) -> usize {
    let (start, end) = run;
    if start == 0 {
        0
    } else if char_heuristic(preceding_run(payload, start)) {
        end
    } else {
        start
    }
}

pub fn null_segmenter(msg: &Message) -> Segmentation {
    let p = &msg.payload;
    let mut cuts: BTreeSet<usize> = (1..p.len()).filter(|&i| (p[i] == 0) != (p[i - 1] == 0)).collect();
    for run in null_runs(p) {
        let keep = anchor(p, run);
        if keep != run.0 {
            cuts.remove(&run.0);
        }
        if keep != run.1 {
            cuts.remove(&run.1);
        }
    }
    Segmentation::from_offsets(msg.id, cuts, p.len())
}

/// Moves the cut closest to each null run's anchor onto it. Cuts are only
/// moved, never added or removed.
pub fn null_refine(seg: &Segmentation, msg: &Message) -> Segmentation {
    let p = &msg.payload;
    let len = p.len();
    let mut cuts: BTreeSet<usize> = seg.cuts().iter().copied().collect();
    for run in null_runs(p) {
        let target = anchor(p, run);
        if target == 0 || target >= len || cuts.contains(&target) {
            continue;
        }
        let lo = run.0.saturating_sub(1);
        let hi = run.1 + 1;
        let nearest = cuts
            .range(lo..=hi)
            .copied()
            .min_by_key(|&c| (c.abs_diff(target), c));
        if let Some(c) = nearest {
            cuts.remove(&c);
            cuts.insert(target);
        }
    }
    Segmentation::from_offsets(msg.id, cuts, len)
}
