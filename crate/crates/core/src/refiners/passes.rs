//! Static refinement passes: entropy merging, char cropping and merging,
//! frequent-value cropping and fixed splitting of the first segment.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::{char_heuristic, is_char_byte};
use crate::model::{Message, Segmentation};

pub const ENTROPY_MAX_DIFF: f64 = 0.1;
pub const ENTROPY_FLOOR: f64 = 0.6;
pub const CROP_CHARS_MIN_RUN: usize = 6;
pub const DISTINCT_MIN_FRACTION: f64 = 0.1;
pub const DISTINCT_MIN_MESSAGES: usize = 3;
pub const SPLIT_CHUNK: usize = 2;

/// Shannon entropy of the byte values, normalized by `log2(min(len, 256))`.
pub fn normalized_entropy(bytes: &[u8]) -> f64 {
    if bytes.len() <= 1 {
        return 0.0;
    }
    let mut counts = [0usize; 256];
    for &b in bytes {
        counts[usize::from(b)] += 1;
    }
    let n = bytes.len() as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h / (bytes.len().min(256) as f64).log2()
}

/// Greedy left-to-right merge of neighbors with similar, high entropy.
pub fn entropy_merge(seg: &Segmentation, msg: &Message) -> Segmentation {
    let p = &msg.payload;
    let bounds = seg.bounds(p.len());
    let mut keep = Vec::new();
    let (mut cur_start, mut cur_end) = bounds[0];
    for &(s, e) in &bounds[1..] {
        let ha = normalized_entropy(&p[cur_start..cur_end]);
        let hb = normalized_entropy(&p[s..e]);
        if ha >= ENTROPY_FLOOR && hb >= ENTROPY_FLOOR && (ha - hb).abs() <= ENTROPY_MAX_DIFF {
            cur_end = e;
        } else {
            keep.push(s);
            cur_start = s;
            cur_end = e;
        }
    }
    Segmentation::from_offsets(msg.id, keep, p.len())
}

/// Merges neighboring segments made only of char bytes when the result
/// passes the char heuristic.
pub fn merge_chars(seg: &Segmentation, msg: &Message) -> Segmentation {
    let p = &msg.payload;
    let all_chars = |s: usize, e: usize| p[s..e].iter().all(|&b| is_char_byte(b));
    let bounds = seg.bounds(p.len());
    let mut keep = Vec::new();
    let mut cur = bounds[0];
    for &(s, e) in &bounds[1..] {
        if all_chars(cur.0, cur.1) && all_chars(s, e) && char_heuristic(&p[cur.0..e]) {
            cur.1 = e;
        } else {
            keep.push(s);
            cur = (s, e);
        }
    }
    Segmentation::from_offsets(msg.id, keep, p.len())
}

/// Cuts long char runs (with an optional null terminator) out of the
/// segments that contain them.
pub fn crop_chars(seg: &Segmentation, msg: &Message) -> Segmentation {
    let p = &msg.payload;
    let mut cuts: BTreeSet<usize> = seg.cuts().iter().copied().collect();
    for (s, e) in seg.bounds(p.len()) {
        if e - s < CROP_CHARS_MIN_RUN {
            continue;
        }
        let mut i = s;
        while i < e {
            if !is_char_byte(p[i]) {
                i += 1;
                continue;
            }
            let start = i;
            while i < e && is_char_byte(p[i]) {
                i += 1;
            }
            let mut end = i;
            if end - start < CROP_CHARS_MIN_RUN {
                continue;
            }
            if end < e && p[end] == 0 {
                end += 1;
                i = end;
            }
            cuts.insert(start);
            cuts.insert(end);
        }
    }
    Segmentation::from_offsets(msg.id, cuts, p.len())
}

/// Segment values (at least two bytes) that occur in at least
/// `max(10% of messages, 3)` messages, longest first.
pub fn frequent_values(segs: &[Segmentation], msgs: &[Message]) -> Vec<Vec<u8>> {
    let by_id: BTreeMap<u64, &Message> = msgs.iter().map(|m| (m.id, m)).collect();
    let mut counts: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
    for seg in segs {
        let Some(m) = by_id.get(&seg.message_id) else {
            continue;
        };
        let distinct: HashSet<&[u8]> = seg
            .bounds(m.len())
            .into_iter()
            .filter(|(s, e)| e - s >= 2)
            .map(|(s, e)| &m.payload[s..e])
            .collect();
        for v in distinct {
            *counts.entry(v.to_vec()).or_default() += 1;
        }
    }
    let floor = ((DISTINCT_MIN_FRACTION * msgs.len() as f64).ceil() as usize).max(DISTINCT_MIN_MESSAGES);
    let mut values: Vec<Vec<u8>> = counts.into_iter().filter(|(_, c)| *c >= floor).map(|(v, _)| v).collect();
    values.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    values
}

/// Crops frequent segment values out of longer segments.
pub fn crop_distinct(segs: &[Segmentation], msgs: &[Message]) -> Vec<Segmentation> {
    let values = frequent_values(segs, msgs);
    let by_id: BTreeMap<u64, &Message> = msgs.iter().map(|m| (m.id, m)).collect();
    segs.iter()
        .map(|seg| {
            let Some(m) = by_id.get(&seg.message_id) else {
                return seg.clone();
            };
            let mut current = seg.clone();
            for v in &values {
                let mut cuts: BTreeSet<usize> = current.cuts().iter().copied().collect();
                for (s, e) in current.bounds(m.len()) {
                    if e - s <= v.len() {
                        continue;
                    }
                    let mut o = s;
                    while o + v.len() <= e {
                        if m.payload[o..o + v.len()] == v[..] {
                            cuts.insert(o);
                            cuts.insert(o + v.len());
                            o += v.len();
                        } else {
                            o += 1;
                        }
                    }
                }
                current = Segmentation::from_offsets(m.id, cuts, m.len());
            }
            current
        })
        .collect()
}

/// Splits a non-char first segment into `chunk`-byte pieces; an odd tail
/// stays with the last piece.
pub fn split_fixed(seg: &Segmentation, msg: &Message, chunk: usize) -> Segmentation {
    let p = &msg.payload;
    let (s, e) = seg.bounds(p.len())[0];
    if chunk == 0 || char_heuristic(&p[s..e]) {
        return seg.clone();
    }
    let pieces = (e - s) / chunk;
    let extra = (1..pieces).map(|i| s + i * chunk);
    Segmentation::from_offsets(msg.id, seg.cuts().iter().copied().chain(extra), p.len())
}
