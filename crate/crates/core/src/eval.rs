//! Scoring of inferred cuts against ground truth.
//!
//! `fms_like` is the geometric mean of the exact-match F1 and the F1 that
//! also accepts boundaries off by one byte.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::model::{GroundTruth, Message, Segmentation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(hits: usize, inferred: usize, truth: usize) -> Prf {
        match (inferred, truth) {
            (0, 0) => Prf { precision: 1.0, recall: 1.0, f1: 1.0 },
            (0, _) => Prf { precision: 0.0, recall: 0.0, f1: 0.0 },
            (_, 0) => Prf { precision: 0.0, recall: 1.0, f1: 0.0 },
            _ => {
                let p = hits as f64 / inferred as f64;
                let r = hits as f64 / truth as f64;
                let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
                Prf { precision: p, recall: r, f1 }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MessageScore {
    pub exact: Prf,
    pub near: Prf,
    pub fms_like: f64,
}

/// Exact matches plus a maximum ±1 matching of the remaining cuts. The
/// two-pointer sweep is optimal for a window of one on sorted lists.
pub fn match_counts(inferred: &[usize], truth: &[usize]) -> (usize, usize) {
    let t: BTreeSet<usize> = truth.iter().copied().collect();
    let i: BTreeSet<usize> = inferred.iter().copied().collect();
    let exact = i.intersection(&t).count();
    let iu: Vec<usize> = i.difference(&t).copied().collect();
    let tu: Vec<usize> = t.difference(&i).copied().collect();
    let (mut a, mut b, mut near) = (0, 0, 0);
    while a < iu.len() && b < tu.len() {
        if iu[a].abs_diff(tu[b]) <= 1 {
            near += 1;
            a += 1;
            b += 1;
        } else if iu[a] < tu[b] {
            a += 1;
        } else {
            b += 1;
        }
    }
    (exact, near)
}

pub fn score_message(inferred: &[usize], truth: &[usize]) -> MessageScore {
    let (exact, near) = match_counts(inferred, truth);
    let (ni, nt) = (inferred.len(), truth.len());
    let e = Prf::from_counts(exact, ni, nt);
    let n = Prf::from_counts(exact + near, ni, nt);
    MessageScore {
        exact: e,
        near: n,
        fms_like: (e.f1 * n.f1).sqrt(),
    }
}

/// Inferred segments whose range matches no true field range, even with
/// both ends off by one.
pub fn unknown_segments(inferred: &Segmentation, truth: &[usize], len: usize) -> usize {
    let fields = Segmentation::from_offsets(inferred.message_id, truth.iter().copied(), len).bounds(len);
    inferred
        .bounds(len)
        .into_iter()
        .filter(|&(s, e)| !fields.iter().any(|&(fs, fe)| s.abs_diff(fs) <= 1 && e.abs_diff(fe) <= 1))
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MessageReport {
    pub message_id: u64,
    #[serde(flatten)]
    pub score: MessageScore,
    pub inferred_cuts: usize,
    pub true_cuts: usize,
    pub unknown_segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Medians {
    pub exact_precision: f64,
    pub exact_recall: f64,
    pub exact_f1: f64,
    pub near_precision: f64,
    pub near_recall: f64,
    pub near_f1: f64,
    pub fms_like: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub name: String,
    pub messages: Vec<MessageReport>,
    pub medians: Medians,
    pub scored_messages: usize,
    pub excluded_messages: usize,
    pub inferred_cuts: usize,
    pub true_cuts: usize,
    pub unknown_segments: usize,
}

/// Lower-middle median; 0 for an empty list.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// Scores every message of `msgs` that has ground truth. Messages without
/// an inferred segmentation count as unsegmented; messages without truth
/// are excluded and counted.
pub fn score_trace(name: &str, segs: &[Segmentation], truth: &GroundTruth, msgs: &[Message]) -> ScoreReport {
    let inferred: BTreeMap<u64, &Segmentation> = segs.iter().map(|s| (s.message_id, s)).collect();
    let mut messages = Vec::new();
    let mut excluded = 0;
    for m in msgs {
        let Some(t) = truth.cuts(m.id) else {
            excluded += 1;
            continue;
        };
        let empty = Segmentation::unsegmented(m.id);
        let seg = inferred.get(&m.id).copied().unwrap_or(&empty);
        messages.push(MessageReport {
            message_id: m.id,
            score: score_message(seg.cuts(), t),
            inferred_cuts: seg.cuts().len(),
            true_cuts: t.len(),
            unknown_segments: unknown_segments(seg, t, m.len()),
        });
    }
    let med = |f: &dyn Fn(&MessageReport) -> f64| median(&messages.iter().map(f).collect::<Vec<_>>());
    let medians = Medians {
        exact_precision: med(&|r| r.score.exact.precision),
        exact_recall: med(&|r| r.score.exact.recall),
        exact_f1: med(&|r| r.score.exact.f1),
        near_precision: med(&|r| r.score.near.precision),
        near_recall: med(&|r| r.score.near.recall),
        near_f1: med(&|r| r.score.near.f1),
        fms_like: med(&|r| r.score.fms_like),
    };
    ScoreReport {
        name: name.to_string(),
        scored_messages: messages.len(),
        excluded_messages: excluded,
        inferred_cuts: messages.iter().map(|r| r.inferred_cuts).sum(),
        true_cuts: messages.iter().map(|r| r.true_cuts).sum(),
        unknown_segments: messages.iter().map(|r| r.unknown_segments).sum(),
        messages,
        medians,
    }
}

/// Per-message `fms_like` side by side, one column per report, followed by
/// median rows.
pub fn compare_csv(reports: &[ScoreReport]) -> String {
    let mut rows: BTreeMap<u64, Vec<Option<f64>>> = BTreeMap::new();
    for (col, r) in reports.iter().enumerate() {
        for m in &r.messages {
            rows.entry(m.message_id).or_insert_with(|| vec![None; reports.len()])[col] = Some(m.score.fms_like);
        }
    }
    let mut s = String::from("message_id");
    for r in reports {
        s.push(',');
        s.push_str(&r.name);
    }
    s.push('\n');
    for (id, vals) in rows {
        s.push_str(&id.to_string());
        for v in vals {
            s.push(',');
            if let Some(v) = v {
                s.push_str(&format!("{v:.6}"));
            }
        }
        s.push('\n');
    }
    let summary: [(&str, fn(&Medians) -> f64); 3] = [
        ("median_fms_like", |m| m.fms_like),
        ("median_exact_f1", |m| m.exact_f1),
        ("median_near_f1", |m| m.near_f1),
    ];
    for (label, get) in summary {
        s.push_str(label);
        for r in reports {
            s.push_str(&format!(",{:.6}", get(&r.medians)));
        }
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct Comparison<'a> {
    pipelines: Vec<&'a str>,
    medians: BTreeMap<&'a str, &'a Medians>,
}

pub fn compare_json(reports: &[ScoreReport]) -> String {
    let c = Comparison {
        pipelines: reports.iter().map(|r| r.name.as_str()).collect(),
        medians: reports.iter().map(|r| (r.name.as_str(), &r.medians)).collect(),
    };
    let mut s = serde_json::to_string_pretty(&c).unwrap_or_default();
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn off_by_one_example() {
        let s = score_message(&[2, 4], &[2, 5]);
        assert_eq!(s.exact.f1, 0.5);
        assert_eq!(s.near.f1, 1.0);
        assert!((s.fms_like - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identity_and_empty() {
        let s = score_message(&[1, 3, 7], &[1, 3, 7]);
        assert_eq!((s.exact.f1, s.near.f1, s.fms_like), (1.0, 1.0, 1.0));
        let s = score_message(&[], &[1, 3]);
        assert_eq!((s.exact.precision, s.exact.recall, s.near.f1, s.fms_like), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(score_message(&[], &[]).fms_like, 1.0);
        let s = score_message(&[2], &[]);
        assert_eq!((s.exact.precision, s.fms_like), (0.0, 0.0));
    }

    #[test]
    fn near_matching_is_maximal() {
        // greedy from the left must not pair 3 with 2 and strand 4
        assert_eq!(match_counts(&[3, 5], &[2, 4]), (0, 2));
        assert_eq!(match_counts(&[1, 2, 3], &[2]), (1, 0));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[0.2, 0.6, 0.9]), 0.6);
        assert_eq!(median(&[0.2, 0.6]), 0.2);
        assert_eq!(median(&[0.6, 0.2]), 0.2);
    }

    #[test]
    fn unknown_segment_tolerance() {
        let seg = Segmentation::new(0, vec![3, 6], 10).unwrap();
        assert_eq!(unknown_segments(&seg, &[2, 6], 10), 0);
        let seg = Segmentation::new(0, vec![4, 8], 10).unwrap();
        assert_eq!(unknown_segments(&seg, &[2, 6], 10), 3);
    }

    #[test]
    fn comparison_has_one_column_per_report() {
        let msgs: Vec<Message> = (0..2).map(|i| Message::new(i, vec![0; 8], "t").unwrap()).collect();
        let mut gt = GroundTruth::default();
        gt.insert(0, vec![2, 4], None);
        gt.insert(1, vec![4], None);
        let a = vec![Segmentation::new(0, vec![2, 4], 8).unwrap(), Segmentation::new(1, vec![5], 8).unwrap()];
        let b = vec![Segmentation::unsegmented(0), Segmentation::unsegmented(1)];
        let reports = [score_trace("a", &a, &gt, &msgs), score_trace("b", &b, &gt, &msgs)];
        let csv = compare_csv(&reports);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "message_id,a,b");
        assert_eq!(lines[1], "0,1.000000,0.000000");
        assert_eq!(lines[2], "1,0.000000,0.000000");
        assert!(lines[3].starts_with("median_fms_like,0.000000,"));
    }
}
