//! Canberra distance, its length-tolerant dissimilarity, and the overlay of
//! a segment cluster into a rectangular data matrix.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::SegmentRef;

/// Cost of a byte of the longer vector that has no counterpart.
pub const UNMATCHED_PENALTY: f64 = 1.0;

fn term_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![0.0; 256 * 256];
        for a in 0..256usize {
            for b in 0..256usize {
                if a != b {
                    t[a * 256 + b] = (a as f64 - b as f64).abs() / (a + b) as f64;
                }
            }
        }
        t
    })
}

#[inline]
fn canberra_raw(u: &[u8], v: &[u8]) -> f64 {
    let t = term_table();
    u.iter().zip(v).map(|(&a, &b)| t[usize::from(a) * 256 + usize::from(b)]).sum()
}

/// Canberra distance of two equal-length byte vectors. A term with both
/// values zero counts as 0.
pub fn canberra(u: &[u8], v: &[u8]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::usage(format!("canberra: lengths {} and {} differ", u.len(), v.len())));
    }
    Ok(canberra_raw(u, v))
}

/// Dissimilarity and best offset of the shorter vector inside the longer.
/// Both inputs must be non-empty; see [`dissimilarity`].
#[inline]
pub fn dissimilarity_raw(s: &[u8], t: &[u8]) -> (f64, usize) {
    let (short, long) = if s.len() <= t.len() { (s, t) } else { (t, s) };
    let (m, n) = (short.len(), long.len());
    let mut best = f64::INFINITY;
    let mut at = 0;
    for o in 0..=(n - m) {
        let d = canberra_raw(short, &long[o..o + m]);
        if d < best {
            best = d;
            at = o;
        }
    }
    ((best + (n - m) as f64 * UNMATCHED_PENALTY) / n as f64, at)
}

/// Canberra dissimilarity of two byte vectors of possibly different length:
/// the shorter slides over the longer, the best window's Canberra distance
/// plus one penalty per unmatched byte is normalized by the longer length.
/// Returns the value in `[0, 1]` and the offset (smallest on ties) of the
/// shorter vector inside the longer.
pub fn dissimilarity(s: &[u8], t: &[u8]) -> Result<(f64, usize)> {
    if s.is_empty() || t.is_empty() {
        return Err(Error::usage("dissimilarity of an empty vector"));
    }
    Ok(dissimilarity_raw(s, t))
}

/// A cluster's members superimposed at their best-matching offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub members: Vec<SegmentRef>,
    /// Relative position of each member's first byte.
    pub shifts: Vec<usize>,
    pub width: usize,
    /// Index of the medoid every member was aligned against.
    pub reference: usize,
}

impl Overlay {
    /// Whether member `i` has a byte at relative position `k`.
    pub fn observes(&self, i: usize, k: usize) -> bool {
        k >= self.shifts[i] && k < self.shifts[i] + self.members[i].len()
    }
}

/// Index of the member with the smallest summed dissimilarity to all
/// others; lowest index on ties.
pub fn medoid(members: &[SegmentRef]) -> usize {
    let sums: Vec<f64> = (0..members.len())
        .into_par_iter()
        .map(|i| {
            members
                .iter()
                .map(|m| dissimilarity_raw(&members[i].values, &m.values).0)
                .sum()
        })
        .collect();
    let mut best = 0;
    for (i, &s) in sums.iter().enumerate() {
        if s < sums[best] {
            best = i;
        }
    }
    best
}

pub fn overlay_cluster(members: &[SegmentRef]) -> Result<Overlay> {
    if members.len() < 2 {
        return Err(Error::usage("an overlay needs at least two members"));
    }
    if members.iter().any(|m| m.values.is_empty()) {
        return Err(Error::usage("overlay member without bytes"));
    }
    let reference = medoid(members);
    let refv = &members[reference].values;
    let signed: Vec<i64> = members
        .iter()
        .map(|m| {
            let (_, o) = dissimilarity_raw(&m.values, refv);
            if m.len() <= refv.len() {
                o as i64
            } else {
                -(o as i64)
            }
        })
        .collect();
    let min = signed.iter().copied().min().unwrap_or(0);
    let shifts: Vec<usize> = signed.iter().map(|&s| (s - min) as usize).collect();
    let width = shifts.iter().zip(members).map(|(s, m)| s + m.len()).max().unwrap_or(0);
    Ok(Overlay {
        members: members.to_vec(),
        shifts,
        width,
        reference,
    })
}

/// Rows are members, columns are the relative positions that at least half
/// of the members cover. Uncovered cells hold the column mean.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub rows: Vec<Vec<f64>>,
    pub mask: Vec<Vec<bool>>,
    pub column_map: Vec<usize>,
}

impl DataMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_map.len()
    }
}

pub fn build_matrix(ov: &Overlay) -> Result<DataMatrix> {
    let n = ov.members.len();
    let quorum = n.div_ceil(2);
    let column_map: Vec<usize> = (0..ov.width)
        .filter(|&k| (0..n).filter(|&i| ov.observes(i, k)).count() >= quorum)
        .collect();
    if column_map.is_empty() {
        return Err(Error::Degenerate("no relative position is covered by a majority".into()));
    }
    let mut rows = vec![vec![0.0; column_map.len()]; n];
    let mut mask = vec![vec![false; column_map.len()]; n];
    for (c, &k) in column_map.iter().enumerate() {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..n {
            if ov.observes(i, k) {
                let v = f64::from(ov.members[i].values[k - ov.shifts[i]]);
                rows[i][c] = v;
                mask[i][c] = true;
                sum += v;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        for i in 0..n {
            if !mask[i][c] {
                rows[i][c] = mean;
            }
        }
    }
    Ok(DataMatrix { rows, mask, column_map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn seg(id: u64, values: &[u8]) -> SegmentRef {
        SegmentRef {
            message_id: id,
            start: 0,
            end: values.len(),
            values: values.to_vec(),
        }
    }

    #[test]
    fn canberra_examples() {
        assert_eq!(canberra(&[7, 9, 200], &[7, 9, 200]).unwrap(), 0.0);
        assert_eq!(canberra(&[0, 0], &[0, 0]).unwrap(), 0.0);
        assert_eq!(canberra(&[1], &[3]).unwrap(), 0.5);
        assert!(canberra(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn dissimilarity_examples() {
        assert_eq!(dissimilarity(&[4, 5, 6], &[4, 5, 6]).unwrap(), (0.0, 0));
        assert_eq!(dissimilarity(&[0x08], &[0x08, 0x90]).unwrap(), (0.5, 0));
        assert_eq!(dissimilarity(&[0x90], &[0x08, 0x90]).unwrap(), (0.5, 1));
        assert_eq!(dissimilarity(&[0x08, 0x90], &[0x90]).unwrap(), (0.5, 1));
        assert!(dissimilarity(&[], &[1]).is_err());
    }

    #[test]
    fn overlay_identical_members() {
        let m = vec![seg(0, &[1, 2, 3]), seg(1, &[1, 2, 3]), seg(2, &[1, 2, 3])];
        let ov = overlay_cluster(&m).unwrap();
        assert_eq!(ov.shifts, vec![0, 0, 0]);
        assert_eq!(ov.width, 3);
    }

    #[test]
    fn overlay_aligns_shorter_member() {
        let m = vec![seg(0, &[0x08, 0x90]), seg(1, &[0x90])];
        let ov = overlay_cluster(&m).unwrap();
        assert_eq!(ov.reference, 0);
        assert_eq!(ov.shifts, vec![0, 1]);
        assert_eq!(ov.width, 2);
    }

    #[test]
    fn medoid_prefers_identical_pair() {
        let m = vec![seg(0, &[200, 3]), seg(1, &[10, 20]), seg(2, &[10, 20])];
        // brute force over total dissimilarity
        let totals: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| dissimilarity(&m[i].values, &m[j].values).unwrap().0).sum())
            .collect();
        assert!(totals[1] < totals[0]);
        assert_eq!(totals[1], totals[2]);
        assert_eq!(overlay_cluster(&m).unwrap().reference, 1);
    }

    #[test]
    fn matrix_of_equal_members_is_raw() {
        let m = vec![seg(0, &[1, 2]), seg(1, &[3, 4])];
        let x = build_matrix(&overlay_cluster(&m).unwrap()).unwrap();
        assert_eq!(x.rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(x.mask.iter().flatten().all(|&b| b));
    }

    #[test]
    fn mean_fills_missing_cell() {
        let ov = Overlay {
            members: vec![seg(0, &[1, 10]), seg(1, &[2, 20]), seg(2, &[3, 60]), seg(3, &[4])],
            shifts: vec![0, 0, 0, 0],
            width: 2,
            reference: 0,
        };
        let x = build_matrix(&ov).unwrap();
        assert_eq!(x.column_map, vec![0, 1]);
        assert_eq!(x.rows[3], vec![4.0, 30.0]);
        assert!(!x.mask[3][1]);
    }

    #[test]
    fn minority_positions_are_dropped() {
        let ov = Overlay {
            members: vec![seg(0, &[1, 9, 9]), seg(1, &[2]), seg(2, &[3]), seg(3, &[4])],
            shifts: vec![0, 0, 0, 0],
            width: 3,
            reference: 1,
        };
        assert_eq!(build_matrix(&ov).unwrap().column_map, vec![0]);
        let ov = Overlay {
            members: vec![seg(0, &[1]), seg(1, &[2]), seg(2, &[3])],
            shifts: vec![0, 1, 2],
            width: 3,
            reference: 1,
        };
        assert!(matches!(build_matrix(&ov), Err(Error::Degenerate(_))));
    }

    proptest! {
        #[test]
        fn dissimilarity_symmetric_and_bounded(
            a in proptest::collection::vec(any::<u8>(), 1..12),
            b in proptest::collection::vec(any::<u8>(), 1..12),
        ) {
            let (ab, _) = dissimilarity(&a, &b).unwrap();
            let (ba, _) = dissimilarity(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(dissimilarity(&a, &a).unwrap().0, 0.0);
        }

        #[test]
        fn canberra_triangle(
            v in proptest::collection::vec((any::<u8>(), any::<u8>(), any::<u8>()), 1..10),
        ) {
            let a: Vec<u8> = v.iter().map(|t| t.0).collect();
            let b: Vec<u8> = v.iter().map(|t| t.1).collect();
            let c: Vec<u8> = v.iter().map(|t| t.2).collect();
            let ab = canberra(&a, &b).unwrap();
            prop_assert!(ab <= canberra(&a, &c).unwrap() + canberra(&c, &b).unwrap() + 1e-12);
            prop_assert_eq!(ab, canberra(&b, &a).unwrap());
        }
    }
}
