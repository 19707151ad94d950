//! Density clustering of segments and the recursive sub-clustering that
//! looks for clusters fit for a component analysis.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use crate::dissim::{build_matrix, dissimilarity_raw, overlay_cluster, Overlay};
use crate::error::{Error, Result};
use crate::model::{AnalysisParams, SegmentRef};
use crate::pca::{self, PcaResult};

/// DBSCAN density threshold (neighbors within eps, self included).
pub const MIN_PTS: usize = 3;
pub const DEFAULT_MAX_DEPTH: usize = 3;
/// Lower clamp of an estimated eps, so identical segments still cluster.
pub const EPS_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Clustering {
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

/// DBSCAN over `n` items. Points are scanned in ascending index order and
/// a border point joins the first cluster that reaches it.
pub fn dbscan<D>(n: usize, dist: D, eps: f64, min_pts: usize) -> Clustering
where
    D: Fn(usize, usize) -> f64 + Sync,
{
    dbscan_weighted(&vec![1; n], dist, eps, min_pts)
}

/// DBSCAN where item `i` stands for `weights[i]` identical points. Gives
/// the same partition as [`dbscan`] on the expanded multiset.
pub fn dbscan_weighted<D>(weights: &[usize], dist: D, eps: f64, min_pts: usize) -> Clustering
where
    D: Fn(usize, usize) -> f64 + Sync,
{
    const UNSEEN: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;
    let n = weights.len();
    let region = |i: usize| -> Vec<usize> { (0..n).into_par_iter().filter(|&j| j == i || dist(i, j) <= eps).collect() };
    let mass = |r: &[usize]| -> usize { r.iter().map(|&j| weights[j]).sum() };

    let mut label = vec![UNSEEN; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if label[i] != UNSEEN {
            continue;
        }
        let neigh = region(i);
        if mass(&neigh) < min_pts {
            label[i] = NOISE;
            continue;
        }
        let c = clusters.len();
        label[i] = c;
        let mut members = vec![i];
        let mut queue: VecDeque<usize> = neigh.into_iter().filter(|&j| j != i).collect();
        while let Some(j) = queue.pop_front() {
            if label[j] == NOISE {
                label[j] = c;
                members.push(j);
                continue;
            }
            if label[j] != UNSEEN {
                continue;
            }
            label[j] = c;
            members.push(j);
            let nj = region(j);
            if mass(&nj) >= min_pts {
                queue.extend(nj.into_iter().filter(|&k| label[k] == UNSEEN || label[k] == NOISE));
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    let noise = (0..n).filter(|&i| label[i] == NOISE).collect();
    Clustering { clusters, noise }
}

/// Sorted distance of every item to its `k`-th nearest other item.
pub fn k_distances<D>(n: usize, dist: D, k: usize) -> Vec<f64>
where
    D: Fn(usize, usize) -> f64 + Sync,
{
    let mut kd: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist(i, j)).collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect();
    kd.sort_by(f64::total_cmp);
    kd
}

/// Eps at the knee of the ascending k-distance curve (k = `min_pts`),
/// falling back to its 90th percentile, clamped to `(0, 1]`.
pub fn estimate_eps<D>(n: usize, dist: D, min_pts: usize) -> Result<f64>
where
    D: Fn(usize, usize) -> f64 + Sync,
{
    if min_pts == 0 || n < min_pts + 1 {
        return Err(Error::Estimation(format!("{n} items are too few for k = {min_pts}")));
    }
    let kd = k_distances(n, dist, min_pts);
    let descending: Vec<f64> = kd.iter().rev().copied().collect();
    let value = match pca::kneedle(&descending) {
        Some(i) => descending[i],
        None => {
            let rank = ((0.9 * n as f64).ceil() as usize).clamp(1, n);
            kd[rank - 1]
        }
    };
    Ok(value.clamp(EPS_FLOOR, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    PcaSuitable,
    Recursed,
    AbandonedSmall,
    AbandonedDepth,
    Noise,
}

/// Overlay, retained matrix columns and component analysis of a cluster.
#[derive(Debug, Clone)]
pub struct ClusterAnalysis {
    pub overlay: Overlay,
    /// Relative position of each data-matrix column.
    pub columns: Vec<usize>,
    pub pca: PcaResult,
}

#[derive(Debug, Clone)]
pub struct ClusterNode {
    pub members: Vec<SegmentRef>,
    pub children: Vec<ClusterNode>,
    pub verdict: Verdict,
    pub depth: usize,
    /// Set on `PcaSuitable` nodes.
    pub analysis: Option<ClusterAnalysis>,
}

impl ClusterNode {
    fn leaf(members: Vec<SegmentRef>, verdict: Verdict, depth: usize) -> Self {
        ClusterNode {
            members,
            children: Vec::new(),
            verdict,
            depth,
            analysis: None,
        }
    }

    /// Depth-first, pre-order.
    pub fn walk<'a>(&'a self, out: &mut Vec<&'a ClusterNode>) {
        out.push(self);
        for c in &self.children {
            c.walk(out);
        }
    }

    pub fn leaves(&self) -> Vec<&ClusterNode> {
        let mut all = Vec::new();
        self.walk(&mut all);
        all.into_iter().filter(|n| n.children.is_empty()).collect()
    }
}

/// Groups members by identical value; returns the unique values in order
/// of first occurrence and, per unique value, the member indices.
fn unique_values(members: &[SegmentRef]) -> (Vec<&[u8]>, Vec<Vec<usize>>) {
    let mut index: HashMap<&[u8], usize> = HashMap::new();
    let mut values: Vec<&[u8]> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, m) in members.iter().enumerate() {
        let slot = *index.entry(m.values.as_slice()).or_insert_with(|| {
            values.push(m.values.as_slice());
            groups.push(Vec::new());
            values.len() - 1
        });
        groups[slot].push(i);
    }
    (values, groups)
}

/// DBSCAN on a set of segments with an eps estimated on its distinct
/// values. When there are too few distinct values for an estimate, only
/// identical segments are grouped.
pub fn subcluster(members: &[SegmentRef]) -> Clustering {
    let (values, groups) = unique_values(members);
    let dist = |i: usize, j: usize| dissimilarity_raw(values[i], values[j]).0;
    let eps = estimate_eps(values.len(), dist, MIN_PTS).unwrap_or(EPS_FLOOR);
    let weights: Vec<usize> = groups.iter().map(Vec::len).collect();
    let unique = dbscan_weighted(&weights, dist, eps, MIN_PTS);
    let expand = |ids: &[usize]| -> Vec<usize> {
        let mut v: Vec<usize> = ids.iter().flat_map(|&u| groups[u].iter().copied()).collect();
        v.sort_unstable();
        v
    };
    Clustering {
        clusters: unique.clusters.iter().map(|c| expand(c)).collect(),
        noise: expand(&unique.noise),
    }
}

fn process(members: Vec<SegmentRef>, params: &AnalysisParams, depth: usize, max_depth: usize) -> ClusterNode {
    if members.len() < params.p_n {
        return ClusterNode::leaf(members, Verdict::AbandonedSmall, depth);
    }
    let min_len = members.iter().map(SegmentRef::len).min().unwrap_or(0);
    let max_len = members.iter().map(SegmentRef::len).max().unwrap_or(0);
    if max_len == 0 {
        return ClusterNode::leaf(members, Verdict::Noise, depth);
    }
    if 1.0 - min_len as f64 / max_len as f64 > params.p_l {
        let mut by_len: BTreeMap<usize, Vec<SegmentRef>> = BTreeMap::new();
        for m in &members {
            by_len.entry(m.len()).or_default().push(m.clone());
        }
        let children = by_len
            .into_values()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|g| process(g, params, depth, max_depth))
            .collect();
        return ClusterNode {
            members,
            children,
            verdict: Verdict::Recursed,
            depth,
            analysis: None,
        };
    }
    let analysis = overlay_cluster(&members).and_then(|overlay| {
        let x = build_matrix(&overlay)?;
        let pca = pca::analyze(&x, params)?;
        Ok(ClusterAnalysis {
            overlay,
            columns: x.column_map,
            pca,
        })
    });
    let analysis = match analysis {
        Ok(a) => a,
        Err(e) => {
            log::debug!("cluster of {} unsuitable: {e}", members.len());
            return ClusterNode::leaf(members, Verdict::Noise, depth);
        }
    };
    if analysis.pca.passes(params) {
        return ClusterNode {
            members,
            children: Vec::new(),
            verdict: Verdict::PcaSuitable,
            depth,
            analysis: Some(analysis),
        };
    }
    if depth >= max_depth {
        return ClusterNode::leaf(members, Verdict::AbandonedDepth, depth);
    }
    let split = subcluster(&members);
    if split.clusters.len() == 1 && split.clusters[0].len() == members.len() {
        // eps is re-estimated on the same set, so deeper levels would
        // reproduce this partition until max_depth
        return ClusterNode::leaf(members, Verdict::AbandonedDepth, depth);
    }
    let pick = |ids: &[usize]| ids.iter().map(|&i| members[i].clone()).collect::<Vec<_>>();
    let mut children: Vec<ClusterNode> = split
        .clusters
        .par_iter()
        .map(|c| process(pick(c), params, depth + 1, max_depth))
        .collect();
    if !split.noise.is_empty() {
        children.push(ClusterNode::leaf(pick(&split.noise), Verdict::Noise, depth + 1));
    }
    ClusterNode {
        members,
        children,
        verdict: Verdict::Recursed,
        depth,
        analysis: None,
    }
}

/// Clusters `segments` by similarity and analyses every cluster: clusters
/// too small are abandoned, clusters of too different lengths are split by
/// length, clusters failing the component-analysis prerequisites are
/// sub-clustered until `max_depth`. Initial noise becomes one noise root.
pub fn recursive_cluster(segments: &[SegmentRef], params: &AnalysisParams, max_depth: usize) -> Result<Vec<ClusterNode>> {
    if segments.is_empty() {
        return Err(Error::usage("nothing to cluster"));
    }
    let initial = subcluster(segments);
    let pick = |ids: &[usize]| ids.iter().map(|&i| segments[i].clone()).collect::<Vec<_>>();
    let mut roots: Vec<ClusterNode> = initial
        .clusters
        .par_iter()
        .map(|c| process(pick(c), params, 0, max_depth))
        .collect();
    if !initial.noise.is_empty() {
        roots.push(ClusterNode::leaf(pick(&initial.noise), Verdict::Noise, 0));
    }
    Ok(roots)
}

#[derive(Serialize)]
struct NodeDump {
    id: usize,
    verdict: Verdict,
    depth: usize,
    members: Vec<(u64, usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eigenvalues: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_sig: Option<usize>,
    children: Vec<NodeDump>,
}

fn dump(node: &ClusterNode, next: &mut usize) -> NodeDump {
    let id = *next;
    *next += 1;
    NodeDump {
        id,
        verdict: node.verdict,
        depth: node.depth,
        members: node.members.iter().map(|m| (m.message_id, m.start, m.end)).collect(),
        eigenvalues: node.analysis.as_ref().map(|a| a.pca.eigenvalues.clone()),
        n_sig: node.analysis.as_ref().map(|a| a.pca.n_sig),
        children: node.children.iter().map(|c| dump(c, next)).collect(),
    }
}

/// JSON dump of the cluster forest: node id, verdict, member segments.
pub fn tree_json(roots: &[ClusterNode]) -> String {
    let mut next = 0;
    let dumps: Vec<NodeDump> = roots.iter().map(|r| dump(r, &mut next)).collect();
    let mut s = serde_json::to_string_pretty(&dumps).unwrap_or_else(|_| "[]".into());
    s.push('\n');
    s
}
