//! Covariance, symmetric eigendecomposition, scree knee detection and the
//! significance test that decides whether a cluster is fit for analysis.

use crate::dissim::DataMatrix;
use crate::error::{Error, Result};
use crate::model::AnalysisParams;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    a: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, a: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::usage("matrix rows must form a square"));
        }
        Ok(Matrix {
            n,
            a: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.a.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }
}

/// Sample covariance (denominator rows - 1) of the matrix columns.
pub fn covariance(x: &DataMatrix) -> Result<Matrix> {
    covariance_of_rows(&x.rows)
}

pub fn covariance_of_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let r = rows.len();
    if r < 2 {
        return Err(Error::Degenerate("covariance needs at least two rows".into()));
    }
    let n = rows[0].len();
    let means: Vec<f64> = (0..n).map(|j| rows.iter().map(|row| row[j]).sum::<f64>() / r as f64).collect();
    let mut c = Matrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let s: f64 = rows.iter().map(|row| (row[i] - means[i]) * (row[j] - means[j])).sum();
            let v = s / (r - 1) as f64;
            c.set(i, j, v);
            c.set(j, i, v);
        }
    }
    Ok(c)
}

/// Eigenvalues (descending) and loadings of a covariance matrix together
/// with the significance verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    pub eigenvalues: Vec<f64>,
    /// `loadings[i][k]`: component `k` of principal component `i`.
    pub loadings: Vec<Vec<f64>>,
    pub q_s: f64,
    pub knee: Option<usize>,
    pub n_sig: usize,
}

const SYMMETRY_TOL: f64 = 1e-9;
const CLAMP_TOL: f64 = 1e-9;

/// Cyclic Jacobi eigensolver for symmetric matrices. Only `eigenvalues`
/// and `loadings` are filled; see [`analyze`] for the rest.
pub fn eig_sym(c: &Matrix) -> Result<PcaResult> {
    let n = c.dim();
    let scale = c.max_abs().max(1.0);
    for i in 0..n {
        for j in i + 1..n {
            if (c.get(i, j) - c.get(j, i)).abs() > SYMMETRY_TOL * scale {
                return Err(Error::usage(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut a = c.clone();
    let mut v = Matrix::zeros(n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let frob: f64 = c.a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * frob || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, cs * akp - sn * akq);
                    a.set(k, q, sn * akp + cs * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, cs * apk - sn * aqk);
                    a.set(q, k, sn * apk + cs * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, cs * vkp - sn * vkq);
                    v.set(k, q, sn * vkp + cs * vkq);
                }
            }
        }
    }
    let vmax = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max).max(1.0);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|i| {
            let mut lambda = a.get(i, i);
            if lambda < 0.0 && lambda.abs() <= CLAMP_TOL * vmax {
                lambda = 0.0;
            }
            let mut w: Vec<f64> = (0..n).map(|k| v.get(k, i)).collect();
            let lead = w
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                w.iter_mut().for_each(|x| *x = -*x);
            }
            (lambda, w)
        })
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let (eigenvalues, loadings) = pairs.into_iter().unzip();
    Ok(PcaResult {
        eigenvalues,
        loadings,
        q_s: f64::INFINITY,
        knee: None,
        n_sig: 0,
    })
}

/// Kneedle (sensitivity 1, no smoothing) on a descending, convex curve
/// such as a scree graph. Returns the index of the first local maximum of
/// the difference curve after which the curve drops below that maximum's
/// threshold.
pub fn kneedle(values: &[f64]) -> Option<usize> {
    const SENSITIVITY: f64 = 1.0;
    let n = values.len();
    if n < 3 {
        return None;
    }
    let ymax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ymin = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(ymax - ymin > 0.0) || !ymax.is_finite() || !ymin.is_finite() {
        return None;
    }
    let step = 1.0 / (n - 1) as f64;
    let diff: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(j, &y)| (1.0 - j as f64 * step) - (y - ymin) / (ymax - ymin))
        .collect();
    let is_max = |j: usize| j > 0 && j + 1 < n && diff[j] > diff[j - 1] && diff[j] >= diff[j + 1];
    let mut current: Option<(usize, f64)> = None;
    for j in 1..n {
        if is_max(j) {
            current = Some((j, diff[j] - SENSITIVITY * step));
            continue;
        }
        if let Some((at, threshold)) = current {
            if diff[j] < threshold - 1e-12 {
                return Some(at);
            }
        }
    }
    None
}

/// `min(knee eigenvalue, λ0 / 10, p_s)`; a missing knee drops out.
pub fn significance_threshold(eigenvalues: &[f64], params: &AnalysisParams) -> (f64, Option<usize>) {
    let knee = kneedle(eigenvalues);
    let k = knee.map_or(f64::INFINITY, |i| eigenvalues[i]);
    let first = eigenvalues.first().copied().unwrap_or(0.0);
    (k.min(first / 10.0).min(params.p_s), knee)
}

pub fn count_significant(eigenvalues: &[f64], q_s: f64) -> usize {
    eigenvalues.iter().filter(|&&l| l > q_s).count()
}

/// True when the number of significant components stays within
/// `min(p_p, dim * p_q)`.
pub fn pca_prerequisites(eigenvalues: &[f64], params: &AnalysisParams) -> bool {
    let (q_s, _) = significance_threshold(eigenvalues, params);
    let n_sig = count_significant(eigenvalues, q_s);
    n_sig as f64 <= (params.p_p as f64).min(eigenvalues.len() as f64 * params.p_q)
}

/// Covariance, eigendecomposition and significance for one data matrix.
pub fn analyze(x: &DataMatrix, params: &AnalysisParams) -> Result<PcaResult> {
    let c = covariance(x)?;
    let mut r = eig_sym(&c)?;
    let (q_s, knee) = significance_threshold(&r.eigenvalues, params);
    r.q_s = q_s;
    r.knee = knee;
    r.n_sig = count_significant(&r.eigenvalues, q_s);
    Ok(r)
}

impl PcaResult {
    pub fn passes(&self, params: &AnalysisParams) -> bool {
        self.n_sig as f64 <= (params.p_p as f64).min(self.eigenvalues.len() as f64 * params.p_q)
    }
}
