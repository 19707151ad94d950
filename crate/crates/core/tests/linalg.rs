use fieldrefine::pca::{covariance_of_rows, eig_sym, Matrix};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

const X: [[f64; 5]; 8] = [
    [0.0, 8.0, 80.0, 0.0, 2.0],
    [1.0, 8.0, 144.0, 0.0, 4.0],
    [1.0, 8.0, 144.0, 0.0, 7.0],
    [1.0, 8.0, 176.0, 0.0, 2.0],
    [2.0, 144.0, 64.0, 1.0, 2.0],
    [2.0, 144.0, 64.0, 1.0, 2.0],
    [1.0, 8.0, 128.0, 0.0, 4.0],
    [1.0, 8.0, 128.0, 0.0, 4.0],
];

fn oracle_cov(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = x.row_mean();
    let centred = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    centred.transpose() * centred / (n as f64 - 1.0)
}

fn sorted_eigs(m: DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

#[test]
fn example_covariance_matches_oracle() {
    let rows: Vec<Vec<f64>> = X.iter().map(|r| r.to_vec()).collect();
    let c = covariance_of_rows(&rows).unwrap();
    let o = oracle_cov(&rows);
    for i in 0..5 {
        for j in 0..5 {
            assert!((c.get(i, j) - o[(i, j)]).abs() < 1e-9, "({i},{j})");
        }
    }
    let ours = eig_sym(&c).unwrap().eigenvalues;
    let theirs = sorted_eigs(o);
    for (a, b) in ours.iter().zip(&theirs) {
        assert!((a - b).abs() < 1e-7 * theirs[0], "{a} vs {b}");
    }
    assert!((ours[0] - 5158.4).abs() < 1.0);
    assert!((ours[1] - 543.5).abs() < 1.0);
}

fn sym(n: usize, vals: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m.set(i, j, vals[k]);
            m.set(j, i, vals[k]);
            k += 1;
        }
    }
    m
}

proptest! {
    #[test]
    fn eigenvalues_match_oracle(n in 1usize..12, seed in proptest::collection::vec(-100.0f64..100.0, 78)) {
        let m = sym(n, &seed);
        let o = DMatrix::from_fn(n, n, |i, j| m.get(i, j));
        let ours = eig_sym(&m).unwrap();
        let theirs = sorted_eigs(o);
        let scale = theirs.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        for (a, b) in ours.eigenvalues.iter().zip(&theirs) {
            prop_assert!((a - b).abs() < 1e-9 * scale);
        }
        for w in ours.eigenvalues.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        for (i, v) in ours.loadings.iter().enumerate() {
            let norm: f64 = v.iter().map(|x| x * x).sum();
            prop_assert!((norm - 1.0).abs() < 1e-9);
            for r in 0..n {
                let mv: f64 = (0..n).map(|c| m.get(r, c) * v[c]).sum();
                prop_assert!((mv - ours.eigenvalues[i] * v[r]).abs() < 1e-8 * scale);
            }
        }
    }

    #[test]
    fn covariance_matches_oracle(rows in proptest::collection::vec(proptest::collection::vec(0u8..=255, 6), 2..20)) {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&b| b as f64).collect()).collect();
        let c = covariance_of_rows(&rows).unwrap();
        let o = oracle_cov(&rows);
        for i in 0..6 {
            for j in 0..6 {
                prop_assert!((c.get(i, j) - o[(i, j)]).abs() < 1e-8);
                prop_assert_eq!(c.get(i, j), c.get(j, i));
            }
        }
    }
}
