//! Straight-from-the-definitions reference implementations.
//!
//! Everything here uses plain nested loops over `Vec<Vec<f64>>` and shares no
//! code with the library, so agreement is meaningful.

#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub type Mat = Vec<Vec<f64>>;

pub fn rows(x: &Array2<f64>) -> Mat {
    x.outer_iter().map(|r| r.to_vec()).collect()
}

pub fn distances(x: &Mat) -> Mat {
    let n = x.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..x[i].len() {
                s += (x[i][k] - x[j][k]).powi(2);
            }
            d[i][j] = s.sqrt();
        }
    }
    d
}

pub fn double_center(a: &Mat) -> Mat {
    let n = a.len();
    let nf = n as f64;
    let row: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| a[i][j]).sum::<f64>() / nf)
        .collect();
    let col: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| a[i][j]).sum::<f64>() / nf)
        .collect();
    let grand = row.iter().sum::<f64>() / nf;
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = a[i][j] - row[i] - col[j] + grand;
        }
    }
    out
}

pub fn u_center(a: &Mat) -> Mat {
    let n = a.len();
    let nf = n as f64;
    let mut out = vec![vec![0.0; n]; n];
    let total: f64 = a.iter().flatten().sum();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let ri: f64 = (0..n).map(|l| a[i][l]).sum();
            let cj: f64 = (0..n).map(|k| a[k][j]).sum();
            out[i][j] =
                a[i][j] - ri / (nf - 2.0) - cj / (nf - 2.0) + total / ((nf - 1.0) * (nf - 2.0));
        }
    }
    out
}

pub fn dcov_biased(x: &Mat, y: &Mat) -> f64 {
    let a = double_center(&distances(x));
    let b = double_center(&distances(y));
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a[i][j] * b[i][j];
        }
    }
    s / (n * n) as f64
}

pub fn dcor_biased(x: &Mat, y: &Mat) -> f64 {
    let xy = dcov_biased(x, y);
    let xx = dcov_biased(x, x);
    let yy = dcov_biased(y, y);
    xy / (xx * yy).sqrt()
}

pub fn hilbert(a: &Mat, b: &Mat) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i][j] * b[i][j];
            }
        }
    }
    s / (n * (n - 3)) as f64
}

pub fn dcov_unbiased(x: &Mat, y: &Mat) -> f64 {
    hilbert(&u_center(&distances(x)), &u_center(&distances(y)))
}

pub fn dcor_unbiased(x: &Mat, y: &Mat) -> f64 {
    let a = u_center(&distances(x));
    let b = u_center(&distances(y));
    hilbert(&a, &b) / (hilbert(&a, &a) * hilbert(&b, &b)).sqrt()
}

/// Column-wise concatenation of samples.
pub fn concat(parts: &[&Mat]) -> Mat {
    let n = parts[0].len();
    (0..n)
        .map(|i| parts.iter().flat_map(|p| p[i].iter().copied()).collect())
        .collect()
}

pub fn project_out(a: &Mat, c: &Mat) -> Mat {
    let coef = hilbert(a, c) / hilbert(c, c);
    a.iter()
        .zip(c)
        .map(|(ra, rc)| ra.iter().zip(rc).map(|(x, z)| x - coef * z).collect())
        .collect()
}

pub fn pdcor(x: &Mat, y: &Mat, z: &[&Mat]) -> f64 {
    let mut a = u_center(&distances(x));
    let mut b = u_center(&distances(y));
    if !z.is_empty() {
        let c = u_center(&distances(&concat(z)));
        a = project_out(&a, &c);
        b = project_out(&b, &c);
    }
    hilbert(&a, &b) / (hilbert(&a, &a) * hilbert(&b, &b)).sqrt()
}

pub fn to_array(m: &Mat) -> Array2<f64> {
    let (r, c) = (m.len(), m[0].len());
    Array2::from_shape_fn((r, c), |(i, j)| m[i][j])
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Mat) -> f64 {
    let mut m: f64 = 0.0;
    for ((i, j), v) in a.indexed_iter() {
        m = m.max((v - b[i][j]).abs());
    }
    m
}

pub fn max_abs(b: &Mat) -> f64 {
    b.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    Array2::from_shape_fn((n, d), |_| normal.sample(rng))
}

/// Chain X -> Z -> Y with additive Gaussian noise of standard deviation `sigma`.
pub fn chain(seed: u64, n: usize, sigma: f64) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let x = gaussian(&mut rng, n, 1);
    let z = x.mapv(|v| v + noise.sample(&mut rng));
    let y = z.mapv(|v| v + noise.sample(&mut rng));
    (x, z, y)
}

/// Random orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
pub fn orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    let g = gaussian(rng, d, d);
    let mut q = Array2::<f64>::zeros((d, d));
    for k in 0..d {
        let mut v = g.column(k).to_owned();
        for j in 0..k {
            let qj = q.column(j).to_owned();
            let p = v.dot(&qj);
            v -= &(p * &qj);
        }
        let norm = v.dot(&v).sqrt();
        q.column_mut(k).assign(&(v / norm));
    }
    q
}

/// Dominant eigenvector of a symmetric matrix via a dense eigensolver,
/// sign-fixed to be nonnegative and scaled to unit norm.
pub fn dense_dominant(k: &Array2<f64>) -> (Vec<f64>, f64) {
    let n = k.nrows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| k[[i, j]]);
    let eig = m.symmetric_eigen();
    let (idx, lambda) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let v = eig.eigenvectors.column(idx);
    let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
    let norm = v.norm();
    (v.iter().map(|x| sign * x / norm).collect(), lambda)
}

pub fn fixture_dir(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}
