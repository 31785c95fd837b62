//! Distance matrices, double- and U-centering, and the sample distance
//! covariance / correlation estimators.
//!
//! All estimators work off a [`DistanceMatrix`], which keeps both the
//! Euclidean distances and their squares. The squared form is what the
//! network builder accumulates when it forms joint distances over several
//! nodes, so callers that evaluate many pairs should build each node's
//! matrix once and reuse it.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Relative threshold under which a normalising denominator counts as zero.
pub const ZERO_TOL: f64 = 1e-14;

/// Tolerance for clamping estimator round-off (negative biased dcov, |dcor| > 1).
pub const CLAMP_TOL: f64 = 1e-12;

/// Pairwise Euclidean distances between the rows of a sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    dist: Array2<f64>,
    sq: Array2<f64>,
}

impl DistanceMatrix {
    /// Builds the distance matrix of the rows of `x` (n samples by d features).
    pub fn from_samples(x: ArrayView2<'_, f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::SampleSize { needed: 2, got: n });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let mut sq = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            let ri = x.row(i);
            for j in (i + 1)..n {
                let s: f64 = ri
                    .iter()
                    .zip(x.row(j).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                sq[[i, j]] = s;
                sq[[j, i]] = s;
            }
        }
        Ok(Self::from_squared(sq))
    }

    /// Takes ownership of a matrix of squared distances. Tiny negative entries
    /// left over from incremental accumulation are clamped to zero.
    pub fn from_squared(mut sq: Array2<f64>) -> Self {
        sq.mapv_inplace(|v| v.max(0.0));
        let dist = sq.mapv(f64::sqrt);
        Self { dist, sq }
    }

    pub fn n(&self) -> usize {
        self.dist.nrows()
    }

    pub fn distances(&self) -> &Array2<f64> {
        &self.dist
    }

    pub fn squared(&self) -> &Array2<f64> {
        &self.sq
    }

    /// Mean off-diagonal distance, used as the natural scale of the sample.
    pub fn scale(&self) -> f64 {
        mean_off_diagonal(&self.dist)
    }

    /// Re-indexes rows and columns: entry (i, j) of the result is entry
    /// (perm[i], perm[j]) of `self`. Equivalent to recomputing the distances
    /// from rows permuted by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        assert_eq!(perm.len(), n, "permutation length must match sample count");
        let dist = Array2::from_shape_fn((n, n), |(i, j)| self.dist[[perm[i], perm[j]]]);
        let sq = Array2::from_shape_fn((n, n), |(i, j)| self.sq[[perm[i], perm[j]]]);
        Self { dist, sq }
    }
}

pub(crate) fn mean_off_diagonal(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    if n < 2 {
        return 0.0;
    }
    let rows: Vec<f64> = m.rows().into_iter().map(|r| r.sum()).collect();
    pairwise_sum(&rows) / (n * (n - 1)) as f64
}

/// Which centering produced a [`CenteredMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centering {
    /// Biased double-centering (row, column and grand means over n).
    Double,
    /// Unbiased U-centering (denominators n-2 and (n-1)(n-2), zero diagonal).
    U,
}

impl Centering {
    pub fn name(self) -> &'static str {
        match self {
            Centering::Double => "double-centered",
            Centering::U => "u-centered",
        }
    }
}

/// A centered distance matrix tagged with its centering and the scale (mean
/// distance) of the distances it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredMatrix {
    kind: Centering,
    data: Array2<f64>,
    scale: f64,
}

impl CenteredMatrix {
    pub(crate) fn new(kind: Centering, data: Array2<f64>, scale: f64) -> Self {
        Self { kind, data, scale }
    }

    pub fn kind(&self) -> Centering {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// All-zero U-centered matrix of size n, the centering of a constant sample.
    pub fn zeros_u(n: usize) -> Self {
        Self::new(Centering::U, Array2::zeros((n, n)), 0.0)
    }

    /// Same matrix with rows and columns re-indexed by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        let data = Array2::from_shape_fn((n, n), |(i, j)| self.data[[perm[i], perm[j]]]);
        Self::new(self.kind, data, self.scale)
    }
}

/// Double-centers a distance matrix:
/// `A_ij = a_ij - ā_i. - ā_.j + ā_..`, with all means taken over n.
///
/// The diagonal keeps its centered value `-2 ā_i. + ā_..` so that every row
/// sums to zero and the V-statistic built on it is nonnegative.
pub fn double_center(dm: &DistanceMatrix) -> CenteredMatrix {
    let a = dm.distances();
    let n = a.nrows();
    let nf = n as f64;
    let row_sums: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    let total = pairwise_sum(&row_sums);
    let row_means: Vec<f64> = row_sums.iter().map(|s| s / nf).collect();
    let grand = total / (nf * nf);
    let data = Array2::from_shape_fn((n, n), |(i, j)| {
        a[[i, j]] - (row_means[i] + row_means[j]) + grand
    });
    CenteredMatrix::new(Centering::Double, data, dm.scale())
}

/// U-centers a distance matrix (requires n >= 4).
pub fn u_center(dm: &DistanceMatrix) -> Result<CenteredMatrix> {
    let n = dm.n();
    if n < 4 {
        return Err(Error::SampleSize { needed: 4, got: n });
    }
    let mut out = Array2::zeros((n, n));
    u_center_into(dm.distances().view(), &mut out);
    Ok(CenteredMatrix::new(Centering::U, out, dm.scale()))
}

/// U-centers `a` into `out` without allocating. `n >= 4` is the caller's job.
pub(crate) fn u_center_into(a: ArrayView2<'_, f64>, out: &mut Array2<f64>) {
    let n = a.nrows();
    let nf = n as f64;
    let row_sums: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    let total = pairwise_sum(&row_sums);
    let row_terms: Vec<f64> = row_sums.iter().map(|s| s / (nf - 2.0)).collect();
    let grand = total / ((nf - 1.0) * (nf - 2.0));
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = if i == j {
                0.0
            } else {
                a[[i, j]] - (row_terms[i] + row_terms[j]) + grand
            };
        }
    }
}

/// Sum over i != j of `a_ij * b_ij`, accumulated row by row and then
/// pairwise across rows so the result does not depend on scheduling.
pub(crate) fn off_diagonal_dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let rows: Vec<f64> = (0..n)
        .map(|i| {
            let ra = a.row(i);
            let rb = b.row(i);
            let mut s = 0.0;
            for j in 0..n {
                if j != i {
                    s += ra[j] * rb[j];
                }
            }
            s
        })
        .collect();
    pairwise_sum(&rows)
}

/// Sum over all (i, j) of `a_ij * b_ij`, in the same fixed order as
/// [`off_diagonal_dot`].
fn full_dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let rows: Vec<f64> = a
        .rows()
        .into_iter()
        .zip(b.rows())
        .map(|(ra, rb)| ra.iter().zip(rb.iter()).map(|(x, y)| x * y).sum())
        .collect();
    pairwise_sum(&rows)
}

/// Recursive pairwise summation with a fixed split, so the rounding pattern
/// depends only on the slice length.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

fn check_rows(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::SampleMismatch {
            expected: x.nrows(),
            got: y.nrows(),
        });
    }
    Ok(())
}

/// Biased (V-statistic) distance covariance of two double-centered matrices.
pub fn dcov_biased_centered(a: &CenteredMatrix, b: &CenteredMatrix) -> Result<f64> {
    for m in [a, b] {
        if m.kind() != Centering::Double {
            return Err(Error::KindMismatch {
                expected: Centering::Double.name(),
                got: m.kind().name(),
            });
        }
    }
    if a.n() != b.n() {
        return Err(Error::SampleMismatch {
            expected: a.n(),
            got: b.n(),
        });
    }
    let n2 = (a.n() * a.n()) as f64;
    let v = full_dot(a.data(), b.data()) / n2;
    if v >= 0.0 {
        return Ok(v);
    }
    // Cauchy-Schwarz bound on |v|.
    let bound = (full_dot(a.data(), a.data()) * full_dot(b.data(), b.data())).sqrt() / n2;
    if v >= -CLAMP_TOL * bound {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!(
            "biased distance covariance {v:e} is negative beyond round-off"
        )))
    }
}

/// Biased sample distance covariance `V²_n(x, y)`.
pub fn dcov_biased(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    check_rows(x, y)?;
    let a = double_center(&DistanceMatrix::from_samples(x)?);
    let b = double_center(&DistanceMatrix::from_samples(y)?);
    dcov_biased_centered(&a, &b)
}

/// Unbiased distance covariance `Ω_n(x, y)` of two U-centered matrices.
/// May be negative for x != y.
pub fn dcov_unbiased_centered(a: &CenteredMatrix, b: &CenteredMatrix) -> Result<f64> {
    crate::partial::hilbert_inner(a, b)
}

/// Unbiased sample distance covariance `Ω_n(x, y)` (n >= 4).
pub fn dcov_unbiased(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    check_rows(x, y)?;
    let a = u_center(&DistanceMatrix::from_samples(x)?)?;
    let b = u_center(&DistanceMatrix::from_samples(y)?)?;
    dcov_unbiased_centered(&a, &b)
}

/// Which distance covariance estimator to normalise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Biased,
    Unbiased,
}

/// Distance correlation `dcov(x,y) / sqrt(dcov(x,x) dcov(y,y))`, or 0 when the
/// denominator vanishes. The biased version lies in [0, 1]; the unbiased one
/// in [-1, 1].
pub fn dcor(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, estimator: Estimator) -> Result<f64> {
    check_rows(x, y)?;
    let dx = DistanceMatrix::from_samples(x)?;
    let dy = DistanceMatrix::from_samples(y)?;
    dcor_distances(&dx, &dy, estimator)
}

/// [`dcor`] on precomputed distance matrices.
pub fn dcor_distances(
    dx: &DistanceMatrix,
    dy: &DistanceMatrix,
    estimator: Estimator,
) -> Result<f64> {
    let (a, b) = match estimator {
        Estimator::Biased => (double_center(dx), double_center(dy)),
        Estimator::Unbiased => (u_center(dx)?, u_center(dy)?),
    };
    dcor_centered(&a, &b)
}

/// [`dcor`] on two centered matrices of the same kind.
pub fn dcor_centered(a: &CenteredMatrix, b: &CenteredMatrix) -> Result<f64> {
    let cov = |p: &CenteredMatrix, q: &CenteredMatrix| match p.kind() {
        Centering::Double => dcov_biased_centered(p, q),
        Centering::U => dcov_unbiased_centered(p, q),
    };
    let vxy = cov(a, b)?;
    let vxx = cov(a, a)?;
    let vyy = cov(b, b)?;
    let product = vxx * vyy;
    if product.is_nan() || product <= 0.0 {
        return Ok(0.0);
    }
    let denom = product.sqrt();
    if denom <= ZERO_TOL * a.scale() * b.scale() {
        return Ok(0.0);
    }
    let r = vxy / denom;
    Ok(match a.kind() {
        Centering::Double => clamp_unit(r, 0.0),
        Centering::U => clamp_unit(r, -1.0),
    })
}

/// Clamps `r` into `[lo, 1]` when it strays by no more than [`CLAMP_TOL`].
pub(crate) fn clamp_unit(r: f64, lo: f64) -> f64 {
    if r > 1.0 && r <= 1.0 + CLAMP_TOL {
        1.0
    } else if r < lo && r >= lo - CLAMP_TOL {
        lo
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn three_four_five() {
        let x = array![[0.0, 0.0], [3.0, 4.0]];
        let dm = DistanceMatrix::from_samples(x.view()).unwrap();
        assert_eq!(dm.distances(), &array![[0.0, 5.0], [5.0, 0.0]]);
        assert_eq!(dm.squared(), &array![[0.0, 25.0], [25.0, 0.0]]);
    }

    #[test]
    fn identical_rows_give_zero_matrix() {
        let x = array![[1.5, -2.0], [1.5, -2.0], [1.5, -2.0]];
        let dm = DistanceMatrix::from_samples(x.view()).unwrap();
        assert!(dm.distances().iter().all(|&v| v == 0.0));
        assert_eq!(dm.scale(), 0.0);
    }

    #[test]
    fn rejects_non_finite_and_tiny_samples() {
        let x = array![[1.0], [f64::NAN], [0.0]];
        assert!(matches!(
            DistanceMatrix::from_samples(x.view()),
            Err(Error::NonFinite)
        ));
        let one = array![[1.0]];
        assert!(matches!(
            DistanceMatrix::from_samples(one.view()),
            Err(Error::SampleSize { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn zero_distance_centers_to_zero() {
        let dm = DistanceMatrix::from_squared(Array2::zeros((5, 5)));
        assert!(double_center(&dm).data().iter().all(|&v| v == 0.0));
        assert!(u_center(&dm).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_point_double_centering() {
        // a = [[0,c],[c,0]]: row means c/2, grand mean c/2.
        // off-diagonal: c - c/2 - c/2 + c/2 = c/2; diagonal: -c/2.
        let c = 3.0;
        let dm = DistanceMatrix::from_squared(array![[0.0, c * c], [c * c, 0.0]]);
        let a = double_center(&dm);
        assert_eq!(a.data(), &array![[-c / 2.0, c / 2.0], [c / 2.0, -c / 2.0]]);
    }

    #[test]
    fn two_point_self_covariance() {
        // With x = y and two points at distance c, V² = (1/4) * 4 * (c/2)² = c²/4.
        let x = array![[0.0], [2.0]];
        let v = dcov_biased(x.view(), x.view()).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn u_center_needs_four_samples() {
        let dm = DistanceMatrix::from_samples(array![[0.0], [1.0], [3.0]].view()).unwrap();
        assert!(matches!(
            u_center(&dm),
            Err(Error::SampleSize { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn constant_y_has_zero_covariance() {
        let x = array![[0.0], [1.0], [3.0], [4.5], [7.0]];
        let y = array![[2.0], [2.0], [2.0], [2.0], [2.0]];
        assert_eq!(dcov_biased(x.view(), y.view()).unwrap(), 0.0);
        assert_eq!(dcov_unbiased(x.view(), y.view()).unwrap(), 0.0);
        assert_eq!(dcor(y.view(), x.view(), Estimator::Biased).unwrap(), 0.0);
        assert_eq!(dcor(y.view(), x.view(), Estimator::Unbiased).unwrap(), 0.0);
    }

    #[test]
    fn row_count_mismatch() {
        let x = array![[0.0], [1.0], [3.0], [4.0]];
        let y = array![[0.0], [1.0], [3.0]];
        assert!(matches!(
            dcov_biased(x.view(), y.view()),
            Err(Error::SampleMismatch {
                expected: 4,
                got: 3
            })
        ));
    }

    #[test]
    fn pairwise_sum_matches_naive_for_short_input() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&xs), xs.iter().sum::<f64>());
        let long: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&long), 499_500.0);
    }

    #[test]
    fn clamp_only_touches_round_off() {
        assert_eq!(clamp_unit(1.0 + 1e-13, -1.0), 1.0);
        assert_eq!(clamp_unit(1.1, -1.0), 1.1);
        assert_eq!(clamp_unit(-1e-13, 0.0), 0.0);
    }
}
