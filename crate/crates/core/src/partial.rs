//! Partial distance covariance and correlation.
//!
//! U-centered distance matrices of n >= 4 samples form a Hilbert space with
//! inner product `<A, B> = 1/(n(n-3)) * sum_{i != j} A_ij B_ij`. Conditioning
//! on Z removes the component of each U-centered matrix along the U-centered
//! distance matrix of Z; the partial statistics are the inner product and
//! cosine of what is left.

use ndarray::{Array2, ArrayView2, Zip};

use crate::distance::{
    clamp_unit, off_diagonal_dot, u_center, CenteredMatrix, Centering, DistanceMatrix, ZERO_TOL,
};
use crate::error::{Error, Result};

/// A conditioning matrix whose norm is below this fraction of its distance
/// scale is treated as carrying no information, and the projection is skipped.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// The variables conditioned on, reduced to their joint distance matrix.
///
/// The joint distance of several nodes is the Euclidean distance between the
/// concatenated feature vectors, i.e. the square root of the sum of the
/// members' squared-distance matrices.
#[derive(Debug, Clone, Default)]
pub struct ConditioningSet {
    nodes: Vec<usize>,
    joint: Option<DistanceMatrix>,
}

impl ConditioningSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Joint set over precomputed member distance matrices. `nodes` labels the
    /// members and is kept sorted.
    pub fn from_distances(nodes: Vec<usize>, members: &[&DistanceMatrix]) -> Result<Self> {
        let Some(first) = members.first() else {
            return Ok(Self { nodes, joint: None });
        };
        let n = first.n();
        let mut sq = Array2::<f64>::zeros((n, n));
        for m in members {
            if m.n() != n {
                return Err(Error::SampleMismatch {
                    expected: n,
                    got: m.n(),
                });
            }
            sq += m.squared();
        }
        let mut nodes = nodes;
        nodes.sort_unstable();
        Ok(Self {
            nodes,
            joint: Some(DistanceMatrix::from_squared(sq)),
        })
    }

    /// Joint set over raw member sample matrices (one per conditioning variable).
    pub fn from_samples(members: &[ArrayView2<'_, f64>]) -> Result<Self> {
        let dms = members
            .iter()
            .map(|m| DistanceMatrix::from_samples(*m))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&DistanceMatrix> = dms.iter().collect();
        Self::from_distances((0..members.len()).collect(), &refs)
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.joint.is_none()
    }

    pub fn joint(&self) -> Option<&DistanceMatrix> {
        self.joint.as_ref()
    }

    /// U-centered joint distance matrix, or `None` for the empty set.
    pub fn centered(&self) -> Result<Option<CenteredMatrix>> {
        self.joint.as_ref().map(u_center).transpose()
    }
}

fn check_u_pair(a: &CenteredMatrix, b: &CenteredMatrix) -> Result<()> {
    for m in [a, b] {
        if m.kind() != Centering::U {
            return Err(Error::KindMismatch {
                expected: Centering::U.name(),
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
    if a.n() < 4 {
        return Err(Error::SampleSize {
            needed: 4,
            got: a.n(),
        });
    }
    Ok(())
}

/// Inner product of two U-centered matrices, `1/(n(n-3)) * sum_{i != j} a_ij b_ij`.
pub fn hilbert_inner(a: &CenteredMatrix, b: &CenteredMatrix) -> Result<f64> {
    check_u_pair(a, b)?;
    Ok(inner_unchecked(a.data(), b.data()))
}

pub(crate) fn inner_unchecked(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.nrows() as f64;
    off_diagonal_dot(a, b) / (n * (n - 3.0))
}

/// Inner products between the two projected variables and the conditioning matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gram {
    /// `<Ã, C̃>`
    pub ac: f64,
    /// `<B̃, C̃>`
    pub bc: f64,
    /// `<C̃, C̃>`
    pub cc: f64,
}

/// Both complements of a projection onto a conditioning matrix.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub p_x_perp: CenteredMatrix,
    pub p_y_perp: CenteredMatrix,
    pub gram: Gram,
    /// True when the conditioning matrix was numerically zero and nothing was projected out.
    pub degenerate: bool,
}

fn is_degenerate(c: &CenteredMatrix, cc: f64) -> bool {
    cc.is_nan() || cc <= 0.0 || cc.sqrt() <= DEGENERATE_TOL * c.scale()
}

fn subtract_scaled(a: &CenteredMatrix, coef: f64, c: &CenteredMatrix) -> CenteredMatrix {
    let mut out = a.data().clone();
    Zip::from(&mut out)
        .and(c.data())
        .for_each(|o, &cv| *o -= coef * cv);
    CenteredMatrix::new(Centering::U, out, a.scale())
}

/// Complement of the projection of `a` onto `c`: `a - (<a,c>/<c,c>) c`.
/// When `c` is numerically zero the projection term is dropped and `a` is
/// returned unchanged.
pub fn project_complement(a: &CenteredMatrix, c: &CenteredMatrix) -> Result<CenteredMatrix> {
    check_u_pair(a, c)?;
    let cc = inner_unchecked(c.data(), c.data());
    if is_degenerate(c, cc) {
        return Ok(a.clone());
    }
    let ac = inner_unchecked(a.data(), c.data());
    Ok(subtract_scaled(a, ac / cc, c))
}

/// Projects both `a` and `b` off `c`, reporting the Gram entries used.
pub fn project_pair(
    a: &CenteredMatrix,
    b: &CenteredMatrix,
    c: &CenteredMatrix,
) -> Result<ProjectionResult> {
    check_u_pair(a, b)?;
    check_u_pair(a, c)?;
    let gram = Gram {
        ac: inner_unchecked(a.data(), c.data()),
        bc: inner_unchecked(b.data(), c.data()),
        cc: inner_unchecked(c.data(), c.data()),
    };
    if is_degenerate(c, gram.cc) {
        return Ok(ProjectionResult {
            p_x_perp: a.clone(),
            p_y_perp: b.clone(),
            gram,
            degenerate: true,
        });
    }
    Ok(ProjectionResult {
        p_x_perp: subtract_scaled(a, gram.ac / gram.cc, c),
        p_y_perp: subtract_scaled(b, gram.bc / gram.cc, c),
        gram,
        degenerate: false,
    })
}

fn complements(
    a: &CenteredMatrix,
    b: &CenteredMatrix,
    c: Option<&CenteredMatrix>,
) -> Result<(CenteredMatrix, CenteredMatrix)> {
    match c {
        None => {
            check_u_pair(a, b)?;
            Ok((a.clone(), b.clone()))
        }
        Some(c) => {
            let p = project_pair(a, b, c)?;
            Ok((p.p_x_perp, p.p_y_perp))
        }
    }
}

/// Partial distance covariance from U-centered matrices; `c = None` means
/// no conditioning and gives exactly the unbiased distance covariance.
pub fn pdcov_centered(
    a: &CenteredMatrix,
    b: &CenteredMatrix,
    c: Option<&CenteredMatrix>,
) -> Result<f64> {
    match c {
        None => hilbert_inner(a, b),
        Some(_) => {
            let (px, py) = complements(a, b, c)?;
            hilbert_inner(&px, &py)
        }
    }
}

/// Partial distance correlation from U-centered matrices.
pub fn pdcor_centered(
    a: &CenteredMatrix,
    b: &CenteredMatrix,
    c: Option<&CenteredMatrix>,
) -> Result<f64> {
    let (px, py) = complements(a, b, c)?;
    Ok(cosine(&px, &py))
}

/// `<p, q> / (|p| |q|)` with the zero branch and clamping to [-1, 1].
pub(crate) fn cosine(p: &CenteredMatrix, q: &CenteredMatrix) -> f64 {
    let pq = inner_unchecked(p.data(), q.data());
    let pp = inner_unchecked(p.data(), p.data());
    let qq = inner_unchecked(q.data(), q.data());
    ratio(pq, pp, qq, p.scale() * q.scale())
}

/// Normalises an inner product by the two norms, returning 0 when their
/// product is at or below `ZERO_TOL * scale`.
pub(crate) fn ratio(pq: f64, pp: f64, qq: f64, scale: f64) -> f64 {
    if !(pp > 0.0 && qq > 0.0) {
        return 0.0;
    }
    let norms = pp.sqrt() * qq.sqrt();
    if norms <= ZERO_TOL * scale {
        return 0.0;
    }
    clamp_unit(pq / norms, -1.0)
}

fn centered_inputs(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    z: &ConditioningSet,
) -> Result<(CenteredMatrix, CenteredMatrix, Option<CenteredMatrix>)> {
    if x.nrows() != y.nrows() {
        return Err(Error::SampleMismatch {
            expected: x.nrows(),
            got: y.nrows(),
        });
    }
    if x.nrows() < 4 {
        return Err(Error::SampleSize {
            needed: 4,
            got: x.nrows(),
        });
    }
    if let Some(j) = z.joint() {
        if j.n() != x.nrows() {
            return Err(Error::SampleMismatch {
                expected: x.nrows(),
                got: j.n(),
            });
        }
    }
    let a = u_center(&DistanceMatrix::from_samples(x)?)?;
    let b = u_center(&DistanceMatrix::from_samples(y)?)?;
    Ok((a, b, z.centered()?))
}

/// Sample partial distance covariance of x and y given z.
pub fn pdcov(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, z: &ConditioningSet) -> Result<f64> {
    let (a, b, c) = centered_inputs(x, y, z)?;
    pdcov_centered(&a, &b, c.as_ref())
}

/// Sample partial distance correlation of x and y given z, in [-1, 1].
pub fn pdcor(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, z: &ConditioningSet) -> Result<f64> {
    let (a, b, c) = centered_inputs(x, y, z)?;
    pdcor_centered(&a, &b, c.as_ref())
}
