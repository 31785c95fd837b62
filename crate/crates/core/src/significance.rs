//! Permutation test for (partial) distance correlation.
//!
//! The rows of X are shuffled while Y and Z stay fixed. Shuffling is done by
//! re-indexing X's distance matrix, so no distances are recomputed. The
//! p-value uses add-one smoothing and is never zero.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distance::{u_center, DistanceMatrix};
use crate::error::{Error, Result};
use crate::partial::{cosine, project_complement, ConditioningSet};

pub const DEFAULT_PERMUTATIONS: usize = 999;

/// Outcome of one permutation test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_permutations: usize,
    pub seed: u64,
}

/// Random stream for the test of edge `edge_index` under `master_seed`.
/// Streams are independent of the order in which edges are tested.
pub fn edge_rng(master_seed: u64, edge_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(edge_index);
    rng
}

/// `(1 + #{null >= observed}) / (1 + len)`. Null values within 1e-12 of the
/// observed statistic count as ties.
pub fn add_one_p_value(observed: f64, null: &[f64]) -> f64 {
    let tol = 1e-12 * observed.abs().max(1.0);
    let exceed = null.iter().filter(|&&s| s >= observed - tol).count();
    (1 + exceed) as f64 / (1 + null.len()) as f64
}

/// Observed pdcor and its permutation null distribution, on precomputed
/// distance matrices.
pub fn null_distribution(
    x: &DistanceMatrix,
    y: &DistanceMatrix,
    z: Option<&DistanceMatrix>,
    n_perm: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<f64>)> {
    let n = x.n();
    for m in std::iter::once(y).chain(z) {
        if m.n() != n {
            return Err(Error::SampleMismatch {
                expected: n,
                got: m.n(),
            });
        }
    }
    let c = z.map(u_center).transpose()?;
    let complement = |a| match &c {
        Some(c) => project_complement(&a, c),
        None => Ok(a),
    };
    let py = complement(u_center(y)?)?;
    let observed = cosine(&complement(u_center(x)?)?, &py);

    let mut perm: Vec<usize> = (0..n).collect();
    let mut null = Vec::with_capacity(n_perm);
    for _ in 0..n_perm {
        perm.shuffle(rng);
        let px = complement(u_center(&x.permuted(&perm))?)?;
        null.push(cosine(&px, &py));
    }
    Ok((observed, null))
}

/// Permutation test on precomputed distance matrices.
pub fn permutation_test_distances(
    x: &DistanceMatrix,
    y: &DistanceMatrix,
    z: Option<&DistanceMatrix>,
    n_perm: usize,
    seed: u64,
) -> Result<TestResult> {
    permutation_test_with_rng(x, y, z, n_perm, &mut ChaCha8Rng::seed_from_u64(seed), seed)
}

pub(crate) fn permutation_test_with_rng(
    x: &DistanceMatrix,
    y: &DistanceMatrix,
    z: Option<&DistanceMatrix>,
    n_perm: usize,
    rng: &mut ChaCha8Rng,
    seed: u64,
) -> Result<TestResult> {
    if n_perm == 0 {
        return Err(Error::Config(
            "number of permutations must be positive".into(),
        ));
    }
    let (statistic, null) = null_distribution(x, y, z, n_perm, rng)?;
    Ok(TestResult {
        statistic,
        p_value: add_one_p_value(statistic, &null),
        n_permutations: n_perm,
        seed,
    })
}

/// Tests `pdcor(x, y | z) > 0` by permuting the rows of `x`.
pub fn permutation_test(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    z: &ConditioningSet,
    n_perm: usize,
    seed: u64,
) -> Result<TestResult> {
    if x.nrows() != y.nrows() {
        return Err(Error::SampleMismatch {
            expected: x.nrows(),
            got: y.nrows(),
        });
    }
    let dx = DistanceMatrix::from_samples(x)?;
    let dy = DistanceMatrix::from_samples(y)?;
    permutation_test_distances(&dx, &dy, z.joint(), n_perm, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn random(seed: u64, n: usize, d: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identical_variables_get_minimal_p_value() {
        let x = random(1, 20, 2);
        let r = permutation_test(x.view(), x.view(), &ConditioningSet::empty(), 199, 11).unwrap();
        assert!((r.statistic - 1.0).abs() < 1e-12);
        assert_eq!(r.p_value, 1.0 / 200.0);
        assert_eq!(r.n_permutations, 199);
    }

    #[test]
    fn same_seed_same_result() {
        let x = random(2, 25, 1);
        let y = random(3, 25, 2);
        let z = ConditioningSet::from_samples(&[random(4, 25, 1).view()]).unwrap();
        let a = permutation_test(x.view(), y.view(), &z, 99, 5).unwrap();
        let b = permutation_test(x.view(), y.view(), &z, 99, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn p_value_is_never_zero() {
        assert_eq!(add_one_p_value(10.0, &[0.0; 9]), 0.1);
        assert_eq!(add_one_p_value(-10.0, &[0.0; 9]), 1.0);
        assert_eq!(add_one_p_value(0.0, &[]), 1.0);
    }

    #[test]
    fn zero_permutations_rejected() {
        let x = random(6, 8, 1);
        let dx = DistanceMatrix::from_samples(x.view()).unwrap();
        assert!(permutation_test_distances(&dx, &dx, None, 0, 1).is_err());
    }

    #[test]
    fn edge_streams_differ() {
        let a: u64 = edge_rng(7, 0).random();
        let b: u64 = edge_rng(7, 1).random();
        let a2: u64 = edge_rng(7, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }
}
