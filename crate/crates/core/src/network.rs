//! Dependence network construction.
//!
//! Each pair of nodes gets the minimum partial distance correlation over all
//! conditioning subsets of the remaining nodes (up to a size cap), the empty
//! set included. Per-node distance matrices are computed once. For each
//! subset the joint squared-distance matrix of the conditioning nodes is
//! kept in an accumulator that is updated by adding or subtracting single
//! node matrices as the Gray-code walk moves, so evaluating a subset costs
//! O(n²) regardless of feature dimensions.
//!
//! The Gray index range of each pair is split into blocks of
//! [`BLOCK_LEN`] indices. Every block rebuilds its accumulator from scratch,
//! which bounds accumulated round-off, and blocks are evaluated in parallel.
//! The per-pair minimum is reduced with a canonical tie rule, so the result
//! does not depend on the number of worker threads.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array2, ArrayView2, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distance::{
    mean_off_diagonal, pairwise_sum, u_center, u_center_into, CenteredMatrix, Centering,
    DistanceMatrix,
};
use crate::error::{Error, Result};
use crate::panel::NodeMatrix;
use crate::partial::{inner_unchecked, pdcor_centered, ratio, DEGENERATE_TOL};
use crate::significance::{edge_rng, permutation_test_with_rng, DEFAULT_PERMUTATIONS};
use crate::subsets::{members, subset_count, GraySubsets, SubsetCap, MAX_CANDIDATES};

/// Gray indices per work block; also the accumulator refresh interval.
pub const BLOCK_LEN: u64 = 4096;

/// Default cap for graphs too large for exhaustive search.
pub const DEFAULT_LARGE_CAP: usize = 3;

/// Largest node count searched exhaustively by default.
pub const EXHAUSTIVE_NODE_LIMIT: usize = 12;

/// Below this fraction of the unprojected squared norm, the closed-form
/// Gram expressions lose too many digits and the projection is done explicitly.
const CANCELLATION_GUARD: f64 = 1e-6;

/// Per-node distance matrices shared by every pair evaluation.
#[derive(Debug, Clone)]
pub struct Dataset {
    names: Vec<String>,
    dists: Vec<DistanceMatrix>,
    centered: Vec<CenteredMatrix>,
}

impl Dataset {
    pub fn from_distances(names: Vec<String>, dists: Vec<DistanceMatrix>) -> Result<Self> {
        if names.len() != dists.len() {
            return Err(Error::Config(format!(
                "{} node names for {} distance matrices",
                names.len(),
                dists.len()
            )));
        }
        if names.len() < 2 {
            return Err(Error::Config("a network needs at least two nodes".into()));
        }
        let n = dists[0].n();
        if let Some(bad) = dists.iter().find(|d| d.n() != n) {
            return Err(Error::SampleMismatch {
                expected: n,
                got: bad.n(),
            });
        }
        let centered = dists.iter().map(u_center).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            names,
            dists,
            centered,
        })
    }

    /// One sample matrix (n rows) per node.
    pub fn from_samples(names: Vec<String>, samples: &[ArrayView2<'_, f64>]) -> Result<Self> {
        let dists = samples
            .par_iter()
            .map(|x| DistanceMatrix::from_samples(*x))
            .collect::<Result<Vec<_>>>()?;
        Self::from_distances(names, dists)
    }

    pub fn from_node_matrices(nodes: &[NodeMatrix]) -> Result<Self> {
        let names = nodes.iter().map(|m| m.node.clone()).collect();
        let views: Vec<_> = nodes.iter().map(|m| m.data.view()).collect();
        Self::from_samples(names, &views)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn n_samples(&self) -> usize {
        self.dists[0].n()
    }

    pub fn distance(&self, node: usize) -> &DistanceMatrix {
        &self.dists[node]
    }

    pub fn centered(&self, node: usize) -> &CenteredMatrix {
        &self.centered[node]
    }
}

/// How ties between equal minima are resolved. Both rules fall back to the
/// lexicographically smallest node list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    #[default]
    PreferSmaller,
    PreferLarger,
}

/// Which conditioning set an edge's permutation test uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestConditioning {
    #[default]
    Argmin,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceConfig {
    pub permutations: usize,
    pub alpha: f64,
    /// Prune edges whose p-value exceeds `alpha`.
    pub prune: bool,
    pub conditioning: TestConditioning,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        Self {
            permutations: DEFAULT_PERMUTATIONS,
            alpha: 0.05,
            prune: false,
            conditioning: TestConditioning::Argmin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Explicit cap on conditioning-set size; `None` picks a default from the node count.
    pub max_cond_size: Option<usize>,
    /// Search every subset regardless of `max_cond_size`.
    pub exhaustive: bool,
    /// Edges with weight at or below this are pruned.
    pub threshold: f64,
    pub significance: Option<SignificanceConfig>,
    pub seed: u64,
    pub tie_rule: TieRule,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            max_cond_size: None,
            exhaustive: false,
            threshold: 0.0,
            significance: None,
            seed: 0,
            tie_rule: TieRule::PreferSmaller,
        }
    }
}

impl BuildConfig {
    pub fn effective_cap(&self, n_nodes: usize) -> SubsetCap {
        if self.exhaustive {
            SubsetCap::Unlimited
        } else if let Some(k) = self.max_cond_size {
            SubsetCap::AtMost(k)
        } else if n_nodes <= EXHAUSTIVE_NODE_LIMIT {
            SubsetCap::Unlimited
        } else {
            SubsetCap::AtMost(DEFAULT_LARGE_CAP)
        }
    }

    /// Stable hash of the configuration and the cap it resolves to.
    pub fn fingerprint(&self, n_nodes: usize) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            config: &'a BuildConfig,
            effective_cap: SubsetCap,
        }
        let doc = Doc {
            config: self,
            effective_cap: self.effective_cap(n_nodes),
        };
        let bytes = serde_json::to_vec(&doc).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..16])
    }
}

/// Result for one unordered node pair (`source < target`).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub source: usize,
    pub target: usize,
    /// Minimum partial distance correlation over the enumerated subsets.
    pub weight: f64,
    /// Partial distance correlation given the empty set.
    pub unconditional: f64,
    /// Sorted node indices of the subset attaining `weight`.
    pub argmin: Vec<usize>,
    pub p_value: Option<f64>,
    pub evaluated_subsets: u64,
    pub pruned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependencyGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<EdgeRecord>,
    pub config_fingerprint: String,
    pub n_samples: usize,
    pub cap: SubsetCap,
}

impl DependencyGraph {
    pub fn edge(&self, a: usize, b: usize) -> Option<&EdgeRecord> {
        let (s, t) = if a < b { (a, b) } else { (b, a) };
        self.edges.iter().find(|e| e.source == s && e.target == t)
    }

    /// Edges that survive pruning.
    pub fn active_edges(&self) -> impl Iterator<Item = &EdgeRecord> {
        self.edges.iter().filter(|e| !e.pruned)
    }

    pub fn total_evaluated(&self) -> u64 {
        self.edges.iter().map(|e| e.evaluated_subsets).sum()
    }
}

/// Canonical pair list `(i, j)` with `i < j`, row-major.
pub fn node_pairs(n_nodes: usize) -> Vec<(usize, usize)> {
    (0..n_nodes)
        .flat_map(|i| ((i + 1)..n_nodes).map(move |j| (i, j)))
        .collect()
}

#[derive(Debug, Clone)]
struct Best {
    weight: f64,
    nodes: Vec<usize>,
    count: u64,
}

impl Best {
    fn beats(&self, other: &Best, rule: TieRule) -> bool {
        if self.weight != other.weight {
            return self.weight < other.weight;
        }
        let by_size = match rule {
            TieRule::PreferSmaller => self.nodes.len().cmp(&other.nodes.len()),
            TieRule::PreferLarger => other.nodes.len().cmp(&self.nodes.len()),
        };
        by_size.then_with(|| self.nodes.cmp(&other.nodes)).is_lt()
    }

    fn merge(self, other: Best, rule: TieRule) -> Best {
        let count = self.count + other.count;
        let mut best = if other.beats(&self, rule) {
            other
        } else {
            self
        };
        best.count = count;
        best
    }
}

/// Everything needed to score conditioning subsets for one pair.
struct PairEval<'a> {
    data: &'a Dataset,
    candidates: Vec<usize>,
    a: &'a CenteredMatrix,
    b: &'a CenteredMatrix,
    aa: f64,
    bb: f64,
    ab: f64,
    scale: f64,
}

struct Buffers {
    acc: Array2<f64>,
    dist: Array2<f64>,
    centered: Array2<f64>,
}

impl<'a> PairEval<'a> {
    fn new(data: &'a Dataset, x: usize, y: usize) -> Result<Self> {
        if data.n_samples() < 4 {
            return Err(Error::SampleSize {
                needed: 4,
                got: data.n_samples(),
            });
        }
        let candidates: Vec<usize> = (0..data.len()).filter(|&k| k != x && k != y).collect();
        if candidates.len() > MAX_CANDIDATES {
            return Err(Error::Config(format!(
                "{} conditioning candidates exceed the limit of {MAX_CANDIDATES}",
                candidates.len()
            )));
        }
        let a = data.centered(x);
        let b = data.centered(y);
        let ab = inner_unchecked(a.data(), b.data());
        let aa = inner_unchecked(a.data(), a.data());
        let bb = inner_unchecked(b.data(), b.data());
        Ok(Self {
            data,
            candidates,
            a,
            b,
            aa,
            bb,
            ab,
            scale: a.scale() * b.scale(),
        })
    }

    fn unconditional(&self) -> f64 {
        ratio(self.ab, self.aa, self.bb, self.scale)
    }

    fn materialize(&self, mask: u64, acc: &mut Array2<f64>) {
        acc.fill(0.0);
        for (bit, &node) in self.candidates.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                *acc += self.data.distance(node).squared();
            }
        }
    }

    fn step(&self, from: u64, to: u64, acc: &mut Array2<f64>) {
        let mut diff = from ^ to;
        while diff != 0 {
            let bit = diff.trailing_zeros() as usize;
            diff &= diff - 1;
            let sq = self.data.distance(self.candidates[bit]).squared();
            if to >> bit & 1 == 1 {
                *acc += sq;
            } else {
                *acc -= sq;
            }
        }
    }

    /// pdcor given the subset whose joint squared distances are in `buf.acc`.
    fn conditional(&self, buf: &mut Buffers) -> Result<f64> {
        Zip::from(&mut buf.dist)
            .and(&buf.acc)
            .for_each(|d, &s| *d = s.max(0.0).sqrt());
        let scale_c = mean_off_diagonal(&buf.dist);
        u_center_into(buf.dist.view(), &mut buf.centered);
        let c = &buf.centered;
        let (ac, bc, cc) = fused_inner(self.a.data(), self.b.data(), c);
        if cc.is_nan() || cc <= 0.0 || cc.sqrt() <= DEGENERATE_TOL * scale_c {
            return Ok(self.unconditional());
        }
        let nx2 = self.aa - ac * ac / cc;
        let ny2 = self.bb - bc * bc / cc;
        if nx2 < CANCELLATION_GUARD * self.aa || ny2 < CANCELLATION_GUARD * self.bb {
            let c = CenteredMatrix::new(Centering::U, buf.centered.clone(), scale_c);
            return pdcor_centered(self.a, self.b, Some(&c));
        }
        let num = self.ab - ac * bc / cc;
        Ok(ratio(num, nx2, ny2, self.scale))
    }

    fn evaluate_range(
        &self,
        start: u64,
        end: u64,
        cap: SubsetCap,
        rule: TieRule,
    ) -> Result<Option<Best>> {
        let n = self.data.n_samples();
        let mut buf = Buffers {
            acc: Array2::zeros((n, n)),
            dist: Array2::zeros((n, n)),
            centered: Array2::zeros((n, n)),
        };
        let mut best: Option<Best> = None;
        let mut current: Option<u64> = None;
        let mut count = 0u64;
        for mask in GraySubsets::range(start, end, cap) {
            // Gray index 0 is the only empty mask and always opens block 0,
            // where the accumulator starts at zero.
            let value = if mask == 0 {
                self.unconditional()
            } else {
                match current {
                    Some(prev) => self.step(prev, mask, &mut buf.acc),
                    None => self.materialize(mask, &mut buf.acc),
                }
                self.audit(mask, count, &buf.acc);
                self.conditional(&mut buf)?
            };
            current = Some(mask);
            count += 1;
            if value.is_nan() {
                return Err(Error::Numerical(
                    "partial distance correlation is NaN".into(),
                ));
            }
            let cand = Best {
                weight: value,
                nodes: members(&self.candidates, mask),
                count: 0,
            };
            if best.as_ref().is_none_or(|b| cand.beats(b, rule)) {
                best = Some(cand);
            }
        }
        Ok(best.map(|mut b| {
            b.count = count;
            b
        }))
    }

    #[cfg(debug_assertions)]
    fn audit(&self, mask: u64, count: u64, acc: &Array2<f64>) {
        if count % 1000 != 999 {
            return;
        }
        let mut fresh = Array2::zeros(acc.raw_dim());
        self.materialize(mask, &mut fresh);
        let top = fresh.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let drift = (&fresh - acc).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        debug_assert!(
            drift <= 1e-10 * top,
            "accumulator drift {drift:e} at mask {mask:#x}"
        );
    }

    #[cfg(not(debug_assertions))]
    #[inline(always)]
    fn audit(&self, _mask: u64, _count: u64, _acc: &Array2<f64>) {}
}

/// `(<a,c>, <b,c>, <c,c>)` in one pass over the matrices.
fn fused_inner(a: &Array2<f64>, b: &Array2<f64>, c: &Array2<f64>) -> (f64, f64, f64) {
    let n = a.nrows();
    let mut r1 = Vec::with_capacity(n);
    let mut r2 = Vec::with_capacity(n);
    let mut r3 = Vec::with_capacity(n);
    for i in 0..n {
        let (ai, bi, ci) = (a.row(i), b.row(i), c.row(i));
        let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
        for j in 0..n {
            if j != i {
                s1 += ai[j] * ci[j];
                s2 += bi[j] * ci[j];
                s3 += ci[j] * ci[j];
            }
        }
        r1.push(s1);
        r2.push(s2);
        r3.push(s3);
    }
    let norm = (n * (n - 3)) as f64;
    (
        pairwise_sum(&r1) / norm,
        pairwise_sum(&r2) / norm,
        pairwise_sum(&r3) / norm,
    )
}

fn blocks(n_candidates: usize) -> Vec<(u64, u64)> {
    let total = 1u64 << n_candidates;
    (0..total.div_ceil(BLOCK_LEN))
        .map(|b| (b * BLOCK_LEN, ((b + 1) * BLOCK_LEN).min(total)))
        .collect()
}

fn finish_edge(x: usize, y: usize, unconditional: f64, best: Best) -> EdgeRecord {
    EdgeRecord {
        source: x.min(y),
        target: x.max(y),
        weight: best.weight,
        unconditional,
        argmin: best.nodes,
        p_value: None,
        evaluated_subsets: best.count,
        pruned: false,
    }
}

fn reduce(parts: Vec<Option<Best>>, rule: TieRule) -> Best {
    parts
        .into_iter()
        .flatten()
        .reduce(|a, b| a.merge(b, rule))
        .expect("the empty subset is always evaluated")
}

/// Minimum partial distance correlation of nodes `x` and `y` over all
/// conditioning subsets of the other nodes with at most `cap` members.
pub fn min_pdcor_edge(
    data: &Dataset,
    x: usize,
    y: usize,
    cap: SubsetCap,
    rule: TieRule,
) -> Result<EdgeRecord> {
    if x == y || x >= data.len() || y >= data.len() {
        return Err(Error::Config(format!("invalid node pair ({x}, {y})")));
    }
    let (x, y) = (x.min(y), x.max(y));
    let eval = PairEval::new(data, x, y)?;
    let parts = blocks(eval.candidates.len())
        .into_par_iter()
        .map(|(s, e)| eval.evaluate_range(s, e, cap, rule))
        .collect::<Result<Vec<_>>>()?;
    Ok(finish_edge(x, y, eval.unconditional(), reduce(parts, rule)))
}

/// Progress callback: `(subsets evaluated so far, total subsets)`.
pub type Progress<'a> = &'a (dyn Fn(u64, u64) + Sync);

/// Builds the full dependence graph over every node pair.
pub fn build_network(
    data: &Dataset,
    config: &BuildConfig,
    progress: Option<Progress<'_>>,
) -> Result<DependencyGraph> {
    let n_nodes = data.len();
    let cap = config.effective_cap(n_nodes);
    let pairs = node_pairs(n_nodes);
    let evals = pairs
        .iter()
        .map(|&(x, y)| PairEval::new(data, x, y))
        .collect::<Result<Vec<_>>>()?;

    let per_pair = subset_count(n_nodes - 2, cap);
    let total = per_pair * pairs.len() as u64;
    let done = AtomicU64::new(0);
    let work: Vec<(usize, u64, u64)> = (0..pairs.len())
        .flat_map(|p| blocks(n_nodes - 2).into_iter().map(move |(s, e)| (p, s, e)))
        .collect();
    let results = work
        .par_iter()
        .map(|&(p, s, e)| {
            let best = evals[p].evaluate_range(s, e, cap, config.tie_rule)?;
            if let (Some(report), Some(b)) = (progress, best.as_ref()) {
                let so_far = done.fetch_add(b.count, Ordering::Relaxed) + b.count;
                report(so_far, total);
            }
            Ok((p, best))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grouped: Vec<Vec<Option<Best>>> = vec![Vec::new(); pairs.len()];
    for (p, best) in results {
        grouped[p].push(best);
    }
    let mut edges: Vec<EdgeRecord> = grouped
        .into_iter()
        .enumerate()
        .map(|(p, parts)| {
            let (x, y) = pairs[p];
            finish_edge(
                x,
                y,
                evals[p].unconditional(),
                reduce(parts, config.tie_rule),
            )
        })
        .collect();

    if let Some(sig) = &config.significance {
        attach_p_values(data, &mut edges, sig, config.seed)?;
    }
    for e in &mut edges {
        let insignificant = match (&config.significance, e.p_value) {
            (Some(sig), Some(p)) => sig.prune && p > sig.alpha,
            _ => false,
        };
        e.pruned = e.weight <= config.threshold || insignificant;
    }

    Ok(DependencyGraph {
        nodes: data.names().to_vec(),
        edges,
        config_fingerprint: config.fingerprint(n_nodes),
        n_samples: data.n_samples(),
        cap,
    })
}

fn attach_p_values(
    data: &Dataset,
    edges: &mut [EdgeRecord],
    sig: &SignificanceConfig,
    seed: u64,
) -> Result<()> {
    let p_values = edges
        .par_iter()
        .enumerate()
        .map(|(idx, e)| {
            let z = match sig.conditioning {
                TestConditioning::Argmin if !e.argmin.is_empty() => {
                    let n = data.n_samples();
                    let mut sq = Array2::zeros((n, n));
                    for &k in &e.argmin {
                        sq += data.distance(k).squared();
                    }
                    Some(DistanceMatrix::from_squared(sq))
                }
                _ => None,
            };
            let mut rng = edge_rng(seed, idx as u64);
            permutation_test_with_rng(
                data.distance(e.source),
                data.distance(e.target),
                z.as_ref(),
                sig.permutations,
                &mut rng,
                seed,
            )
            .map(|r| r.p_value)
        })
        .collect::<Result<Vec<_>>>()?;
    for (e, p) in edges.iter_mut().zip(p_values) {
        e.p_value = Some(p);
    }
    Ok(())
}
