//! Weighted eigenvector centrality by power iteration.
//!
//! The dominant eigenvector of the symmetric weighted adjacency matrix K is
//! found by iterating on `K + σI` with `σ` equal to half the mean weighted
//! degree. The shift leaves eigenvectors unchanged and keeps the iteration
//! from oscillating on bipartite graphs, where `-λ` is also an eigenvalue.
//! The eigenvalue is reported for K itself, via the Rayleigh quotient.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::DependencyGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Unit Euclidean norm.
    #[default]
    Euclidean,
    /// Largest score equal to one.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralityOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub normalization: Normalization,
}

impl Default for CentralityOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 10_000,
            normalization: Normalization::Euclidean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityScores {
    pub nodes: Vec<String>,
    pub scores: Vec<f64>,
    pub eigenvalue: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// One row of a ranked centrality table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedNode {
    pub node: String,
    pub score: f64,
    pub rank: usize,
}

impl CentralityScores {
    /// Nodes sorted by descending score; ties keep node order.
    pub fn ranked(&self) -> Vec<RankedNode> {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        order
            .into_iter()
            .enumerate()
            .map(|(i, k)| RankedNode {
                node: self.nodes[k].clone(),
                score: self.scores[k],
                rank: i + 1,
            })
            .collect()
    }

    /// Writes `node,score,rank` rows, best first, after a `# fingerprint` comment line.
    pub fn write_csv<W: Write>(&self, mut out: W, fingerprint: &str) -> Result<()> {
        writeln!(out, "# run_fingerprint={fingerprint}")
            .map_err(|e| Error::io("<centrality output>", e))?;
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Config(format!("writing centrality CSV: {e}"));
        for row in self.ranked() {
            w.serialize(&row).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io("<centrality output>", e))?;
        Ok(())
    }
}

/// Symmetric adjacency matrix of the unpruned, positive-weight edges.
pub fn adjacency(graph: &DependencyGraph) -> Array2<f64> {
    let n = graph.nodes.len();
    let mut k = Array2::zeros((n, n));
    for e in graph.active_edges().filter(|e| e.weight > 0.0) {
        k[[e.source, e.target]] = e.weight;
        k[[e.target, e.source]] = e.weight;
    }
    k
}

/// Eigenvector centrality of the graph's surviving edges.
pub fn eigenvector_centrality(
    graph: &DependencyGraph,
    opts: &CentralityOptions,
) -> Result<CentralityScores> {
    let (scores, eigenvalue, iterations, converged) =
        power_iteration(adjacency(graph).view(), opts)?;
    Ok(CentralityScores {
        nodes: graph.nodes.clone(),
        scores,
        eigenvalue,
        iterations,
        converged,
    })
}

/// Power iteration on a nonnegative symmetric weight matrix.
/// Returns `(scores, eigenvalue, iterations, converged)`.
pub fn power_iteration(
    k: ArrayView2<'_, f64>,
    opts: &CentralityOptions,
) -> Result<(Vec<f64>, f64, usize, bool)> {
    let n = k.nrows();
    if n == 0 || k.ncols() != n {
        return Err(Error::Config(
            "adjacency matrix must be square and nonempty".into(),
        ));
    }
    for i in 0..n {
        for j in 0..n {
            let v = k[[i, j]];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "invalid edge weight {v} at ({i}, {j})"
                )));
            }
            if v != k[[j, i]] {
                return Err(Error::Config("adjacency matrix is not symmetric".into()));
            }
        }
    }
    let total: f64 = k.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::DegenerateGraph);
    }
    let shift = 0.5 * total / n as f64;

    let mut x = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut next = k.dot(&x) + shift * &x;
        let norm = next.dot(&next).sqrt();
        next /= norm;
        let diff = (&next - &x).dot(&(&next - &x)).sqrt();
        x = next;
        if diff < opts.tol {
            converged = true;
            break;
        }
    }
    let eigenvalue = x.dot(&k.dot(&x)) / x.dot(&x);
    let mut scores: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    if opts.normalization == Normalization::Max {
        let top = scores.iter().cloned().fold(0.0, f64::max);
        scores.iter_mut().for_each(|s| *s /= top);
    }
    Ok((scores, eigenvalue, iterations, converged))
}
