//! Dependence networks built from partial distance correlation.
//!
//! The pipeline turns an entity x indicator x year panel into one sample
//! matrix per node, weights each node pair by the smallest partial distance
//! correlation over conditioning sets drawn from the remaining nodes, and
//! ranks nodes by eigenvector centrality of the resulting graph.
//!
//! ```
//! use dcornet::{dcor, Estimator};
//! use ndarray::array;
//!
//! let x = array![[0.0], [1.0], [2.0], [3.0], [4.0]];
//! let y = x.mapv(|v| 3.0 * v - 1.0);
//! let r = dcor(x.view(), y.view(), Estimator::Biased).unwrap();
//! assert!((r - 1.0).abs() < 1e-12);
//! ```

pub mod centrality;
pub mod cli;
pub mod distance;
pub mod error;
pub mod export;
pub mod network;
pub mod panel;
pub mod partial;
pub mod significance;
pub mod subsets;

pub use centrality::{eigenvector_centrality, CentralityOptions, CentralityScores, Normalization};
pub use distance::{
    dcor, dcov_biased, dcov_unbiased, double_center, u_center, CenteredMatrix, Centering,
    DistanceMatrix, Estimator,
};
pub use error::{Error, Result};
pub use network::{build_network, BuildConfig, Dataset, DependencyGraph, EdgeRecord};
pub use panel::{assemble_nodes, impute_missing, load_panel, standardize, NodeMap, Panel};
pub use partial::{pdcor, pdcov, ConditioningSet};
pub use significance::{permutation_test, TestResult};
pub use subsets::{enumerate_subsets, SubsetCap};
