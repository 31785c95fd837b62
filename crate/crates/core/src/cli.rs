//! Pipeline commands behind the `dcornet` binary.
//!
//! A run is described by a TOML [`RunConfig`]. Each command reads its inputs
//! from the config (or the previous command's outputs in `out`) and writes
//! its results there:
//!
//! | command      | reads                         | writes                                        |
//! |--------------|-------------------------------|-----------------------------------------------|
//! | `ingest`     | panel, node map               | `panel_clean.csv`, `ingest_report.json`       |
//! | `network`    | `panel_clean.csv`, groupings  | `graph.json` (+ `.graphml`, `.dot`), `manifest.json` |
//! | `centrality` | `graph.json`                  | `centrality.csv`                              |
//!
//! `graph.json` is always written since `centrality` reads it; the other
//! files follow the configured formats.
//!
//! Analytical outputs embed the run fingerprint, a hash of every config field
//! that can change results. Wall time and timestamps go only to the manifest,
//! so analytical outputs are byte-identical across reruns and thread counts.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::centrality::{
    eigenvector_centrality, CentralityOptions, CentralityScores, Normalization,
};
use crate::error::{Error, Result};
use crate::export::{from_json, to_dot, to_graphml, to_json};
use crate::network::{
    build_network, BuildConfig, Dataset, SignificanceConfig, TestConditioning, TieRule,
};
use crate::panel::{
    assemble_nodes, impute_missing, load_groupings, load_panel, standardize, ColumnSchema, NodeMap,
    DEFAULT_EPSILON,
};
use crate::subsets::subset_count;

pub const PANEL_CACHE: &str = "panel_clean.csv";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const GRAPH_JSON: &str = "graph.json";
pub const GRAPH_GRAPHML: &str = "graph.graphml";
pub const GRAPH_DOT: &str = "graph.dot";
pub const MANIFEST: &str = "manifest.json";
pub const CENTRALITY_CSV: &str = "centrality.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Graphml,
    Dot,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub panel: PathBuf,
    pub node_map: PathBuf,
    pub groupings: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestOptions {
    pub impute_epsilon: f64,
    pub standardize: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            impute_epsilon: DEFAULT_EPSILON,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkOptions {
    pub max_cond_size: Option<usize>,
    pub exhaustive: bool,
    pub threshold: f64,
    /// Permutations per edge test; 0 disables testing.
    pub permutations: usize,
    pub alpha: f64,
    pub prune_by_significance: bool,
    pub test_conditioning: TestConditioning,
    pub seed: u64,
    pub tie_rule: TieRule,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        Self {
            max_cond_size: None,
            exhaustive: false,
            threshold: 0.0,
            permutations: 0,
            alpha: 0.05,
            prune_by_significance: false,
            test_conditioning: TestConditioning::Argmin,
            seed: 0,
            tie_rule: TieRule::PreferSmaller,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentralitySection {
    pub tol: f64,
    pub max_iter: usize,
    pub normalization: Normalization,
    /// Rows printed to stdout.
    pub top: usize,
}

impl Default for CentralitySection {
    fn default() -> Self {
        let d = CentralityOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            normalization: d.normalization,
            top: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Inputs,
    #[serde(default)]
    pub columns: ColumnSchema,
    pub grouping: String,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub ingest: IngestOptions,
    #[serde(default)]
    pub network: NetworkOptions,
    #[serde(default)]
    pub centrality: CentralitySection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Graphml, Format::Dot, Format::Csv]
}

impl RunConfig {
    /// Reads a TOML config; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out)
    }

    /// Hash of every field that can change analytical results. Output
    /// location, formats and thread count are excluded.
    pub fn fingerprint(&self) -> String {
        let mut canon = self.clone();
        canon.out = PathBuf::new();
        canon.formats.clear();
        canon.threads = None;
        canon.centrality.top = 0;
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..16])
    }

    pub fn build_config(&self) -> BuildConfig {
        let n = &self.network;
        BuildConfig {
            max_cond_size: n.max_cond_size,
            exhaustive: n.exhaustive,
            threshold: n.threshold,
            significance: (n.permutations > 0).then_some(SignificanceConfig {
                permutations: n.permutations,
                alpha: n.alpha,
                prune: n.prune_by_significance,
                conditioning: n.test_conditioning,
            }),
            seed: n.seed,
            tie_rule: n.tie_rule,
        }
    }

    pub fn centrality_options(&self) -> CentralityOptions {
        CentralityOptions {
            tol: self.centrality.tol,
            max_iter: self.centrality.max_iter,
            normalization: self.centrality.normalization,
        }
    }

    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    /// Runs `f` on a pool with the configured number of threads.
    fn with_pool<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.unwrap_or(0))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(f)
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn ensure_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.out_dir();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestReport {
    pub run_fingerprint: String,
    pub entities: usize,
    pub indicators: usize,
    pub years: Vec<i32>,
    pub imputed_total: usize,
    pub imputed_by_cell: Vec<crate::panel::ImputedCount>,
    pub uniform_fallback_pairs: Vec<(String, String)>,
}

/// Loads, imputes and (optionally) standardizes the panel, then caches it.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<IngestReport> {
    let nodes = NodeMap::from_csv(cfg.resolve(&cfg.inputs.node_map))?;
    let panel = load_panel(cfg.resolve(&cfg.inputs.panel), &cfg.columns, &nodes)?;
    let (mut panel, imputation) = impute_missing(&panel, cfg.ingest.impute_epsilon)?;
    if cfg.ingest.standardize {
        panel = standardize(&panel);
    }
    let out = ensure_out(cfg)?;
    let fp = cfg.fingerprint();

    let mut buf = format!("# run_fingerprint={fp}\n").into_bytes();
    panel.write_csv(&mut buf, &cfg.columns)?;
    write(&out.join(PANEL_CACHE), buf)?;

    let report = IngestReport {
        run_fingerprint: fp,
        entities: panel.entities.len(),
        indicators: panel.indicators.len(),
        years: panel.years.clone(),
        imputed_total: imputation.imputed_total,
        imputed_by_cell: imputation.imputed_by_cell,
        uniform_fallback_pairs: imputation.uniform_fallback_pairs,
    };
    write(
        &out.join(INGEST_REPORT),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub run_fingerprint: String,
    pub config_fingerprint: String,
    pub grouping: String,
    pub n_samples: usize,
    pub nodes: usize,
    pub max_cond_size: Option<usize>,
    pub subsets_per_pair: u64,
    pub total_subsets: u64,
    pub threads: usize,
    pub wall_time_secs: f64,
    pub finished_unix: u64,
}

/// Reports progress to stderr each time another `interval` subsets finish.
pub fn stderr_progress(interval: u64) -> impl Fn(u64, u64) + Sync {
    let last = AtomicU64::new(0);
    move |done, total| {
        let bucket = done / interval.max(1);
        if last.fetch_max(bucket, Ordering::Relaxed) < bucket {
            eprintln!("evaluated {done}/{total} subsets");
        }
    }
}

/// Builds the dependence network for the configured grouping.
pub fn cmd_network(
    cfg: &RunConfig,
    progress: Option<crate::network::Progress<'_>>,
) -> Result<Manifest> {
    let out = cfg.out_dir();
    let cache = out.join(PANEL_CACHE);
    if !cache.exists() {
        return Err(Error::Config(format!(
            "{} not found; run `ingest` first",
            cache.display()
        )));
    }
    let nodes = NodeMap::from_csv(cfg.resolve(&cfg.inputs.node_map))?;
    let panel = load_panel(&cache, &cfg.columns, &nodes)?;
    let groupings = load_groupings(cfg.resolve(&cfg.inputs.groupings))?;
    let grouping = groupings
        .iter()
        .find(|g| g.name == cfg.grouping)
        .ok_or_else(|| Error::InvalidGrouping {
            name: cfg.grouping.clone(),
            reason: "not defined in the groupings file".into(),
        })?;
    let matrices = assemble_nodes(&panel, grouping)?;

    let started = Instant::now();
    let build = cfg.build_config();
    let (graph, threads) = cfg.with_pool(|| {
        let data = Dataset::from_node_matrices(&matrices)?;
        Ok((
            build_network(&data, &build, progress)?,
            rayon::current_num_threads(),
        ))
    })?;
    let wall = started.elapsed().as_secs_f64();

    let fp = cfg.fingerprint();
    write(&out.join(GRAPH_JSON), to_json(&graph, Some(fp.clone()))?)?;
    if cfg.wants(Format::Graphml) {
        write(&out.join(GRAPH_GRAPHML), to_graphml(&graph, Some(&fp)))?;
    }
    if cfg.wants(Format::Dot) {
        write(&out.join(GRAPH_DOT), to_dot(&graph, Some(&fp)))?;
    }

    let manifest = Manifest {
        run_fingerprint: fp,
        config_fingerprint: graph.config_fingerprint.clone(),
        grouping: grouping.name.clone(),
        n_samples: graph.n_samples,
        nodes: graph.nodes.len(),
        max_cond_size: graph.cap.limit(),
        subsets_per_pair: subset_count(graph.nodes.len() - 2, graph.cap),
        total_subsets: graph.total_evaluated(),
        threads,
        wall_time_secs: wall,
        finished_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    write(
        &out.join(MANIFEST),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

/// Eigenvector centrality of the stored graph, written as a ranked CSV.
pub fn cmd_centrality(cfg: &RunConfig) -> Result<CentralityScores> {
    let out = cfg.out_dir();
    let graph = from_json(&read(&out.join(GRAPH_JSON))?)?;
    let scores = eigenvector_centrality(&graph, &cfg.centrality_options())?;
    if !scores.converged {
        eprintln!(
            "warning: power iteration stopped after {} iterations without converging",
            scores.iterations
        );
    }
    if cfg.wants(Format::Csv) {
        let mut buf = Vec::new();
        scores.write_csv(&mut buf, &cfg.fingerprint())?;
        write(&out.join(CENTRALITY_CSV), buf)?;
    }
    Ok(scores)
}
