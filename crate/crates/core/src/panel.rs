//! Panel data ingestion: long-format CSV loading, cross-entity imputation,
//! per-indicator standardization and assembly of per-node sample matrices.
//!
//! A panel is a dense (entity, indicator, year) tensor with a mask of
//! observed cells. Each indicator belongs to exactly one node; a node's
//! sample matrix has one row per entity and its indicators' yearly values
//! laid out indicator-major, year-minor.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Minimum number of entities a grouping needs for estimation.
pub const MIN_GROUP_SIZE: usize = 4;

/// Column names of the long-format panel CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSchema {
    pub entity: String,
    pub indicator: String,
    pub year: String,
    pub value: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            entity: "entity".into(),
            indicator: "indicator".into(),
            year: "year".into(),
            value: "value".into(),
        }
    }
}

/// Assignment of indicators to nodes. Nodes are ordered by first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeMap {
    nodes: Vec<String>,
    assignment: Vec<(String, String)>,
    index: HashMap<String, usize>,
}

impl NodeMap {
    /// Builds a map from `(indicator, node)` pairs.
    pub fn new<I, S, T>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut map = NodeMap::default();
        for (indicator, node) in pairs {
            map.insert(indicator.into(), node.into())?;
        }
        Ok(map)
    }

    fn insert(&mut self, indicator: String, node: String) -> Result<()> {
        if let Some(&i) = self.index.get(&indicator) {
            if self.assignment[i].1 != node {
                return Err(Error::Config(format!(
                    "indicator {indicator:?} assigned to both {:?} and {node:?}",
                    self.assignment[i].1
                )));
            }
            return Ok(());
        }
        if !self.nodes.contains(&node) {
            self.nodes.push(node.clone());
        }
        self.index.insert(indicator.clone(), self.assignment.len());
        self.assignment.push((indicator, node));
        Ok(())
    }

    /// Reads a `{indicator, node}` CSV.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let rows = read_records(path, &["indicator", "node"])?;
        let mut map = NodeMap::default();
        for (_, r) in rows {
            map.insert(r[0].clone(), r[1].clone())?;
        }
        Ok(map)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_of(&self, indicator: &str) -> Option<&str> {
        self.index
            .get(indicator)
            .map(|&i| self.assignment[i].1.as_str())
    }

    /// Indicators in declaration order.
    pub fn indicators(&self) -> impl Iterator<Item = &str> {
        self.assignment.iter().map(|(k, _)| k.as_str())
    }
}

/// A named subset of entities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    pub name: String,
    pub members: Vec<String>,
}

/// Reads a `{grouping, entity}` CSV. Groupings and members keep file order.
pub fn load_groupings(path: impl AsRef<Path>) -> Result<Vec<Grouping>> {
    let rows = read_records(path.as_ref(), &["grouping", "entity"])?;
    let mut out: Vec<Grouping> = Vec::new();
    for (_, r) in rows {
        match out.iter_mut().find(|g| g.name == r[0]) {
            Some(g) => {
                if !g.members.contains(&r[1]) {
                    g.members.push(r[1].clone());
                }
            }
            None => out.push(Grouping {
                name: r[0].clone(),
                members: vec![r[1].clone()],
            }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Indicator {
    pub name: String,
    pub node: String,
}

/// Dense (entity, indicator, year) panel with an observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub entities: Vec<String>,
    pub indicators: Vec<Indicator>,
    /// All nodes of the node map, in its order.
    pub nodes: Vec<String>,
    /// Contiguous ascending years.
    pub years: Vec<i32>,
    pub values: Array3<f64>,
    pub mask: Array3<bool>,
}

impl Panel {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.entities.len(), self.indicators.len(), self.years.len())
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// Writes the observed cells in long format. Missing cells are written
    /// with an empty value.
    pub fn write_csv<W: Write>(&self, out: W, schema: &ColumnSchema) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Config(format!("writing panel CSV: {e}"));
        w.write_record([
            &schema.entity,
            &schema.indicator,
            &schema.year,
            &schema.value,
        ])
        .map_err(csv_err)?;
        for (e, entity) in self.entities.iter().enumerate() {
            for (k, ind) in self.indicators.iter().enumerate() {
                for (t, year) in self.years.iter().enumerate() {
                    let v = if self.mask[[e, k, t]] {
                        format!("{}", self.values[[e, k, t]])
                    } else {
                        String::new()
                    };
                    w.write_record([entity.as_str(), ind.name.as_str(), &year.to_string(), &v])
                        .map_err(csv_err)?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<panel output>", e))?;
        Ok(())
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Csv {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

/// Reads the named columns of a headed CSV, returning `(line, fields)` rows.
/// Lines starting with `#` are comments.
fn read_records(path: &Path, columns: &[&str]) -> Result<Vec<(u64, Vec<String>)>> {
    read_records_from(path, open(path)?, columns)
}

fn read_records_from<R: Read>(
    path: &Path,
    input: R,
    columns: &[&str],
) -> Result<Vec<(u64, Vec<String>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let idx = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| Error::Csv {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("missing column {c:?}"),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let fields = idx
            .iter()
            .map(|&i| rec.get(i).unwrap_or("").to_string())
            .collect();
        rows.push((line, fields));
    }
    Ok(rows)
}

/// Parses a value cell: empty, `NA`, `NaN` and non-finite numbers are missing.
fn parse_value(raw: &str) -> std::result::Result<Option<f64>, ()> {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("n/a") || t == ".." {
        return Ok(None);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Ok(None),
        Err(_) => Err(()),
    }
}

/// Loads a long-format panel CSV.
pub fn load_panel(path: impl AsRef<Path>, schema: &ColumnSchema, nodes: &NodeMap) -> Result<Panel> {
    let path = path.as_ref();
    load_panel_from(path, open(path)?, schema, nodes)
}

/// [`load_panel`] from any reader; `path` is only used in error messages.
pub fn load_panel_from<R: Read>(
    path: &Path,
    input: R,
    schema: &ColumnSchema,
    nodes: &NodeMap,
) -> Result<Panel> {
    let cols = [
        schema.entity.as_str(),
        schema.indicator.as_str(),
        schema.year.as_str(),
        schema.value.as_str(),
    ];
    let rows = read_records_from(path, input, &cols)?;

    struct Row {
        line: u64,
        entity: String,
        indicator: String,
        year: i32,
        value: Option<f64>,
    }
    let mut parsed = Vec::with_capacity(rows.len());
    let mut entities = BTreeSet::new();
    let mut present = BTreeSet::new();
    for (line, f) in rows {
        let year = f[2].parse::<i32>().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            field: "year",
            value: f[2].clone(),
        })?;
        let value = parse_value(&f[3]).map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            field: "value",
            value: f[3].clone(),
        })?;
        if nodes.node_of(&f[1]).is_none() {
            return Err(Error::UnassignedIndicator(f[1].clone()));
        }
        entities.insert(f[0].clone());
        present.insert(f[1].clone());
        parsed.push(Row {
            line,
            entity: f[0].clone(),
            indicator: f[1].clone(),
            year,
            value,
        });
    }
    if parsed.is_empty() {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            line: 1,
            message: "no data rows".into(),
        });
    }

    let entities: Vec<String> = entities.into_iter().collect();
    let indicators: Vec<Indicator> = nodes
        .indicators()
        .filter(|k| present.contains(*k))
        .map(|k| Indicator {
            name: k.to_string(),
            node: nodes.node_of(k).unwrap_or_default().to_string(),
        })
        .collect();
    let lo = parsed.iter().map(|r| r.year).min().unwrap_or(0);
    let hi = parsed.iter().map(|r| r.year).max().unwrap_or(0);
    let years: Vec<i32> = (lo..=hi).collect();

    let e_idx: HashMap<&str, usize> = entities
        .iter()
        .enumerate()
        .map(|(i, e)| (e.as_str(), i))
        .collect();
    let k_idx: HashMap<&str, usize> = indicators
        .iter()
        .enumerate()
        .map(|(i, k)| (k.name.as_str(), i))
        .collect();
    let shape = (entities.len(), indicators.len(), years.len());
    let mut values = Array3::from_elem(shape, f64::NAN);
    let mut mask = Array3::from_elem(shape, false);
    let mut seen = Array3::from_elem(shape, false);
    for r in &parsed {
        let cell = [
            e_idx[r.entity.as_str()],
            k_idx[r.indicator.as_str()],
            (r.year - lo) as usize,
        ];
        if seen[cell] {
            return Err(Error::DuplicateCell {
                path: path.to_path_buf(),
                line: r.line,
                entity: r.entity.clone(),
                indicator: r.indicator.clone(),
                year: r.year,
            });
        }
        seen[cell] = true;
        if let Some(v) = r.value {
            values[cell] = v;
            mask[cell] = true;
        }
    }

    Ok(Panel {
        entities,
        indicators,
        nodes: nodes.nodes().to_vec(),
        years,
        values,
        mask,
    })
}

/// What imputation did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    pub imputed_total: usize,
    /// Imputed cells per (indicator, year), only nonzero counts.
    pub imputed_by_cell: Vec<ImputedCount>,
    /// Entity pairs with no co-observed cells; cells whose donors include
    /// such a pair were filled with uniform weights.
    pub uniform_fallback_pairs: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedCount {
    pub indicator: String,
    pub year: i32,
    pub count: usize,
}

/// Mean and population standard deviation of each indicator over its
/// observed cells.
fn indicator_moments(panel: &Panel) -> Vec<(f64, f64)> {
    let (ne, nk, nt) = panel.shape();
    (0..nk)
        .map(|k| {
            let vals: Vec<f64> = (0..ne)
                .flat_map(|e| (0..nt).map(move |t| (e, t)))
                .filter(|&(e, t)| panel.mask[[e, k, t]])
                .map(|(e, t)| panel.values[[e, k, t]])
                .collect();
            moments(&vals)
        })
        .collect()
}

fn moments(vals: &[f64]) -> (f64, f64) {
    if vals.is_empty() {
        return (0.0, 0.0);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Distance between two entities over the cells both observe, after
/// z-scoring each indicator. `None` when they share no observed cell.
fn entity_distance(panel: &Panel, z: &Array3<f64>, a: usize, b: usize) -> Option<f64> {
    let (_, nk, nt) = panel.shape();
    let mut sum = 0.0;
    let mut shared = false;
    for k in 0..nk {
        for t in 0..nt {
            if panel.mask[[a, k, t]] && panel.mask[[b, k, t]] {
                let d = z[[a, k, t]] - z[[b, k, t]];
                sum += d * d;
                shared = true;
            }
        }
    }
    shared.then(|| sum.sqrt())
}

/// Fills every missing cell with a weighted mean of the entities that observe
/// the same (indicator, year), with weights `1 / (distance + epsilon)`.
///
/// Distances are Euclidean between entities over co-observed cells, each
/// indicator z-scored with its observed mean and standard deviation. If an
/// entity shares no observed cell with one of the donors, that cell uses
/// uniform weights and the pair is reported.
pub fn impute_missing(panel: &Panel, epsilon: f64) -> Result<(Panel, ImputationReport)> {
    let (ne, nk, nt) = panel.shape();
    let mut unimputable = Vec::new();
    for k in 0..nk {
        for t in 0..nt {
            let any_missing = (0..ne).any(|e| !panel.mask[[e, k, t]]);
            let any_observed = (0..ne).any(|e| panel.mask[[e, k, t]]);
            if any_missing && !any_observed {
                unimputable.push((panel.indicators[k].name.clone(), panel.years[t]));
            }
        }
    }
    if !unimputable.is_empty() {
        return Err(Error::Unimputable { cells: unimputable });
    }
    if panel.is_complete() {
        return Ok((panel.clone(), ImputationReport::default()));
    }

    let moments = indicator_moments(panel);
    let mut z = panel.values.clone();
    for ((_, k, _), v) in z.indexed_iter_mut() {
        let (m, s) = moments[k];
        *v = if s > 0.0 { (*v - m) / s } else { 0.0 };
    }

    // Only entities with a missing cell need distances.
    let needy: Vec<usize> = (0..ne)
        .filter(|&e| {
            panel
                .mask
                .index_axis(ndarray::Axis(0), e)
                .iter()
                .any(|&m| !m)
        })
        .collect();
    let mut dist: HashMap<(usize, usize), Option<f64>> = HashMap::new();
    for &e in &needy {
        for o in 0..ne {
            if o != e {
                dist.insert((e, o), entity_distance(panel, &z, e, o));
            }
        }
    }

    let mut out = panel.clone();
    let mut by_cell: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut fallback: BTreeSet<(usize, usize)> = BTreeSet::new();
    for &e in &needy {
        for k in 0..nk {
            for t in 0..nt {
                if panel.mask[[e, k, t]] {
                    continue;
                }
                let donors: Vec<usize> = (0..ne).filter(|&o| panel.mask[[o, k, t]]).collect();
                let uniform = donors.iter().any(|&o| dist[&(e, o)].is_none());
                let mut num = 0.0;
                let mut den = 0.0;
                for &o in &donors {
                    let w = if uniform {
                        1.0
                    } else {
                        1.0 / (dist[&(e, o)].unwrap_or(0.0) + epsilon)
                    };
                    if dist[&(e, o)].is_none() {
                        fallback.insert((e.min(o), e.max(o)));
                    }
                    num += w * panel.values[[o, k, t]];
                    den += w;
                }
                out.values[[e, k, t]] = num / den;
                out.mask[[e, k, t]] = true;
                *by_cell.entry((k, t)).or_default() += 1;
            }
        }
    }

    let report = ImputationReport {
        imputed_total: by_cell.values().sum(),
        imputed_by_cell: by_cell
            .into_iter()
            .map(|((k, t), count)| ImputedCount {
                indicator: panel.indicators[k].name.clone(),
                year: panel.years[t],
                count,
            })
            .collect(),
        uniform_fallback_pairs: fallback
            .into_iter()
            .map(|(a, b)| (panel.entities[a].clone(), panel.entities[b].clone()))
            .collect(),
    };
    Ok((out, report))
}

/// Z-scores each indicator over all its observed (entity, year) cells using
/// the population standard deviation. Constant indicators become zeros.
pub fn standardize(panel: &Panel) -> Panel {
    let moments = indicator_moments(panel);
    let mut out = panel.clone();
    for ((e, k, t), v) in out.values.indexed_iter_mut() {
        if !panel.mask[[e, k, t]] {
            continue;
        }
        let (m, s) = moments[k];
        *v = if s > 1e-12 * m.abs().max(1.0) {
            (*v - m) / s
        } else {
            0.0
        };
    }
    out
}

/// Samples of one node: one row per grouping member, columns laid out
/// indicator-major, year-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMatrix {
    pub node: String,
    pub data: Array2<f64>,
}

/// Checks a grouping against the panel's entities.
pub fn validate_grouping(panel: &Panel, grouping: &Grouping) -> Result<()> {
    let invalid = |reason: String| Error::InvalidGrouping {
        name: grouping.name.clone(),
        reason,
    };
    if grouping.members.is_empty() {
        return Err(invalid("no members".into()));
    }
    let unknown: Vec<&str> = grouping
        .members
        .iter()
        .filter(|m| !panel.entities.contains(m))
        .map(String::as_str)
        .collect();
    if !unknown.is_empty() {
        return Err(invalid(format!("unknown entities {unknown:?}")));
    }
    Ok(())
}

/// Builds one sample matrix per node for the members of `grouping`.
pub fn assemble_nodes(panel: &Panel, grouping: &Grouping) -> Result<Vec<NodeMatrix>> {
    validate_grouping(panel, grouping)?;
    if grouping.members.len() < MIN_GROUP_SIZE {
        return Err(Error::SampleSize {
            needed: MIN_GROUP_SIZE,
            got: grouping.members.len(),
        });
    }
    if !panel.is_complete() {
        return Err(Error::Config(
            "panel must be fully observed before assembly".into(),
        ));
    }
    let rows: Vec<usize> = grouping
        .members
        .iter()
        .map(|m| {
            panel
                .entities
                .iter()
                .position(|e| e == m)
                .unwrap_or_default()
        })
        .collect();
    let nt = panel.years.len();
    panel
        .nodes
        .iter()
        .map(|node| {
            let cols: Vec<usize> = panel
                .indicators
                .iter()
                .enumerate()
                .filter(|(_, ind)| &ind.node == node)
                .map(|(k, _)| k)
                .collect();
            if cols.is_empty() {
                return Err(Error::EmptyNode(node.clone()));
            }
            let data = Array2::from_shape_fn((rows.len(), cols.len() * nt), |(i, c)| {
                panel.values[[rows[i], cols[c / nt], c % nt]]
            });
            Ok(NodeMatrix {
                node: node.clone(),
                data,
            })
        })
        .collect()
}
