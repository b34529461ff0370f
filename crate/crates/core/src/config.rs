//! TOML run configuration with `[graph]`, `[opf]`, `[thermal]`, `[run]` and
//! `[custom]` sections, plus `key=value` overrides.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnep::FlowIntegrator;
use crate::graph::CommGraph;
use crate::oracle::QuadraticGnep;
use crate::scenarios::{BusParams, OpfParams, ThermalParams, ZoneParams};
use crate::sim::{Alg2Mode, SimOptions};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub graph: GraphConfig,
    pub opf: OpfConfig,
    pub thermal: ThermalConfig,
    pub run: RunSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomGame>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// path | star | complete | random | file | edges
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    pub p: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig { kind: "path".into(), nodes: None, p: 0.5, seed: 0, file: None, edges: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpfConfig {
    pub bus: BusParams,
    pub line_t: f64,
    pub line_capacity: f64,
    pub omega_ref: f64,
    pub pole: f64,
    pub margin: f64,
}

impl Default for OpfConfig {
    fn default() -> Self {
        OpfConfig { bus: BusParams::default(), line_t: 1.5, line_capacity: 80.0, omega_ref: 60.0, pole: -1.0, margin: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalConfig {
    pub zone: ZoneParams,
    pub c_p: f64,
    pub t_oa: f64,
    pub k1: f64,
    pub k_i2: f64,
    pub mode: String,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        let p = ThermalParams::defaults(1);
        ThermalConfig { zone: ZoneParams::default(), c_p: p.c_p, t_oa: p.t_oa, k1: p.k1, k_i2: p.k_i2, mode: "z_domain".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// opf | thermal | custom
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<u8>,
    pub h: f64,
    pub horizon: f64,
    pub record_every: usize,
    pub integrator: String,
    pub seed: u64,
    pub probe_samples: usize,
    pub settle_tol: f64,
    /// Agent count from which per-agent work runs on the thread pool.
    pub parallel_min_agents: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        let o = SimOptions::default();
        RunSection {
            scenario: "opf".into(),
            algorithm: None,
            h: o.h,
            horizon: o.horizon,
            record_every: o.record_every,
            integrator: "euler".into(),
            seed: 0,
            probe_samples: 200,
            settle_tol: 1e-3,
            parallel_min_agents: crate::gnep::DEFAULT_PARALLEL_MIN_AGENTS,
        }
    }
}

/// Quadratic game given by its data: ∇F(w) = Q w + b, E w + e = 0, C w + d ≤ 0,
/// lower ≤ w ≤ upper. Matrices are lists of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomGame {
    pub agent_dims: Vec<usize>,
    pub q: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub e: Vec<Vec<f64>>,
    #[serde(default)]
    pub e_vec: Vec<f64>,
    #[serde(default)]
    pub c: Vec<Vec<f64>>,
    #[serde(default)]
    pub d: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

fn matrix(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!("custom.{what}: every row needs {cols} entries")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl CustomGame {
    pub fn to_quadratic(&self) -> Result<QuadraticGnep> {
        let r: usize = self.agent_dims.iter().sum();
        let q = matrix(&self.q, r, "q")?;
        let e_mat = matrix(&self.e, r, "e")?;
        let c_mat = matrix(&self.c, r, "c")?;
        let game = QuadraticGnep {
            agent_dims: self.agent_dims.clone(),
            q,
            b: DVector::from_column_slice(&self.b),
            e_mat,
            e_vec: DVector::from_column_slice(&self.e_vec),
            c_mat,
            d_vec: DVector::from_column_slice(&self.d),
            lower: self.lower.clone().unwrap_or_else(|| vec![f64::NEG_INFINITY; r]),
            upper: self.upper.clone().unwrap_or_else(|| vec![f64::INFINITY; r]),
        };
        game.validate_shape().map_err(|e| Error::Config(format!("custom game: {e}")))?;
        Ok(game)
    }
}

/// Bare override keys and the section they live in.
const BARE_KEYS: &[(&str, &str)] = &[
    ("scenario", "run"),
    ("algorithm", "run"),
    ("h", "run"),
    ("horizon", "run"),
    ("record_every", "run"),
    ("integrator", "run"),
    ("seed", "run"),
    ("probe_samples", "run"),
    ("settle_tol", "run"),
    ("parallel_min_agents", "run"),
    ("kind", "graph"),
    ("nodes", "graph"),
    ("p", "graph"),
    ("file", "graph"),
    ("pole", "opf"),
    ("margin", "opf"),
    ("line_t", "opf"),
    ("line_capacity", "opf"),
    ("omega_ref", "opf"),
    ("k1", "thermal"),
    ("k_i2", "thermal"),
    ("c_p", "thermal"),
    ("t_oa", "thermal"),
    ("mode", "thermal"),
];

fn parse_scalar(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Probe {
        v: toml::Value,
    }
    toml::from_str::<Probe>(&format!("v = {raw}")).map(|p| p.v).unwrap_or_else(|_| toml::Value::String(raw.to_string()))
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut c = Self::from_toml_str(&text)?;
        c.base_dir = path.parent().map(Path::to_path_buf);
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `key=value` overrides. Keys are `section.key` (nested for
    /// `opf.bus.*` and `thermal.zone.*`) or a bare key from the run/graph/gain set.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        if overrides.is_empty() {
            return Ok(());
        }
        let base = self.base_dir.take();
        let mut root = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let bare: HashMap<&str, &str> = BARE_KEYS.iter().copied().collect();
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{item}' is not key=value")))?;
            let key = key.trim();
            let path: Vec<String> = if key.contains('.') {
                key.split('.').map(str::to_string).collect()
            } else if let Some(sec) = bare.get(key) {
                vec![sec.to_string(), key.to_string()]
            } else if ZONE_KEYS.contains(&key) {
                vec!["thermal".into(), "zone".into(), key.into()]
            } else if BUS_KEYS.contains(&key) {
                vec!["opf".into(), "bus".into(), key.into()]
            } else {
                return Err(Error::Config(format!("unknown override key '{key}'")));
            };
            let mut node = &mut root;
            for part in &path[..path.len() - 1] {
                let table = node
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("override '{key}' does not name a table")))?;
                node = table.entry(part.clone()).or_insert_with(|| toml::Value::Table(Default::default()));
            }
            let table = node.as_table_mut().ok_or_else(|| Error::Config(format!("override '{key}' is not a table path")))?;
            let mut value = parse_scalar(raw.trim());
            // integers are accepted where floats are expected
            if let (Some(toml::Value::Float(_)), toml::Value::Integer(i)) = (table.get(path.last().unwrap()), &value) {
                value = toml::Value::Float(*i as f64);
            }
            table.insert(path.last().unwrap().clone(), value);
        }
        let mut parsed: Config = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        parsed.base_dir = base;
        *self = parsed;
        Ok(())
    }

    /// Algorithm index, defaulting to the scenario's natural one.
    pub fn algorithm(&self) -> u8 {
        self.run.algorithm.unwrap_or(match self.run.scenario.as_str() {
            "thermal" => 2,
            _ => 1,
        })
    }

    /// Checks the scenario/algorithm pairing.
    pub fn validate(&self) -> Result<()> {
        let alg = self.algorithm();
        match (self.run.scenario.as_str(), alg) {
            ("opf", 1) | ("thermal", 2) | ("custom", 1) => {}
            ("opf" | "thermal" | "custom", 1 | 2) => {
                return Err(Error::Config(format!(
                    "algorithm/scenario mismatch: algorithm {alg} cannot drive the {} scenario",
                    self.run.scenario
                )))
            }
            ("opf" | "thermal" | "custom", a) => return Err(Error::Config(format!("unknown algorithm {a} (expected 1 or 2)"))),
            (s, _) => return Err(Error::Config(format!("unknown scenario '{s}' (expected opf|thermal|custom)"))),
        }
        if self.run.scenario == "custom" && self.custom.is_none() {
            return Err(Error::Config("scenario 'custom' needs a [custom] section".into()));
        }
        self.integrator()?;
        self.alg2_mode()?;
        self.sim_options()?.steps().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn integrator(&self) -> Result<FlowIntegrator> {
        self.run.integrator.parse()
    }

    pub fn alg2_mode(&self) -> Result<Alg2Mode> {
        self.thermal.mode.parse()
    }

    pub fn sim_options(&self) -> Result<SimOptions> {
        Ok(SimOptions {
            h: self.run.h,
            horizon: self.run.horizon,
            record_every: self.run.record_every,
            integrator: self.integrator()?,
        })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Builds the topology; per-edge weights come back aligned with `edges()`
    /// when the source provides them.
    pub fn build_graph(&self, default_nodes: usize) -> Result<(CommGraph, Vec<Option<f64>>)> {
        let g = &self.graph;
        let n = g.nodes.unwrap_or(default_nodes);
        let graph = match g.kind.as_str() {
            "path" => CommGraph::path(n)?,
            "star" => CommGraph::star(n)?,
            "complete" => CommGraph::complete(n)?,
            "random" => CommGraph::random_connected(n, g.p, g.seed)?,
            "edges" => {
                let edges: Vec<(usize, usize)> =
                    g.edges.as_ref().ok_or_else(|| Error::Config("graph.kind = 'edges' needs graph.edges".into()))?.iter().map(|e| (e[0], e[1])).collect();
                let nodes = g.nodes.unwrap_or_else(|| edges.iter().map(|e| e.0.max(e.1) + 1).max().unwrap_or(0));
                CommGraph::new(nodes, &edges)?
            }
            "file" => {
                let file = g.file.as_ref().ok_or_else(|| Error::Config("graph.kind = 'file' needs graph.file".into()))?;
                let path = self.resolve(file);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let (graph, raw) = CommGraph::parse_edge_list(&text)?;
                let weights = graph
                    .edges()
                    .iter()
                    .map(|e| raw.iter().rev().find(|(r, _)| r == e).and_then(|(_, w)| *w))
                    .collect();
                return Ok((graph, weights));
            }
            other => return Err(Error::Config(format!("unknown graph kind '{other}'"))),
        };
        let m = graph.edges().len();
        Ok((graph, vec![None; m]))
    }

    pub fn opf_params(&self, graph: &CommGraph, weights: &[Option<f64>]) -> OpfParams {
        let o = &self.opf;
        let mut p = OpfParams::uniform(graph, o.bus.clone(), o.line_t, o.line_capacity);
        p.omega_ref = o.omega_ref;
        for (t, w) in p.line_t.iter_mut().zip(weights) {
            if let Some(w) = w {
                *t = *w;
            }
        }
        p
    }

    pub fn thermal_params(&self, zones: usize) -> ThermalParams {
        let t = &self.thermal;
        let mut p = ThermalParams::uniform(zones, t.zone.clone());
        p.c_p = t.c_p;
        p.t_oa = t.t_oa;
        p.k1 = t.k1;
        p.k_i2 = t.k_i2;
        p
    }
}

const ZONE_KEYS: &[&str] =
    &["c1", "c2", "m_s", "r_ji", "r_oa", "p_d", "t_ref", "t_lo", "t_hi", "u_lo", "u_hi", "c1x", "c2x", "cu"];
const BUS_KEYS: &[&str] = &["m", "d", "t_ch", "t_g", "a", "b", "c", "pm_max", "pm_min", "p_load"];
