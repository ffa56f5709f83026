//! TOML scenario files.
//!
//! ```toml
//! name = "demo"
//! agents = 3
//!
//! [plant]
//! a = [[0.0, 1.0], [-1.0, 0.0]]   # row-major, one array per row
//! b = [[0.0], [1.0]]
//!
//! [performance]
//! q = [[1.0, 0.0], [0.0, 1.0]]
//! gamma = 2.0                      # or: eps = 5.0
//! # mu = 0.1                       # switches to the Lipschitz design
//!
//! [nonlinearity]                   # optional
//! kind = "sin"                     # "none" | "sin" | "tabulated"
//! source = 1                       # 1-based components
//! target = 2
//! scale = -0.1
//!
//! [topology]
//! dwell = 0.5
//! interval = 0.5
//! seed = 1
//! graphs = [{ name = "ring", edges = [[1, 2], [2, 3], [3, 1]] }]
//!
//! [initial]
//! states = [[1.0, 0.0], [0.0, 1.0], [-1.0, 2.0]]
//!
//! [integrator]                     # optional
//! step = 1e-3
//! horizon = 20.0
//! ```

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graph::{self, Graph, SwitchingSchedule, SwitchingSet};
use crate::linalg;
use crate::protocol::NonlinearityHook;
use crate::riccati::{self, GainSet, Mode, PerformanceSpec, PlantModel};
use crate::simulator::{self, IntegratorConfig, SimulationSetup, Trace};

/// Environment variable naming the directory searched for scenario names.
pub const SCENARIO_DIR_ENV: &str = "ADCONS_SCENARIO_DIR";

const EXAMPLE1: &str = include_str!("../scenarios/example1.toml");
const EXAMPLE2: &str = include_str!("../scenarios/example2.toml");

/// Names of the scenarios compiled into the crate.
pub const BUNDLED: [&str; 2] = ["example1", "example2"];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    agents: Option<i64>,
    plant: Option<RawPlant>,
    performance: Option<RawPerformance>,
    nonlinearity: Option<RawNonlinearity>,
    topology: Option<RawTopology>,
    initial: Option<RawInitial>,
    integrator: Option<RawIntegrator>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPerformance {
    q: Vec<Vec<f64>>,
    gamma: Option<f64>,
    eps: Option<f64>,
    mu: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNonlinearity {
    kind: String,
    source: Option<i64>,
    target: Option<i64>,
    scale: Option<f64>,
    points: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    name: Option<String>,
    edges: Vec<[i64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    dwell: f64,
    interval: Option<f64>,
    seed: Option<u64>,
    graphs: Vec<RawGraph>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    states: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    step: Option<f64>,
    horizon: Option<f64>,
}

/// How the design parameter is given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Design {
    /// Fixed translation factor γ.
    Gamma(f64),
    /// Gain factor ε; γ is searched.
    Eps(f64),
}

/// A fully validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantModel,
    pub q: DMatrix<f64>,
    pub design: Design,
    pub mu: Option<f64>,
    pub hook: NonlinearityHook,
    pub set: SwitchingSet,
    pub graph_names: Vec<String>,
    pub interval: f64,
    pub seed: u64,
    /// One agent per row.
    pub initial: DMatrix<f64>,
    pub integrator: IntegratorConfig,
}

fn matrix(rows: &[Vec<f64>], field: &str, errors: &mut Vec<String>) -> Option<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        errors.push(format!("{field}: empty matrix"));
        return None;
    }
    let cols = rows[0].len();
    let mut ok = true;
    for (r, row) in rows.iter().enumerate() {
        if row.len() != cols {
            errors.push(format!(
                "{field}: row {} has {} entries, expected {cols}",
                r + 1,
                row.len()
            ));
            ok = false;
        }
        if row.iter().any(|v| !v.is_finite()) {
            errors.push(format!("{field}: row {} has non-finite entries", r + 1));
            ok = false;
        }
    }
    ok.then(|| DMatrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied()))
}

fn positive(v: f64, field: &str, errors: &mut Vec<String>) -> bool {
    if v > 0.0 && v.is_finite() {
        true
    } else {
        errors.push(format!("{field}: must be > 0, got {v}"));
        false
    }
}

fn component(
    v: Option<i64>,
    d: Option<usize>,
    field: &str,
    errors: &mut Vec<String>,
) -> Option<usize> {
    let Some(v) = v else {
        errors.push(format!("{field}: missing"));
        return None;
    };
    match d {
        Some(d) if v < 1 || v as usize > d => {
            errors.push(format!("{field}: component {v} outside 1..={d}"));
            None
        }
        _ if v < 1 => {
            errors.push(format!("{field}: component {v} must be >= 1"));
            None
        }
        _ => Some(v as usize - 1),
    }
}

impl Scenario {
    /// Parses and validates scenario text; `origin` is used in messages.
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        validate(raw)
    }

    /// Linear when no Lipschitz constant is declared.
    pub fn mode(&self) -> Mode {
        if self.mu.is_some() {
            Mode::Lipschitz
        } else {
            Mode::Linear
        }
    }

    pub fn agent_count(&self) -> usize {
        self.initial.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }

    /// Performance spec at a given γ (the scenario's own γ for a fixed design).
    pub fn spec_at(&self, gamma: f64) -> Result<PerformanceSpec> {
        let mut spec = PerformanceSpec::new(self.q.clone(), gamma)?;
        if let Some(mu) = self.mu {
            spec = spec.with_mu(mu)?;
        }
        if let Design::Eps(eps) = self.design {
            spec = spec.with_eps(eps)?.with_slack(riccati::STRICT_SLACK_REL)?;
        }
        Ok(spec)
    }

    /// Gains for this scenario's design.
    pub fn synthesize(&self) -> Result<GainSet> {
        match (self.design, self.mu) {
            (Design::Gamma(g), None) => riccati::synthesize_linear(&self.plant, &self.spec_at(g)?),
            (Design::Gamma(g), Some(_)) => {
                riccati::synthesize_lipschitz(&self.plant, &self.spec_at(g)?)
            }
            (Design::Eps(eps), None) => {
                Ok(riccati::synthesize_linear_eps(&self.plant, &self.q, eps)?.1)
            }
            (Design::Eps(eps), Some(mu)) => {
                Ok(riccati::synthesize_lipschitz_eps(&self.plant, &self.q, eps, mu)?.1)
            }
        }
    }

    pub fn schedule(&self) -> Result<SwitchingSchedule> {
        graph::sample_switching_signal(&self.set, self.integrator.horizon, self.interval, self.seed)
    }

    pub fn simulation_setup(&self, gains: GainSet) -> Result<SimulationSetup> {
        Ok(SimulationSetup {
            plant: self.plant.clone(),
            gains,
            hook: self.hook.clone(),
            set: self.set.clone(),
            schedule: self.schedule()?,
            initial: self.initial.clone(),
            q: self.q.clone(),
            config: self.integrator,
            seed: Some(self.seed),
        })
    }

    /// Synthesizes gains and simulates.
    pub fn run(&self) -> Result<Trace> {
        let gains = self.synthesize()?;
        simulator::simulate(&self.simulation_setup(gains)?)
    }
}

fn validate(raw: RawScenario) -> Result<Scenario> {
    let mut errors = Vec::new();
    let name = raw.name.unwrap_or_else(|| "unnamed".to_string());

    let agents = match raw.agents {
        Some(n) if n >= 2 => Some(n as usize),
        Some(n) => {
            errors.push(format!("agents: need at least 2 agents, got {n}"));
            None
        }
        None => {
            errors.push("agents: missing".into());
            None
        }
    };

    let plant = match &raw.plant {
        None => {
            errors.push("plant: missing section".into());
            None
        }
        Some(p) => {
            let a = matrix(&p.a, "plant.a", &mut errors);
            let b = matrix(&p.b, "plant.b", &mut errors);
            match (a, b) {
                (Some(a), Some(b)) => match PlantModel::new(a, b) {
                    Ok(plant) => Some(plant),
                    Err(e) => {
                        errors.push(format!("plant: {e}"));
                        None
                    }
                },
                _ => None,
            }
        }
    };
    let d = plant.as_ref().map(|p| p.state_dim());

    let mut q = None;
    let mut design = None;
    let mut mu = None;
    match &raw.performance {
        None => errors.push("performance: missing section".into()),
        Some(perf) => {
            if let Some(m) = matrix(&perf.q, "performance.q", &mut errors) {
                if let Some(d) = d {
                    if m.nrows() != d || m.ncols() != d {
                        errors.push(format!(
                            "performance.q: must be {d}x{d}, got {}x{}",
                            m.nrows(),
                            m.ncols()
                        ));
                    }
                }
                if !linalg::is_symmetric(&m, linalg::SYMMETRY_TOL) {
                    errors.push("performance.q: Q not symmetric".into());
                } else if !linalg::is_positive_definite(&m) {
                    errors.push("performance.q: Q not positive definite".into());
                }
                q = Some(m);
            }
            match (perf.gamma, perf.eps) {
                (Some(_), Some(_)) => {
                    errors.push("performance: give either gamma or eps, not both".into())
                }
                (None, None) => errors.push("performance: one of gamma or eps is required".into()),
                (Some(g), None) => {
                    if positive(g, "performance.gamma", &mut errors) {
                        design = Some(Design::Gamma(g));
                    }
                }
                (None, Some(e)) => {
                    if positive(e, "performance.eps", &mut errors) {
                        design = Some(Design::Eps(e));
                    }
                }
            }
            if let Some(m) = perf.mu {
                if m >= 0.0 && m.is_finite() {
                    mu = Some(m);
                } else {
                    errors.push(format!("performance.mu: must be >= 0, got {m}"));
                }
            }
        }
    }

    let hook = match &raw.nonlinearity {
        None => Some(NonlinearityHook::none()),
        Some(nl) => {
            let declared = mu.unwrap_or(0.0);
            match nl.kind.as_str() {
                "none" => Some(NonlinearityHook::none()),
                "sin" | "tabulated" => {
                    if mu.is_none() {
                        errors
                            .push("performance.mu: required when a nonlinearity is present".into());
                    }
                    let source = component(nl.source, d, "nonlinearity.source", &mut errors);
                    let target = component(nl.target, d, "nonlinearity.target", &mut errors);
                    match (nl.kind.as_str(), source, target) {
                        ("sin", Some(s), Some(t)) => match nl.scale {
                            Some(scale) if scale.is_finite() => {
                                Some(NonlinearityHook::sin_component(s, t, scale, declared))
                            }
                            _ => {
                                errors.push("nonlinearity.scale: missing or non-finite".into());
                                None
                            }
                        },
                        ("tabulated", Some(s), Some(t)) => {
                            let points = nl.points.clone().unwrap_or_default();
                            match NonlinearityHook::tabulated(
                                s,
                                t,
                                points.iter().map(|p| (p[0], p[1])).collect(),
                                declared,
                            ) {
                                Ok(h) => Some(h),
                                Err(e) => {
                                    errors.push(format!("nonlinearity.points: {e}"));
                                    None
                                }
                            }
                        }
                        _ => None,
                    }
                }
                other => {
                    errors.push(format!("nonlinearity.kind: unknown kind {other:?}"));
                    None
                }
            }
        }
    };

    let mut set = None;
    let mut graph_names = Vec::new();
    let mut interval = 0.0;
    let mut seed = 0;
    match &raw.topology {
        None => errors.push("topology: missing section".into()),
        Some(top) => {
            let dwell_ok = positive(top.dwell, "topology.dwell", &mut errors);
            interval = top.interval.unwrap_or(top.dwell);
            if dwell_ok && !(interval >= top.dwell) {
                errors.push(format!(
                    "topology.interval: {interval} is below dwell time {}",
                    top.dwell
                ));
            }
            seed = top.seed.unwrap_or(0);
            if top.graphs.is_empty() {
                errors.push("topology.graphs: at least one graph is required".into());
            }
            let mut graphs = Vec::new();
            for (g, raw_graph) in top.graphs.iter().enumerate() {
                let field = format!("topology.graphs[{}]", g + 1);
                graph_names.push(
                    raw_graph
                        .name
                        .clone()
                        .unwrap_or_else(|| format!("G{}", g + 1)),
                );
                let Some(n) = agents else { continue };
                let mut edges = Vec::new();
                for e in &raw_graph.edges {
                    if e[0] < 1 || e[1] < 1 {
                        errors.push(format!(
                            "{field}.edges: node indices are 1-based, got {:?}",
                            e
                        ));
                    } else {
                        edges.push([e[0] as usize, e[1] as usize]);
                    }
                }
                match Graph::from_one_based(n, &edges) {
                    Ok(graph) if graph::is_connected(&graph) => graphs.push(graph),
                    Ok(_) => errors.push(format!("{field}: graph is not connected")),
                    Err(e) => errors.push(format!("{field}: {e}")),
                }
            }
            if dwell_ok && !graphs.is_empty() && graphs.len() == top.graphs.len() {
                match SwitchingSet::new(graphs, top.dwell) {
                    Ok(s) => set = Some(s),
                    Err(e) => errors.push(format!("topology: {e}")),
                }
            }
        }
    }

    let initial = match &raw.initial {
        None => {
            errors.push("initial: missing section".into());
            None
        }
        Some(init) => {
            let m = matrix(&init.states, "initial.states", &mut errors);
            if let Some(m) = &m {
                if let Some(n) = agents {
                    if m.nrows() != n {
                        errors.push(format!("initial.states: {} rows for {n} agents", m.nrows()));
                    }
                }
                if let Some(d) = d {
                    if m.ncols() != d {
                        errors.push(format!(
                            "initial.states: {} columns for state dimension {d}",
                            m.ncols()
                        ));
                    }
                }
            }
            m
        }
    };

    let mut integrator = IntegratorConfig::default();
    if let Some(i) = &raw.integrator {
        if let Some(step) = i.step {
            if positive(step, "integrator.step", &mut errors) {
                integrator.step = step;
            }
        }
        if let Some(h) = i.horizon {
            if positive(h, "integrator.horizon", &mut errors) {
                integrator.horizon = h;
            }
        }
    }
    if let Some(s) = &set {
        if integrator.step > s.dwell() {
            errors.push(format!(
                "integrator.step: {} exceeds dwell time {}",
                integrator.step,
                s.dwell()
            ));
        }
    }

    match (errors.is_empty(), plant, q, design, hook, set, initial) {
        (true, Some(plant), Some(q), Some(design), Some(hook), Some(set), Some(initial)) => {
            Ok(Scenario {
                name,
                plant,
                q,
                design,
                mu,
                hook,
                set,
                graph_names,
                interval,
                seed,
                initial,
                integrator,
            })
        }
        _ => Err(Error::Validation(errors)),
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    Scenario::from_toml(&text, path)
}

/// Source text of a bundled scenario.
pub fn bundled_text(name: &str) -> Option<&'static str> {
    match name {
        "example1" => Some(EXAMPLE1),
        "example2" => Some(EXAMPLE2),
        _ => None,
    }
}

pub fn bundled(name: &str) -> Result<Scenario> {
    let text = bundled_text(name)
        .ok_or_else(|| Error::InvalidArgument(format!("no bundled scenario named {name:?}")))?;
    Scenario::from_toml(text, Path::new(name))
}

/// Resolves a path, then `$ADCONS_SCENARIO_DIR/<name>.toml`, then the bundled
/// scenarios.
pub fn resolve(name_or_path: &str) -> Result<Scenario> {
    let direct = PathBuf::from(name_or_path);
    if direct.is_file() {
        return load_scenario(direct);
    }
    if let Some(dir) = std::env::var_os(SCENARIO_DIR_ENV) {
        let candidate = Path::new(&dir).join(format!("{name_or_path}.toml"));
        if candidate.is_file() {
            return load_scenario(candidate);
        }
    }
    bundled(name_or_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_example1() {
        let s = bundled("example1").unwrap();
        assert_eq!(s.agent_count(), 6);
        assert_eq!(s.state_dim(), 4);
        assert_eq!(s.design, Design::Gamma(5.0));
        assert_eq!(s.plant.b().as_slice(), &[0.0, 1.5, 0.0, 0.0]);
        assert_eq!(s.mode(), Mode::Linear);
        assert!(s.hook.is_none());
        assert_eq!(s.set.len(), 4);
        assert_eq!(s.set.dwell(), 0.5);
    }

    #[test]
    fn bundled_example2() {
        let s = bundled("example2").unwrap();
        assert_eq!(s.design, Design::Eps(5.0));
        assert_eq!(s.mu, Some(0.0333));
        assert_eq!(
            s.hook,
            NonlinearityHook::sin_component(2, 3, -0.0333, 0.0333)
        );
        assert_eq!(s.mode(), Mode::Lipschitz);
    }

    #[test]
    fn reports_every_violation() {
        let text = r#"
agents = 1
[plant]
a = [[0.0, 1.0], [0.0]]
b = [[0.0], [1.0]]
[performance]
q = [[1.0, 0.0], [0.0, -1.0]]
gamma = 1.0
[topology]
dwell = 0.5
graphs = [{ edges = [[1, 2]] }]
[initial]
states = [[1.0, 2.0]]
"#;
        let Err(Error::Validation(errors)) = Scenario::from_toml(text, Path::new("bad.toml"))
        else {
            panic!("expected validation failure");
        };
        let joined = errors.join("\n");
        assert!(
            joined.contains("agents: need at least 2 agents"),
            "{joined}"
        );
        assert!(joined.contains("plant.a: row 2"), "{joined}");
        assert!(joined.contains("Q not positive definite"), "{joined}");
    }

    #[test]
    fn disconnected_graph_rejected() {
        let text = bundled_text("example1").unwrap().replace(
            "[[1, 2], [2, 3], [3, 4], [4, 5], [5, 6], [6, 1]]",
            "[[1, 2], [3, 4], [5, 6]]",
        );
        let Err(Error::Validation(errors)) = Scenario::from_toml(&text, Path::new("x")) else {
            panic!("expected validation failure");
        };
        assert!(
            errors.iter().any(|e| e.contains("not connected")),
            "{errors:?}"
        );
    }

    #[test]
    fn syntax_error_is_parse_error() {
        assert!(matches!(
            Scenario::from_toml("agents = [", Path::new("x")),
            Err(Error::Parse { .. })
        ));
    }
}
