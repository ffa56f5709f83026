//! Fixed-step RK4 integration of the coupled state/weight dynamics.
//!
//! Steps never straddle a switch: each segment is covered by steps of length
//! `h` with the last one shortened to land on the next switch instant, where
//! the reset rule is applied before integration resumes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{SwitchingSchedule, SwitchingSet, WeightState};
use crate::performance;
use crate::protocol::{self, Derivative, NonlinearityHook, SystemState};
use crate::riccati::{GainSet, PlantModel};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub step: f64,
    pub horizon: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            horizon: DEFAULT_HORIZON,
        }
    }
}

impl IntegratorConfig {
    pub fn new(step: f64, horizon: f64) -> Result<Self> {
        let cfg = Self { step, horizon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "step must be > 0, got {}",
                self.step
            )));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "horizon must be > 0, got {}",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// One accepted integration point.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: DVector<f64>,
    pub weights: WeightState,
    pub cost_rate: f64,
    /// Cumulative cost `J_x(t)` (trapezoid rule).
    pub jx: f64,
    pub disagreement: f64,
}

/// Simulation output plus everything needed to re-analyse it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub samples: Vec<Sample>,
    pub set: SwitchingSet,
    pub schedule: SwitchingSchedule,
    pub gains: GainSet,
    pub q: DMatrix<f64>,
    pub state_dim: usize,
    pub seed: Option<u64>,
}

impl Trace {
    pub fn agent_count(&self) -> usize {
        self.set.node_count()
    }

    pub fn horizon(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Index of the switch-free segment containing `t` (switch instants open
    /// the next segment).
    pub fn segment_of(&self, t: f64) -> usize {
        self.schedule
            .breakpoints()
            .partition_point(|&b| b <= t)
            .saturating_sub(1)
    }

    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("trace has at least one sample")
    }
}

/// Everything `simulate` needs.
#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub plant: PlantModel,
    pub gains: GainSet,
    pub hook: NonlinearityHook,
    pub set: SwitchingSet,
    pub schedule: SwitchingSchedule,
    /// One agent per row.
    pub initial: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub config: IntegratorConfig,
    pub seed: Option<u64>,
}

fn check_finite(d: &Derivative, t: f64) -> Result<()> {
    if d.dx.iter().chain(d.dw.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { t })
    }
}

fn offset(state: &SystemState, d: &Derivative, c: f64, dt: f64) -> Result<SystemState> {
    let x = &state.x + &d.dx * c;
    let mut weights = state.weights.clone();
    for (w, r) in weights.values_mut().iter_mut().zip(&d.dw) {
        *w += c * r;
    }
    SystemState::new(state.t + dt, x, weights, state.state_dim())
}

/// One classical RK4 step of length `h` applied jointly to states and weights.
pub fn rk4_step<F>(f: F, state: &SystemState, h: f64) -> Result<SystemState>
where
    F: Fn(&SystemState) -> Result<Derivative>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {h}")));
    }
    let k1 = f(state)?;
    check_finite(&k1, state.t)?;
    let s2 = offset(state, &k1, 0.5 * h, 0.5 * h)?;
    let k2 = f(&s2)?;
    check_finite(&k2, s2.t)?;
    let s3 = offset(state, &k2, 0.5 * h, 0.5 * h)?;
    let k3 = f(&s3)?;
    check_finite(&k3, s3.t)?;
    let s4 = offset(state, &k3, h, h)?;
    let k4 = f(&s4)?;
    check_finite(&k4, s4.t)?;

    let c = h / 6.0;
    let dx = (&k1.dx + &k2.dx * 2.0 + &k3.dx * 2.0 + &k4.dx) * c;
    let mut next = state.clone();
    next.x += dx;
    for (j, w) in next.weights.values_mut().iter_mut().enumerate() {
        *w += c * (k1.dw[j] + 2.0 * k2.dw[j] + 2.0 * k3.dw[j] + k4.dw[j]);
    }
    next.t = state.t + h;
    if next
        .x
        .iter()
        .chain(next.weights.values())
        .any(|v| !v.is_finite())
    {
        return Err(Error::Divergence { t: next.t });
    }
    Ok(next)
}

/// Integrates the closed loop over `[0, horizon]` along the schedule.
pub fn simulate(setup: &SimulationSetup) -> Result<Trace> {
    setup.config.validate()?;
    let n = setup.initial.nrows();
    let d = setup.plant.state_dim();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 agents, got {n}"
        )));
    }
    if setup.initial.ncols() != d || setup.gains.state_dim() != d || setup.q.nrows() != d {
        return Err(Error::DimensionMismatch(format!(
            "initial states {}x{}, gains d = {}, Q {}x{}, plant d = {d}",
            setup.initial.nrows(),
            setup.initial.ncols(),
            setup.gains.state_dim(),
            setup.q.nrows(),
            setup.q.ncols()
        )));
    }
    if setup.set.node_count() != n {
        return Err(Error::DimensionMismatch(format!(
            "graphs have {} nodes, {n} agents given",
            setup.set.node_count()
        )));
    }
    setup.hook.check_dim(d)?;
    protocol::check_adaptation_gain(&setup.gains.kw)?;

    let h = setup.config.step;
    let horizon = setup.config.horizon;
    let a = setup.plant.a();
    let b = setup.plant.b();
    let q = &setup.q;

    let mut state = SystemState::initial(&setup.initial)?;
    let make_sample = |s: &SystemState, jx: f64| -> Result<Sample> {
        Ok(Sample {
            t: s.t,
            x: s.x.clone(),
            weights: s.weights.clone(),
            cost_rate: performance::cost_rate(&s.x, q, n)?,
            jx,
            disagreement: performance::disagreement_norm(&s.x, n)?,
        })
    };

    let segments = setup.schedule.segments(horizon);
    let mut samples = vec![make_sample(&state, 0.0)?];
    let mut prev_graph: Option<usize> = None;

    for &(start, end, idx) in &segments {
        let graph = setup.set.graph(idx);
        if let Some(prev) = prev_graph {
            state = protocol::apply_switch(&state, setup.set.graph(prev), graph)?;
            // the switch instant is already sampled; record post-switch weights
            let last = samples.last_mut().expect("non-empty");
            last.weights = state.weights.clone();
        }
        prev_graph = Some(idx);

        let steps = ((end - start) / h - 1e-9).ceil().max(1.0) as usize;
        let field = |s: &SystemState| {
            protocol::system_derivative(s, graph, a, b, &setup.gains, &setup.hook)
        };
        for k in 0..steps {
            let t1 = if k + 1 == steps {
                end
            } else {
                start + (k + 1) as f64 * h
            };
            let dt = t1 - state.t;
            let mut next = rk4_step(field, &state, dt)?;
            next.t = t1;
            let prev = samples.last().expect("non-empty");
            let rate = performance::cost_rate(&next.x, q, n)?;
            let jx = prev.jx + 0.5 * dt * (prev.cost_rate + rate);
            samples.push(make_sample(&next, jx)?);
            state = next;
        }
    }

    Ok(Trace {
        samples,
        set: setup.set.clone(),
        schedule: setup.schedule.clone(),
        gains: setup.gains.clone(),
        q: setup.q.clone(),
        state_dim: d,
        seed: setup.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{self, Graph};
    use crate::riccati::{synthesize_linear, PerformanceSpec};

    fn decay(s: &SystemState) -> Result<Derivative> {
        Ok(Derivative {
            dx: -&s.x,
            dw: vec![0.0; s.weights.values().len()],
        })
    }

    fn scalar(x0: f64) -> SystemState {
        SystemState::new(0.0, DVector::from_vec(vec![x0]), WeightState::ones(1), 1).unwrap()
    }

    fn integrate_decay(h: f64) -> f64 {
        let steps = (1.0 / h).round() as usize;
        let mut s = scalar(1.0);
        for _ in 0..steps {
            s = rk4_step(decay, &s, h).unwrap();
        }
        s.x[0]
    }

    #[test]
    fn rk4_single_step_value() {
        let s = rk4_step(decay, &scalar(1.0), 0.1).unwrap();
        assert!((s.x[0] - 0.9048375).abs() < 1e-12);
        assert!((s.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rk4_zero_field_keeps_state() {
        let s0 = scalar(3.0);
        let zero = |s: &SystemState| {
            Ok(Derivative {
                dx: DVector::zeros(s.x.len()),
                dw: vec![],
            })
        };
        let s1 = rk4_step(zero, &s0, 0.25).unwrap();
        assert_eq!(s1.x, s0.x);
        assert_eq!(s1.t, 0.25);
    }

    #[test]
    fn rk4_fourth_order() {
        let exact = (-1.0f64).exp();
        let e1 = (integrate_decay(0.1) - exact).abs();
        let e2 = (integrate_decay(0.05) - exact).abs();
        assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn rk4_reports_divergence() {
        let bad = |s: &SystemState| {
            Ok(Derivative {
                dx: DVector::from_element(s.x.len(), f64::NAN),
                dw: vec![],
            })
        };
        assert!(matches!(
            rk4_step(bad, &scalar(1.0), 0.1),
            Err(Error::Divergence { .. })
        ));
    }

    fn setup(initial: DMatrix<f64>, horizon: f64) -> SimulationSetup {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let plant = PlantModel::new(a, b).unwrap();
        let q = DMatrix::identity(2, 2) * 0.1;
        let gains =
            synthesize_linear(&plant, &PerformanceSpec::new(q.clone(), 2.0).unwrap()).unwrap();
        let n = initial.nrows();
        let set =
            SwitchingSet::new(vec![Graph::ring(n).unwrap(), Graph::path(n).unwrap()], 0.3).unwrap();
        let schedule = graph::sample_switching_signal(&set, horizon, 0.35, 4).unwrap();
        SimulationSetup {
            plant,
            gains,
            hook: NonlinearityHook::none(),
            set,
            schedule,
            initial,
            q,
            config: IntegratorConfig::new(1e-2, horizon).unwrap(),
            seed: Some(4),
        }
    }

    #[test]
    fn lands_on_switch_instants() {
        let init = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 2.0, 0.5, 0.5, 3.0, -2.0]);
        let trace = simulate(&setup(init, 2.0)).unwrap();
        for &bp in trace.schedule.breakpoints() {
            assert!(
                trace.samples.iter().any(|s| s.t == bp),
                "missing breakpoint {bp}"
            );
        }
        assert!(trace.samples.windows(2).all(|w| w[1].t > w[0].t));
        assert!(trace.samples.windows(2).all(|w| w[1].jx >= w[0].jx));
        assert_eq!(trace.final_sample().t, 2.0);
    }

    #[test]
    fn deterministic() {
        let init = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 2.0, 0.5, 0.5]);
        let a = simulate(&setup(init.clone(), 1.0)).unwrap();
        let b = simulate(&setup(init, 1.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn consensus_start_stays_put() {
        let init = DMatrix::from_row_slice(3, 2, &[1.0, -0.5, 1.0, -0.5, 1.0, -0.5]);
        let trace = simulate(&setup(init, 1.0)).unwrap();
        for s in &trace.samples {
            assert_eq!(s.jx, 0.0);
            assert_eq!(s.disagreement, 0.0);
            assert!(s.weights.values().iter().all(|&w| w == 1.0));
        }
        // rotation plant: mean follows (cos t, -sin t) scaled
        let last = trace.final_sample();
        let t: f64 = last.t;
        let expect = [t.cos() - 0.5 * t.sin(), -t.sin() - 0.5 * t.cos()];
        assert!((last.x[0] - expect[0]).abs() < 1e-8);
        assert!((last.x[1] - expect[1]).abs() < 1e-8);
    }

    #[test]
    fn rejects_single_agent() {
        let mut s = setup(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]), 1.0);
        s.initial = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(simulate(&s).is_err());
    }
}
