//! The adaptive consensus protocol.
//!
//! Agent `i` applies `u_i = K_u Σ_{k ∈ N_i} w_ik (x_k − x_i)` over its current
//! neighbours, while every pair weight (edge or not) adapts as
//! `ẇ_ik = (x_k − x_i)ᵀ K_w (x_k − x_i)`. A pair that becomes an edge at a
//! switch restarts from weight 1.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{self, Graph, WeightState};
use crate::linalg;
use crate::riccati::GainSet;

/// What kind of drift `f(x_i)` is added to each agent.
#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearityKind {
    None,
    /// `f(x)_target = scale · sin(x_source)`, all other components zero.
    SinComponent {
        source: usize,
        target: usize,
        scale: f64,
    },
    /// `f(x)_target = table(x_source)`, piecewise-linear through `points`
    /// (ascending abscissae), constant outside the table.
    Tabulated {
        source: usize,
        target: usize,
        points: Vec<(f64, f64)>,
    },
}

/// Agent drift term together with its declared Lipschitz constant.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearityHook {
    pub kind: NonlinearityKind,
    pub mu: f64,
}

impl NonlinearityHook {
    pub fn none() -> Self {
        Self {
            kind: NonlinearityKind::None,
            mu: 0.0,
        }
    }

    /// Zero-based component indices.
    pub fn sin_component(source: usize, target: usize, scale: f64, mu: f64) -> Self {
        Self {
            kind: NonlinearityKind::SinComponent {
                source,
                target,
                scale,
            },
            mu,
        }
    }

    pub fn tabulated(
        source: usize,
        target: usize,
        points: Vec<(f64, f64)>,
        mu: f64,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument(
                "tabulated nonlinearity needs at least one point".into(),
            ));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidArgument(
                "tabulated abscissae must be strictly ascending".into(),
            ));
        }
        Ok(Self {
            kind: NonlinearityKind::Tabulated {
                source,
                target,
                points,
            },
            mu,
        })
    }

    pub fn is_none(&self) -> bool {
        matches!(self.kind, NonlinearityKind::None)
    }

    /// Checks that component indices fit a state of dimension `d`.
    pub fn check_dim(&self, d: usize) -> Result<()> {
        let (source, target) = match &self.kind {
            NonlinearityKind::None => return Ok(()),
            NonlinearityKind::SinComponent { source, target, .. } => (*source, *target),
            NonlinearityKind::Tabulated { source, target, .. } => (*source, *target),
        };
        if source >= d || target >= d {
            return Err(Error::DimensionMismatch(format!(
                "nonlinearity components ({}, {}) outside state dimension {d}",
                source + 1,
                target + 1
            )));
        }
        Ok(())
    }

    /// Writes `f(x)` into `out` (same length as `x`).
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match &self.kind {
            NonlinearityKind::None => {}
            NonlinearityKind::SinComponent {
                source,
                target,
                scale,
            } => {
                out[*target] = scale * x[*source].sin();
            }
            NonlinearityKind::Tabulated {
                source,
                target,
                points,
            } => {
                out[*target] = interpolate(points, x[*source]);
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.eval_into(x, &mut out);
        out
    }
}

fn interpolate(points: &[(f64, f64)], s: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if s <= first.0 {
        return first.1;
    }
    if s >= last.0 {
        return last.1;
    }
    let hi = points.partition_point(|p| p.0 <= s);
    let (x0, y0) = points[hi - 1];
    let (x1, y1) = points[hi];
    y0 + (y1 - y0) * (s - x0) / (x1 - x0)
}

/// Stacked agent states plus all pair weights at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    /// `[x_1ᵀ, …, x_Nᵀ]ᵀ`.
    pub x: DVector<f64>,
    pub weights: WeightState,
    d: usize,
}

impl SystemState {
    /// Initial state with all weights at 1. `states` holds one agent per row.
    pub fn initial(states: &DMatrix<f64>) -> Result<Self> {
        let n = states.nrows();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 agents, got {n}"
            )));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "initial states must be finite".into(),
            ));
        }
        Ok(Self {
            t: 0.0,
            x: linalg::stack_rows(states),
            weights: WeightState::ones(n),
            d: states.ncols(),
        })
    }

    pub fn new(t: f64, x: DVector<f64>, weights: WeightState, d: usize) -> Result<Self> {
        let n = weights.node_count();
        if d == 0 || x.len() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "state vector of length {} for {n} agents of dimension {d}",
                x.len()
            )));
        }
        Ok(Self { t, x, weights, d })
    }

    pub fn agent_count(&self) -> usize {
        self.weights.node_count()
    }

    pub fn state_dim(&self) -> usize {
        self.d
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.x.as_slice()[i * self.d..(i + 1) * self.d]
    }

    /// Agent states as an `N × d` matrix.
    pub fn agent_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.agent_count(), self.d, self.x.as_slice())
    }
}

/// Time derivative of the coupled state/weight system.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub dx: DVector<f64>,
    pub dw: Vec<f64>,
}

fn check_graph(state: &SystemState, graph: &Graph) -> Result<()> {
    if graph.node_count() != state.agent_count() {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} nodes, state has {} agents",
            graph.node_count(),
            state.agent_count()
        )));
    }
    Ok(())
}

/// Stacked control inputs `u` (length `N·p`).
pub fn control_inputs(
    state: &SystemState,
    graph: &Graph,
    ku: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    check_graph(state, graph)?;
    let d = state.d;
    if ku.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "K_u has {} columns, d = {d}",
            ku.ncols()
        )));
    }
    let n = state.agent_count();
    let p = ku.nrows();
    let mut u = DVector::zeros(n * p);
    let mut acc = DVector::zeros(d);
    for i in 0..n {
        acc.fill(0.0);
        let xi = state.agent(i);
        for k in graph.neighbors(i) {
            let w = state.weights.get(i, k);
            let xk = state.agent(k);
            for j in 0..d {
                acc[j] += w * (xk[j] - xi[j]);
            }
        }
        let ui = ku * &acc;
        u.rows_mut(i * p, p).copy_from(&ui);
    }
    Ok(u)
}

/// Checks that `K_w` is symmetric positive-semidefinite.
pub fn check_adaptation_gain(kw: &DMatrix<f64>) -> Result<()> {
    if !kw.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "K_w is {}x{}",
            kw.nrows(),
            kw.ncols()
        )));
    }
    if !linalg::is_symmetric(kw, linalg::SYMMETRY_TOL) {
        return Err(Error::NotSymmetric);
    }
    let floor = -1e-12 * (1.0 + kw.amax());
    if linalg::min_eigenvalue(kw) < floor {
        return Err(Error::InvalidArgument(
            "K_w is not positive semidefinite".into(),
        ));
    }
    Ok(())
}

fn pair_rates(state: &SystemState, kw: &DMatrix<f64>) -> Vec<f64> {
    let n = state.agent_count();
    let d = state.d;
    let mut diff = DVector::zeros(d);
    graph::pairs(n)
        .map(|(i, k)| {
            let xi = state.agent(i);
            let xk = state.agent(k);
            for j in 0..d {
                diff[j] = xk[j] - xi[j];
            }
            (kw * &diff).dot(&diff)
        })
        .collect()
}

/// `ẇ_ik` for every unordered pair, in lexicographic pair order.
pub fn weight_rates(state: &SystemState, kw: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_adaptation_gain(kw)?;
    if kw.nrows() != state.d {
        return Err(Error::DimensionMismatch(format!(
            "K_w is {}x{}, d = {}",
            kw.nrows(),
            kw.ncols(),
            state.d
        )));
    }
    Ok(pair_rates(state, kw))
}

/// `ẋ_i = A x_i + f(x_i) + B u_i` and the weight rates.
pub fn system_derivative(
    state: &SystemState,
    graph: &Graph,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    gains: &GainSet,
    hook: &NonlinearityHook,
) -> Result<Derivative> {
    let d = state.d;
    if a.nrows() != d || b.nrows() != d || gains.ku.nrows() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "plant ({}x{}, {}x{}) and K_u {}x{} inconsistent with d = {d}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            gains.ku.nrows(),
            gains.ku.ncols()
        )));
    }
    let u = control_inputs(state, graph, &gains.ku)?;
    let n = state.agent_count();
    let p = b.ncols();
    let mut dx = DVector::zeros(n * d);
    let mut fx = vec![0.0; d];
    for i in 0..n {
        let xi = DVector::from_column_slice(state.agent(i));
        let mut row = a * &xi + b * u.rows(i * p, p);
        if !hook.is_none() {
            hook.eval_into(xi.as_slice(), &mut fx);
            for j in 0..d {
                row[j] += fx[j];
            }
        }
        dx.rows_mut(i * d, d).copy_from(&row);
    }
    Ok(Derivative {
        dx,
        dw: pair_rates(state, &gains.kw),
    })
}

/// Linear closed loop in Kronecker form, `(I_N ⊗ A − L_w ⊗ BK_u) x`.
pub fn stacked_linear_derivative(
    state: &SystemState,
    graph: &Graph,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    ku: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    check_graph(state, graph)?;
    let n = state.agent_count();
    let lw = graph::weighted_laplacian(graph, &state.weights)?;
    let op = DMatrix::<f64>::identity(n, n).kronecker(a) - lw.kronecker(&(b * ku));
    Ok(op * &state.x)
}

/// Switch from `old` to `new`: pairs that become edges restart at weight 1;
/// everything else, including the states, is carried over.
pub fn apply_switch(state: &SystemState, old: &Graph, new: &Graph) -> Result<SystemState> {
    if old.node_count() != new.node_count() {
        return Err(Error::DimensionMismatch(format!(
            "switch between graphs on {} and {} nodes",
            old.node_count(),
            new.node_count()
        )));
    }
    check_graph(state, new)?;
    let mut next = state.clone();
    for (i, k) in new.edges() {
        if !old.has_edge(i, k) {
            next.weights.set(i, k, 1.0);
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::Mode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, n: usize, d: usize) -> SystemState {
        let states = DMatrix::from_fn(n, d, |_, _| rng.random_range(-5.0..5.0));
        let mut s = SystemState::initial(&states).unwrap();
        for w in s.weights.values_mut() {
            *w = rng.random_range(1.0..4.0);
        }
        s
    }

    #[test]
    fn consensus_gives_zero_input() {
        let states = DMatrix::from_fn(4, 3, |_, j| j as f64 - 1.0);
        let s = SystemState::initial(&states).unwrap();
        let ku = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        let u = control_inputs(&s, &Graph::complete(4).unwrap(), &ku).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_agent_inputs() {
        let states = DMatrix::from_row_slice(2, 1, &[1.0, 3.0]);
        let mut s = SystemState::initial(&states).unwrap();
        s.weights.set(0, 1, 2.0);
        let u = control_inputs(
            &s,
            &Graph::complete(2).unwrap(),
            &DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        assert_eq!(u.as_slice(), &[4.0, -4.0]);
    }

    #[test]
    fn inputs_sum_to_zero_and_ignore_virtual_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_state(&mut rng, 6, 4);
        let ku = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
        let g = Graph::path(6).unwrap();
        let u = control_inputs(&s, &g, &ku).unwrap();
        let mut total = DVector::zeros(2);
        for i in 0..6 {
            total += u.rows(i * 2, 2);
        }
        assert!(total.amax() < 1e-9);

        let mut s2 = s.clone();
        s2.weights.set(0, 5, 1e6);
        assert_eq!(control_inputs(&s2, &g, &ku).unwrap(), u);
    }

    #[test]
    fn weight_rate_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_state(&mut rng, 6, 4);
        let ku = DMatrix::from_fn(1, 4, |_, _| rng.random_range(-1.0..1.0));
        let kw = ku.transpose() * &ku;
        let rates = weight_rates(&s, &kw).unwrap();
        for ((i, k), r) in graph::pairs(6).zip(&rates) {
            let diff =
                DVector::from_column_slice(s.agent(k)) - DVector::from_column_slice(s.agent(i));
            let direct = (&ku * diff).norm_squared();
            assert!((r - direct).abs() < 1e-12 * (1.0 + direct));
            assert!(*r >= 0.0);
        }
        let same = SystemState::initial(&DMatrix::from_element(3, 2, 1.5)).unwrap();
        assert!(weight_rates(&same, &DMatrix::identity(2, 2))
            .unwrap()
            .iter()
            .all(|&r| r == 0.0));
    }

    #[test]
    fn weight_rates_reject_indefinite_gain() {
        let s = SystemState::initial(&DMatrix::from_element(3, 2, 1.0)).unwrap();
        let kw = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(weight_rates(&s, &kw).is_err());
    }

    #[test]
    fn consensus_state_derivative() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.5]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let gains = GainSet {
            ku: DMatrix::from_row_slice(1, 2, &[0.3, 0.7]),
            kw: DMatrix::from_row_slice(1, 2, &[0.3, 0.7]).transpose()
                * DMatrix::from_row_slice(1, 2, &[0.3, 0.7]),
            certificate: DMatrix::identity(2, 2),
            gamma: 1.0,
            mode: Mode::Linear,
            mu: 0.0,
        };
        let c = DVector::from_vec(vec![1.0, -2.0]);
        let states = DMatrix::from_fn(5, 2, |_, j| c[j]);
        let s = SystemState::initial(&states).unwrap();
        let der = system_derivative(
            &s,
            &Graph::ring(5).unwrap(),
            &a,
            &b,
            &gains,
            &NonlinearityHook::none(),
        )
        .unwrap();
        let ac = &a * &c;
        for i in 0..5 {
            assert_eq!(der.dx.rows(i * 2, 2).into_owned(), ac);
        }
        assert!(der.dw.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn agentwise_matches_stacked() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_state(&mut rng, 6, 4);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-2.0..2.0));
        let b = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
        let ku = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
        let gains = GainSet {
            kw: ku.transpose() * &ku,
            ku,
            certificate: DMatrix::identity(4, 4),
            gamma: 1.0,
            mode: Mode::Linear,
            mu: 0.0,
        };
        let g = Graph::ring(6).unwrap();
        let agentwise =
            system_derivative(&s, &g, &a, &b, &gains, &NonlinearityHook::none()).unwrap();
        let stacked = stacked_linear_derivative(&s, &g, &a, &b, &gains.ku).unwrap();
        assert!((agentwise.dx - stacked).amax() < 1e-10);
    }

    #[test]
    fn sine_hook_vector_field() {
        let mu = 0.0333;
        let hook = NonlinearityHook::sin_component(2, 3, -mu, mu);
        let f = hook.eval(&[1.0, 2.0, 0.7, -4.0]);
        assert_eq!(f[..3], [0.0, 0.0, 0.0]);
        assert!((f[3] + mu * 0.7f64.sin()).abs() < 1e-15);
        assert!(hook.check_dim(4).is_ok());
        assert!(hook.check_dim(3).is_err());
    }

    #[test]
    fn tabulated_hook_interpolates() {
        let hook =
            NonlinearityHook::tabulated(0, 1, vec![(-1.0, -2.0), (0.0, 0.0), (1.0, 1.0)], 2.0)
                .unwrap();
        assert_eq!(hook.eval(&[0.5, 9.0]), vec![0.0, 0.5]);
        assert_eq!(hook.eval(&[-0.5, 9.0]), vec![0.0, -1.0]);
        assert_eq!(hook.eval(&[7.0, 9.0]), vec![0.0, 1.0]);
        assert!(NonlinearityHook::tabulated(0, 1, vec![(1.0, 0.0), (0.0, 0.0)], 1.0).is_err());
    }

    #[test]
    fn switch_resets_only_new_edges() {
        let states = DMatrix::from_fn(4, 1, |i, _| i as f64);
        let mut s = SystemState::initial(&states).unwrap();
        s.weights.set(0, 1, 3.7);
        s.weights.set(1, 2, 2.5);
        s.weights.set(2, 3, 1.8);
        let old = Graph::new(4, [(1, 2), (2, 3)]).unwrap();
        let new = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        let same = apply_switch(&s, &old, &old).unwrap();
        assert_eq!(same, s);
        let next = apply_switch(&s, &old, &new).unwrap();
        assert_eq!(next.weights.get(0, 1), 1.0);
        assert_eq!(next.weights.get(1, 2), 2.5);
        assert_eq!(next.weights.get(2, 3), 1.8);
        assert_eq!(next.x, s.x);
        assert!(apply_switch(&s, &old, &Graph::path(5).unwrap()).is_err());
    }
}
