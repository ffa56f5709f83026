//! Cost functional, guaranteed-cost bound and trace diagnostics.
//!
//! Most quantities are quadratic forms `xᵀ(L_N ⊗ M)x` with the complete-graph
//! projection `L_N = I − 𝟙𝟙ᵀ/N`. They are evaluated as
//! `Σ_i (x_i − x̄)ᵀ M (x_i − x̄)` without forming the Kronecker product.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph;
use crate::protocol::NonlinearityHook;
use crate::riccati::GainSet;
use crate::simulator::Trace;

/// Interior increases of `V` above this are reported as violations.
pub const LYAPUNOV_TOL: f64 = 1e-6;

/// Added to the observed weight maxima when they stand in for the weight bounds.
pub const WEIGHT_BOUND_PAD: f64 = 1e-9;

fn agent_dim(x: &DVector<f64>, n: usize) -> Result<usize> {
    if n == 0 || !x.len().is_multiple_of(n) {
        return Err(Error::DimensionMismatch(format!(
            "state of length {} for {n} agents",
            x.len()
        )));
    }
    Ok(x.len() / n)
}

/// Deviations `x_i − x̄`, formed relative to agent 0 so that a consensus
/// state gives exact zeros.
fn deviations(x: &DVector<f64>, n: usize, d: usize) -> Vec<DVector<f64>> {
    let x0 = x.rows(0, d).into_owned();
    let rel: Vec<DVector<f64>> = (0..n).map(|i| x.rows(i * d, d) - &x0).collect();
    let mut shift = DVector::zeros(d);
    for r in &rel {
        shift += r;
    }
    shift /= n as f64;
    rel.into_iter().map(|r| r - &shift).collect()
}

/// `xᵀ(L_N ⊗ M)x`.
pub fn projected_quadratic(x: &DVector<f64>, m: &DMatrix<f64>, n: usize) -> Result<f64> {
    let d = agent_dim(x, n)?;
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} weight for d = {d}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(deviations(x, n, d).iter().map(|e| (m * e).dot(e)).sum())
}

/// Instantaneous cost `xᵀ(2L_N ⊗ Q)x`.
pub fn cost_rate(x: &DVector<f64>, q: &DMatrix<f64>, n: usize) -> Result<f64> {
    Ok(2.0 * projected_quadratic(x, q, n)?)
}

/// Same quantity as [`cost_rate`] evaluated as `(1/N) Σ_i Σ_k (x_k − x_i)ᵀQ(x_k − x_i)`.
pub fn cost_rate_pairwise(x: &DVector<f64>, q: &DMatrix<f64>, n: usize) -> Result<f64> {
    let d = agent_dim(x, n)?;
    if q.nrows() != d || q.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} weight for d = {d}",
            q.nrows(),
            q.ncols()
        )));
    }
    let mut total = 0.0;
    for (i, k) in graph::pairs(n) {
        let e = x.rows(k * d, d) - x.rows(i * d, d);
        total += 2.0 * (q * &e).dot(&e);
    }
    Ok(total / n as f64)
}

/// `√(xᵀ(L_N ⊗ I)x)`: zero exactly when all agents agree.
pub fn disagreement_norm(x: &DVector<f64>, n: usize) -> Result<f64> {
    let d = agent_dim(x, n)?;
    Ok(deviations(x, n, d)
        .iter()
        .map(|e| e.norm_squared())
        .sum::<f64>()
        .sqrt())
}

/// Splits `x` into its consensus part `(𝟙𝟙ᵀ/N ⊗ I)x` and the remainder.
pub fn disagreement_decomposition(
    x: &DVector<f64>,
    n: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let d = agent_dim(x, n)?;
    let mut rest = DVector::zeros(x.len());
    for (i, e) in deviations(x, n, d).into_iter().enumerate() {
        rest.rows_mut(i * d, d).copy_from(&e);
    }
    let xc = x - &rest;
    Ok((xc, rest))
}

/// Largest pairwise distance `max_{i,k} ‖x_i − x_k‖`.
pub fn max_pairwise_difference(x: &DVector<f64>, n: usize) -> Result<f64> {
    let d = agent_dim(x, n)?;
    Ok(graph::pairs(n)
        .map(|(i, k)| (x.rows(i * d, d) - x.rows(k * d, d)).norm())
        .fold(0.0, f64::max))
}

/// Trapezoid integral of the cost rate along the trace.
pub fn cumulative_cost(trace: &Trace) -> Result<Vec<f64>> {
    let n = trace.agent_count();
    let mut out = Vec::with_capacity(trace.samples.len());
    let mut prev: Option<(f64, f64)> = None;
    let mut acc = 0.0;
    for s in &trace.samples {
        let r = cost_rate(&s.x, &trace.q, n)?;
        if let Some((t0, r0)) = prev {
            acc += 0.5 * (s.t - t0) * (r0 + r);
        }
        out.push(acc);
        prev = Some((s.t, r));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub jx_final: f64,
    /// `xᵀ(0)(L_N ⊗ R)x(0)`.
    pub j_star_initial: f64,
    /// `γ ∫ xᵀ(L_N ⊗ K_w)x dt` truncated at the horizon.
    pub j_star_integral: f64,
    pub j_star: f64,
    /// Rough size of the integral beyond the horizon (last integrand value
    /// times its fitted decay time); not included in `j_star`.
    pub tail_estimate: f64,
    pub horizon: f64,
    pub satisfied: bool,
    /// `j_star − jx_final`.
    pub margin: f64,
}

fn tail_estimate(times: &[f64], rates: &[f64]) -> f64 {
    let (Some(&t1), Some(&r1)) = (times.last(), rates.last()) else {
        return 0.0;
    };
    if r1 == 0.0 {
        return 0.0;
    }
    let target = times[0] + 0.75 * (t1 - times[0]);
    let j = times.partition_point(|&t| t < target).min(times.len() - 1);
    let (t0, r0) = (times[j], rates[j]);
    if !(r0 > r1) || t1 <= t0 {
        return f64::INFINITY;
    }
    let tau = (t1 - t0) / (r0 / r1).ln();
    r1 * tau
}

/// `J* = J*_{x(0)} + J*_{x(t)}` for the trace, compared with its `J_x`.
pub fn guaranteed_cost_bound(trace: &Trace, gains: &GainSet) -> Result<CostReport> {
    let n = trace.agent_count();
    let d = trace.state_dim;
    if gains.state_dim() != d || gains.kw.nrows() != d {
        return Err(Error::DimensionMismatch(format!(
            "gains of dimension {} for a trace with d = {d}",
            gains.state_dim()
        )));
    }
    let first = trace
        .samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty trace".into()))?;
    let j_star_initial = projected_quadratic(&first.x, &gains.certificate, n)?;

    let mut times = Vec::with_capacity(trace.samples.len());
    let mut rates = Vec::with_capacity(trace.samples.len());
    for s in &trace.samples {
        times.push(s.t);
        rates.push(gains.gamma * projected_quadratic(&s.x, &gains.kw, n)?);
    }
    let j_star_integral: f64 = times
        .windows(2)
        .zip(rates.windows(2))
        .map(|(t, r)| 0.5 * (t[1] - t[0]) * (r[0] + r[1]))
        .sum();
    let j_star = j_star_initial + j_star_integral;
    let jx_final = cumulative_cost(trace)?.last().copied().unwrap_or(0.0);
    Ok(CostReport {
        jx_final,
        j_star_initial,
        j_star_integral,
        j_star,
        tail_estimate: tail_estimate(&times, &rates),
        horizon: trace.horizon(),
        satisfied: jx_final <= j_star,
        margin: j_star - jx_final,
    })
}

/// Per-pair maximum weight over the trace, padded by [`WEIGHT_BOUND_PAD`].
pub fn weight_maxima(trace: &Trace) -> Vec<f64> {
    let pairs = graph::pair_count(trace.agent_count());
    let mut out = vec![f64::NEG_INFINITY; pairs];
    for s in &trace.samples {
        for (m, &w) in out.iter_mut().zip(s.weights.values()) {
            *m = m.max(w);
        }
    }
    out.iter().map(|m| m + WEIGHT_BOUND_PAD).collect()
}

/// Lyapunov candidate
/// `V = xᵀ(L_N ⊗ R)x + Σ_{edges}(w − 1)² + (2γ/N) Σ_{pairs}(γ_ik − w_ik)`
/// evaluated at every sample with the graph active at that time.
pub fn lyapunov_series(trace: &Trace, gamma_estimates: &[f64]) -> Result<Vec<f64>> {
    let n = trace.agent_count();
    if gamma_estimates.len() != graph::pair_count(n) {
        return Err(Error::DimensionMismatch(format!(
            "{} weight bounds for {} pairs",
            gamma_estimates.len(),
            graph::pair_count(n)
        )));
    }
    let gamma = trace.gains.gamma;
    let mut out = Vec::with_capacity(trace.samples.len());
    for s in &trace.samples {
        let g = trace.set.graph(trace.schedule.index_at(s.t));
        let v1 = projected_quadratic(&s.x, &trace.gains.certificate, n)?;
        let v2: f64 = g
            .edges()
            .map(|(i, k)| (s.weights.get(i, k) - 1.0).powi(2))
            .sum();
        let v3: f64 = gamma_estimates
            .iter()
            .zip(s.weights.values())
            .map(|(b, w)| b - w)
            .sum();
        out.push(v1 + v2 + 2.0 * gamma / n as f64 * v3);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    pub values: Vec<f64>,
    /// Largest increase between consecutive samples of one segment.
    pub max_interior_increase: f64,
    /// `(t_start, t_end, increase)` for interior increases above [`LYAPUNOV_TOL`].
    pub violations: Vec<(f64, f64, f64)>,
    /// `(t, jump)` across each switch instant.
    pub jumps: Vec<(f64, f64)>,
}

impl LyapunovReport {
    pub fn non_increasing(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn lyapunov_diagnostic(trace: &Trace, gamma_estimates: &[f64]) -> Result<LyapunovReport> {
    let values = lyapunov_series(trace, gamma_estimates)?;
    let mut max_interior_increase = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    let mut jumps = Vec::new();
    for (j, w) in trace.samples.windows(2).enumerate() {
        let dv = values[j + 1] - values[j];
        if trace.segment_of(w[0].t) != trace.segment_of(w[1].t) {
            jumps.push((w[1].t, dv));
            continue;
        }
        max_interior_increase = max_interior_increase.max(dv);
        if dv > LYAPUNOV_TOL {
            violations.push((w[0].t, w[1].t, dv));
        }
    }
    Ok(LyapunovReport {
        values,
        max_interior_increase,
        violations,
        jumps,
    })
}

/// Post-hoc diagnostics for a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceAnalysis {
    pub disagreement: Vec<f64>,
    pub lyapunov: LyapunovReport,
    pub weight_maxima: Vec<f64>,
    pub cost: CostReport,
}

pub fn analyze_trace(trace: &Trace) -> Result<TraceAnalysis> {
    let weight_maxima = weight_maxima(trace);
    Ok(TraceAnalysis {
        disagreement: trace.samples.iter().map(|s| s.disagreement).collect(),
        lyapunov: lyapunov_diagnostic(trace, &weight_maxima)?,
        cost: guaranteed_cost_bound(trace, &trace.gains)?,
        weight_maxima,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzReport {
    pub max_ratio: f64,
    /// `max_ratio / μ` (0 when both vanish, infinite if `μ = 0` is violated).
    pub margin: f64,
    pub passed: bool,
}

/// Estimates the Lipschitz constant of `hook` on `R^d` from seeded samples
/// (random far pairs plus short axis-aligned displacements) and checks it
/// against `mu`.
pub fn verify_lipschitz(
    hook: &NonlinearityHook,
    d: usize,
    mu: f64,
    samples: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    if !(mu >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Lipschitz constant must be >= 0, got {mu}"
        )));
    }
    hook.check_dim(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    let mut ratio = |x: &[f64], y: &[f64]| {
        let fx = hook.eval(x);
        let fy = hook.eval(y);
        let num: f64 = fx
            .iter()
            .zip(&fy)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        if den > 0.0 {
            max_ratio = max_ratio.max(num / den);
        }
    };
    for s in 0..samples {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = if s % 2 == 0 {
            (0..d).map(|_| rng.random_range(-10.0..10.0)).collect()
        } else {
            let axis = rng.random_range(0..d);
            let step = 10f64.powf(rng.random_range(-6.0..0.0));
            let mut y = x.clone();
            y[axis] += step;
            y
        };
        ratio(&x, &y);
    }
    for axis in 0..d {
        let x = vec![0.0; d];
        let mut y = x.clone();
        y[axis] = 1e-6;
        ratio(&x, &y);
    }
    let margin = if mu > 0.0 {
        max_ratio / mu
    } else if max_ratio == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(LipschitzReport {
        max_ratio,
        margin,
        passed: max_ratio <= mu * (1.0 + 1e-9),
    })
}
