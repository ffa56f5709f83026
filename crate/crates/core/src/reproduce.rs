//! Verification of traces and the end-to-end reproduction tables used by the
//! command-line tool.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::performance::{self, CostReport};
use crate::protocol::{self, SystemState};
use crate::riccati::{self, GainSet, LmiMargin, Mode, PlantModel};
use crate::scenario::{self, Design, Scenario};
use crate::simulator::{self, Trace};

/// Reference gains of the first example (γ = 5).
pub const REFERENCE_KU_EXAMPLE1: [f64; 4] = [0.2653, 1.0549, 0.7878, 0.6790];
pub const REFERENCE_KW_EXAMPLE1: [[f64; 4]; 4] = [
    [0.0704, 0.2799, 0.2090, 0.1801],
    [0.2799, 1.1128, 0.8311, 0.7163],
    [0.2090, 0.8311, 0.6207, 0.5349],
    [0.1801, 0.7163, 0.5349, 0.4610],
];
pub const REFERENCE_J_STAR_EXAMPLE1: f64 = 267.9357;
pub const GAIN_TOL: f64 = 5e-4;

/// Reference values of the second example at ε = 5.
pub const REFERENCE_GAMMA_EXAMPLE2: f64 = 21.1207;
pub const REFERENCE_KU_EXAMPLE2: [f64; 4] = [0.0989, 0.6246, 0.5940, 0.4970];
pub const REFERENCE_KW_EXAMPLE2_ROW1: [f64; 4] = [0.0098, 0.0618, 0.0587, 0.0491];

pub const CONSENSUS_TOL: f64 = 1e-3;
pub const INPUT_SUM_TOL: f64 = 1e-9;
pub const STRUCTURE_TOL: f64 = 1e-12;

/// Protocol-level properties of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantReport {
    pub times_increasing: bool,
    pub min_weight: f64,
    pub weights_nondecreasing: bool,
    pub resets_ok: bool,
    pub jx_nondecreasing: bool,
    /// `max_t ‖Σ_i u_i(t)‖_∞` relative to `1 + max_i ‖u_i‖_∞`.
    pub max_input_sum: f64,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.times_increasing
            && self.min_weight >= 1.0
            && self.weights_nondecreasing
            && self.resets_ok
            && self.jx_nondecreasing
            && self.max_input_sum <= INPUT_SUM_TOL
    }
}

pub fn check_invariants(trace: &Trace) -> Result<InvariantReport> {
    let n = trace.agent_count();
    let d = trace.state_dim;
    let p = trace.gains.ku.nrows();
    let mut report = InvariantReport {
        times_increasing: true,
        min_weight: f64::INFINITY,
        weights_nondecreasing: true,
        resets_ok: true,
        jx_nondecreasing: true,
        max_input_sum: 0.0,
    };
    for (j, s) in trace.samples.iter().enumerate() {
        report.min_weight = s
            .weights
            .values()
            .iter()
            .copied()
            .fold(report.min_weight, f64::min);
        let graph = trace.set.graph(trace.schedule.index_at(s.t));
        let state = SystemState::new(s.t, s.x.clone(), s.weights.clone(), d)?;
        let u = protocol::control_inputs(&state, graph, &trace.gains.ku)?;
        let mut total = DVector::zeros(p);
        for i in 0..n {
            total += u.rows(i * p, p);
        }
        let scale = 1.0 + u.amax();
        report.max_input_sum = report.max_input_sum.max(total.amax() / scale);

        if j == 0 {
            continue;
        }
        let prev = &trace.samples[j - 1];
        report.times_increasing &= s.t > prev.t;
        report.jx_nondecreasing &= s.jx >= prev.jx;
        let old_graph = trace.set.graph(trace.schedule.index_at(prev.t));
        let switched = trace.segment_of(prev.t) != trace.segment_of(s.t);
        for (idx, (i, k)) in crate::graph::pairs(n).enumerate() {
            let (w0, w1) = (prev.weights.values()[idx], s.weights.values()[idx]);
            if switched && graph.has_edge(i, k) && !old_graph.has_edge(i, k) {
                report.resets_ok &= w1 == 1.0;
            } else {
                report.weights_nondecreasing &= w1 >= w0;
            }
        }
    }
    Ok(report)
}

/// Largest deviation of the agent average from `x̄(t) = e^{At} x̄(0)`.
pub fn mean_state_error(trace: &Trace, a: &DMatrix<f64>) -> Result<f64> {
    let n = trace.agent_count();
    let d = trace.state_dim;
    if a.nrows() != d {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, d = {d}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mean = |x: &DVector<f64>| {
        let mut m = DVector::zeros(d);
        for i in 0..n {
            m += x.rows(i * d, d);
        }
        m / n as f64
    };
    let m0 = mean(&trace.samples[0].x);
    let mut worst: f64 = 0.0;
    for s in &trace.samples {
        let exact = (a * s.t).exp() * &m0;
        worst = worst.max((mean(&s.x) - exact).amax());
    }
    Ok(worst)
}

/// Tolerance for [`mean_state_error`]: `10 h⁴ T (1 + ‖A‖)⁴`.
pub fn mean_state_bound(step: f64, horizon: f64, a: &DMatrix<f64>) -> f64 {
    10.0 * step.powi(4) * horizon * (1.0 + linalg::spectral_norm(a)).powi(4)
}

/// Result of re-checking a trace against its gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub cost: CostReport,
    pub invariants: InvariantReport,
    pub lyapunov_max_increase: f64,
    pub lyapunov_violations: usize,
    pub final_disagreement: f64,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.cost.satisfied && self.invariants.passed() && self.lyapunov_violations == 0
    }
}

impl fmt::Display for Verification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.cost;
        writeln!(f, "J_x(T)            {:.6}", c.jx_final)?;
        writeln!(f, "J*_x(0)           {:.6}", c.j_star_initial)?;
        writeln!(f, "J*_x(t) to T      {:.6}", c.j_star_integral)?;
        writeln!(
            f,
            "J*                {:.6}  (tail beyond T ≈ {:.3e})",
            c.j_star, c.tail_estimate
        )?;
        writeln!(f, "J_x ≤ J*          {}", yes_no(c.satisfied))?;
        writeln!(f, "disagreement(T)   {:.3e}", self.final_disagreement)?;
        let inv = &self.invariants;
        writeln!(f, "min weight        {:.6}", inv.min_weight)?;
        writeln!(f, "weights monotone  {}", yes_no(inv.weights_nondecreasing))?;
        writeln!(f, "edge resets       {}", yes_no(inv.resets_ok))?;
        writeln!(f, "J_x monotone      {}", yes_no(inv.jx_nondecreasing))?;
        writeln!(f, "max |Σ u_i|       {:.3e}", inv.max_input_sum)?;
        write!(
            f,
            "Lyapunov          max interior increase {:.3e}, {} violation(s)",
            self.lyapunov_max_increase, self.lyapunov_violations
        )
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

pub fn verify_trace(trace: &Trace) -> Result<Verification> {
    let analysis = performance::analyze_trace(trace)?;
    Ok(Verification {
        cost: analysis.cost,
        invariants: check_invariants(trace)?,
        lyapunov_max_increase: analysis.lyapunov.max_interior_increase,
        lyapunov_violations: analysis.lyapunov.violations.len(),
        final_disagreement: trace.final_sample().disagreement,
    })
}

/// Gains plus the checks `synth` reports.
#[derive(Debug, Clone)]
pub struct SynthReport {
    pub gains: GainSet,
    pub residual: f64,
    pub lmi: Option<LmiMargin>,
}

impl fmt::Display for SynthReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = &self.gains;
        writeln!(f, "mode              {}", g.mode.as_str())?;
        writeln!(f, "gamma             {:.6}", g.gamma)?;
        writeln!(f, "K_u               {}", fmt_matrix(&g.ku))?;
        writeln!(f, "K_w               {}", fmt_matrix(&g.kw))?;
        writeln!(f, "certificate       {}", fmt_matrix(&g.certificate))?;
        writeln!(
            f,
            "λ_max(cert)       {:.6}",
            linalg::max_eigenvalue(&g.certificate)
        )?;
        writeln!(f, "Riccati residual  {:.3e}", self.residual)?;
        writeln!(f, "structure defect  {:.3e}", g.structure_defect())?;
        match &self.lmi {
            Some(m) => write!(
                f,
                "LMI margin        {:.6e} ({})",
                m.value,
                if m.feasible { "feasible" } else { "infeasible" }
            ),
            None => write!(f, "LMI margin        n/a"),
        }
    }
}

pub fn fmt_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            m.row(i)
                .iter()
                .map(|v| format!("{v:.4}"))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    format!("[{}]", rows.join("; "))
}

fn lmi_for(gains: &GainSet, plant: &PlantModel, q: &DMatrix<f64>) -> Result<Option<LmiMargin>> {
    let Some(inv) = gains.certificate.clone().try_inverse() else {
        return Ok(None);
    };
    let inv = linalg::symmetrize(&inv);
    Ok(Some(match gains.mode {
        Mode::Linear => riccati::lmi_margin_linear(&inv, gains.gamma, plant, q)?,
        Mode::Lipschitz => riccati::lmi_margin_lipschitz(&inv, gains.gamma, plant, q, gains.mu)?,
    }))
}

pub fn synth(scenario: &Scenario) -> Result<SynthReport> {
    let gains = scenario.synthesize()?;
    let spec = scenario.spec_at(gains.gamma)?;
    let residual =
        riccati::riccati_residual(&gains.certificate, &scenario.plant, &spec, gains.mode)?;
    let lmi = lmi_for(&gains, &scenario.plant, &scenario.q)?;
    Ok(SynthReport {
        gains,
        residual,
        lmi,
    })
}

/// One row of a reproduction table.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(label: &str, passed: bool, detail: String) -> Self {
        Self {
            label: label.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Table {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "== {} ==", self.title)?;
        let width = self
            .checks
            .iter()
            .map(|c| c.label.chars().count())
            .max()
            .unwrap_or(0);
        for c in &self.checks {
            let pad = width - c.label.chars().count();
            writeln!(
                f,
                "{} {}{}  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.label,
                " ".repeat(pad),
                c.detail
            )?;
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(
            f,
            "{} of {} checks passed",
            self.checks.len() - failed,
            self.checks.len()
        )
    }
}

fn max_abs_dev(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Largest `|K_w − K_uᵀK_u|` entry of rounded reference gains, relative to
/// what four-decimal rounding of both factors allows.
pub fn rounded_structure_excess(ku: &[f64], kw_rows: &[Vec<f64>]) -> f64 {
    let half_ulp = 5e-5;
    let mut worst = f64::NEG_INFINITY;
    for (i, row) in kw_rows.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            let allowed = half_ulp + half_ulp * (ku[i].abs() + ku[j].abs()) + half_ulp * half_ulp;
            worst = worst.max((w - ku[i] * ku[j]).abs() - allowed);
        }
    }
    worst
}

fn trace_checks(checks: &mut Vec<Check>, label: &str, trace: &Trace) -> Result<Verification> {
    let v = verify_trace(trace)?;
    let n = trace.agent_count();
    let spread = performance::max_pairwise_difference(&trace.final_sample().x, n)?;
    checks.push(Check::new(
        &format!("{label}: consensus at T = {}", trace.horizon()),
        spread < CONSENSUS_TOL,
        format!("max pairwise difference {spread:.3e} (< {CONSENSUS_TOL:e})"),
    ));
    checks.push(Check::new(
        &format!("{label}: J_x nondecreasing"),
        v.invariants.jx_nondecreasing,
        format!("J_x(T) = {:.4}", v.cost.jx_final),
    ));
    checks.push(Check::new(
        &format!("{label}: J_x(t) ≤ J*"),
        v.cost.satisfied,
        format!(
            "J* = {:.4} (x(0) part {:.4}, integral {:.4}), margin {:.4}",
            v.cost.j_star, v.cost.j_star_initial, v.cost.j_star_integral, v.cost.margin
        ),
    ));
    checks.push(Check::new(
        &format!("{label}: Lyapunov V non-increasing between switches"),
        v.lyapunov_violations == 0,
        format!("max interior increase {:.3e}", v.lyapunov_max_increase),
    ));
    let inv = &v.invariants;
    checks.push(Check::new(
        &format!("{label}: weight invariants"),
        inv.min_weight >= 1.0 && inv.weights_nondecreasing && inv.resets_ok,
        format!(
            "min weight {:.6}, monotone {}, resets {}",
            inv.min_weight,
            yes_no(inv.weights_nondecreasing),
            yes_no(inv.resets_ok)
        ),
    ));
    checks.push(Check::new(
        &format!("{label}: Σ u_i = 0"),
        inv.max_input_sum <= INPUT_SUM_TOL,
        format!("max relative |Σ u_i| {:.3e}", inv.max_input_sum),
    ));
    Ok(v)
}

fn reproduce_example1() -> Result<Table> {
    let sc = scenario::bundled("example1")?;
    let mut checks = Vec::new();
    let mut notes = Vec::new();

    let report = synth(&sc)?;
    let g = &report.gains;
    let ku_ref = DMatrix::from_row_slice(1, 4, &REFERENCE_KU_EXAMPLE1);
    let kw_ref = DMatrix::from_fn(4, 4, |i, j| REFERENCE_KW_EXAMPLE1[i][j]);
    let dku = max_abs_dev(&g.ku, &ku_ref);
    let dkw = max_abs_dev(&g.kw, &kw_ref);
    checks.push(Check::new(
        "K_u matches reference gains",
        dku < GAIN_TOL,
        format!(
            "computed {}, reference {}, max |Δ| {dku:.4e}",
            fmt_matrix(&g.ku),
            fmt_matrix(&ku_ref)
        ),
    ));
    checks.push(Check::new(
        "K_w matches reference gains",
        dkw < GAIN_TOL,
        format!("max |Δ| {dkw:.4e}"),
    ));
    checks.push(Check::new(
        "K_w = K_uᵀK_u",
        g.structure_defect() < STRUCTURE_TOL,
        format!("defect {:.3e}", g.structure_defect()),
    ));
    let ref_rows: Vec<Vec<f64>> = REFERENCE_KW_EXAMPLE1.iter().map(|r| r.to_vec()).collect();
    let excess = rounded_structure_excess(&REFERENCE_KU_EXAMPLE1, &ref_rows);
    checks.push(Check::new(
        "reference K_w = K_uᵀK_u within rounding",
        excess <= 0.0,
        format!("worst excess over rounding allowance {excess:.2e}"),
    ));
    checks.push(Check::new(
        "Riccati certificate R ≻ 0, residual ≤ 1e-8",
        report.residual <= riccati::RESIDUAL_TOL && linalg::is_positive_definite(&g.certificate),
        format!("residual {:.3e}", report.residual),
    ));

    let trace = simulator::simulate(&sc.simulation_setup(g.clone())?)?;
    let v = trace_checks(&mut checks, "example1", &trace)?;
    let err = mean_state_error(&trace, sc.plant.a())?;
    let bound = mean_state_bound(sc.integrator.step, sc.integrator.horizon, sc.plant.a());
    checks.push(Check::new(
        "example1: mean state follows ẋ̄ = Ax̄",
        err <= bound,
        format!("max error {err:.3e} (bound {bound:.3e})"),
    ));
    notes.push(format!(
        "reference J* = {REFERENCE_J_STAR_EXAMPLE1} comes from an unrecorded switching realization; this run gives J* = {:.4}",
        v.cost.j_star
    ));
    Ok(Table {
        title: "example1".into(),
        checks,
        notes,
    })
}

fn reproduce_example2() -> Result<Table> {
    let sc = scenario::bundled("example2")?;
    let mu = sc.mu.unwrap_or(0.0);
    let mut checks = Vec::new();
    let mut notes = Vec::new();

    // certificate at the reference γ
    let spec = sc
        .spec_at(REFERENCE_GAMMA_EXAMPLE2)?
        .with_slack(riccati::STRICT_SLACK_REL)?;
    let fixed = riccati::synthesize_lipschitz(&sc.plant, &spec)?;
    let residual =
        riccati::riccati_residual(&fixed.certificate, &sc.plant, &spec, Mode::Lipschitz)?;
    checks.push(Check::new(
        "γ = 21.1207: certificate P ≻ 0, residual ≤ 1e-8",
        residual <= riccati::RESIDUAL_TOL && linalg::is_positive_definite(&fixed.certificate),
        format!("residual {residual:.3e}, K_u {}", fmt_matrix(&fixed.ku)),
    ));
    let lmi = lmi_for(&fixed, &sc.plant, &sc.q)?;
    checks.push(Check::new(
        "γ = 21.1207: LMI margin from P⁻¹ negative",
        lmi.is_some_and(|m| m.feasible),
        format!("λ_max = {:.4e}", lmi.map_or(f64::NAN, |m| m.value)),
    ));
    let fixed_trace = simulator::simulate(&sc.simulation_setup(fixed.clone())?)?;
    trace_checks(&mut checks, "γ = 21.1207", &fixed_trace)?;

    let ref_rows = vec![REFERENCE_KW_EXAMPLE2_ROW1.to_vec()];
    let excess = rounded_structure_excess(&REFERENCE_KU_EXAMPLE2, &ref_rows);
    checks.push(Check::new(
        "reference K_w = K_uᵀK_u within rounding",
        excess <= 0.0,
        format!("worst excess over rounding allowance {excess:.2e}"),
    ));

    let lip = performance::verify_lipschitz(&sc.hook, sc.state_dim(), mu, 10_000, 1)?;
    checks.push(Check::new(
        "nonlinearity is μ-Lipschitz",
        lip.passed,
        format!("max ratio {:.6} (μ = {mu})", lip.max_ratio),
    ));

    // ε-designs
    let mut eps_costs = Vec::new();
    for eps in [5.0, 10.0] {
        let mut s = sc.clone();
        s.design = Design::Eps(eps);
        let gains = s.synthesize()?;
        let trace = simulator::simulate(&s.simulation_setup(gains.clone())?)?;
        let label = format!("ε = {eps}");
        let v = trace_checks(&mut checks, &label, &trace)?;
        notes.push(format!(
            "ε = {eps}: γ = {:.4}, K_u {}, ‖K_u‖ = {:.4}, J* = {:.4}",
            gains.gamma,
            fmt_matrix(&gains.ku),
            gains.ku.norm(),
            v.cost.j_star
        ));
        eps_costs.push(v.cost.j_star);
    }
    checks.push(Check::new(
        "larger ε gives larger J*",
        eps_costs[1] > eps_costs[0],
        format!(
            "J*(ε=5) = {:.4}, J*(ε=10) = {:.4}",
            eps_costs[0], eps_costs[1]
        ),
    ));
    notes.push(format!(
        "reference ε = 5 design: γ = {REFERENCE_GAMMA_EXAMPLE2}, K_u {}",
        fmt_matrix(&DMatrix::from_row_slice(1, 4, &REFERENCE_KU_EXAMPLE2))
    ));
    Ok(Table {
        title: "example2".into(),
        checks,
        notes,
    })
}

/// Runs a bundled example end to end.
pub fn reproduce(name: &str) -> Result<Table> {
    match name {
        "example1" => reproduce_example1(),
        "example2" => reproduce_example2(),
        other => Err(Error::InvalidArgument(format!(
            "unknown example {other:?}; expected example1 or example2"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_gains_are_structured() {
        let rows: Vec<Vec<f64>> = REFERENCE_KW_EXAMPLE1.iter().map(|r| r.to_vec()).collect();
        assert!(rounded_structure_excess(&REFERENCE_KU_EXAMPLE1, &rows) <= 0.0);
        assert!(
            rounded_structure_excess(
                &REFERENCE_KU_EXAMPLE2,
                &[REFERENCE_KW_EXAMPLE2_ROW1.to_vec()]
            ) <= 0.0
        );
        assert!(rounded_structure_excess(&[0.5], &[vec![0.3]]) > 0.0);
    }

    #[test]
    fn unknown_example() {
        assert!(reproduce("example3").is_err());
    }
}
