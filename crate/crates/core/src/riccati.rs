//! Gain synthesis from Riccati equations and LMI margin checks.
//!
//! All Riccati equations here are brought to the form
//!
//! ```text
//! AᵀX + XA − X M X + Q_eff = 0
//! ```
//!
//! with `M = γBBᵀ` for linear agents and `M = γBBᵀ − I` (possibly
//! indefinite) for Lipschitz agents. The stabilizing solution is read off
//! the stable invariant subspace of the Hamiltonian `[A, −M; −Q_eff, −Aᵀ]`,
//! found with the matrix sign function, and then polished with Newton steps.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, is_positive_definite, max_eigenvalue, spectral_norm, symmetrize};

/// Accepted Riccati residual: `‖res‖₂ ≤ RESIDUAL_TOL · (1 + ‖X‖₂)`, and the
/// bound on the inequality's largest eigenvalue.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// An LMI counts as feasible when its largest eigenvalue is below `-LMI_TOL`.
pub const LMI_TOL: f64 = 1e-9;

/// Strictness used by the ε-searches: the constant term is inflated by
/// `STRICT_SLACK_REL · λ_max(Q_eff) · I` so the certificate satisfies the
/// Riccati inequality strictly and the block LMI has a negative margin.
pub const STRICT_SLACK_REL: f64 = 1e-4;

/// Geometric γ grid for the ε-searches: `[GAMMA_MIN, GAMMA_MAX]`, ratio `GAMMA_RATIO`.
pub const GAMMA_MIN: f64 = 1e-2;
pub const GAMMA_MAX: f64 = 1e4;
pub const GAMMA_RATIO: f64 = 1.1;

/// Relative distance from the imaginary axis below which a Hamiltonian
/// eigenvalue is treated as lying on it.
const IMAG_AXIS_TOL: f64 = 1e-9;

/// Agent dynamics `ẋ = Ax + Bu`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl PlantModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || !a.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "B must be {}xp with p >= 1, got {}x{}",
                a.nrows(),
                b.nrows(),
                b.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "plant matrices contain non-finite entries".into(),
            ));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// State dimension `d`.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension `p`.
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn bbt(&self) -> DMatrix<f64> {
        &self.b * self.b.transpose()
    }

    /// `λ_max(BBᵀ)`; the ε-parameterised designs need it to be at most 1.
    pub fn input_gain(&self) -> f64 {
        max_eigenvalue(&self.bbt())
    }
}

/// Design parameters: weight `Q ≻ 0`, translation factor `γ > 0`, optional
/// gain factor `ε` and Lipschitz constant `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceSpec {
    pub q: DMatrix<f64>,
    pub gamma: f64,
    pub eps: Option<f64>,
    pub mu: Option<f64>,
    /// Relative strictness added to the Riccati constant term (0 solves the
    /// equality exactly).
    pub slack: f64,
}

impl PerformanceSpec {
    pub fn new(q: DMatrix<f64>, gamma: f64) -> Result<Self> {
        check_weight(&q)?;
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "γ must be > 0, got {gamma}"
            )));
        }
        Ok(Self {
            q,
            gamma,
            eps: None,
            mu: None,
            slack: 0.0,
        })
    }

    pub fn with_mu(mut self, mu: f64) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::InvalidArgument(format!("μ must be >= 0, got {mu}")));
        }
        self.mu = Some(mu);
        Ok(self)
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!("ε must be > 0, got {eps}")));
        }
        self.eps = Some(eps);
        Ok(self)
    }

    pub fn with_slack(mut self, slack: f64) -> Result<Self> {
        if !(slack >= 0.0) || !slack.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "slack must be >= 0, got {slack}"
            )));
        }
        self.slack = slack;
        Ok(self)
    }

    pub fn mu_or_zero(&self) -> f64 {
        self.mu.unwrap_or(0.0)
    }
}

/// Checks `Q = Qᵀ ≻ 0`.
pub fn check_weight(q: &DMatrix<f64>) -> Result<()> {
    if !q.is_square() || q.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "Q must be square, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    if !linalg::is_symmetric(q, linalg::SYMMETRY_TOL) {
        return Err(Error::NotSymmetric);
    }
    if !is_positive_definite(q) {
        return Err(Error::InvalidArgument("Q not positive definite".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Linear,
    Lipschitz,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Linear => "linear",
            Mode::Lipschitz => "lipschitz",
        }
    }
}

/// Protocol gains with the certificate that justifies them.
///
/// `K_w` is formed as `K_uᵀK_u`, which equals `XBBᵀX` for `K_u = BᵀX`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub ku: DMatrix<f64>,
    pub kw: DMatrix<f64>,
    /// `R` (linear) or `P` (Lipschitz).
    pub certificate: DMatrix<f64>,
    pub gamma: f64,
    pub mode: Mode,
    pub mu: f64,
}

impl GainSet {
    pub fn from_certificate(
        plant: &PlantModel,
        certificate: DMatrix<f64>,
        gamma: f64,
        mode: Mode,
        mu: f64,
    ) -> Result<Self> {
        let d = plant.state_dim();
        if certificate.nrows() != d || certificate.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "certificate must be {d}x{d}, got {}x{}",
                certificate.nrows(),
                certificate.ncols()
            )));
        }
        if !is_positive_definite(&certificate) {
            return Err(Error::NotPositiveDefinite);
        }
        let ku = plant.b().transpose() * &certificate;
        let kw = ku.transpose() * &ku;
        Ok(Self {
            ku,
            kw,
            certificate,
            gamma,
            mode,
            mu,
        })
    }

    /// `max |K_w − K_uᵀK_u|`.
    pub fn structure_defect(&self) -> f64 {
        (&self.kw - self.ku.transpose() * &self.ku).amax()
    }

    pub fn state_dim(&self) -> usize {
        self.kw.nrows()
    }
}

/// Largest eigenvalue of an assembled LMI block matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmiMargin {
    pub value: f64,
    pub feasible: bool,
    /// Whether `λ_max(BBᵀ) ≤ 1` held for the plant.
    pub normalization_ok: bool,
}

impl LmiMargin {
    fn from_value(value: f64, normalization_ok: bool) -> Self {
        Self {
            value,
            feasible: value < -LMI_TOL,
            normalization_ok,
        }
    }
}

/// Stabilizing solution of `AᵀX + XA − X M X + Q = 0`.
pub fn solve_riccati(a: &DMatrix<f64>, m: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    for (name, mat) in [("M", m), ("Q", q)] {
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "{name} must be {d}x{d}, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
    }

    let mut h = DMatrix::zeros(2 * d, 2 * d);
    h.view_mut((0, 0), (d, d)).copy_from(a);
    h.view_mut((0, d), (d, d)).copy_from(&(-m));
    h.view_mut((d, 0), (d, d)).copy_from(&(-q));
    h.view_mut((d, d), (d, d)).copy_from(&(-a.transpose()));

    let h_scale = 1.0 + spectral_norm(&h);
    if h.complex_eigenvalues()
        .iter()
        .any(|ev| ev.re.abs() <= IMAG_AXIS_TOL * h_scale)
    {
        return Err(Error::NoStabilizingSolution(
            "Hamiltonian has eigenvalues on the imaginary axis".into(),
        ));
    }

    let sign = linalg::matrix_sign(&h).ok_or_else(|| {
        Error::NoStabilizingSolution("sign iteration hit a singular iterate".into())
    })?;

    // Stable subspace spans [I; X] and satisfies (S + I)[I; X] = 0.
    let eye = DMatrix::<f64>::identity(d, d);
    let mut lhs = DMatrix::zeros(2 * d, d);
    lhs.view_mut((0, 0), (d, d))
        .copy_from(&sign.view((0, d), (d, d)));
    lhs.view_mut((d, 0), (d, d))
        .copy_from(&(sign.view((d, d), (d, d)) + &eye));
    let mut rhs = DMatrix::zeros(2 * d, d);
    rhs.view_mut((0, 0), (d, d))
        .copy_from(&(-(sign.view((0, 0), (d, d)) + &eye)));
    rhs.view_mut((d, 0), (d, d))
        .copy_from(&(-sign.view((d, 0), (d, d))));
    let x = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::NoStabilizingSolution(format!("subspace solve failed: {e}")))?;
    let mut x = symmetrize(&x);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoStabilizingSolution(
            "non-finite subspace solution".into(),
        ));
    }

    let residual = |x: &DMatrix<f64>| a.transpose() * x + x * a - x * m * x + q;
    let mut best = spectral_norm(&residual(&x));
    for _ in 0..30 {
        if best <= 1e-10 * (1.0 + spectral_norm(&x)) {
            break;
        }
        let closed = a - m * &x;
        let rhs = -(q + &x * m * &x);
        let next = match linalg::solve_lyapunov(&closed, &rhs) {
            Ok(next) => next,
            Err(_) => break,
        };
        let next_res = spectral_norm(&residual(&next));
        if !(next_res < best) {
            break;
        }
        x = next;
        best = next_res;
    }

    let closed = a - m * &x;
    if closed.complex_eigenvalues().iter().any(|ev| ev.re >= 0.0) {
        return Err(Error::NoStabilizingSolution(
            "closed loop A − MX is not Hurwitz".into(),
        ));
    }
    if best > RESIDUAL_TOL * (1.0 + spectral_norm(&x)) {
        return Err(Error::NoStabilizingSolution(format!(
            "residual {best:.3e} above tolerance"
        )));
    }
    if !is_positive_definite(&x) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(x)
}

/// Solves `RA + AᵀR − weight·RBBᵀR + Q_eff = 0` for its stabilizing SPD root.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q_eff: &DMatrix<f64>,
    weight: f64,
) -> Result<DMatrix<f64>> {
    if !(weight > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "quadratic weight must be > 0, got {weight}"
        )));
    }
    if b.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "B has {} rows, A is {}x{}",
            b.nrows(),
            a.nrows(),
            a.ncols()
        )));
    }
    let m = b * b.transpose() * weight;
    solve_riccati(a, &m, q_eff)
}

fn inflate(q_eff: DMatrix<f64>, slack: f64) -> DMatrix<f64> {
    if slack == 0.0 {
        return q_eff;
    }
    let d = q_eff.nrows();
    let bump = slack * max_eigenvalue(&q_eff);
    q_eff + DMatrix::identity(d, d) * bump
}

fn check_spec_dims(plant: &PlantModel, spec: &PerformanceSpec) -> Result<()> {
    let d = plant.state_dim();
    if spec.q.nrows() != d {
        return Err(Error::DimensionMismatch(format!(
            "Q is {}x{}, plant state dimension is {d}",
            spec.q.nrows(),
            spec.q.ncols()
        )));
    }
    Ok(())
}

/// Linear design: `R` solves `RA + AᵀR − γRBBᵀR + 2Q = 0`, `K_u = BᵀR`,
/// `K_w = RBBᵀR`.
pub fn synthesize_linear(plant: &PlantModel, spec: &PerformanceSpec) -> Result<GainSet> {
    check_spec_dims(plant, spec)?;
    let q_eff = inflate(&spec.q * 2.0, spec.slack);
    let r = solve_care(plant.a(), plant.b(), &q_eff, spec.gamma)?;
    let gains = GainSet::from_certificate(plant, r, spec.gamma, Mode::Linear, 0.0)?;
    let res = riccati_residual(&gains.certificate, plant, spec, Mode::Linear)?;
    if res > RESIDUAL_TOL {
        return Err(Error::NoStabilizingSolution(format!(
            "Riccati inequality residual {res:.3e} above tolerance"
        )));
    }
    Ok(gains)
}

/// Lipschitz design: `P` solves
/// `PA + AᵀP − P(γBBᵀ − I)P + 2Q + μ²I = 0`, `K_u = BᵀP`, `K_w = PBBᵀP`.
pub fn synthesize_lipschitz(plant: &PlantModel, spec: &PerformanceSpec) -> Result<GainSet> {
    check_spec_dims(plant, spec)?;
    let d = plant.state_dim();
    let mu = spec.mu_or_zero();
    let eye = DMatrix::<f64>::identity(d, d);
    let m = plant.bbt() * spec.gamma - &eye;
    let q_eff = inflate(&spec.q * 2.0 + &eye * (mu * mu), spec.slack);
    let p = solve_riccati(plant.a(), &m, &q_eff)?;
    let gains = GainSet::from_certificate(plant, p, spec.gamma, Mode::Lipschitz, mu)?;
    let res = riccati_residual(&gains.certificate, plant, spec, Mode::Lipschitz)?;
    if res > RESIDUAL_TOL {
        return Err(Error::NoStabilizingSolution(format!(
            "Riccati inequality residual {res:.3e} above tolerance"
        )));
    }
    Ok(gains)
}

/// Largest eigenvalue of the Riccati inequality's left-hand side for a given
/// certificate; `≤ RESIDUAL_TOL` certifies the inequality.
pub fn riccati_residual(
    certificate: &DMatrix<f64>,
    plant: &PlantModel,
    spec: &PerformanceSpec,
    mode: Mode,
) -> Result<f64> {
    let d = plant.state_dim();
    if certificate.nrows() != d || certificate.ncols() != d || spec.q.nrows() != d {
        return Err(Error::DimensionMismatch(format!(
            "certificate {}x{} / Q {}x{} for state dimension {d}",
            certificate.nrows(),
            certificate.ncols(),
            spec.q.nrows(),
            spec.q.ncols()
        )));
    }
    if !linalg::is_symmetric(certificate, linalg::SYMMETRY_TOL) {
        return Err(Error::NotSymmetric);
    }
    let x = certificate;
    let a = plant.a();
    let bbt = plant.bbt();
    let eye = DMatrix::<f64>::identity(d, d);
    let lhs = match mode {
        Mode::Linear => x * a + a.transpose() * x - x * &bbt * x * spec.gamma + &spec.q * 2.0,
        Mode::Lipschitz => {
            let mu = spec.mu_or_zero();
            x * a + a.transpose() * x - x * (&bbt * spec.gamma - &eye) * x
                + &spec.q * 2.0
                + &eye * (mu * mu)
        }
    };
    Ok(max_eigenvalue(&lhs))
}

fn normalization_ok(plant: &PlantModel) -> bool {
    plant.input_gain() <= 1.0 + 1e-12
}

/// Margin of `[AR̃ + R̃Aᵀ − γBBᵀ, 2R̃Q; 2QR̃, −2Q]`.
pub fn lmi_margin_linear(
    rtilde: &DMatrix<f64>,
    gamma: f64,
    plant: &PlantModel,
    q: &DMatrix<f64>,
) -> Result<LmiMargin> {
    let d = plant.state_dim();
    check_square(rtilde, d, "R̃")?;
    check_square(q, d, "Q")?;
    if !linalg::is_symmetric(rtilde, linalg::SYMMETRY_TOL) {
        return Err(Error::NotSymmetric);
    }
    let a = plant.a();
    let mut xi = DMatrix::zeros(2 * d, 2 * d);
    let top = a * rtilde + rtilde * a.transpose() - plant.bbt() * gamma;
    let off = rtilde * q * 2.0;
    xi.view_mut((0, 0), (d, d)).copy_from(&top);
    xi.view_mut((0, d), (d, d)).copy_from(&off);
    xi.view_mut((d, 0), (d, d)).copy_from(&off.transpose());
    xi.view_mut((d, d), (d, d)).copy_from(&(q * -2.0));
    Ok(LmiMargin::from_value(
        max_eigenvalue(&xi),
        normalization_ok(plant),
    ))
}

/// Margin of
/// `[AP̃ + P̃Aᵀ − γBBᵀ + I, 2P̃Q, μP̃; 2QP̃, −2Q, 0; μP̃, 0, −I]`.
pub fn lmi_margin_lipschitz(
    ptilde: &DMatrix<f64>,
    gamma: f64,
    plant: &PlantModel,
    q: &DMatrix<f64>,
    mu: f64,
) -> Result<LmiMargin> {
    let d = plant.state_dim();
    check_square(ptilde, d, "P̃")?;
    check_square(q, d, "Q")?;
    if !linalg::is_symmetric(ptilde, linalg::SYMMETRY_TOL) {
        return Err(Error::NotSymmetric);
    }
    let a = plant.a();
    let eye = DMatrix::<f64>::identity(d, d);
    let mut xi = DMatrix::zeros(3 * d, 3 * d);
    let top = a * ptilde + ptilde * a.transpose() - plant.bbt() * gamma + &eye;
    let off = ptilde * q * 2.0;
    let lip = ptilde * mu;
    xi.view_mut((0, 0), (d, d)).copy_from(&top);
    xi.view_mut((0, d), (d, d)).copy_from(&off);
    xi.view_mut((d, 0), (d, d)).copy_from(&off.transpose());
    xi.view_mut((0, 2 * d), (d, d)).copy_from(&lip);
    xi.view_mut((2 * d, 0), (d, d)).copy_from(&lip.transpose());
    xi.view_mut((d, d), (d, d)).copy_from(&(q * -2.0));
    xi.view_mut((2 * d, 2 * d), (d, d)).copy_from(&(-eye));
    Ok(LmiMargin::from_value(
        max_eigenvalue(&xi),
        normalization_ok(plant),
    ))
}

fn check_square(m: &DMatrix<f64>, d: usize, name: &str) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "{name} must be {d}x{d}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// The γ search grid, ascending.
pub fn gamma_grid() -> impl Iterator<Item = f64> {
    (0..)
        .map(|k| GAMMA_MIN * GAMMA_RATIO.powi(k))
        .take_while(|g| *g <= GAMMA_MAX * (1.0 + 1e-12))
}

fn eps_search(
    plant: &PlantModel,
    q: &DMatrix<f64>,
    eps: f64,
    mu: Option<f64>,
) -> Result<(f64, GainSet)> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("ε must be > 0, got {eps}")));
    }
    check_weight(q)?;
    let lam = plant.input_gain();
    if !normalization_ok(plant) {
        return Err(Error::InputNormalization(lam));
    }
    for gamma in gamma_grid() {
        let mut spec = PerformanceSpec::new(q.clone(), gamma)?
            .with_eps(eps)?
            .with_slack(STRICT_SLACK_REL)?;
        let gains = match mu {
            None => synthesize_linear(plant, &spec),
            Some(mu) => {
                spec = spec.with_mu(mu)?;
                synthesize_lipschitz(plant, &spec)
            }
        };
        let Ok(gains) = gains else { continue };
        if max_eigenvalue(&gains.certificate) > eps {
            continue;
        }
        let Some(inv) = gains.certificate.clone().try_inverse() else {
            continue;
        };
        let inv = symmetrize(&inv);
        let margin = match mu {
            None => lmi_margin_linear(&inv, gamma, plant, q)?,
            Some(mu) => lmi_margin_lipschitz(&inv, gamma, plant, q, mu)?,
        };
        if margin.feasible {
            return Ok((gamma, gains));
        }
    }
    Err(Error::NoFeasibleGamma {
        lo: GAMMA_MIN,
        hi: GAMMA_MAX,
    })
}

/// Gain-factor design for linear agents: smallest grid γ whose Riccati
/// certificate satisfies `R ⪯ εI` and makes the block LMI strictly feasible.
pub fn synthesize_linear_eps(
    plant: &PlantModel,
    q: &DMatrix<f64>,
    eps: f64,
) -> Result<(f64, GainSet)> {
    eps_search(plant, q, eps, None)
}

/// Gain-factor design for Lipschitz agents, analogous to
/// [`synthesize_linear_eps`].
pub fn synthesize_lipschitz_eps(
    plant: &PlantModel,
    q: &DMatrix<f64>,
    eps: f64,
    mu: f64,
) -> Result<(f64, GainSet)> {
    if !(mu >= 0.0) {
        return Err(Error::InvalidArgument(format!("μ must be >= 0, got {mu}")));
    }
    eps_search(plant, q, eps, Some(mu))
}
