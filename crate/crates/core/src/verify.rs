//! Residual series, verdicts and convergence estimates.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    DynamicsError, IntegrationMode, IntegrationOptions, KinematicState, Problem, Termination,
    Trajectory, TrajectorySample,
};
use crate::field::{MetricField, ParticleParams};
use crate::geometry::{
    contracted_consistency_residual, dot, embedding_residuals, nonmetricity_at,
    nonmetricity_direct, GeometryError, SignConvention, TrajectoryStep,
};
use crate::potential::{Params, PotentialExpr};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("trajectories do not belong to the same run: {0}")]
    Mismatch(String),
    #[error("no trajectory to check")]
    NoTrajectory,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("step sizes must be at least three values in geometric progression")]
    BadSteps,
    #[error("convergence run at h = {h} terminated early: {reason}")]
    Degenerate { h: f64, reason: String },
}

/// One checked identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    /// `g00 − v²/c²`, the null interval along the tangent.
    Isotropy,
    /// `p⁰ sqrt(1 − g00) = m c`, drift per unit time.
    MassShellConservation,
    /// Contracted connection–momentum consistency.
    ContractedConsistency,
    EmbeddingR1,
    EmbeddingR2,
    EmbeddingR3,
    /// Closed-form nonmetricity against `−∇g` from the connection.
    Nonmetricity,
    RoundtripDeviation,
    /// `∫sqrt(1 − g00) dt` against `∫sqrt(1 − v²/c²) dt`.
    ProperTime,
}

impl Identity {
    pub const ALL: [Identity; 9] = [
        Identity::Isotropy,
        Identity::MassShellConservation,
        Identity::ContractedConsistency,
        Identity::EmbeddingR1,
        Identity::EmbeddingR2,
        Identity::EmbeddingR3,
        Identity::Nonmetricity,
        Identity::RoundtripDeviation,
        Identity::ProperTime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Identity::Isotropy => "isotropy",
            Identity::MassShellConservation => "mass_shell_conservation",
            Identity::ContractedConsistency => "contracted_consistency",
            Identity::EmbeddingR1 => "embedding_r1",
            Identity::EmbeddingR2 => "embedding_r2",
            Identity::EmbeddingR3 => "embedding_r3",
            Identity::Nonmetricity => "nonmetricity",
            Identity::RoundtripDeviation => "roundtrip_deviation",
            Identity::ProperTime => "proper_time",
        }
    }

    /// Modes whose trajectories this identity is evaluated on.
    pub fn modes(self) -> &'static [IntegrationMode] {
        use IntegrationMode::*;
        match self {
            Identity::Isotropy | Identity::ProperTime => &[Reference],
            Identity::MassShellConservation | Identity::RoundtripDeviation => &[Geodesic],
            _ => &[Reference, Geodesic],
        }
    }

    pub fn tolerance(self, tol: &Tolerances) -> f64 {
        match self {
            Identity::Isotropy => tol.isotropy,
            Identity::MassShellConservation => tol.mass_shell,
            Identity::ContractedConsistency => tol.consistency,
            Identity::EmbeddingR1 | Identity::EmbeddingR2 | Identity::EmbeddingR3 => tol.embedding,
            Identity::Nonmetricity => tol.nonmetricity,
            Identity::RoundtripDeviation => tol.roundtrip,
            Identity::ProperTime => tol.proper_time,
        }
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub isotropy: f64,
    pub mass_shell: f64,
    pub consistency: f64,
    pub embedding: f64,
    pub nonmetricity: f64,
    pub roundtrip: f64,
    pub proper_time: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            isotropy: 1e-10,
            mass_shell: 1e-8,
            consistency: 1e-7,
            embedding: 1e-7,
            nonmetricity: 1e-10,
            roundtrip: 1e-6,
            proper_time: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentitySummary {
    pub name: Identity,
    pub modes: Vec<IntegrationMode>,
    pub samples: usize,
    pub max: f64,
    pub mean: f64,
    #[serde(rename = "final")]
    pub final_value: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeTermination {
    pub mode: IntegrationMode,
    #[serde(flatten)]
    pub termination: Termination,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub scenario: Option<String>,
    pub fingerprint: Option<String>,
    pub sign_convention: SignConvention,
    pub modes: Vec<IntegrationMode>,
    pub samples: usize,
    pub terminations: Vec<ModeTermination>,
    pub identities: Vec<IdentitySummary>,
    pub verdict: Verdict,
}

impl ResidualReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn identity(&self, id: Identity) -> Option<&IdentitySummary> {
        self.identities.iter().find(|s| s.name == id)
    }

    pub fn failing(&self) -> Vec<Identity> {
        self.identities
            .iter()
            .filter(|s| s.verdict == Verdict::Fail)
            .map(|s| s.name)
            .collect()
    }
}

/// One identity along one trajectory, aligned with its samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSeries {
    pub identity: Identity,
    pub mode: IntegrationMode,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Verification {
    pub report: ResidualReport,
    pub series: Vec<ModeSeries>,
}

impl Verification {
    /// Per-sample maximum over the identity's modes.
    pub fn combined(&self, id: Identity) -> Option<(Vec<f64>, Vec<f64>)> {
        let parts: Vec<&ModeSeries> = self.series.iter().filter(|s| s.identity == id).collect();
        let longest = parts.iter().max_by_key(|s| s.values.len())?;
        let values = (0..longest.values.len())
            .map(|k| {
                parts
                    .iter()
                    .filter_map(|s| s.values.get(k))
                    .fold(f64::NEG_INFINITY, |a, &b| nan_max(a, b))
            })
            .collect();
        Some((longest.times.clone(), values))
    }

    pub fn mode_series(&self, mode: IntegrationMode) -> impl Iterator<Item = &ModeSeries> {
        self.series.iter().filter(move |s| s.mode == mode)
    }
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Tangent differential `(1, v/c)`, normalized to `dx⁰ = 1`.
fn unit_tangent(s: &TrajectorySample, c: f64) -> [f64; 4] {
    let v = s.state.v;
    [1.0, v[0] / c, v[1] / c, v[2] / c]
}

fn sample_values(
    id: Identity,
    tr: &Trajectory,
    sign: SignConvention,
) -> Result<Vec<f64>, VerifyError> {
    let particle = &tr.particle;
    let c = particle.c;
    let t0 = tr.samples[0].state.t;
    tr.samples
        .iter()
        .map(|s| {
            let cp = &s.connection;
            let dx = unit_tangent(s, c);
            let embed = || {
                embedding_residuals(
                    cp,
                    &TrajectoryStep {
                        dx,
                        dp: s.momentum_rate,
                        p0: s.momentum.p0,
                    },
                )
            };
            Ok(match id {
                Identity::Isotropy => cp.interval(dx).abs(),
                Identity::MassShellConservation => {
                    let drift = (s.momentum.p0 * (1.0 - cp.goo).sqrt() / particle.momentum_scale()
                        - 1.0)
                        .abs();
                    drift / (s.state.t - t0).max(1.0)
                }
                Identity::ContractedConsistency => {
                    contracted_consistency_residual(cp, dx, sign)?.abs()
                }
                Identity::EmbeddingR1 => embed()?.r1.abs(),
                Identity::EmbeddingR2 => embed()?.r2_norm(),
                Identity::EmbeddingR3 => embed()?.r3_norm(),
                Identity::Nonmetricity => {
                    let closed = nonmetricity_at(cp);
                    let mut worst = 0.0f64;
                    for mu in 0..4 {
                        let direct = nonmetricity_direct(cp, mu, 0, 0)
                            .ok_or(GeometryError::UnpopulatedConnection)?;
                        worst = nan_max(worst, (closed.component(mu, 0, 0) - direct).abs());
                    }
                    worst
                }
                Identity::RoundtripDeviation | Identity::ProperTime => {
                    unreachable!("whole-trajectory identity")
                }
            })
        })
        .collect()
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// `max_k |x_ref − x_geo| / max_k |x_ref|` over the common samples.
pub fn roundtrip_series(reference: &Trajectory, geodesic: &Trajectory) -> Vec<f64> {
    let scale = reference
        .samples
        .iter()
        .map(|s| norm(s.state.x))
        .fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    reference
        .samples
        .iter()
        .zip(&geodesic.samples)
        .map(|(r, g)| {
            let d = [0, 1, 2].map(|i| r.state.x[i] - g.state.x[i]);
            norm(d) / scale
        })
        .collect()
}

fn proper_time_series(tr: &Trajectory) -> Vec<f64> {
    let scale = tr
        .samples
        .iter()
        .map(|s| s.state.tau.abs())
        .fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    tr.samples
        .iter()
        .map(|s| (s.state.tau - s.tau_metric).abs() / scale)
        .collect()
}

fn check_pair(reference: &Trajectory, geodesic: &Trajectory) -> Result<(), VerifyError> {
    if reference.mode != IntegrationMode::Reference || geodesic.mode != IntegrationMode::Geodesic {
        return Err(VerifyError::Mismatch(
            "expected one reference and one geodesic trajectory".into(),
        ));
    }
    if reference.particle != geodesic.particle {
        return Err(VerifyError::Mismatch("particle parameters differ".into()));
    }
    let (a, b) = (&reference.samples[0].state, &geodesic.samples[0].state);
    if a.t != b.t || a.x != b.x || a.v != b.v {
        return Err(VerifyError::Mismatch("initial states differ".into()));
    }
    let same_grid = reference
        .samples
        .iter()
        .zip(&geodesic.samples)
        .all(|(r, g)| r.state.t.to_bits() == g.state.t.to_bits());
    if !same_grid {
        return Err(VerifyError::Mismatch("sample times differ".into()));
    }
    Ok(())
}

fn summarize(id: Identity, parts: &[&ModeSeries], tol: &Tolerances) -> IdentitySummary {
    let all: Vec<f64> = parts
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .collect();
    let max = all.iter().copied().fold(f64::NEG_INFINITY, nan_max);
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let final_value = parts
        .iter()
        .filter_map(|s| s.values.last().copied())
        .fold(f64::NEG_INFINITY, nan_max);
    let tolerance = id.tolerance(tol);
    IdentitySummary {
        name: id,
        modes: parts.iter().map(|s| s.mode).collect(),
        samples: all.len(),
        max,
        mean,
        final_value,
        tolerance,
        verdict: if max <= tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
    }
}

/// Evaluates every identity available from the given trajectories.
///
/// With only one mode present, identities that need the other are skipped.
pub fn run_checks(
    reference: Option<&Trajectory>,
    geodesic: Option<&Trajectory>,
    tol: &Tolerances,
    sign: SignConvention,
) -> Result<Verification, VerifyError> {
    if let (Some(r), Some(g)) = (reference, geodesic) {
        check_pair(r, g)?;
    }
    let present: Vec<&Trajectory> = [reference, geodesic].into_iter().flatten().collect();
    if present.is_empty() {
        return Err(VerifyError::NoTrajectory);
    }
    if let Some(tr) = present.iter().find(|t| t.samples.is_empty()) {
        return Err(VerifyError::Mismatch(format!(
            "{} trajectory has no samples",
            tr.mode
        )));
    }

    let mut series = Vec::new();
    for id in Identity::ALL {
        for &mode in id.modes() {
            let Some(tr) = present.iter().find(|t| t.mode == mode) else {
                continue;
            };
            let values = match id {
                Identity::RoundtripDeviation => match (reference, geodesic) {
                    (Some(r), Some(g)) => roundtrip_series(r, g),
                    _ => continue,
                },
                Identity::ProperTime => proper_time_series(tr),
                _ => sample_values(id, tr, sign)?,
            };
            let times = tr
                .samples
                .iter()
                .take(values.len())
                .map(|s| s.state.t)
                .collect();
            series.push(ModeSeries {
                identity: id,
                mode,
                times,
                values,
            });
        }
    }

    let identities: Vec<IdentitySummary> = Identity::ALL
        .iter()
        .filter_map(|&id| {
            let parts: Vec<&ModeSeries> = series.iter().filter(|s| s.identity == id).collect();
            (!parts.is_empty()).then(|| summarize(id, &parts, tol))
        })
        .collect();
    let terminations: Vec<ModeTermination> = present
        .iter()
        .filter_map(|t| {
            t.termination.clone().map(|termination| ModeTermination {
                mode: t.mode,
                termination,
            })
        })
        .collect();
    let pass = terminations.is_empty() && identities.iter().all(|s| s.verdict == Verdict::Pass);
    let report = ResidualReport {
        scenario: None,
        fingerprint: None,
        sign_convention: sign,
        modes: present.iter().map(|t| t.mode).collect(),
        samples: present.iter().map(|t| t.samples.len()).max().unwrap_or(0),
        terminations,
        identities,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
    };
    Ok(Verification { report, series })
}

/// Measured order of the geodesic-versus-reference deviation in `h`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceEstimate {
    pub steps: Vec<f64>,
    pub deviations: Vec<f64>,
    /// Least-squares slope of `ln deviation` against `ln h`; NaN when the
    /// deviations sit at the rounding floor.
    pub order: f64,
    pub floor_reason: Option<String>,
}

/// Deviations at or below this are indistinguishable from rounding.
pub const ROUNDING_FLOOR: f64 = 1e-13;

pub fn convergence_order(
    problem: &Problem,
    steps: &[f64],
) -> Result<ConvergenceEstimate, VerifyError> {
    if steps.len() < 3 || steps.iter().any(|h| !(*h > 0.0)) {
        return Err(VerifyError::BadSteps);
    }
    let ratio = steps[1] / steps[0];
    if steps
        .windows(2)
        .any(|w| ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-9)
        || ratio == 1.0
    {
        return Err(VerifyError::BadSteps);
    }
    let mut deviations = Vec::with_capacity(steps.len());
    for &h in steps {
        let opts = IntegrationOptions::default();
        let r = problem.integrate(IntegrationMode::Reference, h, opts)?;
        let g = problem.integrate(IntegrationMode::Geodesic, h, opts)?;
        for tr in [&r, &g] {
            if let Some(t) = &tr.termination {
                return Err(VerifyError::Degenerate {
                    h,
                    reason: t.message.clone(),
                });
            }
        }
        deviations.push(roundtrip_series(&r, &g).into_iter().fold(0.0, nan_max));
    }
    let floor_reason = if let Some(d) = deviations.iter().find(|d| !(**d > ROUNDING_FLOOR)) {
        Some(format!(
            "deviation {d:e} at or below rounding floor {ROUNDING_FLOOR:e}"
        ))
    } else {
        None
    };
    let order = if floor_reason.is_some() {
        f64::NAN
    } else {
        let xs: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
        let ys: Vec<f64> = deviations.iter().map(|d| d.ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    };
    Ok(ConvergenceEstimate {
        steps: steps.to_vec(),
        deviations,
        order,
        floor_reason,
    })
}

/// Outcome of fixing the lowering sign in the contracted consistency check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignCalibration {
    pub chosen: SignConvention,
    /// Worst residual over the calibration runs with `dx_j = +dx^j`.
    pub plus: f64,
    /// Same with `dx_j = −dx^j`.
    pub minus: f64,
}

fn calibration_problem(source: &str) -> Problem {
    let expr = PotentialExpr::parse(source, &[] as &[&str]).expect("built-in potential parses");
    let energy = ParticleParams::energy_for_speed(1.0, 1.0, 0.6, 0.0);
    let particle = ParticleParams::new(1.0, 1.0, energy).expect("built-in particle is valid");
    let field = MetricField::new(expr, Params::new(), particle).expect("built-in field is valid");
    Problem {
        field,
        initial: KinematicState::new(0.0, [0.0; 3], [0.6, 0.0, 0.0]),
        t_end: 1.0,
    }
}

fn run_calibration() -> Result<SignCalibration, VerifyError> {
    let (mut plus, mut minus) = (0.0f64, 0.0f64);
    for src in ["0", "0.1*x"] {
        let p = calibration_problem(src);
        for mode in [IntegrationMode::Reference, IntegrationMode::Geodesic] {
            let tr = p.integrate(mode, 1e-3, IntegrationOptions::default())?;
            plus = nan_max(
                plus,
                sample_values(Identity::ContractedConsistency, &tr, SignConvention::Plus)?
                    .into_iter()
                    .fold(0.0, nan_max),
            );
            minus = nan_max(
                minus,
                sample_values(Identity::ContractedConsistency, &tr, SignConvention::Minus)?
                    .into_iter()
                    .fold(0.0, nan_max),
            );
        }
    }
    let chosen = if minus < plus {
        SignConvention::Minus
    } else {
        SignConvention::Plus
    };
    Ok(SignCalibration {
        chosen,
        plus,
        minus,
    })
}

/// Picks the sign whose consistency residual vanishes on a free particle and
/// a uniform field. Computed once per process.
pub fn calibrate_sign() -> Result<SignCalibration, VerifyError> {
    static CELL: OnceLock<Result<SignCalibration, VerifyError>> = OnceLock::new();
    CELL.get_or_init(run_calibration).clone()
}
