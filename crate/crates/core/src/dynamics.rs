//! Two integrators for the same motion.
//!
//! *Reference* mode integrates relativistic Newton dynamics
//! `d(γ m v)/dt = −∇U` in coordinate time. *Geodesic* mode integrates the
//! motion equation of the torsionful connection,
//! `dp^μ/dx⁰ = −Γ^μ_{ν0} p⁰ dx^ν/dx⁰`, in `x⁰ = c·t`, with `p⁰` evolved by the
//! connection rather than by the mass shell.
//!
//! The geometry fixes `Sⁱ₀₀` only along a trajectory, so the geodesic
//! right-hand side reconstructs it from the local force at every RK4 stage.
//! What is verified is that the classical trajectory is a geodesic of the
//! connection built along it, not that the connection is independent of the
//! trajectory.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::field::{Event, FieldError, FieldSample, MetricField, ParticleParams};
use crate::geometry::{dot, ConnectionPoint, GeometryError, ReconstructedTorsion};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("initial state is not admissible: {0}")]
    InadmissibleStart(FieldError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid step or interval: {0}")]
    InvalidStep(String),
    #[error("non-positive p0 = {0}")]
    NonPositiveEnergy(f64),
    #[error("adaptive step size underflow at t = {0}")]
    StepUnderflow(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegrationMode {
    Reference,
    Geodesic,
}

impl fmt::Display for IntegrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IntegrationMode::Reference => "reference",
            IntegrationMode::Geodesic => "geodesic",
        })
    }
}

/// Position, velocity and accumulated proper time at coordinate time `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KinematicState {
    pub t: f64,
    pub x: [f64; 3],
    pub v: [f64; 3],
    pub tau: f64,
}

impl KinematicState {
    pub fn new(t: f64, x: [f64; 3], v: [f64; 3]) -> Self {
        Self { t, x, v, tau: 0.0 }
    }

    pub fn event(&self) -> Event {
        Event::new(self.t, self.x)
    }

    pub fn speed(&self) -> f64 {
        dot(self.v, self.v).sqrt()
    }
}

/// Contravariant four-momentum `p^μ = m dx^μ/dτ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourMomentum {
    pub p0: f64,
    pub p: [f64; 3],
}

impl FourMomentum {
    pub fn from_velocity(particle: &ParticleParams, v: [f64; 3]) -> Self {
        let c = particle.c;
        let gamma = 1.0 / (1.0 - dot(v, v) / (c * c)).sqrt();
        let mg = particle.mass * gamma;
        Self {
            p0: mg * c,
            p: v.map(|vi| mg * vi),
        }
    }

    /// Velocity `c·p/p⁰`.
    pub fn velocity(&self, c: f64) -> [f64; 3] {
        self.p.map(|pi| c * pi / self.p0)
    }

    /// Trajectory tangent `dxⁱ/dx⁰ = pⁱ/p⁰`.
    pub fn tangent(&self) -> [f64; 3] {
        self.p.map(|pi| pi / self.p0)
    }
}

/// Solves the spatial motion equation at one sample for `Sⁱ₀₀`, stores it
/// in `cp` and returns it.
///
/// With `Sⁱ_{j0}dx^j = {i,00}dx⁰` along the trajectory,
/// `dpⁱ/dx⁰ = −p⁰(2{i,00} + Sⁱ₀₀)`, and `dpⁱ/dx⁰ = Fⁱ/c` is the classical force.
pub fn torsion_reconstruct(
    cp: &mut ConnectionPoint,
    momentum: &FourMomentum,
    force: [f64; 3],
    c: f64,
) -> Result<[f64; 3], DynamicsError> {
    if !(momentum.p0 > 0.0) {
        return Err(DynamicsError::NonPositiveEnergy(momentum.p0));
    }
    let gauge = cp.christoffel.space_time;
    let s_i00 = std::array::from_fn(|i| -(force[i] / c) / momentum.p0 - gauge[i] - gauge[i]);
    cp.torsion = Some(ReconstructedTorsion {
        s_i00,
        tangent: momentum.tangent(),
    });
    Ok(s_i00)
}

fn rk4<const N: usize, E>(
    f: &mut impl FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
    s: f64,
    y: &[f64; N],
    h: f64,
) -> Result<[f64; N], E> {
    let shifted = |k: &[f64; N], w: f64| std::array::from_fn(|i| y[i] + w * k[i]);
    let k1 = f(s, y)?;
    let k2 = f(s + 0.5 * h, &shifted(&k1, 0.5 * h))?;
    let k3 = f(s + 0.5 * h, &shifted(&k2, 0.5 * h))?;
    let k4 = f(s + h, &shifted(&k3, h))?;
    Ok(std::array::from_fn(|i| {
        y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }))
}

// Reference state: x, p (spatial, γmv), τ, ∫sqrt(1 − g00) dt.
type RefVec = [f64; 8];
// Geodesic state: x, p⁰, p, τ, ∫sqrt(1 − g00) dt.
type GeoVec = [f64; 9];

fn gamma_from_p(particle: &ParticleParams, p: [f64; 3]) -> f64 {
    let mc = particle.momentum_scale();
    (1.0 + dot(p, p) / (mc * mc)).sqrt()
}

fn reference_rhs(field: &MetricField, t: f64, y: &RefVec) -> Result<RefVec, FieldError> {
    let particle = field.particle();
    let x = [y[0], y[1], y[2]];
    let p = [y[3], y[4], y[5]];
    let gamma = gamma_from_p(particle, p);
    let s = field.sample(Event::new(t, x))?;
    let m_gamma = particle.mass * gamma;
    Ok([
        p[0] / m_gamma,
        p[1] / m_gamma,
        p[2] / m_gamma,
        s.force[0],
        s.force[1],
        s.force[2],
        1.0 / gamma,
        (1.0 - s.goo).sqrt(),
    ])
}

/// Connection, torsion and `dp^μ/dx⁰` of the geodesic equation at one point.
fn geodesic_local(
    field: &MetricField,
    t: f64,
    x: [f64; 3],
    momentum: &FourMomentum,
    torsion_scale: f64,
) -> Result<(FieldSample, ConnectionPoint, [f64; 4]), DynamicsError> {
    let particle = field.particle();
    if !(momentum.p0 > 0.0) {
        return Err(DynamicsError::NonPositiveEnergy(momentum.p0));
    }
    if dot(momentum.p, momentum.p).sqrt() >= momentum.p0 {
        return Err(FieldError::LightSpeed { goo: 1.0, t }.into());
    }
    let s = field.sample(Event::new(t, x))?;
    let mut cp = ConnectionPoint::from_metric(s.goo, s.dgoo);
    torsion_reconstruct(&mut cp, momentum, s.force, particle.c)?;
    cp.scale_torsion(torsion_scale);
    let u = momentum.tangent();
    let column = cp.connection_time_column([1.0, u[0], u[1], u[2]])?;
    let rate = column.map(|g| -momentum.p0 * g);
    Ok((s, cp, rate))
}

fn geodesic_rhs(
    field: &MetricField,
    x0: f64,
    y: &GeoVec,
    torsion_scale: f64,
) -> Result<GeoVec, DynamicsError> {
    let particle = field.particle();
    let c = particle.c;
    let momentum = FourMomentum {
        p0: y[3],
        p: [y[4], y[5], y[6]],
    };
    let (s, _, rate) = geodesic_local(field, x0 / c, [y[0], y[1], y[2]], &momentum, torsion_scale)?;
    let u = momentum.tangent();
    Ok([
        u[0],
        u[1],
        u[2],
        rate[0],
        rate[1],
        rate[2],
        rate[3],
        particle.mass / momentum.p0,
        (1.0 - s.goo).sqrt() / c,
    ])
}

/// One RK4 step of the reference dynamics. Proper time advances by
/// `∫ sqrt(1 − v²/c²) dt` with the same stage weights.
pub fn reference_step(
    field: &MetricField,
    state: &KinematicState,
    h: f64,
) -> Result<KinematicState, DynamicsError> {
    if !(h > 0.0) {
        return Err(DynamicsError::InvalidStep(format!("h = {h}")));
    }
    let particle = field.particle();
    let p = FourMomentum::from_velocity(particle, state.v).p;
    let y = [
        state.x[0], state.x[1], state.x[2], p[0], p[1], p[2], state.tau, 0.0,
    ];
    let next = rk4(
        &mut |t, y: &RefVec| reference_rhs(field, t, y),
        state.t,
        &y,
        h,
    )?;
    let p = [next[3], next[4], next[5]];
    let mg = particle.mass * gamma_from_p(particle, p);
    let out = KinematicState {
        t: state.t + h,
        x: [next[0], next[1], next[2]],
        v: p.map(|pi| pi / mg),
        tau: next[6],
    };
    field.goo(out.event())?;
    Ok(out)
}

/// One RK4 step of the geodesic equation over coordinate time `h`
/// (`Δx⁰ = c·h`). The connection and torsion are rebuilt at every stage.
pub fn geodesic_step(
    field: &MetricField,
    state: &KinematicState,
    momentum: &FourMomentum,
    h: f64,
    torsion_scale: f64,
) -> Result<(KinematicState, FourMomentum), DynamicsError> {
    if !(h > 0.0) {
        return Err(DynamicsError::InvalidStep(format!("h = {h}")));
    }
    let c = field.particle().c;
    let y = geo_vec(state, momentum, 0.0);
    let next = rk4(
        &mut |s, y: &GeoVec| geodesic_rhs(field, s, y, torsion_scale),
        c * state.t,
        &y,
        c * h,
    )?;
    let m = FourMomentum {
        p0: next[3],
        p: [next[4], next[5], next[6]],
    };
    let out = KinematicState {
        t: state.t + h,
        x: [next[0], next[1], next[2]],
        v: m.velocity(c),
        tau: next[7],
    };
    field.goo(out.event())?;
    Ok((out, m))
}

fn geo_vec(state: &KinematicState, m: &FourMomentum, tau_metric: f64) -> GeoVec {
    [
        state.x[0], state.x[1], state.x[2], m.p0, m.p[0], m.p[1], m.p[2], state.tau, tau_metric,
    ]
}

/// One recorded point of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySample {
    pub state: KinematicState,
    pub momentum: FourMomentum,
    /// Connection with reconstructed torsion (scaled, in geodesic mode, by
    /// the configured torsion factor).
    pub connection: ConnectionPoint,
    /// `dp^μ/dx⁰` given by this mode's equations of motion.
    pub momentum_rate: [f64; 4],
    /// `∫ sqrt(1 − g00) dt`
    pub tau_metric: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    TurningPoint,
    LightSpeed,
    Evaluation,
    StepUnderflow,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Termination {
    pub reason: TerminationReason,
    pub t: f64,
    pub message: String,
}

impl Termination {
    fn from_error(err: &DynamicsError, t: f64) -> Self {
        let reason = match err {
            DynamicsError::Field(FieldError::TurningPoint { .. }) => {
                TerminationReason::TurningPoint
            }
            DynamicsError::Field(FieldError::LightSpeed { .. }) => TerminationReason::LightSpeed,
            DynamicsError::StepUnderflow(_) => TerminationReason::StepUnderflow,
            _ => TerminationReason::Evaluation,
        };
        Self {
            reason,
            t,
            message: err.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StepRecord {
    Fixed { h: f64 },
    Adaptive { tolerance: f64, initial_h: f64 },
    Grid,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub mode: IntegrationMode,
    pub particle: ParticleParams,
    pub steps: StepRecord,
    pub torsion_scale: f64,
    pub samples: Vec<TrajectorySample>,
    pub termination: Option<Termination>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.state.t).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.termination.is_none()
    }

    pub fn last(&self) -> &TrajectorySample {
        self.samples
            .last()
            .expect("trajectory has at least the initial sample")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrationOptions {
    /// Factor applied to the reconstructed `Sⁱ₀₀` driving the geodesic
    /// equation. `1.0` except when deliberately corrupting the connection.
    pub torsion_scale: f64,
    /// Relative tolerance for step-doubling adaptive control; fixed step if `None`.
    pub adaptive: Option<f64>,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            torsion_scale: 1.0,
            adaptive: None,
        }
    }
}

/// A mode-specific integrator over a generic state vector.
trait Stepper {
    type Vec: Copy + AsRef<[f64]>;
    fn start(&self, initial: &KinematicState) -> Result<Self::Vec, DynamicsError>;
    fn step(&self, t: f64, y: &Self::Vec, h: f64) -> Result<Self::Vec, DynamicsError>;
    fn sample(&self, t: f64, y: &Self::Vec) -> Result<TrajectorySample, DynamicsError>;
}

struct ReferenceStepper<'a> {
    field: &'a MetricField,
}

impl Stepper for ReferenceStepper<'_> {
    type Vec = RefVec;

    fn start(&self, initial: &KinematicState) -> Result<RefVec, DynamicsError> {
        let p = FourMomentum::from_velocity(self.field.particle(), initial.v).p;
        Ok([
            initial.x[0],
            initial.x[1],
            initial.x[2],
            p[0],
            p[1],
            p[2],
            initial.tau,
            0.0,
        ])
    }

    fn step(&self, t: f64, y: &RefVec, h: f64) -> Result<RefVec, DynamicsError> {
        Ok(rk4(
            &mut |t, y: &RefVec| reference_rhs(self.field, t, y),
            t,
            y,
            h,
        )?)
    }

    fn sample(&self, t: f64, y: &RefVec) -> Result<TrajectorySample, DynamicsError> {
        let particle = self.field.particle();
        let c = particle.c;
        let x = [y[0], y[1], y[2]];
        let p = [y[3], y[4], y[5]];
        let mg = particle.mass * gamma_from_p(particle, p);
        let v = p.map(|pi| pi / mg);
        let momentum = FourMomentum { p0: mg * c, p };
        let s = self.field.sample(Event::new(t, x))?;
        let mut cp = ConnectionPoint::from_metric(s.goo, s.dgoo);
        torsion_reconstruct(&mut cp, &momentum, s.force, c)?;
        let rate = [
            dot(s.force, v) / (c * c),
            s.force[0] / c,
            s.force[1] / c,
            s.force[2] / c,
        ];
        Ok(TrajectorySample {
            state: KinematicState { t, x, v, tau: y[6] },
            momentum,
            connection: cp,
            momentum_rate: rate,
            tau_metric: y[7],
        })
    }
}

struct GeodesicStepper<'a> {
    field: &'a MetricField,
    torsion_scale: f64,
}

impl Stepper for GeodesicStepper<'_> {
    type Vec = GeoVec;

    fn start(&self, initial: &KinematicState) -> Result<GeoVec, DynamicsError> {
        let m = FourMomentum::from_velocity(self.field.particle(), initial.v);
        Ok(geo_vec(initial, &m, 0.0))
    }

    fn step(&self, t: f64, y: &GeoVec, h: f64) -> Result<GeoVec, DynamicsError> {
        let c = self.field.particle().c;
        rk4(
            &mut |s, y: &GeoVec| geodesic_rhs(self.field, s, y, self.torsion_scale),
            c * t,
            y,
            c * h,
        )
    }

    fn sample(&self, t: f64, y: &GeoVec) -> Result<TrajectorySample, DynamicsError> {
        let c = self.field.particle().c;
        let x = [y[0], y[1], y[2]];
        let momentum = FourMomentum {
            p0: y[3],
            p: [y[4], y[5], y[6]],
        };
        let (_, cp, rate) = geodesic_local(self.field, t, x, &momentum, self.torsion_scale)?;
        Ok(TrajectorySample {
            state: KinematicState {
                t,
                x,
                v: momentum.velocity(c),
                tau: y[7],
            },
            momentum,
            connection: cp,
            momentum_rate: rate,
            tau_metric: y[8],
        })
    }
}

fn check_interval(t0: f64, h: f64, t_end: f64) -> Result<(), DynamicsError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(DynamicsError::InvalidStep(format!(
            "step must be positive, got {h}"
        )));
    }
    if !(t_end > t0) {
        return Err(DynamicsError::InvalidStep(format!(
            "t_end = {t_end} must exceed t0 = {t0}"
        )));
    }
    Ok(())
}

fn first_sample<S: Stepper>(
    stepper: &S,
    initial: &KinematicState,
) -> Result<(S::Vec, TrajectorySample), DynamicsError> {
    let start = |e: DynamicsError| match e {
        DynamicsError::Field(f) => DynamicsError::InadmissibleStart(f),
        other => other,
    };
    let y = stepper.start(initial).map_err(start)?;
    let sample = stepper.sample(initial.t, &y).map_err(start)?;
    Ok((y, sample))
}

fn run_grid<S: Stepper>(
    stepper: &S,
    initial: &KinematicState,
    times: &[f64],
) -> Result<(Vec<TrajectorySample>, Option<Termination>), DynamicsError> {
    let (mut y, first) = first_sample(stepper, initial)?;
    let mut samples = vec![first];
    for w in times.windows(2) {
        let (t, t_next) = (w[0], w[1]);
        let next = stepper.step(t, &y, t_next - t).and_then(|y_next| {
            let sample = stepper.sample(t_next, &y_next)?;
            Ok((y_next, sample))
        });
        match next {
            Ok((y_next, sample)) => {
                y = y_next;
                samples.push(sample);
            }
            Err(e) => return Ok((samples, Some(Termination::from_error(&e, t)))),
        }
    }
    Ok((samples, None))
}

fn run_adaptive<S: Stepper>(
    stepper: &S,
    initial: &KinematicState,
    h0: f64,
    t_end: f64,
    tol: f64,
) -> Result<(Vec<TrajectorySample>, Option<Termination>), DynamicsError> {
    let (mut y, first) = first_sample(stepper, initial)?;
    let mut samples = vec![first];
    let mut t = initial.t;
    let mut h = h0;
    let min_h = 1e-12 * (t_end - initial.t);
    while t < t_end {
        let h_try = h.min(t_end - t);
        let attempt = (|| {
            let full = stepper.step(t, &y, h_try)?;
            let half = stepper.step(t, &y, 0.5 * h_try)?;
            let two = stepper.step(t + 0.5 * h_try, &half, 0.5 * h_try)?;
            Ok::<_, DynamicsError>((full, two))
        })();
        let (full, two) = match attempt {
            Ok(v) => v,
            Err(e) => return Ok((samples, Some(Termination::from_error(&e, t)))),
        };
        let err = full
            .as_ref()
            .iter()
            .zip(two.as_ref())
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        if err <= tol {
            let t_next = if t_end - t <= h_try { t_end } else { t + h_try };
            match stepper.sample(t_next, &two) {
                Ok(s) => samples.push(s),
                Err(e) => return Ok((samples, Some(Termination::from_error(&e, t)))),
            }
            y = two;
            t = t_next;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0)
        };
        h = h_try * factor;
        if h < min_h {
            let e = DynamicsError::StepUnderflow(t);
            return Ok((samples, Some(Termination::from_error(&e, t))));
        }
    }
    Ok((samples, None))
}

/// Sample times `t0, t0 + h, …, t_end` (last step shortened if needed).
pub fn fixed_grid(t0: f64, h: f64, t_end: f64) -> Vec<f64> {
    let n = ((t_end - t0) / h - 1e-9).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..n).map(|k| t0 + k as f64 * h).collect();
    times.push(t_end);
    times
}

/// Integrates from `initial` to `t_end`. Guard-band contact or any
/// evaluation failure after the start ends the run early with a recorded
/// reason; the samples up to that point are kept.
pub fn integrate(
    mode: IntegrationMode,
    field: &MetricField,
    initial: &KinematicState,
    h: f64,
    t_end: f64,
    options: IntegrationOptions,
) -> Result<Trajectory, DynamicsError> {
    check_interval(initial.t, h, t_end)?;
    let (samples, termination) = match options.adaptive {
        Some(tol) => match mode {
            IntegrationMode::Reference => {
                run_adaptive(&ReferenceStepper { field }, initial, h, t_end, tol)?
            }
            IntegrationMode::Geodesic => run_adaptive(
                &GeodesicStepper {
                    field,
                    torsion_scale: options.torsion_scale,
                },
                initial,
                h,
                t_end,
                tol,
            )?,
        },
        None => {
            return integrate_on_grid(
                mode,
                field,
                initial,
                &fixed_grid(initial.t, h, t_end),
                options,
            )
            .map(|mut tr| {
                tr.steps = StepRecord::Fixed { h };
                tr
            })
        }
    };
    Ok(Trajectory {
        mode,
        particle: *field.particle(),
        steps: StepRecord::Adaptive {
            tolerance: options.adaptive.unwrap_or_default(),
            initial_h: h,
        },
        torsion_scale: if mode == IntegrationMode::Geodesic {
            options.torsion_scale
        } else {
            1.0
        },
        samples,
        termination,
    })
}

/// Integrates with one RK4 step between consecutive entries of `times`.
pub fn integrate_on_grid(
    mode: IntegrationMode,
    field: &MetricField,
    initial: &KinematicState,
    times: &[f64],
    options: IntegrationOptions,
) -> Result<Trajectory, DynamicsError> {
    if times.len() < 2 || times[0] != initial.t || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DynamicsError::InvalidStep(
            "grid must start at t0 and increase strictly".into(),
        ));
    }
    let (samples, termination) = match mode {
        IntegrationMode::Reference => run_grid(&ReferenceStepper { field }, initial, times)?,
        IntegrationMode::Geodesic => run_grid(
            &GeodesicStepper {
                field,
                torsion_scale: options.torsion_scale,
            },
            initial,
            times,
        )?,
    };
    Ok(Trajectory {
        mode,
        particle: *field.particle(),
        steps: StepRecord::Grid,
        torsion_scale: if mode == IntegrationMode::Geodesic {
            options.torsion_scale
        } else {
            1.0
        },
        samples,
        termination,
    })
}

/// A field, a starting state and an end time.
#[derive(Clone, Debug)]
pub struct Problem {
    pub field: MetricField,
    pub initial: KinematicState,
    pub t_end: f64,
}

impl Problem {
    pub fn integrate(
        &self,
        mode: IntegrationMode,
        h: f64,
        options: IntegrationOptions,
    ) -> Result<Trajectory, DynamicsError> {
        integrate(mode, &self.field, &self.initial, h, self.t_end, options)
    }
}
