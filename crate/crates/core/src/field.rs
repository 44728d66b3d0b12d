//! The time-time metric coefficient `g00` built from a potential.
//!
//! Along a classical trajectory `g00 = v²/c²`. With `γmc² + U = ε` conserved,
//! `γ = (ε − U)/(mc²)` and therefore `g00 = 1 − (mc²/(ε − U))²`, a function of
//! position alone for static potentials.

use thiserror::Error;

use crate::potential::{EvalError, EvalPoint, Params, PotentialExpr};

/// Default guard band: `g00` must stay inside `[δ, 1 − δ]`.
pub const DEFAULT_GUARD: f64 = 1e-6;

/// A spacetime point: coordinate time and Cartesian position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub t: f64,
    pub x: [f64; 3],
}

impl Event {
    pub fn new(t: f64, x: [f64; 3]) -> Self {
        Self { t, x }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    /// `ε − U ≤ mc²` or `g00` below the guard band: the particle would be at rest.
    #[error("turning point at t = {t}: g00 = {goo:e} below guard band")]
    TurningPoint { goo: f64, t: f64 },
    /// `g00` above `1 − δ`: the particle would reach light speed.
    #[error("light-speed limit at t = {t}: g00 = {goo} above guard band")]
    LightSpeed { goo: f64, t: f64 },
    #[error("potential evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("invalid particle parameters: {0}")]
    InvalidParams(String),
    #[error("metric coefficient {0} outside [0, 1)")]
    GooOutOfRange(f64),
}

impl FieldError {
    /// True for guard-band violations, as opposed to evaluation failures.
    pub fn is_degeneracy(&self) -> bool {
        matches!(
            self,
            FieldError::TurningPoint { .. } | FieldError::LightSpeed { .. }
        )
    }
}

/// Mass, light speed and conserved total energy (rest energy included).
///
/// The charge is folded into the potential energy `U = e·φ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParticleParams {
    pub mass: f64,
    pub c: f64,
    pub energy: f64,
}

impl ParticleParams {
    pub fn new(mass: f64, c: f64, energy: f64) -> Result<Self, FieldError> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(FieldError::InvalidParams(format!(
                "mass must be positive, got {mass}"
            )));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(FieldError::InvalidParams(format!(
                "light speed must be positive, got {c}"
            )));
        }
        if !energy.is_finite() {
            return Err(FieldError::InvalidParams(format!(
                "energy must be finite, got {energy}"
            )));
        }
        Ok(Self { mass, c, energy })
    }

    pub fn rest_energy(&self) -> f64 {
        self.mass * self.c * self.c
    }

    /// The constant `C₁ = m·c` fixing `p⁰ = C₁ (1 − g00)^(-1/2)`.
    pub fn momentum_scale(&self) -> f64 {
        self.mass * self.c
    }

    /// Energy for a particle moving with `speed` where the potential is `u`.
    pub fn energy_for_speed(mass: f64, c: f64, speed: f64, u: f64) -> f64 {
        let beta2 = (speed / c).powi(2);
        mass * c * c / (1.0 - beta2).sqrt() + u
    }
}

/// Any source of `g00` and its partials `∂_μ g00`, `μ = 0..3`, with `x⁰ = c·t`.
pub trait MetricCoefficient {
    fn light_speed(&self) -> f64;
    fn goo_with_partials(&self, at: Event) -> Result<(f64, [f64; 4]), FieldError>;
}

fn guarded(goo: f64, guard: f64, t: f64) -> Result<f64, FieldError> {
    if !goo.is_finite() || goo < guard {
        Err(FieldError::TurningPoint { goo, t })
    } else if goo > 1.0 - guard {
        Err(FieldError::LightSpeed { goo, t })
    } else {
        Ok(goo)
    }
}

/// `g00` induced by a potential at fixed total energy.
#[derive(Clone, Debug)]
pub struct MetricField {
    potential: PotentialExpr,
    params: Params,
    particle: ParticleParams,
    guard: f64,
}

impl MetricField {
    pub fn new(
        potential: PotentialExpr,
        params: Params,
        particle: ParticleParams,
    ) -> Result<Self, FieldError> {
        if let Some(missing) = potential
            .referenced_params()
            .into_iter()
            .find(|p| !params.contains_key(*p))
        {
            return Err(EvalError::UnboundParameter(missing.to_owned()).into());
        }
        Ok(Self {
            potential,
            params,
            particle,
            guard: DEFAULT_GUARD,
        })
    }

    pub fn with_guard(mut self, guard: f64) -> Self {
        self.guard = guard;
        self
    }

    pub fn potential(&self) -> &PotentialExpr {
        &self.potential
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn particle(&self) -> &ParticleParams {
        &self.particle
    }

    pub fn guard(&self) -> f64 {
        self.guard
    }

    pub fn is_static(&self) -> bool {
        !self.potential.is_time_dependent()
    }

    pub fn potential_at(&self, at: Event) -> Result<f64, FieldError> {
        Ok(self
            .potential
            .eval(&EvalPoint::new(at.x, at.t, &self.params))?)
    }

    /// `U` and its partials in `(x, y, z, t)` order.
    pub fn potential_with_gradient(&self, at: Event) -> Result<(f64, [f64; 4]), FieldError> {
        Ok(self
            .potential
            .eval_with_gradient(&EvalPoint::new(at.x, at.t, &self.params))?)
    }

    /// Classical force `−∇U`.
    pub fn force(&self, at: Event) -> Result<[f64; 3], FieldError> {
        let (_, g) = self.potential_with_gradient(at)?;
        Ok([-g[0], -g[1], -g[2]])
    }

    fn kinetic_budget(&self, u: f64, t: f64) -> Result<f64, FieldError> {
        let w = self.particle.energy - u;
        let rest = self.particle.rest_energy();
        if w <= rest {
            let goo = if w > 0.0 {
                1.0 - (rest / w).powi(2)
            } else {
                f64::NEG_INFINITY
            };
            return Err(FieldError::TurningPoint { goo, t });
        }
        Ok(w)
    }

    /// `g00 = 1 − (mc²/(ε − U))²`.
    pub fn goo(&self, at: Event) -> Result<f64, FieldError> {
        let u = self.potential_at(at)?;
        let w = self.kinetic_budget(u, at.t)?;
        guarded(
            1.0 - (self.particle.rest_energy() / w).powi(2),
            self.guard,
            at.t,
        )
    }

    /// `∂_μ g00 = −2 (mc²)² (ε − U)⁻³ ∂_μ U`, with `∂₀ = (1/c) ∂/∂t`.
    pub fn goo_partials(&self, at: Event) -> Result<[f64; 4], FieldError> {
        Ok(self.goo_with_partials(at)?.1)
    }

    /// Potential, force and metric at one point from a single evaluation.
    pub fn sample(&self, at: Event) -> Result<FieldSample, FieldError> {
        let (u, du) = self.potential_with_gradient(at)?;
        let w = self.kinetic_budget(u, at.t)?;
        let rest = self.particle.rest_energy();
        let goo = guarded(1.0 - (rest / w).powi(2), self.guard, at.t)?;
        let k = -2.0 * rest * rest / (w * w * w);
        Ok(FieldSample {
            potential: u,
            force: [-du[0], -du[1], -du[2]],
            goo,
            dgoo: [k * du[3] / self.particle.c, k * du[0], k * du[1], k * du[2]],
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub potential: f64,
    /// `−∇U`
    pub force: [f64; 3],
    pub goo: f64,
    /// `∂_μ g00`, `μ = 0..3`.
    pub dgoo: [f64; 4],
}

impl MetricCoefficient for MetricField {
    fn light_speed(&self) -> f64 {
        self.particle.c
    }

    fn goo_with_partials(&self, at: Event) -> Result<(f64, [f64; 4]), FieldError> {
        let s = self.sample(at)?;
        Ok((s.goo, s.dgoo))
    }
}

/// A metric whose `g00` is written down directly as an expression in
/// `(x, y, z, t)` rather than derived from a potential.
#[derive(Clone, Debug)]
pub struct ExplicitMetric {
    goo: PotentialExpr,
    params: Params,
    c: f64,
    guard: f64,
}

impl ExplicitMetric {
    pub fn new(goo: PotentialExpr, params: Params, c: f64) -> Self {
        Self {
            goo,
            params,
            c,
            guard: DEFAULT_GUARD,
        }
    }

    /// Parses a parameter-free `g00` expression.
    pub fn parse(source: &str, c: f64) -> Result<Self, crate::potential::ParseError> {
        Ok(Self::new(
            PotentialExpr::parse::<&str>(source, &[])?,
            Params::new(),
            c,
        ))
    }
}

impl MetricCoefficient for ExplicitMetric {
    fn light_speed(&self) -> f64 {
        self.c
    }

    fn goo_with_partials(&self, at: Event) -> Result<(f64, [f64; 4]), FieldError> {
        let (g, d) = self
            .goo
            .eval_with_gradient(&EvalPoint::new(at.x, at.t, &self.params))?;
        let goo = guarded(g, self.guard, at.t)?;
        Ok((goo, [d[3] / self.c, d[0], d[1], d[2]]))
    }
}

/// Speed `v = c·sqrt(g00)` on the isotropic surface.
pub fn speed_from_goo(goo: f64, c: f64) -> Result<f64, FieldError> {
    if !(0.0..1.0).contains(&goo) {
        return Err(FieldError::GooOutOfRange(goo));
    }
    Ok(c * goo.sqrt())
}
