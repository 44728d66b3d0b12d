//! Connection of the four-dimensional configuration space at a point.
//!
//! Metric `diag(g00, −1, −1, −1)` in coordinates `(x⁰ = c·t, x, y, z)`. The full
//! connection is `Γ^μ_{ων} = {μ, ων} + S^μ_{ων}` where `{}` are the Christoffel
//! symbols and `S` the contortion. Index convention: `∇A^μ = (∂_ν A^μ + Γ^μ_{ων} A^ω) dx^ν`.
//!
//! Which contortion components exist as numbers here:
//!
//! * `S⁰_{ν0} = ½ ∂_ν ln((1 − g00)/g00)`, all four slots.
//! * `S⁰_{0j} = −{0, 0j}`, the value that makes `Q_{j00} = −∂_j g00`.
//! * `Sⁱ_{00}`, reconstructed along a trajectory from the local force.
//! * `Sⁱ_{j0} A^j`, only as a contraction: it equals `{i, 00}` times the
//!   component of `A` along the stored trajectory tangent.
//! * `S⁰_{ij} dx^j`, only as the contraction fixed by the embedding relation.
//! * Purely spatial contortion `Sⁱ_{jk}` is zero.

use thiserror::Error;

use crate::field::{Event, FieldError, MetricCoefficient};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("connection has no reconstructed torsion; Sⁱ₀₀ is required here")]
    UnpopulatedConnection,
    #[error("stored trajectory tangent is zero")]
    DegenerateTangent,
}

/// The non-vanishing Christoffel families of `diag(g00, −1, −1, −1)`.
///
/// `{i, j0}`, `{0, ij}` and `{i, jk}` vanish identically and are not stored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Christoffel {
    /// `{0, 00} = ∂₀g00 / (2 g00)`
    pub time_time: f64,
    /// `{0, i0} = {0, 0i} = ∂ᵢg00 / (2 g00)`
    pub time_space: [f64; 3],
    /// `{i, 00} = ½ ∂ᵢg00`
    pub space_time: [f64; 3],
}

impl Christoffel {
    pub fn from_metric(goo: f64, dgoo: [f64; 4]) -> Self {
        let inv = 0.5 / goo;
        Self {
            time_time: dgoo[0] * inv,
            time_space: [dgoo[1] * inv, dgoo[2] * inv, dgoo[3] * inv],
            space_time: [0.5 * dgoo[1], 0.5 * dgoo[2], 0.5 * dgoo[3]],
        }
    }

    /// `{μ, νω}`, symmetric in the lower pair.
    pub fn component(&self, mu: usize, nu: usize, omega: usize) -> f64 {
        match (mu, nu, omega) {
            (0, 0, 0) => self.time_time,
            (0, 0, j) | (0, j, 0) => self.time_space[j - 1],
            (i, 0, 0) if i > 0 => self.space_time[i - 1],
            _ => 0.0,
        }
    }
}

/// Torsion reconstructed at one trajectory sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconstructedTorsion {
    /// `Sⁱ₀₀`
    pub s_i00: [f64; 3],
    /// `dxⁱ/dx⁰` of the trajectory through this point.
    pub tangent: [f64; 3],
}

/// Everything the connection needs at one spacetime point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConnectionPoint {
    pub goo: f64,
    /// `∂_μ g00`, `μ = 0..3`.
    pub dgoo: [f64; 4],
    pub christoffel: Christoffel,
    /// `S⁰_{ν0}`, `ν = 0..3`.
    pub contortion_0: [f64; 4],
    pub torsion: Option<ReconstructedTorsion>,
}

/// A contravariant 4-vector `A^μ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVector(pub [f64; 4]);

/// How a spatial index is lowered in the contraction `dx_j dp^j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignConvention {
    /// `dx_j = +dx^j`
    Plus,
    /// `dx_j = −dx^j`, lowering with the spatial metric `−δ_ij`.
    Minus,
}

impl SignConvention {
    pub fn lowering(self) -> f64 {
        match self {
            SignConvention::Plus => 1.0,
            SignConvention::Minus => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SignConvention::Plus => "plus",
            SignConvention::Minus => "minus",
        }
    }
}

impl ConnectionPoint {
    /// Closed-form Christoffels and `S⁰_{ν0}` from `g00` and its partials.
    pub fn from_metric(goo: f64, dgoo: [f64; 4]) -> Self {
        // ½ ∂ ln((1 − g)/g) = −∂g / (2 g (1 − g))
        let k = -0.5 / (goo * (1.0 - goo));
        Self {
            goo,
            dgoo,
            christoffel: Christoffel::from_metric(goo, dgoo),
            contortion_0: dgoo.map(|d| k * d),
            torsion: None,
        }
    }

    pub fn contortion_i00(&self) -> Option<[f64; 3]> {
        self.torsion.map(|t| t.s_i00)
    }

    /// Multiplies the reconstructed `Sⁱ₀₀` by `factor`. No-op if absent.
    pub fn scale_torsion(&mut self, factor: f64) {
        if let Some(t) = self.torsion.as_mut() {
            t.s_i00 = t.s_i00.map(|s| s * factor);
        }
    }

    fn require_torsion(&self) -> Result<&ReconstructedTorsion, GeometryError> {
        self.torsion
            .as_ref()
            .ok_or(GeometryError::UnpopulatedConnection)
    }

    /// `{0, ν0} + S⁰_{ν0}`. Equals `½ ∂_ν ln(1 − g00)`.
    pub fn time_connection(&self) -> [f64; 4] {
        let c = &self.christoffel;
        [
            c.time_time + self.contortion_0[0],
            c.time_space[0] + self.contortion_0[1],
            c.time_space[1] + self.contortion_0[2],
            c.time_space[2] + self.contortion_0[3],
        ]
    }

    /// `S⁰_{0j}`, `j = 1..3`.
    pub fn contortion_0_0j(&self) -> [f64; 3] {
        self.christoffel.time_space.map(|c| -c)
    }

    /// `Sⁱ_{j0} A^j` for a spatial vector `A`.
    pub fn mixed_spatial_contraction(&self, a: [f64; 3]) -> Result<[f64; 3], GeometryError> {
        let t = self.require_torsion()?.tangent;
        let norm2 = dot(t, t);
        if norm2 == 0.0 {
            return Err(GeometryError::DegenerateTangent);
        }
        let along = dot(t, a) / norm2;
        Ok(self.christoffel.space_time.map(|c| c * along))
    }

    /// `S⁰_{ij} dx^j`, as fixed by `S⁰_{ij}dx^j = −{0,ij}dx^j + {0,i0}dx⁰`.
    pub fn time_spatial_contraction(&self, dx: [f64; 4]) -> [f64; 3] {
        // {0, ij} vanishes for this metric.
        self.christoffel.time_space.map(|c| c * dx[0])
    }

    /// `Γ^μ_{ν0} A^ν`: the connection with its last index on the time axis,
    /// contracted with `A`.
    pub fn connection_time_column(&self, a: [f64; 4]) -> Result<[f64; 4], GeometryError> {
        let torsion = self.require_torsion()?;
        let time = self.time_connection();
        let mixed = if a[1..].iter().any(|&v| v != 0.0) {
            self.mixed_spatial_contraction([a[1], a[2], a[3]])?
        } else {
            [0.0; 3]
        };
        let mut out = [0.0; 4];
        out[0] = time[0] * a[0] + time[1] * a[1] + time[2] * a[2] + time[3] * a[3];
        for i in 0..3 {
            out[i + 1] = (self.christoffel.space_time[i] + torsion.s_i00[i]) * a[0] + mixed[i];
        }
        Ok(out)
    }

    /// `g00 (dx⁰)² − |dx|²`.
    pub fn interval(&self, dx: [f64; 4]) -> f64 {
        self.goo * dx[0] * dx[0] - (dx[1] * dx[1] + dx[2] * dx[2] + dx[3] * dx[3])
    }

    /// Full connection component `Γ^λ_{ων}` where it is defined pointwise;
    /// `None` for components that only exist as trajectory contractions.
    pub fn full_component(&self, lambda: usize, omega: usize, nu: usize) -> Option<f64> {
        let c = &self.christoffel;
        match (lambda, omega, nu) {
            (0, w, 0) => Some(c.component(0, w, 0) + self.contortion_0[w]),
            (0, 0, j) => Some(c.component(0, 0, j) + self.contortion_0_0j()[j - 1]),
            (i, 0, 0) => self.torsion.map(|t| c.space_time[i - 1] + t.s_i00[i - 1]),
            _ => None,
        }
    }
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Connection at `at`, without torsion.
pub fn connection_at<M: MetricCoefficient + ?Sized>(
    field: &M,
    at: Event,
) -> Result<ConnectionPoint, FieldError> {
    let (goo, dgoo) = field.goo_with_partials(at)?;
    Ok(ConnectionPoint::from_metric(goo, dgoo))
}

/// Line element `dS² = g00 (dx⁰)² − Σ (dxⁱ)²` at `at`.
pub fn interval<M: MetricCoefficient + ?Sized>(
    field: &M,
    at: Event,
    dx: [f64; 4],
) -> Result<f64, FieldError> {
    let (goo, _) = field.goo_with_partials(at)?;
    Ok(goo * dx[0] * dx[0] - (dx[1] * dx[1] + dx[2] * dx[2] + dx[3] * dx[3]))
}

/// Connection part of the absolute differential, `Γ^μ_{ν0} A^ν dx⁰`.
///
/// The flat spatial differential and the spatial contortion both vanish, and
/// `dA` is taken as zero, so only the time-column term remains.
pub fn covariant_differential(
    cp: &ConnectionPoint,
    a: TangentVector,
    dx: [f64; 4],
) -> Result<TangentVector, GeometryError> {
    if dx[0] == 0.0 {
        return Ok(TangentVector([0.0; 4]));
    }
    let col = cp.connection_time_column(a.0)?;
    Ok(TangentVector(col.map(|v| v * dx[0])))
}

/// Non-zero nonmetricity components at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonmetricitySample {
    /// `Q_{000} = 2 g00 S⁰₀₀`
    pub q000: f64,
    /// `Q_{i00} = −∂ᵢ g00`
    pub qi00: [f64; 3],
    /// Every other component is zero by construction.
    pub all_others_zero: bool,
}

impl NonmetricitySample {
    pub fn component(&self, mu: usize, nu: usize, omega: usize) -> f64 {
        match (mu, nu, omega) {
            (0, 0, 0) => self.q000,
            (i, 0, 0) => self.qi00[i - 1],
            _ => 0.0,
        }
    }
}

pub fn nonmetricity_at(cp: &ConnectionPoint) -> NonmetricitySample {
    NonmetricitySample {
        q000: 2.0 * cp.goo * cp.contortion_0[0],
        qi00: [-cp.dgoo[1], -cp.dgoo[2], -cp.dgoo[3]],
        all_others_zero: true,
    }
}

/// `Q_{μνω} = −∇_μ g_{νω}` computed from the assembled connection, for the
/// slots whose connection components are defined pointwise.
pub fn nonmetricity_direct(
    cp: &ConnectionPoint,
    mu: usize,
    nu: usize,
    omega: usize,
) -> Option<f64> {
    let metric = [cp.goo, -1.0, -1.0, -1.0];
    let dmetric =
        |slot: usize, a: usize, b: usize| if a == 0 && b == 0 { cp.dgoo[slot] } else { 0.0 };
    // ∇_μ g_{νω} = ∂_μ g_{νω} − Γ^λ_{νμ} g_{λω} − Γ^λ_{ωμ} g_{νλ}; the metric is diagonal.
    let a = cp.full_component(omega, nu, mu)? * metric[omega];
    let b = cp.full_component(nu, omega, mu)? * metric[nu];
    Some(-(dmetric(mu, nu, omega) - a - b))
}

/// Differentials of a trajectory over one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub dx: [f64; 4],
    pub dp: [f64; 4],
    /// `p⁰` at the start of the step.
    pub p0: f64,
}

/// Contracted embedding residuals at one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbeddingResiduals {
    /// `S⁰_{0j}dx^j + {0,0j}dx^j + 2 S⁰₀₀ dx⁰`
    pub r1: f64,
    /// `S⁰_{ij}dx^j + {0,ij}dx^j − {0,i0}dx⁰`
    pub r2: [f64; 3],
    /// `Sⁱ_{0j}dx^j + {i,0j}dx^j − {i,00}dx⁰`
    pub r3: [f64; 3],
}

impl EmbeddingResiduals {
    pub fn r2_norm(&self) -> f64 {
        dot(self.r2, self.r2).sqrt()
    }

    pub fn r3_norm(&self) -> f64 {
        dot(self.r3, self.r3).sqrt()
    }
}

/// Residuals of the three contracted embedding relations along `step`.
///
/// `Sⁱ_{0j}dx^j` is read off the observed momentum change: the spatial
/// motion equation gives `Sⁱ_{j0}dx^j = −dpⁱ/p⁰ − ({i,00} + Sⁱ₀₀)dx⁰`, and the
/// two index orders are identified along the trajectory.
pub fn embedding_residuals(
    cp: &ConnectionPoint,
    step: &TrajectoryStep,
) -> Result<EmbeddingResiduals, GeometryError> {
    let torsion = cp.require_torsion()?;
    let c = &cp.christoffel;
    let dx = step.dx;
    let dxs = [dx[1], dx[2], dx[3]];

    let s0_0j = cp.contortion_0_0j();
    let r1 = dot(s0_0j, dxs) + dot(c.time_space, dxs) + 2.0 * cp.contortion_0[0] * dx[0];

    let s0_ij = cp.time_spatial_contraction(dx);
    let r2 = std::array::from_fn(|i| s0_ij[i] - c.time_space[i] * dx[0]);

    let r3 = std::array::from_fn(|i| {
        let si_j0 = -step.dp[i + 1] / step.p0 - (c.space_time[i] + torsion.s_i00[i]) * dx[0];
        // {i, 0j} = 0
        si_j0 - c.space_time[i] * dx[0]
    });
    Ok(EmbeddingResiduals { r1, r2, r3 })
}

/// `Sʲ_{ν0}dx^ν dx_j − ({0,ν0} + S⁰_{ν0})dx^ν dx⁰ + {j,ν0}dx^ν dx_j`.
pub fn contracted_consistency_residual(
    cp: &ConnectionPoint,
    dx: [f64; 4],
    sign: SignConvention,
) -> Result<f64, GeometryError> {
    let col = cp.connection_time_column(dx)?;
    let lowered = sign.lowering();
    let spatial = (col[1] * dx[1] + col[2] * dx[2] + col[3] * dx[3]) * lowered;
    Ok(spatial - col[0] * dx[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ExplicitMetric;

    fn cp_at(src: &str, x: [f64; 3], t: f64) -> ConnectionPoint {
        connection_at(&ExplicitMetric::parse(src, 1.0).unwrap(), Event::new(t, x)).unwrap()
    }

    fn with_torsion(mut cp: ConnectionPoint, s: [f64; 3], tangent: [f64; 3]) -> ConnectionPoint {
        cp.torsion = Some(ReconstructedTorsion { s_i00: s, tangent });
        cp
    }

    #[test]
    fn constant_metric_has_flat_connection() {
        let cp = cp_at("0.36", [0.4, 0.1, -2.0], 1.0);
        assert_eq!(
            cp.christoffel,
            Christoffel {
                time_time: 0.0,
                time_space: [0.0; 3],
                space_time: [0.0; 3]
            }
        );
        assert_eq!(cp.contortion_0, [0.0; 4]);
        assert!(cp.torsion.is_none());
        let q = nonmetricity_at(&cp);
        assert_eq!((q.q000, q.qi00), (0.0, [0.0; 3]));
    }

    #[test]
    fn linear_metric_example() {
        let cp = cp_at("0.36 + 0.1*x", [0.0; 3], 0.0);
        assert!((cp.christoffel.space_time[0] - 0.05).abs() < 1e-15);
        assert!((cp.christoffel.time_space[0] - 0.1 / 0.72).abs() < 1e-15);
        assert!((cp.christoffel.time_space[0] - 0.13889).abs() < 1e-5);
        let expect = 0.5 * (-0.1 / 0.64 - 0.1 / 0.36);
        assert!((cp.contortion_0[1] - expect).abs() < 1e-15);
        assert!((cp.contortion_0[1] + 0.21701).abs() < 1e-5);
        let q = nonmetricity_at(&cp);
        assert!((q.qi00[0] + 0.1).abs() < 1e-15);
        assert_eq!(q.q000, 0.0);
    }

    #[test]
    fn time_dependent_metric_example() {
        let cp = cp_at("0.36 + 0.01*t", [0.0; 3], 0.0);
        assert!((cp.christoffel.time_time - 0.01 / 0.72).abs() < 1e-15);
        assert_eq!(cp.christoffel.space_time, [0.0; 3]);
        let q = nonmetricity_at(&cp);
        let s000 = 0.5 * (-0.01 / 0.64 - 0.01 / 0.36);
        assert!((cp.contortion_0[0] - s000).abs() < 1e-15);
        assert!((q.q000 - 2.0 * 0.36 * s000).abs() < 1e-15);
    }

    #[test]
    fn closure_of_time_connection() {
        let cp = cp_at("0.3 + 0.1*x - 0.05*y^2 + 0.02*sin(t)", [0.5, 0.7, 0.0], 0.4);
        let lhs = cp.time_connection();
        for nu in 0..4 {
            let rhs = -0.5 * cp.dgoo[nu] / (1.0 - cp.goo);
            assert!((lhs[nu] - rhs).abs() < 1e-15, "slot {nu}");
        }
    }

    #[test]
    fn christoffels_match_generic_formula() {
        // ½ g^{μλ}(∂_ν g_{λω} + ∂_ω g_{λν} − ∂_λ g_{νω}) with central differences.
        let metric = ExplicitMetric::parse("0.3 + 0.1*x + 0.05*y*z - 0.02*t^2", 1.0).unwrap();
        let at = Event::new(0.7, [0.4, -0.3, 0.8]);
        let cp = connection_at(&metric, at).unwrap();
        let h = 1e-6;
        let goo_at = |slot: usize, s: f64| {
            let mut e = at;
            if slot == 0 {
                e.t += s;
            } else {
                e.x[slot - 1] += s;
            }
            metric.goo_with_partials(e).unwrap().0
        };
        let d: [f64; 4] = std::array::from_fn(|s| (goo_at(s, h) - goo_at(s, -h)) / (2.0 * h));
        let g = [cp.goo, -1.0, -1.0, -1.0];
        let dg = |slot: usize, a: usize, b: usize| if a == 0 && b == 0 { d[slot] } else { 0.0 };
        for mu in 0..4 {
            for nu in 0..4 {
                for om in 0..4 {
                    let generic = 0.5 / g[mu] * (dg(nu, mu, om) + dg(om, mu, nu) - dg(mu, nu, om));
                    let closed = cp.christoffel.component(mu, nu, om);
                    assert!(
                        (generic - closed).abs() <= 1e-6 * closed.abs().max(1e-3),
                        "{{{mu},{nu}{om}}}: {generic} vs {closed}"
                    );
                }
            }
        }
    }

    #[test]
    fn interval_examples() {
        let cp = cp_at("0.36", [0.0; 3], 0.0);
        assert_eq!(cp.interval([0.0; 4]), 0.0);
        assert!(cp.interval([1.0, 0.6, 0.0, 0.0]).abs() < 1e-16);
        assert_eq!(cp.interval([1.0, 0.0, 0.0, 0.0]), 0.36);
        let m = ExplicitMetric::parse("0.36", 1.0).unwrap();
        assert!(
            interval(&m, Event::new(0.0, [0.0; 3]), [1.0, 0.0, 0.6, 0.0])
                .unwrap()
                .abs()
                < 1e-16
        );
    }

    #[test]
    fn covariant_differential_examples() {
        let free = with_torsion(cp_at("0.36", [0.0; 3], 0.0), [0.0; 3], [0.6, 0.0, 0.0]);
        let out = covariant_differential(
            &free,
            TangentVector([1.0, 0.6, 0.0, 0.0]),
            [1e-3, 6e-4, 0.0, 0.0],
        )
        .unwrap();
        assert_eq!(out.0, [0.0; 4]);

        let lin = with_torsion(
            cp_at("0.36 + 0.1*x", [0.0; 3], 0.0),
            [0.2, 0.0, 0.0],
            [0.6, 0.0, 0.0],
        );
        let h = 1e-3;
        let out = covariant_differential(
            &lin,
            TangentVector([1.0, 0.0, 0.0, 0.0]),
            [h, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let want0 = h * (lin.christoffel.time_time + lin.contortion_0[0]);
        assert_eq!(out.0[0], want0);
        assert!((out.0[1] - h * (0.05 + 0.2)).abs() < 1e-18);
    }

    #[test]
    fn covariant_differential_requires_torsion() {
        let cp = cp_at("0.36 + 0.1*x", [0.0; 3], 0.0);
        assert_eq!(
            covariant_differential(
                &cp,
                TangentVector([1.0, 0.0, 0.0, 0.0]),
                [1e-3, 0.0, 0.0, 0.0]
            ),
            Err(GeometryError::UnpopulatedConnection)
        );
    }

    #[test]
    fn direct_nonmetricity_matches_closed_form() {
        let cp = with_torsion(
            cp_at("0.3 + 0.1*x - 0.2*y*z + 0.03*t", [0.2, 0.3, 0.4], 0.5),
            [0.1, -0.2, 0.3],
            [0.5, 0.1, 0.0],
        );
        let q = nonmetricity_at(&cp);
        for mu in 0..4 {
            let direct = nonmetricity_direct(&cp, mu, 0, 0).unwrap();
            assert!(
                (direct - q.component(mu, 0, 0)).abs() < 1e-14,
                "slot {mu}00"
            );
        }
        assert_eq!(q.component(1, 2, 3), 0.0);
        assert_eq!(q.component(0, 1, 0), 0.0);
    }

    #[test]
    fn embedding_residuals_free_particle() {
        let cp = with_torsion(cp_at("0.36", [0.0; 3], 0.0), [0.0; 3], [0.6, 0.0, 0.0]);
        let step = TrajectoryStep {
            dx: [1e-3, 6e-4, 0.0, 0.0],
            dp: [0.0; 4],
            p0: 1.25,
        };
        let r = embedding_residuals(&cp, &step).unwrap();
        assert_eq!((r.r1, r.r2_norm(), r.r3_norm()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn embedding_r3_detects_scaled_torsion() {
        let base = cp_at("0.36 + 0.1*x", [0.0; 3], 0.0);
        let p0 = 1.25;
        let rate = -0.08;
        let s = [-rate / p0 - 2.0 * base.christoffel.space_time[0], 0.0, 0.0];
        let mut cp = with_torsion(base, s, [0.6, 0.0, 0.0]);
        let step = TrajectoryStep {
            dx: [1e-3, 6e-4, 0.0, 0.0],
            dp: [0.0, rate * 1e-3, 0.0, 0.0],
            p0,
        };
        assert!(embedding_residuals(&cp, &step).unwrap().r3_norm() < 1e-15);
        cp.scale_torsion(2.0);
        assert!(embedding_residuals(&cp, &step).unwrap().r3_norm() > 1e-5);
    }

    #[test]
    fn consistency_sign_conventions_differ() {
        // Momentum rate consistent with Sⁱ₀₀ = −(dpⁱ/dx⁰)/p⁰ − 2{i,00}.
        let base = cp_at("0.36 + 0.1*x", [0.0; 3], 0.0);
        let p0 = 1.25;
        let u = [0.6, 0.0, 0.0];
        let rate = -0.08;
        let s = [-rate / p0 - 2.0 * base.christoffel.space_time[0], 0.0, 0.0];
        let cp = with_torsion(base, s, u);
        let dx = [1e-3, 6e-4, 0.0, 0.0];
        let plus = contracted_consistency_residual(&cp, dx, SignConvention::Plus).unwrap();
        let minus = contracted_consistency_residual(&cp, dx, SignConvention::Minus).unwrap();
        assert!(plus != minus);

        let mut corrupted = cp;
        corrupted.scale_torsion(2.0);
        let c_plus = contracted_consistency_residual(&corrupted, dx, SignConvention::Plus).unwrap();
        assert!((c_plus - plus).abs() > 1e-8);
    }
}
