//! Level-set map and the explicit Hamilton–Jacobi evolution driven by the
//! adjoint residual.

use crate::error::{check_len, Error, Result};
use crate::field::{LevelSetField, SourceField};
use crate::forward::{apply_adjoint, apply_forward, ObservationVector, StackedForwardOperator};
use crate::mesh::{element_gradient_unchecked, Point2, TriMesh};

/// Cut levels `c_1 < … < c_{n-1}` and phase values `w_1, …, w_n`.
///
/// Node `x` is assigned `w_l` when `c_{l-1} <= φ(x) < c_l`, with
/// `c_0 = -∞` and `c_n = +∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSpec {
    cut_levels: Vec<f64>,
    phase_values: Vec<f64>,
}

impl ThresholdSpec {
    pub fn new(cut_levels: Vec<f64>, phase_values: Vec<f64>) -> Result<Self> {
        if phase_values.len() < 2 {
            return Err(Error::InvalidArgument("need at least two phases".into()));
        }
        if phase_values.len() != cut_levels.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} cut levels need {} phase values, got {}",
                cut_levels.len(),
                cut_levels.len() + 1,
                phase_values.len()
            )));
        }
        if cut_levels.iter().any(|c| !c.is_finite()) || phase_values.iter().any(|w| !w.is_finite())
        {
            return Err(Error::InvalidArgument(
                "cut levels and phase values must be finite".into(),
            ));
        }
        if cut_levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "cut levels must be strictly increasing".into(),
            ));
        }
        Ok(ThresholdSpec {
            cut_levels,
            phase_values,
        })
    }

    /// Two phases split at zero: background 0, unit source where `φ >= 0`.
    pub fn binary() -> Self {
        ThresholdSpec {
            cut_levels: vec![0.0],
            phase_values: vec![0.0, 1.0],
        }
    }

    pub fn cut_levels(&self) -> &[f64] {
        &self.cut_levels
    }

    pub fn phase_values(&self) -> &[f64] {
        &self.phase_values
    }

    /// Phase index of a single level-set value.
    pub fn phase_of(&self, phi: f64) -> usize {
        self.cut_levels.partition_point(|&c| c <= phi)
    }

    /// Largest phase value; used as the source amplitude in metrics.
    pub fn max_phase_value(&self) -> f64 {
        self.phase_values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        Self::binary()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HJConfig {
    pub time_step: f64,
    /// Scale the velocity so that `max |v| |∇φ| Δt` does not exceed the mesh
    /// size.
    pub cfl_clamp: bool,
    /// Redistance φ to a signed distance function after every step.
    pub reinitialize: bool,
}

impl Default for HJConfig {
    fn default() -> Self {
        HJConfig {
            time_step: 0.1,
            cfl_clamp: true,
            reinitialize: false,
        }
    }
}

impl HJConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_step > 0.0) || !self.time_step.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "time step must be positive, got {}",
                self.time_step
            )));
        }
        Ok(())
    }
}

/// `G(φ)`: node-wise thresholding into phase values.
pub fn level_set_map(phi: &[f64], spec: &ThresholdSpec) -> SourceField {
    SourceField::new(
        phi.iter()
            .map(|&v| spec.phase_values[spec.phase_of(v)])
            .collect(),
    )
}

/// `Re H^*(H f - b)`: the normal speed of the interface.
pub fn velocity_field(
    op: &StackedForwardOperator,
    f: &[f64],
    b: &ObservationVector,
) -> Result<Vec<f64>> {
    let residual = apply_forward(op, f)?.sub(b)?;
    apply_adjoint(op, &residual)
}

/// Nodal `|∇φ|` as the area-weighted mean of the element gradient norms
/// around each node.
pub fn gradient_magnitude(mesh: &TriMesh, phi: &[f64]) -> Result<Vec<f64>> {
    check_len(mesh.node_count(), phi.len())?;
    let elem_norm: Vec<f64> = (0..mesh.element_count())
        .map(|e| {
            let (gx, gy) = element_gradient_unchecked(mesh, phi, e);
            gx.hypot(gy)
        })
        .collect();
    (0..mesh.node_count())
        .map(|i| {
            let adj = mesh.node_elements(i);
            if adj.is_empty() {
                return Err(Error::Degenerate(format!("node {i} belongs to no element")));
            }
            let (mut num, mut den) = (0.0, 0.0);
            for &e in adj {
                num += mesh.area(e) * elem_norm[e];
                den += mesh.area(e);
            }
            Ok(num / den)
        })
        .collect()
}

/// One forward-Euler step `φ ← φ - Δt v |∇φ|`.
pub fn hj_step(
    mesh: &TriMesh,
    phi: &LevelSetField,
    velocity: &[f64],
    cfg: &HJConfig,
) -> Result<LevelSetField> {
    cfg.validate()?;
    check_len(mesh.node_count(), phi.len())?;
    check_len(mesh.node_count(), velocity.len())?;
    let grad = gradient_magnitude(mesh, phi)?;
    let mut scale = 1.0;
    if cfg.cfl_clamp {
        let max_speed = velocity
            .iter()
            .zip(&grad)
            .map(|(v, g)| (v * g).abs())
            .fold(0.0, f64::max);
        let limit = mesh.mesh_size_h();
        if max_speed * cfg.time_step > limit {
            scale = limit / (max_speed * cfg.time_step);
            log::debug!("CFL clamp: velocity scaled by {scale:.3e}");
        }
    }
    let dt = cfg.time_step * scale;
    let mut out: Vec<f64> = phi
        .iter()
        .zip(velocity.iter().zip(&grad))
        .map(|(p, (v, g))| p - dt * v * g)
        .collect();
    if cfg.reinitialize {
        out = reinitialize(mesh, &out)?;
    }
    Ok(LevelSetField::new(out))
}

/// One application of the discrete evolution map: threshold, compute the
/// velocity from the particle's own source, then step.
pub fn evolve_step(
    mesh: &TriMesh,
    op: &StackedForwardOperator,
    phi: &LevelSetField,
    b: &ObservationVector,
    spec: &ThresholdSpec,
    cfg: &HJConfig,
) -> Result<LevelSetField> {
    let f = level_set_map(phi, spec);
    let v = velocity_field(op, &f, b)?;
    hj_step(mesh, phi, &v, cfg)
}

pub fn evolve(
    mesh: &TriMesh,
    op: &StackedForwardOperator,
    phi0: &LevelSetField,
    b: &ObservationVector,
    spec: &ThresholdSpec,
    cfg: &HJConfig,
    steps: usize,
) -> Result<LevelSetField> {
    let mut phi = phi0.clone();
    for _ in 0..steps {
        phi = evolve_step(mesh, op, &phi, b, spec, cfg)?;
    }
    Ok(phi)
}

/// Replaces φ by the signed distance to its piecewise-linear zero level set,
/// keeping the sign of φ at every node. Fields without a zero crossing are
/// returned unchanged.
pub fn reinitialize(mesh: &TriMesh, phi: &[f64]) -> Result<Vec<f64>> {
    check_len(mesh.node_count(), phi.len())?;
    let mut segments: Vec<(Point2, Point2)> = Vec::new();
    for tri in mesh.elements() {
        let mut crossings = Vec::with_capacity(2);
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let (pa, pb) = (phi[a], phi[b]);
            if (pa >= 0.0) != (pb >= 0.0) {
                let t = pa / (pa - pb);
                let (na, nb) = (mesh.nodes()[a], mesh.nodes()[b]);
                crossings.push(Point2::new(
                    na.x + t * (nb.x - na.x),
                    na.y + t * (nb.y - na.y),
                ));
            }
        }
        if crossings.len() == 2 {
            segments.push((crossings[0], crossings[1]));
        }
    }
    if segments.is_empty() {
        return Ok(phi.to_vec());
    }
    Ok(mesh
        .nodes()
        .iter()
        .zip(phi)
        .map(|(p, &v)| {
            let d = segments
                .iter()
                .map(|(a, b)| point_segment_distance(*p, *a, *b))
                .fold(f64::INFINITY, f64::min);
            if v >= 0.0 {
                d
            } else {
                // a negative node must stay strictly negative even when it
                // lies on the reconstructed interface
                -d.max(f64::MIN_POSITIVE)
            }
        })
        .collect())
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.dist(Point2::new(a.x + t * dx, a.y + t * dy))
}
