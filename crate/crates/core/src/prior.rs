//! Whittle–Matérn Gaussian prior on the level-set function.
//!
//! Samples solve `(I - l²Δ)^{(ν+1)/2} φ = sqrt(α l²) W` on the disk with
//! `φ = 0` on the boundary, discretised with P1 finite elements. The white
//! noise load is assembled element by element from a square root of the
//! element mass matrix, so its covariance is the consistent mass matrix.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::field::LevelSetField;
use crate::mesh::{hat_gradients, TriMesh};
use crate::sparse::{CsrMatrix, EnvelopeCholesky, TripletBuilder};
use crate::special::{bessel_k, gamma_half_integer};

/// Spatial dimension of the domain.
const DIM: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub nu: f64,
    pub length_scale: f64,
    pub variance: f64,
    /// Prior mean φ̄; `None` means the zero field.
    pub mean_field: Option<LevelSetField>,
}

impl PriorSpec {
    pub fn new(nu: f64, length_scale: f64, variance: f64) -> Result<Self> {
        let spec = PriorSpec {
            nu,
            length_scale,
            variance,
            mean_field: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_mean(mut self, mean: LevelSetField) -> Self {
        self.mean_field = Some(mean);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("nu", self.nu),
            ("length scale", self.length_scale),
            ("variance", self.variance),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "prior {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Number of `(M + l²S)` solves per sample, `(ν + d/2) / 2`; defined only
    /// for odd integer ν.
    pub fn solve_power(&self) -> Result<usize> {
        let p = (self.nu + DIM / 2.0) / 2.0;
        if self.nu.fract() != 0.0 || p.fract() != 0.0 || p < 1.0 {
            return Err(Error::Unsupported(format!(
                "SPDE sampling needs (nu + 1)/2 to be a positive integer, got nu = {}",
                self.nu
            )));
        }
        Ok(p as usize)
    }
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            nu: 1.0,
            length_scale: 0.2,
            variance: 1.0,
            mean_field: None,
        }
    }
}

/// P1 mass and stiffness matrices.
#[derive(Debug, Clone)]
pub struct FemOperators {
    /// Consistent mass matrix on the interior nodes.
    pub mass_matrix: CsrMatrix,
    /// Stiffness matrix on the interior nodes.
    pub stiffness_matrix: CsrMatrix,
    pub full_mass_matrix: CsrMatrix,
    pub full_stiffness_matrix: CsrMatrix,
    /// Row sums of the full mass matrix, one per mesh node.
    pub lumped_mass_diag: Vec<f64>,
    pub dirichlet_mask: Vec<bool>,
    /// Mesh indices of the rows/columns of the interior matrices.
    pub interior_nodes: Vec<usize>,
    pub element_areas: Vec<f64>,
    pub element_nodes: Vec<[usize; 3]>,
}

/// `(area / 12) [[2,1,1],[1,2,1],[1,1,2]]`.
pub fn element_mass_matrix(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// `area ∇λ_i · ∇λ_j`.
pub fn element_stiffness_matrix(mesh: &TriMesh, element: usize) -> [[f64; 3]; 3] {
    let g = hat_gradients(mesh, element);
    let area = mesh.area(element);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (g[i].0 * g[j].0 + g[i].1 * g[j].1);
        }
    }
    k
}

pub fn assemble_fem(mesh: &TriMesh) -> Result<FemOperators> {
    let n = mesh.node_count();
    let mut mass = TripletBuilder::new(n);
    let mut stiff = TripletBuilder::new(n);
    for (e, tri) in mesh.elements().iter().enumerate() {
        let area = mesh.area(e);
        if !(area > 0.0) {
            return Err(Error::Degenerate(format!("element {e} has zero area")));
        }
        let me = element_mass_matrix(area);
        let ke = element_stiffness_matrix(mesh, e);
        for a in 0..3 {
            for b in 0..3 {
                mass.add(tri[a], tri[b], me[a][b]);
                stiff.add(tri[a], tri[b], ke[a][b]);
            }
        }
    }
    let full_mass_matrix = mass.build();
    let full_stiffness_matrix = stiff.build();
    let lumped_mass_diag = full_mass_matrix.row_sums();
    let dirichlet_mask = mesh.boundary_mask().to_vec();
    let interior_nodes: Vec<usize> = (0..n).filter(|&i| !dirichlet_mask[i]).collect();
    if interior_nodes.is_empty() {
        return Err(Error::Degenerate("mesh has no interior nodes".into()));
    }
    Ok(FemOperators {
        mass_matrix: full_mass_matrix.restrict(&interior_nodes),
        stiffness_matrix: full_stiffness_matrix.restrict(&interior_nodes),
        full_mass_matrix,
        full_stiffness_matrix,
        lumped_mass_diag,
        dirichlet_mask,
        interior_nodes,
        element_areas: mesh.areas().to_vec(),
        element_nodes: mesh.elements().to_vec(),
    })
}

/// Matérn covariance `σ² 2^{1-ν}/Γ(ν) (r/l)^ν K_ν(r/l)`, equal to `σ²` at
/// `r = 0`. Supported for ν ∈ {1/2, 1}.
pub fn matern_covariance(r: f64, spec: &PriorSpec) -> Result<f64> {
    spec.validate()?;
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "distance must be >= 0, got {r}"
        )));
    }
    if r == 0.0 {
        // check the order is supported even on the trivial branch
        bessel_k(spec.nu, 1.0)?;
        return Ok(spec.variance);
    }
    let t = r / spec.length_scale;
    let norm = 2f64.powf(1.0 - spec.nu) / gamma_half_integer(spec.nu)?;
    Ok(spec.variance * norm * t.powf(spec.nu) * bessel_k(spec.nu, t)?)
}

/// `α = σ² 2^d π^{d/2} Γ(ν + d/2) / Γ(ν)` with `d = 2`.
pub fn spde_alpha(spec: &PriorSpec) -> Result<f64> {
    spec.validate()?;
    let ratio = gamma_half_integer(spec.nu + DIM / 2.0)? / gamma_half_integer(spec.nu)?;
    Ok(spec.variance * 2f64.powf(DIM) * PI.powf(DIM / 2.0) * ratio)
}

/// Reusable sampler: factorises `M + l²S` on the interior nodes once.
#[derive(Debug, Clone)]
pub struct MaternSampler {
    ops: FemOperators,
    spec: PriorSpec,
    factor: EnvelopeCholesky,
    power: usize,
    amplitude: f64,
    /// Per element: `sqrt(area / 12)` and the interior positions of its
    /// vertices (`None` for boundary vertices).
    elements: Vec<(f64, [Option<usize>; 3])>,
}

impl MaternSampler {
    pub fn new(ops: FemOperators, spec: PriorSpec) -> Result<Self> {
        spec.validate()?;
        let power = spec.solve_power()?;
        let n = ops.lumped_mass_diag.len();
        if let Some(mean) = &spec.mean_field {
            check_len(n, mean.len())?;
        }
        let l2 = spec.length_scale * spec.length_scale;
        let system = ops.mass_matrix.add_scaled(l2, &ops.stiffness_matrix)?;
        let factor = EnvelopeCholesky::factor(&system)?;
        let amplitude = (spde_alpha(&spec)? * l2).sqrt();
        let mut position = vec![None; n];
        for (k, &i) in ops.interior_nodes.iter().enumerate() {
            position[i] = Some(k);
        }
        let elements = ops
            .element_areas
            .iter()
            .zip(&ops.element_nodes)
            .map(|(a, t)| ((a / 12.0).sqrt(), t.map(|v| position[v])))
            .collect();
        Ok(MaternSampler {
            ops,
            spec,
            factor,
            power,
            amplitude,
            elements,
        })
    }

    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    pub fn node_count(&self) -> usize {
        self.ops.lumped_mass_diag.len()
    }

    /// One prior draw, deterministic per seed.
    ///
    /// The white-noise load has covariance equal to the consistent mass
    /// matrix: each element adds `sqrt(|T|/12) (I + 11ᵀ/3) z_T` with
    /// `z_T` standard normal, the square root of its element mass matrix.
    pub fn sample(&self, seed: u64) -> Result<LevelSetField> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; self.ops.interior_nodes.len()];
        for (scale, verts) in &self.elements {
            let z: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let m = (z[0] + z[1] + z[2]) / 3.0;
            for (v, zi) in verts.iter().zip(z) {
                if let Some(k) = v {
                    x[*k] += self.amplitude * scale * (zi + m);
                }
            }
        }
        self.factor.solve_in_place(&mut x)?;
        for _ in 1..self.power {
            x = self.ops.mass_matrix.mul_vec(&x)?;
            self.factor.solve_in_place(&mut x)?;
        }
        let mut out = match &self.spec.mean_field {
            Some(m) => m.values().to_vec(),
            None => vec![0.0; self.node_count()],
        };
        for (&node, v) in self.ops.interior_nodes.iter().zip(x) {
            out[node] += v;
        }
        Ok(LevelSetField::new(out))
    }
}

/// Single draw; builds the factorization on every call, so prefer
/// [`MaternSampler`] when sampling repeatedly.
pub fn sample_field(ops: &FemOperators, spec: &PriorSpec, seed: u64) -> Result<LevelSetField> {
    MaternSampler::new(ops.clone(), spec.clone())?.sample(seed)
}

/// Seed of particle `index` in a run seeded with `run_seed`: the SplitMix64
/// finaliser applied to `run_seed + (index + 1) * 0x9E3779B97F4A7C15`.
pub fn particle_seed(run_seed: u64, index: u64) -> u64 {
    let mut z = run_seed.wrapping_add((index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
