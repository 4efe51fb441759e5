//! Multi-frequency observation operator built from the potential
//! representation `u(k, x) = A(k) ∫ f(y) H_0^{(1)}(k|x - y|) dy`.
//!
//! Every per-frequency block is a dense `N_receivers × N_nodes` complex
//! matrix acting on nodal values of a piecewise-linear source. Filter algebra
//! uses the real-stacked view: all real parts (frequency-major) followed by
//! all imaginary parts.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::field::SourceField;
use crate::mesh::{Point2, ReceiverArray, TriMesh, TriQuadRule};
use crate::special::hankel_h0_first_kind;

/// How the configured frequency range is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencyUnits {
    /// Values are temporal frequencies in Hz, converted with `k = 2πf / c0`.
    Hertz,
    /// Values are wave numbers used as-is.
    WaveNumber,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveNumberGrid {
    frequencies_hz: Vec<f64>,
    sound_speed: f64,
    wave_numbers: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl WaveNumberGrid {
    /// Grid from temporal frequencies in Hz with unit amplitudes.
    pub fn from_frequencies(frequencies_hz: Vec<f64>, sound_speed: f64) -> Result<Self> {
        if !(sound_speed > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sound speed must be positive, got {sound_speed}"
            )));
        }
        let wave_numbers = frequencies_hz
            .iter()
            .map(|f| 2.0 * PI * f / sound_speed)
            .collect();
        let amplitudes = vec![1.0; frequencies_hz.len()];
        Self::from_parts(frequencies_hz, sound_speed, wave_numbers, amplitudes)
    }

    /// Grid from wave numbers with unit amplitudes.
    pub fn from_wave_numbers(wave_numbers: Vec<f64>, sound_speed: f64) -> Result<Self> {
        if !(sound_speed > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sound speed must be positive, got {sound_speed}"
            )));
        }
        let freqs = wave_numbers
            .iter()
            .map(|k| k * sound_speed / (2.0 * PI))
            .collect();
        let amplitudes = vec![1.0; wave_numbers.len()];
        Self::from_parts(freqs, sound_speed, wave_numbers, amplitudes)
    }

    /// `count` values log-spaced over `[min, max]`, read according to `units`.
    pub fn log_spaced(
        min: f64,
        max: f64,
        count: usize,
        sound_speed: f64,
        units: FrequencyUnits,
    ) -> Result<Self> {
        if count == 0 || !(min > 0.0) || !(max >= min) {
            return Err(Error::InvalidArgument(format!(
                "need count >= 1 and 0 < min <= max, got {count} values over [{min}, {max}]"
            )));
        }
        if count > 1 && max == min {
            return Err(Error::InvalidArgument("repeated frequency in grid".into()));
        }
        let values: Vec<f64> = if count == 1 {
            vec![min]
        } else {
            let (lo, hi) = (min.ln(), max.ln());
            (0..count)
                .map(|i| {
                    if i == 0 {
                        min
                    } else if i == count - 1 {
                        max
                    } else {
                        (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp()
                    }
                })
                .collect()
        };
        match units {
            FrequencyUnits::Hertz => Self::from_frequencies(values, sound_speed),
            FrequencyUnits::WaveNumber => Self::from_wave_numbers(values, sound_speed),
        }
    }

    fn from_parts(
        frequencies_hz: Vec<f64>,
        sound_speed: f64,
        wave_numbers: Vec<f64>,
        amplitudes: Vec<f64>,
    ) -> Result<Self> {
        if wave_numbers.is_empty() {
            return Err(Error::InvalidArgument("empty frequency grid".into()));
        }
        if wave_numbers.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
            return Err(Error::InvalidArgument(
                "wave numbers must be positive and finite".into(),
            ));
        }
        if wave_numbers.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "wave numbers must be strictly increasing".into(),
            ));
        }
        Ok(WaveNumberGrid {
            frequencies_hz,
            sound_speed,
            wave_numbers,
            amplitudes,
        })
    }

    /// Replaces the per-frequency amplitudes `A(k)`.
    pub fn with_amplitudes(mut self, amplitudes: Vec<f64>) -> Result<Self> {
        check_len(self.wave_numbers.len(), amplitudes.len())?;
        self.amplitudes = amplitudes;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.wave_numbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wave_numbers.is_empty()
    }

    pub fn wave_numbers(&self) -> &[f64] {
        &self.wave_numbers
    }

    pub fn frequencies_hz(&self) -> &[f64] {
        &self.frequencies_hz
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardMatrixPerK {
    pub entries: DMatrix<Complex64>,
    pub wave_number: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedForwardOperator {
    per_k: Vec<ForwardMatrixPerK>,
    receiver_count: usize,
    node_count: usize,
}

impl StackedForwardOperator {
    pub fn from_blocks(per_k: Vec<ForwardMatrixPerK>) -> Result<Self> {
        let first = per_k
            .first()
            .ok_or_else(|| Error::InvalidArgument("no frequency blocks".into()))?;
        let (n_rec, n_nodes) = first.entries.shape();
        for b in &per_k {
            check_len(n_rec, b.entries.nrows())?;
            check_len(n_nodes, b.entries.ncols())?;
        }
        Ok(StackedForwardOperator {
            per_k,
            receiver_count: n_rec,
            node_count: n_nodes,
        })
    }

    pub fn per_k(&self) -> &[ForwardMatrixPerK] {
        &self.per_k
    }

    pub fn per_k_mut(&mut self) -> &mut [ForwardMatrixPerK] {
        &mut self.per_k
    }

    pub fn receiver_count(&self) -> usize {
        self.receiver_count
    }

    pub fn frequency_count(&self) -> usize {
        self.per_k.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Number of complex observations `N·M`.
    pub fn total_rows(&self) -> usize {
        self.receiver_count * self.per_k.len()
    }

    /// Dimension of the real-stacked data space, `2·N·M`.
    pub fn data_dim(&self) -> usize {
        2 * self.total_rows()
    }

    /// Real matrix mapping nodal values to the real-stacked data vector.
    pub fn real_stacked_matrix(&self) -> DMatrix<f64> {
        let nm = self.total_rows();
        let n = self.receiver_count;
        let mut out = DMatrix::zeros(2 * nm, self.node_count);
        for (m, block) in self.per_k.iter().enumerate() {
            for j in 0..n {
                for p in 0..self.node_count {
                    let z = block.entries[(j, p)];
                    out[(m * n + j, p)] = z.re;
                    out[(nm + m * n + j, p)] = z.im;
                }
            }
        }
        out
    }
}

/// Complex data vector ordered frequency-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationVector {
    values: Vec<Complex64>,
    receiver_count: usize,
}

impl ObservationVector {
    pub fn new(values: Vec<Complex64>, receiver_count: usize) -> Result<Self> {
        if receiver_count == 0 || !values.len().is_multiple_of(receiver_count) {
            return Err(Error::InvalidArgument(format!(
                "{} observations do not split into blocks of {receiver_count} receivers",
                values.len()
            )));
        }
        Ok(ObservationVector {
            values,
            receiver_count,
        })
    }

    pub fn zeros(op: &StackedForwardOperator) -> Self {
        ObservationVector {
            values: vec![Complex64::new(0.0, 0.0); op.total_rows()],
            receiver_count: op.receiver_count(),
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn receiver_count(&self) -> usize {
        self.receiver_count
    }

    pub fn frequency_count(&self) -> usize {
        self.values.len() / self.receiver_count
    }

    pub fn to_real_stacked(&self) -> DVector<f64> {
        let nm = self.values.len();
        DVector::from_fn(2 * nm, |i, _| {
            if i < nm {
                self.values[i].re
            } else {
                self.values[i - nm].im
            }
        })
    }

    pub fn from_real_stacked(v: &DVector<f64>, receiver_count: usize) -> Result<Self> {
        if !v.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(
                "real-stacked vector has odd length".into(),
            ));
        }
        let nm = v.len() / 2;
        Self::new(
            (0..nm).map(|i| Complex64::new(v[i], v[nm + i])).collect(),
            receiver_count,
        )
    }

    pub fn sub(&self, other: &ObservationVector) -> Result<ObservationVector> {
        check_len(self.len(), other.len())?;
        Ok(ObservationVector {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
            receiver_count: self.receiver_count,
        })
    }

    /// Euclidean norm, equal to the norm of the real-stacked vector.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("freq_index,receiver_index,re,im\n");
        for (i, z) in self.values.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{:?},{:?}",
                i / self.receiver_count,
                i % self.receiver_count,
                z.re,
                z.im
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "freq_index,receiver_index,re,im" => {}
            _ => return Err(Error::parse("data csv line 1", "missing header")),
        }
        let mut rows: Vec<(usize, usize, Complex64)> = Vec::new();
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let loc = || format!("data csv line {}", ln + 1);
            let c: Vec<&str> = line.split(',').map(str::trim).collect();
            if c.len() != 4 {
                return Err(Error::parse(loc(), "expected 4 columns"));
            }
            let m: usize = c[0]
                .parse()
                .map_err(|_| Error::parse(loc(), "bad freq_index"))?;
            let j: usize = c[1]
                .parse()
                .map_err(|_| Error::parse(loc(), "bad receiver_index"))?;
            let re: f64 = c[2].parse().map_err(|_| Error::parse(loc(), "bad re"))?;
            let im: f64 = c[3].parse().map_err(|_| Error::parse(loc(), "bad im"))?;
            rows.push((m, j, Complex64::new(re, im)));
        }
        let n = rows.iter().map(|r| r.1).max().map_or(0, |m| m + 1);
        let mut values = Vec::with_capacity(rows.len());
        for (i, (m, j, z)) in rows.into_iter().enumerate() {
            if n == 0 || m != i / n || j != i % n {
                return Err(Error::parse(
                    format!("data csv row {}", i + 1),
                    "rows must be in lexicographic (freq_index, receiver_index) order",
                ));
            }
            values.push(z);
        }
        Self::new(values, n.max(1))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Observation noise `η ~ N(0, δ² I)` on the real-stacked data space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub delta: f64,
}

impl NoiseModel {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise level must be >= 0, got {delta}"
            )));
        }
        Ok(NoiseModel { delta })
    }

    /// Diagonal entry of Γ.
    pub fn variance(&self) -> f64 {
        self.delta * self.delta
    }
}

/// Assembles the per-frequency matrices by quadrature of the potential
/// integral over every mesh triangle.
///
/// Entry `(j, p)` is `A(k) Σ_T Σ_q w_q |T| H_0^{(1)}(k |x_j - y_q|) λ_p(y_q)`.
pub fn assemble_forward(
    mesh: &TriMesh,
    receivers: &ReceiverArray,
    kgrid: &WaveNumberGrid,
    quad: &TriQuadRule,
) -> Result<StackedForwardOperator> {
    if mesh.element_count() == 0 {
        return Err(Error::Degenerate("empty mesh".into()));
    }
    if receivers.is_empty() {
        return Err(Error::InvalidArgument("no receivers".into()));
    }
    let radius = mesh.radius();
    if let Some(r) = receivers.points().iter().find(|r| !(r.norm() > radius)) {
        return Err(Error::InvalidArgument(format!(
            "receiver ({}, {}) lies inside or on the source disk of radius {radius}",
            r.x, r.y
        )));
    }

    // Quadrature points, weights (times area) and the three supporting nodes.
    struct QuadPoint {
        y: Point2,
        weight: f64,
        nodes: [usize; 3],
        lambda: [f64; 3],
    }
    let mut qpts = Vec::with_capacity(mesh.element_count() * quad.len());
    for e in 0..mesh.element_count() {
        let verts = mesh.vertices(e);
        let area = mesh.area(e);
        for (y, (l, w)) in quad
            .map_points(&verts)
            .into_iter()
            .zip(quad.barycentric_points.iter().zip(&quad.weights))
        {
            qpts.push(QuadPoint {
                y,
                weight: w * area,
                nodes: mesh.elements()[e],
                lambda: *l,
            });
        }
    }

    let n_rec = receivers.len();
    let n_nodes = mesh.node_count();
    let rows: Vec<(usize, usize)> = (0..kgrid.len())
        .flat_map(|m| (0..n_rec).map(move |j| (m, j)))
        .collect();
    let row_values: Vec<Vec<Complex64>> = rows
        .par_iter()
        .map(|&(m, j)| -> Result<Vec<Complex64>> {
            let k = kgrid.wave_numbers()[m];
            let amp = kgrid.amplitudes()[m];
            let x = receivers.points()[j];
            let mut row = vec![Complex64::new(0.0, 0.0); n_nodes];
            for q in &qpts {
                let kernel = hankel_h0_first_kind(k * x.dist(q.y))? * (amp * q.weight);
                for (node, l) in q.nodes.iter().zip(q.lambda) {
                    row[*node] += kernel * l;
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut per_k = Vec::with_capacity(kgrid.len());
    for m in 0..kgrid.len() {
        let entries = DMatrix::from_fn(n_rec, n_nodes, |j, p| row_values[m * n_rec + j][p]);
        per_k.push(ForwardMatrixPerK {
            entries,
            wave_number: kgrid.wave_numbers()[m],
        });
    }
    StackedForwardOperator::from_blocks(per_k)
}

/// `b_m = H_{k_m} f`, stacked frequency-major.
pub fn apply_forward(op: &StackedForwardOperator, f: &[f64]) -> Result<ObservationVector> {
    check_len(op.node_count(), f.len())?;
    let mut values = Vec::with_capacity(op.total_rows());
    for block in op.per_k() {
        let h = &block.entries;
        for j in 0..h.nrows() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (p, &fp) in f.iter().enumerate() {
                acc += h[(j, p)] * fp;
            }
            values.push(acc);
        }
    }
    ObservationVector::new(values, op.receiver_count())
}

/// `Re(Σ_m H_{k_m}^* r_m)`, the adjoint of [`apply_forward`] for the real
/// inner product `Re⟨·,·⟩` on data space.
pub fn apply_adjoint(
    op: &StackedForwardOperator,
    residual: &ObservationVector,
) -> Result<Vec<f64>> {
    check_len(op.total_rows(), residual.len())?;
    let n = op.receiver_count();
    let mut out = vec![0.0; op.node_count()];
    for (m, block) in op.per_k().iter().enumerate() {
        let h = &block.entries;
        for (p, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..n {
                let z = h[(j, p)];
                let r = residual.values()[m * n + j];
                acc += z.re * r.re + z.im * r.im;
            }
            *o += acc;
        }
    }
    Ok(out)
}

/// Synthetic data `b = H f_true + η` with `η` having independent
/// `N(0, δ²)` real and imaginary parts; deterministic per seed.
pub fn generate_data(
    op_fine: &StackedForwardOperator,
    f_true: &SourceField,
    noise: NoiseModel,
    seed: u64,
) -> Result<ObservationVector> {
    let noise = NoiseModel::new(noise.delta)?;
    let mut b = apply_forward(op_fine, f_true)?;
    if noise.delta > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for z in b.values_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z += Complex64::new(noise.delta * re, noise.delta * im);
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_disk_mesh, square_receivers, triangle_quadrature};

    fn small_problem() -> (TriMesh, StackedForwardOperator) {
        let mesh = build_disk_mesh(1.0, 0.3).unwrap();
        let rec = square_receivers(2.0, 3).unwrap();
        let k = WaveNumberGrid::from_wave_numbers(vec![1.0, 3.0], 343.0).unwrap();
        let op = assemble_forward(&mesh, &rec, &k, &triangle_quadrature(2).unwrap()).unwrap();
        (mesh, op)
    }

    #[test]
    fn zero_source_gives_zero_data() {
        let (mesh, op) = small_problem();
        let b = apply_forward(&op, &vec![0.0; mesh.node_count()]).unwrap();
        assert!(b.values().iter().all(|z| *z == Complex64::new(0.0, 0.0)));
        assert_eq!(b.len(), 16);
    }

    #[test]
    fn homogeneity_is_exact() {
        let (mesh, op) = small_problem();
        let f: Vec<f64> = mesh.nodes().iter().map(|p| p.x - 0.3 * p.y).collect();
        let f2: Vec<f64> = f.iter().map(|v| 2.0 * v).collect();
        let a = apply_forward(&op, &f).unwrap();
        let b = apply_forward(&op, &f2).unwrap();
        for (u, v) in a.values().iter().zip(b.values()) {
            assert_eq!(*u * 2.0, *v);
        }
    }

    #[test]
    fn rejects_receiver_inside_disk() {
        let mesh = build_disk_mesh(1.0, 0.3).unwrap();
        let rec = square_receivers(0.5, 3).unwrap();
        let k = WaveNumberGrid::from_wave_numbers(vec![1.0], 343.0).unwrap();
        assert!(assemble_forward(&mesh, &rec, &k, &triangle_quadrature(2).unwrap()).is_err());
        let on = square_receivers(1.0, 3).unwrap();
        assert!(assemble_forward(&mesh, &on, &k, &triangle_quadrature(2).unwrap()).is_err());
    }

    #[test]
    fn shape_errors() {
        let (_, op) = small_problem();
        assert!(apply_forward(&op, &[1.0, 2.0]).is_err());
        let r = ObservationVector::new(vec![Complex64::new(0.0, 0.0); 8], 8).unwrap();
        assert!(apply_adjoint(&op, &r).is_err());
    }

    #[test]
    fn real_stacked_matches_complex_apply() {
        let (mesh, op) = small_problem();
        let f: Vec<f64> = mesh
            .nodes()
            .iter()
            .map(|p| (p.x * 3.0).sin() + p.y)
            .collect();
        let b = apply_forward(&op, &f).unwrap().to_real_stacked();
        let h = op.real_stacked_matrix();
        let hb = &h * DVector::from_column_slice(&f);
        assert!((hb - &b).norm() <= 1e-13 * b.norm());
    }

    #[test]
    fn noise_free_and_seeded_data() {
        let (mesh, op) = small_problem();
        let f = SourceField::new(vec![1.0; mesh.node_count()]);
        let clean = apply_forward(&op, &f).unwrap();
        assert_eq!(
            generate_data(&op, &f, NoiseModel::new(0.0).unwrap(), 3).unwrap(),
            clean
        );
        let n1 = generate_data(&op, &f, NoiseModel::new(0.1).unwrap(), 7).unwrap();
        let n2 = generate_data(&op, &f, NoiseModel::new(0.1).unwrap(), 7).unwrap();
        assert_eq!(n1, n2);
        assert_ne!(n1, clean);
        assert!(NoiseModel::new(-1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let (mesh, op) = small_problem();
        let f = SourceField::new(mesh.nodes().iter().map(|p| p.x).collect());
        let b = generate_data(&op, &f, NoiseModel::new(0.05).unwrap(), 1).unwrap();
        let back = ObservationVector::from_csv(&b.to_csv()).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn log_spaced_grid() {
        let g =
            WaveNumberGrid::log_spaced(50.0, 10_000.0, 6, 343.0, FrequencyUnits::Hertz).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.frequencies_hz()[0], 50.0);
        assert_eq!(g.frequencies_hz()[5], 10_000.0);
        assert!((g.wave_numbers()[0] - 2.0 * PI * 50.0 / 343.0).abs() < 1e-12);
        let raw = WaveNumberGrid::log_spaced(50.0, 10_000.0, 3, 343.0, FrequencyUnits::WaveNumber)
            .unwrap();
        assert_eq!(raw.wave_numbers()[0], 50.0);
        assert!(WaveNumberGrid::from_wave_numbers(vec![2.0, 1.0], 343.0).is_err());
    }
}
