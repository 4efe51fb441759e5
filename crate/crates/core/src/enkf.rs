//! Ensemble Kalman filtering of the level-set state.
//!
//! Two state augmentations are supported. [`Algorithm::Alg1`] carries a
//! source field next to each level-set particle and observes it through the
//! forward operator; [`Algorithm::Alg2`] carries the predicted data vector
//! itself. Ensemble covariances are only ever used in factored form
//! `(1/J) A Bᵀ`, with `A`, `B` the anomaly matrices, and the gain is applied
//! through a Cholesky solve in data space.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::field::{LevelSetField, SourceField};
use crate::forward::{apply_forward, NoiseModel, ObservationVector, StackedForwardOperator};
use crate::level_set::{evolve_step, level_set_map, HJConfig, ThresholdSpec};
use crate::mesh::TriMesh;
use crate::metrics::compute_metrics;
use crate::prior::{particle_seed, MaternSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// State `[φ, f]`, observed through `H`.
    Alg1,
    /// State `[φ, b]`, observed directly.
    Alg2,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Alg1 => "alg1",
            Algorithm::Alg2 => "alg2",
        }
    }
}

/// How a source estimate is formed from the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateVariant {
    /// `G(mean φ)`.
    MeanPhiThenMap,
    /// Mean of the source particles (only available for [`Algorithm::Alg1`]).
    MeanF,
}

impl EstimateVariant {
    pub fn name(self) -> &'static str {
        match self {
            EstimateVariant::MeanPhiThenMap => "mean_phi_then_map",
            EstimateVariant::MeanF => "mean_f",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "mean_phi_then_map" => Some(EstimateVariant::MeanPhiThenMap),
            "mean_f" => Some(EstimateVariant::MeanF),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub ensemble_size: usize,
    pub max_iterations: usize,
    pub discrepancy_tau: f64,
    pub algorithm: Algorithm,
    /// The estimate that drives the stopping rule for [`Algorithm::Alg1`].
    /// Both variants are recorded regardless.
    pub alg1_estimate: EstimateVariant,
    /// Give each particle its own noisy copy of the data at every analysis.
    pub perturb_observations: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            ensemble_size: 1000,
            max_iterations: 100,
            discrepancy_tau: 1.2,
            algorithm: Algorithm::Alg1,
            alg1_estimate: EstimateVariant::MeanPhiThenMap,
            perturb_observations: false,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "ensemble size must be at least 2, got {}",
                self.ensemble_size
            )));
        }
        if !(self.discrepancy_tau >= 1.0) || !self.discrepancy_tau.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "discrepancy tau must be a finite value >= 1, got {}",
                self.discrepancy_tau
            )));
        }
        Ok(())
    }

    /// The variants recorded per iteration, the stopping variant first.
    pub fn variants(&self) -> Vec<EstimateVariant> {
        match (self.algorithm, self.alg1_estimate) {
            (Algorithm::Alg2, _) => vec![EstimateVariant::MeanPhiThenMap],
            (Algorithm::Alg1, EstimateVariant::MeanF) => {
                vec![EstimateVariant::MeanF, EstimateVariant::MeanPhiThenMap]
            }
            (Algorithm::Alg1, EstimateVariant::MeanPhiThenMap) => {
                vec![EstimateVariant::MeanPhiThenMap, EstimateVariant::MeanF]
            }
        }
    }
}

/// Particles stored column-wise. `companion` holds source fields
/// (`node_count × J`) for [`Algorithm::Alg1`] and real-stacked data vectors
/// (`2NM × J`) for [`Algorithm::Alg2`].
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub algorithm: Algorithm,
    pub phi: DMatrix<f64>,
    pub companion: DMatrix<f64>,
}

impl Ensemble {
    pub fn new(algorithm: Algorithm, phi: DMatrix<f64>, companion: DMatrix<f64>) -> Result<Self> {
        if phi.ncols() < 2 {
            return Err(Error::InvalidArgument(format!(
                "ensemble needs at least 2 particles, got {}",
                phi.ncols()
            )));
        }
        check_len(phi.ncols(), companion.ncols())?;
        Ok(Ensemble {
            algorithm,
            phi,
            companion,
        })
    }

    pub fn size(&self) -> usize {
        self.phi.ncols()
    }

    pub fn phi_particle(&self, j: usize) -> LevelSetField {
        LevelSetField::new(self.phi.column(j).iter().copied().collect())
    }
}

/// Ensemble means and anomaly matrices (particle minus mean, column-wise).
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub mean_phi: DVector<f64>,
    pub mean_companion: DVector<f64>,
    pub anomalies_phi: DMatrix<f64>,
    pub anomalies_companion: DMatrix<f64>,
    pub ensemble_size: usize,
}

impl EnsembleStats {
    /// Dense `(1/J) A_a A_bᵀ`; meant for inspection and tests on small
    /// problems only.
    pub fn covariance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        (a * b.transpose()) / a.ncols() as f64
    }
}

fn column_mean(m: &DMatrix<f64>) -> DVector<f64> {
    let mut acc = DVector::zeros(m.nrows());
    for col in m.column_iter() {
        acc += col;
    }
    acc / m.ncols() as f64
}

fn anomalies(m: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut a = m.clone();
    for mut col in a.column_iter_mut() {
        col -= mean;
    }
    a
}

pub fn ensemble_stats(ensemble: &Ensemble) -> Result<EnsembleStats> {
    let j = ensemble.size();
    if j < 2 {
        return Err(Error::InvalidArgument(format!(
            "ensemble needs at least 2 particles, got {j}"
        )));
    }
    let mean_phi = column_mean(&ensemble.phi);
    let mean_companion = column_mean(&ensemble.companion);
    Ok(EnsembleStats {
        anomalies_phi: anomalies(&ensemble.phi, &mean_phi),
        anomalies_companion: anomalies(&ensemble.companion, &mean_companion),
        mean_phi,
        mean_companion,
        ensemble_size: j,
    })
}

/// The shared linear update of all analysis steps.
///
/// With `C = (1/J) A_y A_yᵀ + γ I`, every column `x̂_j` of `x_hat` becomes
/// `x̂_j + (1/J) A_x A_yᵀ C⁻¹ (targets_j − ŷ_j)`. `targets` is either a
/// single column (the same data for every particle) or one column per
/// particle. Returns one updated matrix per entry of `states`, each paired
/// with its anomaly matrix.
pub fn kalman_update(
    states: &[(&DMatrix<f64>, &DMatrix<f64>)],
    anomalies_y: &DMatrix<f64>,
    y_hat: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    noise_variance: f64,
) -> Result<Vec<DMatrix<f64>>> {
    let j = y_hat.ncols();
    let d = y_hat.nrows();
    if j == 0 {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    check_len(d, anomalies_y.nrows())?;
    check_len(j, anomalies_y.ncols())?;
    check_len(d, targets.nrows())?;
    if targets.ncols() != 1 {
        check_len(j, targets.ncols())?;
    }
    let jf = j as f64;
    let mut c = (anomalies_y * anomalies_y.transpose()) / jf;
    for i in 0..d {
        c[(i, i)] += noise_variance;
    }
    let chol = Cholesky::new(c)
        .ok_or_else(|| Error::Singular("data-space covariance is not positive definite".into()))?;
    let mut residual = -y_hat.clone();
    for (k, mut col) in residual.column_iter_mut().enumerate() {
        let t = if targets.ncols() == 1 {
            targets.column(0)
        } else {
            targets.column(k)
        };
        col += t;
    }
    let weights = chol.solve(&residual);
    let coeff = (anomalies_y.transpose() * weights) / jf;
    states
        .iter()
        .map(|(x_hat, a_x)| {
            check_len(j, x_hat.ncols())?;
            check_len(j, a_x.ncols())?;
            check_len(x_hat.nrows(), a_x.nrows())?;
            Ok(*x_hat + *a_x * &coeff)
        })
        .collect()
}

fn source_matrix(columns: Vec<SourceField>, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, columns.len());
    for (j, c) in columns.iter().enumerate() {
        m.column_mut(j).copy_from_slice(c);
    }
    m
}

fn phi_matrix(columns: &[LevelSetField], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, columns.len());
    for (j, c) in columns.iter().enumerate() {
        m.column_mut(j).copy_from_slice(c);
    }
    m
}

fn predict_phi(
    ensemble: &Ensemble,
    mesh: &TriMesh,
    op: &StackedForwardOperator,
    b: &ObservationVector,
    spec: &ThresholdSpec,
    hj: &HJConfig,
) -> Result<Vec<LevelSetField>> {
    check_len(mesh.node_count(), ensemble.phi.nrows())?;
    (0..ensemble.size())
        .into_par_iter()
        .map(|j| evolve_step(mesh, op, &ensemble.phi_particle(j), b, spec, hj))
        .collect()
}

/// Advances every level-set particle by one evolution step and sets its
/// source particle to the thresholded result.
pub fn predict_alg1(
    ensemble: &Ensemble,
    mesh: &TriMesh,
    op: &StackedForwardOperator,
    b: &ObservationVector,
    spec: &ThresholdSpec,
    hj: &HJConfig,
) -> Result<Ensemble> {
    let n = mesh.node_count();
    let phis = predict_phi(ensemble, mesh, op, b, spec, hj)?;
    let sources = phis.iter().map(|p| level_set_map(p, spec)).collect();
    Ensemble::new(
        Algorithm::Alg1,
        phi_matrix(&phis, n),
        source_matrix(sources, n),
    )
}

/// Advances every level-set particle by one evolution step and predicts its
/// data vector.
pub fn predict_alg2(
    ensemble: &Ensemble,
    mesh: &TriMesh,
    op: &StackedForwardOperator,
    b: &ObservationVector,
    spec: &ThresholdSpec,
    hj: &HJConfig,
) -> Result<Ensemble> {
    let n = mesh.node_count();
    let phis = predict_phi(ensemble, mesh, op, b, spec, hj)?;
    let data = predicted_data(op, &phis, spec)?;
    Ensemble::new(Algorithm::Alg2, phi_matrix(&phis, n), data)
}

fn predicted_data(
    op: &StackedForwardOperator,
    phis: &[LevelSetField],
    spec: &ThresholdSpec,
) -> Result<DMatrix<f64>> {
    let cols: Vec<DVector<f64>> = phis
        .par_iter()
        .map(|p| apply_forward(op, &level_set_map(p, spec)).map(|o| o.to_real_stacked()))
        .collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(op.data_dim(), cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    Ok(m)
}

/// Real-stacked data targets, one column per particle when perturbing.
fn targets(
    b: &ObservationVector,
    noise: NoiseModel,
    perturb: Option<(u64, usize)>,
) -> DMatrix<f64> {
    let base = b.to_real_stacked();
    match perturb {
        None => DMatrix::from_column_slice(base.len(), 1, base.as_slice()),
        Some((seed, j)) => {
            let mut m = DMatrix::zeros(base.len(), j);
            for k in 0..j {
                let mut rng = ChaCha8Rng::seed_from_u64(particle_seed(seed, k as u64));
                for (i, v) in base.iter().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m[(i, k)] = v + noise.delta * z;
                }
            }
            m
        }
    }
}

/// Updates both the level-set and the source particles of a predicted
/// [`Algorithm::Alg1`] ensemble. `perturb` carries the seed and is `None`
/// when every particle sees the same data.
pub fn analysis_alg1(
    stats: &EnsembleStats,
    predicted: &Ensemble,
    h_real: &DMatrix<f64>,
    b: &ObservationVector,
    noise: NoiseModel,
    perturb: Option<u64>,
) -> Result<Ensemble> {
    if predicted.algorithm != Algorithm::Alg1 {
        return Err(Error::InvalidArgument(
            "analysis_alg1 needs an Alg1 ensemble".into(),
        ));
    }
    check_len(h_real.ncols(), predicted.companion.nrows())?;
    check_len(h_real.nrows(), 2 * b.len())?;
    let a_y = h_real * &stats.anomalies_companion;
    let y_hat = h_real * &predicted.companion;
    let t = targets(b, noise, perturb.map(|s| (s, predicted.size())));
    let mut out = kalman_update(
        &[
            (&predicted.phi, &stats.anomalies_phi),
            (&predicted.companion, &stats.anomalies_companion),
        ],
        &a_y,
        &y_hat,
        &t,
        noise.variance(),
    )?;
    let f = out.pop().expect("two states");
    let phi = out.pop().expect("two states");
    Ensemble::new(Algorithm::Alg1, phi, f)
}

/// Updates the level-set particles of a predicted [`Algorithm::Alg2`]
/// ensemble; the data particles are left as predicted.
pub fn analysis_alg2(
    stats: &EnsembleStats,
    predicted: &Ensemble,
    b: &ObservationVector,
    noise: NoiseModel,
    perturb: Option<u64>,
) -> Result<Ensemble> {
    if predicted.algorithm != Algorithm::Alg2 {
        return Err(Error::InvalidArgument(
            "analysis_alg2 needs an Alg2 ensemble".into(),
        ));
    }
    check_len(predicted.companion.nrows(), 2 * b.len())?;
    let t = targets(b, noise, perturb.map(|s| (s, predicted.size())));
    let phi = kalman_update(
        &[(&predicted.phi, &stats.anomalies_phi)],
        &stats.anomalies_companion,
        &predicted.companion,
        &t,
        noise.variance(),
    )?
    .pop()
    .expect("one state");
    Ensemble::new(Algorithm::Alg2, phi, predicted.companion.clone())
}

/// Discrepancy principle: `misfit <= tau * delta * sqrt(data_dim)`, with
/// equality counting as converged.
pub fn stopping_rule(misfit: f64, noise: NoiseModel, data_dim: usize, tau: f64) -> bool {
    misfit <= tau * noise.delta * (data_dim as f64).sqrt()
}

/// Everything a filter run needs besides its configuration.
#[derive(Debug, Clone, Copy)]
pub struct InverseProblem<'a> {
    pub mesh: &'a TriMesh,
    pub op: &'a StackedForwardOperator,
    pub data: &'a ObservationVector,
    pub noise: NoiseModel,
    pub threshold: &'a ThresholdSpec,
    pub hj: &'a HJConfig,
    pub prior: &'a MaternSampler,
    /// The true source on the inversion mesh, used only for logging errors.
    pub truth: Option<&'a SourceField>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub variant: EstimateVariant,
    pub misfit: f64,
    pub l2_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub algorithm: Algorithm,
    pub log: Vec<IterationRecord>,
    pub mean_phi: LevelSetField,
    /// Final estimate per recorded variant, the stopping variant first.
    pub estimates: Vec<(EstimateVariant, SourceField)>,
    pub iterations_run: usize,
    pub converged: bool,
}

impl ReconstructionResult {
    pub fn estimate(&self, variant: EstimateVariant) -> Option<&SourceField> {
        self.estimates
            .iter()
            .find(|(v, _)| *v == variant)
            .map(|(_, f)| f)
    }

    /// Misfits of one variant in iteration order.
    pub fn misfits(&self, variant: EstimateVariant) -> Vec<f64> {
        self.log
            .iter()
            .filter(|r| r.variant == variant)
            .map(|r| r.misfit)
            .collect()
    }

    /// Iteration log as CSV with header `iter,misfit,est_variant,l2_error_vs_truth`;
    /// the last column is empty when no truth was supplied.
    pub fn log_csv(&self) -> String {
        let mut s = String::from("iter,misfit,est_variant,l2_error_vs_truth\n");
        for r in &self.log {
            let err = r.l2_error.map(|e| format!("{e:?}")).unwrap_or_default();
            s.push_str(&format!(
                "{},{:?},{},{}\n",
                r.iteration,
                r.misfit,
                r.variant.name(),
                err
            ));
        }
        s
    }
}

/// Parses the output of [`ReconstructionResult::log_csv`].
pub fn parse_log_csv(text: &str) -> Result<Vec<IterationRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "iter,misfit,est_variant,l2_error_vs_truth" => {}
        _ => return Err(Error::parse("iteration log line 1", "missing header")),
    }
    let mut out = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let loc = || format!("iteration log line {}", ln + 1);
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(Error::parse(loc(), "expected 4 columns"));
        }
        let iteration = cols[0]
            .parse()
            .map_err(|_| Error::parse(loc(), "bad iteration"))?;
        let misfit = cols[1]
            .parse()
            .map_err(|_| Error::parse(loc(), "bad misfit"))?;
        let variant = EstimateVariant::from_name(cols[2])
            .ok_or_else(|| Error::parse(loc(), "unknown variant"))?;
        let l2_error = if cols[3].is_empty() {
            None
        } else {
            Some(
                cols[3]
                    .parse()
                    .map_err(|_| Error::parse(loc(), "bad error value"))?,
            )
        };
        out.push(IterationRecord {
            iteration,
            variant,
            misfit,
            l2_error,
        });
    }
    Ok(out)
}

/// Mean φ, the estimates, and whether the stopping rule fired.
type Recorded = (DVector<f64>, Vec<(EstimateVariant, SourceField)>, bool);

fn estimate_of(
    ensemble: &Ensemble,
    variant: EstimateVariant,
    spec: &ThresholdSpec,
) -> (DVector<f64>, SourceField) {
    let mean_phi = column_mean(&ensemble.phi);
    let f = match variant {
        EstimateVariant::MeanPhiThenMap => level_set_map(mean_phi.as_slice(), spec),
        EstimateVariant::MeanF => {
            SourceField::new(column_mean(&ensemble.companion).as_slice().to_vec())
        }
    };
    (mean_phi, f)
}

/// Runs the configured filter from prior samples drawn with `seed`.
pub fn run_filter(
    config: &FilterConfig,
    problem: &InverseProblem<'_>,
    seed: u64,
) -> Result<ReconstructionResult> {
    config.validate()?;
    let n = problem.mesh.node_count();
    check_len(n, problem.op.node_count())?;
    check_len(problem.op.total_rows(), problem.data.len())?;
    check_len(n, problem.prior.node_count())?;
    if let Some(t) = problem.truth {
        check_len(n, t.len())?;
    }
    let h_real = problem.op.real_stacked_matrix();
    let lumped = problem.mesh.lumped_areas();
    let data_dim = problem.op.data_dim();
    let variants = config.variants();
    let j = config.ensemble_size;

    let particles: Vec<LevelSetField> = (0..j)
        .into_par_iter()
        .map(|k| problem.prior.sample(particle_seed(seed, k as u64)))
        .collect::<Result<_>>()?;
    let phi0 = phi_matrix(&particles, n);
    let mut ensemble = match config.algorithm {
        Algorithm::Alg1 => {
            let sources = particles
                .iter()
                .map(|p| level_set_map(p, problem.threshold))
                .collect();
            Ensemble::new(Algorithm::Alg1, phi0, source_matrix(sources, n))?
        }
        Algorithm::Alg2 => {
            let data = predicted_data(problem.op, &particles, problem.threshold)?;
            Ensemble::new(Algorithm::Alg2, phi0, data)?
        }
    };

    let mut log = Vec::new();
    let mut record = |iteration: usize, ensemble: &Ensemble| -> Result<Recorded> {
        let mut estimates = Vec::with_capacity(variants.len());
        let mut mean_phi = DVector::zeros(0);
        let mut stop = false;
        for (i, &v) in variants.iter().enumerate() {
            let (mp, f) = estimate_of(ensemble, v, problem.threshold);
            let misfit = apply_forward(problem.op, &f)?.sub(problem.data)?.norm();
            let l2_error = match problem.truth {
                Some(t) => {
                    Some(compute_metrics(&f, t, &lumped, problem.threshold)?.relative_l2_error)
                }
                None => None,
            };
            log::info!(
                "{} iter {iteration} {}: misfit {misfit:.6e}{}",
                config.algorithm.name(),
                v.name(),
                l2_error
                    .map(|e| format!(", rel. error {e:.4}"))
                    .unwrap_or_default()
            );
            if i == 0 {
                stop = stopping_rule(misfit, problem.noise, data_dim, config.discrepancy_tau);
            }
            log.push(IterationRecord {
                iteration,
                variant: v,
                misfit,
                l2_error,
            });
            mean_phi = mp;
            estimates.push((v, f));
        }
        Ok((mean_phi, estimates, stop))
    };

    let (mut mean_phi, mut estimates, mut converged) = record(0, &ensemble)?;
    let mut iterations_run = 0;
    while !converged && iterations_run < config.max_iterations {
        let it = iterations_run + 1;
        let perturb = config
            .perturb_observations
            .then(|| particle_seed(seed, (1u64 << 40) + it as u64));
        ensemble = match config.algorithm {
            Algorithm::Alg1 => {
                let pred = predict_alg1(
                    &ensemble,
                    problem.mesh,
                    problem.op,
                    problem.data,
                    problem.threshold,
                    problem.hj,
                )?;
                let stats = ensemble_stats(&pred)?;
                analysis_alg1(&stats, &pred, &h_real, problem.data, problem.noise, perturb)?
            }
            Algorithm::Alg2 => {
                let pred = predict_alg2(
                    &ensemble,
                    problem.mesh,
                    problem.op,
                    problem.data,
                    problem.threshold,
                    problem.hj,
                )?;
                let stats = ensemble_stats(&pred)?;
                analysis_alg2(&stats, &pred, problem.data, problem.noise, perturb)?
            }
        };
        (mean_phi, estimates, converged) = record(it, &ensemble)?;
        iterations_run = it;
    }
    if converged {
        log::info!("discrepancy principle met after {iterations_run} iterations");
    }

    Ok(ReconstructionResult {
        algorithm: config.algorithm,
        log,
        mean_phi: LevelSetField::new(mean_phi.as_slice().to_vec()),
        estimates,
        iterations_run,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ens(phi: &[&[f64]], comp: &[&[f64]], alg: Algorithm) -> Ensemble {
        let cols = |v: &[&[f64]]| DMatrix::from_fn(v[0].len(), v.len(), |i, j| v[j][i]);
        Ensemble::new(alg, cols(phi), cols(comp)).unwrap()
    }

    #[test]
    fn stats_match_brute_force_covariance() {
        let e = ens(
            &[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 0.0]],
            &[&[0.0, 1.0, 4.0], &[2.0, 2.0, 1.0], &[1.0, -1.0, 0.0]],
            Algorithm::Alg1,
        );
        let s = ensemble_stats(&e).unwrap();
        let cov = EnsembleStats::covariance(&s.anomalies_phi, &s.anomalies_companion);
        let phi = [[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let f = [[0.0, 1.0, 4.0], [2.0, 2.0, 1.0], [1.0, -1.0, 0.0]];
        for a in 0..2 {
            for b in 0..3 {
                let mp: f64 = phi.iter().map(|p| p[a]).sum::<f64>() / 3.0;
                let mf: f64 = f.iter().map(|p| p[b]).sum::<f64>() / 3.0;
                let c: f64 = (0..3)
                    .map(|j| (phi[j][a] - mp) * (f[j][b] - mf))
                    .sum::<f64>()
                    / 3.0;
                assert!((cov[(a, b)] - c).abs() < 1e-14);
            }
        }
        assert!(s.anomalies_phi.column_sum().norm() < 1e-14);
        assert!(s.anomalies_companion.column_sum().norm() < 1e-14);
    }

    #[test]
    fn identical_particles_are_left_alone() {
        let e = ens(
            &[&[1.0, -2.0], &[1.0, -2.0]],
            &[&[0.3, 0.1], &[0.3, 0.1]],
            Algorithm::Alg2,
        );
        let s = ensemble_stats(&e).unwrap();
        assert_eq!(s.anomalies_phi, DMatrix::zeros(2, 2));
        let b = ObservationVector::new(vec![num_complex::Complex64::new(5.0, -4.0)], 1).unwrap();
        let out = analysis_alg2(&s, &e, &b, NoiseModel::new(0.1).unwrap(), None).unwrap();
        assert_eq!(out.phi, e.phi);
    }

    #[test]
    fn scalar_kalman_gain() {
        // one state, one real datum: x + ξh(hξh+γ)^{-1}(b - hx)
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 3.0]);
        let h = 2.0;
        let gamma = 0.5;
        let a = DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]);
        let xi = 1.0;
        let y_hat = &x * h;
        let a_y = &a * h;
        let b = DMatrix::from_element(1, 1, 7.0);
        let out = kalman_update(&[(&x, &a)], &a_y, &y_hat, &b, gamma).unwrap();
        for k in 0..2 {
            let xk = x[(0, k)];
            let expect = xk + xi * h / (h * xi * h + gamma) * (7.0 - h * xk);
            assert!((out[0][(0, k)] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_data_covariance_is_reported() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let a = DMatrix::zeros(1, 2);
        let b = DMatrix::from_element(1, 1, 0.0);
        assert!(matches!(
            kalman_update(&[(&x, &a)], &a, &x, &b, 0.0),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn stopping_rule_boundary() {
        let noise = NoiseModel::new(0.5).unwrap();
        assert!(stopping_rule(0.0, noise, 4, 1.2));
        assert!(stopping_rule(1.2 * 0.5 * 2.0, noise, 4, 1.2));
        assert!(!stopping_rule(1.2 * 0.5 * 2.0 + 1e-12, noise, 4, 1.2));
        assert!(!stopping_rule(
            1e-300,
            NoiseModel::new(0.0).unwrap(),
            4,
            1.2
        ));
    }

    #[test]
    fn config_validation() {
        assert!(FilterConfig::default().validate().is_ok());
        let bad = FilterConfig {
            ensemble_size: 1,
            ..FilterConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FilterConfig {
            discrepancy_tau: 0.9,
            ..FilterConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
