//! End-to-end synthetic experiments: data are generated on a fine mesh and
//! inverted on an independent coarse mesh.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::enkf::{run_filter, EstimateVariant, InverseProblem, ReconstructionResult};
use crate::error::{Error, Result};
use crate::field::{write_nodal_csv, LevelSetField, SourceField};
use crate::forward::{
    assemble_forward, generate_data, NoiseModel, ObservationVector, StackedForwardOperator,
    WaveNumberGrid,
};
use crate::level_set::ThresholdSpec;
use crate::mesh::{build_disk_mesh, square_receivers, triangle_quadrature, ReceiverArray, TriMesh};
use crate::metrics::{compute_metrics, Metrics};
use crate::pgm::render_pgm;
use crate::phantom::{rasterize_phantom, Phantom};
use crate::prior::{assemble_fem, particle_seed, MaternSampler, PriorSpec};

/// Environment variable that replaces the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "LSENKF_OUTPUT_DIR";

/// Offset separating the data-noise stream from the particle streams.
const DATA_SEED_SALT: u64 = 0xD1B5_4A32_D192_ED03;

trait Staged<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> Staged<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}

/// Output directory after applying [`OUTPUT_DIR_ENV`].
pub fn resolve_output_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cfg.output_dir.clone(),
    }
}

pub fn threshold_of(cfg: &RunConfig) -> Result<ThresholdSpec> {
    ThresholdSpec::new(vec![0.0], vec![0.0, cfg.phantom_amplitude])
}

pub fn phantom_of(cfg: &RunConfig) -> Phantom {
    let mut p = Phantom::default_of(cfg.phantom);
    p.amplitude = cfg.phantom_amplitude;
    p
}

pub fn data_seed(cfg: &RunConfig) -> u64 {
    particle_seed(cfg.seed ^ DATA_SEED_SALT, 0)
}

/// Everything that does not depend on the measured data.
#[derive(Debug, Clone)]
pub struct Setup {
    pub fine_mesh: TriMesh,
    pub coarse_mesh: TriMesh,
    pub receivers: ReceiverArray,
    pub wave_numbers: WaveNumberGrid,
    pub threshold: ThresholdSpec,
    pub phantom: Phantom,
    pub noise: NoiseModel,
}

impl Setup {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let fine_mesh = build_disk_mesh(cfg.disk_radius, cfg.fine_mesh_h).stage("fine mesh")?;
        let coarse_mesh =
            build_disk_mesh(cfg.disk_radius, cfg.coarse_mesh_h).stage("coarse mesh")?;
        let receivers =
            square_receivers(cfg.receiver_half_side, cfg.receivers_per_side).stage("receivers")?;
        let wave_numbers = WaveNumberGrid::log_spaced(
            cfg.freq_min,
            cfg.freq_max,
            cfg.freq_count,
            cfg.sound_speed,
            cfg.freq_units,
        )
        .stage("frequency grid")?;
        let phantom = phantom_of(cfg);
        phantom
            .check_inside(cfg.disk_radius)
            .map_err(|e| Error::Config(e.to_string()).in_stage("phantom"))?;
        Ok(Setup {
            fine_mesh,
            coarse_mesh,
            receivers,
            wave_numbers,
            threshold: threshold_of(cfg)?,
            phantom,
            noise: NoiseModel::new(cfg.noise_delta)?,
        })
    }

    fn operator(&self, mesh: &TriMesh, cfg: &RunConfig) -> Result<StackedForwardOperator> {
        let quad = triangle_quadrature(cfg.quadrature_order)?;
        assemble_forward(mesh, &self.receivers, &self.wave_numbers, &quad)
    }

    pub fn fine_operator(&self, cfg: &RunConfig) -> Result<StackedForwardOperator> {
        self.operator(&self.fine_mesh, cfg)
            .stage("fine forward operator")
    }

    pub fn coarse_operator(&self, cfg: &RunConfig) -> Result<StackedForwardOperator> {
        self.operator(&self.coarse_mesh, cfg)
            .stage("coarse forward operator")
    }

    pub fn truth_fine(&self) -> Result<SourceField> {
        rasterize_phantom(&self.phantom, &self.fine_mesh).stage("phantom")
    }

    /// The phantom re-rasterized on the inversion mesh, for metrics only.
    pub fn truth_coarse(&self) -> Result<SourceField> {
        rasterize_phantom(&self.phantom, &self.coarse_mesh).stage("phantom")
    }

    /// Synthetic data from the fine mesh.
    pub fn generate_data(&self, cfg: &RunConfig) -> Result<ObservationVector> {
        let op = self.fine_operator(cfg)?;
        generate_data(&op, &self.truth_fine()?, self.noise, data_seed(cfg)).stage("data generation")
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub result: ReconstructionResult,
    pub truth_coarse: SourceField,
    /// Final metrics per recorded estimate variant.
    pub metrics: Vec<(EstimateVariant, Metrics)>,
}

impl ExperimentOutcome {
    pub fn metrics_of(&self, variant: EstimateVariant) -> Option<Metrics> {
        self.metrics
            .iter()
            .find(|(v, _)| *v == variant)
            .map(|(_, m)| *m)
    }

    /// Relative error of the iteration-0 (prior) estimate of `variant`.
    pub fn initial_error(&self, variant: EstimateVariant) -> Option<f64> {
        self.result
            .log
            .iter()
            .find(|r| r.iteration == 0 && r.variant == variant)
            .and_then(|r| r.l2_error)
    }
}

/// Runs the configured filter on the coarse mesh against `data`.
pub fn invert(
    cfg: &RunConfig,
    setup: &Setup,
    data: &ObservationVector,
) -> Result<ExperimentOutcome> {
    let mesh = &setup.coarse_mesh;
    let op = setup.coarse_operator(cfg)?;
    let mean = LevelSetField::new(vec![cfg.prior_mean; mesh.node_count()]);
    let spec = PriorSpec::new(cfg.prior_nu, cfg.prior_length_scale, cfg.prior_variance)
        .stage("prior")?
        .with_mean(mean);
    let sampler = MaternSampler::new(assemble_fem(mesh).stage("prior")?, spec).stage("prior")?;
    let truth_coarse = setup.truth_coarse()?;
    let problem = InverseProblem {
        mesh,
        op: &op,
        data,
        noise: setup.noise,
        threshold: &setup.threshold,
        hj: &cfg.hj,
        prior: &sampler,
        truth: Some(&truth_coarse),
    };
    let result = run_filter(&cfg.filter, &problem, cfg.seed).stage("filter")?;
    let lumped = mesh.lumped_areas();
    let metrics = result
        .estimates
        .iter()
        .map(|(v, f)| {
            Ok((
                *v,
                compute_metrics(f, &truth_coarse, &lumped, &setup.threshold)?,
            ))
        })
        .collect::<Result<Vec<_>>>()
        .stage("metrics")?;
    Ok(ExperimentOutcome {
        result,
        truth_coarse,
        metrics,
    })
}

/// Data generation followed by inversion, without writing files.
pub fn reconstruct(cfg: &RunConfig) -> Result<(Setup, ObservationVector, ExperimentOutcome)> {
    let setup = Setup::build(cfg)?;
    let data = setup.generate_data(cfg)?;
    let outcome = invert(cfg, &setup, &data)?;
    Ok((setup, data, outcome))
}

pub fn estimate_file_stem(variant: EstimateVariant) -> String {
    format!("estimate_{}", variant.name())
}

/// `key = value` summary of the final metrics.
pub fn metrics_summary(cfg: &RunConfig, outcome: &ExperimentOutcome) -> String {
    let r = &outcome.result;
    let mut s = String::new();
    let _ = writeln!(s, "algorithm = {}", r.algorithm.name());
    let _ = writeln!(s, "iterations_run = {}", r.iterations_run);
    let _ = writeln!(s, "converged = {}", r.converged);
    let _ = writeln!(s, "noise_delta = {:?}", cfg.noise_delta);
    for (v, m) in &outcome.metrics {
        let name = v.name();
        let misfits = r.misfits(*v);
        let _ = writeln!(s, "{name}.relative_l2_error = {:?}", m.relative_l2_error);
        let _ = writeln!(s, "{name}.jaccard = {:?}", m.jaccard);
        if let Some(e) = outcome.initial_error(*v) {
            let _ = writeln!(s, "{name}.initial_relative_l2_error = {e:?}");
        }
        if let Some(last) = misfits.last() {
            let _ = writeln!(s, "{name}.final_misfit = {last:?}");
        }
    }
    s
}

/// Writes the inversion artifacts into `dir`, returning the paths written.
pub fn write_inversion_outputs(
    cfg: &RunConfig,
    setup: &Setup,
    outcome: &ExperimentOutcome,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mesh = &setup.coarse_mesh;
    let mut written = Vec::new();
    let mut put = |name: String, contents: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, contents)?;
        written.push(path);
        Ok(())
    };
    let res = cfg.pgm_resolution;
    put("config.txt".into(), cfg.to_text())?;
    put("mesh_coarse.txt".into(), mesh.to_text())?;
    put("iterations.csv".into(), outcome.result.log_csv())?;
    put(
        "phi_mean.csv".into(),
        crate::field::nodal_csv(mesh, &outcome.result.mean_phi)?,
    )?;
    put(
        "truth_coarse.csv".into(),
        crate::field::nodal_csv(mesh, &outcome.truth_coarse)?,
    )?;
    put(
        "phi_mean.pgm".into(),
        render_pgm(&outcome.result.mean_phi, mesh, res)?.to_pgm(),
    )?;
    for (v, f) in &outcome.result.estimates {
        let stem = estimate_file_stem(*v);
        put(format!("{stem}.csv"), crate::field::nodal_csv(mesh, f)?)?;
        put(format!("{stem}.pgm"), render_pgm(f, mesh, res)?.to_pgm())?;
    }
    put("metrics.txt".into(), metrics_summary(cfg, outcome))?;
    Ok(written)
}

/// Writes the data-generation artifacts into `dir`.
pub fn write_data_outputs(
    cfg: &RunConfig,
    setup: &Setup,
    data: &ObservationVector,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let truth = setup.truth_fine()?;
    let data_path = dir.join("data.csv");
    data.write_csv(&data_path)?;
    let truth_path = dir.join("truth_fine.csv");
    write_nodal_csv(&truth_path, &setup.fine_mesh, &truth)?;
    let pgm_path = dir.join("truth.pgm");
    render_pgm(&truth, &setup.fine_mesh, cfg.pgm_resolution)?.write(&pgm_path)?;
    Ok(vec![data_path, truth_path, pgm_path])
}

/// Full pipeline with all artifacts written to the resolved output
/// directory.
pub fn run_experiment(cfg: &RunConfig) -> Result<(ExperimentOutcome, Vec<PathBuf>)> {
    let dir = resolve_output_dir(cfg);
    let (setup, data, outcome) = reconstruct(cfg)?;
    let mut files = write_data_outputs(cfg, &setup, &data, &dir).stage("writing outputs")?;
    files.extend(write_inversion_outputs(cfg, &setup, &outcome, &dir).stage("writing outputs")?);
    Ok((outcome, files))
}

/// Reads a data file and checks it against the configured acquisition.
pub fn read_data(path: &Path, setup: &Setup) -> Result<ObservationVector> {
    let data = ObservationVector::read_csv(path).stage("reading data")?;
    let expected = setup.receivers.len() * setup.wave_numbers.len();
    if data.len() != expected || data.receiver_count() != setup.receivers.len() {
        return Err(Error::Config(format!(
            "data file {} has {} values for {} receivers; the config expects {} receivers x {} frequencies",
            path.display(),
            data.len(),
            data.receiver_count(),
            setup.receivers.len(),
            setup.wave_numbers.len()
        )));
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_seed_differs_from_particle_seeds() {
        let cfg = RunConfig::default();
        let s = data_seed(&cfg);
        assert!((0..1000).all(|j| particle_seed(cfg.seed, j) != s));
    }

    #[test]
    fn setup_reports_bad_phantom_stage() {
        let cfg = RunConfig {
            disk_radius: 0.5,
            receiver_half_side: 1.0,
            ..RunConfig::default()
        };
        let err = Setup::build(&cfg).unwrap_err();
        assert!(err.to_string().starts_with("phantom"), "{err}");
        assert!(err.is_config());
    }
}
