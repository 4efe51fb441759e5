//! Run configuration in a flat `key = value` text format.
//!
//! Text after `#` is a comment and blank lines are ignored. Every key is
//! optional and falls back to the value of [`RunConfig::default`]; unknown
//! and repeated keys are rejected.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::enkf::{Algorithm, EstimateVariant, FilterConfig};
use crate::error::{Error, Result};
use crate::forward::FrequencyUnits;
use crate::level_set::HJConfig;
use crate::phantom::PhantomKind;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub disk_radius: f64,
    pub fine_mesh_h: f64,
    pub coarse_mesh_h: f64,
    pub receiver_half_side: f64,
    pub receivers_per_side: usize,
    pub freq_min: f64,
    pub freq_max: f64,
    pub freq_count: usize,
    pub freq_units: FrequencyUnits,
    pub sound_speed: f64,
    pub quadrature_order: usize,
    pub noise_delta: f64,
    pub prior_nu: f64,
    pub prior_length_scale: f64,
    pub prior_variance: f64,
    /// Constant prior mean of the level-set function.
    pub prior_mean: f64,
    pub phantom: PhantomKind,
    pub phantom_amplitude: f64,
    pub filter: FilterConfig,
    pub hj: HJConfig,
    pub seed: u64,
    pub pgm_resolution: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            disk_radius: 1.0,
            fine_mesh_h: 0.05,
            coarse_mesh_h: 0.1,
            receiver_half_side: 2.0,
            receivers_per_side: 7,
            freq_min: 50.0,
            freq_max: 10_000.0,
            freq_count: 10,
            freq_units: FrequencyUnits::Hertz,
            sound_speed: 343.0,
            quadrature_order: 2,
            noise_delta: 0.01,
            prior_nu: 1.0,
            prior_length_scale: 0.2,
            prior_variance: 1.0,
            prior_mean: 0.0,
            phantom: PhantomKind::SingleDisk,
            phantom_amplitude: 1.0,
            filter: FilterConfig::default(),
            hj: HJConfig::default(),
            seed: 0,
            pgm_resolution: 128,
            output_dir: PathBuf::from("output"),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<T> {
    raw.parse().map_err(|_| {
        Error::parse(
            format!("config line {line}"),
            format!("invalid value '{raw}' for '{key}'"),
        )
    })
}

fn parse_bool(key: &str, raw: &str, line: usize) -> Result<bool> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::parse(
            format!("config line {line}"),
            format!("invalid boolean '{raw}' for '{key}'"),
        )),
    }
}

fn units_name(u: FrequencyUnits) -> &'static str {
    match u {
        FrequencyUnits::Hertz => "hertz",
        FrequencyUnits::WaveNumber => "wave_number",
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (i, raw_line) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw_line
                .split_once('#')
                .map_or(raw_line, |(before, _)| before)
                .trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("config line {ln}"), "expected key = value"))?;
            let (key, raw) = (key.trim(), raw.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::parse(
                    format!("config line {ln}"),
                    format!("duplicate key '{key}'"),
                ));
            }
            cfg.set(key, raw, ln)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, raw: &str, ln: usize) -> Result<()> {
        match key {
            "disk_radius" => self.disk_radius = value(key, raw, ln)?,
            "fine_mesh_h" => self.fine_mesh_h = value(key, raw, ln)?,
            "coarse_mesh_h" => self.coarse_mesh_h = value(key, raw, ln)?,
            "receiver_half_side" => self.receiver_half_side = value(key, raw, ln)?,
            "receivers_per_side" => self.receivers_per_side = value(key, raw, ln)?,
            "freq_min" => self.freq_min = value(key, raw, ln)?,
            "freq_max" => self.freq_max = value(key, raw, ln)?,
            "freq_count" => self.freq_count = value(key, raw, ln)?,
            "freq_units" => {
                self.freq_units = match raw {
                    "hertz" => FrequencyUnits::Hertz,
                    "wave_number" => FrequencyUnits::WaveNumber,
                    _ => {
                        return Err(Error::parse(
                            format!("config line {ln}"),
                            format!("freq_units must be hertz or wave_number, got '{raw}'"),
                        ))
                    }
                }
            }
            "sound_speed" => self.sound_speed = value(key, raw, ln)?,
            "quadrature_order" => self.quadrature_order = value(key, raw, ln)?,
            "noise_delta" => self.noise_delta = value(key, raw, ln)?,
            "prior_nu" => self.prior_nu = value(key, raw, ln)?,
            "prior_length_scale" => self.prior_length_scale = value(key, raw, ln)?,
            "prior_variance" => self.prior_variance = value(key, raw, ln)?,
            "prior_mean" => self.prior_mean = value(key, raw, ln)?,
            "phantom" => self.phantom = PhantomKind::parse(raw)?,
            "phantom_amplitude" => self.phantom_amplitude = value(key, raw, ln)?,
            "ensemble_size" => self.filter.ensemble_size = value(key, raw, ln)?,
            "max_iterations" => self.filter.max_iterations = value(key, raw, ln)?,
            "discrepancy_tau" => self.filter.discrepancy_tau = value(key, raw, ln)?,
            "algorithm" => {
                self.filter.algorithm = match raw {
                    "alg1" => Algorithm::Alg1,
                    "alg2" => Algorithm::Alg2,
                    _ => {
                        return Err(Error::parse(
                            format!("config line {ln}"),
                            format!("algorithm must be alg1 or alg2, got '{raw}'"),
                        ))
                    }
                }
            }
            "alg1_estimate" => {
                self.filter.alg1_estimate = match raw {
                    "mean_phi_then_map" => EstimateVariant::MeanPhiThenMap,
                    "mean_f" => EstimateVariant::MeanF,
                    _ => {
                        return Err(Error::parse(
                            format!("config line {ln}"),
                            format!(
                                "alg1_estimate must be mean_phi_then_map or mean_f, got '{raw}'"
                            ),
                        ))
                    }
                }
            }
            "perturb_observations" => self.filter.perturb_observations = parse_bool(key, raw, ln)?,
            "time_step" => self.hj.time_step = value(key, raw, ln)?,
            "cfl_clamp" => self.hj.cfl_clamp = parse_bool(key, raw, ln)?,
            "reinitialize" => self.hj.reinitialize = parse_bool(key, raw, ln)?,
            "seed" => self.seed = value(key, raw, ln)?,
            "pgm_resolution" => self.pgm_resolution = value(key, raw, ln)?,
            "output_dir" => self.output_dir = PathBuf::from(raw),
            _ => {
                return Err(Error::parse(
                    format!("config line {ln}"),
                    format!("unknown key '{key}'"),
                ))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("disk_radius", self.disk_radius),
            ("fine_mesh_h", self.fine_mesh_h),
            ("coarse_mesh_h", self.coarse_mesh_h),
            ("receiver_half_side", self.receiver_half_side),
            ("freq_min", self.freq_min),
            ("freq_max", self.freq_max),
            ("sound_speed", self.sound_speed),
            ("prior_nu", self.prior_nu),
            ("prior_length_scale", self.prior_length_scale),
            ("prior_variance", self.prior_variance),
            ("time_step", self.hj.time_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise_delta >= 0.0) || !self.noise_delta.is_finite() {
            return Err(Error::Config(format!(
                "noise_delta must be >= 0, got {}",
                self.noise_delta
            )));
        }
        if !self.prior_mean.is_finite()
            || !self.phantom_amplitude.is_finite()
            || self.phantom_amplitude <= 0.0
        {
            return Err(Error::Config(
                "prior_mean must be finite and phantom_amplitude positive".into(),
            ));
        }
        if self.freq_min > self.freq_max || (self.freq_count > 1 && self.freq_min == self.freq_max)
        {
            return Err(Error::Config("freq_min must be below freq_max".into()));
        }
        if self.receiver_half_side <= self.disk_radius {
            return Err(Error::Config(
                "receivers must lie outside the source disk".into(),
            ));
        }
        for (name, v) in [
            (
                "receivers_per_side",
                self.receivers_per_side.saturating_sub(1),
            ),
            ("freq_count", self.freq_count),
            ("max_iterations", self.filter.max_iterations),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} is too small")));
            }
        }
        if self.pgm_resolution < 16 {
            return Err(Error::Config(format!(
                "pgm_resolution must be at least 16, got {}",
                self.pgm_resolution
            )));
        }
        if !(1..=3).contains(&self.quadrature_order) {
            return Err(Error::Config(format!(
                "quadrature_order must be 1, 2 or 3, got {}",
                self.quadrature_order
            )));
        }
        self.filter
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// The configuration in the format accepted by [`RunConfig::parse`],
    /// listing every key.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("disk_radius", format!("{:?}", self.disk_radius));
        kv("fine_mesh_h", format!("{:?}", self.fine_mesh_h));
        kv("coarse_mesh_h", format!("{:?}", self.coarse_mesh_h));
        kv(
            "receiver_half_side",
            format!("{:?}", self.receiver_half_side),
        );
        kv("receivers_per_side", self.receivers_per_side.to_string());
        kv("freq_min", format!("{:?}", self.freq_min));
        kv("freq_max", format!("{:?}", self.freq_max));
        kv("freq_count", self.freq_count.to_string());
        kv("freq_units", units_name(self.freq_units).to_string());
        kv("sound_speed", format!("{:?}", self.sound_speed));
        kv("quadrature_order", self.quadrature_order.to_string());
        kv("noise_delta", format!("{:?}", self.noise_delta));
        kv("prior_nu", format!("{:?}", self.prior_nu));
        kv(
            "prior_length_scale",
            format!("{:?}", self.prior_length_scale),
        );
        kv("prior_variance", format!("{:?}", self.prior_variance));
        kv("prior_mean", format!("{:?}", self.prior_mean));
        kv("phantom", self.phantom.name().to_string());
        kv("phantom_amplitude", format!("{:?}", self.phantom_amplitude));
        kv("ensemble_size", self.filter.ensemble_size.to_string());
        kv("max_iterations", self.filter.max_iterations.to_string());
        kv(
            "discrepancy_tau",
            format!("{:?}", self.filter.discrepancy_tau),
        );
        kv("algorithm", self.filter.algorithm.name().to_string());
        kv(
            "alg1_estimate",
            self.filter.alg1_estimate.name().to_string(),
        );
        kv(
            "perturb_observations",
            self.filter.perturb_observations.to_string(),
        );
        kv("time_step", format!("{:?}", self.hj.time_step));
        kv("cfl_clamp", self.hj.cfl_clamp.to_string());
        kv("reinitialize", self.hj.reinitialize.to_string());
        kv("seed", self.seed.to_string());
        kv("pgm_resolution", self.pgm_resolution.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        s
    }
}
