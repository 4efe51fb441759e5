//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit status
//! if any criterion fails. Run with `cargo test --test acceptance`.

mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use common::{
    centred, log_spaced, normal_dvec, normal_matrix, normal_vec, oracle_h0, rng, uniform,
};
use lsenkf::config::RunConfig;
use lsenkf::enkf::{kalman_update, Algorithm, EstimateVariant};
use lsenkf::experiment::{reconstruct, run_experiment, ExperimentOutcome};
use lsenkf::field::LevelSetField;
use lsenkf::forward::{
    apply_adjoint, apply_forward, assemble_forward, ObservationVector, WaveNumberGrid,
};
use lsenkf::level_set::{hj_step, level_set_map, HJConfig, ThresholdSpec};
use lsenkf::mesh::{build_disk_mesh, square_receivers, triangle_quadrature, Point2, TriMesh};
use lsenkf::metrics::{compute_metrics, jaccard_index};
use lsenkf::prior::{
    assemble_fem, element_mass_matrix, matern_covariance, particle_seed, MaternSampler, PriorSpec,
};
use lsenkf::special::{hankel_h0_first_kind, hankel_h1_first_kind};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn special_functions() -> Check {
    let mut worst = 0.0f64;
    for x in log_spaced(1e-3, 400.0, 200) {
        let got = hankel_h0_first_kind(x).map_err(|e| e.to_string())?;
        worst = worst.max((got - oracle_h0(x)).norm() / oracle_h0(x).norm());
    }
    let mut worst_w = 0.0f64;
    for x in log_spaced(1e-3, 400.0, 200) {
        let h0 = hankel_h0_first_kind(x).map_err(|e| e.to_string())?;
        let h1 = hankel_h1_first_kind(x).map_err(|e| e.to_string())?;
        let w = h1.re * h0.im - h0.re * h1.im;
        let want = 2.0 / (PI * x);
        worst_w = worst_w.max(((w - want) / want).abs());
    }
    ensure(
        worst < 1e-10 && worst_w < 1e-9,
        format!(
            "H0 max rel err {worst:.2e} (< 1e-10), Wronskian max rel err {worst_w:.2e} (< 1e-9)"
        ),
    )
}

fn forward_adjoint() -> Check {
    let mesh = build_disk_mesh(1.0, 0.1).map_err(|e| e.to_string())?;
    let rec = square_receivers(2.0, 7).map_err(|e| e.to_string())?;
    let k =
        WaveNumberGrid::from_frequencies(vec![50.0, 200.0, 800.0, 2500.0, 6000.0, 10_000.0], 343.0)
            .map_err(|e| e.to_string())?;
    let op = assemble_forward(&mesh, &rec, &k, &triangle_quadrature(2).unwrap())
        .map_err(|e| e.to_string())?;
    let mut g = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let f = normal_vec(&mut g, op.node_count());
        let rv = normal_vec(&mut g, 2 * op.total_rows());
        let r = ObservationVector::new(
            (0..op.total_rows())
                .map(|i| Complex64::new(rv[2 * i], rv[2 * i + 1]))
                .collect(),
            op.receiver_count(),
        )
        .unwrap();
        let hf = apply_forward(&op, &f).unwrap();
        let lhs: f64 = hf
            .values()
            .iter()
            .zip(r.values())
            .map(|(a, b)| (a * b.conj()).re)
            .sum();
        let rhs: f64 = f
            .iter()
            .zip(apply_adjoint(&op, &r).unwrap())
            .map(|(a, b)| a * b)
            .sum();
        let fnorm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max((lhs - rhs).abs() / (fnorm * r.norm()));
    }
    ensure(
        worst <= 1e-10,
        format!(
            "{} nodes, max |<Hf,r> - <f,H*r>| / (|f||r|) = {worst:.2e} (<= 1e-10)",
            mesh.node_count()
        ),
    )
}

fn fem() -> Check {
    let mesh = build_disk_mesh(1.0, 0.05).map_err(|e| e.to_string())?;
    let ops = assemble_fem(&mesh).map_err(|e| e.to_string())?;
    let mut worst_mass = 0.0f64;
    for e in 0..mesh.element_count() {
        let a = mesh.area(e);
        let m = element_mass_matrix(a);
        for (i, row) in m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = a / 12.0 * if i == j { 2.0 } else { 1.0 };
                worst_mass = worst_mass.max((v - want).abs() / want);
            }
        }
    }
    let k1 = ops
        .full_stiffness_matrix
        .mul_vec(&vec![1.0; mesh.node_count()])
        .unwrap();
    let worst_k = k1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let total: f64 = ops.lumped_mass_diag.iter().sum();
    let area_err = (total - mesh.total_area()).abs();
    ensure(
        worst_mass < 1e-15 && worst_k <= 1e-13 && area_err <= 1e-12,
        format!("element mass rel err {worst_mass:.1e}, |S 1|_max {worst_k:.1e} (<= 1e-13), |sum lumped - area| {area_err:.1e} (<= 1e-12)"),
    )
}

/// Node pair near the centre whose separation is closest to `r`.
fn pair_at_distance(mesh: &TriMesh, r: f64) -> (usize, usize) {
    let a = mesh.nearest_node(Point2::new(-r / 2.0, 0.03));
    let pa = mesh.nodes()[a];
    let b = (0..mesh.node_count())
        .filter(|&b| !mesh.is_boundary(b) && b != a)
        .min_by(|&x, &y| {
            let dx = (mesh.nodes()[x].dist(pa) - r).abs() + 1e-3 * mesh.nodes()[x].norm();
            let dy = (mesh.nodes()[y].dist(pa) - r).abs() + 1e-3 * mesh.nodes()[y].norm();
            dx.total_cmp(&dy)
        })
        .unwrap();
    (a, b)
}

fn prior_statistics() -> Check {
    let mesh = build_disk_mesh(1.0, 0.05).map_err(|e| e.to_string())?;
    let spec = PriorSpec::new(1.0, 0.2, 1.0).map_err(|e| e.to_string())?;
    let sampler = MaternSampler::new(assemble_fem(&mesh).unwrap(), spec.clone())
        .map_err(|e| e.to_string())?;
    let count = 5000;
    let samples: Vec<Vec<f64>> = (0..count)
        .map(|i| sampler.sample(particle_seed(2024, i)).unwrap().into_inner())
        .collect();
    let n = count as f64;
    let mean = |i: usize| samples.iter().map(|v| v[i]).sum::<f64>() / n;
    let cov = |i: usize, j: usize| {
        let (mi, mj) = (mean(i), mean(j));
        samples
            .iter()
            .map(|v| (v[i] - mi) * (v[j] - mj))
            .sum::<f64>()
            / n
    };
    let centre = mesh.nearest_node(Point2::new(0.0, 0.0));
    let var = cov(centre, centre);
    let mut ok = (var - 1.0).abs() <= 0.15;
    let mut detail = format!("centre variance {var:.3} (within 15% of 1)");
    for r in [0.1, 0.2, 0.4] {
        let (a, b) = pair_at_distance(&mesh, r);
        let d = mesh.nodes()[a].dist(mesh.nodes()[b]);
        let rho = cov(a, b) / (cov(a, a) * cov(b, b)).sqrt();
        let want = matern_covariance(d, &spec).unwrap();
        let se = (1.0 - want * want) / n.sqrt();
        let z = (rho - want) / se;
        ok &= z.abs() <= 3.0;
        detail += &format!("; r={d:.3}: rho {rho:.3} vs {want:.3} ({z:+.2} SE)");
    }
    ensure(ok, detail)
}

fn kalman_algebra() -> Check {
    let mut worst_dof = 0.0f64;
    let mut worst_min = 0.0f64;
    for seed in 0..50 {
        let mut g = rng(1000 + seed);
        let n = g.random_range(2..=12);
        let d = g.random_range(1..=8);
        let j = 2 * n + 4;
        let f_hat = normal_matrix(&mut g, n, j);
        let h = normal_matrix(&mut g, d, n);
        let b = normal_dvec(&mut g, d);
        let gamma = g.random_range(0.05..1.0);
        let a = centred(&f_hat);
        let t = DMatrix::from_column_slice(d, 1, b.as_slice());
        let got = kalman_update(&[(&f_hat, &a)], &(&h * &a), &(&h * &f_hat), &t, gamma)
            .map_err(|e| e.to_string())?
            .pop()
            .unwrap();
        let xi = &a * a.transpose() / j as f64;
        let ht_g = h.transpose() / gamma;
        let dof = (DMatrix::identity(n, n) + &xi * &ht_g * &h).lu();
        let xi_inv = xi
            .clone()
            .try_inverse()
            .ok_or("singular ensemble covariance")?;
        let normal = (&xi_inv + &ht_g * &h).lu();
        for k in 0..j {
            let fh = f_hat.column(k).into_owned();
            let x_dof = dof.solve(&(&fh + &xi * &ht_g * &b)).unwrap();
            let x_min = normal.solve(&(&xi_inv * &fh + &ht_g * &b)).unwrap();
            let col = got.column(k);
            worst_dof = worst_dof.max((col - &x_dof).norm() / x_dof.norm());
            worst_min = worst_min.max((col - &x_min).norm() / x_min.norm());
        }
    }
    ensure(
        worst_dof <= 1e-8 && worst_min <= 1e-8,
        format!("50 instances: vs state-space form {worst_dof:.1e}, vs quadratic minimiser {worst_min:.1e} (<= 1e-8)"),
    )
}

fn level_set_behaviour() -> Check {
    let mesh = build_disk_mesh(1.0, 0.15).map_err(|e| e.to_string())?;
    let n = mesh.node_count();
    let cfg = HJConfig {
        time_step: 0.1,
        cfl_clamp: false,
        reinitialize: false,
    };
    let phi = LevelSetField::new(mesh.nodes().iter().map(|p| 0.4 - p.norm()).collect());
    let fixed_zero_v = hj_step(&mesh, &phi, &vec![0.0; n], &cfg).unwrap() == phi;
    let flat = LevelSetField::new(vec![-0.3; n]);
    let speeds: Vec<f64> = mesh.nodes().iter().map(|p| 1.0 + p.x).collect();
    let fixed_flat = hj_step(&mesh, &flat, &speeds, &cfg).unwrap() == flat;

    let affine = LevelSetField::new(
        mesh.nodes()
            .iter()
            .map(|p| 3.0 * p.x + 4.0 * p.y + 0.2)
            .collect(),
    );
    let stepped = hj_step(&mesh, &affine, &speeds, &cfg).unwrap();
    let affine_err = (0..n)
        .map(|i| (stepped[i] - (affine[i] - 0.1 * speeds[i] * 5.0)).abs())
        .fold(0.0f64, f64::max);

    let mut g = rng(6);
    let mut mismatches = 0usize;
    for _ in 0..1000 {
        let phases = g.random_range(2..=6);
        let mut cuts: Vec<f64> = (0..phases - 1)
            .map(|_| uniform(&mut g, -1.0, 1.0))
            .collect();
        cuts.sort_by(f64::total_cmp);
        let values: Vec<f64> = (0..phases).map(|_| uniform(&mut g, 0.0, 5.0)).collect();
        let Ok(spec) = ThresholdSpec::new(cuts.clone(), values.clone()) else {
            continue;
        };
        let mut phi: Vec<f64> = (0..50).map(|_| uniform(&mut g, -1.5, 1.5)).collect();
        phi.extend_from_slice(&cuts);
        let f = level_set_map(&phi, &spec);
        for (p, v) in phi.iter().zip(f.iter()) {
            let phase = cuts.iter().filter(|&&c| c <= *p).count();
            if *v != values[phase] {
                mismatches += 1;
            }
        }
    }
    ensure(
        fixed_zero_v && fixed_flat && affine_err < 1e-13 && mismatches == 0,
        format!(
            "zero-velocity fixed point {fixed_zero_v}, constant-phi fixed point {fixed_flat}, affine step err {affine_err:.1e}, threshold mismatches {mismatches}/1000 specs"
        ),
    )
}

/// Criterion 7's setup: defaults (SingleDisk, h 0.1 / 0.05, 24 receivers)
/// with six frequencies, J = 100 and at most 50 iterations.
fn desk_config(algorithm: Algorithm, delta: f64) -> RunConfig {
    let mut cfg = RunConfig {
        freq_count: 6,
        noise_delta: delta,
        seed: 0,
        ..RunConfig::default()
    };
    cfg.filter.ensemble_size = 100;
    cfg.filter.max_iterations = 50;
    cfg.filter.algorithm = algorithm;
    cfg
}

struct Runs {
    alg1: ExperimentOutcome,
    alg2: ExperimentOutcome,
    coarse_nodes: usize,
    prior_mean_error: f64,
}

fn desk_runs() -> Result<Runs, String> {
    let (setup, _, alg1) =
        reconstruct(&desk_config(Algorithm::Alg1, 0.01)).map_err(|e| e.to_string())?;
    let (_, _, alg2) =
        reconstruct(&desk_config(Algorithm::Alg2, 0.01)).map_err(|e| e.to_string())?;
    let spec = &setup.threshold;
    let prior_mean = level_set_map(
        &vec![RunConfig::default().prior_mean; setup.coarse_mesh.node_count()],
        spec,
    );
    let truth = setup.truth_coarse().map_err(|e| e.to_string())?;
    let prior_mean_error =
        compute_metrics(&prior_mean, &truth, &setup.coarse_mesh.lumped_areas(), spec)
            .map_err(|e| e.to_string())?
            .relative_l2_error;
    Ok(Runs {
        alg1,
        alg2,
        coarse_nodes: setup.coarse_mesh.node_count(),
        prior_mean_error,
    })
}

fn end_to_end(runs: &Runs) -> Check {
    let mut ok = (300..=400).contains(&runs.coarse_nodes);
    let mut detail = format!("{} coarse nodes", runs.coarse_nodes);
    for (name, out) in [("alg1", &runs.alg1), ("alg2", &runs.alg2)] {
        let v = EstimateVariant::MeanPhiThenMap;
        let m = out.metrics_of(v).ok_or("missing metrics")?;
        let initial = out.initial_error(v).ok_or("missing iteration-0 error")?;
        let misfits = out.result.misfits(v);
        let first = out
            .result
            .log
            .iter()
            .find(|r| r.iteration == 1 && r.variant == v)
            .map(|r| r.misfit);
        let last = *misfits.last().unwrap();
        let monotone = first.is_some_and(|f| last <= f);
        ok &= m.relative_l2_error < initial
            && m.relative_l2_error < runs.prior_mean_error
            && m.jaccard >= 0.6
            && monotone
            && out.result.iterations_run <= 50;
        detail += &format!(
            "; {name}: err {:.3} (ensemble prior {initial:.3}, prior mean {:.3}), Jaccard {:.3} (>= 0.6), misfit it1 {:.4} -> final {last:.4}, {} iterations",
            m.relative_l2_error,
            runs.prior_mean_error,
            m.jaccard,
            first.unwrap_or(f64::NAN),
            out.result.iterations_run
        );
    }
    let both_variants = runs.alg1.result.estimate(EstimateVariant::MeanF).is_some();
    ok &= both_variants;
    detail += &format!("; alg1 emits both estimates: {both_variants}");
    ensure(ok, detail)
}

fn noise_monotonicity(runs: &Runs) -> Check {
    let v = EstimateVariant::MeanPhiThenMap;
    let mut ok = true;
    let mut detail = Vec::new();
    for (algorithm, low) in [(Algorithm::Alg1, &runs.alg1), (Algorithm::Alg2, &runs.alg2)] {
        let (_, _, high) = reconstruct(&desk_config(algorithm, 0.1)).map_err(|e| e.to_string())?;
        let e_low = low.metrics_of(v).unwrap().relative_l2_error;
        let e_high = high.metrics_of(v).unwrap().relative_l2_error;
        ok &= e_low <= e_high;
        detail.push(format!(
            "{}: err {e_low:.3} at delta 0.01 vs {e_high:.3} at delta 0.1",
            algorithm.name()
        ));
    }
    ensure(ok, detail.join("; "))
}

fn dir_contents(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    Ok(files)
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    // one run single-threaded, one on a four-thread pool
    for (run, threads) in [("a", 1), ("b", 4)] {
        let mut cfg = desk_config(Algorithm::Alg1, 0.01);
        cfg.output_dir = tmp.path().join(run);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| run_experiment(&cfg))
            .map_err(|e| e.to_string())?;
        outputs.push(dir_contents(&cfg.output_dir)?);
    }
    // the echoed config names the output directory; compare everything else
    let strip = |files: &[(String, Vec<u8>)]| -> Vec<(String, Vec<u8>)> {
        files
            .iter()
            .filter(|(n, _)| n != "config.txt")
            .cloned()
            .collect()
    };
    let config_a = RunConfig::read(&tmp.path().join("a/config.txt")).map_err(|e| e.to_string())?;
    let config_b = RunConfig::read(&tmp.path().join("b/config.txt")).map_err(|e| e.to_string())?;
    let same_config = RunConfig {
        output_dir: config_b.output_dir.clone(),
        ..config_a
    } == config_b;
    let identical = strip(&outputs[0]) == strip(&outputs[1]);
    ensure(
        identical && same_config && outputs[0].len() >= 10,
        format!(
            "{} files from a 1-thread and a 4-thread run, byte-identical: {identical}, config echo equal up to output_dir: {same_config}",
            outputs[0].len()
        ),
    )
}

fn variant_agreement(runs: &Runs) -> Check {
    let a = runs
        .alg1
        .result
        .estimate(EstimateVariant::MeanPhiThenMap)
        .ok_or("missing estimate")?;
    let b = runs
        .alg1
        .result
        .estimate(EstimateVariant::MeanF)
        .ok_or("missing estimate")?;
    let cut = 0.5 * ThresholdSpec::binary().max_phase_value();
    let j = jaccard_index(a, b, cut);
    ensure(
        j >= 0.5,
        format!("Jaccard between the two alg1 estimates {j:.3} (>= 0.5)"),
    )
}

fn report(id: u32, title: &str, limit: Option<Duration>, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let within = limit.is_none_or(|l| elapsed <= l);
    let (pass, detail) = match outcome {
        Ok(d) => (within, d),
        Err(d) => (false, d),
    };
    let limit_text = limit
        .map(|l| format!(", limit {:.0?}", l))
        .unwrap_or_default();
    println!(
        "criterion {id:>2} {} {title}: {detail} [{:.2?}{limit_text}]",
        if pass { "PASS" } else { "FAIL" },
        elapsed
    );
    pass
}

fn main() {
    let secs = Duration::from_secs;
    let mut all = true;
    all &= report(1, "special functions", Some(secs(1)), special_functions);
    all &= report(
        2,
        "forward/adjoint consistency",
        Some(secs(10)),
        forward_adjoint,
    );
    all &= report(3, "FEM matrices", None, fem);
    all &= report(4, "prior statistics", Some(secs(120)), prior_statistics);
    all &= report(5, "Kalman algebra", Some(secs(5)), kalman_algebra);
    all &= report(6, "level set and HJ step", None, level_set_behaviour);

    let mut runs = None;
    all &= report(7, "end-to-end reconstruction", Some(secs(300)), || {
        let r = desk_runs()?;
        let detail = end_to_end(&r);
        runs = Some(r);
        detail
    });
    match &runs {
        Some(runs) => all &= report(8, "noise monotonicity", None, || noise_monotonicity(runs)),
        None => {
            all &= report(8, "noise monotonicity", None, || {
                Err("criterion 7 runs unavailable".into())
            })
        }
    }
    all &= report(9, "determinism", None, determinism);
    match &runs {
        Some(runs) => {
            all &= report(10, "alg1 estimate agreement", None, || {
                variant_agreement(runs)
            })
        }
        None => {
            all &= report(10, "alg1 estimate agreement", None, || {
                Err("criterion 7 runs unavailable".into())
            })
        }
    }

    if all {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: FAILURES");
        std::process::exit(1);
    }
}
