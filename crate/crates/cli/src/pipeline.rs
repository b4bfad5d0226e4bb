//! Command implementations behind the `elastid` subcommands.
//!
//! Every command works the same way: resolve inputs from the layered
//! configuration, compute, write artifacts into the output directory, then
//! write a manifest listing each artifact with its digest.  Parallel
//! sections fan out over row/grid indices and merge in index order, so the
//! produced bytes never depend on the worker count.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use elastid_core::elastic::{lame_from_engineering, solve_forward, ParameterPoint};
use elastid_core::estimator::{
    bfgs, fe_objective, gradient_descent, surrogate_surface, EstimationRun, ObjectiveSurface,
    StopReason,
};
use elastid_core::geometry::{build_mesh, Mesh};
use elastid_core::network::{fit_normalization, forward, init_network, train, Dataset};
use elastid_core::observe::observe;

use crate::config::AppConfig;
use crate::formats::{
    self, dataset_meta_path, fmt_f64, read_dataset, read_observation, write_dataset,
    write_history, write_mesh, write_observation, write_surface, write_trace, DatasetMeta,
};
use crate::manifest::RunManifest;
use crate::{CliError, Result};

/// Estimation algorithm selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Grad,
    Bfgs,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Grad => "grad",
            Method::Bfgs => "bfgs",
        }
    }
}

fn build_domain_mesh(cfg: &AppConfig) -> Result<Arc<Mesh>> {
    Ok(Arc::new(build_mesh(&cfg.domain).map_err(CliError::usage_from)?))
}

fn worker_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))
}

// ---------------------------------------------------------------------------
// mesh

pub struct MeshReport {
    pub path: PathBuf,
    pub vertices: usize,
    pub triangles: usize,
    pub boundary_edges: usize,
    pub manifest: PathBuf,
}

pub fn cmd_mesh(cfg: &AppConfig, out_dir: &Path) -> Result<MeshReport> {
    cfg.validate()?;
    let mesh = build_domain_mesh(cfg)?;
    let path = out_dir.join("mesh.txt");
    write_mesh(&path, &mesh)?;
    let mut manifest = RunManifest::new("mesh");
    manifest.digest_config("domain", &cfg.domain)?;
    manifest.add_artifact(out_dir, "mesh.txt", "mesh")?;
    let manifest_path = manifest.write(out_dir)?;
    Ok(MeshReport {
        path,
        vertices: mesh.vertices().len(),
        triangles: mesh.triangles().len(),
        boundary_edges: mesh.boundary_edges().len(),
        manifest: manifest_path,
    })
}

// ---------------------------------------------------------------------------
// generate

pub struct GenerateReport {
    pub train_rows: usize,
    pub validation_rows: usize,
    pub failures: usize,
    pub train_path: PathBuf,
    pub validation_path: PathBuf,
    pub manifest: PathBuf,
    pub wall_seconds: f64,
}

/// Solve every parameter point independently and keep rows in input order.
/// Rows whose solve fails are excluded and logged; more than 5% failures
/// aborts the run.
fn solve_rows(
    cfg: &AppConfig,
    mesh: &Arc<Mesh>,
    points: &[ParameterPoint],
    pool: &rayon::ThreadPool,
) -> Result<(Vec<[f64; 2]>, Vec<Vec<f64>>, usize)> {
    let obs_cfg = cfg.observation();
    let results: Vec<std::result::Result<Vec<f64>, elastid_core::Error>> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let lame = lame_from_engineering(p)?;
                let solution = solve_forward(p, &cfg.fe, mesh)?;
                Ok(observe(&solution, &obs_cfg, &lame)?.into_vec())
            })
            .collect()
    });
    let mut inputs = Vec::with_capacity(points.len());
    let mut outputs = Vec::with_capacity(points.len());
    let mut failures = 0usize;
    for (p, row) in points.iter().zip(results) {
        match row {
            Ok(values) => {
                inputs.push([p.young, p.poisson]);
                outputs.push(values);
            }
            Err(e) => {
                failures += 1;
                eprintln!("row failed at E = {:e}, nu = {}: {e}", p.young, p.poisson);
            }
        }
    }
    if failures * 20 > points.len() {
        return Err(CliError::Numeric(elastid_core::Error::InvalidInput(format!(
            "{failures} of {} forward solves failed (> 5%)",
            points.len()
        ))));
    }
    Ok((inputs, outputs, failures))
}

pub fn cmd_generate(cfg: &AppConfig, jobs: usize, out_dir: &Path) -> Result<GenerateReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mesh = build_domain_mesh(cfg)?;
    let pool = worker_pool(jobs)?;
    let sweep = &cfg.sweep;

    let grid_points = cfg.bounds.grid(sweep.n_young, sweep.n_poisson).map_err(CliError::usage_from)?;
    let mut rng = ChaCha20Rng::seed_from_u64(sweep.seed);
    let random_points: Vec<ParameterPoint> =
        (0..sweep.n_validation).map(|_| cfg.bounds.sample(&mut rng)).collect();

    let (train_inputs, train_outputs, grid_failures) =
        solve_rows(cfg, &mesh, &grid_points, &pool)?;
    let (val_inputs, val_outputs, random_failures) =
        solve_rows(cfg, &mesh, &random_points, &pool)?;

    let provenance = elastid_core::network::DatasetProvenance {
        domain: cfg.domain,
        fe: cfg.fe.clone(),
        observation: cfg.observation(),
        parameter_box: cfg.bounds,
        seed: sweep.seed,
    };
    let mut train_set =
        Dataset::new(train_inputs, train_outputs).map_err(CliError::Numeric)?;
    train_set.provenance = Some(provenance.clone());
    let mut val_set = Dataset::new(val_inputs, val_outputs).map_err(CliError::Numeric)?;
    val_set.provenance = Some(provenance.clone());

    let train_path = out_dir.join("train.csv");
    let validation_path = out_dir.join("validation.csv");
    write_dataset(
        &train_path,
        &train_set,
        Some(&DatasetMeta {
            kind: "grid".into(),
            rows: train_set.len(),
            n_young: Some(sweep.n_young),
            n_poisson: Some(sweep.n_poisson),
            provenance: provenance.clone(),
        }),
    )?;
    write_dataset(
        &validation_path,
        &val_set,
        Some(&DatasetMeta {
            kind: "random".into(),
            rows: val_set.len(),
            n_young: None,
            n_poisson: None,
            provenance,
        }),
    )?;

    let mut manifest = RunManifest::new("generate");
    manifest.seed = Some(sweep.seed);
    manifest.jobs = Some(jobs);
    manifest.digest_config("domain", &cfg.domain)?;
    manifest.digest_config("fe", &cfg.fe)?;
    manifest.digest_config("observation", &cfg.observation())?;
    manifest.digest_config("box", &cfg.bounds)?;
    manifest.digest_config("sweep", &cfg.sweep)?;
    for name in ["train.csv", "validation.csv"] {
        manifest.add_artifact(out_dir, name, "dataset")?;
    }
    for path in [&train_path, &validation_path] {
        let meta = dataset_meta_path(path);
        let name = meta.file_name().unwrap().to_string_lossy().into_owned();
        manifest.add_artifact(out_dir, &name, "dataset-meta")?;
    }
    let manifest_path = manifest.write(out_dir)?;

    Ok(GenerateReport {
        train_rows: train_set.len(),
        validation_rows: val_set.len(),
        failures: grid_failures + random_failures,
        train_path,
        validation_path,
        manifest: manifest_path,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// train

#[derive(serde::Serialize)]
struct TrainSummary {
    train_rows: usize,
    validation_rows: usize,
    initial_val_loss: f64,
    final_val_loss: f64,
    validation_reduction: f64,
    wall_seconds: f64,
}

pub struct TrainReport {
    pub initial_val_loss: f64,
    pub final_val_loss: f64,
    pub validation_reduction: f64,
    pub network_path: PathBuf,
    pub history_path: PathBuf,
    pub manifest: PathBuf,
    pub wall_seconds: f64,
}

pub fn cmd_train(
    cfg: &AppConfig,
    train_path: &Path,
    validation_path: &Path,
    out_dir: &Path,
) -> Result<TrainReport> {
    cfg.validate()?;
    let start = Instant::now();
    let train_set = read_dataset(train_path)?;
    let val_set = read_dataset(validation_path)?;

    let mut net = init_network(&cfg.training.layout, cfg.training.schedule.rng_seed)
        .map_err(CliError::usage_from)?;
    net.norm = fit_normalization(&train_set).map_err(CliError::Numeric)?;
    let (trained, history) =
        train(net, &train_set, &val_set, &cfg.training.schedule).map_err(CliError::Numeric)?;

    let network_path = out_dir.join("network.toml");
    let history_path = out_dir.join("history.csv");
    formats::save_network(&network_path, &trained)?;
    write_history(&history_path, &history)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let summary = TrainSummary {
        train_rows: train_set.len(),
        validation_rows: val_set.len(),
        initial_val_loss: history.initial_val_loss,
        final_val_loss: history.final_val_loss(),
        validation_reduction: history.validation_reduction(),
        wall_seconds,
    };
    let summary_path = out_dir.join("train_summary.toml");
    formats::write_text(
        &summary_path,
        &toml::to_string(&summary)
            .map_err(|e| CliError::format(&summary_path, e.to_string()))?,
    )?;

    let mut manifest = RunManifest::new("train");
    manifest.seed = Some(cfg.training.schedule.rng_seed);
    manifest.digest_config("training", &cfg.training)?;
    manifest.add_artifact(out_dir, "network.toml", "network")?;
    manifest.add_artifact(out_dir, "history.csv", "training-history")?;
    manifest.add_artifact(out_dir, "train_summary.toml", "summary")?;
    let manifest_path = manifest.write(out_dir)?;

    Ok(TrainReport {
        initial_val_loss: history.initial_val_loss,
        final_val_loss: history.final_val_loss(),
        validation_reduction: history.validation_reduction(),
        network_path,
        history_path,
        manifest: manifest_path,
        wall_seconds,
    })
}

// ---------------------------------------------------------------------------
// estimate

/// Where the observed record comes from: a file, or a fresh forward solve
/// at known truth parameters.
pub enum ObsSource {
    Truth(ParameterPoint),
    File(PathBuf),
}

/// Resolve the observation; a truth-generated record is itself written as
/// an artifact so the run is fully reproducible from its output directory.
fn resolve_observation(
    cfg: &AppConfig,
    source: &ObsSource,
    out_dir: &Path,
    manifest: &mut RunManifest,
) -> Result<(Vec<f64>, Option<ParameterPoint>)> {
    match source {
        ObsSource::File(path) => Ok((read_observation(path)?.into_vec(), None)),
        ObsSource::Truth(p) => {
            let mesh = build_domain_mesh(cfg)?;
            let lame = lame_from_engineering(p).map_err(CliError::usage_from)?;
            let solution = solve_forward(p, &cfg.fe, &mesh).map_err(CliError::Numeric)?;
            let record =
                observe(&solution, &cfg.observation(), &lame).map_err(CliError::Numeric)?;
            write_observation(&out_dir.join("observation.csv"), &record)?;
            manifest.add_artifact(out_dir, "observation.csv", "observation")?;
            manifest.digest_config("domain", &cfg.domain)?;
            manifest.digest_config("fe", &cfg.fe)?;
            manifest.digest_config("observation", &cfg.observation())?;
            Ok((record.into_vec(), Some(*p)))
        }
    }
}

#[derive(serde::Serialize)]
struct EstimateSummary {
    method: String,
    reason: String,
    iterations: usize,
    recovered_young: f64,
    recovered_poisson: f64,
    objective: f64,
    grad_norm: f64,
    wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth_young: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth_poisson: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_error_young: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_error_poisson: Option<f64>,
    warnings: Vec<String>,
}

pub struct EstimateReport {
    pub run: EstimationRun,
    pub truth: Option<ParameterPoint>,
    pub trace_path: PathBuf,
    pub summary_path: PathBuf,
    pub manifest: PathBuf,
    pub wall_seconds: f64,
}

fn reason_name(reason: &StopReason) -> String {
    match reason {
        StopReason::Converged => "converged".into(),
        StopReason::MaxIterations => "max_iterations".into(),
        StopReason::LineSearchFailed { trials } => format!("line_search_failed_after_{trials}"),
    }
}

pub fn cmd_estimate(
    cfg: &AppConfig,
    network_path: &Path,
    method: Method,
    source: &ObsSource,
    start_point: Option<ParameterPoint>,
    out_dir: &Path,
) -> Result<EstimateReport> {
    cfg.validate()?;
    let start = Instant::now();
    let net = formats::load_network(network_path)?;
    let mut manifest = RunManifest::new("estimate");
    let (u_obs, truth) = resolve_observation(cfg, source, out_dir, &mut manifest)?;
    let obj = cfg.objective_config(u_obs)?;
    let est = cfg.estimator_config();
    let p0 = start_point.unwrap_or_else(|| cfg.bounds.midpoint());

    let run = match method {
        Method::Grad => gradient_descent(&net, &obj, &est, &p0),
        Method::Bfgs => bfgs(&net, &obj, &est, &p0),
    }
    .map_err(CliError::Numeric)?;
    let wall_seconds = start.elapsed().as_secs_f64();

    let trace_path = out_dir.join("trace.csv");
    write_trace(&trace_path, &run.trace)?;
    let rel = |got: f64, want: f64| (got - want).abs() / want.abs();
    let summary = EstimateSummary {
        method: method.name().into(),
        reason: reason_name(&run.reason),
        iterations: run.iterations,
        recovered_young: run.parameters.young,
        recovered_poisson: run.parameters.poisson,
        objective: run.objective,
        grad_norm: run.grad_norm,
        wall_seconds,
        truth_young: truth.map(|p| p.young),
        truth_poisson: truth.map(|p| p.poisson),
        relative_error_young: truth.map(|p| rel(run.parameters.young, p.young)),
        relative_error_poisson: truth.map(|p| rel(run.parameters.poisson, p.poisson)),
        warnings: run.trace.warnings.clone(),
    };
    let summary_path = out_dir.join("estimate_summary.toml");
    formats::write_text(
        &summary_path,
        &toml::to_string(&summary)
            .map_err(|e| CliError::format(&summary_path, e.to_string()))?,
    )?;

    manifest.digest_config("estimator", &cfg.estimator)?;
    manifest.digest_config("objective", &cfg.objective)?;
    manifest.digest_config("box", &cfg.bounds)?;
    manifest.add_artifact(out_dir, "trace.csv", "iterate-trace")?;
    manifest.add_artifact(out_dir, "estimate_summary.toml", "summary")?;
    let manifest_path = manifest.write(out_dir)?;

    Ok(EstimateReport {
        run,
        truth,
        trace_path,
        summary_path,
        manifest: manifest_path,
        wall_seconds,
    })
}

// ---------------------------------------------------------------------------
// surface

pub struct SurfaceReport {
    pub net_path: Option<PathBuf>,
    pub fe_path: Option<PathBuf>,
    pub net_min: Option<(f64, f64)>,
    pub fe_min: Option<(f64, f64)>,
    pub manifest: PathBuf,
    pub wall_seconds: f64,
}

/// FE surface on the sweep grid, one forward solve per point, fanned out
/// over the pool; assembly is in grid order.
fn fe_surface_parallel(
    cfg: &AppConfig,
    mesh: &Arc<Mesh>,
    u_obs: &[f64],
    n_young: usize,
    n_poisson: usize,
    pool: &rayon::ThreadPool,
) -> Result<ObjectiveSurface> {
    let points = cfg.bounds.grid(n_young, n_poisson).map_err(CliError::usage_from)?;
    let obs_cfg = cfg.observation();
    let values: std::result::Result<Vec<f64>, elastid_core::Error> = pool.install(|| {
        points
            .par_iter()
            .map(|p| fe_objective(p, &cfg.fe, &obs_cfg, mesh, u_obs))
            .collect()
    });
    let values = values.map_err(CliError::Numeric)?;
    let young = points.iter().step_by(n_poisson).map(|p| p.young).collect();
    let poisson = points[..n_poisson].iter().map(|p| p.poisson).collect();
    Ok(ObjectiveSurface { young, poisson, values })
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_surface(
    cfg: &AppConfig,
    network_path: Option<&Path>,
    with_fe: bool,
    source: &ObsSource,
    n_young: usize,
    n_poisson: usize,
    jobs: usize,
    out_dir: &Path,
) -> Result<SurfaceReport> {
    cfg.validate()?;
    if network_path.is_none() && !with_fe {
        return Err(CliError::Usage(
            "nothing to tabulate: pass --network for the surrogate surface and/or --fe".into(),
        ));
    }
    if n_young < 2 || n_poisson < 2 {
        return Err(CliError::Usage("surface grid needs at least 2 points per axis".into()));
    }
    let start = Instant::now();
    let mut manifest = RunManifest::new("surface");
    manifest.jobs = Some(jobs);
    let (u_obs, _) = resolve_observation(cfg, source, out_dir, &mut manifest)?;
    manifest.digest_config("box", &cfg.bounds)?;

    let min_point = |s: &ObjectiveSurface| {
        let (i, j) = s.min_cell();
        (s.young[i], s.poisson[j])
    };

    let mut net_path_out = None;
    let mut net_min = None;
    if let Some(network_path) = network_path {
        let net = formats::load_network(network_path)?;
        let obj = cfg.objective_config(u_obs.clone())?;
        let surface = surrogate_surface(&net, &obj, &cfg.bounds, n_young, n_poisson)
            .map_err(CliError::Numeric)?;
        let path = out_dir.join("surface_net.csv");
        write_surface(&path, &surface)?;
        manifest.add_artifact(out_dir, "surface_net.csv", "surface-surrogate")?;
        net_min = Some(min_point(&surface));
        net_path_out = Some(path);
    }

    let mut fe_path_out = None;
    let mut fe_min = None;
    if with_fe {
        let mesh = build_domain_mesh(cfg)?;
        let pool = worker_pool(jobs)?;
        let surface = fe_surface_parallel(cfg, &mesh, &u_obs, n_young, n_poisson, &pool)?;
        let path = out_dir.join("surface_fe.csv");
        write_surface(&path, &surface)?;
        manifest.add_artifact(out_dir, "surface_fe.csv", "surface-fe")?;
        manifest.digest_config("domain", &cfg.domain)?;
        manifest.digest_config("fe", &cfg.fe)?;
        fe_min = Some(min_point(&surface));
        fe_path_out = Some(path);
    }

    let manifest_path = manifest.write(out_dir)?;
    Ok(SurfaceReport {
        net_path: net_path_out,
        fe_path: fe_path_out,
        net_min,
        fe_min,
        manifest: manifest_path,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// bench

#[derive(serde::Serialize)]
struct BenchSummary {
    evaluations: usize,
    mean_eval_seconds: f64,
    eval_seconds_std: f64,
    fe_solve_seconds: f64,
    speedup_ratio: f64,
}

pub struct BenchReport {
    pub evaluations: usize,
    pub mean_eval_seconds: f64,
    pub eval_seconds_std: f64,
    pub fe_solve_seconds: f64,
    pub speedup_ratio: f64,
    pub manifest: PathBuf,
}

pub fn cmd_bench(
    cfg: &AppConfig,
    network_path: &Path,
    evaluations: usize,
    out_dir: &Path,
) -> Result<BenchReport> {
    cfg.validate()?;
    if evaluations < 1000 {
        return Err(CliError::Usage("bench needs at least 1000 evaluations".into()));
    }
    let net = formats::load_network(network_path)?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.sweep.seed);
    let points: Vec<ParameterPoint> =
        (0..evaluations).map(|_| cfg.bounds.sample(&mut rng)).collect();

    // Warm-up pass, and a data-dependent accumulator so the timed loop
    // cannot be optimized away.
    let mut sink = 0.0_f64;
    for p in points.iter().take(100) {
        sink += forward(&net, p).map_err(CliError::Numeric)?.0[0];
    }

    // Batched timing: per-batch means give a spread estimate without paying
    // a clock read per call.
    let batch = 1000usize;
    let mut batch_means = Vec::with_capacity(evaluations / batch + 1);
    for chunk in points.chunks(batch) {
        let t0 = Instant::now();
        for p in chunk {
            sink += forward(&net, p).map_err(CliError::Numeric)?.0[0];
        }
        batch_means.push(t0.elapsed().as_secs_f64() / chunk.len() as f64);
    }
    let mean_eval = batch_means.iter().sum::<f64>() / batch_means.len() as f64;
    let var = batch_means.iter().map(|m| (m - mean_eval).powi(2)).sum::<f64>()
        / batch_means.len() as f64;
    let std = var.sqrt();

    let mesh = build_domain_mesh(cfg)?;
    let p_mid = cfg.bounds.midpoint();
    let t0 = Instant::now();
    solve_forward(&p_mid, &cfg.fe, &mesh).map_err(CliError::Numeric)?;
    let fe_seconds = t0.elapsed().as_secs_f64();
    let ratio = fe_seconds / mean_eval;

    let summary = BenchSummary {
        evaluations,
        mean_eval_seconds: mean_eval,
        eval_seconds_std: std,
        fe_solve_seconds: fe_seconds,
        speedup_ratio: ratio,
    };
    let summary_path = out_dir.join("bench.toml");
    formats::write_text(
        &summary_path,
        &format!(
            "# checksum {} keeps the evaluation loop observable\n{}",
            fmt_f64(sink),
            toml::to_string(&summary)
                .map_err(|e| CliError::format(&summary_path, e.to_string()))?
        ),
    )?;

    let mut manifest = RunManifest::new("bench");
    manifest.digest_config("domain", &cfg.domain)?;
    manifest.digest_config("fe", &cfg.fe)?;
    manifest.add_artifact(out_dir, "bench.toml", "benchmark")?;
    let manifest_path = manifest.write(out_dir)?;

    Ok(BenchReport {
        evaluations,
        mean_eval_seconds: mean_eval,
        eval_seconds_std: std,
        fe_solve_seconds: fe_seconds,
        speedup_ratio: ratio,
        manifest: manifest_path,
    })
}
