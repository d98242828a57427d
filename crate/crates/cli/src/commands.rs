use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use hkgf::decay::{fit_log_rate, rates_for_start, verify_decay, DecayJson, DecayMode};
use hkgf::descent::{compare_geometries, run_descent, MomentEstimator, Potential, QuadraticPotential};
use hkgf::flow::{integrate, FlowConfig, GaussianFlow, GeneralFlow, MassDynamics, Trajectory};
use hkgf::geometry::{convexity_scan, hamiltonian, integrate_geodesic, sublevel_radius, GeodesicState, ScanReport, SublevelBound};
use hkgf::{gauss, linalg, ScaledGaussian};
use hkgf_verify::{run_criterion, select, CriterionResult, VerifyOptions};

use crate::config::{load, DecayRun, DescentRun, FlowRun, GeodesicRun, ScanRun, Target};
use crate::error::{CliError, CliResult};

/// Flags shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Common {
    pub configs: Vec<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub filter: Option<String>,
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut f = File::create(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

/// Runs `f` once per config. With several configs each gets `out/<file stem>`;
/// they run in parallel on the rayon pool.
pub fn for_each_config(common: &Common, f: fn(&Path, &Path, Option<u64>) -> CliResult<()>) -> CliResult<()> {
    if common.configs.is_empty() {
        return Err(CliError::Usage("this command needs --config PATH".into()));
    }
    ensure_dir(&common.out)?;
    let single = common.configs.len() == 1;
    let results: Vec<CliResult<()>> = common
        .configs
        .par_iter()
        .map(|cfg| {
            let out = if single {
                common.out.clone()
            } else {
                let stem = cfg.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
                common.out.join(stem)
            };
            ensure_dir(&out)?;
            info!("running {}", cfg.display());
            f(cfg, &out, common.seed)
        })
        .collect();
    let mut first = None;
    for (cfg, r) in common.configs.iter().zip(results) {
        if let Err(e) = r {
            if !single {
                warn!("{}: {e}", cfg.display());
            }
            first.get_or_insert(e);
        }
    }
    first.map_or(Ok(()), Err)
}

#[derive(Serialize)]
struct FlowSummary {
    dim: usize,
    records: usize,
    t_final: f64,
    initial_energy: f64,
    final_energy: f64,
    energy_exact: bool,
    #[serde(rename = "final")]
    final_point: ScaledGaussian<f64>,
    /// −d/dt ln(energy) on the tail half; Gaussian targets only.
    fitted_energy_rate: Option<f64>,
    fitted_cov_rate: Option<f64>,
}

pub fn flow(path: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let run: FlowRun = load(path)?;
    let target = run.target.build(path)?;
    let (traj, exact): (Trajectory<f64>, bool) = match &target {
        Target::Gaussian(t) => {
            let mut flow = GaussianFlow::new(run.flow.alpha, run.flow.beta, t.clone(), run.mass);
            (integrate(&mut flow, &run.start, &run.flow)?, true)
        }
        Target::Logistic(pot) => {
            let est_cfg = run
                .estimator
                .clone()
                .ok_or_else(|| CliError::config(path, "a non-Gaussian target needs an `estimator`"))?;
            if run.flow.track_eigen {
                return Err(CliError::config(path, "eigenvalue tracking needs a Gaussian target"));
            }
            let estimator = MomentEstimator::from_config(&est_cfg, seed.unwrap_or(run.seed))?;
            let exact = matches!(estimator, MomentEstimator::Exact);
            let mut flow = GeneralFlow { alpha: run.flow.alpha, beta: run.flow.beta, potential: pot, estimator, mass: run.mass };
            (integrate(&mut flow, &run.start, &run.flow)?, exact)
        }
    };
    traj.write_csv_path(&out.join("trajectory.csv"))?;
    let energies: Vec<f64> = (0..traj.len()).map(|i| traj.total_energy(i)).collect();
    let (fitted_energy_rate, fitted_cov_rate) = match &target {
        Target::Gaussian(t) => {
            let dev: Vec<f64> = traj.points.iter().map(|p| (p.sigma() - t.gamma()).norm()).collect();
            (fit_log_rate(&traj.times, &energies, 1e2 * f64::EPSILON), fit_log_rate(&traj.times, &dev, 1e-12))
        }
        Target::Logistic(_) => (None, None),
    };
    let summary = FlowSummary {
        dim: run.start.dim(),
        records: traj.len(),
        t_final: *traj.times.last().unwrap_or(&0.0),
        initial_energy: energies[0],
        final_energy: *energies.last().unwrap_or(&energies[0]),
        energy_exact: exact,
        final_point: traj.last().clone(),
        fitted_energy_rate,
        fitted_cov_rate,
    };
    write_json(&out.join("summary.json"), &summary)
}

#[derive(Serialize)]
struct DescentSummary<'a> {
    n_steps: usize,
    #[serde(rename = "final")]
    final_point: &'a ScaledGaussian<f64>,
    final_kl: f64,
    polyak: &'a hkgf::descent::PolyakAverage<f64>,
    fitted_rate: Option<f64>,
    normalizer_known: bool,
}

pub fn descent(path: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let run: DescentRun = load(path)?;
    let target = run.target.build(path)?;
    let quadratic;
    let pot: &dyn Potential<f64> = match &target {
        Target::Gaussian(t) => {
            quadratic = QuadraticPotential::new(t.clone());
            &quadratic
        }
        Target::Logistic(p) => p,
    };
    let mut cfg = run.descent.clone();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let res = run_descent(&cfg, &run.start, pot)?;
    res.write_csv_path(&out.join("descent.csv"))?;
    if run.compare {
        let cmp = compare_geometries(&cfg, &run.start, pot)?;
        let p = out.join("comparison.csv");
        let f = File::create(&p).map_err(|source| CliError::Io { path: p.clone(), source })?;
        cmp.write_csv(f)?;
    }
    let summary = DescentSummary {
        n_steps: cfg.n_steps,
        final_point: &res.final_point,
        final_kl: res.final_kl,
        polyak: &res.polyak,
        fitted_rate: res.fitted_rate,
        normalizer_known: res.normalizer_known,
    };
    write_json(&out.join("summary.json"), &summary)
}

pub fn decay_report(path: &Path, out: &Path, _seed: Option<u64>) -> CliResult<()> {
    let run: DecayRun = load(path)?;
    let mut cfg = FlowConfig::new(run.alpha, run.beta, run.dt, run.t_end);
    cfg.record_every = run.record_every;
    cfg.track_eigen = true;
    cfg.validate().map_err(|e| CliError::config(path, e.to_string()))?;
    let mut flow = GaussianFlow::new(run.alpha, run.beta, run.target.clone(), MassDynamics::Normalized);
    let start = run.start.with_kappa(1.0)?;
    let traj = integrate(&mut flow, &start, &cfg)?;
    traj.write_csv_path(&out.join("trajectory.csv"))?;
    let rates = rates_for_start(run.alpha, run.beta, &run.target, &start)?;
    let mut modes = vec![DecayMode::Refined, DecayMode::PlGlobal];
    if rates.sublevel.is_some() {
        modes.push(DecayMode::PlSublevel);
    }
    let reports = modes
        .into_iter()
        .map(|m| verify_decay(&traj, &run.target, &rates, m))
        .collect::<hkgf::Result<Vec<_>>>()?;
    for r in reports.iter().filter(|r| !r.pass) {
        warn!("{:?} bound violated {} times (largest excess {:e})", r.mode, r.violations, r.max_violation);
    }
    write_json(&out.join("decay.json"), &DecayJson { alpha: run.alpha, beta: run.beta, rates, reports })
}

#[derive(Serialize)]
struct ScanOutput {
    report: ScanReport,
    /// α ν_min(Γ⁻¹), the guaranteed lower bound when β = 0.
    transport_bound: Option<f64>,
    sublevel: Vec<SublevelBound>,
}

pub fn convexity(path: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let run: ScanRun = load(path)?;
    if run.n_samples == 0 {
        return Err(CliError::config(path, "n_samples must be at least 1"));
    }
    let sampler = run.sampler.clone().unwrap_or_default();
    let report = convexity_scan(run.alpha, run.beta, &run.target, &sampler, run.n_samples, seed.unwrap_or(run.seed))?;
    let transport_bound = (run.beta == 0.0).then(|| run.alpha * linalg::min_eigenvalue(run.target.precision()));
    let sublevel = run
        .sublevel_energies
        .iter()
        .map(|&e| sublevel_radius(e, &run.target))
        .collect::<hkgf::Result<Vec<_>>>()?;
    write_json(&out.join("scan.json"), &ScanOutput { report, transport_bound, sublevel })
}

#[derive(Serialize)]
struct GeodesicSummary {
    hamiltonian_start: f64,
    hamiltonian_end: f64,
    max_relative_drift: f64,
    #[serde(rename = "final")]
    final_point: ScaledGaussian<f64>,
}

pub fn geodesic(path: &Path, out: &Path, _seed: Option<u64>) -> CliResult<()> {
    let run: GeodesicRun = load(path)?;
    let d = run.start.dim();
    if run.costate.dim() != d {
        return Err(CliError::config(path, "costate and start dimensions differ"));
    }
    if let Some(t) = &run.target {
        if t.dim() != d {
            return Err(CliError::config(path, "target and start dimensions differ"));
        }
    }
    let st = GeodesicState::new(&run.start, run.costate.clone())?;
    let path_states = integrate_geodesic(run.alpha, run.beta, &st, run.ds, run.n_steps, run.normalized)?;

    let csv_path = out.join("geodesic.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(hkgf::Error::from)?;
    let mut header = vec!["s".to_string()];
    let idx = |p: &'static str| (1..=d).flat_map(move |i| (1..=d).map(move |j| (i, j))).map(move |(i, j)| format!("{p}_{i}_{j}"));
    header.extend(idx("sigma"));
    header.extend((1..=d).map(|i| format!("m_{i}")));
    header.push("kappa".into());
    header.extend(idx("S"));
    header.extend((1..=d).map(|i| format!("mu_{i}")));
    header.push("k".into());
    header.push("hamiltonian".into());
    if run.target.is_some() {
        header.push("energy".into());
    }
    w.write_record(&header).map_err(hkgf::Error::from)?;
    let h0 = hamiltonian(run.alpha, run.beta, &path_states[0], run.normalized)?;
    let mut drift = 0.0f64;
    let mut h_end = h0;
    for (i, s) in path_states.iter().enumerate() {
        let h = hamiltonian(run.alpha, run.beta, s, run.normalized)?;
        drift = drift.max((h - h0).abs() / h0.abs().max(1.0));
        h_end = h;
        let mut row = vec![format!("{:e}", i as f64 * run.ds)];
        let flat = |m: &hkgf::Mat<f64>| m.row_iter().flat_map(|r| r.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>()).collect::<Vec<_>>();
        row.extend(flat(&s.sigma));
        row.extend(s.m.iter().map(|x| format!("{x:e}")));
        row.push(format!("{:e}", s.kappa));
        row.extend(flat(&s.costate.s));
        row.extend(s.costate.mu.iter().map(|x| format!("{x:e}")));
        row.push(format!("{:e}", s.costate.k));
        row.push(format!("{h:e}"));
        if let Some(t) = &run.target {
            let p = s.point()?;
            let e = if run.normalized { gauss::shape_relative_entropy(&p, t)? } else { gauss::relative_entropy(&p, t)? };
            row.push(format!("{e:e}"));
        }
        w.write_record(&row).map_err(hkgf::Error::from)?;
    }
    w.flush().map_err(|source| CliError::Io { path: csv_path.clone(), source })?;
    let summary = GeodesicSummary {
        hamiltonian_start: h0,
        hamiltonian_end: h_end,
        max_relative_drift: drift,
        final_point: path_states.last().expect("path has its start").point()?,
    };
    write_json(&out.join("summary.json"), &summary)
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    passed: usize,
    total: usize,
    all_passed: bool,
    criteria: &'a [CriterionResult],
}

pub fn verify(common: &Common, rate_scale: f64) -> CliResult<()> {
    let defaults = VerifyOptions::default();
    let opts = VerifyOptions { filter: common.filter.clone(), seed: common.seed.unwrap_or(defaults.seed), rate_scale };
    let chosen = select(opts.filter.as_deref());
    if chosen.is_empty() {
        return Err(CliError::Usage(format!(
            "--filter {:?} matches no criterion",
            opts.filter.as_deref().unwrap_or_default()
        )));
    }
    ensure_dir(&common.out)?;
    let mut results = Vec::with_capacity(chosen.len());
    for c in chosen {
        let r = run_criterion(c, &opts);
        println!("{}", r.line());
        results.push(r);
    }
    let passed = results.iter().filter(|r| r.passed).count();
    let total = results.len();
    write_json(&common.out.join("verify.json"), &VerifyOutput { passed, total, all_passed: passed == total, criteria: &results })?;
    if passed == total {
        Ok(())
    } else {
        Err(CliError::Criteria { failed: total - passed, total })
    }
}
