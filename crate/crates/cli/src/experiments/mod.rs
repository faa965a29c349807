//! Experiment runners: each takes validated parameters, runs the pipeline,
//! writes its data streams and report under the output directory, and
//! returns the report.

mod centralizer;
mod distortion;
mod lagrangian;
mod symplectic;
mod volume;

use std::path::Path;
use std::time::Instant;

use anyhow::Result;

use crate::config::{ConfigFile, ExperimentKind, VerifyAllParams};
use crate::report::RunReport;

pub use centralizer::run_centralizer;
pub use distortion::run_distortion;
pub use lagrangian::run_lagrangian;
pub use symplectic::run_extend_symplectic;
pub use volume::run_extend_volume;

/// Run one experiment from its config; returns the finished report.
pub fn run_config(
    config: &ConfigFile,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = match config.experiment {
        ExperimentKind::ExtendSymplectic => {
            let mut params: crate::config::ExtendSymplecticParams = config.typed_parameters()?;
            if let Some(seed) = seed_override {
                params.seed = seed;
            }
            params.validate()?;
            run_extend_symplectic(&params, out_dir)?
        }
        ExperimentKind::ExtendVolume => {
            let mut params: crate::config::ExtendVolumeParams = config.typed_parameters()?;
            if let Some(seed) = seed_override {
                params.seed = seed;
            }
            params.validate()?;
            run_extend_volume(&params, out_dir)?
        }
        ExperimentKind::Distortion => {
            let mut params: crate::config::DistortionParams = config.typed_parameters()?;
            if let Some(seed) = seed_override {
                params.seed = seed;
            }
            params.validate()?;
            run_distortion(&params, out_dir)?
        }
        ExperimentKind::CentralizerCheck => {
            let mut params: crate::config::CentralizerParams = config.typed_parameters()?;
            if let Some(seed) = seed_override {
                params.seed = seed;
            }
            params.validate()?;
            run_centralizer(&params, out_dir)?
        }
        ExperimentKind::Lagrangian => {
            let mut params: crate::config::LagrangianParams = config.typed_parameters()?;
            if let Some(seed) = seed_override {
                params.seed = seed;
            }
            params.validate()?;
            run_lagrangian(&params, out_dir)?
        }
        ExperimentKind::VerifyAll => {
            let mut params: crate::config::VerifyAllParams = config.typed_parameters()?;
            if let Some(seed) = seed_override {
                params.seed = seed;
            }
            return run_verify_all(&params, out_dir);
        }
    };
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    report.write(out_dir)?;
    report.print_summary();
    Ok(report)
}

/// Run every experiment with its default configuration into per-experiment
/// subdirectories, plus a summary report.
pub fn run_verify_all(params: &VerifyAllParams, out_dir: &Path) -> Result<RunReport> {
    let start = Instant::now();
    let seed = params.seed;
    let fast = params.fast;

    let symplectic = crate::config::ExtendSymplecticParams {
        seed,
        n: 1,
        amplitude: 0.01,
        epsilon: 0.5,
        probes: if fast { 200 } else { 1000 },
        symplectic_tol: 1e-7,
        disk_tol: 1e-6,
    };
    let volume = crate::config::ExtendVolumeParams {
        seed,
        k: 1,
        m: 3,
        amplitude: 0.01,
        epsilon: 0.5,
        probes: if fast { 200 } else { 1000 },
        det_tol: 1e-6,
    };
    let distortion = crate::config::DistortionParams {
        seed,
        dim: 1,
        contraction_rate: 0.5,
        graft_jacobian: 0.6,
        big_n: 10.0,
        slope_window: (20, 100),
        slope_rel_tol: 0.01,
    };
    let centralizer = crate::config::CentralizerParams {
        seed,
        dim: 1,
        powers: vec![-3, -1, 1, 2, 4],
        contractions: if fast { 1 } else { 3 },
    };
    let lagrangian = crate::config::LagrangianParams {
        seed,
        half_dims: vec![1, 2, 3],
        count: if fast { 20 } else { 100 },
        tol: 1e-8,
    };

    let mut summary = RunReport::new("verify-all", params);
    let runs: Vec<(&str, Box<dyn FnOnce(&Path) -> Result<RunReport>>)> = vec![
        (
            "distortion",
            Box::new(move |dir: &Path| run_distortion(&distortion, dir)),
        ),
        (
            "extend-symplectic",
            Box::new(move |dir: &Path| run_extend_symplectic(&symplectic, dir)),
        ),
        (
            "extend-volume",
            Box::new(move |dir: &Path| run_extend_volume(&volume, dir)),
        ),
        (
            "centralizer-check",
            Box::new(move |dir: &Path| run_centralizer(&centralizer, dir)),
        ),
        (
            "lagrangian",
            Box::new(move |dir: &Path| run_lagrangian(&lagrangian, dir)),
        ),
    ];
    for (name, run) in runs {
        let sub = out_dir.join(name);
        let sub_start = Instant::now();
        let mut sub_report = run(&sub)?;
        sub_report.wall_time_seconds = sub_start.elapsed().as_secs_f64();
        sub_report.write(&sub)?;
        sub_report.print_summary();
        summary.push(crate::report::CertificateLine {
            name: format!("{name}: all certificates"),
            measured: sub_report.certificates.iter().filter(|c| !c.pass).count() as f64,
            threshold: 0.0,
            comparison: "==".to_string(),
            pass: sub_report.pass,
        });
    }
    summary.wall_time_seconds = start.elapsed().as_secs_f64();
    summary.write(out_dir)?;
    summary.print_summary();
    Ok(summary)
}
