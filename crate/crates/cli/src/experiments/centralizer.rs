//! Centralizer experiment: plant known powers of randomized contractions,
//! recover them by power matching, and run the eigenvalue obstruction on the
//! linear data.

use std::path::Path;

use anyhow::Result;
use conspert::centralizer::{
    eigenvalue_obstruction, match_power, orbit_eigenvalue_data, power_map, CommutingPair,
    ProbeMesh,
};
use conspert::samples::random_contraction;

use crate::config::CentralizerParams;
use crate::report::{fmt_f64, write_stream, CertificateLine, RunReport};

pub fn run_centralizer(params: &CentralizerParams, out_dir: &Path) -> Result<RunReport> {
    let mut report = RunReport::new("centralizer-check", params);
    let d = params.dim;
    let mut rows = Vec::new();
    let mut recovered = 0usize;
    let mut attempted = 0usize;
    let mut worst_residual = 0.0_f64;

    for trial in 0..params.contractions {
        let f = random_contraction::<f64>(d, params.seed + trial as u64)?;
        for &power in &params.powers {
            attempted += 1;
            let mesh = mesh_for_power(&f, power, d);
            let g = power_map(&f, power);
            let pair = CommutingPair::new(f.clone(), g, mesh.points());
            let matched = match_power(&pair, &mesh, None)?;
            let mut all_good = !matched.components.is_empty();
            for comp in &matched.components {
                worst_residual = worst_residual.max(comp.residual);
                all_good &= comp.power == Some(power);
                rows.push(format!(
                    "{},{},{},{},{}",
                    trial,
                    power,
                    comp.component,
                    comp.power.map_or("none".to_string(), |p| p.to_string()),
                    fmt_f64(comp.residual)
                ));
            }
            if all_good {
                recovered += 1;
            }
        }
    }

    report.push(CertificateLine::le(
        "unrecovered planted powers",
        (attempted - recovered) as f64,
        0.0,
    ));
    report.push(CertificateLine::le(
        "worst match residual",
        worst_residual,
        1e-10,
    ));

    // Eigenvalue obstruction on two fixed points with distinct linear data.
    let fast = random_contraction::<f64>(d, params.seed + 1000)?;
    let slow = random_contraction::<f64>(d, params.seed + 2000)?;
    let origin = vec![0.0; d];
    let data = vec![
        orbit_eigenvalue_data(0, 1, &fast.jacobian(&origin)?),
        orbit_eigenvalue_data(1, 1, &slow.jacobian(&origin)?),
    ];
    let pairing = eigenvalue_obstruction(&data);
    report.push(CertificateLine::le(
        "distinct-eigenvalue fixed points forced fixed",
        (2 - pairing.forced_fixed.len()) as f64,
        0.0,
    ));

    let stream = write_stream(
        out_dir,
        "powermatch.csv",
        "trial,planted,component,power,residual",
        rows,
    )?;
    report.streams.push(stream);
    Ok(report)
}

/// Negative powers exist only on the image of the |i|-th iterate; push the
/// base mesh forward accordingly.
fn mesh_for_power(
    f: &conspert::Contraction<f64>,
    power: i64,
    d: usize,
) -> ProbeMesh<f64> {
    let base: Vec<Vec<f64>> = if d == 1 {
        (0..12)
            .flat_map(|k| {
                let r = 0.25 + 0.6 * k as f64 / 11.0;
                [vec![r], vec![-r]]
            })
            .collect()
    } else {
        conspert::probe::sphere_mesh(d, 0.6, 24, 51)
    };
    if power >= 0 {
        ProbeMesh::new(base, 0.3)
    } else {
        let pushed: Vec<Vec<f64>> = base
            .iter()
            .map(|x| f.orbit(x, (-power) as usize).pop().unwrap())
            .collect();
        ProbeMesh::new(pushed, 0.3)
    }
}
