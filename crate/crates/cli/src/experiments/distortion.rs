//! Distortion-growth experiment: graft a Jacobian gap along an orbit of a
//! linear contraction and measure the growth rate of the distortion against
//! the certified slope.

use std::path::Path;

use anyhow::Result;
use conspert::distortion::distortion_sweep;
use conspert::samples::linear_contraction;

use crate::config::DistortionParams;
use crate::report::{fmt_f64, fmt_point, write_stream, CertificateLine, RunReport};

pub fn run_distortion(params: &DistortionParams, out_dir: &Path) -> Result<RunReport> {
    let mut report = RunReport::new("distortion", params);
    let d = params.dim;
    let f = linear_contraction::<f64>(d, params.contraction_rate)?;

    // Grafted point on the positive first axis, probe mesh on the negative
    // side: rays of a linear contraction, so the orbits are disjoint.
    let mut x = vec![0.0; d];
    x[0] = 0.7;
    let lambda: Vec<Vec<f64>> = (0..5)
        .map(|k| {
            let mut y = vec![0.0; d];
            y[0] = -0.85 + 0.1 * k as f64;
            y
        })
        .collect();

    let gap = params.jac_gap();
    let grafted = conspert::perturb_orbit(&f, &x, &lambda, params.big_n, gap)?;
    let i0 = grafted.i0();

    // Stream: the full sweep against the first probe.
    let n_max = i0 + params.slope_window.1;
    let sweep = distortion_sweep(grafted.contraction(), &x, &lambda[0], n_max)?;
    let stream = write_stream(
        out_dir,
        "distortion.csv",
        "n,x,y,delta",
        sweep.iter().map(|rec| {
            format!(
                "{},{},{},{}",
                rec.n,
                fmt_point(&rec.x),
                fmt_point(&rec.y),
                fmt_f64(rec.delta)
            )
        }),
    )?;
    report.streams.push(stream);

    // Slope over the window, worst case over the probe mesh.
    let mut worst_slope_error = 0.0_f64;
    for y in &lambda {
        let sweep = distortion_sweep(grafted.contraction(), &x, y, n_max)?;
        for rec in &sweep {
            if rec.n > i0 + params.slope_window.0 && rec.n <= i0 + params.slope_window.1 {
                let slope = rec.delta / ((rec.n - i0) as f64);
                worst_slope_error = worst_slope_error.max((slope - gap).abs() / gap);
            }
        }
    }
    report.push(CertificateLine::le(
        "slope relative error over the window",
        worst_slope_error,
        params.slope_rel_tol,
    ));
    report.push(CertificateLine::gt(
        "distortion at the predicted iterate exceeds N",
        grafted.certified_big_n(),
        params.big_n,
    ));
    report.push(CertificateLine::le(
        "certified per-iterate gap matches the request",
        (grafted.jac_gap() - gap).abs(),
        1e-10,
    ));
    Ok(report)
}
