//! Lagrangian-subspace experiment: random hyperbolic symplectic matrices,
//! stable/unstable dimensions, and the vanishing of the symplectic form on
//! both subspaces.

use std::path::Path;

use anyhow::Result;
use conspert::extension::lagrangian_certificate;
use conspert::samples::random_hyperbolic_symplectic;

use crate::config::LagrangianParams;
use crate::report::{fmt_f64, write_stream, CertificateLine, RunReport};

pub fn run_lagrangian(params: &LagrangianParams, out_dir: &Path) -> Result<RunReport> {
    let mut report = RunReport::new("lagrangian", params);
    let mut rows = Vec::new();
    let mut failures = 0usize;
    let mut worst_omega = 0.0_f64;

    for case in 0..params.count {
        let n = params.half_dims[case % params.half_dims.len()];
        let m = random_hyperbolic_symplectic::<f64>(n, params.seed + case as u64)?;
        let out = lagrangian_certificate(&m, params.tol)?;
        let cert = &out.certificate;
        if !cert.pass || cert.dim_stable != n {
            failures += 1;
        }
        worst_omega = worst_omega
            .max(cert.omega_residual_stable)
            .max(cert.omega_residual_unstable);
        rows.push(format!(
            "{},{},{},{},{},{}",
            case,
            n,
            cert.dim_stable,
            fmt_f64(cert.omega_residual_stable),
            fmt_f64(cert.omega_residual_unstable),
            cert.pass
        ));
    }

    report.push(CertificateLine::le(
        "cases with wrong dimension or failed certificate",
        failures as f64,
        0.0,
    ));
    report.push(CertificateLine::le(
        "worst symplectic-form residual on the subspaces",
        worst_omega,
        params.tol,
    ));

    let stream = write_stream(
        out_dir,
        "lagrangian.csv",
        "case,n,dim_stable,omega_stable,omega_unstable,pass",
        rows,
    )?;
    report.streams.push(stream);
    Ok(report)
}
