//! Contractions of the unit ball, the log-Jacobian distortion functional,
//! orbit-grafted perturbations that make it grow linearly, and the projection
//! of stable-chart dynamics to a contraction.
//!
//! All Jacobian bookkeeping is done in log space: for contraction rate 1/2
//! the Jacobian of the n-th iterate underflows by n around 50, so only sums
//! of per-step logs are ever formed.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::bump::RadialCutoff;
use crate::error::{Error, Result};
use crate::map::{newton_invert, DomainBox, SampledMap};
use crate::real::{dist, norm, Real};

/// Fixed point of a contraction must sit at the origin within this.
const FIXED_POINT_TOL: f64 = 1e-9;

/// An embedding of the closed unit ball into its interior fixing 0.
#[derive(Debug, Clone)]
pub struct Contraction<S> {
    d: usize,
    map: SampledMap<S>,
    linear_radius: Option<S>,
}

impl<S: Real> Contraction<S> {
    /// Validate and wrap a map of the unit ball: fixes 0, sends the ball into
    /// its interior (probed on a boundary mesh), nonsingular Jacobian at
    /// interior probes.
    pub fn new(map: SampledMap<S>, linear_radius: Option<S>) -> Result<Self> {
        let d = map.dim_in();
        if map.dim_out() != d {
            return Err(Error::InvalidInput(
                "a contraction maps R^d to itself".into(),
            ));
        }
        let origin = vec![S::zero(); d];
        let moved = norm(&map.eval(&origin));
        if moved > S::of(FIXED_POINT_TOL) {
            return Err(Error::NotAContraction {
                reason: format!("0 is not fixed (|f(0)| = {:e})", moved.to64()),
            });
        }
        for p in crate::probe::sphere_mesh(d, S::one(), 4 * d + 16, 17) {
            let image = norm(&map.eval(&p));
            if image >= S::one() {
                return Err(Error::NotAContraction {
                    reason: format!(
                        "boundary probe lands outside the open ball (|f(x)| = {})",
                        image.to64()
                    ),
                });
            }
        }
        let mut rng = crate::probe::rng_from_seed(19);
        for p in crate::probe::sample_ball(&origin, S::of(0.95), 16, &mut rng) {
            let det = map.jacobian(&p)?.determinant().abs();
            if det < S::of(1e-12) {
                return Err(Error::NotAContraction {
                    reason: format!("singular Jacobian at a probe (|det| = {:e})", det.to64()),
                });
            }
        }
        Ok(Contraction {
            d,
            map,
            linear_radius,
        })
    }

    /// The linear contraction `x -> A x` (requires `|A x| < 1` on the ball).
    pub fn linear(a: DMatrix<S>) -> Result<Self> {
        let d = a.nrows();
        let map = SampledMap::linear(a, DomainBox::cube(d, S::one()));
        let mut c = Contraction::new(map, None)?;
        c.linear_radius = Some(S::one());
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn map(&self) -> &SampledMap<S> {
        &self.map
    }

    /// Radius of the certified zone where the map equals its derivative at 0.
    pub fn linear_radius(&self) -> Option<S> {
        self.linear_radius
    }

    pub fn eval(&self, x: &[S]) -> Vec<S> {
        self.map.eval(x)
    }

    pub fn jacobian(&self, x: &[S]) -> Result<DMatrix<S>> {
        self.map.jacobian(x)
    }

    pub fn log_jac(&self, x: &[S]) -> Result<S> {
        self.map.log_jacobian(x)
    }

    /// `D_0 f`.
    pub fn linear_part(&self) -> Result<DMatrix<S>> {
        let origin = vec![S::zero(); self.d];
        if self.map.has_analytic_jac() {
            self.map.jacobian(&origin)
        } else {
            self.map.fd_jacobian(&origin, S::of(1e-6))
        }
    }

    /// The forward orbit `x, f(x), ..., f^n(x)` (n + 1 points).
    pub fn orbit(&self, x: &[S], n: usize) -> Vec<Vec<S>> {
        let mut points = Vec::with_capacity(n + 1);
        points.push(x.to_vec());
        for _ in 0..n {
            let next = self.eval(points.last().unwrap());
            points.push(next);
        }
        points
    }

    /// Sum of per-step log-Jacobians along the orbit: `log Jac(f^n)(x)`.
    pub fn log_jac_orbit_sum(&self, x: &[S], n: usize) -> Result<S> {
        let mut acc = S::zero();
        let mut point = x.to_vec();
        for _ in 0..n {
            acc += self.log_jac(&point)?;
            point = self.eval(&point);
        }
        Ok(acc)
    }
}

/// One measurement of the distortion functional.
#[derive(Debug, Clone, Serialize)]
pub struct DistortionRecord {
    pub n: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub delta: f64,
}

fn check_in_punctured_ball<S: Real>(label: &str, p: &[S]) -> Result<()> {
    let r = norm(p);
    if r == S::zero() || r > S::one() {
        return Err(Error::InvalidInput(format!(
            "{label} must lie in the punctured closed unit ball (|{label}| = {})",
            r.to64()
        )));
    }
    Ok(())
}

/// `Delta_n(x, y) = |sum_{i<n} (log Jac f(f^i x) - log Jac f(f^i y))|`.
pub fn distortion<S: Real>(
    f: &Contraction<S>,
    x: &[S],
    y: &[S],
    n: usize,
) -> Result<DistortionRecord> {
    assert!(n >= 1, "distortion needs at least one iterate");
    check_in_punctured_ball("x", x)?;
    check_in_punctured_ball("y", y)?;
    let mut acc = S::zero();
    let mut px = x.to_vec();
    let mut py = y.to_vec();
    for _ in 0..n {
        acc += f.log_jac(&px)? - f.log_jac(&py)?;
        px = f.eval(&px);
        py = f.eval(&py);
    }
    Ok(DistortionRecord {
        n,
        x: x.iter().map(|v| v.to64()).collect(),
        y: y.iter().map(|v| v.to64()).collect(),
        delta: acc.abs().to64(),
    })
}

/// All partial records `Delta_m(x, y)` for `m = 1..=n_max` in one orbit pass.
pub fn distortion_sweep<S: Real>(
    f: &Contraction<S>,
    x: &[S],
    y: &[S],
    n_max: usize,
) -> Result<Vec<DistortionRecord>> {
    assert!(n_max >= 1);
    check_in_punctured_ball("x", x)?;
    check_in_punctured_ball("y", y)?;
    let x64: Vec<f64> = x.iter().map(|v| v.to64()).collect();
    let y64: Vec<f64> = y.iter().map(|v| v.to64()).collect();
    let mut records = Vec::with_capacity(n_max);
    let mut acc = S::zero();
    let mut px = x.to_vec();
    let mut py = y.to_vec();
    for m in 1..=n_max {
        acc += f.log_jac(&px)? - f.log_jac(&py)?;
        px = f.eval(&px);
        py = f.eval(&py);
        records.push(DistortionRecord {
            n: m,
            x: x64.clone(),
            y: y64.clone(),
            delta: acc.abs().to64(),
        });
    }
    Ok(records)
}

/// A contraction together with the measured C^1 distance to the map it
/// came from.
#[derive(Debug, Clone)]
pub struct Linearized<S> {
    pub contraction: Contraction<S>,
    pub c1_distance: S,
    pub radius: S,
}

/// Replace `f` by `D_0 f` on `B(0, radius/2)`, keep `f` outside `B(0, radius)`,
/// blend with a radial cutoff in between.
pub fn linearize_near_zero<S: Real>(f: &Contraction<S>, radius: S) -> Result<Linearized<S>> {
    if !(S::zero() < radius && radius < S::one()) {
        return Err(Error::InvalidInput("blend radius must lie in (0, 1)".into()));
    }
    let d = f.dim();
    let a = f.linear_part()?;
    // weight 1 = follow f, weight 0 = follow the linear part.
    let cut = RadialCutoff::new(radius * S::of(0.5), radius)?;
    let f_map = f.map().clone();
    let a_eval = a.clone();
    let eval = move |x: &[S]| -> Vec<S> {
        let r = norm(x);
        let w = S::one() - cut.eval_r(r);
        let ax: Vec<S> = {
            let v = &a_eval * nalgebra::DVector::from_column_slice(x);
            v.iter().copied().collect()
        };
        if w == S::one() {
            return f_map.eval(x);
        }
        if w == S::zero() {
            return ax;
        }
        let fx = f_map.eval(x);
        (0..x.len()).map(|i| w * fx[i] + (S::one() - w) * ax[i]).collect()
    };
    let cut2 = RadialCutoff::new(radius * S::of(0.5), radius)?;
    let f_map2 = f.map().clone();
    let a_jac = a.clone();
    let jac = move |x: &[S]| -> DMatrix<S> {
        let r = norm(x);
        let w = S::one() - cut2.eval_r(r);
        if w == S::one() {
            return f_map2.jacobian(x).expect("Jacobian of the input contraction");
        }
        if w == S::zero() && cut2.d1_r(r) == S::zero() {
            return a_jac.clone();
        }
        let df = f_map2.jacobian(x).expect("Jacobian of the input contraction");
        let fx = f_map2.eval(x);
        let ax = &a_jac * nalgebra::DVector::from_column_slice(x);
        // Dg = w Df + (1 - w) A + (f - Ax) grad(w)^T, grad(w) = -grad(cut).
        let mut out = df * w + &a_jac * (S::one() - w);
        let grad_cut = cut2.grad(x);
        for i in 0..x.len() {
            for j in 0..x.len() {
                out[(i, j)] -= (fx[i] - ax[i]) * grad_cut[j];
            }
        }
        out
    };
    let map = SampledMap::new(d, d, f.map().domain().clone(), eval).with_jac(jac);
    let mut result = Contraction::new(map, None).map_err(|e| match e {
        Error::NotAContraction { reason } => Error::NotAContraction {
            reason: format!("blend output: {reason}"),
        },
        other => other,
    })?;
    result.linear_radius = Some(radius * S::of(0.5));

    // Measured C^1 distance to the input, probed inside the blend region.
    let origin = vec![S::zero(); d];
    let mut probes =
        crate::probe::sample_ball(&origin, radius, 64, &mut crate::probe::rng_from_seed(23));
    probes.extend(crate::probe::sphere_mesh(d, radius * S::of(0.75), 8, 29));
    let c1 = crate::probe::c1_distance(result.map(), f.map(), &probes)?;
    Ok(Linearized {
        contraction: result,
        c1_distance: c1,
        radius,
    })
}

/// Orbit-grafted contraction: the base map with rescaled copies of `g1`
/// grafted along the orbit of `x`.
#[derive(Debug, Clone)]
pub struct GraftedContraction<S> {
    map: Contraction<S>,
    base: Contraction<S>,
    g1: SampledMap<S>,
    x: Vec<S>,
    i0: usize,
    horizon: usize,
    centers: Vec<Vec<S>>,
    radii: Vec<S>,
    jac_gap: S,
    predicted_n: usize,
    certified_big_n: f64,
}

impl<S: Real> GraftedContraction<S> {
    /// The grafted map, as a contraction.
    pub fn contraction(&self) -> &Contraction<S> {
        &self.map
    }

    pub fn base(&self) -> &Contraction<S> {
        &self.base
    }

    /// The model perturbation of the linear part (unit coordinates).
    pub fn g1(&self) -> &SampledMap<S> {
        &self.g1
    }

    pub fn grafted_point(&self) -> &[S] {
        &self.x
    }

    pub fn i0(&self) -> usize {
        self.i0
    }

    /// Grafts cover orbit indices `i0 .. horizon` (exclusive).
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn centers(&self) -> &[Vec<S>] {
        &self.centers
    }

    pub fn radii(&self) -> &[S] {
        &self.radii
    }

    /// Certified per-iterate gap `|log Jac g1(0) - log Jac f(0)|`.
    pub fn jac_gap(&self) -> S {
        self.jac_gap
    }

    /// Smallest iterate count at which the distortion certificate holds for
    /// every probe of the reference compact set.
    pub fn predicted_n(&self) -> usize {
        self.predicted_n
    }

    pub fn certified_big_n(&self) -> f64 {
        self.certified_big_n
    }
}

/// Scale of the graft radius relative to the local clearance.
const GRAFT_CLEARANCE_FRACTION: f64 = 1.0 / 3.0;
/// Extra grafted iterates beyond the certificate requirement, so that slope
/// measurements over long windows run on live grafts.
const GRAFT_HEADROOM: usize = 128;

/// Build the density-lemma perturbation: rescaled copies of a compactly
/// supported perturbation `g1` of `D_0 f` grafted along the orbit of `x`,
/// with supports disjoint from each other and from the orbits of the probe
/// mesh `lambda`. The result certifies `Delta_n(x, y) > big_n` for every
/// probe `y` at the predicted iterate count.
pub fn perturb_orbit<S: Real>(
    f: &Contraction<S>,
    x: &[S],
    lambda: &[Vec<S>],
    big_n: S,
    jac_gap: S,
) -> Result<GraftedContraction<S>> {
    if jac_gap <= S::zero() {
        return Err(Error::InvalidInput("jac_gap must be positive".into()));
    }
    if lambda.is_empty() {
        return Err(Error::InvalidInput("lambda probe mesh is empty".into()));
    }
    check_in_punctured_ball("x", x)?;
    for y in lambda {
        check_in_punctured_ball("lambda probe", y)?;
    }
    let d = f.dim();
    let linear_radius = f.linear_radius().ok_or_else(|| {
        Error::InvalidInput(
            "perturb_orbit needs a contraction with a certified linear zone \
             (run linearize_near_zero first)"
                .into(),
        )
    })?;
    let a = f.linear_part()?;

    // Orbit separation: relative margin between the orbit of x and the
    // orbits of the probe mesh.
    let sep_margin = S::of(1e-8);
    let depth_floor = S::of(1e-40);
    let x_orbit_full = orbit_until(f, x, depth_floor, 4000);
    let lambda_orbits: Vec<Vec<Vec<S>>> = lambda
        .iter()
        .map(|y| orbit_until(f, y, depth_floor, 4000))
        .collect();
    let mut min_rel_gap = S::of(f64::INFINITY);
    for xi in &x_orbit_full {
        for orbit in &lambda_orbits {
            for yj in orbit {
                // Relative to the pair's own scale: both orbits accumulate at
                // the fixed point, so absolute distances say nothing there.
                let scale = norm(xi).max(norm(yj));
                if scale < S::of(1e-200) {
                    continue;
                }
                min_rel_gap = min_rel_gap.min(dist(xi, yj) / scale);
            }
        }
    }
    if min_rel_gap < sep_margin {
        return Err(Error::OrbitsNotSeparated {
            min_gap: min_rel_gap.to64(),
            margin: sep_margin.to64(),
        });
    }

    // i0: everything from here on lives inside the certified linear zone.
    let zone = linear_radius * S::of(0.9);
    let mut i0 = 0usize;
    'scan: for i in 0..x_orbit_full.len() {
        if norm(&x_orbit_full[i]) > zone {
            continue;
        }
        for orbit in &lambda_orbits {
            if i < orbit.len() && norm(&orbit[i]) > zone {
                continue 'scan;
            }
        }
        i0 = i;
        break;
    }
    if norm(&x_orbit_full[i0]) > zone {
        return Err(Error::InvalidInput(
            "orbit never enters the certified linear zone".into(),
        ));
    }

    // Model perturbation g1 of the linear part, with the requested gap at 0:
    // g1(z) = A (z + s cut(|z|) z), det Dg1(0) = det A (1 + s)^d.
    let cut = RadialCutoff::new(S::of(0.25), S::of(0.5))?;
    let mut min_radial = S::of(f64::INFINITY);
    for k in 0..512 {
        let r = S::of(0.5 * (k as f64 + 0.5) / 512.0);
        min_radial = min_radial.min(cut.eval_r(r) + cut.d1_r(r) * r);
    }
    let s_cap = if min_radial < S::zero() {
        S::of(0.95) / (-min_radial)
    } else {
        S::of(10.0)
    };
    let max_feasible_gap = S::of(d as f64) * (S::one() + s_cap).ln();
    if jac_gap > max_feasible_gap {
        return Err(Error::GapInfeasible {
            requested: jac_gap.to64(),
            max_feasible: max_feasible_gap.to64(),
        });
    }
    let s = (jac_gap / S::of(d as f64)).exp() - S::one();
    let g1 = {
        let a_eval = a.clone();
        let cut_eval = cut.clone();
        let eval = move |z: &[S]| -> Vec<S> {
            let r = norm(z);
            let w = S::one() + s * cut_eval.eval_r(r);
            let scaled: Vec<S> = z.iter().map(|&v| v * w).collect();
            let v = &a_eval * nalgebra::DVector::from_column_slice(&scaled);
            v.iter().copied().collect()
        };
        let a_jac = a.clone();
        let cut_jac = cut.clone();
        let jac = move |z: &[S]| -> DMatrix<S> {
            let r = norm(z);
            let c = cut_jac.eval_r(r);
            let dc = cut_jac.d1_r(r);
            let mut inner = DMatrix::identity(z.len(), z.len()) * (S::one() + s * c);
            if dc != S::zero() && r > S::zero() {
                for i in 0..z.len() {
                    for j in 0..z.len() {
                        inner[(i, j)] += s * dc * z[i] * z[j] / r;
                    }
                }
            }
            &a_jac * inner
        };
        SampledMap::new(d, d, DomainBox::cube(d, S::one()), eval).with_jac(jac)
    };
    let log_jac_a = a.determinant().abs().ln();
    let log_jac_g1 = g1.log_jacobian(&vec![S::zero(); d])?;
    let measured_gap = (log_jac_g1 - log_jac_a).abs();

    // Worst initial distortion over the probe mesh.
    let mut delta_i0_max = S::zero();
    if i0 >= 1 {
        for y in lambda {
            let r = distortion(f, x, y, i0)?;
            delta_i0_max = delta_i0_max.max(S::of(r.delta));
        }
    }
    let needed = ((big_n + delta_i0_max) / measured_gap).to64().ceil() as usize + 1;
    let predicted_n = i0 + needed;
    let horizon = predicted_n + GRAFT_HEADROOM;

    // Graft centers and per-graft radii from the local clearances.
    let x_orbit = f.orbit(x, horizon + 1);
    let centers: Vec<Vec<S>> = x_orbit[i0..horizon].to_vec();
    let mut radii = Vec::with_capacity(centers.len());
    for (ci, c) in centers.iter().enumerate() {
        let cn = norm(c);
        let mut clearance = cn * S::of(0.5); // keep 0 outside the ball
        clearance = clearance.min(linear_radius - cn); // stay in the linear zone
        for (j, other) in x_orbit_full.iter().enumerate() {
            if j != ci + i0 {
                clearance = clearance.min(dist(c, other));
            }
        }
        for orbit in &lambda_orbits {
            for yj in orbit {
                clearance = clearance.min(dist(c, yj));
            }
            // Beyond the computed tail the orbit is within depth_floor of 0,
            // and the |c|/2 term already covers it.
        }
        if clearance <= S::zero() {
            return Err(Error::OrbitsNotSeparated {
                min_gap: clearance.to64(),
                margin: 0.0,
            });
        }
        radii.push(clearance * S::of(GRAFT_CLEARANCE_FRACTION));
    }

    // The grafted map: inside ball i it is the rescaled model, elsewhere the
    // base contraction.
    let next_points: Vec<Vec<S>> = (i0..horizon).map(|i| x_orbit[i + 1].clone()).collect();
    let base_map = f.map().clone();
    let centers_eval = centers.clone();
    let radii_eval = radii.clone();
    let next_eval = next_points.clone();
    let g1_eval = g1.clone();
    let eval = move |z: &[S]| -> Vec<S> {
        for (i, c) in centers_eval.iter().enumerate() {
            let r = radii_eval[i];
            if dist(z, c) <= r {
                let zeta: Vec<S> = (0..z.len()).map(|k| (z[k] - c[k]) / r).collect();
                let g = g1_eval.eval(&zeta);
                return (0..z.len()).map(|k| next_eval[i][k] + r * g[k]).collect();
            }
        }
        base_map.eval(z)
    };
    let base_map2 = f.map().clone();
    let centers_jac = centers.clone();
    let radii_jac = radii.clone();
    let g1_jac = g1.clone();
    let jac = move |z: &[S]| -> DMatrix<S> {
        for (i, c) in centers_jac.iter().enumerate() {
            let r = radii_jac[i];
            if dist(z, c) <= r {
                let zeta: Vec<S> = (0..z.len()).map(|k| (z[k] - c[k]) / r).collect();
                return g1_jac.jacobian(&zeta).expect("g1 Jacobian");
            }
        }
        base_map2.jacobian(z).expect("base Jacobian")
    };
    let grafted_map = SampledMap::new(d, d, f.map().domain().clone(), eval).with_jac(jac);
    let grafted = Contraction::new(grafted_map, None)?;

    // Certificate: distortion at the predicted iterate count beats big_n for
    // every probe.
    let mut certified = f64::INFINITY;
    for y in lambda {
        let rec = distortion(&grafted, x, y, predicted_n)?;
        certified = certified.min(rec.delta);
        if S::of(rec.delta) <= big_n {
            return Err(Error::InvalidInput(format!(
                "internal: certificate failed at a probe (delta = {}, N = {})",
                rec.delta,
                big_n.to64()
            )));
        }
    }

    Ok(GraftedContraction {
        map: grafted,
        base: f.clone(),
        g1,
        x: x.to_vec(),
        i0,
        horizon,
        centers,
        radii,
        jac_gap: measured_gap,
        predicted_n,
        certified_big_n: certified,
    })
}

fn orbit_until<S: Real>(
    f: &Contraction<S>,
    x: &[S],
    floor: S,
    cap: usize,
) -> Vec<Vec<S>> {
    let mut points = vec![x.to_vec()];
    for _ in 0..cap {
        let next = f.eval(points.last().unwrap());
        let done = norm(&next) < floor;
        points.push(next);
        if done {
            break;
        }
    }
    points
}

/// Chart data reducing the period-map on a local stable manifold to a
/// contraction of `R^{d^s}`.
#[derive(Debug, Clone)]
pub struct StableChart<S> {
    /// Chart map of the ambient ball (square, invertible on the region used).
    pub chart: SampledMap<S>,
    /// Graph map `R^{d^s} -> R^{d - d^s}` of the local stable manifold in
    /// chart coordinates.
    pub graph: SampledMap<S>,
    /// `v = pi^s(chart^{-1}(p))`.
    pub offset: Vec<S>,
    /// Period of the underlying orbit (metadata; the caller supplies the
    /// period map directly).
    pub period: usize,
    pub stable_dim: usize,
}

/// Project the dynamics of `f_tau` on the graph to stable coordinates:
/// `theta(x) = pi^s(chart^{-1}(f_tau(chart(x + v, g(x + v))))) - v`.
pub fn stable_chart_projection<S: Real>(
    chart_data: &StableChart<S>,
    f_tau: &SampledMap<S>,
) -> Result<Contraction<S>> {
    let d = chart_data.chart.dim_in();
    let ds = chart_data.stable_dim;
    assert_eq!(chart_data.graph.dim_in(), ds);
    assert_eq!(chart_data.graph.dim_out(), d - ds);
    assert_eq!(chart_data.offset.len(), ds);
    assert_eq!(f_tau.dim_in(), d);

    let chart = chart_data.chart.clone();
    let graph = chart_data.graph.clone();
    let offset = chart_data.offset.clone();
    let f_tau = f_tau.clone();
    let tol = S::of(1e-12);

    let embed = {
        let graph = graph.clone();
        let offset = offset.clone();
        move |x: &[S]| -> Vec<S> {
            let shifted: Vec<S> = (0..ds).map(|i| x[i] + offset[i]).collect();
            let mut w = shifted.clone();
            w.extend(graph.eval(&shifted));
            w
        }
    };

    // One full trip through the chart; returns the preimage chart point.
    let step = {
        let chart = chart.clone();
        let f_tau = f_tau.clone();
        let embed = embed.clone();
        move |x: &[S]| -> Result<Vec<S>> {
            let w = embed(x);
            let p = chart.eval(&w);
            let image = f_tau.eval(&p);
            newton_invert(&chart, &image, &w, tol, 60).map_err(|e| match e {
                Error::NewtonDivergence { residual, .. } => {
                    Error::ChartInversionFailure { residual }
                }
                other => other,
            })
        }
    };

    // Graph invariance: the image of a graph point is again a graph point.
    {
        let probes = crate::probe::sphere_mesh(ds, S::of(0.5), 2 * ds + 4, 31)
            .into_iter()
            .chain(std::iter::once(vec![S::zero(); ds]))
            .chain(crate::probe::sphere_mesh(ds, S::of(0.9), 2 * ds + 4, 37));
        for x in probes {
            let w_image = step(&x)?;
            let expected_u = graph.eval(&w_image[..ds]);
            let residual = dist(&w_image[ds..], &expected_u);
            if residual > S::of(1e-6) {
                return Err(Error::NotAContraction {
                    reason: format!(
                        "graph is not invariant under the period map \
                         (residual {:e} at a probe)",
                        residual.to64()
                    ),
                });
            }
        }
    }

    let step_eval = step.clone();
    let offset_eval = offset.clone();
    let eval = move |x: &[S]| -> Vec<S> {
        let w = step_eval(x).unwrap_or_else(|e| panic!("chart inversion failed: {e}"));
        (0..ds).map(|i| w[i] - offset_eval[i]).collect()
    };

    let chart_jac = chart.clone();
    let graph_jac = graph.clone();
    let f_tau_jac = f_tau.clone();
    let offset_jac = offset.clone();
    let step_jac = step;
    let jac = move |x: &[S]| -> DMatrix<S> {
        let shifted: Vec<S> = (0..ds).map(|i| x[i] + offset_jac[i]).collect();
        let mut w = shifted.clone();
        w.extend(graph_jac.eval(&shifted));
        let p = chart_jac.eval(&w);
        let w_image = step_jac(&x.to_vec()).unwrap_or_else(|e| panic!("chart inversion failed: {e}"));
        // D theta = P^s (Dchart(w'))^{-1} Df_tau(p) Dchart(w) [I; Dg].
        let d_chart_image = chart_jac.jacobian(&w_image).expect("chart Jacobian");
        let d_chart = chart_jac.jacobian(&w).expect("chart Jacobian");
        let d_f = f_tau_jac.jacobian(&p).expect("period map Jacobian");
        let d_graph = graph_jac.jacobian(&shifted).expect("graph Jacobian");
        let mut lift = DMatrix::zeros(d, ds);
        for i in 0..ds {
            lift[(i, i)] = S::one();
        }
        for i in 0..(d - ds) {
            for j in 0..ds {
                lift[(ds + i, j)] = d_graph[(i, j)];
            }
        }
        let forward = d_f * d_chart * lift;
        let pulled = d_chart_image
            .lu()
            .solve(&forward)
            .expect("chart Jacobian invertible");
        pulled.view((0, 0), (ds, ds)).into_owned()
    };

    let map = SampledMap::new(ds, ds, DomainBox::cube(ds, S::one()), eval).with_jac(jac);
    Contraction::new(map, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn half_contraction_1d() -> Contraction<f64> {
        Contraction::linear(DMatrix::from_element(1, 1, 0.5)).unwrap()
    }

    #[test]
    fn linear_contraction_has_zero_distortion() {
        let f = half_contraction_1d();
        for n in [1, 5, 50, 500] {
            let rec = distortion(&f, &[0.7], &[-0.3], n).unwrap();
            assert_eq!(rec.delta, 0.0);
        }
    }

    #[test]
    fn same_orbit_distortion_is_bounded() {
        // f(x) = x/2 + x^2/10 on [-1, 1]: log Jac varies along the orbit but
        // telescopes for points on the same orbit.
        let map = SampledMap::new(1, 1, DomainBox::cube(1, 1.0), |x: &[f64]| {
            vec![0.5 * x[0] + 0.1 * x[0] * x[0]]
        })
        .with_jac(|x: &[f64]| DMatrix::from_element(1, 1, 0.5 + 0.2 * x[0]));
        let f = Contraction::new(map, None).unwrap();
        let x = [0.8];
        let y = f.eval(&x);
        let sup_log: f64 = (0..200)
            .map(|k| {
                let t = -1.0 + 2.0 * k as f64 / 199.0;
                (0.5 + 0.2 * t).abs().ln().abs()
            })
            .fold(0.0, f64::max);
        let mut worst = 0.0_f64;
        for rec in distortion_sweep(&f, &x, &y, 1000).unwrap() {
            worst = worst.max(rec.delta);
        }
        assert!(
            worst <= 2.0 * sup_log + 1e-12,
            "same-orbit distortion {worst} exceeds 2 sup |log Jac| = {}",
            2.0 * sup_log
        );
    }

    #[test]
    fn summed_and_composed_log_jacobians_agree() {
        let map = SampledMap::new(2, 2, DomainBox::cube(2, 1.0), |x: &[f64]| {
            vec![
                0.5 * x[0] + 0.05 * x[1] * x[1],
                0.4 * x[1] - 0.03 * x[0] * x[0],
            ]
        })
        .with_jac(|x: &[f64]| {
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1 * x[1], -0.06 * x[0], 0.4])
        });
        let f = Contraction::new(map, None).unwrap();
        let x = [0.6, -0.5];
        let n = 200;
        let summed = f.log_jac_orbit_sum(&x, n).unwrap();
        // Composed route with rescaling: log det of the matrix product.
        let mut p = DMatrix::<f64>::identity(2, 2);
        let mut log_scale = 0.0;
        let mut point = x.to_vec();
        for _ in 0..n {
            p = f.jacobian(&point).unwrap() * p;
            let s = p.abs().max();
            p /= s;
            log_scale += 2.0 * s.ln();
            point = f.eval(&point);
        }
        let composed = log_scale + p.determinant().abs().ln();
        assert_abs_diff_eq!(summed, composed, epsilon = 1e-8);
    }

    #[test]
    fn linearize_keeps_value_outside_blend_zone() {
        let map = SampledMap::new(1, 1, DomainBox::cube(1, 1.0), |x: &[f64]| {
            vec![0.5 * x[0] + 0.1 * x[0] * x[0]]
        })
        .with_jac(|x: &[f64]| DMatrix::from_element(1, 1, 0.5 + 0.2 * x[0]));
        let f = Contraction::new(map, None).unwrap();
        let lin = linearize_near_zero(&f, 0.1).unwrap();
        // Identical beyond the blend radius.
        assert_eq!(lin.contraction.eval(&[0.2])[0], f.eval(&[0.2])[0]);
        // Exactly linear inside half the radius.
        for x in [0.01, 0.03, 0.049] {
            assert_abs_diff_eq!(lin.contraction.eval(&[x])[0], 0.5 * x, epsilon = 1e-15);
            assert_abs_diff_eq!(
                lin.contraction.jacobian(&[x]).unwrap()[(0, 0)],
                0.5,
                epsilon = 1e-15
            );
        }
        // Already-linear input comes back unchanged.
        let g = half_contraction_1d();
        let lin2 = linearize_near_zero(&g, 0.2).unwrap();
        for x in [0.05, 0.15, 0.6] {
            assert_eq!(lin2.contraction.eval(&[x])[0], 0.5 * x);
        }
        assert_eq!(lin2.c1_distance, 0.0);
    }

    #[test]
    fn linearize_c1_distance_is_small_and_bounded() {
        let map = SampledMap::new(1, 1, DomainBox::cube(1, 1.0), |x: &[f64]| {
            vec![0.5 * x[0] + 0.1 * x[0] * x[0]]
        })
        .with_jac(|x: &[f64]| DMatrix::from_element(1, 1, 0.5 + 0.2 * x[0]));
        let f = Contraction::new(map, None).unwrap();
        let lin = linearize_near_zero(&f, 0.1).unwrap();
        assert!(
            lin.c1_distance <= 0.03,
            "C1 distance {} above the documented bound",
            lin.c1_distance
        );
    }

    #[test]
    fn perturb_orbit_realizes_the_certified_slope() {
        let f = half_contraction_1d();
        let x = [0.7];
        let lambda: Vec<Vec<f64>> = (0..5).map(|k| vec![-0.8 + 0.1 * k as f64]).collect();
        let gap = 1.2_f64.ln();
        let grafted = perturb_orbit(&f, &x, &lambda, 10.0, gap).unwrap();
        assert_abs_diff_eq!(grafted.jac_gap(), gap, epsilon = 1e-12);
        // Slope of Delta_n in n matches the gap exactly for a linear base.
        let records = distortion_sweep(grafted.contraction(), &x, &lambda[0], grafted.i0() + 100)
            .unwrap();
        let i0 = grafted.i0();
        for rec in &records {
            if rec.n > i0 + 20 && rec.n <= i0 + 100 {
                let slope = rec.delta / ((rec.n - i0) as f64);
                assert!(
                    (slope - gap).abs() <= 0.01 * gap,
                    "slope {slope} off the certified gap {gap} at n = {}",
                    rec.n
                );
            }
        }
        // The certificate beat N at the predicted iterate.
        assert!(grafted.certified_big_n() > 10.0);
        let needed = (10.0 / gap).ceil() as usize;
        assert!(
            grafted.predicted_n() <= grafted.i0() + needed + 1,
            "predicted n = {} too conservative",
            grafted.predicted_n()
        );
    }

    #[test]
    fn perturb_orbit_rejects_same_orbit_probes() {
        let f = half_contraction_1d();
        let x = [0.7];
        let lambda = vec![f.eval(&x)];
        let err = perturb_orbit(&f, &x, &lambda, 5.0, 1.2_f64.ln()).unwrap_err();
        assert!(matches!(err, Error::OrbitsNotSeparated { .. }), "{err}");
    }

    #[test]
    fn perturb_orbit_rejects_infeasible_gap() {
        let f = half_contraction_1d();
        let x = [0.7];
        let lambda = vec![vec![-0.5]];
        let err = perturb_orbit(&f, &x, &lambda, 5.0, 10.0).unwrap_err();
        assert!(matches!(err, Error::GapInfeasible { .. }), "{err}");
    }

    #[test]
    fn grafted_map_agrees_with_base_off_the_supports() {
        let f = half_contraction_1d();
        let x = [0.7];
        let lambda = vec![vec![-0.5]];
        let grafted = perturb_orbit(&f, &x, &lambda, 5.0, 1.2_f64.ln()).unwrap();
        // Probes away from every graft ball.
        for z in [[-0.9], [-0.1], [0.91]] {
            let clear = grafted
                .centers()
                .iter()
                .zip(grafted.radii())
                .all(|(c, &r)| dist(&z, c) > r);
            assert!(clear);
            assert_eq!(grafted.contraction().eval(&z), f.eval(&z));
        }
        // At a graft center the Jacobian carries the gap.
        let c0 = grafted.centers()[0].clone();
        let lj = grafted.contraction().log_jac(&c0).unwrap();
        assert_abs_diff_eq!(lj, 0.5_f64.ln() + 1.2_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn grafted_jacobian_matches_finite_differences() {
        let f = half_contraction_1d();
        let x = [0.7];
        let lambda = vec![vec![-0.5]];
        let grafted = perturb_orbit(&f, &x, &lambda, 5.0, 1.2_f64.ln()).unwrap();
        let c0 = grafted.centers()[0].clone();
        let r0 = grafted.radii()[0];
        let step = r0 * 1e-3;
        let fd = grafted.contraction().map().fd_jacobian(&c0, step).unwrap();
        let analytic = grafted.contraction().jacobian(&c0).unwrap();
        assert_abs_diff_eq!(fd[(0, 0)], analytic[(0, 0)], epsilon = 1e-6);
    }

    #[test]
    fn perturbation_c1_size_is_graft_scale_invariant() {
        // d_C1(g, f) measured inside each graft ball is the same across the
        // geometrically shrinking radii (the rescaling is C^1-isometric).
        let f = half_contraction_1d();
        let x = [0.7];
        let lambda = vec![vec![-0.5]];
        let grafted = perturb_orbit(&f, &x, &lambda, 5.0, 1.2_f64.ln()).unwrap();
        let mut sizes = Vec::new();
        for idx in [0usize, 3, 6] {
            let c = &grafted.centers()[idx];
            let r = grafted.radii()[idx];
            let mut sup = 0.0_f64;
            for k in 0..40 {
                let z = [c[0] + r * (-1.0 + 2.0 * k as f64 / 39.0)];
                let gv = grafted.contraction().eval(&z)[0];
                let fv = f.eval(&z)[0];
                let gj = grafted.contraction().jacobian(&z).unwrap()[(0, 0)];
                let fj = f.jacobian(&z).unwrap()[(0, 0)];
                sup = sup.max((gj - fj).abs() + (gv - fv).abs());
            }
            sizes.push(sup);
        }
        for pair in sizes.windows(2) {
            assert!(
                (pair[0] - pair[1]).abs() <= 0.05 * pair[0].max(pair[1]),
                "graft C1 size varies with scale: {sizes:?}"
            );
        }
    }

    #[test]
    fn stable_chart_projection_of_linear_model() {
        // f_tau = diag(1/2, 2), identity chart, zero graph: theta(x) = x/2.
        let f_tau = SampledMap::linear(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]),
            DomainBox::cube(2, 4.0),
        );
        let chart = StableChart {
            chart: SampledMap::<f64>::identity(DomainBox::cube(2, 4.0)),
            graph: SampledMap::new(1, 1, DomainBox::cube(1, 2.0), |_: &[f64]| vec![0.0])
                .with_jac(|_: &[f64]| DMatrix::zeros(1, 1)),
            offset: vec![0.0],
            period: 1,
            stable_dim: 1,
        };
        let theta = stable_chart_projection(&chart, &f_tau).unwrap();
        assert_abs_diff_eq!(theta.eval(&[0.6])[0], 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(theta.jacobian(&[0.0]).unwrap()[(0, 0)], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn stable_chart_rejects_non_invariant_graph() {
        let f_tau = SampledMap::linear(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]),
            DomainBox::cube(2, 4.0),
        );
        // A tilted graph is not invariant under the diagonal model.
        let chart = StableChart {
            chart: SampledMap::<f64>::identity(DomainBox::cube(2, 4.0)),
            graph: SampledMap::new(1, 1, DomainBox::cube(1, 2.0), |x: &[f64]| vec![0.3 * x[0]])
                .with_jac(|_: &[f64]| DMatrix::from_element(1, 1, 0.3)),
            offset: vec![0.0],
            period: 1,
            stable_dim: 1,
        };
        let err = stable_chart_projection(&chart, &f_tau).unwrap_err();
        assert!(matches!(err, Error::NotAContraction { .. }), "{err}");
    }
}
