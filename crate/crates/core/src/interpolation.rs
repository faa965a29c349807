//! The C^2 correction field built from a C^1 disk diffeomorphism by
//! convolution against the bell kernel, and the interpolating generating
//! function `S = S0 + rho Q`.
//!
//! For a diffeomorphism `psi` of `R^n` equal to the identity outside a disk
//! `D` and fixing a base point `u_*` on the boundary, write
//! `beta_i(u) = psi_i(u) - u_i` and `alpha_i = d beta_i`. The correction is
//!
//! ```text
//!   Q(u, eta) = sum_i eta_i INT Phi_n(w) [beta_i(u - eta_i w) - beta_i(u_* - eta_i w)] dw,
//! ```
//!
//! equivalently the path integral from `u_*` to `u` of the smoothed forms
//! `alpha_i` convolved at scale `eta_i`. The value rule uses the first form
//! (it needs only evaluations of `psi`); the path-integral form is kept as a
//! second, cross-checked route. First and second derivatives are evaluated by
//! trading `eta`-derivatives for derivatives of the kernel, so they need only
//! the first derivative of `psi`:
//!
//! ```text
//!   dQ/du_j        =  sum_i eta_i INT Phi_n(w) alpha_i[j](u - eta_i w) dw
//!   dQ/deta_i      = -INT K(w) [beta_i(u - eta_i w) - beta_i(u_* - eta_i w)] dw
//!   d2Q/du_j deta_i = -INT K(w) alpha_i[j](u - eta_i w) dw
//!   d2Q/du_j du_k  =  sum_i INT d_k Phi_n(w) alpha_i[j](u - eta_i w) dw
//!   d2Q/deta_i^2   =  INT K(w) [alpha_i(x - eta_i w) . w]_{x=u_*}^{x=u} dw
//! ```
//!
//! with `K(w) = dPhi_n(w) . w + (n - 1) Phi_n(w)`; the mixed `eta_i eta_j`
//! derivatives vanish for `i != j`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::bump::{Bell, RadialCutoff};
use crate::error::{Error, Result};
use crate::genfn::{GenFnHessian, GeneratingFunction};
use crate::map::{DomainBox, SampledMap};
use crate::quadrature::QuadratureRule;
use crate::real::{dist, norm, Real};

/// Node density (per unit length, per dimension) for the convolution grids.
pub const DEFAULT_CONV_NODES_PER_UNIT: usize = 32;
/// Panels for the outer path integral in the iterated-quadrature route.
pub const DEFAULT_PATH_PANELS: usize = 32;
/// Node doubling may move the correction by at most this much.
pub const QUADRATURE_CONSISTENCY_TOL: f64 = 1e-6;

/// A closed ball given by center and radius.
#[derive(Debug, Clone)]
pub struct Ball<S> {
    pub center: Vec<S>,
    pub radius: S,
}

impl<S: Real> Ball<S> {
    pub fn new(center: Vec<S>, radius: S) -> Self {
        assert!(radius > S::zero());
        Ball { center, radius }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[S]) -> bool {
        dist(x, &self.center) <= self.radius
    }
}

/// A C^1 diffeomorphism of `R^n` supported in a disk: identity outside `D`
/// and on a collar of the boundary, fixing the base point `u_*` on `dD`.
#[derive(Debug, Clone)]
pub struct DiskDiffeo<S> {
    n: usize,
    psi: SampledMap<S>,
    disk: Ball<S>,
    collar: S,
    base_point: Vec<S>,
}

impl<S: Real> DiskDiffeo<S> {
    pub fn new(psi: SampledMap<S>, disk: Ball<S>, collar: S, base_point: Vec<S>) -> Result<Self> {
        let n = disk.dim();
        if psi.dim_in() != n || psi.dim_out() != n {
            return Err(Error::InvalidInput(format!(
                "psi must map R^{n} to itself, got {}x{}",
                psi.dim_in(),
                psi.dim_out()
            )));
        }
        if !(S::zero() < collar && collar < disk.radius) {
            return Err(Error::InvalidInput(
                "collar width must lie in (0, disk radius)".into(),
            ));
        }
        let on_boundary = (dist(&base_point, &disk.center) - disk.radius).abs();
        if on_boundary > S::of(1e-9) {
            return Err(Error::InvalidInput(format!(
                "base point must lie on the disk boundary (off by {:e})",
                on_boundary.to64()
            )));
        }
        let moved = dist(&psi.eval(&base_point), &base_point);
        if moved > S::of(1e-12) {
            return Err(Error::InvalidInput(format!(
                "psi must fix the base point (moved by {:e})",
                moved.to64()
            )));
        }
        // Identity on the collar and outside the disk.
        for &factor in &[1.0 - 0.5 * collar.to64() / disk.radius.to64(), 1.0, 1.2] {
            for p in crate::probe::sphere_mesh(n, disk.radius * S::of(factor), 2 * n + 8, 11) {
                let shifted: Vec<S> = (0..n).map(|i| disk.center[i] + p[i]).collect();
                let displacement = dist(&psi.eval(&shifted), &shifted);
                if displacement > S::of(1e-12) {
                    return Err(Error::InvalidInput(format!(
                        "psi must equal the identity on the collar and outside the disk \
                         (displacement {:e} at radius factor {factor})",
                        displacement.to64()
                    )));
                }
            }
        }
        // Embedding: nonsingular Jacobian at interior probes.
        for p in crate::probe::sample_ball(
            &disk.center,
            disk.radius,
            16,
            &mut crate::probe::rng_from_seed(13),
        ) {
            let det = psi.jacobian(&p)?.determinant().abs();
            if det < S::of(1e-12) {
                return Err(Error::InvalidInput(format!(
                    "psi has a singular Jacobian at a probe (|det| = {:e})",
                    det.to64()
                )));
            }
        }
        Ok(DiskDiffeo {
            n,
            psi,
            disk,
            collar,
            base_point,
        })
    }

    /// The identity disk diffeomorphism (``everything supported, nothing moved``).
    pub fn identity(disk: Ball<S>) -> Self {
        let n = disk.dim();
        let mut base_point = disk.center.clone();
        base_point[0] += disk.radius;
        let domain = DomainBox::cube(n, S::of(4.0) * (norm(&disk.center) + disk.radius).max(S::one()));
        let collar = disk.radius * S::of(0.25);
        DiskDiffeo {
            n,
            psi: SampledMap::identity(domain),
            disk,
            collar,
            base_point,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn psi(&self) -> &SampledMap<S> {
        &self.psi
    }

    pub fn disk(&self) -> &Ball<S> {
        &self.disk
    }

    pub fn collar(&self) -> S {
        self.collar
    }

    pub fn base_point(&self) -> &[S] {
        &self.base_point
    }

    /// Displacement `beta(u) = psi(u) - u`.
    pub fn beta(&self, u: &[S]) -> Vec<S> {
        let v = self.psi.eval(u);
        (0..self.n).map(|i| v[i] - u[i]).collect()
    }

    /// `alpha` rows as a matrix: `D psi(u) - I`.
    pub fn alpha(&self, u: &[S]) -> DMatrix<S> {
        let mut a = self.psi.jacobian(u).expect("psi Jacobian");
        for i in 0..self.n {
            a[(i, i)] -= S::one();
        }
        a
    }

    /// Measured `sup |psi - Id| + |Dpsi - I|` over interior probes.
    pub fn c1_amplitude(&self, probes: usize, seed: u64) -> S {
        let pts = crate::probe::sample_ball(
            &self.disk.center,
            self.disk.radius,
            probes,
            &mut crate::probe::rng_from_seed(seed),
        );
        let mut sup = S::zero();
        for p in &pts {
            let b = self.beta(p);
            let a = self.alpha(p);
            sup = sup.max(crate::real::max_abs(&b) + crate::probe::max_abs_mat(&a));
        }
        sup
    }
}

/// One dimension of the convolution grid: Gauss nodes per smooth segment of
/// the bell, with kernel values cached.
#[derive(Debug, Clone)]
struct Grid1d<S> {
    nodes: Vec<S>,
    weights: Vec<S>,
    phi: Vec<S>,
    dphi: Vec<S>,
}

impl<S: Real> Grid1d<S> {
    fn build(bell: &Bell<S>, nodes_per_unit: usize) -> Self {
        let a = bell.plateau_halfwidth();
        let b = bell.support_radius();
        let breaks = [-b, -a, a, b];
        let mut grid = Grid1d {
            nodes: Vec::new(),
            weights: Vec::new(),
            phi: Vec::new(),
            dphi: Vec::new(),
        };
        // Composite Gauss panels inside each smooth segment of the kernel:
        // the integrands carry mild higher-derivative kinks from the maps
        // being convolved, which composite panels absorb far better than one
        // high-order panel.
        let rule = QuadratureRule::gauss_legendre(8);
        for seg in breaks.windows(2) {
            let len = (seg[1] - seg[0]).to64();
            let count = ((len * nodes_per_unit as f64).ceil() as usize).max(8);
            let panels = count.div_ceil(8);
            let width = (seg[1] - seg[0]) / S::of(panels as f64);
            for p in 0..panels {
                let lo = seg[0] + width * S::of(p as f64);
                for (x, w) in rule.scaled(lo, lo + width) {
                    grid.nodes.push(x);
                    grid.weights.push(w);
                    grid.phi.push(bell.eval(x));
                    grid.dphi.push(bell.d1(x));
                }
            }
        }
        grid
    }
}

/// One tensor-product quadrature node in `R^n` with the kernel combinations
/// used by the derivative formulas.
#[derive(Debug, Clone)]
struct TensorNode<S> {
    w: Vec<S>,
    /// Quadrature weight times `Phi_n(w)`.
    weight_phi: S,
    /// Quadrature weight times `dPhi_n(w)` (gradient vector).
    weight_dphi: Vec<S>,
    /// Quadrature weight times `K(w) = dPhi_n(w) . w + (n - 1) Phi_n(w)`.
    weight_kernel: S,
}

fn tensor_nodes<S: Real>(grid: &Grid1d<S>, n: usize) -> Vec<TensorNode<S>> {
    let m = grid.nodes.len();
    let mut nodes = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let w: Vec<S> = idx.iter().map(|&k| grid.nodes[k]).collect();
        let weight: S = idx.iter().map(|&k| grid.weights[k]).fold(S::one(), |a, b| a * b);
        let phi_vals: Vec<S> = idx.iter().map(|&k| grid.phi[k]).collect();
        let phi_n: S = phi_vals.iter().fold(S::one(), |a, &b| a * b);
        let mut dphi_n = vec![S::zero(); n];
        for j in 0..n {
            let mut v = grid.dphi[idx[j]];
            for (l, &phi) in phi_vals.iter().enumerate() {
                if l != j {
                    v *= phi;
                }
            }
            dphi_n[j] = v;
        }
        let kernel = dphi_n
            .iter()
            .zip(&w)
            .fold(S::zero(), |acc, (&d, &wj)| acc + d * wj)
            + S::of((n as f64) - 1.0) * phi_n;
        nodes.push(TensorNode {
            w,
            weight_phi: weight * phi_n,
            weight_dphi: dphi_n.iter().map(|&d| weight * d).collect(),
            weight_kernel: weight * kernel,
        });
        // Odometer.
        let mut carry = true;
        for slot in idx.iter_mut() {
            if !carry {
                break;
            }
            *slot += 1;
            if *slot < m {
                carry = false;
            } else {
                *slot = 0;
            }
        }
        if carry {
            return nodes;
        }
    }
}

/// A smoothed 1-form `alpha^{*t}(u) = t INT Phi_n(w) alpha(u - t w) dw`.
pub struct SmoothedForm<S> {
    n: usize,
    t: S,
    alpha: Arc<dyn Fn(&[S]) -> Vec<S> + Send + Sync>,
    nodes: Arc<Vec<TensorNode<S>>>,
}

impl<S: Real> SmoothedForm<S> {
    /// Covector components of the smoothed form at `u`.
    pub fn eval(&self, u: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.n];
        if self.t == S::zero() {
            return out;
        }
        let mut shifted = vec![S::zero(); self.n];
        for node in self.nodes.iter() {
            for j in 0..self.n {
                shifted[j] = u[j] - self.t * node.w[j];
            }
            let a = (self.alpha)(&shifted);
            for j in 0..self.n {
                out[j] += node.weight_phi * a[j];
            }
        }
        for v in &mut out {
            *v *= self.t;
        }
        out
    }

    /// `d/dt` of the smoothed form: `-INT K(w) alpha(u - t w) dw`.
    pub fn d_dt(&self, u: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.n];
        let mut shifted = vec![S::zero(); self.n];
        for node in self.nodes.iter() {
            for j in 0..self.n {
                shifted[j] = u[j] - self.t * node.w[j];
            }
            let a = (self.alpha)(&shifted);
            for j in 0..self.n {
                out[j] -= node.weight_kernel * a[j];
            }
        }
        out
    }
}

/// Convolve a continuous compactly supported 1-form against the bell at
/// scale `t`.
pub fn convolve_form<S: Real, F>(
    alpha: F,
    n: usize,
    t: S,
    bell: &Bell<S>,
    nodes_per_unit: usize,
) -> SmoothedForm<S>
where
    F: Fn(&[S]) -> Vec<S> + Send + Sync + 'static,
{
    let grid = Grid1d::build(bell, nodes_per_unit);
    SmoothedForm {
        n,
        t,
        alpha: Arc::new(alpha),
        nodes: Arc::new(tensor_nodes(&grid, n)),
    }
}

/// The correction field `Q(u, eta)` with analytic first and second
/// derivative rules realized by differentiating under the integral.
#[derive(Clone)]
pub struct CorrectionField<S> {
    n: usize,
    psi: DiskDiffeo<S>,
    nodes: Arc<Vec<TensorNode<S>>>,
    quadrature_error: S,
}

impl<S: Real> CorrectionField<S> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn psi(&self) -> &DiskDiffeo<S> {
        &self.psi
    }

    /// Observed node-doubling discrepancy from construction.
    pub fn quadrature_error(&self) -> S {
        self.quadrature_error
    }

    fn eval_with_nodes(&self, nodes: &[TensorNode<S>], u: &[S], eta: &[S]) -> S {
        let n = self.n;
        let u_star = self.psi.base_point();
        let mut acc = S::zero();
        let mut at_u = vec![S::zero(); n];
        let mut at_star = vec![S::zero(); n];
        for i in 0..n {
            if eta[i] == S::zero() {
                continue;
            }
            let mut conv = S::zero();
            for node in nodes {
                for j in 0..n {
                    at_u[j] = u[j] - eta[i] * node.w[j];
                    at_star[j] = u_star[j] - eta[i] * node.w[j];
                }
                let beta_u = self.psi.beta(&at_u)[i];
                let beta_star = self.psi.beta(&at_star)[i];
                conv += node.weight_phi * (beta_u - beta_star);
            }
            acc += eta[i] * conv;
        }
        acc
    }

    /// `Q(u, eta)` by the collapsed convolution rule (needs only `psi`
    /// evaluations).
    pub fn eval(&self, u: &[S], eta: &[S]) -> S {
        self.eval_with_nodes(&self.nodes, u, eta)
    }

    /// `Q(u, eta)` by the iterated-quadrature route: outer path integral of
    /// the smoothed forms along the polyline `u_* -> ... -> u` (straight
    /// segment when `waypoints` is `None`).
    pub fn eval_via_path(&self, u: &[S], eta: &[S], waypoints: Option<&[Vec<S>]>) -> S {
        let n = self.n;
        let u_star = self.psi.base_point().to_vec();
        let form = |x: &[S]| -> Vec<S> {
            // sum_i eta_i INT Phi_n(w) alpha_i[j](x - eta_i w) dw, as a covector in j.
            let mut cov = vec![S::zero(); n];
            let mut shifted = vec![S::zero(); n];
            for i in 0..n {
                if eta[i] == S::zero() {
                    continue;
                }
                for node in self.nodes.iter() {
                    for j in 0..n {
                        shifted[j] = x[j] - eta[i] * node.w[j];
                    }
                    let a = self.psi.alpha(&shifted);
                    for j in 0..n {
                        cov[j] += eta[i] * node.weight_phi * a[(i, j)];
                    }
                }
            }
            cov
        };
        let rule = QuadratureRule::gauss_legendre(4);
        let mut path: Vec<Vec<S>> = vec![u_star];
        if let Some(pts) = waypoints {
            path.extend(pts.iter().cloned());
        }
        path.push(u.to_vec());
        crate::quadrature::path_integral_polyline(&form, &path, &rule, DEFAULT_PATH_PANELS)
            .expect("path integral")
    }

    /// `dQ/du` as a covector.
    pub fn grad_u(&self, u: &[S], eta: &[S]) -> Vec<S> {
        let n = self.n;
        let mut out = vec![S::zero(); n];
        let mut shifted = vec![S::zero(); n];
        for i in 0..n {
            if eta[i] == S::zero() {
                continue;
            }
            for node in self.nodes.iter() {
                for j in 0..n {
                    shifted[j] = u[j] - eta[i] * node.w[j];
                }
                let a = self.psi.alpha(&shifted);
                for j in 0..n {
                    out[j] += eta[i] * node.weight_phi * a[(i, j)];
                }
            }
        }
        out
    }

    /// `dQ/deta`.
    pub fn grad_eta(&self, u: &[S], eta: &[S]) -> Vec<S> {
        let n = self.n;
        let u_star = self.psi.base_point();
        let mut out = vec![S::zero(); n];
        let mut at_u = vec![S::zero(); n];
        let mut at_star = vec![S::zero(); n];
        for i in 0..n {
            let mut acc = S::zero();
            for node in self.nodes.iter() {
                for j in 0..n {
                    at_u[j] = u[j] - eta[i] * node.w[j];
                    at_star[j] = u_star[j] - eta[i] * node.w[j];
                }
                let beta_u = self.psi.beta(&at_u)[i];
                let beta_star = self.psi.beta(&at_star)[i];
                acc -= node.weight_kernel * (beta_u - beta_star);
            }
            out[i] = acc;
        }
        out
    }

    /// All second-derivative blocks in one pass over the nodes.
    pub fn hessian(&self, u: &[S], eta: &[S]) -> GenFnHessian<S> {
        let n = self.n;
        let u_star = self.psi.base_point();
        let mut uu = DMatrix::zeros(n, n);
        let mut u_eta = DMatrix::zeros(n, n);
        let mut eta_eta = DMatrix::zeros(n, n);
        let mut at_u = vec![S::zero(); n];
        let mut at_star = vec![S::zero(); n];
        for i in 0..n {
            for node in self.nodes.iter() {
                for j in 0..n {
                    at_u[j] = u[j] - eta[i] * node.w[j];
                    at_star[j] = u_star[j] - eta[i] * node.w[j];
                }
                let a_u = self.psi.alpha(&at_u);
                let a_star = self.psi.alpha(&at_star);
                for j in 0..n {
                    // d2Q/du_j deta_i = -INT K alpha_i[j](u - eta_i w).
                    u_eta[(j, i)] -= node.weight_kernel * a_u[(i, j)];
                    // d2Q/du_j du_k = sum_i INT d_k Phi_n alpha_i[j](u - eta_i w).
                    for k in 0..n {
                        uu[(j, k)] += node.weight_dphi[k] * a_u[(i, j)];
                    }
                }
                // d2Q/deta_i^2 = INT K [alpha_i . w]_{x=u_*}^{x=u}.
                let mut bracket = S::zero();
                for j in 0..n {
                    bracket += (a_u[(i, j)] - a_star[(i, j)]) * node.w[j];
                }
                eta_eta[(i, i)] += node.weight_kernel * bracket;
            }
        }
        GenFnHessian { uu, u_eta, eta_eta }
    }

    /// Sup over probes of all derivative magnitudes up to order two (the
    /// measured C^2 size of the correction).
    pub fn c2_norm_on(&self, probes: &[(Vec<S>, Vec<S>)]) -> S {
        let mut sup = S::zero();
        for (u, eta) in probes {
            sup = sup.max(self.eval(u, eta).abs());
            sup = sup.max(crate::real::max_abs(&self.grad_u(u, eta)));
            sup = sup.max(crate::real::max_abs(&self.grad_eta(u, eta)));
            let h = self.hessian(u, eta);
            sup = sup.max(crate::probe::max_abs_mat(&h.uu));
            sup = sup.max(crate::probe::max_abs_mat(&h.u_eta));
            sup = sup.max(crate::probe::max_abs_mat(&h.eta_eta));
        }
        sup
    }
}

impl<S> std::fmt::Debug for CorrectionField<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CorrectionField").field("n", &self.n).finish()
    }
}

/// Build the correction field for `psi`, certifying the quadrature by node
/// doubling at a fixed probe family.
pub fn build_correction<S: Real>(
    psi: &DiskDiffeo<S>,
    bell: &Bell<S>,
    nodes_per_unit: usize,
) -> Result<CorrectionField<S>> {
    let n = psi.n();
    let grid = Grid1d::build(bell, nodes_per_unit);
    let grid2 = Grid1d::build(bell, nodes_per_unit * 2);
    let nodes = Arc::new(tensor_nodes(&grid, n));
    let nodes2 = tensor_nodes(&grid2, n);
    let mut field = CorrectionField {
        n,
        psi: psi.clone(),
        nodes,
        quadrature_error: S::zero(),
    };

    let disk = psi.disk().clone();
    let mut max_gap = S::zero();
    let eta_scales = [0.05, 0.15, 0.3];
    let mut probes: Vec<(Vec<S>, Vec<S>)> = Vec::new();
    for axis in 0..n {
        for &sign in &[1.0, -1.0] {
            let mut u = disk.center.clone();
            u[axis] += disk.radius * S::of(0.6 * sign);
            for &es in &eta_scales {
                let mut eta = vec![S::zero(); n];
                eta[axis] = S::of(es * sign);
                probes.push((u.clone(), eta));
            }
        }
    }
    probes.push((disk.center.clone(), vec![S::of(0.2); n]));
    for (u, eta) in &probes {
        let coarse = field.eval_with_nodes(&field.nodes, u, eta);
        let fine = field.eval_with_nodes(&nodes2, u, eta);
        max_gap = max_gap.max((coarse - fine).abs());
    }
    if max_gap > S::of(QUADRATURE_CONSISTENCY_TOL) {
        return Err(Error::QuadratureInconsistency {
            change: max_gap.to64(),
            tol: QUADRATURE_CONSISTENCY_TOL,
        });
    }
    field.quadrature_error = max_gap;
    Ok(field)
}

/// How the interpolating generating function decomposes `U` around the disk.
#[derive(Debug, Clone, Serialize)]
pub struct CutoffLayout {
    pub u_inner: f64,
    pub u_outer: f64,
    pub eta_inner: f64,
    pub eta_outer: f64,
}

/// Build `S = S0 + rho Q` on the box `U` (a neighborhood of `D x {0}` in
/// `R^{2n}`), where `rho` is a product of radial cutoffs in `u` around the
/// disk and in `eta` around 0, identically 1 near `D x {0}` and vanishing off
/// `U`. The inner/outer radii sit at thirds of the `U`-margin.
pub fn build_interpolating_genfn<S: Real>(
    psi: &DiskDiffeo<S>,
    u_box: &DomainBox<S>,
    bell: &Bell<S>,
) -> Result<GeneratingFunction<S>> {
    let field = build_correction(psi, bell, DEFAULT_CONV_NODES_PER_UNIT)?;
    interpolating_genfn_from_field(&field, u_box)
}

/// As [`build_interpolating_genfn`], reusing an already-built correction.
pub fn interpolating_genfn_from_field<S: Real>(
    field: &CorrectionField<S>,
    u_box: &DomainBox<S>,
) -> Result<GeneratingFunction<S>> {
    let n = field.n();
    let psi = field.psi();
    if u_box.dim() != 2 * n {
        return Err(Error::InvalidInput(format!(
            "U must live in R^{}, got dimension {}",
            2 * n,
            u_box.dim()
        )));
    }
    let disk = psi.disk();
    // Largest ball around the disk center inside the u-part of U, and around
    // 0 inside the eta-part.
    let mut u_room = S::of(f64::INFINITY);
    let mut eta_room = S::of(f64::INFINITY);
    for axis in 0..n {
        u_room = u_room
            .min(u_box.hi()[axis] - disk.center[axis])
            .min(disk.center[axis] - u_box.lo()[axis]);
        eta_room = eta_room.min(u_box.hi()[n + axis]).min(-u_box.lo()[n + axis]);
    }
    let u_margin = u_room - disk.radius;
    if u_margin <= S::zero() || eta_room <= S::zero() {
        return Err(Error::InvalidInput(
            "U must contain D x {0} with positive margin".into(),
        ));
    }
    let third = S::of(1.0 / 3.0);
    let cut_u = RadialCutoff::new(
        disk.radius + u_margin * third,
        disk.radius + u_margin * S::of(2.0 / 3.0),
    )?;
    let cut_eta = RadialCutoff::new(eta_room * third, eta_room * S::of(2.0 / 3.0))?;

    let center = disk.center.clone();
    let field = field.clone();
    let centered = move |u: &[S]| -> Vec<S> {
        (0..n).map(|i| u[i] - center[i]).collect()
    };
    let centered = Arc::new(centered);

    let f_eval = field.clone();
    let cu = cut_u.clone();
    let ce = cut_eta.clone();
    let cen = Arc::clone(&centered);
    let eval = move |u: &[S], eta: &[S]| -> S {
        let s0: S = u.iter().zip(eta).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
        let rho = cu.eval(&cen(u)) * ce.eval(eta);
        if rho == S::zero() {
            return s0;
        }
        s0 + rho * f_eval.eval(u, eta)
    };

    let f_grad = field.clone();
    let cu = cut_u.clone();
    let ce = cut_eta.clone();
    let cen = Arc::clone(&centered);
    let grad = move |u: &[S], eta: &[S]| -> (Vec<S>, Vec<S>) {
        let mut su: Vec<S> = eta.to_vec();
        let mut seta: Vec<S> = u.to_vec();
        let uc = cen(u);
        let rho_u_val = cu.eval(&uc);
        let rho_eta_val = ce.eval(eta);
        let rho = rho_u_val * rho_eta_val;
        let rho_grad_u = cu.grad(&uc);
        let rho_grad_eta = ce.grad(eta);
        let active = rho != S::zero()
            || rho_grad_u.iter().any(|&g| g != S::zero())
            || rho_grad_eta.iter().any(|&g| g != S::zero());
        if !active {
            return (su, seta);
        }
        let q = f_grad.eval(u, eta);
        let qu = f_grad.grad_u(u, eta);
        let qeta = f_grad.grad_eta(u, eta);
        for j in 0..n {
            su[j] += rho_grad_u[j] * rho_eta_val * q + rho * qu[j];
            seta[j] += rho_u_val * rho_grad_eta[j] * q + rho * qeta[j];
        }
        (su, seta)
    };

    let f_hess = field.clone();
    let cu = cut_u.clone();
    let ce = cut_eta.clone();
    let cen = Arc::clone(&centered);
    let hess = move |u: &[S], eta: &[S]| -> GenFnHessian<S> {
        let mut out = GenFnHessian {
            uu: DMatrix::zeros(n, n),
            u_eta: DMatrix::identity(n, n),
            eta_eta: DMatrix::zeros(n, n),
        };
        let uc = cen(u);
        let rho_u_val = cu.eval(&uc);
        let rho_eta_val = ce.eval(eta);
        let rho = rho_u_val * rho_eta_val;
        let gu = cu.grad(&uc);
        let ge = ce.grad(eta);
        let hu = cu.hess(&uc);
        let he = ce.hess(eta);
        let active = rho != S::zero()
            || gu.iter().any(|&g| g != S::zero())
            || ge.iter().any(|&g| g != S::zero());
        if !active {
            return out;
        }
        let q = f_hess.eval(u, eta);
        let qu = f_hess.grad_u(u, eta);
        let qeta = f_hess.grad_eta(u, eta);
        let qh = f_hess.hessian(u, eta);
        for j in 0..n {
            for k in 0..n {
                out.uu[(j, k)] += hu[(j, k)] * rho_eta_val * q
                    + gu[j] * rho_eta_val * qu[k]
                    + gu[k] * rho_eta_val * qu[j]
                    + rho * qh.uu[(j, k)];
                out.u_eta[(j, k)] += gu[j] * ge[k] * q
                    + gu[j] * rho_eta_val * qeta[k]
                    + rho_u_val * ge[k] * qu[j]
                    + rho * qh.u_eta[(j, k)];
                out.eta_eta[(j, k)] += rho_u_val * he[(j, k)] * q
                    + rho_u_val * ge[j] * qeta[k]
                    + rho_u_val * ge[k] * qeta[j]
                    + rho * qh.eta_eta[(j, k)];
            }
        }
        out
    };

    Ok(GeneratingFunction::new(n, u_box.clone(), eval, grad, hess))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::make_bell;
    use crate::samples;
    use approx::assert_abs_diff_eq;

    fn test_disk(n: usize) -> Ball<f64> {
        Ball::new(vec![0.0; n], 0.5)
    }

    #[test]
    fn identity_diffeo_gives_zero_correction() {
        let psi = DiskDiffeo::identity(test_disk(2));
        let bell = make_bell(0.25).unwrap();
        let field = build_correction(&psi, &bell, 16).unwrap();
        let u = [0.2, -0.1];
        let eta = [0.15, 0.05];
        assert_eq!(field.eval(&u, &eta), 0.0);
        assert_eq!(crate::real::max_abs(&field.grad_eta(&u, &eta)), 0.0);
    }

    #[test]
    fn convolve_form_at_t_zero_is_the_zero_form() {
        let bell = make_bell(0.25).unwrap();
        let alpha = |u: &[f64]| vec![u[0].sin(), u[1]];
        let form = convolve_form(alpha, 2, 0.0, &bell, 16);
        assert_eq!(form.eval(&[0.3, 0.4]), vec![0.0, 0.0]);
    }

    #[test]
    fn convolve_form_of_constant_is_t_times_constant() {
        let bell = make_bell(0.25).unwrap();
        let c = 0.7;
        let alpha = move |_: &[f64]| vec![c];
        let t = 0.05;
        let form = convolve_form(alpha, 1, t, &bell, 32);
        let v = form.eval(&[0.1]);
        assert_abs_diff_eq!(v[0], t * c, epsilon = 1e-12);
    }

    #[test]
    fn convolve_form_is_linear_in_alpha() {
        let bell = make_bell(0.25).unwrap();
        let alpha = |u: &[f64]| vec![u[0].sin() * (1.0 - u[0] * u[0]).max(0.0)];
        let alpha2 = |u: &[f64]| vec![2.0 * u[0].sin() * (1.0 - u[0] * u[0]).max(0.0)];
        let t = 0.2;
        let f1 = convolve_form(alpha, 1, t, &bell, 32);
        let f2 = convolve_form(alpha2, 1, t, &bell, 32);
        for u in [[-0.3], [0.0], [0.45]] {
            assert_abs_diff_eq!(2.0 * f1.eval(&u)[0], f2.eval(&u)[0], epsilon = 1e-13);
        }
    }

    #[test]
    fn smoothed_form_t_derivative_matches_finite_differences() {
        // The kernel-derivative formula (with its (n-1) Phi_n term) against a
        // centered difference in t, for n = 1 and n = 2.
        let bell = make_bell(0.25).unwrap();
        for n in [1usize, 2] {
            let alpha = move |u: &[f64]| {
                (0..u.len())
                    .map(|j| (1.5 * u[j]).sin() * (-(u[j] * u[j])).exp())
                    .collect::<Vec<f64>>()
            };
            let t = 0.17;
            let h = 1e-5;
            let u = vec![0.21; n];
            let form = convolve_form(alpha, n, t, &bell, 32);
            let fp = convolve_form(alpha, n, t + h, &bell, 32);
            let fm = convolve_form(alpha, n, t - h, &bell, 32);
            let d = form.d_dt(&u);
            let vp = fp.eval(&u);
            let vm = fm.eval(&u);
            for j in 0..n {
                let fd = (vp[j] - vm[j]) / (2.0 * h);
                assert_abs_diff_eq!(d[j], fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn correction_vanishes_at_eta_zero_with_flat_u_derivative() {
        let psi = samples::bump_disk_diffeo(1, test_disk(1), 0.02, 5).unwrap();
        let bell = make_bell(0.25).unwrap();
        let field = build_correction(&psi, &bell, 32).unwrap();
        for k in 0..100 {
            let u = [-0.45 + 0.9 * (k as f64) / 99.0];
            assert_eq!(field.eval(&u, &[0.0]), 0.0);
            assert!(field.grad_u(&u, &[0.0])[0].abs() < 1e-8);
        }
    }

    #[test]
    fn claim_three_derivative_recovers_displacement() {
        let amp = 0.02;
        let psi = samples::bump_disk_diffeo(1, test_disk(1), amp, 5).unwrap();
        let bell = make_bell(0.25).unwrap();
        let field = build_correction(&psi, &bell, 32).unwrap();
        for k in 0..50 {
            let u = [-0.48 + 0.96 * (k as f64) / 49.0];
            let expected = psi.beta(&u)[0];
            let got = field.grad_eta(&u, &[0.0])[0];
            assert_abs_diff_eq!(got, expected, epsilon = 1e-6);
        }
    }

    #[test]
    fn n1_lemma_formulas_are_an_independent_oracle() {
        // Evaluate the 1-D displayed formulas with a plain composite rule and
        // compare against the tensor-node implementation.
        let amp = 0.02;
        let psi = samples::bump_disk_diffeo(1, test_disk(1), amp, 9).unwrap();
        let bell = make_bell(0.25).unwrap();
        let field = build_correction(&psi, &bell, 32).unwrap();
        let rule = QuadratureRule::gauss_legendre(24);
        let a_of = |x: f64| field.psi().alpha(&[x])[(0, 0)];
        let beta_of = |x: f64| field.psi().beta(&[x])[0];
        let u = 0.31;
        let eta = 0.12;
        // The two routes panelize independently and the integrands inherit
        // higher-derivative kinks from psi's cutoff, so agreement is limited
        // by quadrature error (~1e-7), not by the formulas themselves.
        let tol = 2e-7;
        let a = bell.plateau_halfwidth();
        let b = bell.support_radius();
        // Composite panels aligned with the kernel's smooth segments.
        let integrate = |f: &dyn Fn(f64) -> f64| {
            rule.integrate_composite(-b, -a, 16, f)
                + rule.integrate_composite(-a, a, 16, f)
                + rule.integrate_composite(a, b, 16, f)
        };

        // dQ/du = eta INT Phi(w) a(u - w eta) dw.
        let du_oracle = eta * integrate(&|w| bell.eval(w) * a_of(u - w * eta));
        assert_abs_diff_eq!(field.grad_u(&[u], &[eta])[0], du_oracle, epsilon = tol);

        // dQ/deta = -INT Phi'(w) w [beta(u - w eta) - beta(u_* - w eta)] dw.
        let ustar = field.psi().base_point()[0];
        let deta_oracle = -integrate(&|w| {
            bell.d1(w) * w * (beta_of(u - w * eta) - beta_of(ustar - w * eta))
        });
        assert_abs_diff_eq!(field.grad_eta(&[u], &[eta])[0], deta_oracle, epsilon = tol);

        let h = field.hessian(&[u], &[eta]);
        // d2Q/du deta = -INT Phi'(w) w a(u - w eta) dw.
        let mixed_oracle = -integrate(&|w| bell.d1(w) * w * a_of(u - w * eta));
        assert_abs_diff_eq!(h.u_eta[(0, 0)], mixed_oracle, epsilon = tol);
        // d2Q/du2 = INT Phi'(w) a(u - w eta) dw.
        let uu_oracle = integrate(&|w| bell.d1(w) * a_of(u - w * eta));
        assert_abs_diff_eq!(h.uu[(0, 0)], uu_oracle, epsilon = tol);
        // d2Q/deta2 = INT Phi'(w) w^2 (a(u - w eta) - a(u_* - w eta)) dw.
        let etaeta_oracle = integrate(&|w| {
            bell.d1(w) * w * w * (a_of(u - w * eta) - a_of(ustar - w * eta))
        });
        assert_abs_diff_eq!(h.eta_eta[(0, 0)], etaeta_oracle, epsilon = tol);
    }

    #[test]
    fn value_routes_agree_and_are_path_independent() {
        let psi = samples::bump_disk_diffeo(2, test_disk(2), 0.02, 7).unwrap();
        let bell = make_bell(0.25).unwrap();
        let field = build_correction(&psi, &bell, 32).unwrap();
        let u = [0.2, -0.25];
        let eta = [0.12, -0.07];
        let direct = field.eval(&u, &eta);
        let via_segment = field.eval_via_path(&u, &eta, None);
        assert_abs_diff_eq!(direct, via_segment, epsilon = 1e-8);
        // A bent polyline through a detour point gives the same answer.
        let detour = vec![vec![-0.1, 0.35]];
        let via_detour = field.eval_via_path(&u, &eta, Some(&detour));
        assert_abs_diff_eq!(via_segment, via_detour, epsilon = 1e-8);
    }

    #[test]
    fn derivative_formulas_match_finite_differences_of_q() {
        let psi = samples::bump_disk_diffeo(2, test_disk(2), 0.02, 3).unwrap();
        let bell = make_bell(0.25).unwrap();
        let field = build_correction(&psi, &bell, 32).unwrap();
        let u = vec![0.15, -0.2];
        let eta = vec![0.1, 0.08];
        let h = 1e-4;
        let tol = 1e-6_f64.max(10.0 * field.quadrature_error());

        let q = |uu: &[f64], ee: &[f64]| field.eval(uu, ee);

        let gu = field.grad_u(&u, &eta);
        let geta = field.grad_eta(&u, &eta);
        for j in 0..2 {
            let mut up = u.clone();
            let mut um = u.clone();
            up[j] += h;
            um[j] -= h;
            assert_abs_diff_eq!(gu[j], (q(&up, &eta) - q(&um, &eta)) / (2.0 * h), epsilon = tol);
            let mut ep = eta.clone();
            let mut em = eta.clone();
            ep[j] += h;
            em[j] -= h;
            assert_abs_diff_eq!(geta[j], (q(&u, &ep) - q(&u, &em)) / (2.0 * h), epsilon = tol);
        }

        let hess = field.hessian(&u, &eta);
        for j in 0..2 {
            for k in 0..2 {
                // Mixed u-eta.
                let mut up = u.clone();
                let mut um = u.clone();
                up[j] += h;
                um[j] -= h;
                let mut ep = eta.clone();
                let mut em = eta.clone();
                ep[k] += h;
                em[k] -= h;
                let fd = (q(&up, &ep) - q(&up, &em) - q(&um, &ep) + q(&um, &em)) / (4.0 * h * h);
                assert_abs_diff_eq!(hess.u_eta[(j, k)], fd, epsilon = tol);
            }
        }
        // eta-eta off-diagonal vanishes.
        assert_eq!(hess.eta_eta[(0, 1)], 0.0);
    }

    #[test]
    fn interpolating_genfn_is_s0_outside_u() {
        let psi = samples::bump_disk_diffeo(1, test_disk(1), 0.01, 5).unwrap();
        let bell = make_bell(0.25).unwrap();
        let u_box = DomainBox::new(vec![-0.8, -0.3], vec![0.8, 0.3]);
        let s = build_interpolating_genfn(&psi, &u_box, &bell).unwrap();
        // Probe outside U (eta beyond the cutoff support).
        let u = [0.1];
        let eta = [0.29];
        assert_eq!(s.eval(&u, &eta), u[0] * eta[0]);
        let (su, seta) = s.grad(&u, &eta);
        assert_eq!(su[0], eta[0]);
        assert_eq!(seta[0], u[0]);
    }

    #[test]
    fn interpolating_genfn_for_identity_is_s0() {
        let psi = DiskDiffeo::identity(test_disk(2));
        let bell = make_bell(0.25).unwrap();
        let u_box = DomainBox::cube(4, 0.9);
        let s = build_interpolating_genfn(&psi, &u_box, &bell).unwrap();
        let u = [0.2, 0.1];
        let eta = [0.05, -0.1];
        assert_eq!(s.eval(&u, &eta), 0.2 * 0.05 + 0.1 * (-0.1));
    }

    #[test]
    fn doubled_amplitude_doubles_the_c2_distance() {
        let bell = make_bell(0.25).unwrap();
        let u_box = DomainBox::new(vec![-0.8, -0.3], vec![0.8, 0.3]);
        let mut norms = Vec::new();
        for amp in [0.01, 0.02] {
            let psi = samples::bump_disk_diffeo(1, test_disk(1), amp, 5).unwrap();
            let field = build_correction(&psi, &bell, 32).unwrap();
            let probes: Vec<(Vec<f64>, Vec<f64>)> = (0..30)
                .map(|k| {
                    let t = k as f64 / 29.0;
                    (vec![-0.6 + 1.2 * t], vec![-0.2 + 0.4 * (1.0 - t)])
                })
                .collect();
            norms.push(field.c2_norm_on(&probes));
            let _ = interpolating_genfn_from_field(&field, &u_box).unwrap();
        }
        let ratio = norms[1] / norms[0];
        assert!((ratio - 2.0).abs() < 0.1, "C2 ratio {ratio} not ~2");
    }
}
