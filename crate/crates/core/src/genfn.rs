//! Generating functions and the local symplectomorphisms they generate.
//!
//! A twice-differentiable scalar field `S(u, eta)` with nonsingular mixed
//! block `d^2 S / du deta` generates a symplectomorphism `h(u, v) = (xi, eta)`
//! of the standard form `omega = sum du_i ^ dv_i` through the implicit system
//!
//! ```text
//!   dS/du(u, eta) = v,        xi = dS/deta(u, eta).
//! ```
//!
//! `generate_map` solves the system with a damped Newton iteration and equips
//! the resulting map with the exact implicit-function Jacobian;
//! `genfn_from_map` inverts the correspondence by integrating the 1-form
//! `sum v_i du_i + xi_i deta_i`, whose closedness is exactly the symplecticity
//! of the input and is certified by comparing two polygonal paths.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{newton_root, DomainBox, SampledMap};
use crate::quadrature::{path_integral_polyline, path_integral_segment, QuadratureRule};
use crate::real::Real;

/// Default residual tolerance for the implicit Newton solves.
pub const DEFAULT_NEWTON_TOL: f64 = 1e-12;
/// Default iteration cap for the implicit Newton solves.
pub const DEFAULT_NEWTON_MAX_ITER: usize = 50;
/// Default tolerance for symplecticity certificates.
pub const DEFAULT_SYMPLECTIC_TOL: f64 = 1e-7;
/// Two polygonal paths may disagree by at most this much before the input of
/// `genfn_from_map` is declared non-symplectic.
pub const CLOSEDNESS_TOL: f64 = 1e-6;

/// The standard symplectic matrix `J = [[0, I], [-I, 0]]` in `(u, v)` blocks.
pub fn standard_symplectic_matrix<S: Real>(n: usize) -> DMatrix<S> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = S::one();
        j[(n + i, i)] = -S::one();
    }
    j
}

/// `omega(a, b) = a^T J b` for the standard form.
pub fn omega<S: Real>(a: &DVector<S>, b: &DVector<S>) -> S {
    let n = a.len() / 2;
    let mut acc = S::zero();
    for i in 0..n {
        acc += a[i] * b[n + i] - a[n + i] * b[i];
    }
    acc
}

/// Second derivatives of a generating function, by block.
#[derive(Debug, Clone)]
pub struct GenFnHessian<S> {
    /// `d^2 S / du_i du_j`.
    pub uu: DMatrix<S>,
    /// `d^2 S / du_i deta_j` — the block whose nonsingularity is the
    /// nondegeneracy condition.
    pub u_eta: DMatrix<S>,
    /// `d^2 S / deta_i deta_j`.
    pub eta_eta: DMatrix<S>,
}

impl<S: Real> GenFnHessian<S> {
    /// Assemble the full `2n x 2n` Hessian (using symmetry for the `eta,u`
    /// block).
    pub fn full(&self) -> DMatrix<S> {
        let n = self.uu.nrows();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&self.uu);
        h.view_mut((0, n), (n, n)).copy_from(&self.u_eta);
        h.view_mut((n, 0), (n, n)).copy_from(&self.u_eta.transpose());
        h.view_mut((n, n), (n, n)).copy_from(&self.eta_eta);
        h
    }
}

type GenEval<S> = Arc<dyn Fn(&[S], &[S]) -> S + Send + Sync>;
type GenGrad<S> = Arc<dyn Fn(&[S], &[S]) -> (Vec<S>, Vec<S>) + Send + Sync>;
type GenHess<S> = Arc<dyn Fn(&[S], &[S]) -> GenFnHessian<S> + Send + Sync>;

/// A twice-differentiable scalar field `S(u, eta)` on a box in `R^{2n}`.
#[derive(Clone)]
pub struct GeneratingFunction<S> {
    n: usize,
    eval: GenEval<S>,
    grad: GenGrad<S>,
    hess: GenHess<S>,
    domain: DomainBox<S>,
}

impl<S: Real> GeneratingFunction<S> {
    pub fn new<E, G, H>(n: usize, domain: DomainBox<S>, eval: E, grad: G, hess: H) -> Self
    where
        E: Fn(&[S], &[S]) -> S + Send + Sync + 'static,
        G: Fn(&[S], &[S]) -> (Vec<S>, Vec<S>) + Send + Sync + 'static,
        H: Fn(&[S], &[S]) -> GenFnHessian<S> + Send + Sync + 'static,
    {
        assert_eq!(domain.dim(), 2 * n, "generating function domain lives in R^{{2n}}");
        GeneratingFunction {
            n,
            eval: Arc::new(eval),
            grad: Arc::new(grad),
            hess: Arc::new(hess),
            domain,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> &DomainBox<S> {
        &self.domain
    }

    pub fn eval(&self, u: &[S], eta: &[S]) -> S {
        (self.eval)(u, eta)
    }

    /// `(dS/du, dS/deta)`.
    pub fn grad(&self, u: &[S], eta: &[S]) -> (Vec<S>, Vec<S>) {
        (self.grad)(u, eta)
    }

    pub fn hessian(&self, u: &[S], eta: &[S]) -> GenFnHessian<S> {
        (self.hess)(u, eta)
    }

    /// Affine blend `(1 - t) a + t b` of two fields on the same half-dimension.
    pub fn blend(a: &Self, b: &Self, t: S) -> Self {
        assert_eq!(a.n, b.n);
        let n = a.n;
        let s = S::one() - t;
        let (ae, be) = (Arc::clone(&a.eval), Arc::clone(&b.eval));
        let (ag, bg) = (Arc::clone(&a.grad), Arc::clone(&b.grad));
        let (ah, bh) = (Arc::clone(&a.hess), Arc::clone(&b.hess));
        GeneratingFunction {
            n,
            eval: Arc::new(move |u: &[S], eta: &[S]| s * ae(u, eta) + t * be(u, eta)),
            grad: Arc::new(move |u: &[S], eta: &[S]| {
                let (au, aeta) = ag(u, eta);
                let (bu, beta) = bg(u, eta);
                (
                    (0..n).map(|i| s * au[i] + t * bu[i]).collect(),
                    (0..n).map(|i| s * aeta[i] + t * beta[i]).collect(),
                )
            }),
            hess: Arc::new(move |u: &[S], eta: &[S]| {
                let ha = ah(u, eta);
                let hb = bh(u, eta);
                GenFnHessian {
                    uu: ha.uu * s + hb.uu * t,
                    u_eta: ha.u_eta * s + hb.u_eta * t,
                    eta_eta: ha.eta_eta * s + hb.eta_eta * t,
                }
            }),
            domain: a.domain.clone(),
        }
    }

    /// Smallest |det| of the mixed block over the probes; errors if any probe
    /// is singular.
    pub fn certify_nondegenerate(&self, probes: &[Vec<S>]) -> Result<S> {
        let n = self.n;
        let mut min_det = S::of(f64::INFINITY);
        for p in probes {
            let h = self.hessian(&p[..n], &p[n..]);
            let det = h.u_eta.determinant().abs();
            if det < S::of(1e-12) {
                return Err(Error::NondegeneracyViolation {
                    abs_det: det.to64(),
                });
            }
            min_det = min_det.min(det);
        }
        Ok(min_det)
    }
}

impl<S> std::fmt::Debug for GeneratingFunction<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneratingFunction").field("n", &self.n).finish()
    }
}

/// The generating function of the identity map, `S0(u, eta) = u . eta`, on
/// the cube of the given half-width.
pub fn identity_genfn_on<S: Real>(n: usize, halfwidth: S) -> GeneratingFunction<S> {
    assert!(n >= 1);
    GeneratingFunction::new(
        n,
        DomainBox::cube(2 * n, halfwidth),
        |u: &[S], eta: &[S]| u.iter().zip(eta).fold(S::zero(), |acc, (&a, &b)| acc + a * b),
        |u: &[S], eta: &[S]| (eta.to_vec(), u.to_vec()),
        move |_: &[S], _: &[S]| GenFnHessian {
            uu: DMatrix::zeros(n, n),
            u_eta: DMatrix::identity(n, n),
            eta_eta: DMatrix::zeros(n, n),
        },
    )
}

/// [`identity_genfn_on`] with the default half-width 5.
pub fn identity_genfn<S: Real>(n: usize) -> GeneratingFunction<S> {
    identity_genfn_on(n, S::of(5.0))
}

/// A local symplectomorphism `(u, v) -> (xi, eta)` carried as a
/// [`SampledMap`] with exact implicit-function Jacobian.
#[derive(Clone)]
pub struct SymplecticMapLocal<S> {
    n: usize,
    map: SampledMap<S>,
    source: Arc<GeneratingFunction<S>>,
    newton_tol: S,
    max_iter: usize,
}

impl<S: Real> SymplecticMapLocal<S> {
    pub fn n(&self) -> usize {
        self.n
    }

    /// The underlying map; evaluation panics if a query point ever leaves the
    /// certified Newton regime (construction probes the domain).
    pub fn map(&self) -> &SampledMap<S> {
        &self.map
    }

    pub fn source_genfn(&self) -> &GeneratingFunction<S> {
        &self.source
    }

    /// Solve the implicit system at one point, returning `eta` and the Newton
    /// residual history.
    pub fn solve_eta(&self, u: &[S], v: &[S]) -> Result<(Vec<S>, Vec<f64>)> {
        solve_eta_inner(&self.source, u, v, self.newton_tol, self.max_iter)
    }
}

impl<S> std::fmt::Debug for SymplecticMapLocal<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymplecticMapLocal").field("n", &self.n).finish()
    }
}

fn solve_eta_inner<S: Real>(
    genfn: &GeneratingFunction<S>,
    u: &[S],
    v: &[S],
    tol: S,
    max_iter: usize,
) -> Result<(Vec<S>, Vec<f64>)> {
    let residual = |eta: &[S]| {
        let (su, _) = genfn.grad(u, eta);
        (0..u.len()).map(|i| su[i] - v[i]).collect::<Vec<S>>()
    };
    let jac = |eta: &[S]| genfn.hessian(u, eta).u_eta;
    newton_root(residual, jac, v, tol, max_iter)
}

/// Build the symplectomorphism generated by `S`.
///
/// For each queried `(u, v)` the implicit system is solved by damped Newton
/// from `eta_0 = v`; the returned map carries the analytic Jacobian derived
/// from the Hessian of `S` by the implicit function theorem. Construction
/// certifies Newton convergence at the corners, face midpoints and center of
/// the domain.
pub fn generate_map<S: Real>(
    genfn: &GeneratingFunction<S>,
    newton_tol: S,
    max_iter: usize,
) -> Result<SymplecticMapLocal<S>> {
    assert!(newton_tol > S::zero());
    let n = genfn.n();
    let source = Arc::new(genfn.clone());

    // Certification probes: corners (up to 64), center, face midpoints.
    let domain = genfn.domain().clone();
    let mut probes: Vec<Vec<S>> = Vec::new();
    if domain.dim() <= 6 {
        probes.extend(domain.corners());
    }
    probes.push(domain.center());
    for axis in 0..domain.dim() {
        for bound in [domain.lo()[axis], domain.hi()[axis]] {
            let mut p = domain.center();
            p[axis] = bound;
            probes.push(p);
        }
    }
    for p in &probes {
        solve_eta_inner(&source, &p[..n], &p[n..], newton_tol, max_iter)?;
    }

    let eval_src = Arc::clone(&source);
    let eval = move |z: &[S]| {
        let (u, v) = z.split_at(n);
        let (eta, _) = solve_eta_inner(&eval_src, u, v, newton_tol, max_iter)
            .unwrap_or_else(|e| panic!("implicit solve left the certified regime: {e}"));
        let (_, xi) = eval_src.grad(u, &eta);
        let mut out = xi;
        out.extend_from_slice(&eta);
        out
    };

    let jac_src = Arc::clone(&source);
    let jac = move |z: &[S]| {
        let (u, v) = z.split_at(n);
        let (eta, _) = solve_eta_inner(&jac_src, u, v, newton_tol, max_iter)
            .unwrap_or_else(|e| panic!("implicit solve left the certified regime: {e}"));
        let h = jac_src.hessian(u, &eta);
        let a_lu = h.u_eta.clone().lu();
        let eta_v = a_lu
            .try_inverse()
            .unwrap_or_else(|| panic!("mixed Hessian block singular inside certified regime"));
        let eta_u = -&eta_v * &h.uu;
        let xi_u = h.u_eta.transpose() + &h.eta_eta * &eta_u;
        let xi_v = &h.eta_eta * &eta_v;
        let mut dh = DMatrix::zeros(2 * n, 2 * n);
        dh.view_mut((0, 0), (n, n)).copy_from(&xi_u);
        dh.view_mut((0, n), (n, n)).copy_from(&xi_v);
        dh.view_mut((n, 0), (n, n)).copy_from(&eta_u);
        dh.view_mut((n, n), (n, n)).copy_from(&eta_v);
        dh
    };

    let map = SampledMap::new(2 * n, 2 * n, domain, eval).with_jac(jac);
    Ok(SymplecticMapLocal {
        n,
        map,
        source,
        newton_tol,
        max_iter,
    })
}

/// Symplecticity certificate: max over samples of
/// `|(Dh)^T J (Dh) - J|_max`.
#[derive(Debug, Clone, Serialize)]
pub struct SymplecticCertificate {
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
    pub points: usize,
}

/// Certify `(Dh)^T J (Dh) = J` at the sample points.
pub fn certify_symplectic<S: Real>(
    h: &SampledMap<S>,
    samples: &[Vec<S>],
    tol: S,
) -> Result<SymplecticCertificate> {
    assert_eq!(h.dim_in(), h.dim_out(), "symplectic maps are square");
    assert_eq!(h.dim_in() % 2, 0, "symplectic maps have even dimension");
    let n = h.dim_in() / 2;
    let j = standard_symplectic_matrix::<S>(n);
    let mut residual = S::zero();
    for p in samples {
        let dh = h.jacobian(p)?;
        let defect = dh.transpose() * &j * &dh - &j;
        residual = residual.max(crate::probe::max_abs_mat(&defect));
    }
    Ok(SymplecticCertificate {
        residual: residual.to64(),
        tol: tol.to64(),
        pass: residual <= tol,
        points: samples.len(),
    })
}

/// Recover a generating function from a local symplectomorphism around
/// `base_point = (u_b, eta_b)`.
///
/// The inverse coordinate change `(u, eta) -> (u, v)` is solved by Newton;
/// `S` is the path integral of `alpha = sum v_i du_i + xi_i deta_i` from the
/// base point, normalized by `S(base) = u_b . eta_b`. Closedness of `alpha`
/// (= symplecticity of `h`) is certified by comparing the segment path with
/// an axis-ordered polyline at the domain corners.
pub fn genfn_from_map<S: Real>(
    h: &SampledMap<S>,
    base_point: &[S],
) -> Result<GeneratingFunction<S>> {
    assert_eq!(h.dim_in(), h.dim_out(), "need a square map");
    assert_eq!(h.dim_in() % 2, 0, "need an even-dimensional map");
    let n = h.dim_in() / 2;
    assert_eq!(base_point.len(), 2 * n, "base point lives in (u, eta) space");

    let tol = S::of(DEFAULT_NEWTON_TOL);
    let max_iter = DEFAULT_NEWTON_MAX_ITER;
    let h = h.clone();

    // v(u, eta): solve the eta-component of h(u, v) = eta for v.
    let h_for_solve = h.clone();
    let solve_v = move |u: &[S], eta: &[S]| -> Result<Vec<S>> {
        let residual = |v: &[S]| {
            let mut z = u.to_vec();
            z.extend_from_slice(v);
            let hv = h_for_solve.eval(&z);
            (0..eta.len()).map(|i| hv[eta.len() + i] - eta[i]).collect::<Vec<S>>()
        };
        let jac = |v: &[S]| {
            let mut z = u.to_vec();
            z.extend_from_slice(v);
            let dh = h_for_solve
                .jacobian(&z)
                .expect("Jacobian available inside inversion region");
            let eta_v = dh.view((eta.len(), eta.len()), (eta.len(), eta.len())).into_owned();
            eta_v
        };
        let (v, _) = newton_root(residual, jac, eta, tol, max_iter)?;
        Ok(v)
    };
    let solve_v = Arc::new(solve_v);

    // Check nondegeneracy (deta/dv invertible) at the base point.
    {
        let v = solve_v(&base_point[..n], &base_point[n..])?;
        let mut z = base_point[..n].to_vec();
        z.extend_from_slice(&v);
        let dh = h.jacobian(&z)?;
        let eta_v = dh.view((n, n), (n, n)).into_owned();
        let det = eta_v.determinant().abs();
        if det < S::of(1e-12) {
            return Err(Error::NondegeneracyViolation {
                abs_det: det.to64(),
            });
        }
    }

    // Shrink the domain toward the base point until Newton converges at all
    // corners; the certified sub-box is the honest domain of the recovery.
    let full = h.domain().clone();
    let mut shrink = S::one();
    let mut domain = full.clone();
    let mut certified = false;
    'outer: for _ in 0..8 {
        let lo: Vec<S> = (0..2 * n)
            .map(|i| base_point[i] + (full.lo()[i] - base_point[i]) * shrink)
            .collect();
        let hi: Vec<S> = (0..2 * n)
            .map(|i| base_point[i] + (full.hi()[i] - base_point[i]) * shrink)
            .collect();
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            break;
        }
        let candidate = DomainBox::new(lo, hi);
        for corner in candidate.corners() {
            if solve_v(&corner[..n], &corner[n..]).is_err() {
                shrink *= S::of(0.5);
                continue 'outer;
            }
        }
        domain = candidate;
        certified = true;
        break;
    }
    if !certified {
        return Err(Error::NewtonDivergence {
            iterations: max_iter,
            residual: f64::NAN,
            tol: tol.to64(),
        });
    }

    // alpha in (u, eta) coordinates.
    let h_alpha = h.clone();
    let solve_alpha = Arc::clone(&solve_v);
    let alpha = Arc::new(move |p: &[S]| -> Vec<S> {
        let (u, eta) = p.split_at(n);
        let v = solve_alpha(u, eta)
            .unwrap_or_else(|e| panic!("inversion left the certified sub-box: {e}"));
        let mut z = u.to_vec();
        z.extend_from_slice(&v);
        let hv = h_alpha.eval(&z);
        let mut cov = v.clone();
        cov.extend_from_slice(&hv[..n]);
        cov
    });

    // Closedness certificate: segment vs axis-ordered polyline at the corners.
    let rule = QuadratureRule::gauss_legendre(8);
    let base = base_point.to_vec();
    for corner in domain.corners() {
        let direct = path_integral_segment(&*alpha, &base, &corner, &rule, 24)?;
        let mut mid = base.clone();
        mid[..n].copy_from_slice(&corner[..n]);
        let polyline = path_integral_polyline(&*alpha, &[base.clone(), mid, corner.clone()], &rule, 24)?;
        let gap = (direct - polyline).abs();
        if gap > S::of(CLOSEDNESS_TOL) {
            return Err(Error::ClosednessViolation {
                discrepancy: gap.to64(),
                tol: CLOSEDNESS_TOL,
            });
        }
    }

    let base_value = base_point[..n]
        .iter()
        .zip(&base_point[n..])
        .fold(S::zero(), |acc, (&a, &b)| acc + a * b);

    let alpha_eval = Arc::clone(&alpha);
    let base_for_eval = base_point.to_vec();
    let eval = move |u: &[S], eta: &[S]| -> S {
        let mut target = u.to_vec();
        target.extend_from_slice(eta);
        let rule = QuadratureRule::gauss_legendre(8);
        base_value
            + path_integral_segment(&*alpha_eval, &base_for_eval, &target, &rule, 24)
                .expect("segment integral")
    };

    let alpha_grad = Arc::clone(&alpha);
    let grad = move |u: &[S], eta: &[S]| -> (Vec<S>, Vec<S>) {
        let mut p = u.to_vec();
        p.extend_from_slice(eta);
        let cov = alpha_grad(&p);
        (cov[..n].to_vec(), cov[n..].to_vec())
    };

    let h_hess = h.clone();
    let solve_hess = Arc::clone(&solve_v);
    let hess = move |u: &[S], eta: &[S]| -> GenFnHessian<S> {
        let v = solve_hess(u, eta)
            .unwrap_or_else(|e| panic!("inversion left the certified sub-box: {e}"));
        let mut z = u.to_vec();
        z.extend_from_slice(&v);
        let dh = h_hess.jacobian(&z).expect("Jacobian inside certified sub-box");
        let xi_u = dh.view((0, 0), (n, n)).into_owned();
        let xi_v = dh.view((0, n), (n, n)).into_owned();
        let eta_u = dh.view((n, 0), (n, n)).into_owned();
        let eta_v = dh.view((n, n), (n, n)).into_owned();
        let eta_v_inv = eta_v
            .lu()
            .try_inverse()
            .unwrap_or_else(|| panic!("deta/dv singular inside certified sub-box"));
        let dv_du = -&eta_v_inv * &eta_u;
        let s_uu = dv_du.clone();
        let s_u_eta = eta_v_inv.clone();
        let s_eta_eta = &xi_v * &eta_v_inv;
        let _ = xi_u; // the (eta,u) block is recovered by symmetry
        GenFnHessian {
            uu: s_uu,
            u_eta: s_u_eta,
            eta_eta: s_eta_eta,
        }
    };

    Ok(GeneratingFunction::new(n, domain, eval, grad, hess))
}
