//! Differentiable maps of Euclidean boxes given by evaluation rules.
//!
//! [`SampledMap`] is the universal carrier for every map in the crate: an
//! evaluation rule, an optional analytic Jacobian rule, and an axis-aligned
//! domain box. When the analytic rule is absent the Jacobian falls back to
//! central finite differences.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::real::Real;

pub type EvalRule<S> = Arc<dyn Fn(&[S]) -> Vec<S> + Send + Sync>;
pub type JacRule<S> = Arc<dyn Fn(&[S]) -> DMatrix<S> + Send + Sync>;

/// Relative finite-difference step: `1e-5` times the domain scale.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Floor below which |det| is reported as singular.
pub const SINGULAR_DET_FLOOR: f64 = 1e-300;

/// Axis-aligned box with per-axis bounds.
#[derive(Debug, Clone)]
pub struct DomainBox<S> {
    lo: Vec<S>,
    hi: Vec<S>,
}

impl<S: Real> DomainBox<S> {
    pub fn new(lo: Vec<S>, hi: Vec<S>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box bounds must share a dimension");
        assert!(
            lo.iter().zip(&hi).all(|(a, b)| a < b),
            "box must have positive widths"
        );
        DomainBox { lo, hi }
    }

    /// The cube `[-halfwidth, halfwidth]^dim`.
    pub fn cube(dim: usize, halfwidth: S) -> Self {
        DomainBox::new(vec![-halfwidth; dim], vec![halfwidth; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[S] {
        &self.lo
    }

    pub fn hi(&self) -> &[S] {
        &self.hi
    }

    pub fn contains(&self, x: &[S]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&a, &b))| a <= v && v <= b)
    }

    pub fn center(&self) -> Vec<S> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| (a + b) * S::of(0.5))
            .collect()
    }

    pub fn widths(&self) -> Vec<S> {
        self.lo.iter().zip(&self.hi).map(|(&a, &b)| b - a).collect()
    }

    /// Largest half-width across the axes; the "domain scale" in step choices.
    pub fn scale(&self) -> S {
        self.widths()
            .into_iter()
            .fold(S::zero(), |acc, w| acc.max(w * S::of(0.5)))
    }

    /// Grow (or shrink, for negative `margin`) every face by `margin`.
    pub fn inflate(&self, margin: S) -> Self {
        DomainBox::new(
            self.lo.iter().map(|&a| a - margin).collect(),
            self.hi.iter().map(|&b| b + margin).collect(),
        )
    }

    /// Product box `self x other`.
    pub fn product(&self, other: &DomainBox<S>) -> Self {
        let mut lo = self.lo.clone();
        lo.extend_from_slice(&other.lo);
        let mut hi = self.hi.clone();
        hi.extend_from_slice(&other.hi);
        DomainBox::new(lo, hi)
    }

    pub fn corners(&self) -> Vec<Vec<S>> {
        let dim = self.dim();
        (0..(1usize << dim))
            .map(|mask| {
                (0..dim)
                    .map(|i| if mask & (1 << i) != 0 { self.hi[i] } else { self.lo[i] })
                    .collect()
            })
            .collect()
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> Vec<S> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| a + (b - a) * S::of(rng.gen::<f64>()))
            .collect()
    }
}

/// A differentiable map of a box, given by rules.
#[derive(Clone)]
pub struct SampledMap<S> {
    dim_in: usize,
    dim_out: usize,
    eval: EvalRule<S>,
    jac: Option<JacRule<S>>,
    domain: DomainBox<S>,
}

impl<S: Real> SampledMap<S> {
    pub fn new<F>(dim_in: usize, dim_out: usize, domain: DomainBox<S>, eval: F) -> Self
    where
        F: Fn(&[S]) -> Vec<S> + Send + Sync + 'static,
    {
        assert_eq!(domain.dim(), dim_in, "domain dimension must match dim_in");
        SampledMap {
            dim_in,
            dim_out,
            eval: Arc::new(eval),
            jac: None,
            domain,
        }
    }

    pub fn with_jac<F>(mut self, jac: F) -> Self
    where
        F: Fn(&[S]) -> DMatrix<S> + Send + Sync + 'static,
    {
        self.jac = Some(Arc::new(jac));
        self
    }

    /// Identity map of the box.
    pub fn identity(domain: DomainBox<S>) -> Self {
        let dim = domain.dim();
        SampledMap::new(dim, dim, domain, |x: &[S]| x.to_vec())
            .with_jac(move |_: &[S]| DMatrix::identity(dim, dim))
    }

    /// Linear map `x -> A x` restricted to the box.
    pub fn linear(a: DMatrix<S>, domain: DomainBox<S>) -> Self {
        assert_eq!(a.ncols(), domain.dim());
        let rows = a.nrows();
        let a_eval = a.clone();
        let a_jac = a;
        SampledMap::new(domain.dim(), rows, domain, move |x: &[S]| {
            let v = &a_eval * DVector::from_column_slice(x);
            v.iter().copied().collect()
        })
        .with_jac(move |_: &[S]| a_jac.clone())
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn domain(&self) -> &DomainBox<S> {
        &self.domain
    }

    pub fn has_analytic_jac(&self) -> bool {
        self.jac.is_some()
    }

    pub fn eval(&self, x: &[S]) -> Vec<S> {
        debug_assert_eq!(x.len(), self.dim_in);
        let y = (self.eval)(x);
        debug_assert_eq!(y.len(), self.dim_out);
        y
    }

    /// Central-difference Jacobian estimate with an explicit step.
    pub fn fd_jacobian(&self, x: &[S], step: S) -> Result<DMatrix<S>> {
        for (axis, &xi) in x.iter().enumerate() {
            if xi - step < self.domain.lo()[axis] || xi + step > self.domain.hi()[axis] {
                return Err(Error::StencilOutsideDomain {
                    axis,
                    coord: xi.to64(),
                    step: step.to64(),
                });
            }
        }
        let mut jac = DMatrix::zeros(self.dim_out, self.dim_in);
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        for j in 0..self.dim_in {
            plus[j] = x[j] + step;
            minus[j] = x[j] - step;
            let fp = self.eval(&plus);
            let fm = self.eval(&minus);
            for i in 0..self.dim_out {
                jac[(i, j)] = (fp[i] - fm[i]) / (S::of(2.0) * step);
            }
            plus[j] = x[j];
            minus[j] = x[j];
        }
        Ok(jac)
    }

    /// Step used by [`Self::jacobian`] when no analytic rule is present.
    pub fn default_fd_step(&self) -> S {
        S::of(DEFAULT_FD_STEP) * self.domain.scale().max(S::one())
    }

    /// Analytic Jacobian when available, else central finite differences at
    /// the default step.
    pub fn jacobian(&self, x: &[S]) -> Result<DMatrix<S>> {
        if let Some(jac) = &self.jac {
            let m = jac(x);
            debug_assert_eq!((m.nrows(), m.ncols()), (self.dim_out, self.dim_in));
            Ok(m)
        } else {
            self.fd_jacobian(x, self.default_fd_step())
        }
    }

    /// `log |det D m(x)|` for square maps.
    ///
    /// Panics if `dim_in != dim_out`: a non-square map has no Jacobian
    /// determinant and calling this is a contract violation.
    pub fn log_jacobian(&self, x: &[S]) -> Result<S> {
        assert_eq!(
            self.dim_in, self.dim_out,
            "log_jacobian requires a square map"
        );
        let det = self.jacobian(x)?.determinant();
        let abs = det.abs();
        if abs < S::of(SINGULAR_DET_FLOOR) {
            return Err(Error::SingularJacobian {
                abs_det: abs.to64(),
            });
        }
        Ok(abs.ln())
    }

    /// Composition `self(other(x))` with chain-rule Jacobian when both factors
    /// carry analytic rules.
    pub fn compose(&self, other: &SampledMap<S>) -> SampledMap<S> {
        assert_eq!(other.dim_out, self.dim_in, "composition dimension mismatch");
        let outer_eval = Arc::clone(&self.eval);
        let inner_eval = Arc::clone(&other.eval);
        let mut composed = SampledMap {
            dim_in: other.dim_in,
            dim_out: self.dim_out,
            eval: Arc::new(move |x: &[S]| outer_eval(&inner_eval(x))),
            jac: None,
            domain: other.domain.clone(),
        };
        if let (Some(outer_jac), Some(inner_jac)) = (&self.jac, &other.jac) {
            let outer_jac = Arc::clone(outer_jac);
            let inner_jac = Arc::clone(inner_jac);
            let inner_eval = Arc::clone(&other.eval);
            composed.jac = Some(Arc::new(move |x: &[S]| {
                let mid = inner_eval(x);
                outer_jac(&mid) * inner_jac(x)
            }));
        }
        composed
    }
}

impl<S> std::fmt::Debug for SampledMap<S>
where
    S: std::fmt::Debug,
{
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SampledMap")
            .field("dim_in", &self.dim_in)
            .field("dim_out", &self.dim_out)
            .field("analytic_jac", &self.jac.is_some())
            .finish()
    }
}

/// Damped Newton iteration for `f(x) = 0`.
///
/// Returns the root and the residual history (one entry per accepted
/// iterate, `f64` for reporting). Backtracks by halving up to 20 times per
/// step, requiring plain decrease of the residual norm.
pub fn newton_root<S: Real, F, J>(
    f: F,
    jac: J,
    x0: &[S],
    tol: S,
    max_iter: usize,
) -> Result<(Vec<S>, Vec<f64>)>
where
    F: Fn(&[S]) -> Vec<S>,
    J: Fn(&[S]) -> DMatrix<S>,
{
    let mut x = x0.to_vec();
    let mut r = DVector::from_vec(f(&x));
    let mut rnorm = r.norm();
    let mut history = vec![rnorm.to64()];
    for _ in 0..max_iter {
        if rnorm <= tol {
            return Ok((x, history));
        }
        let j = jac(&x);
        let lu = j.lu();
        let delta = lu.solve(&r).ok_or(Error::NondegeneracyViolation {
            abs_det: 0.0,
        })?;
        let mut lambda = S::one();
        let mut accepted = false;
        for _ in 0..20 {
            let candidate: Vec<S> = (0..x.len()).map(|i| x[i] - lambda * delta[i]).collect();
            let rc = DVector::from_vec(f(&candidate));
            let rcnorm = rc.norm();
            if rcnorm < rnorm {
                x = candidate;
                r = rc;
                rnorm = rcnorm;
                history.push(rnorm.to64());
                accepted = true;
                break;
            }
            lambda *= S::of(0.5);
        }
        if !accepted {
            return Err(Error::NewtonDivergence {
                iterations: history.len(),
                residual: rnorm.to64(),
                tol: tol.to64(),
            });
        }
    }
    if rnorm <= tol {
        Ok((x, history))
    } else {
        Err(Error::NewtonDivergence {
            iterations: max_iter,
            residual: rnorm.to64(),
            tol: tol.to64(),
        })
    }
}

/// The Newton-based inverse of a square map, as a map on the same box.
///
/// Evaluation solves `m(w) = z` from the guess `w = z`; the Jacobian is the
/// inverse of `m`'s Jacobian at the preimage. Queries outside the region
/// where the inversion converges panic.
pub fn inverse_map<S: Real>(m: &SampledMap<S>, tol: S, max_iter: usize) -> SampledMap<S> {
    assert_eq!(m.dim_in(), m.dim_out(), "only square maps invert");
    let dim = m.dim_in();
    let m_eval = m.clone();
    let eval = move |z: &[S]| -> Vec<S> {
        newton_invert(&m_eval, z, z, tol, max_iter)
            .unwrap_or_else(|e| panic!("inverse map queried outside the invertible region: {e}"))
    };
    let m_jac = m.clone();
    let jac = move |z: &[S]| -> DMatrix<S> {
        let w = newton_invert(&m_jac, z, z, tol, max_iter)
            .unwrap_or_else(|e| panic!("inverse map queried outside the invertible region: {e}"));
        m_jac
            .jacobian(&w)
            .expect("Jacobian at the preimage")
            .lu()
            .try_inverse()
            .expect("Jacobian invertible at the preimage")
    };
    SampledMap::new(dim, dim, m.domain().clone(), eval).with_jac(jac)
}

/// Invert `map` at `target` by Newton iteration from `guess`.
pub fn newton_invert<S: Real>(
    map: &SampledMap<S>,
    target: &[S],
    guess: &[S],
    tol: S,
    max_iter: usize,
) -> Result<Vec<S>> {
    assert_eq!(map.dim_in(), map.dim_out(), "only square maps invert");
    let f = |z: &[S]| {
        let y = map.eval(z);
        (0..y.len()).map(|i| y[i] - target[i]).collect::<Vec<S>>()
    };
    let jac = |z: &[S]| map.jacobian(z).expect("Jacobian inside inversion region");
    let (root, _) = newton_root(f, jac, guess, tol, max_iter)?;
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn monomial_map() -> SampledMap<f64> {
        SampledMap::new(2, 2, DomainBox::cube(2, 3.0), |u: &[f64]| {
            vec![u[0] * u[0], u[1]]
        })
    }

    #[test]
    fn fd_jacobian_of_identity() {
        let id = SampledMap::<f64>::identity(DomainBox::cube(2, 1.0));
        let jac = id.fd_jacobian(&[0.3, 0.4], 1e-4).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(jac[(i, j)], expected, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn fd_jacobian_of_monomial() {
        let m = monomial_map();
        let jac = m.fd_jacobian(&[1.0, 0.0], 1e-4).unwrap();
        assert_abs_diff_eq!(jac[(0, 0)], 2.0, epsilon = 1e-7);
        assert_abs_diff_eq!(jac[(0, 1)], 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(jac[(1, 0)], 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(jac[(1, 1)], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn fd_stencil_outside_domain_is_reported() {
        let id = SampledMap::<f64>::identity(DomainBox::cube(2, 1.0));
        let err = id.fd_jacobian(&[1.0, 0.0], 1e-4).unwrap_err();
        assert!(matches!(err, Error::StencilOutsideDomain { axis: 0, .. }));
    }

    #[test]
    fn fd_converges_at_order_two() {
        // Smooth map with healthy third derivatives so truncation dominates.
        let m = SampledMap::new(2, 2, DomainBox::cube(2, 2.0), |u: &[f64]| {
            vec![(3.0 * u[0]).sin() * (2.0 * u[1]).cos(), (2.0 * u[0] + u[1]).exp()]
        })
        .with_jac(|u: &[f64]| {
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    3.0 * (3.0 * u[0]).cos() * (2.0 * u[1]).cos(),
                    -2.0 * (3.0 * u[0]).sin() * (2.0 * u[1]).sin(),
                    2.0 * (2.0 * u[0] + u[1]).exp(),
                    (2.0 * u[0] + u[1]).exp(),
                ],
            )
        });
        let x = [0.3, -0.2];
        let exact = m.jacobian(&x).unwrap();
        let error_at = |h: f64| {
            let fd = m.fd_jacobian(&x, h).unwrap();
            (fd - exact.clone()).abs().max()
        };
        for h in [1e-3, 1e-4, 1e-5] {
            let e1 = error_at(h);
            let e2 = error_at(h / 2.0);
            assert!(
                e2 <= 0.3 * e1,
                "halving step {h}: error went {e1:e} -> {e2:e}"
            );
        }
    }

    #[test]
    fn log_jacobian_of_scaled_identity() {
        let half = DMatrix::from_diagonal_element(2, 2, 0.5);
        let m = SampledMap::linear(half, DomainBox::cube(2, 1.0));
        let value = m.log_jacobian(&[0.1, 0.2]).unwrap();
        assert_abs_diff_eq!(value, 2.0 * 0.5_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn log_jacobian_of_identity_is_zero() {
        let id = SampledMap::<f64>::identity(DomainBox::cube(3, 1.0));
        assert_abs_diff_eq!(id.log_jacobian(&[0.0, 0.1, -0.2]).unwrap(), 0.0);
    }

    #[test]
    fn log_jacobian_singular_map() {
        let m = SampledMap::new(2, 2, DomainBox::cube(2, 1.0), |_: &[f64]| vec![0.0, 0.0])
            .with_jac(|_: &[f64]| DMatrix::zeros(2, 2));
        assert!(matches!(
            m.log_jacobian(&[0.1, 0.1]),
            Err(Error::SingularJacobian { .. })
        ));
    }

    #[test]
    #[should_panic(expected = "square")]
    fn log_jacobian_rejects_non_square() {
        let m = SampledMap::new(2, 1, DomainBox::cube(2, 1.0), |u: &[f64]| vec![u[0]]);
        let _ = m.log_jacobian(&[0.0, 0.0]);
    }

    #[test]
    fn chain_rule_for_log_jacobian() {
        let f = SampledMap::new(2, 2, DomainBox::cube(2, 4.0), |u: &[f64]| {
            vec![0.5 * u[0] + 0.1 * u[1] * u[1], 0.7 * u[1]]
        })
        .with_jac(|u: &[f64]| DMatrix::from_row_slice(2, 2, &[0.5, 0.2 * u[1], 0.0, 0.7]));
        let g = SampledMap::new(2, 2, DomainBox::cube(2, 2.0), |u: &[f64]| {
            vec![u[0] * (1.0 + 0.1 * u[0]), u[1] - 0.2 * u[0]]
        })
        .with_jac(|u: &[f64]| DMatrix::from_row_slice(2, 2, &[1.0 + 0.2 * u[0], 0.0, -0.2, 1.0]));
        let composed = f.compose(&g);
        let x = [0.4, -0.3];
        let gx = g.eval(&x);
        let direct = composed.log_jacobian(&x).unwrap();
        let summed = f.log_jacobian(&gx).unwrap() + g.log_jacobian(&x).unwrap();
        assert_abs_diff_eq!(direct, summed, epsilon = 1e-8);
    }

    #[test]
    fn newton_root_solves_quadratic_system() {
        let f = |x: &[f64]| vec![x[0] * x[1] + 2.0, x[0] + 2.0 * x[1]];
        let jac = |x: &[f64]| DMatrix::from_row_slice(2, 2, &[x[1], x[0], 1.0, 2.0]);
        let (root, history) = newton_root(f, jac, &[10.0, 10.0], 1e-12, 100).unwrap();
        assert_abs_diff_eq!(root[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(root[1], -1.0, epsilon = 1e-9);
        assert!(history.len() >= 2);
    }

    #[test]
    fn newton_invert_round_trips() {
        let m = SampledMap::new(2, 2, DomainBox::cube(2, 2.0), |u: &[f64]| {
            vec![u[0] + 0.1 * u[1] * u[1], u[1] + 0.05 * u[0]]
        });
        let x = [0.3, -0.4];
        let y = m.eval(&x);
        let back = newton_invert(&m, &y, &y, 1e-12, 50).unwrap();
        assert_abs_diff_eq!(back[0], x[0], epsilon = 1e-10);
        assert_abs_diff_eq!(back[1], x[1], epsilon = 1e-10);
    }

    proptest::proptest! {
        #[test]
        fn fd_matches_analytic_for_linear_maps(
            a in -2.0f64..2.0, b in -2.0f64..2.0,
            c in -2.0f64..2.0, d in -2.0f64..2.0,
            x in -0.9f64..0.9, y in -0.9f64..0.9,
        ) {
            let m = SampledMap::linear(
                DMatrix::from_row_slice(2, 2, &[a, b, c, d]),
                DomainBox::cube(2, 1.0),
            );
            let fd = m.fd_jacobian(&[x, y], 1e-5).unwrap();
            let exact = DMatrix::from_row_slice(2, 2, &[a, b, c, d]);
            proptest::prop_assert!((fd - exact).abs().max() < 1e-8);
        }
    }
}
