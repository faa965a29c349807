//! Certified bump functions: the 1-D bell kernel (with its tensor-product
//! n-dimensional version) and radial cutoffs.
//!
//! The bell is a plateau flanked by quintic-smoothstep ramps. The plateau
//! makes every derivative vanish at 0 structurally instead of numerically,
//! and the plateau half-width is solved by bisection so that the integral of
//! the kernel over the line is 1.

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::real::Real;

/// Quintic smoothstep: s(0) = 0, s(1) = 1, s' = s'' = 0 at both ends.
pub(crate) fn smoothstep<S: Real>(t: S) -> S {
    if t <= S::zero() {
        S::zero()
    } else if t >= S::one() {
        S::one()
    } else {
        t * t * t * (S::of(10.0) - S::of(15.0) * t + S::of(6.0) * t * t)
    }
}

pub(crate) fn smoothstep_d1<S: Real>(t: S) -> S {
    if t <= S::zero() || t >= S::one() {
        S::zero()
    } else {
        let u = t * (S::one() - t);
        S::of(30.0) * u * u
    }
}

pub(crate) fn smoothstep_d2<S: Real>(t: S) -> S {
    if t <= S::zero() || t >= S::one() {
        S::zero()
    } else {
        S::of(60.0) * t * (S::one() - S::of(2.0) * t) * (S::one() - t)
    }
}

/// 1-D bell kernel: identically 1 on `[-plateau, plateau]`, quintic ramp down
/// to 0 at `±support`, zero beyond. Unit integral over the line.
#[derive(Debug, Clone)]
pub struct Bell<S> {
    plateau: S,
    support: S,
}

impl<S: Real> Bell<S> {
    pub fn plateau_halfwidth(&self) -> S {
        self.plateau
    }

    pub fn support_radius(&self) -> S {
        self.support
    }

    pub fn eval(&self, w: S) -> S {
        let r = w.abs();
        if r <= self.plateau {
            S::one()
        } else if r >= self.support {
            S::zero()
        } else {
            S::one() - smoothstep((r - self.plateau) / (self.support - self.plateau))
        }
    }

    pub fn d1(&self, w: S) -> S {
        let r = w.abs();
        if r <= self.plateau || r >= self.support {
            S::zero()
        } else {
            let ramp = self.support - self.plateau;
            let slope = -smoothstep_d1((r - self.plateau) / ramp) / ramp;
            if w < S::zero() {
                -slope
            } else {
                slope
            }
        }
    }

    pub fn d2(&self, w: S) -> S {
        let r = w.abs();
        if r <= self.plateau || r >= self.support {
            S::zero()
        } else {
            let ramp = self.support - self.plateau;
            -smoothstep_d2((r - self.plateau) / ramp) / (ramp * ramp)
        }
    }

    /// Tensor-product kernel `Phi(x_1) ... Phi(x_n)`.
    pub fn eval_nd(&self, x: &[S]) -> S {
        x.iter().fold(S::one(), |acc, &xi| acc * self.eval(xi))
    }

    /// Gradient of the tensor-product kernel.
    pub fn grad_nd(&self, x: &[S]) -> Vec<S> {
        let values: Vec<S> = x.iter().map(|&xi| self.eval(xi)).collect();
        (0..x.len())
            .map(|j| {
                let mut g = self.d1(x[j]);
                for (l, &v) in values.iter().enumerate() {
                    if l != j {
                        g *= v;
                    }
                }
                g
            })
            .collect()
    }
}

/// Builds the bell kernel. The hint selects the ramp length (`1 - 2 * hint`),
/// and the plateau half-width is then solved by bisection on the
/// quadrature-evaluated integral so that the kernel has unit mass; the
/// solution lands at the hint up to quadrature error, with support radius
/// `1 - hint < 1`.
pub fn make_bell<S: Real>(plateau_halfwidth_hint: S) -> Result<Bell<S>> {
    let hint = plateau_halfwidth_hint;
    if hint <= S::zero() || hint >= S::of(0.5) {
        return Err(Error::InvalidInput(format!(
            "plateau hint must lie in (0, 0.5), got {}",
            hint.to64()
        )));
    }
    let ramp = S::one() - S::of(2.0) * hint;
    let rule = QuadratureRule::gauss_legendre(32);
    let integral = |a: S| -> S {
        let bell = Bell {
            plateau: a,
            support: a + ramp,
        };
        // Panels aligned with the plateau/ramp breakpoints.
        let plateau_part = rule.integrate(S::zero(), a, |w| bell.eval(w));
        let ramp_part = rule.integrate(a, a + ramp, |w| bell.eval(w));
        S::of(2.0) * (plateau_part + ramp_part)
    };
    let mut lo = S::of(1e-6);
    let mut hi = S::one() - ramp;
    let target = S::one();
    if (integral(lo) - target) * (integral(hi) - target) > S::zero() {
        return Err(Error::NoFeasiblePlateau {
            hint: hint.to64(),
        });
    }
    for _ in 0..200 {
        let mid = (lo + hi) * S::of(0.5);
        if integral(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < S::of(1e-14) {
            break;
        }
    }
    let plateau = (lo + hi) * S::of(0.5);
    Ok(Bell {
        plateau,
        support: plateau + ramp,
    })
}

/// Radial cutoff: identically 1 for `r <= inner`, quintic ramp down, 0 for
/// `r >= outer`. Provides the radial profile and the full gradient/Hessian of
/// `x -> profile(|x|)`.
#[derive(Debug, Clone)]
pub struct RadialCutoff<S> {
    inner: S,
    outer: S,
}

impl<S: Real> RadialCutoff<S> {
    pub fn new(inner: S, outer: S) -> Result<Self> {
        if !(S::zero() < inner && inner < outer) {
            return Err(Error::InvalidInput(format!(
                "radial cutoff needs 0 < inner < outer, got ({}, {})",
                inner.to64(),
                outer.to64()
            )));
        }
        Ok(RadialCutoff { inner, outer })
    }

    pub fn inner_radius(&self) -> S {
        self.inner
    }

    pub fn outer_radius(&self) -> S {
        self.outer
    }

    pub fn eval_r(&self, r: S) -> S {
        if r <= self.inner {
            S::one()
        } else if r >= self.outer {
            S::zero()
        } else {
            S::one() - smoothstep((r - self.inner) / (self.outer - self.inner))
        }
    }

    pub fn d1_r(&self, r: S) -> S {
        if r <= self.inner || r >= self.outer {
            S::zero()
        } else {
            let ramp = self.outer - self.inner;
            -smoothstep_d1((r - self.inner) / ramp) / ramp
        }
    }

    pub fn d2_r(&self, r: S) -> S {
        if r <= self.inner || r >= self.outer {
            S::zero()
        } else {
            let ramp = self.outer - self.inner;
            -smoothstep_d2((r - self.inner) / ramp) / (ramp * ramp)
        }
    }

    pub fn eval(&self, x: &[S]) -> S {
        self.eval_r(crate::real::norm(x))
    }

    /// Gradient of `x -> profile(|x|)`; zero on the plateau and outside the
    /// support, so the division by `r` only happens where `r >= inner > 0`.
    pub fn grad(&self, x: &[S]) -> Vec<S> {
        let r = crate::real::norm(x);
        let g = self.d1_r(r);
        if g == S::zero() {
            return vec![S::zero(); x.len()];
        }
        x.iter().map(|&xi| g * xi / r).collect()
    }

    /// Hessian of `x -> profile(|x|)` as a dense matrix.
    pub fn hess(&self, x: &[S]) -> nalgebra::DMatrix<S> {
        let dim = x.len();
        let r = crate::real::norm(x);
        let g1 = self.d1_r(r);
        let g2 = self.d2_r(r);
        let mut h = nalgebra::DMatrix::zeros(dim, dim);
        if g1 == S::zero() && g2 == S::zero() {
            return h;
        }
        for i in 0..dim {
            for j in 0..dim {
                let unit_i = x[i] / r;
                let unit_j = x[j] / r;
                let mut v = g2 * unit_i * unit_j;
                if i == j {
                    v += g1 * (S::one() - unit_i * unit_j) / r;
                } else {
                    v -= g1 * unit_i * unit_j / r;
                }
                h[(i, j)] = v;
            }
        }
        h
    }
}
