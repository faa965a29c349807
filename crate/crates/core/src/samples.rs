//! Ready-made sample constructions: bump-supported disk diffeomorphisms,
//! trigonometric generating-function fields, randomized contractions, and
//! hyperbolic symplectic matrices. The experiment runner and the test suites
//! instantiate their inputs from these families, always through an explicit
//! seed.

use nalgebra::DMatrix;
use rand::Rng;

use crate::distortion::Contraction;
use crate::error::Result;
use crate::genfn::{generate_map, GenFnHessian, GeneratingFunction};
use crate::interpolation::{Ball, DiskDiffeo};
use crate::map::{DomainBox, SampledMap};
use crate::probe::rng_from_seed;
use crate::real::Real;

/// Disk diffeomorphism `psi(u) = u + amplitude * g(|u - q|) * dir` with a
/// radial bump `g` supported strictly inside the disk. Fixed seed, fixed
/// shape: scaling `amplitude` scales the displacement field exactly linearly.
pub fn bump_disk_diffeo<S: Real>(
    n: usize,
    disk: Ball<S>,
    amplitude: f64,
    seed: u64,
) -> Result<DiskDiffeo<S>> {
    let mut rng = rng_from_seed(seed);
    let radius = disk.radius;
    // Bump center: offset from the disk center along a random axis.
    let axis = rng.gen_range(0..n);
    let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let mut q = disk.center.clone();
    q[axis] += radius * S::of(0.15 * side);
    // Unit displacement direction.
    let mut dir: Vec<S> = (0..n).map(|_| S::of(rng.gen_range(-1.0..1.0))).collect();
    let dn = crate::real::norm(&dir);
    for v in &mut dir {
        *v /= dn;
    }
    let cut = crate::bump::RadialCutoff::new(radius * S::of(0.15), radius * S::of(0.5))?;
    // Normalize the field to unit C^1 size so `amplitude` is the C^1 scale
    // of psi - Id.
    let mut c1_of_bump = S::zero();
    for k in 0..512 {
        let r = radius * S::of(0.5 * (k as f64 + 0.5) / 512.0);
        c1_of_bump = c1_of_bump.max(cut.eval_r(r) + cut.d1_r(r).abs());
    }

    let amp = S::of(amplitude) / c1_of_bump;
    let q_eval = q.clone();
    let dir_eval = dir.clone();
    let cut_eval = cut.clone();
    let eval = move |u: &[S]| -> Vec<S> {
        let rel: Vec<S> = (0..n).map(|i| u[i] - q_eval[i]).collect();
        let g = cut_eval.eval(&rel);
        (0..n).map(|i| u[i] + amp * g * dir_eval[i]).collect()
    };
    let q_jac = q.clone();
    let dir_jac = dir.clone();
    let cut_jac = cut;
    let jac = move |u: &[S]| -> DMatrix<S> {
        let rel: Vec<S> = (0..n).map(|i| u[i] - q_jac[i]).collect();
        let grad = cut_jac.grad(&rel);
        let mut m = DMatrix::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += amp * dir_jac[i] * grad[j];
            }
        }
        m
    };
    let extent = crate::real::norm(&disk.center) + radius * S::of(4.0) + S::one();
    let psi = SampledMap::new(n, n, DomainBox::cube(n, extent), eval).with_jac(jac);
    let mut base_point = disk.center.clone();
    base_point[0] += radius;
    DiskDiffeo::new(psi, disk, radius * S::of(0.2), base_point)
}

/// Generating function `S0 + eps * sum_k sin(p_k . u + q_k . eta + r_k)`
/// with full analytic derivatives; nondegenerate for small `eps`.
pub fn trig_genfn<S: Real>(n: usize, eps: f64, seed: u64) -> GeneratingFunction<S> {
    let mut rng = rng_from_seed(seed);
    let terms = 3;
    let p: Vec<Vec<S>> = (0..terms)
        .map(|_| (0..n).map(|_| S::of(rng.gen_range(-1.0..1.0))).collect())
        .collect();
    let q: Vec<Vec<S>> = (0..terms)
        .map(|_| (0..n).map(|_| S::of(rng.gen_range(-1.0..1.0))).collect())
        .collect();
    let r: Vec<S> = (0..terms).map(|_| S::of(rng.gen_range(0.0..6.28))).collect();
    let eps = S::of(eps);

    let phase = {
        let p = p.clone();
        let q = q.clone();
        let r = r.clone();
        move |k: usize, u: &[S], eta: &[S]| -> S {
            let mut acc = r[k];
            for i in 0..u.len() {
                acc += p[k][i] * u[i] + q[k][i] * eta[i];
            }
            acc
        }
    };

    let ph_e = phase.clone();
    let eval = move |u: &[S], eta: &[S]| -> S {
        let s0 = u.iter().zip(eta).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
        s0 + eps * (0..terms).map(|k| ph_e(k, u, eta).sin()).fold(S::zero(), |a, b| a + b)
    };

    let ph_g = phase.clone();
    let (pg, qg) = (p.clone(), q.clone());
    let grad = move |u: &[S], eta: &[S]| -> (Vec<S>, Vec<S>) {
        let mut su: Vec<S> = eta.to_vec();
        let mut seta: Vec<S> = u.to_vec();
        for k in 0..terms {
            let c = ph_g(k, u, eta).cos() * eps;
            for i in 0..u.len() {
                su[i] += c * pg[k][i];
                seta[i] += c * qg[k][i];
            }
        }
        (su, seta)
    };

    let ph_h = phase;
    let (ph_p, ph_q) = (p, q);
    let hess = move |u: &[S], eta: &[S]| -> GenFnHessian<S> {
        let nloc = u.len();
        let mut uu = DMatrix::zeros(nloc, nloc);
        let mut u_eta = DMatrix::identity(nloc, nloc);
        let mut eta_eta = DMatrix::zeros(nloc, nloc);
        for k in 0..terms {
            let s = ph_h(k, u, eta).sin() * eps;
            for i in 0..nloc {
                for j in 0..nloc {
                    uu[(i, j)] -= s * ph_p[k][i] * ph_p[k][j];
                    u_eta[(i, j)] -= s * ph_p[k][i] * ph_q[k][j];
                    eta_eta[(i, j)] -= s * ph_q[k][i] * ph_q[k][j];
                }
            }
        }
        GenFnHessian { uu, u_eta, eta_eta }
    };

    GeneratingFunction::new(n, DomainBox::cube(2 * n, S::of(1.5)), eval, grad, hess)
}

/// Randomized smooth contraction `f(x) = M(x) + gamma |x|^2 B x` with
/// `M = O diag(mu) O'^T`, `mu` in `[0.35, 0.6]`. Orientation-preserving in
/// dimension 1.
pub fn random_contraction<S: Real>(d: usize, seed: u64) -> Result<Contraction<S>> {
    let mut rng = rng_from_seed(seed);
    let m: DMatrix<S> = if d == 1 {
        DMatrix::from_element(1, 1, S::of(rng.gen_range(0.35..0.6)))
    } else {
        let random_orthogonal = |rng: &mut rand_chacha::ChaCha8Rng| -> DMatrix<S> {
            let raw = DMatrix::from_fn(d, d, |_, _| S::of(rng.gen_range(-1.0..1.0)));
            raw.qr().q()
        };
        let o1 = random_orthogonal(&mut rng);
        let o2 = random_orthogonal(&mut rng);
        let sigma =
            DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |_, _| {
                S::of(rng.gen_range(0.35..0.6))
            }));
        o1 * sigma * o2.transpose()
    };
    let b = {
        let raw = DMatrix::<S>::from_fn(d, d, |_, _| S::of(rng.gen_range(-1.0..1.0)));
        let row_norm = (0..d)
            .map(|i| (0..d).fold(S::zero(), |acc, j| acc + raw[(i, j)].abs()))
            .fold(S::zero(), |a, v| a.max(v));
        raw / row_norm.max(S::one())
    };
    let gamma = S::of(0.05);

    let m_eval = m.clone();
    let b_eval = b.clone();
    let eval = move |x: &[S]| -> Vec<S> {
        let xv = nalgebra::DVector::from_column_slice(x);
        let r2 = x.iter().fold(S::zero(), |a, &v| a + v * v);
        let v = &m_eval * &xv + &b_eval * xv * (gamma * r2);
        v.iter().copied().collect()
    };
    let m_jac = m;
    let b_jac = b;
    let jac = move |x: &[S]| -> DMatrix<S> {
        let xv = nalgebra::DVector::from_column_slice(x);
        let r2 = x.iter().fold(S::zero(), |a, &v| a + v * v);
        let bx = &b_jac * &xv;
        let mut out = m_jac.clone() + &b_jac * (gamma * r2);
        for i in 0..x.len() {
            for j in 0..x.len() {
                out[(i, j)] += gamma * S::of(2.0) * bx[i] * x[j];
            }
        }
        out
    };
    let map = SampledMap::new(d, d, DomainBox::cube(d, S::one()), eval).with_jac(jac);
    Contraction::new(map, None)
}

/// The linear contraction `rate * Id`.
pub fn linear_contraction<S: Real>(d: usize, rate: f64) -> Result<Contraction<S>> {
    Contraction::linear(DMatrix::from_diagonal_element(d, d, S::of(rate)))
}

/// A hyperbolic symplectic matrix built by conjugating a hyperbolic diagonal
/// model by the derivative of a generated symplectomorphism at a random
/// point. Stable eigenvalues drawn from `[0.2, 0.8]`.
pub fn random_hyperbolic_symplectic<S: Real>(n: usize, seed: u64) -> Result<DMatrix<S>> {
    let mut rng = rng_from_seed(seed);
    let mut diag = nalgebra::DVector::zeros(2 * n);
    for i in 0..n {
        let lambda = S::of(rng.gen_range(0.2..0.8));
        diag[i] = lambda;
        diag[n + i] = S::one() / lambda;
    }
    let model = DMatrix::from_diagonal(&diag);
    let genfn = trig_genfn::<S>(n, 0.05, seed.wrapping_add(101));
    let h = generate_map(&genfn, S::of(1e-12), 50)?;
    let z: Vec<S> = (0..2 * n).map(|_| S::of(rng.gen_range(-0.5..0.5))).collect();
    let p = h.map().jacobian(&z)?;
    let p_inv = p
        .clone()
        .lu()
        .try_inverse()
        .expect("derivative of a symplectomorphism is invertible");
    Ok(&p * model * p_inv)
}
