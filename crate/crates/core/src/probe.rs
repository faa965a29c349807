//! Probe meshes and sup-norm measurements used by the certificates.
//!
//! Everything randomized is driven by a caller-supplied seed so that sweeps
//! are reproducible byte for byte.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::map::{DomainBox, SampledMap};
use crate::real::Real;

/// The deterministic RNG used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` points sampled uniformly from the box.
pub fn sample_box<S: Real, R: Rng>(domain: &DomainBox<S>, count: usize, rng: &mut R) -> Vec<Vec<S>> {
    (0..count).map(|_| domain.sample(rng)).collect()
}

/// `count` points sampled uniformly from the ball of given radius.
pub fn sample_ball<S: Real, R: Rng>(
    center: &[S],
    radius: S,
    count: usize,
    rng: &mut R,
) -> Vec<Vec<S>> {
    let dim = center.len();
    let mut points = Vec::with_capacity(count);
    while points.len() < count {
        let candidate: Vec<S> = (0..dim)
            .map(|_| S::of(rng.gen_range(-1.0..1.0)))
            .collect();
        if crate::real::norm(&candidate) <= S::one() {
            points.push(
                (0..dim)
                    .map(|i| center[i] + radius * candidate[i])
                    .collect(),
            );
        }
    }
    points
}

/// Deterministic mesh on the sphere of given radius: axis points plus seeded
/// random directions.
pub fn sphere_mesh<S: Real>(dim: usize, radius: S, count: usize, seed: u64) -> Vec<Vec<S>> {
    let mut rng = rng_from_seed(seed);
    let mut points = Vec::new();
    for axis in 0..dim {
        for sign in [S::one(), -S::one()] {
            let mut p = vec![S::zero(); dim];
            p[axis] = sign * radius;
            points.push(p);
        }
    }
    while points.len() < count.max(2 * dim) {
        let dir: Vec<S> = (0..dim).map(|_| S::of(rng.gen_range(-1.0..1.0))).collect();
        let n = crate::real::norm(&dir);
        if n > S::of(1e-3) {
            points.push(dir.iter().map(|&v| v * radius / n).collect());
        }
    }
    points
}

/// Mesh on the boundary shell of a box: for each face, a grid of points on
/// that face, then the whole shell repeated `inflate` outward (so Jacobian
/// stencils at the shell are also covered).
pub fn box_shell_mesh<S: Real>(
    domain: &DomainBox<S>,
    per_axis: usize,
    inflate: S,
) -> Vec<Vec<S>> {
    let dim = domain.dim();
    let mut points = Vec::new();
    for offset in [S::zero(), inflate] {
        let grown = domain.inflate(offset);
        for face_axis in 0..dim {
            for face in [grown.lo()[face_axis], grown.hi()[face_axis]] {
                let mut indices = vec![0usize; dim];
                loop {
                    let mut p = Vec::with_capacity(dim);
                    for axis in 0..dim {
                        if axis == face_axis {
                            p.push(face);
                        } else {
                            let t = if per_axis == 1 {
                                S::of(0.5)
                            } else {
                                S::of(indices[axis] as f64 / (per_axis - 1) as f64)
                            };
                            p.push(grown.lo()[axis] + (grown.hi()[axis] - grown.lo()[axis]) * t);
                        }
                    }
                    points.push(p);
                    // Odometer over the non-face axes.
                    let mut carry = true;
                    for axis in 0..dim {
                        if axis == face_axis || !carry {
                            continue;
                        }
                        indices[axis] += 1;
                        if indices[axis] < per_axis {
                            carry = false;
                        } else {
                            indices[axis] = 0;
                        }
                    }
                    if carry {
                        break;
                    }
                }
            }
        }
    }
    points
}

/// Regular grid over the box, `per_axis` points per axis.
pub fn grid_mesh<S: Real>(domain: &DomainBox<S>, per_axis: usize) -> Vec<Vec<S>> {
    let dim = domain.dim();
    let mut points = Vec::new();
    let mut indices = vec![0usize; dim];
    loop {
        let p: Vec<S> = (0..dim)
            .map(|axis| {
                let t = if per_axis == 1 {
                    S::of(0.5)
                } else {
                    S::of(indices[axis] as f64 / (per_axis - 1) as f64)
                };
                domain.lo()[axis] + (domain.hi()[axis] - domain.lo()[axis]) * t
            })
            .collect();
        points.push(p);
        let mut carry = true;
        for axis in 0..dim {
            if !carry {
                break;
            }
            indices[axis] += 1;
            if indices[axis] < per_axis {
                carry = false;
            } else {
                indices[axis] = 0;
            }
        }
        if carry {
            break;
        }
    }
    points
}

/// Max absolute entry of a matrix.
pub fn max_abs_mat<S: Real>(m: &DMatrix<S>) -> S {
    m.iter().fold(S::zero(), |acc, &v| acc.max(v.abs()))
}

/// Sup over probes of `|f(x) - g(x)|_inf + |Df(x) - Dg(x)|_inf`.
pub fn c1_distance<S: Real>(
    f: &SampledMap<S>,
    g: &SampledMap<S>,
    probes: &[Vec<S>],
) -> Result<S> {
    let mut sup = S::zero();
    for p in probes {
        let fv = f.eval(p);
        let gv = g.eval(p);
        let value_gap = fv
            .iter()
            .zip(&gv)
            .fold(S::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
        let jac_gap = max_abs_mat(&(f.jacobian(p)? - g.jacobian(p)?));
        sup = sup.max(value_gap + jac_gap);
    }
    Ok(sup)
}

/// Sup over probes of `|f(x) - x|_inf + |Df(x) - I|_inf`.
pub fn c1_distance_to_identity<S: Real>(f: &SampledMap<S>, probes: &[Vec<S>]) -> Result<S> {
    let dim = f.dim_in();
    let id = DMatrix::identity(dim, dim);
    let mut sup = S::zero();
    for p in probes {
        let fv = f.eval(p);
        let value_gap = fv
            .iter()
            .zip(p)
            .fold(S::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
        let jac_gap = max_abs_mat(&(f.jacobian(p)? - id.clone()));
        sup = sup.max(value_gap + jac_gap);
    }
    Ok(sup)
}

/// Sup over probes of the displacement `|f(x) - x|`.
pub fn sup_displacement<S: Real>(f: &SampledMap<S>, probes: &[Vec<S>]) -> S {
    let mut sup = S::zero();
    for p in probes {
        let fv = f.eval(p);
        sup = sup.max(crate::real::dist(&fv, p));
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shell_mesh_sits_on_the_boundary_or_inflation() {
        let domain = DomainBox::cube(2, 1.0);
        let shell = box_shell_mesh(&domain, 3, 0.01);
        assert!(!shell.is_empty());
        for p in &shell {
            let linf = p.iter().fold(0.0_f64, |acc, &v: &f64| acc.max(v.abs()));
            assert!((linf - 1.0).abs() < 1e-12 || (linf - 1.01).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_mesh_counts() {
        let domain = DomainBox::cube(2, 1.0);
        assert_eq!(grid_mesh(&domain, 4).len(), 16);
        assert_eq!(grid_mesh(&domain, 1).len(), 1);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let domain = DomainBox::cube(3, 2.0);
        let a = sample_box(&domain, 5, &mut rng_from_seed(7));
        let b = sample_box(&domain, 5, &mut rng_from_seed(7));
        assert_eq!(a, b);
    }

    #[test]
    fn c1_distance_of_map_to_itself_is_zero() {
        let m = SampledMap::<f64>::identity(DomainBox::cube(2, 1.0));
        let probes = grid_mesh(&DomainBox::cube(2, 0.9), 3);
        assert_eq!(c1_distance(&m, &m, &probes).unwrap(), 0.0);
        assert_eq!(c1_distance_to_identity(&m, &probes).unwrap(), 0.0);
    }
}
