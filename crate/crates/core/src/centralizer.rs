//! Centralizer diagnostics for contractions: commutation residuals, matching
//! a candidate commuter against powers of the map on orbit meshes, and the
//! eigenvalue obstruction that pins periodic orbits under any Lipschitz
//! commuter.

use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::distortion::Contraction;
use crate::error::{Error, Result};
use crate::map::{newton_invert, SampledMap};
use crate::real::{dist, norm, Real};

/// Residual below which a probe is considered matched to a power.
pub const MATCH_TOL: f64 = 1e-6;
/// Commutation residual below which power matching is meaningful.
pub const COMMUTATION_TOL: f64 = 1e-8;

/// A map `f` together with a candidate commuter `g` and the measured
/// commutation residual over a probe set.
#[derive(Debug, Clone)]
pub struct CommutingPair<S> {
    f: Contraction<S>,
    g: SampledMap<S>,
    commutation_residual: S,
}

impl<S: Real> CommutingPair<S> {
    pub fn new(f: Contraction<S>, g: SampledMap<S>, probes: &[Vec<S>]) -> Self {
        let residual = check_commutation(&f, &g, probes);
        CommutingPair {
            f,
            g,
            commutation_residual: residual,
        }
    }

    pub fn f(&self) -> &Contraction<S> {
        &self.f
    }

    pub fn g(&self) -> &SampledMap<S> {
        &self.g
    }

    /// Reported, not silently assumed: analyses carry it into their reports.
    pub fn commutation_residual(&self) -> S {
        self.commutation_residual
    }
}

/// `sup over probes of |f(g(x)) - g(f(x))|`.
pub fn check_commutation<S: Real>(
    f: &Contraction<S>,
    g: &SampledMap<S>,
    probes: &[Vec<S>],
) -> S {
    let mut sup = S::zero();
    for x in probes {
        let fg = f.eval(&g.eval(x));
        let gf = g.eval(&f.eval(x));
        sup = sup.max(dist(&fg, &gf));
    }
    sup
}

/// A finite probe mesh with an adjacency radius; connected components are
/// computed by breadth-first search over the adjacency graph.
#[derive(Debug, Clone)]
pub struct ProbeMesh<S> {
    points: Vec<Vec<S>>,
    adjacency_radius: S,
}

impl<S: Real> ProbeMesh<S> {
    pub fn new(points: Vec<Vec<S>>, adjacency_radius: S) -> Self {
        assert!(!points.is_empty(), "mesh must contain probes");
        ProbeMesh {
            points,
            adjacency_radius,
        }
    }

    /// Evenly spaced 1-D mesh over a union of intervals, adjacency 1.5x the
    /// spacing.
    pub fn intervals_1d(intervals: &[(S, S)], per_interval: usize) -> Self {
        let mut points = Vec::new();
        let mut max_spacing = S::zero();
        for &(a, b) in intervals {
            let spacing = (b - a) / S::of((per_interval - 1) as f64);
            max_spacing = max_spacing.max(spacing);
            for k in 0..per_interval {
                points.push(vec![a + spacing * S::of(k as f64)]);
            }
        }
        ProbeMesh::new(points, max_spacing * S::of(1.5))
    }

    pub fn points(&self) -> &[Vec<S>] {
        &self.points
    }

    /// Component id per probe.
    pub fn components(&self) -> Vec<usize> {
        let n = self.points.len();
        let mut component = vec![usize::MAX; n];
        let mut next = 0usize;
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let mut queue = vec![start];
            component[start] = next;
            while let Some(i) = queue.pop() {
                for j in 0..n {
                    if component[j] == usize::MAX
                        && dist(&self.points[i], &self.points[j]) <= self.adjacency_radius
                    {
                        component[j] = next;
                        queue.push(j);
                    }
                }
            }
            next += 1;
        }
        component
    }
}

/// Per-component result of the power matching.
#[derive(Debug, Clone, Serialize)]
pub struct ComponentMatch {
    pub component: usize,
    pub probes: usize,
    /// The matched power, or `None` when the component is inconsistent or
    /// above tolerance.
    pub power: Option<i64>,
    /// Max over the component of the best-power residual.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerMatchReport {
    pub components: Vec<ComponentMatch>,
    pub lipschitz_bound_used: f64,
    pub i_range: (i64, i64),
    pub commutation_residual: f64,
    pub match_tol: f64,
}

/// Forward and backward iterates `f^i(x)` for `i` in the range; backward
/// iterates stop when the Newton inversion leaves the ball.
fn iterate_table<S: Real>(
    f: &Contraction<S>,
    x: &[S],
    range: &RangeInclusive<i64>,
) -> Vec<(i64, Vec<S>)> {
    let mut table = Vec::new();
    table.push((0i64, x.to_vec()));
    let mut forward = x.to_vec();
    for i in 1..=*range.end() {
        forward = f.eval(&forward);
        table.push((i, forward.clone()));
    }
    let mut backward = x.to_vec();
    for i in 1..=-*range.start() {
        match newton_invert(f.map(), &backward, &backward, S::of(1e-12), 60) {
            Ok(prev) if norm(&prev) <= S::one() => {
                backward = prev;
                table.push((-i, backward.clone()));
            }
            _ => break,
        }
    }
    table.retain(|(i, _)| range.contains(i));
    table
}

/// Estimate the Lipschitz constant of `g` as the max finite-difference ratio
/// over probe pairs.
fn lipschitz_estimate<S: Real>(g: &SampledMap<S>, probes: &[Vec<S>]) -> S {
    let mut lip = S::zero();
    let images: Vec<Vec<S>> = probes.iter().map(|p| g.eval(p)).collect();
    for i in 0..probes.len() {
        for j in (i + 1)..probes.len() {
            let dx = dist(&probes[i], &probes[j]);
            if dx > S::of(1e-9) {
                lip = lip.max(dist(&images[i], &images[j]) / dx);
            }
        }
    }
    lip
}

/// Match `g` against powers of `f` on the mesh, component by component.
///
/// When `i_range` is `None` the range is derived from the Lipschitz bound:
/// `|i| <= log Lip(g) / |log lambda|` (both contraction directions) plus a
/// margin of 2.
pub fn match_power<S: Real>(
    pair: &CommutingPair<S>,
    mesh: &ProbeMesh<S>,
    i_range: Option<RangeInclusive<i64>>,
) -> Result<PowerMatchReport> {
    let f = pair.f();
    let g = pair.g();
    let probes = mesh.points();

    let lip = lipschitz_estimate(g, probes);
    let range = match i_range {
        Some(r) => r,
        None => {
            // Singular values of D_0 f bracket the per-step contraction.
            let df0 = f.linear_part()?;
            let svs = df0.svd(false, false).singular_values;
            let sigma_max = svs.iter().fold(S::zero(), |a, &v| a.max(v));
            let sigma_min = svs.iter().fold(S::of(f64::INFINITY), |a, &v| a.min(v));
            let log_lip = lip.max(S::of(1e-12)).ln().abs();
            let denom = sigma_max.ln().abs().min(sigma_min.ln().abs()).max(S::of(1e-6));
            let bound = (log_lip / denom).to64().ceil() as i64 + 2;
            -bound..=bound
        }
    };

    let tol = S::of(MATCH_TOL);
    let components = mesh.components();
    let component_count = components.iter().max().map_or(0, |&c| c + 1);
    let mut per_component: Vec<Vec<(i64, S)>> = vec![Vec::new(); component_count];

    for (idx, x) in probes.iter().enumerate() {
        let gx = g.eval(x);
        let table = iterate_table(f, x, &range);
        let mut best: Option<(i64, S)> = None;
        let mut second: Option<(i64, S)> = None;
        for (i, fix) in &table {
            let r = dist(&gx, fix);
            if best.is_none() || r < best.unwrap().1 {
                second = best;
                best = Some((*i, r));
            } else if second.is_none() || r < second.unwrap().1 {
                second = Some((*i, r));
            }
        }
        let (bi, br) = best.expect("iterate table nonempty");
        if let Some((si, sr)) = second {
            if br <= tol && sr <= tol {
                return Err(Error::AmbiguousMatch {
                    probe: idx,
                    i: bi,
                    j: si,
                    tol: MATCH_TOL,
                });
            }
        }
        per_component[components[idx]].push((bi, br));
    }

    let mut report_components = Vec::new();
    for (cid, matches) in per_component.iter().enumerate() {
        if matches.is_empty() {
            continue;
        }
        let first_i = matches[0].0;
        let consistent = matches.iter().all(|&(i, _)| i == first_i);
        let worst = matches
            .iter()
            .fold(S::zero(), |acc, &(_, r)| acc.max(r));
        let power = if consistent && worst <= tol {
            Some(first_i)
        } else {
            None
        };
        report_components.push(ComponentMatch {
            component: cid,
            probes: matches.len(),
            power,
            residual: worst.to64(),
        });
    }

    Ok(PowerMatchReport {
        components: report_components,
        lipschitz_bound_used: lip.to64(),
        i_range: (*range.start(), *range.end()),
        commutation_residual: pair.commutation_residual().to64(),
        match_tol: MATCH_TOL,
    })
}

/// Distance from a point to the polyline through the orbit points.
pub fn distance_to_orbit_polyline<S: Real>(point: &[S], orbit: &[Vec<S>]) -> S {
    let mut best = S::of(f64::INFINITY);
    for p in orbit {
        best = best.min(dist(point, p));
    }
    for seg in orbit.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        let mut ab2 = S::zero();
        let mut ap_ab = S::zero();
        for i in 0..point.len() {
            let d = b[i] - a[i];
            ab2 += d * d;
            ap_ab += (point[i] - a[i]) * d;
        }
        if ab2 > S::zero() {
            let t = (ap_ab / ab2).clamp(S::zero(), S::one());
            let proj: Vec<S> = (0..point.len()).map(|i| a[i] + (b[i] - a[i]) * t).collect();
            best = best.min(dist(point, &proj));
        }
    }
    best
}

/// Eigenvalue data of one periodic orbit.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitData {
    pub orbit_id: usize,
    pub period: usize,
    /// Eigenvalues of `D f^tau` at one orbit point, as (re, im) pairs.
    pub eigenvalues: Vec<(f64, f64)>,
}

/// Compute [`OrbitData`] from the derivative of the period map.
pub fn orbit_eigenvalue_data<S: Real>(
    orbit_id: usize,
    period: usize,
    df_tau: &DMatrix<S>,
) -> OrbitData {
    let eig = df_tau.clone().complex_eigenvalues();
    OrbitData {
        orbit_id,
        period,
        eigenvalues: eig
            .iter()
            .map(|z| (z.re.to64(), z.im.to64()))
            .collect(),
    }
}

/// Which orbits a Lipschitz commuter could permute.
#[derive(Debug, Clone, Serialize)]
pub struct PairingReport {
    /// Orbits grouped by (period, eigenvalue multiset); orbits in the same
    /// group could be permuted by a commuter, orbits alone in their group are
    /// forced fixed.
    pub groups: Vec<Vec<usize>>,
    pub forced_fixed: Vec<usize>,
    pub eigenvalue_tol: f64,
}

/// Multiset equality of eigenvalue lists within `tol`, by greedy nearest
/// matching.
fn multisets_match(a: &[(f64, f64)], b: &[(f64, f64)], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    for &(re, im) in a {
        let mut found = false;
        for (j, &(bre, bim)) in b.iter().enumerate() {
            if !used[j] && (re - bre).hypot(im - bim) <= tol {
                used[j] = true;
                found = true;
                break;
            }
        }
        if !found {
            return false;
        }
    }
    true
}

/// Eigenvalue tolerance for grouping orbits.
pub const EIGENVALUE_TOL: f64 = 1e-8;

/// Group orbits by (period, eigenvalue multiset); the output is invariant
/// under permutations of the input.
pub fn eigenvalue_obstruction(orbits: &[OrbitData]) -> PairingReport {
    let mut sorted: Vec<&OrbitData> = orbits.iter().collect();
    sorted.sort_by_key(|o| o.orbit_id);
    let mut assigned = vec![false; sorted.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..sorted.len() {
        if assigned[i] {
            continue;
        }
        let mut group = vec![sorted[i].orbit_id];
        assigned[i] = true;
        for j in (i + 1)..sorted.len() {
            if assigned[j] {
                continue;
            }
            if sorted[i].period == sorted[j].period
                && multisets_match(&sorted[i].eigenvalues, &sorted[j].eigenvalues, EIGENVALUE_TOL)
            {
                group.push(sorted[j].orbit_id);
                assigned[j] = true;
            }
        }
        groups.push(group);
    }
    let forced_fixed = groups
        .iter()
        .filter(|g| g.len() == 1)
        .map(|g| g[0])
        .collect();
    PairingReport {
        groups,
        forced_fixed,
        eigenvalue_tol: EIGENVALUE_TOL,
    }
}

/// `f^i` as a map, for any integer `i` (negative powers by Newton inversion).
pub fn power_map<S: Real>(f: &Contraction<S>, i: i64) -> SampledMap<S> {
    let fmap = f.map().clone();
    let d = f.dim();
    let domain = f.map().domain().clone();
    let eval = move |x: &[S]| -> Vec<S> {
        let mut z = x.to_vec();
        if i >= 0 {
            for _ in 0..i {
                z = fmap.eval(&z);
            }
        } else {
            for _ in 0..(-i) {
                z = newton_invert(&fmap, &z, &z, S::of(1e-12), 60)
                    .unwrap_or_else(|e| panic!("power map left the invertible region: {e}"));
            }
        }
        z
    };
    SampledMap::new(d, d, domain, eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::DomainBox;
    use crate::samples;
    use approx::assert_abs_diff_eq;

    fn mesh_1d() -> ProbeMesh<f64> {
        ProbeMesh::intervals_1d(&[(0.2, 0.9), (-0.9, -0.2)], 15)
    }

    #[test]
    fn powers_commute() {
        let f = samples::random_contraction::<f64>(2, 3).unwrap();
        let g = power_map(&f, 2);
        let probes = crate::probe::sample_ball(
            &[0.0, 0.0],
            0.9,
            32,
            &mut crate::probe::rng_from_seed(5),
        );
        let residual = check_commutation(&f, &g, &probes);
        assert!(residual <= 1e-10, "residual {residual}");
    }

    #[test]
    fn rotation_does_not_commute_with_nonradial_contraction() {
        let f = Contraction::linear(DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]))
            .unwrap();
        let angle = 0.7_f64;
        let rot = DMatrix::from_row_slice(
            2,
            2,
            &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()],
        );
        let g = SampledMap::linear(rot, DomainBox::cube(2, 1.0));
        let probes = crate::probe::sample_ball(
            &[0.0, 0.0],
            0.9,
            32,
            &mut crate::probe::rng_from_seed(5),
        );
        let residual = check_commutation(&f, &g, &probes);
        assert!(residual > 0.05, "residual {residual}");
    }

    /// Mesh for testing power `i`: negative powers only exist on the image
    /// of the |i|-th iterate, so push the base mesh forward.
    fn mesh_for_power(f: &Contraction<f64>, i: i64) -> ProbeMesh<f64> {
        let base = mesh_1d();
        if i >= 0 {
            return base;
        }
        let points: Vec<Vec<f64>> = base
            .points()
            .iter()
            .map(|x| f.orbit(x, (-i) as usize).pop().unwrap())
            .collect();
        ProbeMesh::new(points, 0.1)
    }

    #[test]
    fn match_power_recovers_planted_powers() {
        for i in [-3i64, -1, 1, 2, 4] {
            let f = samples::random_contraction::<f64>(1, 11).unwrap();
            let g = power_map(&f, i);
            let mesh = mesh_for_power(&f, i);
            let pair = CommutingPair::new(f, g, mesh.points());
            let report = match_power(&pair, &mesh, None).unwrap();
            assert!(report.i_range.1 >= i.abs(), "derived range {:?} misses {i}", report.i_range);
            for comp in &report.components {
                assert_eq!(comp.power, Some(i), "component {comp:?} for power {i}");
                assert!(comp.residual <= 1e-10);
            }
        }
    }

    #[test]
    fn glued_powers_report_distinct_components() {
        // Orientation-preserving 1-D contraction; g = f on x > 0 and f^3 on
        // x < 0 is a Lipschitz commuter with component-dependent power.
        let f = samples::random_contraction::<f64>(1, 11).unwrap();
        let f_for_g = f.clone();
        let g = SampledMap::new(1, 1, DomainBox::cube(1, 1.0), move |x: &[f64]| {
            if x[0] >= 0.0 {
                f_for_g.eval(x)
            } else {
                let mut z = x.to_vec();
                for _ in 0..3 {
                    z = f_for_g.eval(&z);
                }
                z
            }
        });
        let mesh = mesh_1d();
        let pair = CommutingPair::new(f, g, mesh.points());
        assert!(pair.commutation_residual() <= 1e-12);
        let report = match_power(&pair, &mesh, None).unwrap();
        assert_eq!(report.components.len(), 2);
        let mut powers: Vec<Option<i64>> =
            report.components.iter().map(|c| c.power).collect();
        powers.sort();
        assert_eq!(powers, vec![Some(1), Some(3)]);
    }

    #[test]
    fn non_power_commuter_reports_none() {
        let f = samples::random_contraction::<f64>(1, 11).unwrap();
        let base = power_map(&f, 1);
        // Perturb away from any power in the interior of the region.
        let g = SampledMap::new(1, 1, DomainBox::cube(1, 1.0), move |x: &[f64]| {
            let mut v = base.eval(x);
            v[0] += 0.001 * (1.0 - x[0] * x[0]).max(0.0);
            v
        });
        let mesh = ProbeMesh::intervals_1d(&[(0.2, 0.9)], 15);
        let pair = CommutingPair::new(f, g, mesh.points());
        let report = match_power(&pair, &mesh, Some(-5..=5)).unwrap();
        assert_eq!(report.components.len(), 1);
        assert_eq!(report.components[0].power, None);
        assert!(report.components[0].residual >= 1e-4);
    }

    #[test]
    fn crowded_iterates_near_zero_are_ambiguous() {
        let f = samples::linear_contraction::<f64>(1, 0.5).unwrap();
        let g = power_map(&f, 1);
        // A probe this close to the fixed point has iterates within the
        // match tolerance of each other.
        let mesh = ProbeMesh::new(vec![vec![1e-8]], 1e-9);
        let pair = CommutingPair::new(f, g, mesh.points());
        let err = match_power(&pair, &mesh, Some(-2..=2)).unwrap_err();
        assert!(matches!(err, Error::AmbiguousMatch { .. }), "{err}");
    }

    #[test]
    fn matched_probes_lie_on_the_orbit_polyline() {
        let f = samples::random_contraction::<f64>(1, 7).unwrap();
        let g = power_map(&f, 2);
        let mesh = ProbeMesh::intervals_1d(&[(0.2, 0.9)], 10);
        for x in mesh.points() {
            let gx = g.eval(x);
            let orbit = f.orbit(x, 12);
            let d = distance_to_orbit_polyline(&gx, &orbit);
            assert!(d <= 1e-6, "g(x) off the orbit polyline by {d}");
        }
    }

    #[test]
    fn eigenvalue_obstruction_examples() {
        // Distinct eigenvalues force both fixed points to stay put.
        let orbits = vec![
            OrbitData {
                orbit_id: 0,
                period: 1,
                eigenvalues: vec![(0.5, 0.0)],
            },
            OrbitData {
                orbit_id: 1,
                period: 1,
                eigenvalues: vec![(1.0 / 3.0, 0.0)],
            },
        ];
        let report = eigenvalue_obstruction(&orbits);
        assert_eq!(report.forced_fixed, vec![0, 1]);

        // Identical eigenvalues: permutable pair, no conclusion.
        let orbits = vec![
            OrbitData {
                orbit_id: 0,
                period: 1,
                eigenvalues: vec![(0.5, 0.0)],
            },
            OrbitData {
                orbit_id: 1,
                period: 1,
                eigenvalues: vec![(0.5, 0.0)],
            },
        ];
        let report = eigenvalue_obstruction(&orbits);
        assert_eq!(report.groups, vec![vec![0, 1]]);
        assert!(report.forced_fixed.is_empty());

        // Same eigenvalues but different periods: not permutable.
        let orbits = vec![
            OrbitData {
                orbit_id: 0,
                period: 2,
                eigenvalues: vec![(0.5, 0.0), (2.0, 0.0)],
            },
            OrbitData {
                orbit_id: 1,
                period: 1,
                eigenvalues: vec![(0.5, 0.0), (2.0, 0.0)],
            },
        ];
        let report = eigenvalue_obstruction(&orbits);
        assert_eq!(report.forced_fixed.len(), 2);
    }

    #[test]
    fn eigenvalue_obstruction_is_input_order_invariant() {
        let data = vec![
            OrbitData {
                orbit_id: 0,
                period: 1,
                eigenvalues: vec![(0.5, 0.0)],
            },
            OrbitData {
                orbit_id: 1,
                period: 1,
                eigenvalues: vec![(0.5, 0.0)],
            },
            OrbitData {
                orbit_id: 2,
                period: 1,
                eigenvalues: vec![(0.25, 0.0)],
            },
        ];
        let shuffled = vec![data[1].clone(), data[2].clone(), data[0].clone()];
        let a = eigenvalue_obstruction(&data);
        let b = eigenvalue_obstruction(&shuffled);
        assert_eq!(
            serde_json::to_string(&a.groups).unwrap(),
            serde_json::to_string(&b.groups).unwrap()
        );
    }

    #[test]
    fn orbit_eigenvalue_data_from_matrix() {
        let df = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]);
        let data = orbit_eigenvalue_data(7, 3, &df);
        assert_eq!(data.orbit_id, 7);
        assert_eq!(data.period, 3);
        let mut moduli: Vec<f64> = data
            .eigenvalues
            .iter()
            .map(|(re, im)| re.hypot(*im))
            .collect();
        moduli.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(moduli[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(moduli[1], 2.0, epsilon = 1e-12);
    }
}
