//! Gauss–Legendre quadrature: single panels, composite rules, and path
//! integrals of 1-forms along segments and polylines.
//!
//! Node/weight pairs are computed once in `f64` by Newton iteration on the
//! Legendre recurrence and lifted into the working scalar; the accuracy of a
//! rule is certified by the polynomial-exactness tests rather than by the
//! construction itself.

use crate::error::Result;
use crate::real::Real;

/// Nodes per unit length used by composite rules when the caller does not say
/// otherwise.
pub const DEFAULT_NODES_PER_UNIT: usize = 32;

/// A Gauss–Legendre rule on the reference interval [-1, 1].
#[derive(Debug, Clone)]
pub struct QuadratureRule<S> {
    nodes: Vec<S>,
    weights: Vec<S>,
    order: u32,
}

impl<S: Real> QuadratureRule<S> {
    /// Gauss–Legendre rule with `n` nodes, exact on polynomials of degree
    /// `2n - 1`.
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one node");
        let (nodes64, weights64) = legendre_nodes_f64(n);
        QuadratureRule {
            nodes: nodes64.iter().map(|&x| S::of(x)).collect(),
            weights: weights64.iter().map(|&w| S::of(w)).collect(),
            order: (2 * n - 1) as u32,
        }
    }

    pub fn nodes(&self) -> &[S] {
        &self.nodes
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    /// Largest polynomial degree integrated exactly.
    pub fn order(&self) -> u32 {
        self.order
    }

    /// Integrate `f` over `[a, b]` with a single panel.
    pub fn integrate<F: FnMut(S) -> S>(&self, a: S, b: S, mut f: F) -> S {
        let half = (b - a) * S::of(0.5);
        let mid = (a + b) * S::of(0.5);
        let mut acc = S::zero();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Integrate `f` over `[a, b]` splitting the interval into `panels`
    /// equal panels.
    pub fn integrate_composite<F: FnMut(S) -> S>(&self, a: S, b: S, panels: usize, mut f: F) -> S {
        assert!(panels >= 1);
        let width = (b - a) / S::of(panels as f64);
        let mut acc = S::zero();
        for p in 0..panels {
            let lo = a + width * S::of(p as f64);
            acc += self.integrate(lo, lo + width, &mut f);
        }
        acc
    }

    /// Scaled (node, weight) pairs for `[a, b]`.
    pub fn scaled(&self, a: S, b: S) -> Vec<(S, S)> {
        let half = (b - a) * S::of(0.5);
        let mid = (a + b) * S::of(0.5);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| (mid + half * x, w * half))
            .collect()
    }
}

/// Integrate the 1-form `alpha` along the straight segment from `a` to `b`.
///
/// `alpha` returns the covector components at a point; the integrand is
/// `alpha(gamma(s)) . (b - a)` on `s` in [0, 1]. The panel count follows
/// [`DEFAULT_NODES_PER_UNIT`] relative to the segment length.
pub fn path_integral_1form<S: Real, F>(
    alpha: F,
    a: &[S],
    b: &[S],
    rule: &QuadratureRule<S>,
) -> Result<S>
where
    F: Fn(&[S]) -> Vec<S>,
{
    let len = crate::real::dist(a, b).to64();
    let panels = (len * DEFAULT_NODES_PER_UNIT as f64 / rule.nodes().len() as f64).ceil() as usize;
    path_integral_segment(&alpha, a, b, rule, panels.max(1))
}

/// Segment integral with an explicit panel count.
pub fn path_integral_segment<S: Real, F>(
    alpha: &F,
    a: &[S],
    b: &[S],
    rule: &QuadratureRule<S>,
    panels: usize,
) -> Result<S>
where
    F: Fn(&[S]) -> Vec<S>,
{
    assert_eq!(a.len(), b.len(), "segment endpoints must share a dimension");
    let dim = a.len();
    let direction: Vec<S> = (0..dim).map(|i| b[i] - a[i]).collect();
    let mut point = vec![S::zero(); dim];
    let value = rule.integrate_composite(S::zero(), S::one(), panels, |s| {
        for i in 0..dim {
            point[i] = a[i] + direction[i] * s;
        }
        let cov = alpha(&point);
        debug_assert_eq!(cov.len(), dim);
        (0..dim).fold(S::zero(), |acc, i| acc + cov[i] * direction[i])
    });
    Ok(value)
}

/// Integral of `alpha` along the polyline through `waypoints`.
pub fn path_integral_polyline<S: Real, F>(
    alpha: &F,
    waypoints: &[Vec<S>],
    rule: &QuadratureRule<S>,
    panels_per_segment: usize,
) -> Result<S>
where
    F: Fn(&[S]) -> Vec<S>,
{
    let mut acc = S::zero();
    for pair in waypoints.windows(2) {
        acc += path_integral_segment(alpha, &pair[0], &pair[1], rule, panels_per_segment)?;
    }
    Ok(acc)
}

/// Legendre nodes and weights on [-1, 1] by Newton iteration; `f64` only.
fn legendre_nodes_f64(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_eval(n, x);
            dp = d;
            let delta = p / d;
            x -= delta;
            if delta.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x; // ascending order
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    // Symmetrize to kill the asymmetry left by one-sided Newton stops.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let v = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -v;
        nodes[j] = v;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Returns (P_n(x), P_n'(x)) from the three-term recurrence.
fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weights_sum_to_interval_length() {
        for n in [1, 2, 5, 16, 32, 64] {
            let rule = QuadratureRule::<f64>::gauss_legendre(n);
            let sum: f64 = rule.weights().iter().sum();
            assert_abs_diff_eq!(sum, 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn exact_on_polynomials_up_to_order() {
        for n in [2, 4, 8] {
            let rule = QuadratureRule::<f64>::gauss_legendre(n);
            for degree in 0..=rule.order() {
                let value = rule.integrate(-1.0, 1.0, |x| x.powi(degree as i32));
                let exact = if degree % 2 == 0 {
                    2.0 / (degree as f64 + 1.0)
                } else {
                    0.0
                };
                assert_abs_diff_eq!(value, exact, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn composite_matches_single_panel_on_smooth_integrand() {
        let rule = QuadratureRule::<f64>::gauss_legendre(16);
        let single = rule.integrate(0.0, 2.0, f64::sin);
        let composite = rule.integrate_composite(0.0, 2.0, 8, f64::sin);
        assert_abs_diff_eq!(single, composite, epsilon = 1e-13);
        assert_abs_diff_eq!(composite, 1.0 - 2.0_f64.cos(), epsilon = 1e-13);
    }

    #[test]
    fn path_integral_of_dx1() {
        // alpha = dx_1 integrated from (0,0) to (2,3) gives 2.
        let rule = QuadratureRule::<f64>::gauss_legendre(8);
        let alpha = |_: &[f64]| vec![1.0, 0.0];
        let value = path_integral_1form(alpha, &[0.0, 0.0], &[2.0, 3.0], &rule).unwrap();
        assert_abs_diff_eq!(value, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn closed_loop_of_exact_form_vanishes() {
        let rule = QuadratureRule::<f64>::gauss_legendre(8);
        let alpha = |_: &[f64]| vec![1.0, 0.0];
        let loop_points = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
        ];
        let value = path_integral_polyline(&alpha, &loop_points, &rule, 4).unwrap();
        assert_abs_diff_eq!(value, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn exact_form_integrates_to_potential_difference() {
        // alpha = d g for g(x, y) = sin(x) cos(y) + x^2 y.
        let rule = QuadratureRule::<f64>::gauss_legendre(16);
        let g = |p: &[f64]| p[0].sin() * p[1].cos() + p[0] * p[0] * p[1];
        let alpha = |p: &[f64]| {
            vec![
                p[0].cos() * p[1].cos() + 2.0 * p[0] * p[1],
                -p[0].sin() * p[1].sin() + p[0] * p[0],
            ]
        };
        let a = [0.1, -0.4];
        let b = [0.9, 0.7];
        let value = path_integral_1form(alpha, &a, &b, &rule).unwrap();
        assert_abs_diff_eq!(value, g(&b) - g(&a), epsilon = 1e-8);
    }

    #[test]
    fn f32_rule_integrates_quadratics() {
        let rule = QuadratureRule::<f32>::gauss_legendre(4);
        let value = rule.integrate(0.0_f32, 1.0, |x| x * x);
        assert!((value - 1.0 / 3.0).abs() < 1e-6);
    }
}
