//! Quadrature on the unit sphere S^{d-1} and closed-form Lebesgue moments of
//! the unit ball and the unit box.
//!
//! Rules:
//! - d = 1: the two points ±1 with unit weights (exact).
//! - d = 2: equally spaced angles, exact for trigonometric degree < N.
//! - d = 3, 4: Gauss-Gegenbauer in the polar cosine times a rule on S^{d-2}.
//! - d ≥ 5: seeded Monte Carlo, reported with standard errors.
//!
//! Sums are evaluated in parallel over nodes but reduced with a fixed-shape
//! pairwise tree, so results do not depend on the thread count.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::polyform::MultiIndex;
use crate::special::{gamma, sphere_area};

/// Relative change between successive resolutions accepted as converged.
pub const CONVERGENCE_TOL: f64 = 1e-9;
/// Default starting exactness.
pub const DEFAULT_EXACTNESS: usize = 32;

const MC_MAX_NODES: usize = 1 << 20;
const MC_SEED: u64 = 0x5eed_d15c;

#[derive(Debug, Clone)]
pub struct SphereRule {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    exactness: usize,
    label: String,
    statistical: bool,
}

impl SphereRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Polynomial degree up to which surface integrals are exact; 0 for
    /// Monte Carlo rules.
    pub fn exactness(&self) -> usize {
        self.exactness
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_statistical(&self) -> bool {
        self.statistical
    }
}

/// Builds a rule on S^{d-1} exact for polynomials of degree ≤ `exactness`.
pub fn build_rule(d: usize, exactness: usize) -> Result<SphereRule> {
    if d < 1 {
        return Err(Error::UnsupportedDimension(d));
    }
    let exactness = exactness.max(2);
    Ok(match d {
        1 => SphereRule {
            dim: 1,
            nodes: vec![-1.0, 1.0],
            weights: vec![1.0, 1.0],
            exactness,
            label: "points-pm1".into(),
            statistical: false,
        },
        2 => circle_rule(exactness),
        3 | 4 => product_rule(d, exactness),
        _ => monte_carlo_rule(d, exactness),
    })
}

fn circle_rule(exactness: usize) -> SphereRule {
    // Even N keeps the rule centrally symmetric.
    let n = (exactness + 1).next_multiple_of(2);
    let h = 2.0 * std::f64::consts::PI / n as f64;
    let nodes = (0..n).flat_map(|k| {
        let t = h * k as f64;
        [t.cos(), t.sin()]
    });
    SphereRule {
        dim: 2,
        nodes: nodes.collect(),
        weights: vec![h; n],
        exactness,
        label: format!("circle-trapezoid-{n}"),
        statistical: false,
    }
}

/// θ = (√(1-t²)·ω, t) with t weighted by (1-t²)^{(d-3)/2} and ω on S^{d-2}.
fn product_rule(d: usize, exactness: usize) -> SphereRule {
    let inner = if d == 3 { circle_rule(exactness) } else { product_rule(d - 1, exactness) };
    let k = exactness / 2 + 1;
    let (ts, ws) = gauss_gegenbauer(k, (d as f64 - 3.0) / 2.0);
    let mut nodes = Vec::with_capacity(ts.len() * inner.len() * d);
    let mut weights = Vec::with_capacity(ts.len() * inner.len());
    for (&t, &wt) in ts.iter().zip(&ws) {
        let r = (1.0 - t * t).max(0.0).sqrt();
        for (omega, &wo) in inner.nodes().zip(&inner.weights) {
            nodes.extend(omega.iter().map(|o| r * o));
            nodes.push(t);
            weights.push(wt * wo);
        }
    }
    SphereRule {
        dim: d,
        nodes,
        weights,
        exactness,
        label: format!("product-{}x{}", ts.len(), inner.label),
        statistical: false,
    }
}

fn monte_carlo_rule(d: usize, exactness: usize) -> SphereRule {
    let count = 4usize
        .checked_pow(exactness.div_ceil(2) as u32)
        .unwrap_or(MC_MAX_NODES)
        .min(MC_MAX_NODES);
    let mut rng = ChaCha8Rng::seed_from_u64(MC_SEED ^ exactness as u64);
    let mut nodes = Vec::with_capacity(count * d);
    for _ in 0..count {
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-12 {
                nodes.extend(v.iter().map(|x| x / n));
                break;
            }
        }
    }
    SphereRule {
        dim: d,
        nodes,
        weights: vec![sphere_area(d) / count as f64; count],
        exactness: 0,
        label: format!("monte-carlo-{count}"),
        statistical: true,
    }
}

/// Gauss rule for the weight (1-t²)^a on [-1, 1] (Golub-Welsch).
pub fn gauss_gegenbauer(k: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(k, k);
    for i in 1..k {
        let i_f = i as f64;
        let s = 2.0 * i_f + 2.0 * a;
        let b = i_f * (i_f + 2.0 * a) / ((s + 1.0) * (s - 1.0));
        let b = b.sqrt();
        jac[(i, i - 1)] = b;
        jac[(i - 1, i)] = b;
    }
    let mu0 = std::f64::consts::PI.sqrt() * gamma(a + 1.0) / gamma(a + 1.5);
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Enforce the exact symmetry of the rule.
    for i in 0..k / 2 {
        let j = k - 1 - i;
        let t = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-t, w);
        pairs[j] = (t, w);
    }
    if k % 2 == 1 {
        pairs[k / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

/// ∫ f(θ) dθ over the circle, split at the angles in `breaks`; every arc is
/// cut into `pieces` equal parts, each integrated with a k-point
/// Gauss-Legendre rule. Suited to integrands that are smooth between the
/// breakpoints.
pub fn integrate_circle_arcs<F>(breaks: &[f64], pieces: usize, k: usize, f: F) -> f64
where
    F: Fn(f64) -> f64 + Sync,
{
    let tau = 2.0 * std::f64::consts::PI;
    let mut cuts: Vec<f64> = breaks.iter().map(|b| b.rem_euclid(tau)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    if cuts.is_empty() {
        cuts.push(0.0);
    }
    let (t, w) = gauss_gegenbauer(k, 0.0);
    let mut segments = Vec::with_capacity(cuts.len() * pieces);
    for i in 0..cuts.len() {
        let a = cuts[i];
        let b = if i + 1 < cuts.len() { cuts[i + 1] } else { cuts[0] + tau };
        let h = (b - a) / pieces as f64;
        segments.extend((0..pieces).map(|j| (a + j as f64 * h, a + (j + 1) as f64 * h)));
    }
    let parts: Vec<f64> = segments
        .par_iter()
        .map(|&(a, b)| {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let vals: Vec<f64> = t.iter().zip(&w).map(|(ti, wi)| wi * f(mid + half * ti)).collect();
            half * pairwise_sum(&vals)
        })
        .collect();
    pairwise_sum(&parts)
}

/// Sum with a fixed binary-tree shape.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Value of a surface integral, with a standard error for Monte Carlo rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceIntegral {
    pub value: f64,
    pub std_error: Option<f64>,
    /// Σ wᵢ |f(θᵢ)|, the scale against which cancellation is judged.
    pub magnitude: f64,
}

/// Σ wᵢ f(θᵢ) over the rule's nodes.
pub fn integrate_surface<F>(rule: &SphereRule, f: F) -> Result<SurfaceIntegral>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut out = integrate_surface_many(rule, 1, |x| vec![f(x)])?;
    Ok(out.remove(0))
}

/// Integrates `k` functions at once; `f` returns the k integrand values at a node.
pub fn integrate_surface_many<F>(rule: &SphereRule, k: usize, f: F) -> Result<Vec<SurfaceIntegral>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let values: Vec<Vec<f64>> = (0..rule.len())
        .into_par_iter()
        .map(|i| f(rule.node(i)))
        .collect();
    for (i, v) in values.iter().enumerate() {
        assert_eq!(v.len(), k, "integrand arity");
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { node: i });
        }
    }
    let n = rule.len() as f64;
    let mut column = vec![0.0; rule.len()];
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        for (slot, (v, w)) in column.iter_mut().zip(values.iter().zip(&rule.weights)) {
            *slot = w * v[c];
        }
        let value = pairwise_sum(&column);
        let magnitude = column.iter().map(|x| x.abs()).sum::<f64>();
        let std_error = rule.statistical.then(|| {
            let mean = value / n;
            for slot in column.iter_mut() {
                *slot = (*slot - mean) * (*slot - mean);
            }
            (pairwise_sum(&column) / (n - 1.0)).sqrt() * n.sqrt()
        });
        out.push(SurfaceIntegral { value, std_error, magnitude });
    }
    Ok(out)
}

/// ∫_{S^{d-1}} θ^α dσ = 2 Π Γ((αᵢ+1)/2) / Γ((|α|+d)/2), zero unless all αᵢ are even.
pub fn surface_moment(d: usize, alpha: &MultiIndex) -> f64 {
    assert_eq!(alpha.dim(), d);
    if !alpha.is_even() {
        return 0.0;
    }
    let num: f64 = alpha.exponents().iter().map(|&a| gamma((a as f64 + 1.0) / 2.0)).product();
    2.0 * num / gamma((alpha.degree() as f64 + d as f64) / 2.0)
}

/// ∫_{[-1,1]^d} x^α dx.
pub fn box_moment(d: usize, alpha: &MultiIndex) -> f64 {
    assert_eq!(alpha.dim(), d);
    if !alpha.is_even() {
        return 0.0;
    }
    alpha.exponents().iter().map(|&a| 2.0 / (a as f64 + 1.0)).product()
}

/// ∫_{‖x‖≤1} x^α dx.
pub fn ball_moment(d: usize, alpha: &MultiIndex) -> f64 {
    surface_moment(d, alpha) / (d as f64 + alpha.degree() as f64)
}

/// Result of an adaptive surface integration.
#[derive(Debug, Clone)]
pub struct Converged {
    pub values: Vec<f64>,
    /// Standard errors, present only for Monte Carlo rules.
    pub std_errors: Option<Vec<f64>>,
    /// Exactness of the rule whose values were accepted.
    pub exactness: usize,
    /// Largest relative change against the previous resolution.
    pub rel_change: f64,
    pub label: String,
}

/// Adaptive sphere integration: doubles the exactness until two successive
/// resolutions agree to `tol`.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    dim: usize,
    start_exactness: usize,
    max_exactness: usize,
    tol: f64,
}

impl SphereQuadrature {
    pub fn new(dim: usize, start_exactness: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::UnsupportedDimension(dim));
        }
        Ok(Self {
            dim,
            start_exactness: start_exactness.max(2),
            max_exactness: default_max_exactness(dim),
            tol: CONVERGENCE_TOL,
        })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_exactness(mut self, max_exactness: usize) -> Self {
        self.max_exactness = max_exactness;
        self
    }

    pub fn with_start_exactness(mut self, start: usize) -> Self {
        self.start_exactness = start.max(2);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn start_exactness(&self) -> usize {
        self.start_exactness
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// Integrates `k` functions over S^{d-1} to the configured tolerance.
    pub fn integrate<F>(&self, k: usize, f: F) -> Result<Converged>
    where
        F: Fn(&[f64]) -> Vec<f64> + Sync,
    {
        let mut e = self.start_exactness;
        let rule = build_rule(self.dim, e)?;
        let mut prev = integrate_surface_many(&rule, k, &f)?;
        if rule.is_statistical() {
            let values: Vec<f64> = prev.iter().map(|s| s.value).collect();
            let errs: Vec<f64> = prev.iter().map(|s| s.std_error.unwrap_or(0.0)).collect();
            let rel_change = values
                .iter()
                .zip(&errs)
                .map(|(v, s)| s / (v.abs() + 1e-300))
                .fold(0.0, f64::max);
            return Ok(Converged {
                values,
                std_errors: Some(errs),
                exactness: 0,
                rel_change,
                label: rule.label().to_string(),
            });
        }
        if self.dim == 1 {
            return Ok(Converged {
                values: prev.iter().map(|s| s.value).collect(),
                std_errors: None,
                exactness: e,
                rel_change: 0.0,
                label: rule.label().to_string(),
            });
        }
        let mut last_change = f64::INFINITY;
        while 2 * e <= self.max_exactness {
            e *= 2;
            let rule = build_rule(self.dim, e)?;
            let next = integrate_surface_many(&rule, k, &f)?;
            let scale = next.iter().map(|s| s.magnitude).fold(0.0, f64::max);
            let change = prev
                .iter()
                .zip(&next)
                .map(|(a, b)| (a.value - b.value).abs() / (b.value.abs() + 1e-6 * scale + 1e-300))
                .fold(0.0, f64::max);
            last_change = change;
            if change <= self.tol {
                return Ok(Converged {
                    values: next.iter().map(|s| s.value).collect(),
                    std_errors: None,
                    exactness: e,
                    rel_change: change,
                    label: rule.label().to_string(),
                });
            }
            prev = next;
        }
        Err(Error::QuadratureNonConvergence { exactness: e, rel_change: last_change })
    }
}

fn default_max_exactness(dim: usize) -> usize {
    match dim {
        2 => 1024,
        3 => 512,
        _ => 64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyform::{enumerate_basis, monomials_up_to};
    use std::f64::consts::PI;

    fn mi(e: &[u32]) -> MultiIndex {
        MultiIndex::new(e.to_vec())
    }

    #[test]
    fn closed_form_moments() {
        assert!((surface_moment(2, &mi(&[0, 0])) - 2.0 * PI).abs() < 1e-14);
        assert!((surface_moment(3, &mi(&[2, 0, 0])) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert_eq!(surface_moment(2, &mi(&[1, 1])), 0.0);
        assert_eq!(box_moment(2, &mi(&[0, 0])), 4.0);
        assert!((box_moment(2, &mi(&[2, 2])) - 4.0 / 9.0).abs() < 1e-15);
        assert_eq!(box_moment(1, &mi(&[3])), 0.0);
        assert!((ball_moment(2, &mi(&[0, 0])) - PI).abs() < 1e-14);
        assert!((ball_moment(2, &mi(&[2, 0])) - PI / 4.0).abs() < 1e-14);
        assert!((ball_moment(3, &mi(&[0, 0, 0])) - 4.0 * PI / 3.0).abs() < 1e-14);
        for d in 1..=4 {
            let vol = PI.powf(d as f64 / 2.0) / gamma(1.0 + d as f64 / 2.0);
            assert!((ball_moment(d, &MultiIndex::zero(d)) - vol).abs() < 1e-13 * vol);
        }
    }

    #[test]
    fn surface_moment_symmetry_cross_check() {
        // ∫θ₁² = area/d
        for d in 2..=5 {
            let mut e = vec![0; d];
            e[0] = 2;
            let v = surface_moment(d, &MultiIndex::new(e));
            assert!((v - sphere_area(d) / d as f64).abs() < 1e-13);
        }
    }

    #[test]
    fn rule_examples() {
        let r = build_rule(2, 8).unwrap();
        let total = integrate_surface(&r, |_| 1.0).unwrap().value;
        assert!((total - 2.0 * PI).abs() < 1e-12);
        let r = build_rule(3, 8).unwrap();
        let v = integrate_surface(&r, |x| x[0] * x[0]).unwrap().value;
        assert!((v - 4.0 * PI / 3.0).abs() < 1e-10);
        let r = build_rule(1, 10).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.node(0), &[-1.0]);
        assert_eq!(r.node(1), &[1.0]);
    }

    #[test]
    fn deterministic_rules_are_exact() {
        for d in 1..=4 {
            for e in [2usize, 5, 8, 12] {
                let rule = build_rule(d, e).unwrap();
                for node in rule.nodes() {
                    let n: f64 = node.iter().map(|x| x * x).sum::<f64>().sqrt();
                    assert!((n - 1.0).abs() < 1e-14);
                }
                let area = sphere_area(d);
                assert!((pairwise_sum(rule.weights()) - area).abs() < 1e-12 * area);
                for alpha in monomials_up_to(d, e as u32) {
                    let exact = surface_moment(d, &alpha);
                    let got = integrate_surface(&rule, |x| alpha.monomial(x)).unwrap().value;
                    let scale = exact.abs().max(1e-3);
                    assert!((got - exact).abs() <= 1e-10 * scale, "d={d} e={e} α={alpha}: {got} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn gegenbauer_rule_integrates_weight() {
        // ∫(1-t²)^{1/2} t² dt = π/8
        let (t, w) = gauss_gegenbauer(6, 0.5);
        let v: f64 = t.iter().zip(&w).map(|(t, w)| w * t * t).sum();
        assert!((v - PI / 8.0).abs() < 1e-14);
        let (_, w) = gauss_gegenbauer(5, 0.0);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn monte_carlo_rule_reports_error() {
        let rule = build_rule(5, 8).unwrap();
        assert!(rule.is_statistical());
        assert_eq!(rule.exactness(), 0);
        assert_eq!(rule.len(), 256);
        let alpha = mi(&[2, 0, 0, 0, 0]);
        let r = integrate_surface(&rule, |x| alpha.monomial(x)).unwrap();
        let exact = surface_moment(5, &alpha);
        let se = r.std_error.unwrap();
        assert!(se > 0.0);
        assert!((r.value - exact).abs() < 5.0 * se);
    }

    #[test]
    fn circle_convergence_is_spectral() {
        let f = |x: &[f64]| (1.5 + x[0] * x[1] + 0.3 * x[0]).powf(-2.5);
        let a = integrate_surface(&build_rule(2, 128).unwrap(), f).unwrap().value;
        let b = integrate_surface(&build_rule(2, 256).unwrap(), f).unwrap().value;
        assert!((a - b).abs() < 1e-10 * b.abs());
    }

    #[test]
    fn adaptive_integration_converges() {
        let q = SphereQuadrature::new(3, 8).unwrap();
        let out = q
            .integrate(2, |x| vec![(2.0 + x[0] * x[0] - x[1] * x[2]).powf(-1.5), x[2] * x[2]])
            .unwrap();
        assert!(out.rel_change <= CONVERGENCE_TOL);
        assert!((out.values[1] - 4.0 * PI / 3.0).abs() < 1e-12);
        let q = SphereQuadrature::new(2, 4).unwrap().with_max_exactness(8);
        let err = q.integrate(1, |x| vec![(1.0001 - x[0]).powf(-0.5)]).unwrap_err();
        assert!(matches!(err, Error::QuadratureNonConvergence { .. }));
    }

    #[test]
    fn non_finite_values_are_reported() {
        let rule = build_rule(2, 4).unwrap();
        let err = integrate_surface(&rule, |x| 1.0 / (x[1])).unwrap_err();
        assert!(matches!(err, Error::NonFinite { node: 0 }));
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let rule = build_rule(3, 40).unwrap();
        let basis = enumerate_basis(3, 4);
        let f = |x: &[f64]| basis.eval(x).iter().map(|v| v * (1.3 + x[0]).ln()).collect::<Vec<_>>();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| integrate_surface_many(&rule, basis.size(), f)).unwrap();
        let b = four.install(|| integrate_surface_many(&rule, basis.size(), f)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.value.to_bits(), y.value.to_bits());
        }
    }

    #[test]
    fn circle_arcs_handle_kinks() {
        // ∫|cos θ| dθ = 4, exact once split at ±π/2.
        let v = integrate_circle_arcs(&[0.5 * PI, 1.5 * PI], 1, 16, |t| t.cos().abs());
        assert!((v - 4.0).abs() < 1e-14);
        let v = integrate_circle_arcs(&[], 4, 16, |t| t.sin().powi(2));
        assert!((v - PI).abs() < 1e-13);
    }
}
