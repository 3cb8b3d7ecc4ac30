//! Variational characterizations of the action and the Ward identities.
//!
//! - best L²(μ) approximation of the constant 1 by degree-2n forms is g/c_{2n};
//! - among forms with the same L¹(μ) norm, g has the smallest L²(μ) norm;
//! - q* = c*·exp(-g), c* = 1/Z, solves the max-entropy problem with moment
//!   constraints c*·μ^{(2n)}, and λ* = -𝐠 solves its dual;
//! - ∫ x^α g dμ = (d+|α|)/(2n) · ∫ x^α dμ for every α.
//!
//! The optimization problems are never solved numerically; their known
//! solutions are verified through margins and duality gaps.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::boltzmann::{
    mu_form_integral, mu_moment_data, mu_moments, partition_function_direct, MomentMatrix, MomentVector,
};
use crate::error::{Error, Result};
use crate::fixedpoint::{c2n, orthonormalize};
use crate::polyform::{
    enumerate_basis, min_on_sphere, monomials_up_to, HomogeneousForm, MultiIndex, DEFAULT_COARSE_SAMPLES,
    DEFAULT_REFINE_ITERS, POSITIVITY_TOL,
};
use crate::special::gamma;
use crate::spherequad::{integrate_circle_arcs, SphereQuadrature};

/// Tolerance used when integrating |q| on spheres of dimension ≥ 3, where the
/// kinks of |q| limit the attainable accuracy.
pub const ABS_QUADRATURE_TOL: f64 = 1e-7;

const ROOT_SAMPLES: usize = 4096;
const ARC_ORDER: usize = 24;
const MAX_ARC_PIECES: usize = 256;

/// ∫ |q| dμ by the polar route. On the circle the integrand is split at the
/// zeros of q and each arc is integrated with Gauss-Legendre, which keeps full
/// accuracy despite the kinks of |q|.
pub fn abs_form_integral(g: &HomogeneousForm, q: &HomogeneousForm, quad: &SphereQuadrature) -> Result<f64> {
    if g.dim() != 2 {
        let relaxed = quad.clone().with_tolerance(ABS_QUADRATURE_TOL.max(quad.tolerance()));
        return mu_form_integral(g, q, true, &relaxed);
    }
    g.half_degree()?;
    let p = (2.0 + q.degree() as f64) / g.degree() as f64;
    let on_circle = |f: &HomogeneousForm, t: f64| f.evaluate(&[t.cos(), t.sin()]);
    let step = 2.0 * std::f64::consts::PI / ROOT_SAMPLES as f64;
    let mut roots = Vec::new();
    for i in 0..ROOT_SAMPLES {
        let (mut a, mut b) = (i as f64 * step, (i + 1) as f64 * step);
        let (mut fa, fb) = (on_circle(q, a), on_circle(q, b));
        if fa == 0.0 {
            roots.push(a);
            continue;
        }
        if fa * fb > 0.0 || fb == 0.0 {
            continue;
        }
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            let fm = on_circle(q, m);
            if fa * fm <= 0.0 {
                b = m;
            } else {
                a = m;
                fa = fm;
            }
        }
        roots.push(0.5 * (a + b));
    }
    let integrand = |t: f64| on_circle(q, t).abs() * on_circle(g, t).powf(-p);
    let mut pieces = 1;
    let mut coarse = integrate_circle_arcs(&roots, pieces, ARC_ORDER, integrand);
    let fine = loop {
        pieces *= 2;
        let fine = integrate_circle_arcs(&roots, pieces, ARC_ORDER, integrand);
        if !fine.is_finite() {
            return Err(Error::NonFinite { node: 0 });
        }
        let rel_change = (coarse - fine).abs() / fine.abs().max(1e-300);
        if rel_change <= quad.tolerance() {
            break fine;
        }
        if pieces >= MAX_ARC_PIECES {
            return Err(Error::QuadratureNonConvergence { exactness: pieces * ARC_ORDER, rel_change });
        }
        coarse = fine;
    };
    Ok(gamma(p) / g.degree() as f64 * fine)
}

/// q* = HM⁻¹μ^{(2n)}, the best L²(μ) approximation of 1 by a degree-2n form.
pub fn best_approx_of_one(hm: &MomentMatrix, mu: &MomentVector) -> Result<HomogeneousForm> {
    let b = orthonormalize(hm)?;
    Ok(HomogeneousForm::from_coefficients(&b.basis, &b.solve(&mu.values)))
}

/// Outcome of the L²-minimality check.
#[derive(Debug, Clone)]
pub struct NormMinimality {
    /// min over trials of ‖q‖₂² − ‖g‖₂² after rescaling q to ‖q‖₁ = ‖g‖₁.
    pub worst_margin: f64,
    /// ‖g‖₂² = ∫ g² dμ.
    pub g_norm2_sq: f64,
    pub trials: usize,
}

impl NormMinimality {
    /// worst_margin / ‖g‖₂².
    pub fn relative_margin(&self) -> f64 {
        self.worst_margin / self.g_norm2_sq
    }
}

struct NormContext<'a> {
    g: &'a HomogeneousForm,
    hm: MomentMatrix,
    g_l1: f64,
    g_l2sq: f64,
    quad: SphereQuadrature,
}

impl<'a> NormContext<'a> {
    fn new(g: &'a HomogeneousForm, quad: &SphereQuadrature) -> Result<Self> {
        let (hm, mu) = mu_moment_data(g, quad)?;
        let gv = g.coefficient_vector(&hm.row_basis);
        let g_l1 = dot(&gv, &mu.values);
        let g_l2sq = quadratic(&hm, &gv);
        Ok(Self { g, hm, g_l1, g_l2sq, quad: quad.clone() })
    }

    fn margin(&self, q: &HomogeneousForm) -> Result<f64> {
        let q_l1 = abs_form_integral(self.g, q, &self.quad)?;
        let s = self.g_l1 / q_l1;
        let qv = q.coefficient_vector(&self.hm.row_basis);
        Ok(s * s * quadratic(&self.hm, &qv) - self.g_l2sq)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn quadratic(hm: &MomentMatrix, v: &[f64]) -> f64 {
    let v = DVector::from_column_slice(v);
    v.dot(&(&hm.entries * &v))
}

/// ‖q‖₂² − ‖g‖₂² after rescaling q so that ‖q‖₁ = ‖g‖₁ (norms in L^p(μ)).
pub fn norm_margin(g: &HomogeneousForm, q: &HomogeneousForm, quad: &SphereQuadrature) -> Result<f64> {
    if q.dim() != g.dim() || q.degree() != g.degree() {
        return Err(Error::InvalidInput("q must have the dimension and degree of g".into()));
    }
    NormContext::new(g, quad)?.margin(q)
}

/// Draws `trials` random degree-2n forms (standard normal coefficients, one
/// ChaCha stream per trial) and returns the worst L²-margin against g.
pub fn norm_minimality_check(
    g: &HomogeneousForm,
    quad: &SphereQuadrature,
    trials: usize,
    seed: u64,
) -> Result<NormMinimality> {
    let ctx = NormContext::new(g, quad)?;
    let basis = ctx.hm.row_basis.clone();
    let margins: Vec<Result<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let coeffs: Vec<f64> = (0..basis.size()).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            ctx.margin(&HomogeneousForm::from_coefficients(&basis, &coeffs))
        })
        .collect();
    let mut worst = f64::INFINITY;
    for m in margins {
        worst = worst.min(m?);
    }
    Ok(NormMinimality { worst_margin: worst, g_norm2_sq: ctx.g_l2sq, trials })
}

/// Ward residuals |∫x^α g dμ − (d+|α|)/(2n)·∫x^α dμ| / |∫x^α dμ| for every α with
/// |α| ≤ max_deg and |α| even.
///
/// Odd total degrees are skipped: both sides vanish identically for an even
/// form. Entries that vanish by symmetry are measured against 1e-6 times the
/// largest moment of the same degree.
pub fn ward_residuals(
    g: &HomogeneousForm,
    quad: &SphereQuadrature,
    max_deg: u32,
) -> Result<BTreeMap<MultiIndex, f64>> {
    let two_n = g.degree();
    g.half_degree()?;
    let d = g.dim();
    let all = monomials_up_to(d, max_deg + two_n);
    let index: BTreeMap<MultiIndex, usize> = all.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
    let moments = mu_moments(g, &all, quad)?;
    let mut out = BTreeMap::new();
    for k in (0..=max_deg).step_by(2) {
        let basis = enumerate_basis(d, k);
        let scale = basis
            .indices()
            .iter()
            .map(|a| moments[index[a]].abs())
            .fold(0.0, f64::max);
        for alpha in basis.indices() {
            let lhs: f64 = g.terms().map(|(b, c)| c * moments[index[&alpha.add(b)]]).sum();
            let m = moments[index[alpha]];
            let rhs = (d as f64 + k as f64) / two_n as f64 * m;
            let denom = m.abs().max(1e-6 * scale) + 1e-300;
            out.insert(alpha.clone(), (lhs - rhs).abs() / denom);
        }
    }
    Ok(out)
}

/// ⟨g⟩/Z = ∫ g e^{-g} / ∫ e^{-g}; equals d/(2n).
pub fn first_ward_ratio(g: &HomogeneousForm, quad: &SphereQuadrature) -> Result<f64> {
    let z = partition_function_direct(g, quad)?;
    Ok(mu_form_integral(g, g, false, quad)? / z)
}

/// Ψ(λ) = ln ∫ exp(⟨λ, v_{2n}(x)⟩) dx, +∞ when −λ is not positive on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPartition {
    pub value: f64,
    pub divergent: bool,
}

pub fn log_partition(lambda: &HomogeneousForm, quad: &SphereQuadrature) -> Result<LogPartition> {
    let action = lambda.scaled(-1.0);
    if action.half_degree().is_err()
        || min_on_sphere(&action, DEFAULT_COARSE_SAMPLES, DEFAULT_REFINE_ITERS) <= POSITIVITY_TOL
    {
        return Ok(LogPartition { value: f64::INFINITY, divergent: true });
    }
    Ok(LogPartition { value: partition_function_direct(&action, quad)?.ln(), divergent: false })
}

/// ⟨λ, y⟩ − Ψ(λ).
pub fn dual_objective(lambda: &HomogeneousForm, y: &MomentVector, quad: &SphereQuadrature) -> Result<f64> {
    let psi = log_partition(lambda, quad)?;
    if psi.divergent {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(dot(&lambda.coefficient_vector(&y.basis), &y.values) - psi.value)
}

/// Primal and dual values of the max-entropy problem at its known optimum.
#[derive(Debug, Clone)]
pub struct EntropyReport {
    pub z: f64,
    /// 1/Z.
    pub c_star: f64,
    /// ∫ q* ln q* = ln c* − c*·∫ g e^{-g}, the integral by quadrature.
    pub entropy_primal: f64,
    /// ln c* − d/(2n).
    pub entropy_closed: f64,
    /// ln c* − c_{2n}, the value obtained with c_{2n} in place of d/(2n).
    pub entropy_printed: f64,
    /// ⟨−𝐠, c*μ^{(2n)}⟩ − Ψ(−𝐠).
    pub dual_value: f64,
    /// |entropy_primal − dual_value|.
    pub gap: f64,
}

pub fn entropy_report(g: &HomogeneousForm, quad: &SphereQuadrature) -> Result<EntropyReport> {
    let n = g.half_degree()?;
    let d = g.dim();
    let z = partition_function_direct(g, quad)?;
    let c_star = 1.0 / z;
    let g_mean = mu_form_integral(g, g, false, quad)?;
    let entropy_primal = c_star.ln() - c_star * g_mean;
    let entropy_closed = c_star.ln() - d as f64 / (2.0 * n as f64);
    let entropy_printed = c_star.ln() - c2n(d, n);

    let (_, mu) = mu_moment_data(g, quad)?;
    let target = MomentVector {
        basis: mu.basis.clone(),
        values: mu.values.iter().map(|v| c_star * v).collect(),
        provenance: format!("c*·{}", mu.provenance),
    };
    let dual_value = dual_objective(&g.scaled(-1.0), &target, quad)?;
    Ok(EntropyReport {
        z,
        c_star,
        entropy_primal,
        entropy_closed,
        entropy_printed,
        dual_value,
        gap: (entropy_primal - dual_value).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boltzmann::{mu_moment_matrix, mu_moment_vector};
    use crate::fixedpoint::recover_form;
    use crate::polyform::{parse_form, sos_family};
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn q(d: usize) -> SphereQuadrature {
        SphereQuadrature::new(d, 32).unwrap()
    }

    #[test]
    fn best_approx_examples() {
        let g = parse_form("x1^2", 1).unwrap();
        let hm = mu_moment_matrix(&g, &q(1)).unwrap();
        let mu = mu_moment_vector(&g, 2, &q(1)).unwrap();
        let qs = best_approx_of_one(&hm, &mu).unwrap();
        assert!((qs.coefficient(&MultiIndex::new(vec![2])) - 2.0 / 3.0).abs() < 1e-14);

        let g = parse_form("x1^4", 1).unwrap();
        let hm = mu_moment_matrix(&g, &q(1)).unwrap();
        let mu = mu_moment_vector(&g, 4, &q(1)).unwrap();
        let qs = best_approx_of_one(&hm, &mu).unwrap();
        assert!((qs.coefficient(&MultiIndex::new(vec![4])) - 0.8).abs() < 1e-14);

        let basis = enumerate_basis(2, 2);
        let id = MomentMatrix::new(basis.clone(), DMatrix::identity(3, 3), "id");
        let zero = MomentVector { basis, values: vec![0.0; 3], provenance: "0".into() };
        let qs = best_approx_of_one(&id, &zero).unwrap();
        assert!(qs.terms().all(|(_, c)| c == 0.0));
    }

    #[test]
    fn best_approx_equals_recovered_over_c2n() {
        let g = parse_form("x1^4 + x2^4 + 0.5*x1^2*x2^2", 2).unwrap();
        let (hm, mu) = mu_moment_data(&g, &q(2)).unwrap();
        let qs = best_approx_of_one(&hm, &mu).unwrap();
        let rec = recover_form(&hm, &mu, 2, 2).unwrap();
        for (a, c) in rec.terms() {
            assert!((qs.coefficient(a) - c / 1.5).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }

    #[test]
    fn margin_equality_cases() {
        let g = parse_form("x1^4 + x2^4", 2).unwrap();
        let m = norm_margin(&g, &g, &q(2)).unwrap();
        let ctx = NormContext::new(&g, &q(2)).unwrap();
        assert!(m.abs() <= 1e-9 * ctx.g_l2sq, "{m}");
        let m = norm_margin(&g, &g.scaled(-1.0), &q(2)).unwrap();
        assert!(m.abs() <= 1e-9 * ctx.g_l2sq, "{m}");
        let m = norm_margin(&g, &g.scaled(7.0), &q(2)).unwrap();
        assert!(m.abs() <= 1e-9 * ctx.g_l2sq, "{m}");
    }

    #[test]
    fn minimality_small_run() {
        let g = parse_form("x1^4 + x2^4", 2).unwrap();
        let r = norm_minimality_check(&g, &q(2), 16, 3).unwrap();
        assert_eq!(r.trials, 16);
        assert!(r.relative_margin() >= -1e-7);
        let again = norm_minimality_check(&g, &q(2), 16, 3).unwrap();
        assert_eq!(r.worst_margin.to_bits(), again.worst_margin.to_bits());
    }

    #[test]
    fn ward_examples() {
        let g = parse_form("x1^4", 1).unwrap();
        assert!((first_ward_ratio(&g, &q(1)).unwrap() - 0.25).abs() < 1e-14);
        let g = parse_form("x1^2 + x2^2", 2).unwrap();
        assert!((first_ward_ratio(&g, &q(2)).unwrap() - 1.0).abs() < 1e-12);
        let g = parse_form("x1^4 + x2^4", 2).unwrap();
        let res = ward_residuals(&g, &q(2), 4).unwrap();
        assert!(res[&MultiIndex::new(vec![2, 0])] <= 1e-8);
        assert!(res.values().all(|&r| r <= 1e-8));
        assert!(res.keys().all(|a| a.degree() % 2 == 0));
        assert_eq!(res.len(), 1 + 3 + 5);
    }

    #[test]
    fn ward_on_family_3d() {
        for g in sos_family(3, 1, 3, 5).iter().chain(sos_family(3, 2, 2, 6).iter()) {
            let res = ward_residuals(g, &q(3), g.degree()).unwrap();
            let worst = res.values().fold(0.0f64, |m, &r| m.max(r));
            assert!(worst <= 1e-8, "{g}: {worst}");
        }
    }

    #[test]
    fn log_partition_examples() {
        let lam = parse_form("-x1^2 - x2^2", 2).unwrap();
        let p = log_partition(&lam, &q(2)).unwrap();
        assert!(!p.divergent && (p.value - PI.ln()).abs() < 1e-12);
        let p = log_partition(&parse_form("x1^4", 1).unwrap(), &q(1)).unwrap();
        assert!(p.divergent && p.value == f64::INFINITY);
        let p = log_partition(&parse_form("-x1^4", 1).unwrap(), &q(1)).unwrap();
        assert!((p.value - (2.0 * gamma(1.25)).ln()).abs() < 1e-14);
        assert!((p.value - 0.594875).abs() < 1e-6);
    }

    #[test]
    fn entropy_examples() {
        let g = parse_form("x1^2", 1).unwrap();
        let r = entropy_report(&g, &q(1)).unwrap();
        let expected = -PI.sqrt().ln() - 0.5;
        assert!((r.entropy_primal - expected).abs() < 1e-12);
        assert!((-r.entropy_primal - 0.5 * (PI * std::f64::consts::E).ln()).abs() < 1e-12);
        assert!((r.entropy_closed - expected).abs() < 1e-12);
        assert!((r.entropy_printed - (-PI.sqrt().ln() - 1.5)).abs() < 1e-12);
        assert!(r.gap <= 1e-8);
        assert!((r.c_star * r.z - 1.0).abs() < 1e-12);

        let g = parse_form("x1^2 + x2^2", 2).unwrap();
        let r = entropy_report(&g, &q(2)).unwrap();
        assert!((r.entropy_closed - (-PI.ln() - 1.0)).abs() < 1e-12);
        assert!((r.entropy_primal - r.entropy_closed).abs() < 1e-8);
        assert!(r.gap <= 1e-8);
    }

    #[test]
    fn weak_duality_for_random_multipliers() {
        let g = parse_form("x1^4 + x2^4 + 0.5*x1^2*x2^2", 2).unwrap();
        let r = entropy_report(&g, &q(2)).unwrap();
        let (_, mu) = mu_moment_data(&g, &q(2)).unwrap();
        let target = MomentVector { values: mu.values.iter().map(|v| r.c_star * v).collect(), ..mu };
        for other in sos_family(2, 2, 20, 77) {
            let value = dual_objective(&other.scaled(-1.0), &target, &q(2)).unwrap();
            assert!(r.entropy_primal >= value - 1e-8, "{value} > {}", r.entropy_primal);
        }
    }
}
