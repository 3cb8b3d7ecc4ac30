//! Fixed-point identities of the Boltzmann measure.
//!
//! With c_{2n} = 1 + d/(2n), the coefficient vector 𝐠 of g in the monomial
//! basis satisfies HM_{2n}(μ)·𝐠 = c_{2n}·μ^{(2n)}. In a μ-orthonormal basis
//! P = L⁻¹v_{2n} (HM = L·Lᵀ) this reads g̃ = c_{2n}·μ̃ with g̃ = Lᵀ𝐠 and
//! μ̃ = L⁻¹μ^{(2n)}, and the partition function follows from either side:
//!
//! ```text
//! Z(g) = 4n²/(d(d+2n)) · ‖g̃‖² = (d+2n)/d · ‖μ̃‖²
//! ```
//!
//! The matrix is factored once; recovery, tilde coordinates and the
//! Christoffel-Darboux kernel all reuse the factor.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boltzmann::{mu_moment_data, partition_function_direct, MomentMatrix, MomentVector};
use crate::error::{Error, Result};
use crate::polyform::{GradedBasis, HomogeneousForm};
use crate::spherequad::SphereQuadrature;

/// Condition estimate above which recovery is refused.
pub const MAX_CONDITION: f64 = 1e12;

/// c_{2n} = 1 + d/(2n).
pub fn c2n(d: usize, n: u32) -> f64 {
    1.0 + d as f64 / (2.0 * n as f64)
}

/// Cholesky factor of a moment matrix, defining the μ-orthonormal forms.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    pub factor: DMatrix<f64>,
    pub basis: GradedBasis,
    /// Ridge added to the diagonal before factoring; 0 unless the plain
    /// factorization failed.
    pub ridge: f64,
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl OrthonormalBasis {
    pub fn size(&self) -> usize {
        self.basis.size()
    }

    /// HM⁻¹·rhs by two triangular solves.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.chol.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec()
    }

    /// L⁻¹·v.
    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        let mut out = DVector::from_column_slice(v);
        self.factor
            .solve_lower_triangular_mut(&mut out);
        out.as_slice().to_vec()
    }

    /// The orthonormal forms P(x) = L⁻¹ v_{2n}(x).
    pub fn eval_forms(&self, x: &[f64]) -> Vec<f64> {
        self.forward(&self.basis.eval(x))
    }

    /// L·Lᵀ.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }
}

/// Cholesky factorization of HM; retries once with ridge 1e-12·trace.
pub fn orthonormalize(hm: &MomentMatrix) -> Result<OrthonormalBasis> {
    let trace = hm.trace();
    let mut ridge = 0.0;
    for attempt in 0..2 {
        if attempt == 1 {
            ridge = 1e-12 * trace.abs();
        }
        let mut m = hm.entries.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(OrthonormalBasis {
                factor: chol.l(),
                basis: hm.row_basis.clone(),
                ridge,
                chol,
            });
        }
    }
    Err(Error::Factorization { ridge })
}

/// λ_max/λ_min of a symmetric matrix (infinite when not positive definite).
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn check_conditioning(hm: &MomentMatrix) -> Result<()> {
    let cond = condition_estimate(&hm.entries);
    if cond > MAX_CONDITION {
        Err(Error::IllConditioned { cond })
    } else {
        Ok(())
    }
}

fn check_bases(hm: &MomentMatrix, mu: &MomentVector) -> Result<()> {
    if hm.row_basis != mu.basis {
        return Err(Error::InvalidInput(format!(
            "moment vector has degree {} but the matrix rows have degree {}",
            mu.basis.degree(),
            hm.row_basis.degree()
        )));
    }
    Ok(())
}

/// 𝐠 = c_{2n}·HM⁻¹μ^{(2n)}, the action reconstructed from its own Boltzmann moments.
pub fn recover_form(hm: &MomentMatrix, mu: &MomentVector, d: usize, n: u32) -> Result<HomogeneousForm> {
    check_bases(hm, mu)?;
    check_conditioning(hm)?;
    let b = orthonormalize(hm)?;
    Ok(recover_with(&b, mu, d, n))
}

fn recover_with(b: &OrthonormalBasis, mu: &MomentVector, d: usize, n: u32) -> HomogeneousForm {
    let c = c2n(d, n);
    let coeffs: Vec<f64> = b.solve(&mu.values).into_iter().map(|v| c * v).collect();
    HomogeneousForm::from_coefficients(&b.basis, &coeffs)
}

/// ‖HM·𝐠 − c_{2n}μ‖ / ‖c_{2n}μ‖.
pub fn fixed_point_residual(g: &HomogeneousForm, hm: &MomentMatrix, mu: &MomentVector) -> f64 {
    let n = g.degree() / 2;
    let c = c2n(g.dim(), n);
    let gv = DVector::from_vec(g.coefficient_vector(&hm.row_basis));
    let target = DVector::from_column_slice(&mu.values) * c;
    (&hm.entries * gv - &target).norm() / target.norm()
}

/// g̃ = Lᵀ𝐠.
pub fn tilde_coeffs(b: &OrthonormalBasis, g: &HomogeneousForm) -> Vec<f64> {
    let gv = DVector::from_vec(g.coefficient_vector(&b.basis));
    (b.factor.transpose() * gv).as_slice().to_vec()
}

/// μ̃ = L⁻¹μ^{(2n)}.
pub fn tilde_moments(b: &OrthonormalBasis, mu: &MomentVector) -> Vec<f64> {
    b.forward(&mu.values)
}

/// Z from the coefficient side, 4n²·𝐠ᵀHM𝐠/(d(d+2n)), and from the moment side,
/// (d+2n)/d·μᵀHM⁻¹μ.
pub fn partition_from_identities(
    g: &HomogeneousForm,
    hm: &MomentMatrix,
    mu: &MomentVector,
    d: usize,
    n: u32,
) -> Result<(f64, f64)> {
    check_bases(hm, mu)?;
    let b = orthonormalize(hm)?;
    Ok(partition_with(&b, g, mu, d, n))
}

fn partition_with(b: &OrthonormalBasis, g: &HomogeneousForm, mu: &MomentVector, d: usize, n: u32) -> (f64, f64) {
    let (d, n) = (d as f64, n as f64);
    let gt = tilde_coeffs(b, g);
    let mt = tilde_moments(b, mu);
    let z_coeffs = 4.0 * n * n * norm2(&gt) / (d * (d + 2.0 * n));
    let z_moments = (d + 2.0 * n) / d * norm2(&mt);
    (z_coeffs, z_moments)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Christoffel-Darboux kernel K(x,y) = v(x)ᵀ HM⁻¹ v(y) = ⟨P(x), P(y)⟩.
pub fn cd_kernel(b: &OrthonormalBasis, x: &[f64], y: &[f64]) -> f64 {
    let px = b.eval_forms(x);
    let py = b.eval_forms(y);
    px.iter().zip(&py).map(|(a, c)| a * c).sum()
}

/// |g(x) − c_{2n}·v(x)ᵀHM⁻¹μ| / max(1, |g(x)|).
pub fn cd_identity_residual(g: &HomogeneousForm, b: &OrthonormalBasis, mu: &MomentVector, x: &[f64]) -> f64 {
    let c = c2n(g.dim(), g.degree() / 2);
    let px = b.eval_forms(x);
    let mt = tilde_moments(b, mu);
    let rhs = c * px.iter().zip(&mt).map(|(a, m)| a * m).sum::<f64>();
    let gx = g.evaluate(x);
    (gx - rhs).abs() / gx.abs().max(1.0)
}

/// Worst [`cd_identity_residual`] over `points` seeded uniform points in [−1, 1]^d.
pub fn cd_identity_check(g: &HomogeneousForm, quad: &SphereQuadrature, points: usize, seed: u64) -> Result<f64> {
    let (hm, mu) = mu_moment_data(g, quad)?;
    let b = orthonormalize(&hm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x: Vec<f64> = (0..g.dim()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        worst = worst.max(cd_identity_residual(g, &b, &mu, &x));
    }
    Ok(worst)
}

/// Everything the fixed-point identities say about one action.
#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub g_recovered: HomogeneousForm,
    /// ‖HM𝐠 − c_{2n}μ‖/‖c_{2n}μ‖.
    pub residual_canonical: f64,
    /// max_α |g̃_α − c_{2n}μ̃_α| / max(|g̃_α|, 1e-6·‖g̃‖∞).
    pub residual_tilde: f64,
    /// Largest coefficient error of the recovered form, relative to the
    /// coefficient (or to the largest coefficient for vanishing ones).
    pub recovery_error: f64,
    pub z_direct: f64,
    pub z_from_coeffs: f64,
    pub z_from_moments: f64,
    pub c2n: f64,
    pub ridge: f64,
}

impl FixedPointReport {
    /// Largest pairwise relative deviation between the three Z values.
    pub fn z_spread(&self) -> f64 {
        let zs = [self.z_direct, self.z_from_coeffs, self.z_from_moments];
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                worst = worst.max(((zs[i] - zs[j]) / zs[j]).abs());
            }
        }
        worst
    }
}

/// Max coefficient error of `found` against `expected`.
pub fn coefficient_error(expected: &HomogeneousForm, found: &HomogeneousForm, basis: &GradedBasis) -> f64 {
    let e = expected.coefficient_vector(basis);
    let f = found.coefficient_vector(basis);
    let scale = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    e.iter()
        .zip(&f)
        .map(|(a, b)| {
            let denom = if a.abs() > 1e-3 * scale { a.abs() } else { scale };
            (a - b).abs() / denom
        })
        .fold(0.0, f64::max)
}

/// Computes the moments of g by quadrature and evaluates every identity.
pub fn fixed_point_report(g: &HomogeneousForm, quad: &SphereQuadrature) -> Result<FixedPointReport> {
    let n = g.half_degree()?;
    let d = g.dim();
    let (hm, mu) = mu_moment_data(g, quad)?;
    let z_direct = partition_function_direct(g, quad)?;
    check_conditioning(&hm)?;
    let b = orthonormalize(&hm)?;
    let g_recovered = recover_with(&b, &mu, d, n);
    let c = c2n(d, n);
    let gt = tilde_coeffs(&b, g);
    let mt = tilde_moments(&b, &mu);
    let gscale = gt.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let residual_tilde = gt
        .iter()
        .zip(&mt)
        .map(|(a, m)| (a - c * m).abs() / a.abs().max(1e-6 * gscale))
        .fold(0.0, f64::max);
    let (z_from_coeffs, z_from_moments) = partition_with(&b, g, &mu, d, n);
    Ok(FixedPointReport {
        recovery_error: coefficient_error(g, &g_recovered, &hm.row_basis),
        g_recovered,
        residual_canonical: fixed_point_residual(g, &hm, &mu),
        residual_tilde,
        z_direct,
        z_from_coeffs,
        z_from_moments,
        c2n: c,
        ridge: b.ridge,
    })
}
