//! Moments of the Boltzmann measure μ = exp(-g)dx and of Lebesgue measure on
//! the sublevel set G = {g ≤ 1}.
//!
//! Everything goes through the polar representation. For a form g of degree
//! 2n, positive on the sphere, and a monomial of degree k,
//!
//! ```text
//! ∫_G x^α dx      = 1/(d+k) · ∫_{S^{d-1}} θ^α g(θ)^{-(d+k)/(2n)} dσ(θ)
//! ∫ x^α e^{-g} dx = Γ(1 + (d+k)/(2n)) · ∫_G x^α dx
//! ```
//!
//! so all integrals are smooth surface integrals over a compact domain.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::polyform::{
    check_positive, enumerate_basis, monomial_from_table, power_table, GradedBasis, HomogeneousForm,
    MultiIndex,
};
use crate::special::gamma;
use crate::spherequad::SphereQuadrature;

/// A vector of moments indexed by a graded basis.
#[derive(Debug, Clone)]
pub struct MomentVector {
    pub basis: GradedBasis,
    pub values: Vec<f64>,
    pub provenance: String,
}

/// A symmetric matrix of moments ∫ x^{α+β}, rows and columns indexed by a graded basis.
#[derive(Debug, Clone)]
pub struct MomentMatrix {
    pub row_basis: GradedBasis,
    pub entries: DMatrix<f64>,
    pub provenance: String,
}

impl MomentMatrix {
    /// Symmetrizes `entries` on construction.
    pub fn new(row_basis: GradedBasis, entries: DMatrix<f64>, provenance: impl Into<String>) -> Self {
        assert_eq!(entries.nrows(), row_basis.size());
        assert_eq!(entries.ncols(), row_basis.size());
        let sym = (&entries + entries.transpose()) * 0.5;
        Self { row_basis, entries: sym, provenance: provenance.into() }
    }

    pub fn size(&self) -> usize {
        self.row_basis.size()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.entries.clone()).eigenvalues.min()
    }

    /// Fails when the smallest eigenvalue is below -1e-10·trace.
    pub fn check_psd(&self) -> Result<()> {
        let min_eig = self.min_eigenvalue();
        let trace = self.trace();
        if min_eig < -1e-10 * trace.abs() {
            Err(Error::PsdViolation { min_eig, trace })
        } else {
            Ok(())
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            row_basis: self.row_basis.clone(),
            entries: &self.entries * s,
            provenance: self.provenance.clone(),
        }
    }
}

/// Flat table mapping (α, β) in the degree-m basis to the index of α+β in the
/// degree-2m basis.
#[derive(Debug, Clone)]
pub struct ProductTable {
    pub basis: GradedBasis,
    pub sum_basis: GradedBasis,
    table: Vec<usize>,
}

impl ProductTable {
    pub fn new(d: usize, m: u32) -> Self {
        let basis = enumerate_basis(d, m);
        let sum_basis = enumerate_basis(d, 2 * m);
        let s = basis.size();
        let mut table = Vec::with_capacity(s * s);
        for a in basis.indices() {
            for b in basis.indices() {
                table.push(sum_basis.index_of(&a.add(b)).expect("sum of degree-m indices"));
            }
        }
        Self { basis, sum_basis, table }
    }

    pub fn get(&self, row: usize, col: usize) -> usize {
        self.table[row * self.basis.size() + col]
    }

    /// Fills the s×s matrix M[α,β] = values[index(α+β)].
    pub fn fill(&self, values: &[f64]) -> DMatrix<f64> {
        let s = self.basis.size();
        DMatrix::from_fn(s, s, |i, j| values[self.get(i, j)])
    }
}

fn half_degree_checked(g: &HomogeneousForm) -> Result<u32> {
    let n = g.half_degree()?;
    check_positive(g)?;
    Ok(n)
}

/// ∫_{S^{d-1}} θ^α g(θ)^{-(d+|α|)/(2n)} dσ for each α, without the positivity check.
fn polar_integrals(g: &HomogeneousForm, alphas: &[MultiIndex], quad: &SphereQuadrature) -> Result<(Vec<f64>, String)> {
    let d = g.dim();
    if quad.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: quad.dim() });
    }
    for a in alphas {
        if a.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: a.dim() });
        }
    }
    let two_n = g.degree() as f64;
    let max_deg = alphas.iter().map(|a| a.degree()).max().unwrap_or(0).max(g.degree());
    let powers: Vec<f64> = alphas.iter().map(|a| (d as f64 + a.degree() as f64) / two_n).collect();
    let out = quad.integrate(alphas.len(), |theta| {
        let table = power_table(theta, max_deg);
        let gv = g
            .terms()
            .map(|(a, c)| c * monomial_from_table(&table, a))
            .sum::<f64>();
        let lg = gv.ln();
        alphas
            .iter()
            .zip(&powers)
            .map(|(a, &p)| monomial_from_table(&table, a) * (-p * lg).exp())
            .collect()
    })?;
    Ok((out.values, out.label))
}

/// ∫_G x^α dx for a batch of multi-indices.
pub fn levelset_moments(g: &HomogeneousForm, alphas: &[MultiIndex], quad: &SphereQuadrature) -> Result<Vec<f64>> {
    half_degree_checked(g)?;
    let d = g.dim() as f64;
    let (surface, _) = polar_integrals(g, alphas, quad)?;
    Ok(surface
        .into_iter()
        .zip(alphas)
        .map(|(s, a)| s / (d + a.degree() as f64))
        .collect())
}

/// ∫_G x^α dx with G = {g ≤ 1}.
pub fn levelset_moment(g: &HomogeneousForm, alpha: &MultiIndex, quad: &SphereQuadrature) -> Result<f64> {
    Ok(levelset_moments(g, std::slice::from_ref(alpha), quad)?[0])
}

/// Γ(1 + (d+k)/(2n)), the factor linking μ-moments and G-moments of degree k.
pub fn transfer_factor(d: usize, k: u32, two_n: u32) -> f64 {
    gamma(1.0 + (d as f64 + k as f64) / two_n as f64)
}

/// ∫ x^α e^{-g} dx for a batch of multi-indices.
pub fn mu_moments(g: &HomogeneousForm, alphas: &[MultiIndex], quad: &SphereQuadrature) -> Result<Vec<f64>> {
    let lev = levelset_moments(g, alphas, quad)?;
    Ok(lev
        .into_iter()
        .zip(alphas)
        .map(|(v, a)| transfer_factor(g.dim(), a.degree(), g.degree()) * v)
        .collect())
}

pub fn mu_moment(g: &HomogeneousForm, alpha: &MultiIndex, quad: &SphereQuadrature) -> Result<f64> {
    Ok(mu_moments(g, std::slice::from_ref(alpha), quad)?[0])
}

/// All degree-m moments of μ.
pub fn mu_moment_vector(g: &HomogeneousForm, m: u32, quad: &SphereQuadrature) -> Result<MomentVector> {
    let basis = enumerate_basis(g.dim(), m);
    let values = mu_moments(g, basis.indices(), quad)?;
    Ok(MomentVector { provenance: format!("mu[{g}] deg {m}"), basis, values })
}

/// HM_{2n}(μ): entries ∫ x^{α+β} e^{-g} dx over the degree-2n basis. Checked for PSD.
pub fn mu_moment_matrix(g: &HomogeneousForm, quad: &SphereQuadrature) -> Result<MomentMatrix> {
    let table = ProductTable::new(g.dim(), g.degree());
    let values = mu_moments(g, table.sum_basis.indices(), quad)?;
    let m = MomentMatrix::new(table.basis.clone(), table.fill(&values), format!("HM(mu)[{g}]"));
    m.check_psd()?;
    Ok(m)
}

/// Both degree-2n moment vector and HM_{2n}(μ) from one batch of degree-2n and
/// degree-4n moments.
pub fn mu_moment_data(g: &HomogeneousForm, quad: &SphereQuadrature) -> Result<(MomentMatrix, MomentVector)> {
    let table = ProductTable::new(g.dim(), g.degree());
    let s2 = table.basis.size();
    let mut alphas = table.basis.indices().to_vec();
    alphas.extend_from_slice(table.sum_basis.indices());
    let values = mu_moments(g, &alphas, quad)?;
    let vec = MomentVector {
        basis: table.basis.clone(),
        values: values[..s2].to_vec(),
        provenance: format!("mu[{g}] deg {}", g.degree()),
    };
    let mat = MomentMatrix::new(table.basis.clone(), table.fill(&values[s2..]), format!("HM(mu)[{g}]"));
    mat.check_psd()?;
    Ok((mat, vec))
}

/// HM_{2n}(λ): entries ∫_G x^{α+β} dx over the degree-2n basis.
pub fn levelset_moment_matrix(g: &HomogeneousForm, quad: &SphereQuadrature) -> Result<MomentMatrix> {
    let table = ProductTable::new(g.dim(), g.degree());
    let values = levelset_moments(g, table.sum_basis.indices(), quad)?;
    let m = MomentMatrix::new(table.basis.clone(), table.fill(&values), format!("HM(lambda)[{g}]"));
    m.check_psd()?;
    Ok(m)
}

/// Z(g) = Γ(1 + d/(2n)) · vol(G).
pub fn partition_function_direct(g: &HomogeneousForm, quad: &SphereQuadrature) -> Result<f64> {
    let vol = levelset_moment(g, &MultiIndex::zero(g.dim()), quad)?;
    Ok(transfer_factor(g.dim(), 0, g.degree()) * vol)
}

/// ∫ h e^{-g} dx for a form h, through the surface integrand h(θ)·g(θ)^{-(d+deg h)/(2n)}.
///
/// With `absolute` the integrand is |h|; accuracy is then limited by the kinks
/// of |h| on the sphere.
pub fn mu_form_integral(
    g: &HomogeneousForm,
    h: &HomogeneousForm,
    absolute: bool,
    quad: &SphereQuadrature,
) -> Result<f64> {
    half_degree_checked(g)?;
    if h.dim() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), found: h.dim() });
    }
    let d = g.dim() as f64;
    let p = (d + h.degree() as f64) / g.degree() as f64;
    let out = quad.integrate(1, |theta| {
        let hv = h.evaluate(theta);
        let hv = if absolute { hv.abs() } else { hv };
        vec![hv * g.evaluate(theta).powf(-p)]
    })?;
    Ok(gamma(p) / g.degree() as f64 * out.values[0])
}

/// Relative Frobenius residual of HM_{2n}(λ)·Γ(1+(d+4n)/(2n)) = HM_{2n}(μ).
///
/// The λ side uses G-moments with the configured quadrature; the μ side uses
/// the radial Gamma integral Γ((d+k)/(2n))/(2n) on a rule of twice the
/// starting exactness, so the two sides share no arithmetic path.
pub fn lambda_mu_matrix_relation(g: &HomogeneousForm, quad: &SphereQuadrature) -> Result<f64> {
    let lambda = levelset_moment_matrix(g, quad)?;
    let table = ProductTable::new(g.dim(), g.degree());
    let quad2 = quad.clone().with_start_exactness(2 * quad.start_exactness());
    let (surface, _) = polar_integrals(g, table.sum_basis.indices(), &quad2)?;
    let two_n = g.degree() as f64;
    let d = g.dim() as f64;
    let mu_vals: Vec<f64> = surface
        .iter()
        .zip(table.sum_basis.indices())
        .map(|(s, a)| gamma((d + a.degree() as f64) / two_n) / two_n * s)
        .collect();
    let mu = table.fill(&mu_vals);
    let factor = transfer_factor(g.dim(), 2 * g.degree(), g.degree());
    let diff = &lambda.entries * factor - &mu;
    Ok(diff.norm() / mu.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyform::parse_form;
    use std::f64::consts::PI;

    fn quad(d: usize) -> SphereQuadrature {
        SphereQuadrature::new(d, 32).unwrap()
    }

    fn mi(e: &[u32]) -> MultiIndex {
        MultiIndex::new(e.to_vec())
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn levelset_examples() {
        let g = parse_form("x1^2", 1).unwrap();
        assert!(rel(levelset_moment(&g, &mi(&[0]), &quad(1)).unwrap(), 2.0) < 1e-15);
        let g = parse_form("x1^4 + x2^4", 2).unwrap();
        let area = 4.0 * gamma(1.25).powi(2) / gamma(1.5);
        assert!(rel(levelset_moment(&g, &mi(&[0, 0]), &quad(2)).unwrap(), area) < 1e-9);
        assert!((area - 3.708150).abs() < 1e-6);
        let g = parse_form("x1^2 + x2^2", 2).unwrap();
        assert!(rel(levelset_moment(&g, &mi(&[2, 0]), &quad(2)).unwrap(), PI / 4.0) < 1e-12);
    }

    #[test]
    fn mu_examples() {
        let g = parse_form("x1^2", 1).unwrap();
        assert!(rel(mu_moment(&g, &mi(&[2]), &quad(1)).unwrap(), PI.sqrt() / 2.0) < 1e-14);
        let g = parse_form("x1^4", 1).unwrap();
        assert!(rel(mu_moment(&g, &mi(&[0]), &quad(1)).unwrap(), 2.0 * gamma(1.25)) < 1e-14);
        let g = parse_form("x1^4 + 0.5*x1^2*x2^2 + x2^4", 2).unwrap();
        assert!(mu_moment(&g, &mi(&[3, 1]), &quad(2)).unwrap().abs() < 1e-15);
        assert!(mu_moment(&g, &mi(&[1, 0]), &quad(2)).unwrap().abs() < 1e-15);
    }

    #[test]
    fn moment_matrix_examples() {
        let g = parse_form("x1^2", 1).unwrap();
        let m = mu_moment_matrix(&g, &quad(1)).unwrap();
        assert!(rel(m.entries[(0, 0)], 3.0 * PI.sqrt() / 4.0) < 1e-14);
        let g = parse_form("x1^4", 1).unwrap();
        let m = mu_moment_matrix(&g, &quad(1)).unwrap();
        assert!(rel(m.entries[(0, 0)], gamma(2.25) / 2.0) < 1e-14);
        let g = parse_form("x1^2 + x2^2", 2).unwrap();
        let m = mu_moment_matrix(&g, &quad(2)).unwrap();
        assert_eq!(m.size(), 3);
        // rows x1², x1x2, x2²: entries pairing x1x2 with a square are odd moments
        assert!(m.entries[(0, 1)].abs() < 1e-15 && m.entries[(1, 2)].abs() < 1e-15);
        // ∫x1⁴e^{-|x|²} = 3π/4, ∫x1²x2² = π/4
        assert!(rel(m.entries[(0, 0)], 3.0 * PI / 4.0) < 1e-12);
        assert!(rel(m.entries[(0, 2)], PI / 4.0) < 1e-12);
        assert!(rel(m.entries[(1, 1)], PI / 4.0) < 1e-12);
        m.check_psd().unwrap();
    }

    #[test]
    fn partition_examples() {
        let g = parse_form("x1^2 + x2^2", 2).unwrap();
        assert!(rel(partition_function_direct(&g, &quad(2)).unwrap(), PI) < 1e-12);
        let g = parse_form("x1^4", 1).unwrap();
        let z = partition_function_direct(&g, &quad(1)).unwrap();
        assert!((z - 1.812805).abs() < 1e-6);
        let g = parse_form("2*x1^4", 1).unwrap();
        let z2 = partition_function_direct(&g, &quad(1)).unwrap();
        assert!(rel(z2, 2f64.powf(-0.25) * z) < 1e-14);
        assert!((z2 - 1.524381).abs() < 1e-6);
    }

    #[test]
    fn matrix_relation_examples() {
        let g = parse_form("x1^4 + x2^4", 2).unwrap();
        assert!(lambda_mu_matrix_relation(&g, &quad(2)).unwrap() <= 1e-8);
        let g = parse_form("x1^2", 1).unwrap();
        let lam = levelset_moment_matrix(&g, &quad(1)).unwrap();
        assert!(rel(lam.entries[(0, 0)], 0.4) < 1e-15);
        assert!(rel(gamma(3.5) * 0.4, 3.0 * PI.sqrt() / 4.0) < 1e-14);
        assert!(lambda_mu_matrix_relation(&g, &quad(1)).unwrap() < 1e-14);
        let g = parse_form("x1^2*x2^2", 2).unwrap();
        assert!(matches!(
            lambda_mu_matrix_relation(&g, &quad(2)),
            Err(Error::AssumptionViolation { .. })
        ));
    }

    #[test]
    fn form_integral_matches_moment_sum() {
        let g = parse_form("x1^4 + 0.5*x1^2*x2^2 + x2^4", 2).unwrap();
        let q = quad(2);
        let direct = mu_form_integral(&g, &g, false, &q).unwrap();
        let v = mu_moment_vector(&g, 4, &q).unwrap();
        let by_moments: f64 = g.coefficient_vector(&v.basis).iter().zip(&v.values).map(|(c, m)| c * m).sum();
        assert!(rel(direct, by_moments) < 1e-10);
        let abs = mu_form_integral(&g, &g.scaled(-1.0), true, &q).unwrap();
        assert!(rel(abs, direct) < 1e-10);
    }

    #[test]
    fn product_table_indexes_sums() {
        let t = ProductTable::new(2, 2);
        for (i, a) in t.basis.indices().iter().enumerate() {
            for (j, b) in t.basis.indices().iter().enumerate() {
                assert_eq!(&t.sum_basis.indices()[t.get(i, j)], &a.add(b));
                assert_eq!(t.get(i, j), t.get(j, i));
            }
        }
    }

    #[test]
    fn psd_violation_detected() {
        let m = MomentMatrix::new(enumerate_basis(1, 1), DMatrix::from_element(1, 1, -1.0), "test");
        assert!(matches!(m.check_psd(), Err(Error::PsdViolation { .. })));
    }
}
