//! Moment relaxations for the volume of G = {g ≤ 1} and a small conic solver.
//!
//! The relaxation of order t maximizes the mass φ₀ of a pseudo-moment vector φ
//! (all moments of degree ≤ 2t) subject to
//!
//! - M_t(φ) ⪰ 0 and M_t(λ) − M_t(φ) ⪰ 0, with λ the Lebesgue measure on the
//!   domain (box [−1,1]^d or unit ball);
//! - M_{t−n}((1−g)·φ) ⪰ 0 when t ≥ n, which confines φ to G;
//! - optionally the Stokes equalities
//!   Σ_β g_β φ_{α+β} = (d+|α|)/(d+2n+|α|)·φ_α for |α| ≤ 2(t−n).
//!
//! Every level is an upper bound on vol(G).

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::boltzmann::levelset_moment;
use crate::error::{Error, Result};
use crate::polyform::{basis_size, monomials_up_to, normalize_action, HomogeneousForm, MultiIndex};
use crate::spherequad::{ball_moment, box_moment, SphereQuadrature};

/// Default solver tolerance.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default iteration cap of [`solve`].
pub const DEFAULT_MAX_ITER: usize = 200_000;
/// Largest problem accepted by [`solve`].
pub const MAX_VARS: usize = 5000;

const RUIZ_SWEEPS: usize = 10;
const RELAXATION: f64 = 1.5;
const SIGMA: f64 = 1e-6;
const CHECK_EVERY: usize = 10;
const ADAPT_EVERY: usize = 50;
/// The iteration stops at TARGET_FACTOR·tol so that the reported objective,
/// not only the residuals, is accurate to about tol.
const TARGET_FACTOR: f64 = 0.1;

/// Integration domain of the reference measure λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Box,
    Ball,
}

impl Domain {
    pub fn moment(self, d: usize, alpha: &MultiIndex) -> f64 {
        match self {
            Domain::Box => box_moment(d, alpha),
            Domain::Ball => ball_moment(d, alpha),
        }
    }
}

/// Pseudo-moments φ_α for |α| ≤ 2t in graded order; index 0 is the mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMomentVector {
    pub dim: usize,
    pub order: u32,
    pub indices: Vec<MultiIndex>,
    pub values: Vec<f64>,
}

impl PseudoMomentVector {
    pub fn new(dim: usize, order: u32, values: Vec<f64>) -> Result<Self> {
        let indices = monomials_up_to(dim, 2 * order);
        if values.len() != indices.len() {
            return Err(Error::DimensionMismatch { expected: indices.len(), found: values.len() });
        }
        Ok(Self { dim, order, indices, values })
    }

    pub fn mass(&self) -> f64 {
        self.values[0]
    }

    pub fn get(&self, alpha: &MultiIndex) -> Option<f64> {
        self.indices.iter().position(|a| a == alpha).map(|i| self.values[i])
    }
}

fn variable_index(d: usize, alpha: &MultiIndex) -> usize {
    let k = alpha.degree();
    let below = if k == 0 { 0 } else { basis_size_up_to(d, k - 1) };
    below + crate::polyform::enumerate_basis(d, k).index_of(alpha).expect("degree matches")
}

fn basis_size_up_to(d: usize, m: u32) -> usize {
    (0..=m).map(|k| basis_size(d, k)).sum()
}

/// Table (row, col) → variable index of φ_{α+β} for the moment matrix of
/// order t, with rows indexed by the monomials of degree ≤ t.
pub fn moment_matrix_map(d: usize, t: u32) -> Vec<Vec<usize>> {
    let rows = monomials_up_to(d, t);
    rows.iter()
        .map(|a| rows.iter().map(|b| variable_index(d, &a.add(b))).collect())
        .collect()
}

/// One coefficient of a PSD block: coeff·x_var at (row, col) and (col, row).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockTerm {
    pub var: usize,
    pub row: usize,
    pub col: usize,
    pub coeff: f64,
}

/// Affine symmetric matrix C + Σ x_v F_v required to be PSD. Only entries
/// with row ≤ col are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    pub size: usize,
    pub label: String,
    pub terms: Vec<BlockTerm>,
    pub constants: Vec<(usize, usize, f64)>,
}

impl PsdBlock {
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for &(r, c, v) in &self.constants {
            m[(r, c)] += v;
        }
        for t in &self.terms {
            m[(t.row, t.col)] += t.coeff * x[t.var];
        }
        for r in 0..self.size {
            for c in r + 1..self.size {
                m[(c, r)] = m[(r, c)];
            }
        }
        m
    }
}

/// Linear equality Σ coeff·x_var = rhs.
#[derive(Debug, Clone, PartialEq)]
pub struct Equality {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// maximize Σ c_v x_v subject to PSD blocks and equalities.
#[derive(Debug, Clone, PartialEq)]
pub struct SDPProblem {
    pub n_vars: usize,
    pub objective: Vec<(usize, f64)>,
    pub blocks: Vec<PsdBlock>,
    pub equalities: Vec<Equality>,
    pub warnings: Vec<String>,
}

impl SDPProblem {
    pub fn validate(&self) -> Result<()> {
        let bad_var = |v: usize| v >= self.n_vars;
        if self.objective.iter().any(|&(v, _)| bad_var(v)) {
            return Err(Error::InvalidInput("objective references an unknown variable".into()));
        }
        for b in &self.blocks {
            let bad_entry = |r: usize, c: usize| r > c || c >= b.size;
            if b.terms.iter().any(|t| bad_var(t.var) || bad_entry(t.row, t.col))
                || b.constants.iter().any(|&(r, c, _)| bad_entry(r, c))
            {
                return Err(Error::InvalidInput(format!("block '{}' has an invalid entry", b.label)));
            }
        }
        if self.equalities.iter().any(|e| e.terms.iter().any(|&(v, _)| bad_var(v))) {
            return Err(Error::InvalidInput("equality references an unknown variable".into()));
        }
        Ok(())
    }

    /// Largest constraint violation of x: equality residuals and negative
    /// eigenvalues of the blocks.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let eq = self
            .equalities
            .iter()
            .map(|e| (e.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>() - e.rhs).abs())
            .fold(0.0, f64::max);
        let psd = self
            .blocks
            .iter()
            .map(|b| -b.evaluate(x).symmetric_eigenvalues().min())
            .fold(0.0, f64::max);
        eq.max(psd)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * x[v]).sum()
    }
}

fn moment_block(d: usize, t: u32, label: &str, sign: f64, constant: impl Fn(&MultiIndex) -> f64) -> PsdBlock {
    let rows = monomials_up_to(d, t);
    let mut terms = Vec::new();
    let mut constants = Vec::new();
    for (r, a) in rows.iter().enumerate() {
        for (c, b) in rows.iter().enumerate().skip(r) {
            let ab = a.add(b);
            terms.push(BlockTerm { var: variable_index(d, &ab), row: r, col: c, coeff: sign });
            let v = constant(&ab);
            if v != 0.0 {
                constants.push((r, c, v));
            }
        }
    }
    PsdBlock { size: rows.len(), label: label.into(), terms, constants }
}

/// The plain relaxation of order t: maximize φ₀ with 0 ⪯ M_t(φ) ⪯ M_t(λ).
///
/// The support constraint on G is added by [`localize`].
pub fn build_volume_relaxation(d: usize, t: u32, domain: Domain) -> SDPProblem {
    let n_vars = basis_size(d + 1, 2 * t);
    SDPProblem {
        n_vars,
        objective: vec![(0, 1.0)],
        blocks: vec![
            moment_block(d, t, "M_t(phi)", 1.0, |_| 0.0),
            moment_block(d, t, "M_t(lambda) - M_t(phi)", -1.0, |a| domain.moment(d, a)),
        ],
        equalities: Vec::new(),
        warnings: Vec::new(),
    }
}

/// Adds M_{t−n}((1−g)·φ) ⪰ 0. Leaves the problem unchanged (with a warning)
/// when t < n.
pub fn localize(mut p: SDPProblem, g: &HomogeneousForm, t: u32) -> Result<SDPProblem> {
    let n = g.half_degree()?;
    let d = g.dim();
    if t < n {
        p.warnings.push(format!("no localizing matrix at t<n (t={t}, n={n})"));
        return Ok(p);
    }
    let rows = monomials_up_to(d, t - n);
    let mut terms = Vec::new();
    for (r, a) in rows.iter().enumerate() {
        for (c, b) in rows.iter().enumerate().skip(r) {
            let ab = a.add(b);
            terms.push(BlockTerm { var: variable_index(d, &ab), row: r, col: c, coeff: 1.0 });
            for (gamma, coeff) in g.terms() {
                terms.push(BlockTerm { var: variable_index(d, &ab.add(gamma)), row: r, col: c, coeff: -coeff });
            }
        }
    }
    p.blocks.push(PsdBlock { size: rows.len(), label: "M_{t-n}((1-g) phi)".into(), terms, constants: Vec::new() });
    Ok(p)
}

/// Adds the Stokes equalities Σ_β g_β φ_{α+β} = (d+|α|)/(d+2n+|α|)·φ_α for
/// every |α| ≤ 2(t−n). Leaves the problem unchanged (with a warning) when t < n.
pub fn add_stokes_constraints(mut p: SDPProblem, g: &HomogeneousForm, t: u32) -> Result<SDPProblem> {
    let n = g.half_degree()?;
    let d = g.dim();
    if t < n {
        p.warnings.push("no Stokes rows at t<n".into());
        return Ok(p);
    }
    assert!(basis_size(d + 1, 2 * t) <= p.n_vars, "problem order below t");
    let two_n = g.degree() as f64;
    for alpha in monomials_up_to(d, 2 * (t - n)) {
        let k = alpha.degree() as f64;
        let mut terms: Vec<(usize, f64)> =
            g.terms().map(|(beta, c)| (variable_index(d, &alpha.add(beta)), c)).collect();
        terms.push((variable_index(d, &alpha), -(d as f64 + k) / (d as f64 + two_n + k)));
        p.equalities.push(Equality { terms, rhs: 0.0 });
    }
    Ok(p)
}

/// The complete relaxation of order t for the action g.
pub fn volume_problem(g: &HomogeneousForm, t: u32, domain: Domain, stokes: bool) -> Result<SDPProblem> {
    let p = localize(build_volume_relaxation(g.dim(), t, domain), g, t)?;
    if stokes {
        add_stokes_constraints(p, g, t)
    } else {
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Solved,
    MaxIter,
    InfeasibleSuspected,
}

impl SolverStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverStatus::Solved => "solved",
            SolverStatus::MaxIter => "max_iter",
            SolverStatus::InfeasibleSuspected => "infeasible-suspected",
        }
    }
}

/// Result of [`solve`]. Residuals are relative:
/// ‖Ax+s−b‖∞/(1+max(‖Ax‖∞,‖s‖∞,‖b‖∞)) and ‖Aᵀy−c‖∞/(1+max(‖Aᵀy‖∞,‖c‖∞)).
#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    /// Primal value cᵀx.
    pub objective: f64,
    /// Dual value bᵀy, an upper bound on the optimum when y is dual feasible.
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// |cᵀx − bᵀy|/(1+|cᵀx|+|bᵀy|).
    pub gap: f64,
    pub iterations: usize,
    pub status: SolverStatus,
    pub x: Vec<f64>,
}

/// Cone K = {0}^zero × Π PSD(size) in svec coordinates.
struct Cone {
    zero: usize,
    psd: Vec<usize>,
}

impl Cone {
    fn rows(&self) -> usize {
        self.zero + self.psd.iter().map(|s| s * (s + 1) / 2).sum::<usize>()
    }

    fn ranges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.psd.len());
        let mut start = self.zero;
        for &s in &self.psd {
            out.push((start, s));
            start += s * (s + 1) / 2;
        }
        out
    }

    fn project(&self, v: &mut [f64]) {
        v[..self.zero].iter_mut().for_each(|x| *x = 0.0);
        for (start, s) in self.ranges() {
            let len = s * (s + 1) / 2;
            project_psd(&mut v[start..start + len], s);
        }
    }

    /// Smallest eigenvalue over the PSD blocks of v (the dual cone is the same
    /// except that zero-cone entries are free).
    fn min_psd_eig(&self, v: &[f64]) -> f64 {
        self.ranges()
            .into_iter()
            .map(|(start, s)| smat(&v[start..start + s * (s + 1) / 2], s).symmetric_eigenvalues().min())
            .fold(f64::INFINITY, f64::min)
    }
}

fn svec_index(r: usize, c: usize) -> usize {
    c * (c + 1) / 2 + r
}

fn smat(v: &[f64], s: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(s, s);
    for c in 0..s {
        for r in 0..=c {
            let x = v[svec_index(r, c)];
            if r == c {
                m[(r, c)] = x;
            } else {
                m[(r, c)] = x / std::f64::consts::SQRT_2;
                m[(c, r)] = m[(r, c)];
            }
        }
    }
    m
}

fn project_psd(v: &mut [f64], s: usize) {
    let eig = SymmetricEigen::new(smat(v, s));
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let m = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    for c in 0..s {
        for r in 0..=c {
            let x = 0.5 * (m[(r, c)] + m[(c, r)]);
            v[svec_index(r, c)] = if r == c { x } else { x * std::f64::consts::SQRT_2 };
        }
    }
}

/// Standard form: minimize −cᵀx subject to Ax + s = b, s ∈ K.
struct StandardForm {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    cone: Cone,
}

fn standard_form(p: &SDPProblem) -> StandardForm {
    let cone = Cone { zero: p.equalities.len(), psd: p.blocks.iter().map(|b| b.size).collect() };
    let m = cone.rows();
    let mut a = DMatrix::zeros(m, p.n_vars);
    let mut b = DVector::zeros(m);
    let mut c = DVector::zeros(p.n_vars);
    for &(v, coeff) in &p.objective {
        c[v] += coeff;
    }
    for (i, e) in p.equalities.iter().enumerate() {
        for &(v, coeff) in &e.terms {
            a[(i, v)] += coeff;
        }
        b[i] = e.rhs;
    }
    for (block, (start, _)) in p.blocks.iter().zip(cone.ranges()) {
        let scale = |r: usize, c: usize| if r == c { 1.0 } else { std::f64::consts::SQRT_2 };
        for t in &block.terms {
            a[(start + svec_index(t.row, t.col), t.var)] -= scale(t.row, t.col) * t.coeff;
        }
        for &(r, cc, v) in &block.constants {
            b[start + svec_index(r, cc)] += scale(r, cc) * v;
        }
    }
    StandardForm { a, b, c, cone }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Ruiz equilibration: returns (row scaling E, column scaling D). Within a
/// PSD block the row of entry (r, c) is scaled by T_r·T_c, a congruence
/// F ↦ TFT that maps the cone onto itself.
fn ruiz(sf: &StandardForm) -> (DVector<f64>, DVector<f64>) {
    let (m, n) = sf.a.shape();
    let mut e = DVector::from_element(m, 1.0);
    let mut dcol = DVector::from_element(n, 1.0);
    let mut a = sf.a.clone();
    let ranges = sf.cone.ranges();
    let inv_root = |x: f64, p: f64| if x > 0.0 { x.powf(-p) } else { 1.0 };
    for _ in 0..RUIZ_SWEEPS {
        let row_norm: Vec<f64> = (0..m).map(|i| a.row(i).amax()).collect();
        let mut fr: Vec<f64> = row_norm.iter().map(|&x| inv_root(x, 0.5)).collect();
        for &(start, s) in &ranges {
            let mut per_index = vec![0.0f64; s];
            for c in 0..s {
                for r in 0..=c {
                    let x = row_norm[start + svec_index(r, c)];
                    per_index[r] = per_index[r].max(x);
                    per_index[c] = per_index[c].max(x);
                }
            }
            let tf: Vec<f64> = per_index.iter().map(|&x| inv_root(x, 0.25)).collect();
            for c in 0..s {
                for r in 0..=c {
                    fr[start + svec_index(r, c)] = tf[r] * tf[c];
                }
            }
        }
        let fc: Vec<f64> = (0..n).map(|j| inv_root(a.column(j).amax(), 0.5)).collect();
        for i in 0..m {
            e[i] *= fr[i];
        }
        for j in 0..n {
            dcol[j] *= fc[j];
            for i in 0..m {
                a[(i, j)] *= fr[i] * fc[j];
            }
        }
    }
    (e, dcol)
}

fn factor(ata: &DMatrix<f64>, rho: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let n = ata.nrows();
    let k = ata * rho + DMatrix::identity(n, n) * SIGMA;
    k.cholesky().ok_or(Error::Factorization { ridge: SIGMA })
}

/// Operator-splitting (ADMM) solver for `p`, deterministic given its inputs.
///
/// Stops when the relative primal and dual residuals and the relative
/// duality gap are all ≤ tol/10. Reports `InfeasibleSuspected` when the dual
/// iterates converge to a certificate of primal infeasibility, or when the
/// primal residual is still large at the iteration cap.
pub fn solve(p: &SDPProblem, tol: f64, max_iter: usize) -> Result<SolverReport> {
    if !(tol >= 1e-9) {
        return Err(Error::InvalidInput(format!("tolerance {tol} below 1e-9")));
    }
    if p.n_vars > MAX_VARS {
        return Err(Error::InvalidInput(format!("{} variables exceed the limit {MAX_VARS}", p.n_vars)));
    }
    p.validate()?;
    let sf = standard_form(p);
    let (m, n) = sf.a.shape();
    let (e, dcol) = ruiz(&sf);
    let mut a = sf.a.clone();
    for j in 0..n {
        for i in 0..m {
            a[(i, j)] *= e[i] * dcol[j];
        }
    }
    let b = sf.b.component_mul(&e);
    let dc = sf.c.component_mul(&dcol);
    let gamma = if inf_norm(&dc) > 0.0 { 1.0 / inf_norm(&dc) } else { 1.0 };
    let c = dc * gamma;
    let at = a.transpose();
    let ata = &at * &a;

    let mut rho = 0.1;
    let mut chol = factor(&ata, rho)?;
    let mut x = DVector::zeros(n);
    let mut s = DVector::zeros(m);
    let mut u = DVector::<f64>::zeros(m);

    // Unscaled quantities for the stopping test.
    let unscale = |x: &DVector<f64>, s: &DVector<f64>, u: &DVector<f64>, rho: f64| {
        let xu = x.component_mul(&dcol);
        let su = s.component_div(&e);
        let yu = (u * rho).component_mul(&e) / gamma;
        (xu, su, yu)
    };
    let measure = |xu: &DVector<f64>, su: &DVector<f64>, yu: &DVector<f64>| {
        let ax = &sf.a * xu;
        let aty = sf.a.transpose() * yu;
        let rp = inf_norm(&(&ax + su - &sf.b)) / (1.0 + inf_norm(&ax).max(inf_norm(su)).max(inf_norm(&sf.b)));
        let rd = inf_norm(&(&aty - &sf.c)) / (1.0 + inf_norm(&aty).max(inf_norm(&sf.c)));
        let pobj = sf.c.dot(xu);
        let dobj = sf.b.dot(yu);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        (rp, rd, gap, pobj, dobj)
    };

    let mut iterations = 0;
    let mut status = SolverStatus::MaxIter;
    for k in 1..=max_iter {
        iterations = k;
        let u_prev = u.clone();
        let rhs = &c + &x * SIGMA - &at * ((&s - &b + &u) * rho);
        x = chol.solve(&rhs);
        let ax = &a * &x;
        let z = &ax * RELAXATION + (&b - &s) * (1.0 - RELAXATION);
        let mut v = &b - &z - &u;
        sf.cone.project(v.as_mut_slice());
        s = v;
        u += &z + &s - &b;

        if k % CHECK_EVERY != 0 {
            continue;
        }
        let (xu, su, yu) = unscale(&x, &s, &u, rho);
        let (rp, rd, gap, _, _) = measure(&xu, &su, &yu);
        let target = TARGET_FACTOR * tol;
        if rp <= target && rd <= target && gap <= target {
            status = SolverStatus::Solved;
            break;
        }
        let dy = (&u - &u_prev).component_mul(&e);
        let bdy = sf.b.dot(&dy);
        let ndy = inf_norm(&dy);
        if bdy < 0.0 && ndy > 0.0 {
            let aty = inf_norm(&(sf.a.transpose() * &dy));
            let cone_ok = sf.cone.psd.is_empty() || sf.cone.min_psd_eig(dy.as_slice()) >= -tol * ndy;
            if aty <= tol * -bdy && cone_ok && -bdy >= tol * ndy {
                status = SolverStatus::InfeasibleSuspected;
                break;
            }
        }
        if k % ADAPT_EVERY == 0 {
            let ratio = ((rp + 1e-300) / (rd + 1e-300)).sqrt();
            if !(0.2..=5.0).contains(&ratio) {
                let new_rho = (rho * ratio).clamp(1e-6, 1e6);
                u *= rho / new_rho;
                rho = new_rho;
                chol = factor(&ata, rho)?;
            }
        }
    }
    let (xu, su, yu) = unscale(&x, &s, &u, rho);
    let (rp, rd, gap, pobj, dobj) = measure(&xu, &su, &yu);
    if status == SolverStatus::MaxIter && rp > tol.sqrt() {
        status = SolverStatus::InfeasibleSuspected;
    }
    Ok(SolverReport {
        objective: pobj,
        dual_objective: dobj,
        primal_residual: rp,
        dual_residual: rd,
        gap,
        iterations,
        status,
        x: xu.as_slice().to_vec(),
    })
}

/// One level of the volume hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub t: u32,
    /// Upper bound on vol(G) mapped back to the original action, or the solver
    /// error for this level.
    pub value: std::result::Result<f64, Error>,
    pub report: Option<SolverReport>,
    pub warnings: Vec<String>,
}

/// Volume bounds for t = 0..=t_max. The action is normalized so that G lies in
/// the unit ball and the values are mapped back to the original action.
/// Levels are solved concurrently; failing levels carry their error.
pub fn hierarchy(
    g: &HomogeneousForm,
    t_max: u32,
    with_stokes: bool,
    domain: Domain,
    tol: f64,
) -> Result<Vec<LevelResult>> {
    let norm = normalize_action(g)?;
    let factor = norm.scale_factor();
    Ok((0..=t_max)
        .into_par_iter()
        .map(|t| {
            let p = match volume_problem(&norm.form, t, domain, with_stokes) {
                Ok(p) => p,
                Err(e) => return LevelResult { t, value: Err(e), report: None, warnings: Vec::new() },
            };
            match solve(&p, tol, DEFAULT_MAX_ITER) {
                Ok(r) => {
                    let value = match r.status {
                        SolverStatus::InfeasibleSuspected => Err(Error::InvalidInput(format!(
                            "solver reported infeasibility at t={t}"
                        ))),
                        _ => Ok(r.objective / factor),
                    };
                    LevelResult { t, value, report: Some(r), warnings: p.warnings }
                }
                Err(e) => LevelResult { t, value: Err(e), report: None, warnings: p.warnings },
            }
        })
        .collect())
}

/// vol(G) = ∫_G dx from the level-set route.
pub fn exact_volume(g: &HomogeneousForm, quad: &SphereQuadrature) -> Result<f64> {
    levelset_moment(g, &MultiIndex::zero(g.dim()), quad)
}

fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Text dump of the problem:
///
/// ```text
/// vars n; blocks k; eqs m
/// max v c v c ...
/// psd s
/// var v row col coeff
/// const row col value
/// eq v c v c ... rhs
/// ```
pub fn write_dump(p: &SDPProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "vars {}; blocks {}; eqs {}", p.n_vars, p.blocks.len(), p.equalities.len());
    out.push_str("max");
    for &(v, c) in &p.objective {
        let _ = write!(out, " {v} {}", fmt_num(c));
    }
    out.push('\n');
    for b in &p.blocks {
        let _ = writeln!(out, "psd {}", b.size);
        for t in &b.terms {
            let _ = writeln!(out, "var {} {} {} {}", t.var, t.row, t.col, fmt_num(t.coeff));
        }
        for &(r, c, v) in &b.constants {
            let _ = writeln!(out, "const {r} {c} {}", fmt_num(v));
        }
    }
    for e in &p.equalities {
        out.push_str("eq");
        for &(v, c) in &e.terms {
            let _ = write!(out, " {v} {}", fmt_num(c));
        }
        let _ = writeln!(out, " {}", fmt_num(e.rhs));
    }
    out
}

/// Inverse of [`write_dump`].
pub fn parse_dump(text: &str) -> Result<SDPProblem> {
    let err = |line: usize, msg: &str| Error::Dump { line, msg: msg.into() };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (ln, header) = lines.next().ok_or_else(|| err(1, "empty dump"))?;
    let nums: Vec<usize> = header
        .split(';')
        .map(|part| part.split_whitespace().nth(1).and_then(|x| x.parse().ok()))
        .collect::<Option<_>>()
        .ok_or_else(|| err(ln, "bad header"))?;
    if nums.len() != 3 {
        return Err(err(ln, "bad header"));
    }
    let mut p = SDPProblem {
        n_vars: nums[0],
        objective: Vec::new(),
        blocks: Vec::new(),
        equalities: Vec::new(),
        warnings: Vec::new(),
    };
    let pairs = |ln: usize, toks: &[&str]| -> Result<Vec<(usize, f64)>> {
        if toks.len() % 2 != 0 {
            return Err(err(ln, "odd number of tokens"));
        }
        toks.chunks(2)
            .map(|c| Ok((c[0].parse().map_err(|_| err(ln, "bad index"))?, c[1].parse().map_err(|_| err(ln, "bad number"))?)))
            .collect()
    };
    for (ln, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let num = |i: usize| -> Result<f64> { toks.get(i).and_then(|x| x.parse().ok()).ok_or_else(|| err(ln, "bad number")) };
        let idx = |i: usize| -> Result<usize> { toks.get(i).and_then(|x| x.parse().ok()).ok_or_else(|| err(ln, "bad index")) };
        match toks[0] {
            "max" => p.objective = pairs(ln, &toks[1..])?,
            "psd" => p.blocks.push(PsdBlock {
                size: idx(1)?,
                label: format!("block {}", p.blocks.len()),
                terms: Vec::new(),
                constants: Vec::new(),
            }),
            "var" | "const" => {
                let block = p.blocks.last_mut().ok_or_else(|| err(ln, "entry before any block"))?;
                if toks[0] == "var" {
                    block.terms.push(BlockTerm { var: idx(1)?, row: idx(2)?, col: idx(3)?, coeff: num(4)? });
                } else {
                    block.constants.push((idx(1)?, idx(2)?, num(3)?));
                }
            }
            "eq" => {
                if toks.len() < 2 {
                    return Err(err(ln, "empty equality"));
                }
                let rhs = num(toks.len() - 1)?;
                p.equalities.push(Equality { terms: pairs(ln, &toks[1..toks.len() - 1])?, rhs });
            }
            other => return Err(err(ln, &format!("unknown record '{other}'"))),
        }
    }
    if p.blocks.len() != nums[1] || p.equalities.len() != nums[2] {
        return Err(err(1, "header counts do not match the body"));
    }
    p.validate()?;
    Ok(p)
}
