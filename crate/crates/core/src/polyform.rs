//! Multi-indices, graded monomial bases and homogeneous forms.
//!
//! Every vector or matrix indexed by monomials in this crate uses the
//! graded-lexicographic order produced by [`enumerate_basis`]: lower total
//! degree first, and within a degree the exponent tuples in descending
//! lexicographic order (`x1^2, x1*x2, x2^2`).

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Minimum on the unit sphere at or below which an action is rejected.
pub const POSITIVITY_TOL: f64 = 1e-8;

/// Default number of coarse sphere samples used by [`normalize_action`].
pub const DEFAULT_COARSE_SAMPLES: usize = 4096;
/// Default number of refinement iterations used by [`normalize_action`].
pub const DEFAULT_REFINE_ITERS: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exps: Vec<u32>,
    degree: u32,
}

impl MultiIndex {
    pub fn new(exps: Vec<u32>) -> Self {
        assert!(!exps.is_empty(), "multi-index needs at least one variable");
        let degree = exps.iter().sum();
        Self { exps, degree }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(vec![0; dim])
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exps
    }

    pub fn dim(&self) -> usize {
        self.exps.len()
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// True when every exponent is even.
    pub fn is_even(&self) -> bool {
        self.exps.iter().all(|e| e % 2 == 0)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        assert_eq!(self.dim(), other.dim());
        MultiIndex::new(self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect())
    }

    /// x^α evaluated at `x`.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.exps
            .iter()
            .zip(x)
            .map(|(&e, &xi)| xi.powi(e as i32))
            .product()
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree
            .cmp(&other.degree)
            .then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.exps.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// All monomials of one degree in graded-lexicographic order.
#[derive(Debug, Clone)]
pub struct GradedBasis {
    dim: usize,
    degree: u32,
    indices: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
}

impl GradedBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    /// The vector v_m(x) of all degree-m monomials at `x`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let table = power_table(x, self.degree);
        self.indices.iter().map(|a| monomial_from_table(&table, a)).collect()
    }
}

impl PartialEq for GradedBasis {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.degree == other.degree
    }
}

/// Number of monomials of degree exactly m in d variables, binomial(d-1+m, m).
pub fn basis_size(d: usize, m: u32) -> usize {
    binomial(d - 1 + m as usize, m as usize)
}

pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// The graded basis of degree-m monomials in d variables.
pub fn enumerate_basis(d: usize, m: u32) -> GradedBasis {
    assert!(d >= 1, "dimension must be at least 1");
    let mut indices = Vec::with_capacity(basis_size(d, m));
    let mut current = vec![0u32; d];
    fill_exponents(&mut current, 0, m, &mut indices);
    let lookup = indices.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
    GradedBasis { dim: d, degree: m, indices, lookup }
}

fn fill_exponents(current: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(MultiIndex::new(current.to_vec()));
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        fill_exponents(current, pos + 1, remaining - e, out);
    }
    current[pos] = 0;
}

/// All monomials of degree at most m, graded order (degree 0 first).
pub fn monomials_up_to(d: usize, m: u32) -> Vec<MultiIndex> {
    (0..=m).flat_map(|k| enumerate_basis(d, k).indices).collect()
}

/// powers[i][k] = x_i^k for k ≤ max_deg.
pub(crate) fn power_table(x: &[f64], max_deg: u32) -> Vec<Vec<f64>> {
    x.iter()
        .map(|&xi| {
            let mut row = Vec::with_capacity(max_deg as usize + 1);
            let mut p = 1.0;
            for _ in 0..=max_deg {
                row.push(p);
                p *= xi;
            }
            row
        })
        .collect()
}

pub(crate) fn monomial_from_table(table: &[Vec<f64>], alpha: &MultiIndex) -> f64 {
    alpha
        .exps
        .iter()
        .zip(table)
        .map(|(&e, row)| row[e as usize])
        .product()
}

/// A homogeneous polynomial of degree m in d variables.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousForm {
    dim: usize,
    degree: u32,
    coeffs: BTreeMap<MultiIndex, f64>,
}

impl HomogeneousForm {
    /// Builds a form from (multi-index, coefficient) pairs, summing repeats.
    pub fn new(dim: usize, degree: u32, terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for (alpha, c) in terms {
            if alpha.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: alpha.dim() });
            }
            if alpha.degree() != degree {
                return Err(Error::MixedDegree { first: degree, second: alpha.degree() });
            }
            *coeffs.entry(alpha).or_insert(0.0) += c;
        }
        Ok(Self { dim, degree, coeffs })
    }

    /// The form Σ coeffs[i]·x^{basis[i]}.
    pub fn from_coefficients(basis: &GradedBasis, coeffs: &[f64]) -> Self {
        assert_eq!(basis.size(), coeffs.len());
        Self {
            dim: basis.dim(),
            degree: basis.degree(),
            coeffs: basis.indices().iter().cloned().zip(coeffs.iter().copied()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.coeffs.iter().map(|(a, &c)| (a, c))
    }

    pub fn coefficient(&self, alpha: &MultiIndex) -> f64 {
        self.coeffs.get(alpha).copied().unwrap_or(0.0)
    }

    /// Coefficient vector in the graded basis of the form's degree.
    pub fn coefficient_vector(&self, basis: &GradedBasis) -> Vec<f64> {
        assert_eq!(basis.dim(), self.dim);
        assert_eq!(basis.degree(), self.degree);
        basis.indices().iter().map(|a| self.coefficient(a)).collect()
    }

    /// Half the degree, n for an action of degree 2n. Fails for odd or zero degree.
    pub fn half_degree(&self) -> Result<u32> {
        if self.degree == 0 || self.degree % 2 != 0 {
            return Err(Error::OddDegree { degree: self.degree });
        }
        Ok(self.degree / 2)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|(a, &c)| (a.clone(), s * c)).collect(),
        }
    }

    /// Σ_α c_α x^α.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "point dimension");
        let table = power_table(x, self.degree);
        self.coeffs
            .iter()
            .map(|(a, &c)| c * monomial_from_table(&table, a))
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "point dimension");
        let table = power_table(x, self.degree);
        let mut grad = vec![0.0; self.dim];
        for (alpha, &c) in &self.coeffs {
            for (i, g) in grad.iter_mut().enumerate() {
                let e = alpha.exps[i];
                if e == 0 {
                    continue;
                }
                let mut term = c * e as f64 * table[i][e as usize - 1];
                for (j, row) in table.iter().enumerate() {
                    if j != i {
                        term *= row[alpha.exps[j] as usize];
                    }
                }
                *g += term;
            }
        }
        grad
    }
}

impl HomogeneousForm {
    /// Sum of two forms of the same dimension and degree.
    pub fn add(&self, other: &HomogeneousForm) -> Result<HomogeneousForm> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        if other.degree != self.degree {
            return Err(Error::MixedDegree { first: self.degree, second: other.degree });
        }
        HomogeneousForm::new(self.dim, self.degree, self.terms().chain(other.terms()).map(|(a, c)| (a.clone(), c)))
    }

    /// Product of two forms; the degrees add.
    pub fn mul(&self, other: &HomogeneousForm) -> Result<HomogeneousForm> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let terms = self
            .terms()
            .flat_map(|(a, c)| other.terms().map(move |(b, e)| (a.add(b), c * e)));
        HomogeneousForm::new(self.dim, self.degree + other.degree, terms)
    }
}

/// (Σ xᵢ²)^k.
pub fn norm_power(d: usize, k: u32) -> HomogeneousForm {
    let sq = HomogeneousForm::new(
        d,
        2,
        (0..d).map(|i| {
            let mut e = vec![0; d];
            e[i] = 2;
            (MultiIndex::new(e), 1.0)
        }),
    )
    .expect("valid square terms");
    let mut out = HomogeneousForm::new(d, 0, [(MultiIndex::zero(d), 1.0)]).expect("constant");
    for _ in 0..k {
        out = out.mul(&sq).expect("same dimension");
    }
    out
}

/// ε‖x‖^{2n} + Σ_{k=1}^{d} q_k(x)², each q_k a degree-n form with coefficients
/// drawn uniformly from [-1, 1]. Positive on the sphere by construction.
pub fn random_sos_form(d: usize, n: u32, eps: f64, rng: &mut impl Rng) -> HomogeneousForm {
    let half = enumerate_basis(d, n);
    let mut out = norm_power(d, n).scaled(eps);
    for _ in 0..d {
        let coeffs: Vec<f64> = (0..half.size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q = HomogeneousForm::from_coefficients(&half, &coeffs);
        out = out.add(&q.mul(&q).expect("same dimension")).expect("same degree");
    }
    out
}

/// The seeded family of positive forms used by the verification suites:
/// `count` draws of [`random_sos_form`] with ε = 0.1.
pub fn sos_family(d: usize, n: u32, count: usize, seed: u64) -> Vec<HomogeneousForm> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_sos_form(d, n, 0.1, &mut rng)).collect()
}

impl fmt::Display for HomogeneousForm {
    /// Prints in the grammar accepted by [`parse_form`]; coefficients use the
    /// shortest decimal that round-trips.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (alpha, &c) in &self.coeffs {
            if first {
                if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
                    write!(f, "-")?;
                }
            } else if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{:?}", c.abs())?;
            for (i, &e) in alpha.exps.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*x{}", i + 1)?,
                    _ => write!(f, "*x{}^{}", i + 1, e)?,
                }
            }
        }
        if first {
            write!(f, "0")?;
            if self.degree > 0 {
                write!(f, "*x1^{}", self.degree)?;
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Syntax { pos: self.pos, msg: msg.into() })
    }

    fn integer(&mut self) -> Result<u32> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected an integer");
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        text.parse().or_else(|_| {
            self.pos = start;
            self.err("integer out of range")
        })
    }

    fn coefficient(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src;
        let mut i = self.pos;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&bytes[start..i]).expect("ascii number");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos = i;
                Ok(v)
            }
            _ => self.err(format!("invalid coefficient '{text}'")),
        }
    }

    /// factor := 'x' INT ('^' INT)?
    fn factor(&mut self, dim: usize, exps: &mut [u32]) -> Result<()> {
        if self.peek() != Some(b'x') {
            return self.err("expected a variable 'x<i>'");
        }
        self.pos += 1;
        let var_pos = self.pos;
        let var = self.integer()? as usize;
        if var == 0 || var > dim {
            self.pos = var_pos;
            return Err(Error::DimensionMismatch { expected: dim, found: var });
        }
        let mut power = 1;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            power = self.integer()?;
        }
        exps[var - 1] += power;
        Ok(())
    }

    /// term := [coeff '*'?] factor+
    fn term(&mut self, dim: usize) -> Result<(MultiIndex, f64)> {
        let mut coeff = 1.0;
        let mut exps = vec![0u32; dim];
        let mut saw_factor = false;
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                coeff = self.coefficient()?;
                if self.peek() == Some(b'*') {
                    self.pos += 1;
                    if self.peek() != Some(b'x') {
                        return self.err("expected a variable after '*'");
                    }
                }
            }
            Some(b'x') => {}
            Some(_) => return self.err("expected a coefficient or a variable"),
            None => return self.err("unexpected end of input"),
        }
        while self.peek() == Some(b'x') {
            self.factor(dim, &mut exps)?;
            saw_factor = true;
            if self.peek() == Some(b'*') {
                self.pos += 1;
                if self.peek() != Some(b'x') {
                    return self.err("expected a variable after '*'");
                }
            }
        }
        if !saw_factor {
            return self.err("expected a variable 'x<i>'");
        }
        Ok((MultiIndex::new(exps), coeff))
    }
}

/// Parses `text` as a homogeneous form in `dim` variables `x1..x<dim>`.
///
/// Grammar: `form := term (('+'|'-') term)*`, `term := [coeff '*'?] factor+`,
/// `factor := 'x' INT ('^' INT)?`. A leading sign is accepted and whitespace is
/// ignored. Like terms are combined.
pub fn parse_form(text: &str, dim: usize) -> Result<HomogeneousForm> {
    if dim == 0 {
        return Err(Error::UnsupportedDimension(0));
    }
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let mut terms: Vec<(usize, MultiIndex, f64)> = Vec::new();
    let mut sign = 1.0;
    match p.peek() {
        Some(b'-') => {
            sign = -1.0;
            p.pos += 1;
        }
        Some(b'+') => p.pos += 1,
        None => return p.err("empty form"),
        _ => {}
    }
    loop {
        let start = p.pos;
        let (alpha, c) = p.term(dim)?;
        terms.push((start, alpha, sign * c));
        match p.peek() {
            None => break,
            Some(b'+') => sign = 1.0,
            Some(b'-') => sign = -1.0,
            Some(_) => return p.err("expected '+' or '-'"),
        }
        p.pos += 1;
    }
    let degree = terms[0].1.degree();
    for (_, alpha, _) in &terms {
        if alpha.degree() != degree {
            return Err(Error::MixedDegree { first: degree, second: alpha.degree() });
        }
    }
    HomogeneousForm::new(dim, degree, terms.into_iter().map(|(_, a, c)| (a, c)))
}

/// Deterministic sample points on S^{d-1}.
fn sphere_samples(d: usize, count: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => {
            // Fibonacci lattice.
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * k as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            (0..count)
                .map(|_| loop {
                    let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let n = norm(&v);
                    if n > 1e-12 {
                        break v.iter().map(|x| x / n).collect();
                    }
                })
                .collect()
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

/// Estimated minimum of `f` on the unit sphere.
///
/// Coarse deterministic sampling followed by Riemannian gradient descent with
/// backtracking from the best 8 samples. The result is an upper bound on the
/// true minimum.
pub fn min_on_sphere(f: &HomogeneousForm, coarse_samples: usize, refine_iters: usize) -> f64 {
    let d = f.dim();
    let count = coarse_samples.max(2 * d);
    let mut scored: Vec<(f64, Vec<f64>)> = sphere_samples(d, count)
        .into_iter()
        .map(|x| (f.evaluate(&x), x))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    if d == 1 {
        return scored[0].0;
    }
    let mut best = scored[0].0;
    for (mut value, mut x) in scored.into_iter().take(8) {
        let mut step = 1.0;
        for _ in 0..refine_iters {
            let grad = f.gradient(&x);
            let radial: f64 = grad.iter().zip(&x).map(|(g, xi)| g * xi).sum();
            let tangent: Vec<f64> = grad.iter().zip(&x).map(|(g, xi)| g - radial * xi).collect();
            let tnorm2: f64 = tangent.iter().map(|t| t * t).sum();
            if tnorm2.sqrt() < 1e-14 {
                break;
            }
            let mut accepted = false;
            while step > 1e-16 {
                let trial: Vec<f64> = x.iter().zip(&tangent).map(|(xi, t)| xi - step * t).collect();
                let trial = normalized(&trial);
                let tv = f.evaluate(&trial);
                if tv <= value - 1e-4 * step * tnorm2 {
                    x = trial;
                    value = tv;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        best = best.min(value);
    }
    best
}

/// Rescaling that places the sublevel set {g ≤ 1} inside the closed unit ball.
#[derive(Debug, Clone)]
pub struct NormalizedAction {
    /// Scale factor β applied to the original action.
    pub beta: f64,
    /// The rescaled action β·g.
    pub form: HomogeneousForm,
    /// Estimated minimum of the original action on the sphere.
    pub sphere_min: f64,
}

impl NormalizedAction {
    /// Factor β^{-d/(2n)} such that Z(βg) = factor·Z(g) and vol(G_{βg}) = factor·vol(G_g).
    pub fn scale_factor(&self) -> f64 {
        let d = self.form.dim() as f64;
        self.beta.powf(-d / self.form.degree() as f64)
    }
}

/// Checks positivity on the sphere and fails with [`Error::AssumptionViolation`]
/// when the estimated minimum is at or below [`POSITIVITY_TOL`].
pub fn check_positive(g: &HomogeneousForm) -> Result<f64> {
    g.half_degree()?;
    let min = min_on_sphere(g, DEFAULT_COARSE_SAMPLES, DEFAULT_REFINE_ITERS);
    if min > POSITIVITY_TOL {
        Ok(min)
    } else {
        Err(Error::AssumptionViolation { min })
    }
}

/// β = max(1, 1/min_{S^{d-1}} g) and the rescaled action β·g. Actions whose
/// sublevel set already lies in the unit ball are left unchanged.
pub fn normalize_action(g: &HomogeneousForm) -> Result<NormalizedAction> {
    let min = check_positive(g)?;
    let beta = if min >= 1.0 { 1.0 } else { 1.0 / min };
    Ok(NormalizedAction { beta, form: g.scaled(beta), sphere_min: min })
}
