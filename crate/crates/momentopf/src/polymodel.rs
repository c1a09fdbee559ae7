//! Monomials, moment-variable indexing, and polynomial algebra shared by the
//! real and complex hierarchies.
//!
//! Real variables are the rectangular voltage components
//! `xi = [V_d1 .. V_dn, V_q1 .. V_qn]` with the reference bus's q-component
//! eliminated, so `m = 2n - 1`. Complex variables are the phasors `zeta_1 ..
//! zeta_n`; a complex monomial is `zeta^alpha * conj(zeta)^beta`.
//!
//! Monomials are ordered graded-lexicographically: by total degree first,
//! then by descending lexicographic comparison of the exponent vector, which
//! reproduces the textbook basis layout `[1, x1, x2, x1^2, x1*x2, x2^2, ..]`.

use num_complex::Complex64;
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::{Error, Result};

/// Compare exponent vectors graded-lexicographically (degree, then
/// descending lex so that `x1` sorts before `x2`).
pub fn graded_cmp(a: &[u8], b: &[u8]) -> Ordering {
    debug_assert_eq!(a.len(), b.len());
    let da: u32 = a.iter().map(|&e| e as u32).sum();
    let db: u32 = b.iter().map(|&e| e as u32).sum();
    da.cmp(&db).then_with(|| b.cmp(a))
}

/// Monomial over the real voltage components, as a dense exponent vector.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RealMonomial {
    exps: Vec<u8>,
}

impl RealMonomial {
    pub fn constant(nvars: usize) -> Self {
        RealMonomial { exps: vec![0; nvars] }
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut exps = vec![0; nvars];
        exps[i] = 1;
        RealMonomial { exps }
    }

    pub fn from_exps(exps: Vec<u8>) -> Self {
        RealMonomial { exps }
    }

    pub fn exps(&self) -> &[u8] {
        &self.exps
    }

    pub fn nvars(&self) -> usize {
        self.exps.len()
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().map(|&e| e as u32).sum()
    }

    pub fn is_constant(&self) -> bool {
        self.exps.iter().all(|&e| e == 0)
    }

    /// True when every exponent is even (such a monomial is a square, so its
    /// moment is nonnegative).
    pub fn all_even(&self) -> bool {
        self.exps.iter().all(|&e| e % 2 == 0)
    }

    pub fn mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.exps.len(), other.exps.len());
        let exps = self
            .exps
            .iter()
            .zip(&other.exps)
            .map(|(&a, &b)| a.checked_add(b).expect("monomial degree overflow"))
            .collect();
        RealMonomial { exps }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.exps
            .iter()
            .enumerate()
            .map(|(i, &e)| point[i].powi(e as i32))
            .product()
    }
}

impl Ord for RealMonomial {
    fn cmp(&self, other: &Self) -> Ordering {
        graded_cmp(&self.exps, &other.exps)
    }
}

impl PartialOrd for RealMonomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for RealMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", render_exps(&self.exps))
    }
}

/// Render an exponent vector in the compact subscript style used by the
/// moment-label notation, e.g. `020`. Falls back to comma separation if any
/// exponent needs more than one digit.
fn render_exps(exps: &[u8]) -> String {
    if exps.iter().all(|&e| e < 10) {
        exps.iter().map(|e| e.to_string()).collect()
    } else {
        let parts: Vec<String> = exps.iter().map(|e| e.to_string()).collect();
        format!("({})", parts.join(","))
    }
}

/// Moment-label rendering, e.g. `y_020`.
pub fn render_real_label(m: &RealMonomial) -> String {
    format!("y_{}", render_exps(&m.exps))
}

/// Complex monomial `zeta^alpha * conj(zeta)^beta`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ComplexMonomial {
    alpha: Vec<u8>,
    beta: Vec<u8>,
}

impl ComplexMonomial {
    pub fn new(alpha: Vec<u8>, beta: Vec<u8>) -> Self {
        debug_assert_eq!(alpha.len(), beta.len());
        ComplexMonomial { alpha, beta }
    }

    pub fn constant(nvars: usize) -> Self {
        ComplexMonomial { alpha: vec![0; nvars], beta: vec![0; nvars] }
    }

    /// `zeta_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut alpha = vec![0; nvars];
        alpha[i] = 1;
        ComplexMonomial { alpha, beta: vec![0; nvars] }
    }

    pub fn alpha(&self) -> &[u8] {
        &self.alpha
    }

    pub fn beta(&self) -> &[u8] {
        &self.beta
    }

    pub fn nvars(&self) -> usize {
        self.alpha.len()
    }

    pub fn degree(&self) -> u32 {
        self.alpha.iter().chain(&self.beta).map(|&e| e as u32).sum()
    }

    pub fn conj(&self) -> Self {
        ComplexMonomial { alpha: self.beta.clone(), beta: self.alpha.clone() }
    }

    /// Diagonal labels (`alpha == beta`) are real-valued by Hermitian
    /// symmetry.
    pub fn is_diagonal(&self) -> bool {
        self.alpha == self.beta
    }

    /// Canonical representative has `alpha >= beta` in monomial order.
    /// Returns the representative and whether this label is its conjugate.
    pub fn canonicalize(&self) -> (Self, bool) {
        if graded_cmp(&self.alpha, &self.beta) == Ordering::Less {
            (self.conj(), true)
        } else {
            (self.clone(), false)
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let add = |a: &[u8], b: &[u8]| -> Vec<u8> {
            a.iter()
                .zip(b)
                .map(|(&x, &y)| x.checked_add(y).expect("monomial degree overflow"))
                .collect()
        };
        ComplexMonomial {
            alpha: add(&self.alpha, &other.alpha),
            beta: add(&self.beta, &other.beta),
        }
    }

    pub fn eval(&self, point: &[Complex64]) -> Complex64 {
        let mut v = Complex64::new(1.0, 0.0);
        for (i, &e) in self.alpha.iter().enumerate() {
            v *= point[i].powi(e as i32);
        }
        for (i, &e) in self.beta.iter().enumerate() {
            v *= point[i].conj().powi(e as i32);
        }
        v
    }
}

impl Ord for ComplexMonomial {
    fn cmp(&self, other: &Self) -> Ordering {
        let dself = self.degree();
        let dother = other.degree();
        dself
            .cmp(&dother)
            .then_with(|| graded_cmp(&self.alpha, &other.alpha))
            .then_with(|| graded_cmp(&self.beta, &other.beta))
    }
}

impl PartialOrd for ComplexMonomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for ComplexMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", render_complex_label(self))
    }
}

/// Moment-label rendering, e.g. `ŷ_{01,01}`.
pub fn render_complex_label(m: &ComplexMonomial) -> String {
    format!("ŷ_{{{},{}}}", render_exps(&m.alpha), render_exps(&m.beta))
}

/// Enumerate all monomials of total degree <= `gamma` over the given subset
/// of variable indices (out of `nvars` total), in graded lexicographic order.
pub fn basis_for_vars(active: &[usize], nvars: usize, gamma: u32) -> Vec<RealMonomial> {
    let mut out = Vec::new();
    let mut current = vec![0u8; nvars];
    enumerate_rec(active, 0, gamma, &mut current, &mut out);
    out.sort();
    out
}

fn enumerate_rec(
    active: &[usize],
    pos: usize,
    remaining: u32,
    current: &mut Vec<u8>,
    out: &mut Vec<RealMonomial>,
) {
    if pos == active.len() {
        out.push(RealMonomial::from_exps(current.clone()));
        return;
    }
    for d in 0..=remaining {
        current[active[pos]] = d as u8;
        enumerate_rec(active, pos + 1, remaining - d, current, out);
    }
    current[active[pos]] = 0;
}

/// The full real monomial basis of order `gamma` for an `n`-bus system:
/// all monomials of degree <= gamma over the `2n - 1` voltage components
/// (reference-bus q-component eliminated). Length `C(2n-1+gamma, gamma)`.
pub fn basis_real(n: usize, gamma: u32) -> Vec<RealMonomial> {
    let m = 2 * n - 1;
    let all: Vec<usize> = (0..m).collect();
    basis_for_vars(&all, m, gamma)
}

/// Complex monomial basis of order `gamma`: all `zeta^alpha` with
/// `|alpha| <= gamma` (no conjugate terms), graded lex order. Length
/// `C(n+gamma, gamma)`.
pub fn basis_complex(n: usize, gamma: u32) -> Vec<ComplexMonomial> {
    let all: Vec<usize> = (0..n).collect();
    basis_complex_for_vars(&all, n, gamma)
}

/// Complex basis restricted to a subset of buses.
pub fn basis_complex_for_vars(active: &[usize], nvars: usize, gamma: u32) -> Vec<ComplexMonomial> {
    let reals = basis_for_vars(active, nvars, gamma);
    let mut out: Vec<ComplexMonomial> = reals
        .into_iter()
        .map(|m| ComplexMonomial::new(m.exps().to_vec(), vec![0; nvars]))
        .collect();
    out.sort();
    out
}

/// Binomial coefficient, for the closed-form basis-size checks.
pub fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k.min(n));
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Polynomial with real coefficients over real monomials.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolyR {
    terms: BTreeMap<RealMonomial, f64>,
}

impl PolyR {
    pub fn new() -> Self {
        PolyR { terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = PolyR::new();
        p.add_term(RealMonomial::constant(nvars), c);
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut p = PolyR::new();
        p.add_term(RealMonomial::var(nvars, i), 1.0);
        p
    }

    pub fn add_term(&mut self, mono: RealMonomial, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        let slot = self.terms.entry(mono.clone()).or_insert(0.0);
        *slot += coeff;
        if *slot == 0.0 {
            self.terms.remove(&mono);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&RealMonomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = PolyR::new();
        for (m, c) in self.terms() {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = PolyR::new();
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.terms().map(|(m, c)| c * m.eval(point)).sum()
    }
}

/// Polynomial with complex coefficients over complex monomials. Real-valued
/// polynomials satisfy the Hermitian symmetry `conj(g[a,b]) = g[b,a]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolyC {
    terms: BTreeMap<ComplexMonomial, Complex64>,
}

impl PolyC {
    pub fn new() -> Self {
        PolyC { terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: Complex64) -> Self {
        let mut p = PolyC::new();
        p.add_term(ComplexMonomial::constant(nvars), c);
        p
    }

    pub fn add_term(&mut self, mono: ComplexMonomial, coeff: Complex64) {
        if coeff == Complex64::new(0.0, 0.0) {
            return;
        }
        let slot = self.terms.entry(mono.clone()).or_insert(Complex64::new(0.0, 0.0));
        *slot += coeff;
        if *slot == Complex64::new(0.0, 0.0) {
            self.terms.remove(&mono);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&ComplexMonomial, Complex64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = PolyC::new();
        for (m, c) in self.terms() {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = PolyC::new();
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    /// Conjugate-transpose of the coefficient map: term (a,b) -> conj(c) at
    /// (b,a). Hermitian polynomials equal their own conjugate transpose.
    pub fn conj_transpose(&self) -> Self {
        let mut out = PolyC::new();
        for (m, c) in self.terms() {
            out.add_term(m.conj(), c.conj());
        }
        out
    }

    /// Check `conj(g[a,b]) = g[b,a]` within `tol` relative to the largest
    /// coefficient magnitude.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let scale = self
            .terms()
            .map(|(_, c)| c.norm())
            .fold(0.0_f64, f64::max)
            .max(1.0);
        for (m, c) in self.terms() {
            let mirror = self
                .terms
                .get(&m.conj())
                .copied()
                .unwrap_or(Complex64::new(0.0, 0.0));
            if (mirror.conj() - c).norm() > tol * scale {
                return false;
            }
        }
        true
    }

    pub fn eval(&self, point: &[Complex64]) -> Complex64 {
        self.terms().map(|(m, c)| c * m.eval(point)).sum()
    }
}

/// Maps canonical real monomial labels to contiguous moment-variable ids.
/// Id 0 is always the constant label.
pub struct MomentIndex {
    map: BTreeMap<RealMonomial, u32>,
    labels: Vec<RealMonomial>,
    nvars: usize,
    max_degree: u32,
}

impl MomentIndex {
    pub fn new(nvars: usize, max_degree: u32) -> Self {
        let mut idx = MomentIndex {
            map: BTreeMap::new(),
            labels: Vec::new(),
            nvars,
            max_degree,
        };
        idx.intern(&RealMonomial::constant(nvars)).unwrap();
        idx
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn intern(&mut self, mono: &RealMonomial) -> Result<u32> {
        debug_assert_eq!(mono.nvars(), self.nvars);
        if mono.degree() > self.max_degree {
            return Err(Error::DegreeOverflow { degree: mono.degree(), max: self.max_degree });
        }
        if let Some(&id) = self.map.get(mono) {
            return Ok(id);
        }
        let id = self.labels.len() as u32;
        self.map.insert(mono.clone(), id);
        self.labels.push(mono.clone());
        Ok(id)
    }

    pub fn get(&self, mono: &RealMonomial) -> Option<u32> {
        self.map.get(mono).copied()
    }

    pub fn label(&self, id: u32) -> &RealMonomial {
        &self.labels[id as usize]
    }

    pub fn labels(&self) -> &[RealMonomial] {
        &self.labels
    }
}

/// A moment variable backing a complex label: the real part's solver id and,
/// for off-diagonal labels, the imaginary part's id. `conj` records whether
/// the looked-up label was the conjugate of the stored canonical one, i.e.
/// its value is `re - i*im` rather than `re + i*im`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexVarRef {
    pub re: u32,
    pub im: Option<u32>,
    pub conj: bool,
}

/// What a real solver variable represents in the complex index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ComplexPart {
    Re(ComplexMonomial),
    Im(ComplexMonomial),
}

/// Maps canonical complex labels to (re, im) solver-variable ids. Id 0 is the
/// real part of the constant label.
pub struct MomentIndexC {
    map: BTreeMap<ComplexMonomial, (u32, Option<u32>)>,
    parts: Vec<ComplexPart>,
    nvars: usize,
    max_degree: u32,
}

impl MomentIndexC {
    pub fn new(nvars: usize, max_degree: u32) -> Self {
        let mut idx = MomentIndexC {
            map: BTreeMap::new(),
            parts: Vec::new(),
            nvars,
            max_degree,
        };
        idx.intern(&ComplexMonomial::constant(nvars)).unwrap();
        idx
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Number of real solver variables allocated (re + im parts).
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Number of distinct canonical labels.
    pub fn label_count(&self) -> usize {
        self.map.len()
    }

    pub fn intern(&mut self, mono: &ComplexMonomial) -> Result<ComplexVarRef> {
        debug_assert_eq!(mono.nvars(), self.nvars);
        if mono.degree() > self.max_degree {
            return Err(Error::DegreeOverflow { degree: mono.degree(), max: self.max_degree });
        }
        let (canon, conj) = mono.canonicalize();
        if let Some(&(re, im)) = self.map.get(&canon) {
            return Ok(ComplexVarRef { re, im, conj });
        }
        let re = self.parts.len() as u32;
        self.parts.push(ComplexPart::Re(canon.clone()));
        let im = if canon.is_diagonal() {
            None
        } else {
            let id = self.parts.len() as u32;
            self.parts.push(ComplexPart::Im(canon.clone()));
            Some(id)
        };
        self.map.insert(canon, (re, im));
        Ok(ComplexVarRef { re, im, conj })
    }

    pub fn get(&self, mono: &ComplexMonomial) -> Option<ComplexVarRef> {
        let (canon, conj) = mono.canonicalize();
        self.map.get(&canon).map(|&(re, im)| ComplexVarRef { re, im, conj })
    }

    pub fn part(&self, id: u32) -> &ComplexPart {
        &self.parts[id as usize]
    }

    pub fn parts(&self) -> &[ComplexPart] {
        &self.parts
    }
}

/// Linear expression `constant + sum coeff_i * y_i` over solver variables.
/// Terms are sorted by variable id with no duplicates or explicit zeros.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: Vec<(u32, f64)>,
}

impl LinExpr {
    pub fn zero() -> Self {
        LinExpr::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { constant: c, terms: Vec::new() }
    }

    pub fn single(var: u32, coeff: f64) -> Self {
        if coeff == 0.0 {
            LinExpr::zero()
        } else {
            LinExpr { constant: 0.0, terms: vec![(var, coeff)] }
        }
    }

    pub fn from_map(constant: f64, map: BTreeMap<u32, f64>) -> Self {
        LinExpr {
            constant,
            terms: map.into_iter().filter(|&(_, c)| c != 0.0).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }

    pub fn negate(&self) -> Self {
        LinExpr {
            constant: -self.constant,
            terms: self.terms.iter().map(|&(v, c)| (v, -c)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut map = BTreeMap::new();
        for &(v, c) in self.terms.iter().chain(&other.terms) {
            *map.entry(v).or_insert(0.0) += c;
        }
        LinExpr::from_map(self.constant + other.constant, map)
    }

    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        let mut map: BTreeMap<u32, f64> = self.terms.iter().copied().collect();
        for &(v, c) in &other.terms {
            *map.entry(v).or_insert(0.0) += c * s;
        }
        LinExpr::from_map(self.constant + s * other.constant, map)
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * y[v as usize]).sum::<f64>()
    }
}

/// Lift a real polynomial: `L_y{g} = sum g_alpha * y_alpha`. The constant
/// term becomes a coefficient on the normalization variable y_0 (id 0), not a
/// free constant, matching the lifted-variable convention.
pub fn lift_real(g: &PolyR, idx: &mut MomentIndex) -> Result<LinExpr> {
    let mut map = BTreeMap::new();
    for (mono, coeff) in g.terms() {
        let id = idx.intern(mono)?;
        *map.entry(id).or_insert(0.0) += coeff;
    }
    Ok(LinExpr::from_map(0.0, map))
}

/// Lift a Hermitian complex polynomial to a real linear form over the
/// (Re, Im) moment variables: conjugate-pair terms combine and the imaginary
/// parts cancel. Errors if `g` is not Hermitian.
pub fn lift_complex(g: &PolyC, idx: &mut MomentIndexC) -> Result<LinExpr> {
    if !g.is_hermitian(1e-12) {
        return Err(Error::NonHermitian { msg: format!("{} terms", g.len()) });
    }
    let (re, im) = lift_complex_pair(g, idx)?;
    let scale = re
        .terms
        .iter()
        .map(|&(_, c)| c.abs())
        .fold(1.0_f64, f64::max);
    let imag_leak = im
        .terms
        .iter()
        .map(|&(_, c)| c.abs())
        .fold(im.constant.abs(), f64::max);
    if imag_leak > 1e-9 * scale {
        return Err(Error::NonHermitian {
            msg: format!("imaginary residue {imag_leak:.3e} after pairing"),
        });
    }
    Ok(re)
}

/// Lift an arbitrary complex polynomial to a pair of real linear forms
/// (real part, imaginary part) over the moment variables. Used for the
/// off-diagonal entries of Hermitian blocks, which are not Hermitian
/// polynomials individually.
pub fn lift_complex_pair(g: &PolyC, idx: &mut MomentIndexC) -> Result<(LinExpr, LinExpr)> {
    let mut re_map: BTreeMap<u32, f64> = BTreeMap::new();
    let mut im_map: BTreeMap<u32, f64> = BTreeMap::new();
    for (mono, coeff) in g.terms() {
        let vref = idx.intern(mono)?;
        let sign = if vref.conj { -1.0 } else { 1.0 };
        // label value = y_re + sign * i * y_im; contribution = coeff * value.
        *re_map.entry(vref.re).or_insert(0.0) += coeff.re;
        *im_map.entry(vref.re).or_insert(0.0) += coeff.im;
        if let Some(im_id) = vref.im {
            // coeff * sign*i*y_im = (-coeff.im*sign + i*coeff.re*sign) y_im
            *re_map.entry(im_id).or_insert(0.0) += -coeff.im * sign;
            *im_map.entry(im_id).or_insert(0.0) += coeff.re * sign;
        }
    }
    let clean = |map: BTreeMap<u32, f64>| -> BTreeMap<u32, f64> {
        map.into_iter().filter(|&(_, c)| c.abs() > 1e-15).collect()
    };
    Ok((
        LinExpr::from_map(0.0, clean(re_map)),
        LinExpr::from_map(0.0, clean(im_map)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mono(exps: &[u8]) -> RealMonomial {
        RealMonomial::from_exps(exps.to_vec())
    }

    #[test]
    fn graded_lex_order_matches_textbook_layout() {
        // n=2 buses -> vars [V_d1, V_d2, V_q2]
        let basis = basis_real(2, 2);
        let expected: Vec<RealMonomial> = [
            [0, 0, 0],
            [1, 0, 0],
            [0, 1, 0],
            [0, 0, 1],
            [2, 0, 0],
            [1, 1, 0],
            [1, 0, 1],
            [0, 2, 0],
            [0, 1, 1],
            [0, 0, 2],
        ]
        .iter()
        .map(|e| mono(e))
        .collect();
        assert_eq!(basis, expected);
    }

    #[test]
    fn basis_sizes_match_binomial() {
        for n in 1..=6usize {
            for gamma in 0..=3u32 {
                let m = 2 * n as u64 - 1;
                assert_eq!(
                    basis_real(n, gamma).len() as u64,
                    binomial(m + gamma as u64, gamma as u64)
                );
                assert_eq!(
                    basis_complex(n, gamma).len() as u64,
                    binomial(n as u64 + gamma as u64, gamma as u64)
                );
            }
        }
    }

    #[test]
    fn complex_basis_layout() {
        let basis = basis_complex(2, 2);
        let alphas: Vec<&[u8]> = basis.iter().map(|m| m.alpha()).collect();
        assert_eq!(
            alphas,
            vec![
                &[0u8, 0][..],
                &[1, 0],
                &[0, 1],
                &[2, 0],
                &[1, 1],
                &[0, 2]
            ]
        );
        assert!(basis.iter().all(|m| m.beta().iter().all(|&b| b == 0)));
    }

    #[test]
    fn moment_index_constant_is_zero() {
        let mut idx = MomentIndex::new(3, 6);
        assert_eq!(idx.get(&RealMonomial::constant(3)), Some(0));
        let id = idx.intern(&mono(&[1, 0, 0])).unwrap();
        assert_eq!(id, 1);
        assert_eq!(idx.intern(&mono(&[1, 0, 0])).unwrap(), 1);
        assert_eq!(idx.label(1), &mono(&[1, 0, 0]));
    }

    #[test]
    fn complex_index_conjugation() {
        let mut idx = MomentIndexC::new(2, 4);
        let a = ComplexMonomial::new(vec![1, 0], vec![0, 1]); // zeta1 * conj(zeta2)
        let r1 = idx.intern(&a).unwrap();
        let r2 = idx.intern(&a.conj()).unwrap();
        assert_eq!(r1.re, r2.re);
        assert_eq!(r1.im, r2.im);
        assert_ne!(r1.conj, r2.conj);
        assert!(r1.im.is_some());
        // diagonal label gets no imaginary part
        let d = ComplexMonomial::new(vec![1, 0], vec![1, 0]);
        let rd = idx.intern(&d).unwrap();
        assert_eq!(rd.im, None);
        assert!(!rd.conj);
    }

    #[test]
    fn lift_real_worked_example() {
        // g = -0.81 + V_d2^2 + V_q2^2 over [V_d1, V_d2, V_q2]
        let mut g = PolyR::new();
        g.add_term(mono(&[0, 0, 0]), -0.81);
        g.add_term(mono(&[0, 2, 0]), 1.0);
        g.add_term(mono(&[0, 0, 2]), 1.0);
        let mut idx = MomentIndex::new(3, 4);
        let lf = lift_real(&g, &mut idx).unwrap();
        let rendered: Vec<(String, f64)> = lf
            .terms
            .iter()
            .map(|&(v, c)| (render_real_label(idx.label(v)), c))
            .collect();
        assert_eq!(
            rendered,
            vec![
                ("y_000".to_string(), -0.81),
                ("y_020".to_string(), 1.0),
                ("y_002".to_string(), 1.0)
            ]
        );
    }

    #[test]
    fn lift_complex_worked_example() {
        // g = -0.81 + V_2 * conj(V_2) over 2 buses
        let mut g = PolyC::new();
        g.add_term(ComplexMonomial::constant(2), Complex64::new(-0.81, 0.0));
        g.add_term(
            ComplexMonomial::new(vec![0, 1], vec![0, 1]),
            Complex64::new(1.0, 0.0),
        );
        let mut idx = MomentIndexC::new(2, 4);
        let lf = lift_complex(&g, &mut idx).unwrap();
        assert_eq!(lf.terms.len(), 2);
        let rendered: Vec<String> = lf
            .terms
            .iter()
            .map(|&(v, _)| match idx.part(v) {
                ComplexPart::Re(m) => render_complex_label(m),
                ComplexPart::Im(m) => format!("Im {}", render_complex_label(m)),
            })
            .collect();
        assert_eq!(rendered, vec!["ŷ_{00,00}", "ŷ_{01,01}"]);
    }

    #[test]
    fn lift_complex_rejects_non_hermitian() {
        let mut g = PolyC::new();
        g.add_term(ComplexMonomial::var(2, 0), Complex64::new(1.0, 0.0));
        let mut idx = MomentIndexC::new(2, 4);
        assert!(lift_complex(&g, &mut idx).is_err());
    }

    #[test]
    fn lift_complex_pair_conjugate_evaluation() {
        // g = V_1*conj(V_2) + V_2*conj(V_1) at zeta = (1, e^{i pi/4}) -> sqrt(2)
        let mut g = PolyC::new();
        g.add_term(
            ComplexMonomial::new(vec![1, 0], vec![0, 1]),
            Complex64::new(1.0, 0.0),
        );
        g.add_term(
            ComplexMonomial::new(vec![0, 1], vec![1, 0]),
            Complex64::new(1.0, 0.0),
        );
        let mut idx = MomentIndexC::new(2, 4);
        let lf = lift_complex(&g, &mut idx).unwrap();
        // substitute moments from zeta
        let zeta = [
            Complex64::new(1.0, 0.0),
            Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4),
        ];
        let mut y = vec![0.0; idx.len()];
        for (id, part) in idx.parts().iter().enumerate() {
            y[id] = match part {
                ComplexPart::Re(m) => m.eval(&zeta).re,
                ComplexPart::Im(m) => m.eval(&zeta).im,
            };
        }
        let val = lf.eval(&y);
        assert!((val - 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn poly_mul_matches_evaluation() {
        let mut a = PolyR::new();
        a.add_term(mono(&[1, 0, 0]), 2.0);
        a.add_term(mono(&[0, 1, 0]), -1.5);
        a.add_term(mono(&[0, 0, 0]), 0.25);
        let mut b = PolyR::new();
        b.add_term(mono(&[0, 0, 1]), 3.0);
        b.add_term(mono(&[1, 1, 0]), 1.0);
        let prod = a.mul(&b);
        let pt = [0.3, -0.7, 1.1];
        assert!((prod.eval(&pt) - a.eval(&pt) * b.eval(&pt)).abs() < 1e-12);
    }

    #[test]
    fn substitution_consistency_real() {
        // lift then substitute y_alpha := xi^alpha reproduces g(xi)
        let mut g = PolyR::new();
        g.add_term(mono(&[2, 0, 0]), 1.0);
        g.add_term(mono(&[1, 1, 0]), 2.0);
        g.add_term(mono(&[0, 2, 0]), 1.0);
        let mut idx = MomentIndex::new(3, 4);
        let lf = lift_real(&g, &mut idx).unwrap();
        let xi = [2.0, 3.0, 0.0];
        let y: Vec<f64> = idx.labels().iter().map(|m| m.eval(&xi)).collect();
        assert_eq!(lf.eval(&y), 25.0);
    }

    #[test]
    fn hermitian_check() {
        let mut g = PolyC::new();
        g.add_term(
            ComplexMonomial::new(vec![1, 0], vec![0, 1]),
            Complex64::new(0.5, 1.0),
        );
        g.add_term(
            ComplexMonomial::new(vec![0, 1], vec![1, 0]),
            Complex64::new(0.5, -1.0),
        );
        assert!(g.is_hermitian(1e-14));
        assert_eq!(g.conj_transpose(), g);
        let mut h = g.clone();
        h.add_term(ComplexMonomial::var(2, 0), Complex64::new(1.0, 0.0));
        assert!(!h.is_hermitian(1e-14));
    }
}
