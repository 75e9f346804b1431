//! Exterior and Clifford algebra on Λ*(ℝⁿ ⊕ ℝᵏ).
//!
//! Basis words are bitmasks over the generators in the fixed order
//! e¹..eⁿ, f¹..fᵏ, and for the doubled algebra ê¹..êⁿ, f̂¹..f̂ᵏ after them.
//! Wedging generator `b` into word `w` costs the sign (−1)^{#bits of w below b}.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_rational::Rational64;
use num_traits::{One, Zero};
use rand::Rng;

use crate::error::{Error, Result};

const MAX_RANK: usize = 14;
const MAX_DOUBLED_RANK: usize = 7;
const DENSE_LIMIT: usize = 1 << 10;

/// Coefficient ring for exact and floating operators.
pub trait Scalar:
    Clone
    + PartialEq
    + fmt::Debug
    + fmt::Display
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    fn to_f64(&self) -> f64;
    fn from_i64(v: i64) -> Self;
}

impl Scalar for i64 {
    fn to_f64(&self) -> f64 {
        *self as f64
    }
    fn from_i64(v: i64) -> Self {
        v
    }
}

impl Scalar for f64 {
    fn to_f64(&self) -> f64 {
        *self
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
}

impl Scalar for Rational64 {
    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
    fn from_i64(v: i64) -> Self {
        Rational64::from_integer(v)
    }
}

/// Ranks of the base (e) and fiber (f) generator sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AlgebraShape {
    n: usize,
    k: usize,
}

impl AlgebraShape {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n + k > MAX_RANK {
            return Err(Error::InvalidShape(format!(
                "n + k = {} exceeds {MAX_RANK}",
                n + k
            )));
        }
        Ok(Self { n, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rank(&self) -> usize {
        self.n + self.k
    }

    pub fn dim(&self) -> usize {
        1 << self.rank()
    }

    fn check_doubled(&self) -> Result<()> {
        if self.rank() > MAX_DOUBLED_RANK {
            return Err(Error::InvalidShape(format!(
                "doubled algebra needs n + k <= {MAX_DOUBLED_RANK}, got {}",
                self.rank()
            )));
        }
        Ok(())
    }

    fn base_mask(&self) -> u32 {
        (1u32 << self.n) - 1
    }

    fn fiber_mask(&self) -> u32 {
        ((1u32 << self.k) - 1) << self.n
    }

    pub fn top(&self) -> BasisWord {
        BasisWord((1u32 << self.rank()) - 1)
    }
}

/// A generator of the exterior algebra, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Base(usize),
    Fiber(usize),
}

impl Generator {
    fn bit(self, shape: &AlgebraShape) -> Result<usize> {
        match self {
            Generator::Base(i) if (1..=shape.n).contains(&i) => Ok(i - 1),
            Generator::Fiber(j) if (1..=shape.k).contains(&j) => Ok(shape.n + j - 1),
            Generator::Base(i) => Err(Error::InvalidGenerator(format!(
                "base index {i} outside 1..={}",
                shape.n
            ))),
            Generator::Fiber(j) => Err(Error::InvalidGenerator(format!(
                "fiber index {j} outside 1..={}",
                shape.k
            ))),
        }
    }
}

/// A monomial e^I ∧ f^J stored as a bitmask (bit i-1 for eⁱ, bit n+j-1 for f^j).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisWord(pub u32);

impl BasisWord {
    pub const EMPTY: BasisWord = BasisWord(0);

    pub fn from_indices(shape: &AlgebraShape, base: &[usize], fiber: &[usize]) -> Result<Self> {
        let mut mask = 0u32;
        for &i in base {
            mask |= 1 << Generator::Base(i).bit(shape)?;
        }
        for &j in fiber {
            mask |= 1 << Generator::Fiber(j).bit(shape)?;
        }
        Ok(BasisWord(mask))
    }

    pub fn degree(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn base_degree(&self, shape: &AlgebraShape) -> usize {
        (self.0 & shape.base_mask()).count_ones() as usize
    }

    pub fn fiber_degree(&self, shape: &AlgebraShape) -> usize {
        (self.0 & shape.fiber_mask()).count_ones() as usize
    }

    pub fn index(&self) -> usize {
        self.0 as usize
    }

    /// Renders as `e1^f2`, with `1` for the empty word.
    pub fn render(&self, shape: &AlgebraShape) -> String {
        render_mask(self.0, shape, false)
    }
}

fn render_mask(mask: u32, shape: &AlgebraShape, doubled: bool) -> String {
    let r = shape.rank();
    let copies = if doubled { 2 } else { 1 };
    let mut parts = Vec::new();
    for copy in 0..copies {
        for b in 0..r {
            if mask & (1 << (copy * r + b)) != 0 {
                let hat = if copy == 1 { "h" } else { "" };
                if b < shape.n {
                    parts.push(format!("{hat}e{}", b + 1));
                } else {
                    parts.push(format!("{hat}f{}", b - shape.n + 1));
                }
            }
        }
    }
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join("^")
    }
}

#[inline]
fn sign_below(mask: u32, bit: usize) -> i64 {
    if (mask & ((1u32 << bit) - 1)).count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Action of a single left (`hat = false`) or right Clifford generator on a word.
#[inline]
fn apply_generator(mask: u32, bit: usize, hat: bool) -> (u32, i64) {
    let s = sign_below(mask, bit);
    if mask & (1 << bit) == 0 {
        (mask | (1 << bit), s)
    } else if hat {
        (mask & !(1 << bit), s)
    } else {
        (mask & !(1 << bit), -s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage<S> {
    Dense(Vec<S>),
    Sparse(BTreeMap<(usize, usize), S>),
}

/// Linear operator on ΛE (or on Λ(E⊕Ê) when `doubled`).
#[derive(Debug, Clone, PartialEq)]
pub struct ExteriorOperator<S = i64> {
    shape: AlgebraShape,
    doubled: bool,
    storage: Storage<S>,
}

impl<S: Scalar> ExteriorOperator<S> {
    fn operator_dim(shape: &AlgebraShape, doubled: bool) -> usize {
        if doubled {
            1 << (2 * shape.rank())
        } else {
            shape.dim()
        }
    }

    pub fn zeros(shape: AlgebraShape, doubled: bool) -> Result<Self> {
        if doubled {
            shape.check_doubled()?;
        }
        Ok(Self::zeros_unchecked(shape, doubled))
    }

    fn zeros_unchecked(shape: AlgebraShape, doubled: bool) -> Self {
        let dim = Self::operator_dim(&shape, doubled);
        let storage = if dim <= DENSE_LIMIT {
            Storage::Dense(vec![S::zero(); dim * dim])
        } else {
            Storage::Sparse(BTreeMap::new())
        };
        Self {
            shape,
            doubled,
            storage,
        }
    }

    pub fn identity(shape: AlgebraShape, doubled: bool) -> Result<Self> {
        let mut op = Self::zeros(shape, doubled)?;
        for i in 0..op.dim() {
            op.add_at(i, i, S::one());
        }
        Ok(op)
    }

    /// Diagonal operator with entries `f(word)`.
    pub fn diagonal(shape: AlgebraShape, f: impl Fn(BasisWord) -> S) -> Self {
        let mut op = Self::zeros_unchecked(shape, false);
        for i in 0..op.dim() {
            op.add_at(i, i, f(BasisWord(i as u32)));
        }
        op
    }

    pub fn shape(&self) -> AlgebraShape {
        self.shape
    }

    pub fn is_doubled(&self) -> bool {
        self.doubled
    }

    pub fn dim(&self) -> usize {
        Self::operator_dim(&self.shape, self.doubled)
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn get(&self, row: usize, col: usize) -> S {
        match &self.storage {
            Storage::Dense(v) => v[row * self.dim() + col].clone(),
            Storage::Sparse(m) => m.get(&(row, col)).cloned().unwrap_or_else(S::zero),
        }
    }

    fn add_at(&mut self, row: usize, col: usize, value: S) {
        if value.is_zero() {
            return;
        }
        let dim = self.dim();
        match &mut self.storage {
            Storage::Dense(v) => {
                let slot = &mut v[row * dim + col];
                *slot = slot.clone() + value;
            }
            Storage::Sparse(m) => {
                let entry = m.entry((row, col)).or_insert_with(S::zero);
                *entry = entry.clone() + value;
                if entry.is_zero() {
                    m.remove(&(row, col));
                }
            }
        }
    }

    /// Nonzero entries in row-major order.
    pub fn entries(&self) -> Vec<(usize, usize, S)> {
        match &self.storage {
            Storage::Dense(v) => {
                let dim = self.dim();
                v.iter()
                    .enumerate()
                    .filter(|(_, x)| !x.is_zero())
                    .map(|(i, x)| (i / dim, i % dim, x.clone()))
                    .collect()
            }
            Storage::Sparse(m) => m
                .iter()
                .filter(|(_, x)| !x.is_zero())
                .map(|(&(r, c), x)| (r, c, x.clone()))
                .collect(),
        }
    }

    fn assert_compatible(&self, other: &Self) {
        assert_eq!(self.shape, other.shape, "operator shapes differ");
        assert_eq!(self.doubled, other.doubled, "doubled flags differ");
    }

    pub fn is_zero(&self) -> bool {
        self.entries().is_empty()
    }

    pub fn scale(&self, factor: &S) -> Self {
        let mut out = Self::zeros_unchecked(self.shape, self.doubled);
        for (r, c, v) in self.entries() {
            out.add_at(r, c, v * factor.clone());
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros_unchecked(self.shape, self.doubled);
        for (r, c, v) in self.entries() {
            out.add_at(c, r, v);
        }
        out
    }

    pub fn trace(&self) -> S {
        (0..self.dim()).fold(S::zero(), |acc, i| acc + self.get(i, i))
    }

    /// Trace weighted by (−1)^degree of each basis word.
    pub fn supertrace(&self) -> S {
        (0..self.dim()).fold(S::zero(), |acc, i| {
            let d = self.get(i, i);
            if (i as u32).count_ones().is_multiple_of(2) {
                acc + d
            } else {
                acc - d
            }
        })
    }

    /// `AB + BA`.
    pub fn anticommutator(&self, other: &Self) -> Self {
        &(self * other) + &(other * self)
    }

    /// `Some(true)` if every entry preserves degree parity, `Some(false)` if every
    /// entry flips it, `None` for mixed operators. The zero operator reports `Some(true)`.
    pub fn parity(&self) -> Option<bool> {
        let mut even = false;
        let mut odd = false;
        for (r, c, _) in self.entries() {
            if ((r ^ c) as u32).count_ones().is_multiple_of(2) {
                even = true;
            } else {
                odd = true;
            }
        }
        match (even, odd) {
            (_, false) => Some(true),
            (false, true) => Some(false),
            _ => None,
        }
    }

    pub fn map<R: Scalar>(&self, f: impl Fn(&S) -> R) -> ExteriorOperator<R> {
        let mut out = ExteriorOperator::<R>::zeros_unchecked(self.shape, self.doubled);
        for (r, c, v) in self.entries() {
            out.add_at(r, c, f(&v));
        }
        out
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<f64> {
        let dim = self.dim();
        let mut m = nalgebra::DMatrix::zeros(dim, dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v.to_f64();
        }
        m
    }

    /// Coordinate-list text, one `row_word col_word coefficient` line per nonzero.
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::new();
        for (r, c, v) in self.entries() {
            out.push_str(&render_mask(r as u32, &self.shape, self.doubled));
            out.push(' ');
            out.push_str(&render_mask(c as u32, &self.shape, self.doubled));
            out.push(' ');
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }
}

impl<S: Scalar> Add for &ExteriorOperator<S> {
    type Output = ExteriorOperator<S>;
    fn add(self, rhs: Self) -> ExteriorOperator<S> {
        self.assert_compatible(rhs);
        let mut out = self.clone();
        for (r, c, v) in rhs.entries() {
            out.add_at(r, c, v);
        }
        out
    }
}

impl<S: Scalar> Sub for &ExteriorOperator<S> {
    type Output = ExteriorOperator<S>;
    fn sub(self, rhs: Self) -> ExteriorOperator<S> {
        self.assert_compatible(rhs);
        let mut out = self.clone();
        for (r, c, v) in rhs.entries() {
            out.add_at(r, c, -v);
        }
        out
    }
}

impl<S: Scalar> Neg for &ExteriorOperator<S> {
    type Output = ExteriorOperator<S>;
    fn neg(self) -> ExteriorOperator<S> {
        self.scale(&-S::one())
    }
}

impl<S: Scalar> Mul for &ExteriorOperator<S> {
    type Output = ExteriorOperator<S>;
    fn mul(self, rhs: Self) -> ExteriorOperator<S> {
        self.assert_compatible(rhs);
        let dim = self.dim();
        let mut rows: Vec<Vec<(usize, S)>> = vec![Vec::new(); dim];
        for (r, c, v) in rhs.entries() {
            rows[r].push((c, v));
        }
        let mut out = ExteriorOperator::zeros_unchecked(self.shape, self.doubled);
        for (i, l, a) in self.entries() {
            for (j, b) in &rows[l] {
                out.add_at(i, *j, a.clone() * b.clone());
            }
        }
        out
    }
}

/// Selects which copy a Clifford generator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

fn generator_operator<S: Scalar>(
    shape: AlgebraShape,
    generator: Generator,
    side: Side,
    doubled: bool,
) -> Result<ExteriorOperator<S>> {
    let mut bit = generator.bit(&shape)?;
    if doubled && side == Side::Right {
        bit += shape.rank();
    }
    let mut op = ExteriorOperator::zeros(shape, doubled)?;
    for col in 0..op.dim() {
        let (row, s) = apply_generator(col as u32, bit, side == Side::Right);
        op.add_at(row as usize, col, S::from_i64(s));
    }
    Ok(op)
}

/// c(ξ) = ξ∧ − ι_ξ on ΛE.
pub fn clifford_left<S: Scalar>(shape: AlgebraShape, generator: Generator) -> Result<ExteriorOperator<S>> {
    generator_operator(shape, generator, Side::Left, false)
}

/// ĉ(ξ) = ξ∧ + ι_ξ on ΛE.
pub fn clifford_right<S: Scalar>(shape: AlgebraShape, generator: Generator) -> Result<ExteriorOperator<S>> {
    generator_operator(shape, generator, Side::Right, false)
}

/// Left multiplication acting on the unhatted copy of Λ(E⊕Ê).
pub fn clifford_left_doubled<S: Scalar>(
    shape: AlgebraShape,
    generator: Generator,
) -> Result<ExteriorOperator<S>> {
    generator_operator(shape, generator, Side::Left, true)
}

/// Right multiplication acting on the hatted copy of Λ(E⊕Ê).
pub fn clifford_right_doubled<S: Scalar>(
    shape: AlgebraShape,
    generator: Generator,
) -> Result<ExteriorOperator<S>> {
    generator_operator(shape, generator, Side::Right, true)
}

/// Which generators a number operator counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumberKind {
    Total,
    Base,
    Fiber,
}

pub fn number_operator<S: Scalar>(shape: AlgebraShape, kind: NumberKind) -> ExteriorOperator<S> {
    ExteriorOperator::diagonal(shape, |w| {
        let d = match kind {
            NumberKind::Total => w.degree(),
            NumberKind::Base => w.base_degree(&shape),
            NumberKind::Fiber => w.fiber_degree(&shape),
        };
        S::from_i64(d as i64)
    })
}

/// The operator c(e^I f^J) ĉ(e^{I'} f^{J'}), generators applied in increasing order.
pub fn clifford_word<S: Scalar>(
    shape: AlgebraShape,
    left: BasisWord,
    right: BasisWord,
) -> ExteriorOperator<S> {
    let r = shape.rank();
    let bits = |w: BasisWord| -> Vec<usize> { (0..r).filter(|b| w.0 & (1 << b) != 0).collect() };
    let lb = bits(left);
    let rb = bits(right);
    let mut op = ExteriorOperator::zeros_unchecked(shape, false);
    for col in 0..shape.dim() {
        let mut mask = col as u32;
        let mut sign = 1i64;
        for &b in rb.iter().rev() {
            let (m, s) = apply_generator(mask, b, true);
            mask = m;
            sign *= s;
        }
        for &b in lb.iter().rev() {
            let (m, s) = apply_generator(mask, b, false);
            mask = m;
            sign *= s;
        }
        op.add_at(mask as usize, col, S::from_i64(sign));
    }
    op
}

/// (−1)^{m(m+1)/2} 2^m with m = n + k.
pub fn top_supertrace(shape: &AlgebraShape) -> i64 {
    let m = shape.rank() as i64;
    let sign = if (m * (m + 1) / 2) % 2 == 0 { 1 } else { -1 };
    sign * (1i64 << m)
}

/// An element of Λ(E⊕Ê), stored as coefficients on doubled bitmasks
/// (unhatted bits low, hatted bits shifted by n + k).
#[derive(Debug, Clone, PartialEq)]
pub struct DoubledForm<S> {
    shape: AlgebraShape,
    coefficients: BTreeMap<u32, S>,
}

impl<S: Scalar> DoubledForm<S> {
    pub fn new(shape: AlgebraShape) -> Result<Self> {
        shape.check_doubled()?;
        Ok(Self {
            shape,
            coefficients: BTreeMap::new(),
        })
    }

    pub fn shape(&self) -> AlgebraShape {
        self.shape
    }

    /// Adds `value · w_left ∧ ŵ_right`.
    pub fn add_term(&mut self, left: BasisWord, right: BasisWord, value: S) {
        let mask = left.0 | (right.0 << self.shape.rank());
        let entry = self.coefficients.entry(mask).or_insert_with(S::zero);
        *entry = entry.clone() + value;
    }

    pub fn coefficient(&self, mask: u32) -> S {
        self.coefficients.get(&mask).cloned().unwrap_or_else(S::zero)
    }

    pub fn top_mask(&self) -> u32 {
        (1u32 << (2 * self.shape.rank())) - 1
    }
}

/// Coefficient of e^{1..n}∧f^{1..k}∧ê^{1..n}∧f̂^{1..k}.
pub fn berezin_integral<S: Scalar>(form: &DoubledForm<S>) -> S {
    form.coefficient(form.top_mask())
}

/// a = Σ a_{I,J,I',J'} c(e^I f^J) ĉ(e^{I'} f^{J'}).
#[derive(Debug, Clone, PartialEq)]
pub struct CliffordExpansion<S> {
    shape: AlgebraShape,
    terms: BTreeMap<(BasisWord, BasisWord), S>,
}

impl<S: Scalar> CliffordExpansion<S> {
    pub fn new(shape: AlgebraShape) -> Self {
        Self {
            shape,
            terms: BTreeMap::new(),
        }
    }

    pub fn add_term(&mut self, left: BasisWord, right: BasisWord, value: S) {
        let entry = self.terms.entry((left, right)).or_insert_with(S::zero);
        *entry = entry.clone() + value;
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// The operator on ΛE.
    pub fn operator(&self) -> ExteriorOperator<S> {
        let mut total = ExteriorOperator::zeros_unchecked(self.shape, false);
        for ((l, r), v) in &self.terms {
            total = &total + &clifford_word::<S>(self.shape, *l, *r).scale(v);
        }
        total
    }

    /// The associated form a′ = Σ a_{I,J,I',J'} e^I f^J ê^{I'} f̂^{J'}.
    pub fn associated_form(&self) -> Result<DoubledForm<S>> {
        let mut form = DoubledForm::new(self.shape)?;
        for ((l, r), v) in &self.terms {
            form.add_term(*l, *r, v.clone());
        }
        Ok(form)
    }
}

/// Random sparse integer expansion with `terms` entries in [−9, 9].
pub fn random_expansion<R: Rng>(shape: AlgebraShape, terms: usize, rng: &mut R) -> CliffordExpansion<i64> {
    let dim = shape.dim() as u32;
    let mut a = CliffordExpansion::new(shape);
    for _ in 0..terms {
        let l = BasisWord(rng.gen_range(0..dim));
        let r = BasisWord(rng.gen_range(0..dim));
        let v: i64 = rng.gen_range(-9..=9);
        a.add_term(l, r, v);
    }
    a
}

/// sign(I, Iᶜ): parity of sorting the concatenation (I, Iᶜ).
fn complement_sign(mask: u32, rank: usize) -> i64 {
    let mut inversions = 0u32;
    for b in 0..rank {
        if mask & (1 << b) != 0 {
            let below_complement = !mask & ((1u32 << b) - 1);
            inversions += below_complement.count_ones();
        }
    }
    if inversions.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Flat star *(ξ^I) = sign(I, Iᶜ) ξ^{Iᶜ}.
pub fn flat_hodge_star<S: Scalar>(shape: AlgebraShape) -> ExteriorOperator<S> {
    let r = shape.rank();
    let top = shape.top().0;
    let mut op = ExteriorOperator::zeros_unchecked(shape, false);
    for col in 0..shape.dim() {
        let mask = col as u32;
        op.add_at((top ^ mask) as usize, col, S::from_i64(complement_sign(mask, r)));
    }
    op
}

/// Exponents (a, b) of the monomial t^a T^b scaling the star on a degree-(p, q) word.
pub fn scaling_monomial(p: usize, q: usize, shape: &AlgebraShape) -> (i32, i32) {
    let (n, k) = (shape.n as i32, shape.k as i32);
    (2 * (p as i32 + q as i32) - (n + k), 2 * q as i32 - k)
}

/// Sparse operator whose entries are rational multiples of monomials t^a T^b.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialOperator {
    shape: AlgebraShape,
    entries: BTreeMap<(usize, usize, i32, i32), Rational64>,
}

impl MonomialOperator {
    pub fn zeros(shape: AlgebraShape) -> Self {
        Self {
            shape,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_operator(op: &ExteriorOperator<i64>) -> Self {
        let mut out = Self::zeros(op.shape());
        for (r, c, v) in op.entries() {
            out.add(r, c, 0, 0, Rational64::from_integer(v));
        }
        out
    }

    fn add(&mut self, r: usize, c: usize, a: i32, b: i32, v: Rational64) {
        if v.is_zero() {
            return;
        }
        let e = self.entries.entry((r, c, a, b)).or_insert_with(Rational64::zero);
        *e += v;
        if e.is_zero() {
            self.entries.remove(&(r, c, a, b));
        }
    }

    pub fn shape(&self) -> AlgebraShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn compose(&self, rhs: &Self) -> Self {
        assert_eq!(self.shape, rhs.shape, "operator shapes differ");
        let mut by_row: BTreeMap<usize, Vec<(usize, i32, i32, Rational64)>> = BTreeMap::new();
        for (&(r, c, a, b), v) in &rhs.entries {
            by_row.entry(r).or_default().push((c, a, b, *v));
        }
        let mut out = Self::zeros(self.shape);
        for (&(i, l, a1, b1), v1) in &self.entries {
            if let Some(row) = by_row.get(&l) {
                for &(j, a2, b2, v2) in row {
                    out.add(i, j, a1 + a2, b1 + b2, *v1 * v2);
                }
            }
        }
        out
    }

    /// ∂/∂t of every entry.
    pub fn derivative_t(&self) -> Self {
        let mut out = Self::zeros(self.shape);
        for (&(r, c, a, b), v) in &self.entries {
            out.add(r, c, a - 1, b, *v * Rational64::from_integer(a as i64));
        }
        out
    }

    /// ∂/∂T of every entry.
    pub fn derivative_vertical(&self) -> Self {
        let mut out = Self::zeros(self.shape);
        for (&(r, c, a, b), v) in &self.entries {
            out.add(r, c, a, b - 1, *v * Rational64::from_integer(b as i64));
        }
        out
    }

    /// Inverse of a monomial signed permutation (one entry per row and per column).
    pub fn inverse(&self) -> Result<Self> {
        let dim = self.shape.dim();
        let mut seen_rows = vec![false; dim];
        let mut seen_cols = vec![false; dim];
        let mut out = Self::zeros(self.shape);
        for (&(r, c, a, b), v) in &self.entries {
            if seen_rows[r] || seen_cols[c] {
                return Err(Error::Contract(
                    "inverse needs at most one monomial per row and column".into(),
                ));
            }
            seen_rows[r] = true;
            seen_cols[c] = true;
            out.add(c, r, -a, -b, v.recip());
        }
        if seen_rows.iter().any(|s| !s) {
            return Err(Error::Contract("monomial operator is singular".into()));
        }
        Ok(out)
    }

    /// If every entry carries the monomial t^a T^b, returns the coefficient operator.
    pub fn coefficient_of(&self, a: i32, b: i32) -> Option<ExteriorOperator<Rational64>> {
        let mut op = ExteriorOperator::zeros_unchecked(self.shape, false);
        for (&(r, c, ea, eb), v) in &self.entries {
            if ea != a || eb != b {
                return None;
            }
            op.add_at(r, c, *v);
        }
        Some(op)
    }

    pub fn evaluate(&self, t: f64, vertical: f64) -> ExteriorOperator<f64> {
        let mut op = ExteriorOperator::zeros_unchecked(self.shape, false);
        for (&(r, c, a, b), v) in &self.entries {
            op.add_at(r, c, v.to_f64() * t.powi(a) * vertical.powi(b));
        }
        op
    }
}

/// Symbolic Hodge star of g̃_{t,T} = t⁻²(g_M + T⁻² g_Y).
pub fn hodge_star_symbolic(shape: AlgebraShape) -> MonomialOperator {
    let mut out = MonomialOperator::zeros(shape);
    let flat = flat_hodge_star::<i64>(shape);
    for (r, c, v) in flat.entries() {
        let w = BasisWord(c as u32);
        let (a, b) = scaling_monomial(w.base_degree(&shape), w.fiber_degree(&shape), &shape);
        out.add(r, c, a, b, Rational64::from_integer(v));
    }
    out
}

/// Numerical Hodge star of g̃_{t,T}.
pub fn hodge_star_scaled(shape: AlgebraShape, t: f64, vertical: f64) -> Result<ExteriorOperator<f64>> {
    if !(t > 0.0 && vertical > 0.0) || !t.is_finite() || !vertical.is_finite() {
        return Err(Error::Domain(format!(
            "scales must be positive and finite, got t = {t}, T = {vertical}"
        )));
    }
    Ok(hodge_star_symbolic(shape).evaluate(t, vertical))
}

/// star⁻¹ ∂_t star as the coefficient of t⁻¹.
pub fn star_log_derivative_t(shape: AlgebraShape) -> Result<ExteriorOperator<Rational64>> {
    let star = hodge_star_symbolic(shape);
    let ld = star.inverse()?.compose(&star.derivative_t());
    ld.coefficient_of(-1, 0)
        .ok_or_else(|| Error::Contract("t log-derivative is not a pure t^-1 monomial".into()))
}

/// star⁻¹ ∂_T star as the coefficient of T⁻¹.
pub fn star_log_derivative_vertical(shape: AlgebraShape) -> Result<ExteriorOperator<Rational64>> {
    let star = hodge_star_symbolic(shape);
    let ld = star.inverse()?.compose(&star.derivative_vertical());
    ld.coefficient_of(0, -1)
        .ok_or_else(|| Error::Contract("T log-derivative is not a pure T^-1 monomial".into()))
}
