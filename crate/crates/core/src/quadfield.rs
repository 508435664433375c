//! Imaginary quadratic fields `ℚ(√−m)`: integral elements, prime splitting,
//! valuations, and class groups on reduced binary quadratic forms.
//!
//! A primitive form `(a, b, c)` of discriminant `D` is identified with the
//! ideal `[a, (−b + √D)/2]`. Composition and reduction can carry a field
//! multiplier, so a chain of ideal operations ending at the principal class
//! yields an explicit generator.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{is_prime, kronecker, primes_up_to, sqrt_mod, squarefree_decompose};
use crate::error::{Error, Result};
use crate::lattice::{smith, Mat};

pub const MAX_M: u64 = 10_000_000_000_000;

/// Class numbers above this give `Error::Limit`.
pub const MAX_CLASS_NUMBER: u64 = 1 << 21;
const MEMO_MAX_H: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuadraticField {
    pub m: u64,
    pub discriminant: i64,
    pub ring_is_maximal: bool,
}

impl QuadraticField {
    pub fn new(m: u64) -> Result<Self> {
        if m == 0 || m > MAX_M {
            return Err(Error::OutOfRange(format!("m = {m} outside [1, {MAX_M}]")));
        }
        if squarefree_decompose(m)?.0 != m {
            return Err(Error::InvalidInput(format!("m = {m} is not squarefree")));
        }
        let discriminant = if m % 4 == 3 { -(m as i64) } else { -4 * m as i64 };
        Ok(QuadraticField { m, discriminant, ring_is_maximal: true })
    }

    /// Whether `𝒪 = ℤ[(1 + √−m)/2]`.
    pub fn half_integral(&self) -> bool {
        self.m % 4 == 3
    }

    /// `√D = w·√−m`.
    fn w(&self) -> i64 {
        if self.half_integral() {
            1
        } else {
            2
        }
    }

    pub fn one(&self) -> FieldElement {
        FieldElement::from_int(self, 1)
    }

    pub fn sqrt_neg_m(&self) -> FieldElement {
        FieldElement { m: self.m, x: BigInt::zero(), y: BigInt::one(), den: 1 }
    }
}

/// An integral element `(x + y√−m)/den`, `den ∈ {1, 2}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldElement {
    pub m: u64,
    pub x: BigInt,
    pub y: BigInt,
    pub den: u8,
}

impl FieldElement {
    pub fn new(field: &QuadraticField, x: BigInt, y: BigInt, den: u8) -> Result<Self> {
        if den != 1 && den != 2 {
            return Err(Error::InvalidInput(format!("denominator {den} not in {{1, 2}}")));
        }
        Self::canonical(field.m, x, y, u32::from(den))
    }

    pub fn from_int(field: &QuadraticField, n: i64) -> Self {
        FieldElement { m: field.m, x: BigInt::from(n), y: BigInt::zero(), den: 1 }
    }

    fn canonical(m: u64, mut x: BigInt, mut y: BigInt, mut den: u32) -> Result<Self> {
        while den > 1 && x.is_even() && y.is_even() {
            x /= 2;
            y /= 2;
            den /= 2;
        }
        if den == 1 || (den == 2 && m % 4 == 3 && x.is_odd() && y.is_odd()) {
            Ok(FieldElement { m, x, y, den: den as u8 })
        } else {
            Err(Error::InvalidInput("element is not integral".into()))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.x.is_zero() && self.y.is_zero()
    }

    pub fn norm(&self) -> BigInt {
        let d = BigInt::from(u32::from(self.den) * u32::from(self.den));
        (&self.x * &self.x + BigInt::from(self.m) * &self.y * &self.y) / d
    }

    pub fn conj(&self) -> Self {
        FieldElement { m: self.m, x: self.x.clone(), y: -&self.y, den: self.den }
    }

    pub fn mul(&self, o: &Self) -> Self {
        debug_assert_eq!(self.m, o.m);
        let m = BigInt::from(self.m);
        let x = &self.x * &o.x - m * &self.y * &o.y;
        let y = &self.x * &o.y + &o.x * &self.y;
        Self::canonical(self.m, x, y, u32::from(self.den) * u32::from(o.den)).expect("ring is closed")
    }

    pub fn pow(&self, mut e: u64) -> Self {
        let mut acc = FieldElement { m: self.m, x: BigInt::one(), y: BigInt::zero(), den: 1 };
        let mut base = self.clone();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        acc
    }

    /// Coordinates `(X, Y)` with `self = X + Y·ω`, where `ω = √−m` or
    /// `(1 + √−m)/2`.
    pub fn basis_coords(&self) -> (BigInt, BigInt) {
        if self.m % 4 == 3 {
            let s = 2 / u32::from(self.den);
            let (x2, y2) = (&self.x * s, &self.y * s);
            ((&x2 - &y2) / 2, y2)
        } else {
            (self.x.clone(), self.y.clone())
        }
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.y.is_negative() { '-' } else { '+' };
        let body = format!("{} {} {}·√-{}", self.x, sign, self.y.abs(), self.m);
        if self.den == 1 {
            write!(f, "{body}")
        } else {
            write!(f, "({body})/{}", self.den)
        }
    }
}

/// `(x + y√−m)/d` with `d > 0`, not necessarily integral.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Frac {
    pub x: BigInt,
    pub y: BigInt,
    pub d: BigInt,
}

impl Frac {
    pub fn int(n: BigInt) -> Self {
        Frac { x: n, y: BigInt::zero(), d: BigInt::one() }
    }

    fn new(x: BigInt, y: BigInt, d: BigInt) -> Self {
        let g = x.gcd(&y).gcd(&d);
        let s = if d.is_negative() { -g } else { g };
        Frac { x: x / &s, y: y / &s, d: d / s }
    }

    pub fn mul(&self, o: &Frac, m: u64) -> Frac {
        let mm = BigInt::from(m);
        Frac::new(
            &self.x * &o.x - mm * &self.y * &o.y,
            &self.x * &o.y + &o.x * &self.y,
            &self.d * &o.d,
        )
    }

    pub fn inv(&self, m: u64) -> Frac {
        let n = &self.x * &self.x + BigInt::from(m) * &self.y * &self.y;
        Frac::new(&self.d * &self.x, -(&self.d * &self.y), n)
    }

    /// `self` if integral, else `self·d^p`: integral and in the same class
    /// modulo `p`-th powers.
    pub fn to_integral(&self, field: &QuadraticField, p: u64) -> FieldElement {
        if self.d <= BigInt::from(2) {
            let den = self.d.to_u32().expect("small");
            if let Ok(e) = FieldElement::canonical(field.m, self.x.clone(), self.y.clone(), den) {
                return e;
            }
        }
        let s = num_traits::pow::pow(self.d.clone(), (p - 1) as usize);
        FieldElement::canonical(field.m, &self.x * &s, &self.y * &s, 1).expect("integral")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    Split,
    Inert,
    Ramified,
}

/// A prime of `𝒪` above `q`. For split `q` the label `root` is the image of
/// `√−m` in `𝒪/𝔮 = F_q` (for `q = 2`, the image of `(1 + √−m)/2`); the
/// unconjugated prime carries the smaller root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrimeIdeal {
    pub q: u64,
    pub kind: SplitKind,
    pub root: Option<u64>,
    pub conjugate: bool,
}

impl PrimeIdeal {
    pub fn conj(&self) -> PrimeIdeal {
        match (self.kind, self.root) {
            (SplitKind::Split, Some(s)) => {
                let r = if self.q == 2 { 1 - s } else { self.q - s };
                PrimeIdeal { root: Some(r), conjugate: !self.conjugate, ..*self }
            }
            _ => *self,
        }
    }

    /// Residue degree.
    pub fn degree(&self) -> u32 {
        if self.kind == SplitKind::Inert {
            2
        } else {
            1
        }
    }

    /// Ramification index.
    pub fn ramification(&self) -> u32 {
        if self.kind == SplitKind::Ramified {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for PrimeIdeal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.root) {
            (SplitKind::Split, Some(s)) => write!(f, "q{}[{}]", self.q, s),
            (SplitKind::Inert, _) => write!(f, "({})", self.q),
            _ => write!(f, "q{}", self.q),
        }
    }
}

/// Splitting of `q` in the field, returning the unconjugated prime above it.
pub fn split_type(field: &QuadraticField, q: u64) -> Result<PrimeIdeal> {
    if !is_prime(q) {
        return Err(Error::InvalidInput(format!("{q} is not prime")));
    }
    let kind = match kronecker(field.discriminant, q) {
        0 => SplitKind::Ramified,
        1 => SplitKind::Split,
        _ => SplitKind::Inert,
    };
    let root = match kind {
        SplitKind::Split if q == 2 => Some(0),
        SplitKind::Split => sqrt_mod(-((field.m % q) as i64), q)?,
        _ => None,
    };
    Ok(PrimeIdeal { q, kind, root, conjugate: false })
}

pub fn primes_above(field: &QuadraticField, q: u64) -> Result<Vec<PrimeIdeal>> {
    let p = split_type(field, q)?;
    Ok(if p.kind == SplitKind::Split { vec![p, p.conj()] } else { vec![p] })
}

/// Image of the integral basis element `ω` in `F_q` for a split prime.
fn omega_image(field: &QuadraticField, pr: &PrimeIdeal) -> u64 {
    let s = pr.root.expect("split prime has a root");
    if pr.q == 2 || !field.half_integral() {
        s
    } else {
        (1 + s) * pr.q.div_ceil(2) % pr.q
    }
}

fn mod_u64(n: &BigInt, q: u64) -> u64 {
    n.mod_floor(&BigInt::from(q)).to_u64().expect("residue fits")
}

fn val_big(n: &BigInt, q: u64) -> u32 {
    let q = BigInt::from(q);
    let mut n = n.clone();
    let mut v = 0;
    while !n.is_zero() && n.is_multiple_of(&q) {
        n /= &q;
        v += 1;
    }
    v
}

fn basis_norm(field: &QuadraticField, xx: &BigInt, yy: &BigInt) -> BigInt {
    if field.half_integral() {
        xx * xx + xx * yy + BigInt::from((1 + field.m) / 4) * yy * yy
    } else {
        xx * xx + BigInt::from(field.m) * yy * yy
    }
}

/// Exact `𝔮`-adic valuation of a nonzero integral element.
pub fn valuation(e: &FieldElement, pr: &PrimeIdeal) -> Result<u32> {
    if e.is_zero() {
        return Err(Error::InvalidInput("valuation of zero".into()));
    }
    let field = QuadraticField { m: e.m, discriminant: 0, ring_is_maximal: true };
    let q = BigInt::from(pr.q);
    let (mut xx, mut yy) = e.basis_coords();
    let mut k = 0;
    while xx.is_multiple_of(&q) && yy.is_multiple_of(&q) {
        xx /= &q;
        yy /= &q;
        k += 1;
    }
    Ok(match pr.kind {
        SplitKind::Inert => k,
        SplitKind::Ramified => 2 * k + val_big(&basis_norm(&field, &xx, &yy), pr.q),
        SplitKind::Split => {
            let w = omega_image(&field, pr);
            if mod_u64(&(&xx + &yy * w), pr.q) == 0 {
                k + val_big(&basis_norm(&field, &xx, &yy), pr.q)
            } else {
                k
            }
        }
    })
}

/// Image of `e` in `𝒪/𝔮 ≅ F_q` for a split prime.
pub fn residue_at_split(e: &FieldElement, pr: &PrimeIdeal) -> Result<u64> {
    if pr.kind != SplitKind::Split {
        return Err(Error::Precondition(format!("{pr} is not split")));
    }
    let field = QuadraticField { m: e.m, discriminant: 0, ring_is_maximal: true };
    let (xx, yy) = e.basis_coords();
    Ok(mod_u64(&(xx + yy * omega_image(&field, pr)), pr.q))
}

/// A primitive positive definite binary quadratic form `ax² + bxy + cy²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Form {
    pub a: i64,
    pub b: i64,
    pub c: i64,
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.a, self.b, self.c)
    }
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    // returns (g, u, v) with u·a + v·b = g ≥ 0
    let (mut r0, mut r1, mut s0, mut s1, mut t0, mut t1) = (a, b, 1i128, 0i128, 0i128, 1i128);
    while r1 != 0 {
        let q = r0.div_euclid(r1);
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 < 0 {
        (-r0, -s0, -t0)
    } else {
        (r0, s0, t0)
    }
}

impl Form {
    pub fn discriminant(&self) -> i64 {
        (i128::from(self.b) * i128::from(self.b) - 4 * i128::from(self.a) * i128::from(self.c)) as i64
    }

    pub fn identity(d: i64) -> Form {
        let b = d.rem_euclid(2);
        Form { a: 1, b, c: (b * b - d) / 4 }
    }

    pub fn is_identity(&self) -> bool {
        self.a == 1
    }

    pub fn is_reduced(&self) -> bool {
        self.b.abs() <= self.a && self.a <= self.c && (self.b >= 0 || (self.b.abs() != self.a && self.a != self.c))
    }

    /// Form of the ideal conjugate to this one (its inverse class).
    pub fn inverse(&self) -> Form {
        Form { a: self.a, b: -self.b, c: self.c }
    }

    fn from_ab(a: i128, b: i128, d: i128) -> Form {
        let c = (b * b - d) / (4 * a);
        Form { a: a as i64, b: b as i64, c: c as i64 }
    }

    /// Reduction; `on_swap(b, c)` is called before each `(a,b,c) → (c,−b,a)`.
    fn reduce_with(self, mut on_swap: impl FnMut(i64, i64)) -> Form {
        let d = i128::from(self.discriminant());
        let (mut a, mut b) = (i128::from(self.a), i128::from(self.b));
        loop {
            let k = (a - b).div_euclid(2 * a);
            b += 2 * k * a;
            let c = (b * b - d) / (4 * a);
            if a > c || (a == c && b < 0) {
                on_swap(b as i64, c as i64);
                (a, b) = (c, -b);
            } else {
                return Form::from_ab(a, b, d);
            }
        }
    }

    pub fn reduced(self) -> Form {
        self.reduce_with(|_, _| {})
    }

    /// Unreduced composition: `I(self)·I(o) = content·I(result)`.
    pub fn compose(&self, o: &Form) -> (Form, i64) {
        let d = i128::from(self.discriminant());
        let (f1, f2) = if self.a > o.a { (o, self) } else { (self, o) };
        let (a1, b1) = (i128::from(f1.a), i128::from(f1.b));
        let (a2, b2, c2) = (i128::from(f2.a), i128::from(f2.b), i128::from(f2.c));
        let s = (b1 + b2) / 2;
        let n = b2 - s;
        let (y1, dd) = if a2 % a1 == 0 {
            (0, a1)
        } else {
            let (g, u, _) = ext_gcd(a2, a1);
            (u, g)
        };
        let (x2, y2, d1) = if s % dd == 0 {
            (0, -1, dd)
        } else {
            let (g, x, y) = ext_gcd(s, dd);
            (x, -y, g)
        };
        let v1 = a1 / d1;
        let v2 = a2 / d1;
        let r = (y1 * y2 * n - x2 * c2).rem_euclid(v1);
        let b3 = b2 + 2 * v2 * r;
        (Form::from_ab(v1 * v2, b3, d), d1 as i64)
    }

    pub fn mul(&self, o: &Form) -> Form {
        self.compose(o).0.reduced()
    }

    pub fn pow(&self, mut e: u64) -> Form {
        let mut acc = Form::identity(self.discriminant());
        let mut base = *self;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        acc
    }
}

/// Form attached to a split or ramified prime ideal.
pub fn prime_form(field: &QuadraticField, pr: &PrimeIdeal) -> Option<Form> {
    let d = i128::from(field.discriminant);
    let q = i128::from(pr.q);
    let b: i128 = match pr.kind {
        SplitKind::Inert => return None,
        SplitKind::Ramified => {
            if pr.q == 2 {
                if field.m % 2 == 0 {
                    0
                } else {
                    2
                }
            } else if field.half_integral() {
                q
            } else {
                0
            }
        }
        SplitKind::Split => {
            let s = i128::from(pr.root.expect("split root"));
            if pr.q == 2 {
                2 * s - 1
            } else if field.half_integral() {
                if s % 2 == 1 {
                    s
                } else {
                    s - q
                }
            } else {
                2 * s
            }
        }
    };
    debug_assert_eq!((b * b - d).rem_euclid(4 * q), 0);
    Some(Form::from_ab(q, b, d))
}

/// An ideal `coeff·I(form)` with `form` primitive.
#[derive(Debug, Clone)]
pub(crate) struct Tracked {
    pub form: Form,
    pub coeff: Frac,
}

impl QuadraticField {
    pub(crate) fn tracked_one(&self) -> Tracked {
        Tracked { form: Form::identity(self.discriminant), coeff: Frac::int(BigInt::one()) }
    }

    pub(crate) fn tracked_prime(&self, pr: &PrimeIdeal) -> Tracked {
        match prime_form(self, pr) {
            Some(form) => Tracked { form, coeff: Frac::int(BigInt::one()) },
            None => Tracked { form: Form::identity(self.discriminant), coeff: Frac::int(BigInt::from(pr.q)) },
        }
    }

    pub(crate) fn tracked_form(&self, f: &Form) -> Tracked {
        Tracked { form: *f, coeff: Frac::int(BigInt::one()) }
    }

    fn tracked_reduce(&self, t: Tracked) -> Tracked {
        let mut coeff = t.coeff;
        let w = self.w();
        let m = self.m;
        let form = t.form.reduce_with(|b, c| {
            let beta = Frac::new(BigInt::from(-b), BigInt::from(w), BigInt::from(2 * c));
            coeff = coeff.mul(&beta, m);
        });
        Tracked { form, coeff }
    }

    pub(crate) fn tracked_mul(&self, s: &Tracked, o: &Tracked) -> Tracked {
        let (form, content) = s.form.compose(&o.form);
        let coeff = s.coeff.mul(&o.coeff, self.m).mul(&Frac::int(BigInt::from(content)), self.m);
        self.tracked_reduce(Tracked { form, coeff })
    }

    pub(crate) fn tracked_inv(&self, s: &Tracked) -> Tracked {
        let coeff = s.coeff.mul(&Frac::int(BigInt::from(s.form.a)), self.m).inv(self.m);
        Tracked { form: s.form.inverse(), coeff }
    }

    pub(crate) fn tracked_pow(&self, s: &Tracked, e: i128) -> Tracked {
        let mut base = if e < 0 { self.tracked_inv(s) } else { s.clone() };
        let mut e = e.unsigned_abs();
        let mut acc = self.tracked_one();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.tracked_mul(&acc, &base);
            }
            base = self.tracked_mul(&base, &base);
            e >>= 1;
        }
        acc
    }
}

/// The class group, with a lookup table from reduced forms to group
/// coordinates (memory is linear in `h`).
pub struct ClassGroup {
    pub m: u64,
    pub discriminant: i64,
    pub h: u64,
    pub cyclic_factors: Vec<u64>,
    pub generators: Vec<Form>,
    table: HashMap<(i64, i64), u32>,
    radix: Vec<u64>,
    to_snf: Vec<Vec<i128>>,
}

impl fmt::Debug for ClassGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClassGroup")
            .field("m", &self.m)
            .field("h", &self.h)
            .field("cyclic_factors", &self.cyclic_factors)
            .field("generators", &self.generators)
            .finish()
    }
}

impl ClassGroup {
    /// Coordinates of the class of `f` against `generators`, each reduced
    /// modulo its cyclic factor.
    pub fn dlog(&self, f: &Form) -> Result<Vec<u64>> {
        let r = f.reduced();
        let mut idx = u64::from(
            *self
                .table
                .get(&(r.a, r.b))
                .ok_or_else(|| Error::InvalidInput(format!("form {f} has the wrong discriminant")))?,
        );
        let mut x = Vec::with_capacity(self.radix.len());
        for &e in &self.radix {
            x.push(i128::from((idx % e) as u32));
            idx /= e;
        }
        Ok(self
            .cyclic_factors
            .iter()
            .enumerate()
            .map(|(j, &d)| {
                let s: i128 = x.iter().zip(&self.to_snf).map(|(xi, row)| xi * row[j]).sum();
                s.rem_euclid(i128::from(d)) as u64
            })
            .collect())
    }

    pub fn element(&self, coords: &[i128]) -> Form {
        let mut acc = Form::identity(self.discriminant);
        for ((g, &c), &d) in self.generators.iter().zip(coords).zip(&self.cyclic_factors) {
            acc = acc.mul(&g.pow(c.rem_euclid(i128::from(d)) as u64));
        }
        acc
    }

    pub fn order_of(&self, f: &Form) -> Result<u64> {
        let c = self.dlog(f)?;
        Ok(c.iter().zip(&self.cyclic_factors).fold(1u64, |acc, (&x, &d)| {
            let o = d / crate::arith::gcd(x, d);
            acc / crate::arith::gcd(acc, o) * o
        }))
    }

    /// `p`-rank of the class group.
    pub fn p_rank(&self, p: u64) -> usize {
        self.cyclic_factors.iter().filter(|&&d| d % p == 0).count()
    }
}

fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

fn compute_class_group(m: u64) -> Result<ClassGroup> {
    let field = QuadraticField::new(m)?;
    let d = field.discriminant;
    let id = Form::identity(d);
    let mut elems = vec![id];
    let mut table = HashMap::new();
    table.insert((id.a, id.b), 0u32);
    let mut added: Vec<Form> = Vec::new();
    let mut radix: Vec<u64> = Vec::new();
    let mut rels: Vec<Vec<i128>> = Vec::new();
    let bound = isqrt(d.unsigned_abs() / 3);
    for q in primes_up_to(bound) {
        let pr = split_type(&field, q)?;
        let Some(g) = prime_form(&field, &pr).map(Form::reduced) else { continue };
        if table.contains_key(&(g.a, g.b)) {
            continue;
        }
        let mut e = 1u64;
        let mut cur = g;
        while !table.contains_key(&(cur.a, cur.b)) {
            cur = cur.mul(&g);
            e += 1;
        }
        let mut idx = u64::from(table[&(cur.a, cur.b)]);
        let mut row: Vec<i128> = radix
            .iter()
            .map(|&r| {
                let x = -i128::from(idx % r);
                idx /= r;
                x
            })
            .collect();
        row.push(i128::from(e));
        let n = elems.len();
        if (n as u64) * e > MAX_CLASS_NUMBER {
            return Err(Error::Limit(format!("class group of m = {m} too large")));
        }
        let mut power = g;
        for _ in 1..e {
            for i in 0..n {
                let f = elems[i].mul(&power);
                table.insert((f.a, f.b), elems.len() as u32);
                elems.push(f);
            }
            power = power.mul(&g);
        }
        added.push(g);
        radix.push(e);
        rels.push(row);
    }
    let t = added.len();
    let h = elems.len() as u64;
    let rmat: Mat = rels
        .into_iter()
        .map(|mut r| {
            r.resize(t, 0);
            r
        })
        .collect();
    let snf = smith(&rmat, t)?;
    let keep: Vec<usize> = (0..t).filter(|&j| snf.diag[j] > 1).collect();
    let cyclic_factors: Vec<u64> = keep.iter().map(|&j| snf.diag[j] as u64).collect();
    let generators = keep
        .iter()
        .map(|&j| {
            added.iter().enumerate().fold(Form::identity(d), |acc, (i, g)| {
                acc.mul(&g.pow(snf.v_inv[j][i].rem_euclid(i128::from(h)) as u64))
            })
        })
        .collect();
    let to_snf = (0..t).map(|i| keep.iter().map(|&j| snf.v[i][j]).collect()).collect();
    Ok(ClassGroup { m, discriminant: d, h, cyclic_factors, generators, table, radix, to_snf })
}

fn memo() -> &'static RwLock<HashMap<u64, Arc<ClassGroup>>> {
    static MEMO: OnceLock<RwLock<HashMap<u64, Arc<ClassGroup>>>> = OnceLock::new();
    MEMO.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Class group of `ℚ(√−m)`. Groups with `h ≤ MEMO_MAX_H` are memoized.
pub fn class_group(m: u64) -> Result<Arc<ClassGroup>> {
    if let Some(g) = memo().read().expect("memo lock").get(&m) {
        return Ok(g.clone());
    }
    let g = Arc::new(compute_class_group(m)?);
    if g.h > MEMO_MAX_H {
        return Ok(g);
    }
    Ok(memo().write().expect("memo lock").entry(m).or_insert(g).clone())
}

pub fn class_number(m: u64) -> Result<u64> {
    Ok(class_group(m)?.h)
}

/// Number of reduced primitive forms of discriminant `d < 0`, by direct
/// enumeration.
pub fn count_reduced_forms(d: i64) -> u64 {
    let mut count = 0;
    let amax = isqrt(d.unsigned_abs() / 3) as i64;
    for a in 1..=amax {
        for b in -a + 1..=a {
            let num = i128::from(b) * i128::from(b) - i128::from(d);
            if num % (4 * i128::from(a)) != 0 {
                continue;
            }
            let c = (num / (4 * i128::from(a))) as i64;
            let f = Form { a, b, c };
            if c >= a && f.is_reduced() && a.gcd(&b).gcd(&c) == 1 {
                count += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f(m: u64) -> QuadraticField {
        QuadraticField::new(m).unwrap()
    }

    fn el(k: &QuadraticField, x: i64, y: i64, den: u8) -> FieldElement {
        FieldElement::new(k, x.into(), y.into(), den).unwrap()
    }

    #[test]
    fn class_numbers_small() {
        assert_eq!(class_number(3).unwrap(), 1);
        assert_eq!(class_number(1).unwrap(), 1);
        assert_eq!(class_number(5).unwrap(), 2);
        assert_eq!(class_number(23).unwrap(), 3);
        assert_eq!(class_number(47).unwrap(), 5);
        let g = class_group(14).unwrap();
        assert_eq!(g.h, 4);
        assert_eq!(g.cyclic_factors, vec![4]);
        let g = class_group(21).unwrap();
        assert_eq!(g.cyclic_factors, vec![2, 2]);
        assert!(QuadraticField::new(12).is_err());
    }

    #[test]
    fn class_numbers_vs_enumeration() {
        for m in 1..=2000u64 {
            if squarefree_decompose(m).unwrap().0 != m {
                continue;
            }
            let g = class_group(m).unwrap();
            assert_eq!(g.h, count_reduced_forms(g.discriminant), "m = {m}");
            assert_eq!(g.cyclic_factors.iter().product::<u64>().max(1), g.h);
            for (gen, &d) in g.generators.iter().zip(&g.cyclic_factors) {
                assert!(gen.pow(d).is_identity());
                assert!(gen.is_reduced());
            }
        }
    }

    #[test]
    fn dlog_roundtrip() {
        for m in [5u64, 14, 21, 47, 105, 1155, 5005] {
            let g = class_group(m).unwrap();
            let k = f(m);
            for q in primes_up_to(200) {
                let pr = split_type(&k, q).unwrap();
                if let Some(pf) = prime_form(&k, &pr) {
                    let c = g.dlog(&pf).unwrap();
                    let ci: Vec<i128> = c.iter().map(|&x| x as i128).collect();
                    assert_eq!(g.element(&ci), pf.reduced());
                }
            }
        }
    }

    #[test]
    fn split_examples() {
        let k = f(3);
        let p7 = split_type(&k, 7).unwrap();
        assert_eq!((p7.kind, p7.root), (SplitKind::Split, Some(2)));
        assert_eq!(split_type(&k, 3).unwrap().kind, SplitKind::Ramified);
        assert_eq!(split_type(&k, 5).unwrap().kind, SplitKind::Inert);
        assert_eq!(split_type(&k, 2).unwrap().kind, SplitKind::Inert);
        assert_eq!(split_type(&f(7), 2).unwrap().kind, SplitKind::Split);
    }

    #[test]
    fn valuation_examples() {
        let k = f(3);
        let p3 = split_type(&k, 3).unwrap();
        assert_eq!(valuation(&k.sqrt_neg_m(), &p3).unwrap(), 1);
        let p7 = split_type(&k, 7).unwrap();
        let e = el(&k, 2, 1, 1);
        // 2 + √−3 ↦ 2 + 2 = 4 at the root-2 prime, so it lies in the conjugate.
        assert_eq!(valuation(&e, &p7).unwrap(), 0);
        assert_eq!(valuation(&e, &p7.conj()).unwrap(), 1);
        let seven = FieldElement::from_int(&k, 7);
        assert_eq!(valuation(&seven, &p7).unwrap(), 1);
        assert_eq!(valuation(&seven, &p7.conj()).unwrap(), 1);
        assert_eq!(valuation(&el(&k, 1, 3, 2), &p7).unwrap(), 1);
        assert_eq!(valuation(&FieldElement::from_int(&k, 4), &split_type(&k, 2).unwrap()).unwrap(), 2);
        assert!(valuation(&FieldElement::from_int(&k, 0), &p7).is_err());
    }

    #[test]
    fn residue_examples() {
        let k = f(3);
        let p7 = split_type(&k, 7).unwrap();
        assert_eq!(residue_at_split(&k.sqrt_neg_m(), &p7).unwrap(), 2);
        assert_eq!(residue_at_split(&FieldElement::from_int(&k, 5), &p7).unwrap(), 5);
        assert_eq!(residue_at_split(&el(&k, 1, 1, 1), &p7).unwrap(), 3);
        assert_eq!(residue_at_split(&el(&k, 1, 3, 2), &p7).unwrap(), 0);
        assert!(residue_at_split(&k.one(), &split_type(&k, 5).unwrap()).is_err());
    }

    #[test]
    fn canonical_elements() {
        let k = f(3);
        assert_eq!(el(&k, 2, 4, 2), el(&k, 1, 2, 1));
        assert!(FieldElement::new(&f(5), 1.into(), 1.into(), 2).is_err());
        assert!(FieldElement::new(&k, 1.into(), 2.into(), 2).is_err());
        assert_eq!(el(&k, 1, 3, 2).norm(), BigInt::from(7));
    }

    /// Membership of `(x + y√D)/2` in `[a, (−b + √D)/2]`.
    fn in_ideal(f: &Form, x: &BigInt, y: &BigInt) -> bool {
        let s: BigInt = x + y * f.b;
        s.is_even() && Integer::is_multiple_of(&(s / 2), &BigInt::from(f.a))
    }

    #[test]
    fn composition_content() {
        for m in [5u64, 14, 23, 47, 71] {
            let k = f(m);
            let d = k.discriminant;
            let forms: Vec<Form> = primes_up_to(60)
                .into_iter()
                .filter_map(|q| prime_form(&k, &split_type(&k, q).unwrap()))
                .collect();
            for f1 in &forms {
                for f2 in &forms {
                    let (f3, c) = f1.compose(f2);
                    assert_eq!(f3.discriminant(), d);
                    assert_eq!(f1.a * f2.a, c * c * f3.a);
                    // generators of I1·I2, written as (x + y√D)/2
                    let gens = [
                        (BigInt::from(2 * f1.a * f2.a), BigInt::zero()),
                        (BigInt::from(-f1.a * f2.b), BigInt::from(f1.a)),
                        (BigInt::from(-f2.a * f1.b), BigInt::from(f2.a)),
                        {
                            let (b1, b2) = (BigInt::from(f1.b), BigInt::from(f2.b));
                            ((&b1 * &b2 + BigInt::from(d)) / 2, -(b1 + b2) / 2)
                        },
                    ];
                    let cc = BigInt::from(c);
                    for (x, y) in gens {
                        assert!(x.is_multiple_of(&cc) && y.is_multiple_of(&cc));
                        assert!(in_ideal(&f3, &(x / &cc), &(y / &cc)), "m={m} {f1} {f2}");
                    }
                }
            }
        }
    }

    #[test]
    fn tracked_principal_generators() {
        for m in [3u64, 5, 14, 23, 47] {
            let k = f(m);
            let g = class_group(m).unwrap();
            for q in primes_up_to(80) {
                for pr in primes_above(&k, q).unwrap() {
                    let t = k.tracked_prime(&pr);
                    let o = match prime_form(&k, &pr) {
                        Some(pf) => g.order_of(&pf).unwrap(),
                        None => 1,
                    };
                    let r = k.tracked_pow(&t, o as i128);
                    assert!(r.form.is_identity());
                    let gen = r.coeff.to_integral(&k, 1);
                    assert_eq!(gen.norm(), BigInt::from(q).pow((o * u64::from(pr.degree())) as u32));
                    assert_eq!(u64::from(valuation(&gen, &pr).unwrap()), o);
                    if pr.kind == SplitKind::Split {
                        assert_eq!(valuation(&gen, &pr.conj()).unwrap(), 0);
                    }
                    let inv = k.tracked_pow(&t, -(o as i128));
                    assert!(inv.form.is_identity());
                    let u = inv.coeff.mul(&r.coeff, m);
                    assert_eq!(&u.x * &u.x + BigInt::from(m) * &u.y * &u.y, &u.d * &u.d);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn split_trichotomy(m in 1u64..100_000, qi in 0usize..168) {
            prop_assume!(squarefree_decompose(m).unwrap().0 == m);
            let q = primes_up_to(1000)[qi];
            let k = f(m);
            let pr = split_type(&k, q).unwrap();
            let expect = match kronecker(k.discriminant, q) { 0 => SplitKind::Ramified, 1 => SplitKind::Split, _ => SplitKind::Inert };
            prop_assert_eq!(pr.kind, expect);
            if let Some(s) = pr.root {
                if q != 2 {
                    prop_assert_eq!((s * s + m) % q, 0);
                    prop_assert!(s <= q / 2);
                }
            }
        }

        #[test]
        fn valuation_additive(m in 1u64..200, x1 in -60i64..60, y1 in -60i64..60, x2 in -60i64..60, y2 in -60i64..60, qi in 0usize..10) {
            prop_assume!(squarefree_decompose(m).unwrap().0 == m);
            prop_assume!((x1, y1) != (0, 0) && (x2, y2) != (0, 0));
            let k = f(m);
            let q = primes_up_to(30)[qi];
            let (a, b) = (el(&k, x1, y1, 1), el(&k, x2, y2, 1));
            for pr in primes_above(&k, q).unwrap() {
                let va = valuation(&a, &pr).unwrap();
                let vb = valuation(&b, &pr).unwrap();
                prop_assert_eq!(valuation(&a.mul(&b), &pr).unwrap(), va + vb);
            }
            let n = a.norm();
            let total: u32 = primes_above(&k, q).unwrap().iter().map(|pr| valuation(&a, pr).unwrap() * pr.degree()).sum();
            prop_assert_eq!(total, val_big(&n, q));
        }

        #[test]
        fn residue_multiplicative(m in 1u64..500, x1 in -99i64..99, y1 in -99i64..99, x2 in -99i64..99, y2 in -99i64..99, qi in 0usize..25) {
            prop_assume!(squarefree_decompose(m).unwrap().0 == m);
            let k = f(m);
            let q = primes_up_to(100)[qi];
            let pr = split_type(&k, q).unwrap();
            prop_assume!(pr.kind == SplitKind::Split);
            let (a, b) = (el(&k, x1, y1, 1), el(&k, x2, y2, 1));
            for pr in [pr, pr.conj()] {
                let ra = residue_at_split(&a, &pr).unwrap();
                let rb = residue_at_split(&b, &pr).unwrap();
                prop_assert_eq!(residue_at_split(&a.mul(&b), &pr).unwrap(), ra * rb % q);
                prop_assert_eq!(ra == 0, valuation(&a, &pr).map(|v| v > 0).unwrap_or(true));
            }
        }
    }
}
