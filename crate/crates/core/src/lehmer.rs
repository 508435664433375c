//! Cases with `7 | x`: the norm equation `C₁x² + C₂ = yᵖ` over `ℚ(√−3)`.
//!
//! A solution gives `γ = a + b√−3` with `γγ̄ = C₁y` and
//! `Im(γᵖ) = d·C₁^{(p−1)/2}`, where `C₁C₂ = 3d²` and `b | d`. The admissible
//! `a` are the integer roots of `g_b`, so each exponent reduces to finitely
//! many root searches. Exponents come from the primitive-divisor bound.

use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{decimal, exact_root, factor, gcd, jacobi, mul_mod, pow_mod, primes_up_to, squarefree_decompose};
use crate::cases::{reconstruct, satisfies_main_equation, template, Branch};
use crate::error::{Error, Result};
use crate::quadfield::class_number;

/// Above this exponent `g_b` is never expanded; roots are screened through
/// `(X + b√−3)ᵖ` modulo small primes instead.
pub const EXPAND_MAX_P: u64 = 97;

/// Largest number of candidate roots checked exactly per polynomial.
const CANDIDATE_CAP: usize = 1 << 20;

const SCREEN_MIN: u64 = 101;

/// Exact check primes used before big-integer evaluation on the symbolic path.
const CHECK_PRIMES: [u64; 2] = [2_305_843_009_213_693_951, 4_611_686_018_427_387_847];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LehmerInstance {
    pub c1: u64,
    pub c2: u64,
    /// squarefree part of `C₁C₂`
    pub c: u64,
    pub d: u64,
}

impl LehmerInstance {
    pub fn new(c1: u64, c2: u64) -> Result<Self> {
        if c1 == 0 || c2 == 0 {
            return Err(Error::InvalidInput("C1 and C2 must be positive".into()));
        }
        let (c1_sf, _) = squarefree_decompose(c1)?;
        if c1_sf != c1 {
            return Err(Error::InvalidInput(format!("C1 = {c1} is not squarefree")));
        }
        if gcd(c1, c2) != 1 {
            return Err(Error::Precondition(format!("gcd(C1, C2) ≠ 1 for ({c1}, {c2})")));
        }
        let prod = c1
            .checked_mul(c2)
            .ok_or_else(|| Error::OutOfRange(format!("C1·C2 overflows for ({c1}, {c2})")))?;
        if prod % 8 == 7 {
            return Err(Error::Precondition(format!("C1·C2 = {prod} ≡ 7 mod 8")));
        }
        let (c, d) = squarefree_decompose(prod)?;
        Ok(LehmerInstance { c1, c2, c, d })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GbPolynomial {
    pub b: i64,
    /// `coefficients[i]` multiplies `Xⁱ`.
    pub coefficients: Vec<BigInt>,
}

impl GbPolynomial {
    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn eval(&self, x: &BigInt) -> BigInt {
        horner(&self.coefficients, x)
    }
}

fn horner(c: &[BigInt], x: &BigInt) -> BigInt {
    c.iter().rev().fold(BigInt::zero(), |acc, k| acc * x + k)
}

/// Exponents `p ≥ 5` for which `C₁x² + C₂ = yᵖ` may have primitive solutions.
pub fn candidate_exponents(c1: u64, c2: u64) -> Result<Vec<u64>> {
    let inst = LehmerInstance::new(c1, c2)?;
    let mut out: BTreeSet<u64> = [5, 7, 11, 13].into_iter().collect();
    out.extend(factor(class_number(inst.c)?)?.primes().filter(|&p| p >= 5));
    for q in factor(inst.d)?.primes() {
        if (2 * inst.c) % q == 0 {
            continue;
        }
        let c_neg = -i64::try_from(inst.c % q).expect("reduced");
        let t = match jacobi(c_neg, q)? {
            1 => q - 1,
            -1 => q + 1,
            _ => q,
        };
        out.extend(factor(t)?.primes().filter(|&p| p >= 5));
    }
    Ok(out.into_iter().collect())
}

fn binomial_row(p: u64) -> Vec<BigInt> {
    let mut row = vec![BigInt::one()];
    for j in 1..=p {
        let next = &row[j as usize - 1] * BigInt::from(p - j + 1) / BigInt::from(j);
        row.push(next);
    }
    row
}

/// `((X + b√−3)ᵖ − (X − b√−3)ᵖ)/(2b√−3) − d·C₁^{(p−1)/2}/b`.
pub fn gb_polynomial(b: i64, d: u64, c1: u64, p: u64) -> Result<GbPolynomial> {
    if b == 0 || d % b.unsigned_abs() != 0 {
        return Err(Error::InvalidInput(format!("b = {b} does not divide d = {d}")));
    }
    if p < 3 || p % 2 == 0 {
        return Err(Error::InvalidInput(format!("p = {p} must be odd and ≥ 3")));
    }
    let binom = binomial_row(p);
    let mut coeffs = vec![BigInt::zero(); p as usize];
    let bb = BigInt::from(b);
    let step = -BigInt::from(3) * &bb * &bb;
    let mut w = BigInt::one();
    for j in (1..=p).step_by(2) {
        coeffs[(p - j) as usize] = &binom[j as usize] * &w;
        w *= &step;
    }
    let shift = BigInt::from(d) * BigInt::from(c1).pow(((p - 1) / 2) as u32) / &bb;
    coeffs[0] -= shift;
    Ok(GbPolynomial { b, coefficients: coeffs })
}

fn ln_abs(n: &BigInt) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.abs().to_f64().expect("finite").ln();
    }
    let shift = bits - 64;
    let top = (n.abs() >> shift).to_f64().expect("finite");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

fn bound_from_ln(ln_b: f64) -> BigInt {
    // relative slack covers rounding in the logarithms
    let ln_b = ln_b + 1e-6;
    if ln_b < 60.0 {
        BigInt::from(ln_b.exp().ceil() as u64 + 2)
    } else {
        let e = (ln_b / std::f64::consts::LN_2).ceil() as u64 + 2;
        BigInt::one() << e
    }
}

fn screen_primes() -> &'static [u64] {
    static P: std::sync::OnceLock<Vec<u64>> = std::sync::OnceLock::new();
    P.get_or_init(|| primes_up_to(20_000).into_iter().filter(|&q| q >= SCREEN_MIN).collect())
}

fn big_mod(n: &BigInt, m: u64) -> u64 {
    n.mod_floor(&BigInt::from(m)).to_u64().expect("reduced")
}

/// Integers in `[−bound, bound]` compatible with every residue screen.
/// Screens are added until their modulus exceeds the interval width.
fn crt_candidates(
    mut screen: impl FnMut(u64) -> Vec<u64>,
    bound: &BigInt,
) -> Result<Vec<BigInt>> {
    let width = bound * 2 + 1;
    let mut modulus = BigInt::one();
    let mut residues = vec![BigInt::zero()];
    for &l in screen_primes() {
        if modulus >= width {
            break;
        }
        let roots = screen(l);
        if roots.is_empty() {
            return Ok(Vec::new());
        }
        if roots.len() as u64 == l {
            continue;
        }
        if residues.len().saturating_mul(roots.len()) > CANDIDATE_CAP {
            return Err(Error::Limit("too many residue classes in root screen".into()));
        }
        let lb = BigInt::from(l);
        let m_inv = BigInt::from(crate::arith::inv_mod(big_mod(&modulus, l), l).expect("coprime"));
        let mut next = Vec::with_capacity(residues.len() * roots.len());
        for r in &residues {
            let rl = big_mod(r, l);
            for &t in &roots {
                // x ≡ r (mod M), x ≡ t (mod l)
                let k = ((BigInt::from(t) - rl) * &m_inv).mod_floor(&lb);
                next.push(r + &modulus * k);
            }
        }
        modulus *= lb;
        residues = next;
    }
    let per_class = (&width / &modulus).to_usize().unwrap_or(usize::MAX).saturating_add(1);
    if residues.len().saturating_mul(per_class) > CANDIDATE_CAP {
        return Err(Error::Limit("root bound too large for residue screen".into()));
    }
    let lo = -bound.clone();
    let mut out = Vec::new();
    for r in residues {
        // smallest representative ≥ −bound
        let mut a = &lo + (&r - &lo).mod_floor(&modulus);
        while a <= *bound {
            out.push(a.clone());
            a += &modulus;
        }
    }
    out.sort();
    Ok(out)
}

/// All integer roots of `Σ cᵢXⁱ`, ascending.
pub fn integer_roots(coeffs: &[BigInt]) -> Result<Vec<BigInt>> {
    let Some(top) = coeffs.iter().rposition(|c| !c.is_zero()) else {
        return Err(Error::InvalidInput("zero polynomial".into()));
    };
    let low = coeffs.iter().position(|c| !c.is_zero()).expect("nonzero");
    let poly = &coeffs[low..=top];
    let mut roots = Vec::new();
    if low > 0 {
        roots.push(BigInt::zero());
    }
    let n = poly.len() - 1;
    if n == 0 {
        return Ok(roots);
    }
    let (a0, an) = (&poly[0], &poly[n]);
    // Fujiwara: every root satisfies |z| ≤ 2·max |c_{n−i}/c_n|^{1/i}
    let ln_an = ln_abs(an);
    let ln_max = (1..=n)
        .filter(|&i| !poly[n - i].is_zero())
        .map(|i| (ln_abs(&poly[n - i]) - ln_an) / i as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let bound = bound_from_ln(ln_max + std::f64::consts::LN_2).min(a0.abs());
    let cands = crt_candidates(
        |l| {
            let red: Vec<u64> = poly.iter().map(|c| big_mod(c, l)).collect();
            (0..l).filter(|&t| red.iter().rev().fold(0, |acc, &c| (mul_mod(acc, t, l) + c) % l) == 0).collect()
        },
        &bound,
    )?;
    for a in cands {
        if a.is_zero() || !(a0 % &a).is_zero() {
            continue;
        }
        if horner(poly, &a).is_zero() {
            roots.push(a);
        }
    }
    roots.sort();
    Ok(roots)
}

/// `(x, y)` with `(x + y√−3)·(u + v√−3)` taken modulo `l`.
fn zmul(a: (u64, u64), b: (u64, u64), l: u64) -> (u64, u64) {
    let re = (mul_mod(a.0, b.0, l) + l - mul_mod(3 % l, mul_mod(a.1, b.1, l), l)) % l;
    let im = (mul_mod(a.0, b.1, l) + mul_mod(a.1, b.0, l)) % l;
    (re, im)
}

fn zpow(mut base: (u64, u64), mut e: u64, l: u64) -> (u64, u64) {
    let mut acc = (1 % l, 0);
    while e > 0 {
        if e & 1 == 1 {
            acc = zmul(acc, base, l);
        }
        base = zmul(base, base, l);
        e >>= 1;
    }
    acc
}

/// `γᵖ` for `γ = a + b√−3`, as (rational part, coefficient of `√−3`).
fn zpow_big(a: &BigInt, b: &BigInt, mut e: u64) -> (BigInt, BigInt) {
    let mul = |x: &(BigInt, BigInt), y: &(BigInt, BigInt)| {
        (&x.0 * &y.0 - BigInt::from(3) * &x.1 * &y.1, &x.0 * &y.1 + &x.1 * &y.0)
    };
    let mut base = (a.clone(), b.clone());
    let mut acc = (BigInt::one(), BigInt::zero());
    while e > 0 {
        if e & 1 == 1 {
            acc = mul(&acc, &base);
        }
        base = mul(&base, &base);
        e >>= 1;
    }
    acc
}

/// Integer roots of `g_b` without expanding it: a root `a` satisfies
/// `Im((a + b√−3)ᵖ) = d·C₁^{(p−1)/2}`, which is screened modulo small primes.
pub fn gb_roots_screened(b: i64, d: u64, c1: u64, p: u64) -> Result<Vec<BigInt>> {
    if b == 0 || d % b.unsigned_abs() != 0 {
        return Err(Error::InvalidInput(format!("b = {b} does not divide d = {d}")));
    }
    let half = (p - 1) / 2;
    let target_mod = |l: u64| mul_mod(d % l, pow_mod(c1 % l, half, l), l);
    // Fujiwara bound from the coefficient magnitudes binom(p,j)·|b|^{j−1}·3^{(j−1)/2}
    let lb = (b.unsigned_abs() as f64).ln() + 0.5 * 3f64.ln();
    let ln_p = (p as f64).ln();
    let mut ln_binom = ln_p;
    let mut ln_max = f64::NEG_INFINITY;
    for j in 2..=p {
        ln_binom += ((p - j + 1) as f64).ln() - (j as f64).ln();
        if j % 2 == 0 {
            continue;
        }
        let i = (j - 1) as f64;
        let mut ln_c = ln_binom + i * lb;
        if j == p {
            let ln_shift = (d as f64).ln() + half as f64 * (c1 as f64).ln() - (b.unsigned_abs() as f64).ln();
            let (hi, lo) = if ln_c > ln_shift { (ln_c, ln_shift) } else { (ln_shift, ln_c) };
            ln_c = hi + (lo - hi).exp().ln_1p();
        }
        ln_max = ln_max.max((ln_c - ln_p) / i);
    }
    let bound = bound_from_ln(ln_max + std::f64::consts::LN_2);
    let cands = crt_candidates(
        |l| {
            let s = b.rem_euclid(l as i64) as u64;
            let t = target_mod(l);
            if s == 0 {
                return if t == 0 { (0..l).collect() } else { Vec::new() };
            }
            // Im((u·s + s√−3)ᵖ) = sᵖ·Im((u + √−3)ᵖ)
            let sp = pow_mod(s, p, l);
            (0..l)
                .filter(|&u| mul_mod(sp, zpow((u, 1), p, l).1, l) == t)
                .map(|u| mul_mod(u, s, l))
                .collect()
        },
        &bound,
    )?;
    let target = BigInt::from(d) * BigInt::from(c1).pow(half as u32);
    let bb = BigInt::from(b);
    let mut roots = Vec::new();
    for a in cands {
        let passes = CHECK_PRIMES.iter().all(|&l| {
            let (x, y) = (big_mod(&a, l), b.rem_euclid(l as i64) as u64);
            zpow_u128((x, y), p, l).1 == big_mod(&target, l)
        });
        if passes && zpow_big(&a, &bb, p).1 == target {
            roots.push(a);
        }
    }
    Ok(roots)
}

fn zpow_u128(mut base: (u64, u64), mut e: u64, l: u64) -> (u64, u64) {
    let m = |a: u64, b: u64| ((a as u128 * b as u128) % l as u128) as u64;
    let mul = |x: (u64, u64), y: (u64, u64)| {
        let re = (m(x.0, y.0) as u128 + l as u128 * 3 - 3 * m(x.1, y.1) as u128) % l as u128;
        ((re as u64), ((m(x.0, y.1) as u128 + m(x.1, y.0) as u128) % l as u128) as u64)
    };
    let mut acc = (1u64, 0u64);
    while e > 0 {
        if e & 1 == 1 {
            acc = mul(acc, base);
        }
        base = mul(base, base);
        e >>= 1;
    }
    acc
}

/// Integer roots of `g_b`, exact expansion for small `p`.
pub fn gb_roots(b: i64, d: u64, c1: u64, p: u64) -> Result<Vec<BigInt>> {
    if p <= EXPAND_MAX_P {
        integer_roots(&gb_polynomial(b, d, c1, p)?.coefficients)
    } else {
        gb_roots_screened(b, d, c1, p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormSolution {
    #[serde(with = "decimal")]
    pub x: BigInt,
    #[serde(with = "decimal")]
    pub y: BigInt,
    /// `γ = a + b√−3`
    #[serde(with = "decimal")]
    pub a: BigInt,
    pub b: i64,
}

/// Positive primitive solutions of `C₁x² + C₂ = yᵖ` with `C₁C₂ = 3d²`.
pub fn solve_c1x2_plus_c2(c1: u64, c2: u64, p: u64) -> Result<Vec<NormSolution>> {
    let inst = LehmerInstance::new(c1, c2)?;
    if inst.c != 3 {
        return Err(Error::Precondition(format!("squarefree part of C1·C2 is {}, not 3", inst.c)));
    }
    let (bc1, bc2) = (BigInt::from(c1), BigInt::from(c2));
    let mut out: Vec<NormSolution> = Vec::new();
    for b0 in factor(inst.d)?.divisors() {
        for b in [b0 as i64, -(b0 as i64)] {
            for a in gb_roots(b, inst.d, c1, p)? {
                let norm = &a * &a + BigInt::from(3) * BigInt::from(b) * BigInt::from(b);
                let (y, rem) = norm.div_rem(&bc1);
                if !rem.is_zero() || y <= BigInt::one() {
                    continue;
                }
                let rhs = y.pow(p as u32) - &bc2;
                if rhs.sign() != Sign::Plus {
                    continue;
                }
                let (x2, rem) = rhs.div_rem(&bc1);
                if !rem.is_zero() {
                    continue;
                }
                let Some(x) = exact_root(&x2.to_biguint().expect("positive"), 2) else { continue };
                let x = BigInt::from(x);
                let g = (&bc1 * &x * &x).gcd(&bc2).gcd(&y);
                if !g.is_one() || out.iter().any(|s| s.x == x && s.y == y) {
                    continue;
                }
                out.push(NormSolution { x, y, a, b });
            }
        }
    }
    out.sort_by(|s, t| (&s.y, &s.x).cmp(&(&t.y, &t.x)));
    Ok(out)
}

/// A solution of the norm equation before the companion descent equation is
/// imposed. `x` is on the scale of the original equation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intermediate {
    pub p: u64,
    #[serde(with = "decimal")]
    pub x: BigInt,
    #[serde(with = "decimal")]
    pub w2: BigInt,
    #[serde(with = "decimal")]
    pub a: BigInt,
    pub b: i64,
    /// `w₁` when `x = descent_x·w₁ᵖ` holds
    #[serde(with = "decimal::option")]
    pub w1: Option<BigInt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LehmerReport {
    pub case_id: u8,
    pub r: u64,
    pub c1: u64,
    pub c2: u64,
    pub exponents: Vec<u64>,
    pub intermediate: Vec<Intermediate>,
    /// Solutions of the original equation.
    pub solutions: Vec<MainSolution>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MainSolution {
    #[serde(with = "decimal")]
    pub x: BigInt,
    #[serde(with = "decimal")]
    pub y: BigInt,
    pub p: u64,
}

/// `(C₁, C₂, s)` for a case: `x = s·X` turns the descent norm equation into
/// `C₁X² + C₂ = w₂ᵖ`.
pub fn case_coefficients(case_id: u8, r: u64) -> Result<(u64, u64, u64)> {
    let r2 = r
        .checked_mul(r)
        .ok_or_else(|| Error::OutOfRange(format!("r = {r} too large")))?;
    Ok(match case_id {
        7 => (1, 12 * r2, 1),
        8 => (3, 4 * r2, 3),
        9 => (1, 3 * r2, 2),
        10 => (3, r2, 6),
        _ => return Err(Error::InvalidInput(format!("case {case_id} is not solved by the Lehmer route"))),
    })
}

pub fn resolve_case(case_id: u8, r: u64) -> Result<LehmerReport> {
    resolve_case_in(case_id, r, 5..=u64::MAX)
}

/// [`resolve_case`] restricted to candidate exponents inside `p_range`.
pub fn resolve_case_in(case_id: u8, r: u64, p_range: std::ops::RangeInclusive<u64>) -> Result<LehmerReport> {
    let (c1, c2, scale) = case_coefficients(case_id, r)?;
    if !(1..=crate::cases::R_MAX).contains(&r) {
        return Err(Error::OutOfRange(format!("r = {r} outside 1..=10^6")));
    }
    let t = template(case_id)?;
    debug_assert_eq!(t.branch, Branch::Lehmer);
    let exponents: Vec<u64> = candidate_exponents(c1, c2)?.into_iter().filter(|p| p_range.contains(p)).collect();
    let mut intermediate = Vec::new();
    let mut solutions = Vec::new();
    let br = BigInt::from(r);
    for &p in &exponents {
        for s in solve_c1x2_plus_c2(c1, c2, p)? {
            let x = &s.x * BigInt::from(scale);
            let dx = BigInt::from(t.descent_x.eval(p));
            let w1 = if (&x % &dx).is_zero() {
                let q: BigUint = (&x / &dx).to_biguint().expect("positive");
                exact_root(&q, p as u32).map(BigInt::from)
            } else {
                None
            };
            if let Some(w1) = &w1 {
                let (xx, y) = reconstruct(&t, p, w1, &s.y);
                if satisfies_main_equation(&xx, &y, &br, p as u32) {
                    solutions.push(MainSolution { x: xx, y, p });
                }
            }
            intermediate.push(Intermediate { p, x, w2: s.y, a: s.a, b: s.b, w1 });
        }
    }
    Ok(LehmerReport { case_id, r, c1, c2, exponents, intermediate, solutions })
}
