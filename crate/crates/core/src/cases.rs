//! The twelve descent cases for `x(x² + 12r²) = 7^(p−1)·wᵖ`.
//!
//! Each case fixes the divisibility of `x` by 2, 3 and 7, which pins
//! `gcd(x, x² + 12r²)` and splits the equation into two descent equations
//! `x = F·w₁ᵖ`, `x² + 12r² = G·w₂ᵖ` and a ternary equation
//! `a·w₂ᵖ − b·w₁²ᵖ = c0·r²`.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::FactoredInteger;
use crate::error::{Error, Result};

pub const R_MAX: u64 = 1_000_000;

/// How a case is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Sieve,
    EvenContradiction,
    Lehmer,
}

/// 2-adic condition on `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TwoAdic {
    Odd,
    /// `2 ‖ x`
    Exactly2,
    /// `4 | x`
    Div4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct XConditions {
    pub seven_divides: bool,
    pub two: TwoAdic,
    pub three_divides: bool,
}

impl XConditions {
    pub fn matches(&self, x: &BigInt) -> bool {
        let v = |m: u32| x.mod_floor(&BigInt::from(m)).is_zero();
        let two = if !v(2) {
            TwoAdic::Odd
        } else if !v(4) {
            TwoAdic::Exactly2
        } else {
            TwoAdic::Div4
        };
        v(7) == self.seven_divides && v(3) == self.three_divides && two == self.two
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseTemplate {
    pub id: u8,
    pub x_conditions: XConditions,
    /// `x = descent_x · w₁ᵖ`
    pub descent_x: FactoredInteger,
    /// `x² + 12r² = descent_norm · w₂ᵖ`
    pub descent_norm: FactoredInteger,
    /// `a·w₂ᵖ − b·w₁²ᵖ = c0·r²`
    pub a: FactoredInteger,
    pub b: FactoredInteger,
    pub c0: u64,
    pub branch: Branch,
    /// `y = y_factor · w₁ · w₂`
    pub y_factor: u64,
}

fn fi(triples: &[(u64, i64, u64)]) -> FactoredInteger {
    FactoredInteger::new(triples).expect("static case data")
}

/// The twelve descent cases in id order.
pub fn build_case_templates() -> Vec<CaseTemplate> {
    use TwoAdic::*;
    // (two, three | x, descent_x exponents at 2 and 3, gcd part g, b exponents at 2 and 3, c0)
    type Row = (TwoAdic, bool, (i64, u64), (i64, u64), u64, (i64, u64), (i64, u64), u64);
    let rows: [Row; 6] = [
        (Odd, false, (0, 0), (0, 0), 1, (0, 0), (0, 0), 12),
        (Odd, true, (0, 0), (-1, 1), 3, (0, 0), (-3, 2), 4),
        (Div4, false, (-2, 1), (0, 0), 4, (-6, 2), (0, 0), 3),
        (Div4, true, (-2, 1), (-1, 1), 12, (-6, 2), (-3, 2), 1),
        (Exactly2, false, (-1, 1), (0, 0), 2, (-3, 2), (0, 0), 6),
        (Exactly2, true, (-1, 1), (-1, 1), 6, (-3, 2), (-3, 2), 2),
    ];
    let mut out = Vec::with_capacity(12);
    for seven in [false, true] {
        for (i, &(two, three, x2, x3, g, b2, b3, c0)) in rows.iter().enumerate() {
            let id = i as u8 + 1 + if seven { 6 } else { 0 };
            let pick = |e2: (i64, u64), e3: (i64, u64), e7: (i64, u64)| {
                let mut t = Vec::new();
                for (q, (al, be)) in [(2u64, e2), (3, e3), (7, e7)] {
                    if al != 0 || be != 0 {
                        t.push((q, al, be));
                    }
                }
                fi(&t)
            };
            let seven_x = if seven { (-1, 1) } else { (0, 0) };
            let seven_norm = if seven { (0, 0) } else { (-1, 1) };
            let g2 = (g.trailing_zeros() as i64, 0);
            let g3 = (if g % 3 == 0 { 1 } else { 0 }, 0);
            let branch = match (seven, two) {
                (_, Exactly2) => Branch::EvenContradiction,
                (false, _) => Branch::Sieve,
                (true, _) => Branch::Lehmer,
            };
            let (a, b) = if seven {
                (FactoredInteger::one(), pick(b2, b3, (-2, 2)))
            } else {
                (pick((0, 0), (0, 0), (-1, 1)), pick(b2, b3, (0, 0)))
            };
            let gp = [1u64, 3, 2, 6, 2, 6][i];
            out.push(CaseTemplate {
                id,
                x_conditions: XConditions { seven_divides: seven, two, three_divides: three },
                descent_x: pick(x2, x3, seven_x),
                descent_norm: pick(g2, g3, seven_norm),
                a,
                b,
                c0,
                branch,
                y_factor: 7 * gp,
            });
        }
    }
    out
}

/// Template for a case id in `1..=12`.
pub fn template(id: u8) -> Result<CaseTemplate> {
    if !(1..=12).contains(&id) {
        return Err(Error::InvalidInput(format!("case id {id} not in 1..=12")));
    }
    Ok(build_case_templates().swap_remove(id as usize - 1))
}

/// 2-adic valuations of the two sides of the ternary equation of an even case.
///
/// Since `x` is even and `gcd(x, r) = 1`, `r` is odd and the right side has
/// valuation exactly `c_side_v2`. The left terms have valuations in
/// `{a_offset + a_step·k}` and `{b_offset(p) + b_step(p)·k}`, `k ≥ 0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvenCaseCertificate {
    pub case_id: u8,
    pub c_side_v2: u32,
    /// `v₂(a·w₂ᵖ) ∈ a_v2 + p·ℕ`
    pub a_v2: u32,
    /// `v₂(b·w₁²ᵖ) ∈ (b_v2_alpha + b_v2_beta·p) + 2p·ℕ`
    pub b_v2_alpha: i64,
    pub b_v2_beta: u64,
}

impl EvenCaseCertificate {
    /// Checks the certificate at exponent `p`: the two term valuations are
    /// never equal (so the difference has valuation equal to the smaller one)
    /// and neither progression contains `c_side_v2`.
    pub fn verify(&self, p: u64) -> bool {
        if p < 5 {
            return false;
        }
        let p = p as i64;
        let a0 = self.a_v2 as i64;
        let b0 = self.b_v2_alpha + self.b_v2_beta as i64 * p;
        let c = self.c_side_v2 as i64;
        let in_a = |v: i64| v >= a0 && (v - a0) % p == 0;
        let in_b = |v: i64| v >= b0 && (v - b0) % (2 * p) == 0;
        let never_equal = (a0 - b0).rem_euclid(p) != 0;
        never_equal && !in_a(c) && !in_b(c)
    }
}

/// 2-adic contradiction for cases 5, 6, 11 and 12.
pub fn eliminate_even_case(t: &CaseTemplate) -> Result<EvenCaseCertificate> {
    if t.branch != Branch::EvenContradiction {
        return Err(Error::Precondition(format!("case {} is not an even case", t.id)));
    }
    let a_v2 = t.a.exponent_of(2).map_or(0, |e| {
        assert_eq!(e.beta, 0);
        e.alpha as u32
    });
    let b2 = t.b.exponent_of(2).expect("even case has a power of 2 in b");
    Ok(EvenCaseCertificate {
        case_id: t.id,
        c_side_v2: t.c0.trailing_zeros(),
        a_v2,
        b_v2_alpha: b2.alpha,
        b_v2_beta: b2.beta,
    })
}

impl CaseTemplate {
    /// Primes that cannot divide `r`: 7 always (it divides either `x` or,
    /// to a power ≥ 4, `x² + 12r²` with `7 ∤ x`), plus 2 and 3 when the case
    /// forces them into `x`.
    pub fn forbidden_r_primes(&self) -> Vec<u64> {
        let mut out = Vec::new();
        if self.x_conditions.two != TwoAdic::Odd {
            out.push(2);
        }
        if self.x_conditions.three_divides {
            out.push(3);
        }
        out.push(7);
        out
    }

    /// `None` if `r` is compatible with `gcd(x, r) = 1`, else the smallest
    /// offending prime.
    pub fn r_obstruction(&self, r: u64) -> Option<u64> {
        self.forbidden_r_primes().into_iter().find(|&q| r % q == 0)
    }
}

/// `a·w₂ᵖ − b·w₁²ᵖ = c0·r²` for a fixed `(case, p, r)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TernaryInstance {
    pub case_id: u8,
    pub p: u64,
    pub r: u64,
    pub a: FactoredInteger,
    pub b: FactoredInteger,
    pub c0: u64,
}

impl TernaryInstance {
    pub fn a_value(&self) -> BigUint {
        self.a.eval(self.p)
    }

    pub fn b_value(&self) -> BigUint {
        self.b.eval(self.p)
    }

    pub fn c_value(&self) -> BigUint {
        BigUint::from(self.c0) * BigUint::from(self.r) * BigUint::from(self.r)
    }
}

pub fn instantiate(t: &CaseTemplate, p: u64, r: u64) -> Result<TernaryInstance> {
    if t.branch != Branch::Sieve {
        return Err(Error::Precondition(format!("case {} is not a sieve case", t.id)));
    }
    if p < 5 || !crate::arith::is_prime(p) {
        return Err(Error::OutOfRange(format!("exponent {p} must be a prime >= 5")));
    }
    if r == 0 || r > R_MAX {
        return Err(Error::OutOfRange(format!("r = {r} outside [1, {R_MAX}]")));
    }
    Ok(TernaryInstance { case_id: t.id, p, r, a: t.a.clone(), b: t.b.clone(), c0: t.c0 })
}

/// `Σ_{i=−3}^{3} (x + i·r)³`.
pub fn seven_cube_sum(x: &BigInt, r: &BigInt) -> BigInt {
    (-3..=3).map(|i| (x + r * BigInt::from(i)).pow(3)).sum()
}

/// Whether `(x, y, r, p)` satisfies the original equation.
pub fn satisfies_main_equation(x: &BigInt, y: &BigInt, r: &BigInt, p: u32) -> bool {
    seven_cube_sum(x, r) == y.pow(p)
}

/// `(x, y)` recovered from a solution of the two descent equations.
pub fn reconstruct(t: &CaseTemplate, p: u64, w1: &BigInt, w2: &BigInt) -> (BigInt, BigInt) {
    let x = BigInt::from(t.descent_x.eval(p)) * w1.pow(p as u32);
    let y = BigInt::from(t.y_factor) * w1 * w2;
    (x, y)
}

/// The case whose conditions `x` meets. `x` must be nonzero.
pub fn classify(x: &BigInt) -> Option<u8> {
    if x.is_zero() {
        return None;
    }
    let x = x.abs();
    build_case_templates().into_iter().find(|t| t.x_conditions.matches(&x)).map(|t| t.id)
}
