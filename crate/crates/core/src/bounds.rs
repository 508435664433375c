//! Exponent bounds from Mignotte's theorem on `|a·Xⁿ − b·Yⁿ| ≤ c`.
//!
//! The ternary equations carry coefficients whose exponents depend on `p`.
//! [`normalize`] multiplies through by the smallest constant that turns both
//! terms into a fixed coefficient times a pure `p`-th power.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use astro_float::{BigFloat, Consts, RoundingMode};
use serde::{Deserialize, Serialize};

use crate::arith::FactoredInteger;
use crate::cases::{Branch, CaseTemplate};
use crate::error::{Error, Result};

const PREC: usize = 192;

/// One side of a normalized form: `scale · w_index^w_power`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    pub scale: u64,
    pub w_index: u8,
    pub w_power: u32,
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = if self.w_power == 1 { format!("w{}", self.w_index) } else { format!("w{}^{}", self.w_index, self.w_power) };
        if self.scale == 1 {
            write!(f, "{w}")
        } else {
            write!(f, "{}·{w}", self.scale)
        }
    }
}

/// `|a0·Uᵖ − b0·Vᵖ| = c_mult·r²` with `a0 > b0`, where `U`, `V` are given by
/// the two substitutions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedForm {
    pub case_id: u8,
    /// The constant the ternary equation was multiplied by.
    pub multiplier: u64,
    pub a0: u64,
    pub b0: u64,
    pub c_mult: u64,
    pub u: Substitution,
    pub v: Substitution,
}

fn split_side(f: &FactoredInteger, mult: &[(u64, u64)]) -> (u64, u64) {
    // returns (coefficient, p-th power scale)
    let mut coef = 1u64;
    let mut scale = 1u64;
    let mut primes: Vec<u64> = f.factors().iter().map(|(q, _)| *q).chain(mult.iter().map(|(q, _)| *q)).collect();
    primes.sort_unstable();
    primes.dedup();
    for q in primes {
        let (alpha, beta) = f.exponent_of(q).map_or((0, 0), |e| (e.alpha, e.beta));
        let m = mult.iter().find(|(x, _)| *x == q).map_or(0, |(_, m)| *m as i64);
        let fixed = alpha + m;
        assert!(fixed >= 0);
        coef *= q.pow(fixed as u32);
        scale *= q.pow(beta as u32);
    }
    (coef, scale)
}

pub fn normalize(t: &CaseTemplate) -> Result<NormalizedForm> {
    if t.branch != Branch::Sieve {
        return Err(Error::Precondition(format!("case {} is not a sieve case", t.id)));
    }
    let mut mult: Vec<(u64, u64)> = Vec::new();
    for f in [&t.a, &t.b] {
        for &(q, e) in f.factors() {
            if e.alpha < 0 {
                match mult.iter_mut().find(|(x, _)| *x == q) {
                    Some(entry) => entry.1 = entry.1.max((-e.alpha) as u64),
                    None => mult.push((q, (-e.alpha) as u64)),
                }
            }
        }
    }
    mult.sort_unstable();
    let multiplier: u64 = mult.iter().map(|&(q, m)| q.pow(m as u32)).product();
    let (ca, sa) = split_side(&t.a, &mult);
    let (cb, sb) = split_side(&t.b, &mult);
    let su = Substitution { scale: sa, w_index: 2, w_power: 1 };
    let sv = Substitution { scale: sb, w_index: 1, w_power: 2 };
    let c_mult = t.c0 * multiplier;
    let (a0, b0, u, v) = match ca.cmp(&cb) {
        Ordering::Greater => (ca, cb, su, sv),
        Ordering::Less => (cb, ca, sv, su),
        Ordering::Equal => {
            return Err(Error::InvalidInput(format!("case {}: equal normalized coefficients", t.id)))
        }
    };
    Ok(NormalizedForm { case_id: t.id, multiplier, a0, b0, c_mult, u, v })
}

/// A positive real `mantissa_num / mantissa_den · 10^exp10`, enough to carry
/// radii such as `4.9e1502` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Radius {
    pub num: u64,
    pub den: u64,
    pub exp10: u32,
}

impl Radius {
    pub fn from_int(r: u64) -> Self {
        Radius { num: r, den: 1, exp10: 0 }
    }
}

impl FromStr for Radius {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("cannot parse radius {s:?}"));
        let (mant, exp) = match s.split_once(['e', 'E']) {
            Some((m, e)) => (m, e.parse::<u32>().map_err(|_| bad())?),
            None => (s, 0),
        };
        let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
        let digits = format!("{int}{frac}");
        let num: u64 = digits.parse().map_err(|_| bad())?;
        if num == 0 {
            return Err(bad());
        }
        Ok(Radius { num, den: 10u64.pow(frac.len() as u32), exp10: exp })
    }
}

struct Ctx {
    cc: Consts,
}

impl Ctx {
    fn new() -> Self {
        Ctx { cc: Consts::new().expect("astro-float constants") }
    }

    fn int(&self, n: u64) -> BigFloat {
        BigFloat::from_word(n, PREC)
    }

    fn ln(&mut self, x: &BigFloat, rm: RoundingMode) -> BigFloat {
        x.ln(PREC, rm, &mut self.cc)
    }

    fn ln_int(&mut self, n: u64, rm: RoundingMode) -> BigFloat {
        let x = self.int(n);
        self.ln(&x, rm)
    }
}

/// Both terms of Mignotte's bound and the resulting integer bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MignotteDetail {
    /// `3·log(1.5·c/b)`, approximated.
    pub term_c: f64,
    /// `7400·log A / log(1 + log A / log(a/b))`, approximated.
    pub term_ab: f64,
    /// `floor(max(term_c, term_ab))`.
    pub floor: u64,
    /// `max(term_c, term_ab)` rounded to the nearest integer; never below `floor`.
    pub bound: u64,
}

fn to_f64(x: &BigFloat) -> f64 {
    // the values here are moderate; the decimal rendering is exact enough
    let mut cc = Consts::new().expect("constants");
    let s = x.format(astro_float::Radix::Dec, RoundingMode::ToEven, &mut cc).expect("format");
    s.parse::<f64>().unwrap_or_else(|_| {
        let (m, e) = s.split_once('e').expect("exponent form");
        m.parse::<f64>().unwrap() * 10f64.powi(e.parse::<i32>().unwrap())
    })
}

fn floor_u64(x: &BigFloat) -> u64 {
    let guess = to_f64(x).floor().max(0.0) as u64;
    let mut n = guess.saturating_sub(2);
    while BigFloat::from_word(n + 1, PREC).cmp(x).unwrap() <= 0 {
        n += 1;
    }
    n
}

pub fn mignotte_detail(f: &NormalizedForm, r_max: Radius) -> Result<MignotteDetail> {
    if f.a0 == f.b0 {
        return Err(Error::InvalidInput("mignotte bound needs a != b".into()));
    }
    let up = RoundingMode::Up;
    let mut cx = Ctx::new();
    // log(1.5 c / b) with c = c_mult r², r = num/den · 10^e
    let ln10 = cx.ln_int(10, up);
    let mut lc = cx.ln_int(3, up).sub(&cx.ln_int(2, RoundingMode::Down), PREC, up);
    lc = lc.add(&cx.ln_int(f.c_mult, up), PREC, up);
    let lr = cx
        .ln_int(r_max.num, up)
        .sub(&cx.ln_int(r_max.den, RoundingMode::Down), PREC, up)
        .add(&ln10.mul(&cx.int(r_max.exp10 as u64), PREC, up), PREC, up);
    lc = lc.add(&lr.mul(&cx.int(2), PREC, up), PREC, up);
    lc = lc.sub(&cx.ln_int(f.b0, RoundingMode::Down), PREC, up);
    let term_c = lc.mul(&cx.int(3), PREC, up);

    let big_a = f.a0.max(f.b0).max(3);
    let ln_a = cx.ln_int(big_a, up);
    let (hi, lo) = (f.a0.max(f.b0), f.a0.min(f.b0));
    let ln_ratio = cx.ln_int(hi, RoundingMode::Down).sub(&cx.ln_int(lo, up), PREC, RoundingMode::Down);
    let inner = cx.int(1).add(&ln_a.div(&ln_ratio, PREC, up), PREC, up);
    let denom = cx.ln(&inner, RoundingMode::Down);
    let term_ab = cx.int(7400).mul(&ln_a, PREC, up).div(&denom, PREC, up);

    let best = if term_c.cmp(&term_ab).unwrap() > 0 { term_c.clone() } else { term_ab.clone() };
    let floor = floor_u64(&best);
    let half = BigFloat::from_word(2 * floor + 1, PREC).div(&cx.int(2), PREC, up);
    let bound = if best.cmp(&half).unwrap() >= 0 { floor + 1 } else { floor };
    Ok(MignotteDetail { term_c: to_f64(&term_c), term_ab: to_f64(&term_ab), floor, bound })
}

/// Upper bound on the exponent for solutions with `r ≤ r_max`.
pub fn mignotte_bound(f: &NormalizedForm, r_max: Radius) -> Result<u64> {
    Ok(mignotte_detail(f, r_max)?.bound)
}
