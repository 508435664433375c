//! Bounded search on the Thue equations `aσᵖ − bτᵖ = c·r²` left after the
//! sieve, and a plain-text export for external solvers.

use std::fmt::Write as _;
use std::path::Path;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{decimal, exact_root};
use crate::cases::TernaryInstance;
use crate::error::{Error, Result};

pub const DEFAULT_H: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ThueInstance {
    pub case_id: u8,
    pub p: u64,
    pub r: u64,
    #[serde(with = "decimal::unsigned")]
    pub a: BigUint,
    #[serde(with = "decimal::unsigned")]
    pub b: BigUint,
    #[serde(with = "decimal::unsigned")]
    pub rhs: BigUint,
}

impl ThueInstance {
    pub fn from_ternary(t: &TernaryInstance) -> Self {
        ThueInstance { case_id: t.case_id, p: t.p, r: t.r, a: t.a_value(), b: t.b_value(), rhs: t.c_value() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThueSolution {
    #[serde(with = "decimal")]
    pub sigma: BigInt,
    #[serde(with = "decimal")]
    pub tau: BigInt,
    /// `τ = w₁²`
    #[serde(with = "decimal")]
    pub w1: BigInt,
}

/// Every `(σ, τ)` with `|σ|, |τ| ≤ H` solving the equation and `τ` a
/// perfect square.
pub fn bounded_search(inst: &ThueInstance, h: u64) -> Vec<ThueSolution> {
    let p = inst.p as u32;
    let (a, b, rhs) = (BigInt::from(inst.a.clone()), BigInt::from(inst.b.clone()), BigInt::from(inst.rhs.clone()));
    let hb = BigInt::from(h);
    let mut out = Vec::new();
    if a.is_zero() {
        return out;
    }
    for w in 0..=h.isqrt() {
        let tau = BigInt::from(w * w);
        let (q, rem) = (&rhs + &b * tau.pow(p)).div_rem(&a);
        if !rem.is_zero() {
            continue;
        }
        let sigma = if p % 2 == 1 {
            exact_root(q.magnitude(), p).map(|s| if q.is_negative() { -BigInt::from(s) } else { BigInt::from(s) })
        } else if q.is_negative() {
            None
        } else {
            exact_root(q.magnitude(), p).map(BigInt::from)
        };
        let Some(sigma) = sigma else { continue };
        let w1 = BigInt::from(w);
        let mut push = |s: BigInt| {
            if s.abs() <= hb {
                out.push(ThueSolution { sigma: s, tau: tau.clone(), w1: w1.clone() });
            }
        };
        if p % 2 == 0 && !sigma.is_zero() {
            push(-sigma.clone());
        }
        push(sigma);
    }
    out.sort_by(|x, y| (&x.tau, &x.sigma).cmp(&(&y.tau, &y.sigma)));
    out
}

/// `case p r a b rhs` per line, sorted by `(case, p, r)`.
pub fn export_string(list: &[ThueInstance]) -> String {
    let mut v: Vec<&ThueInstance> = list.iter().collect();
    v.sort_by_key(|i| (i.case_id, i.p, i.r));
    let mut s = String::new();
    for i in v {
        writeln!(s, "{} {} {} {} {} {}", i.case_id, i.p, i.r, i.a, i.b, i.rhs).expect("string write");
    }
    s
}

pub fn export_instances(list: &[ThueInstance], dest: &Path) -> Result<()> {
    std::fs::write(dest, export_string(list)).map_err(|e| Error::io(dest, e))
}

pub fn parse_instances(text: &str) -> Result<Vec<ThueInstance>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::InvalidInput(format!("malformed Thue line: {line}"));
            if f.len() != 6 {
                return Err(bad());
            }
            Ok(ThueInstance {
                case_id: f[0].parse().map_err(|_| bad())?,
                p: f[1].parse().map_err(|_| bad())?,
                r: f[2].parse().map_err(|_| bad())?,
                a: f[3].parse().map_err(|_| bad())?,
                b: f[4].parse().map_err(|_| bad())?,
                rhs: f[5].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn import_instances(src: &Path) -> Result<Vec<ThueInstance>> {
    parse_instances(&std::fs::read_to_string(src).map_err(|e| Error::io(src, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{instantiate, template};
    use proptest::prelude::*;

    fn inst(a: u64, b: u64, rhs: u64, p: u64) -> ThueInstance {
        ThueInstance { case_id: 2, p, r: 1, a: a.into(), b: b.into(), rhs: rhs.into() }
    }

    #[test]
    fn examples() {
        let s = bounded_search(&inst(1, 1, 31, 5), 2);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].sigma.clone(), s[0].tau.clone()), (BigInt::from(2), BigInt::from(1)));
        assert_eq!(s[0].w1, BigInt::from(1));
        assert!(bounded_search(&inst(1, 1, 30, 5), 2).is_empty());
    }

    #[test]
    fn export_format() {
        assert_eq!(export_string(&[]), "");
        let t = instantiate(&template(2).unwrap(), 5, 11).unwrap();
        let line = export_string(&[ThueInstance::from_ternary(&t)]);
        assert_eq!(line, "2 5 11 2401 2187 484\n");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        let list = vec![ThueInstance::from_ternary(&t), inst(3, 5, 7, 7)];
        export_instances(&list, &path).unwrap();
        let mut sorted = list.clone();
        sorted.sort_by_key(|i| (i.case_id, i.p, i.r));
        assert_eq!(import_instances(&path).unwrap(), sorted);
        assert!(export_instances(&list, &dir.path().join("no/such/dir")).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn agrees_with_double_loop(a in 1u64..6, b in 1u64..6, rhs in 1u64..2000, p in prop::sample::select(vec![3u64, 4, 5])) {
            let h = 6i64;
            let i = inst(a, b, rhs, p);
            let mut naive = Vec::new();
            for t in (0..=h).filter(|t| [0, 1, 4].contains(t)) {
                for s in -h..=h {
                    if a as i64 * s.pow(p as u32) - b as i64 * t.pow(p as u32) == rhs as i64 {
                        naive.push((BigInt::from(s), BigInt::from(t)));
                    }
                }
            }
            naive.sort_by(|x, y| (&x.1, &x.0).cmp(&(&y.1, &y.0)));
            let got: Vec<_> = bounded_search(&i, h as u64).into_iter().map(|s| (s.sigma, s.tau)).collect();
            prop_assert_eq!(got, naive);
        }
    }
}
