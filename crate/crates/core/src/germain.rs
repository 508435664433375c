//! Sophie Germain style elimination with auxiliary primes `q = 2kp + 1`.
//!
//! For a fixed `(p, q)` the set `B(p, q)` is nonempty exactly when the right
//! side `c` lies in `a·χ − b·μ`, where `χ` is the set of `p`-th powers and
//! `μ` the set of `2p`-th powers of `F_q`. That set depends only on
//! `(a mod q, b mod q)`, so it is built once as a bitset and each `r` costs one
//! lookup per candidate `q`.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{factor_u64, is_prime, mul_mod, pow_mod};
use crate::cases::{template, TernaryInstance};
use crate::error::{Error, Result};

pub const DEFAULT_K_MAX: u64 = 600;

/// Smallest primitive root modulo the prime `q`.
pub fn primitive_root(q: u64) -> u64 {
    if q == 2 {
        return 1;
    }
    let f = factor_u64(q - 1);
    (2..q)
        .find(|&g| f.primes().all(|l| pow_mod(g, (q - 1) / l, q) != 1))
        .expect("prime modulus has a primitive root")
}

fn check_q(p: u64, q: u64) -> Result<u64> {
    if !is_prime(q) || q % (2 * p) != 1 {
        return Err(Error::InvalidInput(format!("q = {q} is not a prime = 1 mod 2·{p}")));
    }
    Ok((q - 1) / (2 * p))
}

/// `{η^e : η ∈ F_q}` for `e | q − 1`, sorted.
fn power_set(q: u64, e: u64) -> Vec<u64> {
    let g = primitive_root(q);
    let h = pow_mod(g, e, q);
    let n = (q - 1) / e;
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(0);
    let mut x = 1u64;
    for _ in 0..n {
        out.push(x);
        x = mul_mod(x, h, q);
    }
    out.sort_unstable();
    out
}

/// `μ(p, q)`: the `2p`-th powers of `F_q`, i.e. `{0}` and the `k`-th roots of unity.
pub fn mu_set(p: u64, q: u64) -> Result<Vec<u64>> {
    check_q(p, q)?;
    Ok(power_set(q, 2 * p))
}

/// `χ(p, q)`: the `p`-th powers of `F_q`, of size `2k + 1`.
pub fn chi_set(p: u64, q: u64) -> Result<Vec<u64>> {
    check_q(p, q)?;
    Ok(power_set(q, p))
}

/// Direct evaluation of the emptiness of `B(p, q)` for residues `a, b, c`.
pub fn b_set_is_empty(a: u64, b: u64, c: u64, p: u64, q: u64) -> Result<bool> {
    let k = check_q(p, q)?;
    let a = a % q;
    if a == 0 {
        return Err(Error::Precondition(format!("q = {q} divides a")));
    }
    let a_inv = pow_mod(a, q - 2, q);
    for z in mu_set(p, q)? {
        let t = mul_mod((mul_mod(b % q, z, q) + c % q) % q, a_inv, q);
        let e = pow_mod(t, 2 * k, q);
        if e <= 1 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Residues `c mod q` for which `B(p, q)` is nonempty.
#[derive(Debug, Clone)]
pub struct GoodSet {
    pub q: u64,
    bits: Vec<u64>,
}

impl GoodSet {
    pub fn build(p: u64, q: u64, a: u64, b: u64) -> Result<Self> {
        let chi = chi_set(p, q)?;
        let mu = mu_set(p, q)?;
        let a = a % q;
        if a == 0 {
            return Err(Error::Precondition(format!("q = {q} divides a")));
        }
        let mut bits = vec![0u64; (q as usize).div_ceil(64)];
        let bmu: Vec<u64> = mu.iter().map(|&z| (q - mul_mod(b % q, z, q)) % q).collect();
        for &x in &chi {
            let ax = mul_mod(a, x, q);
            for &nbz in &bmu {
                let v = ax + nbz;
                let v = if v >= q { v - q } else { v };
                bits[(v >> 6) as usize] |= 1 << (v & 63);
            }
        }
        Ok(GoodSet { q, bits })
    }

    #[inline]
    pub fn contains(&self, c: u64) -> bool {
        (self.bits[(c >> 6) as usize] >> (c & 63)) & 1 == 1
    }
}

/// Candidate auxiliary primes for a sieve case and exponent, with lazily
/// built lookup tables that can be shared across threads.
pub struct GermainSieve {
    pub case_id: u8,
    pub p: u64,
    pub k_max: u64,
    c0: u64,
    /// `(q, a mod q, b mod q)` in increasing `q`.
    candidates: Vec<(u64, u64, u64)>,
    tables: Vec<OnceLock<GoodSet>>,
}

impl GermainSieve {
    pub fn new(case_id: u8, p: u64, k_max: u64) -> Result<Self> {
        let t = template(case_id)?;
        if t.branch != crate::cases::Branch::Sieve {
            return Err(Error::Precondition(format!("case {case_id} is not a sieve case")));
        }
        let mut candidates = Vec::new();
        for k in 1..=k_max {
            let q = 2 * k * p + 1;
            if !is_prime(q) {
                continue;
            }
            let a = crate::arith::eval_mod(&t.a, p, q);
            if a == 0 {
                continue;
            }
            candidates.push((q, a, crate::arith::eval_mod(&t.b, p, q)));
        }
        let tables = candidates.iter().map(|_| OnceLock::new()).collect();
        Ok(GermainSieve { case_id, p, k_max, c0: t.c0, candidates, tables })
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.candidates.iter().map(|c| c.0)
    }

    fn table(&self, i: usize) -> &GoodSet {
        self.tables[i].get_or_init(|| {
            let (q, a, b) = self.candidates[i];
            GoodSet::build(self.p, q, a, b).expect("candidate q is valid")
        })
    }

    /// Smallest eliminating `q` for this `r`, if any.
    pub fn witness(&self, r: u64) -> Option<u64> {
        for i in 0..self.candidates.len() {
            let q = self.candidates[i].0;
            let rr = r % q;
            let c = mul_mod(self.c0 % q, mul_mod(rr, rr, q), q);
            if !self.table(i).contains(c) {
                return Some(q);
            }
        }
        None
    }
}

/// Smallest `q = 2kp + 1 ≤ 2·k_max·p + 1` with `q ∤ a` and `B(p, q) = ∅`.
pub fn find_eliminating_prime(inst: &TernaryInstance, k_max: u64) -> Result<Option<u64>> {
    let sieve = GermainSieve::new(inst.case_id, inst.p, k_max)?;
    Ok(sieve.witness(inst.r))
}

/// Elimination outcome for one `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GermainOutcome {
    pub r: u64,
    pub witness: Option<u64>,
}

/// Runs the sieve over `r_range` (inclusive). Returns the survivors and one
/// outcome per `r`, both in increasing `r`.
pub fn sieve_range(
    case_id: u8,
    p: u64,
    r_range: std::ops::RangeInclusive<u64>,
    k_max: u64,
) -> Result<(Vec<u64>, Vec<GermainOutcome>)> {
    let sieve = GermainSieve::new(case_id, p, k_max)?;
    Ok(sieve_with(&sieve, r_range))
}

pub fn sieve_with(sieve: &GermainSieve, r_range: std::ops::RangeInclusive<u64>) -> (Vec<u64>, Vec<GermainOutcome>) {
    let (lo, hi) = (*r_range.start(), *r_range.end());
    let outcomes: Vec<GermainOutcome> = if lo > hi {
        Vec::new()
    } else {
        let (lo, hi) = (u32::try_from(lo).expect("r fits u32"), u32::try_from(hi).expect("r fits u32"));
        (lo..hi + 1)
            .into_par_iter()
            .with_min_len(1024)
            .map(|r| GermainOutcome { r: r as u64, witness: sieve.witness(r as u64) })
            .collect()
    };
    let survivors = outcomes.iter().filter(|o| o.witness.is_none()).map(|o| o.r).collect();
    (survivors, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::primes_up_to;
    use proptest::prelude::*;

    fn brute_powers(q: u64, e: u64) -> Vec<u64> {
        let mut v: Vec<u64> = (0..q).map(|x| pow_mod(x, e, q)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    #[test]
    fn mu_examples() {
        assert_eq!(mu_set(5, 11).unwrap(), vec![0, 1]);
        assert_eq!(mu_set(5, 31).unwrap(), vec![0, 1, 5, 25]);
        assert_eq!(mu_set(7, 29).unwrap(), vec![0, 1, 28]);
        assert_eq!(mu_set(7, 29).unwrap(), brute_powers(29, 14));
        assert!(mu_set(5, 13).is_err());
        assert_eq!(chi_set(5, 11).unwrap(), vec![0, 1, 10]);
    }

    #[test]
    fn mu_and_chi_sizes() {
        for p in [5u64, 7, 11, 13] {
            for k in 1..40 {
                let q = 2 * k * p + 1;
                if !is_prime(q) {
                    continue;
                }
                let mu = mu_set(p, q).unwrap();
                assert_eq!(mu.len() as u64, k + 1);
                assert!(mu[1..].iter().all(|&z| pow_mod(z, k, q) == 1));
                assert_eq!(mu, brute_powers(q, 2 * p));
                assert_eq!(chi_set(p, q).unwrap().len() as u64, 2 * k + 1);
            }
        }
    }

    #[test]
    fn b_set_examples() {
        assert!(!b_set_is_empty(1, 1, 1, 5, 11).unwrap());
        assert!(b_set_is_empty(1, 1, 3, 5, 11).unwrap());
        assert!(b_set_is_empty(2, 1, 3, 5, 11).unwrap());
        assert!(b_set_is_empty(11, 1, 3, 5, 11).is_err());
    }

    #[test]
    fn zero_band_sample() {
        let sieve = GermainSieve::new(1, 37, DEFAULT_K_MAX).unwrap();
        assert!(sieve.witness(1).is_some());
    }

    /// The bitset agrees with the direct definition on every residue.
    #[test]
    fn good_set_matches_definition() {
        for p in [5u64, 7] {
            for q in primes_up_to(300).into_iter().filter(|&q| q % (2 * p) == 1) {
                for (a, b) in [(1u64, 1u64), (3, 5), (q - 1, 2), (2401 % q, 0)] {
                    let g = GoodSet::build(p, q, a, b).unwrap();
                    for c in 0..q {
                        assert_eq!(!g.contains(c), b_set_is_empty(a, b, c, p, q).unwrap());
                    }
                }
            }
        }
    }

    proptest! {
        /// Oracle: `B(p,q) = ∅` iff `a·w₂ᵖ − b·w₁²ᵖ ≡ c` has no solution in `F_q²`.
        #[test]
        fn b_set_vs_enumeration(pi in 0usize..2, qi in 0usize..40, a in 1u64..200, b in 0u64..200, c in 0u64..200) {
            let p = [5u64, 7][pi];
            let qs: Vec<u64> = primes_up_to(200).into_iter().filter(|&q| q % (2 * p) == 1).collect();
            let q = qs[qi % qs.len()];
            prop_assume!(a % q != 0);
            let mut found = false;
            'outer: for w1 in 0..q {
                let t = mul_mod(b % q, pow_mod(w1, 2 * p, q), q);
                for w2 in 0..q {
                    if (mul_mod(a % q, pow_mod(w2, p, q), q) + q - t) % q == c % q {
                        found = true;
                        break 'outer;
                    }
                }
            }
            prop_assert_eq!(b_set_is_empty(a, b, c, p, q).unwrap(), !found);
        }
    }
}
