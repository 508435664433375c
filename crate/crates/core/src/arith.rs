//! Integer and modular arithmetic shared by every stage.
//!
//! Everything here is a pure function of its inputs. Factoring is exact up to
//! [`FACTOR_LIMIT`]: trial division by small primes, then Pollard rho (Brent
//! variant) driven by a fixed-seed generator, with deterministic Miller-Rabin
//! deciding primality.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest integer accepted by [`factor`].
pub const FACTOR_LIMIT: u64 = 100_000_000_000_000;

const TRIAL_LIMIT: u64 = 1_000;
const RHO_SEED: u64 = 0x5eed_7c0b_e5;

#[inline]
pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Inverse of `a` modulo `m`, if it exists.
pub fn inv_mod(a: u64, m: u64) -> Option<u64> {
    let (mut old_r, mut r) = ((a % m) as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m as i128) as u64)
}

/// Reduces a signed integer into `[0, m)`.
#[inline]
pub fn reduce_signed(a: i64, m: u64) -> u64 {
    (a as i128).rem_euclid(m as i128) as u64
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Deterministic Miller-Rabin for every `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Primes up to and including `limit`, by the sieve of Eratosthenes.
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

/// Exact prime factorization `n = ∏ prime^exponent`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factorization {
    pub n: u64,
    pub factors: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.factors.iter().map(|&(p, _)| p)
    }

    pub fn exponent_of(&self, prime: u64) -> u32 {
        self.factors
            .iter()
            .find(|&&(p, _)| p == prime)
            .map_or(0, |&(_, e)| e)
    }

    /// All positive divisors, ascending.
    pub fn divisors(&self) -> Vec<u64> {
        let mut divs = vec![1u64];
        for &(p, e) in &self.factors {
            let current = divs.clone();
            let mut pk = 1u64;
            for _ in 0..e {
                pk *= p;
                divs.extend(current.iter().map(|d| d * pk));
            }
        }
        divs.sort_unstable();
        divs
    }
}

fn pollard_brent(n: u64, rng: &mut ChaCha8Rng) -> u64 {
    if n % 2 == 0 {
        return 2;
    }
    loop {
        let c = rng.gen_range(1..n);
        let mut y = rng.gen_range(0..n);
        let m = 128u64;
        let (mut g, mut r, mut q) = (1u64, 1u64, 1u64);
        let mut x = y;
        let mut ys = y;
        while g == 1 {
            x = y;
            for _ in 0..r {
                y = (mul_mod(y, y, n) + c) % n;
            }
            let mut k = 0;
            while k < r && g == 1 {
                ys = y;
                for _ in 0..m.min(r - k) {
                    y = (mul_mod(y, y, n) + c) % n;
                    q = mul_mod(q, x.abs_diff(y), n);
                }
                g = gcd(q, n);
                k += m;
            }
            r *= 2;
        }
        if g == n {
            loop {
                ys = (mul_mod(ys, ys, n) + c) % n;
                g = gcd(x.abs_diff(ys), n);
                if g > 1 {
                    break;
                }
            }
        }
        if g != n {
            return g;
        }
    }
}

fn split_into(n: u64, rng: &mut ChaCha8Rng, out: &mut BTreeMap<u64, u32>) {
    if n == 1 {
        return;
    }
    if is_prime(n) {
        *out.entry(n).or_insert(0) += 1;
        return;
    }
    let d = pollard_brent(n, rng);
    split_into(d, rng, out);
    split_into(n / d, rng, out);
}

/// Prime factorization of `1 <= n <= FACTOR_LIMIT`.
pub fn factor(n: u64) -> Result<Factorization> {
    if n == 0 || n > FACTOR_LIMIT {
        return Err(Error::OutOfRange(format!("factor({n}): supported range is [1, {FACTOR_LIMIT}]")));
    }
    Ok(factor_u64(n))
}

/// Like [`factor`] but accepts any `u64`; used internally where the range is known.
pub(crate) fn factor_u64(n: u64) -> Factorization {
    let mut map = BTreeMap::new();
    let mut rest = n;
    let mut d = 2u64;
    while d <= TRIAL_LIMIT && d * d <= rest {
        while rest % d == 0 {
            *map.entry(d).or_insert(0) += 1;
            rest /= d;
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if rest > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(RHO_SEED);
        split_into(rest, &mut rng, &mut map);
    }
    Factorization { n, factors: map.into_iter().collect() }
}

/// `n = c·d²` with `c` squarefree.
pub fn squarefree_decompose(n: u64) -> Result<(u64, u64)> {
    let f = factor(n)?;
    let (mut c, mut d) = (1u64, 1u64);
    for &(p, e) in &f.factors {
        if e % 2 == 1 {
            c *= p;
        }
        d *= p.pow(e / 2);
    }
    Ok((c, d))
}

/// Jacobi symbol `(a/n)` for odd positive `n`.
pub fn jacobi(a: i64, n: u64) -> Result<i32> {
    if n % 2 == 0 {
        return Err(Error::InvalidInput(format!("jacobi: modulus {n} is even")));
    }
    let mut a = reduce_signed(a, n);
    let mut n = n;
    let mut t = 1i32;
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            if n % 8 == 3 || n % 8 == 5 {
                t = -t;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            t = -t;
        }
        a %= n;
    }
    Ok(if n == 1 { t } else { 0 })
}

/// Kronecker symbol `(d/2)` extended in the usual way; `(d/q)` for odd `q`.
pub fn kronecker(d: i64, q: u64) -> i32 {
    if q == 2 {
        if d % 2 == 0 {
            0
        } else if reduce_signed(d, 8) == 1 || reduce_signed(d, 8) == 7 {
            1
        } else {
            -1
        }
    } else {
        jacobi(d, q).expect("odd modulus")
    }
}

/// Square root of `a` modulo an odd prime `q` (Tonelli-Shanks). The smaller of
/// the two roots is returned.
pub fn sqrt_mod(a: i64, q: u64) -> Result<Option<u64>> {
    if q == 2 {
        return Ok(Some(reduce_signed(a, 2)));
    }
    if !is_prime(q) {
        return Err(Error::InvalidInput(format!("sqrt_mod: {q} is not prime")));
    }
    let a = reduce_signed(a, q);
    if a == 0 {
        return Ok(Some(0));
    }
    if pow_mod(a, (q - 1) / 2, q) != 1 {
        return Ok(None);
    }
    let root = if q % 4 == 3 {
        pow_mod(a, (q + 1) / 4, q)
    } else {
        let mut s = 0;
        let mut t = q - 1;
        while t % 2 == 0 {
            t /= 2;
            s += 1;
        }
        let mut z = 2u64;
        while pow_mod(z, (q - 1) / 2, q) != q - 1 {
            z += 1;
        }
        let mut m = s;
        let mut c = pow_mod(z, t, q);
        let mut x = pow_mod(a, (t + 1) / 2, q);
        let mut b = pow_mod(a, t, q);
        while b != 1 {
            let mut i = 0;
            let mut b2 = b;
            while b2 != 1 {
                b2 = mul_mod(b2, b2, q);
                i += 1;
            }
            let f = pow_mod(c, 1 << (m - i - 1), q);
            x = mul_mod(x, f, q);
            c = mul_mod(f, f, q);
            b = mul_mod(b, c, q);
            m = i;
        }
        x
    };
    Ok(Some(root.min(q - root)))
}

/// Exponent `alpha + beta·p` attached to a prime in a [`FactoredInteger`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineExponent {
    pub alpha: i64,
    pub beta: u64,
}

impl AffineExponent {
    pub fn at(&self, p: u64) -> u64 {
        let e = self.alpha + (self.beta as i64) * p as i64;
        assert!(e >= 0, "negative exponent {e} at p = {p}");
        e as u64
    }
}

/// An integer whose value depends on the exponent `p`:
/// `∏ prime^(alpha + beta·p)`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FactoredInteger {
    factors: Vec<(u64, AffineExponent)>,
}

impl FactoredInteger {
    pub fn one() -> Self {
        Self::default()
    }

    /// Builds from `(prime, alpha, beta)` triples. Primes must be strictly increasing.
    pub fn new(factors: &[(u64, i64, u64)]) -> Result<Self> {
        let mut out = Vec::with_capacity(factors.len());
        let mut last = 1u64;
        for &(prime, alpha, beta) in factors {
            if prime <= last || !is_prime(prime) {
                return Err(Error::InvalidInput(format!("factored integer: bad prime sequence at {prime}")));
            }
            if alpha + beta as i64 * 5 < 0 {
                return Err(Error::InvalidInput(format!("factored integer: exponent negative at p = 5 for {prime}")));
            }
            last = prime;
            if alpha != 0 || beta != 0 {
                out.push((prime, AffineExponent { alpha, beta }));
            }
        }
        Ok(Self { factors: out })
    }

    /// A constant (p-independent) integer.
    pub fn constant(n: u64) -> Self {
        let f = factor_u64(n);
        Self {
            factors: f
                .factors
                .into_iter()
                .map(|(p, e)| (p, AffineExponent { alpha: e as i64, beta: 0 }))
                .collect(),
        }
    }

    pub fn factors(&self) -> &[(u64, AffineExponent)] {
        &self.factors
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn exponent_of(&self, prime: u64) -> Option<AffineExponent> {
        self.factors.iter().find(|(q, _)| *q == prime).map(|&(_, e)| e)
    }

    /// Exact value at exponent `p`.
    pub fn eval(&self, p: u64) -> BigUint {
        let mut acc = BigUint::one();
        for &(prime, e) in &self.factors {
            acc *= BigUint::from(prime).pow(e.at(p) as u32);
        }
        acc
    }

    /// Concrete prime powers at exponent `p`.
    pub fn at(&self, p: u64) -> PrimePowers {
        PrimePowers::from_pairs(self.factors.iter().map(|&(q, e)| (q, e.at(p))))
    }
}

impl fmt::Display for FactoredInteger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|(q, e)| match (e.alpha, e.beta) {
                (a, 0) => format!("{q}^{a}"),
                (0, 1) => format!("{q}^p"),
                (0, b) => format!("{q}^({b}p)"),
                (a, 1) => format!("{q}^(p{a:+})"),
                (a, b) => format!("{q}^({b}p{a:+})"),
            })
            .collect();
        write!(f, "{}", parts.join("·"))
    }
}

/// Value of `f` at exponent `p`, reduced modulo `q`.
pub fn eval_mod(f: &FactoredInteger, p: u64, q: u64) -> u64 {
    f.factors
        .iter()
        .fold(1 % q, |acc, &(prime, e)| mul_mod(acc, pow_mod(prime, e.at(p), q), q))
}

/// A positive integer kept as a map prime → exponent. Exponents may be huge,
/// which is why values are only materialized on request.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrimePowers(BTreeMap<u64, u64>);

impl PrimePowers {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let mut map = BTreeMap::new();
        for (q, e) in pairs {
            if e > 0 {
                *map.entry(q).or_insert(0) += e;
            }
        }
        Self(map)
    }

    pub fn from_u64(n: u64) -> Self {
        let f = factor_u64(n);
        Self::from_pairs(f.factors.into_iter().map(|(p, e)| (p, e as u64)))
    }

    pub fn exponent(&self, q: u64) -> u64 {
        self.0.get(&q).copied().unwrap_or(0)
    }

    pub fn set_exponent(&mut self, q: u64, e: u64) {
        if e == 0 {
            self.0.remove(&q);
        } else {
            self.0.insert(q, e);
        }
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.0.iter().map(|(&q, &e)| (q, e))
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn value(&self) -> BigUint {
        let mut acc = BigUint::one();
        for (&q, &e) in &self.0 {
            acc *= BigUint::from(q).pow(e as u32);
        }
        acc
    }

    /// The value if it fits in a `u64`.
    pub fn to_u64(&self) -> Option<u64> {
        let mut acc = 1u64;
        for (&q, &e) in &self.0 {
            for _ in 0..e {
                acc = acc.checked_mul(q)?;
            }
        }
        Some(acc)
    }

    pub fn mod_u64(&self, m: u64) -> u64 {
        self.0
            .iter()
            .fold(1 % m, |acc, (&q, &e)| mul_mod(acc, pow_mod(q, e, m), m))
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::from_pairs(self.iter().chain(other.iter()))
    }

    pub fn gcd(&self, other: &Self) -> Self {
        Self::from_pairs(self.iter().map(|(q, e)| (q, e.min(other.exponent(q)))))
    }

    /// Product of the primes with an odd exponent.
    pub fn odd_part_radical(&self) -> Self {
        Self::from_pairs(self.iter().filter(|&(_, e)| e % 2 == 1).map(|(q, _)| (q, 1)))
    }

    /// Square root; panics if some exponent is odd.
    pub fn sqrt(&self) -> Self {
        Self::from_pairs(self.iter().map(|(q, e)| {
            assert!(e % 2 == 0, "sqrt of non-square prime power {q}^{e}");
            (q, e / 2)
        }))
    }
}

impl fmt::Display for PrimePowers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(q, e)| if *e == 1 { q.to_string() } else { format!("{q}^{e}") })
            .collect();
        write!(f, "{}", parts.join("·"))
    }
}

/// Integer `k`-th root of `n` if `n` is a perfect `k`-th power.
pub fn exact_root(n: &BigUint, k: u32) -> Option<BigUint> {
    let r = n.nth_root(k);
    (r.pow(k) == *n).then_some(r)
}

/// Serde adapters writing big integers as decimal strings.
pub mod decimal {
    use num_bigint::BigInt;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(n: &BigInt, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&n.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigInt, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }

    pub mod unsigned {
        use num_bigint::BigUint;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(n: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
            s.serialize_str(&n.to_string())
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigUint, D::Error> {
            String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
        }
    }

    pub mod option {
        use num_bigint::BigInt;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(n: &Option<BigInt>, s: S) -> std::result::Result<S::Ok, S::Error> {
            match n {
                Some(n) => s.serialize_some(&n.to_string()),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<BigInt>, D::Error> {
            Option::<String>::deserialize(d)?.map(|t| t.parse().map_err(serde::de::Error::custom)).transpose()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trial_factor(mut n: u64) -> Vec<(u64, u32)> {
        let mut out = Vec::new();
        let mut d = 2;
        while d * d <= n {
            let mut e = 0;
            while n % d == 0 {
                n /= d;
                e += 1;
            }
            if e > 0 {
                out.push((d, e));
            }
            d += 1;
        }
        if n > 1 {
            out.push((n, 1));
        }
        out
    }

    #[test]
    fn factor_examples() {
        assert!(factor(1).unwrap().factors.is_empty());
        assert_eq!(factor(12).unwrap().factors, vec![(2, 2), (3, 1)]);
        assert_eq!(factor(10092).unwrap().factors, trial_factor(10092));
        assert_eq!(factor(10092).unwrap().factors, vec![(2, 2), (3, 1), (29, 2)]);
        assert!(factor(0).is_err());
        assert!(factor(FACTOR_LIMIT + 1).is_err());
    }

    #[test]
    fn factor_hard_semiprimes() {
        let p = 9_999_991u64;
        let q = 9_999_973u64;
        assert_eq!(factor(p * q).unwrap().factors, vec![(q, 1), (p, 1)]);
        let f = factor(99_999_999_999_973).unwrap();
        assert_eq!(f.factors.iter().fold(1u64, |a, &(p, e)| a * p.pow(e)), 99_999_999_999_973);
    }

    #[test]
    fn squarefree_examples() {
        assert_eq!(squarefree_decompose(12).unwrap(), (3, 2));
        assert_eq!(squarefree_decompose(1).unwrap(), (1, 1));
        assert_eq!(squarefree_decompose(10092).unwrap(), (3, 58));
    }

    #[test]
    fn squarefree_brute_force() {
        for n in 1..20_000u64 {
            let (c, d) = squarefree_decompose(n).unwrap();
            assert_eq!(c * d * d, n);
            assert!((2..).take_while(|k| k * k <= c).all(|k| c % (k * k) != 0), "{n}");
        }
    }

    #[test]
    fn jacobi_examples() {
        assert_eq!(jacobi(-3, 7).unwrap(), 1);
        assert_eq!(jacobi(-3, 11).unwrap(), -1);
        assert_eq!(jacobi(0, 9).unwrap(), 0);
        assert!(jacobi(3, 8).is_err());
    }

    #[test]
    fn sqrt_mod_examples() {
        assert_eq!(sqrt_mod(4, 7).unwrap(), Some(2));
        assert_eq!(sqrt_mod(-3, 13).unwrap(), Some(6));
        assert_eq!(sqrt_mod(2, 5).unwrap(), None);
        assert!(sqrt_mod(2, 15).is_err());
    }

    #[test]
    fn eval_mod_examples() {
        let f = FactoredInteger::new(&[(7, -1, 1)]).unwrap();
        assert_eq!(eval_mod(&f, 5, 11), 3);
        assert_eq!(eval_mod(&FactoredInteger::one(), 17, 13), 1);
        let g = FactoredInteger::new(&[(2, -6, 2), (3, -3, 2)]).unwrap();
        assert_eq!(eval_mod(&g, 5, 13), 9);
        assert_eq!(g.eval(5), BigUint::from(34992u32));
    }

    #[test]
    fn sqrt_mod_all_small_primes() {
        for q in primes_up_to(400).into_iter().skip(1) {
            for a in 0..q {
                match sqrt_mod(a as i64, q).unwrap() {
                    Some(s) => {
                        assert_eq!(mul_mod(s, s, q), a);
                        assert!(s <= q - s || s == 0);
                    }
                    None => assert!((0..q).all(|x| mul_mod(x, x, q) != a)),
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn factor_product_matches(n in 1u64..10_000_000_000) {
            let f = factor(n).unwrap();
            let mut prod = 1u64;
            let mut last = 1;
            for &(p, e) in &f.factors {
                prop_assert!(p > last && is_prime(p));
                last = p;
                prod *= p.pow(e);
            }
            prop_assert_eq!(prod, n);
        }

        #[test]
        fn jacobi_matches_euler(a in -100_000i64..100_000, idx in 1usize..1200) {
            let q = primes_up_to(10_000)[idx];
            let euler = pow_mod(reduce_signed(a, q), (q - 1) / 2, q);
            let expected = if euler == 0 { 0 } else if euler == 1 { 1 } else { -1 };
            prop_assert_eq!(jacobi(a, q).unwrap(), expected);
        }

        #[test]
        fn eval_mod_matches_bigint(
            raw in proptest::collection::vec((0usize..10, -3i64..4, 0u64..3), 0..4),
            pidx in 0usize..14,
            qidx in 1usize..1229,
        ) {
            let small = [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29];
            let mut by_prime = BTreeMap::new();
            for (i, a, b) in raw {
                by_prime.insert(small[i], (a.max(0), b));
            }
            let triples: Vec<_> = by_prime.into_iter().map(|(q, (a, b))| (q, a, b)).collect();
            let f = FactoredInteger::new(&triples).unwrap();
            let p = [5u64, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 47][pidx];
            let q = primes_up_to(10_000)[qidx];
            let big = f.eval(p) % BigUint::from(q);
            prop_assert_eq!(BigUint::from(eval_mod(&f, p, q)), big);
        }
    }
}
