//! Local obstructions for `A·ρᵖ − B·σ²ᵖ = C`.
//!
//! [`reduce_coprime`] strips common prime factors from the ternary
//! coefficients one prime at a time, tracking the exponents of that prime in
//! `(a, b, c)`. [`locally_soluble`] then decides solubility over `Z_q` by
//! walking residue classes of `σ` and reading off the valuation and unit part
//! of `C + B·σ²ᵖ`.

use serde::{Deserialize, Serialize};

use crate::arith::{gcd, is_prime, jacobi, mul_mod, pow_mod, PrimePowers};
use crate::cases::TernaryInstance;
use crate::error::{Error, Result};
use crate::germain::primitive_root;

/// Default bound on `q^e` for the residue-class walk.
pub const DEFAULT_LIFT_CAP: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    /// `ℓ | a, c`: then `ℓ | w₁`; exponents `(α−1, β+2p−1, γ−1)`.
    G,
    /// `ℓ | b, c`: then `ℓ | w₂`; exponents `(α+p−1, β−1, γ−1)`.
    H,
    /// `ℓ` divides all three coefficients; divide through by `ℓ^k`.
    Common(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionStep {
    pub prime: u64,
    pub kind: StepKind,
}

/// Pairwise coprime `(A, B, C)` together with the steps that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoprimeForm {
    pub a: PrimePowers,
    pub b: PrimePowers,
    pub c: PrimePowers,
    pub trace: Vec<ReductionStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reduction {
    Coprime(CoprimeForm),
    /// The reduction reached `ℓ | A`, `ℓ | B`, `ℓ ∤ C`: no integer solutions.
    Obstructed { prime: u64, trace: Vec<ReductionStep> },
}

fn apply(e: (u64, u64, u64), kind: StepKind, p: u64) -> (u64, u64, u64) {
    let (a, b, c) = e;
    match kind {
        StepKind::G => (a - 1, b + 2 * p - 1, c - 1),
        StepKind::H => (a + p - 1, b - 1, c - 1),
        StepKind::Common(k) => (a - k, b - k, c - k),
    }
}

/// Reduces `a·w₂ᵖ − b·w₁²ᵖ = c` to pairwise coprime coefficients.
pub fn reduce_coprime(a: &PrimePowers, b: &PrimePowers, c: &PrimePowers, p: u64) -> Result<Reduction> {
    let common = a.gcd(b).gcd(c);
    if !common.is_one() {
        return Err(Error::Precondition(format!("gcd(a, b, c) = {common} != 1")));
    }
    let (mut na, mut nb, mut nc) = (a.clone(), b.clone(), c.clone());
    let mut trace = Vec::new();
    let mut primes: Vec<u64> = a.primes().chain(b.primes()).chain(c.primes()).collect();
    primes.sort_unstable();
    primes.dedup();
    for l in primes {
        let mut e = (a.exponent(l), b.exponent(l), c.exponent(l));
        loop {
            let kind = match (e.0 > 0, e.1 > 0, e.2 > 0) {
                (true, true, true) => StepKind::Common(e.0.min(e.1).min(e.2)),
                (true, false, true) => StepKind::G,
                (false, true, true) => StepKind::H,
                (true, true, false) => {
                    return Ok(Reduction::Obstructed { prime: l, trace });
                }
                _ => break,
            };
            trace.push(ReductionStep { prime: l, kind });
            e = apply(e, kind, p);
        }
        na.set_exponent(l, e.0);
        nb.set_exponent(l, e.1);
        nc.set_exponent(l, e.2);
    }
    Ok(Reduction::Coprime(CoprimeForm { a: na, b: nb, c: nc, trace }))
}

/// Replays a trace on `(a, b, c)`.
pub fn replay(
    a: &PrimePowers,
    b: &PrimePowers,
    c: &PrimePowers,
    p: u64,
    trace: &[ReductionStep],
) -> (PrimePowers, PrimePowers, PrimePowers) {
    let (mut na, mut nb, mut nc) = (a.clone(), b.clone(), c.clone());
    for s in trace {
        let l = s.prime;
        let e = apply((na.exponent(l), nb.exponent(l), nc.exponent(l)), s.kind, p);
        na.set_exponent(l, e.0);
        nb.set_exponent(l, e.1);
        nc.set_exponent(l, e.2);
    }
    (na, nb, nc)
}

impl CoprimeForm {
    pub fn is_pairwise_coprime(&self) -> bool {
        self.a.gcd(&self.b).is_one() && self.a.gcd(&self.c).is_one() && self.b.gcd(&self.c).is_one()
    }
}

/// For every odd prime `q | A`, `−B·C` must be a square modulo `q`.
pub fn qr_necessary(f: &CoprimeForm) -> bool {
    qr_failure(f).is_none()
}

/// The first odd prime `q | A` at which `−B·C` is a non-residue.
pub fn qr_failure(f: &CoprimeForm) -> Option<u64> {
    f.a.primes().filter(|&q| q != 2).find(|&q| {
        let bc = mul_mod(f.b.mod_u64(q), f.c.mod_u64(q), q);
        jacobi(-(bc as i64), q).expect("odd prime") == -1
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "result")]
pub enum LocalResult {
    /// No solutions modulo `q^exponent`.
    Insoluble { exponent: u32 },
    Soluble,
    Unknown,
}

/// Requires `ρ` and/or `σ` to be `q`-adic units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Units {
    pub rho: bool,
    pub sigma: bool,
}

fn vq(mut n: u64, q: u64) -> u32 {
    let mut v = 0;
    while n > 0 && n % q == 0 {
        n /= q;
        v += 1;
    }
    v
}

/// Largest `E` with `q^E ≤ 2^62`.
fn work_exponent(q: u64) -> u32 {
    let mut e = 0;
    let mut m: u128 = 1;
    while m * q as u128 <= 1u128 << 62 {
        m *= q as u128;
        e += 1;
    }
    e
}

fn mulm(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn powm(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mulm(r, b, m);
        }
        b = mulm(b, b, m);
        e >>= 1;
    }
    r
}

/// Whether a `q`-adic unit known modulo `q^δ` is a `p`-th power.
fn unit_is_pth_power(w: u64, q: u64, p: u64) -> bool {
    if q == 2 {
        true
    } else if q == p {
        powm(w, p - 1, p * p) == 1
    } else {
        let g = gcd(p, q - 1);
        g == 1 || pow_mod(w % q, (q - 1) / g, q) == 1
    }
}

fn delta(q: u64, p: u64) -> u32 {
    if q == p {
        2
    } else {
        1
    }
}

/// Is there `(ρ, σ) ≠ (0, 0)` mod `q` with `A·ρᵖ − B·σ²ᵖ ≡ C`? Assumes `q ∤ AB`.
fn nonzero_solution_mod_q(a: u64, b: u64, c: u64, p: u64, q: u64, units: Units) -> bool {
    let gp = gcd(p, q - 1);
    if gp == 1 && !units.rho {
        return true;
    }
    let g2 = gcd(2 * p, q - 1);
    let a_inv = pow_mod(a, q - 2, q);
    let h = pow_mod(primitive_root(q), g2, q);
    let n = (q - 1) / g2;
    let is_pth = |t: u64| t == 0 || pow_mod(t, (q - 1) / gp, q) == 1;
    // σ = 0
    let t0 = mul_mod(c, a_inv, q);
    if !units.sigma && t0 != 0 && is_pth(t0) {
        return true;
    }
    let mut z = 1u64;
    for _ in 0..n {
        let t = mul_mod((c + mul_mod(b, z, q)) % q, a_inv, q);
        if is_pth(t) && !(units.rho && t == 0) {
            return true;
        }
        z = mul_mod(z, h, q);
    }
    false
}

/// Decides solubility of `A·ρᵖ − B·σ²ᵖ = C` over `Z_q`. The class walk stops
/// at modulus `lift_cap`, returning `Unknown` if undecided.
pub fn locally_soluble(f: &CoprimeForm, p: u64, q: u64, lift_cap: u64) -> Result<LocalResult> {
    locally_soluble_with(f, p, q, lift_cap, Units::default())
}

/// As [`locally_soluble`], restricted to solutions where the flagged
/// variables are `q`-adic units.
pub fn locally_soluble_with(f: &CoprimeForm, p: u64, q: u64, lift_cap: u64, units: Units) -> Result<LocalResult> {
    if !is_prime(q) {
        return Err(Error::InvalidInput(format!("{q} is not prime")));
    }
    let alpha = f.a.exponent(q) as u32;
    let beta = f.b.exponent(q) as u32;
    let gamma = f.c.exponent(q) as u32;
    if q != 2 && q != p && alpha == 0 && beta == 0 {
        let (a, b, c) = (f.a.mod_u64(q), f.b.mod_u64(q), f.c.mod_u64(q));
        if nonzero_solution_mod_q(a, b, c, p, q, units) {
            return Ok(LocalResult::Soluble);
        }
        if units.rho || units.sigma {
            return Ok(LocalResult::Insoluble { exponent: 1 });
        }
        if (gamma as u64) < p {
            return Ok(LocalResult::Insoluble { exponent: gamma + 1 });
        }
    }
    class_walk(f, p, q, alpha, beta, lift_cap, units)
}

fn class_walk(
    f: &CoprimeForm,
    p: u64,
    q: u64,
    alpha: u32,
    beta: u32,
    lift_cap: u64,
    units: Units,
) -> Result<LocalResult> {
    let ew = work_exponent(q);
    let m = q.pow(ew);
    let cm = f.c.mod_u64(m);
    let bm = f.b.mod_u64(m);
    let a_unit = {
        let mut a = PrimePowers::clone(&f.a);
        a.set_exponent(q, 0);
        a
    };
    let d = delta(q, p);
    let v2p = vq(2 * p, q);
    let first = if units.sigma { 1 } else { 0 };
    let mut stack: Vec<(u64, u32)> = (first..q).rev().map(|s| (s, 1)).collect();
    let mut cert = 0u32;
    let mut unknown = false;
    while let Some((s, j)) = stack.pop() {
        let l_bound = if s == 0 {
            beta as u64 + 2 * p * j as u64
        } else {
            beta as u64 + (j + v2p).min(2 * j) as u64
        };
        let l_bound = l_bound.min(ew as u64) as u32;
        let y = (cm + mulm(bm, powm(s, 2 * p, m), m)) % m;
        let v = if y == 0 { ew } else { vq(y, q) };
        if v + d <= l_bound {
            let ok = v >= alpha && (v - alpha) as u64 % p == 0 && (!units.rho || v == alpha) && {
                let qd = q.pow(d);
                let u = (y / q.pow(v)) % qd;
                let au = a_unit.mod_u64(qd);
                let w = mulm(u, crate::arith::inv_mod(au, qd).expect("unit"), qd);
                unit_is_pth_power(w, q, p)
            };
            if ok {
                return Ok(LocalResult::Soluble);
            }
            cert = cert.max((v + d).max(j));
            continue;
        }
        let next = (j + 1) as usize;
        let qj = q.pow(j);
        if next as u32 >= ew || (qj as u128 * q as u128) > lift_cap as u128 {
            unknown = true;
            continue;
        }
        for t in (0..q).rev() {
            stack.push((s + t * qj, j + 1));
        }
    }
    Ok(if unknown { LocalResult::Unknown } else { LocalResult::Insoluble { exponent: cert } })
}

/// Number of `(ρ, σ)` mod `q^e` with `A·ρᵖ − B·σ²ᵖ ≡ C`, by enumeration.
pub fn count_solutions_mod(f: &CoprimeForm, p: u64, q: u64, e: u32) -> u64 {
    let m = q.pow(e);
    let (a, b, c) = (f.a.mod_u64(m), f.b.mod_u64(m), f.c.mod_u64(m));
    let mut rho_vals = vec![0u64; m as usize];
    for rho in 0..m {
        rho_vals[mulm(a, powm(rho, p, m), m) as usize] += 1;
    }
    (0..m)
        .map(|s| {
            let target = (c + mulm(b, powm(s, 2 * p, m), m)) % m;
            rho_vals[target as usize]
        })
        .sum()
}

/// Why an instance was eliminated locally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LocalWitness {
    Reduction { prime: u64 },
    QuadraticResidue { q: u64 },
    Adic { q: u64, exponent: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalOutcome {
    Eliminated(LocalWitness),
    Survives(CoprimeForm),
}

/// Coefficients `(a, b, c)` of an instance in factored form.
pub fn instance_coefficients(inst: &TernaryInstance) -> (PrimePowers, PrimePowers, PrimePowers) {
    let r = PrimePowers::from_u64(inst.r);
    let c = PrimePowers::from_u64(inst.c0).mul(&r).mul(&r);
    (inst.a.at(inst.p), inst.b.at(inst.p), c)
}

/// Primes at which [`local_test`] checks solubility.
pub fn test_primes(f: &CoprimeForm) -> Vec<u64> {
    let mut qs: Vec<u64> = [2u64, 3, 5, 7, 11, 13, 17, 19]
        .into_iter()
        .chain(f.a.primes())
        .chain(f.b.primes())
        .chain(f.c.primes())
        .collect();
    qs.sort_unstable();
    qs.dedup();
    qs
}

pub fn local_test(inst: &TernaryInstance, lift_cap: u64) -> Result<LocalOutcome> {
    let (a, b, c) = instance_coefficients(inst);
    local_test_coeffs(&a, &b, &c, inst.p, lift_cap)
}

pub fn local_test_coeffs(
    a: &PrimePowers,
    b: &PrimePowers,
    c: &PrimePowers,
    p: u64,
    lift_cap: u64,
) -> Result<LocalOutcome> {
    let f = match reduce_coprime(a, b, c, p)? {
        Reduction::Obstructed { prime, .. } => return Ok(LocalOutcome::Eliminated(LocalWitness::Reduction { prime })),
        Reduction::Coprime(f) => f,
    };
    if let Some(q) = qr_failure(&f) {
        return Ok(LocalOutcome::Eliminated(LocalWitness::QuadraticResidue { q }));
    }
    for q in test_primes(&f) {
        if let LocalResult::Insoluble { exponent } = locally_soluble(&f, p, q, lift_cap)? {
            return Ok(LocalOutcome::Eliminated(LocalWitness::Adic { q, exponent }));
        }
    }
    Ok(LocalOutcome::Survives(f))
}
