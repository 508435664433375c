//! Descent over `K = ℚ(√−m)` for pairwise coprime `Aρᵖ − Bσ²ᵖ = C`.
//!
//! With `B′` the product of primes to odd power in `B`, `BB′ = v²`,
//! `u = AB′` and `CB′ = mn²`, any solution gives
//! `(vσᵖ + n√−m)(vσᵖ − n√−m) = uρᵖ`, so `vσᵖ + n√−m = εηᵖ` for some `ε`
//! in the finite set `ℰ ⊂ K(S, p)` of classes with `Norm(ε)/u` a rational
//! `p`-th power. Each `ε` is then attacked by valuations and by residues at
//! split primes `q = 2kp + 1`.
//!
//! Elements of `K(S, p)` are handled as exponent vectors over a fixed basis;
//! valuations and residue classes modulo `p`-th powers are linear in them.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::arith::{is_prime, kronecker, mul_mod, pow_mod, PrimePowers};
use crate::error::{Error, Result};
use crate::germain::{chi_set, primitive_root};
use crate::lattice::{hnf_square, smith, Mat};
use crate::localsolve::CoprimeForm;
use crate::quadfield::{
    class_group, prime_form, primes_above, residue_at_split, split_type, valuation, FieldElement, PrimeIdeal,
    QuadraticField, SplitKind, Tracked,
};

pub const DEFAULT_K_MAX_SELMER: u64 = 200;
/// Largest `|ℰ|` that is enumerated.
pub const MAX_EPSILONS: u64 = 1_000_000;
/// Largest estimated size, in bits of norm, of a `K(S, p)` generator.
pub const MAX_GENERATOR_BITS: f64 = 16_384.0;

fn check_size(parts: &[(f64, i128)]) -> Result<()> {
    let bits: f64 = parts.iter().map(|&(lg, e)| lg * e.unsigned_abs() as f64).sum();
    if bits > MAX_GENERATOR_BITS {
        return Err(Error::Limit(format!("Selmer generator of about {bits:.0} bits")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescentData {
    pub b_prime: PrimePowers,
    pub v: PrimePowers,
    pub u: PrimePowers,
    pub m: u64,
    pub n: PrimePowers,
}

pub fn descent_data(f: &CoprimeForm) -> Result<DescentData> {
    let b_prime = PrimePowers::from_pairs(f.b.iter().filter(|&(_, e)| e % 2 == 1).map(|(q, _)| (q, 1)));
    let v = f.b.mul(&b_prime).sqrt();
    let u = f.a.mul(&b_prime);
    let cb = f.c.mul(&b_prime);
    let core = PrimePowers::from_pairs(cb.iter().filter(|&(_, e)| e % 2 == 1).map(|(q, _)| (q, 1)));
    let m = core
        .to_u64()
        .filter(|&m| m <= crate::quadfield::MAX_M)
        .ok_or_else(|| Error::OutOfRange(format!("squarefree part {core} of CB′ too large")))?;
    let n = PrimePowers::from_pairs(cb.iter().map(|(q, e)| (q, e / 2)));
    Ok(DescentData { b_prime, v, u, m, n })
}

/// A basis of `K(S, p)` with the valuations of its elements along `S`.
#[derive(Debug, Clone)]
pub struct SelmerContext {
    pub field: QuadraticField,
    pub p: u64,
    pub s: Vec<PrimeIdeal>,
    pub basis: Vec<FieldElement>,
    /// `dim Cl_S[p]`; the last `class_rank` basis elements come from it.
    pub class_rank: usize,
}

impl SelmerContext {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `∏ basisᵢ^{eᵢ}`.
    pub fn materialize(&self, exps: &[u8]) -> FieldElement {
        self.basis
            .iter()
            .zip(exps)
            .fold(self.field.one(), |acc, (b, &e)| acc.mul(&b.pow(u64::from(e))))
    }

    /// `ord_𝔮` of every basis element, reduced mod `p`.
    pub fn valuations_mod_p(&self, pr: &PrimeIdeal) -> Result<Vec<u64>> {
        self.basis.iter().map(|b| Ok(u64::from(valuation(b, pr)?) % self.p)).collect()
    }
}

fn tracked_product(field: &QuadraticField, parts: &[(Tracked, i128)]) -> Tracked {
    parts.iter().filter(|(_, e)| *e != 0).fold(field.tracked_one(), |acc, (t, e)| {
        field.tracked_mul(&acc, &field.tracked_pow(t, *e))
    })
}

/// `K(S, p)` for `p ≥ 5`: generators of the principal ideals `∏ 𝔭^{eₚ}`
/// (`e` running over a basis of the relation lattice of `S` in the class
/// group), followed by one element per cyclic factor of `Cl_S` of order
/// divisible by `p`.
pub fn selmer_group(field: &QuadraticField, s: &[PrimeIdeal], p: u64) -> Result<SelmerContext> {
    if p < 5 || !is_prime(p) {
        return Err(Error::InvalidInput(format!("p = {p} must be a prime ≥ 5")));
    }
    let mut s = s.to_vec();
    s.sort();
    s.dedup();
    let cg = class_group(field.m)?;
    let t = cg.cyclic_factors.len();
    let ns = s.len();
    let mut mat: Mat = Vec::with_capacity(ns + t);
    for pr in &s {
        mat.push(match prime_form(field, pr) {
            Some(f) => cg.dlog(&f)?.into_iter().map(i128::from).collect(),
            None => vec![0; t],
        });
    }
    for (j, &d) in cg.cyclic_factors.iter().enumerate() {
        let mut row = vec![0i128; t];
        row[j] = i128::from(d);
        mat.push(row);
    }
    let snf = smith(&mat, t)?;
    let tracked: Vec<Tracked> = s.iter().map(|pr| field.tracked_prime(pr)).collect();
    let log_norms: Vec<f64> = s.iter().map(|pr| f64::from(pr.degree()) * (pr.q as f64).log2()).collect();
    let mut basis = Vec::new();
    if ns > 0 {
        let kernel: Mat = snf.left_kernel().into_iter().map(|r| r[..ns].to_vec()).collect();
        for row in hnf_square(&kernel)? {
            check_size(&log_norms.iter().copied().zip(row.iter().copied()).collect::<Vec<_>>())?;
            let parts: Vec<(Tracked, i128)> = tracked.iter().cloned().zip(row).collect();
            let g = tracked_product(field, &parts);
            if !g.form.is_identity() {
                return Err(Error::Precondition("relation lattice element is not principal".into()));
            }
            basis.push(g.coeff.to_integral(field, p));
        }
    }
    let pp = i128::from(p);
    let mut class_rank = 0;
    for i in 0..t {
        let d = snf.diag[i];
        if d % pp != 0 {
            continue;
        }
        class_rank += 1;
        let gens: Vec<(Tracked, i128)> = cg
            .generators
            .iter()
            .zip(&snf.v_inv[i])
            .zip(&cg.cyclic_factors)
            .map(|((g, &y), &dj)| (field.tracked_form(g), ((d / pp) * y).rem_euclid(i128::from(dj))))
            .collect();
        let mut est: Vec<(f64, i128)> =
            gens.iter().map(|(t, e)| (pp as f64 * (t.form.a as f64).log2(), *e)).collect();
        est.extend(log_norms.iter().copied().zip(snf.u[i][..ns].iter().copied()));
        check_size(&est)?;
        let b = tracked_product(field, &gens);
        let mut parts = vec![(b, pp)];
        parts.extend(tracked.iter().cloned().zip(snf.u[i][..ns].iter().map(|&e| -e)));
        let g = tracked_product(field, &parts);
        if !g.form.is_identity() {
            return Err(Error::Precondition("class-group torsion lift is not principal".into()));
        }
        basis.push(g.coeff.to_integral(field, p));
    }
    Ok(SelmerContext { field: field.clone(), p, s, basis, class_rank })
}

/// Solutions of `A·e ≡ t (mod p)`: a particular solution and a kernel basis.
fn solve_affine_mod(mut a: Vec<Vec<u64>>, mut t: Vec<u64>, cols: usize, p: u64) -> Option<(Vec<u64>, Vec<Vec<u64>>)> {
    let rows = a.len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(i) = (r..rows).find(|&i| a[i][c] != 0) else { continue };
        a.swap(r, i);
        t.swap(r, i);
        let inv = pow_mod(a[r][c], p - 2, p);
        for x in a[r].iter_mut() {
            *x = mul_mod(*x, inv, p);
        }
        t[r] = mul_mod(t[r], inv, p);
        for i in 0..rows {
            if i != r && a[i][c] != 0 {
                let f = a[i][c];
                for j in 0..cols {
                    a[i][j] = (a[i][j] + p - mul_mod(f, a[r][j], p)) % p;
                }
                t[i] = (t[i] + p - mul_mod(f, t[r], p)) % p;
            }
        }
        pivots.push(c);
        r += 1;
    }
    if t[r..].iter().any(|&x| x != 0) {
        return None;
    }
    let mut part = vec![0u64; cols];
    for (i, &c) in pivots.iter().enumerate() {
        part[c] = t[i];
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    let kernel = free
        .iter()
        .map(|&fc| {
            let mut v = vec![0u64; cols];
            v[fc] = 1;
            for (i, &c) in pivots.iter().enumerate() {
                v[c] = (p - a[i][fc]) % p;
            }
            v
        })
        .collect();
    Some((part, kernel))
}

fn val_big(n: &BigInt, q: u64) -> u64 {
    let q = BigInt::from(q);
    let mut n = n.clone();
    let mut v = 0;
    while !n.is_zero() && n.is_multiple_of(&q) {
        n /= &q;
        v += 1;
    }
    v
}

/// `ℰ`: exponent vectors in `[0, p)^dim`, in lexicographic order, of the
/// classes whose norm divided by `u` is a rational `p`-th power.
pub fn epsilon_set(ctx: &SelmerContext, u: &PrimePowers) -> Result<Vec<Vec<u8>>> {
    let p = ctx.p;
    let dim = ctx.dim();
    let rational: BTreeSet<u64> = ctx.s.iter().map(|pr| pr.q).chain(u.primes()).collect();
    let norms: Vec<BigInt> = ctx.basis.iter().map(FieldElement::norm).collect();
    let a: Vec<Vec<u64>> = rational.iter().map(|&l| norms.iter().map(|n| val_big(n, l) % p).collect()).collect();
    let t: Vec<u64> = rational.iter().map(|&l| u.exponent(l) % p).collect();
    let Some((part, kernel)) = solve_affine_mod(a, t, dim, p) else {
        return Ok(Vec::new());
    };
    let count = (p as f64).powi(kernel.len() as i32);
    if count > MAX_EPSILONS as f64 {
        return Err(Error::Limit(format!("|ℰ| = {p}^{} exceeds {MAX_EPSILONS}", kernel.len())));
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut coef = vec![0u64; kernel.len()];
    loop {
        let mut e = part.clone();
        for (c, k) in coef.iter().zip(&kernel) {
            for (x, y) in e.iter_mut().zip(k) {
                *x = (*x + c * y) % p;
            }
        }
        out.push(e.into_iter().map(|x| x as u8).collect());
        let mut i = 0;
        while i < coef.len() {
            coef[i] += 1;
            if coef[i] < p {
                break;
            }
            coef[i] = 0;
            i += 1;
        }
        if i == coef.len() {
            break;
        }
    }
    out.sort();
    Ok(out)
}

pub fn pairwise_distinct_mod(a: i64, b: i64, c: i64, p: u64) -> bool {
    let p = p as i64;
    let (a, b, c) = (a.rem_euclid(p), b.rem_euclid(p), c.rem_euclid(p));
    a != b && b != c && a != c
}

/// Valuations at one prime `𝔮` entering the valuative lemma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValuativeOrds {
    pub v: i64,
    pub n_sqrt: i64,
    pub two: i64,
    pub eps: i64,
    pub eps_bar: i64,
}

/// Which of the three valuative conditions (1, 2 or 3) rules out `ε`.
pub fn lemma_valuative(o: &ValuativeOrds, p: u64) -> Option<u8> {
    if pairwise_distinct_mod(o.v, o.n_sqrt, o.eps, p) {
        Some(1)
    } else if pairwise_distinct_mod(o.two + o.v, o.eps, o.eps_bar, p) {
        Some(2)
    } else if pairwise_distinct_mod(o.two + o.n_sqrt, o.eps, o.eps_bar, p) {
        Some(3)
    } else {
        None
    }
}

/// Residue-class test at a split `q = 2kp + 1` for one explicit `ε`, by
/// direct evaluation. `Ok(true)` means `C(p, q) = ∅`.
pub fn lemma_cpq(
    eps: &FieldElement,
    v: &PrimePowers,
    n: &PrimePowers,
    field: &QuadraticField,
    p: u64,
    q: u64,
) -> Result<bool> {
    let pr = split_type(field, q)?;
    if pr.kind != SplitKind::Split {
        return Err(Error::Precondition(format!("{q} does not split in ℚ(√−{})", field.m)));
    }
    let k = (q - 1) / (2 * p);
    let (vq, nq) = (v.mod_u64(q), n.mod_u64(q));
    let sq = field.sqrt_neg_m();
    let mut parts = Vec::new();
    for pj in [pr, pr.conj()] {
        let e = residue_at_split(eps, &pj)?;
        if e == 0 {
            return Err(Error::Precondition(format!("ε has positive valuation at {pj}")));
        }
        parts.push((pow_mod(e, q - 2, q), residue_at_split(&sq, &pj)?));
    }
    for z in chi_set(p, q)? {
        let ok = parts.iter().all(|&(einv, s)| {
            let t = mul_mod((mul_mod(vq, z, q) + mul_mod(nq, s, q)) % q, einv, q);
            pow_mod(t, 2 * k, q) <= 1
        });
        if ok {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "kebab-case")]
pub enum DescentOutcome {
    /// Every class in `ℰ` is ruled out (`epsilons = 0` when `ℰ` is empty).
    Eliminated { m: u64, epsilons: usize, valuative: usize, cpq: usize },
    /// `alive` classes of `ℰ` resist both lemmas; `witness` is the first.
    Survives { m: u64, epsilons: usize, alive: usize, witness: Vec<u8> },
}

impl DescentOutcome {
    pub fn eliminated(&self) -> bool {
        matches!(self, DescentOutcome::Eliminated { .. })
    }
}

struct CpqTable {
    chi: Vec<u64>,
    /// `x ↦ log_g(x) mod p` on `F_q*`, so that `x^{2k} = 1` iff the entry is 0.
    lam: Vec<u32>,
}

impl CpqTable {
    fn build(p: u64, q: u64) -> Result<Self> {
        let g = primitive_root(q);
        let mut lam = vec![0u32; q as usize];
        let mut x = 1u64;
        for j in 0..q - 1 {
            lam[x as usize] = (j % p) as u32;
            x = mul_mod(x, g, q);
        }
        Ok(CpqTable { chi: chi_set(p, q)?, lam })
    }
}

/// Descent test for a fixed exponent with residue tables shared across
/// instances.
pub struct DescentEngine {
    pub p: u64,
    pub k_max: u64,
    candidates: Vec<(u64, OnceLock<CpqTable>)>,
}

impl DescentEngine {
    pub fn new(p: u64, k_max: u64) -> Result<Self> {
        if p < 5 || !is_prime(p) {
            return Err(Error::InvalidInput(format!("p = {p} must be a prime ≥ 5")));
        }
        let candidates = (1..=k_max)
            .map(|k| 2 * k * p + 1)
            .filter(|&q| is_prime(q))
            .map(|q| (q, OnceLock::new()))
            .collect();
        Ok(DescentEngine { p, k_max, candidates })
    }

    fn table(&self, i: usize) -> &CpqTable {
        let (q, cell) = &self.candidates[i];
        cell.get_or_init(|| CpqTable::build(self.p, *q).expect("candidate q is valid"))
    }

    pub fn test(&self, f: &CoprimeForm) -> Result<DescentOutcome> {
        let p = self.p;
        let data = descent_data(f)?;
        let field = QuadraticField::new(data.m)?;
        let mut rational: BTreeSet<u64> = [2u64].into_iter().collect();
        rational.extend(data.u.primes());
        rational.extend(data.n.primes());
        rational.extend(crate::arith::factor(data.m)?.primes());
        let mut s = Vec::new();
        for &l in &rational {
            s.extend(primes_above(&field, l)?);
        }
        let ctx = selmer_group(&field, &s, p)?;
        let eps = epsilon_set(&ctx, &data.u)?;
        let m = data.m;
        if eps.is_empty() {
            return Ok(DescentOutcome::Eliminated { m, epsilons: 0, valuative: 0, cpq: 0 });
        }
        let mut alive = vec![true; eps.len()];
        let mut valuative = 0;
        let sqrt = field.sqrt_neg_m();
        let mut vrat = rational.clone();
        vrat.extend(data.v.primes());
        for &l in &vrat {
            for pr in primes_above(&field, l)? {
                let e = i64::from(pr.ramification());
                let ords_b = ctx.valuations_mod_p(&pr)?;
                let ords_bbar = ctx.valuations_mod_p(&pr.conj())?;
                let v = e * data.v.exponent(l) as i64;
                let n_sqrt = e * data.n.exponent(l) as i64 + i64::from(valuation(&sqrt, &pr)?);
                let two = if l == 2 { e } else { 0 };
                for (x, ok) in eps.iter().zip(alive.iter_mut()) {
                    if !*ok {
                        continue;
                    }
                    let dot = |w: &[u64]| (x.iter().zip(w).map(|(&a, &b)| u64::from(a) * b).sum::<u64>() % p) as i64;
                    let o = ValuativeOrds { v, n_sqrt, two, eps: dot(&ords_b), eps_bar: dot(&ords_bbar) };
                    if lemma_valuative(&o, p).is_some() {
                        *ok = false;
                        valuative += 1;
                    }
                }
            }
        }
        let mut cpq = 0;
        for i in 0..self.candidates.len() {
            if !alive.iter().any(|&a| a) {
                break;
            }
            let q = self.candidates[i].0;
            if kronecker(field.discriminant, q) != 1 {
                continue;
            }
            let pr = split_type(&field, q)?;
            let tab = self.table(i);
            let prs = [pr, pr.conj()];
            // per basis element, the class of its residue at each prime (None if zero)
            let logs: Vec<[Option<u32>; 2]> = ctx
                .basis
                .iter()
                .map(|b| {
                    let mut out = [None; 2];
                    for (j, pj) in prs.iter().enumerate() {
                        let r = residue_at_split(b, pj).expect("split");
                        out[j] = (r != 0).then(|| tab.lam[r as usize]);
                    }
                    out
                })
                .collect();
            let (vq, nq) = (data.v.mod_u64(q), data.n.mod_u64(q));
            let roots: Vec<u64> = prs.iter().map(|pj| residue_at_split(&sqrt, pj).expect("split")).collect();
            let pu = p as usize;
            let mut allowed = vec![false; pu * pu];
            for &z in &tab.chi {
                let cls: Vec<Option<usize>> = roots
                    .iter()
                    .map(|&s| {
                        let t = (mul_mod(vq, z, q) + mul_mod(nq, s, q)) % q;
                        (t != 0).then(|| tab.lam[t as usize] as usize)
                    })
                    .collect();
                for a in 0..pu {
                    for b in 0..pu {
                        if cls[0].is_none_or(|c| c == a) && cls[1].is_none_or(|c| c == b) {
                            allowed[a * pu + b] = true;
                        }
                    }
                }
            }
            for (x, ok) in eps.iter().zip(alive.iter_mut()) {
                if !*ok {
                    continue;
                }
                let mut cls = [0u64; 2];
                let mut usable = true;
                for (&e, l) in x.iter().zip(&logs) {
                    if e == 0 {
                        continue;
                    }
                    match (l[0], l[1]) {
                        (Some(a), Some(b)) => {
                            cls[0] += u64::from(e) * u64::from(a);
                            cls[1] += u64::from(e) * u64::from(b);
                        }
                        _ => usable = false,
                    }
                }
                if usable && !allowed[(cls[0] % p) as usize * pu + (cls[1] % p) as usize] {
                    *ok = false;
                    cpq += 1;
                }
            }
        }
        let left: Vec<usize> = (0..eps.len()).filter(|&i| alive[i]).collect();
        Ok(match left.first() {
            None => DescentOutcome::Eliminated { m, epsilons: eps.len(), valuative, cpq },
            Some(&i) => DescentOutcome::Survives { m, epsilons: eps.len(), alive: left.len(), witness: eps[i].clone() },
        })
    }
}

pub fn descent_test(f: &CoprimeForm, p: u64) -> Result<DescentOutcome> {
    DescentEngine::new(p, DEFAULT_K_MAX_SELMER)?.test(f)
}
