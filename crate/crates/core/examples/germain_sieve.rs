//! Sophie Germain sieve over a range of r for one case and exponent.
//!
//! `cargo run --release --example germain_sieve -- 1 23 1000000`

use apsieve::cases::template;
use apsieve::germain::{sieve_range, DEFAULT_K_MAX};

fn main() -> apsieve::error::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (case, p, r_max) = match args[..] {
        [c, p, r] => (c as u8, p, r),
        _ => (1, 23, 1_000_000),
    };
    let t = template(case)?;
    let (survivors, outcomes) = sieve_range(case, p, 1..=r_max, DEFAULT_K_MAX)?;
    let survivors: Vec<u64> = survivors.into_iter().filter(|&r| t.r_obstruction(r).is_none()).collect();
    println!("case {case}, p = {p}, r ≤ {r_max}: {} survivors", survivors.len());
    println!("first survivors: {:?}", &survivors[..survivors.len().min(10)]);
    if let Some(o) = outcomes.iter().find(|o| o.witness.is_some()) {
        println!("r = {} eliminated by q = {}", o.r, o.witness.unwrap_or_default());
    }
    Ok(())
}
