//! 2-adic certificates for the even cases.

use apsieve::cases::{eliminate_even_case, template};

fn main() -> apsieve::error::Result<()> {
    for id in [5u8, 6, 11, 12] {
        let cert = eliminate_even_case(&template(id)?)?;
        let ok = apsieve::arith::primes_up_to(10_000).into_iter().filter(|&p| p >= 5).all(|p| cert.verify(p));
        println!("case {id}: {cert:?}, holds for 5 ≤ p ≤ 10⁴: {ok}");
    }
    Ok(())
}
