//! Exponent bounds for the four sieve cases at r ≤ 10⁶ and at a few radii.

use apsieve::bounds::{mignotte_detail, normalize, Radius};
use apsieve::cases::template;

fn main() -> apsieve::error::Result<()> {
    for id in 1..=4u8 {
        let f = normalize(&template(id)?)?;
        let d = mignotte_detail(&f, Radius::from_int(1_000_000))?;
        println!("case {id}: {}·X^n − {}·Y^n, c = {}·r², p ≤ {}", f.a0, f.b0, f.c_mult, d.bound);
        for r in ["1e100", "1e1000"] {
            let d = mignotte_detail(&f, r.parse()?)?;
            println!("    r ≤ {r}: p ≤ {}", d.bound);
        }
    }
    Ok(())
}
