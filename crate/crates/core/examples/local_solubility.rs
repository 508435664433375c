//! Local solubility test on the ternary equation for a handful of r.

use apsieve::cases::{instantiate, template};
use apsieve::localsolve::{local_test, LocalOutcome, DEFAULT_LIFT_CAP};

fn main() -> apsieve::error::Result<()> {
    let t = template(2)?;
    for r in [1u64, 2, 4, 5, 11, 13, 1537] {
        let inst = instantiate(&t, 5, r)?;
        match local_test(&inst, DEFAULT_LIFT_CAP)? {
            LocalOutcome::Eliminated(w) => println!("case 2 p=5 r={r}: eliminated by {w:?}"),
            LocalOutcome::Survives(f) => println!("case 2 p=5 r={r}: survives as {}·X^5 − {}·Y^10 = {}", f.a, f.b, f.c),
        }
    }
    Ok(())
}
