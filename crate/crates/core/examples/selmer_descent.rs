//! Descent over Q(√−m) for equations that pass the local test.

use apsieve::cases::{instantiate, template};
use apsieve::localsolve::{local_test, LocalOutcome, DEFAULT_LIFT_CAP};
use apsieve::selmer::{DescentEngine, DEFAULT_K_MAX_SELMER};

fn main() -> apsieve::error::Result<()> {
    let engine = DescentEngine::new(5, DEFAULT_K_MAX_SELMER)?;
    let t = template(2)?;
    let mut shown = 0;
    for r in 1..2000u64 {
        if t.r_obstruction(r).is_some() {
            continue;
        }
        let LocalOutcome::Survives(f) = local_test(&instantiate(&t, 5, r)?, DEFAULT_LIFT_CAP)? else { continue };
        println!("r = {r}: {:?}", engine.test(&f)?);
        shown += 1;
        if shown == 8 {
            break;
        }
    }
    Ok(())
}
