//! Bounded search on the Thue equations left for case 2, p = 5, and export
//! for an external solver.

use apsieve::cases::{instantiate, template};
use apsieve::thue::{bounded_search, export_string, ThueInstance};

fn main() -> apsieve::error::Result<()> {
    let t = template(2)?;
    let list: Vec<ThueInstance> =
        [11u64, 1537].iter().map(|&r| instantiate(&t, 5, r).map(|i| ThueInstance::from_ternary(&i))).collect::<Result<_, _>>()?;
    for inst in &list {
        println!("r = {}: {} solutions with |σ|, |τ| ≤ 10⁴", inst.r, bounded_search(inst, 10_000).len());
    }
    print!("{}", export_string(&list));
    Ok(())
}
