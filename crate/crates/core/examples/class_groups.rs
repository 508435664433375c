//! Class groups of imaginary quadratic fields, checked against a count of
//! reduced forms.

use apsieve::quadfield::{class_group, count_reduced_forms};

fn main() -> apsieve::error::Result<()> {
    for m in [1u64, 3, 5, 14, 21, 47, 105, 1155, 5005, 300_007] {
        let g = class_group(m)?;
        println!(
            "m = {m}: D = {}, h = {} (forms: {}), structure {:?}",
            g.discriminant,
            g.h,
            count_reduced_forms(g.discriminant),
            g.cyclic_factors
        );
    }
    Ok(())
}
