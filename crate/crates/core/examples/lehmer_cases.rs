//! The Lehmer route for cases 7–10, including the r = 29 control.

use apsieve::lehmer::{candidate_exponents, case_coefficients, resolve_case, solve_c1x2_plus_c2};

fn main() -> apsieve::error::Result<()> {
    let sols = solve_c1x2_plus_c2(1, 12 * 29 * 29, 5)?;
    for s in &sols {
        println!("x² + 12·29² = y⁵: x = {}, y = {} (γ = {} + {}√−3)", s.x, s.y, s.a, s.b);
    }
    let rep = resolve_case(7, 29)?;
    println!("case 7 r = 29: exponents {:?}, {} intermediate, {} solutions", rep.exponents, rep.intermediate.len(), rep.solutions.len());
    for case in 7..=10u8 {
        let (c1, c2, _) = case_coefficients(case, 5)?;
        println!("case {case} r = 5: C1 = {c1}, C2 = {c2}, exponents {:?}", candidate_exponents(c1, c2)?);
    }
    Ok(())
}
