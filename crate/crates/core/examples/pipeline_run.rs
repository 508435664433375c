//! A small end-to-end run: all cases, p ≤ 13, r ≤ 2000.

use apsieve::pipeline::{run, RunConfig};

fn main() -> apsieve::error::Result<()> {
    let out = std::env::temp_dir().join("apsieve-example");
    let cfg = RunConfig { p_max: Some(13), r_max: 2000, out: out.clone(), ..RunConfig::default() };
    let s = run(&cfg)?;
    for t in &s.tables {
        print!("case {}\n{}", t.case, t.to_csv());
    }
    print!("{}", s.verdict.text);
    println!("outputs in {}", out.display());
    Ok(())
}
