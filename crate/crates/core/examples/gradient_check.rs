//! Verifies every differentiable op against central finite differences
//! in 64-bit precision and prints one line per op.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use ssit::gradcheck::{check_ops, TOLERANCE};

fn main() -> ssit::Result<()> {
    let reports = check_ops(None, 0)?;
    for r in &reports {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        println!("{:<18} instances={} max_rel_error={:.3e} {verdict}", r.op, r.instances, r.max_rel_error);
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    println!("{} ops checked, {failed} above {TOLERANCE:e}", reports.len());
    if failed > 0 {
        std::process::exit(1);
    }
    Ok(())
}
