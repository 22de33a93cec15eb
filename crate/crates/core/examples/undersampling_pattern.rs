//! Selects a Cartesian line pattern by point-spread-function peak-to-side ratio.

use anyhow::Result;
use lmala::encoding::{generate_pattern, generate_pattern_with_center, peak_to_side_ratio};

fn main() -> Result<()> {
    for r in [2.0, 3.0, 4.0, 5.0] {
        let p = generate_pattern_with_center(32, r, 100, 0, 4)?;
        let row: String = p.mask().iter().map(|&m| if m { '|' } else { '.' }).collect();
        println!("R={r}: {row}  lines {:2}  peak/side {:.2}", p.sampled_count(), peak_to_side_ratio(p.mask()));
    }
    // Full-size grids keep the 15-line fully sampled centre.
    let p = generate_pattern(252, 4.0, 100, 0)?;
    println!("252 lines at R=4: {} sampled, centre {:?}", p.sampled_count(), p.central_lines());
    Ok(())
}
