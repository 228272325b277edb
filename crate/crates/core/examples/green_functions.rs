//! Whole-space and lattice Green functions checked against closed forms.

use num_complex::Complex64;
use virtual_levels::green::{fundamental_solution, green_check, lattice_green_1d_closed};

fn main() -> virtual_levels::Result<()> {
    for d in 1..=3 {
        println!("E_{d}(r = 1, gamma0 = 1) = {:.15}", fundamental_solution(d, 1.0, 1.0)?);
    }
    let g = lattice_green_1d_closed(1.0, Complex64::new(0.5, 0.0), 0.3);
    println!("1-d lattice sum at (gamma0, p, x) = (1, 0.5, 0.3): {:.15} {:+.15}i", g.re, g.im);
    for c in green_check()?.checks {
        println!("{:<50} {:.3e} <= {:.0e}: {}", c.name, c.value, c.tolerance, c.pass);
    }
    Ok(())
}
