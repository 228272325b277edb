//! Characteristic branches mu_k(lambda) of the Birman-Schwinger operator
//! and the pencil roots for one coupling, V = 0 with a unit box well.

use virtual_levels::birman_schwinger::{edge_grid, BirmanSchwinger};
use virtual_levels::discrete::TruncatedH0;
use virtual_levels::lattice::{PerturbationSpec, PotentialSpec};

fn main() -> virtual_levels::Result<()> {
    let h0 = TruncatedH0::finite_difference(&PotentialSpec::zero(1), 80, 64)?;
    let gap = h0.discrete_gap(0)?;
    let bs = BirmanSchwinger::new(&h0, &PerturbationSpec::unit_box(1), gap)?;
    let lambdas = edge_grid(gap.lambda_plus, 0.25, 16, true);
    let table = bs.branches(&lambdas, 2, 0)?;
    for (l, row) in table.lambdas.iter().zip(&table.positive) {
        println!("lambda {l:+.6e}  mu {row:?}");
    }
    let roots = bs.solve_pencil(&table, -0.1, 1e-13)?;
    println!("roots at gamma = -0.1: {roots:?}");
    Ok(())
}
