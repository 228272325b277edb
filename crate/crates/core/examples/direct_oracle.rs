//! Direct eigenvalues of H0 + gamma W on a periodic box, V = 0 and a unit
//! box well, against the shallow-well law depth (gamma int W / 2)^2.

use virtual_levels::discrete::TruncatedH0;
use virtual_levels::lattice::{PerturbationSpec, PotentialSpec};
use virtual_levels::oracle::gap_spectrum;

fn main() -> virtual_levels::Result<()> {
    let w = PerturbationSpec::unit_box(1);
    for (g, l) in [(-0.2, 60), (-0.1, 120), (-0.05, 240)] {
        let h0 = TruncatedH0::finite_difference(&PotentialSpec::zero(1), l, 64)?;
        let gap = h0.discrete_gap(0)?;
        let r = gap_spectrum(&h0, &w, &gap, g, (gap.lambda_plus - 2.0, gap.lambda_plus), false)?;
        let depth = gap.lambda_plus - r.values[0];
        let law = (g / 2.0f64).powi(2);
        println!("gamma {g:>6}  L {l:>4}  depth {depth:.10e}  law {law:.10e}  rel {:+.4}", law / depth - 1.0);
    }
    Ok(())
}
