//! Bands and gaps of the Mathieu potential V(x) = cos(2 pi x).

use virtual_levels::bands::{find_gaps, sweep_bands};
use virtual_levels::fiber::{default_cutoff, PlaneWaveBasis};
use virtual_levels::lattice::{MomentumGrid, PotentialSpec};

fn main() -> virtual_levels::Result<()> {
    let v = PotentialSpec::mathieu(1.0);
    let basis = PlaneWaveBasis::new(1, default_cutoff(1))?;
    let grid = MomentumGrid::uniform(1, 64)?;
    let bands = sweep_bands(&v, &basis, &grid, 4)?;
    for n in 0..bands.n_bands() {
        println!("band {n}: [{:.10}, {:.10}]", bands.band_min(n), bands.band_max(n));
    }
    for gap in find_gaps(&bands, 1e-6) {
        println!("gap {}: ({:?}, {:.10}) width {:.6}", gap.j, gap.lambda_minus, gap.lambda_plus, gap.width());
    }
    Ok(())
}
