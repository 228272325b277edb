//! Morse-Bott edge: the symbol (|p| - 1)^2 in d = 2 binds many levels for
//! any small coupling. Levels from angular-momentum sectors against the
//! predicted depths.

use virtual_levels::bands::{EdgeTolerances, SyntheticDispersion};
use virtual_levels::edge_model::degenerate_gw;
use virtual_levels::lattice::PerturbationSpec;
use virtual_levels::predictor::predict_degenerate;
use virtual_levels::radial::{momentum_sector_spectrum, MomentumSectorOptions};

fn main() -> virtual_levels::Result<()> {
    let sd = SyntheticDispersion::Radial { dim: 2, k0: 1.0, offset: 0.0 };
    let w = PerturbationSpec::gaussian(vec![0.0, 0.0], 2.0, 1.0);
    let model = degenerate_gw(&sd, &w, 128, &EdgeTolerances::default())?;
    for g in [-0.05, -0.0125] {
        let levels = momentum_sector_spectrum(1.0, 0.0, &w, g, 64, &MomentumSectorOptions::default())?;
        let pred = predict_degenerate(&model, g, 7, f64::INFINITY)?;
        println!("gamma {g}");
        let depths = levels.iter().flat_map(|(v, d)| std::iter::repeat_n(-v, *d));
        for (k, d) in depths.take(7).enumerate() {
            println!("  level {k}: depth {d:.6e} predicted {:.6e}", pred.depths[k]);
        }
    }
    Ok(())
}
