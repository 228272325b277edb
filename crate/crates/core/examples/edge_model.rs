//! Upper edge of the first Mathieu gap: effective mass, weighted Bloch
//! norm and the eigenvalues nu_k of the edge operator for a unit box W.

use virtual_levels::bands::{find_gaps, refine_edge, sweep_bands, EdgeSide, EdgeTolerances};
use virtual_levels::edge_model::non_degenerate_model;
use virtual_levels::fiber::{default_cutoff, PlaneWaveBasis};
use virtual_levels::lattice::{MomentumGrid, PerturbationSpec, PotentialSpec};

fn main() -> virtual_levels::Result<()> {
    let v = PotentialSpec::mathieu(1.0);
    let basis = PlaneWaveBasis::new(1, default_cutoff(1))?;
    let bands = sweep_bands(&v, &basis, &MomentumGrid::uniform(1, 64)?, 4)?;
    let gap = find_gaps(&bands, 1e-6)[1];
    let edge = refine_edge(&bands, &gap, EdgeSide::Upper, &EdgeTolerances::default())?;
    println!("edge value {:.12} class {:?}", edge.value, edge.classify());
    let model = non_degenerate_model(&edge, &PerturbationSpec::unit_box(1))?;
    println!("extrema {:?}", model.extrema);
    println!("masses {:?}", model.masses);
    println!("||v||^2 {:?}", model.norms_sq);
    println!("nu {:?}", model.nu);
    Ok(())
}
