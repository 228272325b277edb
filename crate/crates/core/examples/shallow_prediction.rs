//! Predicted levels below the bottom of the spectrum for V = 0 and a unit
//! box well, together with the threshold verdict.

use std::path::PathBuf;

use virtual_levels::config::RunConfig;
use virtual_levels::workflow;

fn main() -> virtual_levels::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/d1_free_box.json");
    let cfg = RunConfig::from_path(&path)?;
    let problem = cfg.problem()?;
    let setup = workflow::edge_setup(&cfg, &problem)?;
    let model = workflow::edge_model(&cfg, &problem, &setup)?;
    println!("{:?}", workflow::threshold(&cfg, &setup)?);
    for &g in cfg.require_couplings()? {
        let p = workflow::predict(&setup, &model, g)?;
        println!("gamma {g:>6}: law {} depths {:?}", p.law.name(), p.depths);
    }
    Ok(())
}
