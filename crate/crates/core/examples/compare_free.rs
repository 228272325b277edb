//! Prediction, pencil and direct oracle side by side for a config file
//! (default: the d = 1 free shallow well).

use std::path::PathBuf;

use virtual_levels::config::RunConfig;
use virtual_levels::workflow;

fn main() -> virtual_levels::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/d1_free_box.json"));
    let cfg = RunConfig::from_path(&path)?;
    let cmp = workflow::compare(&cfg, &cfg.problem()?)?;
    for r in &cmp.rows {
        println!(
            "gamma {:>6} k {} pred {:?} pencil {:?} oracle {:?} rel_err_pred {:?}",
            r.gamma, r.k, r.rho_pred, r.rho_pencil, r.rho_oracle, r.rel_err_pred
        );
    }
    println!("{:#?}", cmp.verdict);
    Ok(())
}
