//! Score every layer of a synthetic encoder stack and pick adapter layers
//! with a safety margin over the early layers.

use gapinit_lab::calibration::{generate_stack, SyntheticStackSpec};
use gapinit_lab::spot_gap::{gg_safe_select, spot_gap_score, SpotGapParams};
use gapinit_lab::Rng;

fn main() -> gapinit_lab::Result<()> {
    let mut rng = Rng::new(2024);
    let spec = SyntheticStackSpec::planted(64, 8, &[3, 6], 2.0, 0.5, 0.1, &mut rng)?;
    let acts = generate_stack(&spec, 256, &rng)?;
    let params = SpotGapParams::default();
    let scores = acts
        .iter()
        .map(|a| Ok(spot_gap_score(&a.h_v, &a.h_t, &params)?.layer_score))
        .collect::<gapinit_lab::Result<Vec<f64>>>()?;
    for (l, s) in scores.iter().enumerate() {
        println!("layer {l}: score {s:.4}");
    }
    let sel = gg_safe_select(&scores, 2, 2)?;
    println!("selected {:?} (planted [3, 6])", sel.selected);
    Ok(())
}
