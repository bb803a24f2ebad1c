//! Per-pair gap vectors from a translation model are dominated by one
//! direction: the shared gap.

use gapinit_lab::geometry::{gap_spectrum, sample_projected_gaps};
use gapinit_lab::toy_model::{sample_pairs, TranslationModelSpec};
use gapinit_lab::Rng;

fn main() -> gapinit_lab::Result<()> {
    let mut rng = Rng::new(3);
    for sigma in [0.0, 0.02, 0.05, 0.1] {
        let spec = TranslationModelSpec::random(100, 1.0, 1.0, sigma, &mut rng)?;
        let (xv, xt) = sample_pairs(&spec, 2000, &mut rng)?;
        let rep = gap_spectrum(&sample_projected_gaps(&xt, &xv)?)?;
        let top3: Vec<String> = rep.explained_fraction[..3].iter().map(|f| format!("{f:.4}")).collect();
        println!("sigma = {sigma:<5} top explained fractions: {}", top3.join(", "));
    }
    Ok(())
}
