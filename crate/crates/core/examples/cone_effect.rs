//! Embeddings cluster in a narrow cone around their modality mean; centering
//! by the global mean removes the shared offset.

use gapinit_lab::geometry::{cone_concentration, mean_vector, DEFAULT_BINS};
use gapinit_lab::toy_model::{sample_pairs, TranslationModelSpec};
use gapinit_lab::{DenseMatrix, Rng};

fn main() -> gapinit_lab::Result<()> {
    let mut rng = Rng::new(11);
    let spec = TranslationModelSpec::random(256, 1.0, 1.0, 0.05, &mut rng)?;
    let (xv, xt) = sample_pairs(&spec, 1000, &mut rng)?;
    let global = mean_vector(&xv.vstack(&xt)?)?;
    for (name, emb) in [("visual", &xv), ("text", &xt)] {
        let mean = mean_vector(emb)?;
        let raw = cone_concentration(emb, &mean, DEFAULT_BINS)?;
        let centered_rows: DenseMatrix =
            emb.map_rows(|r| r.iter().zip(global.as_slice()).map(|(x, m)| x - m).collect())?;
        let centered = cone_concentration(&centered_rows, &mean.sub(&global)?, DEFAULT_BINS)?;
        println!(
            "{name:>6}: raw mean cos {:.3} (std {:.3}), globally centered {:.3} (std {:.3})",
            raw.mean_cos, raw.std_cos, centered.mean_cos, centered.std_cos
        );
    }
    Ok(())
}
