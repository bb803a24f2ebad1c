//! Train a rank-1 adapter on a toy translation task from a random and from a
//! gap-aligned initialization and compare loss and alignment over time.

use gapinit_lab::adapter::{default_alpha, gap_init, random_init, train, Batch, TrainConfig, TrainingData};
use gapinit_lab::calibration::estimate_gap;
use gapinit_lab::toy_model::{sample_pairs, TranslationModelSpec};
use gapinit_lab::Rng;

fn main() -> gapinit_lab::Result<()> {
    let d = 128;
    let mut rng = Rng::new(5);
    let spec = TranslationModelSpec::random(d, 1.0, 1.0, 0.1, &mut rng)?;
    let (xv, xt) = sample_pairs(&spec, 1024, &mut rng)?;
    let data = TrainingData::Pairs(Batch::new(xv, xt)?);
    let g_hat = estimate_gap(&spec, 256, &mut rng)?;

    let cfg = TrainConfig { steps: 300, ..TrainConfig::default() };
    let alpha = default_alpha(1);
    let inits = [
        ("random", random_init(d, d, 1, alpha, &mut Rng::new(1))?),
        ("gap", gap_init(d, d, 1, alpha, &g_hat, &mut Rng::new(1))?),
    ];
    for (name, init) in inits {
        let (_, trace) = train(&init, &data, &cfg, Some(spec.gap()))?;
        print!("{name:>6}:");
        for t in [0, 10, 50, 100, 299] {
            print!("  step {t:>3} loss {:.3} align {:.3}", trace.losses[t], trace.alignment[t]);
        }
        println!();
    }
    Ok(())
}
