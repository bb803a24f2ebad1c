//! Save a trained adapter to JSON and load it back.

use gapinit_lab::adapter::{default_alpha, gap_init, load_adapter, save_adapter, train, TrainConfig, TrainingData};
use gapinit_lab::toy_model::TranslationModelSpec;
use gapinit_lab::Rng;

fn main() -> gapinit_lab::Result<()> {
    let mut rng = Rng::new(4);
    let spec = TranslationModelSpec::random(16, 1.0, 1.0, 0.05, &mut rng)?;
    let init = gap_init(16, 16, 2, default_alpha(2), spec.gap(), &mut rng)?;
    let cfg = TrainConfig { steps: 200, ..TrainConfig::default() };
    let (trained, _) = train(&init, &TrainingData::Model(spec), &cfg, None)?;

    let dir = std::env::temp_dir().join("gapinit-lab-example");
    let path = dir.join("adapter.json");
    save_adapter(&trained, &path)?;
    let back = load_adapter(&path)?;
    assert_eq!(back, trained);
    println!("round-tripped a rank-{} {}x{} adapter through {}", back.rank(), back.d(), back.k(), path.display());
    Ok(())
}
