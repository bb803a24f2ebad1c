//! Gap estimation error against calibration size, and the effect of mixing
//! in calibration pairs whose gap points elsewhere.

use gapinit_lab::calibration::{calibration_size_sweep, composition_sweep, DEFAULT_CALIBRATION_SIZES};
use gapinit_lab::geometry::normalize;
use gapinit_lab::toy_model::TranslationModelSpec;
use gapinit_lab::Rng;

fn main() -> gapinit_lab::Result<()> {
    let mut rng = Rng::new(9);
    let spec = TranslationModelSpec::random(128, 1.0, 1.0, 0.1, &mut rng)?;
    for row in calibration_size_sweep(&spec, &DEFAULT_CALIBRATION_SIZES, 20, &rng)? {
        println!(
            "n = {:>5}: relative error {:.4}, cos {:.4}",
            row.size, row.mean_relative_error, row.mean_cosine
        );
    }

    // Out-of-domain source: swap two coordinates of the gap and remove the
    // in-domain component.
    let g = spec.gap();
    let mut v = g.as_slice().to_vec();
    v.swap(0, 1);
    let w = gapinit_lab::DenseVector::new(v)?;
    let w = w.sub(&normalize(g)?.scaled(w.dot(&normalize(g)?)?)?)?;
    let ood = TranslationModelSpec::new(spec.mu_v().clone(), normalize(&w)?, spec.sigma())?;
    for mix in [0.0, 0.5, 1.0] {
        let r = composition_sweep(&spec, &ood, mix, 1024, &mut rng)?;
        println!("mix {mix:.1}: cos to in-domain gap {:.4}", r.cos_to_in_gap);
    }
    Ok(())
}
