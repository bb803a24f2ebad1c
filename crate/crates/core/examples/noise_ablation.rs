//! Gaussian noise on the estimated gap degrades the initial alignment as
//! ‖g‖ / √(‖g‖² + dε²).

use gapinit_lab::adapter::{default_alpha, noisy_gap_init};
use gapinit_lab::geometry::{cosine, sample_unit_sphere};
use gapinit_lab::Rng;

fn main() -> gapinit_lab::Result<()> {
    let d = 512;
    let mut rng = Rng::new(10);
    let g = sample_unit_sphere(d, &mut rng)?;
    for eps in [0.0, 0.02, 0.05, 0.2, 1.0] {
        let trials = 50;
        let mut total = 0.0;
        for _ in 0..trials {
            let a = noisy_gap_init(d, d, 1, default_alpha(1), &g, eps, &mut rng)?;
            total += cosine(&a.b().column(0), &g)?;
        }
        let expected = 1.0 / (1.0 + d as f64 * eps * eps).sqrt();
        println!("eps {eps:<5} mean cos {:.4}  closed form {expected:.4}", total / trials as f64);
    }
    Ok(())
}
