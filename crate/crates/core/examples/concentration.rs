//! Cosine between independent random unit vectors concentrates at 0 with
//! variance 1/d, and its square follows Beta(1/2, (d−1)/2).

use gapinit_lab::geometry::random_cosines;
use gapinit_lab::stats::{beta_cdf, ks_statistic};
use gapinit_lab::Rng;

fn main() -> gapinit_lab::Result<()> {
    let n = 20_000;
    println!("{:>6} {:>12} {:>12} {:>10} {:>14}", "d", "E[cos^2]", "1/d", "KS", "P(|cos|>=0.05)");
    for (i, d) in [16usize, 64, 256, 1024].into_iter().enumerate() {
        let cos = random_cosines(d, n, &Rng::new(7).child(i as u64))?;
        let sq: Vec<f64> = cos.iter().map(|c| c * c).collect();
        let mean = sq.iter().sum::<f64>() / n as f64;
        let ks = ks_statistic(&sq, |x| beta_cdf(x, 0.5, (d as f64 - 1.0) / 2.0))?;
        let tail = cos.iter().filter(|c| c.abs() >= 0.05).count() as f64 / n as f64;
        println!("{d:>6} {mean:>12.6} {:>12.6} {ks:>10.4} {tail:>14.4}", 1.0 / d as f64);
    }
    Ok(())
}
