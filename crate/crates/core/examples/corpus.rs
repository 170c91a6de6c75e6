use std::time::Instant;

use interp_forge::builder::{build_hardmax, build_softmax};
use interp_forge::gen::corpus_dataset;

fn main() {
    let count: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200);
    let start = Instant::now();
    let (mut fails, mut worst_c, mut worst_d) = (0, 0.0f64, 0.0f64);
    for k in 0..count {
        let ds = corpus_dataset(k).unwrap();
        match build_hardmax(&ds) {
            Ok((_, r)) => {
                if r.max_distance() > 1e-11 {
                    println!("hardmax {k}: {:e}", r.max_distance());
                }
                worst_c = worst_c.max(r.param_coeff);
                worst_d = worst_d.max(r.max_distance());
            }
            Err(e) => {
                fails += 1;
                println!("hardmax {k}: {e}");
            }
        }
        match build_softmax(&ds) {
            Ok((_, r, plan)) => {
                if r.max_distance() > 1e-11 {
                    println!("softmax {k}: {:e}", r.max_distance());
                }
                worst_c = worst_c.max(r.param_coeff);
                worst_d = worst_d.max(r.max_distance());
                if !plan.global_tau_verified {
                    println!("softmax {k}: {:?}", plan.note);
                }
            }
            Err(e) => {
                fails += 1;
                println!("softmax {k}: {e}");
            }
        }
    }
    println!(
        "fails {fails}, worst c {worst_c:.2}, worst distance {worst_d:e}, {:?}",
        start.elapsed()
    );
}
