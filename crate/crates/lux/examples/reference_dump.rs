//! Dump OPTICS clusterings and Friedman statistics for randomized inputs as
//! JSON lines, for cross-checking against reference implementations:
//!
//! ```sh
//! cargo run -p lux --example reference_dump --release -- /tmp/refdump
//! python3 scripts/check_against_references.py /tmp/refdump
//! ```

use lux::metrics::friedman_nemenyi;
use lux::optics::optics_xi;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "/tmp/refdump".to_string());
    std::fs::create_dir_all(&dir).expect("output dir");

    let mut out = String::new();
    for case in 0..150u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let d = rng.random_range(1..4);
        let n = rng.random_range(12..80);
        let min_samples = rng.random_range(2..8).min(n / 2).max(2);
        let n_blobs = rng.random_range(1..5);
        let centers: Vec<Vec<f64>> = (0..n_blobs)
            .map(|_| (0..d).map(|_| rng.random_range(0.0..20.0)).collect())
            .collect();
        let mut pts: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            if case % 7 == 3 && i % 6 == 5 && !pts.is_empty() {
                // exact duplicates exercise the zero-reachability plateaus
                let j = rng.random_range(0..pts.len());
                pts.push(pts[j].clone());
            } else if i % 5 == 4 {
                pts.push((0..d).map(|_| rng.random_range(0.0..20.0)).collect());
            } else {
                let c = &centers[i % n_blobs];
                pts.push(c.iter().map(|v| v + rng.random_range(-0.7..0.7)).collect());
            }
        }
        let c = optics_xi(n, min_samples, 0.05, |i, j| {
            pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        });
        let labels: Vec<i64> = c.labels.iter().map(|l| l.map(|v| v as i64).unwrap_or(-1)).collect();
        let reach: Vec<f64> =
            c.reachability.iter().map(|r| if r.is_finite() { *r } else { -1.0 }).collect();
        out.push_str(&format!(
            "{{\"case\":{case},\"min_samples\":{min_samples},\"points\":{pts:?},\"ordering\":{:?},\"reachability\":{reach:?},\"labels\":{labels:?}}}\n",
            c.ordering
        ));
    }
    std::fs::write(format!("{dir}/optics.jsonl"), out).expect("write optics dump");

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut out = String::new();
    for case in 0..60 {
        let n = rng.random_range(3..20);
        let k = rng.random_range(2..7);
        let table: Vec<Vec<f64>> =
            (0..n).map(|_| (0..k).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let r = friedman_nemenyi(&table, true).unwrap();
        out.push_str(&format!(
            "{{\"case\":{case},\"table\":{table:?},\"chi2\":{},\"f\":{},\"critical\":{},\"p\":{},\"ranks\":{:?}}}\n",
            r.chi2, r.f_statistic, r.critical_value, r.p_value, r.mean_ranks
        ));
    }
    std::fs::write(format!("{dir}/friedman.jsonl"), out).expect("write friedman dump");
    println!("wrote {dir}/optics.jsonl and {dir}/friedman.jsonl");
}
