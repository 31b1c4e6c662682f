// scratch: scale-invariance of the two-disk detection (A10 tuning)
use salr_core::fixtures;
use salr_core::pipeline::detect_image;

fn main() {
    let mut results = Vec::new();
    for scale in [1.0, 2.0] {
        let fixture = fixtures::two_disks_scaled::<f64>(scale);
        let mut cfg = fixture.config.clone();
        cfg.rng_seed = 5;
        let t0 = std::time::Instant::now();
        let det = detect_image(&fixture.image, &cfg).unwrap();
        let seeds = det.all_seeds();
        println!("scale {scale}: {} seeds in {:.2}s", seeds.len(), t0.elapsed().as_secs_f64());
        let mut pos: Vec<Vec<f64>> = seeds.iter().map(|s| s.position.clone()).collect();
        pos.sort_by(|a, b| a[1].partial_cmp(&b[1]).unwrap());
        for p in &pos { println!("   ({:.2}, {:.2}) -> normalized ({:.3}, {:.3})", p[0], p[1], p[0]/scale, p[1]/scale); }
        results.push(pos.iter().map(|p| vec![p[0]/scale, p[1]/scale]).collect::<Vec<_>>());
    }
    // relative positions within 10% of object diameter (40 cells at 1x)
    let diam = 40.0;
    for (a, b) in results[0].iter().zip(&results[1]) {
        let d = ((a[0]-b[0]).powi(2) + (a[1]-b[1]).powi(2)).sqrt();
        println!("normalized deviation {:.2} cells ({:.1}% of diameter)", d, 100.0 * d / diam);
    }
}
