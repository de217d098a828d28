use eigengas::harness::{self, RunConfig, SweepAxis};

fn r2(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = pts.iter().map(|p| (p.1 - (my + slope * (p.0 - mx))).powi(2)).sum();
    let sst: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    (slope, 1.0 - ssr / sst)
}

fn main() {
    for speed in [3e-3] {
        for seed in [7u64, 8, 9] {
            let mut cfg = RunConfig::default();
            cfg.ensemble.seed = seed;
            cfg.ensemble.n = 600;
            cfg.sweep.axis = SweepAxis::Amplitude;
            cfg.sweep.values = vec![0.035, 0.055, 0.075, 0.095, 0.115];
            cfg.sweep.at_speed = Some(speed);
            let curve = harness::sweep(&cfg, SweepAxis::Amplitude).unwrap();
            let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.x, p.mean_success)).collect();
            let (slope, r) = r2(&pts);
            let vals: Vec<String> = pts.iter().map(|p| format!("{:.3}", p.1)).collect();
            println!("speed {speed:.0e} seed {seed}: [{}] slope {slope:.2} R2 {r:.3}", vals.join(", "));
        }
    }
}
