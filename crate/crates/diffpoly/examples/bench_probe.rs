use diffpoly::norms::{Exponent, NormEngine, NormOptions};
use diffpoly::randpoly::sample_coefficients;
use diffpoly::spectrum::SpectralSpace;
use diffpoly::ManifoldModel;
use std::sync::Arc;
use std::time::Instant;

fn time_norm(m: &str, n: f64, p: &str, trials: u64) {
    let space = Arc::new(SpectralSpace::build(ManifoldModel::parse(m).unwrap(), n).unwrap());
    let opts = NormOptions { convergence_tol: 1e-3, ..Default::default() };
    let engine = NormEngine::with_options(space.clone(), opts);
    let exp = Exponent::parse(p).unwrap();
    let t0 = Instant::now();
    let mut acc = 0.0;
    for t in 0..trials {
        let a = sample_coefficients(&space, 1.0, 7, t).unwrap();
        acc += engine.norm(&a.values, exp).unwrap().value;
    }
    println!("{m} n={n} p={p}: {:?}/trial (sum {acc:.3})", t0.elapsed() / trials as u32);
}

fn main() {
    time_norm("t1", 512.0, "2", 50);
    time_norm("t1", 512.0, "4", 50);
    time_norm("t1", 512.0, "1", 50);
    time_norm("t1", 512.0, "inf", 50);
    time_norm("s2", 64.0, "4", 50);
    time_norm("s2", 64.0, "1", 20);
    time_norm("s2", 64.0, "inf", 10);
}
