//! Manual timing probe for one benchmark replication at full scale.
//! Run with: cargo test -p ssflrd-core --test perf_probe -- --ignored --nocapture

use std::time::Instant;

use ssflrd_core::{
    fit_ssflrd, fitted_surface, generate_scenario, mse1, mse2, Dataset, FitSettings,
    ScenarioConfig,
};

#[test]
#[ignore]
fn pilot_benchmark() {
    use ssflrd_core::{run_benchmark, BenchmarkConfig};
    let t0 = Instant::now();
    let cfg = BenchmarkConfig::table1(8, 20260810);
    let table = run_benchmark(&cfg).unwrap();
    for c in &table.cells {
        println!(
            "n2={:3} a={:5}: MSE1 {:.3} ({:.3})  MSE2 {:.3} ({:.3})  failures {}",
            c.n * c.n,
            c.a,
            c.mse1_mean,
            c.mse1_sd,
            c.mse2_mean,
            c.mse2_sd,
            c.failures
        );
    }
    println!("pilot took {:.0}s", t0.elapsed().as_secs_f64());
}

#[test]
#[ignore]
fn time_one_replication() {
    for (n, a) in [(5usize, 3.0f64), (10, 3.0)] {
        let t0 = Instant::now();
        let scenario = ScenarioConfig::new(n, a, 42);
        let synthetic = generate_scenario(&scenario).unwrap();
        let truth = synthetic.truth.clone();
        let data: Dataset = synthetic.into();
        let gen_time = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let settings = FitSettings::benchmark_defaults(a).unwrap();
        let fit = fit_ssflrd(&data, &settings).unwrap();
        let fit_time = t1.elapsed().as_secs_f64();

        let fitted_r = fitted_surface(&fit).unwrap();
        let m1 = mse1(&truth.r_values, &fitted_r).unwrap();
        let m2 = mse2(&truth.phi, &truth.gamma, &truth.r_values, &fit, &data).unwrap();
        println!(
            "n={n} a={a}: generate {gen_time:.2}s fit {fit_time:.2}s  mse1={m1:.4} mse2={m2:.4}  (psi,w)={:?} h={:?}",
            fit.reg_selection.best,
            fit.smoother.as_ref().map(|s| s.h)
        );
    }
}
