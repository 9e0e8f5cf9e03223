use mmmi::harness::*;
use std::time::Instant;

fn main() {
    let settings = GridSettings { replications: 200, m_models: 100, n_per_model: 2, master_seed: 20260810, level: 0.95 };
    let names = ["mar-none", "mar-mild", "mar-moderate", "mar-ample", "weak-none", "strong-none", "misspec-none", "misspec-ample"];
    let t0 = Instant::now();
    for name in names {
        let cfg = scenario_by_name(name, &settings).unwrap();
        let m = run_scenario(&cfg).unwrap();
        println!("{name:16} pb={:7.2} rmse={:.3} cvg={:6.3} width={:.3} gamma={:.3} gw={:.3} gb={:.3} ratio={:.3} done={} fail={}",
            m.percent_bias, m.rmse, m.coverage, m.ci_width, m.mean_gamma, m.mean_gamma_w, m.mean_gamma_b, m.mean_ratio,
            m.replications_completed, m.replications_failed);
    }
    println!("total {:?}", t0.elapsed());
}
