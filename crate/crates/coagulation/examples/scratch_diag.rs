use coagulation::*;
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let grid = Arc::new(Grid::default_profile());
    let exact = seed_exponential(grid.clone());

    let cases: Vec<(&str, CoagulationKernel, Profile)> = vec![
        (
            "constant / gamma:2",
            CoagulationKernel::constant(),
            seed_gamma(grid.clone(), 2.0).unwrap(),
        ),
        (
            "constant / exp",
            CoagulationKernel::constant(),
            seed_exponential(grid.clone()),
        ),
        (
            "power(0.1,1/3) / exp",
            CoagulationKernel::power(0.1, 1.0 / 3.0).unwrap(),
            seed_exponential(grid.clone()),
        ),
        (
            "power(0.1,1/3) / gamma:2",
            CoagulationKernel::power(0.1, 1.0 / 3.0).unwrap(),
            seed_gamma(grid.clone(), 2.0).unwrap(),
        ),
        (
            "power(0.2,1/3) / exp",
            CoagulationKernel::power(0.2, 1.0 / 3.0).unwrap(),
            seed_exponential(grid.clone()),
        ),
        (
            "brownian / exp",
            CoagulationKernel::brownian(),
            seed_exponential(grid.clone()),
        ),
    ];
    for (name, kernel, seed) in cases {
        let t0 = Instant::now();
        match solve(&kernel, &seed, &SolveSettings::default()) {
            Ok(out) => {
                let dist = out.profile.l1_mass_distance(&exact).unwrap();
                println!(
                    "{name:26} converged={} iters={:3} residual={:.3e} dist(e^-x)={:.4e} rate={:.6} [{:.1?}]",
                    out.converged,
                    out.iterations,
                    out.residual,
                    dist,
                    out.profile.tail().rate(),
                    t0.elapsed()
                );
            }
            Err(e) => println!("{name:26} ERROR: {e}"),
        }
    }
}
