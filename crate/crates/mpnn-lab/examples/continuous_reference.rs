//! Evaluates the continuum network by quadrature and checks that pooled
//! outputs of sampled graphs drift toward it as the graphs grow.

use mpnn_lab::cmpnn::cmpnn_pool;
use mpnn_lab::graph::sample_graph;
use mpnn_lab::kernel::{Kernel, Quadrature};
use mpnn_lab::metrics::dist_pooled;
use mpnn_lab::mpnn::{global_pool, gmpnn_forward, graphsage_random};
use mpnn_lab::signal::SignalSpec;
use mpnn_lab::space::Space;

fn main() -> mpnn_lab::Result<()> {
    let kernel = Kernel::SmoothedBall { r: 0.4, ramp: 0.1 };
    let signal = SignalSpec::Product.build();
    let space = Space::UnitSquareUniform;
    let net = graphsage_random(&[1, 8, 8], 7, 1.0)?;

    // two quadrature rules as a sanity cross-check on the continuum value
    let grid = cmpnn_pool(&net, &kernel, space, &signal, &Quadrature::Grid { resolution: 120 })?;
    let mc = cmpnn_pool(
        &net,
        &kernel,
        space,
        &signal,
        &Quadrature::MonteCarlo { samples: 20_000, seed: 5 },
    )?;
    println!("continuum pool, grid 120^2 vs mc 20k: gap {:.3e}", dist_pooled(&grid, &mc)?);

    for exp in [6u32, 8, 10] {
        let n = 1usize << exp;
        let g = sample_graph(&kernel, space, n, &signal, 42)?;
        let pooled = global_pool(&gmpnn_forward(&net, &g)?)?;
        println!("n = 2^{exp:<2} sampled pool vs continuum: {:.6}", dist_pooled(&pooled, &grid)?);
    }
    Ok(())
}
