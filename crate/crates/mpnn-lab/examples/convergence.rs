//! Measures how sampled-graph outputs approach a large reference graph as
//! the node count grows, fits log-log slopes, and renders an SVG plot.

use mpnn_lab::experiments::{run_convergence, write_convergence_csv, ConvergenceConfig, KernelFamily};
use mpnn_lab::plot::plot_convergence_svg;
use mpnn_lab::signal::SignalSpec;

fn main() -> mpnn_lab::Result<()> {
    let cfg = ConvergenceConfig {
        kernel_family: KernelFamily::BallIndicator,
        radii: vec![0.1, 0.9],
        signals: vec![SignalSpec::Product],
        reference_n: 1 << 10,
        sizes: vec![32, 64, 128, 256, 512],
        trials: 3,
        fit_min_size: 32,
        ..ConvergenceConfig::default()
    };
    let result = run_convergence(&cfg)?;

    for c in &result.curves {
        println!("r = {}  signal = {}", c.r, c.signal);
        for (i, &n) in c.sizes.iter().enumerate() {
            println!("  n = {n:<4} node err {:.6}  pooled err {:.6}", c.mean_node[i], c.mean_pooled[i]);
        }
        if let Some(fit) = &c.node_fit {
            println!("  node-level slope {:.3} (residual {:.3})", fit.slope, fit.residual);
        }
    }
    for d in &result.diagnostics {
        eprintln!("note: {d}");
    }

    let dir = std::env::temp_dir();
    let csv = dir.join("mpnn_lab_convergence.csv");
    write_convergence_csv(&result.rows, std::fs::File::create(&csv)?)?;
    let svg = dir.join("mpnn_lab_convergence.svg");
    plot_convergence_svg(&result.curves, false, std::fs::File::create(&svg)?)?;
    println!("wrote {} and {}", csv.display(), svg.display());
    Ok(())
}
