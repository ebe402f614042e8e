//! Builds the full constant chain behind the concentration bounds for one
//! kernel and network, prints it as JSON, and shows how the minimum node
//! count reacts to the failure probability.

use mpnn_lab::bounds::{bound_report, min_nodes, pooled_bound};
use mpnn_lab::kernel::{regularity_profile, Kernel, DMIN_GRID};
use mpnn_lab::mpnn::graphsage_random;
use mpnn_lab::signal::SignalSpec;
use mpnn_lab::space::Space;

fn main() -> mpnn_lab::Result<()> {
    let kernel = Kernel::SmoothedBall { r: 0.3, ramp: 0.05 };
    let signal = SignalSpec::Product.build();
    let space = Space::UnitSquareUniform;
    let net = graphsage_random(&[1, 16, 16], 7, 1.0)?;
    let profile = regularity_profile(&kernel, space, 1.0, DMIN_GRID)?;
    let sig = signal.regularity(space);

    let report = bound_report(&net.constants(), &profile, &sig, 0.01)?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    for p in [0.1, 0.05, 0.01] {
        println!("p = {p:<5} min_n = {}", min_nodes(&profile, p)?);
    }
    // the sharp ramp makes the floor astronomical; a constant kernel is
    // tame enough to evaluate at desk scale
    let tame = regularity_profile(&Kernel::Constant { c: 1.0 }, space, 1.0, DMIN_GRID)?;
    let (b, conf) = pooled_bound(4096, 0.05, &net.constants(), &tame, &sig)?;
    println!("constant kernel, n = 4096, p = 0.05: pooled bound {b:.4} at confidence {conf:.2}");
    Ok(())
}
