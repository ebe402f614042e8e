//! Compares the closed-form kernel degree against Monte-Carlo and grid
//! quadrature at three probe points, then prints the regularity profile
//! each kernel induces on the unit square.

use mpnn_lab::kernel::{
    kernel_degree, kernel_degree_exact, regularity_profile, Kernel, Quadrature, DMIN_GRID,
};
use mpnn_lab::space::{Point, Space};

fn main() -> mpnn_lab::Result<()> {
    let space = Space::UnitSquareUniform;
    let kernels = [
        ("constant 0.7", Kernel::Constant { c: 0.7 }),
        ("ball r=0.25", Kernel::BallIndicator { r: 0.25 }),
        ("smoothed r=0.3 ramp=0.05", Kernel::SmoothedBall { r: 0.3, ramp: 0.05 }),
    ];
    let probes: [(&str, Point); 3] =
        [("center", [0.5, 0.5]), ("edge", [0.0, 0.5]), ("corner", [0.0, 0.0])];
    let mc = Quadrature::MonteCarlo { samples: 200_000, seed: 11 };
    let grid = Quadrature::Grid { resolution: 400 };

    for (name, k) in &kernels {
        println!("{name}");
        for (label, x) in probes {
            let exact = kernel_degree_exact(k, space, x)?;
            let est_mc = kernel_degree(k, space, x, &mc)?;
            let est_grid = kernel_degree(k, space, x, &grid)?;
            println!(
                "  {label:<6} exact {exact:.9}  mc err {:+.2e}  grid err {:+.2e}",
                est_mc - exact,
                est_grid - exact
            );
        }
        let prof = regularity_profile(k, space, 1.0, DMIN_GRID)?;
        println!(
            "  profile: sup_w {}  lip_w {}  d_min {:.9}  zeta {:.6}",
            prof.sup_w, prof.lip_w, prof.d_min, prof.zeta
        );
    }
    Ok(())
}
