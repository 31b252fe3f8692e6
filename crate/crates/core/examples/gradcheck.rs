//! Finite-difference check of the training-loss gradients on a few small pairs.

use monorefine::gradcheck::{gradcheck, random_problem, GradcheckConfig, LeafReport};
use monorefine::losses::{AssociationMode, LossConfig};

fn main() -> monorefine::Result<()> {
    let loss = LossConfig::with_mode(AssociationMode::AllDepthAllPose);
    println!("seed,size,{}", LeafReport::CSV_HEADER);
    for (seed, size) in [(1, 8), (2, 12), (3, 16)] {
        let problem = random_problem(seed, size, size, loss)?;
        for r in gradcheck(&problem, &GradcheckConfig::default())? {
            println!("{seed},{size}x{size},{}", r.to_csv_row());
        }
    }
    Ok(())
}
