//! Simulates a surface series and builds the conformal band for the frame
//! after the last observed one.

use surfcast::conformal::{conformal_band, make_split, PermutationFamily, SplitMode};
use surfcast::far::{fit, FarVariant, FitConfig};
use surfcast::simulate::{simulate_far1, SimulationConfig};

fn main() -> Result<(), surfcast::Error> {
    let cfg = SimulationConfig::default(); // 100 frames on a 100x100 grid
    let (data, _kernel) = simulate_far1(&cfg)?;

    let plan = make_split(data.t_len(), 0.5, SplitMode::Random, 7)?
        .adjust_for_blocking(1, 0.1)?; // keep the level feasible
    let family = PermutationFamily::new(plan.l(), 1)?;
    let predictor = fit(FarVariant::Ek, &data, &plan.train, &FitConfig::default())?;

    let band = conformal_band(&data, &plan, &predictor, &family, 0.1,
                              data.frame(data.t_len() - 1))?;
    println!("next-frame band has size {}", band.size());
    Ok(())
}
