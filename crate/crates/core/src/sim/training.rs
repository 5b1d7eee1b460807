use rayon::prelude::*;

use super::run::run_scenario;
use super::scenario::{ControllerPair, HigherLevel, LowerLevel, Scenario};
use crate::error::{Error, Result};
use crate::markov::{estimate_tpm_multi, TransitionModel};
use crate::rl::{train_energy_policy, DriveProfile, LearningSchedule, TrainedPolicy};

/// Per-vehicle demand models and learned power-split policies.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub tpms: Vec<TransitionModel>,
    pub policies: Vec<TrainedPolicy>,
}

/// Drive the fleet with `higher` and a charge-neutral lower level on each
/// seed and record every vehicle's speed and demand, indexed by vehicle.
pub fn collect_profiles(
    scn: &Scenario,
    higher: HigherLevel,
    seeds: &[u64],
) -> Result<Vec<Vec<DriveProfile>>> {
    let pair = ControllerPair {
        higher,
        lower: LowerLevel::ChargeNeutral,
    };
    let runs: Vec<_> = seeds
        .par_iter()
        .map(|&seed| run_scenario(scn, pair, seed, None))
        .collect::<Result<_>>()?;
    let mut out = vec![Vec::with_capacity(seeds.len()); scn.fleet_size];
    for run in runs {
        let mut per = vec![DriveProfile::default(); scn.fleet_size];
        for r in &run.trace {
            per[r.id].speed.push(r.v + 0.5 * r.a * scn.dt);
            per[r.id].demand.push(r.p_dem);
        }
        for (i, p) in per.into_iter().enumerate() {
            out[i].push(p);
        }
    }
    Ok(out)
}

/// Estimate a transition model and train a policy for every vehicle from its
/// recorded profiles. Vehicles train in parallel with independent seeds.
pub fn train_models(
    scn: &Scenario,
    profiles: &[Vec<DriveProfile>],
    schedule: &LearningSchedule,
) -> Result<TrainedModels> {
    if profiles.len() < scn.fleet_size {
        return Err(Error::GeometryMismatch(format!(
            "profiles for {} vehicles, scenario has {}",
            profiles.len(),
            scn.fleet_size
        )));
    }
    let trained: Vec<(TransitionModel, TrainedPolicy)> = profiles
        .par_iter()
        .enumerate()
        .map(|(i, profs)| {
            let traces: Vec<Vec<(f64, f64)>> = profs
                .iter()
                .map(|p| p.demand.iter().copied().zip(p.speed.iter().copied()).collect())
                .collect();
            let refs: Vec<&[(f64, f64)]> = traces.iter().map(Vec::as_slice).collect();
            let tpm = estimate_tpm_multi(&refs, &scn.mdp.quantizer)?;
            let policy = train_energy_policy(
                &scn.mdp,
                schedule,
                &tpm,
                &scn.powertrain,
                profs,
                None,
                scn.training.seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
            )?;
            Ok((tpm, policy))
        })
        .collect::<Result<_>>()?;
    let (tpms, policies) = trained.into_iter().unzip();
    Ok(TrainedModels { tpms, policies })
}
