//! Non-learning comparison policies. Each one picks only from the
//! energy-feasible set, and ties go to the lowest index.

use rand::Rng;

use crate::environment::{Action, ActionMask, EnvState, Environment};
use crate::kinetics::travel_distance;

/// Uniform over the feasible set.
pub fn rand_policy<R: Rng + ?Sized>(mask: &ActionMask, rng: &mut R) -> Action {
    let count = mask.count();
    assert!(count > 0, "empty action mask");
    let k = rng.random_range(0..count);
    Action(mask.allowed().nth(k).expect("k < count"))
}

/// Maximum-AoT-first: the feasible device with the oldest attestation. The
/// device the UAV is parked on was attested last slot and is skipped;
/// re-attesting it is free, so a low battery would otherwise pin the UAV
/// there forever.
pub fn maf_policy(state: &EnvState, mask: &ActionMask) -> Action {
    let n = state.aot.len();
    let mut best: Option<usize> = None;
    for d in mask.allowed().filter(|&a| a < n && a != state.position) {
        if best.is_none_or(|b| state.aot[d] > state.aot[b]) {
            best = Some(d);
        }
    }
    Action(best.unwrap_or(n))
}

/// Nearest-first: the feasible device closest to the UAV, skipping the one
/// attested in the previous slot.
pub fn nf_policy(env: &Environment, state: &EnvState, mask: &ActionMask, last_visited: Option<usize>) -> Action {
    let n = state.aot.len();
    let here = env.position_coordinate(state.position);
    let mut best: Option<(usize, f64)> = None;
    for d in mask.allowed().filter(|&a| a < n && Some(a) != last_visited) {
        let dist = travel_distance(here, env.position_coordinate(d));
        if best.is_none_or(|(_, bd)| dist < bd) {
            best = Some((d, dist));
        }
    }
    Action(best.map_or(n, |(d, _)| d))
}
