//! Episode loop, training protocol and policy evaluation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::metrics::{emit_metrics, MetricsRecord, Phase};
use crate::baselines::{maf_policy, nf_policy, rand_policy};
use crate::environment::{Action, ActionMask, EnvState, Environment};
use crate::error::{Error, Result};
use crate::pd3qn::{Agent, Checkpoint, TrainOutcome, Transition};
use crate::power::WEATHER_STATES;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    Pd3qn,
    Rand,
    Maf,
    Nf,
}

impl PolicyKind {
    pub const BASELINES: [PolicyKind; 3] = [PolicyKind::Rand, PolicyKind::Maf, PolicyKind::Nf];

    pub fn name(self) -> &'static str {
        match self {
            Self::Pd3qn => "pd3qn",
            Self::Rand => "rand",
            Self::Maf => "maf",
            Self::Nf => "nf",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pd3qn" => Ok(Self::Pd3qn),
            "rand" => Ok(Self::Rand),
            "maf" => Ok(Self::Maf),
            "nf" => Ok(Self::Nf),
            _ => Err(Error::Config(format!("unknown policy {s:?} (expected pd3qn, rand, maf or nf)"))),
        }
    }
}

/// Independent named sub-streams of one run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const STREAM_EPISODES: u64 = 1;
const STREAM_AGENT: u64 = 2;
const STREAM_POLICY: u64 = 3;

/// Environment reset seed for every episode of a run. Shared by all
/// policies, so comparisons see the same weather.
pub fn episode_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_EPISODES);
    (0..episodes).map(|_| rng.next_u64()).collect()
}

/// Decision rule driven by [`run_episode`].
pub trait Controller {
    fn name(&self) -> &str;

    fn begin_episode(&mut self) {}

    fn choose(&mut self, env: &Environment, state: &EnvState, obs: &[f64], mask: &ActionMask) -> Result<Action>;

    /// Called after every slot; learners return a loss when they updated.
    fn after_step(&mut self, _transition: Transition, _attested: Option<usize>) -> Result<Option<f64>> {
        Ok(None)
    }
}

pub struct RandController {
    rng: ChaCha8Rng,
}

impl RandController {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Controller for RandController {
    fn name(&self) -> &str {
        "rand"
    }

    fn choose(&mut self, _: &Environment, _: &EnvState, _: &[f64], mask: &ActionMask) -> Result<Action> {
        Ok(rand_policy(mask, &mut self.rng))
    }
}

pub struct MafController;

impl Controller for MafController {
    fn name(&self) -> &str {
        "maf"
    }

    fn choose(&mut self, _: &Environment, state: &EnvState, _: &[f64], mask: &ActionMask) -> Result<Action> {
        Ok(maf_policy(state, mask))
    }
}

#[derive(Default)]
pub struct NfController {
    last_visited: Option<usize>,
}

impl Controller for NfController {
    fn name(&self) -> &str {
        "nf"
    }

    fn begin_episode(&mut self) {
        self.last_visited = None;
    }

    fn choose(&mut self, env: &Environment, state: &EnvState, _: &[f64], mask: &ActionMask) -> Result<Action> {
        Ok(nf_policy(env, state, mask, self.last_visited))
    }

    fn after_step(&mut self, _: Transition, attested: Option<usize>) -> Result<Option<f64>> {
        self.last_visited = attested;
        Ok(None)
    }
}

/// The learning agent. In training mode it explores on its schedule, stores
/// every transition and runs one update per slot; otherwise it acts at a
/// fixed exploration rate and never learns.
pub struct AgentController<'a> {
    pub agent: &'a mut Agent,
    pub learn: bool,
    pub epsilon: f64,
}

impl Controller for AgentController<'_> {
    fn name(&self) -> &str {
        "pd3qn"
    }

    fn choose(&mut self, _: &Environment, _: &EnvState, obs: &[f64], mask: &ActionMask) -> Result<Action> {
        if self.learn {
            self.agent.act(obs, mask)
        } else {
            self.agent.act_with_epsilon(obs, mask, self.epsilon)
        }
    }

    fn after_step(&mut self, transition: Transition, _: Option<usize>) -> Result<Option<f64>> {
        if !self.learn {
            return Ok(None);
        }
        self.agent.observe(transition);
        match self.agent.train_step()? {
            TrainOutcome::Trained { loss } => Ok(Some(loss)),
            TrainOutcome::NotReady => Ok(None),
        }
    }
}

/// Resets `env` with `seed`, runs `slots` slots and averages over them.
pub fn run_episode(
    env: &mut Environment,
    controller: &mut dyn Controller,
    slots: usize,
    seed: u64,
    episode: usize,
    phase: Phase,
) -> Result<MetricsRecord> {
    if slots == 0 {
        return Err(Error::Config("an episode needs at least one slot".into()));
    }
    controller.begin_episode();
    let mut state = env.reset(seed);
    let mut obs = env.observe(&state);
    let mut mask = env.feasible_actions(&state);

    let (mut reward, mut aot, mut flow) = (0.0, 0.0, 0.0);
    let (mut loss_sum, mut loss_count) = (0.0, 0usize);
    let mut occupancy = [0usize; WEATHER_STATES];
    let mut charges = 0u64;

    for _ in 0..slots {
        let action = controller.choose(env, &state, &obs, &mask)?;
        let out = env.step(action)?;
        let next_obs = env.observe(&out.next_state);
        let next_mask = env.feasible_actions(&out.next_state);

        reward += out.reward;
        aot += out.avg_aot;
        flow += out.throughput;
        occupancy[out.next_state.solar_state] += 1;
        if out.charge > 0.0 {
            charges += 1;
        }

        let transition = Transition {
            obs: std::mem::take(&mut obs),
            action: action.0,
            reward: out.reward,
            next_obs: next_obs.clone(),
            next_mask: next_mask.clone(),
        };
        if let Some(loss) = controller.after_step(transition, out.attested)? {
            loss_sum += loss;
            loss_count += 1;
        }
        state = out.next_state;
        obs = next_obs;
        mask = next_mask;
    }

    let t = slots as f64;
    let occ = occupancy.map(|c| c as f64 / t);
    Ok(MetricsRecord {
        episode,
        phase,
        policy: controller.name().to_string(),
        avg_reward: reward / t,
        avg_aot: aot / t,
        avg_throughput: flow / t,
        avg_loss: (loss_count > 0).then(|| loss_sum / loss_count as f64),
        occupancy_excellent: occ[0],
        occupancy_good: occ[1],
        occupancy_fair: occ[2],
        occupancy_poor: occ[3],
        charge_events: charges,
    })
}

pub fn build_environment(config: &RunConfig) -> Result<Environment> {
    config.validate()?;
    Environment::new(config.network.build()?, config.env_config())
}

pub fn new_agent(config: &RunConfig, env: &Environment) -> Result<Agent> {
    Agent::new(
        env.observation_dim(),
        env.action_count(),
        config.agent.clone(),
        config.anneal_steps(),
        derive_seed(config.seed, STREAM_AGENT),
    )
}

fn phase_of(config: &RunConfig, episode: usize) -> Phase {
    if episode < config.train_episodes {
        Phase::Train
    } else {
        Phase::Eval
    }
}

fn assessment_epsilon(config: &RunConfig) -> f64 {
    if config.greedy_eval {
        0.0
    } else {
        config.agent.epsilon_end
    }
}

/// Trains on the first `train_episodes` episodes, then runs the remaining
/// assessment episodes without learning.
pub fn train(config: &RunConfig) -> Result<(Vec<MetricsRecord>, Agent)> {
    let mut env = build_environment(config)?;
    let mut agent = new_agent(config, &env)?;
    let seeds = episode_seeds(config.seed, config.episodes);
    let mut records = Vec::with_capacity(config.episodes);
    for (episode, &seed) in seeds.iter().enumerate() {
        let phase = phase_of(config, episode);
        let mut ctl = AgentController {
            agent: &mut agent,
            learn: phase == Phase::Train,
            epsilon: assessment_epsilon(config),
        };
        records.push(run_episode(&mut env, &mut ctl, config.slots_per_episode, seed, episode, phase)?);
    }
    Ok((records, agent))
}

/// [`train`], then writes the metric files and the final checkpoint to `dir`.
pub fn train_to_dir(config: &RunConfig, dir: &Path) -> Result<Vec<MetricsRecord>> {
    let (records, agent) = train(config)?;
    emit_metrics(&records, config, dir)?;
    Checkpoint::capture(&agent).save(&dir.join(CHECKPOINT_FILE))?;
    Ok(records)
}

pub fn baseline_controller(kind: PolicyKind, seed: u64) -> Result<Box<dyn Controller>> {
    match kind {
        PolicyKind::Rand => Ok(Box::new(RandController::new(derive_seed(seed, STREAM_POLICY)))),
        PolicyKind::Maf => Ok(Box::new(MafController)),
        PolicyKind::Nf => Ok(Box::new(NfController::default())),
        PolicyKind::Pd3qn => Err(Error::Config("pd3qn needs a checkpoint".into())),
    }
}

fn run_episodes(
    config: &RunConfig,
    env: &mut Environment,
    controller: &mut dyn Controller,
    episodes: std::ops::Range<usize>,
) -> Result<Vec<MetricsRecord>> {
    let seeds = episode_seeds(config.seed, config.episodes);
    episodes
        .map(|e| run_episode(env, controller, config.slots_per_episode, seeds[e], e, phase_of(config, e)))
        .collect()
}

/// A baseline over every episode of the run, on the same episode seeds as
/// training.
pub fn run_baseline(config: &RunConfig, kind: PolicyKind) -> Result<Vec<MetricsRecord>> {
    let mut env = build_environment(config)?;
    let mut ctl = baseline_controller(kind, config.seed)?;
    run_episodes(config, &mut env, ctl.as_mut(), 0..config.episodes)
}

pub enum EvalPolicy<'a> {
    Agent(&'a Checkpoint),
    Baseline(PolicyKind),
}

/// Greedy rollouts over the assessment episodes, with no learning.
pub fn evaluate(config: &RunConfig, policy: EvalPolicy<'_>) -> Result<Vec<MetricsRecord>> {
    let mut env = build_environment(config)?;
    let range = config.train_episodes..config.episodes;
    match policy {
        EvalPolicy::Agent(ck) => {
            let mut agent = ck.restore()?;
            let dims = agent.online().dims();
            if dims.input != env.observation_dim() || dims.actions != env.action_count() {
                return Err(Error::Checkpoint(format!(
                    "network is {}x{} but the environment needs {}x{}",
                    dims.input,
                    dims.actions,
                    env.observation_dim(),
                    env.action_count()
                )));
            }
            let mut ctl = AgentController {
                agent: &mut agent,
                learn: false,
                epsilon: 0.0,
            };
            run_episodes(config, &mut env, &mut ctl, range)
        }
        EvalPolicy::Baseline(kind) => {
            let mut ctl = baseline_controller(kind, config.seed)?;
            run_episodes(config, &mut env, ctl.as_mut(), range)
        }
    }
}
