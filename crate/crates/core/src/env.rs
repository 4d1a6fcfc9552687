//! Reset/step environment and its newline-delimited JSON wire protocol.
//!
//! An episode starts from the state where only the source is scheduled. Each
//! step inserts one eligible task. Once the sink is inserted the action
//! sequence is replayed under the episode's sampled durations and the reward
//! `-makespan / |T|` is returned; every earlier reward is exactly 0.
//!
//! Requests are JSON objects tagged by `cmd`, one per line:
//!
//! ```text
//! {"cmd":"reset","instance":"toy","seed":3}
//! {"cmd":"step","action":1}
//! {"cmd":"log"}
//! {"cmd":"instances"}
//! {"cmd":"close"}
//! ```
//!
//! Every request gets exactly one reply line, either
//! `{"ok":true,"version":1,...}` or
//! `{"ok":false,"version":1,"error":{"code":..,"message":..}}`.

use std::io::{self, BufRead, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::InstanceStore;
use crate::flow::{channel, replay_with_durations, FlowError, FlowState};
use crate::instance::{Instance, TaskId, Time};
use crate::observation::{build_observation, ObsGraph};
use crate::ssgs::terminal_reward;
use crate::uncertainty::{
    derive_triples, sample_scenario_with, DistributionKind, DurationTriple, Factor, Scenario,
    UncertaintyError, UncertaintyModel,
};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioPolicy {
    /// A reset without an explicit seed uses `base_seed + episode index`.
    #[default]
    Resample,
    /// A reset without an explicit seed always uses `base_seed`.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub instance: String,
    pub model: UncertaintyModel,
    pub seed: Option<u64>,
    pub policy: ScenarioPolicy,
}

impl EpisodeConfig {
    pub fn new(instance: impl Into<String>) -> Self {
        EpisodeConfig {
            instance: instance.into(),
            model: UncertaintyModel::default(),
            seed: None,
            policy: ScenarioPolicy::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_model(mut self, model: UncertaintyModel) -> Self {
        self.model = model;
        self
    }
}

/// Makespans of a finished episode, one per duration channel plus the
/// sampled scenario. The exact reward is `-sampled / num_tasks`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminalInfo {
    pub min: Time,
    pub max: Time,
    pub mode: Time,
    pub sampled: Time,
    pub num_tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: ObsGraph,
    pub reward: f64,
    pub done: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub info: Option<TerminalInfo>,
}

/// Seed and insertion sequence of one episode, enough to replay it offline.
/// The source is not part of `actions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionLog {
    pub instance: String,
    pub seed: u64,
    pub low: String,
    pub high: String,
    pub distribution: DistributionKind,
    pub actions: Vec<TaskId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reward: Option<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("no active episode; send reset first")]
    NoEpisode,
    #[error("episode is over; send reset")]
    EpisodeDone,
    #[error("task {0} does not exist")]
    UnknownAction(TaskId),
    #[error("task {0} is not in the action mask")]
    MaskedAction(TaskId),
    #[error("bad uncertainty model: {0}")]
    Model(#[from] UncertaintyError),
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

impl EnvError {
    pub fn code(&self) -> &'static str {
        match self {
            EnvError::UnknownInstance(_) => "unknown-instance",
            EnvError::NoEpisode => "no-episode",
            EnvError::EpisodeDone => "episode-done",
            EnvError::UnknownAction(_) => "unknown-action",
            EnvError::MaskedAction(_) => "masked-action",
            EnvError::Model(_) => "bad-model",
            EnvError::Malformed(_) => "malformed",
            EnvError::Flow(_) => "engine",
        }
    }
}

struct Episode {
    id: String,
    instance: Arc<Instance>,
    model: UncertaintyModel,
    triples: Vec<DurationTriple>,
    scenario: Scenario,
    state: FlowState,
    actions: Vec<TaskId>,
    reward: Option<f64>,
}

/// Samples the scenario of `seed` and returns the sampled makespan and the
/// reward of inserting `actions` (source excluded) in order.
pub fn replay_reward(
    instance: &Instance,
    model: &UncertaintyModel,
    seed: u64,
    actions: &[TaskId],
) -> Result<(Time, f64), FlowError> {
    let triples = derive_triples(instance, model);
    let scenario = sample_scenario_with(&triples, model.kind, seed);
    let schedule = replay_with_durations(instance, actions, &scenario.realized)?;
    Ok((
        schedule.makespan,
        terminal_reward(schedule.makespan, instance),
    ))
}

impl ActionLog {
    pub fn model(&self) -> Result<UncertaintyModel, UncertaintyError> {
        UncertaintyModel::new(self.low.parse()?, self.high.parse()?, self.distribution)
    }
}

/// One sequential environment. Not shared between connections.
pub struct Env {
    store: Arc<InstanceStore>,
    base_seed: u64,
    episodes: u64,
    episode: Option<Episode>,
}

impl Env {
    pub fn new(store: Arc<InstanceStore>) -> Self {
        Self::with_base_seed(store, 0)
    }

    pub fn with_base_seed(store: Arc<InstanceStore>, base_seed: u64) -> Self {
        Env {
            store,
            base_seed,
            episodes: 0,
            episode: None,
        }
    }

    pub fn store(&self) -> &InstanceStore {
        &self.store
    }

    pub fn reset(&mut self, config: &EpisodeConfig) -> Result<StepResult, EnvError> {
        let instance = self
            .store
            .get(&config.instance)
            .ok_or_else(|| EnvError::UnknownInstance(config.instance.clone()))?;
        let seed = config.seed.unwrap_or(match config.policy {
            ScenarioPolicy::Resample => self.base_seed.wrapping_add(self.episodes),
            ScenarioPolicy::Fixed => self.base_seed,
        });
        self.episodes += 1;
        let triples = derive_triples(&instance, &config.model);
        let scenario = sample_scenario_with(&triples, config.model.kind, seed);
        let state = FlowState::initial(&instance, &triples);
        let observation = build_observation(&state, &instance, &triples);
        self.episode = Some(Episode {
            id: config.instance.clone(),
            instance,
            model: config.model,
            triples,
            scenario,
            state,
            actions: Vec::new(),
            reward: None,
        });
        Ok(StepResult {
            observation,
            reward: 0.0,
            done: false,
            info: None,
        })
    }

    /// Inserts `action`. On error the episode is left untouched.
    pub fn step(&mut self, action: TaskId) -> Result<StepResult, EnvError> {
        let ep = self.episode.as_mut().ok_or(EnvError::NoEpisode)?;
        if ep.state.is_terminal() {
            return Err(EnvError::EpisodeDone);
        }
        if action >= ep.instance.num_tasks() {
            return Err(EnvError::UnknownAction(action));
        }
        if !ep.state.is_eligible(&ep.instance, action) {
            return Err(EnvError::MaskedAction(action));
        }
        ep.state.insert_task(&ep.instance, action)?;
        ep.actions.push(action);
        let observation = build_observation(&ep.state, &ep.instance, &ep.triples);
        if !ep.state.is_terminal() {
            return Ok(StepResult {
                observation,
                reward: 0.0,
                done: false,
                info: None,
            });
        }
        let sampled = replay_with_durations(&ep.instance, &ep.actions, &ep.scenario.realized)?;
        let reward = terminal_reward(sampled.makespan, &ep.instance);
        ep.reward = Some(reward);
        Ok(StepResult {
            observation,
            reward,
            done: true,
            info: Some(TerminalInfo {
                min: ep.state.makespan(channel::MIN)?,
                max: ep.state.makespan(channel::MAX)?,
                mode: ep.state.makespan(channel::MODE)?,
                sampled: sampled.makespan,
                num_tasks: ep.instance.num_tasks(),
            }),
        })
    }

    /// Seed and actions of the current (or last) episode.
    pub fn action_log(&self) -> Option<ActionLog> {
        self.episode.as_ref().map(|ep| ActionLog {
            instance: ep.id.clone(),
            seed: ep.scenario.seed,
            low: ep.model.low().to_string(),
            high: ep.model.high().to_string(),
            distribution: ep.model.kind,
            actions: ep.actions.clone(),
            reward: ep.reward,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "cmd", rename_all = "lowercase", deny_unknown_fields)]
pub enum Request {
    Reset {
        instance: String,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        policy: Option<ScenarioPolicy>,
        #[serde(default)]
        low: Option<String>,
        #[serde(default)]
        high: Option<String>,
        #[serde(default)]
        distribution: Option<String>,
    },
    Step {
        action: TaskId,
    },
    Log,
    Instances,
    Close,
}

#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: String,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum Payload<'a> {
    Step(&'a StepResult),
    Log { log: Option<ActionLog> },
    Instances { instances: Vec<String> },
    Closed { closed: bool },
}

#[derive(Debug, Serialize)]
struct Reply<'a> {
    ok: bool,
    version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorBody<'a>>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    payload: Option<Payload<'a>>,
}

fn config_from_request(
    instance: String,
    seed: Option<u64>,
    policy: Option<ScenarioPolicy>,
    low: Option<String>,
    high: Option<String>,
    distribution: Option<String>,
) -> Result<EpisodeConfig, EnvError> {
    let default = UncertaintyModel::default();
    let low: Factor = low.map_or(Ok(default.low()), |s| s.parse())?;
    let high: Factor = high.map_or(Ok(default.high()), |s| s.parse())?;
    let kind: DistributionKind = distribution.map_or(Ok(default.kind), |s| s.parse())?;
    Ok(EpisodeConfig {
        instance,
        model: UncertaintyModel::new(low, high, kind)?,
        seed,
        policy: policy.unwrap_or_default(),
    })
}

/// Outcome of handling one request line.
pub struct Handled {
    pub reply: String,
    pub close: bool,
    /// Set when the request finished an episode.
    pub finished: Option<ActionLog>,
}

fn ok(payload: Payload<'_>) -> Reply<'_> {
    Reply {
        ok: true,
        version: PROTOCOL_VERSION,
        error: None,
        payload: Some(payload),
    }
}

/// Handles one request line and renders its reply (without newline).
pub fn handle_line(env: &mut Env, line: &str) -> Handled {
    let render = |r: &Reply| serde_json::to_string(r).expect("replies always serialize");
    let fail = |e: EnvError| {
        render(&Reply {
            ok: false,
            version: PROTOCOL_VERSION,
            error: Some(ErrorBody {
                code: e.code(),
                message: e.to_string(),
            }),
            payload: None,
        })
    };
    let request: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => {
            return Handled {
                reply: fail(EnvError::Malformed(e.to_string())),
                close: false,
                finished: None,
            }
        }
    };
    let mut out = Handled {
        reply: String::new(),
        close: false,
        finished: None,
    };
    out.reply = match request {
        Request::Reset {
            instance,
            seed,
            policy,
            low,
            high,
            distribution,
        } => match config_from_request(instance, seed, policy, low, high, distribution)
            .and_then(|c| env.reset(&c))
        {
            Ok(res) => render(&ok(Payload::Step(&res))),
            Err(e) => fail(e),
        },
        Request::Step { action } => match env.step(action) {
            Ok(res) => {
                if res.done {
                    out.finished = env.action_log();
                }
                render(&ok(Payload::Step(&res)))
            }
            Err(e) => fail(e),
        },
        Request::Log => render(&ok(Payload::Log {
            log: env.action_log(),
        })),
        Request::Instances => render(&ok(Payload::Instances {
            instances: env.store().ids().map(str::to_owned).collect(),
        })),
        Request::Close => {
            out.close = true;
            render(&ok(Payload::Closed { closed: true }))
        }
    };
    out
}

/// Shared destination for finished-episode action logs (JSON lines).
pub type LogSink = Arc<Mutex<Box<dyn Write + Send>>>;

/// Runs one connection until `close` or end of input.
pub fn serve_stream<R: BufRead, W: Write>(
    env: &mut Env,
    input: R,
    mut output: W,
    logs: Option<&LogSink>,
) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let handled = handle_line(env, &line);
        writeln!(output, "{}", handled.reply)?;
        output.flush()?;
        if let (Some(log), Some(sink)) = (handled.finished, logs) {
            let mut sink = sink.lock().unwrap_or_else(|p| p.into_inner());
            writeln!(
                sink,
                "{}",
                serde_json::to_string(&log).expect("logs always serialize")
            )?;
            sink.flush()?;
        }
        if handled.close {
            break;
        }
    }
    Ok(())
}

/// Accepts connections forever, one thread and one episode stream each.
pub fn serve_tcp(
    listener: TcpListener,
    store: Arc<InstanceStore>,
    logs: Option<LogSink>,
) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let store = Arc::clone(&store);
        let logs = logs.clone();
        thread::spawn(move || {
            let peer = stream
                .peer_addr()
                .map(|a| a.to_string())
                .unwrap_or_default();
            log::info!("connection from {peer}");
            let reader = match stream.try_clone() {
                Ok(s) => io::BufReader::new(s),
                Err(e) => {
                    log::warn!("{peer}: {e}");
                    return;
                }
            };
            let mut env = Env::new(store);
            if let Err(e) = serve_stream(&mut env, reader, &stream, logs.as_ref()) {
                log::warn!("{peer}: episode aborted: {e}");
            }
            log::info!("{peer} closed");
        });
    }
    Ok(())
}
