//! C ABI over `pdtsc`.
//!
//! Environments and agents are opaque handles created by `*_new` / `*_load`
//! and released with the matching `*_free`. Every fallible function returns
//! a [`PdtscStatus`]; on failure a message describing the error is kept per
//! thread and can be read with [`pdtsc_last_error_message`] until the next
//! failing call on the same thread.
//!
//! Handles are not thread-safe: a handle may move between threads but must
//! not be used from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use pdtsc::agents::{Agent, AgentConfig, Algorithm};
use pdtsc::env::{Action, EnvConfig, Observation, TrafficEnv};
use pdtsc::error::{error_chain, AgentError, CheckpointError, EnvError};
use pdtsc::harness::{episode_tallies, train};
use pdtsc::sim::{Scenario, SimConfig, WaitTally};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdtscStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range or not valid UTF-8.
    InvalidArgument = 2,
    /// A caller-supplied buffer has the wrong length.
    BufferSize = 3,
    /// `step` on a finished episode.
    EpisodeDone = 4,
    /// Reading or writing a file failed.
    Io = 5,
    /// A checkpoint was malformed or held a different algorithm.
    Checkpoint = 6,
    /// Training or an update diverged.
    Training = 7,
    /// The library panicked; the handle involved should be freed.
    Panic = 8,
}

/// Opaque environment handle.
pub struct PdtscEnv {
    env: TrafficEnv,
}

/// Opaque agent handle.
pub struct PdtscAgent {
    agent: Agent,
}

/// Outcome of one environment step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PdtscStep {
    /// Reward under the environment's reward mode (partial by default).
    pub reward: f64,
    pub reward_full: f64,
    pub reward_partial: f64,
    pub done: bool,
}

/// Mean waiting times (seconds) in the current episode, counting vehicles
/// still inside the intersection up to the current clock. NaN when a class
/// has no vehicles.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PdtscWaits {
    pub all: f64,
    pub detected: f64,
    pub undetected: f64,
    pub vehicles: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: PdtscStatus,
    message: String,
}

impl Failure {
    fn new(status: PdtscStatus, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl From<EnvError> for Failure {
    fn from(e: EnvError) -> Self {
        let status = match e {
            EnvError::EpisodeDone => PdtscStatus::EpisodeDone,
            EnvError::Config(_) => PdtscStatus::InvalidArgument,
        };
        Failure::new(status, error_chain(&e))
    }
}

impl From<AgentError> for Failure {
    fn from(e: AgentError) -> Self {
        let status = match &e {
            AgentError::Checkpoint(CheckpointError::Io(_)) => PdtscStatus::Io,
            AgentError::Checkpoint(_) => PdtscStatus::Checkpoint,
            AgentError::Config(_) => PdtscStatus::InvalidArgument,
            _ => PdtscStatus::Training,
        };
        Failure::new(status, error_chain(&e))
    }
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("interior nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PdtscStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PdtscStatus::Ok,
        Ok(Err(failure)) => {
            set_last_error(failure.message);
            failure.status
        }
        Err(payload) => {
            let text = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(format!("panic: {text}"));
            PdtscStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::new(PdtscStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(PdtscStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_observation(obs: &Observation, out: *mut f64, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("obs_out"));
    }
    let values = obs.to_vec();
    if len != values.len() {
        return Err(Failure::new(
            PdtscStatus::BufferSize,
            format!("observation buffer holds {len} values, need {}", values.len()),
        ));
    }
    std::slice::from_raw_parts_mut(out, len).copy_from_slice(&values);
    Ok(())
}

fn mean_or_nan(t: &WaitTally) -> f64 {
    t.mean_wait().unwrap_or(f64::NAN)
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on this thread or
/// [`pdtsc_clear_error`].
#[no_mangle]
pub extern "C" fn pdtsc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn pdtsc_clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pdtsc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an environment for `scenario` ("sparse", "medium" or "dense")
/// with one-hour episodes.
///
/// # Safety
/// `scenario` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pdtsc_env_new(
    scenario: *const c_char,
    detection_rate: f64,
    seed: u64,
    out: *mut *mut PdtscEnv,
) -> PdtscStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scenario: Scenario = str_arg(scenario, "scenario")?
            .parse()
            .map_err(|e: pdtsc::error::ConfigError| Failure::new(PdtscStatus::InvalidArgument, e.to_string()))?;
        let sim = SimConfig { detection_rate, rng_seed: seed, ..SimConfig::preset(scenario) };
        let env = TrafficEnv::new(EnvConfig::new(sim))?;
        *out = Box::into_raw(Box::new(PdtscEnv { env }));
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a handle from [`pdtsc_env_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdtsc_env_free(env: *mut PdtscEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Number of values in an observation; 0 for a null handle.
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdtsc_env_observation_len(env: *const PdtscEnv) -> usize {
    env.as_ref().map_or(0, |e| e.env.config().observation_len())
}

/// Restarts the episode from an empty intersection with a new seed and
/// writes the first observation.
///
/// # Safety
/// `env` must be a live handle and `obs_out` point to `obs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pdtsc_env_reset(env: *mut PdtscEnv, seed: u64, obs_out: *mut f64, obs_len: usize) -> PdtscStatus {
    guard(|| {
        let env = handle_mut(env, "env")?;
        let obs = env.env.reset_with_seed(seed);
        write_observation(&obs, obs_out, obs_len)
    })
}

/// Advances one step. `action` is 0 (keep) or 1 (switch).
///
/// # Safety
/// `env` must be a live handle, `obs_out` point to `obs_len` doubles and
/// `step_out` to a writable [`PdtscStep`].
#[no_mangle]
pub unsafe extern "C" fn pdtsc_env_step(
    env: *mut PdtscEnv,
    action: u32,
    obs_out: *mut f64,
    obs_len: usize,
    step_out: *mut PdtscStep,
) -> PdtscStatus {
    guard(|| {
        let env = handle_mut(env, "env")?;
        let step_out = handle_mut(step_out, "step_out")?;
        let action = Action::from_index(action as usize)
            .ok_or_else(|| Failure::new(PdtscStatus::InvalidArgument, format!("action {action} is not 0 or 1")))?;
        if obs_out.is_null() {
            return Err(null("obs_out"));
        }
        if obs_len != env.env.config().observation_len() {
            return Err(Failure::new(
                PdtscStatus::BufferSize,
                format!("observation buffer holds {obs_len} values, need {}", env.env.config().observation_len()),
            ));
        }
        let outcome = env.env.step(action)?;
        write_observation(&outcome.observation, obs_out, obs_len)?;
        *step_out = PdtscStep {
            reward: outcome.reward,
            reward_full: outcome.info.reward.full,
            reward_partial: outcome.info.reward.partial,
            done: outcome.done,
        };
        Ok(())
    })
}

/// Changes the detection probability of vehicles spawned from now on.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdtsc_env_set_detection_rate(env: *mut PdtscEnv, rate: f64) -> PdtscStatus {
    guard(|| {
        handle_mut(env, "env")?.env.set_detection_rate(rate)?;
        Ok(())
    })
}

/// # Safety
/// `env` must be a live handle and `out` a writable [`PdtscWaits`].
#[no_mangle]
pub unsafe extern "C" fn pdtsc_env_waits(env: *const PdtscEnv, out: *mut PdtscWaits) -> PdtscStatus {
    guard(|| {
        let env = handle_ref(env, "env")?;
        let out = handle_mut(out, "out")?;
        let t = episode_tallies(env.env.sim());
        *out = PdtscWaits {
            all: mean_or_nan(&t.all),
            detected: mean_or_nan(&t.detected),
            undetected: mean_or_nan(&t.undetected),
            vehicles: t.all.count,
        };
        Ok(())
    })
}

/// Creates an untrained agent with default hyperparameters. `algorithm` is
/// one of "dql", "a2c", "ppo", "acktr" or "fixed".
///
/// # Safety
/// `algorithm` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pdtsc_agent_new(
    algorithm: *const c_char,
    seed: u64,
    observation_len: usize,
    out: *mut *mut PdtscAgent,
) -> PdtscStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let algorithm: Algorithm = str_arg(algorithm, "algorithm")?
            .parse()
            .map_err(|e: pdtsc::error::ConfigError| Failure::new(PdtscStatus::InvalidArgument, e.to_string()))?;
        if observation_len == 0 {
            return Err(Failure::new(PdtscStatus::InvalidArgument, "observation_len must be positive"));
        }
        let config = AgentConfig { seed, ..AgentConfig::for_algorithm(algorithm) };
        let agent = Agent::new(config, observation_len)?;
        *out = Box::into_raw(Box::new(PdtscAgent { agent }));
        Ok(())
    })
}

/// # Safety
/// `agent` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdtsc_agent_free(agent: *mut PdtscAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// Trains `agent` for `steps` environment steps on fresh episodes of the
/// configuration `env` was built with. `env` itself is not stepped.
///
/// # Safety
/// `agent` and `env` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn pdtsc_agent_train(
    agent: *mut PdtscAgent,
    env: *const PdtscEnv,
    steps: u64,
    seed: u64,
) -> PdtscStatus {
    guard(|| {
        let agent = handle_mut(agent, "agent")?;
        let env = handle_ref(env, "env")?;
        if let Some(dim) = agent.agent.input_dim() {
            let len = env.env.config().observation_len();
            if dim != len {
                return Err(Failure::new(
                    PdtscStatus::InvalidArgument,
                    format!("agent expects {dim} observation values, environment produces {len}"),
                ));
            }
        }
        train(&mut agent.agent, env.env.config(), steps, seed)
            .map(drop)
            .map_err(|f| Failure::new(PdtscStatus::Training, error_chain(&f.error)))
    })
}

/// Chooses an action (0 keep, 1 switch) for an observation. With
/// `explore` false the choice is deterministic.
///
/// # Safety
/// `agent` must be a live handle, `obs` point to `obs_len` doubles and
/// `action_out` be writable.
#[no_mangle]
pub unsafe extern "C" fn pdtsc_agent_act(
    agent: *mut PdtscAgent,
    obs: *const f64,
    obs_len: usize,
    explore: bool,
    action_out: *mut u32,
) -> PdtscStatus {
    guard(|| {
        let agent = handle_mut(agent, "agent")?;
        let action_out = handle_mut(action_out, "action_out")?;
        if obs.is_null() {
            return Err(null("obs"));
        }
        let values = std::slice::from_raw_parts(obs, obs_len);
        if let Some(dim) = agent.agent.input_dim() {
            if dim != obs_len {
                return Err(Failure::new(
                    PdtscStatus::BufferSize,
                    format!("agent expects {dim} observation values, got {obs_len}"),
                ));
            }
        }
        let observation = Observation::from_slice(values).ok_or_else(|| {
            Failure::new(PdtscStatus::BufferSize, format!("{obs_len} values do not form an observation"))
        })?;
        let action = if explore { agent.agent.act(&observation, true) } else { agent.agent.greedy_action(&observation) };
        *action_out = action.index() as u32;
        Ok(())
    })
}

/// Environment steps the agent has learned from; 0 for a null handle.
///
/// # Safety
/// `agent` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdtsc_agent_steps(agent: *const PdtscAgent) -> u64 {
    agent.as_ref().map_or(0, |a| a.agent.steps())
}

/// # Safety
/// `agent` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pdtsc_agent_save(agent: *const PdtscAgent, path: *const c_char) -> PdtscStatus {
    guard(|| {
        let agent = handle_ref(agent, "agent")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        agent.agent.save(&path)?;
        Ok(())
    })
}

/// Loads a checkpoint. When `expected_algorithm` is non-null the stored
/// algorithm must match it.
///
/// # Safety
/// `path` must be a NUL-terminated string, `expected_algorithm` null or a
/// NUL-terminated string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pdtsc_agent_load(
    path: *const c_char,
    expected_algorithm: *const c_char,
    out: *mut *mut PdtscAgent,
) -> PdtscStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = PathBuf::from(str_arg(path, "path")?);
        let agent = if expected_algorithm.is_null() {
            Agent::load(&path)?
        } else {
            let expected: Algorithm = str_arg(expected_algorithm, "expected_algorithm")?
                .parse()
                .map_err(|e: pdtsc::error::ConfigError| Failure::new(PdtscStatus::InvalidArgument, e.to_string()))?;
            Agent::load_expecting(&path, expected)?
        };
        *out = Box::into_raw(Box::new(PdtscAgent { agent }));
        Ok(())
    })
}
