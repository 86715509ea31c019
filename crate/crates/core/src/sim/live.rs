//! Interactive sessions and the JSON message protocol.
//!
//! A [`Session`] owns the world. Commands are queued and applied at the
//! next step boundary; while paused only `pause` and `reset` are applied,
//! the rest wait for the resume. Every accepted command is logged with the
//! tick it was drained at, so [`replay`] reproduces a session's rows
//! exactly.

use std::collections::VecDeque;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::scenario::Scenario;
use super::trace::TraceFrame;
use super::world::World;
use crate::chain::{lie, ChainFile};
use crate::passivity::passivity_verdict;
use crate::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;

/// Client-to-server messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    /// Fixes a task's target. `rotation` is a world rotation vector; the
    /// current target orientation is kept when it is absent.
    SetTarget {
        task: String,
        position: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rotation: Option<[f64; 3]>,
    },
    ToggleGuide {
        guide: String,
    },
    /// Sets the pause state, or flips it when `paused` is absent.
    Pause {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        paused: Option<bool>,
    },
    Reset,
}

impl Command {
    /// Parses a message; a `version` field, if present, must match.
    pub fn parse(text: &str) -> Result<Self> {
        let mut v: Value =
            serde_json::from_str(text).map_err(|e| Error::schema("message", e.to_string()))?;
        if let Some(obj) = v.as_object_mut() {
            if let Some(ver) = obj.remove("version") {
                if ver.as_u64() != Some(u64::from(PROTOCOL_VERSION)) {
                    return Err(Error::schema(
                        "version",
                        format!("unsupported protocol version {ver}, expected {PROTOCOL_VERSION}"),
                    ));
                }
            }
        }
        serde_path_to_error::deserialize(v).map_err(|e| {
            let path = e.path().to_string();
            Error::schema(
                if path == "." {
                    "message".to_string()
                } else {
                    path
                },
                e.into_inner().to_string(),
            )
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("commands serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPose {
    pub name: String,
    pub position: [f64; 3],
    /// `[w, x, y, z]`.
    pub rotation: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSnapshot {
    pub name: String,
    pub position: [f64; 3],
    pub target: [f64; 3],
    pub target_rotation: [f64; 4],
    pub err_pos: f64,
    pub err_rot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuideSnapshot {
    pub name: String,
    pub enabled: bool,
    pub q: Vec<f64>,
    pub tool: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSnapshot {
    pub name: String,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSnapshot {
    pub probe: String,
    pub obstacle: String,
    pub gap: f64,
    pub force: f64,
    pub penetration: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySnapshot {
    pub total: f64,
    pub beta_sq: f64,
    pub violated: bool,
    pub dissipation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMessage {
    pub version: u32,
    pub step: usize,
    pub t: f64,
    pub paused: bool,
    pub q: Vec<f64>,
    pub links: Vec<LinkPose>,
    pub tasks: Vec<TaskSnapshot>,
    pub guides: Vec<GuideSnapshot>,
    pub axes: Vec<AxisSnapshot>,
    pub contacts: Vec<ContactSnapshot>,
    pub energy: EnergySnapshot,
    /// The trace row of this frame, in the `hello` column order.
    pub row: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloMessage {
    pub version: u32,
    pub scenario: String,
    pub hash: String,
    pub dt: f64,
    pub columns: Vec<String>,
    pub tasks: Vec<String>,
    pub guides: Vec<String>,
    pub monitors: Vec<String>,
    pub chain: ChainFile,
}

/// Server-to-client messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello(HelloMessage),
    Frame(FrameMessage),
    Error { version: u32, message: String },
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error {
            version: PROTOCOL_VERSION,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }
}

fn quat(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

fn vec3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

pub fn hello(world: &World) -> HelloMessage {
    let s = world.scenario();
    HelloMessage {
        version: PROTOCOL_VERSION,
        scenario: s.file.name.clone(),
        hash: s.hash.clone(),
        dt: s.file.dt,
        columns: world.layout().columns().to_vec(),
        tasks: world.task_names().map(str::to_string).collect(),
        guides: world.guide_names().map(str::to_string).collect(),
        monitors: world.monitor_names().to_vec(),
        chain: ChainFile::from_chain(world.chain()),
    }
}

/// Snapshot of the world; `row` must be the world's current trace row.
pub fn frame_message(world: &World, row: &TraceFrame, paused: bool) -> FrameMessage {
    let frames = world.frames();
    let links = world
        .chain()
        .links()
        .iter()
        .zip(frames)
        .map(|(l, f)| LinkPose {
            name: l.name.clone(),
            position: vec3(&f.translation.vector),
            rotation: quat(&f.rotation),
        })
        .collect();
    let tasks = world
        .task_names()
        .map(|name| {
            let pose = world.task_pose(name).expect("known task");
            let target = world.task_target(name).expect("known task");
            let err = crate::chain::pose_error(&target, &pose);
            TaskSnapshot {
                name: name.to_string(),
                position: vec3(&pose.translation.vector),
                target: vec3(&target.translation.vector),
                target_rotation: quat(&target.rotation),
                err_pos: err.fixed_rows::<3>(0).norm(),
                err_rot: err.fixed_rows::<3>(3).norm(),
            }
        })
        .collect();
    let guides = world
        .guide_names()
        .map(|name| GuideSnapshot {
            name: name.to_string(),
            enabled: world.guide_enabled(name).expect("known guide"),
            q: world
                .guide_state(name)
                .expect("known guide")
                .joints
                .iter()
                .copied()
                .collect(),
            tool: vec3(
                &world
                    .guide_tool_pose(name)
                    .expect("known guide")
                    .translation
                    .vector,
            ),
        })
        .collect();
    let axes = world
        .monitor_names()
        .iter()
        .zip(world.axis_errors())
        .map(|(name, error)| AxisSnapshot {
            name: name.clone(),
            error,
        })
        .collect();
    let contacts = world
        .contacts()
        .into_iter()
        .map(|c| ContactSnapshot {
            penetration: c.gap < 0.0,
            probe: c.probe,
            obstacle: c.obstacle,
            gap: c.gap,
            force: c.force,
        })
        .collect();
    let ledger = world.ledger();
    FrameMessage {
        version: PROTOCOL_VERSION,
        step: world.step_index(),
        t: world.time(),
        paused,
        q: world.state().joints.iter().copied().collect(),
        links,
        tasks,
        guides,
        axes,
        contacts,
        energy: EnergySnapshot {
            total: ledger.total_energy(),
            beta_sq: ledger.beta_sq(),
            violated: passivity_verdict(ledger).total.is_violated(),
            dissipation: world.joint_dissipation(),
        },
        row: row.values.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Number of ticks completed when the command was submitted.
    pub tick: u64,
    pub command: Command,
}

/// Applied commands of a session, enough to replay it headless.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommandLog {
    pub scenario_hash: String,
    pub entries: Vec<LogEntry>,
    /// Ticks completed when the log was taken.
    pub ticks: u64,
}

/// What one call to [`Session::tick`] produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Tick {
    Stepped(TraceFrame),
    /// The world was rebuilt; carries its initial row.
    Reset(TraceFrame),
    Paused,
}

#[derive(Debug, Clone)]
pub struct Session {
    scenario: Scenario,
    world: World,
    paused: bool,
    queue: VecDeque<Command>,
    log: Vec<LogEntry>,
    ticks: u64,
    last_row: TraceFrame,
}

impl Session {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let world = World::new(&scenario)?;
        let last_row = world.record();
        Ok(Self {
            scenario,
            world,
            paused: false,
            queue: VecDeque::new(),
            log: Vec::new(),
            ticks: 0,
            last_row,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Validates a command and queues it for the next step boundary.
    pub fn submit(&mut self, command: Command) -> Result<()> {
        match &command {
            Command::SetTarget {
                task,
                position,
                rotation,
            } => {
                if self.world.task_target(task).is_none() {
                    return Err(Error::config(format!("unknown task {task}")));
                }
                if position
                    .iter()
                    .chain(rotation.iter().flatten())
                    .any(|v| !v.is_finite())
                {
                    return Err(Error::config("target must be finite"));
                }
            }
            Command::ToggleGuide { guide } => {
                if self.world.guide_enabled(guide).is_none() {
                    return Err(Error::config(format!("unknown guide {guide}")));
                }
            }
            Command::Pause { .. } | Command::Reset => {}
        }
        self.log.push(LogEntry {
            tick: self.ticks,
            command: command.clone(),
        });
        self.queue.push_back(command);
        Ok(())
    }

    /// Applies due commands, then advances one step unless paused.
    pub fn tick(&mut self) -> Result<Tick> {
        self.ticks += 1;
        let mut reset = false;
        let mut waiting = VecDeque::new();
        while let Some(cmd) = self.queue.pop_front() {
            match &cmd {
                Command::Pause { paused } => {
                    self.paused = paused.unwrap_or(!self.paused);
                    if !self.paused {
                        // Held commands run first, in submission order.
                        while let Some(held) = waiting.pop_back() {
                            self.queue.push_front(held);
                        }
                    }
                }
                Command::Reset => {
                    self.world = World::new(&self.scenario)?;
                    // Commands held back by the pause are dropped with the
                    // state they referred to.
                    waiting.clear();
                    reset = true;
                }
                _ if self.paused => {
                    waiting.push_back(cmd);
                    continue;
                }
                _ => apply(&mut self.world, &cmd)?,
            }
        }
        self.queue = waiting;
        if reset {
            self.last_row = self.world.record();
            return Ok(Tick::Reset(self.last_row.clone()));
        }
        if self.paused {
            return Ok(Tick::Paused);
        }
        self.last_row = self.world.step()?;
        Ok(Tick::Stepped(self.last_row.clone()))
    }

    pub fn frame(&self) -> FrameMessage {
        frame_message(&self.world, &self.last_row, self.paused)
    }

    pub fn hello(&self) -> HelloMessage {
        hello(&self.world)
    }

    pub fn log(&self) -> CommandLog {
        CommandLog {
            scenario_hash: self.scenario.hash.clone(),
            entries: self.log.clone(),
            ticks: self.ticks,
        }
    }
}

fn apply(world: &mut World, cmd: &Command) -> Result<()> {
    match cmd {
        Command::SetTarget {
            task,
            position,
            rotation,
        } => {
            let current = world
                .task_target(task)
                .ok_or_else(|| Error::config(format!("unknown task {task}")))?;
            let rot = rotation.map_or(current.rotation, |r| lie::so3_exp(&Vector3::from(r)));
            world.set_target(
                task,
                Isometry3::from_parts(Translation3::from(Vector3::from(*position)), rot),
            )
        }
        Command::ToggleGuide { guide } => world.toggle_guide(guide).map(|_| ()),
        Command::Pause { .. } | Command::Reset => Ok(()),
    }
}

/// Re-runs a logged session headless and returns the rows it produced:
/// the initial row, then one row per step or reset.
pub fn replay(scenario: &Scenario, log: &CommandLog) -> Result<Vec<TraceFrame>> {
    if log.scenario_hash != scenario.hash {
        return Err(Error::config(
            "command log was recorded against a different scenario",
        ));
    }
    let mut session = Session::new(scenario.clone())?;
    let mut rows = vec![session.last_row.clone()];
    let mut entries = log.entries.iter().peekable();
    for tick in 0..log.ticks {
        while let Some(e) = entries.next_if(|e| e.tick == tick) {
            session.submit(e.command.clone())?;
        }
        match session.tick()? {
            Tick::Stepped(row) | Tick::Reset(row) => rows.push(row),
            Tick::Paused => {}
        }
    }
    Ok(rows)
}
