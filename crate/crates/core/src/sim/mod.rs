//! Scenario orchestration: loading, stepping, traces and live sessions.

pub mod bundled;
mod live;
mod run;
mod scenario;
mod targets;
mod trace;
mod world;

pub use live::{
    frame_message, hello, replay, AxisSnapshot, Command, CommandLog, ContactSnapshot,
    EnergySnapshot, FrameMessage, GuideSnapshot, HelloMessage, LinkPose, LogEntry, ServerMessage,
    Session, TaskSnapshot, Tick, PROTOCOL_VERSION,
};
pub use run::{run_scenario, run_world, AxisSummary, Summary};
pub use scenario::{
    apply_override, AxisMonitorFile, ChainRef, ChainResolver, ConstraintConfig, CounterexampleFile,
    CouplingMode, DirResolver, FrameFile, Gain, GuideFile, GuideSwitch, InitialState, InternalFile,
    NoiseFile, ObstacleFile, PassivityConfig, Scenario, ScenarioFile, TargetFile, TaskFile,
    Waypoint, SCENARIO_VERSION,
};
pub use targets::{finite_twist, perturb, OuNoise, TargetSchedule};
pub use trace::{Trace, TraceFrame, TraceLayout, TraceWriter, TRACE_VERSION};
pub use world::{ContactReport, StepDiagnostics, World};
