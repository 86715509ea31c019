//! The simulated world and its step pipeline.

use nalgebra::{DMatrix, DVector, Isometry3, Matrix6, Point3, Translation3, Unit, Vector3};

use super::scenario::{CouplingMode, GuideSwitch, ObstacleFile, Scenario};
use super::targets::{finite_twist, perturb, OuNoise, TargetSchedule};
use super::trace::{TraceFrame, TraceLayout};
use crate::chain::{forward_kinematics, integrate, lie, pose_error, KinematicChain, SimState};
use crate::constraints::{
    assemble_lcp, detect_constraints, solve_lcp, ConstraintKind, Obstacle, UnilateralConstraint,
};
use crate::control::{
    build_internal_projection, pose_potential, InternalPotential, PosturePotential, TaskFrame,
};
use crate::dynamics::{ImplicitTask, SINGULAR_RATIO};
use crate::guides::{axis_error, coupled_system, CouplingTerm, GuideCoupling, VirtualMechanism};
use crate::linalg::SpdSystem;
use crate::passivity::{
    build_counterexample, passivity_verdict, PassivityLedger, Port, PortRole, Verdict,
};
use crate::{Error, Result};

#[derive(Debug, Clone)]
struct TaskRt {
    name: String,
    frame: TaskFrame<f64>,
    stiffness: Matrix6<f64>,
    damping: Matrix6<f64>,
    schedule: TargetSchedule,
    noise: Option<OuNoise>,
    override_pose: Option<Isometry3<f64>>,
    /// Target at the current time.
    target: Isometry3<f64>,
}

impl TaskRt {
    fn scripted(&self, t: f64) -> Isometry3<f64> {
        let base = self.schedule.sample(t);
        match &self.noise {
            Some(n) => perturb(&base, &n.value()),
            None => base,
        }
    }

    /// Advances the noise and returns the target at `t`.
    fn advance(&mut self, t: f64) -> Isometry3<f64> {
        if let Some(n) = &mut self.noise {
            n.advance();
        }
        match self.override_pose {
            Some(p) => p,
            None => self.scripted(t),
        }
    }
}

#[derive(Debug, Clone)]
struct GuideRt {
    name: String,
    mech: VirtualMechanism<f64>,
    state: SimState<f64>,
    enabled: bool,
    schedule: Vec<GuideSwitch>,
    next_switch: usize,
    /// Velocities of the last step, used by explicit coupling.
    last_manikin_qdot: DVector<f64>,
    last_qdot: DVector<f64>,
}

impl GuideRt {
    fn active(&self) -> bool {
        self.enabled && !self.mech.coupling().is_detached()
    }
}

#[derive(Debug, Clone)]
struct MonitorRt {
    link: usize,
    axis_local: Unit<Vector3<f64>>,
    ideal: Unit<Vector3<f64>>,
}

#[derive(Debug, Clone)]
struct CounterRt {
    port1: TaskFrame<f64>,
    port2: TaskFrame<f64>,
    w1: DVector<f64>,
    w2: DVector<f64>,
    mobility: SpdSystem<f64>,
}

/// Per-step values reported alongside the trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepDiagnostics {
    pub lcp_residual: f64,
    pub active_constraints: usize,
    /// Smallest probe gap after the step (`+∞` without probes/obstacles).
    pub min_probe_gap: f64,
    pub min_contact_force: f64,
    /// Largest excursion of a joint beyond its limits after the step.
    pub limit_violation: f64,
    pub axis_errors: Vec<f64>,
    pub joint_dissipation_power: f64,
    /// Two-port power (counterexample mode).
    pub power: f64,
    pub predicted_power: f64,
    /// Contact power `f·ġ` of constraints whose gap is within the slop.
    pub min_touching_contact_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactReport {
    pub probe: String,
    pub obstacle: String,
    pub gap: f64,
    pub force: f64,
}

/// A scenario instantiated: manikin, guides, targets, constraints, ledger.
#[derive(Debug, Clone)]
pub struct World {
    scenario: Scenario,
    chain: KinematicChain<f64>,
    state: SimState<f64>,
    frames: Vec<Isometry3<f64>>,
    tasks: Vec<TaskRt>,
    guides: Vec<GuideRt>,
    monitors: Vec<MonitorRt>,
    monitor_names: Vec<String>,
    internal: Option<(usize, PosturePotential<f64>)>,
    obstacles: Vec<Obstacle<f64>>,
    obstacle_names: Vec<String>,
    counter: Option<CounterRt>,
    ledger: PassivityLedger<f64>,
    dissipation: f64,
    last_dissipation_power: Option<f64>,
    step: usize,
    layout: TraceLayout,
    last: StepDiagnostics,
    last_forces: Vec<(String, f64)>,
}

fn link_index(chain: &KinematicChain<f64>, name: &str, path: &str) -> Result<usize> {
    chain
        .link_index(name)
        .ok_or_else(|| Error::schema(path, format!("unknown link {name}")))
}

impl World {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let f = &scenario.file;
        let chain: KinematicChain<f64> = f.chain.inline()?.to_chain()?;
        let mut state = SimState::neutral(&chain);
        if let Some(init) = &f.initial {
            if let Some(j) = &init.joints {
                state = SimState::from_joints(&chain, j)
                    .map_err(|e| Error::schema("initial.joints", e.to_string()))?;
            }
            if let Some(b) = &init.base {
                if state.base.is_none() {
                    return Err(Error::schema("initial.base", "chain has no floating base"));
                }
                state.base = Some(Isometry3::from_parts(
                    Translation3::from(Vector3::from(b.translation)),
                    lie::so3_exp(&Vector3::from(b.rotation)),
                ));
            }
        }
        let frames = forward_kinematics(&chain, &state)?;

        let mut tasks = Vec::new();
        for (i, t) in f.tasks.iter().enumerate() {
            let frame = TaskFrame::new(
                link_index(&chain, &t.link, &format!("tasks[{i}].link"))?,
                Vector3::from(t.point),
            );
            let stiffness = t.stiffness.to_matrix(&format!("tasks[{i}].stiffness"))?;
            let damping = t.damping.to_matrix(&format!("tasks[{i}].damping"))?;
            crate::control::check_gains(&format!("task {}", t.name), &stiffness, &damping, true)?;
            let schedule = TargetSchedule::new(&t.target, frame.pose(&frames));
            let noise = t
                .noise
                .as_ref()
                .map(|n| OuNoise::new(n, f.dt, f.seed, i as u64));
            let mut rt = TaskRt {
                name: t.name.clone(),
                frame,
                stiffness,
                damping,
                schedule,
                noise,
                override_pose: None,
                target: Isometry3::identity(),
            };
            rt.target = rt.scripted(0.0);
            tasks.push(rt);
        }

        let mut guides = Vec::new();
        for (i, g) in f.guides.iter().enumerate() {
            let gchain: KinematicChain<f64> = g.chain.inline()?.to_chain()?;
            let tool_link = gchain.link_index(&g.tool.link).ok_or_else(|| {
                Error::schema(format!("guides[{i}].tool.link"), "unknown guide link")
            })?;
            let coupling = GuideCoupling::new(
                TaskFrame::new(
                    link_index(
                        &chain,
                        &g.manikin.link,
                        &format!("guides[{i}].manikin.link"),
                    )?,
                    Vector3::from(g.manikin.point),
                ),
                g.stiffness.to_matrix(&format!("guides[{i}].stiffness"))?,
                g.damping.to_matrix(&format!("guides[{i}].damping"))?,
            )?;
            let gstate = match &g.initial {
                Some(q) => SimState::from_joints(&gchain, q)
                    .map_err(|e| Error::schema(format!("guides[{i}].initial"), e.to_string()))?,
                None => SimState::neutral(&gchain),
            };
            let nv = gchain.dof();
            let mech = VirtualMechanism::new(
                gchain,
                TaskFrame::new(tool_link, Vector3::from(g.tool.point)),
                coupling,
            )?;
            let mut schedule = g.schedule.clone();
            schedule.sort_by(|a, b| a.t.total_cmp(&b.t));
            guides.push(GuideRt {
                name: g.name.clone(),
                mech,
                state: gstate,
                enabled: g.enabled,
                schedule,
                next_switch: 0,
                last_manikin_qdot: DVector::zeros(chain.dof()),
                last_qdot: DVector::zeros(nv),
            });
        }

        let mut monitors = Vec::new();
        for (i, m) in f.monitors.iter().enumerate() {
            monitors.push(MonitorRt {
                link: link_index(&chain, &m.link, &format!("monitors[{i}].link"))?,
                axis_local: Unit::new_normalize(Vector3::from(m.axis_local)),
                ideal: Unit::new_normalize(Vector3::from(m.ideal_axis)),
            });
        }

        let internal = match &f.internal {
            Some(int) => {
                let task = f
                    .tasks
                    .iter()
                    .position(|t| t.name == int.task)
                    .expect("validated");
                let nc = chain.coordinate_count();
                let reference = int
                    .reference
                    .clone()
                    .map(DVector::from_vec)
                    .unwrap_or_else(|| state.joints.clone());
                let weights = int
                    .weights
                    .clone()
                    .map(DVector::from_vec)
                    .unwrap_or_else(|| DVector::from_element(nc, 1.0));
                if reference.len() != nc || weights.len() != nc {
                    return Err(Error::schema(
                        "internal",
                        format!("reference and weights need {nc} entries"),
                    ));
                }
                Some((task, PosturePotential::new(reference, weights, int.alpha)?))
            }
            None => None,
        };

        let mut obstacles = Vec::new();
        for (i, o) in f.obstacles.iter().enumerate() {
            let ob = match o {
                ObstacleFile::HalfSpace { normal, offset, .. } => {
                    Obstacle::half_space(Vector3::from(*normal), *offset)
                }
                ObstacleFile::Sphere { center, radius, .. } => {
                    Obstacle::sphere(Vector3::from(*center), *radius)
                }
            };
            obstacles
                .push(ob.map_err(|e| Error::schema(format!("obstacles[{i}]"), e.to_string()))?);
        }

        let damping = SpdSystem::new(chain.damping(), SINGULAR_RATIO).map_err(|(e, _)| {
            Error::config(format!(
                "manikin damping B_a must be positive definite: {e}"
            ))
        })?;

        let counter = match &f.counterexample {
            Some(ce) => {
                let p1 = TaskFrame::new(
                    link_index(&chain, &ce.port1.link, "counterexample.port1.link")?,
                    Vector3::from(ce.port1.point),
                );
                let p2 = match &ce.port2 {
                    Some(p) => TaskFrame::new(
                        link_index(&chain, &p.link, "counterexample.port2.link")?,
                        Vector3::from(p.point),
                    ),
                    None => p1.clone(),
                };
                let j1 = p1.jacobian(&chain, &frames);
                let built = build_counterexample(
                    &j1,
                    chain.damping(),
                    &DVector::from_column_slice(&ce.w2),
                )?;
                Some(CounterRt {
                    port1: p1,
                    port2: p2,
                    w1: built.w1,
                    w2: built.w2,
                    mobility: damping.clone(),
                })
            }
            None => None,
        };

        let beta_sq = match f.passivity.beta_sq {
            Some(b) => b,
            None => tasks
                .iter()
                .map(|t| {
                    pose_potential(&t.stiffness, &pose_error(&t.target, &t.frame.pose(&frames)))
                })
                .sum(),
        };

        let mut world = Self {
            scenario: scenario.clone(),
            chain,
            state,
            frames,
            tasks,
            guides,
            monitors,
            monitor_names: f.monitors.iter().map(|m| m.name.clone()).collect(),
            internal,
            obstacles,
            obstacle_names: f.obstacles.iter().map(|o| o.name().to_string()).collect(),
            counter,
            ledger: PassivityLedger::new(beta_sq)?,
            dissipation: 0.0,
            last_dissipation_power: None,
            step: 0,
            layout: TraceLayout::default(),
            last: StepDiagnostics::default(),
            last_forces: Vec::new(),
        };
        world.layout = world.build_layout();
        Ok(world)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn chain(&self) -> &KinematicChain<f64> {
        &self.chain
    }

    pub fn state(&self) -> &SimState<f64> {
        &self.state
    }

    pub fn frames(&self) -> &[Isometry3<f64>] {
        &self.frames
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn dt(&self) -> f64 {
        self.scenario.file.dt
    }

    pub fn ledger(&self) -> &PassivityLedger<f64> {
        &self.ledger
    }

    pub fn joint_dissipation(&self) -> f64 {
        self.dissipation
    }

    pub fn layout(&self) -> &TraceLayout {
        &self.layout
    }

    pub fn diagnostics(&self) -> &StepDiagnostics {
        &self.last
    }

    pub fn task_names(&self) -> impl Iterator<Item = &str> {
        self.tasks.iter().map(|t| t.name.as_str())
    }

    pub fn guide_names(&self) -> impl Iterator<Item = &str> {
        self.guides.iter().map(|g| g.name.as_str())
    }

    pub fn monitor_names(&self) -> &[String] {
        &self.monitor_names
    }

    pub fn obstacle_names(&self) -> &[String] {
        &self.obstacle_names
    }

    pub fn is_counterexample(&self) -> bool {
        self.counter.is_some()
    }

    /// Current target pose of a task.
    pub fn task_target(&self, task: &str) -> Option<Isometry3<f64>> {
        self.tasks.iter().find(|t| t.name == task).map(|t| t.target)
    }

    pub fn task_pose(&self, task: &str) -> Option<Isometry3<f64>> {
        self.tasks
            .iter()
            .find(|t| t.name == task)
            .map(|t| t.frame.pose(&self.frames))
    }

    pub fn guide_enabled(&self, guide: &str) -> Option<bool> {
        self.guides
            .iter()
            .find(|g| g.name == guide)
            .map(|g| g.enabled)
    }

    pub fn guide_state(&self, guide: &str) -> Option<&SimState<f64>> {
        self.guides
            .iter()
            .find(|g| g.name == guide)
            .map(|g| &g.state)
    }

    pub fn guide_tool_pose(&self, guide: &str) -> Option<Isometry3<f64>> {
        let g = self.guides.iter().find(|g| g.name == guide)?;
        g.mech.tool_pose(&g.state).ok()
    }

    /// Current error of each axis monitor.
    pub fn axis_errors(&self) -> Vec<f64> {
        self.monitors
            .iter()
            .map(|m| axis_error(&self.frames[m.link], &m.ideal, &m.axis_local))
            .collect()
    }

    /// Replaces a task's scripted target with a fixed pose from the next
    /// step on.
    pub fn set_target(&mut self, task: &str, pose: Isometry3<f64>) -> Result<()> {
        let t = self
            .tasks
            .iter_mut()
            .find(|t| t.name == task)
            .ok_or_else(|| Error::config(format!("unknown task {task}")))?;
        t.override_pose = Some(pose);
        t.target = pose;
        Ok(())
    }

    pub fn set_guide_enabled(&mut self, guide: &str, enabled: bool) -> Result<()> {
        let g = self
            .guides
            .iter_mut()
            .find(|g| g.name == guide)
            .ok_or_else(|| Error::config(format!("unknown guide {guide}")))?;
        g.enabled = enabled;
        Ok(())
    }

    /// Flips a guide and returns its new state.
    pub fn toggle_guide(&mut self, guide: &str) -> Result<bool> {
        let now = !self
            .guide_enabled(guide)
            .ok_or_else(|| Error::config(format!("unknown guide {guide}")))?;
        self.set_guide_enabled(guide, now)?;
        Ok(now)
    }

    /// Runs one step of the pipeline; errors carry the step index.
    pub fn step(&mut self) -> Result<TraceFrame> {
        let index = self.step;
        let result = if self.counter.is_some() {
            self.step_counterexample()
        } else {
            self.step_standard()
        };
        result.map_err(|e| Error::Step {
            step: index,
            source: Box::new(e),
        })?;
        self.step += 1;
        Ok(self.record())
    }

    fn step_standard(&mut self) -> Result<()> {
        let dt = self.dt();
        let t = self.state.t;
        let n = self.chain.dof();
        let cfg = self.scenario.file.constraints.clone();
        let mode = self.scenario.file.coupling;

        for g in &mut self.guides {
            while let Some(sw) = g.schedule.get(g.next_switch) {
                if sw.t > t + 1e-9 * dt {
                    break;
                }
                g.enabled = sw.enabled;
                g.next_switch += 1;
            }
        }

        // Targets and task terms.
        let mut terms = Vec::with_capacity(self.tasks.len());
        let mut next_targets = Vec::with_capacity(self.tasks.len());
        for task in &mut self.tasks {
            let next = task.advance(t + dt);
            let vd = finite_twist(&task.target, &next, dt);
            let err = pose_error(&task.target, &task.frame.pose(&self.frames));
            terms.push(ImplicitTask {
                jacobian: task.frame.jacobian(&self.chain, &self.frames),
                stiffness: DMatrix::from_column_slice(6, 6, task.stiffness.as_slice()),
                damping: DMatrix::from_column_slice(6, 6, task.damping.as_slice()),
                error: DVector::from_column_slice(err.as_slice()),
                desired_velocity: DVector::from_column_slice(vd.as_slice()),
            });
            next_targets.push(next);
        }

        let mut external = DVector::zeros(n);
        if let Some((task, potential)) = &self.internal {
            let projection =
                build_internal_projection(&terms[*task].jacobian, self.chain.damping())?;
            external -=
                projection.apply(&potential.gradient(&self.chain, &self.state)) * potential.alpha();
        }

        // Guides: implicit couplings join the solve, explicit ones act as
        // torques computed from the previous velocities.
        let mut coupled: Vec<(usize, CouplingTerm<f64>)> = Vec::new();
        let mut explicit_qdot: Vec<Option<DVector<f64>>> = vec![None; self.guides.len()];
        for (gi, g) in self.guides.iter().enumerate() {
            if !g.active() {
                continue;
            }
            let term = g.mech.coupling_term(&self.chain, &self.frames, &g.state)?;
            match mode {
                CouplingMode::Implicit => coupled.push((gi, term)),
                CouplingMode::Explicit => {
                    let (wm, wg) = term.wrenches(&g.last_manikin_qdot, &g.last_qdot);
                    external += term
                        .manikin_jacobian
                        .tr_mul(&DVector::from_column_slice(wm.as_slice()));
                    explicit_qdot[gi] =
                        Some(crate::guides::guide_velocity(&g.mech, &g.state, &wg)?);
                }
            }
        }
        let blocks: Vec<(&CouplingTerm<f64>, &DMatrix<f64>)> = coupled
            .iter()
            .map(|(gi, term)| (term, self.guides[*gi].mech.chain().damping()))
            .collect();
        let system = coupled_system(self.chain.damping(), &terms, &external, &blocks)?;
        let factor = system.factorize().map_err(|(e, cond)| {
            Error::Singular(format!("implicit system matrix (condition {cond:e}): {e}"))
        })?;
        let total = system.rhs.len();
        let free = factor.solve(&system.rhs);

        // Constraints on the manikin block.
        let mut constraints: Vec<UnilateralConstraint<f64>> = Vec::new();
        if cfg.enabled {
            let free_q = free.rows(0, n);
            constraints =
                detect_constraints(&self.chain, &self.state, &self.obstacles, f64::INFINITY)?
                    .into_iter()
                    .filter(|c| {
                        cfg.joint_limits || matches!(c.kind, ConstraintKind::PointContact { .. })
                    })
                    .filter(|c| c.gap.min(c.gap + dt * c.row.dot(&free_q)) < cfg.activation_margin)
                    .collect();
        }
        let mut forces = DVector::zeros(constraints.len());
        let mut velocity = free;
        self.last = StepDiagnostics {
            min_touching_contact_power: f64::INFINITY,
            min_contact_force: f64::INFINITY,
            ..StepDiagnostics::default()
        };
        if !constraints.is_empty() {
            let padded: Vec<UnilateralConstraint<f64>> = constraints
                .iter()
                .map(|c| {
                    let mut row = DVector::zeros(total);
                    row.rows_mut(0, n).copy_from(&c.row);
                    UnilateralConstraint { row, ..c.clone() }
                })
                .collect();
            let lcp = assemble_lcp(&padded, &factor, &velocity, dt, cfg.baumgarte)?;
            let sol = solve_lcp(&lcp, cfg.tolerance, cfg.max_iter)?;
            let mut rhs = system.rhs.clone();
            for (c, f) in padded.iter().zip(sol.f.iter()) {
                rhs.axpy(*f, &c.row, 1.0);
            }
            velocity = factor.solve(&rhs);
            self.last.lcp_residual = sol.residual;
            self.last.active_constraints = sol.f.iter().filter(|f| **f > 0.0).count();
            self.last.min_contact_force = sol.f.min();
            forces = sol.f;
        }
        let qdot = velocity.rows(0, n).into_owned();
        if qdot.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite joint velocity".into()));
        }

        // Ledger: operator ports of the tasks, environment ports of the
        // constraints.
        let mut ports = Vec::with_capacity(terms.len() + 4);
        for (task, term) in self.tasks.iter().zip(&terms) {
            ports.push(Port::imposed(
                format!("task.{}", task.name),
                PortRole::Task,
                term.wrench(&qdot),
                term.desired_velocity.clone(),
            ));
        }
        for (c, f) in constraints.iter().zip(forces.iter()) {
            let port = Port::measured(
                constraint_id(&self.chain, &self.obstacle_names, c.kind),
                PortRole::Contact,
                DMatrix::from_row_slice(1, n, c.row.as_slice()),
                DVector::from_element(1, *f),
                &qdot,
            );
            if (0.0..=crate::constraints::CONTACT_SLOP).contains(&c.gap) {
                self.last.min_touching_contact_power =
                    self.last.min_touching_contact_power.min(port.power());
            }
            ports.push(port);
        }
        self.last_forces = ports
            .iter()
            .filter(|p| p.role == PortRole::Contact)
            .map(|p| (p.id.clone(), p.wrench[0]))
            .collect();
        self.ledger.record_step(&ports, dt)?;
        self.account_dissipation(&qdot, dt);

        // Integrate manikin and guides.
        let mut offset = n;
        for (gi, _) in &coupled {
            let g = &mut self.guides[*gi];
            let nv = g.mech.chain().dof();
            let gq = velocity.rows(offset, nv).into_owned();
            g.state = integrate(g.mech.chain(), &g.state, &gq, dt)?;
            g.last_qdot = gq;
            g.last_manikin_qdot = qdot.clone();
            offset += nv;
        }
        for (gi, gq) in explicit_qdot.into_iter().enumerate() {
            if let Some(gq) = gq {
                let g = &mut self.guides[gi];
                g.state = integrate(g.mech.chain(), &g.state, &gq, dt)?;
                g.last_qdot = gq;
                g.last_manikin_qdot = qdot.clone();
            }
        }
        self.state = integrate(&self.chain, &self.state, &qdot, dt)?;
        self.frames = forward_kinematics(&self.chain, &self.state)?;
        for (task, next) in self.tasks.iter_mut().zip(next_targets) {
            task.target = next;
        }
        self.post_step_measures();
        Ok(())
    }

    fn step_counterexample(&mut self) -> Result<()> {
        let dt = self.dt();
        let ce = self.counter.as_ref().expect("counterexample mode");
        let j1 = ce.port1.jacobian(&self.chain, &self.frames);
        let j2 = ce.port2.jacobian(&self.chain, &self.frames);
        let projection = build_internal_projection(&j1, self.chain.damping())?;
        let j2t_w2 = j2.tr_mul(&ce.w2);
        let gamma = j1.tr_mul(&ce.w1) + projection.apply(&j2t_w2);
        let qdot = ce.mobility.solve(&gamma);
        let ports = [
            Port::measured("port1", PortRole::Task, j1, ce.w1.clone(), &qdot),
            Port::measured("port2", PortRole::Task, j2, ce.w2.clone(), &qdot),
        ];
        self.last = StepDiagnostics {
            power: ports[0].power() + ports[1].power(),
            predicted_power: -0.25 * j2t_w2.dot(&ce.mobility.solve(&j2t_w2)),
            min_touching_contact_power: f64::INFINITY,
            min_contact_force: f64::INFINITY,
            ..StepDiagnostics::default()
        };
        self.ledger.record_step(&ports, dt)?;
        self.account_dissipation(&qdot, dt);
        self.state = integrate(&self.chain, &self.state, &qdot, dt)?;
        self.frames = forward_kinematics(&self.chain, &self.state)?;
        self.post_step_measures();
        Ok(())
    }

    fn account_dissipation(&mut self, qdot: &DVector<f64>, dt: f64) {
        let p = qdot.dot(&(self.chain.damping() * qdot));
        self.dissipation += 0.5 * (self.last_dissipation_power.unwrap_or(p) + p) * dt;
        self.last_dissipation_power = Some(p);
        self.last.joint_dissipation_power = p;
    }

    fn post_step_measures(&mut self) {
        let mut min_gap = f64::INFINITY;
        for probe in self.chain.probes() {
            let p = (self.frames[probe.link] * Point3::from(probe.point)).coords;
            for o in &self.obstacles {
                if let Some((g, _)) = o.distance(&p) {
                    min_gap = min_gap.min(g);
                }
            }
        }
        self.last.min_probe_gap = min_gap;
        let mut violation = 0.0f64;
        for (link, joint) in self.chain.joints().iter().enumerate() {
            if let (Some((lo, hi)), Some(ci)) = (joint.limits, self.chain.coordinate_index(link)) {
                let q = self.state.joints[ci];
                violation = violation.max(lo - q).max(q - hi);
            }
        }
        self.last.limit_violation = violation;
        self.last.axis_errors = self.axis_errors();
    }

    fn build_layout(&self) -> TraceLayout {
        let mut cols = vec!["t".to_string()];
        if self.chain.has_floating_base() {
            for c in ["x", "y", "z", "qw", "qx", "qy", "qz"] {
                cols.push(format!("base.{c}"));
            }
        }
        for (link, l) in self.chain.links().iter().enumerate() {
            if self.chain.coordinate_index(link).is_some() {
                cols.push(format!("q.{}", l.name));
            }
        }
        for t in &self.tasks {
            for c in [
                "x", "y", "z", "target_x", "target_y", "target_z", "err_pos", "err_rot", "power",
                "energy",
            ] {
                cols.push(format!("task.{}.{c}", t.name));
            }
        }
        for g in &self.guides {
            cols.push(format!("guide.{}.enabled", g.name));
            for link in 0..g.mech.chain().coordinate_count() {
                cols.push(format!("guide.{}.q{link}", g.name));
            }
        }
        for m in &self.monitor_names {
            cols.push(format!("axis_error.{m}"));
        }
        for probe in self.chain.probes() {
            for o in &self.obstacle_names {
                cols.push(format!("contact.{}.{o}.gap", probe.name));
                cols.push(format!("contact.{}.{o}.force", probe.name));
            }
        }
        if self.counter.is_some() {
            for c in [
                "port1.power",
                "port1.energy",
                "port2.power",
                "port2.energy",
                "power.predicted",
            ] {
                cols.push(c.to_string());
            }
        }
        for c in [
            "energy.total",
            "energy.beta_sq",
            "passivity.violated",
            "dissipation.joint",
            "lcp.residual",
            "lcp.active",
        ] {
            cols.push(c.to_string());
        }
        TraceLayout::new(cols)
    }

    /// Trace row for the current state and the step just taken.
    pub fn record(&self) -> TraceFrame {
        let mut v = Vec::with_capacity(self.layout.len());
        v.push(self.state.t);
        if let Some(b) = &self.state.base {
            let q = b.rotation.quaternion();
            v.extend([
                b.translation.x,
                b.translation.y,
                b.translation.z,
                q.w,
                q.i,
                q.j,
                q.k,
            ]);
        }
        v.extend(self.state.joints.iter());
        for t in &self.tasks {
            let pose = t.frame.pose(&self.frames);
            let err = pose_error(&t.target, &pose);
            let id = format!("task.{}", t.name);
            let power = self
                .ledger
                .accounts()
                .iter()
                .find(|a| a.id == id)
                .map_or(0.0, |a| a.last_power);
            v.extend(pose.translation.vector.iter());
            v.extend(t.target.translation.vector.iter());
            v.push(err.fixed_rows::<3>(0).norm());
            v.push(err.fixed_rows::<3>(3).norm());
            v.push(power);
            v.push(self.ledger.energy(&id).unwrap_or(0.0));
        }
        for g in &self.guides {
            v.push(if g.enabled { 1.0 } else { 0.0 });
            v.extend(g.state.joints.iter());
        }
        v.extend(self.axis_errors());
        for c in self.contacts() {
            v.push(c.gap);
            v.push(c.force);
        }
        if self.counter.is_some() {
            for id in ["port1", "port2"] {
                v.push(
                    self.ledger
                        .accounts()
                        .iter()
                        .find(|a| a.id == id)
                        .map_or(0.0, |a| a.last_power),
                );
                v.push(self.ledger.energy(id).unwrap_or(0.0));
            }
            v.push(self.last.predicted_power);
        }
        let verdict = passivity_verdict(&self.ledger).total;
        v.push(self.ledger.total_energy());
        v.push(self.ledger.beta_sq());
        v.push(if matches!(verdict, Verdict::Violated(_)) {
            1.0
        } else {
            0.0
        });
        v.push(self.dissipation);
        v.push(self.last.lcp_residual);
        v.push(self.last.active_constraints as f64);
        debug_assert_eq!(v.len(), self.layout.len());
        TraceFrame { values: v }
    }

    /// Gap and last force of every probe/obstacle pair.
    pub fn contacts(&self) -> Vec<ContactReport> {
        let mut out = Vec::new();
        for (pi, probe) in self.chain.probes().iter().enumerate() {
            let p = (self.frames[probe.link] * Point3::from(probe.point)).coords;
            for (oi, o) in self.obstacles.iter().enumerate() {
                let id = constraint_id(
                    &self.chain,
                    &self.obstacle_names,
                    ConstraintKind::PointContact {
                        probe: pi,
                        obstacle: oi,
                    },
                );
                out.push(ContactReport {
                    probe: probe.name.clone(),
                    obstacle: self.obstacle_names[oi].clone(),
                    gap: o.distance(&p).map_or(f64::NAN, |(g, _)| g),
                    force: self.last_force(&id),
                });
            }
        }
        out
    }

    fn last_force(&self, id: &str) -> f64 {
        self.last_forces
            .iter()
            .find(|(k, _)| k == id)
            .map_or(0.0, |(_, f)| *f)
    }
}

fn constraint_id(
    chain: &KinematicChain<f64>,
    obstacles: &[String],
    kind: ConstraintKind,
) -> String {
    match kind {
        ConstraintKind::JointLimitLower(l) => format!("limit.{}.lower", chain.links()[l].name),
        ConstraintKind::JointLimitUpper(l) => format!("limit.{}.upper", chain.links()[l].name),
        ConstraintKind::PointContact { probe, obstacle } => format!(
            "contact.{}.{}",
            chain.probes()[probe].name,
            obstacles[obstacle]
        ),
    }
}
