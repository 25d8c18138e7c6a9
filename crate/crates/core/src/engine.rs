//! Tick-driven simulation loop.

use glam::{DVec2, DVec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::belief_grid::BeliefGrid;
use crate::cluster::{self, check_rules, AgentId, AgentState, Registry};
use crate::config::{CommMode, ScenarioConfig};
use crate::error::SimError;
use crate::metrics::{self, Summary, TraceRecord};
use crate::motion::{self, BeliefField, MotionMode};
use crate::propagation::{fires, Propagator};
use crate::wildfire::{fov_cells, FireGrid};

const STREAM_FIRE: u64 = 1;
const STREAM_SPAWN: u64 = 2;
const STREAM_MOTION: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub polls: u64,
    pub measurements: u64,
    pub disseminations: u64,
    pub maintenances: u64,
    pub fire_updates: u64,
    pub metrics: u64,
}

/// One head/member edge of a topology snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TopologyRow {
    pub tick: u64,
    pub child: AgentId,
    pub parent: AgentId,
    pub level: u32,
}

pub fn write_topology<W: std::io::Write>(rows: &[TopologyRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "tick,child_id,parent_id,level")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.tick, r.child, r.parent, r.level)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SimWorld {
    pub config: ScenarioConfig,
    pub clock: f64,
    pub tick: u64,
    pub registry: Registry,
    pub fire: FireGrid,
    pub base: BeliefGrid,
    pub propagator: Propagator,
    /// Union of every observation so far, used by exploration-only motion.
    perfect: BeliefGrid,
    perfect_field: Option<BeliefField>,
    rng_fire: ChaCha8Rng,
    rng_spawn: ChaCha8Rng,
    rng_motion: ChaCha8Rng,
    next_id: u32,
    next_spawn: f64,
    window_start: f64,
    pub trace: Vec<TraceRecord>,
    pub topology: Vec<TopologyRow>,
    pub events: EventCounts,
    pub spawned: u32,
    pub rule_violations: usize,
    pub link_bound_violations: usize,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub summary: Summary,
    pub topology: Vec<TopologyRow>,
    pub final_topology: Vec<TopologyRow>,
    pub events: EventCounts,
}

impl SimWorld {
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let shape = config.shape();
        let mut rng_fire = stream(config.seed, STREAM_FIRE);
        let mut fire = FireGrid::new(shape, config.fire.clone());
        for _ in 0..config.initial_fires {
            fire.ignite_random(&mut rng_fire);
        }
        let perfect_field = (config.motion.mode == MotionMode::ExploreOnly).then(|| BeliefField::new(shape));
        Ok(Self {
            clock: 0.0,
            tick: 0,
            registry: Registry::new(),
            fire,
            base: BeliefGrid::new(shape),
            propagator: Propagator::new(config.propagation.clone()),
            perfect: BeliefGrid::new(shape),
            perfect_field,
            rng_fire,
            rng_spawn: stream(config.seed, STREAM_SPAWN),
            rng_motion: stream(config.seed, STREAM_MOTION),
            next_id: 1,
            next_spawn: 0.0,
            window_start: 0.0,
            trace: Vec::new(),
            topology: Vec::new(),
            events: EventCounts::default(),
            spawned: 0,
            rule_violations: 0,
            link_bound_violations: 0,
            config,
        })
    }

    fn center(&self) -> DVec3 {
        DVec3::new(self.config.env_size[0] / 2.0, self.config.env_size[1] / 2.0, 0.0)
    }

    fn env(&self) -> DVec2 {
        DVec2::new(self.config.env_size[0], self.config.env_size[1])
    }

    pub fn is_done(&self) -> bool {
        self.tick >= self.config.ticks()
    }

    /// Advances the clock by one tick.
    pub fn step(&mut self) -> Result<(), SimError> {
        self.tick += 1;
        let now = self.tick as f64 * self.config.dt;
        self.clock = now;
        let dt = self.config.dt;
        let mlc = self.config.comm == CommMode::Mlc;

        self.spawn(now);
        self.land(now)?;
        self.move_agents(now);
        if mlc && fires(now, dt, self.config.protocol.poll_period) {
            cluster::poll(&mut self.registry, &self.config.protocol, now);
            self.events.polls += 1;
        }
        if fires(now, dt, self.config.propagation.t_o) {
            self.measure(now)?;
            self.events.measurements += 1;
        }
        let t_lambda = self.config.propagation.t_lambda;
        if mlc && fires(now, dt, t_lambda) {
            self.propagator
                .upstream(&mut self.registry, Some(&mut self.base), now, t_lambda)?;
            self.propagator.downstream(&mut self.registry, now, t_lambda)?;
            self.events.disseminations += 1;
        }
        if mlc && fires(now, dt, self.config.protocol.maintenance_period) {
            cluster::maintain(&mut self.registry, &self.config.protocol);
            self.events.maintenances += 1;
            let violations = check_rules(&self.registry, self.config.protocol.max_cluster_size);
            if !violations.is_empty() {
                if self.config.strict {
                    let details = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
                    return Err(SimError::InvariantViolation { time: now, details });
                }
                self.rule_violations += violations.len();
            }
        }
        if fires(now, dt, self.config.fire.update_period) {
            self.fire.step(&mut self.rng_fire);
            self.events.fire_updates += 1;
        }
        if fires(now, dt, self.config.metrics_period) {
            self.record(now);
            self.events.metrics += 1;
        }
        Ok(())
    }

    fn spawn(&mut self, now: f64) {
        if now > self.config.spawn_duration + 1e-9 || now + 1e-9 < self.next_spawn {
            return;
        }
        if self.registry.agents.len() >= self.config.max_agents {
            return;
        }
        let id = AgentId(self.next_id);
        self.next_id += 1;
        self.spawned += 1;
        let shape = self.config.shape();
        let mut agent = AgentState::new(id, self.center(), self.config.battery, shape, now);
        if self.config.comm != CommMode::None {
            agent.total_belief = self.base.clone();
        }
        if self.config.motion.mode == MotionMode::FireTracking {
            agent.field = Some(BeliefField::from_grid(&agent.total_belief));
        }
        self.registry.insert_agent(agent);
        let [lo, hi] = self.config.spawn_interval;
        self.next_spawn += if hi > lo { self.rng_spawn.gen_range(lo..=hi) } else { lo };
    }

    fn land(&mut self, now: f64) -> Result<(), SimError> {
        let dt = self.config.dt;
        let v_0 = self.config.motion.v_0;
        let center = self.center();
        let mut landing = Vec::new();
        for a in self.registry.agents.values_mut() {
            a.battery_remaining = (a.battery_remaining - dt).max(0.0);
            let at_center = a.position.distance(center) < 1e-6;
            if (a.returning && at_center) || a.battery_remaining <= 0.0 {
                landing.push(a.id);
                continue;
            }
            let margin = motion::return_margin(motion::flat(a.position), motion::flat(center), v_0, dt);
            if !a.returning && a.battery_remaining <= margin {
                a.returning = true;
            }
        }
        for id in landing {
            let policy = self.config.propagation.policy;
            if self.config.comm != CommMode::None {
                if let Some(a) = self.registry.agents.get(&id) {
                    self.base.merge(&a.total_belief, policy, now)?;
                }
            }
            if self.config.comm == CommMode::Mlc {
                cluster::despawn(&mut self.registry, id, &self.config.protocol);
            } else {
                self.registry.agents.remove(&id);
            }
            self.propagator.forget(id);
        }
        Ok(())
    }

    fn move_agents(&mut self, now: f64) {
        let cfg = &self.config.motion;
        let dt = self.config.dt;
        let env = self.env();
        let center = self.center();
        let age_cap = now.min(self.config.sim_time);
        let positions: Vec<(AgentId, DVec2)> = self
            .registry
            .agents
            .values()
            .map(|a| (a.id, motion::flat(a.position)))
            .collect();
        let ids: Vec<AgentId> = positions.iter().map(|(id, _)| *id).collect();
        for id in ids {
            let others: Vec<DVec2> = positions.iter().filter(|(o, _)| *o != id).map(|(_, p)| *p).collect();
            let a = self.registry.agents.get_mut(&id).expect("agent");
            let p = motion::flat(a.position);
            if a.returning {
                let to = motion::flat(center) - p;
                if to.length() <= cfg.v_0 * dt {
                    a.position = center;
                    a.velocity = DVec3::ZERO;
                } else {
                    a.velocity = (to.normalize() * cfg.v_0).extend(0.0);
                    a.position += a.velocity * dt;
                }
                continue;
            }
            a.velocity = match cfg.mode {
                MotionMode::RandomTargets => {
                    motion::step_random_targets(a.position, &mut a.target, env, cfg.v_0, dt, &mut self.rng_motion)
                }
                MotionMode::ExploreOnly => {
                    let f = motion::force_repel(p, &others, env, cfg.w_r)
                        + motion::force_age(p, &self.perfect, self.perfect_field.as_ref(), now, age_cap, cfg.w_a);
                    motion::step_velocity(f, a.velocity, cfg.v_0)
                }
                MotionMode::FireTracking => {
                    let field = a.field.as_ref();
                    let f = motion::force_repel(p, &others, env, cfg.w_r)
                        + motion::force_age(p, &a.total_belief, field, now, age_cap, cfg.w_a)
                        + motion::force_fire(p, &a.total_belief, field, cfg.w_f);
                    motion::step_velocity(f, a.velocity, cfg.v_0)
                }
            };
            let next = a.position + a.velocity * dt;
            a.position = DVec3::new(next.x.clamp(0.0, env.x), next.y.clamp(0.0, env.y), 0.0);
        }
    }

    fn measure(&mut self, now: f64) -> Result<(), SimError> {
        let shape = self.config.shape();
        let policy = self.config.propagation.policy;
        let r = self.config.fov_radius;
        let mut all = BeliefGrid::new(shape);
        let direct = self.config.comm == CommMode::Direct;
        let mut sent: Vec<(AgentId, f64)> = Vec::new();
        for a in self.registry.agents.values_mut() {
            let cells = fov_cells(&shape, a.position.x, a.position.y, r);
            let obs = self.fire.observation(&cells, now);
            a.absorb(&obs, policy, now)?;
            if let Some(field) = &mut self.perfect_field {
                self.perfect
                    .merge_with(&obs, policy, now, |i, o, n| field.replace(i, &o, &n))?;
            }
            if direct {
                all.merge(&obs, policy, now)?;
                sent.push((a.id, obs.data_amount()));
            }
            a.observation = obs;
        }
        if direct {
            for a in self.registry.agents.values_mut() {
                a.absorb(&all, policy, now)?;
            }
            for &(from, amount) in &sent {
                for &(to, _) in &sent {
                    if from != to {
                        self.propagator.meter.charge(from, to, amount);
                    }
                }
            }
        }
        Ok(())
    }

    fn record(&mut self, now: f64) {
        let ids: Vec<AgentId> = self.registry.agents.keys().copied().collect();
        let n = ids.len();
        let (ratio, links) = match self.config.comm {
            CommMode::Mlc => (
                metrics::main_cluster_ratio(&self.registry),
                metrics::link_stats(&self.registry),
            ),
            CommMode::Direct => (
                if n > 0 { 1.0 } else { f64::NAN },
                metrics::complete_graph_stats(&self.registry),
            ),
            CommMode::None => (
                if n > 0 { 1.0 / n as f64 } else { f64::NAN },
                metrics::LinkStats::default(),
            ),
        };
        if self.config.comm == CommMode::Mlc && links.max_links > self.config.protocol.max_cluster_size + 2 {
            self.link_bound_violations += 1;
        }
        let window = self.propagator.meter.take();
        let (avg_rate, max_rate) = metrics::data_rate(&window, &ids, now - self.window_start);
        self.window_start = now;

        let shape = self.config.shape();
        let mut seen = vec![false; shape.cell_count()];
        for a in self.registry.agents.values() {
            for i in fov_cells(&shape, a.position.x, a.position.y, self.config.fov_radius) {
                seen[i] = true;
            }
        }
        let miss = if self.fire.burning_count() == 0 {
            f64::NAN
        } else if n == 0 {
            1.0
        } else {
            metrics::miss_ratio(&self.fire, &seen)
        };
        self.trace.push(TraceRecord {
            t: now,
            n_agents: n,
            main_cluster_ratio: ratio,
            avg_links: links.avg_links,
            max_links: links.max_links,
            avg_link_dist: links.avg_dist,
            max_link_dist: links.max_dist,
            avg_data_rate: avg_rate,
            max_data_rate: max_rate,
            miss_ratio: miss,
        });
        if self.config.record_topology {
            let tick = self.tick;
            self.topology.extend(self.topology_rows(tick));
        }
    }

    pub fn topology_rows(&self, tick: u64) -> Vec<TopologyRow> {
        self.registry
            .edges()
            .into_iter()
            .map(|(child, parent, level)| TopologyRow {
                tick,
                child,
                parent,
                level,
            })
            .collect()
    }

    pub fn summary(&self) -> Summary {
        let mut s = Summary::from_trace(&self.trace);
        s.seed = self.config.seed;
        s.spawned = self.spawned;
        s.total_data = self.propagator.meter.total;
        s.rule_violations = self.rule_violations;
        s.link_bound_violations = self.link_bound_violations;
        s
    }

    pub fn run_to_end(mut self) -> Result<RunOutput, SimError> {
        while !self.is_done() {
            self.step()?;
        }
        let final_topology = self.topology_rows(self.tick);
        Ok(RunOutput {
            summary: self.summary(),
            trace: self.trace,
            topology: self.topology,
            final_topology,
            events: self.events,
        })
    }
}

/// Runs one scenario to completion.
pub fn run(config: &ScenarioConfig) -> Result<RunOutput, SimError> {
    SimWorld::new(config.clone())?.run_to_end()
}

/// Same scenario with every agent sharing full observations with every other.
pub fn run_direct_baseline(config: &ScenarioConfig) -> Result<RunOutput, SimError> {
    let mut cfg = config.clone();
    cfg.comm = CommMode::Direct;
    run(&cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            sim_time: 60.0,
            env_size: [1000.0, 1000.0],
            max_agents: 6,
            grid: crate::config::GridConfig {
                width: 40,
                height: 40,
                cell_size: 25.0,
            },
            seed: 3,
            strict: true,
            ..Default::default()
        }
    }

    #[test]
    fn no_spawning_leaves_fire_alone() {
        let cfg = ScenarioConfig {
            spawn_duration: 0.0,
            ..small()
        };
        let out = run(&cfg).unwrap();
        assert!(out.trace.iter().all(|r| r.n_agents == 0));
        assert_eq!(out.events.fire_updates, 12);
    }

    #[test]
    fn schedule_counts() {
        let out = run(&small()).unwrap();
        assert_eq!(out.events.polls, 120);
        assert_eq!(out.events.measurements, 60);
        assert_eq!(out.events.disseminations, 60);
        assert_eq!(out.events.maintenances, 12);
        assert_eq!(out.events.metrics, 24);
        assert_eq!(out.trace.len(), 24);
    }

    #[test]
    fn agent_count_capped() {
        let cfg = ScenarioConfig {
            max_agents: 3,
            spawn_interval: [1.0, 1.0],
            ..small()
        };
        let out = run(&cfg).unwrap();
        assert!(out.trace.iter().all(|r| r.n_agents <= 3));
        assert_eq!(out.summary.spawned, 3);
    }

    #[test]
    fn same_seed_same_trace() {
        let a = run(&small()).unwrap();
        let b = run(&small()).unwrap();
        assert_eq!(format!("{:?}", a.trace), format!("{:?}", b.trace));
    }

    #[test]
    fn battery_run_out_lands_at_center() {
        let cfg = ScenarioConfig {
            battery: 30.0,
            spawn_duration: 0.5,
            motion: crate::motion::MotionConfig {
                mode: MotionMode::RandomTargets,
                ..Default::default()
            },
            ..small()
        };
        let mut w = SimWorld::new(cfg).unwrap();
        w.step().unwrap();
        let mut landed_at = None;
        while !w.is_done() {
            w.step().unwrap();
            if let Some(a) = w.registry.agents.values().next() {
                assert!(a.battery_remaining > 0.0);
            } else if landed_at.is_none() {
                landed_at = Some(w.clock);
            }
        }
        let t = landed_at.expect("agent landed");
        assert!(t <= 31.0, "{t}");
    }
}
