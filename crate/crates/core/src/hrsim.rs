//! Kinematic simulator of the human-robot spatial interaction scenario.
//!
//! The robot loops over a rectangle of waypoints at constant speed. The
//! pedestrian walks to one of four goals, slows down on approach, picks a new
//! goal at random when it arrives, and slows and steers away when the robot is
//! close and inside its collision cone.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::fmt_num;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(norm: f64, angle: f64) -> Self {
        Self::new(norm * angle.cos(), norm * angle.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Self) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn distance(self, o: Self) -> f64 {
        (self - o).norm()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

/// Unsigned angle between two vectors in `[0, pi]`.
pub fn angle_between(a: Vec2, b: Vec2) -> f64 {
    a.cross(b).atan2(a.dot(b)).abs()
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
}

impl AgentState {
    pub fn velocity(&self) -> Vec2 {
        Vec2::from_polar(self.speed, self.heading)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub room_width: f64,
    pub room_height: f64,
    pub goals: [Vec2; 4],
    pub robot_waypoints: [Vec2; 4],
    pub robot_speed: f64,
    pub v_max: f64,
    pub d_slow: f64,
    pub d_avoid: f64,
    pub r_enc: f64,
    pub goal_eps: f64,
    pub dt: f64,
    /// Maximum human turn rate, rad/s.
    pub max_turn_rate: f64,
    /// First-order time constant of the human speed response, s.
    pub speed_tau: f64,
    pub seed: u64,
    pub pos_noise_sigma: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            room_width: 5.0,
            room_height: 8.2,
            goals: [
                Vec2::new(1.0, 1.0),
                Vec2::new(4.0, 1.0),
                Vec2::new(4.0, 7.2),
                Vec2::new(1.0, 7.2),
            ],
            robot_waypoints: [
                Vec2::new(1.5, 2.0),
                Vec2::new(3.5, 2.0),
                Vec2::new(3.5, 6.2),
                Vec2::new(1.5, 6.2),
            ],
            robot_speed: 0.5,
            v_max: 1.2,
            d_slow: 1.5,
            d_avoid: 2.5,
            r_enc: 0.6,
            goal_eps: 0.3,
            dt: 0.1,
            max_turn_rate: PI,
            speed_tau: 0.5,
            seed: 0,
            pos_noise_sigma: 0.001,
        }
    }
}

impl WorldConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("room_width", self.room_width),
            ("room_height", self.room_height),
            ("robot_speed", self.robot_speed),
            ("v_max", self.v_max),
            ("d_slow", self.d_slow),
            ("d_avoid", self.d_avoid),
            ("r_enc", self.r_enc),
            ("goal_eps", self.goal_eps),
            ("dt", self.dt),
            ("max_turn_rate", self.max_turn_rate),
            ("speed_tau", self.speed_tau),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.pos_noise_sigma >= 0.0) {
            return Err(Error::Config("pos_noise_sigma must be >= 0".into()));
        }
        for p in self.goals.iter().chain(&self.robot_waypoints) {
            if !self.inside(*p) {
                return Err(Error::Config(format!("point ({}, {}) outside room", p.x, p.y)));
            }
        }
        Ok(())
    }

    fn inside(&self, p: Vec2) -> bool {
        (0.0..=self.room_width).contains(&p.x) && (0.0..=self.room_height).contains(&p.y)
    }

    fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(0.0, self.room_width), p.y.clamp(0.0, self.room_height))
    }
}

/// Goal-approach speed profile: `v_max * min(1, d_g / d_slow)`.
pub fn human_desired_speed(d_g: f64, cfg: &WorldConfig) -> f64 {
    cfg.v_max * (d_g.max(0.0) / cfg.d_slow).min(1.0)
}

/// Minimum separation used wherever a distance is divided by.
const MIN_DISTANCE: f64 = 1e-6;

/// Speed scale in `(0, 1]` and steering offset (rad) the pedestrian applies
/// when the robot is within `d_avoid` and the relative velocity points into
/// the collision cone around the robot's enlarged footprint.
pub fn avoidance(human: &AgentState, robot: &AgentState, cfg: &WorldConfig) -> (f64, f64) {
    let to_robot = robot.position - human.position;
    let d = to_robot.norm().max(MIN_DISTANCE);
    if d > cfg.d_avoid {
        return (1.0, 0.0);
    }
    let v_rel = human.velocity() - robot.velocity();
    if v_rel.norm() == 0.0 {
        return (1.0, 0.0);
    }
    let half_angle = (cfg.r_enc / d).min(1.0).asin();
    let theta = angle_between(to_robot, v_rel);
    if theta >= half_angle {
        return (1.0, 0.0);
    }
    let scale = (d / cfg.d_avoid).clamp(0.3, 1.0);
    let magnitude = (1.0 - theta / half_angle) * FRAC_PI_4;
    // Turn further to whichever side the relative velocity already leans.
    let side = if to_robot.cross(v_rel) < 0.0 { -1.0 } else { 1.0 };
    (scale, side * magnitude)
}

/// Replaces the goal with a uniformly drawn different one once the human is
/// within `goal_eps` of it. The generator is consumed only on arrival.
pub fn update_goal<R: Rng>(human_pos: Vec2, goal_index: usize, cfg: &WorldConfig, rng: &mut R) -> usize {
    if human_pos.distance(cfg.goals[goal_index]) >= cfg.goal_eps {
        return goal_index;
    }
    let pick = rng.random_range(0..cfg.goals.len() - 1);
    if pick >= goal_index {
        pick + 1
    } else {
        pick
    }
}

/// Full simulator state between ticks.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub tick: u64,
    pub human: AgentState,
    pub robot: AgentState,
    pub goal_index: usize,
    pub waypoint_index: usize,
    rng: ChaCha8Rng,
}

impl WorldState {
    pub fn initial(cfg: &WorldConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let goal_index = rng.random_range(0..cfg.goals.len());
        let start = Vec2::new(cfg.room_width / 2.0, cfg.room_height / 2.0);
        let human = AgentState {
            position: start,
            heading: (cfg.goals[goal_index] - start).angle(),
            speed: 0.0,
        };
        let w0 = cfg.robot_waypoints[0];
        let robot = AgentState {
            position: w0,
            heading: (cfg.robot_waypoints[1] - w0).angle(),
            speed: cfg.robot_speed,
        };
        Self {
            tick: 0,
            human,
            robot,
            goal_index,
            waypoint_index: 1,
            rng,
        }
    }

    pub fn time(&self, cfg: &WorldConfig) -> f64 {
        self.tick as f64 * cfg.dt
    }

    pub fn goal_position(&self, cfg: &WorldConfig) -> Vec2 {
        cfg.goals[self.goal_index]
    }
}

const WAYPOINT_RADIUS: f64 = 0.1;

/// Advances the world by one tick of `cfg.dt`.
pub fn step(mut s: WorldState, cfg: &WorldConfig) -> WorldState {
    let dt = cfg.dt;

    // Robot
    let mut wp = cfg.robot_waypoints[s.waypoint_index];
    if s.robot.position.distance(wp) < WAYPOINT_RADIUS {
        s.waypoint_index = (s.waypoint_index + 1) % cfg.robot_waypoints.len();
        wp = cfg.robot_waypoints[s.waypoint_index];
    }
    let to_wp = wp - s.robot.position;
    let prev_robot = s.robot;
    s.robot.heading = to_wp.angle();
    s.robot.speed = cfg.robot_speed;
    let advance = (cfg.robot_speed * dt).min(to_wp.norm());
    s.robot.position = cfg.clamp(s.robot.position + Vec2::from_polar(advance, s.robot.heading));

    // Human
    s.goal_index = update_goal(s.human.position, s.goal_index, cfg, &mut s.rng);
    let goal = cfg.goals[s.goal_index];
    let to_goal = goal - s.human.position;
    let max_turn = cfg.max_turn_rate * dt;
    if to_goal.norm() > 0.0 {
        let err = wrap_angle(to_goal.angle() - s.human.heading);
        s.human.heading = wrap_angle(s.human.heading + err.clamp(-max_turn, max_turn));
    }
    let (speed_scale, steer) = avoidance(&s.human, &prev_robot, cfg);
    s.human.heading = wrap_angle(s.human.heading + steer);

    let target_speed = human_desired_speed(to_goal.norm(), cfg) * speed_scale;
    let relax = 1.0 - (-dt / cfg.speed_tau).exp();
    s.human.speed = (s.human.speed + (target_speed - s.human.speed) * relax).max(0.0);
    s.human.position =
        cfg.clamp(s.human.position + Vec2::from_polar(s.human.speed * dt, s.human.heading));

    s.tick += 1;
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub human: AgentState,
    pub robot: AgentState,
    pub goal_index: usize,
    pub goal_position: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub dt: f64,
    pub records: Vec<TraceRecord>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rate_hz(&self) -> f64 {
        1.0 / self.dt
    }
}

/// Tick-by-tick recorder: yields one (optionally noisy) record per tick.
pub struct Simulator {
    cfg: WorldConfig,
    state: WorldState,
    noise: Option<(ChaCha8Rng, Normal<f64>)>,
}

impl Simulator {
    pub fn new(cfg: WorldConfig) -> Result<Self> {
        cfg.validate()?;
        let noise = if cfg.pos_noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(1);
            let normal = Normal::new(0.0, cfg.pos_noise_sigma)
                .map_err(|e| Error::Config(e.to_string()))?;
            Some((rng, normal))
        } else {
            None
        };
        Ok(Self {
            state: WorldState::initial(&cfg),
            cfg,
            noise,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    fn record(&mut self) -> TraceRecord {
        let s = &self.state;
        let mut human = s.human;
        let mut robot = s.robot;
        if let Some((rng, normal)) = self.noise.as_mut() {
            for agent in [&mut human, &mut robot] {
                agent.position.x += normal.sample(rng);
                agent.position.y += normal.sample(rng);
            }
        }
        TraceRecord {
            t: s.time(&self.cfg),
            human,
            robot,
            goal_index: s.goal_index,
            goal_position: s.goal_position(&self.cfg),
        }
    }
}

impl Iterator for Simulator {
    type Item = TraceRecord;

    fn next(&mut self) -> Option<TraceRecord> {
        let rec = self.record();
        let state = self.state.clone();
        self.state = step(state, &self.cfg);
        Some(rec)
    }
}

/// Number of whole ticks of `dt` in `duration_s`.
pub fn tick_count(duration_s: f64, dt: f64) -> usize {
    (duration_s / dt + 1e-9).floor().max(0.0) as usize
}

/// Simulates `floor(duration_s / dt)` ticks starting at t = 0.
pub fn run(cfg: &WorldConfig, duration_s: f64) -> Result<SimTrace> {
    if !(duration_s > 0.0) {
        return Err(Error::InvalidArgument(format!("duration must be > 0, got {duration_s}")));
    }
    let ticks = tick_count(duration_s, cfg.dt);
    let records = Simulator::new(cfg.clone())?.take(ticks).collect();
    Ok(SimTrace { dt: cfg.dt, records })
}

pub const RAW_TRACE_HEADER: &str = "t,hx,hy,hheading,hspeed,rx,ry,rheading,rspeed,gx,gy";

pub fn raw_trace_to_csv(trace: &SimTrace) -> String {
    let mut out = String::from(RAW_TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let cells = [
            r.t,
            r.human.position.x,
            r.human.position.y,
            r.human.heading,
            r.human.speed,
            r.robot.position.x,
            r.robot.position.y,
            r.robot.heading,
            r.robot.speed,
            r.goal_position.x,
            r.goal_position.y,
        ];
        let line: Vec<String> = cells.iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

pub fn write_raw_trace_csv(trace: &SimTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, raw_trace_to_csv(trace)).map_err(|e| Error::io(path, e))
}

/// Parses a raw-trace CSV. Goal indices number distinct goal positions in
/// order of first appearance.
pub fn parse_raw_trace_csv(text: &str) -> Result<SimTrace> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RAW_TRACE_HEADER => {}
        _ => return Err(Error::parse(1, format!("expected header `{RAW_TRACE_HEADER}`"))),
    }
    let mut goals: Vec<Vec2> = Vec::new();
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let cells = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(lineno, format!("non-numeric cell `{c}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if cells.len() != 11 {
            return Err(Error::parse(lineno, format!("{} columns, expected 11", cells.len())));
        }
        let goal = Vec2::new(cells[9], cells[10]);
        let goal_index = match goals.iter().position(|g| g.distance(goal) < 1e-9) {
            Some(i) => i,
            None => {
                goals.push(goal);
                goals.len() - 1
            }
        };
        records.push(TraceRecord {
            t: cells[0],
            human: AgentState {
                position: Vec2::new(cells[1], cells[2]),
                heading: cells[3],
                speed: cells[4],
            },
            robot: AgentState {
                position: Vec2::new(cells[5], cells[6]),
                heading: cells[7],
                speed: cells[8],
            },
            goal_index,
            goal_position: goal,
        });
    }
    let dt = match records.as_slice() {
        [a, b, ..] if b.t > a.t => b.t - a.t,
        [_, _, ..] => return Err(Error::parse(3, "timestamps must increase")),
        _ => 0.1,
    };
    Ok(SimTrace { dt, records })
}

pub fn read_raw_trace_csv(path: impl AsRef<Path>) -> Result<SimTrace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_raw_trace_csv(&text)
}
