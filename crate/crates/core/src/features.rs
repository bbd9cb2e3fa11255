//! Interaction variables derived from agent trajectories: human speed `v`,
//! distance to goal `d_g` and collision risk `r`.

use crate::causalgraph::HRSI_VARIABLES;
use crate::error::{Error, Result};
use crate::hrsim::{angle_between, SimTrace, Simulator, TraceRecord, Vec2, WorldConfig};
use crate::timeseries::TimeSeriesBatch;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRow {
    pub t: f64,
    pub v: f64,
    pub d_g: f64,
    pub r: f64,
}

pub fn compute_speed(p_prev: Vec2, p_curr: Vec2, dt: f64) -> f64 {
    p_curr.distance(p_prev) / dt
}

pub fn compute_dg(p_h: Vec2, p_goal: Vec2) -> f64 {
    p_h.distance(p_goal)
}

/// Collision risk: relative speed weighted by how deep the relative velocity
/// points into the cone from the human to the robot's enlarged footprint of
/// radius `r_enc`. Zero on the cone boundary and outside it; the full relative
/// speed once the footprint is reached.
pub fn compute_risk(p_h: Vec2, v_h: Vec2, p_r: Vec2, v_r: Vec2, r_enc: f64) -> f64 {
    let v_rel = v_h - v_r;
    let speed = v_rel.norm();
    if speed == 0.0 {
        return 0.0;
    }
    let to_robot = p_r - p_h;
    let d = to_robot.norm();
    if d <= r_enc {
        return speed;
    }
    let half_angle = (r_enc / d).asin();
    let theta = angle_between(v_rel, to_robot);
    speed * (1.0 - theta / half_angle).max(0.0)
}

/// Incremental extractor: emits a row for every record after the first.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    r_enc: f64,
    prev: Option<TraceRecord>,
}

impl FeatureExtractor {
    pub fn new(r_enc: f64) -> Self {
        Self { r_enc, prev: None }
    }

    pub fn push(&mut self, rec: &TraceRecord) -> Option<FeatureRow> {
        let row = self.prev.as_ref().map(|prev| {
            let dt = rec.t - prev.t;
            let v_h = (rec.human.position - prev.human.position).scale(1.0 / dt);
            let v_r = (rec.robot.position - prev.robot.position).scale(1.0 / dt);
            FeatureRow {
                t: rec.t,
                v: v_h.norm(),
                d_g: compute_dg(rec.human.position, rec.goal_position),
                r: compute_risk(rec.human.position, v_h, rec.robot.position, v_r, self.r_enc),
            }
        });
        self.prev = Some(rec.clone());
        row
    }
}

pub fn feature_variables() -> Vec<String> {
    HRSI_VARIABLES.iter().map(|s| s.to_string()).collect()
}

pub fn rows_to_batch(rows: &[FeatureRow], rate_hz: f64) -> Result<TimeSeriesBatch> {
    let timestamps = rows.iter().map(|r| r.t).collect();
    let values = rows
        .iter()
        .map(|r| vec![Some(r.v), Some(r.d_g), Some(r.r)])
        .collect();
    TimeSeriesBatch::with_timestamps(feature_variables(), rate_hz, timestamps, values)
}

/// One `(v, d_g, r)` row per tick from the second onward.
pub fn trace_to_features(trace: &SimTrace, cfg: &WorldConfig) -> Result<TimeSeriesBatch> {
    trace_to_features_smoothed(trace, cfg, 1)
}

/// As [`trace_to_features`], with a trailing moving average of `window` rows
/// applied to each variable (`window = 1` disables smoothing).
pub fn trace_to_features_smoothed(
    trace: &SimTrace,
    cfg: &WorldConfig,
    window: usize,
) -> Result<TimeSeriesBatch> {
    if trace.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "trace has {} ticks, need at least 2",
            trace.len()
        )));
    }
    if window == 0 {
        return Err(Error::InvalidArgument("smoothing window must be >= 1".into()));
    }
    let mut fx = FeatureExtractor::new(cfg.r_enc);
    let mut rows: Vec<FeatureRow> = trace.records.iter().filter_map(|r| fx.push(r)).collect();
    if window > 1 {
        rows = moving_average(&rows, window);
    }
    rows_to_batch(&rows, trace.rate_hz())
}

/// Simulator ticks per output row at `rate_hz`; the rate must divide the
/// simulator rate `1 / dt`.
pub fn decimation_factor(world: &WorldConfig, rate_hz: f64) -> Result<usize> {
    let ratio = 1.0 / (world.dt * rate_hz);
    let factor = ratio.round();
    if !(rate_hz > 0.0) || factor < 1.0 || (ratio - factor).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "rate {rate_hz} Hz must divide the simulator rate {} Hz",
            1.0 / world.dt
        )));
    }
    Ok(factor as usize)
}

/// Simulates enough ticks for exactly `floor(duration_s * rate_hz)` feature
/// rows (one tick more than the rows cover, since the first row needs a
/// previous position), keeping every `decimation_factor`-th row.
pub fn simulate_features(world: &WorldConfig, duration_s: f64, rate_hz: f64) -> Result<(SimTrace, TimeSeriesBatch)> {
    let factor = decimation_factor(world, rate_hz)?;
    if !(duration_s > 0.0) {
        return Err(Error::InvalidArgument(format!("duration must be > 0, got {duration_s}")));
    }
    let rows = (duration_s * rate_hz + 1e-9).floor() as usize;
    if rows < 2 {
        return Err(Error::InsufficientData(format!("{duration_s} s at {rate_hz} Hz gives {rows} rows")));
    }
    let records: Vec<TraceRecord> = Simulator::new(world.clone())?.take(rows * factor + 1).collect();
    let mut fx = FeatureExtractor::new(world.r_enc);
    let kept: Vec<FeatureRow> = records
        .iter()
        .filter_map(|r| fx.push(r))
        .step_by(factor)
        .collect();
    let batch = rows_to_batch(&kept, rate_hz)?;
    Ok((SimTrace { dt: world.dt, records }, batch))
}

fn moving_average(rows: &[FeatureRow], window: usize) -> Vec<FeatureRow> {
    (0..rows.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let span = &rows[lo..=i];
            let n = span.len() as f64;
            FeatureRow {
                t: rows[i].t,
                v: span.iter().map(|r| r.v).sum::<f64>() / n,
                d_g: span.iter().map(|r| r.d_g).sum::<f64>() / n,
                r: span.iter().map(|r| r.r).sum::<f64>() / n,
            }
        })
        .collect()
}
