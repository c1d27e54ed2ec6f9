//! Exact simulation of the joint log-price / intensity process.
//!
//! Event times come from thinning against a piecewise-constant bound that is
//! refreshed after every candidate. Between events each intensity moves
//! monotonically from its current value towards theta, so
//! `max(lambda+, theta+) + max(lambda-, theta-)` dominates the total rate on
//! the whole inter-event interval.
//!
//! Every path owns two ChaCha20 streams derived from its seed: stream 0 drives
//! the point process and stream 1 the Brownian increments, so a path is a pure
//! function of `(params, horizon, seed)`.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::QParams;
use crate::model::{IntensityDynamics, IntensityState, JumpLaw, ModelParams, Side};

pub const DEFAULT_EVENT_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub t: f64,
    pub size: f64,
    pub sign: Side,
}

/// Time-ordered jump events on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSeries {
    events: Vec<JumpEvent>,
    horizon: f64,
}

impl EventSeries {
    pub fn new(events: Vec<JumpEvent>, horizon: f64) -> Result<Self> {
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::invalid(format!("horizon must be non-negative, got {horizon}")));
        }
        for (i, e) in events.iter().enumerate() {
            if !e.t.is_finite() || !e.size.is_finite() {
                return Err(Error::invalid(format!("event {i} is not finite")));
            }
            if e.t < 0.0 || e.t > horizon {
                return Err(Error::invalid(format!(
                    "event {i} at t={} outside [0, {horizon}]",
                    e.t
                )));
            }
            if i > 0 && e.t <= events[i - 1].t {
                return Err(Error::invalid(format!("event times not strictly increasing at {i}")));
            }
        }
        Ok(Self { events, horizon })
    }

    pub fn empty(horizon: f64) -> Self {
        Self { events: Vec::new(), horizon }
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count(&self, side: Side) -> usize {
        self.events.iter().filter(|e| e.sign == side).count()
    }

    pub fn sizes(&self, side: Side) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().filter(move |e| e.sign == side).map(|e| e.size)
    }

    /// Events with `from <= t < to`, re-based so that `from` becomes time 0.
    pub fn window(&self, from: f64, to: f64) -> EventSeries {
        let events = self
            .events
            .iter()
            .filter(|e| e.t >= from && e.t < to)
            .map(|e| JumpEvent { t: e.t - from, ..*e })
            .collect();
        EventSeries { events, horizon: to - from }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "size", "sign"])?;
        for e in &self.events {
            w.write_record([
                format_float(e.t),
                format_float(e.size),
                e.sign.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `t,size,sign` rows. The horizon defaults to the last event time.
    pub fn read_csv<R: Read>(reader: R, horizon: Option<f64>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            t: f64,
            size: f64,
            sign: String,
        }
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let mut events = Vec::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            events.push(JumpEvent { t: row.t, size: row.size, sign: row.sign.parse()? });
        }
        let horizon = horizon.unwrap_or_else(|| events.last().map_or(0.0, |e| e.t));
        Self::new(events, horizon)
    }
}

pub(crate) fn format_float(v: f64) -> String {
    // shortest round-trip representation keeps CSV output byte-stable
    format!("{v:?}")
}

/// Simulated path sampled on a reporting grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPath {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub lambda_plus: Vec<f64>,
    pub lambda_minus: Vec<f64>,
    pub events: EventSeries,
    pub seed: u64,
}

impl SimPath {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "X", "lambda_plus", "lambda_minus"])?;
        for i in 0..self.times.len() {
            w.write_record([
                format_float(self.times[i]),
                format_float(self.x[i]),
                format_float(self.lambda_plus[i]),
                format_float(self.lambda_minus[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn terminal_x(&self) -> f64 {
        *self.x.last().unwrap_or(&0.0)
    }
}

/// Which measure a path is simulated under.
#[derive(Debug, Clone, Copy)]
pub enum Measure<'a> {
    Physical,
    RiskNeutral(&'a QParams),
}

impl Measure<'_> {
    /// Parameters that drive the simulation: the statistical model itself, or
    /// the transformed model with drift `r`.
    pub fn effective_params(&self, params: &ModelParams) -> ModelParams {
        match self {
            Measure::Physical => *params,
            Measure::RiskNeutral(q) => q.as_model(),
        }
    }
}

fn event_rng(seed: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

fn diffusion_rng(seed: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn generate_events<R: Rng>(
    dynamics: &IntensityDynamics,
    laws: [&JumpLaw; 2],
    lambda0: [f64; 2],
    horizon: f64,
    rng: &mut R,
    cap: usize,
) -> Result<EventSeries> {
    let theta = dynamics.theta();
    let mut t = 0.0;
    let mut lambda = lambda0;
    let mut events = Vec::new();
    loop {
        let bound = lambda[0].max(theta[0]).max(0.0) + lambda[1].max(theta[1]).max(0.0);
        if !(bound > 0.0) {
            break;
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / bound;
        if t + wait > horizon {
            break;
        }
        lambda = dynamics.decay(lambda, wait);
        t += wait;
        let u = rng.random::<f64>() * bound;
        let lp = lambda[0].max(0.0);
        let lm = lambda[1].max(0.0);
        let side = if u < lp {
            Side::Positive
        } else if u < lp + lm {
            Side::Negative
        } else {
            continue;
        };
        let size = laws[side.index()].sample(rng);
        events.push(JumpEvent { t, size, sign: side });
        if events.len() > cap {
            return Err(Error::ExplosionGuard { cap });
        }
        lambda = dynamics.excite(lambda, side, size);
    }
    Ok(EventSeries { events, horizon })
}

/// Draws jump events of the bivariate Hawkes process on `[0, horizon]`.
pub fn simulate_events(
    dynamics: &IntensityDynamics,
    law_plus: &JumpLaw,
    law_minus: &JumpLaw,
    lambda0: [f64; 2],
    horizon: f64,
    seed: u64,
    cap: usize,
) -> Result<EventSeries> {
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    let mut rng = event_rng(seed);
    generate_events(dynamics, [law_plus, law_minus], lambda0, horizon, &mut rng, cap)
}

/// Replays intensities through `events` starting from `lambda0` at time 0 and
/// returns post-event states plus the compensator integrals up to each query
/// time in `times` (which must be sorted).
fn replay(
    dynamics: &IntensityDynamics,
    lambda0: [f64; 2],
    events: &[JumpEvent],
    times: &[f64],
) -> Vec<([f64; 2], [f64; 2], f64)> {
    // returns (lambda at t, integral of lambda on [0,t], jump sum on [0,t])
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut lambda = lambda0;
    let mut integral = [0.0, 0.0];
    let mut jumps = 0.0;
    let mut next = 0;
    for &q in times {
        while next < events.len() && events[next].t <= q {
            let e = &events[next];
            let dt = e.t - t;
            let inc = dynamics.integrate(lambda, dt);
            integral[0] += inc[0];
            integral[1] += inc[1];
            lambda = dynamics.excite(dynamics.decay(lambda, dt), e.sign, e.size);
            jumps += e.size;
            t = e.t;
            next += 1;
        }
        let dt = q - t;
        let inc = dynamics.integrate(lambda, dt);
        out.push((
            dynamics.decay(lambda, dt),
            [integral[0] + inc[0], integral[1] + inc[1]],
            jumps,
        ));
    }
    out
}

fn reporting_grid(horizon: f64, step: f64) -> Vec<f64> {
    let n = (horizon / step).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    if horizon - grid[n] > 1e-12 * horizon.max(1.0) {
        grid.push(horizon);
    } else {
        grid[n] = horizon;
    }
    grid
}

/// Simulates `(X, lambda+, lambda-)` on a reporting grid.
///
/// The compensator term uses the exact intensity integrals; the grid only
/// controls where the path is recorded and where Brownian increments are
/// drawn.
pub fn simulate_path(
    params: &ModelParams,
    measure: Measure<'_>,
    horizon: f64,
    grid_step: f64,
    seed: u64,
    cap: usize,
) -> Result<SimPath> {
    if !(grid_step > 0.0) {
        return Err(Error::invalid("grid step must be positive"));
    }
    let model = measure.effective_params(params);
    let events = simulate_events(
        &model.dynamics,
        &model.law_plus,
        &model.law_minus,
        model.lambda0(),
        horizon,
        seed,
        cap,
    )?;
    let comp = model.compensators()?;
    let drift = model.mu - 0.5 * model.sigma * model.sigma;
    let times = reporting_grid(horizon, grid_step);
    let states = replay(&model.dynamics, model.lambda0(), events.events(), &times);

    let mut rng = diffusion_rng(seed);
    let mut w = 0.0;
    let mut x = Vec::with_capacity(times.len());
    let mut lp = Vec::with_capacity(times.len());
    let mut lm = Vec::with_capacity(times.len());
    for (i, (&t, (lambda, integral, jumps))) in times.iter().zip(&states).enumerate() {
        if i > 0 {
            let dt = t - times[i - 1];
            let z: f64 = rng.sample(StandardNormal);
            w += dt.sqrt() * z;
        }
        x.push(drift * t + model.sigma * w + jumps - comp[0] * integral[0] - comp[1] * integral[1]);
        lp.push(lambda[0]);
        lm.push(lambda[1]);
    }
    Ok(SimPath { times, x, lambda_plus: lp, lambda_minus: lm, events, seed })
}

/// Terminal values of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalDraw {
    pub x: f64,
    pub lambda: [f64; 2],
}

/// Samples `(X_T, lambda_T)` only, skipping the reporting grid.
pub fn simulate_terminal(model: &ModelParams, horizon: f64, seed: u64, cap: usize) -> Result<TerminalDraw> {
    let events = simulate_events(
        &model.dynamics,
        &model.law_plus,
        &model.law_minus,
        model.lambda0(),
        horizon,
        seed,
        cap,
    )?;
    let comp = model.compensators()?;
    let (lambda, integral, jumps) = replay(&model.dynamics, model.lambda0(), events.events(), &[horizon])[0];
    let z: f64 = diffusion_rng(seed).sample(StandardNormal);
    let x = (model.mu - 0.5 * model.sigma * model.sigma) * horizon
        + model.sigma * horizon.sqrt() * z
        + jumps
        - comp[0] * integral[0]
        - comp[1] * integral[1];
    Ok(TerminalDraw { x, lambda })
}

/// Terminal draws for an explicit seed list, computed in parallel. Output
/// order follows `seeds`.
pub fn simulate_terminal_batch(
    model: &ModelParams,
    horizon: f64,
    seeds: &[u64],
    cap: usize,
) -> Result<Vec<TerminalDraw>> {
    seeds
        .par_iter()
        .map(|&s| simulate_terminal(model, horizon, s, cap))
        .collect()
}

/// Intensity state after replaying `events` from `state` up to `t_end`.
pub fn intensity_at(dynamics: &IntensityDynamics, state: &IntensityState, events: &[JumpEvent], t_end: f64) -> IntensityState {
    let shifted: Vec<JumpEvent> = events
        .iter()
        .filter(|e| e.t > state.t && e.t <= t_end)
        .map(|e| JumpEvent { t: e.t - state.t, ..*e })
        .collect();
    let (lambda, _, _) = replay(dynamics, state.lambda(), &shifted, &[t_end - state.t])[0];
    IntensityState::from_pair(t_end, lambda)
}
