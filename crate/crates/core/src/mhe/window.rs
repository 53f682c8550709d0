//! Sliding window of states spanning at most `dTw`, the Doppler factors
//! bound to them, and the priors that summarize evicted history.

use crate::error::{Error, Result};
use crate::motion::state_transition;
use crate::radar::{DopplerFactor, StateLookup, SAME_STATE_TOL};
use crate::types::{InputSample, StateVector, TireParamSet, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowState {
    pub t: f64,
    pub x: StateVector,
    /// Lies on the regular state grid (and is therefore reported).
    pub grid: bool,
    pub emitted: bool,
    /// Zero-velocity targets `(ãx, ãy, r̂)` while the vehicle stood still.
    pub zupt: Option<[f64; 3]>,
}

impl WindowState {
    pub fn vehicle_state(&self) -> VehicleState {
        VehicleState::from_vector(self.t, &self.x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlidingWindow {
    pub states: Vec<WindowState>,
    pub doppler: Vec<DopplerFactor>,
    pub prior_state: StateVector,
    /// The anchor prior still carries the inflated bootstrap covariance.
    pub bootstrap: bool,
    pub prior_params: TireParamSet,
}

impl SlidingWindow {
    pub fn new(prior_params: TireParamSet) -> Self {
        Self {
            states: Vec::new(),
            doppler: Vec::new(),
            prior_state: StateVector::zeros(),
            bootstrap: true,
            prior_params,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn span(&self) -> f64 {
        match (self.states.first(), self.states.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn newest(&self) -> Option<&WindowState> {
        self.states.last()
    }

    /// Starts an empty window with a single state.
    pub fn seed(&mut self, t: f64, x: StateVector) {
        self.states.clear();
        self.doppler.clear();
        self.states.push(WindowState {
            t,
            x,
            grid: true,
            emitted: false,
            zupt: None,
        });
        self.prior_state = x;
        self.bootstrap = true;
    }

    /// Appends a grid state predicted from the newest one with `u`.
    pub fn push_state(&mut self, t: f64, u: &InputSample) -> Result<()> {
        let newest = self
            .states
            .last()
            .ok_or_else(|| Error::InsufficientData("push into empty window".into()))?;
        if !(t > newest.t) {
            return Err(Error::WindowOrder(format!("push at {t} s after newest {} s", newest.t)));
        }
        let next = state_transition(&newest.vehicle_state(), u, t - newest.t)?;
        self.states.push(WindowState {
            t,
            x: next.to_vector(),
            grid: true,
            emitted: false,
            zupt: None,
        });
        Ok(())
    }

    /// Inserts an off-grid state at `t` (sorted position) initialized with `x`.
    pub fn insert_state(&mut self, t: f64, x: StateVector) -> Result<usize> {
        let start = self
            .states
            .first()
            .ok_or_else(|| Error::InsufficientData("insert into empty window".into()))?
            .t;
        if t < start - SAME_STATE_TOL {
            return Err(Error::StaleEvent { t, window_start: start });
        }
        if let Some(i) = self.find_state(t, SAME_STATE_TOL) {
            return Ok(i);
        }
        let pos = self.states.partition_point(|s| s.t < t);
        self.states.insert(
            pos,
            WindowState {
                t,
                x,
                grid: false,
                emitted: false,
                zupt: None,
            },
        );
        Ok(pos)
    }

    /// Drops the oldest states until the span fits `dtw`, re-anchors the
    /// state prior on the new oldest estimate and adopts `p_new` as the
    /// parameter prior. Returns the evicted states.
    pub fn shift(&mut self, p_new: &TireParamSet, dtw: f64) -> Vec<WindowState> {
        let newest = match self.states.last() {
            Some(s) => s.t,
            None => return Vec::new(),
        };
        let keep_from = self
            .states
            .iter()
            .position(|s| newest - s.t <= dtw + SAME_STATE_TOL)
            .unwrap_or(self.states.len() - 1);
        let evicted: Vec<WindowState> = self.states.drain(..keep_from).collect();
        if !evicted.is_empty() {
            let start = self.states[0].t;
            self.doppler.retain(|f| f.state_timestamp >= start - SAME_STATE_TOL);
            self.bootstrap = false;
        }
        self.prior_state = self.states[0].x;
        self.prior_params = *p_new;
        evicted
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.find_state(t, SAME_STATE_TOL)
    }
}

impl StateLookup for SlidingWindow {
    fn window_start(&self) -> Option<f64> {
        self.states.first().map(|s| s.t)
    }

    fn find_state(&self, t: f64, tol: f64) -> Option<usize> {
        let pos = self.states.partition_point(|s| s.t < t - tol);
        (pos < self.states.len() && (self.states[pos].t - t).abs() <= tol).then_some(pos)
    }

    fn interpolate(&self, t: f64) -> Option<VehicleState> {
        let first = self.states.first()?;
        let last = self.states.last()?;
        if t <= first.t {
            return Some(VehicleState::from_vector(t, &first.x));
        }
        if t >= last.t {
            return Some(VehicleState::from_vector(t, &last.x));
        }
        let hi = self.states.partition_point(|s| s.t < t);
        let (a, b) = (&self.states[hi - 1], &self.states[hi]);
        let w = (t - a.t) / (b.t - a.t);
        Some(VehicleState::from_vector(t, &(a.x * (1.0 - w) + b.x * w)))
    }
}
