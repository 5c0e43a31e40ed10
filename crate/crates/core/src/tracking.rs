//! Sampling rules that steer empirical pull fractions toward a target
//! allocation: C-Tracking (cumulative, on truncated weights) and D-Tracking
//! (direct, with forced exploration).
//!
//! Arms are indexed from zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{Weights, SIMPLEX_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrackingRule {
    #[serde(rename = "c", alias = "c-tracking", alias = "C")]
    CTracking,
    #[serde(rename = "d", alias = "d-tracking", alias = "D")]
    DTracking,
}

impl FromStr for TrackingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c" | "c-tracking" => Ok(TrackingRule::CTracking),
            "d" | "d-tracking" => Ok(TrackingRule::DTracking),
            other => Err(Error::Precondition(format!("unknown tracking rule `{other}`"))),
        }
    }
}

impl fmt::Display for TrackingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrackingRule::CTracking => "c",
            TrackingRule::DTracking => "d",
        })
    }
}

/// Sufficient statistics of a sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryState {
    /// Rounds elapsed.
    pub t: u64,
    pub counts: Vec<u64>,
    pub sums: Vec<f64>,
    /// Sum of the truncated plug-in weights fed to C-Tracking so far.
    pub cum_weights: Vec<f64>,
}

impl HistoryState {
    pub fn new(k: usize) -> Self {
        HistoryState {
            t: 0,
            counts: vec![0; k],
            sums: vec![0.0; k],
            cum_weights: vec![0.0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn record(&mut self, arm: usize, reward: f64) {
        self.t += 1;
        self.counts[arm] += 1;
        self.sums[arm] += reward;
    }

    pub fn mean(&self, arm: usize) -> Option<f64> {
        match self.counts[arm] {
            0 => None,
            n => Some(self.sums[arm] / n as f64),
        }
    }

    /// Empirical means, once every arm has been pulled.
    pub fn empirical_means(&self) -> Option<Vec<f64>> {
        (0..self.k()).map(|a| self.mean(a)).collect()
    }

    pub fn all_pulled(&self) -> bool {
        self.counts.iter().all(|&n| n > 0)
    }
}

/// `eps_t = 1 / (2 sqrt(K^2 + t))`.
pub fn epsilon_schedule(t: u64, k: usize) -> f64 {
    let k = k as f64;
    0.5 / (k * k + t as f64).sqrt()
}

/// L-infinity projection of `w` onto `{v in simplex : v_a >= epsilon}`.
///
/// Deficient coordinates are raised to `epsilon`; the added mass is then
/// removed from the other coordinates by water-filling, taking
/// `min(c, v_a - epsilon)` from each with the smallest feasible cap `c`.
pub fn project_truncated_simplex(w: &Weights, epsilon: f64) -> Result<Weights> {
    let k = w.len();
    if !(epsilon > 0.0) || epsilon > 1.0 / k as f64 + SIMPLEX_TOL {
        return Err(Error::Precondition(format!(
            "truncation level {epsilon} outside (0, 1/{k}]"
        )));
    }
    let mut v = w.as_slice().to_vec();
    let mut excess = 0.0;
    for x in v.iter_mut() {
        if *x < epsilon {
            excess += epsilon - *x;
            *x = epsilon;
        }
    }
    if excess > 0.0 {
        let mut rooms: Vec<f64> = v.iter().map(|&x| x - epsilon).filter(|&r| r > 0.0).collect();
        rooms.sort_by(|a, b| a.total_cmp(b));
        // Smallest cap c with sum_i min(c, room_i) = excess.
        let mut remaining = excess;
        let mut cap = 0.0;
        let mut left = rooms.len();
        for &room in &rooms {
            if room * left as f64 >= remaining {
                cap = remaining / left as f64;
                remaining = 0.0;
                break;
            }
            remaining -= room;
            left -= 1;
        }
        if remaining > 0.0 {
            // Only reachable when epsilon = 1/K up to rounding.
            return Ok(Weights::uniform(k));
        }
        for x in v.iter_mut() {
            if *x > epsilon {
                *x -= cap.min(*x - epsilon);
            }
        }
    }
    Ok(Weights::from_raw(v))
}

/// Next arm during initialization (each arm once, in index order), or `None`
/// once every arm has been pulled. Under C-Tracking the uniform allocation is
/// accumulated for these rounds.
pub fn initialization_arm(rule: TrackingRule, state: &mut HistoryState) -> Option<usize> {
    let arm = state.counts.iter().position(|&n| n == 0)?;
    if rule == TrackingRule::CTracking {
        let share = 1.0 / state.k() as f64;
        state.cum_weights.iter_mut().for_each(|c| *c += share);
    }
    Some(arm)
}

/// Choose `A_{t+1}` from the current state and the plug-in allocation.
///
/// Under C-Tracking this also adds the truncated plug-in weights to
/// `state.cum_weights`.
pub fn next_arm(rule: TrackingRule, state: &mut HistoryState, plugin: &Weights) -> Result<usize> {
    let k = state.k();
    if plugin.len() != k {
        return Err(Error::InvalidWeights(format!(
            "{} plug-in weights for {k} arms",
            plugin.len()
        )));
    }
    if !state.all_pulled() {
        return Err(Error::Precondition(
            "every arm must be pulled once before tracking".into(),
        ));
    }
    let t = state.t;
    match rule {
        TrackingRule::CTracking => {
            let truncated = project_truncated_simplex(plugin, epsilon_schedule(t, k))?;
            for (c, &x) in state.cum_weights.iter_mut().zip(truncated.as_slice()) {
                *c += x;
            }
            Ok(argmax((0..k).map(|a| state.cum_weights[a] - state.counts[a] as f64)))
        }
        TrackingRule::DTracking => {
            let floor = (t as f64).sqrt() - k as f64 / 2.0;
            let forced = (0..k)
                .filter(|&a| (state.counts[a] as f64) < floor)
                .min_by_key(|&a| (state.counts[a], a));
            if let Some(a) = forced {
                return Ok(a);
            }
            let t = t as f64;
            Ok(argmax((0..k).map(|a| t * plugin[a] - state.counts[a] as f64)))
        }
    }
}

/// First index of the maximum.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
