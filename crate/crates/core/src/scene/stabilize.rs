use std::collections::VecDeque;

use crate::numerics::gaussian_kernel;

use super::vec3::{self, V3};

pub const STABILIZER_TAPS: usize = 5;
pub const STABILIZER_SIGMA: f64 = 1.0;

/// Smoothed framing of one frame: look-at center and the ratio of camera
/// distance to landmark distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Framing {
    pub center: V3,
    pub scale: f64,
}

/// Delayed Gaussian smoothing of the raw head center and scale track.
#[derive(Debug, Clone)]
pub struct StabilizerState {
    history: VecDeque<Framing>,
    weights: Vec<f64>,
}

impl Default for StabilizerState {
    fn default() -> Self {
        Self::new()
    }
}

impl StabilizerState {
    pub fn new() -> Self {
        let weights = gaussian_kernel(STABILIZER_TAPS, STABILIZER_SIGMA).expect("odd size");
        Self { history: VecDeque::with_capacity(STABILIZER_TAPS), weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Adds an observation and returns the weighted average of the last
    /// five. Before five observations exist the first one is replicated.
    pub fn push(&mut self, obs: Framing) -> Framing {
        if self.history.is_empty() {
            for _ in 0..STABILIZER_TAPS - 1 {
                self.history.push_back(obs);
            }
        }
        self.history.push_back(obs);
        while self.history.len() > STABILIZER_TAPS {
            self.history.pop_front();
        }
        let mut center = [0.0; 3];
        let mut scale = 0.0;
        for (o, &w) in self.history.iter().zip(&self.weights) {
            center = vec3::add(center, vec3::scale(o.center, w));
            scale += w * o.scale;
        }
        Framing { center, scale }
    }
}

/// Runs a fresh stabilizer over a whole track.
pub fn stabilize_track(centers: &[V3], scales: &[f64]) -> Vec<Framing> {
    let mut s = StabilizerState::new();
    centers.iter().zip(scales).map(|(&center, &scale)| s.push(Framing { center, scale })).collect()
}
