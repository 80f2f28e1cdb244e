//! Error and iteration statistics against the monolithic reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::newmark::KinematicState;

/// `‖Δu‖ + dt ‖Δv‖ + ½ dt² ‖Δa‖` between a coupled and a reference state.
pub fn step_error(coupled: &KinematicState, reference: &KinematicState, dt: f64) -> Result<f64> {
    if coupled.len() != reference.len() {
        return Err(Error::DimensionMismatch(format!(
            "coupled state has {} nodes, reference has {}",
            coupled.len(),
            reference.len()
        )));
    }
    let du = (&coupled.u - &reference.u).norm();
    let dv = (&coupled.v - &reference.v).norm();
    let da = (&coupled.a - &reference.a).norm();
    Ok(du + dt * dv + 0.5 * dt * dt * da)
}

/// Time-averaged error over recorded states `1..N_t` summed over subdomains.
///
/// Each inner slice holds one subdomain's per-state errors, including the
/// initial state at index 0, which is excluded from the sum.
pub fn average_error(per_subdomain: &[Vec<f64>]) -> Result<f64> {
    let n_t = per_subdomain.first().map_or(0, |e| e.len());
    if n_t < 2 {
        return Err(Error::InvalidConfig(format!(
            "time-averaged error needs at least two states, got {n_t}"
        )));
    }
    if per_subdomain.iter().any(|e| e.len() != n_t) {
        return Err(Error::DimensionMismatch("error series differ in length".into()));
    }
    let total: f64 = per_subdomain.iter().map(|e| e[1..].iter().sum::<f64>()).sum();
    Ok(total / (n_t - 1) as f64)
}

pub fn iteration_stats(iterations: &[usize]) -> f64 {
    if iterations.is_empty() {
        return 0.0;
    }
    iterations.iter().sum::<usize>() as f64 / iterations.len() as f64
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ErrorReport {
    pub times: Vec<f64>,
    /// Per-state error of each subdomain, initial state included.
    pub per_subdomain: [Vec<f64>; 2],
    pub eps_avg: f64,
    pub mean_iterations: f64,
    pub wall_time_s: f64,
}

impl ErrorReport {
    pub fn total(&self, k: usize) -> f64 {
        self.per_subdomain[0][k] + self.per_subdomain[1][k]
    }

    pub fn n_states(&self) -> usize {
        self.times.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn single(u: f64, v: f64, a: f64) -> KinematicState {
        KinematicState::new(
            DVector::from_vec(vec![u]),
            DVector::from_vec(vec![v]),
            DVector::from_vec(vec![a]),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn step_error_cases() {
        let s = single(1.0, 2.0, 3.0);
        assert_eq!(step_error(&s, &s, 1e-3).unwrap(), 0.0);
        let du = single(2.0, 2.0, 3.0);
        assert!((step_error(&du, &s, 1e-3).unwrap() - 1.0).abs() < 1e-15);
        let dv = single(1.0, 3.0, 3.0);
        assert!((step_error(&dv, &s, 1e-3).unwrap() - 1e-3).abs() < 1e-15);
        let wrong = KinematicState::zeros(2, 0.0);
        assert!(step_error(&wrong, &s, 1e-3).is_err());
    }

    #[test]
    fn average_error_cases() {
        let c = 0.25;
        let errs = vec![vec![9.0, c, c, c], vec![9.0, c, c, c]];
        assert!((average_error(&errs).unwrap() - 2.0 * c).abs() < 1e-15);
        assert_eq!(average_error(&[vec![0.0; 5], vec![0.0; 5]]).unwrap(), 0.0);
        assert!(average_error(&[vec![1.0]]).is_err());
    }

    #[test]
    fn iteration_means() {
        assert_eq!(iteration_stats(&[2, 2, 2]), 2.0);
        assert_eq!(iteration_stats(&[2, 3]), 2.5);
    }
}
