//! Latent MAP estimation by gradient ascent with backtracking.

use log::warn;

use super::{log_posterior_and_grad, PosteriorEvaluation, PosteriorTarget};
use crate::error::{Error, Result};
use crate::numerics::RealArray;

#[derive(Clone, Debug, PartialEq)]
pub struct MapResult {
    pub z: RealArray,
    pub evaluation: PosteriorEvaluation,
    /// Log-posterior after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
    /// Set when no step size down to the floor improved the objective.
    pub stagnated: bool,
}

/// Ascends `log p(z|y)` from `z_init` for up to `steps` iterations.
///
/// Each step tries `z + η∇`; on a decrease `η` is halved until the objective does not
/// decrease or `η` falls below `1e-12·step_size`. After a successful step `η` grows by 1.5.
pub fn map_estimate(target: &PosteriorTarget, z_init: &RealArray, steps: usize, step_size: f64) -> Result<MapResult> {
    if steps == 0 {
        return Err(Error::InvalidArgument("MAP estimation needs at least one step".into()));
    }
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {step_size}")));
    }
    let mut z = z_init.clone();
    let mut eval = log_posterior_and_grad(target, &z)?;
    let mut trace = vec![eval.log_post];
    let mut eta = step_size;
    let floor = 1e-12 * step_size;
    let mut stagnated = false;
    for _ in 0..steps {
        if eval.grad.data().iter().all(|&g| g == 0.0) {
            break;
        }
        let mut improved = false;
        while eta >= floor {
            let candidate = z.zip_map(&eval.grad, |a, g| a + eta * g)?;
            match log_posterior_and_grad(target, &candidate) {
                Ok(next) if next.log_post >= eval.log_post && next.log_post.is_finite() => {
                    let moved = candidate != z;
                    z = candidate;
                    eval = next;
                    trace.push(eval.log_post);
                    eta *= 1.5;
                    improved = moved;
                    break;
                }
                Ok(_) | Err(Error::NumericalFailure { .. }) | Err(Error::DegenerateScale) => eta *= 0.5,
                Err(e) => return Err(e),
            }
        }
        if !improved {
            stagnated = eta < floor;
            if stagnated {
                warn!("MAP ascent stagnated at log-posterior {:.6e}", eval.log_post);
            }
            break;
        }
    }
    Ok(MapResult { z, evaluation: eval, trace, stagnated })
}
