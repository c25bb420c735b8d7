//! Time derivatives of sampled trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::pde::fd_first_derivative;
use crate::systems::Trajectory;

/// Finite-difference differentiator.
///
/// `Smoothed` applies a centered boxcar of length `window` (shrunk
/// symmetrically near the ends) before differencing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Differentiator {
    Centered,
    Smoothed { window: usize },
}

impl Differentiator {
    pub fn smoothed(window: usize) -> Result<Self> {
        if window < 3 || window.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("smoothing window must be odd and >= 3, got {window}")));
        }
        Ok(Differentiator::Smoothed { window })
    }

    fn min_samples(&self) -> usize {
        match self {
            Differentiator::Centered => 3,
            Differentiator::Smoothed { window } => window + 2,
        }
    }
}

/// Centered moving average; near the ends the half-width shrinks to the
/// distance from the boundary so the window stays symmetric.
pub fn moving_average(line: &[f64], window: usize) -> Vec<f64> {
    let n = line.len();
    let half = window / 2;
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + line[i];
    }
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            (prefix[i + h + 1] - prefix[i - h]) / (2 * h + 1) as f64
        })
        .collect()
}

/// States as the differentiator sees them: the moving average for
/// `Smoothed`, the raw samples otherwise. Libraries paired with smoothed
/// derivatives are evaluated on these.
pub fn smooth(traj: &Trajectory, diff: Differentiator) -> Trajectory {
    match diff {
        Differentiator::Centered => traj.clone(),
        Differentiator::Smoothed { window } => {
            let mut out = traj.clone();
            for j in 0..traj.dim() {
                let col: Vec<f64> = traj.states.column(j).iter().copied().collect();
                out.states.column_mut(j).copy_from_slice(&moving_average(&col, window));
            }
            out
        }
    }
}

/// Differentiate every state column, returning an `n × d` matrix.
pub fn differentiate(traj: &Trajectory, diff: Differentiator) -> Result<Matrix> {
    let n = traj.len();
    if let Differentiator::Smoothed { window } = diff {
        if window < 3 || window % 2 == 0 {
            return Err(Error::InvalidArgument(format!("smoothing window must be odd and >= 3, got {window}")));
        }
    }
    if n < diff.min_samples() {
        return Err(Error::TooFewSamples { needed: diff.min_samples(), got: n });
    }
    let mut out = Matrix::zeros(n, traj.dim());
    for j in 0..traj.dim() {
        let col: Vec<f64> = traj.states.column(j).iter().copied().collect();
        let smoothed = match diff {
            Differentiator::Centered => col,
            Differentiator::Smoothed { window } => moving_average(&col, window),
        };
        let d = fd_first_derivative(&smoothed, traj.dt);
        out.column_mut(j).copy_from_slice(&d);
    }
    Ok(out)
}
