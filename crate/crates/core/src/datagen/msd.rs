//! Chain of masses coupled by cubic-hardening springs and linear dampers.
//!
//! ```text
//!  wall ─k,c─ m₁ ─k,c─ m₂ ─k,c─ ⋯ ─k,c─ mₙ
//!             ↑ u
//! ```
//!
//! Element `i` joins mass `i − 1` (the wall for `i = 1`) to mass `i` and
//! exerts `k·δ + k₃·δ³ + c·δ̇` for elongation `δ`. The force input acts on the
//! first mass and the output is its position. The state is
//! `(q₁, …, qₙ, q̇₁, …, q̇ₙ)`.

use serde::{Deserialize, Serialize};

use super::system::{ContinuousSystem, Dims};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsdParams {
    pub mass: f64,
    pub linear_stiffness: f64,
    pub cubic_stiffness: f64,
    pub damping: f64,
}

impl Default for MsdParams {
    fn default() -> Self {
        MsdParams {
            mass: 1.0,
            linear_stiffness: 1.0,
            cubic_stiffness: 1.0,
            damping: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MsdChain {
    n_masses: usize,
    params: MsdParams,
    name: String,
}

pub fn msd_chain(n_masses: usize, params: MsdParams) -> Result<MsdChain> {
    if n_masses == 0 {
        return Err(Error::Parameter("chain needs at least one mass".into()));
    }
    if !(params.mass > 0.0) {
        return Err(Error::Parameter("mass must be positive".into()));
    }
    if params.linear_stiffness < 0.0 || params.cubic_stiffness < 0.0 || params.damping < 0.0 {
        return Err(Error::Parameter(
            "stiffness and damping must be non-negative".into(),
        ));
    }
    Ok(MsdChain {
        n_masses,
        params,
        name: format!("msd_chain_{n_masses}"),
    })
}

impl MsdChain {
    pub fn n_masses(&self) -> usize {
        self.n_masses
    }

    pub fn params(&self) -> MsdParams {
        self.params
    }

    fn elongations<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = (f64, f64)> + 'a {
        let n = self.n_masses;
        (0..n).map(move |i| {
            let (q_prev, v_prev) = if i == 0 { (0.0, 0.0) } else { (x[i - 1], x[n + i - 1]) };
            (x[i] - q_prev, x[n + i] - v_prev)
        })
    }

    /// Kinetic plus spring potential energy.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let n = self.n_masses;
        let MsdParams {
            mass,
            linear_stiffness: k,
            cubic_stiffness: k3,
            ..
        } = self.params;
        let kinetic: f64 = x[n..].iter().map(|v| 0.5 * mass * v * v).sum();
        let potential: f64 = self
            .elongations(x)
            .map(|(d, _)| 0.5 * k * d * d + 0.25 * k3 * d.powi(4))
            .sum();
        kinetic + potential
    }
}

impl ContinuousSystem for MsdChain {
    fn name(&self) -> &str {
        &self.name
    }

    fn dims(&self) -> Dims {
        Dims {
            n_x: 2 * self.n_masses,
            n_u: 1,
            n_y: 1,
        }
    }

    fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let n = self.n_masses;
        let MsdParams {
            mass,
            linear_stiffness: k,
            cubic_stiffness: k3,
            damping: c,
        } = self.params;
        let tension: Vec<f64> = self
            .elongations(x)
            .map(|(d, dd)| k * d + k3 * d * d * d + c * dd)
            .collect();
        let mut dx = vec![0.0; 2 * n];
        dx[..n].copy_from_slice(&x[n..]);
        for i in 0..n {
            let next = if i + 1 < n { tension[i + 1] } else { 0.0 };
            let force = next - tension[i] + if i == 0 { u[0] } else { 0.0 };
            dx[n + i] = force / mass;
        }
        dx
    }

    fn output(&self, x: &[f64], _u: &[f64]) -> Vec<f64> {
        vec![x[0]]
    }
}
