//! Reduced-order LPV model
//!
//! ```text
//! [z(k+1); y(k)] = M(p(k))·[z(k); u(k)] + [z_o; y_o],   p(k) = μ(z(k), u(k))
//! M(p) = M_0 + Σ_i M_i p_i
//! ```
//!
//! with an optional state projection to move between full and reduced states,
//! and JSON persistence.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{check_len, Error, Result};
use crate::lpvnn::{delta_to_full, denormalize_model, LpvNnParams, ScalingSet};
use crate::nncore::{Matrix, Mlp};
use crate::projection::{ReducedDataset, StateProjection};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub n_z: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub n_p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_x: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolpvModel {
    coeffs: Vec<Matrix>,
    sched: Mlp,
    z_offset: Vec<f64>,
    y_offset: Vec<f64>,
    dims: ModelDims,
    projection: Option<StateProjection>,
    scaling: Option<ScalingSet>,
}

/// Trajectory produced by [`RolpvModel::simulate`]: `z` has one more entry than
/// `y` and `p` because it includes the initial state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Simulation {
    pub z: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
}

impl RolpvModel {
    /// `coeffs` is `[M_0, M_1, …, M_n_p]` in full (not delta) form.
    pub fn new(
        coeffs: Vec<Matrix>,
        sched: Mlp,
        z_offset: Vec<f64>,
        y_offset: Vec<f64>,
        projection: Option<StateProjection>,
    ) -> Result<Self> {
        let n_z = z_offset.len();
        let n_y = y_offset.len();
        let first = coeffs
            .first()
            .ok_or_else(|| Error::Model("at least one coefficient matrix is required".into()))?;
        let n_u = first.cols().checked_sub(n_z).ok_or_else(|| {
            Error::shape("coefficient columns", n_z, first.cols())
        })?;
        let dims = ModelDims {
            n_z,
            n_u,
            n_y,
            n_p: coeffs.len() - 1,
            n_x: projection.as_ref().map(StateProjection::full_dim),
        };
        let m = RolpvModel {
            coeffs,
            sched,
            z_offset,
            y_offset,
            dims,
            projection,
            scaling: None,
        };
        m.validate()?;
        Ok(m)
    }

    /// Denormalizes a trained LPV-NN and shifts it to full form. The scalings are
    /// kept so the training objective can be re-evaluated on raw data.
    pub fn from_lpvnn(params: &LpvNnParams, projection: Option<StateProjection>) -> Result<Self> {
        let d = denormalize_model(params)?;
        let coeffs = delta_to_full(&d.coeffs, params.n_z());
        let mut m = RolpvModel::new(coeffs, d.sched, d.z_offset, d.y_offset, projection)?;
        m.scaling = Some(params.scaling.clone());
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let ModelDims { n_z, n_u, n_y, n_p, n_x } = self.dims;
        check_len("coefficient count", n_p + 1, self.coeffs.len())?;
        for m in &self.coeffs {
            check_len("coefficient rows", n_z + n_y, m.rows())?;
            check_len("coefficient columns", n_z + n_u, m.cols())?;
        }
        check_len("scheduling input", n_z + n_u, self.sched.input_dim())?;
        check_len("scheduling output", n_p, self.sched.output_dim())?;
        check_len("state offset", n_z, self.z_offset.len())?;
        check_len("output offset", n_y, self.y_offset.len())?;
        match (&self.projection, n_x) {
            (Some(p), Some(n_x)) => {
                check_len("projection full dimension", n_x, p.full_dim())?;
                check_len("projection reduced dimension", n_z, p.reduced_dim())?;
            }
            (None, None) => {}
            (Some(_), None) | (None, Some(_)) => {
                return Err(Error::Model("n_x must be given exactly when a projection is present".into()))
            }
        }
        if let Some(s) = &self.scaling {
            s.validate()?;
            check_len("state scaling", n_z, s.z.len())?;
            check_len("input scaling", n_u, s.u.len())?;
            check_len("output scaling", n_y, s.y.len())?;
        }
        Ok(())
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn coefficients(&self) -> &[Matrix] {
        &self.coeffs
    }

    pub fn scheduling_map(&self) -> &Mlp {
        &self.sched
    }

    pub fn z_offset(&self) -> &[f64] {
        &self.z_offset
    }

    pub fn y_offset(&self) -> &[f64] {
        &self.y_offset
    }

    pub fn projection(&self) -> Option<&StateProjection> {
        self.projection.as_ref()
    }

    pub fn scaling(&self) -> Option<&ScalingSet> {
        self.scaling.as_ref()
    }

    fn require_projection(&self) -> Result<&StateProjection> {
        self.projection
            .as_ref()
            .ok_or_else(|| Error::Config("model has no state projection".into()))
    }

    pub fn scheduling(&self, z: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_len("reduced state", self.dims.n_z, z.len())?;
        check_len("input", self.dims.n_u, u.len())?;
        let v: Vec<f64> = z.iter().chain(u).copied().collect();
        self.sched.forward(&v)
    }

    /// `M(p)`.
    pub fn matrix_at(&self, p: &[f64]) -> Result<Matrix> {
        check_len("scheduling variable", self.dims.n_p, p.len())?;
        let mut m = self.coeffs[0].clone();
        for (mi, pi) in self.coeffs[1..].iter().zip(p) {
            for (a, b) in m.as_mut_slice().iter_mut().zip(mi.as_slice()) {
                *a += b * pi;
            }
        }
        Ok(m)
    }

    fn step_full(&self, z: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let p = self.scheduling(z, u)?;
        let v: Vec<f64> = z.iter().chain(u).copied().collect();
        let mut out = self.matrix_at(&p)?.mul_vec(&v)?;
        out.iter_mut()
            .zip(self.z_offset.iter().chain(&self.y_offset))
            .for_each(|(a, b)| *a += b);
        let y = out.split_off(self.dims.n_z);
        Ok((out, y, p))
    }

    /// One step of the model; a non-finite result is reported as
    /// [`Error::Instability`] at step 0.
    pub fn step(&self, z: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (z_next, y, _) = self.step_full(z, u)?;
        if z_next.iter().chain(&y).any(|v| !v.is_finite()) {
            let values = z_next.iter().chain(&y).copied().collect();
            log::warn!("model step produced non-finite values");
            return Err(Error::Instability { step: 0, values });
        }
        Ok((z_next, y))
    }

    /// Runs the model from `z0` and stops at the first non-finite step. The
    /// trajectory computed so far is returned together with the error.
    pub fn simulate_partial(&self, inputs: &[Vec<f64>], z0: &[f64]) -> (Simulation, Option<Error>) {
        let mut sim = Simulation {
            z: vec![z0.to_vec()],
            ..Simulation::default()
        };
        if let Err(e) = check_len("initial state", self.dims.n_z, z0.len()) {
            return (sim, Some(e));
        }
        let mut z = z0.to_vec();
        for (k, u) in inputs.iter().enumerate() {
            let (z_next, y, p) = match self.step_full(&z, u) {
                Ok(v) => v,
                Err(e) => return (sim, Some(e)),
            };
            if z_next.iter().chain(&y).any(|v| !v.is_finite()) {
                let values = z_next.iter().chain(&y).copied().collect();
                log::warn!("simulation became non-finite at step {k}");
                return (sim, Some(Error::Instability { step: k, values }));
            }
            sim.y.push(y);
            sim.p.push(p);
            sim.z.push(z_next.clone());
            z = z_next;
        }
        (sim, None)
    }

    pub fn simulate(&self, inputs: &[Vec<f64>], z0: &[f64]) -> Result<Simulation> {
        if inputs.is_empty() {
            return Err(Error::Parameter("input trajectory is empty".into()));
        }
        match self.simulate_partial(inputs, z0) {
            (sim, None) => Ok(sim),
            (_, Some(e)) => Err(e),
        }
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.require_projection()?.encode(x)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.require_projection()?.decode(z)
    }

    /// `x̂⁺ = ψ†(z⁺)` and `ŷ` with `(z⁺, ŷ) = step(ψ(x), u)`.
    pub fn predict_one_step(&self, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let proj = self.require_projection()?;
        let (z_next, y) = self.step(&proj.encode(x)?, u)?;
        Ok((proj.decode(&z_next)?, y))
    }

    /// One-step-ahead cost `(1/N) Σ ‖[x⁺; y] − [x̂⁺; ŷ]‖²_Γ` with `Γ = diag(weight)`.
    pub fn evaluate_cost_j(&self, d: &Dataset, weight: &[f64]) -> Result<f64> {
        let proj = self.require_projection()?;
        check_len("dataset state dimension", proj.full_dim(), d.dims.n_x)?;
        check_len("cost weight", d.dims.n_x + d.dims.n_y, weight.len())?;
        if weight.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Parameter("cost weight must be non-negative".into()));
        }
        if d.is_empty() {
            return Err(Error::Parameter("cost of an empty dataset".into()));
        }
        let mut total = 0.0;
        for r in &d.records {
            let (x_hat, y_hat) = self.predict_one_step(&r.x, &r.u)?;
            total += r
                .x_next
                .iter()
                .chain(&r.y)
                .zip(x_hat.iter().chain(&y_hat))
                .zip(weight)
                .map(|((a, b), w)| w * (a - b) * (a - b))
                .sum::<f64>();
        }
        Ok(total / d.len() as f64)
    }

    /// The normalized delta-form training objective re-evaluated with the raw
    /// model on raw reduced data, using the stored scalings.
    pub fn normalized_delta_loss(&self, dz: &ReducedDataset, weight: Option<&[f64]>) -> Result<f64> {
        let s = self
            .scaling
            .as_ref()
            .ok_or_else(|| Error::Config("model carries no training scalings".into()))?;
        let rows = self.dims.n_z + self.dims.n_y;
        let w = weight.map_or_else(|| vec![1.0; rows], <[f64]>::to_vec);
        check_len("loss weight", rows, w.len())?;
        if dz.is_empty() {
            return Err(Error::Parameter("loss of an empty dataset".into()));
        }
        let out_s = s.output_side();
        let mut total = 0.0;
        for r in &dz.records {
            let (z_next, y, _) = self.step_full(&r.z, &r.u)?;
            let target = r.z_next.iter().zip(&r.z).map(|(a, b)| a - b).chain(r.y.iter().copied());
            let pred = z_next.iter().zip(&r.z).map(|(a, b)| a - b).chain(y);
            total += target
                .zip(pred)
                .zip(&out_s)
                .zip(&w)
                .map(|(((t, p), g), w)| {
                    let e = g * t - g * p;
                    w * e * e
                })
                .sum::<f64>();
        }
        Ok(total / dz.len() as f64)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    schema_version: u32,
    dims: ModelDims,
    coeffs: Vec<Matrix>,
    sched: Mlp,
    z_offset: Vec<f64>,
    y_offset: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    projection: Option<StateProjection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaling: Option<ScalingSet>,
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        message: e.to_string(),
    }
}

pub fn model_to_json(m: &RolpvModel) -> Result<String> {
    let doc = ModelDoc {
        schema_version: SCHEMA_VERSION,
        dims: m.dims,
        coeffs: m.coeffs.clone(),
        sched: m.sched.clone(),
        z_offset: m.z_offset.clone(),
        y_offset: m.y_offset.clone(),
        projection: m.projection.clone(),
        scaling: m.scaling.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn model_from_json(text: &str) -> Result<RolpvModel> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(parse_error)?;
    match raw.get("schema_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(Error::Model(format!(
                "unsupported schema version {v} (expected {SCHEMA_VERSION})"
            )))
        }
        None => return Err(Error::Model("missing schema_version".into())),
    }
    let doc: ModelDoc = serde_json::from_str(text).map_err(parse_error)?;
    let mut m = RolpvModel::new(doc.coeffs, doc.sched, doc.z_offset, doc.y_offset, doc.projection)?;
    if m.dims != doc.dims {
        return Err(Error::Model(format!(
            "declared dims {:?} are inconsistent with the stored arrays {:?}",
            doc.dims, m.dims
        )));
    }
    m.scaling = doc.scaling;
    m.validate()?;
    Ok(m)
}

pub fn save_model(m: &RolpvModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_json(m)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RolpvModel> {
    model_from_json(&fs::read_to_string(path)?)
}
