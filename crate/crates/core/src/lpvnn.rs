//! LPV-NN on normalized reduced-order data.
//!
//! The network predicts the state increment and output as
//! `[z̄_Δ; ȳ] = M̄_Δ(p)·[z̄; ū] + [z̄_o; ȳ_o]` with `p = μ̄(z̄, ū)`, where the
//! affine matrix function is a single linear layer `vec(M̄_Δ(p)) = W_Δ p + b_Δ`
//! and `vec` stacks columns.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nncore::{minimize, seeded, LossHistory, Matrix, Mlp, Objective, OptimizerConfig};
use crate::projection::{reciprocal_max_abs, DegeneratePolicy, ReducedDataset};

/// Column-wise reshape of `v` into a `rows × cols` matrix.
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> Result<Matrix> {
    check_len("vectorized matrix", rows * cols, v.len())?;
    let mut m = Matrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m.set(r, c, v[c * rows + r]);
        }
    }
    Ok(m)
}

/// Column-wise vectorization.
pub fn vec_of(m: &Matrix) -> Vec<f64> {
    let (rows, cols) = m.shape();
    (0..cols)
        .flat_map(|c| (0..rows).map(move |r| (r, c)))
        .map(|(r, c)| m.get(r, c))
        .collect()
}

/// Diagonal normalization gains `N_zΔ`, `N_z`, `N_u`, `N_y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSet {
    pub z_delta: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

impl ScalingSet {
    pub fn identity(n_z: usize, n_u: usize, n_y: usize) -> Self {
        ScalingSet {
            z_delta: vec![1.0; n_z],
            z: vec![1.0; n_z],
            u: vec![1.0; n_u],
            y: vec![1.0; n_y],
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_len("state-increment scaling", self.z.len(), self.z_delta.len())?;
        let all = self.z_delta.iter().chain(&self.z).chain(&self.u).chain(&self.y);
        if all.clone().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Parameter("scalings must be positive and finite".into()));
        }
        Ok(())
    }

    /// `blkdiag(N_zΔ, N_y)` diagonal.
    pub fn output_side(&self) -> Vec<f64> {
        self.z_delta.iter().chain(&self.y).copied().collect()
    }

    /// `blkdiag(N_z, N_u)` diagonal.
    pub fn input_side(&self) -> Vec<f64> {
        self.z.iter().chain(&self.u).copied().collect()
    }
}

/// `M_Δ(p) = M_Δ0 + Σ_i M_Δi p_i`, stored as `W_Δ` (column `i` is `vec(M_Δ,i+1)`)
/// and `b_Δ = vec(M_Δ0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMatrixFunction {
    pub w_delta: Matrix,
    pub b_delta: Vec<f64>,
    pub out_rows: usize,
    pub out_cols: usize,
}

impl AffineMatrixFunction {
    pub fn zeros(out_rows: usize, out_cols: usize, n_p: usize) -> Self {
        AffineMatrixFunction {
            w_delta: Matrix::zeros(out_rows * out_cols, n_p),
            b_delta: vec![0.0; out_rows * out_cols],
            out_rows,
            out_cols,
        }
    }

    /// Builds the function from `[M_Δ0, M_Δ1, …, M_Δn_p]`.
    pub fn from_coefficients(coeffs: &[Matrix]) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| Error::Parameter("at least the constant coefficient is required".into()))?;
        let (rows, cols) = first.shape();
        let n_p = coeffs.len() - 1;
        let mut a = AffineMatrixFunction::zeros(rows, cols, n_p);
        a.b_delta = vec_of(first);
        for (i, m) in coeffs[1..].iter().enumerate() {
            if m.shape() != (rows, cols) {
                return Err(Error::Parameter(format!("coefficient {} has a different shape", i + 1)));
            }
            for (k, v) in vec_of(m).into_iter().enumerate() {
                a.w_delta.set(k, i, v);
            }
        }
        Ok(a)
    }

    pub fn n_p(&self) -> usize {
        self.w_delta.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.out_rows * self.out_cols;
        check_len("affine weight rows", n, self.w_delta.rows())?;
        check_len("affine bias", n, self.b_delta.len())
    }

    /// `[M_Δ0, M_Δ1, …]`.
    pub fn coefficients(&self) -> Vec<Matrix> {
        let mut out = Vec::with_capacity(self.n_p() + 1);
        out.push(unvec(&self.b_delta, self.out_rows, self.out_cols).unwrap());
        for i in 0..self.n_p() {
            out.push(unvec(&self.w_delta.column(i), self.out_rows, self.out_cols).unwrap());
        }
        out
    }

    pub fn eval(&self, p: &[f64]) -> Result<Matrix> {
        let mut v = self.w_delta.mul_vec(p)?;
        v.iter_mut().zip(&self.b_delta).for_each(|(a, b)| *a += b);
        unvec(&v, self.out_rows, self.out_cols)
    }

    /// `M_Δ(p)·v` without forming the matrix.
    fn apply(&self, p: &[f64], v: &[f64]) -> Vec<f64> {
        let r_n = self.out_rows;
        let mut out = vec![0.0; r_n];
        for (c, vc) in v.iter().enumerate() {
            for (r, o) in out.iter_mut().enumerate() {
                let idx = c * r_n + r;
                let m = self.b_delta[idx] + crate::nncore::matrix::dot(self.w_delta.row(idx), p);
                *o += m * vc;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpvNnParams {
    pub affine: AffineMatrixFunction,
    /// `μ̄` on the normalized pair `col(z̄, ū)`.
    pub sched: Mlp,
    pub z_offset: Vec<f64>,
    pub y_offset: Vec<f64>,
    pub offsets_fixed_zero: bool,
    pub scaling: ScalingSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpvOutput {
    pub z_delta: Vec<f64>,
    pub y: Vec<f64>,
    pub p: Vec<f64>,
}

impl LpvNnParams {
    pub fn n_z(&self) -> usize {
        self.z_offset.len()
    }

    pub fn n_y(&self) -> usize {
        self.y_offset.len()
    }

    pub fn n_u(&self) -> usize {
        self.affine.out_cols - self.n_z()
    }

    pub fn n_p(&self) -> usize {
        self.affine.n_p()
    }

    pub fn validate(&self) -> Result<()> {
        self.affine.validate()?;
        self.scaling.validate()?;
        let (n_z, n_y) = (self.n_z(), self.n_y());
        check_len("affine output rows", n_z + n_y, self.affine.out_rows)?;
        if self.affine.out_cols < n_z {
            return Err(Error::shape("affine input columns", n_z, self.affine.out_cols));
        }
        check_len("scheduling input", self.affine.out_cols, self.sched.input_dim())?;
        check_len("scheduling output", self.n_p(), self.sched.output_dim())?;
        check_len("state scaling", n_z, self.scaling.z.len())?;
        check_len("input scaling", self.n_u(), self.scaling.u.len())?;
        check_len("output scaling", n_y, self.scaling.y.len())?;
        if self.offsets_fixed_zero
            && self.z_offset.iter().chain(&self.y_offset).any(|v| *v != 0.0)
        {
            return Err(Error::Parameter("offsets are fixed to zero but non-zero".into()));
        }
        Ok(())
    }

    fn offsets(&self) -> Vec<f64> {
        self.z_offset.iter().chain(&self.y_offset).copied().collect()
    }

    /// Evaluates the network on normalized `(z̄, ū)`.
    pub fn forward(&self, z: &[f64], u: &[f64]) -> Result<LpvOutput> {
        check_len("normalized state", self.n_z(), z.len())?;
        check_len("normalized input", self.n_u(), u.len())?;
        let v: Vec<f64> = z.iter().chain(u).copied().collect();
        let p = self.sched.forward(&v)?;
        let mut out = self.affine.apply(&p, &v);
        out.iter_mut().zip(self.offsets()).for_each(|(a, b)| *a += b);
        let y = out.split_off(self.n_z());
        Ok(LpvOutput { z_delta: out, y, p })
    }

    /// Trainable parameters: `W_Δ` row-major, `b_Δ`, scheduling network, then
    /// the offsets unless fixed.
    pub fn params(&self) -> Vec<f64> {
        let mut v = self.affine.w_delta.as_slice().to_vec();
        v.extend_from_slice(&self.affine.b_delta);
        v.extend(self.sched.params());
        if !self.offsets_fixed_zero {
            v.extend(self.offsets());
        }
        v
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let n_offsets = if self.offsets_fixed_zero { 0 } else { self.n_z() + self.n_y() };
        let n_w = self.affine.w_delta.rows() * self.affine.w_delta.cols();
        let n_b = self.affine.b_delta.len();
        let n_s = self.sched.num_params();
        check_len("LPV-NN parameters", n_w + n_b + n_s + n_offsets, params.len())?;
        let (w, rest) = params.split_at(n_w);
        let (b, rest) = rest.split_at(n_b);
        let (s, o) = rest.split_at(n_s);
        self.affine.w_delta.as_mut_slice().copy_from_slice(w);
        self.affine.b_delta.copy_from_slice(b);
        self.sched.set_params(s)?;
        if !self.offsets_fixed_zero {
            let n_z = self.n_z();
            self.z_offset.copy_from_slice(&o[..n_z]);
            self.y_offset.copy_from_slice(&o[n_z..]);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaRecord {
    pub z: Vec<f64>,
    pub z_delta: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

/// Normalized records `(z̄, z̄_Δ, ū, ȳ)` and the gains that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaDataset {
    pub records: Vec<DeltaRecord>,
    pub scaling: ScalingSet,
}

impl DeltaDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The raw record `k` recovered by undoing the scalings.
    pub fn denormalized(&self, k: usize) -> DeltaRecord {
        let r = &self.records[k];
        let s = &self.scaling;
        let undo = |v: &[f64], g: &[f64]| v.iter().zip(g).map(|(a, b)| a / b).collect();
        DeltaRecord {
            z: undo(&r.z, &s.z),
            z_delta: undo(&r.z_delta, &s.z_delta),
            u: undo(&r.u, &s.u),
            y: undo(&r.y, &s.y),
        }
    }
}

pub fn build_delta_dataset(dz: &ReducedDataset, policy: DegeneratePolicy) -> Result<DeltaDataset> {
    if dz.is_empty() {
        return Err(Error::Parameter("cannot build a delta dataset from no records".into()));
    }
    let raw: Vec<DeltaRecord> = dz
        .records
        .iter()
        .map(|r| {
            check_len("reduced state", dz.n_z, r.z.len())?;
            check_len("reduced next state", dz.n_z, r.z_next.len())?;
            check_len("input", dz.n_u, r.u.len())?;
            check_len("output", dz.n_y, r.y.len())?;
            Ok(DeltaRecord {
                z_delta: r.z_next.iter().zip(&r.z).map(|(a, b)| a - b).collect(),
                z: r.z.clone(),
                u: r.u.clone(),
                y: r.y.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let fit = |f: fn(&DeltaRecord) -> &Vec<f64>, dim, ctx| {
        reciprocal_max_abs(raw.iter().map(|r| f(r).clone()), dim, ctx, policy)
    };
    let scaling = ScalingSet {
        z_delta: fit(|r| &r.z_delta, dz.n_z, "state increments")?,
        z: fit(|r| &r.z, dz.n_z, "reduced states")?,
        u: fit(|r| &r.u, dz.n_u, "inputs")?,
        y: fit(|r| &r.y, dz.n_y, "outputs")?,
    };
    let apply = |v: &[f64], g: &[f64]| v.iter().zip(g).map(|(a, b)| a * b).collect();
    let records = raw
        .iter()
        .map(|r| DeltaRecord {
            z: apply(&r.z, &scaling.z),
            z_delta: apply(&r.z_delta, &scaling.z_delta),
            u: apply(&r.u, &scaling.u),
            y: apply(&r.y, &scaling.y),
        })
        .collect();
    Ok(DeltaDataset { records, scaling })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LpvConfig {
    pub n_p: usize,
    pub hidden: Vec<usize>,
    pub offsets_fixed_zero: bool,
    /// Diagonal of `Γ̂2`; identity when absent.
    pub weight: Option<Vec<f64>>,
    pub degenerate: DegeneratePolicy,
    pub optimizer: OptimizerConfig,
    /// Independent training runs from seeds `seed, seed + 1, …`; the run with
    /// the lowest loss is kept.
    pub restarts: usize,
}

impl Default for LpvConfig {
    fn default() -> Self {
        LpvConfig {
            n_p: 3,
            hidden: vec![10],
            offsets_fixed_zero: false,
            weight: None,
            degenerate: DegeneratePolicy::Warn,
            optimizer: OptimizerConfig::default(),
            restarts: 1,
        }
    }
}

impl LpvConfig {
    fn resolve_weight(&self, rows: usize) -> Result<Vec<f64>> {
        match &self.weight {
            None => Ok(vec![1.0; rows]),
            Some(w) => {
                check_len("LPV loss weight", rows, w.len())?;
                if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::Parameter("LPV loss weights must be non-negative".into()));
                }
                Ok(w.clone())
            }
        }
    }
}

/// Zero affine layer and offsets with a Glorot scheduling network.
pub fn init_params(dd: &DeltaDataset, cfg: &LpvConfig) -> Result<LpvNnParams> {
    if cfg.n_p == 0 {
        return Err(Error::Parameter("scheduling dimension must be at least 1".into()));
    }
    let (n_z, n_u, n_y) = (dd.scaling.z.len(), dd.scaling.u.len(), dd.scaling.y.len());
    let mut rng = seeded(cfg.optimizer.seed);
    let p = LpvNnParams {
        affine: AffineMatrixFunction::zeros(n_z + n_y, n_z + n_u, cfg.n_p),
        sched: Mlp::glorot(n_z + n_u, &cfg.hidden, cfg.n_p, &mut rng),
        z_offset: vec![0.0; n_z],
        y_offset: vec![0.0; n_y],
        offsets_fixed_zero: cfg.offsets_fixed_zero,
        scaling: dd.scaling.clone(),
    };
    p.validate()?;
    Ok(p)
}

struct LpvObjective<'a> {
    data: &'a DeltaDataset,
    params: LpvNnParams,
    weight: Vec<f64>,
}

impl Objective for LpvObjective<'_> {
    fn num_records(&self) -> usize {
        self.data.len()
    }

    fn evaluate(&mut self, theta: &[f64], indices: &[usize], mut grad: Option<&mut [f64]>) -> Result<f64> {
        self.params.set_params(theta)?;
        let p = &self.params;
        let a = &p.affine;
        let (r_n, n_p) = (a.out_rows, a.n_p());
        let n_w = a.w_delta.rows() * n_p;
        let n_b = a.b_delta.len();
        let n_s = p.sched.num_params();
        let offsets = p.offsets();
        let inv_n = 1.0 / indices.len() as f64;
        let mut loss = 0.0;
        let mut g = vec![0.0; r_n];
        for &k in indices {
            let rec = &self.data.records[k];
            let v: Vec<f64> = rec.z.iter().chain(&rec.u).copied().collect();
            let trace = p.sched.trace(&v)?;
            let sched_out = trace.output();
            let mut pred = a.apply(sched_out, &v);
            pred.iter_mut().zip(&offsets).for_each(|(x, o)| *x += o);
            for (r, target) in rec.z_delta.iter().chain(&rec.y).enumerate() {
                let e = target - pred[r];
                loss += self.weight[r] * e * e;
                g[r] = -2.0 * self.weight[r] * e * inv_n;
            }
            let Some(gr) = grad.as_deref_mut() else { continue };
            let (g_w, rest) = gr.split_at_mut(n_w);
            let (g_b, rest) = rest.split_at_mut(n_b);
            let (g_s, g_o) = rest.split_at_mut(n_s);
            let mut g_p = vec![0.0; n_p];
            for (c, vc) in v.iter().enumerate() {
                for (r, gr_) in g.iter().enumerate() {
                    let dm = gr_ * vc;
                    if dm == 0.0 {
                        continue;
                    }
                    let idx = c * r_n + r;
                    g_b[idx] += dm;
                    let row = a.w_delta.row(idx);
                    for i in 0..n_p {
                        g_w[idx * n_p + i] += dm * sched_out[i];
                        g_p[i] += row[i] * dm;
                    }
                }
            }
            p.sched.accumulate_gradient(&trace, &g_p, g_s)?;
            g_o.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        Ok(loss * inv_n)
    }
}

/// Mean `Γ̂2`-weighted squared residual over the dataset.
pub fn lpv_loss(params: &LpvNnParams, dd: &DeltaDataset, weight: Option<&[f64]>) -> Result<f64> {
    let rows = params.n_z() + params.n_y();
    let w = weight.map_or_else(|| vec![1.0; rows], <[f64]>::to_vec);
    check_len("LPV loss weight", rows, w.len())?;
    let mut obj = LpvObjective {
        data: dd,
        params: params.clone(),
        weight: w,
    };
    let all: Vec<usize> = (0..dd.len()).collect();
    obj.evaluate(&params.params(), &all, None)
}

/// [`lpv_loss`] together with its gradient in [`LpvNnParams::params`] order.
pub fn lpv_loss_gradient(
    params: &LpvNnParams,
    dd: &DeltaDataset,
    weight: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    let rows = params.n_z() + params.n_y();
    let w = weight.map_or_else(|| vec![1.0; rows], <[f64]>::to_vec);
    check_len("LPV loss weight", rows, w.len())?;
    let theta = params.params();
    let mut grad = vec![0.0; theta.len()];
    let mut obj = LpvObjective {
        data: dd,
        params: params.clone(),
        weight: w,
    };
    let all: Vec<usize> = (0..dd.len()).collect();
    let loss = obj.evaluate(&theta, &all, Some(&mut grad))?;
    Ok((loss, grad))
}

/// Trains from the default initialization, once per restart.
pub fn train_lpvnn(dd: &DeltaDataset, cfg: &LpvConfig) -> Result<(LpvNnParams, LossHistory)> {
    let mut best: Option<(LpvNnParams, LossHistory)> = None;
    for r in 0..cfg.restarts.max(1) {
        let mut run_cfg = cfg.clone();
        run_cfg.optimizer.seed = cfg.optimizer.seed.wrapping_add(r as u64);
        let init = init_params(dd, &run_cfg)?;
        let (params, history) = train_lpvnn_from(dd, init, &run_cfg)?;
        log::info!("LPV-NN run {r}: best loss {:e} at epoch {}", history.best_loss, history.best_epoch);
        if best.as_ref().is_none_or(|(_, h)| history.best_loss < h.best_loss) {
            best = Some((params, history));
        }
    }
    Ok(best.expect("at least one run"))
}

/// Trains starting from `init`; the architecture fields of `cfg` are ignored.
pub fn train_lpvnn_from(
    dd: &DeltaDataset,
    init: LpvNnParams,
    cfg: &LpvConfig,
) -> Result<(LpvNnParams, LossHistory)> {
    init.validate()?;
    check_len("scaling set", init.n_z(), dd.scaling.z.len())?;
    let weight = cfg.resolve_weight(init.n_z() + init.n_y())?;
    let theta = init.params();
    let mut obj = LpvObjective {
        data: dd,
        params: init,
        weight,
    };
    let (best, history) = minimize(&mut obj, theta, &cfg.optimizer)?;
    let mut params = obj.params;
    params.set_params(&best)?;
    params.scaling = dd.scaling.clone();
    Ok((params, history))
}

/// The LPV-NN expressed in raw reduced coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct DenormalizedLpv {
    /// `[M_Δ0, M_Δ1, …]`.
    pub coeffs: Vec<Matrix>,
    /// `μ(z, u) = μ̄(N_z z, N_u u)`.
    pub sched: Mlp,
    pub z_offset: Vec<f64>,
    pub y_offset: Vec<f64>,
}

pub fn denormalize_model(params: &LpvNnParams) -> Result<DenormalizedLpv> {
    params.validate()?;
    let out_s = params.scaling.output_side();
    let in_s = params.scaling.input_side();
    let coeffs = params
        .affine
        .coefficients()
        .into_iter()
        .map(|m| {
            let mut m = m;
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    m.set(r, c, m.get(r, c) * in_s[c] / out_s[r]);
                }
            }
            m
        })
        .collect();
    let mut sched = params.sched.clone();
    sched.absorb_input_scaling(&in_s)?;
    let n_z = params.n_z();
    let offsets: Vec<f64> = params.offsets().iter().zip(&out_s).map(|(o, s)| o / s).collect();
    Ok(DenormalizedLpv {
        coeffs,
        sched,
        z_offset: offsets[..n_z].to_vec(),
        y_offset: offsets[n_z..].to_vec(),
    })
}

/// Adds `[[I, 0], [0, 0]]` to the constant coefficient.
pub fn delta_to_full(coeffs: &[Matrix], n_z: usize) -> Vec<Matrix> {
    shift_identity(coeffs, n_z, 1.0)
}

pub fn full_to_delta(coeffs: &[Matrix], n_z: usize) -> Vec<Matrix> {
    shift_identity(coeffs, n_z, -1.0)
}

fn shift_identity(coeffs: &[Matrix], n_z: usize, sign: f64) -> Vec<Matrix> {
    let mut out = coeffs.to_vec();
    if let Some(m0) = out.first_mut() {
        for i in 0..n_z {
            m0.set(i, i, m0.get(i, i) + sign);
        }
    }
    out
}
