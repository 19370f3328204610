//! State projection `ψ(x) = Qᵀx + Λx(𝒩x(x))` and inverse
//! `ψ†(z) = Qz + 𝒩x⁻¹(Λz(z))`.
//!
//! `Q` holds the leading left singular vectors of the raw state data matrix,
//! `𝒩x(x) = Nx·(x − x_mean)` maps the data into `[−1, 1]`, and `Λx`, `Λz` are
//! small tanh networks trained to reduce the reconstruction cost
//! `J1 = (1/N) Σ ‖x − ψ†(ψ(x))‖²_Γ1` with `Q` and `𝒩x` frozen.
//!
//! The output layers of both networks start at zero, so before training
//! `ψ(x) = Qᵀx` and `ψ†(z) = Qz + x_mean`.

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{check_len, Error, Result};
use crate::nncore::{minimize, seeded, svd_thin, LossHistory, Matrix, Mlp, Objective, OptimizerConfig};

/// Maximum deviation of `QᵀQ` from the identity accepted for a basis.
pub const SEMI_ORTHOGONAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneratePolicy {
    /// Use scale 1 for a zero-range channel and log a warning.
    #[default]
    Warn,
    Error,
}

/// Per-channel reciprocal max-abs scalings of `data`, with zero-range channels
/// handled per `policy`.
pub(crate) fn reciprocal_max_abs(
    data: impl Iterator<Item = Vec<f64>>,
    dim: usize,
    context: &str,
    policy: DegeneratePolicy,
) -> Result<Vec<f64>> {
    let mut peak = vec![0.0f64; dim];
    for v in data {
        check_len(context, dim, v.len())?;
        peak.iter_mut().zip(&v).for_each(|(p, x)| *p = p.max(x.abs()));
    }
    peak.iter()
        .enumerate()
        .map(|(c, &p)| {
            if p > 0.0 && p.is_finite() {
                Ok(1.0 / p)
            } else {
                match policy {
                    DegeneratePolicy::Warn => {
                        log::warn!("{context}: channel {c} has zero range, using unit scale");
                        Ok(1.0)
                    }
                    DegeneratePolicy::Error => Err(Error::DegenerateChannel {
                        context: context.into(),
                        channel: c,
                    }),
                }
            }
        })
        .collect()
}

/// `𝒩x(x) = diag(scale)·(x − center)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormalizerDoc", into = "NormalizerDoc")]
pub struct Normalizer {
    scale: Vec<f64>,
    center: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NormalizerDoc {
    scale: Vec<f64>,
    center: Vec<f64>,
}

impl TryFrom<NormalizerDoc> for Normalizer {
    type Error = Error;
    fn try_from(d: NormalizerDoc) -> Result<Self> {
        Normalizer::new(d.scale, d.center)
    }
}

impl From<Normalizer> for NormalizerDoc {
    fn from(n: Normalizer) -> Self {
        NormalizerDoc {
            scale: n.scale,
            center: n.center,
        }
    }
}

impl Normalizer {
    pub fn new(scale: Vec<f64>, center: Vec<f64>) -> Result<Self> {
        check_len("normalizer center", scale.len(), center.len())?;
        if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Parameter("normalizer scales must be positive and finite".into()));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("normalizer center".into()));
        }
        Ok(Normalizer { scale, center })
    }

    pub fn identity(dim: usize) -> Self {
        Normalizer {
            scale: vec![1.0; dim],
            center: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.center)
            .zip(&self.scale)
            .map(|((x, c), s)| s * (x - c))
            .collect()
    }

    pub fn denormalize(&self, xn: &[f64]) -> Vec<f64> {
        xn.iter()
            .zip(&self.center)
            .zip(&self.scale)
            .map(|((x, c), s)| x / s + c)
            .collect()
    }
}

/// Centers on the sample mean and scales each channel by the reciprocal of its
/// largest absolute deviation from the mean.
pub fn fit_normalizer(states: &[Vec<f64>], policy: DegeneratePolicy) -> Result<Normalizer> {
    let first = states
        .first()
        .ok_or_else(|| Error::Parameter("cannot fit a normalizer to no data".into()))?;
    let dim = first.len();
    let mut center = vec![0.0; dim];
    for x in states {
        check_len("state sample", dim, x.len())?;
        center.iter_mut().zip(x).for_each(|(c, v)| *c += v);
    }
    center.iter_mut().for_each(|c| *c /= states.len() as f64);
    let scale = reciprocal_max_abs(
        states
            .iter()
            .map(|x| x.iter().zip(&center).map(|(v, c)| v - c).collect()),
        dim,
        "state normalization",
        policy,
    )?;
    Normalizer::new(scale, center)
}

/// Leading `n_z` left singular vectors of the `n_x × N` raw state matrix, and
/// the full singular value spectrum.
pub fn compute_pca_basis(states: &[Vec<f64>], n_z: usize) -> Result<(Matrix, Vec<f64>)> {
    let n = states.len();
    let n_x = states.first().map_or(0, Vec::len);
    if n_z == 0 || n_z >= n_x || n_z > n {
        return Err(Error::Parameter(format!(
            "reduced dimension {n_z} must satisfy 1 ≤ n_z < n_x = {n_x} and n_z ≤ N = {n}"
        )));
    }
    let mut x = Matrix::zeros(n_x, n);
    for (k, s) in states.iter().enumerate() {
        check_len(&format!("state sample {k}"), n_x, s.len())?;
        for (i, v) in s.iter().enumerate() {
            x.set(i, k, *v);
        }
    }
    let svd = svd_thin(&x)?;
    let cols: Vec<Vec<f64>> = (0..n_z).map(|j| svd.u.column(j)).collect();
    Ok((Matrix::from_columns(n_x, &cols)?, svd.s))
}

/// Diagonal weight of the reconstruction cost.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionWeight {
    /// `Γ1 = √Nx`.
    #[default]
    SqrtScale,
    Identity,
    Diagonal(Vec<f64>),
}

impl ReconstructionWeight {
    pub fn resolve(&self, normalizer: &Normalizer) -> Result<Vec<f64>> {
        let w = match self {
            ReconstructionWeight::SqrtScale => normalizer.scale().iter().map(|s| s.sqrt()).collect(),
            ReconstructionWeight::Identity => vec![1.0; normalizer.dim()],
            ReconstructionWeight::Diagonal(d) => {
                check_len("reconstruction weight", normalizer.dim(), d.len())?;
                d.clone()
            }
        };
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Parameter("reconstruction weights must be non-negative".into()));
        }
        Ok(w)
    }
}

/// Reconstruction cost `J1` in its squared (trained) and plain-norm forms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionCost {
    /// `(1/N) Σ ‖r‖²_Γ1`
    pub squared: f64,
    /// `(1/N) Σ ‖r‖_Γ1`
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProjectionDoc", into = "ProjectionDoc")]
pub struct StateProjection {
    basis: Matrix,
    encoder: Mlp,
    decoder: Mlp,
    normalizer: Normalizer,
    linear_only: bool,
}

#[derive(Serialize, Deserialize)]
struct ProjectionDoc {
    #[serde(rename = "Q")]
    basis: Matrix,
    encoder: Mlp,
    decoder: Mlp,
    normalizer: Normalizer,
    linear_only: bool,
}

impl TryFrom<ProjectionDoc> for StateProjection {
    type Error = Error;
    fn try_from(d: ProjectionDoc) -> Result<Self> {
        StateProjection::new(d.basis, d.encoder, d.decoder, d.normalizer, d.linear_only)
    }
}

impl From<StateProjection> for ProjectionDoc {
    fn from(p: StateProjection) -> Self {
        ProjectionDoc {
            basis: p.basis,
            encoder: p.encoder,
            decoder: p.decoder,
            normalizer: p.normalizer,
            linear_only: p.linear_only,
        }
    }
}

impl StateProjection {
    pub fn new(
        basis: Matrix,
        encoder: Mlp,
        decoder: Mlp,
        normalizer: Normalizer,
        linear_only: bool,
    ) -> Result<Self> {
        let (n_x, n_z) = basis.shape();
        if n_z == 0 || n_z >= n_x {
            return Err(Error::Parameter(format!(
                "basis must be tall with 1 ≤ n_z < n_x, got {n_x}×{n_z}"
            )));
        }
        let gram = basis.transpose().matmul(&basis)?;
        let dev = gram.max_abs_diff(&Matrix::identity(n_z));
        if dev > SEMI_ORTHOGONAL_TOL {
            return Err(Error::Parameter(format!(
                "basis is not semi-orthogonal (max |QᵀQ − I| = {dev:e})"
            )));
        }
        check_len("encoder input", n_x, encoder.input_dim())?;
        check_len("encoder output", n_z, encoder.output_dim())?;
        check_len("decoder input", n_z, decoder.input_dim())?;
        check_len("decoder output", n_x, decoder.output_dim())?;
        check_len("normalizer dimension", n_x, normalizer.dim())?;
        if linear_only && !(encoder.is_zero_map() && decoder.is_zero_map()) {
            return Err(Error::Parameter(
                "a linear-only projection must carry zero networks".into(),
            ));
        }
        Ok(StateProjection {
            basis,
            encoder,
            decoder,
            normalizer,
            linear_only,
        })
    }

    /// Pure PCA projection `ψ(x) = Qᵀx`, `ψ†(z) = Qz`.
    pub fn linear(basis: Matrix, normalizer: Normalizer) -> Result<Self> {
        let (n_x, n_z) = basis.shape();
        StateProjection::new(
            basis,
            Mlp::zeros(n_x, &[], n_z),
            Mlp::zeros(n_z, &[], n_x),
            normalizer,
            true,
        )
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn linear_only(&self) -> bool {
        self.linear_only
    }

    pub fn full_dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn reduced_dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("encode input", self.full_dim(), x.len())?;
        let mut z = self.basis.tr_mul_vec(x)?;
        if !self.linear_only {
            let corr = self.encoder.forward(&self.normalizer.normalize(x))?;
            z.iter_mut().zip(corr).for_each(|(a, b)| *a += b);
        }
        Ok(z)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("decode input", self.reduced_dim(), z.len())?;
        let mut x = self.basis.mul_vec(z)?;
        if !self.linear_only {
            let corr = self.normalizer.denormalize(&self.decoder.forward(z)?);
            x.iter_mut().zip(corr).for_each(|(a, b)| *a += b);
        }
        Ok(x)
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.encode(x)?)
    }

    pub fn reconstruction_cost(&self, states: &[Vec<f64>], weight: &[f64]) -> Result<ReconstructionCost> {
        check_len("reconstruction weight", self.full_dim(), weight.len())?;
        if states.is_empty() {
            return Err(Error::Parameter("reconstruction cost of no data".into()));
        }
        let (mut sq, mut nrm) = (0.0, 0.0);
        for x in states {
            let xr = self.reconstruct(x)?;
            let w: f64 = x
                .iter()
                .zip(&xr)
                .zip(weight)
                .map(|((a, b), g)| g * (a - b) * (a - b))
                .sum();
            sq += w;
            nrm += w.sqrt();
        }
        let n = states.len() as f64;
        Ok(ReconstructionCost {
            squared: sq / n,
            norm: nrm / n,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    pub n_z: usize,
    /// Hidden tanh widths shared by encoder and decoder.
    pub hidden: Vec<usize>,
    pub linear_only: bool,
    pub weight: ReconstructionWeight,
    pub degenerate: DegeneratePolicy,
    pub optimizer: OptimizerConfig,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            n_z: 1,
            hidden: vec![10],
            linear_only: false,
            weight: ReconstructionWeight::SqrtScale,
            degenerate: DegeneratePolicy::Warn,
            optimizer: OptimizerConfig::default(),
        }
    }
}

struct ReconstructionObjective<'a> {
    states: &'a [Vec<f64>],
    normalized: Vec<Vec<f64>>,
    projection: StateProjection,
    weight: Vec<f64>,
}

impl Objective for ReconstructionObjective<'_> {
    fn num_records(&self) -> usize {
        self.states.len()
    }

    fn evaluate(&mut self, params: &[f64], indices: &[usize], mut grad: Option<&mut [f64]>) -> Result<f64> {
        let p = &mut self.projection;
        let n_enc = p.encoder.num_params();
        p.encoder.set_params(&params[..n_enc])?;
        p.decoder.set_params(&params[n_enc..])?;
        let inv_n = 1.0 / indices.len() as f64;
        let scale = p.normalizer.scale().to_vec();
        let center = p.normalizer.center().to_vec();
        let mut loss = 0.0;
        for &k in indices {
            let x = &self.states[k];
            let enc_trace = p.encoder.trace(&self.normalized[k])?;
            let mut z = p.basis.tr_mul_vec(x)?;
            z.iter_mut().zip(enc_trace.output()).for_each(|(a, b)| *a += b);
            let dec_trace = p.decoder.trace(&z)?;
            let qz = p.basis.mul_vec(&z)?;
            let mut g_x = vec![0.0; x.len()];
            for i in 0..x.len() {
                let xr = qz[i] + dec_trace.output()[i] / scale[i] + center[i];
                let r = x[i] - xr;
                loss += self.weight[i] * r * r;
                g_x[i] = -2.0 * self.weight[i] * r * inv_n;
            }
            if let Some(g) = grad.as_deref_mut() {
                let (g_enc, g_dec) = g.split_at_mut(n_enc);
                let g_dec_out: Vec<f64> = g_x.iter().zip(&scale).map(|(a, s)| a / s).collect();
                let mut g_z = p.decoder.accumulate_gradient(&dec_trace, &g_dec_out, g_dec)?;
                for (j, gz) in g_z.iter_mut().enumerate() {
                    *gz += (0..x.len()).map(|i| p.basis.get(i, j) * g_x[i]).sum::<f64>();
                }
                p.encoder.accumulate_gradient(&enc_trace, &g_z, g_enc)?;
            }
        }
        Ok(loss * inv_n)
    }
}

/// Fits the normalizer and PCA basis, then trains the autoencoder correction
/// on the squared reconstruction cost. With `linear_only` the networks stay zero
/// and no training runs; the history then holds the single PCA cost.
pub fn train_projection(
    states: &[Vec<f64>],
    cfg: &ProjectionConfig,
) -> Result<(StateProjection, LossHistory)> {
    let normalizer = fit_normalizer(states, cfg.degenerate)?;
    let (basis, _) = compute_pca_basis(states, cfg.n_z)?;
    let n_x = basis.rows();
    let weight = cfg.weight.resolve(&normalizer)?;

    if cfg.linear_only {
        let mut encoder = Mlp::zeros(n_x, &cfg.hidden, cfg.n_z);
        let mut decoder = Mlp::zeros(cfg.n_z, &cfg.hidden, n_x);
        encoder.zero_output_layer();
        decoder.zero_output_layer();
        let p = StateProjection::new(basis, encoder, decoder, normalizer, true)?;
        let j1 = p.reconstruction_cost(states, &weight)?.squared;
        return Ok((
            p,
            LossHistory {
                losses: vec![j1],
                best_epoch: 0,
                best_loss: j1,
            },
        ));
    }

    let mut rng = seeded(cfg.optimizer.seed);
    let mut encoder = Mlp::glorot(n_x, &cfg.hidden, cfg.n_z, &mut rng);
    let mut decoder = Mlp::glorot(cfg.n_z, &cfg.hidden, n_x, &mut rng);
    encoder.zero_output_layer();
    decoder.zero_output_layer();
    let projection = StateProjection::new(basis, encoder, decoder, normalizer, false)?;
    let mut params = projection.encoder.params();
    params.extend(projection.decoder.params());
    let n_enc = projection.encoder.num_params();

    let normalized = states
        .iter()
        .map(|x| projection.normalizer.normalize(x))
        .collect();
    let mut objective = ReconstructionObjective {
        states,
        normalized,
        projection,
        weight,
    };
    let (best, history) = minimize(&mut objective, params, &cfg.optimizer)?;
    let mut p = objective.projection;
    p.encoder.set_params(&best[..n_enc])?;
    p.decoder.set_params(&best[n_enc..])?;
    Ok((p, history))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedRecord {
    pub z: Vec<f64>,
    pub z_next: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

/// Records `(ψ(x), ψ(x⁺), u, y)` in the original order.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedDataset {
    pub records: Vec<ReducedRecord>,
    pub n_z: usize,
    pub n_u: usize,
    pub n_y: usize,
}

impl ReducedDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn reduce_dataset(p: &StateProjection, d: &Dataset) -> Result<ReducedDataset> {
    check_len("dataset state dimension", p.full_dim(), d.dims.n_x)?;
    let records = d
        .records
        .iter()
        .map(|r| {
            Ok(ReducedRecord {
                z: p.encode(&r.x)?,
                z_next: p.encode(&r.x_next)?,
                u: r.u.clone(),
                y: r.y.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReducedDataset {
        records,
        n_z: p.reduced_dim(),
        n_u: d.dims.n_u,
        n_y: d.dims.n_y,
    })
}

/// `‖X − QQᵀX‖²_F` for a basis `Q`.
pub fn projection_residual(basis: &Matrix, states: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for x in states {
        let z = basis.tr_mul_vec(x)?;
        let xr = basis.mul_vec(&z)?;
        total += x.iter().zip(&xr).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total)
}
