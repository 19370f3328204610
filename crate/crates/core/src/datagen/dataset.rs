use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::system::{Dims, DiscreteSystem};
use crate::error::{check_len, Error, Result};
use crate::nncore::rng::{seeded, Rng};

/// One sample `(x(k), x(k+1), u(k), y(k))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub x: Vec<f64>,
    pub x_next: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub system: String,
    pub seed: Option<u64>,
    pub process_variances: Vec<f64>,
    pub measurement_variances: Vec<f64>,
}

/// Aligned trajectory records.
///
/// `contiguous` marks datasets whose record `k` has `x_next` equal to the `x`
/// of record `k + 1`; random subsets clear it.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub dims: Dims,
    pub sample_time: f64,
    pub contiguous: bool,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn states(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.x.clone()).collect()
    }

    pub fn inputs(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.u.clone()).collect()
    }

    pub fn outputs(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.y.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        for (k, r) in self.records.iter().enumerate() {
            check_len(&format!("record {k} state"), d.n_x, r.x.len())?;
            check_len(&format!("record {k} next state"), d.n_x, r.x_next.len())?;
            check_len(&format!("record {k} input"), d.n_u, r.u.len())?;
            check_len(&format!("record {k} output"), d.n_y, r.y.len())?;
        }
        Ok(())
    }
}

/// Diagonal process and measurement noise covariances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub process_variances: Vec<f64>,
    pub measurement_variances: Vec<f64>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none(dims: Dims) -> Self {
        NoiseSpec {
            process_variances: vec![0.0; dims.n_x],
            measurement_variances: vec![0.0; dims.n_y],
            seed: 0,
        }
    }

    fn validate(&self, dims: Dims) -> Result<()> {
        check_len("process variances", dims.n_x, self.process_variances.len())?;
        check_len("measurement variances", dims.n_y, self.measurement_variances.len())?;
        if self
            .process_variances
            .iter()
            .chain(&self.measurement_variances)
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::Parameter("noise variances must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn add_noise(v: &mut [f64], variances: &[f64], rng: &mut Rng) {
    for (x, var) in v.iter_mut().zip(variances) {
        if *var > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            *x += var.sqrt() * z;
        }
    }
}

/// Simulates `x(k+1) = f(x(k), u(k)) + w(k)`, `y(k) = h(x(k), u(k)) + e(k)` with
/// Gaussian white `w`, `e`, returning one contiguous record per input sample.
pub fn simulate_nl<S: DiscreteSystem + ?Sized>(
    system: &S,
    inputs: &[Vec<f64>],
    x0: &[f64],
    noise: &NoiseSpec,
) -> Result<Dataset> {
    let dims = system.dims();
    check_len("initial state", dims.n_x, x0.len())?;
    noise.validate(dims)?;
    let mut rng = seeded(noise.seed);
    let mut records = Vec::with_capacity(inputs.len());
    let mut x = x0.to_vec();
    for (k, u) in inputs.iter().enumerate() {
        check_len(&format!("input sample {k}"), dims.n_u, u.len())?;
        let mut y = system.output(&x, u);
        add_noise(&mut y, &noise.measurement_variances, &mut rng);
        let mut x_next = system.step(&x, u);
        add_noise(&mut x_next, &noise.process_variances, &mut rng);
        if x_next.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Instability {
                step: k,
                values: x_next,
            });
        }
        records.push(Record {
            x: std::mem::replace(&mut x, x_next.clone()),
            x_next,
            u: u.clone(),
            y,
        });
    }
    let noisy = noise
        .process_variances
        .iter()
        .chain(&noise.measurement_variances)
        .any(|v| *v > 0.0);
    Ok(Dataset {
        records,
        dims,
        sample_time: system.sample_time(),
        contiguous: true,
        provenance: Provenance {
            system: system.name().to_string(),
            seed: noisy.then_some(noise.seed),
            process_variances: noise.process_variances.clone(),
            measurement_variances: noise.measurement_variances.clone(),
        },
    })
}

/// Uniform random record-level split into `⌊fraction·N⌋` and the remainder.
/// Both sides keep the original record order.
pub fn split_dataset(d: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = d.len();
    let n_train = (fraction * n as f64).floor() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(seed));
    let mut train_idx = idx[..n_train].to_vec();
    let mut hold_idx = idx[n_train..].to_vec();
    train_idx.sort_unstable();
    hold_idx.sort_unstable();
    let subset = |ids: &[usize]| Dataset {
        records: ids.iter().map(|&i| d.records[i].clone()).collect(),
        dims: d.dims,
        sample_time: d.sample_time,
        contiguous: false,
        provenance: d.provenance.clone(),
    };
    Ok((subset(&train_idx), subset(&hold_idx)))
}

/// Non-minimal state `x(k) = [y(k−1) ⋯ y(k−n)  u(k−1) ⋯ u(k−n)]` for
/// `k = n, …, len` (the last entry serves as the successor of `k = len − 1`).
pub fn build_nonminimal_state(
    outputs: &[Vec<f64>],
    inputs: &[Vec<f64>],
    lag: usize,
) -> Result<Vec<Vec<f64>>> {
    if lag == 0 {
        return Err(Error::Parameter("lag must be at least 1".into()));
    }
    check_len("input sequence length", outputs.len(), inputs.len())?;
    if outputs.len() <= lag {
        return Err(Error::Parameter(format!(
            "need more than {lag} samples for lag {lag}, got {}",
            outputs.len()
        )));
    }
    let len = outputs.len();
    Ok((lag..=len)
        .map(|k| {
            let mut x = Vec::new();
            for j in 1..=lag {
                x.extend_from_slice(&outputs[k - j]);
            }
            for j in 1..=lag {
                x.extend_from_slice(&inputs[k - j]);
            }
            x
        })
        .collect())
}

/// Dataset over the non-minimal state of an input/output record.
pub fn nonminimal_dataset(
    outputs: &[Vec<f64>],
    inputs: &[Vec<f64>],
    lag: usize,
    sample_time: f64,
) -> Result<Dataset> {
    let states = build_nonminimal_state(outputs, inputs, lag)?;
    let n_y = outputs[0].len();
    let n_u = inputs[0].len();
    let records = (0..states.len() - 1)
        .map(|i| Record {
            x: states[i].clone(),
            x_next: states[i + 1].clone(),
            u: inputs[lag + i].clone(),
            y: outputs[lag + i].clone(),
        })
        .collect();
    Ok(Dataset {
        records,
        dims: Dims {
            n_x: lag * (n_y + n_u),
            n_u,
            n_y,
        },
        sample_time,
        contiguous: true,
        provenance: Provenance {
            system: "nonminimal".into(),
            ..Provenance::default()
        },
    })
}
