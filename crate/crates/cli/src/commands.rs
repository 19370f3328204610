//! The pipeline stages. Each command reads its inputs from files written by
//! the previous stage, so stages can be rerun in isolation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rolpv::datagen::{
    chirp_series, export_csv, msd_chain, multisine, rk4_discretize, simulate_nl, snr_to_variance, split_dataset,
    Dataset, Dims, DiscreteSystem, NoiseSpec,
};
use rolpv::lpvnn::{build_delta_dataset, train_lpvnn};
use rolpv::metrics::{fit_report, FitReport};
use rolpv::nncore::LossHistory;
use rolpv::projection::{compute_pca_basis, reduce_dataset, train_projection, StateProjection};
use rolpv::rolpvm::{load_model, save_model, RolpvModel, Simulation};

use crate::config::{InputSpec, PipelineConfig, SystemSpec};
use crate::error::{CliError, CliResult};
use crate::io::{self, names};

const AFTER_GENERATE: &str = "run `generate` first";
const AFTER_PROJECTION: &str = "run `fit-projection` first";
const AFTER_LPV: &str = "run `fit-lpv` first";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub dims: Dims,
    pub train_records: usize,
    pub holdout_records: usize,
    pub validation_records: usize,
    pub process_variances: Vec<f64>,
    pub measurement_variances: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Metadata {
    config: PipelineConfig,
    data: GenerateSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSummary {
    /// Squared-form reconstruction cost of the saved projection.
    pub j1: f64,
    /// Mean weighted reconstruction error norm.
    pub j1_norm: f64,
    pub best_epoch: usize,
    pub singular_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpvSummary {
    /// Loss of the saved model on the scaled training data.
    pub loss: f64,
    pub best_epoch: usize,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub data: GenerateSummary,
    pub projection: ProjectionSummary,
    pub lpv: LpvSummary,
    pub report: FitReport,
}

/// Initial reduced state for [`cmd_simulate`].
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    Zero,
    Reduced(Vec<f64>),
    /// Encoded with the model's projection.
    Full(Vec<f64>),
}

pub fn input_signal(spec: &InputSpec, ts: f64) -> CliResult<Vec<Vec<f64>>> {
    let scalar = |v: Vec<f64>| v.into_iter().map(|x| vec![x]).collect();
    Ok(match spec {
        InputSpec::Chirp { segments } => scalar(chirp_series(segments, ts)),
        InputSpec::Multisine {
            amplitudes,
            frequencies,
            phases,
            offset,
            samples,
        } => scalar(multisine(amplitudes, frequencies, phases, *offset, ts, *samples)?),
        InputSpec::Csv { path } => io::read_inputs(path).map_err(|source| CliError::File {
            path: path.clone(),
            source,
        })?,
    })
}

fn simulate_system<S: DiscreteSystem>(
    cfg: &PipelineConfig,
    sys: &S,
) -> CliResult<(Dataset, Dataset, NoiseSpec)> {
    let dims = sys.dims();
    let x0 = cfg.initial_state.clone().unwrap_or_else(|| vec![0.0; dims.n_x]);
    let u = input_signal(&cfg.input, cfg.sample_time)?;
    let clean = simulate_nl(sys, &u, &x0, &NoiseSpec::none(dims))?;
    let n = &cfg.noise;
    let noise = match (n.snr_db, &n.process_variances, &n.measurement_variances) {
        (Some(db), _, _) => NoiseSpec {
            process_variances: snr_to_variance(&clean.states(), db)?,
            measurement_variances: snr_to_variance(&clean.outputs(), db)?,
            seed: n.seed,
        },
        (None, None, None) => NoiseSpec::none(dims),
        (None, w, e) => NoiseSpec {
            process_variances: w.clone().unwrap_or_else(|| vec![0.0; dims.n_x]),
            measurement_variances: e.clone().unwrap_or_else(|| vec![0.0; dims.n_y]),
            seed: n.seed,
        },
    };
    let noisy = noise
        .process_variances
        .iter()
        .chain(&noise.measurement_variances)
        .any(|v| *v > 0.0);
    let full = if noisy { simulate_nl(sys, &u, &x0, &noise)? } else { clean };
    let uv = input_signal(&cfg.validation_input, cfg.sample_time)?;
    let validation = simulate_nl(sys, &uv, &x0, &NoiseSpec::none(dims))?;
    Ok((full, validation, noise))
}

fn export(d: &Dataset, path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    export_csv(d, path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Simulates (or imports) the data, splits it and writes the training,
/// holdout and validation files plus the run metadata.
pub fn cmd_generate(cfg: &PipelineConfig, out: &Path) -> CliResult<GenerateSummary> {
    let dims = cfg.validate()?;
    let (full, validation, noise) = match &cfg.system {
        SystemSpec::MsdChain { n_masses, params } => {
            let sys = rk4_discretize(msd_chain(*n_masses, *params)?, cfg.sample_time)?;
            simulate_system(cfg, &sys)?
        }
        SystemSpec::Csv { train, validation } => (
            io::read_dataset(train, "recorded training data")?,
            io::read_dataset(validation, "recorded validation data")?,
            NoiseSpec::none(dims),
        ),
    };
    let (train, holdout) = split_dataset(&full, cfg.split.fraction, cfg.split.seed)?;
    let o = &cfg.outputs;
    export(&train, &o.resolve(out, &o.train))?;
    export(&holdout, &o.resolve(out, &o.holdout))?;
    export(&validation, &o.resolve(out, &o.validation))?;
    let summary = GenerateSummary {
        dims,
        train_records: train.len(),
        holdout_records: holdout.len(),
        validation_records: validation.len(),
        process_variances: noise.process_variances,
        measurement_variances: noise.measurement_variances,
    };
    io::write_json(
        &o.resolve(out, &o.metadata),
        &Metadata {
            config: cfg.clone(),
            data: summary.clone(),
        },
    )?;
    log::info!(
        "generated {} training, {} holdout and {} validation records",
        summary.train_records,
        summary.holdout_records,
        summary.validation_records
    );
    Ok(summary)
}

fn check_dims(field: &str, expected: Dims, actual: Dims) -> CliResult<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(CliError::Config {
            field: field.into(),
            message: format!("data dimensions {actual:?} differ from the configured system {expected:?}"),
        })
    }
}

/// Keeps the partial loss log when training diverges.
fn log_training<T>(
    result: rolpv::Result<(T, LossHistory)>,
    log_path: &Path,
) -> CliResult<(T, LossHistory)> {
    match result {
        Ok((value, history)) => {
            io::write_loss_log(log_path, &history.losses)?;
            Ok((value, history))
        }
        Err(rolpv::Error::Divergence { epoch, detail, losses }) => {
            io::write_loss_log(log_path, &losses)?;
            Err(rolpv::Error::Divergence { epoch, detail, losses }.into())
        }
        Err(e) => Err(e.into()),
    }
}

/// Fits the projection on the training states and writes it together with
/// the per-epoch cost log and the PCA singular value spectrum.
pub fn cmd_fit_projection(cfg: &PipelineConfig, out: &Path) -> CliResult<ProjectionSummary> {
    let dims = cfg.validate()?;
    let o = &cfg.outputs;
    let train = io::read_dataset(&o.resolve(out, &o.train), AFTER_GENERATE)?;
    check_dims("system", dims, train.dims)?;
    let states = train.states();
    let (_, singular_values) = compute_pca_basis(&states, cfg.projection.n_z)?;
    let sv_rows: Vec<Vec<Option<f64>>> = singular_values
        .iter()
        .enumerate()
        .map(|(i, s)| vec![Some(i as f64), Some(*s)])
        .collect();
    io::write_table(
        &o.resolve(out, &o.singular_values),
        &["index".into(), "singular_value".into()],
        &sv_rows,
    )?;

    let (projection, history) = log_training(
        train_projection(&states, &cfg.projection),
        &o.resolve(out, &o.projection_loss),
    )?;
    io::write_json(&o.resolve(out, &o.projection), &projection)?;
    let weight = cfg.projection.weight.resolve(projection.normalizer())?;
    let cost = projection.reconstruction_cost(&states, &weight)?;
    log::info!("projection J1 = {:e} (best epoch {})", history.best_loss, history.best_epoch);
    Ok(ProjectionSummary {
        j1: history.best_loss,
        j1_norm: cost.norm,
        best_epoch: history.best_epoch,
        singular_values,
    })
}

/// Reduces the training data with the saved projection, trains the LPV-NN
/// and writes the denormalized model with the projection embedded.
pub fn cmd_fit_lpv(cfg: &PipelineConfig, out: &Path) -> CliResult<LpvSummary> {
    let dims = cfg.validate()?;
    let o = &cfg.outputs;
    let train = io::read_dataset(&o.resolve(out, &o.train), AFTER_GENERATE)?;
    check_dims("system", dims, train.dims)?;
    let projection: StateProjection = io::read_json(&o.resolve(out, &o.projection), AFTER_PROJECTION)?;
    if projection.full_dim() != dims.n_x || projection.reduced_dim() != cfg.projection.n_z {
        return Err(CliError::Config {
            field: "projection.n_z".into(),
            message: format!(
                "saved projection maps {} -> {} but the configuration expects {} -> {}",
                projection.full_dim(),
                projection.reduced_dim(),
                dims.n_x,
                cfg.projection.n_z
            ),
        });
    }
    let reduced = reduce_dataset(&projection, &train)?;
    let delta = build_delta_dataset(&reduced, cfg.lpv.degenerate)?;
    let (params, history) = log_training(train_lpvnn(&delta, &cfg.lpv), &o.resolve(out, &o.lpv_loss))?;
    let model = RolpvModel::from_lpvnn(&params, Some(projection))?;
    save_model(&model, o.resolve(out, &o.model))?;
    log::info!("LPV-NN loss = {:e} (best epoch {})", history.best_loss, history.best_epoch);
    Ok(LpvSummary {
        loss: history.best_loss,
        best_epoch: history.best_epoch,
        epochs: history.losses.len() - 1,
    })
}

fn load(model: &Path) -> CliResult<RolpvModel> {
    io::require(model, AFTER_LPV)?;
    load_model(model).map_err(|source| CliError::File {
        path: model.to_path_buf(),
        source,
    })
}

fn decode_all(model: &RolpvModel, z: &[Vec<f64>]) -> CliResult<Option<Vec<Vec<f64>>>> {
    if model.projection().is_none() {
        return Ok(None);
    }
    Ok(Some(z.iter().map(|z| model.decode(z)).collect::<rolpv::Result<_>>()?))
}

/// Simulates the model and writes one row per time step: `z`, the
/// reconstructed state (when the model carries a projection), `u`, `y` and
/// `p`. The row after the last input holds only the final state. An unstable
/// run keeps the trace up to the failing step and returns the error.
pub fn cmd_simulate(
    model_path: &Path,
    inputs: &[Vec<f64>],
    init: &InitialCondition,
    out_path: &Path,
) -> CliResult<Simulation> {
    let model = load(model_path)?;
    let d = model.dims();
    if let Some((k, u)) = inputs.iter().enumerate().find(|(_, u)| u.len() != d.n_u) {
        return Err(CliError::Config {
            field: "input".into(),
            message: format!("sample {k} has {} channels, the model expects {}", u.len(), d.n_u),
        });
    }
    let z0 = match init {
        InitialCondition::Zero => vec![0.0; d.n_z],
        InitialCondition::Reduced(z) => {
            if z.len() != d.n_z {
                return Err(CliError::Config {
                    field: "z0".into(),
                    message: format!("expected {} entries, got {}", d.n_z, z.len()),
                });
            }
            z.clone()
        }
        InitialCondition::Full(x) => model.encode(x).map_err(|e| CliError::Config {
            field: "x0".into(),
            message: e.to_string(),
        })?,
    };
    let (sim, failure) = model.simulate_partial(inputs, &z0);
    let xhat = decode_all(&model, &sim.z)?;
    let n_x = xhat.as_ref().map_or(0, |x| x.first().map_or(0, Vec::len));
    let header: Vec<String> = std::iter::once("k".to_string())
        .chain(names("z", d.n_z))
        .chain(names("xhat", n_x))
        .chain(names("u", d.n_u))
        .chain(names("y", d.n_y))
        .chain(names("p", d.n_p))
        .collect();
    let rows: Vec<Vec<Option<f64>>> = (0..sim.z.len())
        .map(|k| {
            let cells = |v: Option<&Vec<f64>>, n: usize| -> Vec<Option<f64>> {
                v.map_or_else(|| vec![None; n], |v| v.iter().map(|x| Some(*x)).collect())
            };
            let mut row = vec![Some(k as f64)];
            row.extend(cells(sim.z.get(k), d.n_z));
            row.extend(cells(xhat.as_ref().and_then(|x| x.get(k)), n_x));
            row.extend(cells(inputs.get(k), d.n_u));
            row.extend(cells(sim.y.get(k), d.n_y));
            row.extend(cells(sim.p.get(k), d.n_p));
            row
        })
        .collect();
    io::write_table(out_path, &header, &rows)?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(sim),
    }
}

/// Output paths of [`cmd_evaluate`].
#[derive(Clone, Debug)]
pub struct ReportPaths {
    pub json: PathBuf,
    pub text: PathBuf,
    pub overlay: PathBuf,
}

/// Simulates the model from `ψ(x(0))` of a recorded trajectory and scores the
/// reconstructed states and outputs against it.
pub fn cmd_evaluate(model_path: &Path, data_path: &Path, paths: &ReportPaths) -> CliResult<FitReport> {
    let model = load(model_path)?;
    let data = io::read_dataset(data_path, AFTER_GENERATE)?;
    let d = model.dims();
    let Some(projection) = model.projection() else {
        return Err(CliError::Config {
            field: "model".into(),
            message: "evaluation needs a model with an embedded projection".into(),
        });
    };
    if projection.full_dim() != data.dims.n_x || d.n_u != data.dims.n_u || d.n_y != data.dims.n_y {
        return Err(CliError::Config {
            field: "data".into(),
            message: format!("data dimensions {:?} do not match the model", data.dims),
        });
    }
    if !data.contiguous || data.is_empty() {
        return Err(CliError::Config {
            field: "data".into(),
            message: "evaluation needs a non-empty contiguous trajectory".into(),
        });
    }
    let z0 = model.encode(&data.records[0].x)?;
    let sim = model.simulate(&data.inputs(), &z0)?;
    let n = data.len();
    let xhat = decode_all(&model, &sim.z[..n])?.expect("projection present");
    let truth_y = data.outputs();
    let report = fit_report(&data.states(), &xhat, &truth_y, &sim.y)?;

    io::write_json(&paths.json, &report)?;
    io::write_text(&paths.text, &report.to_string())?;
    let header: Vec<String> = std::iter::once("time".to_string())
        .chain(names("y_true", d.n_y))
        .chain(names("y_pred", d.n_y))
        .collect();
    let rows: Vec<Vec<Option<f64>>> = (0..n)
        .map(|k| {
            std::iter::once(k as f64 * data.sample_time)
                .chain(truth_y[k].iter().copied())
                .chain(sim.y[k].iter().copied())
                .map(Some)
                .collect()
        })
        .collect();
    io::write_table(&paths.overlay, &header, &rows)?;
    log::info!("validation BFR: state {:.2}%, output {:.2}%", report.bfr_state, report.bfr_output);
    Ok(report)
}

impl PipelineConfig {
    pub fn report_paths(&self, out: &Path) -> ReportPaths {
        let o = &self.outputs;
        ReportPaths {
            json: o.resolve(out, &o.report_json),
            text: o.resolve(out, &o.report_text),
            overlay: o.resolve(out, &o.overlay),
        }
    }
}

/// Runs every stage in order and writes a summary.
pub fn cmd_pipeline(cfg: &PipelineConfig, out: &Path) -> CliResult<PipelineSummary> {
    cfg.validate().map_err(|e| e.in_stage("validate"))?;
    let data = cmd_generate(cfg, out).map_err(|e| e.in_stage("generate"))?;
    let projection = cmd_fit_projection(cfg, out).map_err(|e| e.in_stage("fit-projection"))?;
    let lpv = cmd_fit_lpv(cfg, out).map_err(|e| e.in_stage("fit-lpv"))?;
    let o = &cfg.outputs;
    let report = cmd_evaluate(
        &o.resolve(out, &o.model),
        &o.resolve(out, &o.validation),
        &cfg.report_paths(out),
    )
    .map_err(|e| e.in_stage("evaluate"))?;
    let summary = PipelineSummary {
        data,
        projection,
        lpv,
        report,
    };
    io::write_json(&o.resolve(out, &o.summary), &summary)?;
    Ok(summary)
}
