//! Run configuration: one JSON document describing an experiment end to end.
//!
//! Every field has a default, so `{}` is a complete configuration (the 20-mass
//! chain benchmark). The fully resolved document is written into the run
//! metadata.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rolpv::datagen::{import_csv, ChirpSegment, Dims, MsdParams};
use rolpv::lpvnn::LpvConfig;
use rolpv::nncore::{AdamConfig, OptimizerConfig};
use rolpv::projection::{ProjectionConfig, ReconstructionWeight};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSpec {
    MsdChain {
        n_masses: usize,
        #[serde(default)]
        params: MsdParams,
    },
    /// Recorded data: `train` is split per [`SplitConfig`], `validation` is
    /// used as is.
    Csv { train: PathBuf, validation: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSpec {
    Chirp {
        segments: Vec<ChirpSegment>,
    },
    /// Frequencies multiply `ts·k` directly (rad/s).
    Multisine {
        amplitudes: Vec<f64>,
        frequencies: Vec<f64>,
        phases: Vec<f64>,
        #[serde(default)]
        offset: f64,
        samples: usize,
    },
    /// Columns `u0, u1, …` with a header row.
    Csv { path: PathBuf },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Calibrates process and measurement noise per channel from a noiseless
    /// run with the same input.
    pub snr_db: Option<f64>,
    pub process_variances: Option<Vec<f64>>,
    pub measurement_variances: Option<Vec<f64>>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            fraction: 0.8,
            seed: 1,
        }
    }
}

/// Artifact locations; relative paths resolve against the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub train: PathBuf,
    pub holdout: PathBuf,
    pub validation: PathBuf,
    pub metadata: PathBuf,
    pub projection: PathBuf,
    pub projection_loss: PathBuf,
    pub singular_values: PathBuf,
    pub model: PathBuf,
    pub lpv_loss: PathBuf,
    pub report_json: PathBuf,
    pub report_text: PathBuf,
    pub overlay: PathBuf,
    pub summary: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        let p = PathBuf::from;
        OutputPaths {
            train: p("train.csv"),
            holdout: p("holdout.csv"),
            validation: p("validation.csv"),
            metadata: p("metadata.json"),
            projection: p("projection.json"),
            projection_loss: p("projection_loss.csv"),
            singular_values: p("singular_values.csv"),
            model: p("model.json"),
            lpv_loss: p("lpv_loss.csv"),
            report_json: p("report.json"),
            report_text: p("report.txt"),
            overlay: p("overlay.csv"),
            summary: p("summary.json"),
        }
    }
}

impl OutputPaths {
    pub fn resolve(&self, out: &Path, file: &Path) -> PathBuf {
        if file.is_absolute() {
            file.to_path_buf()
        } else {
            out.join(file)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub system: SystemSpec,
    pub sample_time: f64,
    pub input: InputSpec,
    pub validation_input: InputSpec,
    /// Zero when absent.
    pub initial_state: Option<Vec<f64>>,
    pub noise: NoiseConfig,
    pub split: SplitConfig,
    pub projection: ProjectionConfig,
    pub lpv: LpvConfig,
    pub outputs: OutputPaths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let segment = |offset| ChirpSegment {
            amplitude: 0.5,
            f0_hz: 0.001,
            f1_hz: 0.02,
            offset,
            samples: 2500,
        };
        PipelineConfig {
            system: SystemSpec::MsdChain {
                n_masses: 20,
                params: MsdParams::default(),
            },
            sample_time: 0.5,
            input: InputSpec::Chirp {
                segments: [0.0, 0.5, 1.0, -0.5].into_iter().map(segment).collect(),
            },
            validation_input: InputSpec::Multisine {
                amplitudes: vec![0.5],
                frequencies: vec![2.0 * PI * 0.006],
                phases: vec![0.0],
                offset: 0.5,
                samples: 1500,
            },
            initial_state: None,
            noise: NoiseConfig {
                seed: 0,
                ..NoiseConfig::default()
            },
            split: SplitConfig::default(),
            projection: ProjectionConfig {
                n_z: 4,
                linear_only: true,
                optimizer: OptimizerConfig {
                    seed: 2,
                    ..OptimizerConfig::default()
                },
                ..ProjectionConfig::default()
            },
            lpv: LpvConfig {
                n_p: 3,
                hidden: vec![10],
                offsets_fixed_zero: true,
                optimizer: OptimizerConfig {
                    epochs: 3000,
                    adam: AdamConfig {
                        learning_rate: 3e-3,
                        ..AdamConfig::default()
                    },
                    final_learning_rate: Some(1e-5),
                    seed: 3,
                    ..OptimizerConfig::default()
                },
                ..LpvConfig::default()
            },
            outputs: OutputPaths::default(),
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| invalid("<document>", e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Replaces every stage seed with one derived from `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.noise.seed = seed;
        self.split.seed = seed.wrapping_add(1);
        self.projection.optimizer.seed = seed.wrapping_add(2);
        self.lpv.optimizer.seed = seed.wrapping_add(3);
    }

    /// Dimensions of the configured system. CSV systems are read from disk.
    pub fn system_dims(&self) -> CliResult<Dims> {
        match &self.system {
            SystemSpec::MsdChain { n_masses, .. } => Ok(Dims {
                n_x: 2 * n_masses,
                n_u: 1,
                n_y: 1,
            }),
            SystemSpec::Csv { train, .. } => Ok(import_csv(train)
                .map_err(|e| invalid("system.train", e.to_string()))?
                .dims),
        }
    }

    /// Checks every field that can be checked without simulating, including
    /// referenced paths and dimension agreement between stages.
    pub fn validate(&self) -> CliResult<Dims> {
        if !(self.sample_time > 0.0 && self.sample_time.is_finite()) {
            return Err(invalid("sample_time", "must be positive and finite"));
        }
        match &self.system {
            SystemSpec::MsdChain { n_masses, params } => {
                rolpv::datagen::msd_chain(*n_masses, *params)
                    .map_err(|e| invalid("system", e.to_string()))?;
            }
            SystemSpec::Csv { train, validation } => {
                for (field, p) in [("system.train", train), ("system.validation", validation)] {
                    if !p.is_file() {
                        return Err(invalid(field, format!("file {} does not exist", p.display())));
                    }
                }
                let n = &self.noise;
                if n.snr_db.is_some() || n.process_variances.is_some() || n.measurement_variances.is_some() {
                    return Err(invalid("noise", "noise injection needs a simulated system"));
                }
            }
        }
        let dims = self.system_dims()?;
        if let SystemSpec::Csv { validation, .. } = &self.system {
            let vd = import_csv(validation).map_err(|e| invalid("system.validation", e.to_string()))?;
            if vd.dims != dims {
                return Err(invalid("system.validation", "dimensions differ from the training file"));
            }
        } else {
            check_input("input", &self.input, dims.n_u)?;
            check_input("validation_input", &self.validation_input, dims.n_u)?;
        }
        if let Some(x0) = &self.initial_state {
            if x0.len() != dims.n_x {
                return Err(invalid("initial_state", format!("expected {} entries, got {}", dims.n_x, x0.len())));
            }
        }
        self.validate_noise(dims)?;
        if !(self.split.fraction > 0.0 && self.split.fraction < 1.0) {
            return Err(invalid("split.fraction", "must lie strictly between 0 and 1"));
        }
        self.validate_projection(dims)?;
        self.validate_lpv()?;
        Ok(dims)
    }

    fn validate_noise(&self, dims: Dims) -> CliResult<()> {
        let n = &self.noise;
        if let Some(snr) = n.snr_db {
            if !snr.is_finite() {
                return Err(invalid("noise.snr_db", "must be finite"));
            }
            if n.process_variances.is_some() || n.measurement_variances.is_some() {
                return Err(invalid("noise", "give either snr_db or explicit variances, not both"));
            }
        }
        for (field, v, len) in [
            ("noise.process_variances", &n.process_variances, dims.n_x),
            ("noise.measurement_variances", &n.measurement_variances, dims.n_y),
        ] {
            if let Some(v) = v {
                if v.len() != len {
                    return Err(invalid(field, format!("expected {len} entries, got {}", v.len())));
                }
                if v.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                    return Err(invalid(field, "variances must be finite and non-negative"));
                }
            }
        }
        Ok(())
    }

    fn validate_projection(&self, dims: Dims) -> CliResult<()> {
        let p = &self.projection;
        if p.n_z == 0 || p.n_z >= dims.n_x {
            return Err(invalid(
                "projection.n_z",
                format!("must satisfy 1 <= n_z < n_x = {}", dims.n_x),
            ));
        }
        if p.hidden.contains(&0) {
            return Err(invalid("projection.hidden", "layer widths must be positive"));
        }
        if let ReconstructionWeight::Diagonal(w) = &p.weight {
            if w.len() != dims.n_x {
                return Err(invalid(
                    "projection.weight",
                    format!("expected {} entries, got {}", dims.n_x, w.len()),
                ));
            }
        }
        p.optimizer
            .validate()
            .map_err(|e| invalid("projection.optimizer", e.to_string()))
    }

    fn validate_lpv(&self) -> CliResult<()> {
        let l = &self.lpv;
        if l.n_p == 0 {
            return Err(invalid("lpv.n_p", "must be at least 1"));
        }
        if l.hidden.contains(&0) {
            return Err(invalid("lpv.hidden", "layer widths must be positive"));
        }
        if let Some(w) = &l.weight {
            let dims = self.system_dims()?;
            let rows = self.projection.n_z + dims.n_y;
            if w.len() != rows {
                return Err(invalid("lpv.weight", format!("expected {rows} entries, got {}", w.len())));
            }
        }
        l.optimizer
            .validate()
            .map_err(|e| invalid("lpv.optimizer", e.to_string()))
    }
}

fn check_input(field: &str, spec: &InputSpec, n_u: usize) -> CliResult<()> {
    match spec {
        InputSpec::Chirp { segments } => {
            if n_u != 1 {
                return Err(invalid(field, format!("chirp input is scalar but the system has {n_u} inputs")));
            }
            if segments.is_empty() || segments.iter().all(|s| s.samples == 0) {
                return Err(invalid(&format!("{field}.segments"), "no samples"));
            }
        }
        InputSpec::Multisine {
            amplitudes,
            frequencies,
            phases,
            samples,
            ..
        } => {
            if n_u != 1 {
                return Err(invalid(field, format!("multisine input is scalar but the system has {n_u} inputs")));
            }
            if amplitudes.len() != frequencies.len() || amplitudes.len() != phases.len() {
                return Err(invalid(field, "amplitudes, frequencies and phases differ in length"));
            }
            if *samples == 0 {
                return Err(invalid(&format!("{field}.samples"), "must be positive"));
            }
        }
        InputSpec::Csv { path } => {
            if !path.is_file() {
                return Err(invalid(&format!("{field}.path"), format!("file {} does not exist", path.display())));
            }
            let u = crate::io::read_inputs(path).map_err(|e| invalid(&format!("{field}.path"), e.to_string()))?;
            if u.first().map_or(0, Vec::len) != n_u {
                return Err(invalid(&format!("{field}.path"), format!("expected {n_u} input columns")));
            }
        }
    }
    Ok(())
}
