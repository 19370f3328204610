//! Fit-quality scores over multichannel trajectories.
//!
//! Both scores treat a trajectory as a sequence of vectors `v(k)`:
//!
//! * RMSE `= √((1/N) Σ_k ‖v(k) − v̂(k)‖²)`
//! * BFR `= max{1 − √(Σ_k ‖v(k) − v̂(k)‖² / Σ_k ‖v(k) − v_mean‖²), 0} · 100%`

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(truth: &[Vec<f64>], pred: &[Vec<f64>]) -> Result<usize> {
    if truth.is_empty() {
        return Err(Error::Parameter("metrics need at least one sample".into()));
    }
    if truth.len() != pred.len() {
        return Err(Error::shape("prediction length", truth.len(), pred.len()));
    }
    let dim = truth[0].len();
    for (k, (t, p)) in truth.iter().zip(pred).enumerate() {
        if t.len() != dim {
            return Err(Error::shape(format!("truth sample {k}"), dim, t.len()));
        }
        if p.len() != dim {
            return Err(Error::shape(format!("prediction sample {k}"), dim, p.len()));
        }
    }
    Ok(dim)
}

fn squared_error(truth: &[Vec<f64>], pred: &[Vec<f64>]) -> f64 {
    truth
        .iter()
        .zip(pred)
        .map(|(t, p)| t.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

pub fn rmse(truth: &[Vec<f64>], pred: &[Vec<f64>]) -> Result<f64> {
    check_pair(truth, pred)?;
    Ok((squared_error(truth, pred) / truth.len() as f64).sqrt())
}

/// Best fit rate in percent, clamped at zero.
pub fn bfr(truth: &[Vec<f64>], pred: &[Vec<f64>]) -> Result<f64> {
    let dim = check_pair(truth, pred)?;
    let n = truth.len() as f64;
    let mut mean = vec![0.0; dim];
    for t in truth {
        mean.iter_mut().zip(t).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let spread: f64 = truth
        .iter()
        .map(|t| t.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>())
        .sum();
    if spread == 0.0 {
        return Err(Error::UndefinedBfr);
    }
    let ratio = (squared_error(truth, pred) / spread).sqrt();
    Ok((1.0 - ratio).max(0.0) * 100.0)
}

fn channel(seq: &[Vec<f64>], c: usize) -> Vec<Vec<f64>> {
    seq.iter().map(|v| vec![v[c]]).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelScores {
    pub rmse: Vec<f64>,
    /// `None` where the reference channel is constant.
    pub bfr: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub rmse_state: f64,
    pub rmse_output: f64,
    pub bfr_state: f64,
    pub bfr_output: f64,
    pub state_channels: ChannelScores,
    pub output_channels: ChannelScores,
    pub record_count: usize,
}

fn channel_scores(truth: &[Vec<f64>], pred: &[Vec<f64>]) -> Result<ChannelScores> {
    let dim = truth[0].len();
    let mut rmse_c = Vec::with_capacity(dim);
    let mut bfr_c = Vec::with_capacity(dim);
    for c in 0..dim {
        let (t, p) = (channel(truth, c), channel(pred, c));
        rmse_c.push(rmse(&t, &p)?);
        bfr_c.push(match bfr(&t, &p) {
            Ok(v) => Some(v),
            Err(Error::UndefinedBfr) => None,
            Err(e) => return Err(e),
        });
    }
    Ok(ChannelScores {
        rmse: rmse_c,
        bfr: bfr_c,
    })
}

pub fn fit_report(
    truth_states: &[Vec<f64>],
    pred_states: &[Vec<f64>],
    truth_outputs: &[Vec<f64>],
    pred_outputs: &[Vec<f64>],
) -> Result<FitReport> {
    check_pair(truth_states, pred_states)?;
    check_pair(truth_outputs, pred_outputs)?;
    if truth_states.len() != truth_outputs.len() {
        return Err(Error::shape(
            "output record count",
            truth_states.len(),
            truth_outputs.len(),
        ));
    }
    Ok(FitReport {
        rmse_state: rmse(truth_states, pred_states)?,
        rmse_output: rmse(truth_outputs, pred_outputs)?,
        bfr_state: bfr(truth_states, pred_states)?,
        bfr_output: bfr(truth_outputs, pred_outputs)?,
        state_channels: channel_scores(truth_states, pred_states)?,
        output_channels: channel_scores(truth_outputs, pred_outputs)?,
        record_count: truth_states.len(),
    })
}

impl fmt::Display for FitReport {
    /// Two-column table with RMSE and BFR rows for state and output.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8}{:>14}{:>14}", "", "State (x)", "Output (y)")?;
        writeln!(
            f,
            "{:<8}{:>14}{:>14}",
            "RMSE:",
            format!("{:.3e}", self.rmse_state),
            format!("{:.3e}", self.rmse_output)
        )?;
        writeln!(
            f,
            "{:<8}{:>14}{:>14}",
            "BFR:",
            format!("{:.1}%", self.bfr_state),
            format!("{:.1}%", self.bfr_output)
        )
    }
}
