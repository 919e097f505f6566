use serde::{Deserialize, Serialize};

use super::episode::EpisodeLog;
use crate::stiffness::StiffnessMode;

/// How rows are assigned to the contact and free-motion segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentThresholds {
    /// Desired normal force magnitude marking a contact row, N.
    pub contact: f64,
    /// Largest desired force component of a free-motion row, N.
    pub free: f64,
}

impl Default for SegmentThresholds {
    fn default() -> Self {
        Self {
            contact: 3.0,
            free: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub mode: StiffnessMode,
    pub steps: usize,
    pub duration: f64,
    pub safety_stop: bool,
    pub safety_stop_time: Option<f64>,
    pub contact_rows: usize,
    pub free_rows: usize,
    /// Contact segment, per axis, N.
    pub force_rmse: Vec<f64>,
    /// Contact segment, Euclidean, N.
    pub force_rmse_total: f64,
    /// Free-motion segment, Euclidean, m.
    pub position_rmse: f64,
    pub min_tank_energy: f64,
    /// `T_end − T_0 − Σ ΔT`, J.
    pub tank_balance_error: f64,
    pub max_abs_force: f64,
    pub free_mean_stiffness: Vec<f64>,
    /// Contact segment, N (positive pushes into the table).
    pub mean_normal_force: f64,
    pub mean_desired_normal_force: f64,
    /// Mean contact force below 70% of the desired one.
    pub force_undershoot: bool,
}

fn rms(sum_sq: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (sum_sq / n as f64).sqrt()
    }
}

pub fn episode_metrics(log: &EpisodeLog, seg: &SegmentThresholds) -> EpisodeMetrics {
    let m = log.dim;
    let nz = m - 1;
    let mut force_sq = vec![0.0; m];
    let mut pos_sq = 0.0;
    let mut k_sum = vec![0.0; m];
    let (mut n_contact, mut n_free) = (0usize, 0usize);
    let (mut normal_sum, mut desired_sum) = (0.0, 0.0);
    let mut min_tank = log.initial_tank;
    let mut max_force: f64 = 0.0;
    let mut delta_sum = 0.0;
    for r in &log.rows {
        min_tank = min_tank.min(r.tank);
        delta_sum += r.tank_delta;
        max_force = r.f_ext.iter().fold(max_force, |a, v| a.max(v.abs()));
        let fd_max = r.f_d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if r.f_d[nz].abs() >= seg.contact {
            n_contact += 1;
            for j in 0..m {
                force_sq[j] += (r.f_ext[j] - r.f_d[j]).powi(2);
            }
            normal_sum += -r.f_ext[nz];
            desired_sum += -r.f_d[nz];
        } else if fd_max < seg.free && !r.flags.contact {
            n_free += 1;
            pos_sq +=
                r.x.iter()
                    .zip(&r.x_d)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>();
            for j in 0..m {
                k_sum[j] += r.k[j];
            }
        }
    }
    let force_rmse: Vec<f64> = force_sq.iter().map(|s| rms(*s, n_contact)).collect();
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    let mean_normal_force = mean(normal_sum, n_contact);
    let mean_desired_normal_force = mean(desired_sum, n_contact);
    let final_tank = log.rows.last().map_or(log.initial_tank, |r| r.tank);
    EpisodeMetrics {
        mode: log.mode,
        steps: log.rows.len(),
        duration: log.rows.last().map_or(0.0, |r| r.t),
        safety_stop: log.safety_stop.is_some(),
        safety_stop_time: log.safety_stop,
        contact_rows: n_contact,
        free_rows: n_free,
        force_rmse_total: rms(force_sq.iter().sum(), n_contact),
        force_rmse,
        position_rmse: rms(pos_sq, n_free),
        min_tank_energy: min_tank,
        tank_balance_error: final_tank - log.initial_tank - delta_sum,
        max_abs_force: max_force,
        free_mean_stiffness: k_sum.iter().map(|s| mean(*s, n_free)).collect(),
        mean_normal_force,
        mean_desired_normal_force,
        force_undershoot: n_contact > 0 && mean_normal_force < 0.7 * mean_desired_normal_force,
    }
}
