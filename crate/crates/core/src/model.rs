//! Physical layer of the fog network: node parameters, geometry, the
//! wireless channel and the three per-slot timing terms (queue waiting,
//! communication, execution).
//!
//! Time is measured in seconds and one simulation slot lasts one second, so
//! service and arrival rates "per slot" are also rates per second.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Point in the deployment plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned deployment rectangle anchored at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn contains(&self, p: &Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }
}

/// Static parameters of one fog node.
///
/// `id` is the zero-based index of the node inside its scenario; text
/// encodings and user-facing output use `id + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FogNode {
    pub id: usize,
    pub position: Position,
    /// Mean computing service rate, tasks per slot.
    pub mu: f64,
    /// Mean task arrival rate, tasks per slot.
    pub lambda: f64,
    /// CPU cycles per second.
    pub cpu_speed: f64,
    pub queue_capacity: u32,
    pub tx_power_dbm: f64,
    tx_power_w: f64,
}

impl FogNode {
    pub fn new(
        id: usize,
        position: Position,
        mu: f64,
        lambda: f64,
        cpu_speed: f64,
        queue_capacity: u32,
        tx_power_dbm: f64,
    ) -> Result<Self, ModelError> {
        positive("mu", mu)?;
        positive("lambda", lambda)?;
        positive("cpu_speed", cpu_speed)?;
        if queue_capacity < 1 {
            return Err(ModelError::InvalidParameter {
                field: "queue_capacity",
                reason: "must be at least 1".into(),
            });
        }
        if !tx_power_dbm.is_finite() || !position.x.is_finite() || !position.y.is_finite() {
            return Err(ModelError::InvalidParameter {
                field: "position/tx_power_dbm",
                reason: "must be finite".into(),
            });
        }
        Ok(Self {
            id,
            position,
            mu,
            lambda,
            cpu_speed,
            queue_capacity,
            tx_power_dbm,
            tx_power_w: dbm_to_watts(tx_power_dbm),
        })
    }

    pub fn tx_power_w(&self) -> f64 {
        self.tx_power_w
    }

    pub fn distance_to(&self, other: &FogNode) -> f64 {
        self.position.distance(&other.position)
    }
}

/// Log-distance path loss channel with additive thermal noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub bandwidth_hz: f64,
    pub path_loss_const: f64,
    pub path_loss_exp: f64,
    pub noise_psd_dbm_hz: f64,
    noise_psd_w_hz: f64,
}

impl ChannelModel {
    pub fn new(
        bandwidth_hz: f64,
        path_loss_const: f64,
        path_loss_exp: f64,
        noise_psd_dbm_hz: f64,
    ) -> Result<Self, ModelError> {
        positive("bandwidth_hz", bandwidth_hz)?;
        positive("path_loss_const", path_loss_const)?;
        positive("path_loss_exp", path_loss_exp)?;
        if !noise_psd_dbm_hz.is_finite() {
            return Err(ModelError::InvalidParameter {
                field: "noise_psd_dbm_hz",
                reason: "must be finite".into(),
            });
        }
        Ok(Self {
            bandwidth_hz,
            path_loss_const,
            path_loss_exp,
            noise_psd_dbm_hz,
            noise_psd_w_hz: dbm_to_watts(noise_psd_dbm_hz),
        })
    }

    pub fn noise_psd_w_hz(&self) -> f64 {
        self.noise_psd_w_hz
    }

    /// Channel gain `β1·d^(−β2)` at distance `d` meters.
    pub fn gain(&self, distance: f64) -> f64 {
        self.path_loss_const * distance.powf(-self.path_loss_exp)
    }

    /// Shannon capacity in bit/s at distance `d` for a transmitter of
    /// `tx_power_w` watts.
    pub fn capacity(&self, distance: f64, tx_power_w: f64) -> Result<f64, ModelError> {
        if distance.is_nan() || distance <= 0.0 {
            return Err(ModelError::DegenerateGeometry { distance });
        }
        let snr = self.gain(distance) * tx_power_w / (self.bandwidth_hz * self.noise_psd_w_hz);
        Ok(self.bandwidth_hz * snr.ln_1p() / std::f64::consts::LN_2)
    }
}

/// Per-task workload description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub data_size_bits: f64,
    pub instructions: f64,
    pub cpi: f64,
}

impl TaskProfile {
    pub fn new(data_size_bits: f64, instructions: f64, cpi: f64) -> Result<Self, ModelError> {
        positive("data_size_bits", data_size_bits)?;
        positive("instructions", instructions)?;
        positive("cpi", cpi)?;
        Ok(Self {
            data_size_bits,
            instructions,
            cpi,
        })
    }

    /// CPU cycles needed to execute one task.
    pub fn cycles(&self) -> f64 {
        self.instructions * self.cpi
    }

    /// CPU speed that executes `mu` tasks per second.
    pub fn cpu_speed_for(&self, mu: f64) -> f64 {
        mu * self.cycles()
    }
}

fn positive(field: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            field,
            reason: format!("must be finite and > 0, got {value}"),
        })
    }
}

/// Transmission rate from `src` to `dst` in bit/s.
pub fn transmission_rate(src: &FogNode, dst: &FogNode, ch: &ChannelModel) -> Result<f64, ModelError> {
    ch.capacity(src.distance_to(dst), src.tx_power_w())
}

/// Round-trip transfer time of `offloaded` tasks over a link of `rate` bit/s.
pub fn comm_time(offloaded: u32, rate: f64, tasks: &TaskProfile) -> f64 {
    if offloaded == 0 {
        return 0.0;
    }
    2.0 * tasks.data_size_bits * f64::from(offloaded) / rate
}

/// Execution time of `local` tasks on `local_node` plus `offloaded` tasks on
/// `remote_node`.
pub fn exec_time(local: u32, offloaded: u32, local_node: &FogNode, remote_node: &FogNode, tasks: &TaskProfile) -> f64 {
    let cycles = tasks.cycles();
    cycles * f64::from(local) / local_node.cpu_speed + cycles * f64::from(offloaded) / remote_node.cpu_speed
}

/// Expected queueing delay seen by the placed tasks.
///
/// Offloaded tasks are charged the local queue delay as well as the remote one.
pub fn wait_time(local: u32, offloaded: u32, q_local: f64, q_remote: f64, mu_local: f64, mu_remote: f64) -> f64 {
    let local_wait = q_local / mu_local;
    let mut t = 0.0;
    if local != 0 {
        t += local_wait;
    }
    if offloaded != 0 {
        t += local_wait + q_remote / mu_remote;
    }
    t
}
