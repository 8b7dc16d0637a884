//! Constant-velocity Kalman filter over `(cx, cy, w, h)` and their rates.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::types::BoundingBox;

pub type StateVector = SVector<f64, 8>;
pub type StateMatrix = SMatrix<f64, 8, 8>;
type MeasurementVector = SVector<f64, 4>;
type MeasurementMatrix = SMatrix<f64, 4, 8>;

/// Smallest width/height the filter mean may take, in pixels.
pub const MIN_BOX_SIZE: f64 = 1.0;

/// Noise model. Standard deviations are fractions of the box height so the
/// filter behaves the same for near and far objects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
    pub std_weight_measurement: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            std_weight_measurement: 1.0 / 20.0,
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("std_weight_position", self.std_weight_position),
            ("std_weight_velocity", self.std_weight_velocity),
            ("std_weight_measurement", self.std_weight_measurement),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.std_weight_position == 0.0 || self.std_weight_velocity == 0.0 {
            return Err(Error::Config("process noise weights must be positive".into()));
        }
        Ok(())
    }

    /// Initial covariance diagonal for a box of height `h`.
    pub fn initial_diagonal(&self, h: f64) -> [f64; 8] {
        let p = 2.0 * self.std_weight_position * h;
        let v = 10.0 * self.std_weight_velocity * h;
        [p * p, p * p, p * p, p * p, v * v, v * v, v * v, v * v]
    }

    fn process_noise(&self, h: f64) -> StateMatrix {
        let p = self.std_weight_position * h;
        let v = self.std_weight_velocity * h;
        StateMatrix::from_diagonal(&StateVector::from_column_slice(&[
            p * p,
            p * p,
            p * p,
            p * p,
            v * v,
            v * v,
            v * v,
            v * v,
        ]))
    }

    fn measurement_noise(&self, h: f64) -> SMatrix<f64, 4, 4> {
        let m = self.std_weight_measurement * h;
        SMatrix::<f64, 4, 4>::identity() * (m * m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateMatrix,
}

fn transition() -> StateMatrix {
    let mut f = StateMatrix::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> MeasurementMatrix {
    let mut h = MeasurementMatrix::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn measure(b: &BoundingBox) -> MeasurementVector {
    let (cx, cy) = b.center();
    MeasurementVector::new(cx, cy, b.width(), b.height())
}

fn symmetrize(m: &StateMatrix) -> StateMatrix {
    (m + m.transpose()) * 0.5
}

fn floor_size(mean: &mut StateVector) {
    mean[2] = mean[2].max(MIN_BOX_SIZE);
    mean[3] = mean[3].max(MIN_BOX_SIZE);
}

impl KalmanState {
    pub fn init(b: &BoundingBox, cfg: &KalmanConfig) -> Self {
        let z = measure(b);
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&z);
        let diag = cfg.initial_diagonal(b.height());
        Self {
            mean,
            covariance: StateMatrix::from_diagonal(&StateVector::from_column_slice(&diag)),
        }
    }

    /// One constant-velocity step: `x = F x`, `P = F P F' + Q`.
    pub fn predict(&self, cfg: &KalmanConfig) -> Self {
        let f = transition();
        let mut mean = f * self.mean;
        floor_size(&mut mean);
        let q = cfg.process_noise(self.mean[3]);
        Self {
            mean,
            covariance: symmetrize(&(f * self.covariance * f.transpose() + q)),
        }
    }

    /// Kalman correction with the observed box. Uses the Joseph form so the
    /// covariance stays symmetric positive-definite.
    pub fn update(&self, observed: &BoundingBox, cfg: &KalmanConfig) -> Self {
        let h = observation();
        let r = cfg.measurement_noise(self.mean[3]);
        let innovation = measure(observed) - h * self.mean;
        let s = h * self.covariance * h.transpose() + r;
        let s_inv = s
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| s.try_inverse())
            .expect("innovation covariance is positive-definite");
        let gain = self.covariance * h.transpose() * s_inv;
        let mut mean = self.mean + gain * innovation;
        floor_size(&mut mean);
        let i_kh = StateMatrix::identity() - gain * h;
        let covariance = i_kh * self.covariance * i_kh.transpose() + gain * r * gain.transpose();
        Self {
            mean,
            covariance: symmetrize(&covariance),
        }
    }

    pub fn to_box(&self) -> Result<BoundingBox> {
        let (w, h) = (self.mean[2], self.mean[3]);
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::CollapsedState { w, h });
        }
        BoundingBox::from_center(self.mean[0], self.mean[1], w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.mean[4], self.mean[5])
    }
}

pub fn init(b: &BoundingBox, cfg: &KalmanConfig) -> KalmanState {
    KalmanState::init(b, cfg)
}

pub fn predict(s: &KalmanState, cfg: &KalmanConfig) -> KalmanState {
    s.predict(cfg)
}

pub fn update(s: &KalmanState, observed: &BoundingBox, cfg: &KalmanConfig) -> KalmanState {
    s.update(observed, cfg)
}

pub fn to_box(s: &KalmanState) -> Result<BoundingBox> {
    s.to_box()
}

/// True when the matrix is symmetric within `tol` and has a Cholesky factor.
pub fn is_spd(m: &StateMatrix, tol: f64) -> bool {
    let sym = (m - m.transpose()).abs().max() <= tol;
    sym && m.cholesky().is_some()
}
