//! IMU samples, static initialization of gravity/biases, and midpoint
//! ("median integral") strapdown propagation.
//!
//! Gravity is carried as the true gravitational acceleration in the global
//! frame (defaults to `(0, 0, -9.81)`); an accelerometer at rest therefore
//! reads `-R^T g`.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InertialError {
    #[error("line {line}: malformed IMU record: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("non-increasing IMU timestamps: {t} after {prev}")]
    NonIncreasing { t: f64, prev: f64 },
    #[error("IMU gap {dt}s exceeds maximum {max}s")]
    GapTooLarge { dt: f64, max: f64 },
    #[error("motion detected during static initialization (accel std {accel_std:.4} m/s^2, gyro std {gyro_std:.5} rad/s)")]
    MotionDetected { accel_std: f64, gyro_std: f64 },
    #[error("too few samples for static initialization: {got} < {min}")]
    TooFewSamples { got: usize, min: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One inertial measurement: specific force and angular rate in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Specific force, m/s^2.
    pub accel: Vector3<f64>,
    /// Angular velocity, rad/s.
    pub gyro: Vector3<f64>,
}

/// Position, velocity and attitude of the body in the global frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Global-from-body rotation.
    pub orientation: UnitQuaternion<f64>,
}

impl Default for KinematicState {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }
}

/// Accelerometer and gyroscope biases in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuBiases {
    pub accel: Vector3<f64>,
    pub gyro: Vector3<f64>,
}

/// Gravitational acceleration in the global frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityModel {
    pub g: Vector3<f64>,
}

impl GravityModel {
    pub fn new(g: Vector3<f64>) -> Self {
        let norm = g.norm();
        debug_assert!((9.0..=10.5).contains(&norm), "implausible gravity {norm}");
        Self { g }
    }

    /// Standard gravity pointing down the global z axis.
    pub fn standard(magnitude: f64) -> Self {
        Self::new(Vector3::new(0.0, 0.0, -magnitude))
    }
}

impl Default for GravityModel {
    fn default() -> Self {
        Self::standard(9.81)
    }
}

/// Thresholds for the stationarity check and sample-count floor.
#[derive(Debug, Clone, Copy)]
pub struct StaticInitConfig {
    pub min_samples: usize,
    /// Maximum per-axis accelerometer standard deviation, m/s^2.
    pub max_accel_std: f64,
    /// Maximum per-axis gyroscope standard deviation, rad/s.
    pub max_gyro_std: f64,
    pub gravity_magnitude: f64,
}

impl Default for StaticInitConfig {
    fn default() -> Self {
        Self {
            min_samples: 20,
            max_accel_std: 0.3,
            max_gyro_std: 0.05,
            gravity_magnitude: 9.81,
        }
    }
}

fn mean_and_std(samples: &[Vector3<f64>]) -> (Vector3<f64>, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<Vector3<f64>>() / n;
    let var = samples
        .iter()
        .map(|s| (s - mean).component_mul(&(s - mean)))
        .sum::<Vector3<f64>>()
        / n;
    (mean, var.max().sqrt())
}

/// Estimate the initial attitude, IMU biases and gravity from a motionless
/// stretch of samples.
///
/// The mean angular velocity becomes the gyro bias. The mean specific force
/// fixes the gravity direction in the body frame; the returned orientation
/// rotates it onto global "up" (the shortest arc, so yaw stays zero), and the
/// residual after gravity removal becomes the accelerometer bias.
pub fn static_initialize(
    samples: &[ImuSample],
    cfg: &StaticInitConfig,
) -> Result<(UnitQuaternion<f64>, ImuBiases, GravityModel), InertialError> {
    if samples.len() < cfg.min_samples {
        return Err(InertialError::TooFewSamples {
            got: samples.len(),
            min: cfg.min_samples,
        });
    }
    let accels: Vec<_> = samples.iter().map(|s| s.accel).collect();
    let gyros: Vec<_> = samples.iter().map(|s| s.gyro).collect();
    let (mean_a, accel_std) = mean_and_std(&accels);
    let (mean_w, gyro_std) = mean_and_std(&gyros);
    if accel_std > cfg.max_accel_std || gyro_std > cfg.max_gyro_std {
        return Err(InertialError::MotionDetected {
            accel_std,
            gyro_std,
        });
    }

    let gravity = GravityModel::standard(cfg.gravity_magnitude);
    let up = -gravity.g.normalize();
    let body_up = mean_a.normalize();
    // Shortest-arc rotation taking the measured gravity direction onto global
    // up; its axis is horizontal, so no yaw is introduced.
    let orientation = UnitQuaternion::rotation_between(&body_up, &up)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI));
    let accel_bias = mean_a + orientation.inverse() * gravity.g;
    Ok((
        orientation,
        ImuBiases {
            accel: accel_bias,
            gyro: mean_w,
        },
        gravity,
    ))
}

// Below this angle the quaternion increment uses a series for sin(phi/2)/phi.
const SMALL_ROTATION: f64 = 1e-8;

/// Propagate one IMU interval with the midpoint rule.
///
/// Angular rates and specific forces of the two bracketing samples are
/// averaged (after bias correction); the attitude update uses the closed-form
/// quaternion for the averaged rate, velocity integrates the average of the
/// rotated specific forces plus gravity, and position integrates the average
/// velocity.
pub fn median_integrate(
    state: &KinematicState,
    prev: &ImuSample,
    cur: &ImuSample,
    biases: &ImuBiases,
    gravity: &GravityModel,
    max_gap: f64,
) -> Result<KinematicState, InertialError> {
    let dt = cur.t - prev.t;
    if dt <= 0.0 {
        return Err(InertialError::NonIncreasing {
            t: cur.t,
            prev: prev.t,
        });
    }
    if dt > max_gap {
        return Err(InertialError::GapTooLarge { dt, max: max_gap });
    }

    let omega = (prev.gyro + cur.gyro) * 0.5 - biases.gyro;
    let phi_vec = omega * dt;
    let phi = phi_vec.norm();
    let (w, scale) = if phi < SMALL_ROTATION {
        // cos(phi/2) ~ 1 - phi^2/8, sin(phi/2)/phi ~ 1/2 - phi^2/48
        (1.0 - phi * phi / 8.0, 0.5 - phi * phi / 48.0)
    } else {
        ((0.5 * phi).cos(), (0.5 * phi).sin() / phi)
    };
    let dq = nalgebra::Quaternion::new(w, scale * phi_vec.x, scale * phi_vec.y, scale * phi_vec.z);
    let mut q = state.orientation.into_inner() * dq;
    q.normalize_mut();
    let orientation = UnitQuaternion::new_unchecked(q);

    let acc_prev = state.orientation * (prev.accel - biases.accel);
    let acc_cur = orientation * (cur.accel - biases.accel);
    let velocity = state.velocity + ((acc_prev + acc_cur) * 0.5 + gravity.g) * dt;
    let position = state.position + (state.velocity + velocity) * 0.5 * dt;

    Ok(KinematicState {
        position,
        velocity,
        orientation,
    })
}

/// Read IMU samples from CSV lines `t,ax,ay,az,wx,wy,wz` (seconds, m/s^2,
/// rad/s). An optional single header line is skipped; timestamps must be
/// strictly increasing.
pub fn read_imu_csv(reader: impl Read) -> Result<Vec<ImuSample>, InertialError> {
    let reader = BufReader::new(reader);
    let mut samples: Vec<ImuSample> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        let trimmed = text.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = [0.0_f64; 7];
        let mut ok = true;
        let mut parts = trimmed.split(',');
        for slot in fields.iter_mut() {
            match parts.next().map(|p| p.trim().parse::<f64>()) {
                Some(Ok(v)) => *slot = v,
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || parts.next().is_some() {
            if line_no == 1 && samples.is_empty() {
                continue; // header
            }
            return Err(InertialError::Malformed {
                line: line_no,
                msg: "expected 7 comma-separated numbers".into(),
            });
        }
        let sample = ImuSample {
            t: fields[0],
            accel: Vector3::new(fields[1], fields[2], fields[3]),
            gyro: Vector3::new(fields[4], fields[5], fields[6]),
        };
        if let Some(last) = samples.last() {
            if sample.t <= last.t {
                return Err(InertialError::NonIncreasing {
                    t: sample.t,
                    prev: last.t,
                });
            }
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn read_imu_csv_path(path: impl AsRef<Path>) -> Result<Vec<ImuSample>, InertialError> {
    read_imu_csv(std::fs::File::open(path)?)
}

pub fn write_imu_csv(writer: impl Write, samples: &[ImuSample]) -> Result<(), InertialError> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "# t,ax,ay,az,wx,wy,wz")?;
    for s in samples {
        writeln!(
            w,
            "{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            s.t, s.accel.x, s.accel.y, s.accel.z, s.gyro.x, s.gyro.y, s.gyro.z
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn static_samples(n: usize, accel: Vector3<f64>, gyro: Vector3<f64>) -> Vec<ImuSample> {
        (0..n)
            .map(|i| ImuSample {
                t: i as f64 * 0.005,
                accel,
                gyro,
            })
            .collect()
    }

    #[test]
    fn static_init_level() {
        let samples = static_samples(100, Vector3::new(0.0, 0.0, 9.81), Vector3::zeros());
        let (q, biases, gravity) =
            static_initialize(&samples, &StaticInitConfig::default()).unwrap();
        assert!(q.angle() < 1e-12);
        assert!(biases.accel.norm() < 1e-12);
        assert!(biases.gyro.norm() < 1e-12);
        assert_relative_eq!(gravity.g, Vector3::new(0.0, 0.0, -9.81));
    }

    #[test]
    fn static_init_gyro_offset() {
        let samples = static_samples(
            100,
            Vector3::new(0.0, 0.0, 9.81),
            Vector3::new(0.01, 0.0, 0.0),
        );
        let (_, biases, _) = static_initialize(&samples, &StaticInitConfig::default()).unwrap();
        assert_relative_eq!(biases.gyro, Vector3::new(0.01, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn static_init_tilted_recovers_attitude() {
        // Body rolled 30 degrees: the accelerometer sees gravity tilted in
        // the body frame. The estimated attitude must map it back to +z.
        let roll = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 30f64.to_radians());
        let reading = roll.inverse() * Vector3::new(0.0, 0.0, 9.81);
        let samples = static_samples(100, reading, Vector3::zeros());
        let (q, biases, _) = static_initialize(&samples, &StaticInitConfig::default()).unwrap();
        let up = q * reading;
        assert!((up.normalize() - Vector3::z()).norm() < 1e-12);
        assert!(biases.accel.norm() < 1e-9);
    }

    #[test]
    fn static_init_detects_motion() {
        let mut samples = static_samples(100, Vector3::new(0.0, 0.0, 9.81), Vector3::zeros());
        for (i, s) in samples.iter_mut().enumerate() {
            // +/- 1 m/s^2 square wave
            s.accel.x += if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let err = static_initialize(&samples, &StaticInitConfig::default()).unwrap_err();
        assert!(matches!(err, InertialError::MotionDetected { .. }));
    }

    #[test]
    fn static_init_too_few() {
        let samples = static_samples(3, Vector3::new(0.0, 0.0, 9.81), Vector3::zeros());
        assert!(matches!(
            static_initialize(&samples, &StaticInitConfig::default()),
            Err(InertialError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn integrate_static_is_fixed_point() {
        let state = KinematicState::default();
        let gravity = GravityModel::default();
        let mk = |t| ImuSample {
            t,
            accel: Vector3::new(0.0, 0.0, 9.81),
            gyro: Vector3::zeros(),
        };
        let next = median_integrate(
            &state,
            &mk(0.0),
            &mk(0.005),
            &ImuBiases::default(),
            &gravity,
            0.1,
        )
        .unwrap();
        assert!(next.position.norm() < 1e-15);
        assert!(next.velocity.norm() < 1e-15);
        assert!(next.orientation.angle() < 1e-15);
    }

    #[test]
    fn integrate_pure_yaw() {
        // Constant omega = pi/2 about z for 1 s in 100 steps: closed-form
        // says the quaternion is a 90-degree yaw.
        let gravity = GravityModel::default();
        let mut state = KinematicState::default();
        let rate = Vector3::new(0.0, 0.0, FRAC_PI_2);
        let n = 100;
        let dt = 1.0 / n as f64;
        for i in 0..n {
            let prev = ImuSample {
                t: i as f64 * dt,
                accel: state.orientation.inverse() * -gravity.g,
                gyro: rate,
            };
            // accel at the *end* orientation differs; for pure yaw about z with
            // gravity along z the reading is identical at both endpoints.
            let cur = ImuSample {
                t: (i + 1) as f64 * dt,
                accel: prev.accel,
                gyro: rate,
            };
            state = median_integrate(
                &state,
                &prev,
                &cur,
                &ImuBiases::default(),
                &gravity,
                0.1,
            )
            .unwrap();
        }
        let expected = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        assert!(state.orientation.angle_to(&expected) < 1e-12);
        assert!(state.position.norm() < 1e-9);
    }

    #[test]
    fn integrate_constant_acceleration_exact() {
        // 1 s of a = (1, 0, 0) plus gravity compensation from rest: the
        // midpoint rule is exact for constant acceleration.
        let gravity = GravityModel::default();
        let mut state = KinematicState::default();
        let accel = Vector3::new(1.0, 0.0, 9.81);
        let n = 200;
        let dt = 1.0 / n as f64;
        for i in 0..n {
            let prev = ImuSample {
                t: i as f64 * dt,
                accel,
                gyro: Vector3::zeros(),
            };
            let cur = ImuSample {
                t: (i + 1) as f64 * dt,
                accel,
                gyro: Vector3::zeros(),
            };
            state = median_integrate(
                &state,
                &prev,
                &cur,
                &ImuBiases::default(),
                &gravity,
                0.1,
            )
            .unwrap();
        }
        assert!((state.velocity - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-9);
        assert!((state.position - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn integrate_rejects_bad_timestamps() {
        let state = KinematicState::default();
        let s0 = ImuSample {
            t: 1.0,
            accel: Vector3::zeros(),
            gyro: Vector3::zeros(),
        };
        let s1 = ImuSample { t: 1.0, ..s0 };
        assert!(matches!(
            median_integrate(
                &state,
                &s0,
                &s1,
                &ImuBiases::default(),
                &GravityModel::default(),
                0.1
            ),
            Err(InertialError::NonIncreasing { .. })
        ));
        let s2 = ImuSample { t: 2.0, ..s0 };
        assert!(matches!(
            median_integrate(
                &state,
                &s0,
                &s2,
                &ImuBiases::default(),
                &GravityModel::default(),
                0.1
            ),
            Err(InertialError::GapTooLarge { .. })
        ));
    }

    #[test]
    fn quaternion_norm_preserved() {
        let gravity = GravityModel::default();
        let mut state = KinematicState::default();
        let mut t = 0.0;
        for i in 0..1000 {
            let gyro = Vector3::new(
                (i as f64 * 0.01).sin(),
                (i as f64 * 0.013).cos() * 0.5,
                0.3,
            );
            let prev = ImuSample {
                t,
                accel: Vector3::new(0.1, -0.2, 9.8),
                gyro,
            };
            t += 0.005;
            let cur = ImuSample { t, ..prev };
            state = median_integrate(
                &state,
                &prev,
                &cur,
                &ImuBiases::default(),
                &gravity,
                0.1,
            )
            .unwrap();
            assert!((state.orientation.into_inner().norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn imu_csv_round_trip() {
        let samples = vec![
            ImuSample {
                t: 0.0,
                accel: Vector3::new(0.1, 0.2, 9.81),
                gyro: Vector3::new(-0.01, 0.02, 0.0),
            },
            ImuSample {
                t: 0.005,
                accel: Vector3::new(0.0, 0.0, 9.8),
                gyro: Vector3::zeros(),
            },
        ];
        let mut buf = Vec::new();
        write_imu_csv(&mut buf, &samples).unwrap();
        let back = read_imu_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert!((back[0].accel - samples[0].accel).norm() < 1e-9);
        assert!((back[1].t - samples[1].t).abs() < 1e-12);
    }

    #[test]
    fn imu_csv_rejects_regression() {
        let text = "0.0,0,0,9.81,0,0,0\n0.0,0,0,9.81,0,0,0\n";
        assert!(matches!(
            read_imu_csv(text.as_bytes()),
            Err(InertialError::NonIncreasing { .. })
        ));
    }
}
