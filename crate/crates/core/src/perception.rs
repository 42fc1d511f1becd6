//! Manway vertex measurements: frame transform, averaging and validation.

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{canonical_axis_angle, ManwayRect};

/// Pose of the perception frame in the global frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerceptionFrame {
    rotation: Matrix3<f64>,
    position: Vector3<f64>,
}

impl PerceptionFrame {
    pub fn new(rotation: Matrix3<f64>, position: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(
                "perception rotation must be a proper rotation".into(),
            ));
        }
        Ok(Self { rotation, position })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            position: Vector3::zeros(),
        }
    }

    /// Sensor at `position` looking along the base heading `yaw`.
    pub fn from_yaw(yaw: f64, position: Vector3<f64>) -> Self {
        Self {
            rotation: *Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix(),
            position,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn position(&self) -> &Vector3<f64> {
        &self.position
    }

    pub fn to_global(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v + self.position
    }

    pub fn to_local(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (v - self.position)
    }
}

/// One observation of the four manway vertices in the perception frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexMeasurement {
    pub vertices: [Vector3<f64>; 4],
}

impl VertexMeasurement {
    pub fn to_global(&self, frame: &PerceptionFrame) -> Self {
        Self {
            vertices: self.vertices.map(|v| frame.to_global(&v)),
        }
    }
}

pub fn average_vertices(samples: &[VertexMeasurement]) -> Result<[Vector3<f64>; 4]> {
    if samples.is_empty() {
        return Err(Error::NoData);
    }
    let n = samples.len() as f64;
    Ok(std::array::from_fn(|k| {
        samples.iter().map(|s| s.vertices[k]).sum::<Vector3<f64>>() / n
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationTolerances {
    pub side: f64,
    /// Degrees.
    pub angle_deg: f64,
    pub planarity: f64,
}

impl Default for ValidationTolerances {
    fn default() -> Self {
        Self {
            side: 0.02,
            angle_deg: 5.0,
            planarity: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rejection {
    SideLength { side: usize, measured: f64, expected: f64 },
    Orthogonality { corner: usize, angle_deg: f64 },
    Planarity { vertex: usize, distance: f64 },
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rejection::SideLength {
                side,
                measured,
                expected,
            } => {
                write!(f, "side {side} is {measured:.4} m, expected {expected:.4} m")
            }
            Rejection::Orthogonality { corner, angle_deg } => write!(f, "corner {corner} is {angle_deg:.2} deg"),
            Rejection::Planarity { vertex, distance } => write!(f, "vertex {vertex} is {distance:.4} m off plane"),
        }
    }
}

/// Checks the averaged vertices against the expected manway and returns the
/// rectangle fitted to them. The center is the vertex centroid and the
/// orientation comes from the long sides.
pub fn validate_manway(
    vertices: &[Vector3<f64>; 4],
    long_side: f64,
    short_side: f64,
    tol: &ValidationTolerances,
) -> std::result::Result<ManwayRect, Rejection> {
    let sides: [Vector3<f64>; 4] = std::array::from_fn(|i| vertices[(i + 1) % 4] - vertices[i]);
    let lens = sides.map(|s| s.norm());
    // long sides are the pair with the larger mean
    let even_long = lens[0] + lens[2] >= lens[1] + lens[3];
    for (i, len) in lens.iter().enumerate() {
        let expected = if (i % 2 == 0) == even_long {
            long_side
        } else {
            short_side
        };
        if (len - expected).abs() > tol.side {
            return Err(Rejection::SideLength {
                side: i,
                measured: *len,
                expected,
            });
        }
    }
    for i in 0..4 {
        let (a, b) = (sides[i], sides[(i + 1) % 4]);
        let angle = (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos().to_degrees();
        if (angle - 90.0).abs() > tol.angle_deg {
            return Err(Rejection::Orthogonality {
                corner: (i + 1) % 4,
                angle_deg: angle,
            });
        }
    }
    let centroid = vertices.iter().sum::<Vector3<f64>>() / 4.0;
    let normal = (vertices[2] - vertices[0]).cross(&(vertices[3] - vertices[1]));
    let normal = normal / normal.norm();
    for (k, v) in vertices.iter().enumerate() {
        let d = normal.dot(&(v - centroid)).abs();
        if d > tol.planarity {
            return Err(Rejection::Planarity { vertex: k, distance: d });
        }
    }
    let (l0, l1) = (0.5 * (lens[0] + lens[2]), 0.5 * (lens[1] + lens[3]));
    let dir = if even_long {
        sides[0] - sides[2]
    } else {
        sides[1] - sides[3]
    };
    let theta = canonical_axis_angle(dir.y.atan2(dir.x));
    let rect = ManwayRect::from_center(
        Vector2::new(centroid.x, centroid.y),
        theta,
        l0.max(l1),
        l0.min(l1),
        centroid.z,
    );
    rect.map_err(|_| Rejection::SideLength {
        side: 0,
        measured: l0.min(l1),
        expected: short_side,
    })
}

/// Noisy vertex sensor with its own seeded RNG.
#[derive(Clone, Debug)]
pub struct SimulatedSensor {
    truth: [Vector3<f64>; 4],
    noise: Normal<f64>,
    rng: ChaCha8Rng,
}

impl SimulatedSensor {
    pub fn new(truth: [Vector3<f64>; 4], sigma: f64, seed: u64) -> Result<Self> {
        let noise = Normal::new(0.0, sigma)
            .map_err(|_| Error::InvalidParameter(format!("noise sigma must be non-negative (got {sigma})")))?;
        Ok(Self {
            truth,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn for_manway(manway: &ManwayRect, sigma: f64, seed: u64) -> Result<Self> {
        Self::new(*manway.vertices(), sigma, seed)
    }

    pub fn truth(&self) -> &[Vector3<f64>; 4] {
        &self.truth
    }

    /// One observation in `frame`.
    pub fn measure(&mut self, frame: &PerceptionFrame) -> VertexMeasurement {
        let vertices = self.truth.map(|v| {
            let local = frame.to_local(&v);
            local + Vector3::from_fn(|_, _| self.noise.sample(&mut self.rng))
        });
        VertexMeasurement { vertices }
    }

    pub fn collect(&mut self, frame: &PerceptionFrame, count: usize) -> Vec<VertexMeasurement> {
        (0..count).map(|_| self.measure(frame)).collect()
    }
}

/// Error statistic of an averaged estimate: mean over the four vertices of
/// the Euclidean error of each averaged vertex.
pub fn mean_vertex_error(estimate: &[Vector3<f64>; 4], truth: &[Vector3<f64>; 4]) -> f64 {
    estimate.iter().zip(truth).map(|(e, t)| (e - t).norm()).sum::<f64>() / 4.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    #[serde(rename = "R")]
    pub rotation: [[f64; 3]; 3],
    pub p: [f64; 3],
}

/// One JSON Lines record of the measurement stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub tick: u64,
    #[serde(rename = "vertices_P")]
    pub vertices: [[f64; 3]; 4],
    pub frame: FrameRecord,
}

impl MeasurementRecord {
    pub fn new(tick: u64, m: &VertexMeasurement, frame: &PerceptionFrame) -> Self {
        let r = frame.rotation();
        Self {
            tick,
            vertices: m.vertices.map(|v| [v.x, v.y, v.z]),
            frame: FrameRecord {
                rotation: std::array::from_fn(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
                p: [frame.position().x, frame.position().y, frame.position().z],
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;
    use std::f64::consts::PI;

    const LL: f64 = 0.6985;
    const LS: f64 = 0.381;

    fn random_frame(rng: &mut ChaCha8Rng) -> PerceptionFrame {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.1..1.0),
        );
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), rng.random_range(-3.0..3.0));
        let p = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        PerceptionFrame::new(*r.matrix(), p).unwrap()
    }

    #[test]
    fn transform_cases() {
        let v = Vector3::new(0.3, -0.2, 0.1);
        assert_eq!(PerceptionFrame::identity().to_global(&v), v);
        let f = PerceptionFrame::from_yaw(FRAC_PI_2, Vector3::zeros());
        assert_relative_eq!(f.to_global(&Vector3::x()), Vector3::y(), epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let f = random_frame(&mut rng);
            let a = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let b = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            assert_relative_eq!(f.to_local(&f.to_global(&a)), a, epsilon = 1e-12);
            let d = (f.to_global(&a) - f.to_global(&b)).norm() - (a - b).norm();
            assert!(d.abs() <= 1e-12);
        }
        assert!(PerceptionFrame::new(Matrix3::identity() * 2.0, Vector3::zeros()).is_err());
        assert!(PerceptionFrame::new(-Matrix3::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    fn averaging() {
        let a = VertexMeasurement {
            vertices: [Vector3::zeros(); 4],
        };
        let b = VertexMeasurement {
            vertices: [Vector3::from_element(2.0); 4],
        };
        assert_eq!(average_vertices(&[a, b]).unwrap(), [Vector3::from_element(1.0); 4]);
        assert_eq!(average_vertices(&[b, b, b]).unwrap(), b.vertices);
        assert!(matches!(average_vertices(&[]), Err(Error::NoData)));
    }

    #[test]
    fn mean_of_hundred_samples_shrinks_noise_tenfold() {
        let rect = ManwayRect::from_center(Vector2::new(0.1, -0.05), 0.3, LL, LS, 0.0).unwrap();
        let mut sensor = SimulatedSensor::for_manway(&rect, 0.02, 3).unwrap();
        let frame = PerceptionFrame::from_yaw(0.4, Vector3::new(0.2, 0.1, 0.3));
        let trials = 400;
        let mut sq = 0.0;
        let mut inside = 0;
        for _ in 0..trials {
            let avg = average_vertices(&sensor.collect(&frame, 100)).unwrap();
            for (a, v) in avg.iter().zip(rect.vertices()) {
                let e = frame.to_global(a) - v;
                for c in 0..3 {
                    sq += e[c] * e[c];
                    inside += (e[c].abs() <= 3.0 * 0.002) as usize;
                }
            }
        }
        let count = (trials * 12) as f64;
        let sd = (sq / count).sqrt();
        assert!((sd - 0.002).abs() < 0.0002, "{sd}");
        // per-coordinate three-sigma coverage
        assert!(inside as f64 / count > 0.99);
    }

    #[test]
    fn exact_geometry_accepted() {
        let rect = ManwayRect::from_center(Vector2::zeros(), 0.0, LL, LS, 0.0).unwrap();
        let got = validate_manway(rect.vertices(), LL, LS, &ValidationTolerances::default()).unwrap();
        assert!(got.theta().abs() <= 1e-9);
        assert_relative_eq!(got.long_side(), LL, epsilon = 1e-12);
        assert_relative_eq!(got.short_side(), LS, epsilon = 1e-12);
    }

    #[test]
    fn corner_perturbation_rejected() {
        let rect = ManwayRect::from_center(Vector2::zeros(), 0.0, LL, LS, 0.0).unwrap();
        for k in 0..4 {
            for dir in [Vector3::x(), Vector3::y(), Vector3::new(1.0, 1.0, 0.0).normalize()] {
                let mut v = *rect.vertices();
                v[k] += dir * 0.05;
                let r = validate_manway(&v, LL, LS, &ValidationTolerances::default());
                assert!(matches!(r, Err(Rejection::SideLength { .. })), "{k} {dir:?} {r:?}");
            }
        }
        let mut v = *rect.vertices();
        v[2].z += 0.05;
        assert!(matches!(
            validate_manway(&v, LL, LS, &ValidationTolerances::default()),
            Err(Rejection::Planarity { .. })
        ));
    }

    #[test]
    fn rotated_rectangles_recover_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let theta = rng.random_range(-PI..PI);
            let c = Vector2::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
            let rect = ManwayRect::from_center(c, theta, LL, LS, 0.5).unwrap();
            let got = validate_manway(rect.vertices(), LL, LS, &ValidationTolerances::default()).unwrap();
            // orientation of a rectangle is defined modulo pi
            let d = crate::geometry::wrap_angle(2.0 * (got.theta() - theta)) / 2.0;
            assert!(d.abs() < 1e-9);
            assert_relative_eq!(got.center(), c, epsilon = 1e-12);
        }
    }

    #[test]
    fn record_serializes_with_expected_keys() {
        let mut s = SimulatedSensor::new([Vector3::zeros(); 4], 0.0, 0).unwrap();
        let f = PerceptionFrame::identity();
        let rec = MeasurementRecord::new(7, &s.measure(&f), &f);
        let v = serde_json::to_value(&rec).unwrap();
        assert_eq!(v["tick"], 7);
        assert!(v["vertices_P"].is_array() && v["frame"]["R"].is_array() && v["frame"]["p"].is_array());
    }
}
