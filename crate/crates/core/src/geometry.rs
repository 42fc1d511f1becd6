//! World model: column tray, manway rectangle, base state and velocity
//! commands. Everything is in SI units; inch values are converted once when a
//! configuration is loaded.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix2, RowVector2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METERS_PER_INCH: f64 = 0.0254;

/// Tolerance for point-on-boundary membership tests.
pub const BOUNDARY_TOL: f64 = 1e-9;

pub fn inches(value: f64) -> f64 {
    value * METERS_PER_INCH
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

pub fn rotation2(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Rectangular manway opening in a tray layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ManwayRect {
    vertices: [Vector3<f64>; 4],
    long_side: f64,
    short_side: f64,
    center: Vector2<f64>,
    theta: f64,
}

impl ManwayRect {
    /// Builds the rectangle from its center, long-side orientation and side
    /// lengths. Vertices are ordered counter-clockwise at height `z`.
    pub fn from_center(center: Vector2<f64>, theta: f64, long_side: f64, short_side: f64, z: f64) -> Result<Self> {
        if !(short_side > 0.0) || !(long_side >= short_side) || !long_side.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "manway sides must satisfy L_l >= L_s > 0 (got {long_side}, {short_side})"
            )));
        }
        let theta = wrap_angle(theta);
        let rot = rotation2(theta);
        let (hl, hs) = (0.5 * long_side, 0.5 * short_side);
        let corners = [(hl, -hs), (hl, hs), (-hl, hs), (-hl, -hs)];
        let vertices = corners.map(|(u, v)| {
            let p = center + rot * Vector2::new(u, v);
            Vector3::new(p.x, p.y, z)
        });
        Ok(Self {
            vertices,
            long_side,
            short_side,
            center,
            theta,
        })
    }

    /// Builds the rectangle from four consecutive vertices. Side lengths are
    /// the means of opposite sides and the orientation is taken from the long
    /// side, reported in `(-pi/2, pi/2]`.
    pub fn from_vertices(vertices: [Vector3<f64>; 4], tol: f64) -> Result<Self> {
        let side = |i: usize| vertices[(i + 1) % 4] - vertices[i];
        let lens: Vec<f64> = (0..4).map(|i| side(i).xy().norm()).collect();
        if (lens[0] - lens[2]).abs() > tol || (lens[1] - lens[3]).abs() > tol {
            return Err(Error::InvalidGeometry(format!(
                "opposite sides differ: {:.4}/{:.4}, {:.4}/{:.4}",
                lens[0], lens[2], lens[1], lens[3]
            )));
        }
        for i in 0..4 {
            let (a, b) = (side(i).xy(), side((i + 1) % 4).xy());
            let cos = a.dot(&b) / (a.norm() * b.norm());
            if !cos.is_finite() || cos.abs() > tol.max(1e-12) {
                return Err(Error::InvalidGeometry(format!(
                    "adjacent sides {i} and {} are not orthogonal (cos = {cos:.3e})",
                    (i + 1) % 4
                )));
            }
        }
        let s01 = 0.5 * (lens[0] + lens[2]);
        let s12 = 0.5 * (lens[1] + lens[3]);
        // long-side direction, averaged over both long sides (opposite sides
        // point in opposite directions around the loop)
        let dir = if s01 >= s12 {
            side(0).xy() - side(2).xy()
        } else {
            side(1).xy() - side(3).xy()
        };
        let theta = canonical_axis_angle(dir.y.atan2(dir.x));
        let center3 = vertices.iter().sum::<Vector3<f64>>() / 4.0;
        Ok(Self {
            vertices,
            long_side: s01.max(s12),
            short_side: s01.min(s12),
            center: center3.xy(),
            theta,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>; 4] {
        &self.vertices
    }
    pub fn long_side(&self) -> f64 {
        self.long_side
    }
    pub fn short_side(&self) -> f64 {
        self.short_side
    }
    pub fn center(&self) -> Vector2<f64> {
        self.center
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Coordinates of `p` in the rectangle frame (long side along the first axis).
    pub fn to_local(&self, p: &Vector2<f64>) -> Vector2<f64> {
        rotation2(self.theta).transpose() * (p - self.center)
    }

    pub fn from_local(&self, local: &Vector2<f64>) -> Vector2<f64> {
        self.center + rotation2(self.theta) * local
    }

    /// Half extents of the rectangle inflated outward by `margin`.
    pub fn half_extents(&self, margin: f64) -> Vector2<f64> {
        Vector2::new(0.5 * self.long_side + margin, 0.5 * self.short_side + margin)
    }
}

/// Maps an axis direction angle (defined modulo pi) into `(-pi/2, pi/2]`.
pub fn canonical_axis_angle(theta: f64) -> f64 {
    let mut t = wrap_angle(theta);
    if t > PI / 2.0 {
        t -= PI;
    } else if t <= -PI / 2.0 {
        t += PI;
    }
    t
}

/// True iff `p` lies in the manway rectangle inflated by `margin` (boundary
/// included).
pub fn rect_contains(manway: &ManwayRect, margin: f64, p: &Vector2<f64>) -> bool {
    let local = manway.to_local(p);
    let half = manway.half_extents(margin);
    local.x.abs() <= half.x + BOUNDARY_TOL && local.y.abs() <= half.y + BOUNDARY_TOL
}

/// Quadratic ellipse barrier `h(p) = p^T A p + B p + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipseParams {
    pub a: Matrix2<f64>,
    pub b: RowVector2<f64>,
    pub c: f64,
    pub center: Vector2<f64>,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub theta: f64,
}

impl EllipseParams {
    pub fn eval(&self, p: &Vector2<f64>) -> f64 {
        (p.transpose() * self.a * p)[(0, 0)] + (self.b * p)[(0, 0)] + self.c
    }

    pub fn gradient(&self, p: &Vector2<f64>) -> Vector2<f64> {
        2.0 * self.a * p + self.b.transpose()
    }
}

pub fn ellipse_from_axes(center: Vector2<f64>, theta: f64, a: f64, b: f64) -> Result<EllipseParams> {
    if !(b > 0.0) || !(a >= b) {
        return Err(Error::InvalidGeometry(format!(
            "ellipse semi-axes must satisfy a >= b > 0 (got a = {a}, b = {b})"
        )));
    }
    let (s, c) = theta.sin_cos();
    let (ia2, ib2) = (1.0 / (a * a), 1.0 / (b * b));
    let off = (ia2 - ib2) * c * s;
    let a_mat = Matrix2::new(c * c * ia2 + s * s * ib2, off, off, s * s * ia2 + c * c * ib2);
    let b_vec = -2.0 * center.transpose() * a_mat;
    let c0 = (center.transpose() * a_mat * center)[(0, 0)] - 1.0;
    Ok(EllipseParams {
        a: a_mat,
        b: b_vec,
        c: c0,
        center,
        semi_major: a,
        semi_minor: b,
        theta,
    })
}

/// Ellipse around the manway with semi-axes `a = L_l + pad_l`, `b = L_s + pad_s`.
pub fn ellipse_params(manway: &ManwayRect, pad_l: f64, pad_s: f64) -> Result<EllipseParams> {
    let a = manway.long_side() + pad_l;
    let b = manway.short_side() + pad_s;
    if !(b > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "padded short axis must be positive (got {b})"
        )));
    }
    ellipse_from_axes(manway.center(), manway.theta(), a, b)
}

/// Multi-layer column tray.
#[derive(Clone, Debug)]
pub struct TrayWorld {
    plate_radius: f64,
    base_offset: f64,
    layer_gap: f64,
    manways: Vec<ManwayRect>,
    ellipses: Vec<EllipseParams>,
    tray_center: Vector2<f64>,
    pad_l: f64,
    pad_s: f64,
    buffer_margin: f64,
}

#[derive(Clone, Debug)]
pub struct TrayWorldParams {
    pub plate_radius: f64,
    pub base_offset: f64,
    pub layer_gap: f64,
    pub manways: Vec<ManwayRect>,
    pub tray_center: Vector2<f64>,
    pub pad_l: f64,
    pub pad_s: f64,
    pub buffer_margin: f64,
}

impl TrayWorld {
    pub fn new(p: TrayWorldParams) -> Result<Self> {
        if !(p.plate_radius - p.base_offset > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "r_p - epsilon must be positive (r_p = {}, epsilon = {})",
                p.plate_radius, p.base_offset
            )));
        }
        if !(p.layer_gap > 0.0) {
            return Err(Error::InvalidGeometry("layer gap must be positive".into()));
        }
        if !(p.buffer_margin >= 0.0) {
            return Err(Error::InvalidGeometry("buffer margin must be non-negative".into()));
        }
        if p.manways.is_empty() {
            return Err(Error::InvalidGeometry("at least one layer is required".into()));
        }
        let ellipses = p
            .manways
            .iter()
            .map(|m| ellipse_params(m, p.pad_l, p.pad_s))
            .collect::<Result<Vec<_>>>()?;
        let world = Self {
            plate_radius: p.plate_radius,
            base_offset: p.base_offset,
            layer_gap: p.layer_gap,
            manways: p.manways,
            ellipses,
            tray_center: p.tray_center,
            pad_l: p.pad_l,
            pad_s: p.pad_s,
            buffer_margin: p.buffer_margin,
        };
        for layer in 0..world.layer_count() {
            if !world.safe_set_nonempty(layer) {
                return Err(Error::InvalidGeometry(format!(
                    "padded manway ellipse covers the whole tray disk on layer {layer}"
                )));
            }
        }
        Ok(world)
    }

    /// Three-layer tray with 35 in radius, 22 in layer gap and a centered
    /// 27.5 in x 15 in manway.
    pub fn column_default() -> Self {
        WorldConfig::column_default()
            .build()
            .expect("default column geometry is valid")
    }

    pub fn plate_radius(&self) -> f64 {
        self.plate_radius
    }
    pub fn base_offset(&self) -> f64 {
        self.base_offset
    }
    /// Radius of the disk the base (and every foothold) must stay in: `r_p - epsilon`.
    pub fn safe_radius(&self) -> f64 {
        self.plate_radius - self.base_offset
    }
    pub fn layer_count(&self) -> usize {
        self.manways.len()
    }
    pub fn layer_gap(&self) -> f64 {
        self.layer_gap
    }
    pub fn manway(&self, layer: usize) -> &ManwayRect {
        &self.manways[layer]
    }
    pub fn ellipse(&self, layer: usize) -> &EllipseParams {
        &self.ellipses[layer]
    }
    pub fn tray_center(&self) -> Vector2<f64> {
        self.tray_center
    }
    pub fn pads(&self) -> (f64, f64) {
        (self.pad_l, self.pad_s)
    }
    pub fn buffer_margin(&self) -> f64 {
        self.buffer_margin
    }

    /// Copy of this world with `manway` installed on `layer` and the tray
    /// center moved to the manway center, as done with perceived vertices.
    pub fn with_perceived_manway(&self, layer: usize, manway: ManwayRect) -> Result<Self> {
        let mut manways = self.manways.clone();
        let center = manway.center();
        manways[layer] = manway;
        Self::new(TrayWorldParams {
            plate_radius: self.plate_radius,
            base_offset: self.base_offset,
            layer_gap: self.layer_gap,
            manways,
            tray_center: center,
            pad_l: self.pad_l,
            pad_s: self.pad_s,
            buffer_margin: self.buffer_margin,
        })
    }

    /// A foothold is safe when it is inside the `r_p - epsilon` disk and
    /// outside the manway rectangle inflated by the buffer margin.
    pub fn foothold_safe(&self, layer: usize, p: &Vector2<f64>) -> bool {
        (p - self.tray_center).norm() <= self.safe_radius() + BOUNDARY_TOL
            && !rect_contains(self.manway(layer), self.buffer_margin, p)
    }

    fn safe_set_nonempty(&self, layer: usize) -> bool {
        // h1 is convex, so its maximum over the disk is on the boundary circle
        let e = self.ellipse(layer);
        let r = self.safe_radius();
        (0..4096).any(|k| {
            let t = 2.0 * PI * k as f64 / 4096.0;
            e.eval(&(self.tray_center + r * Vector2::new(t.cos(), t.sin()))) > 0.0
        })
    }

    pub fn to_config(&self) -> WorldConfig {
        let m = &self.manways[0];
        let manway_cfg = |m: &ManwayRect| ManwayConfig {
            center: [m.center().x, m.center().y],
            theta: m.theta(),
            long_side_m: Some(m.long_side()),
            long_side_in: None,
            short_side_m: Some(m.short_side()),
            short_side_in: None,
        };
        let per_layer: Vec<ManwayConfig> = self.manways.iter().map(manway_cfg).collect();
        let uniform = self.manways.iter().all(|x| x == m || same_manway(x, m));
        WorldConfig {
            tray_radius_m: Some(self.plate_radius),
            tray_radius_in: None,
            layer_gap_m: Some(self.layer_gap),
            layer_gap_in: None,
            layers: self.layer_count(),
            manway: manway_cfg(m),
            layer_manways: if uniform { None } else { Some(per_layer) },
            tray_center: Some([self.tray_center.x, self.tray_center.y]),
            epsilon_m: self.base_offset,
            pad_l_m: self.pad_l,
            pad_s_m: self.pad_s,
            buffer_margin_m: self.buffer_margin,
        }
    }
}

fn same_manway(a: &ManwayRect, b: &ManwayRect) -> bool {
    a.center() == b.center()
        && a.theta() == b.theta()
        && a.long_side() == b.long_side()
        && a.short_side() == b.short_side()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManwayConfig {
    pub center: [f64; 2],
    #[serde(default)]
    pub theta: f64,
    #[serde(rename = "L_l", default, skip_serializing_if = "Option::is_none")]
    pub long_side_m: Option<f64>,
    #[serde(rename = "L_l_in", default, skip_serializing_if = "Option::is_none")]
    pub long_side_in: Option<f64>,
    #[serde(rename = "L_s", default, skip_serializing_if = "Option::is_none")]
    pub short_side_m: Option<f64>,
    #[serde(rename = "L_s_in", default, skip_serializing_if = "Option::is_none")]
    pub short_side_in: Option<f64>,
}

/// JSON world configuration. Lengths may be given in meters (`*_m`, `L_l`,
/// `L_s`) or inches (`*_in`, `L_l_in`, `L_s_in`), never both.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tray_radius_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tray_radius_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_gap_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_gap_in: Option<f64>,
    pub layers: usize,
    pub manway: ManwayConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_manways: Option<Vec<ManwayConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tray_center: Option<[f64; 2]>,
    pub epsilon_m: f64,
    pub pad_l_m: f64,
    pub pad_s_m: f64,
    pub buffer_margin_m: f64,
}

fn length(name: &str, meters: Option<f64>, inch: Option<f64>) -> Result<f64> {
    match (meters, inch) {
        (Some(m), None) => Ok(m),
        (None, Some(i)) => Ok(inches(i)),
        (Some(_), Some(_)) => Err(Error::Config(format!("{name} given in both meters and inches"))),
        (None, None) => Err(Error::Config(format!("{name} is missing"))),
    }
}

impl ManwayConfig {
    fn build(&self, z: f64) -> Result<ManwayRect> {
        let long = length("manway L_l", self.long_side_m, self.long_side_in)?;
        let short = length("manway L_s", self.short_side_m, self.short_side_in)?;
        ManwayRect::from_center(Vector2::new(self.center[0], self.center[1]), self.theta, long, short, z)
    }
}

impl WorldConfig {
    pub fn column_default() -> Self {
        WorldConfig {
            tray_radius_m: None,
            tray_radius_in: Some(35.0),
            layer_gap_m: None,
            layer_gap_in: Some(22.0),
            layers: 3,
            manway: ManwayConfig {
                center: [0.0, 0.0],
                theta: 0.0,
                long_side_m: None,
                long_side_in: Some(27.5),
                short_side_m: None,
                short_side_in: Some(15.0),
            },
            layer_manways: None,
            tray_center: None,
            epsilon_m: 0.25,
            pad_l_m: 0.15,
            pad_s_m: 0.15,
            buffer_margin_m: 0.05,
        }
    }

    pub fn build(&self) -> Result<TrayWorld> {
        if self.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        let plate_radius = length("tray_radius", self.tray_radius_m, self.tray_radius_in)?;
        let layer_gap = length("layer_gap", self.layer_gap_m, self.layer_gap_in)?;
        let manways = match &self.layer_manways {
            Some(list) => {
                if list.len() != self.layers {
                    return Err(Error::Config(format!(
                        "layer_manways has {} entries for {} layers",
                        list.len(),
                        self.layers
                    )));
                }
                list.iter()
                    .enumerate()
                    .map(|(l, m)| m.build(l as f64 * layer_gap))
                    .collect::<Result<Vec<_>>>()?
            }
            None => (0..self.layers)
                .map(|l| self.manway.build(l as f64 * layer_gap))
                .collect::<Result<Vec<_>>>()?,
        };
        let tray_center = self
            .tray_center
            .map(|c| Vector2::new(c[0], c[1]))
            .unwrap_or_else(|| manways[0].center());
        TrayWorld::new(TrayWorldParams {
            plate_radius,
            base_offset: self.epsilon_m,
            layer_gap,
            manways,
            tray_center,
            pad_l: self.pad_l_m,
            pad_s: self.pad_s_m,
            buffer_margin: self.buffer_margin_m,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Planar pose of the robot base on a given layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseState {
    pub position: Vector2<f64>,
    pub yaw: f64,
    pub layer: usize,
}

impl BaseState {
    pub fn new(x: f64, y: f64, yaw: f64, layer: usize) -> Self {
        Self {
            position: Vector2::new(x, y),
            yaw,
            layer,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub linear: Vector2<f64>,
    pub yaw_rate: f64,
}

impl VelocityCommand {
    pub fn new(vx: f64, vy: f64, yaw_rate: f64) -> Self {
        Self {
            linear: Vector2::new(vx, vy),
            yaw_rate,
        }
    }

    pub fn within(&self, min: &Vector2<f64>, max: &Vector2<f64>) -> bool {
        (0..2).all(|i| self.linear[i] >= min[i] - 1e-12 && self.linear[i] <= max[i] + 1e-12)
    }
}
