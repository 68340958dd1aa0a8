//! Circular-aperture poses, beam ray fans and constant time-of-flight
//! sphere sampling.
//!
//! All experiments live in the `z = 0` scene plane, but the intersection
//! math is the general 3D ray/sphere quadratic.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{ensure_arg, Result};
use crate::signal::RangeAxis;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub const fn planar(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    #[inline]
    pub fn dot(self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn distance(self, other: Point3) -> f64 {
        (self - other).norm()
    }

    pub fn normalized(self) -> Option<Point3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Rotate about the z axis by `angle` radians.
    #[inline]
    pub fn rotate_z(self, angle: f64) -> Point3 {
        let (s, c) = angle.sin_cos();
        Point3::new(c * self.x - s * self.y, s * self.x + c * self.y, self.z)
    }
}

impl Add for Point3 {
    type Output = Point3;
    #[inline]
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    #[inline]
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    #[inline]
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// A virtual monostatic radar position on the synthetic aperture circle.
/// Transmitter and receiver share `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarPose {
    pub origin: Point3,
    /// Unit vector from `origin` toward the scene center.
    pub boresight: Point3,
    pub aperture_angle_deg: f64,
}

impl RadarPose {
    /// Pose at `angle_deg` on a circle of radius `standoff` about the origin.
    pub fn on_circle(angle_deg: f64, standoff: f64) -> Result<Self> {
        ensure_arg!(standoff.is_finite() && standoff > 0.0, "standoff must be positive, got {standoff}");
        let phi = angle_deg.to_radians();
        let origin = Point3::planar(standoff * phi.cos(), standoff * phi.sin());
        let boresight = Point3::planar(-phi.cos(), -phi.sin());
        Ok(Self { origin, boresight, aperture_angle_deg: angle_deg.rem_euclid(360.0) })
    }
}

/// Poses at `0, skip, 2 skip, ...` strictly below `arc_deg`, at most `n_angles`.
/// The pose at 0 degrees is always present.
pub fn virtual_radar_positions(
    n_angles: usize,
    standoff: f64,
    skip_deg: f64,
    arc_deg: f64,
) -> Result<Vec<RadarPose>> {
    ensure_arg!(n_angles >= 1, "need at least one pose");
    ensure_arg!(standoff.is_finite() && standoff > 0.0, "standoff must be positive, got {standoff}");
    ensure_arg!((0.0..=360.0).contains(&arc_deg), "arc must lie in [0, 360], got {arc_deg}");
    if n_angles > 1 {
        ensure_arg!(skip_deg.is_finite() && skip_deg > 0.0, "skip angle must be positive, got {skip_deg}");
    }

    let mut poses = vec![RadarPose::on_circle(0.0, standoff)?];
    for k in 1..n_angles {
        let angle = k as f64 * skip_deg;
        // Small slack so 0.1-degree steps do not lose their last pose to rounding.
        if angle >= arc_deg - 1e-9 {
            break;
        }
        poses.push(RadarPose::on_circle(angle, standoff)?);
    }
    Ok(poses)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3,
    pub direction: Point3,
}

impl Ray {
    pub fn new(origin: Point3, direction: Point3) -> Result<Self> {
        let direction = direction
            .normalized()
            .ok_or_else(|| crate::IsarError::InvalidArgument("ray direction must be non-zero".into()))?;
        Ok(Self { origin, direction })
    }

    #[inline]
    pub fn at(&self, depth: f64) -> Point3 {
        self.origin + self.direction * depth
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayBundle {
    pub rays: Vec<Ray>,
    pub beamwidth_deg: f64,
    /// Signed angle of each ray from boresight, radians. Same order as `rays`.
    pub offsets: Vec<f64>,
}

/// Fan of `n_rays` rays in the scene plane, uniform in angle across
/// `[-beamwidth/2, +beamwidth/2]` about the boresight.
pub fn generate_ray_bundle(pose: &RadarPose, beamwidth_deg: f64, n_rays: usize) -> Result<RayBundle> {
    ray_fan(pose, beamwidth_deg, n_rays, 0.0)
}

/// Like [`generate_ray_bundle`] but with the whole fan rotated by `phase`
/// times the ray spacing (`phase` in `[-0.5, 0.5]`). Used for stratified
/// sampling of the beam during training.
pub fn ray_fan(pose: &RadarPose, beamwidth_deg: f64, n_rays: usize, phase: f64) -> Result<RayBundle> {
    ensure_arg!(
        beamwidth_deg.is_finite() && beamwidth_deg > 0.0 && beamwidth_deg <= 180.0,
        "beamwidth must lie in (0, 180], got {beamwidth_deg}"
    );
    ensure_arg!(n_rays >= 1, "need at least one ray");
    ensure_arg!((-0.5..=0.5).contains(&phase), "fan phase must lie in [-0.5, 0.5], got {phase}");

    let half = beamwidth_deg.to_radians() / 2.0;
    let step = if n_rays > 1 { 2.0 * half / (n_rays - 1) as f64 } else { 0.0 };
    let mut rays = Vec::with_capacity(n_rays);
    let mut offsets = Vec::with_capacity(n_rays);
    for j in 0..n_rays {
        let offset = if n_rays > 1 { -half + (j as f64 + phase) * step } else { 0.0 };
        let direction = pose.boresight.rotate_z(offset);
        rays.push(Ray::new(pose.origin, direction)?);
        offsets.push(offset);
    }
    Ok(RayBundle { rays, beamwidth_deg, offsets })
}

/// Smallest positive depth at which `ray` meets the sphere, if any.
///
/// Solves `a l^2 + b l + c = 0` with `a = d.d`, `b = 2 (o - center).d`,
/// `c = |o - center|^2 - radius^2`.
pub fn ray_sphere_intersect(ray: &Ray, center: Point3, radius: f64) -> Option<f64> {
    let (near, far) = sphere_roots(ray, center, radius)?;
    if near > 0.0 {
        Some(near)
    } else if far > 0.0 {
        Some(far)
    } else {
        None
    }
}

/// The `(-b + sqrt(disc)) / 2a` root, when it is positive.
pub fn ray_sphere_far_root(ray: &Ray, center: Point3, radius: f64) -> Option<f64> {
    let (_, far) = sphere_roots(ray, center, radius)?;
    (far > 0.0).then_some(far)
}

fn sphere_roots(ray: &Ray, center: Point3, radius: f64) -> Option<(f64, f64)> {
    if !(radius > 0.0) {
        return None;
    }
    let oc = ray.origin - center;
    let a = ray.direction.dot(ray.direction);
    let b = 2.0 * oc.dot(ray.direction);
    let c = oc.dot(oc) - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 || a == 0.0 {
        return None;
    }
    let sqrt_disc = disc.sqrt();
    // Cancellation-free pair of roots.
    let sign = if b >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (b + sign * sqrt_disc);
    let (r1, r2) = if q != 0.0 { (q / a, c / q) } else { (0.0, 0.0) };
    Some(if r1 <= r2 { (r1, r2) } else { (r2, r1) })
}

/// Sample points on constant time-of-flight spheres, one row per ray.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub n_rays: usize,
    pub n_bins: usize,
    /// Row-major `[ray][bin]`.
    pub points: Vec<Point3>,
    /// Row-major `[ray][bin]`, strictly increasing along each ray.
    pub depths: Vec<f64>,
}

impl SampleGrid {
    #[inline]
    pub fn point(&self, ray: usize, bin: usize) -> Point3 {
        self.points[ray * self.n_bins + bin]
    }

    #[inline]
    pub fn depth(&self, ray: usize, bin: usize) -> f64 {
        self.depths[ray * self.n_bins + bin]
    }
}

/// Intersect every ray of `bundle` with every range sphere of `range_axis`,
/// all centered on the pose origin.
pub fn sample_sphere_points(pose: &RadarPose, bundle: &RayBundle, range_axis: &RangeAxis) -> SampleGrid {
    let n_rays = bundle.rays.len();
    let n_bins = range_axis.n_bins();
    let mut points = Vec::with_capacity(n_rays * n_bins);
    let mut depths = Vec::with_capacity(n_rays * n_bins);
    for ray in &bundle.rays {
        for i in 0..n_bins {
            let radius = range_axis.radius(i);
            // Rays start at the sphere center, so the root always exists and equals the radius.
            let depth = ray_sphere_intersect(ray, pose.origin, radius).unwrap_or(radius);
            points.push(ray.at(depth));
            depths.push(depth);
        }
    }
    SampleGrid { n_rays, n_bins, points, depths }
}
