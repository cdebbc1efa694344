//! Binary-classification decision boundaries on the 2-sphere.
//!
//! With two prototypes `P1`, `P2` and a feature `P`, write `a = P·P1`, `b = P·P2`.
//! The boundary of the region assigned to `P1` is the zero set of
//!
//! | variant            | residual                                  |
//! |--------------------|-------------------------------------------|
//! | normalized softmax | `a - b`                                   |
//! | CosFace            | `(a - b) - m`                             |
//! | ArcFace            | `(acos b - acos a) - m`                   |
//! | GB-CosFace         | `a - (p_v + m)`, `p_v = α p_vg + (1-α)(a+b)/2` |
//!
//! Residuals are signed: positive inside the target's region. Fields are
//! sampled on a latitude-longitude grid whose pole is `(P1+P2)/‖P1+P2‖`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::margin::Variant;
use crate::math;
use crate::sphere::{self, UnitVector};

/// Default angle between the two prototypes, in degrees.
pub const DEFAULT_ANGLE_DEG: f64 = 60.0;

const BISECTION_STEPS: usize = 5;

/// Which prototype's region a residual refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub p1: UnitVector,
    pub p2: UnitVector,
    pub variant: Variant,
    /// Cosine margin for CosFace/GB-CosFace, angular margin (radians) for ArcFace.
    pub m: f64,
    pub alpha: f64,
    pub p_vg: f64,
    pub grid_resolution: usize,
}

impl BoundarySpec {
    /// Prototypes placed symmetrically about the z axis in the x-z plane,
    /// `angle_deg` apart.
    pub fn symmetric(
        angle_deg: f64,
        variant: Variant,
        m: f64,
        alpha: f64,
        p_vg: f64,
        grid_resolution: usize,
    ) -> Result<Self> {
        let half = 0.5 * angle_deg.to_radians();
        let p1 = UnitVector::new(&[math::sin(half), 0.0, math::cos(half)])?;
        let p2 = UnitVector::new(&[-math::sin(half), 0.0, math::cos(half)])?;
        let spec = Self {
            p1,
            p2,
            variant,
            m,
            alpha,
            p_vg,
            grid_resolution,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p1.dim() != 3 || self.p2.dim() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: if self.p1.dim() != 3 { self.p1.dim() } else { self.p2.dim() },
            });
        }
        let c = self.p1.dot(&self.p2)?;
        if c.abs() >= 1.0 - 1e-12 {
            return Err(Error::DegenerateSpec);
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(alloc::format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !self.m.is_finite() || !self.p_vg.is_finite() {
            return Err(Error::NonFiniteInput("boundary margin or p_vg"));
        }
        Ok(())
    }

    /// Angle between the prototypes in radians.
    pub fn prototype_angle(&self) -> f64 {
        sphere::angle_between(&self.p1, &self.p2).unwrap_or(f64::NAN)
    }
}

fn residual_from_cosines(a: f64, b: f64, spec: &BoundarySpec) -> f64 {
    match spec.variant {
        Variant::NormalizedSoftmax => a - b,
        Variant::CosFace => (a - b) - spec.m,
        Variant::ArcFace => {
            (math::acos(math::clamp_unit(b)) - math::acos(math::clamp_unit(a))) - spec.m
        }
        Variant::GbCosFace => {
            let p_v = spec.alpha * spec.p_vg + (1.0 - spec.alpha) * 0.5 * (a + b);
            a - (p_v + spec.m)
        }
    }
}

fn residual_xyz(p: &[f64; 3], spec: &BoundarySpec, target: Target) -> f64 {
    let a = math::dot(p, spec.p1.as_slice());
    let b = math::dot(p, spec.p2.as_slice());
    match target {
        Target::First => residual_from_cosines(a, b, spec),
        Target::Second => residual_from_cosines(b, a, spec),
    }
}

/// Signed boundary residual for the region of `P1`; zero on the boundary.
pub fn boundary_residual(p: &UnitVector, spec: &BoundarySpec) -> Result<f64> {
    boundary_residual_for(p, spec, Target::First)
}

/// [`boundary_residual`] for either prototype.
pub fn boundary_residual_for(p: &UnitVector, spec: &BoundarySpec, target: Target) -> Result<f64> {
    if p.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: p.dim(),
        });
    }
    let s = p.as_slice();
    Ok(residual_xyz(&[s[0], s[1], s[2]], spec, target))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub xyz: [f64; 3],
    pub lat_deg: f64,
    pub lon_deg: f64,
    /// Residual for `P1`.
    pub residual: f64,
    /// Residual for `P2`.
    pub residual_p2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryVertex {
    pub xyz: [f64; 3],
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMap {
    /// Row-major grid, `grid_resolution` latitudes by `2 * grid_resolution` longitudes.
    pub points: Vec<GridPoint>,
    pub boundary_polyline: Vec<BoundaryVertex>,
    pub n_lat: usize,
    pub n_lon: usize,
    /// Largest residual difference across any grid edge.
    pub max_edge_variation: f64,
}

/// Orthonormal frame with the pole along the prototype bisector.
struct Frame {
    e1: [f64; 3],
    e2: [f64; 3],
    e3: [f64; 3],
}

impl Frame {
    fn new(spec: &BoundarySpec) -> Result<Self> {
        let p1 = spec.p1.as_slice();
        let p2 = spec.p2.as_slice();
        let sum = [p1[0] + p2[0], p1[1] + p2[1], p1[2] + p2[2]];
        let e3 = sphere::normalize(&sum).map_err(|_| Error::DegenerateSpec)?;
        let e3 = [e3.as_slice()[0], e3.as_slice()[1], e3.as_slice()[2]];
        let along = math::dot(p1, &e3);
        let perp = [p1[0] - along * e3[0], p1[1] - along * e3[1], p1[2] - along * e3[2]];
        let e1 = sphere::normalize(&perp).map_err(|_| Error::DegenerateSpec)?;
        let e1 = [e1.as_slice()[0], e1.as_slice()[1], e1.as_slice()[2]];
        let e2 = [
            e3[1] * e1[2] - e3[2] * e1[1],
            e3[2] * e1[0] - e3[0] * e1[2],
            e3[0] * e1[1] - e3[1] * e1[0],
        ];
        Ok(Self { e1, e2, e3 })
    }

    /// Point at latitude/longitude given in radians.
    fn point(&self, lat: f64, lon: f64) -> [f64; 3] {
        let (cl, sl) = (math::cos(lat), math::sin(lat));
        let (co, so) = (math::cos(lon), math::sin(lon));
        let mut p = [0.0; 3];
        for (k, out) in p.iter_mut().enumerate() {
            *out = cl * co * self.e1[k] + cl * so * self.e2[k] + sl * self.e3[k];
        }
        p
    }
}

fn wrap_lon_deg(lon: f64) -> f64 {
    let d = lon.to_degrees() % 360.0;
    if d < 0.0 {
        d + 360.0
    } else {
        d
    }
}

/// Evaluates the residual field on the grid and extracts the zero crossing.
///
/// Crossings are bracketed on grid edges, refined by bisection, then placed by
/// linear interpolation inside the final bracket. Vertices are chained into a
/// polyline by repeatedly stepping to the nearest unvisited vertex.
pub fn trace_boundary(spec: &BoundarySpec) -> Result<BoundaryMap> {
    spec.validate()?;
    if spec.grid_resolution < 32 {
        return Err(Error::InvalidParameter(alloc::format!(
            "grid_resolution must be >= 32, got {}",
            spec.grid_resolution
        )));
    }
    let frame = Frame::new(spec)?;
    let n_lat = spec.grid_resolution;
    let n_lon = 2 * spec.grid_resolution;
    let d_lat = PI / n_lat as f64;
    let d_lon = 2.0 * PI / n_lon as f64;
    let lat_at = |i: usize| -0.5 * PI + (i as f64 + 0.5) * d_lat;
    let lon_at = |j: usize| j as f64 * d_lon;

    let mut points = Vec::with_capacity(n_lat * n_lon);
    for i in 0..n_lat {
        for j in 0..n_lon {
            let (lat, lon) = (lat_at(i), lon_at(j));
            let xyz = frame.point(lat, lon);
            points.push(GridPoint {
                xyz,
                lat_deg: lat.to_degrees(),
                lon_deg: lon.to_degrees(),
                residual: residual_xyz(&xyz, spec, Target::First),
                residual_p2: residual_xyz(&xyz, spec, Target::Second),
            });
        }
    }

    let field = |lat: f64, lon: f64| residual_xyz(&frame.point(lat, lon), spec, Target::First);
    let mut vertices = Vec::new();
    let mut max_edge_variation = 0.0f64;
    let mut visit_edge = |ra: f64, rb: f64, from: (f64, f64), to: (f64, f64)| {
        max_edge_variation = max_edge_variation.max((ra - rb).abs());
        if (ra < 0.0) == (rb < 0.0) {
            return;
        }
        let (mut t0, mut t1, mut r0, mut r1) = (0.0, 1.0, ra, rb);
        let at = |t: f64| (from.0 + t * (to.0 - from.0), from.1 + t * (to.1 - from.1));
        for _ in 0..BISECTION_STEPS {
            let tm = 0.5 * (t0 + t1);
            let (la, lo) = at(tm);
            let rm = field(la, lo);
            if (rm < 0.0) == (r0 < 0.0) {
                t0 = tm;
                r0 = rm;
            } else {
                t1 = tm;
                r1 = rm;
            }
        }
        let t = if r1 != r0 { t0 + (t1 - t0) * r0 / (r0 - r1) } else { 0.5 * (t0 + t1) };
        let (lat, lon) = at(t);
        let xyz = frame.point(lat, lon);
        vertices.push(BoundaryVertex {
            xyz,
            lat_deg: lat.to_degrees(),
            lon_deg: wrap_lon_deg(lon),
            residual: residual_xyz(&xyz, spec, Target::First),
        });
    };
    for i in 0..n_lat {
        for j in 0..n_lon {
            let here = points[i * n_lon + j].residual;
            let east = points[i * n_lon + (j + 1) % n_lon].residual;
            visit_edge(here, east, (lat_at(i), lon_at(j)), (lat_at(i), lon_at(j) + d_lon));
            if i + 1 < n_lat {
                let north = points[(i + 1) * n_lon + j].residual;
                visit_edge(here, north, (lat_at(i), lon_at(j)), (lat_at(i + 1), lon_at(j)));
            }
        }
    }

    Ok(BoundaryMap {
        points,
        boundary_polyline: chain_nearest(vertices),
        n_lat,
        n_lon,
        max_edge_variation,
    })
}

fn chord2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    math::dot(&d, &d)
}

fn chain_nearest(mut pool: Vec<BoundaryVertex>) -> Vec<BoundaryVertex> {
    let mut out = Vec::with_capacity(pool.len());
    if pool.is_empty() {
        return out;
    }
    let mut current = pool.swap_remove(0);
    while !pool.is_empty() {
        let (k, _) = pool
            .iter()
            .enumerate()
            .map(|(k, v)| (k, chord2(&current.xyz, &v.xyz)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty pool");
        let next = pool.swap_remove(k);
        out.push(current);
        current = next;
    }
    out.push(current);
    out
}

fn great_circle(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    // atan2 form keeps precision for nearby points
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    math::atan2(math::sqrt(math::dot(&cross, &cross)), math::dot(a, b))
}

/// Symmetric Hausdorff distance between two vertex sets, in radians of arc.
pub fn hausdorff_angle(a: &[BoundaryVertex], b: &[BoundaryVertex]) -> f64 {
    fn directed(from: &[BoundaryVertex], to: &[BoundaryVertex]) -> f64 {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| great_circle(&p.xyz, &q.xyz))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    directed(a, b).max(directed(b, a))
}
