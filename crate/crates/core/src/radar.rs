//! Polar grid conventions, rigid poses and the closed-form radar return.
//!
//! Azimuth 0 points along +x and increases counterclockwise with z up.
//! Range bin `k` is centered at `(min_bin + k + 0.5) * range_resolution`,
//! so no bin sits on the sensor itself.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];
pub type Point2 = [f64; 2];

const ORTHO_TOL: f64 = 1e-9;

/// Number of innermost bins dropped from real sensor data.
pub const DEFAULT_MIN_BIN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarGeometry {
    pub n_theta: usize,
    pub n_delta: usize,
    pub range_resolution: f64,
    pub min_bin: usize,
}

impl PolarGeometry {
    pub fn new(n_theta: usize, n_delta: usize, range_resolution: f64, min_bin: usize) -> Result<Self> {
        let geom = Self { n_theta, n_delta, range_resolution, min_bin };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_theta == 0 || self.n_delta == 0 {
            return Err(Error::Invariant(format!(
                "geometry needs at least one beam and one bin, got {}x{}",
                self.n_theta, self.n_delta
            )));
        }
        if !(self.range_resolution > 0.0) || !self.range_resolution.is_finite() {
            return Err(Error::Invariant(format!(
                "range resolution must be positive, got {}",
                self.range_resolution
            )));
        }
        Ok(())
    }

    pub fn azimuth(&self, beam: usize) -> f64 {
        TAU * beam as f64 / self.n_theta as f64
    }

    /// Metric range of the center of bin `k`.
    pub fn range(&self, bin: usize) -> f64 {
        (self.min_bin as f64 + bin as f64 + 0.5) * self.range_resolution
    }

    /// Outer edge of the last retained bin.
    pub fn max_range(&self) -> f64 {
        (self.min_bin + self.n_delta) as f64 * self.range_resolution
    }

    /// Inner edge of the first retained bin.
    pub fn min_range(&self) -> f64 {
        self.min_bin as f64 * self.range_resolution
    }

    /// Index of the bin whose extent covers `range`, if any.
    pub fn bin_covering(&self, range: f64) -> Option<usize> {
        if !range.is_finite() || range < self.min_range() {
            return None;
        }
        let k = (range / self.range_resolution).floor() as usize;
        let k = k.checked_sub(self.min_bin)?;
        (k < self.n_delta).then_some(k)
    }

    pub fn bins_per_scan(&self) -> usize {
        self.n_theta * self.n_delta
    }

    fn check(&self, beam: usize, bin: usize) -> Result<()> {
        if beam >= self.n_theta || bin >= self.n_delta {
            return Err(Error::Range(format!(
                "(beam {beam}, bin {bin}) outside {}x{} grid",
                self.n_theta, self.n_delta
            )));
        }
        Ok(())
    }
}

/// Rigid transform in SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: [[f64; 3]; 3],
    pub translation: Point3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn new(rotation: [[f64; 3]; 3], translation: Point3) -> Result<Self> {
        let pose = Self { rotation, translation };
        pose.validate()?;
        Ok(pose)
    }

    /// Planar pose: rotation by `yaw` radians about +z, then translation.
    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        Self {
            rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
            translation: [x, y, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        if r.iter().flatten().chain(self.translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invariant("pose contains non-finite entries".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot - expected).abs() > ORTHO_TOL {
                    return Err(Error::Invariant(format!(
                        "rotation is not orthonormal (RᵀR[{i}][{j}] = {dot})"
                    )));
                }
            }
        }
        let det = determinant(r);
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::Invariant(format!("rotation determinant is {det}, expected +1")));
        }
        Ok(())
    }

    pub fn inverse(&self) -> Self {
        let r = &self.rotation;
        let mut rt = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rt[i][j] = r[j][i];
            }
        }
        let t = self.translation;
        let mut ti = [0.0; 3];
        for i in 0..3 {
            ti[i] = -(rt[i][0] * t[0] + rt[i][1] * t[1] + rt[i][2] * t[2]);
        }
        Self { rotation: rt, translation: ti }
    }

    pub fn rotate(&self, v: Point3) -> Point3 {
        let r = &self.rotation;
        [
            r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
            r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
            r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
        ]
    }

    /// Row-major homogeneous 4x4 matrix.
    pub fn to_matrix(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = self.translation;
        [
            r[0][0], r[0][1], r[0][2], t[0], //
            r[1][0], r[1][1], r[1][2], t[1], //
            r[2][0], r[2][1], r[2][2], t[2], //
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn from_matrix(m: &[f64]) -> Result<Self> {
        if m.len() != 16 {
            return Err(Error::Shape(format!("pose matrix needs 16 entries, got {}", m.len())));
        }
        let bottom = [m[12], m[13], m[14], m[15]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Invariant(format!("pose matrix bottom row is {bottom:?}")));
        }
        Self::new(
            [[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]],
            [m[3], m[7], m[11]],
        )
    }
}

fn determinant(r: &[[f64; 3]; 3]) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}

/// One polar power image, beam-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeAzimuthScan {
    pub geometry: PolarGeometry,
    pub values: Vec<f64>,
    pub timestamp: f64,
}

impl RangeAzimuthScan {
    pub fn filled(geometry: PolarGeometry, value: f64, timestamp: f64) -> Self {
        Self { geometry, values: vec![value; geometry.bins_per_scan()], timestamp }
    }

    pub fn new(geometry: PolarGeometry, values: Vec<f64>, timestamp: f64) -> Result<Self> {
        let scan = Self { geometry, values, timestamp };
        scan.validate()?;
        Ok(scan)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.values.len() != self.geometry.bins_per_scan() {
            return Err(Error::Shape(format!(
                "scan has {} values, geometry needs {}",
                self.values.len(),
                self.geometry.bins_per_scan()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("scan value {i} is not finite")));
        }
        if !(0.0..=1.0).contains(&self.timestamp) {
            return Err(Error::Invariant(format!("timestamp {} outside [0,1]", self.timestamp)));
        }
        Ok(())
    }

    pub fn get(&self, beam: usize, bin: usize) -> f64 {
        self.values[beam * self.geometry.n_delta + bin]
    }

    pub fn set(&mut self, beam: usize, bin: usize, value: f64) {
        self.values[beam * self.geometry.n_delta + bin] = value;
    }

    pub fn beam(&self, beam: usize) -> &[f64] {
        let n = self.geometry.n_delta;
        &self.values[beam * n..(beam + 1) * n]
    }
}

/// Cartesian position of a bin center in the sensor frame.
pub fn bin_to_local(beam: usize, bin: usize, geom: &PolarGeometry) -> Result<Point3> {
    geom.check(beam, bin)?;
    let (s, c) = geom.azimuth(beam).sin_cos();
    let r = geom.range(bin);
    Ok([r * c, r * s, 0.0])
}

pub fn local_to_world(p: Point3, pose: &Pose) -> Point3 {
    let q = pose.rotate(p);
    [q[0] + pose.translation[0], q[1] + pose.translation[1], q[2] + pose.translation[2]]
}

pub fn view_direction(world_point: Point3, sensor_origin: Point3) -> Result<Point3> {
    let d = [
        world_point[0] - sensor_origin[0],
        world_point[1] - sensor_origin[1],
        world_point[2] - sensor_origin[2],
    ];
    let n = norm3(d);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    Ok([d[0] / n, d[1] / n, d[2] / n])
}

/// Received power on the log₁₀ scale with transmitter constants dropped.
pub fn power_db(rcs: f64, range: f64) -> Result<f64> {
    if !(rcs > 0.0) || !(range > 0.0) {
        return Err(Error::Domain(format!("power needs rcs > 0 and range > 0, got ({rcs}, {range})")));
    }
    Ok((rcs / (range * range)).log10())
}

pub fn norm3(v: Point3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn close(a: Point3, b: Point3, tol: f64) -> bool {
        a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn bin_to_local_axis_cases() {
        // one bin of 10 m centered at 5 m
        let g = PolarGeometry::new(8, 1, 10.0, 0).unwrap();
        assert_eq!(g.range(0), 5.0);
        assert!(close(bin_to_local(0, 0, &g).unwrap(), [5.0, 0.0, 0.0], 1e-12));
        assert!((g.azimuth(2) - FRAC_PI_2).abs() < 1e-15);
        assert!(close(bin_to_local(2, 0, &g).unwrap(), [0.0, 5.0, 0.0], 1e-12));
        let g = PolarGeometry::new(8, 1, 2.0 * 2f64.sqrt(), 0).unwrap();
        assert!((g.azimuth(1) - FRAC_PI_4).abs() < 1e-15);
        assert!(close(bin_to_local(1, 0, &g).unwrap(), [1.0, 1.0, 0.0], 1e-12));
    }

    #[test]
    fn bin_to_local_out_of_bounds() {
        let g = PolarGeometry::new(4, 8, 1.0, 0).unwrap();
        assert!(matches!(bin_to_local(4, 0, &g), Err(Error::Range(_))));
        assert!(matches!(bin_to_local(0, 8, &g), Err(Error::Range(_))));
    }

    #[test]
    fn geometry_rejects_bad_values() {
        assert!(PolarGeometry::new(0, 8, 1.0, 0).is_err());
        assert!(PolarGeometry::new(4, 0, 1.0, 0).is_err());
        assert!(PolarGeometry::new(4, 8, 0.0, 0).is_err());
        assert_eq!(PolarGeometry::new(4, 8, 0.5, 2).unwrap().range(0), 1.25);
    }

    #[test]
    fn bin_covering_inverts_range() {
        let g = PolarGeometry::new(4, 10, 0.5, 3).unwrap();
        for k in 0..10 {
            assert_eq!(g.bin_covering(g.range(k)), Some(k));
        }
        assert_eq!(g.bin_covering(1.0), None);
        assert_eq!(g.bin_covering(g.max_range() + 0.1), None);
    }

    #[test]
    fn local_to_world_cases() {
        let p = [1.0, 0.0, 0.0];
        assert_eq!(local_to_world(p, &Pose::identity()), [1.0, 0.0, 0.0]);
        let shifted = Pose::new(Pose::identity().rotation, [2.0, 3.0, 0.0]).unwrap();
        assert_eq!(local_to_world(p, &shifted), [3.0, 3.0, 0.0]);
        assert!(close(local_to_world(p, &Pose::planar(0.0, 0.0, FRAC_PI_2)), [0.0, 1.0, 0.0], 1e-15));
    }

    #[test]
    fn view_direction_cases() {
        let o = [0.0; 3];
        assert_eq!(view_direction([10.0, 0.0, 0.0], o).unwrap(), [1.0, 0.0, 0.0]);
        assert_eq!(view_direction([0.0, -4.0, 0.0], o).unwrap(), [0.0, -1.0, 0.0]);
        assert!(close(view_direction([3.0, 4.0, 0.0], o).unwrap(), [0.6, 0.8, 0.0], 1e-15));
        assert!(matches!(view_direction(o, o), Err(Error::DegenerateDirection)));
    }

    #[test]
    fn power_db_cases() {
        assert_eq!(power_db(100.0, 10.0).unwrap(), 0.0);
        assert_eq!(power_db(1000.0, 10.0).unwrap(), 1.0);
        assert_eq!(power_db(1.0, 10.0).unwrap(), -2.0);
        assert!(matches!(power_db(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(power_db(1.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn pose_matrix_validation() {
        let p = Pose::planar(1.0, -2.0, 0.3);
        assert_eq!(Pose::from_matrix(&p.to_matrix()).unwrap(), p);
        let mut m = Pose::identity().to_matrix();
        m[0] = -1.0; // reflection, det -1
        assert!(matches!(Pose::from_matrix(&m), Err(Error::Invariant(_))));
        m[0] = 2.0;
        assert!(Pose::from_matrix(&m).is_err());
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (-PI..PI, -PI..PI, -PI..PI, -100.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64).prop_map(
            |(a, b, c, x, y, z)| {
                let rz = Pose::planar(0.0, 0.0, a);
                let (sb, cb) = b.sin_cos();
                let (sc, cc) = c.sin_cos();
                let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
                let rx = [[1.0, 0.0, 0.0], [0.0, cc, -sc], [0.0, sc, cc]];
                let mul = |p: [[f64; 3]; 3], q: [[f64; 3]; 3]| {
                    let mut o = [[0.0; 3]; 3];
                    for i in 0..3 {
                        for j in 0..3 {
                            o[i][j] = (0..3).map(|k| p[i][k] * q[k][j]).sum();
                        }
                    }
                    o
                };
                Pose { rotation: mul(mul(rz.rotation, ry), rx), translation: [x, y, z] }
            },
        )
    }

    proptest! {
        #[test]
        fn polar_reprojection_recovers_bin(n_theta in 1usize..720, n_delta in 1usize..500, res in 0.01..2.0f64, min_bin in 0usize..60, j in 0usize..720, k in 0usize..500) {
            let g = PolarGeometry::new(n_theta, n_delta, res, min_bin).unwrap();
            let (j, k) = (j % n_theta, k % n_delta);
            let p = bin_to_local(j, k, &g).unwrap();
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            let theta = p[1].atan2(p[0]).rem_euclid(TAU);
            let dtheta = (theta - g.azimuth(j)).abs();
            prop_assert!((r - g.range(k)).abs() < 1e-9);
            prop_assert!(dtheta.min(TAU - dtheta) < 1e-9);
        }

        #[test]
        fn pose_inverse_round_trip(pose in arb_pose(), x in -50.0..50.0f64, y in -50.0..50.0f64, z in -50.0..50.0f64) {
            prop_assert!(pose.validate().is_ok());
            let back = local_to_world(local_to_world([x, y, z], &pose), &pose.inverse());
            prop_assert!(close(back, [x, y, z], 1e-9));
        }

        #[test]
        fn power_db_monotone(s in 1e-3..1e6f64, r in 0.1..1e3f64, f in 1.001..10.0f64) {
            let base = power_db(s, r).unwrap();
            prop_assert!(power_db(s * f, r).unwrap() > base);
            prop_assert!(power_db(s, r * f).unwrap() < base);
            prop_assert!((power_db(s * 100.0, r * 10.0).unwrap() - base).abs() < 1e-12);
        }
    }
}
