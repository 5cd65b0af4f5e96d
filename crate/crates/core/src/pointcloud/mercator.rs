//! Spherical Web Mercator (EPSG:3857 style) projection.

use super::{Frame, Point3, PointCloud, PointCloudError, Pose, Result, Trajectory};
use crate::parallel::{self, Execution};

/// Sphere radius in metres.
pub const EARTH_RADIUS: f64 = 6_378_137.0;
/// Latitudes at or beyond this magnitude (degrees) are rejected.
pub const MAX_LATITUDE: f64 = 85.06;

/// Projects a geographic point (lon/lat degrees) to planar metres.
/// `z`, intensity and time pass through untouched.
pub fn to_mercator(p: &Point3) -> Result<Point3> {
    let (lon, lat) = (p.x, p.y);
    if !(-180.0..=180.0).contains(&lon) || !(lat.abs() < MAX_LATITUDE) {
        return Err(PointCloudError::OutOfMercatorBand { lon, lat });
    }
    let x = EARTH_RADIUS * lon.to_radians();
    // asinh(tan φ) == ln(tan(π/4 + φ/2)), without the rounding of tan(π/4) at the equator
    let y = EARTH_RADIUS * lat.to_radians().tan().asinh();
    Ok(Point3 { x, y, ..*p })
}

/// Analytic inverse of [`to_mercator`].
pub fn from_mercator(p: &Point3) -> Point3 {
    let lon = (p.x / EARTH_RADIUS).to_degrees();
    let lat = (p.y / EARTH_RADIUS).sinh().atan().to_degrees();
    Point3 { x: lon, y: lat, ..*p }
}

/// Projects a geographic cloud; planar clouds are returned unchanged.
pub fn project_cloud(cloud: &PointCloud, exec: Execution) -> Result<PointCloud> {
    if cloud.frame() == Frame::PlanarMeters {
        return Ok(cloud.clone());
    }
    let projected = parallel::map(cloud.points(), exec, to_mercator);
    let points = projected.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PointCloud::new(Frame::PlanarMeters, points))
}

/// Projects a geographic trajectory. Mercator is conformal, so headings
/// measured from east carry over unchanged.
pub fn project_trajectory(traj: &Trajectory) -> Result<Trajectory> {
    if traj.frame() == Frame::PlanarMeters {
        return Ok(traj.clone());
    }
    let poses = traj
        .poses()
        .iter()
        .map(|pose| {
            let position = to_mercator(&pose.position)?;
            Ok(Pose { position, ..*pose })
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(Frame::PlanarMeters, poses)
}
