//! `binary-v1` and CSV readers/writers for clouds and trajectories.
//!
//! binary-v1 layout (little-endian): magic `THPC`, `u32` version, `u8` frame
//! flag (0 geographic, 1 planar), `u64` count, then `count` records of
//! `f64 x, f64 y, f64 z, u16 intensity, u16 pad, f64 time`. A missing time is
//! stored as NaN.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Frame, Location, Point3, PointCloud, PointCloudError, Pose, Result, Trajectory};

pub const BINARY_MAGIC: &[u8; 4] = b"THPC";
pub const BINARY_VERSION: u32 = 1;
pub const BINARY_RECORD_LEN: usize = 36;
const HEADER_LEN: usize = 4 + 4 + 1 + 8;

const CLOUD_HEADER: [&str; 5] = ["x", "y", "z", "intensity", "time"];
const TRAJ_HEADER: [&str; 5] = ["x", "y", "z", "heading", "time"];

/// On-disk point-cloud format. CSV carries no frame flag, so the caller
/// states it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    BinaryV1,
    Csv(Frame),
}

impl Format {
    /// Picks CSV for a `.csv` extension and binary-v1 otherwise.
    pub fn from_path(path: &Path, csv_frame: Frame) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv(csv_frame),
            _ => Format::BinaryV1,
        }
    }
}

/// Loads a cloud. Zero points is an error since no stage can start from it.
pub fn load_point_cloud(path: impl AsRef<Path>, format: Format) -> Result<PointCloud> {
    let cloud = match format {
        Format::BinaryV1 => decode_binary(&std::fs::read(path)?)?,
        Format::Csv(frame) => read_csv_cloud(path.as_ref(), frame)?,
    };
    if cloud.is_empty() {
        return Err(PointCloudError::EmptyCloud);
    }
    Ok(cloud)
}

pub fn save_point_cloud(cloud: &PointCloud, path: impl AsRef<Path>, format: Format) -> Result<()> {
    match format {
        Format::BinaryV1 => {
            let mut out = BufWriter::new(File::create(path)?);
            out.write_all(&encode_binary(cloud))?;
            out.flush()?;
        }
        Format::Csv(_) => {
            let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
            w.write_record(CLOUD_HEADER).map_err(csv_io)?;
            for p in cloud.points() {
                let time = p.time.map(|t| t.to_string()).unwrap_or_default();
                w.write_record([
                    p.x.to_string(),
                    p.y.to_string(),
                    p.z.to_string(),
                    p.intensity.to_string(),
                    time,
                ])
                .map_err(csv_io)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub(crate) fn encode_binary(cloud: &PointCloud) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + cloud.len() * BINARY_RECORD_LEN);
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    buf.push(cloud.frame().flag());
    buf.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    for p in cloud.points() {
        buf.extend_from_slice(&p.x.to_le_bytes());
        buf.extend_from_slice(&p.y.to_le_bytes());
        buf.extend_from_slice(&p.z.to_le_bytes());
        buf.extend_from_slice(&p.intensity.to_le_bytes());
        buf.extend_from_slice(&0u16.to_le_bytes());
        buf.extend_from_slice(&p.time.unwrap_or(f64::NAN).to_le_bytes());
    }
    buf
}

fn f64_at(buf: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(buf[at..at + 8].try_into().unwrap())
}

pub(crate) fn decode_binary(buf: &[u8]) -> Result<PointCloud> {
    let bad = |at: usize, reason: &str| PointCloudError::MalformedRecord {
        at: Location::Offset(at as u64),
        reason: reason.to_string(),
    };
    if buf.len() < HEADER_LEN {
        return Err(bad(0, "truncated header"));
    }
    if &buf[0..4] != BINARY_MAGIC {
        return Err(bad(0, "bad magic"));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(bad(4, &format!("unsupported version {version}")));
    }
    let frame = Frame::from_flag(buf[8]).ok_or_else(|| bad(8, "unknown frame flag"))?;
    let declared = u64::from_le_bytes(buf[9..17].try_into().unwrap());

    let body = &buf[HEADER_LEN..];
    let found = (body.len() / BINARY_RECORD_LEN) as u64;
    if found != declared {
        return Err(PointCloudError::HeaderMismatch { declared, found });
    }
    if body.len() % BINARY_RECORD_LEN != 0 {
        let at = HEADER_LEN + found as usize * BINARY_RECORD_LEN;
        return Err(bad(at, "trailing partial record"));
    }

    let mut points = Vec::with_capacity(found as usize);
    for (i, rec) in body.chunks_exact(BINARY_RECORD_LEN).enumerate() {
        let time = f64_at(rec, 28);
        let p = Point3 {
            x: f64_at(rec, 0),
            y: f64_at(rec, 8),
            z: f64_at(rec, 16),
            intensity: u16::from_le_bytes([rec[24], rec[25]]),
            time: if time.is_nan() { None } else { Some(time) },
        };
        if !p.is_finite() {
            return Err(bad(HEADER_LEN + i * BINARY_RECORD_LEN, "non-finite coordinate"));
        }
        points.push(p);
    }
    Ok(PointCloud::new(frame, points))
}

fn csv_io(e: csv::Error) -> PointCloudError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => PointCloudError::Io(io),
        other => PointCloudError::MalformedRecord {
            at: Location::Line(0),
            reason: format!("{other:?}"),
        },
    }
}

fn csv_rows(path: &Path, expected_header: [&str; 5]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_io)?;
    let header = reader.headers().map_err(csv_io)?.clone();
    if header.iter().ne(expected_header) {
        return Err(PointCloudError::MalformedRecord {
            at: Location::Line(1),
            reason: format!("expected header {}", expected_header.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in reader.into_records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            PointCloudError::MalformedRecord { at: Location::Line(line), reason: e.to_string() }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 5 {
            return Err(PointCloudError::MalformedRecord {
                at: Location::Line(line),
                reason: format!("expected 5 fields, got {}", rec.len()),
            });
        }
        rows.push((line, rec));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, line: u64, idx: usize, name: &str) -> Result<T> {
    rec[idx].parse::<T>().map_err(|_| PointCloudError::MalformedRecord {
        at: Location::Line(line),
        reason: format!("bad {name} field {:?}", &rec[idx]),
    })
}

fn finite(rec: &csv::StringRecord, line: u64, idx: usize, name: &str) -> Result<f64> {
    let v: f64 = field(rec, line, idx, name)?;
    if !v.is_finite() {
        return Err(PointCloudError::MalformedRecord {
            at: Location::Line(line),
            reason: format!("{name} is not finite"),
        });
    }
    Ok(v)
}

fn read_csv_cloud(path: &Path, frame: Frame) -> Result<PointCloud> {
    let rows = csv_rows(path, CLOUD_HEADER)?;
    let mut points = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        let line = *line;
        points.push(Point3 {
            x: finite(rec, line, 0, "x")?,
            y: finite(rec, line, 1, "y")?,
            z: finite(rec, line, 2, "z")?,
            intensity: field(rec, line, 3, "intensity")?,
            time: if rec[4].is_empty() { None } else { Some(field(rec, line, 4, "time")?) },
        });
    }
    Ok(PointCloud::new(frame, points))
}

pub fn load_trajectory(path: impl AsRef<Path>, frame: Frame) -> Result<Trajectory> {
    let mut poses = Vec::new();
    for (line, rec) in csv_rows(path.as_ref(), TRAJ_HEADER)? {
        poses.push(Pose::new(
            finite(&rec, line, 0, "x")?,
            finite(&rec, line, 1, "y")?,
            finite(&rec, line, 2, "z")?,
            finite(&rec, line, 3, "heading")?,
            finite(&rec, line, 4, "time")?,
        ));
    }
    Trajectory::new(frame, poses)
}

pub fn save_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(TRAJ_HEADER).map_err(csv_io)?;
    for p in traj.poses() {
        w.write_record([
            p.position.x.to_string(),
            p.position.y.to_string(),
            p.position.z.to_string(),
            p.heading.to_string(),
            p.time.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}
