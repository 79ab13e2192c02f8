//! CSV file formats for IMU, GNSS, ground truth and estimates.
//!
//! Every file has a header row; floats are written with Rust's shortest
//! round-trip formatting so a write→read→write cycle is byte-identical.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geodesy::{EnuVector, GnssFix, ImuSample};
use crate::simulator::GroundTruth;
use crate::state::{EpochState, TrajectoryEstimate};

pub const IMU_HEADER: [&str; 7] = ["t", "ax", "ay", "az", "wx", "wy", "wz"];
pub const GNSS_HEADER: [&str; 15] = [
    "t", "pe", "pn", "pu", "ve", "vn", "vu", "spe", "spn", "spu", "sve", "svn", "svu", "pos_valid", "vel_valid",
];
pub const TRUTH_HEADER: [&str; 7] = ["t", "pe", "pn", "pu", "ve", "vn", "vu"];
pub const ESTIMATE_HEADER: [&str; 9] = ["t", "pe", "pn", "pu", "ve", "vn", "vu", "b_acc", "b_gyro"];

/// Parsed numeric rows, each tagged with its 1-based line number.
struct Table {
    rows: Vec<(u64, Vec<f64>)>,
}

fn parse_error(path: &str, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_table<R: Read>(reader: R, header: &[&str], path: &str) -> Result<Table> {
    let mut lines = BufReader::new(reader).lines();
    let first = match lines.next() {
        Some(l) => l?,
        None => return Err(parse_error(path, 1, "empty file, expected a header row")),
    };
    let found: Vec<&str> = first.trim_start_matches('\u{feff}').split(',').map(str::trim).collect();
    if found != header {
        return Err(parse_error(
            path,
            1,
            format!("expected header '{}', found '{}'", header.join(","), first.trim()),
        ));
    }
    let mut rows = Vec::new();
    for (k, text) in lines.enumerate() {
        let text = text?;
        let line = k as u64 + 2;
        if text.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), fields.len()),
            ));
        }
        let mut vals = Vec::with_capacity(header.len());
        for (field, name) in fields.iter().zip(header) {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(path, line, format!("column '{name}': cannot parse '{field}'")))?;
            vals.push(v);
        }
        rows.push((line, vals));
    }
    Ok(Table { rows })
}

fn flag(v: f64, path: &str, line: u64, name: &str) -> Result<bool> {
    match v {
        x if x == 0.0 => Ok(false),
        x if x == 1.0 => Ok(true),
        _ => Err(parse_error(path, line, format!("column '{name}' must be 0 or 1, found {v}"))),
    }
}

fn require_finite(vals: &[f64], path: &str, line: u64) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(parse_error(path, line, "non-finite value"))
    }
}

fn write_rows<W: Write>(mut w: W, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut line = String::new();
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        line.clear();
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            // Writing to a String cannot fail.
            let _ = write!(line, "{v}");
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn write_imu<W: Write>(w: W, samples: &[ImuSample]) -> Result<()> {
    write_rows(
        w,
        &IMU_HEADER,
        samples.iter().map(|s| {
            vec![s.t, s.accel.x, s.accel.y, s.accel.z, s.gyro.x, s.gyro.y, s.gyro.z]
        }),
    )
}

pub fn read_imu<R: Read>(r: R, path: &str) -> Result<Vec<ImuSample>> {
    let table = read_table(r, &IMU_HEADER, path)?;
    let mut out: Vec<ImuSample> = Vec::with_capacity(table.rows.len());
    for (line, v) in table.rows {
        require_finite(&v, path, line)?;
        if let Some(prev) = out.last() {
            if v[0] <= prev.t {
                return Err(parse_error(path, line, "timestamps must be strictly increasing"));
            }
        }
        out.push(ImuSample {
            t: v[0],
            accel: Vector3::new(v[1], v[2], v[3]),
            gyro: Vector3::new(v[4], v[5], v[6]),
        });
    }
    Ok(out)
}

pub fn write_gnss<W: Write>(w: W, fixes: &[GnssFix]) -> Result<()> {
    write_rows(
        w,
        &GNSS_HEADER,
        fixes.iter().map(|f| {
            vec![
                f.t,
                f.pos.e,
                f.pos.n,
                f.pos.u,
                f.vel.e,
                f.vel.n,
                f.vel.u,
                f.pos_std.x,
                f.pos_std.y,
                f.pos_std.z,
                f.vel_std.x,
                f.vel_std.y,
                f.vel_std.z,
                f64::from(u8::from(f.pos_valid)),
                f64::from(u8::from(f.vel_valid)),
            ]
        }),
    )
}

pub fn read_gnss<R: Read>(r: R, path: &str) -> Result<Vec<GnssFix>> {
    let table = read_table(r, &GNSS_HEADER, path)?;
    let mut out: Vec<GnssFix> = Vec::with_capacity(table.rows.len());
    for (line, v) in table.rows {
        if !v[0].is_finite() {
            return Err(parse_error(path, line, "non-finite timestamp"));
        }
        if let Some(prev) = out.last() {
            if v[0] <= prev.t {
                return Err(parse_error(path, line, "timestamps must be strictly increasing"));
            }
        }
        let fix = GnssFix {
            t: v[0],
            pos: EnuVector::new(v[1], v[2], v[3]),
            vel: EnuVector::new(v[4], v[5], v[6]),
            pos_std: Vector3::new(v[7], v[8], v[9]),
            vel_std: Vector3::new(v[10], v[11], v[12]),
            pos_valid: flag(v[13], path, line, "pos_valid")?,
            vel_valid: flag(v[14], path, line, "vel_valid")?,
        };
        fix.validate().map_err(|e| parse_error(path, line, e.to_string()))?;
        out.push(fix);
    }
    Ok(out)
}

pub fn write_truth<W: Write>(w: W, truth: &GroundTruth) -> Result<()> {
    write_rows(
        w,
        &TRUTH_HEADER,
        truth.samples.iter().map(|s| {
            let (p, v) = (s.position, s.velocity);
            vec![s.t, p.e, p.n, p.u, v.e, v.n, v.u]
        }),
    )
}

/// Reads truth positions and velocities; attitude and rates are reconstructed.
pub fn read_truth<R: Read>(r: R, path: &str) -> Result<GroundTruth> {
    let table = read_table(r, &TRUTH_HEADER, path)?;
    let mut t = Vec::with_capacity(table.rows.len());
    let mut pos = Vec::with_capacity(table.rows.len());
    let mut vel = Vec::with_capacity(table.rows.len());
    for (line, v) in table.rows {
        require_finite(&v, path, line)?;
        t.push(v[0]);
        pos.push(EnuVector::new(v[1], v[2], v[3]));
        vel.push(EnuVector::new(v[4], v[5], v[6]));
    }
    GroundTruth::from_kinematics(&t, &pos, &vel).map_err(|e| parse_error(path, 0, e.to_string()))
}

pub fn write_estimate<W: Write>(w: W, est: &TrajectoryEstimate) -> Result<()> {
    write_rows(
        w,
        &ESTIMATE_HEADER,
        est.times.iter().zip(&est.states).map(|(t, s)| {
            vec![*t, s.x.e, s.x.n, s.x.u, s.v.e, s.v.n, s.v.u, s.b_acc, s.b_gyro]
        }),
    )
}

pub fn read_estimate<R: Read>(r: R, path: &str) -> Result<TrajectoryEstimate> {
    let table = read_table(r, &ESTIMATE_HEADER, path)?;
    let mut times = Vec::with_capacity(table.rows.len());
    let mut states = Vec::with_capacity(table.rows.len());
    for (line, v) in table.rows {
        require_finite(&v, path, line)?;
        times.push(v[0]);
        states.push(EpochState {
            x: EnuVector::new(v[1], v[2], v[3]),
            v: EnuVector::new(v[4], v[5], v[6]),
            b_acc: v[7],
            b_gyro: v[8],
        });
    }
    TrajectoryEstimate::new(times, states).map_err(|e| parse_error(path, 0, e.to_string()))
}

macro_rules! file_pair {
    ($read_file:ident, $write_file:ident, $read:ident, $write:ident, $ty:ty, $out:ty) => {
        pub fn $read_file(path: impl AsRef<Path>) -> Result<$out> {
            let path = path.as_ref();
            $read(open(path)?, &path.display().to_string())
        }

        pub fn $write_file(path: impl AsRef<Path>, data: &$ty) -> Result<()> {
            $write(create(path.as_ref())?, data)
        }
    };
}

file_pair!(read_imu_file, write_imu_file, read_imu, write_imu, [ImuSample], Vec<ImuSample>);
file_pair!(read_gnss_file, write_gnss_file, read_gnss, write_gnss, [GnssFix], Vec<GnssFix>);
file_pair!(read_truth_file, write_truth_file, read_truth, write_truth, GroundTruth, GroundTruth);
file_pair!(
    read_estimate_file,
    write_estimate_file,
    read_estimate,
    write_estimate,
    TrajectoryEstimate,
    TrajectoryEstimate
);
