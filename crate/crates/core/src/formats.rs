//! On-disk formats: IVF1 binary fields, legacy VTK structured points, and the
//! CSV tables for energy traces and saturation profiles.
//!
//! IVF1 is one ASCII header line
//! `IVF1 nx ny nz_paper nz_reservoir cell_size field_name` followed by one
//! byte (0 or 1) per cell in index order, x fastest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::SaturationProfile;
use crate::error::{Error, Result};
use crate::gasolver::EnergyTrace;
use crate::lattice::{BinaryField, Grid};

const MAGIC: &str = "IVF1";

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return Err(Error::InvalidArgument(format!(
            "field name {name:?} must be non-empty without whitespace"
        )));
    }
    Ok(())
}

pub fn write_ivf<W: Write>(mut out: W, field: &BinaryField, name: &str) -> Result<()> {
    check_name(name)?;
    let g = field.grid();
    writeln!(
        out,
        "{MAGIC} {} {} {} {} {} {name}",
        g.nx, g.ny, g.nz_paper, g.nz_reservoir, g.cell_size
    )?;
    let bytes: Vec<u8> = field.bits().iter().map(|&b| u8::from(b)).collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

pub fn read_ivf<R: BufRead>(mut input: R) -> Result<(BinaryField, String)> {
    let mut header = Vec::new();
    input.read_until(b'\n', &mut header)?;
    if header.last() != Some(&b'\n') {
        return format_err("IVF1 header is not terminated");
    }
    let header = String::from_utf8(header).map_err(|_| Error::Format("IVF1 header is not UTF-8".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 7 || parts[0] != MAGIC {
        return format_err(format!("bad IVF1 header {:?}", header.trim_end()));
    }
    let count = |k: usize| -> Result<usize> {
        parts[k]
            .parse()
            .map_err(|_| Error::Format(format!("bad IVF1 dimension {:?}", parts[k])))
    };
    let cell_size: f64 = parts[5]
        .parse()
        .map_err(|_| Error::Format(format!("bad IVF1 cell size {:?}", parts[5])))?;
    let grid = Grid::new(count(1)?, count(2)?, count(3)?, count(4)?, cell_size)
        .map_err(|e| Error::Format(format!("bad IVF1 grid: {e}")))?;
    let mut body = Vec::with_capacity(grid.len());
    input.read_to_end(&mut body)?;
    if body.len() != grid.len() {
        return format_err(format!(
            "IVF1 body has {} bytes, grid needs {}",
            body.len(),
            grid.len()
        ));
    }
    let mut bits = Vec::with_capacity(body.len());
    for (i, &b) in body.iter().enumerate() {
        match b {
            0 => bits.push(false),
            1 => bits.push(true),
            _ => return format_err(format!("IVF1 byte {b:#04x} at cell {i}")),
        }
    }
    Ok((BinaryField::from_bits(&grid, bits)?, parts[6].to_string()))
}

pub fn save_ivf(path: &Path, field: &BinaryField, name: &str) -> Result<()> {
    write_ivf(BufWriter::new(File::create(path)?), field, name)
}

pub fn load_ivf(path: &Path) -> Result<(BinaryField, String)> {
    read_ivf(BufReader::new(File::open(path)?))
}

/// Legacy VTK ASCII structured points, one point per cell centre.
pub fn write_vtk<W: Write>(mut out: W, field: &BinaryField, name: &str) -> Result<()> {
    check_name(name)?;
    let g = field.grid();
    let origin = g.center(0);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{name}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET STRUCTURED_POINTS")?;
    writeln!(out, "DIMENSIONS {} {} {}", g.nx, g.ny, g.nz())?;
    writeln!(out, "ORIGIN {} {} {}", origin[0], origin[1], origin[2])?;
    writeln!(out, "SPACING {0} {0} {0}", g.cell_size)?;
    writeln!(out, "POINT_DATA {}", g.len())?;
    writeln!(out, "SCALARS {name} unsigned_char 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for row in field.bits().chunks(g.nx) {
        let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_vtk(path: &Path, field: &BinaryField, name: &str) -> Result<()> {
    write_vtk(BufWriter::new(File::create(path)?), field, name)
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(e.to_string())
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct TraceRecord {
    outer: usize,
    inner: usize,
    #[serde(rename = "E_t")]
    e_t: f64,
    #[serde(rename = "E_g")]
    e_g: f64,
    #[serde(rename = "E_c")]
    e_c: f64,
    #[serde(rename = "E_a")]
    e_a: f64,
    #[serde(rename = "E_V")]
    e_v: f64,
    #[serde(rename = "V_fluid")]
    v_fluid: usize,
    seconds: f64,
}

pub const TRACE_HEADER: &str = "outer,inner,E_t,E_g,E_c,E_a,E_V,V_fluid,seconds";

pub fn write_trace_csv<W: Write>(out: W, trace: &EnergyTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if trace.rows.is_empty() {
        w.write_record(TRACE_HEADER.split(',')).map_err(csv_err)?;
    }
    for r in &trace.rows {
        w.serialize(TraceRecord {
            outer: r.outer,
            inner: r.inner,
            e_t: r.e_t,
            e_g: r.e_g,
            e_c: r.e_c,
            e_a: r.e_a,
            e_v: r.e_v,
            v_fluid: r.v_fluid,
            seconds: r.seconds,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<EnergyTrace> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header.join(",") != TRACE_HEADER {
        return format_err(format!("trace header {:?}", header.join(",")));
    }
    let rows = r
        .deserialize::<TraceRecord>()
        .map(|rec| {
            rec.map(|t| crate::gasolver::TraceRow {
                outer: t.outer,
                inner: t.inner,
                e_t: t.e_t,
                e_g: t.e_g,
                e_c: t.e_c,
                e_a: t.e_a,
                e_v: t.e_v,
                v_fluid: t.v_fluid,
                seconds: t.seconds,
            })
            .map_err(csv_err)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnergyTrace { rows })
}

pub const PROFILE_HEADER: &str = "layer,z,free_cells,ink_cells,saturation";

pub fn write_profile_csv<W: Write>(out: W, profile: &SaturationProfile) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if profile.rows.is_empty() {
        w.write_record(PROFILE_HEADER.split(',')).map_err(csv_err)?;
    }
    for row in &profile.rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_profile_csv<R: Read>(input: R) -> Result<SaturationProfile> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(csv_err)?;
    Ok(SaturationProfile { rows })
}
