//! Text formats: `x y z` point lists, height grids, visibility masks and
//! run traces.
//!
//! Trace CSV columns are `iter,coverage,noisy_coverage,x_0,y_0,z_0,...`.
//! Grid files start with a `nx,ny,x_min,x_max,y_min,y_max` header line
//! followed by `ny` rows of `nx` comma-separated heights, `y` increasing by
//! row. Masks use the same row order with `0`/`1` entries.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Point3;

use crate::cao::RunTrace;
use crate::error::{Error, Result};
use crate::surface::{DomainRect, HeightField};
use crate::visibility::{SurfaceGrid, TeamConfiguration};

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Parses whitespace- or comma-separated `x y z` lines. Blank lines and
/// lines starting with `#` are skipped.
pub fn parse_points(text: &str) -> Result<Vec<Point3<f64>>> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 3 numbers, found {}", fields.len()),
            });
        }
        let mut v = [0.0; 3];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("not a finite number: `{f}`"),
            })?;
        }
        points.push(Point3::new(v[0], v[1], v[2]));
    }
    Ok(points)
}

pub fn read_points(path: &Path) -> Result<Vec<Point3<f64>>> {
    parse_points(&fs::read_to_string(path)?)
}

pub fn format_points(points: &[Point3<f64>]) -> String {
    let mut out = String::new();
    for p in points {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    out
}

/// Reads a height grid. Besides the one-line header, a four-line header
/// (`nx`, `ny`, `x_min,x_max`, `y_min,y_max`) is accepted.
pub fn parse_grid(text: &str) -> Result<HeightField> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let numbers = |line: usize, s: &str| -> Result<Vec<f64>> {
        s.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("not a number: `{t}`"),
                })
            })
            .collect()
    };
    let (first_line, first) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty grid file".into(),
    })?;
    let first = numbers(first_line, first)?;
    let header: Vec<f64> = match first.len() {
        6 => first,
        1 => {
            let mut h = first;
            for _ in 0..3 {
                let (n, l) = lines.next().ok_or(Error::Parse {
                    line: first_line,
                    message: "truncated grid header".into(),
                })?;
                h.extend(numbers(n, l)?);
            }
            if h.len() != 6 {
                return Err(Error::Parse {
                    line: first_line,
                    message: "grid header needs nx, ny, x_min, x_max, y_min, y_max".into(),
                });
            }
            h
        }
        k => {
            return Err(Error::Parse {
                line: first_line,
                message: format!("grid header needs 6 values, found {k}"),
            })
        }
    };
    let as_count = |v: f64| -> Result<usize> {
        if v.fract() == 0.0 && v >= 2.0 {
            Ok(v as usize)
        } else {
            Err(Error::Parse {
                line: first_line,
                message: format!("grid size must be an integer >= 2, found {v}"),
            })
        }
    };
    let (nx, ny) = (as_count(header[0])?, as_count(header[1])?);
    let domain = DomainRect::new(header[2], header[3], header[4], header[5])?;
    let mut values = Vec::with_capacity(nx * ny);
    let mut rows = 0;
    for (n, l) in lines {
        let row = numbers(n, l)?;
        if row.len() != nx {
            return Err(Error::Parse {
                line: n,
                message: format!("expected {nx} heights, found {}", row.len()),
            });
        }
        values.extend(row);
        rows += 1;
    }
    if rows != ny {
        return Err(Error::Parse {
            line: first_line,
            message: format!("expected {ny} rows, found {rows}"),
        });
    }
    HeightField::from_grid(domain, nx, ny, values)
}

pub fn read_grid(path: &Path) -> Result<HeightField> {
    parse_grid(&fs::read_to_string(path)?)
}

/// Samples `field` on an `nx` x `ny` node lattice in the grid file format.
pub fn format_grid(field: &HeightField, nx: usize, ny: usize) -> String {
    let d = field.domain();
    let values = field.sample_nodes(nx, ny);
    let mut out = format!("{nx},{ny},{},{},{},{}\n", d.x_min, d.x_max, d.y_min, d.y_max);
    for row in values.chunks(nx) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Visibility mask as `ny` rows of `nx` comma-separated `0`/`1` flags.
pub fn format_mask(grid: &SurfaceGrid, mask: &[bool]) -> String {
    let mut out = String::with_capacity(mask.len() * 2);
    for row in mask.chunks(grid.nx()) {
        let line: Vec<&str> = row.iter().map(|&v| if v { "1" } else { "0" }).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn trace_header(n_agents: usize) -> Vec<String> {
    let mut h = vec!["iter".to_string(), "coverage".into(), "noisy_coverage".into()];
    for i in 0..n_agents {
        h.extend([format!("x_{i}"), format!("y_{i}"), format!("z_{i}")]);
    }
    h
}

/// Trace CSV bytes; numbers use the shortest round-trip representation.
pub fn format_trace(trace: &RunTrace) -> Result<Vec<u8>> {
    let n = trace.rows.first().map_or(0, |r| r.team.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(trace_header(n))?;
    for row in &trace.rows {
        let mut rec = vec![
            row.iter.to_string(),
            row.coverage.map_or(String::new(), |c| c.to_string()),
            row.noisy.to_string(),
        ];
        rec.extend(row.team.flatten().iter().map(|v| v.to_string()));
        w.write_record(rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// One parsed trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub coverage: Option<f64>,
    pub noisy: f64,
    pub team: TeamConfiguration,
}

pub fn parse_trace(bytes: &[u8]) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers()?.clone();
    if header.len() < 3 || (header.len() - 3) % 3 != 0 {
        return Err(Error::Parse {
            line: 1,
            message: "trace header must be iter,coverage,noisy_coverage then x,y,z per agent".into(),
        });
    }
    let n = (header.len() - 3) / 3;
    if header.iter().collect::<Vec<_>>() != trace_header(n) {
        return Err(Error::Parse {
            line: 1,
            message: "unexpected trace columns".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("not a number: `{s}`"),
            })
        };
        let iter = rec[0].parse::<usize>().map_err(|_| Error::Parse {
            line,
            message: format!("bad iteration `{}`", &rec[0]),
        })?;
        let coverage = if rec[1].is_empty() { None } else { Some(num(&rec[1])?) };
        let noisy = num(&rec[2])?;
        let state = rec.iter().skip(3).map(num).collect::<Result<Vec<f64>>>()?;
        out.push(TraceRecord {
            iter,
            coverage,
            noisy,
            team: TeamConfiguration::from_flat(&state),
        });
    }
    Ok(out)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    parse_trace(&fs::read(path)?)
}
