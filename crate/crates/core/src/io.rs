//! CSV interchange. Floats are written with 17 significant digits so that
//! every `f64` survives a round trip.

use std::io::{Read, Write};

use crate::channels::{Mat4, Mat8};
use crate::error::{Error, Result};
use crate::exact::DensityMatrix;
use crate::observables::{HammingClassGrid, SeriesMeta, TimeSeries};

pub const MAX_DUMP_SITES: usize = 8;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_series_csv<W: Write>(w: W, s: &TimeSeries) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t_mcs", "value", "stderr", "variant", "n_sites", "mode"])?;
    let n = s.meta.n_sites.to_string();
    for k in 0..s.len() {
        let se = s.stderr.as_ref().map(|e| fmt_f64(e[k])).unwrap_or_default();
        out.write_record([
            fmt_f64(s.times[k]).as_str(),
            &fmt_f64(s.values[k]),
            &se,
            &s.meta.variant,
            &n,
            &s.meta.mode,
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("{what} {field:?} is not a number"),
    })
}

/// Reads a series written by [`write_series_csv`]; the file does not name
/// its observable, so the caller supplies it.
pub fn read_series_csv<R: Read>(r: R, observable: &str) -> Result<TimeSeries> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let expected = ["t_mcs", "value", "stderr", "variant", "n_sites", "mode"];
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}", expected.join(",")),
        });
    }
    let (mut times, mut values, mut errs) = (Vec::new(), Vec::new(), Vec::new());
    let mut meta: Option<SeriesMeta> = None;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        times.push(parse_f64(&rec[0], line, "time")?);
        values.push(parse_f64(&rec[1], line, "value")?);
        if rec[2].trim().is_empty() {
            errs.push(None);
        } else {
            errs.push(Some(parse_f64(&rec[2], line, "stderr")?));
        }
        let n_sites = rec[4].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("n_sites {:?} is not an integer", &rec[4]),
        })?;
        let m = SeriesMeta {
            observable: observable.to_string(),
            variant: rec[3].to_string(),
            n_sites,
            mode: rec[5].to_string(),
        };
        match &meta {
            None => meta = Some(m),
            Some(prev) if *prev != m => {
                return Err(Error::Parse {
                    line,
                    msg: "variant, n_sites or mode changes within the series".into(),
                })
            }
            Some(_) => {}
        }
    }
    let meta = meta.ok_or(Error::Parse {
        line: 1,
        msg: "series has no rows".into(),
    })?;
    let stderr = if errs.iter().all(Option::is_some) {
        Some(errs.into_iter().map(Option::unwrap).collect())
    } else if errs.iter().all(Option::is_none) {
        None
    } else {
        return Err(Error::Parse {
            line: 1,
            msg: "stderr column is only partially filled".into(),
        });
    };
    TimeSeries::new(times, values, stderr, meta)
}

/// One row per occupied class, ordered by `(c, a, b)`.
pub fn write_grid_csv<W: Write>(w: W, grid: &HammingClassGrid) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["c", "a", "b", "mean_abs", "mean_real", "count"])?;
    for (c, a, b, cell) in grid.iter() {
        if cell.count == 0 {
            continue;
        }
        out.write_record([
            c.to_string(),
            a.to_string(),
            b.to_string(),
            fmt_f64(cell.mean_abs()),
            fmt_f64(cell.mean_real()),
            cell.count.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Row-major matrix without a header.
pub fn write_matrix_csv<W: Write, R: AsRef<[f64]>>(w: W, rows: &[R]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for r in rows {
        out.write_record(r.as_ref().iter().map(|&v| fmt_f64(v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_mat8_csv<W: Write>(w: W, m: &Mat8) -> Result<()> {
    write_matrix_csv(w, m)
}

/// Dumps a density matrix of at most eight sites.
pub fn write_density_csv<W: Write>(w: W, rho: &DensityMatrix) -> Result<()> {
    if rho.n_sites() > MAX_DUMP_SITES {
        return Err(Error::ChainLength {
            n: rho.n_sites(),
            min: 1,
            max: MAX_DUMP_SITES,
        });
    }
    let rows: Vec<&[f64]> = (0..rho.dim()).map(|i| rho.row(i)).collect();
    write_matrix_csv(w, &rows)
}

/// Parses a real 4×4 matrix: four lines of four comma-separated numbers.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_x_csv(text: &str) -> Result<Mat4> {
    let mut m = [[0.0; 4]; 4];
    let mut row = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        if row == 4 {
            return Err(Error::Parse {
                line,
                msg: "more than four rows".into(),
            });
        }
        let fields: Vec<&str> = s.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 4 columns, found {}", fields.len()),
            });
        }
        for (c, f) in fields.iter().enumerate() {
            let v = parse_f64(f, line, "entry")?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("entry {f:?} is not finite"),
                });
            }
            m[row][c] = v;
        }
        row += 1;
    }
    if row != 4 {
        return Err(Error::Parse {
            line: text.lines().count(),
            msg: format!("expected 4 rows, found {row}"),
        });
    }
    Ok(m)
}
