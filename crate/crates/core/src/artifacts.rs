//! CSV forms of the intermediate objects, so each pipeline stage can be run
//! on its own.
//!
//! | artifact   | columns                                  |
//! |------------|------------------------------------------|
//! | path       | `t, x1..xd`                              |
//! | rough path | `t, x1..xd, b11, b12, ..., bdd`          |
//! | flow       | `t, y1..ye, j11, j12, ..., jee`          |
//! | samples    | see [`SAMPLE_COLUMNS`]                   |

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::PathSample;
use crate::grid::TimeGrid;
use crate::group::G2Element;
use crate::lift::RoughPath;
use crate::rde::FlowResult;

/// Fixed columns of the per-sample experiment CSV; `y1..ye` follow `t`.
pub const SAMPLE_COLUMNS: [&str; 7] = ["sample_index", "t", "lambda_min", "det", "verdict", "pvar_driver", "log_norm_J"];

fn fmt(v: f64) -> String {
    v.to_string()
}

fn parse(field: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Io(format!("not a number: {field:?}")))
}

/// Reads a numeric table and checks its header against `expect(width)`.
fn read_table<R: Read>(input: R, expect: impl Fn(usize) -> Option<Vec<String>>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    match expect(header.len()) {
        Some(want) if want == header => {}
        _ => return Err(Error::Io(format!("unexpected CSV header {header:?}"))),
    }
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        times.push(parse(&rec[0])?);
        for f in rec.iter().skip(1) {
            rows.push(parse(f)?);
        }
    }
    let width = header.len() - 1;
    let values = DMatrix::from_row_slice(times.len(), width, &rows);
    Ok((times, values))
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

fn pairs(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).flat_map(move |i| (1..=n).map(move |j| format!("{prefix}{i}{j}")))
}

/// Solves `1 + n + n² = width` for `n`.
fn square_width(width: usize) -> Option<usize> {
    (1..=width).find(|n| 1 + n + n * n == width)
}

pub fn write_path_csv<W: Write>(path: &PathSample, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(indexed("x", path.dim()));
    w.write_record(&header)?;
    for (i, t) in path.grid.points().iter().enumerate() {
        let mut row = vec![fmt(*t)];
        row.extend(path.values.row(i).iter().map(|v| fmt(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_path_csv<R: Read>(input: R) -> Result<PathSample> {
    let (times, values) = read_table(input, |w| {
        let mut h = vec!["t".to_string()];
        h.extend(indexed("x", w.checked_sub(1)?));
        (w >= 2).then_some(h)
    })?;
    PathSample::new(TimeGrid::new(times)?, values, 0, 0)
}

pub fn write_rough_path_csv<W: Write>(x: &RoughPath, out: W) -> Result<()> {
    x.write_csv(out)
}

pub fn read_rough_path_csv<R: Read>(input: R) -> Result<RoughPath> {
    let (times, values) = read_table(input, |w| {
        let d = square_width(w)?;
        let mut h = vec!["t".to_string()];
        h.extend(indexed("x", d));
        h.extend(pairs("b", d));
        Some(h)
    })?;
    let d = square_width(values.ncols() + 1).expect("checked header");
    let elements = (0..values.nrows())
        .map(|i| {
            let row: Vec<f64> = values.row(i).iter().copied().collect();
            G2Element::from_slices(&row[..d], &row[d..])
        })
        .collect::<Result<Vec<_>>>()?;
    let x = RoughPath::from_elements(TimeGrid::new(times)?, elements)?;
    x.ensure_geometric()?;
    Ok(x)
}

pub fn write_flow_csv<W: Write>(flow: &FlowResult, out: W) -> Result<()> {
    let jac = flow.jacobian()?;
    let e = flow.state_dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(indexed("y", e));
    header.extend(pairs("j", e));
    w.write_record(&header)?;
    for (i, t) in flow.grid.points().iter().enumerate() {
        let mut row = vec![fmt(*t)];
        row.extend(flow.y[i].iter().map(|v| fmt(*v)));
        let j = &jac.j[i];
        for r in 0..e {
            row.extend((0..e).map(|c| fmt(j[(r, c)])));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_flow_csv<R: Read>(input: R) -> Result<FlowResult> {
    let (times, values) = read_table(input, |w| {
        let e = square_width(w)?;
        let mut h = vec!["t".to_string()];
        h.extend(indexed("y", e));
        h.extend(pairs("j", e));
        Some(h)
    })?;
    let e = square_width(values.ncols() + 1).expect("checked header");
    let y = (0..values.nrows()).map(|i| values.row(i).columns(0, e).transpose()).collect();
    let j = (0..values.nrows())
        .map(|i| DMatrix::from_row_slice(e, e, &values.row(i).columns(e, e * e).iter().copied().collect::<Vec<_>>()))
        .collect();
    FlowResult::from_parts(TimeGrid::new(times)?, y, j)
}

/// One row of the per-sample experiment CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub sample_index: u64,
    pub t: f64,
    pub y: DVector<f64>,
    pub lambda_min: f64,
    pub det: f64,
    pub nondegenerate: bool,
    pub pvar_driver: f64,
    pub log_norm_j: f64,
}

pub const VERDICT_NONDEGENERATE: &str = "non-degenerate";
pub const VERDICT_DEGENERATE: &str = "degenerate";

pub fn sample_header(e: usize) -> Vec<String> {
    let mut h = vec![SAMPLE_COLUMNS[0].to_string(), SAMPLE_COLUMNS[1].to_string()];
    h.extend(indexed("y", e));
    h.extend(SAMPLE_COLUMNS[2..].iter().map(|s| s.to_string()));
    h
}

pub fn write_samples_csv<W: Write>(e: usize, rows: &[SampleRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(sample_header(e))?;
    for r in rows {
        let mut rec = vec![r.sample_index.to_string(), fmt(r.t)];
        rec.extend(r.y.iter().map(|v| fmt(*v)));
        rec.push(fmt(r.lambda_min));
        rec.push(fmt(r.det));
        rec.push(if r.nondegenerate { VERDICT_NONDEGENERATE } else { VERDICT_DEGENERATE }.to_string());
        rec.push(fmt(r.pvar_driver));
        rec.push(fmt(r.log_norm_j));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: Read>(input: R) -> Result<Vec<SampleRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let e = header.len().checked_sub(SAMPLE_COLUMNS.len()).unwrap_or(0);
    if e == 0 || header != sample_header(e) {
        return Err(Error::Io(format!("unexpected sample CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let sample_index = rec[0].parse().map_err(|_| Error::Io(format!("bad sample index {:?}", &rec[0])))?;
        let y = DVector::from_iterator(e, (0..e).map(|k| parse(&rec[2 + k])).collect::<Result<Vec<_>>>()?);
        let verdict = &rec[4 + e];
        let nondegenerate = match verdict {
            VERDICT_NONDEGENERATE => true,
            VERDICT_DEGENERATE => false,
            other => return Err(Error::Io(format!("unknown verdict {other:?}"))),
        };
        rows.push(SampleRow {
            sample_index,
            t: parse(&rec[1])?,
            y,
            lambda_min: parse(&rec[2 + e])?,
            det: parse(&rec[3 + e])?,
            nondegenerate,
            pvar_driver: parse(&rec[5 + e])?,
            log_norm_j: parse(&rec[6 + e])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::VectorFieldSystem;
    use crate::gaussian::{sample_paths, CovarianceModel, Kernel};
    use crate::lift::lift_piecewise_linear;
    use crate::rde::solve_flow_jacobian;

    #[test]
    fn round_trips_are_exact() {
        let model = CovarianceModel::iid(Kernel::fractional(0.6).unwrap(), 2, 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let path = sample_paths(&model, &grid, 1, 5).unwrap().remove(0);

        let mut buf = Vec::new();
        write_path_csv(&path, &mut buf).unwrap();
        let back = read_path_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values, path.values);
        assert_eq!(back.grid, path.grid);

        let x = lift_piecewise_linear(&path).unwrap();
        let mut buf = Vec::new();
        write_rough_path_csv(&x, &mut buf).unwrap();
        assert_eq!(read_rough_path_csv(buf.as_slice()).unwrap(), x);

        let vf = VectorFieldSystem::example_cubic();
        let flow = solve_flow_jacobian(&x, &vf, &DVector::from_vec(vec![0.1, 0.2])).unwrap();
        let mut buf = Vec::new();
        write_flow_csv(&flow, &mut buf).unwrap();
        let back = read_flow_csv(buf.as_slice()).unwrap();
        assert_eq!(back.y, flow.y);
        assert_eq!(back.jacobian().unwrap().j, flow.jacobian().unwrap().j);
    }

    #[test]
    fn sample_rows_round_trip() {
        let rows = vec![
            SampleRow {
                sample_index: 0,
                t: 0.5,
                y: DVector::from_vec(vec![1.0, -2.5e-7]),
                lambda_min: 3.0e-3,
                det: 1.0e-5,
                nondegenerate: true,
                pvar_driver: 1.25,
                log_norm_j: -0.1,
            },
            SampleRow {
                sample_index: 1,
                t: 1.0,
                y: DVector::from_vec(vec![0.0, 2.0]),
                lambda_min: 0.0,
                det: 0.0,
                nondegenerate: false,
                pvar_driver: 0.75,
                log_norm_j: 0.0,
            },
        ];
        let mut buf = Vec::new();
        write_samples_csv(2, &rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sample_index,t,y1,y2,lambda_min,det,verdict,pvar_driver,log_norm_J\n"));
        assert_eq!(read_samples_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn rejects_foreign_headers() {
        assert!(read_path_csv("s,x1\n0,0\n".as_bytes()).is_err());
        assert!(read_rough_path_csv("t,x1,x2\n0,0,0\n".as_bytes()).is_err());
        assert!(read_samples_csv("a,b\n".as_bytes()).is_err());
        // non-geometric level 2
        assert!(read_rough_path_csv("t,x1,b11\n0,0,0\n1,1,0\n".as_bytes()).is_err());
    }
}
