//! CSV and JSON ingestion/output for series, networks, fits and forecasts.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::design::CountSeries;
use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::network::Network;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot open {}: {e}", path.display()),
        ))
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let f = File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot create {}: {e}", path.display()),
        ))
    })?;
    Ok(BufWriter::new(f))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(r)
}

fn parse_count(field: &str, line: u64, col: usize) -> Result<u64> {
    field.parse::<u64>().map_err(|_| {
        Error::parse(
            format!("line {line}, column {}", col + 1),
            format!("expected a non-negative integer count, found {field:?}"),
        )
    })
}

/// Reads a series: a header of node ids, then one row of N counts per time
/// step. A leading `time` column (by header name) supplies the time index.
pub fn read_series<R: Read>(input: R) -> Result<CountSeries> {
    let mut rdr = reader(input);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::parse("line 1", "empty series file"))??;
    let mut ids: Vec<String> = header.iter().map(str::to_string).collect();
    let has_time = ids
        .first()
        .is_some_and(|h| matches!(h.to_ascii_lowercase().as_str(), "time" | "t" | "date"));
    if has_time {
        ids.remove(0);
    }
    if ids.is_empty() {
        return Err(Error::parse("line 1", "header names no nodes"));
    }
    let n = ids.len();
    let mut rows = Vec::new();
    let mut index = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut fields = rec.iter();
        if has_time {
            index.push(fields.next().unwrap_or_default().to_string());
        }
        let row = fields
            .enumerate()
            .map(|(c, f)| parse_count(f, line, c + has_time as usize))
            .collect::<Result<Vec<u64>>>()?;
        if row.len() != n {
            return Err(Error::parse(
                format!("line {line}"),
                format!("expected {n} counts, found {}", row.len()),
            ));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse("line 2", "series has no time steps"));
    }
    let series = CountSeries::from_time_rows(&rows, n)?.with_node_ids(ids)?;
    if has_time {
        series.with_time_index(index)
    } else {
        Ok(series)
    }
}

pub fn read_series_csv(path: impl AsRef<Path>) -> Result<CountSeries> {
    read_series(open(path.as_ref())?)
}

pub fn write_series<W: Write>(series: &CountSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(series.node_ids())?;
    for t in 0..series.len() {
        w.write_record(series.column(t).iter().map(u64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_series_csv(series: &CountSeries, path: impl AsRef<Path>) -> Result<()> {
    write_series(series, create(path.as_ref())?)
}

/// Reads an N×N 0/1 adjacency matrix, with an optional header row of node ids.
pub fn read_adjacency<R: Read>(input: R) -> Result<Network> {
    let mut rdr = reader(input);
    let mut recs = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        recs.push((line, rec.iter().map(str::to_string).collect::<Vec<_>>()));
    }
    let binary = |row: &[String]| row.iter().all(|f| f == "0" || f == "1");
    // a header is a first row of ids: non-binary, or one row too many
    let header = recs
        .first()
        .is_some_and(|(_, r)| !binary(r) || recs.len() == r.len() + 1);
    let ids = header.then(|| recs[0].1.clone());
    let mut rows: Vec<Vec<u8>> = Vec::new();
    for (line, rec) in recs.iter().skip(header as usize) {
        if !binary(rec) {
            return Err(Error::parse(format!("line {line}"), "adjacency entries must be 0 or 1"));
        }
        rows.push(rec.iter().map(|f| (f == "1") as u8).collect());
    }
    let net = Network::from_adjacency(rows)?;
    match ids {
        Some(ids) => net.with_node_ids(ids),
        None => Ok(net),
    }
}

pub fn read_adjacency_csv(path: impl AsRef<Path>) -> Result<Network> {
    read_adjacency(open(path.as_ref())?)
}

pub fn write_adjacency<W: Write>(net: &Network, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(net.node_ids())?;
    for row in net.adjacency() {
        w.write_record(row.iter().map(u8::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_adjacency_csv(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    write_adjacency(net, create(path.as_ref())?)
}

/// Reads an undirected edge list `from,to` over node ids. The node order is
/// `ids` when given, otherwise order of first appearance. A `from,to`
/// header line is skipped.
pub fn read_edge_list<R: Read>(input: R, ids: Option<Vec<String>>) -> Result<Network> {
    let mut rdr = reader(input);
    let mut names: Vec<String> = ids.clone().unwrap_or_default();
    let mut edges = Vec::new();
    let index = |names: &mut Vec<String>, id: &str, line: u64| -> Result<usize> {
        if let Some(k) = names.iter().position(|n| n == id) {
            return Ok(k);
        }
        if ids.is_some() {
            return Err(Error::parse(format!("line {line}"), format!("unknown node {id:?}")));
        }
        names.push(id.to_string());
        Ok(names.len() - 1)
    };
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(Error::parse(format!("line {line}"), "expected `from,to`"));
        }
        if k == 0 && rec[0].eq_ignore_ascii_case("from") {
            continue;
        }
        let a = index(&mut names, &rec[0], line)?;
        let b = index(&mut names, &rec[1], line)?;
        edges.push((a, b));
    }
    Network::from_edges(names.len(), &edges, true)?.with_node_ids(names)
}

pub fn read_edge_list_csv(path: impl AsRef<Path>, ids: Option<Vec<String>>) -> Result<Network> {
    read_edge_list(open(path.as_ref())?, ids)
}

pub fn write_fit_json(fit: &FitResult, path: impl AsRef<Path>) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_all(fit.to_json()?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_fit_json(path: impl AsRef<Path>, node_ids: &[String]) -> Result<FitResult> {
    let mut text = String::new();
    open(path.as_ref())?.read_to_string(&mut text)?;
    FitResult::from_json(&text, node_ids)
}

/// Forecast matrix (N×H) as CSV: `horizon` column then one column per node.
pub fn write_forecast<W: Write>(forecast: &DMatrix<f64>, node_ids: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["horizon".to_string()];
    header.extend(node_ids.iter().cloned());
    w.write_record(&header)?;
    for h in 0..forecast.ncols() {
        let mut row = vec![(h + 1).to_string()];
        row.extend(forecast.column(h).iter().map(|v| format!("{v}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_forecast_csv(forecast: &DMatrix<f64>, node_ids: &[String], path: impl AsRef<Path>) -> Result<()> {
    write_forecast(forecast, node_ids, create(path.as_ref())?)
}

pub fn read_forecast<R: Read>(input: R) -> Result<(DMatrix<f64>, Vec<String>)> {
    let mut rdr = reader(input);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::parse("line 1", "empty forecast file"))??;
    let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut cols = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let vals = rec
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::parse(format!("line {line}"), format!("expected a number, found {f:?}"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != ids.len() {
            return Err(Error::parse(format!("line {line}"), "wrong number of columns"));
        }
        cols.push(vals);
    }
    let m = DMatrix::from_fn(ids.len(), cols.len(), |i, h| cols[h][i]);
    Ok((m, ids))
}

pub fn read_forecast_csv(path: impl AsRef<Path>) -> Result<(DMatrix<f64>, Vec<String>)> {
    read_forecast(open(path.as_ref())?)
}

/// First `train_len` steps and the remainder, in time order.
pub fn split_train_test(series: &CountSeries, train_len: usize) -> Result<(CountSeries, CountSeries)> {
    if train_len == 0 {
        return Err(Error::InvalidArgument("training length must be positive".into()));
    }
    if train_len >= series.len() {
        return Err(Error::InvalidArgument(format!(
            "training length {train_len} leaves no test data in a series of length {}",
            series.len()
        )));
    }
    Ok((series.slice(0, train_len)?, series.slice(train_len, series.len())?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_round_trip() {
        let s = CountSeries::from_node_rows(vec![vec![1, 2, 3], vec![40, 50, 60]])
            .unwrap()
            .with_node_ids(vec!["a".into(), "b".into()])
            .unwrap();
        let mut buf = Vec::new();
        write_series(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "a,b\n1,40\n2,50\n3,60\n");
        let back = read_series(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn series_time_column_and_errors() {
        let s = read_series("time,x,y\n2020-01-01,1,2\n2020-01-02,3,4\n".as_bytes()).unwrap();
        assert_eq!(s.time_index(), &["2020-01-01", "2020-01-02"]);
        assert_eq!(s.node(1), &[2, 4]);
        let err = read_series("x,y\n1,2\n3,4.5\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = read_series("x,y\n1,-2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(read_series("x,y\n1\n".as_bytes()).is_err());
        assert!(read_series("".as_bytes()).is_err());
    }

    #[test]
    fn adjacency_with_and_without_header() {
        let net = read_adjacency("0,1\n1,0\n".as_bytes()).unwrap();
        assert_eq!(net.node_ids(), &["1", "2"]);
        let net = read_adjacency("p,q\n0,1\n0,0\n".as_bytes()).unwrap();
        assert_eq!(net.node_ids(), &["p", "q"]);
        assert!(net.has_edge(0, 1) && !net.has_edge(1, 0));
        assert!(read_adjacency("0,1\n1,2\n".as_bytes()).is_err());
        assert!(read_adjacency("1,0\n0,0\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_adjacency(&Network::five_node(), &mut buf).unwrap();
        assert_eq!(read_adjacency(buf.as_slice()).unwrap(), Network::five_node());
    }

    #[test]
    fn edge_list() {
        let net = read_edge_list("from,to\na,b\nb,c\n".as_bytes(), None).unwrap();
        assert_eq!(net.node_ids(), &["a", "b", "c"]);
        assert!(net.has_edge(1, 0) && net.has_edge(1, 2) && !net.has_edge(0, 2));
        assert!(read_edge_list("a,z\n".as_bytes(), Some(vec!["a".into()])).is_err());
    }

    #[test]
    fn forecast_round_trip() {
        let f = DMatrix::from_row_slice(2, 3, &[1.5, 2.0, 0.25, 3.0, 1e-3, 7.0]);
        let ids = vec!["a".to_string(), "b".to_string()];
        let mut buf = Vec::new();
        write_forecast(&f, &ids, &mut buf).unwrap();
        let (back, back_ids) = read_forecast(buf.as_slice()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back_ids, ids);
    }

    #[test]
    fn split() {
        let s = CountSeries::from_node_rows(vec![(0..10).collect()]).unwrap();
        let (a, b) = split_train_test(&s, 7).unwrap();
        assert_eq!(a.node(0), &[0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(b.node(0), &[7, 8, 9]);
        assert!(split_train_test(&s, 10).is_err());
        assert!(split_train_test(&s, 0).is_err());
    }
}
