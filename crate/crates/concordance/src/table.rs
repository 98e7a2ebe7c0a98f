//! CSV input and output for samples and matrices.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use concordance_core::estimation::SampleMatrix;

use crate::error::{Error, Result};
use crate::fraction::parse_number;

/// A column chosen by 1-based position or by header name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl ColumnRef {
    pub fn parse(s: &str) -> Self {
        match s.trim().parse::<usize>() {
            Ok(i) => ColumnRef::Index(i),
            Err(_) => ColumnRef::Name(s.trim().to_string()),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct CsvOptions {
    /// `None` treats the first row as a header when any field is not a number.
    pub header: Option<bool>,
    /// Replace prices by daily log-returns.
    pub log_returns: bool,
    pub columns: Option<Vec<ColumnRef>>,
    /// Skip this many leading columns (e.g. a date column) before filtering.
    pub skip_columns: usize,
}

fn line_of(pos: Option<&csv::Position>) -> u64 {
    pos.map_or(0, |p| p.line())
}

/// Reads a rectangular numeric table.
pub fn read_samples<R: Read>(reader: R, opts: &CsvOptions) -> Result<SampleMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut names: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;
    let mut values = Vec::new();
    let mut n = 0usize;
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::MalformedCsv { line: line_of(e.position()), message: e.to_string() })?;
        let line = line_of(rec.position());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let fields: Vec<&str> = rec.iter().skip(opts.skip_columns).collect();
        if idx == 0 {
            let is_header = opts.header.unwrap_or_else(|| fields.iter().any(|f| parse_number(f).is_err()));
            if is_header {
                names = Some(fields.iter().map(|s| s.to_string()).collect());
                width = Some(fields.len());
                continue;
            }
        }
        match width {
            Some(w) if w != fields.len() => {
                return Err(Error::RaggedRows { line, expected: w, found: fields.len() });
            }
            None => width = Some(fields.len()),
            _ => {}
        }
        for f in &fields {
            let v = parse_number(f).map_err(|_| Error::MalformedCsv { line, message: format!("'{f}' is not a number") })?;
            values.push(v);
        }
        n += 1;
    }
    let d = width.ok_or(Error::MalformedCsv { line: 0, message: "no data rows".into() })?;
    if d == 0 {
        return Err(Error::MalformedCsv { line: 1, message: "no columns".into() });
    }
    let mut data = SampleMatrix::new(n, d, values)?;
    if let Some(names) = names {
        data = data.with_names(names)?;
    }
    apply_options(data, opts)
}

/// Column selection and the log-return transform of `opts`; `header` and
/// `skip_columns` only matter while parsing.
pub fn apply_options(mut data: SampleMatrix, opts: &CsvOptions) -> Result<SampleMatrix> {
    let d = data.d();
    if let Some(cols) = &opts.columns {
        let idx = cols
            .iter()
            .map(|c| match c {
                ColumnRef::Index(i) if (1..=d).contains(i) => Ok(i - 1),
                ColumnRef::Index(i) => Err(Error::Invalid(format!("column {i} outside 1..={d}"))),
                ColumnRef::Name(name) => data
                    .names()
                    .and_then(|ns| ns.iter().position(|x| x == name))
                    .ok_or_else(|| Error::Invalid(format!("no column named '{name}'"))),
            })
            .collect::<Result<Vec<usize>>>()?;
        data = data.select_columns(&idx)?;
    }
    if opts.log_returns {
        data = data.log_returns()?;
    }
    Ok(data)
}

pub fn read_samples_path(path: &Path, opts: &CsvOptions) -> Result<SampleMatrix> {
    read_samples(File::open(path)?, opts)
}

/// Square matrix from a header-less CSV.
pub fn read_matrix<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let m = read_samples(reader, &CsvOptions { header: Some(false), ..CsvOptions::default() })?;
    Ok((0..m.n()).map(|i| m.row(i).to_vec()).collect())
}

/// Writes `n × d` row-major values, with an optional header.
pub fn write_rows<W: Write>(out: W, header: Option<&[String]>, d: usize, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(h) = header {
        w.write_record(h).map_err(csv_io)?;
    }
    for row in values.chunks(d) {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Renders rows into a CSV string.
pub fn rows_to_csv(header: Option<&[String]>, d: usize, values: &[f64]) -> Result<String> {
    let mut buf = Vec::new();
    write_rows(&mut buf, header, d, values)?;
    String::from_utf8(buf).map_err(|e| Error::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_detection_and_filter() {
        let text = "date,BTC,ETH,LTC\n2017-01-01,1,2,3\n2017-01-02,2,4,6\n";
        let opts = CsvOptions { skip_columns: 1, ..CsvOptions::default() };
        let m = read_samples(text.as_bytes(), &opts).unwrap();
        assert_eq!((m.n(), m.d()), (2, 3));
        assert_eq!(m.names().unwrap(), ["BTC", "ETH", "LTC"]);
        let opts = CsvOptions {
            skip_columns: 1,
            columns: Some(vec![ColumnRef::parse("LTC"), ColumnRef::parse("1")]),
            ..CsvOptions::default()
        };
        let m = read_samples(text.as_bytes(), &opts).unwrap();
        assert_eq!(m.row(0), &[3.0, 1.0]);
    }

    #[test]
    fn log_returns_by_hand() {
        let e = std::f64::consts::E;
        let text = format!("1,1\n{e},{e}\n{e},{}\n", e * e);
        let opts = CsvOptions { log_returns: true, ..CsvOptions::default() };
        let m = read_samples(text.as_bytes(), &opts).unwrap();
        assert_eq!(m.n(), 2);
        let expected = [1.0, 1.0, 0.0, 1.0];
        assert!(m.values().iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-15));
        let plain = read_samples(text.as_bytes(), &CsvOptions::default()).unwrap();
        assert_eq!(plain.row(1), &[e, e]);
    }

    #[test]
    fn error_kinds() {
        let ragged = read_samples("1,2\n3\n".as_bytes(), &CsvOptions::default());
        assert!(matches!(ragged, Err(Error::RaggedRows { line: 2, expected: 2, found: 1 })));
        let bad = read_samples("1,2\n3,x\n".as_bytes(), &CsvOptions { header: Some(false), ..CsvOptions::default() });
        assert!(matches!(bad, Err(Error::MalformedCsv { line: 2, .. })));
        let price = read_samples("1,2\n0,1\n".as_bytes(), &CsvOptions { log_returns: true, ..CsvOptions::default() });
        assert!(matches!(price, Err(Error::Core(concordance_core::Error::NonPositivePrice { row: 2, column: 1, .. }))));
        assert!(read_samples("".as_bytes(), &CsvOptions::default()).is_err());
    }

    #[test]
    fn write_then_read() {
        let text = rows_to_csv(Some(&["a".into(), "b".into()]), 2, &[0.25, 0.75, 0.5, 0.5]).unwrap();
        assert_eq!(text, "a,b\n0.25,0.75\n0.5,0.5\n");
        let m = read_samples(text.as_bytes(), &CsvOptions::default()).unwrap();
        assert_eq!(m.values(), &[0.25, 0.75, 0.5, 0.5]);
    }
}
