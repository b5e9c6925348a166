//! Small CSV helpers shared by the exporters.

use crate::error::{Error, Result};

pub(crate) fn two_column_csv(header: (&str, &str), x: &[f64], y: &[f64]) -> Result<String> {
    if x.len() != y.len() {
        return Err(Error::arg("column lengths differ"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([header.0, header.1])?;
    for (a, b) in x.iter().zip(y) {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    finish(w)
}

pub(crate) fn parse_two_column_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut x = Vec::new();
    let mut y = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Parse(format!("expected 2 columns, found {}", rec.len())));
        }
        x.push(parse_f64(&rec[0])?);
        y.push(parse_f64(&rec[1])?);
    }
    Ok((x, y))
}

pub(crate) fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("not a number: `{s}`")))
}

pub(crate) fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}
