//! Delimited-text ingestion and the StatLib body-fat layout.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dataset::RawDataset;
use crate::error::{Error, Result};

/// Picks a column either by header name or by 1-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    Name(String),
    Index(usize),
}

impl ColumnSelector {
    /// Integers are positions, anything else is a header name.
    pub fn parse(s: &str) -> Self {
        match s.trim().parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(s.trim().to_string()),
        }
    }

    fn resolve(&self, headers: &[String]) -> Result<usize> {
        match self {
            ColumnSelector::Index(i) if (1..=headers.len()).contains(i) => Ok(i - 1),
            ColumnSelector::Index(i) => Err(Error::UnknownColumn(i.to_string())),
            ColumnSelector::Name(name) => {
                // A header that literally matches wins over nothing; names are
                // compared case-insensitively.
                headers
                    .iter()
                    .position(|h| h.eq_ignore_ascii_case(name))
                    .ok_or_else(|| Error::UnknownColumn(name.clone()))
            }
        }
    }
}

impl std::fmt::Display for ColumnSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnSelector::Name(s) => f.write_str(s),
            ColumnSelector::Index(i) => write!(f, "{i}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub has_header: bool,
    pub delimiter: u8,
    pub outcome: ColumnSelector,
    pub drop: Vec<ColumnSelector>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            has_header: true,
            delimiter: b',',
            outcome: ColumnSelector::Index(1),
            drop: Vec::new(),
        }
    }
}

pub fn read_csv_path(path: &Path, opts: &CsvOptions) -> Result<RawDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, opts)
}

fn read_table<R: Read>(reader: R, opts: &CsvOptions) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .delimiter(opts.delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut headers: Vec<String> = if opts.has_header {
        rdr.headers()?.iter().map(str::to_string).collect()
    } else {
        Vec::new()
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let line = k + 1 + usize::from(opts.has_header);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("`{field}` is not a number"),
            })?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("{} fields, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let width = rows[0].len();
    if headers.is_empty() {
        headers = (1..=width).map(|j| format!("x{j}")).collect();
    }
    if headers.len() != width {
        return Err(Error::Parse {
            line: 1,
            message: format!("{} headers for {width} fields", headers.len()),
        });
    }

    Ok((headers, rows))
}

/// Reads a numeric table. One column is the outcome, the dropped columns are
/// discarded and every remaining column becomes a covariate.
pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<RawDataset> {
    let (headers, rows) = read_table(reader, opts)?;
    let width = headers.len();
    let outcome = opts.outcome.resolve(&headers)?;
    let mut dropped = vec![false; width];
    dropped[outcome] = true;
    for sel in &opts.drop {
        dropped[sel.resolve(&headers)?] = true;
    }
    let covariates: Vec<usize> = (0..width).filter(|&j| !dropped[j]).collect();
    let n = rows.len();
    let x = DMatrix::from_fn(n, covariates.len(), |i, k| rows[i][covariates[k]]);
    let y = DVector::from_fn(n, |i, _| rows[i][outcome]);
    let labels = covariates.iter().map(|&j| headers[j].clone()).collect();
    RawDataset::new(x, y)?.with_column_labels(labels)
}

/// Reads a covariate-only table: every column not dropped is a covariate
/// and the outcome selector is ignored. The outcome is set to zero.
pub fn read_covariates<R: Read>(reader: R, opts: &CsvOptions) -> Result<RawDataset> {
    let (headers, rows) = read_table(reader, opts)?;
    let mut dropped = vec![false; headers.len()];
    for sel in &opts.drop {
        dropped[sel.resolve(&headers)?] = true;
    }
    let covariates: Vec<usize> = (0..headers.len()).filter(|&j| !dropped[j]).collect();
    let x = DMatrix::from_fn(rows.len(), covariates.len(), |i, k| rows[i][covariates[k]]);
    let labels = covariates.iter().map(|&j| headers[j].clone()).collect();
    RawDataset::new(x, DVector::zeros(rows.len()))?.with_column_labels(labels)
}

/// Column names of the StatLib body-fat file, in file order.
pub const BODYFAT_COLUMNS: [&str; 15] = [
    "density", "bodyfat", "age", "weight", "height", "neck", "chest", "abdomen", "hip", "thigh",
    "knee", "ankle", "biceps", "forearm", "wrist",
];

/// Where the body-fat file is published.
pub const BODYFAT_URL: &str = "http://lib.stat.cmu.edu/datasets/bodyfat";

#[derive(Debug, Clone, Copy)]
pub struct BodyfatOptions {
    /// Age is recorded in whole years and is usually left out.
    pub drop_age: bool,
}

impl Default for BodyfatOptions {
    fn default() -> Self {
        Self { drop_age: true }
    }
}

/// All 15-field numeric rows of the StatLib body-fat file, skipping the
/// free-text preamble.
pub fn parse_bodyfat_table(text: &str) -> Result<Vec<[f64; 15]>> {
    let mut rows = Vec::new();
    for line in text.lines() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != BODYFAT_COLUMNS.len() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = tokens.iter().map(|t| t.parse()).collect();
        if let Ok(values) = parsed {
            let mut row = [0.0; 15];
            row.copy_from_slice(&values);
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(rows)
}

/// Body-fat percentage as outcome; weight, height and the ten circumferences
/// (plus age unless dropped) as covariates. Density is the measurement the
/// outcome is computed from and is never a covariate.
pub fn parse_bodyfat(text: &str, opts: BodyfatOptions) -> Result<RawDataset> {
    let rows = parse_bodyfat_table(text)?;
    let first_covariate = if opts.drop_age { 3 } else { 2 };
    let cols: Vec<usize> = (first_covariate..BODYFAT_COLUMNS.len()).collect();
    let x = DMatrix::from_fn(rows.len(), cols.len(), |i, k| rows[i][cols[k]]);
    let y = DVector::from_fn(rows.len(), |i, _| rows[i][1]);
    let labels = cols.iter().map(|&j| BODYFAT_COLUMNS[j].to_string()).collect();
    RawDataset::new(x, y)?.with_column_labels(labels)
}

/// Writes the parsed body-fat table as a headed CSV.
pub fn write_bodyfat_csv<W: std::io::Write>(rows: &[[f64; 15]], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BODYFAT_COLUMNS)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_by_name_and_drop_by_index() {
        let text = "a,b,y,c\n1,2,3,4\n2,3,5,1\n4,1,2,2\n";
        let opts = CsvOptions {
            outcome: ColumnSelector::parse("y"),
            drop: vec![ColumnSelector::parse("2")],
            ..Default::default()
        };
        let d = read_csv(text.as_bytes(), &opts).unwrap();
        assert_eq!(d.column_labels(), &["a", "c"]);
        assert_eq!(d.y().as_slice(), &[3.0, 5.0, 2.0]);
        assert_eq!(d.x()[(2, 1)], 2.0);
    }

    #[test]
    fn headerless_semicolon() {
        let text = "1;2;3\n4;5;7\n7;8;8\n";
        let opts = CsvOptions {
            has_header: false,
            delimiter: b';',
            outcome: ColumnSelector::Index(3),
            drop: vec![],
        };
        let d = read_csv(text.as_bytes(), &opts).unwrap();
        assert_eq!(d.p(), 2);
        assert_eq!(d.y().as_slice(), &[3.0, 7.0, 8.0]);
    }

    #[test]
    fn empty_and_malformed_inputs() {
        assert!(matches!(
            read_csv("".as_bytes(), &CsvOptions::default()),
            Err(Error::EmptyInput)
        ));
        assert!(matches!(
            read_csv("a,b\n".as_bytes(), &CsvOptions::default()),
            Err(Error::EmptyInput)
        ));
        let bad = "a,b\n1,2\n3,x\n4,5\n";
        assert!(matches!(
            read_csv(bad.as_bytes(), &CsvOptions::default()),
            Err(Error::Parse { line: 3, .. })
        ));
        let opts = CsvOptions { outcome: ColumnSelector::parse("zz"), ..Default::default() };
        assert!(matches!(
            read_csv("a,b\n1,2\n3,4\n5,7\n".as_bytes(), &opts),
            Err(Error::UnknownColumn(_))
        ));
    }

    #[test]
    fn bodyfat_layout() {
        let text = "\
The body fat data (header prose, 3 numbers 1 2 3 here)
Density Percent Age Weight ...

   1.0708     12.3    23    154.25    67.75    36.2    93.1    85.2    94.5    59.0    37.3    21.9    32.0    27.4    17.1
   1.0853      6.1    22    173.25    72.25    38.5    93.6    83.0    98.7    58.7    37.3    23.4    30.5    28.9    18.2
   1.0414     25.3    22    154.00    66.25    34.0    95.8    87.9    99.2    59.6    38.9    24.0    28.8    25.2    16.6
";
        let d = parse_bodyfat(text, BodyfatOptions::default()).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.p(), 12);
        assert_eq!(d.column_labels()[0], "weight");
        assert_eq!(d.y().as_slice(), &[12.3, 6.1, 25.3]);
        let with_age = parse_bodyfat(text, BodyfatOptions { drop_age: false }).unwrap();
        assert_eq!(with_age.p(), 13);
        assert_eq!(with_age.x()[(0, 0)], 23.0);

        let mut buf = Vec::new();
        write_bodyfat_csv(&parse_bodyfat_table(text).unwrap(), &mut buf).unwrap();
        let opts = CsvOptions {
            outcome: ColumnSelector::parse("bodyfat"),
            drop: vec![ColumnSelector::parse("density"), ColumnSelector::parse("age")],
            ..Default::default()
        };
        let via_csv = read_csv(buf.as_slice(), &opts).unwrap();
        assert_eq!(via_csv.x(), d.x());
    }
}
