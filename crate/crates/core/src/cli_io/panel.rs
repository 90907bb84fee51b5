//! Panel CSV: `date,short_rate,inflation,y4,...,y120`, rates in annualized
//! percent, an empty cell for a missing value.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::statespace::{PanelData, Quarter, PANEL_MATURITIES};

pub const PANEL_HEADER: [&str; 10] = [
    "date",
    "short_rate",
    "inflation",
    "y4",
    "y8",
    "y16",
    "y28",
    "y40",
    "y60",
    "y120",
];

/// Line numbers count the header as line 1.
#[derive(Debug, Error)]
pub enum PanelError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("duplicate column '{0}'")]
    DuplicateColumn(String),
    #[error("missing 'date' column")]
    MissingDate,
    #[error("line {line}: bad date '{value}'")]
    BadDate { line: u64, value: String },
    #[error("line {line}, column {column}: malformed value '{value}'")]
    BadCell {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: date {date} does not follow {previous}")]
    NonMonotone {
        line: u64,
        date: Quarter,
        previous: Quarter,
    },
    #[error("panel has no observations")]
    Empty,
    #[error(transparent)]
    Write(#[from] csv::Error),
}

#[derive(Clone, Copy)]
enum Column {
    Date,
    ShortRate,
    Inflation,
    Yield(usize),
}

fn column(name: &str) -> Option<Column> {
    match name {
        "date" => Some(Column::Date),
        "short_rate" => Some(Column::ShortRate),
        "inflation" => Some(Column::Inflation),
        _ => {
            let n: usize = name.strip_prefix('y')?.parse().ok()?;
            PANEL_MATURITIES.contains(&n).then_some(Column::Yield(n))
        }
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Reads a panel. Quarters missing between two rows are filled with empty
/// rows; leading and trailing rows without any observation are dropped.
pub fn read_panel(reader: impl Read) -> Result<PanelData, PanelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let csv_err = |e: csv::Error| PanelError::Csv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let header = rdr.headers().map_err(csv_err)?.clone();
    let mut columns = Vec::with_capacity(header.len());
    let mut seen = std::collections::HashSet::new();
    for name in header.iter() {
        let c = column(name).ok_or_else(|| PanelError::UnknownColumn(name.to_string()))?;
        if !seen.insert(name.to_string()) {
            return Err(PanelError::DuplicateColumn(name.to_string()));
        }
        columns.push(c);
    }
    if !columns.iter().any(|c| matches!(c, Column::Date)) {
        return Err(PanelError::MissingDate);
    }
    let maturities: Vec<usize> = columns
        .iter()
        .filter_map(|c| match c {
            Column::Yield(n) => Some(*n),
            _ => None,
        })
        .collect();

    let mut panel = PanelData {
        yields: maturities
            .iter()
            .map(|&n| (n, Vec::new()))
            .collect::<BTreeMap<_, _>>(),
        ..PanelData::default()
    };
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = line_of(&record);
        let mut date = None;
        let mut short = None;
        let mut infl = None;
        let mut ys = Vec::with_capacity(maturities.len());
        for (c, (cell, name)) in columns.iter().zip(record.iter().zip(header.iter())) {
            let value = || -> Result<Option<f64>, PanelError> {
                if cell.is_empty() {
                    return Ok(None);
                }
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Some)
                    .ok_or_else(|| PanelError::BadCell {
                        line,
                        column: name.to_string(),
                        value: cell.to_string(),
                    })
            };
            match c {
                Column::Date => {
                    date = Some(cell.parse::<Quarter>().map_err(|_| PanelError::BadDate {
                        line,
                        value: cell.to_string(),
                    })?)
                }
                Column::ShortRate => short = value()?,
                Column::Inflation => infl = value()?,
                Column::Yield(n) => ys.push((*n, value()?)),
            }
        }
        let date = date.ok_or(PanelError::BadDate {
            line,
            value: String::new(),
        })?;
        if let Some(&previous) = panel.quarters.last() {
            if date <= previous {
                return Err(PanelError::NonMonotone {
                    line,
                    date,
                    previous,
                });
            }
            let mut q = previous.next();
            while q < date {
                panel.push_empty();
                q = q.next();
            }
        }
        panel.quarters.push(date);
        panel.short_rate.push(short);
        panel.inflation.push(infl);
        for (n, v) in ys {
            panel.yields.get_mut(&n).expect("declared column").push(v);
        }
    }
    trim_empty(&mut panel);
    if panel.is_empty() {
        return Err(PanelError::Empty);
    }
    Ok(panel)
}

fn trim_empty(panel: &mut PanelData) {
    let keep: Vec<usize> = (0..panel.len())
        .filter(|&t| !panel.row_is_empty(t))
        .collect();
    let (Some(&first), Some(&last)) = (keep.first(), keep.last()) else {
        *panel = PanelData {
            yields: panel.yields.keys().map(|&n| (n, Vec::new())).collect(),
            ..PanelData::default()
        };
        return;
    };
    let range = first..last + 1;
    panel.quarters = panel.quarters[range.clone()].to_vec();
    panel.short_rate = panel.short_rate[range.clone()].to_vec();
    panel.inflation = panel.inflation[range.clone()].to_vec();
    for c in panel.yields.values_mut() {
        *c = c[range.clone()].to_vec();
    }
}

pub fn load_panel(path: impl AsRef<Path>) -> Result<PanelData, PanelError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| PanelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_panel(std::io::BufReader::new(file))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes `panel` with one column per maturity it carries. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_panel(panel: &PanelData, writer: impl Write) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string(), "short_rate".into(), "inflation".into()];
    header.extend(panel.yields.keys().map(|n| format!("y{n}")));
    w.write_record(&header)?;
    for t in 0..panel.len() {
        let mut row = vec![
            panel.quarters[t].to_string(),
            cell(panel.short_rate[t]),
            cell(panel.inflation[t]),
        ];
        row.extend(panel.yields.values().map(|c| cell(c[t])));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
