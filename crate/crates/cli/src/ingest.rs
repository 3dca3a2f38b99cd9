//! CSV ingestion on a background thread with a bounded hand-off queue.

use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::Arc;
use std::thread::JoinHandle;

use csv::{ReaderBuilder, StringRecord};

use crate::config::{ModelKind, RunConfig};
use crate::error::CliError;

/// Consecutive malformed rows tolerated before ingestion aborts.
pub const MAX_CONSECUTIVE_MALFORMED: usize = 100;
const WARN_LIMIT: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub y: f64,
    /// Linear, then smooth, then basis columns, in config order.
    pub x: Vec<f64>,
    pub groups: Vec<String>,
}

/// Header positions of every column the model reads.
#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    response: usize,
    numeric: Vec<usize>,
    groups: Vec<usize>,
    binary: bool,
    /// Basis column names after wildcard expansion.
    pub basis_names: Vec<String>,
}

impl Binding {
    pub fn resolve(header: &[String], cfg: &RunConfig) -> Result<Self, CliError> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::Data(format!("column '{name}' not found in the input header")))
        };
        let response = find(&cfg.response)?;
        let mut numeric = Vec::new();
        for name in cfg.linear.iter().chain(cfg.smooth.iter().map(|t| &t.column)) {
            numeric.push(find(name)?);
        }
        let mut basis_names = Vec::new();
        for pat in &cfg.basis {
            match pat.strip_suffix('*') {
                Some(prefix) => {
                    let hits: Vec<usize> = (0..header.len())
                        .filter(|&i| i != response && header[i].starts_with(prefix) && !numeric.contains(&i))
                        .collect();
                    if hits.is_empty() {
                        return Err(CliError::Data(format!("no columns match '{pat}'")));
                    }
                    for i in hits {
                        basis_names.push(header[i].clone());
                        numeric.push(i);
                    }
                }
                None => {
                    numeric.push(find(pat)?);
                    basis_names.push(pat.clone());
                }
            }
        }
        let groups = cfg.groups.iter().map(|g| find(g)).collect::<Result<_, _>>()?;
        Ok(Binding {
            response,
            numeric,
            groups,
            binary: cfg.model == ModelKind::Logistic,
            basis_names,
        })
    }

    /// Parses one row; the error is the reason for skipping it.
    pub fn parse(&self, row: &StringRecord) -> Result<Record, String> {
        let num = |i: usize| -> Result<f64, String> {
            let field = row.get(i).ok_or_else(|| format!("missing field {}", i + 1))?;
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| format!("non-numeric value '{field}' in field {}", i + 1))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite value in field {}", i + 1))
            }
        };
        let y = num(self.response)?;
        if self.binary && y != 0.0 && y != 1.0 {
            return Err(format!("binary response must be 0 or 1, got {y}"));
        }
        let x = self.numeric.iter().map(|&i| num(i)).collect::<Result<_, _>>()?;
        let groups = self
            .groups
            .iter()
            .map(|&i| {
                row.get(i)
                    .map(|g| g.trim().to_string())
                    .filter(|g| !g.is_empty())
                    .ok_or_else(|| format!("missing group label in field {}", i + 1))
            })
            .collect::<Result<_, _>>()?;
        Ok(Record { y, x, groups })
    }
}

pub type CsvSource = csv::Reader<Box<dyn Read + Send>>;

/// Opens a CSV file, or standard input for `-`, and reads its header.
pub fn open(path: &Path) -> Result<(Vec<String>, CsvSource), CliError> {
    let inner: Box<dyn Read + Send> = if path == Path::new("-") {
        Box::new(io::stdin())
    } else {
        Box::new(BufReader::new(File::open(path)?))
    };
    from_reader(inner)
}

pub fn from_reader(inner: Box<dyn Read + Send>) -> Result<(Vec<String>, CsvSource), CliError> {
    let mut rdr = ReaderBuilder::new().flexible(true).from_reader(inner);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(CliError::Data("input has no header row".into()));
    }
    Ok((header, rdr))
}

/// Records arriving from the reader thread, in file order.
pub struct RecordStream {
    rx: Receiver<Result<Record, CliError>>,
    skipped: Arc<AtomicUsize>,
    handle: Option<JoinHandle<()>>,
}

impl RecordStream {
    pub fn spawn(mut rdr: CsvSource, binding: Binding, capacity: usize) -> Self {
        let (tx, rx) = sync_channel(capacity);
        let skipped = Arc::new(AtomicUsize::new(0));
        let counter = Arc::clone(&skipped);
        let handle = std::thread::spawn(move || {
            let mut consecutive = 0;
            let mut row = StringRecord::new();
            loop {
                let msg = match rdr.read_record(&mut row) {
                    Ok(false) => break,
                    Ok(true) => match binding.parse(&row) {
                        Ok(rec) => {
                            consecutive = 0;
                            Ok(rec)
                        }
                        Err(reason) => {
                            let total = counter.fetch_add(1, Ordering::Relaxed) + 1;
                            if total <= WARN_LIMIT {
                                let line = row.position().map(|p| p.line()).unwrap_or(0);
                                eprintln!("warning: skipping line {line}: {reason}");
                            }
                            consecutive += 1;
                            if consecutive < MAX_CONSECUTIVE_MALFORMED {
                                continue;
                            }
                            Err(CliError::TooManyMalformed(consecutive))
                        }
                    },
                    Err(e) => Err(CliError::Csv(e)),
                };
                let stop = msg.is_err();
                if tx.send(msg).is_err() || stop {
                    break;
                }
            }
        });
        RecordStream {
            rx,
            skipped,
            handle: Some(handle),
        }
    }

    /// Malformed rows skipped so far.
    pub fn skipped(&self) -> usize {
        self.skipped.load(Ordering::Relaxed)
    }
}

impl Iterator for RecordStream {
    type Item = Result<Record, CliError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.rx.recv() {
            Ok(item) => Some(item),
            Err(_) => {
                if let Some(h) = self.handle.take() {
                    let _ = h.join();
                }
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn stream(text: &'static str, cfg: &str) -> (Vec<Result<Record, CliError>>, usize) {
        let cfg = parse_config(cfg).unwrap();
        let (header, rdr) = from_reader(Box::new(text.as_bytes())).unwrap();
        let binding = Binding::resolve(&header, &cfg).unwrap();
        let mut s = RecordStream::spawn(rdr, binding, 2);
        let out: Vec<_> = s.by_ref().collect();
        (out, s.skipped())
    }

    const LIN: &str = "[model]\ntype = linreg\n[columns]\nresponse = y\nlinear = a\n";

    #[test]
    fn rows_arrive_in_order() {
        let (recs, skipped) = stream("a,y\n1,2\n3,4\n5,6\n", LIN);
        let ys: Vec<f64> = recs.into_iter().map(|r| r.unwrap().y).collect();
        assert_eq!(ys, vec![2.0, 4.0, 6.0]);
        assert_eq!(skipped, 0);
    }

    #[test]
    fn malformed_rows_are_skipped_and_counted() {
        let (recs, skipped) = stream("a,y\n1,2\n3,oops\n5\n7,8\n", LIN);
        assert_eq!(recs.len(), 2);
        assert_eq!(skipped, 2);
    }

    #[test]
    fn long_malformed_run_aborts() {
        let mut text = String::from("a,y\n");
        for _ in 0..MAX_CONSECUTIVE_MALFORMED {
            text.push_str("x,x\n");
        }
        text.push_str("1,1\n");
        let text: &'static str = Box::leak(text.into_boxed_str());
        let (recs, _) = stream(text, LIN);
        assert!(matches!(recs.last(), Some(Err(CliError::TooManyMalformed(_)))));
    }

    #[test]
    fn missing_column_is_fatal() {
        let cfg = parse_config(LIN).unwrap();
        let (header, _) = from_reader(Box::new("b,y\n1,2\n".as_bytes())).unwrap();
        assert!(Binding::resolve(&header, &cfg).is_err());
    }

    #[test]
    fn wildcard_basis_and_binary_check() {
        let cfg = parse_config("[model]\ntype = sparse\n[columns]\nresponse = y\nbasis = z*\n").unwrap();
        let header: Vec<String> = ["y", "z1", "w", "z2"].iter().map(|s| s.to_string()).collect();
        let b = Binding::resolve(&header, &cfg).unwrap();
        assert_eq!(b.basis_names, vec!["z1", "z2"]);

        let cfg = parse_config("[model]\ntype = logistic\n[columns]\nresponse = y\nlinear = a\n").unwrap();
        let (recs, skipped) = {
            let (header, rdr) = from_reader(Box::new("a,y\n1,0\n2,0.5\n3,1\n".as_bytes())).unwrap();
            let mut s = RecordStream::spawn(rdr, Binding::resolve(&header, &cfg).unwrap(), 4);
            let v: Vec<_> = s.by_ref().collect();
            (v, s.skipped())
        };
        assert_eq!((recs.len(), skipped), (2, 1));
    }
}
