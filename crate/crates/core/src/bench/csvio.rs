use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{BenchError, Dataset, DatasetMeta};
use crate::linalg::Mat;

/// Sidecar path: `data/train.csv` → `data/train.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

fn header(n_u: usize, n_d: usize, n_y: usize) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    h.extend((1..=n_u).map(|i| format!("u{i}")));
    h.extend((1..=n_d).map(|i| format!("d{i}")));
    h.extend((1..=n_y).map(|i| format!("y{i}")));
    h
}

/// Writes the samples to `path` and the metadata to its sidecar.
///
/// Reals use Rust's shortest round-trip formatting, so reading the file
/// back reproduces every value bit for bit.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<(), BenchError> {
    dataset.validate()?;
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header(dataset.n_u(), dataset.n_d(), dataset.n_y()))?;
    let mut rec: Vec<String> = Vec::new();
    for k in 0..dataset.len() {
        rec.clear();
        rec.push(k.to_string());
        for m in [&dataset.u, &dataset.d, &dataset.y] {
            rec.extend(m.row(k).iter().map(|v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))?;

    let mp = meta_path(path);
    let file = File::create(&mp).map_err(|e| BenchError::io(&mp, e))?;
    let mut bw = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut bw, &dataset.meta)
        .map_err(|e| BenchError::Schema(e.to_string()))?;
    bw.write_all(b"\n").map_err(|e| BenchError::io(&mp, e))?;
    bw.flush().map_err(|e| BenchError::io(&mp, e))?;
    Ok(())
}

/// Column counts implied by a header `k,u1..,d1..,y1..`.
fn parse_header(fields: &[&str]) -> Result<(usize, usize, usize), BenchError> {
    if fields.first() != Some(&"k") {
        return Err(BenchError::Schema("first column must be 'k'".into()));
    }
    let mut counts = [0usize; 3];
    let mut group = 0;
    for f in &fields[1..] {
        let prefix = match f.chars().next() {
            Some('u') => 0,
            Some('d') => 1,
            Some('y') => 2,
            _ => return Err(BenchError::Schema(format!("unexpected column '{f}'"))),
        };
        if prefix < group {
            return Err(BenchError::Schema(format!("column '{f}' out of order")));
        }
        group = prefix;
        let idx: usize = f[1..]
            .parse()
            .map_err(|_| BenchError::Schema(format!("malformed column name '{f}'")))?;
        if idx != counts[prefix] + 1 {
            return Err(BenchError::Schema(format!(
                "column '{f}' breaks the numbering"
            )));
        }
        counts[prefix] += 1;
    }
    if counts[0] == 0 || counts[2] == 0 {
        return Err(BenchError::Schema(
            "need at least one u and one y column".into(),
        ));
    }
    Ok((counts[0], counts[1], counts[2]))
}

/// Reads a dataset written by [`write_csv`] or produced externally.
///
/// Without a sidecar the sample period defaults to 1.
pub fn read_csv(path: &Path) -> Result<Dataset, BenchError> {
    let file = File::open(path).map_err(|e| BenchError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let mut records = r.records();
    let head = match records.next() {
        Some(rec) => rec?,
        None => return Err(BenchError::Schema("empty file".into())),
    };
    let fields: Vec<&str> = head.iter().map(str::trim).collect();
    let (n_u, n_d, n_y) = parse_header(&fields)?;
    let width = 1 + n_u + n_d + n_y;
    let (mut u, mut d, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != width {
            return Err(BenchError::Schema(format!(
                "line {line}: expected {width} columns, found {}",
                rec.len()
            )));
        }
        rec[0]
            .trim()
            .parse::<usize>()
            .map_err(|_| BenchError::Parse {
                line,
                msg: format!("bad sample index '{}'", &rec[0]),
            })?;
        for (j, field) in rec.iter().enumerate().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| BenchError::Parse {
                line,
                msg: format!("bad number '{field}'"),
            })?;
            if !v.is_finite() {
                return Err(BenchError::Parse {
                    line,
                    msg: format!("non-finite value '{field}'"),
                });
            }
            if j <= n_u {
                u.push(v);
            } else if j <= n_u + n_d {
                d.push(v);
            } else {
                y.push(v);
            }
        }
    }
    let n = u.len() / n_u;
    let to_mat = |data: Vec<f64>, c: usize| {
        Mat::new(n, c, data).map_err(|e| BenchError::Schema(e.to_string()))
    };

    let mp = meta_path(path);
    let meta = if mp.exists() {
        let f = File::open(&mp).map_err(|e| BenchError::io(&mp, e))?;
        serde_json::from_reader(BufReader::new(f))
            .map_err(|e| BenchError::Schema(format!("{}: {e}", mp.display())))?
    } else {
        log::warn!("no metadata next to {}; assuming T_s = 1", path.display());
        DatasetMeta::with_ts(1.0)
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(
        name,
        to_mat(u, n_u)?,
        to_mat(d, n_d)?,
        to_mat(y, n_y)?,
        meta,
    )
}
