//! Histogram files.
//!
//! CSV layout: header `bin_left,bin_right,density,count`, one row per bin,
//! comma separated, LF line endings, numbers in shortest round-trip form.
//! Values below the grid appear as a leading `[0, lo)` row when `lo > 0`;
//! values above it appear as a trailing `[hi, inf)` row with density 0.
//! Densities are normalised by all observations, including both extra rows.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::stats::{Binning, BinningKind, Histogram, StatsError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub const CSV_HEADER: &str = "bin_left,bin_right,density,count";

pub fn write_histogram_csv<W: Write>(h: &Histogram, mut out: W) -> Result<(), IoError> {
    let total = h.total().max(1) as f64;
    writeln!(out, "{CSV_HEADER}")?;
    let lo = h.binning.lo();
    if lo > 0.0 {
        writeln!(out, "0,{lo},{},{}", h.underflow as f64 / (total * lo), h.underflow)?;
    }
    for (k, &c) in h.counts.iter().enumerate() {
        let (l, r) = (h.binning.edges[k], h.binning.edges[k + 1]);
        writeln!(out, "{l},{r},{},{c}", c as f64 / (total * (r - l)))?;
    }
    writeln!(out, "{},inf,0,{}", h.binning.hi(), h.overflow)?;
    Ok(())
}

pub fn histogram_to_csv_string(h: &Histogram) -> String {
    let mut buf = Vec::new();
    write_histogram_csv(h, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

struct Row {
    left: f64,
    right: f64,
    count: u64,
}

fn is_log_grid(edges: &[f64]) -> bool {
    if edges[0] <= 0.0 || edges.len() < 3 {
        return false;
    }
    let r0 = edges[1] / edges[0];
    edges.windows(2).all(|w| ((w[1] / w[0]) / r0 - 1.0).abs() < 1e-9)
}

fn is_linear_grid(edges: &[f64]) -> bool {
    let w0 = edges[1] - edges[0];
    edges.windows(2).all(|w| ((w[1] - w[0]) / w0 - 1.0).abs() < 1e-9)
}

/// Reads a histogram written by [`write_histogram_csv`]. A leading row
/// starting at 0 is taken as the underflow row when the remaining edges form
/// a logarithmic grid, or a linear grid of a different width. The observed
/// range is not stored in the file and is approximated by the outer edges of
/// the occupied bins.
pub fn read_histogram_csv<R: BufRead>(input: R) -> Result<Histogram, IoError> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let parse_err = |message: String| IoError::Parse { line: line_no, message };
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line.trim() != CSV_HEADER {
                return Err(parse_err(format!("expected header `{CSV_HEADER}`")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, found {}", fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(format!("`{s}`: {e}")));
        let left = num(fields[0])?;
        let right = num(fields[1])?;
        num(fields[2])?;
        let count = fields[3]
            .parse::<u64>()
            .map_err(|e| parse_err(format!("count `{}`: {e}", fields[3])))?;
        if !(right > left) || left.is_nan() {
            return Err(parse_err(format!("empty bin [{left}, {right})")));
        }
        if let Some(prev) = rows.last() {
            let prev: &Row = prev;
            if prev.right != left {
                return Err(parse_err(format!("gap between {} and {left}", prev.right)));
            }
        }
        rows.push(Row { left, right, count });
    }
    if !saw_header {
        return Err(IoError::Parse { line: 0, message: "empty file".into() });
    }
    let mut overflow = 0;
    if rows.last().is_some_and(|r| r.right.is_infinite()) {
        overflow = rows.pop().map_or(0, |r| r.count);
    }
    if rows.is_empty() {
        return Err(IoError::Parse { line: 0, message: "no finite bins".into() });
    }
    let mut underflow = 0;
    if rows.len() >= 2 && rows[0].left == 0.0 {
        let rest: Vec<f64> =
            rows[1..].iter().map(|r| r.left).chain(std::iter::once(rows[rows.len() - 1].right)).collect();
        let first_width = rows[0].right;
        let rest_width = rest[1] - rest[0];
        let differs = ((first_width / rest_width) - 1.0).abs() > 1e-9;
        if is_log_grid(&rest) || (is_linear_grid(&rest) && differs) {
            underflow = rows.remove(0).count;
        }
    }
    let edges: Vec<f64> =
        rows.iter().map(|r| r.left).chain(std::iter::once(rows[rows.len() - 1].right)).collect();
    let kind = if is_log_grid(&edges) { BinningKind::Logarithmic } else { BinningKind::Linear };
    let binning = Binning::from_edges(kind, edges)?;
    let counts: Vec<u64> = rows.iter().map(|r| r.count).collect();
    let first = counts.iter().position(|&c| c > 0);
    let last = counts.iter().rposition(|&c| c > 0);
    let min = if underflow > 0 {
        0.0
    } else {
        first.map_or(f64::INFINITY, |k| binning.edges[k])
    };
    let max = if overflow > 0 {
        f64::INFINITY
    } else {
        last.map_or(f64::NEG_INFINITY, |k| binning.edges[k + 1])
    };
    let mut h = Histogram::new(binning);
    h.counts = counts;
    h.underflow = underflow;
    h.overflow = overflow;
    h.min = min;
    h.max = max;
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_hist(binning: Binning) -> Histogram {
        let mut h = Histogram::new(binning);
        h.extend([0.0, 0.001, 0.5, 0.7, 1.0, 3.0, 3.5, 50.0, 1e9]);
        h
    }

    #[test]
    fn log_round_trip() {
        let h = sample_hist(Binning::logarithmic(0.01, 100.0, 8).unwrap());
        let text = histogram_to_csv_string(&h);
        assert!(text.starts_with("bin_left,bin_right,density,count\n0,0.01,"));
        assert!(!text.contains('\r'));
        let back = read_histogram_csv(text.as_bytes()).unwrap();
        assert_eq!(back.binning, h.binning);
        assert_eq!(back.counts, h.counts);
        assert_eq!((back.underflow, back.overflow), (2, 1));
        assert_eq!(back.total(), h.total());
        assert_eq!(histogram_to_csv_string(&back), text);
    }

    #[test]
    fn linear_round_trip_from_zero() {
        let h = sample_hist(Binning::linear(0.0, 10.0, 20).unwrap());
        let text = histogram_to_csv_string(&h);
        assert!(text.lines().nth(1).unwrap().starts_with("0,0.5,"));
        let back = read_histogram_csv(text.as_bytes()).unwrap();
        assert_eq!(back.binning.edges, h.binning.edges);
        assert_eq!(back.counts, h.counts);
        assert_eq!(back.underflow, 0);
        assert_eq!(back.overflow, 2);
    }

    #[test]
    fn linear_with_offset_round_trip() {
        let h = sample_hist(Binning::linear(0.3, 10.3, 40).unwrap());
        let back = read_histogram_csv(histogram_to_csv_string(&h).as_bytes()).unwrap();
        assert_eq!(back.binning.edges, h.binning.edges);
        assert_eq!(back.underflow, h.underflow);
    }

    #[test]
    fn densities_integrate_to_one() {
        let h = sample_hist(Binning::logarithmic(0.01, 100.0, 8).unwrap());
        let text = histogram_to_csv_string(&h);
        let mass: f64 = text
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
                if f[1].is_infinite() { f[3] / h.total() as f64 } else { f[2] * (f[1] - f[0]) }
            })
            .sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_input() {
        assert!(read_histogram_csv("".as_bytes()).is_err());
        assert!(read_histogram_csv("a,b\n".as_bytes()).is_err());
        let gap = "bin_left,bin_right,density,count\n0,1,0.5,1\n2,3,0.5,1\n";
        assert!(matches!(read_histogram_csv(gap.as_bytes()), Err(IoError::Parse { line: 3, .. })));
        let bad = "bin_left,bin_right,density,count\n0,1,x,1\n";
        assert!(read_histogram_csv(bad.as_bytes()).is_err());
    }
}
