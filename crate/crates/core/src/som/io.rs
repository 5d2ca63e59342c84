//! KSOM text format.
//!
//! ```text
//! KSOM 1 <rows> <cols> <in_dim> <out_dim>
//! <row> <col> <w_in_1> <w_in_2> <w_out_1>      (rows*cols lines, row-major)
//! ```
//!
//! Floats are written in shortest round-trip form, so save/load is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{Neuron, SomMap, IN_DIM, MAP_COLS, MAP_ROWS, OUT_DIM};

const MAGIC: &str = "KSOM";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum KsomError {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line 1: expected a {expected_rows}x{expected_cols} map with {IN_DIM} inputs and {OUT_DIM} output, found {rows}x{cols} with {in_dim} inputs and {out_dim} outputs")]
    Dimensions {
        rows: usize,
        cols: usize,
        in_dim: usize,
        out_dim: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("line {line}: weight {value} is outside [0, 1]")]
    Range { line: usize, value: f64 },
    #[error("expected {expected} neuron lines, found {found}")]
    Truncated { expected: usize, found: usize },
}

pub fn to_ksom_string(map: &SomMap) -> String {
    let mut out = String::with_capacity(map.neurons().len() * 64);
    let _ = writeln!(
        out,
        "{MAGIC} {VERSION} {} {} {IN_DIM} {OUT_DIM}",
        map.rows(),
        map.cols()
    );
    for (i, n) in map.neurons().iter().enumerate() {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            i / map.cols(),
            i % map.cols(),
            n.in_weights[0],
            n.in_weights[1],
            n.out_weight
        );
    }
    out
}

fn syntax(line: usize, msg: impl Into<String>) -> KsomError {
    KsomError::Syntax {
        line,
        msg: msg.into(),
    }
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, KsomError> {
    let tok = tok.ok_or_else(|| syntax(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| syntax(line, format!("cannot parse {what} from {tok:?}")))
}

fn unit_weight(v: f64, line: usize) -> Result<f64, KsomError> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(KsomError::Range { line, value: v })
    }
}

/// Parses a KSOM document describing a 25x25 map. The result is frozen.
pub fn parse_ksom(text: &str) -> Result<SomMap, KsomError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| syntax(1, "empty file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some(MAGIC) {
        return Err(syntax(1, format!("missing {MAGIC} magic")));
    }
    let version: u32 = parse_field(toks.next(), 1, "version")?;
    if version != VERSION {
        return Err(syntax(1, format!("unsupported version {version}")));
    }
    let rows: usize = parse_field(toks.next(), 1, "rows")?;
    let cols: usize = parse_field(toks.next(), 1, "cols")?;
    let in_dim: usize = parse_field(toks.next(), 1, "in_dim")?;
    let out_dim: usize = parse_field(toks.next(), 1, "out_dim")?;
    if toks.next().is_some() {
        return Err(syntax(1, "trailing tokens in header"));
    }
    if rows != MAP_ROWS || cols != MAP_COLS || in_dim != IN_DIM || out_dim != OUT_DIM {
        return Err(KsomError::Dimensions {
            rows,
            cols,
            in_dim,
            out_dim,
            expected_rows: MAP_ROWS,
            expected_cols: MAP_COLS,
        });
    }

    let expected = rows * cols;
    let mut neurons = Vec::with_capacity(expected);
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let idx = neurons.len();
        if idx == expected {
            return Err(syntax(lineno, "more neuron lines than the header declares"));
        }
        let mut t = line.split_whitespace();
        let r: usize = parse_field(t.next(), lineno, "row")?;
        let c: usize = parse_field(t.next(), lineno, "col")?;
        if (r, c) != (idx / cols, idx % cols) {
            return Err(syntax(
                lineno,
                format!("expected neuron ({}, {}), found ({r}, {c})", idx / cols, idx % cols),
            ));
        }
        let w1 = unit_weight(parse_field(t.next(), lineno, "w_in_1")?, lineno)?;
        let w2 = unit_weight(parse_field(t.next(), lineno, "w_in_2")?, lineno)?;
        let out = unit_weight(parse_field(t.next(), lineno, "w_out_1")?, lineno)?;
        if t.next().is_some() {
            return Err(syntax(lineno, "trailing tokens"));
        }
        neurons.push(Neuron {
            in_weights: [w1, w2],
            out_weight: out,
        });
    }
    if neurons.len() != expected {
        return Err(KsomError::Truncated {
            expected,
            found: neurons.len(),
        });
    }
    let mut map = SomMap::from_neurons(rows, cols, neurons, (0.0, 1.0))
        .map_err(|e| syntax(1, e.to_string()))?;
    map.freeze();
    Ok(map)
}

pub fn save_map(map: &SomMap, path: impl AsRef<Path>) -> Result<(), KsomError> {
    let path = path.as_ref();
    fs::write(path, to_ksom_string(map)).map_err(|source| KsomError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_map(path: impl AsRef<Path>) -> Result<SomMap, KsomError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| KsomError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_ksom(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimRng;

    fn map() -> SomMap {
        let mut rng = SimRng::new(11);
        SomMap::random(MAP_ROWS, MAP_COLS, (0.01, 0.2), (0.001, 0.5), &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let m = map();
        let back = parse_ksom(&to_ksom_string(&m)).unwrap();
        assert_eq!(back.neurons(), m.neurons());
        assert_eq!((back.rows(), back.cols()), (MAP_ROWS, MAP_COLS));
        assert!(back.is_frozen());
    }

    #[test]
    fn header_format() {
        let s = to_ksom_string(&map());
        assert!(s.starts_with("KSOM 1 25 25 2 1\n0 0 "));
        assert_eq!(s.lines().count(), 1 + 625);
        assert!(!s.contains('\r'));
    }

    #[test]
    fn wrong_dimensions_rejected() {
        let s = to_ksom_string(&map()).replacen("KSOM 1 25 25", "KSOM 1 24 25", 1);
        assert!(matches!(parse_ksom(&s), Err(KsomError::Dimensions { rows: 24, .. })));
    }

    #[test]
    fn out_of_range_weight_rejected() {
        let s = to_ksom_string(&map());
        let mut lines: Vec<String> = s.lines().map(str::to_owned).collect();
        lines[5] = "0 4 0.5 0.5 1.5".into();
        let err = parse_ksom(&lines.join("\n")).unwrap_err();
        assert!(matches!(err, KsomError::Range { line: 6, value } if value == 1.5));
        assert!(err.to_string().starts_with("line 6"));
    }

    #[test]
    fn malformed_lines_rejected() {
        let s = to_ksom_string(&map());
        let mut lines: Vec<String> = s.lines().map(str::to_owned).collect();
        lines[3] = "0 2 abc 0.5 0.1".into();
        assert!(matches!(
            parse_ksom(&lines.join("\n")),
            Err(KsomError::Syntax { line: 4, .. })
        ));
        lines.truncate(100);
        let fixed: Vec<String> = to_ksom_string(&map()).lines().take(100).map(str::to_owned).collect();
        assert!(matches!(
            parse_ksom(&fixed.join("\n")),
            Err(KsomError::Truncated { expected: 625, found: 99 })
        ));
        assert!(parse_ksom("KSOX 1 25 25 2 1").is_err());
        assert!(parse_ksom("").is_err());
    }
}
