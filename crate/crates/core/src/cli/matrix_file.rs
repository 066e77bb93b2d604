//! User-supplied mixing sequences: one matrix per block, rows as
//! comma-separated lines, blocks separated by blank lines. Block `k`
//! (1-based) is `W(k)`, cycled when the run is longer.

use std::path::Path;

use crate::error::{Error, Result};
use crate::topology::MixingMatrix;

pub fn parse(text: &str) -> Result<Vec<MixingMatrix>> {
    let mut blocks: Vec<Vec<Vec<f64>>> = vec![Vec::new()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if !blocks.last().expect("non-empty").is_empty() {
                blocks.push(Vec::new());
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| {
                    Error::MatrixFile(format!("line {}: `{}`: {e}", lineno + 1, tok.trim()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        blocks.last_mut().expect("non-empty").push(row);
    }
    if blocks.last().is_some_and(Vec::is_empty) {
        blocks.pop();
    }
    if blocks.is_empty() {
        return Err(Error::MatrixFile("no matrices found".into()));
    }
    let n = blocks[0].len();
    blocks
        .into_iter()
        .enumerate()
        .map(|(k, rows)| {
            if rows.len() != n {
                return Err(Error::MatrixFile(format!(
                    "block {} has {} rows, expected {n}",
                    k + 1,
                    rows.len()
                )));
            }
            MixingMatrix::from_rows(rows)
                .map_err(|e| Error::MatrixFile(format!("block {}: {e}", k + 1)))
        })
        .collect()
}

pub fn read(path: &Path) -> Result<Vec<MixingMatrix>> {
    parse(&std::fs::read_to_string(path)?)
}

pub fn render(mats: &[MixingMatrix]) -> String {
    mats.iter()
        .map(|m| {
            (0..m.n())
                .map(|i| {
                    m.row(i)
                        .iter()
                        .map(|v| format!("{v:.17e}"))
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect::<Vec<_>>()
                .join("\n")
        })
        .collect::<Vec<_>>()
        .join("\n\n")
        + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{gossip_matrix, WeightVector};

    #[test]
    fn parses_blocks() {
        let text = "0.5,0.5\n0.5,0.5\n\n\n1,0\n0,1\n";
        let mats = parse(text).unwrap();
        assert_eq!(mats.len(), 2);
        assert_eq!(mats[1], MixingMatrix::identity(2));
    }

    #[test]
    fn round_trip() {
        let r = WeightVector::from_positive(&[0.2, 0.3, 0.5, 0.1]).unwrap();
        let mats: Vec<_> = (1..=4).map(|t| gossip_matrix(t, &r).unwrap()).collect();
        assert_eq!(parse(&render(&mats)).unwrap(), mats);
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(parse(""), Err(Error::MatrixFile(_))));
        assert!(matches!(parse("1,x\n0,1\n"), Err(Error::MatrixFile(_))));
        assert!(matches!(
            parse("1,0\n0,1\n\n1\n"),
            Err(Error::MatrixFile(_))
        ));
        assert!(matches!(parse("1,0,0\n0,1\n"), Err(Error::MatrixFile(_))));
    }
}
