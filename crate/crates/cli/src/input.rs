//! Reading `family,hypothesis,p_value` files.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use famsel::{Family, PValueEnsemble};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const HEADER: [&str; 3] = ["family", "hypothesis", "p_value"];

/// A parsed input file.
#[derive(Debug)]
pub struct Input {
    pub ensemble: PValueEnsemble,
    /// Hypothesis identifiers per family, in file order.
    pub hypotheses: Vec<Vec<String>>,
    /// `sha256:` followed by the hex digest of the raw bytes.
    pub digest: String,
}

pub fn read_path(path: &Path) -> Result<Input, CliError> {
    let bytes = if path.as_os_str() == "-" {
        let mut buf = Vec::new();
        std::io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| CliError::Input(format!("cannot read standard input: {e}")))?;
        buf
    } else {
        std::fs::read(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?
    };
    parse(&bytes)
}

fn at_line(line: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("line {line}: {msg}"))
}

pub fn parse(bytes: &[u8]) -> Result<Input, CliError> {
    let digest = format!("sha256:{}", hex::encode(Sha256::digest(bytes)));
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let header = reader
        .headers()
        .map_err(|e| at_line(1, e))?
        .iter()
        .map(str::to_owned)
        .collect::<Vec<_>>();
    if header != HEADER {
        return Err(at_line(
            1,
            format!("expected header '{}', found '{}'", HEADER.join(","), header.join(",")),
        ));
    }

    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut p_values: Vec<Vec<f64>> = Vec::new();
    let mut hypotheses: Vec<Vec<String>> = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            at_line(line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(at_line(line, format!("expected 3 fields, found {}", record.len())));
        }
        let (family, hypothesis, raw) = (&record[0], &record[1], &record[2]);
        let p: f64 = raw
            .parse()
            .map_err(|_| at_line(line, format!("p-value '{raw}' is not a number")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(at_line(line, format!("p-value {p} is outside [0, 1]")));
        }
        if !seen.insert((family.to_owned(), hypothesis.to_owned())) {
            return Err(at_line(
                line,
                format!("duplicate hypothesis '{hypothesis}' in family '{family}'"),
            ));
        }
        let i = *index.entry(family.to_owned()).or_insert_with(|| {
            ids.push(family.to_owned());
            p_values.push(Vec::new());
            hypotheses.push(Vec::new());
            ids.len() - 1
        });
        p_values[i].push(p);
        hypotheses[i].push(hypothesis.to_owned());
    }
    if ids.is_empty() {
        return Err(CliError::Input("input has no data rows".into()));
    }

    let families = ids
        .into_iter()
        .zip(p_values)
        .map(|(id, p)| Family::new(id, p))
        .collect();
    let ensemble = PValueEnsemble::new(families).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(Input {
        ensemble,
        hypotheses,
        digest,
    })
}
