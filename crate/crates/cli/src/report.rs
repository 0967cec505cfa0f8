//! Output records and their JSON and CSV encodings.

use std::io::Write;

use famsel::AdjustedAnalysis;
use serde::{Deserialize, Serialize};

use crate::input::Input;
use crate::CliError;

pub const TOOL_VERSION: &str = concat!("famsel ", env!("CARGO_PKG_VERSION"));

/// Column order of the per-family CSV output.
pub const CSV_COLUMNS: [&str; 5] = ["family_id", "selected", "r_min", "adjusted_level", "rejected"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub q: f64,
    pub rule: String,
    pub procedure: String,
    pub adjustment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRecord {
    pub family_id: String,
    pub selected: bool,
    pub r_min: Option<usize>,
    pub adjusted_level: Option<f64>,
    /// Hypothesis identifiers as they appeared in the input.
    pub rejected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub r: usize,
    pub families: Vec<FamilyRecord>,
    /// Selected family ids per round of the iterative adjustment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub input_digest: Option<String>,
    pub tool_version: String,
    pub seed: Option<u64>,
}

impl Metadata {
    pub fn new(input_digest: Option<String>, seed: Option<u64>) -> Self {
        Metadata {
            input_digest,
            tool_version: TOOL_VERSION.into(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub config: AnalysisConfig,
    pub selection: SelectionReport,
    pub metadata: Metadata,
}

impl AnalysisReport {
    /// One record per input family, selected or not.
    pub fn new(
        config: AnalysisConfig,
        analysis: &AdjustedAnalysis,
        input: &Input,
        iterative: bool,
    ) -> Self {
        let ensemble = &input.ensemble;
        let families = ensemble
            .families()
            .iter()
            .enumerate()
            .map(|(i, family)| {
                let decision = analysis.decision(i);
                FamilyRecord {
                    family_id: family.id.clone(),
                    selected: decision.is_some(),
                    r_min: analysis.selection.r_min.get(&i).copied(),
                    adjusted_level: decision.map(|d| d.adjusted_level),
                    rejected: decision
                        .map(|d| d.rejected.iter().map(|&j| input.hypotheses[i][j].clone()).collect())
                        .unwrap_or_default(),
                }
            })
            .collect();
        let id = |i: &usize| ensemble.family(*i).id.clone();
        let trajectory = iterative.then(|| {
            analysis
                .trajectory
                .iter()
                .map(|round| round.iter().map(id).collect())
                .collect()
        });
        AnalysisReport {
            config,
            selection: SelectionReport {
                r: analysis.selection.r,
                families,
                trajectory,
            },
            metadata: Metadata::new(Some(input.digest.clone()), None),
        }
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for f in &self.selection.families {
            w.write_record([
                f.family_id.clone(),
                f.selected.to_string(),
                f.r_min.map(|r| r.to_string()).unwrap_or_default(),
                f.adjusted_level.map(|l| l.to_string()).unwrap_or_default(),
                f.rejected.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Writes `value` as pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(value: &T, mut out: impl Write) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use famsel::{analyze, Adjustment, ErrorMetric, Procedure, SelectionRule};

    #[test]
    fn reports_round_trip_through_json() {
        let input = crate::input::parse(
            b"family,hypothesis,p_value\nx,h1,0.001\nx,h2,0.2\ny,h1,0.6\nz,h9,0.013\n",
        )
        .unwrap();
        let analysis = analyze(
            &input.ensemble,
            &SelectionRule::MinPThreshold(0.05),
            &Procedure::Holm,
            0.07,
            ErrorMetric::Fwer,
            Adjustment::Simple,
        )
        .unwrap();
        let config = AnalysisConfig {
            q: 0.07,
            rule: "minp:0.05".into(),
            procedure: "holm".into(),
            adjustment: "simple".into(),
        };
        let report = AnalysisReport::new(config, &analysis, &input, false);
        let text = serde_json::to_string_pretty(&report).unwrap();
        let back: AnalysisReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
        assert_eq!(report.selection.families.len(), 3);
        assert_eq!(report.selection.families[2].rejected, vec!["h9".to_string()]);
    }
}
