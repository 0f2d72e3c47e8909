//! Study table emission. Output bytes depend only on the table and the
//! configuration, so identical runs produce identical files.

use battpool_core::study::StudyTable;
use battpool_core::trace::Unit;
use serde::{Deserialize, Serialize};

use crate::config::StudyConfig;

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Column names; the requirement column carries the table's energy unit
/// (`B_requirement_MJ` for power traces, `B_requirement_units` for chains).
pub fn csv_columns(unit: Unit) -> [String; 7] {
    [
        "N".into(),
        "epsilon".into(),
        "subset_ids".into(),
        format!("B_requirement_{unit}"),
        "B_requirement_MWh".into(),
        "lolp_at_requirement".into(),
        "subsets_evaluated".into(),
    ]
}

pub const SCHEMA: &str = "\
study CSV (study.csv)
  Leading lines starting with '#' carry the tool version, the SHA-256 of the
  effective configuration and the configuration itself as compact JSON.
  N                    subset size
  epsilon              LOLP target
  subset_ids           ';'-separated location ids of the worst-case subset
  B_requirement_MJ     largest minimal battery over all subsets of size N;
                       named B_requirement_units for chain inputs, which
                       are in integer reward units
  B_requirement_MWh    the same requirement in MWh (empty for chain inputs)
  lolp_at_requirement  trace LOLP of the worst subset at B_requirement
  subsets_evaluated    number of subsets of size N that were sized

study JSON (study.json)
  tool, version, config_sha256, config (the embedded configuration) and
  table: locations, demand_fraction, epsilons, resolution, unit and rows,
  one row per (N, epsilon) with the CSV fields plus the subset indices.

occupancy CSV (simulate)
  step, timestamp (ISO-8601 UTC), occupancy (MJ), loss_flag (1 if the step
  from this row to the next lost load; empty on the final row)
";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub config: StudyConfig,
    pub table: StudyTable,
}

impl StudyReport {
    pub fn new(config: &StudyConfig, table: StudyTable) -> Self {
        StudyReport {
            tool: TOOL.into(),
            version: VERSION.into(),
            config_sha256: config.sha256(),
            config: config.clone(),
            table,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialise");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# {TOOL} {}\n# config_sha256 {}\n# config {}\n",
            self.version,
            self.config_sha256,
            self.config.canonical_json()
        );
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(csv_columns(self.table.unit))
            .expect("in-memory write");
        for row in &self.table.rows {
            w.write_record([
                row.n.to_string(),
                row.epsilon.to_string(),
                row.subset_ids.join(";"),
                row.b_requirement.to_string(),
                row.b_requirement_mwh
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
                row.lolp_at_requirement.to_string(),
                row.subsets_evaluated.to_string(),
            ])
            .expect("in-memory write");
        }
        out.push_str(
            std::str::from_utf8(&w.into_inner().expect("in-memory flush")).expect("utf-8"),
        );
        out
    }
}
