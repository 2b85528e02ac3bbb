use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{GraphopSpec, RunConfig};
use crate::run::{build_graphop, operator_facts, power_law_operator, OperatorFacts};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub rows: Vec<OperatorFacts>,
    /// Whether the radius strictly increases along the rows.
    pub radius_increasing: bool,
}

/// Spectral facts for the configured graphop; a power-law spec with a
/// `refine` list yields one row per resolution.
pub fn estimate_graphop(config: &RunConfig) -> Result<EstimateReport> {
    let rows = match &config.graphop {
        GraphopSpec::PowerLaw { alpha, m, refine } => {
            let levels = if refine.is_empty() { vec![*m] } else { refine.clone() };
            levels
                .into_iter()
                .map(|m| operator_facts(&power_law_operator(*alpha, m)?).with_context(|| format!("at m = {m}")))
                .collect::<Result<Vec<_>>>()?
        }
        spec => vec![operator_facts(&build_graphop(spec, config.seed)?)?],
    };
    let radius_increasing = rows.windows(2).all(|w| w[1].numerical_radius > w[0].numerical_radius);
    Ok(EstimateReport { rows, radius_increasing })
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.17e}")).unwrap_or_default()
}

impl EstimateReport {
    pub const CSV_HEADER: &'static str =
        "label,nodes,numerical_radius,operator_norm,norm_inf_to_1,w_1,w_2,w_inf,c_regularity";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let w = r.w_norms.map_or([None; 3], |w| w.map(Some));
            let _ = writeln!(
                out,
                "\"{}\",{},{:.17e},{},{:.17e},{},{},{},{}",
                r.label,
                r.nodes,
                r.numerical_radius,
                cell(r.operator_norm),
                r.norm_infty_to_1,
                cell(w[0]),
                cell(w[1]),
                cell(w[2]),
                cell(r.c_regularity)
            );
        }
        out
    }

    pub fn human(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.label);
            let _ = writeln!(out, "  nodes                   {}", r.nodes);
            let _ = writeln!(out, "  numerical radius n(A)   {:.6}", r.numerical_radius);
            if let Some(n) = r.operator_norm {
                let _ = writeln!(out, "  operator norm ||A||     {n:.6}");
            }
            let _ = writeln!(out, "  ||A||_(inf->1)          {:.6}", r.norm_infty_to_1);
            if let Some([w1, w2, winf]) = r.w_norms {
                let _ = writeln!(out, "  ||W||_1, _2, _inf       {w1:.6}, {w2:.6}, {winf:.6}");
            }
            match r.c_regularity {
                Some(c) => {
                    let _ = writeln!(out, "  c-regular with c        {c:.6}");
                }
                None => {
                    let _ = writeln!(out, "  not c-regular");
                }
            }
        }
        if self.rows.len() > 1 {
            let _ = writeln!(out, "radius strictly increasing: {}", self.radius_increasing);
        }
        out
    }

    /// Writes `estimate.csv`, `estimate.json` and `estimate.txt`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        let files = [
            ("estimate.csv", self.to_csv()),
            ("estimate.json", json),
            ("estimate.txt", self.human()),
        ];
        let mut written = Vec::new();
        for (name, text) in files {
            let path = dir.join(name);
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}
