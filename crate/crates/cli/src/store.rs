//! Filesystem persistence for benchmark sweep cells.
//!
//! Each cell writes its own directory under `<out>/cells/`: fitted model
//! JSONs, solver diagnostics, the raw score vectors behind every AUC, and a
//! `cell.json` marker holding the rows. A rerun loads completed cells from
//! their markers instead of recomputing, which makes interrupted runs
//! resumable; cell outputs are deterministic, so resumed and fresh runs
//! produce identical results.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use adapt_core::error::{Error, Result};
use adapt_core::harness::{CellArtifacts, CellDescriptor, CellResult, CellStore};
use adapt_core::io::write_json;
use adapt_core::LinkFunction;

pub struct FsCellStore {
    root: PathBuf,
}

impl FsCellStore {
    pub fn new(out_dir: &Path) -> Result<Self> {
        let root = out_dir.join("cells");
        fs::create_dir_all(&root)?;
        Ok(FsCellStore { root })
    }

    fn cell_dir(&self, cell: &CellDescriptor) -> PathBuf {
        self.root.join(format!(
            "rho{:02}_pp{:02}_rep{:03}",
            cell.rho_index, cell.perturb_index, cell.rep
        ))
    }
}

impl CellStore for FsCellStore {
    fn load(&self, cell: &CellDescriptor) -> Option<CellResult> {
        let marker = self.cell_dir(cell).join("cell.json");
        let text = fs::read_to_string(marker).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn store(
        &self,
        cell: &CellDescriptor,
        result: &CellResult,
        artifacts: &CellArtifacts,
    ) -> Result<()> {
        let dir = self.cell_dir(cell);
        fs::create_dir_all(&dir)?;

        for (method, beta) in &artifacts.models {
            adapt_core::io::write_model_json(
                beta,
                LinkFunction::Logistic,
                &dir.join(format!("model_{method}.json")),
            )?;
        }
        if let Some(diag) = &artifacts.adapt_diagnostics {
            write_json(diag, &dir.join("diagnostics_adapt.json"))?;
        }

        // Scores CSV: every AUC in the results is recomputable from it.
        let mut w = fs::File::create(dir.join("scores.csv"))?;
        writeln!(w, "method,eval_period,row,score,label")?;
        for (method, period, scores) in &artifacts.scores {
            let labels = artifacts
                .labels
                .iter()
                .find(|(p, _)| p == period)
                .map(|(_, l)| l.as_slice())
                .unwrap_or(&[]);
            for (i, s) in scores.iter().enumerate() {
                let label = labels.get(i).copied().unwrap_or(f64::NAN);
                writeln!(w, "{method},{period},{i},{s},{label}")?;
            }
        }
        w.flush()?;

        // The marker goes last: a cell directory without it is incomplete
        // and will be recomputed.
        let marker = dir.join("cell.json");
        let tmp = dir.join("cell.json.tmp");
        let text = serde_json::to_string_pretty(result).map_err(Error::Json)?;
        fs::write(&tmp, text)?;
        fs::rename(&tmp, &marker)?;
        Ok(())
    }
}
