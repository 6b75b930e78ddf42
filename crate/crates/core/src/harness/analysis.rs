//! Output forms of the fixed-point and stability analyses.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::output::{format_f64, Cell, Table};
use crate::error::{Error, Result};
use crate::stability::{fixed_points, stability_sweep, Case, FixedPointJson, SweepRow};

/// JSON document listing every closed-form fixed point at one β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointsDoc {
    pub case: Case,
    pub beta: f64,
    pub rho: f64,
    pub eta: f64,
    pub fixed_points: Vec<FixedPointJson>,
}

pub fn fixed_points_doc(case: Case, beta: f64, rho: f64, eta: f64) -> Result<FixedPointsDoc> {
    let fps = fixed_points(case, beta, rho, eta)?;
    Ok(FixedPointsDoc {
        case,
        beta,
        rho,
        eta,
        fixed_points: fps.iter().map(|r| r.to_json()).collect(),
    })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Table `stability_sweep/<case>/rho<ρ>_eta<η>` with columns
/// `beta, kind, max_re_eig, verdict`.
pub fn sweep_table(case: Case, rho: f64, eta: f64, rows: &[SweepRow]) -> Table {
    let mut t = Table::new(
        format!(
            "stability_sweep/{case}/rho{}_eta{}",
            format_f64(rho),
            format_f64(eta)
        ),
        ["beta", "kind", "max_re_eig", "verdict"]
            .map(String::from)
            .to_vec(),
    );
    for r in rows {
        t.push(vec![
            Cell::Num(r.beta),
            r.kind.as_str().into(),
            Cell::Num(r.max_re_eig),
            r.verdict.as_str().into(),
        ]);
    }
    t
}

pub fn sweep(case: Case, rho: f64, eta: f64, betas: &[f64]) -> Result<Table> {
    Ok(sweep_table(
        case,
        rho,
        eta,
        &stability_sweep(case, rho, eta, betas)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matched_optimum_document() {
        let doc = fixed_points_doc(Case::Matched, 1.0, 1.0, 1.0).unwrap();
        let stable: Vec<_> = doc
            .fixed_points
            .iter()
            .filter(|f| f.verdict.as_str() == "stable")
            .collect();
        assert_eq!(stable.len(), 2);
        assert!(stable.iter().all(|f| f.eps_g.abs() < 1e-12));
        let text = serde_json::to_string(&doc).unwrap();
        let back: FixedPointsDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn sweep_columns() {
        let t = sweep(Case::Matched, 1.0, 1.0, &[1.0, 3.0]).unwrap();
        assert_eq!(
            t.text_column("kind").unwrap(),
            ["collapsed", "learnable", "collapsed"]
        );
        assert_eq!(
            t.text_column("verdict").unwrap(),
            ["unstable", "stable", "stable"]
        );
    }
}
