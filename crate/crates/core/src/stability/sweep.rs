//! Stability of each fixed-point family along a β grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fixed_points::{fixed_points, Case, FixedPointKind};
use super::jacobian::Verdict;
use crate::error::{Error, Result};

/// One family at one β. Branches of a family share their spectrum; the row
/// keeps the largest real part over branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub kind: FixedPointKind,
    pub max_re_eig: f64,
    pub verdict: Verdict,
}

pub fn stability_sweep(case: Case, rho: f64, eta: f64, betas: &[f64]) -> Result<Vec<SweepRow>> {
    if betas.is_empty() {
        return Err(Error::Config("beta grid is empty".into()));
    }
    let per_beta: Vec<Vec<SweepRow>> = betas
        .par_iter()
        .map(|&beta| -> Result<Vec<SweepRow>> {
            let mut rows: Vec<SweepRow> = Vec::new();
            for r in fixed_points(case, beta, rho, eta)? {
                let top = r.max_real();
                match rows.iter_mut().find(|row| row.kind == r.kind) {
                    Some(row) if top > row.max_re_eig => {
                        row.max_re_eig = top;
                        row.verdict = r.verdict;
                    }
                    Some(_) => {}
                    None => rows.push(SweepRow {
                        beta,
                        kind: r.kind,
                        max_re_eig: top,
                        verdict: r.verdict,
                    }),
                }
            }
            rows.sort_by_key(|r| r.kind);
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_beta.into_iter().flatten().collect())
}

/// A change of the strictly stable family along the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exchange {
    pub from: FixedPointKind,
    pub to: FixedPointKind,
    /// Midpoint between the last β where `from` is stable and the first β
    /// where `to` is.
    pub beta: f64,
}

/// Locates every change of the stable family in a sweep.
pub fn stability_exchanges(rows: &[SweepRow]) -> Vec<Exchange> {
    let mut betas: Vec<f64> = rows.iter().map(|r| r.beta).collect();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let mut last: Option<(FixedPointKind, f64)> = None;
    let mut out = Vec::new();
    for b in betas {
        let stable = rows
            .iter()
            .find(|r| r.beta == b && r.verdict == Verdict::Stable)
            .map(|r| r.kind);
        if let Some(kind) = stable {
            if let Some((prev, prev_b)) = last {
                if prev != kind {
                    out.push(Exchange {
                        from: prev,
                        to: kind,
                        beta: 0.5 * (prev_b + b),
                    });
                }
            }
            last = Some((kind, b));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdicts(rows: &[SweepRow], kind: FixedPointKind) -> Vec<(f64, Verdict)> {
        rows.iter()
            .filter(|r| r.kind == kind)
            .map(|r| (r.beta, r.verdict))
            .collect()
    }

    #[test]
    fn matched_three_branches() {
        let rows = stability_sweep(Case::Matched, 1.0, 1.0, &[1.9, 2.0, 2.1]).unwrap();
        let v = verdicts(&rows, FixedPointKind::Learnable);
        assert_eq!(v, vec![(1.9, Verdict::Stable), (2.0, Verdict::Marginal)]);
        let c = verdicts(&rows, FixedPointKind::Collapsed);
        assert_eq!(c[2], (2.1, Verdict::Stable));
    }

    #[test]
    fn mismatched_overfitting_loses_stability() {
        let rows = stability_sweep(Case::Mismatched, 1.0, 1.0, &[0.9, 1.0, 1.1]).unwrap();
        let v = verdicts(&rows, FixedPointKind::Overfitting);
        assert_eq!(v, vec![(0.9, Verdict::Stable), (1.0, Verdict::Marginal)]);
        let l = verdicts(&rows, FixedPointKind::Learnable);
        assert_eq!(l[0], (0.9, Verdict::Unstable));
        assert_eq!(l[2], (1.1, Verdict::Stable));
        let ex = stability_exchanges(&rows);
        assert_eq!(ex.len(), 1);
        assert!((ex[0].beta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(stability_sweep(Case::Matched, 1.0, 1.0, &[]).is_err());
    }
}
