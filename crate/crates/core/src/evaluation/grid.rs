//! Bookkeeping shared by the hyperparameter grid searches.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::cv::CvReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell<P> {
    pub params: P,
    /// `None` when the cell failed.
    pub report: Option<CvReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome<P> {
    pub best: P,
    pub report: CvReport,
    pub cells: Vec<GridCell<P>>,
}

/// Highest mean AUROC wins; `prefer(a, b) == Less` means `a` is preferred
/// among equal means. Failed cells are skipped.
pub fn pick_best<P: Clone>(cells: Vec<GridCell<P>>, prefer: impl Fn(&P, &P) -> Ordering) -> Result<GridOutcome<P>> {
    let mut best: Option<(&P, &CvReport)> = None;
    for cell in &cells {
        let Some(report) = &cell.report else { continue };
        if report.mean.is_nan() {
            continue;
        }
        best = match best {
            None => Some((&cell.params, report)),
            Some((bp, br)) => {
                let better = report.mean > br.mean || (report.mean == br.mean && prefer(&cell.params, bp) == Ordering::Less);
                if better {
                    Some((&cell.params, report))
                } else {
                    Some((bp, br))
                }
            }
        };
    }
    let (best, report) = best.ok_or(Error::Search { cells: cells.len() })?;
    let (best, report) = (best.clone(), report.clone());
    Ok(GridOutcome { best, report, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::CvPlan;

    fn cell(p: u32, mean: Option<f64>) -> GridCell<u32> {
        GridCell {
            params: p,
            report: mean.map(|m| CvReport::from_scores("t", CvPlan::new(2, 1).unwrap(), vec![m, m])),
            error: mean.is_none().then(|| "failed".to_string()),
        }
    }

    #[test]
    fn ties_follow_preference() {
        let out = pick_best(vec![cell(5, Some(0.7)), cell(3, Some(0.7)), cell(9, Some(0.6))], |a, b| a.cmp(b)).unwrap();
        assert_eq!(out.best, 3);
    }

    #[test]
    fn failed_cells_are_skipped() {
        let out = pick_best(vec![cell(1, None), cell(2, Some(0.55))], |a, b| a.cmp(b)).unwrap();
        assert_eq!(out.best, 2);
        assert!(matches!(pick_best(vec![cell(1, None)], |a, b| a.cmp(b)), Err(Error::Search { cells: 1 })));
    }
}
