//! The scoring interface shared by every model family.

use crate::dataset::DesignMatrix;
use crate::error::{Error, Result};

/// Anything that maps an encoded row to a no-show probability.
pub trait Scorer: Send + Sync {
    fn width(&self) -> usize;

    /// Probability for one row. Callers check the width.
    fn score_row(&self, row: &[f64]) -> f64;

    fn check_width(&self, actual: usize) -> Result<()> {
        if actual != self.width() {
            return Err(Error::Dimension {
                expected: self.width(),
                actual,
            });
        }
        Ok(())
    }

    fn predict(&self, row: &[f64]) -> Result<f64> {
        self.check_width(row.len())?;
        Ok(self.score_row(row))
    }

    fn score_matrix(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        self.check_width(x.width())?;
        Ok(x.rows().map(|r| self.score_row(r)).collect())
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn width(&self) -> usize {
        (**self).width()
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        (**self).score_row(row)
    }
}

/// Same probability for every row.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer {
    width: usize,
    probability: f64,
}

impl ConstantScorer {
    pub fn new(width: usize, probability: f64) -> Self {
        ConstantScorer { width, probability }
    }
}

impl Scorer for ConstantScorer {
    fn width(&self) -> usize {
        self.width
    }

    fn score_row(&self, _row: &[f64]) -> f64 {
        self.probability
    }
}

/// Wraps a closure as a scorer.
pub struct FnScorer<F> {
    width: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnScorer<F> {
    pub fn new(width: usize, f: F) -> Self {
        FnScorer { width, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Scorer for FnScorer<F> {
    fn width(&self) -> usize {
        self.width
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        (self.f)(row)
    }
}
