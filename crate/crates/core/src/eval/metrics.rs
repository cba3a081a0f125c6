//! Confusion matrices and unweighted average recall.

use serde::Serialize;

use crate::error::{Error, Result};

/// `counts[truth][prediction]` over `k` classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Confusion {
    k: usize,
    counts: Vec<u64>,
}

impl Confusion {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_pairs(k: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut c = Self::new(k);
        for (t, p) in pairs {
            c.record(t, p)?;
        }
        Ok(c)
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Ok(Self {
            k,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.k || predicted >= self.k {
            return Err(Error::Config(format!(
                "class pair ({truth}, {predicted}) outside {} classes",
                self.k
            )));
        }
        self.counts[truth * self.k + predicted] += 1;
        Ok(())
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn row_total(&self, truth: usize) -> u64 {
        self.counts[truth * self.k..(truth + 1) * self.k]
            .iter()
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &Confusion) -> Result<()> {
        if other.k != self.k {
            return Err(Error::Shape(
                "cannot merge confusions of different size".into(),
            ));
        }
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Per-class recalls; a class without test examples is an error.
    pub fn recalls(&self) -> Result<Vec<f64>> {
        (0..self.k)
            .map(|c| match self.row_total(c) {
                0 => Err(Error::Undefined(format!(
                    "class {c} has no test examples; recall undefined"
                ))),
                n => Ok(self.get(c, c) as f64 / n as f64),
            })
            .collect()
    }

    pub fn uar(&self) -> Result<f64> {
        Ok(mean_of(&self.recalls()?))
    }
}

fn mean_of(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Recalls and their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UarReport {
    pub recalls: Vec<f64>,
    pub uar: f64,
}

pub fn uar(confusion: &Confusion) -> Result<UarReport> {
    let recalls = confusion.recalls()?;
    Ok(UarReport {
        uar: mean_of(&recalls),
        recalls,
    })
}

pub fn uar_from_recalls(recalls: &[f64]) -> Result<f64> {
    if recalls.is_empty() {
        return Err(Error::Undefined("no recalls to average".into()));
    }
    Ok(mean_of(recalls))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_source_recalls() {
        let u = uar_from_recalls(&[0.88, 0.79, 0.72]).unwrap();
        assert!((u - 0.7967).abs() < 5e-5);
    }

    #[test]
    fn diagonal_and_constant_predictions() {
        let d = Confusion::from_rows(&[vec![5, 0, 0], vec![0, 7, 0], vec![0, 0, 2]]).unwrap();
        assert_eq!(uar(&d).unwrap().uar, 1.0);
        let one = Confusion::from_pairs(3, [(0, 1), (1, 1), (2, 1), (2, 1)]).unwrap();
        assert!((one.uar().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_class_is_undefined() {
        let c = Confusion::from_pairs(3, [(0, 0), (1, 1)]).unwrap();
        assert!(matches!(c.uar(), Err(Error::Undefined(_))));
    }

    #[test]
    fn rows_sum_to_class_counts() {
        let mut c = Confusion::from_pairs(3, [(0, 0), (0, 2), (1, 1), (2, 0)]).unwrap();
        assert_eq!((c.row_total(0), c.row_total(1), c.row_total(2)), (2, 1, 1));
        assert_eq!(c.total(), 4);
        assert!(c.record(3, 0).is_err());
    }
}
