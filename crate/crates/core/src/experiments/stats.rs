//! Order statistics and rank correlation over replica values.
//!
//! Quartiles use the median-unbiased estimator (Hyndman-Fan type 8).

use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics, RankTieBreaker, Statistics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub lower_quartile: f64,
    pub median: f64,
    pub upper_quartile: f64,
    pub max: f64,
}

impl BoxStats {
    pub fn iqr(&self) -> f64 {
        self.upper_quartile - self.lower_quartile
    }
}

fn finite(values: &[f64]) -> Vec<f64> {
    values.iter().copied().filter(|v| v.is_finite()).collect()
}

/// Box-plot statistics of the finite entries; `None` when there are none.
pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    let v = finite(values);
    if v.is_empty() {
        return None;
    }
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut data = Data::new(v);
    Some(BoxStats {
        min,
        lower_quartile: data.lower_quartile(),
        median: data.median(),
        upper_quartile: data.upper_quartile(),
        max,
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    box_stats(values).map(|b| b.median)
}

/// Spearman's rank correlation over pairs where both entries are finite.
/// Ties get average ranks. `None` for fewer than two pairs or a constant
/// column.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (*a, *b))
        .unzip();
    if xs.len() < 2 {
        return None;
    }
    let rx = Data::new(xs).ranks(RankTieBreaker::Average);
    let ry = Data::new(ys).ranks(RankTieBreaker::Average);
    let sx = rx.iter().std_dev();
    let sy = ry.iter().std_dev();
    if !(sx > 0.0 && sy > 0.0) {
        return None;
    }
    Some(rx.iter().covariance(ry.iter()) / (sx * sy))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_of_small_sample() {
        let b = box_stats(&[5.0, 1.0, 3.0, 2.0, 4.0, f64::NAN]).unwrap();
        assert_eq!(b.median, 3.0);
        assert_eq!((b.min, b.max), (1.0, 5.0));
        assert!(b.lower_quartile < 2.0 && b.lower_quartile > 1.0);
        assert!((b.iqr() - (b.upper_quartile - b.lower_quartile)).abs() < 1e-15);
        assert_eq!(median(&[1.0, 2.0, 3.0, 10.0]), Some(2.5));
        assert!(box_stats(&[]).is_none());
    }

    #[test]
    fn rank_correlation() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &[10.0, 20.0, 25.0, 100.0, 1e3]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        // hand-ranked: d = (0, 1, -1, 0), rho = 1 - 6 * 2 / (4 * 15) = 0.8
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        assert!(spearman(&x, &[1.0; 5]).is_none());
        assert!(spearman(&[1.0], &[1.0]).is_none());
    }
}
