use serde::{Deserialize, Serialize};

pub const SWEEP_CSV_HEADER: &str = "rate,repeat,seed,accuracy";
pub const DEFAULT_RATES: [f64; 6] = [0.1, 0.2, 0.3, 0.5, 0.7, 1.0];
pub const DEFAULT_REPEATS: usize = 3;

/// Test accuracy of one run trained on a downsampled training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rate: f64,
    pub repeat: usize,
    pub seed: u64,
    pub accuracy: f64,
}

impl SweepPoint {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.rate, self.repeat, self.seed, self.accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub rate: f64,
    pub mean_accuracy: f64,
    pub repeats: usize,
}

/// Mean accuracy per rate, rates in ascending order.
pub fn sweep_curve(points: &[SweepPoint]) -> Vec<CurvePoint> {
    let mut rates: Vec<f64> = points.iter().map(|p| p.rate).collect();
    rates.sort_by(|a, b| a.total_cmp(b));
    rates.dedup();
    rates
        .into_iter()
        .map(|rate| {
            let acc: Vec<f64> = points.iter().filter(|p| p.rate == rate).map(|p| p.accuracy).collect();
            CurvePoint {
                rate,
                mean_accuracy: acc.iter().sum::<f64>() / acc.len() as f64,
                repeats: acc.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_means_over_repeats() {
        let pts: Vec<SweepPoint> = [(0.5, 0.4), (0.1, 0.2), (0.5, 0.6), (0.1, 0.4), (0.5, 0.8), (0.1, 0.0)]
            .iter()
            .enumerate()
            .map(|(i, &(rate, accuracy))| SweepPoint {
                rate,
                repeat: i / 2,
                seed: i as u64,
                accuracy,
            })
            .collect();
        let c = sweep_curve(&pts);
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].rate, c[0].repeats), (0.1, 3));
        assert!((c[0].mean_accuracy - 0.2).abs() < 1e-12);
        assert!((c[1].mean_accuracy - 0.6).abs() < 1e-12);
        assert_eq!(pts[0].csv_row(), "0.5,0,0,0.4");
    }
}
