//! Observation scaling: a fixed affine map to [-1, 1], then running
//! standardisation, then clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNormalizer {
    /// Declared raw bounds per dimension.
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
    pub clip: f64,
}

impl RunningNormalizer {
    pub fn new(low: Vec<f64>, high: Vec<f64>, clip: f64) -> Result<Self> {
        if low.len() != high.len() || low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(Error::Contract("normalizer bounds must pair up with low < high".into()));
        }
        if !(clip > 0.0) {
            return Err(Error::Contract("clip range must be positive".into()));
        }
        let n = low.len();
        Ok(RunningNormalizer { low, high, mean: vec![0.0; n], var: vec![1.0; n], count: 0.0, clip })
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    /// Affine map of the declared bounds onto [-1, 1].
    pub fn prescale(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter().zip(self.low.iter().zip(&self.high)).map(|(x, (l, h))| 2.0 * (x - l) / (h - l) - 1.0).collect()
    }

    /// Merges a batch of raw observations into the running moments.
    pub fn update(&mut self, batch: &[Vec<f64>]) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        let n = batch.len() as f64;
        let scaled: Vec<Vec<f64>> = batch
            .iter()
            .map(|o| {
                if o.len() == self.dim() {
                    Ok(self.prescale(o))
                } else {
                    Err(Error::Contract(format!("observation has {} dims, expected {}", o.len(), self.dim())))
                }
            })
            .collect::<Result<_>>()?;
        for d in 0..self.dim() {
            let bm = scaled.iter().map(|o| o[d]).sum::<f64>() / n;
            let bv = scaled.iter().map(|o| (o[d] - bm).powi(2)).sum::<f64>() / n;
            if self.count == 0.0 {
                self.mean[d] = bm;
                self.var[d] = bv;
                continue;
            }
            let total = self.count + n;
            let delta = bm - self.mean[d];
            self.mean[d] += delta * n / total;
            self.var[d] = (self.var[d] * self.count + bv * n + delta * delta * self.count * n / total) / total;
        }
        self.count += n;
        Ok(())
    }

    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        self.prescale(obs)
            .iter()
            .enumerate()
            .map(|(d, x)| ((x - self.mean[d]) / (self.var[d] + 1e-8).sqrt()).clamp(-self.clip, self.clip))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prescale_endpoints() {
        let n = RunningNormalizer::new(vec![0.0, -5.0], vec![10.0, 5.0], 5.0).unwrap();
        assert_eq!(n.prescale(&[10.0, -5.0]), vec![1.0, -1.0]);
        assert_eq!(n.prescale(&[5.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn merged_moments_equal_batch_moments() {
        let mut n = RunningNormalizer::new(vec![0.0], vec![1.0], 5.0).unwrap();
        let data: Vec<Vec<f64>> = (0..30).map(|i| vec![((i * 7) % 11) as f64 / 11.0]).collect();
        n.update(&data[..7]).unwrap();
        n.update(&data[7..19]).unwrap();
        n.update(&data[19..]).unwrap();
        let s: Vec<f64> = data.iter().map(|o| 2.0 * o[0] - 1.0).collect();
        let m = s.iter().sum::<f64>() / 30.0;
        let v = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 30.0;
        assert!((n.mean[0] - m).abs() < 1e-12 && (n.var[0] - v).abs() < 1e-12);
    }

    #[test]
    fn constant_stream_standardizes_to_zero() {
        let mut n = RunningNormalizer::new(vec![0.0], vec![4.0], 5.0).unwrap();
        for _ in 0..10 {
            n.update(&[vec![3.0], vec![3.0]]).unwrap();
        }
        assert!(n.normalize(&[3.0])[0].abs() < 1e-12);
        // far outside the observed range: clipped
        assert_eq!(n.normalize(&[4.0])[0], 5.0);
    }
}
