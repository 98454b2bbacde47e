use serde::{Deserialize, Serialize};

/// Running per-feature mean and variance (Welford), used to standardize
/// observations before they reach the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    pub clip: f64,
}

impl RunningNorm {
    pub fn new(len: usize) -> Self {
        RunningNorm {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
            clip: 5.0,
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn update(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.mean.len(), "normalizer length mismatch");
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self, i: usize) -> f64 {
        if self.count < 2 {
            1.0
        } else {
            self.m2[i] / self.count as f64
        }
    }

    /// Features with (near) zero spread are centred but not scaled.
    pub fn normalize_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, (o, &v)) in out.iter_mut().zip(x).enumerate() {
            let var = self.variance(i);
            let sd = if var > 1e-8 { var.sqrt() } else { 1.0 };
            *o = ((v - self.mean[i]) / sd).clamp(-self.clip, self.clip);
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.normalize_into(x, &mut out);
        out
    }
}
