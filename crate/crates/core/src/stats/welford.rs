/// Streaming per-element mean and variance (Welford's update).
#[derive(Clone, Debug)]
pub struct Welford {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.mean.len());
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    /// Combines two accumulators (Chan et al. pairwise update).
    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Sample variance with divisor `count - 1` (zero for fewer than two samples).
    pub fn variance(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let d = (self.count - 1) as f64;
        self.m2.iter().map(|s| (s / d).max(0.0)).collect()
    }

    pub fn std(&self) -> Vec<f64> {
        self.variance().into_iter().map(f64::sqrt).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_matches_sequential() {
        let data: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64, (i * i) as f64 * 0.1]).collect();
        let mut all = Welford::new(2);
        let mut a = Welford::new(2);
        let mut b = Welford::new(2);
        for (i, x) in data.iter().enumerate() {
            all.push(x);
            if i < 4 {
                a.push(x)
            } else {
                b.push(x)
            }
        }
        a.merge(&b);
        for i in 0..2 {
            assert!((a.mean()[i] - all.mean()[i]).abs() < 1e-12);
            assert!((a.variance()[i] - all.variance()[i]).abs() < 1e-12);
        }
    }
}
