//! Small dense-vector helpers shared by the linear-algebra modules.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }

    #[test]
    fn merge_matches_sequential() {
        let values: Vec<f64> = (0..100).map(|i| (i as f64).sin() * 1e3).collect();
        let mut whole = CompensatedSum::default();
        values.iter().for_each(|&v| whole.add(v));
        let (left, right) = values.split_at(37);
        let mut a = CompensatedSum::default();
        left.iter().for_each(|&v| a.add(v));
        let mut b = CompensatedSum::default();
        right.iter().for_each(|&v| b.add(v));
        a.merge(&b);
        assert!((a.value() - whole.value()).abs() < 1e-12);
    }
}
