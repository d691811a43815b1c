use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{check_dim, check_training, ClassifierError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
}

/// Stores the training set. `k` must be odd and at most the training size.
pub fn knn_fit(x: &[Vec<f64>], y: &[u8], k: usize) -> Result<KnnModel, ClassifierError> {
    check_training(x, y)?;
    if k == 0 || k.is_multiple_of(2) || k > x.len() {
        return Err(ClassifierError::InvalidParameter(format!("k = {k} must be odd and at most {}", x.len())));
    }
    Ok(KnnModel { k, x: x.to_vec(), y: y.to_vec() })
}

/// Heap entry ordered by (squared distance, index).
#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KnnModel {
    /// Indices of the `k` nearest training points by Euclidean distance,
    /// nearest first; equal distances go to the lower index.
    pub fn neighbors(&self, q: &[f64]) -> Result<Vec<usize>, ClassifierError> {
        check_dim(self.x[0].len(), q)?;
        let mut heap = BinaryHeap::with_capacity(self.k + 1);
        for (i, row) in self.x.iter().enumerate() {
            let d2: f64 = row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            let e = Entry(d2, i);
            if heap.len() < self.k {
                heap.push(e);
            } else if e < *heap.peek().expect("heap is full") {
                heap.pop();
                heap.push(e);
            }
        }
        Ok(heap.into_sorted_vec().into_iter().map(|e| e.1).collect())
    }

    /// Majority vote over the k nearest neighbors.
    pub fn predict(&self, q: &[f64]) -> Result<u8, ClassifierError> {
        let bankrupt = self.neighbors(q)?.iter().filter(|&&i| self.y[i] == 1).count();
        Ok(u8::from(2 * bankrupt > self.k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn brute(x: &[Vec<f64>], y: &[u8], k: usize, q: &[f64]) -> u8 {
        let mut d: Vec<(f64, usize)> = x
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i))
            .collect();
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let votes = d[..k].iter().filter(|(_, i)| y[*i] == 1).count();
        u8::from(votes * 2 > k)
    }

    #[test]
    fn k1_returns_the_matching_point() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![5.0, 5.0]];
        let m = knn_fit(&x, &[0, 1, 0], 1).unwrap();
        assert_eq!(m.predict(&[1.0, 1.0]).unwrap(), 1);
    }

    #[test]
    fn majority_of_five() {
        let x: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64]).collect();
        let m = knn_fit(&x, &[1, 1, 0, 1, 0, 0, 0], 5).unwrap();
        assert_eq!(m.predict(&[1.5]).unwrap(), 1);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let x = vec![vec![1.0], vec![-1.0], vec![1.0]];
        let m = knn_fit(&x, &[1, 0, 0], 1).unwrap();
        assert_eq!(m.neighbors(&[0.0]).unwrap(), vec![0]);
    }

    #[test]
    fn invalid_k() {
        let x = vec![vec![0.0]; 4];
        assert!(knn_fit(&x, &[0, 1, 0, 1], 2).is_err());
        assert!(knn_fit(&x, &[0, 1, 0, 1], 5).is_err());
        let m = knn_fit(&x, &[0, 1, 0, 1], 3).unwrap();
        assert!(matches!(m.predict(&[0.0, 1.0]), Err(ClassifierError::DimensionMismatch { .. })));
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = crate::seeded_rng(3, 0);
        let x: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<u8> = (0..200).map(|_| rng.random_range(0..2)).collect();
        let m = knn_fit(&x, &y, 5).unwrap();
        for _ in 0..50 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(m.predict(&q).unwrap(), brute(&x, &y, 5, &q));
        }
    }

    #[test]
    fn integer_grid_ties_match_brute_force() {
        let mut rng = crate::seeded_rng(4, 0);
        let x: Vec<Vec<f64>> = (0..150).map(|_| (0..2).map(|_| rng.random_range(0..4) as f64).collect()).collect();
        let y: Vec<u8> = (0..150).map(|_| rng.random_range(0..2)).collect();
        for k in [3, 5, 7, 9, 11] {
            let m = knn_fit(&x, &y, k).unwrap();
            for a in 0..4 {
                for b in 0..4 {
                    let q = [a as f64, b as f64];
                    assert_eq!(m.predict(&q).unwrap(), brute(&x, &y, k, &q));
                }
            }
        }
    }
}
