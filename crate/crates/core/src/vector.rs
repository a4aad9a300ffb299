//! Vector primitives shared by the retrieval pipelines.

use crate::types::EmbeddingVector;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum VectorError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
}

/// Cosine similarity of two vectors, clamped to [-1, 1] against rounding.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, VectorError> {
    if a.dimension() != b.dimension() {
        return Err(VectorError::DimensionMismatch {
            left: a.dimension(),
            right: b.dimension(),
        });
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.values().iter().zip(b.values()) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(VectorError::ZeroVector);
    }
    Ok((dot / (norm_a.sqrt() * norm_b.sqrt())).clamp(-1.0, 1.0))
}

/// Indices of the k best scores (descending, ties broken by `ids[index]`
/// ascending), selected with a bounded heap rather than a full sort.
pub fn top_k_indices(scores: &[f64], ids: &[&str], k: usize) -> Vec<(usize, f64)> {
    use std::cmp::Ordering;
    use std::collections::BinaryHeap;

    struct Entry<'a> {
        index: usize,
        score: f64,
        id: &'a str,
    }
    impl PartialEq for Entry<'_> {
        fn eq(&self, other: &Self) -> bool {
            self.cmp(other) == Ordering::Equal
        }
    }
    impl Eq for Entry<'_> {}
    impl PartialOrd for Entry<'_> {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry<'_> {
        // the heap's maximum is the worst kept entry
        fn cmp(&self, other: &Self) -> Ordering {
            other
                .score
                .total_cmp(&self.score)
                .then_with(|| self.id.cmp(other.id))
        }
    }

    let mut heap: BinaryHeap<Entry<'_>> = BinaryHeap::with_capacity(k + 1);
    for (index, score) in scores.iter().enumerate() {
        heap.push(Entry {
            index,
            score: *score,
            id: ids[index],
        });
        if heap.len() > k {
            heap.pop();
        }
    }
    let mut kept: Vec<Entry<'_>> = heap.into_vec();
    kept.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(b.id)));
    kept.into_iter().map(|e| (e.index, e.score)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec())
    }

    #[test]
    fn top_k_orders_and_breaks_ties_by_id() {
        let scores = [0.5, 0.9, 0.5, 0.1];
        let ids = ["d", "c", "a", "b"];
        let got = top_k_indices(&scores, &ids, 3);
        let indices: Vec<usize> = got.iter().map(|(i, _)| *i).collect();
        // 0.9 first, then the 0.5 tie resolved by id: "a" (index 2) before "d" (index 0)
        assert_eq!(indices, vec![1, 2, 0]);
    }

    #[test]
    fn identical_vectors_score_one() {
        let a = v(&[1.0, 0.0]);
        assert_eq!(cosine_similarity(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn orthogonal_vectors_score_zero() {
        assert_eq!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(),
            0.0
        );
    }

    #[test]
    #[allow(clippy::approx_constant)] // 0.7071 is the contract's literal
    fn forty_five_degrees() {
        // 1/sqrt(2), hand-computed
        let got = cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((got - 0.7071).abs() < 1e-4);
        assert!((got - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_hard_error() {
        let err = cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])).unwrap_err();
        assert_eq!(err, VectorError::DimensionMismatch { left: 1, right: 2 });
    }

    #[test]
    fn zero_vector_rejected() {
        let err = cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])).unwrap_err();
        assert_eq!(err, VectorError::ZeroVector);
    }

    #[test]
    fn clamped_against_rounding() {
        let a = v(&[0.1; 300]);
        let got = cosine_similarity(&a, &a).unwrap();
        assert!(got <= 1.0);
        assert!((got - 1.0).abs() < 1e-12);
    }
}
