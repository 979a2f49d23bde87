//! Text-to-video scoring: inner product, max over prototypes, and full
//! similarity matrices with the winning prototype recorded per cell.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};

/// Inner product of two joint-space vectors.
pub fn base_similarity(text: &[f64], video: &[f64]) -> Result<f64> {
    if text.len() != video.len() {
        return Err(Error::shape("base_similarity", (1, text.len()), (1, video.len())));
    }
    Ok(dot(text, video))
}

/// Best inner product over the prototype rows and the (0-based) index of the
/// winning row. Ties go to the lowest index.
pub fn tmvm_similarity(text: &[f64], prototypes: &Matrix) -> Result<(f64, usize)> {
    if prototypes.rows() == 0 {
        return Err(Error::Argument("empty prototype set".into()));
    }
    if prototypes.cols() != text.len() {
        return Err(Error::shape("tmvm_similarity", (1, text.len()), prototypes.shape()));
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for (k, row) in prototypes.row_iter().enumerate() {
        let s = dot(text, row);
        if s > best.0 {
            best = (s, k);
        }
    }
    Ok(best)
}

/// Scores of every text against every video, with the winning prototype per
/// cell (0-based; the class token is the last index).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub scores: Matrix,
    pub winners: Vec<usize>,
}

impl SimilarityMatrix {
    pub fn num_texts(&self) -> usize {
        self.scores.rows()
    }

    pub fn num_videos(&self) -> usize {
        self.scores.cols()
    }

    pub fn winner(&self, text: usize, video: usize) -> usize {
        self.winners[text * self.scores.cols() + video]
    }
}

/// `s[i][j] = tmvm_similarity(text i, video j)`.
pub fn similarity_matrix(texts: &Matrix, videos: &[&Matrix]) -> Result<SimilarityMatrix> {
    let mut scores = Matrix::zeros(texts.rows(), videos.len());
    let mut winners = Vec::with_capacity(texts.rows() * videos.len());
    for i in 0..texts.rows() {
        for (j, protos) in videos.iter().enumerate() {
            let (s, w) = tmvm_similarity(texts.row(i), protos)?;
            scores[(i, j)] = s;
            winners.push(w);
        }
    }
    Ok(SimilarityMatrix { scores, winners })
}

/// Backward of [`similarity_matrix`]: each cell's gradient flows only through
/// its winning prototype. Returns `(∂texts, ∂prototypes per video)`.
pub fn similarity_matrix_backward(
    texts: &Matrix,
    videos: &[&Matrix],
    sim: &SimilarityMatrix,
    d_scores: &Matrix,
) -> Result<(Matrix, Vec<Matrix>)> {
    if d_scores.shape() != sim.scores.shape() || sim.scores.shape() != (texts.rows(), videos.len()) {
        return Err(Error::shape(
            "similarity_matrix_backward",
            sim.scores.shape(),
            d_scores.shape(),
        ));
    }
    let mut d_texts = Matrix::zeros(texts.rows(), texts.cols());
    let mut d_videos: Vec<Matrix> = videos.iter().map(|v| Matrix::zeros(v.rows(), v.cols())).collect();
    for i in 0..texts.rows() {
        for (j, protos) in videos.iter().enumerate() {
            let g = d_scores[(i, j)];
            if g == 0.0 {
                continue;
            }
            let w = sim.winner(i, j);
            for (d, p) in d_texts.row_mut(i).iter_mut().zip(protos.row(w)) {
                *d += g * p;
            }
            for (d, t) in d_videos[j].row_mut(w).iter_mut().zip(texts.row(i)) {
                *d += g * t;
            }
        }
    }
    Ok((d_texts, d_videos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_check, l2_normalize, RngStream, DEFAULT_STEP};
    use proptest::prelude::*;

    fn unit(rng: &mut RngStream, n: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        l2_normalize(&v, 0.0)
    }

    fn unit_rows(rng: &mut RngStream, rows: usize, n: usize) -> Matrix {
        let rs: Vec<Vec<f64>> = (0..rows).map(|_| unit(rng, n)).collect();
        Matrix::from_rows(&rs).unwrap()
    }

    #[test]
    fn base_cases() {
        let a = [0.6, 0.8];
        assert!((base_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(base_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((base_similarity(&a, &[-0.6, -0.8]).unwrap() + 1.0).abs() < 1e-15);
        assert!(base_similarity(&a, &[1.0]).is_err());
    }

    #[test]
    fn direct_max() {
        let p = Matrix::identity(2);
        let (s, w) = tmvm_similarity(&[0.6, 0.8], &p).unwrap();
        assert_eq!((s, w), (0.8, 1));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let p = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]]).unwrap();
        assert_eq!(tmvm_similarity(&[1.0, 0.0], &p).unwrap().1, 1);
    }

    #[test]
    fn single_prototype_is_inner_product() {
        let mut rng = RngStream::new(1);
        let t = unit(&mut rng, 5);
        let v = unit(&mut rng, 5);
        let (s, w) = tmvm_similarity(&t, &Matrix::row_vector(&v)).unwrap();
        assert_eq!(s, base_similarity(&t, &v).unwrap());
        assert_eq!(w, 0);
    }

    #[test]
    fn empty_prototypes_rejected() {
        assert!(tmvm_similarity(&[], &Matrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn random_matches_exhaustive_loop() {
        let mut rng = RngStream::new(2);
        let t = unit(&mut rng, 6);
        let p = unit_rows(&mut rng, 4, 6);
        let mut best = (f64::NEG_INFINITY, 0);
        for k in 0..4 {
            let mut s = 0.0;
            for c in 0..6 {
                s += t[c] * p[(k, c)];
            }
            if s > best.0 {
                best = (s, k);
            }
        }
        assert_eq!(tmvm_similarity(&t, &p).unwrap(), best);
    }

    #[test]
    fn matrix_small_cases() {
        let mut rng = RngStream::new(3);
        let t = unit_rows(&mut rng, 1, 4);
        let v = unit_rows(&mut rng, 1, 4);
        let s = similarity_matrix(&t, &[&v]).unwrap();
        assert_eq!(s.scores[(0, 0)], dot(t.row(0), v.row(0)));

        let protos = unit_rows(&mut rng, 3, 4);
        let text = Matrix::row_vector(protos.row(1));
        let s = similarity_matrix(&text, &[&v, &protos]).unwrap();
        assert!((s.scores[(0, 1)] - 1.0).abs() < 1e-12);
        assert_eq!(s.winner(0, 1), 1);
    }

    #[test]
    fn matrix_matches_double_loop() {
        let mut rng = RngStream::new(4);
        let texts = unit_rows(&mut rng, 3, 5);
        let vids: Vec<Matrix> = (0..3).map(|_| unit_rows(&mut rng, 3, 5)).collect();
        let refs: Vec<&Matrix> = vids.iter().collect();
        let s = similarity_matrix(&texts, &refs).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut best = f64::NEG_INFINITY;
                for k in 0..3 {
                    best = best.max(dot(texts.row(i), vids[j].row(k)));
                }
                assert_eq!(s.scores[(i, j)], best);
            }
        }
    }

    #[test]
    fn max_vjp_away_from_ties() {
        let mut rng = RngStream::new(6);
        let t = unit(&mut rng, 5);
        let p = unit_rows(&mut rng, 4, 5);
        let texts = Matrix::row_vector(&t);
        let sim = similarity_matrix(&texts, &[&p]).unwrap();
        let (dt, _) = similarity_matrix_backward(&texts, &[&p], &sim, &Matrix::filled(1, 1, 1.0)).unwrap();
        let r = finite_diff_check(|x| tmvm_similarity(x, &p).unwrap().0, &t, dt.as_slice(), DEFAULT_STEP).unwrap();
        assert!(r.max_rel_err < 1e-5);
    }

    #[test]
    fn tie_gradient_follows_lowest_index() {
        let p = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]]).unwrap();
        let texts = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let sim = similarity_matrix(&texts, &[&p]).unwrap();
        let (_, dv) = similarity_matrix_backward(&texts, &[&p], &sim, &Matrix::filled(1, 1, 1.0)).unwrap();
        assert_eq!(dv[0].row(1), &[1.0, 0.0]);
        assert_eq!(dv[0].row(2), &[0.0, 0.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn appending_a_prototype_never_lowers_the_score(seed in any::<u64>(), k in 1usize..6, dim in 1usize..8) {
            let mut rng = RngStream::new(seed);
            let t = unit(&mut rng, dim);
            let p = unit_rows(&mut rng, k, dim);
            let extra = unit(&mut rng, dim);
            let mut rows: Vec<Vec<f64>> = p.row_iter().map(|r| r.to_vec()).collect();
            rows.push(extra);
            let bigger = Matrix::from_rows(&rows).unwrap();
            prop_assert!(tmvm_similarity(&t, &bigger).unwrap().0 >= tmvm_similarity(&t, &p).unwrap().0);
        }

        #[test]
        fn permuting_prototypes_keeps_the_score(seed in any::<u64>(), k in 1usize..6) {
            let mut rng = RngStream::new(seed);
            let t = unit(&mut rng, 4);
            let p = unit_rows(&mut rng, k, 4);
            let mut perm: Vec<usize> = (0..k).collect();
            rng.shuffle(&mut perm);
            let rows: Vec<&[f64]> = perm.iter().map(|&i| p.row(i)).collect();
            let q = Matrix::from_rows(&rows).unwrap();
            let (s1, w1) = tmvm_similarity(&t, &p).unwrap();
            let (s2, w2) = tmvm_similarity(&t, &q).unwrap();
            prop_assert_eq!(s1, s2);
            prop_assert_eq!(perm[w2], w1);
        }
    }
}
