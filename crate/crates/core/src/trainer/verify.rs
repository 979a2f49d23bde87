//! Finite-difference verification of the full training objective.

use alloc::vec::Vec;

use super::objective_on;
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::matching::similarity_matrix;
use crate::numerics::{finite_diff_check, linear_forward, GradCheckReport, Matrix, RngStream, DEFAULT_STEP};
use crate::prototypes::{embed_texts, encode_video, HeadParameters, Variant};

/// Inputs closer than this to a relu kink, a max tie or the variance hinge
/// are resampled.
pub const KINK_MARGIN: f64 = 1e-3;

const MAX_ATTEMPTS: u64 = 200;

/// Micro-batch shapes for the objective check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradCheckShapes {
    pub batch: usize,
    pub tokens: usize,
    pub token_dim: usize,
    pub text_dim: usize,
    pub k: usize,
    pub embed_dim: usize,
}

impl Default for GradCheckShapes {
    fn default() -> Self {
        GradCheckShapes {
            batch: 4,
            tokens: 9,
            token_dim: 8,
            text_dim: 5,
            k: 2,
            embed_dim: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveCheck {
    pub seed: u64,
    /// Samples drawn before one cleared every margin.
    pub attempts: u64,
    pub report: GradCheckReport,
}

fn random_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).expect("sized")
}

/// Smallest distance of the sample to a non-differentiable point.
fn margin(
    params: &HeadParameters,
    videos: &[Matrix],
    texts: &Matrix,
    variant: Variant,
    loss: &LossConfig,
) -> Result<f64> {
    let mut m = f64::INFINITY;
    let mut masks = Vec::new();
    let mut protos = Vec::new();
    for z in videos {
        if variant != Variant::Part {
            let pre = linear_forward(z, &params.mask_w.value, Some(params.mask_b.value.as_slice()))?;
            m = pre.as_slice().iter().fold(m, |m, v| m.min(v.abs()));
        }
        let f = encode_video(z, params, variant)?;
        masks.extend(f.masks.clone());
        protos.push(f.embedding.embedded);
    }
    let emb = embed_texts(texts, params)?;
    let refs: Vec<&Matrix> = protos.iter().collect();
    let sim = similarity_matrix(&emb.embedded, &refs)?;
    for i in 0..texts.rows() {
        for (j, p) in refs.iter().enumerate() {
            let best = sim.scores[(i, j)];
            for (k, row) in p.row_iter().enumerate() {
                if k != sim.winner(i, j) {
                    let s: f64 = row.iter().zip(emb.embedded.row(i)).map(|(a, b)| a * b).sum();
                    m = m.min(best - s);
                }
            }
        }
    }
    if let Some(first) = masks.first() {
        let (b, k) = first.shape();
        let n = (masks.len() * k) as f64;
        for j in 0..b {
            if k == 0 {
                break;
            }
            let vals = || masks.iter().flat_map(move |mm| mm.row(j).iter().copied());
            let mean = vals().sum::<f64>() / n;
            let var = vals().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            m = m.min((loss.gamma - libm::sqrt(var + loss.epsilon)).abs());
        }
    }
    Ok(m)
}

/// Compares the analytic gradient of the full objective (contrastive +
/// α·variance) with respect to every head parameter against central
/// differences, on a random micro-batch drawn from `seed`.
pub fn objective_gradcheck(
    seed: u64,
    shapes: GradCheckShapes,
    variant: Variant,
    loss: &LossConfig,
) -> Result<ObjectiveCheck> {
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = RngStream::with_stream(seed, attempt);
        let mut params = HeadParameters::init(shapes.token_dim, shapes.text_dim, shapes.embed_dim, shapes.k, &mut rng);
        params.mask_b.value = random_matrix(&mut rng, 1, shapes.k).map(|x| 0.5 * x);
        let videos: Vec<Matrix> = (0..shapes.batch)
            .map(|_| random_matrix(&mut rng, shapes.tokens, shapes.token_dim))
            .collect();
        let texts = random_matrix(&mut rng, shapes.batch, shapes.text_dim);
        if margin(&params, &videos, &texts, variant, loss)? < KINK_MARGIN {
            continue;
        }
        let refs: Vec<&Matrix> = videos.iter().collect();
        params.zero_grad();
        objective_on(&mut params, &refs, &texts, variant, loss, true)?;
        let analytic = params.flat_grads();
        let point = params.flat_values();
        let template = params.clone();
        let mut failure = None;
        let report = finite_diff_check(
            |x| {
                let mut q = template.clone();
                q.set_flat_values(x).expect("same length");
                match objective_on(&mut q, &refs, &texts, variant, loss, false) {
                    Ok(b) => b.total,
                    Err(e) => {
                        failure = Some(e);
                        f64::NAN
                    }
                }
            },
            &point,
            &analytic,
            DEFAULT_STEP,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        return Ok(ObjectiveCheck {
            seed,
            attempts: attempt + 1,
            report: report?,
        });
    }
    Err(Error::Argument(alloc::format!(
        "no sample for seed {seed} cleared the {KINK_MARGIN} margin in {MAX_ATTEMPTS} attempts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_objective_passes() {
        let c = objective_gradcheck(0, GradCheckShapes::default(), Variant::Mask, &LossConfig::default()).unwrap();
        assert!(c.report.max_rel_err < 1e-5, "{c:?}");
    }

    #[test]
    fn part_and_baseline_objectives_pass() {
        let loss = LossConfig::default();
        let c = objective_gradcheck(1, GradCheckShapes::default(), Variant::Part, &loss).unwrap();
        assert!(c.report.max_rel_err < 1e-5, "{c:?}");
        let shapes = GradCheckShapes {
            k: 0,
            ..GradCheckShapes::default()
        };
        let c = objective_gradcheck(2, shapes, Variant::Baseline, &loss).unwrap();
        assert!(c.report.max_rel_err < 1e-5, "{c:?}");
    }
}
