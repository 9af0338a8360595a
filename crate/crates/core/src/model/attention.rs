use super::{ModelError, Result};

/// Added to squared norms before normalizing queries and keys, keeping the
/// projection differentiable at the origin.
pub(crate) const NORM_EPS: f64 = 1e-24;

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionOutput {
    /// Row-major `n × dv`.
    pub output: Vec<f64>,
    /// Weights of row `i`, aligned with `allowed[i]`.
    pub weights: Vec<Vec<f64>>,
}

pub(crate) fn unit_scale(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() + NORM_EPS).sqrt()
}

/// Softmax over `scores`, in place.
pub(crate) fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

/// Attention restricted to `allowed` entries. With `spherical`, queries and
/// keys are projected onto the unit sphere and scored `λ⟨q̂, k̂⟩`; otherwise
/// scores are `⟨q, k⟩ / √dim`.
#[allow(clippy::too_many_arguments)]
pub fn masked_attention(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    dim: usize,
    dv: usize,
    allowed: &[Vec<usize>],
    lambda: f64,
    spherical: bool,
) -> Result<AttentionOutput> {
    let n = allowed.len();
    let normalize = |m: &[f64]| -> Vec<f64> {
        m.chunks(dim)
            .flat_map(|r| {
                let s = unit_scale(r);
                r.iter().map(move |x| x / s)
            })
            .collect()
    };
    let (qs, ks, scale) = if spherical {
        (normalize(q), normalize(k), lambda)
    } else {
        (q.to_vec(), k.to_vec(), 1.0 / (dim as f64).sqrt())
    };
    let mut output = vec![0.0; n * dv];
    let mut weights = Vec::with_capacity(n);
    for (i, row) in allowed.iter().enumerate() {
        if row.is_empty() {
            return Err(ModelError::EmptyRow(i));
        }
        let qi = &qs[i * dim..(i + 1) * dim];
        let mut w: Vec<f64> = row
            .iter()
            .map(|&j| scale * qi.iter().zip(&ks[j * dim..(j + 1) * dim]).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        softmax_in_place(&mut w);
        let out = &mut output[i * dv..(i + 1) * dv];
        for (&j, &a) in row.iter().zip(&w) {
            for (o, x) in out.iter_mut().zip(&v[j * dv..(j + 1) * dv]) {
                *o += a * x;
            }
        }
        weights.push(w);
    }
    Ok(AttentionOutput { output, weights })
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}
