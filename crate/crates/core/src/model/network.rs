use super::attention::{gelu, gelu_grad, softmax_in_place, unit_scale};
use super::mask::WindowPlan;
use super::{ModelConfig, ModelError, Result};
use crate::node::{LaggedNode, SeriesKey};
use crate::rng::{SeededRng, Stream};
use crate::sphere::{dot, SphereEmbedding};

/// Offsets of one layer's blocks in the flat parameter vector. Matrices are
/// row-major `out × in`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LayerOffsets {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub hidden: usize,
    pub ffn: usize,
    pub heads: usize,
    pub layers: usize,
    layer_size: usize,
    /// Per-modality input vectors, `3 × hidden`.
    pub modality: usize,
    /// Regression readout weights then bias.
    pub regression: usize,
    /// Classification readout weights then bias.
    pub classification: usize,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (d, f) = (cfg.hidden, cfg.ffn_width);
        let layer_size = 4 * d * d + 2 * d * f + f + d;
        let modality = cfg.layers * layer_size;
        let regression = modality + 3 * d;
        let classification = regression + d + 1;
        Self {
            hidden: d,
            ffn: f,
            heads: cfg.heads,
            layers: cfg.layers,
            layer_size,
            modality,
            regression,
            classification,
            total: classification + d + 1,
        }
    }

    fn layer(&self, l: usize) -> LayerOffsets {
        let (d, f) = (self.hidden, self.ffn);
        let base = l * self.layer_size;
        let w1 = base + 4 * d * d;
        let b1 = w1 + f * d;
        let w2 = b1 + f;
        LayerOffsets {
            wq: base,
            wk: base + d * d,
            wv: base + 2 * d * d,
            wo: base + 3 * d * d,
            w1,
            b1,
            w2,
            b2: w2 + d * f,
        }
    }

    /// Ranges of the feed-forward and value blocks of layer `l`:
    /// `(w1, b1, w2, b2, wv)`.
    pub fn ffn_and_value_ranges(&self, l: usize) -> [std::ops::Range<usize>; 5] {
        let o = self.layer(l);
        let (d, f) = (self.hidden, self.ffn);
        [o.w1..o.w1 + f * d, o.b1..o.b1 + f, o.w2..o.w2 + d * f, o.b2..o.b2 + d, o.wv..o.wv + d * d]
    }
}

/// `y = x Wᵀ (+ b)` for `n` rows of `x`.
fn linear(w: &[f64], out_dim: usize, in_dim: usize, x: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let n = x.len() / in_dim;
    let mut y = vec![0.0; n * out_dim];
    for i in 0..n {
        let xi = &x[i * in_dim..(i + 1) * in_dim];
        let yi = &mut y[i * out_dim..(i + 1) * out_dim];
        for (r, yr) in yi.iter_mut().enumerate() {
            let wr = &w[r * in_dim..(r + 1) * in_dim];
            *yr = wr.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() + bias.map_or(0.0, |b| b[r]);
        }
    }
    y
}

/// Accumulates `∂W += dyᵀ x`, `∂b += Σ dy` and `dx += dy W`.
#[allow(clippy::too_many_arguments)]
fn linear_backward(
    w: &[f64],
    out_dim: usize,
    in_dim: usize,
    x: &[f64],
    dy: &[f64],
    gw: &mut [f64],
    gb: Option<&mut [f64]>,
    dx: &mut [f64],
) {
    let n = x.len() / in_dim;
    for i in 0..n {
        let xi = &x[i * in_dim..(i + 1) * in_dim];
        let dyi = &dy[i * out_dim..(i + 1) * out_dim];
        let dxi = &mut dx[i * in_dim..(i + 1) * in_dim];
        for (r, &g) in dyi.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let wr = &w[r * in_dim..(r + 1) * in_dim];
            let gwr = &mut gw[r * in_dim..(r + 1) * in_dim];
            for c in 0..in_dim {
                gwr[c] += g * xi[c];
                dxi[c] += g * wr[c];
            }
        }
    }
    if let Some(gb) = gb {
        for dyi in dy.chunks(out_dim) {
            for (b, g) in gb.iter_mut().zip(dyi) {
                *b += g;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    /// Next-day return estimate per target token (asset order).
    pub returns: Vec<f64>,
    pub logit: f64,
}

/// Attention weights of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights {
    /// Columns each row attended over (the mask, minus any angular cutoff).
    pub allowed: Vec<Vec<usize>>,
    /// `weights[layer][head][row][k]` is the weight on `allowed[row][k]`.
    pub weights: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Ambient gradients of one loss with respect to every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    /// `(embedding row, ∂/∂row)` for rows used by the sample.
    pub embedding: Vec<(usize, Vec<f64>)>,
}

struct LayerCache {
    h: Vec<f64>,
    qs: Vec<f64>,
    ks: Vec<f64>,
    v: Vec<f64>,
    /// Per token and head, the normalizer of the query (key) slice.
    q_scale: Vec<f64>,
    k_scale: Vec<f64>,
    o: Vec<f64>,
    u: Vec<f64>,
    z: Vec<f64>,
    g: Vec<f64>,
}

pub(crate) struct Trace {
    rows: Vec<usize>,
    modality: Vec<usize>,
    values: Vec<f64>,
    n_targets: usize,
    layers: Vec<LayerCache>,
    attention: AttentionWeights,
    h_out: Vec<f64>,
    pooled: Vec<f64>,
}

impl Trace {
    pub(crate) fn attention(&self) -> &AttentionWeights {
        &self.attention
    }

    pub(crate) fn into_attention(self) -> AttentionWeights {
        self.attention
    }
}

/// Transformer parameters and node embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct CshtModel {
    config: ModelConfig,
    layout: ParamLayout,
    embedding: SphereEmbedding,
    params: Vec<f64>,
}

impl CshtModel {
    /// Every node a model over these series can see: the lag-0 target of
    /// each asset and lags `1..=max_lag` of each source series.
    pub fn node_universe(assets: &[String], sources: &[SeriesKey], max_lag: usize) -> Vec<LaggedNode> {
        let mut nodes: Vec<LaggedNode> = assets.iter().map(|a| LaggedNode::target(a.clone())).collect();
        for s in sources {
            nodes.extend((1..=max_lag).map(|l| s.at_lag(l)));
        }
        nodes
    }

    /// Fresh model: embeddings uniform on the sphere, weights Gaussian with
    /// variance `1/fan_in`, biases zero. Draws come from the init stream.
    pub fn new(config: ModelConfig, nodes: Vec<LaggedNode>) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(config.seed, Stream::Init);
        let embedding = SphereEmbedding::random(nodes, config.hidden, &mut rng);
        let layout = ParamLayout::new(&config);
        let mut params = vec![0.0; layout.total];
        let (d, f) = (layout.hidden, layout.ffn);
        let mut fill = |params: &mut [f64], start: usize, len: usize, fan_in: usize| {
            let sd = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[start..start + len] {
                *p = sd * rng.normal();
            }
        };
        for l in 0..layout.layers {
            let o = layout.layer(l);
            for start in [o.wq, o.wk, o.wv, o.wo] {
                fill(&mut params, start, d * d, d);
            }
            fill(&mut params, o.w1, f * d, d);
            fill(&mut params, o.w2, d * f, f);
        }
        fill(&mut params, layout.modality, 3 * d, d);
        fill(&mut params, layout.regression, d, d);
        fill(&mut params, layout.classification, d, d);
        Ok(Self { config, layout, embedding, params })
    }

    pub fn from_parts(config: ModelConfig, embedding: SphereEmbedding, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total {
            return Err(ModelError::Config(format!("expected {} parameters, got {}", layout.total, params.len())));
        }
        if embedding.ambient_dim() != config.hidden {
            return Err(ModelError::Config(format!(
                "embedding dimension {} does not match hidden width {}",
                embedding.ambient_dim(),
                config.hidden
            )));
        }
        Ok(Self { config, layout, embedding, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Switches that do not change the parameter shapes (mask, attention
    /// kind, temperature, cutoff, noise, optimizer settings) may be changed
    /// after construction.
    pub fn config_mut(&mut self) -> &mut ModelConfig {
        &mut self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn embedding(&self) -> &SphereEmbedding {
        &self.embedding
    }

    pub fn embedding_mut(&mut self) -> &mut SphereEmbedding {
        &mut self.embedding
    }

    pub fn forward(&self, plan: &WindowPlan, values: &[f64]) -> Result<(Output, AttentionWeights)> {
        let (out, trace) = self.forward_trace(plan, values)?;
        Ok((out, trace.into_attention()))
    }

    fn effective_allowed(&self, plan: &WindowPlan, rows: &[usize]) -> Vec<Vec<usize>> {
        let Some(theta) = self.config.angular_cutoff else {
            return plan.mask.rows().to_vec();
        };
        let min_cos = theta.cos();
        plan.mask
            .rows()
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let ei = self.embedding.row(rows[i]);
                row.iter()
                    .copied()
                    .filter(|&j| {
                        j == i || theta >= std::f64::consts::PI || dot(ei, self.embedding.row(rows[j])) >= min_cos
                    })
                    .collect()
            })
            .collect()
    }

    pub(crate) fn forward_trace(&self, plan: &WindowPlan, values: &[f64]) -> Result<(Output, Trace)> {
        let n = plan.tokens.len();
        if n == 0 {
            return Err(ModelError::EmptyWindow);
        }
        if values.len() != n {
            return Err(ModelError::Shape(values.len(), n));
        }
        let rows = plan
            .tokens
            .iter()
            .map(|t| self.embedding.row_of(t).ok_or_else(|| ModelError::UnknownNode(t.clone())))
            .collect::<Result<Vec<_>>>()?;
        let modality: Vec<usize> = plan.tokens.iter().map(|t| t.modality.index()).collect();
        let allowed = self.effective_allowed(plan, &rows);
        if let Some(i) = allowed.iter().position(|r| r.is_empty()) {
            return Err(ModelError::EmptyRow(i));
        }
        let (d, f, heads) = (self.layout.hidden, self.layout.ffn, self.layout.heads);
        let dh = d / heads;
        let p = &self.params;
        let spherical = self.config.use_spherical_attention;
        let scale = if spherical { self.config.lambda } else { 1.0 / (dh as f64).sqrt() };

        let mut h = vec![0.0; n * d];
        for i in 0..n {
            let e = self.embedding.row(rows[i]);
            let w = &p[self.layout.modality + modality[i] * d..][..d];
            for c in 0..d {
                h[i * d + c] = e[c] + values[i] * w[c];
            }
        }

        let mut layers = Vec::with_capacity(self.layout.layers);
        let mut all_weights = Vec::with_capacity(self.layout.layers);
        for l in 0..self.layout.layers {
            let o = self.layout.layer(l);
            let q = linear(&p[o.wq..o.wq + d * d], d, d, &h, None);
            let k = linear(&p[o.wk..o.wk + d * d], d, d, &h, None);
            let v = linear(&p[o.wv..o.wv + d * d], d, d, &h, None);
            let (mut qs, mut ks) = (q, k);
            let mut q_scale = vec![1.0; n * heads];
            let mut k_scale = vec![1.0; n * heads];
            if spherical {
                for (m, sc) in [(&mut qs, &mut q_scale), (&mut ks, &mut k_scale)] {
                    for (t, chunk) in m.chunks_mut(dh).enumerate() {
                        let s = unit_scale(chunk);
                        chunk.iter_mut().for_each(|x| *x /= s);
                        sc[t] = s;
                    }
                }
            }
            let mut attn_out = vec![0.0; n * d];
            let mut layer_weights = Vec::with_capacity(heads);
            for hh in 0..heads {
                let off = hh * dh;
                let mut head_weights = Vec::with_capacity(n);
                for (i, row) in allowed.iter().enumerate() {
                    let qi = &qs[i * d + off..i * d + off + dh];
                    let mut w: Vec<f64> = row
                        .iter()
                        .map(|&j| {
                            scale * qi.iter().zip(&ks[j * d + off..j * d + off + dh]).map(|(a, b)| a * b).sum::<f64>()
                        })
                        .collect();
                    softmax_in_place(&mut w);
                    let oi = &mut attn_out[i * d + off..i * d + off + dh];
                    for (&j, &a) in row.iter().zip(&w) {
                        for (x, y) in oi.iter_mut().zip(&v[j * d + off..j * d + off + dh]) {
                            *x += a * y;
                        }
                    }
                    head_weights.push(w);
                }
                layer_weights.push(head_weights);
            }
            let projected = linear(&p[o.wo..o.wo + d * d], d, d, &attn_out, None);
            let u: Vec<f64> = h.iter().zip(&projected).map(|(a, b)| a + b).collect();
            let z = linear(&p[o.w1..o.w1 + f * d], f, d, &u, Some(&p[o.b1..o.b1 + f]));
            let g: Vec<f64> = z.iter().map(|&x| gelu(x)).collect();
            let next = linear(&p[o.w2..o.w2 + d * f], d, f, &g, Some(&p[o.b2..o.b2 + d]));
            layers.push(LayerCache { h, qs, ks, v, q_scale, k_scale, o: attn_out, u, z, g });
            all_weights.push(layer_weights);
            h = next;
        }

        let nt = plan.n_targets;
        let wr = &p[self.layout.regression..self.layout.regression + d];
        let br = p[self.layout.regression + d];
        let returns: Vec<f64> = (0..nt).map(|i| dot(wr, &h[i * d..(i + 1) * d]) + br).collect();
        let mut pooled = vec![0.0; d];
        if nt > 0 {
            for i in 0..nt {
                for c in 0..d {
                    pooled[c] += h[i * d + c];
                }
            }
            pooled.iter_mut().for_each(|x| *x /= nt as f64);
        }
        let wc = &p[self.layout.classification..self.layout.classification + d];
        let logit = dot(wc, &pooled) + p[self.layout.classification + d];
        let trace = Trace {
            rows,
            modality,
            values: values.to_vec(),
            n_targets: nt,
            layers,
            attention: AttentionWeights { allowed, weights: all_weights },
            h_out: h,
            pooled,
        };
        Ok((Output { returns, logit }, trace))
    }

    /// Backpropagates output gradients `d_returns` (per target) and `d_logit`
    /// through a recorded forward pass.
    pub(crate) fn backward(&self, trace: &Trace, d_returns: &[f64], d_logit: f64) -> Gradients {
        let (d, f, heads) = (self.layout.hidden, self.layout.ffn, self.layout.heads);
        let dh_dim = d / heads;
        let n = trace.rows.len();
        let nt = trace.n_targets;
        let p = &self.params;
        let mut g = vec![0.0; self.layout.total];
        let spherical = self.config.use_spherical_attention;
        let scale = if spherical { self.config.lambda } else { 1.0 / (dh_dim as f64).sqrt() };

        let mut dh = vec![0.0; n * d];
        let (ro, co) = (self.layout.regression, self.layout.classification);
        for (i, &dr) in d_returns.iter().enumerate().take(nt) {
            if dr == 0.0 {
                continue;
            }
            for c in 0..d {
                g[ro + c] += dr * trace.h_out[i * d + c];
                dh[i * d + c] += dr * p[ro + c];
            }
            g[ro + d] += dr;
        }
        if d_logit != 0.0 && nt > 0 {
            for c in 0..d {
                g[co + c] += d_logit * trace.pooled[c];
            }
            g[co + d] += d_logit;
            let share = d_logit / nt as f64;
            for i in 0..nt {
                for c in 0..d {
                    dh[i * d + c] += share * p[co + c];
                }
            }
        }

        let allowed = &trace.attention.allowed;
        for l in (0..self.layout.layers).rev() {
            let o = self.layout.layer(l);
            let cache = &trace.layers[l];
            let mut dg = vec![0.0; n * f];
            {
                let (gw2, rest) = g[o.w2..].split_at_mut(d * f);
                linear_backward(&p[o.w2..o.w2 + d * f], d, f, &cache.g, &dh, gw2, Some(&mut rest[..d]), &mut dg);
            }
            let dz: Vec<f64> = dg.iter().zip(&cache.z).map(|(a, &z)| a * gelu_grad(z)).collect();
            let mut du = vec![0.0; n * d];
            {
                let (gw1, rest) = g[o.w1..].split_at_mut(f * d);
                linear_backward(&p[o.w1..o.w1 + f * d], f, d, &cache.u, &dz, gw1, Some(&mut rest[..f]), &mut du);
            }
            let mut dh_in = du.clone();
            let mut d_attn = vec![0.0; n * d];
            linear_backward(&p[o.wo..o.wo + d * d], d, d, &cache.o, &du, &mut g[o.wo..o.wo + d * d], None, &mut d_attn);

            let mut dqs = vec![0.0; n * d];
            let mut dks = vec![0.0; n * d];
            let mut dv = vec![0.0; n * d];
            for hh in 0..heads {
                let off = hh * dh_dim;
                for (i, row) in allowed.iter().enumerate() {
                    let w = &trace.attention.weights[l][hh][i];
                    let doi = &d_attn[i * d + off..i * d + off + dh_dim];
                    if doi.iter().all(|x| *x == 0.0) {
                        continue;
                    }
                    let mut da: Vec<f64> = Vec::with_capacity(row.len());
                    for (&j, &a) in row.iter().zip(w) {
                        let vj = &cache.v[j * d + off..j * d + off + dh_dim];
                        da.push(dot(doi, vj));
                        for (x, y) in dv[j * d + off..j * d + off + dh_dim].iter_mut().zip(doi) {
                            *x += a * y;
                        }
                    }
                    let mean: f64 = w.iter().zip(&da).map(|(a, b)| a * b).sum();
                    for ((&j, &a), &dai) in row.iter().zip(w).zip(&da) {
                        let ds = scale * a * (dai - mean);
                        if ds == 0.0 {
                            continue;
                        }
                        for c in 0..dh_dim {
                            dqs[i * d + off + c] += ds * cache.ks[j * d + off + c];
                            dks[j * d + off + c] += ds * cache.qs[i * d + off + c];
                        }
                    }
                }
            }
            if spherical {
                // q̂ = q / s with s = √(‖q‖² + ε): dq = (dq̂ − q̂ ⟨q̂, dq̂⟩) / s.
                for (m, dm, sc) in [(&cache.qs, &mut dqs, &cache.q_scale), (&cache.ks, &mut dks, &cache.k_scale)] {
                    for (t, (unit, grad)) in m.chunks(dh_dim).zip(dm.chunks_mut(dh_dim)).enumerate() {
                        let radial = dot(unit, grad);
                        for (gc, uc) in grad.iter_mut().zip(unit) {
                            *gc = (*gc - uc * radial) / sc[t];
                        }
                    }
                }
            }
            for (w_off, dm) in [(o.wq, &dqs), (o.wk, &dks), (o.wv, &dv)] {
                linear_backward(
                    &p[w_off..w_off + d * d],
                    d,
                    d,
                    &cache.h,
                    dm,
                    &mut g[w_off..w_off + d * d],
                    None,
                    &mut dh_in,
                );
            }
            dh = dh_in;
        }

        let mut embedding = Vec::with_capacity(n);
        for i in 0..n {
            let row_grad = dh[i * d..(i + 1) * d].to_vec();
            let mo = self.layout.modality + trace.modality[i] * d;
            let val = trace.values[i];
            if val != 0.0 {
                for c in 0..d {
                    g[mo + c] += val * row_grad[c];
                }
            }
            embedding.push((trace.rows[i], row_grad));
        }
        Gradients { params: g, embedding }
    }

    /// Gradients of an arbitrary linear functional of the outputs.
    pub fn output_gradients(
        &self,
        plan: &WindowPlan,
        values: &[f64],
        d_returns: &[f64],
        d_logit: f64,
    ) -> Result<Gradients> {
        let (_, trace) = self.forward_trace(plan, values)?;
        Ok(self.backward(&trace, d_returns, d_logit))
    }
}
