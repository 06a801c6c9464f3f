//! Desk-scale recall/language model: embedding, pre-norm residual blocks with
//! one recurrence mixer each (no channel-mixing MLP), final norm, untied head.
//! Every piece carries its analytical backward; gradients flow through the
//! scan via the engine's reverse sweep.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::code::{ModelCode, Psi};
use crate::scan::{
    backward_scan, backward_scan_rank1, forward_scan, forward_scan_rank1, OscSeq, Rank1ScanInputs,
    ScanCache, ScanError, ScanInputs,
};
use crate::state::{
    compute_eos, compute_eos_backward, compute_eos_backward_rank1, compute_eos_rank1,
    init_layer_params, EosCache, LayerParams, Osc,
};
use crate::tensor::{self, matvec, Matrix, Vector};

#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub d_model: usize,
    pub expand_k: usize,
    pub n_layers: usize,
    pub vocab_size: usize,
    /// Code slots plus psi and tau.
    pub code: ModelCode,
    pub norm_eps: f64,
    pub residual: bool,
}

impl ModelConfig {
    pub fn new(d_model: usize, expand_k: usize, n_layers: usize, vocab_size: usize, code: ModelCode) -> Self {
        ModelConfig { d_model, expand_k, n_layers, vocab_size, code, norm_eps: 1e-6, residual: true }
    }
}

#[derive(Clone, Debug)]
pub struct BlockParams {
    pub norm_gamma: Vector,
    pub mixer: LayerParams,
    /// d_model x d output projection of the mixer.
    pub w_out: Matrix,
}

#[derive(Clone, Debug)]
pub struct ModelParams {
    pub embed: Matrix,
    pub blocks: Vec<BlockParams>,
    pub final_gamma: Vector,
    pub head: Matrix,
}

pub fn init_model_params<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> ModelParams {
    let dm = cfg.d_model;
    let mut normal = |rows: usize, cols: usize, scale: f64| {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = z * scale;
        }
        m
    };
    let embed = normal(cfg.vocab_size, dm, 1.0 / (dm as f64).sqrt());
    // small head keeps initial logits near uniform
    let head = normal(cfg.vocab_size, dm, 0.02);
    let blocks = (0..cfg.n_layers)
        .map(|_| BlockParams {
            norm_gamma: vec![1.0; dm],
            mixer: init_layer_params(&cfg.code, dm, cfg.expand_k, dm, rng),
            w_out: {
                let mut m = Matrix::zeros(dm, dm);
                for v in m.data.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = z / (dm as f64).sqrt();
                }
                m
            },
        })
        .collect();
    ModelParams { embed, blocks, final_gamma: vec![1.0; dm], head }
}

impl ModelParams {
    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            embed: Matrix::zeros(self.embed.rows, self.embed.cols),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    norm_gamma: vec![0.0; b.norm_gamma.len()],
                    mixer: b.mixer.zeros_like(),
                    w_out: Matrix::zeros(b.w_out.rows, b.w_out.cols),
                })
                .collect(),
            final_gamma: vec![0.0; self.final_gamma.len()],
            head: Matrix::zeros(self.head.rows, self.head.cols),
        }
    }

    pub fn num_params(&self) -> usize {
        self.param_groups().iter().map(|(_, len)| len).sum()
    }

    /// (name, length) of every parameter group in flattening order.
    pub fn param_groups(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        self.walk(&mut |name, slice| out.push((name.to_string(), slice.len())));
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.walk(&mut |_, slice| out.extend_from_slice(slice));
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        let mut offset = 0usize;
        self.walk_mut(&mut |slice: &mut [f64]| {
            slice.copy_from_slice(&flat[offset..offset + slice.len()]);
            offset += slice.len();
        });
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    /// Visit every parameter slice in a fixed declaration order.
    pub fn walk(&self, f: &mut impl FnMut(&str, &[f64])) {
        f("embed", &self.embed.data);
        for (idx, b) in self.blocks.iter().enumerate() {
            let pre = format!("blocks.{idx}.");
            f(&format!("{pre}norm_gamma"), &b.norm_gamma);
            b.mixer.walk(&pre, f);
            f(&format!("{pre}w_out"), &b.w_out.data);
        }
        f("final_gamma", &self.final_gamma);
        f("head", &self.head.data);
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut [f64])) {
        f(&mut self.embed.data);
        for b in self.blocks.iter_mut() {
            f(&mut b.norm_gamma);
            b.mixer.walk_mut(f);
            f(&mut b.w_out.data);
        }
        f(&mut self.final_gamma);
        f(&mut self.head.data);
    }
}

// ── rmsnorm ─────────────────────────────────────────────────────────

pub fn rmsnorm(x: &[f64], gamma: &[f64], eps: f64) -> (Vector, f64) {
    let d = x.len();
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / d as f64;
    let inv_rms = 1.0 / (mean_sq + eps).sqrt();
    let y = x.iter().zip(gamma).map(|(&xv, &g)| g * xv * inv_rms).collect();
    (y, inv_rms)
}

/// Backward through rmsnorm; accumulates d_gamma, returns d_x.
pub fn rmsnorm_backward(
    x: &[f64],
    gamma: &[f64],
    inv_rms: f64,
    d_y: &[f64],
    d_gamma: &mut [f64],
) -> Vector {
    let d = x.len();
    let mut dot = 0.0;
    for j in 0..d {
        let xhat = x[j] * inv_rms;
        d_gamma[j] += d_y[j] * xhat;
        dot += d_y[j] * gamma[j] * xhat;
    }
    let scale = dot / d as f64;
    (0..d)
        .map(|j| inv_rms * (gamma[j] * d_y[j] - x[j] * inv_rms * scale))
        .collect()
}

// ── loss ────────────────────────────────────────────────────────────

/// Cross entropy of one position; returns (loss, d_logits).
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vector) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for &z in logits {
        sum += (z - max).exp();
    }
    let lse = max + sum.ln();
    let loss = lse - logits[target];
    let mut d: Vector = logits.iter().map(|&z| (z - max).exp() / sum).collect();
    d[target] -= 1.0;
    (loss, d)
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

// ── block forward / backward ────────────────────────────────────────

/// The mixer runs the general engine, or the rank-one fast path when the
/// oscillation is a gated outer product under the elementwise operator.
enum ScanRoute {
    General(ScanInputs),
    Rank1(Rank1ScanInputs),
}

struct BlockCache {
    x_in: Vec<Vector>,
    normed: Vec<Vector>,
    inv_rms: Vec<f64>,
    eos_cache: Vec<EosCache>,
    route: ScanRoute,
    scan_cache: ScanCache,
    scan_y: Vec<Vector>,
}

fn block_forward(
    bp: &BlockParams,
    cfg: &ModelConfig,
    xs: Vec<Vector>,
) -> Result<(Vec<Vector>, BlockCache), ScanError> {
    let n = xs.len();
    let mut normed = Vec::with_capacity(n);
    let mut inv_rms = Vec::with_capacity(n);
    let mut eos_cache = Vec::with_capacity(n);
    let rank1 = cfg.code.psi == Psi::Elementwise
        && matches!(bp.mixer.osc, crate::state::OscParams::GatedOuter { .. });

    let (route, scan_out) = if rank1 {
        let mut e = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        let mut gbar = Vec::with_capacity(n);
        let mut s = Vec::with_capacity(n);
        let mut i = Vec::with_capacity(n);
        for x in &xs {
            let (nx, ir) = rmsnorm(x, &bp.norm_gamma, cfg.norm_eps);
            let (states, cache) =
                compute_eos_rank1(&bp.mixer, &cfg.code, &nx).expect("rank-one eligible");
            e.push(states.e);
            g.push(states.g);
            gbar.push(states.gbar);
            s.push(states.s);
            i.push(states.i);
            eos_cache.push(cache);
            normed.push(nx);
            inv_rms.push(ir);
        }
        let inputs = Rank1ScanInputs { e, g, gbar, s, i };
        let out = forward_scan_rank1(&inputs)?;
        (ScanRoute::Rank1(inputs), out)
    } else {
        let mut e_seq = Vec::with_capacity(n);
        let mut s_seq = Vec::with_capacity(n);
        let mut i_seq = Vec::with_capacity(n);
        let mut o_real: Vec<Matrix> = Vec::new();
        let mut o_complex: Vec<crate::tensor::CMatrix> = Vec::new();
        for x in &xs {
            let (nx, ir) = rmsnorm(x, &bp.norm_gamma, cfg.norm_eps);
            let (states, cache) = compute_eos(&bp.mixer, &cfg.code, &nx);
            e_seq.push(states.e);
            s_seq.push(states.s);
            i_seq.push(states.i);
            match states.o {
                Osc::Real(m) => o_real.push(m),
                Osc::Complex(m) => o_complex.push(m),
            }
            eos_cache.push(cache);
            normed.push(nx);
            inv_rms.push(ir);
        }
        let o =
            if o_complex.is_empty() { OscSeq::Real(o_real) } else { OscSeq::Complex(o_complex) };
        let inputs = ScanInputs { e: e_seq, o, s: s_seq, i: i_seq, psi: cfg.code.psi };
        let out = forward_scan(&inputs)?;
        (ScanRoute::General(inputs), out)
    };

    let mut out = Vec::with_capacity(n);
    for (t, y) in scan_out.y.iter().enumerate() {
        let mut proj = matvec(&bp.w_out, y);
        if cfg.residual {
            for (p, &xv) in proj.iter_mut().zip(&xs[t]) {
                *p += xv;
            }
        }
        out.push(proj);
    }
    Ok((
        out,
        BlockCache {
            x_in: xs,
            normed,
            inv_rms,
            eos_cache,
            route,
            scan_cache: scan_out.cache,
            scan_y: scan_out.y,
        },
    ))
}

fn block_backward(
    bp: &BlockParams,
    cfg: &ModelConfig,
    cache: &BlockCache,
    d_out: &[Vector],
    grads: &mut BlockParams,
) -> Result<Vec<Vector>, ScanError> {
    let n = d_out.len();
    let dm = cfg.d_model;
    // output projection
    let mut d_y = Vec::with_capacity(n);
    for t in 0..n {
        for (r, &dor) in d_out[t].iter().enumerate() {
            tensor::axpy(grads.w_out.row_mut(r), dor, &cache.scan_y[t]);
        }
        let mut dy_t = vec![0.0; bp.w_out.cols];
        for (r, &dor) in d_out[t].iter().enumerate() {
            tensor::axpy(&mut dy_t, dor, bp.w_out.row(r));
        }
        d_y.push(dy_t);
    }
    let mut d_x = Vec::with_capacity(n);
    match &cache.route {
        ScanRoute::Rank1(inputs) => {
            let step_grads = backward_scan_rank1(inputs, &cache.scan_cache, &d_y)?;
            for t in 0..n {
                let g = &step_grads[t];
                let mut d_normed = vec![0.0; dm];
                compute_eos_backward_rank1(
                    &bp.mixer,
                    &cfg.code,
                    &cache.normed[t],
                    &cache.eos_cache[t],
                    &g.d_e,
                    &g.d_g,
                    &g.d_gbar,
                    &g.d_s,
                    &g.d_i,
                    &mut grads.mixer,
                    &mut d_normed,
                );
                d_x.push(rmsnorm_backward(
                    &cache.x_in[t],
                    &bp.norm_gamma,
                    cache.inv_rms[t],
                    &d_normed,
                    &mut grads.norm_gamma,
                ));
            }
        }
        ScanRoute::General(inputs) => {
            let step_grads = backward_scan(inputs, &cache.scan_cache, &d_y)?;
            for t in 0..n {
                let g = &step_grads[t];
                let mut d_normed = vec![0.0; dm];
                compute_eos_backward(
                    &bp.mixer,
                    &cfg.code,
                    &cache.normed[t],
                    &cache.eos_cache[t],
                    &g.d_e,
                    &g.d_o,
                    &g.d_s,
                    &g.d_i,
                    &mut grads.mixer,
                    &mut d_normed,
                );
                d_x.push(rmsnorm_backward(
                    &cache.x_in[t],
                    &bp.norm_gamma,
                    cache.inv_rms[t],
                    &d_normed,
                    &mut grads.norm_gamma,
                ));
            }
        }
    }
    if cfg.residual {
        for (dx_t, dout_t) in d_x.iter_mut().zip(d_out) {
            for (dv, &dov) in dx_t.iter_mut().zip(dout_t) {
                *dv += dov;
            }
        }
    }
    Ok(d_x)
}

// ── whole-model paths ───────────────────────────────────────────────

fn embed_tokens(params: &ModelParams, tokens: &[u16]) -> Vec<Vector> {
    tokens
        .iter()
        .map(|&t| {
            assert!((t as usize) < params.embed.rows, "token {t} out of vocab");
            params.embed.row(t as usize).to_vec()
        })
        .collect()
}

/// Full logits at every position (causal by construction).
pub fn model_forward(
    cfg: &ModelConfig,
    params: &ModelParams,
    tokens: &[u16],
) -> Result<Vec<Vector>, ScanError> {
    let mut stream = embed_tokens(params, tokens);
    for bp in &params.blocks {
        let (out, _) = block_forward(bp, cfg, stream)?;
        stream = out;
    }
    let mut logits = Vec::with_capacity(tokens.len());
    for x in &stream {
        let (h, _) = rmsnorm(x, &params.final_gamma, cfg.norm_eps);
        logits.push(matvec(&params.head, &h));
    }
    Ok(logits)
}

/// Loss/accuracy counters for one sample (query positions only).
#[derive(Clone, Copy, Debug, Default)]
pub struct SampleStats {
    pub loss_sum: f64,
    pub correct: usize,
    pub queries: usize,
}

impl SampleStats {
    pub fn merge(&mut self, other: &SampleStats) {
        self.loss_sum += other.loss_sum;
        self.correct += other.correct;
        self.queries += other.queries;
    }

    pub fn mean_loss(&self) -> f64 {
        if self.queries == 0 {
            0.0
        } else {
            self.loss_sum / self.queries as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.queries == 0 {
            0.0
        } else {
            self.correct as f64 / self.queries as f64
        }
    }
}

/// Forward and CE at masked positions; no gradients, caches dropped eagerly.
pub fn forward_eval(
    cfg: &ModelConfig,
    params: &ModelParams,
    tokens: &[u16],
    targets: &[i32],
) -> Result<SampleStats, ScanError> {
    let mut stream = embed_tokens(params, tokens);
    for bp in &params.blocks {
        let (out, _) = block_forward(bp, cfg, stream)?;
        stream = out;
    }
    let mut stats = SampleStats::default();
    for (t, &target) in targets.iter().enumerate() {
        if target < 0 {
            continue;
        }
        let (h, _) = rmsnorm(&stream[t], &params.final_gamma, cfg.norm_eps);
        let logits = matvec(&params.head, &h);
        let (loss, _) = cross_entropy(&logits, target as usize);
        stats.loss_sum += loss;
        stats.correct += (argmax(&logits) == target as usize) as usize;
        stats.queries += 1;
    }
    Ok(stats)
}

/// Forward, masked CE, and full backward; raw (unscaled) gradient sums are
/// accumulated into `grads`. The caller divides by the batch query count.
pub fn forward_backward(
    cfg: &ModelConfig,
    params: &ModelParams,
    tokens: &[u16],
    targets: &[i32],
    grads: &mut ModelParams,
) -> Result<SampleStats, ScanError> {
    let n = tokens.len();
    let dm = cfg.d_model;
    let mut stream = embed_tokens(params, tokens);
    let mut caches = Vec::with_capacity(params.blocks.len());
    for bp in &params.blocks {
        let (out, cache) = block_forward(bp, cfg, stream)?;
        caches.push(cache);
        stream = out;
    }

    let mut stats = SampleStats::default();
    let mut d_stream: Vec<Vector> = vec![vec![0.0; dm]; n];
    for (t, &target) in targets.iter().enumerate() {
        if target < 0 {
            continue;
        }
        let (h, inv_rms) = rmsnorm(&stream[t], &params.final_gamma, cfg.norm_eps);
        let logits = matvec(&params.head, &h);
        let (loss, d_logits) = cross_entropy(&logits, target as usize);
        stats.loss_sum += loss;
        stats.correct += (argmax(&logits) == target as usize) as usize;
        stats.queries += 1;

        let mut d_h = vec![0.0; dm];
        for (r, &dl) in d_logits.iter().enumerate() {
            if dl != 0.0 {
                tensor::axpy(grads.head.row_mut(r), dl, &h);
                tensor::axpy(&mut d_h, dl, params.head.row(r));
            }
        }
        d_stream[t] = rmsnorm_backward(
            &stream[t],
            &params.final_gamma,
            inv_rms,
            &d_h,
            &mut grads.final_gamma,
        );
    }

    for (idx, bp) in params.blocks.iter().enumerate().rev() {
        d_stream = block_backward(bp, cfg, &caches[idx], &d_stream, &mut grads.blocks[idx])?;
    }
    for (t, &tok) in tokens.iter().enumerate() {
        tensor::axpy(grads.embed.row_mut(tok as usize), 1.0, &d_stream[t]);
    }
    Ok(stats)
}

/// Mean CE over query positions of a set of samples (helper for checks).
pub fn batch_loss(
    cfg: &ModelConfig,
    params: &ModelParams,
    samples: &[(&[u16], &[i32])],
) -> Result<f64, ScanError> {
    let mut stats = SampleStats::default();
    for (tokens, targets) in samples {
        stats.merge(&forward_eval(cfg, params, tokens, targets)?);
    }
    Ok(stats.mean_loss())
}
