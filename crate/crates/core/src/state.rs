//! Per-timestep EOS state calculation: projections, data-dependent gates,
//! data-independent decays, and the state-space parameterization — each with
//! an analytical backward pass.
//!
//! Oscillation constructions by o_code (p = d for psi=odot, k for psi=times;
//! g/gbar are gated projections of the input, lam are squashed learnable
//! vectors initialized from the Alibi ladder):
//!   0:  sigmoid(P), learnable k x p matrix
//!   1:  g ⊗ gbar
//!   2:  gbar broadcast over rows
//!   3:  g broadcast over columns
//!   4:  lam_k broadcast over columns
//!   5:  lam_p broadcast over rows
//!   6:  (lam_k broadcast) ⊙ (g ⊗ gbar)
//!   7:  (lam_p broadcast) ⊙ (g ⊗ gbar)
//!   8:  lam_k ⊗ gbar
//!   9:  g ⊗ lam_p
//!   10: all-ones (non-learnable)
//!   11: exp(i theta) broadcast over columns (complex memory)
//! Data-dependent entries come from sigmoid(z)^(1/tau) and always lie in
//! (0,1); data-independent entries are sigmoid-squashed so they stay in (0,1)
//! under training.

use thiserror::Error;

use crate::code::{sigmoid, Activation, CodeKind, ModelCode, Psi};
use crate::tensor::{self, broadcast_col, broadcast_row, diag, matvec, outer, CMatrix, Matrix, Vector};

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("ssm continuous-time decay must be negative, got {value} at index {index}")]
    NonNegativeDecay { index: usize, value: f64 },
    #[error("ssm step size must be positive, got {0}")]
    BadStep(f64),
}

// ── gates and initializers ──────────────────────────────────────────

/// x^(1/tau); for the power-of-two taus in the standard grid this is a chain
/// of square roots, which is much cheaper than powf in the hot path.
#[inline]
pub fn root_pow(x: f64, tau: f64) -> f64 {
    let mut t = tau;
    let mut out = x;
    while t > 1.0 && t.fract() == 0.0 && (t as u64).is_power_of_two() && t <= 64.0 {
        out = out.sqrt();
        t /= 2.0;
    }
    if t == 1.0 {
        out
    } else {
        x.powf(1.0 / tau)
    }
}

/// Data-dependent oscillation gate: sigmoid(z)^(1/tau), elementwise.
pub fn gate(z: &[f64], tau: f64) -> Vector {
    debug_assert!(tau > 0.0);
    z.iter().map(|&v| root_pow(sigmoid(v), tau)).collect()
}

/// d gate / d z given the pre-activation: out * (1 - sigmoid(z)) / tau.
pub fn gate_deriv(z: &[f64], tau: f64) -> Vector {
    let inv = 1.0 / tau;
    z.iter()
        .map(|&v| {
            let s = sigmoid(v);
            root_pow(s, tau) * (1.0 - s) * inv
        })
        .collect()
}

/// Propagate a cotangent through the gate.
pub fn gate_backward(z: &[f64], tau: f64, d_out: &[f64]) -> Vector {
    gate_deriv(z, tau).iter().zip(d_out).map(|(d, g)| d * g).collect()
}

/// Data-independent decay ladder: lam_j = 2^(-8 (j+1) / k), j = 0..k-1.
/// Geometric over channels, monotonically decreasing, all in (0,1).
pub fn alibi_decay(k: usize) -> Vector {
    assert!(k >= 1);
    (0..k).map(|j| 2f64.powf(-8.0 * (j + 1) as f64 / k as f64)).collect()
}

/// Inverse sigmoid, used to seed squashed learnable decays at the Alibi values.
pub fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

/// Discretize a state-space cell: validates signs and returns
/// (expand, oscillation decays, shrink) = (b, exp(delta * a), c).
pub fn ssm_parameterize(
    a_cont: &[f64],
    b: &[f64],
    c: &[f64],
    delta: f64,
) -> Result<(Vector, Vector, Vector), StateError> {
    if !(delta > 0.0) {
        return Err(StateError::BadStep(delta));
    }
    for (index, &a) in a_cont.iter().enumerate() {
        if !(a < 0.0) {
            return Err(StateError::NonNegativeDecay { index, value: a });
        }
    }
    let decays = a_cont.iter().map(|&a| (delta * a).exp()).collect();
    Ok((b.to_vec(), decays, c.to_vec()))
}

// ── parameters ──────────────────────────────────────────────────────

/// Expand/shrink parameterization: a projection of the input or a free vector.
#[derive(Clone, Debug)]
pub enum StateParam {
    /// k x d_model, applied as w * x.
    Proj(Matrix),
    /// Free learnable vector of length k.
    Free(Vector),
}

/// A gated projection of the input: gate(w x + b, tau).
#[derive(Clone, Debug)]
pub struct GateProj {
    pub w: Matrix,
    pub b: Vector,
}

impl GateProj {
    fn zeros_like(&self) -> GateProj {
        GateProj { w: Matrix::zeros(self.w.rows, self.w.cols), b: vec![0.0; self.b.len()] }
    }
}

/// Oscillation parameters, one variant per construction.
#[derive(Clone, Debug)]
pub enum OscParams {
    FullMatrix { pre: Matrix },
    GatedOuter { row: GateProj, col: GateProj },
    GatedColBroadcast { col: GateProj },
    GatedRowBroadcast { row: GateProj },
    StaticRow { pre: Vector },
    StaticCol { pre: Vector },
    StaticRowGatedOuter { pre: Vector, row: GateProj, col: GateProj },
    StaticColGatedOuter { pre: Vector, row: GateProj, col: GateProj },
    StaticRowGatedCol { pre: Vector, col: GateProj },
    GatedRowStaticCol { row: GateProj, pre: Vector },
    AllOnes,
    Phases { theta: Vector },
    /// Continuous-time decays: a_cont = -exp(a_log), step = exp(delta_log).
    SsmDecay { a_log: Vector, delta_log: f64 },
}

/// All parameters of one token-mixing layer.
#[derive(Clone, Debug)]
pub struct LayerParams {
    pub d_model: usize,
    pub k: usize,
    pub d: usize,
    /// Oscillation column count: d for psi=odot, k for psi=times.
    pub p: usize,
    pub w_i: Matrix,
    pub expand: StateParam,
    pub shrink: StateParam,
    pub osc: OscParams,
}

impl LayerParams {
    /// Same structure, all entries zero — a gradient accumulator.
    pub fn zeros_like(&self) -> LayerParams {
        let zero_state = |s: &StateParam| match s {
            StateParam::Proj(m) => StateParam::Proj(Matrix::zeros(m.rows, m.cols)),
            StateParam::Free(v) => StateParam::Free(vec![0.0; v.len()]),
        };
        let osc = match &self.osc {
            OscParams::FullMatrix { pre } => {
                OscParams::FullMatrix { pre: Matrix::zeros(pre.rows, pre.cols) }
            }
            OscParams::GatedOuter { row, col } => {
                OscParams::GatedOuter { row: row.zeros_like(), col: col.zeros_like() }
            }
            OscParams::GatedColBroadcast { col } => {
                OscParams::GatedColBroadcast { col: col.zeros_like() }
            }
            OscParams::GatedRowBroadcast { row } => {
                OscParams::GatedRowBroadcast { row: row.zeros_like() }
            }
            OscParams::StaticRow { pre } => OscParams::StaticRow { pre: vec![0.0; pre.len()] },
            OscParams::StaticCol { pre } => OscParams::StaticCol { pre: vec![0.0; pre.len()] },
            OscParams::StaticRowGatedOuter { pre, row, col } => OscParams::StaticRowGatedOuter {
                pre: vec![0.0; pre.len()],
                row: row.zeros_like(),
                col: col.zeros_like(),
            },
            OscParams::StaticColGatedOuter { pre, row, col } => OscParams::StaticColGatedOuter {
                pre: vec![0.0; pre.len()],
                row: row.zeros_like(),
                col: col.zeros_like(),
            },
            OscParams::StaticRowGatedCol { pre, col } => OscParams::StaticRowGatedCol {
                pre: vec![0.0; pre.len()],
                col: col.zeros_like(),
            },
            OscParams::GatedRowStaticCol { row, pre } => OscParams::GatedRowStaticCol {
                row: row.zeros_like(),
                pre: vec![0.0; pre.len()],
            },
            OscParams::AllOnes => OscParams::AllOnes,
            OscParams::Phases { theta } => OscParams::Phases { theta: vec![0.0; theta.len()] },
            OscParams::SsmDecay { a_log, .. } => {
                OscParams::SsmDecay { a_log: vec![0.0; a_log.len()], delta_log: 0.0 }
            }
        };
        LayerParams {
            d_model: self.d_model,
            k: self.k,
            d: self.d,
            p: self.p,
            w_i: Matrix::zeros(self.w_i.rows, self.w_i.cols),
            expand: zero_state(&self.expand),
            shrink: zero_state(&self.shrink),
            osc,
        }
    }
}

impl LayerParams {
    /// Visit every parameter slice in a fixed declaration order.
    pub fn walk(&self, prefix: &str, f: &mut impl FnMut(&str, &[f64])) {
        f(&format!("{prefix}w_i"), &self.w_i.data);
        let walk_state = |param: &StateParam, name: &str, f: &mut dyn FnMut(&str, &[f64])| match param
        {
            StateParam::Proj(m) => f(name, &m.data),
            StateParam::Free(v) => f(name, v),
        };
        walk_state(&self.expand, &format!("{prefix}expand"), f);
        walk_state(&self.shrink, &format!("{prefix}shrink"), f);
        let p = |s: &str| format!("{prefix}osc.{s}");
        match &self.osc {
            OscParams::FullMatrix { pre } => f(&p("pre"), &pre.data),
            OscParams::GatedOuter { row, col } => {
                f(&p("row.w"), &row.w.data);
                f(&p("row.b"), &row.b);
                f(&p("col.w"), &col.w.data);
                f(&p("col.b"), &col.b);
            }
            OscParams::GatedColBroadcast { col } => {
                f(&p("col.w"), &col.w.data);
                f(&p("col.b"), &col.b);
            }
            OscParams::GatedRowBroadcast { row } => {
                f(&p("row.w"), &row.w.data);
                f(&p("row.b"), &row.b);
            }
            OscParams::StaticRow { pre } | OscParams::StaticCol { pre } => f(&p("pre"), pre),
            OscParams::StaticRowGatedOuter { pre, row, col }
            | OscParams::StaticColGatedOuter { pre, row, col } => {
                f(&p("pre"), pre);
                f(&p("row.w"), &row.w.data);
                f(&p("row.b"), &row.b);
                f(&p("col.w"), &col.w.data);
                f(&p("col.b"), &col.b);
            }
            OscParams::StaticRowGatedCol { pre, col } => {
                f(&p("pre"), pre);
                f(&p("col.w"), &col.w.data);
                f(&p("col.b"), &col.b);
            }
            OscParams::GatedRowStaticCol { row, pre } => {
                f(&p("row.w"), &row.w.data);
                f(&p("row.b"), &row.b);
                f(&p("pre"), pre);
            }
            OscParams::AllOnes => {}
            OscParams::Phases { theta } => f(&p("theta"), theta),
            OscParams::SsmDecay { a_log, delta_log } => {
                f(&p("a_log"), a_log);
                f(&p("delta_log"), std::slice::from_ref(delta_log));
            }
        }
    }

    /// Mutable visit, same order as [`walk`](Self::walk).
    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut [f64])) {
        f(&mut self.w_i.data);
        for param in [&mut self.expand, &mut self.shrink] {
            match param {
                StateParam::Proj(m) => f(&mut m.data),
                StateParam::Free(v) => f(v),
            }
        }
        match &mut self.osc {
            OscParams::FullMatrix { pre } => f(&mut pre.data),
            OscParams::GatedOuter { row, col } => {
                f(&mut row.w.data);
                f(&mut row.b);
                f(&mut col.w.data);
                f(&mut col.b);
            }
            OscParams::GatedColBroadcast { col } => {
                f(&mut col.w.data);
                f(&mut col.b);
            }
            OscParams::GatedRowBroadcast { row } => {
                f(&mut row.w.data);
                f(&mut row.b);
            }
            OscParams::StaticRow { pre } | OscParams::StaticCol { pre } => f(pre),
            OscParams::StaticRowGatedOuter { pre, row, col }
            | OscParams::StaticColGatedOuter { pre, row, col } => {
                f(pre);
                f(&mut row.w.data);
                f(&mut row.b);
                f(&mut col.w.data);
                f(&mut col.b);
            }
            OscParams::StaticRowGatedCol { pre, col } => {
                f(pre);
                f(&mut col.w.data);
                f(&mut col.b);
            }
            OscParams::GatedRowStaticCol { row, pre } => {
                f(&mut row.w.data);
                f(&mut row.b);
                f(pre);
            }
            OscParams::AllOnes => {}
            OscParams::Phases { theta } => f(theta),
            OscParams::SsmDecay { a_log, delta_log } => {
                f(a_log);
                f(std::slice::from_mut(delta_log));
            }
        }
    }

    pub fn param_groups(&self, prefix: &str) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        self.walk(prefix, &mut |name, slice| out.push((name.to_string(), slice.len())));
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.walk("", &mut |_, slice| out.extend_from_slice(slice));
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
}

/// Draw a fresh layer for the given code. Projections are N(0,1)/sqrt(fan_in),
/// free state vectors N(0,1)/sqrt(k), gate biases zero, static decays seeded
/// at the Alibi ladder, phases at rotary-style frequencies.
pub fn init_layer_params<R: rand::Rng>(
    code: &ModelCode,
    d_model: usize,
    k: usize,
    d: usize,
    rng: &mut R,
) -> LayerParams {
    use rand_distr::StandardNormal;
    let p = match code.psi {
        Psi::Elementwise => d,
        Psi::Matrix => k,
    };
    let mut normal_matrix = |rows: usize, cols: usize, scale: f64| {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = z * scale;
        }
        m
    };
    let proj_scale = 1.0 / (d_model as f64).sqrt();
    let w_i = normal_matrix(d, d_model, proj_scale);

    let state_param = |dep: bool, rng: &mut R| {
        if dep {
            let mut m = Matrix::zeros(k, d_model);
            for v in m.data.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = z * proj_scale;
            }
            StateParam::Proj(m)
        } else {
            let scale = 1.0 / (k as f64).sqrt();
            StateParam::Free(
                (0..k)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        z * scale
                    })
                    .collect(),
            )
        }
    };
    let expand = state_param(code.e_dep(), rng);
    let shrink = state_param(code.s_dep(), rng);

    let gate_proj = |outputs: usize, rng: &mut R| GateProj {
        w: {
            let mut m = Matrix::zeros(outputs, d_model);
            for v in m.data.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = z * proj_scale;
            }
            m
        },
        b: vec![0.0; outputs],
    };
    let alibi_pre = |len: usize| -> Vector { alibi_decay(len).iter().map(|&l| logit(l)).collect() };

    let osc = match code.kind {
        CodeKind::Ssm => OscParams::SsmDecay {
            a_log: (0..k).map(|j| ((j + 1) as f64).ln()).collect(),
            delta_log: 0.05f64.ln(),
        },
        CodeKind::Linear { o_code, .. } => match o_code {
            0 => {
                let rows = alibi_pre(k);
                let mut pre = Matrix::zeros(k, p);
                for j in 0..k {
                    pre.row_mut(j).fill(rows[j]);
                }
                OscParams::FullMatrix { pre }
            }
            1 => OscParams::GatedOuter { row: gate_proj(k, rng), col: gate_proj(p, rng) },
            2 => OscParams::GatedColBroadcast { col: gate_proj(p, rng) },
            3 => OscParams::GatedRowBroadcast { row: gate_proj(k, rng) },
            4 => OscParams::StaticRow { pre: alibi_pre(k) },
            5 => OscParams::StaticCol { pre: alibi_pre(p) },
            6 => OscParams::StaticRowGatedOuter {
                pre: alibi_pre(k),
                row: gate_proj(k, rng),
                col: gate_proj(p, rng),
            },
            7 => OscParams::StaticColGatedOuter {
                pre: alibi_pre(p),
                row: gate_proj(k, rng),
                col: gate_proj(p, rng),
            },
            8 => OscParams::StaticRowGatedCol { pre: alibi_pre(k), col: gate_proj(p, rng) },
            9 => OscParams::GatedRowStaticCol { row: gate_proj(k, rng), pre: alibi_pre(p) },
            10 => OscParams::AllOnes,
            11 => OscParams::Phases {
                theta: (0..k).map(|j| 10000f64.powf(-2.0 * j as f64 / k as f64)).collect(),
            },
            other => unreachable!("o_code {other} out of range"),
        },
    };
    LayerParams { d_model, k, d, p, w_i, expand, shrink, osc }
}

// ── forward ─────────────────────────────────────────────────────────

/// Materialized oscillation state for one step.
#[derive(Clone, Debug)]
pub enum Osc {
    Real(Matrix),
    Complex(CMatrix),
}

/// The four per-step states.
#[derive(Clone, Debug)]
pub struct EosStates {
    pub e: Vector,
    pub o: Osc,
    pub s: Vector,
    pub i: Vector,
}

/// Intermediates retained for the backward pass of one step.
#[derive(Clone, Debug, Default)]
pub struct EosCache {
    /// Expand pre-activation (projection output or the free vector itself).
    pub z_e: Vector,
    pub z_s: Vector,
    /// Row-gate pre-activation and output (codes 1,3,6,7,9).
    pub z_g: Option<Vector>,
    pub g: Option<Vector>,
    /// Column-gate pre-activation and output (codes 1,2,6,7,8).
    pub z_gbar: Option<Vector>,
    pub gbar: Option<Vector>,
}

fn apply_state(param: &StateParam, act: Activation, x: &[f64]) -> (Vector, Vector) {
    let z = match param {
        StateParam::Proj(w) => matvec(w, x),
        StateParam::Free(v) => v.clone(),
    };
    let out = act.apply(&z);
    (out, z)
}

fn gate_of(gp: &GateProj, tau: f64, x: &[f64]) -> (Vector, Vector) {
    let mut z = matvec(&gp.w, x);
    for (zi, bi) in z.iter_mut().zip(&gp.b) {
        *zi += bi;
    }
    let out = gate(&z, tau);
    (out, z)
}

/// Compute the EOS states for one input vector.
pub fn compute_eos(params: &LayerParams, code: &ModelCode, x: &[f64]) -> (EosStates, EosCache) {
    debug_assert_eq!(x.len(), params.d_model);
    let act = code.act();
    let tau = code.tau;
    let i = matvec(&params.w_i, x);
    let (e, z_e) = apply_state(&params.expand, act, x);
    let (s, z_s) = apply_state(&params.shrink, act, x);

    let mut cache = EosCache { z_e, z_s, ..EosCache::default() };
    let k = params.k;
    let p = params.p;

    let o = match &params.osc {
        OscParams::FullMatrix { pre } => {
            let mut m = Matrix::zeros(k, p);
            for (dst, &z) in m.data.iter_mut().zip(&pre.data) {
                *dst = sigmoid(z);
            }
            Osc::Real(m)
        }
        OscParams::GatedOuter { row, col } => {
            let (g, z_g) = gate_of(row, tau, x);
            let (gbar, z_gbar) = gate_of(col, tau, x);
            let m = outer(&g, &gbar);
            cache.z_g = Some(z_g);
            cache.g = Some(g);
            cache.z_gbar = Some(z_gbar);
            cache.gbar = Some(gbar);
            Osc::Real(m)
        }
        OscParams::GatedColBroadcast { col } => {
            let (gbar, z_gbar) = gate_of(col, tau, x);
            let m = broadcast_row(&gbar, k);
            cache.z_gbar = Some(z_gbar);
            cache.gbar = Some(gbar);
            Osc::Real(m)
        }
        OscParams::GatedRowBroadcast { row } => {
            let (g, z_g) = gate_of(row, tau, x);
            let m = broadcast_col(&g, p);
            cache.z_g = Some(z_g);
            cache.g = Some(g);
            Osc::Real(m)
        }
        OscParams::StaticRow { pre } => {
            let lam: Vector = pre.iter().map(|&z| sigmoid(z)).collect();
            Osc::Real(broadcast_col(&lam, p))
        }
        OscParams::StaticCol { pre } => {
            let lam: Vector = pre.iter().map(|&z| sigmoid(z)).collect();
            Osc::Real(broadcast_row(&lam, k))
        }
        OscParams::StaticRowGatedOuter { pre, row, col } => {
            let (g, z_g) = gate_of(row, tau, x);
            let (gbar, z_gbar) = gate_of(col, tau, x);
            let mut m = outer(&g, &gbar);
            for (j, &z) in pre.iter().enumerate() {
                let lam = sigmoid(z);
                for v in m.row_mut(j) {
                    *v *= lam;
                }
            }
            cache.z_g = Some(z_g);
            cache.g = Some(g);
            cache.z_gbar = Some(z_gbar);
            cache.gbar = Some(gbar);
            Osc::Real(m)
        }
        OscParams::StaticColGatedOuter { pre, row, col } => {
            let (g, z_g) = gate_of(row, tau, x);
            let (gbar, z_gbar) = gate_of(col, tau, x);
            let mut m = outer(&g, &gbar);
            let lam: Vector = pre.iter().map(|&z| sigmoid(z)).collect();
            for j in 0..k {
                for (v, &l) in m.row_mut(j).iter_mut().zip(&lam) {
                    *v *= l;
                }
            }
            cache.z_g = Some(z_g);
            cache.g = Some(g);
            cache.z_gbar = Some(z_gbar);
            cache.gbar = Some(gbar);
            Osc::Real(m)
        }
        OscParams::StaticRowGatedCol { pre, col } => {
            let (gbar, z_gbar) = gate_of(col, tau, x);
            let lam: Vector = pre.iter().map(|&z| sigmoid(z)).collect();
            let m = outer(&lam, &gbar);
            cache.z_gbar = Some(z_gbar);
            cache.gbar = Some(gbar);
            Osc::Real(m)
        }
        OscParams::GatedRowStaticCol { row, pre } => {
            let (g, z_g) = gate_of(row, tau, x);
            let lam: Vector = pre.iter().map(|&z| sigmoid(z)).collect();
            let m = outer(&g, &lam);
            cache.z_g = Some(z_g);
            cache.g = Some(g);
            Osc::Real(m)
        }
        OscParams::AllOnes => Osc::Real(Matrix::filled(k, p, 1.0)),
        OscParams::Phases { theta } => Osc::Complex(CMatrix::from_phases_broadcast(theta, p)),
        OscParams::SsmDecay { a_log, delta_log } => {
            let delta = delta_log.exp();
            let lam: Vector = a_log.iter().map(|&al| (-delta * al.exp()).exp()).collect();
            match code.psi {
                Psi::Elementwise => Osc::Real(broadcast_col(&lam, p)),
                Psi::Matrix => Osc::Real(diag(&lam)),
            }
        }
    };
    (EosStates { e, o, s, i }, cache)
}

/// Rank-one split of the per-step states for the gated-outer oscillation:
/// o_t = g ⊗ gbar is never materialized.
#[derive(Clone, Debug)]
pub struct EosRank1 {
    pub e: Vector,
    pub g: Vector,
    pub gbar: Vector,
    pub s: Vector,
    pub i: Vector,
}

/// Fast-path variant of [`compute_eos`] for codes whose oscillation is a
/// gated outer product; returns None for every other construction.
pub fn compute_eos_rank1(
    params: &LayerParams,
    code: &ModelCode,
    x: &[f64],
) -> Option<(EosRank1, EosCache)> {
    let (row, col) = match &params.osc {
        OscParams::GatedOuter { row, col } => (row, col),
        _ => return None,
    };
    if code.psi != Psi::Elementwise {
        return None;
    }
    let act = code.act();
    let tau = code.tau;
    let i = matvec(&params.w_i, x);
    let (e, z_e) = apply_state(&params.expand, act, x);
    let (s, z_s) = apply_state(&params.shrink, act, x);
    let (g, z_g) = gate_of(row, tau, x);
    let (gbar, z_gbar) = gate_of(col, tau, x);
    let cache = EosCache {
        z_e,
        z_s,
        z_g: Some(z_g),
        g: Some(g.clone()),
        z_gbar: Some(z_gbar),
        gbar: Some(gbar.clone()),
    };
    Some((EosRank1 { e, g, gbar, s, i }, cache))
}

/// Backward of the rank-one path: the oscillation cotangent arrives already
/// contracted onto the two gate vectors.
#[allow(clippy::too_many_arguments)]
pub fn compute_eos_backward_rank1(
    params: &LayerParams,
    code: &ModelCode,
    x: &[f64],
    cache: &EosCache,
    d_e: &[f64],
    d_g: &[f64],
    d_gbar: &[f64],
    d_s: &[f64],
    d_i: &[f64],
    grads: &mut LayerParams,
    d_x: &mut [f64],
) {
    let act = code.act();
    let tau = code.tau;
    for (r, &dir) in d_i.iter().enumerate() {
        tensor::axpy(grads.w_i.row_mut(r), dir, x);
        tensor::axpy(d_x, dir, params.w_i.row(r));
    }
    state_backward(&params.expand, &mut grads.expand, act, x, &cache.z_e, d_e, d_x);
    state_backward(&params.shrink, &mut grads.shrink, act, x, &cache.z_s, d_s, d_x);
    match (&params.osc, &mut grads.osc) {
        (OscParams::GatedOuter { row, col }, OscParams::GatedOuter { row: grow, col: gcol }) => {
            gate_proj_backward(row, grow, tau, x, cache.z_g.as_ref().unwrap(), d_g, d_x);
            gate_proj_backward(col, gcol, tau, x, cache.z_gbar.as_ref().unwrap(), d_gbar, d_x);
        }
        _ => panic!("rank-one backward requires the gated-outer construction"),
    }
}

// ── backward ────────────────────────────────────────────────────────

fn state_backward(
    param: &StateParam,
    grad: &mut StateParam,
    act: Activation,
    x: &[f64],
    z: &[f64],
    d_out: &[f64],
    d_x: &mut [f64],
) {
    let dz: Vector = d_out.iter().zip(z).map(|(&d, &zv)| d * act.deriv_scalar(zv)).collect();
    match (param, grad) {
        (StateParam::Proj(w), StateParam::Proj(gw)) => {
            for (r, &dzr) in dz.iter().enumerate() {
                tensor::axpy(gw.row_mut(r), dzr, x);
                tensor::axpy(d_x, dzr, w.row(r));
            }
        }
        (StateParam::Free(_), StateParam::Free(gv)) => {
            for (g, &d) in gv.iter_mut().zip(&dz) {
                *g += d;
            }
        }
        _ => panic!("state parameter/gradient variant mismatch"),
    }
}

fn gate_proj_backward(
    gp: &GateProj,
    grad: &mut GateProj,
    tau: f64,
    x: &[f64],
    z: &[f64],
    d_gate_out: &[f64],
    d_x: &mut [f64],
) {
    let dz = gate_backward(z, tau, d_gate_out);
    for (r, &dzr) in dz.iter().enumerate() {
        tensor::axpy(grad.w.row_mut(r), dzr, x);
        grad.b[r] += dzr;
        tensor::axpy(d_x, dzr, gp.w.row(r));
    }
}

/// Accumulate parameter gradients and the input cotangent for one step.
/// `d_o` must be the matching variant for the code (complex only for code 11).
pub fn compute_eos_backward(
    params: &LayerParams,
    code: &ModelCode,
    x: &[f64],
    cache: &EosCache,
    d_e: &[f64],
    d_o: &crate::scan::Grad,
    d_s: &[f64],
    d_i: &[f64],
    grads: &mut LayerParams,
    d_x: &mut [f64],
) {
    let act = code.act();
    let tau = code.tau;
    let k = params.k;
    let p = params.p;

    // input projection
    for (r, &dir) in d_i.iter().enumerate() {
        tensor::axpy(grads.w_i.row_mut(r), dir, x);
        tensor::axpy(d_x, dir, params.w_i.row(r));
    }
    state_backward(&params.expand, &mut grads.expand, act, x, &cache.z_e, d_e, d_x);
    state_backward(&params.shrink, &mut grads.shrink, act, x, &cache.z_s, d_s, d_x);

    match (&params.osc, &mut grads.osc) {
        (OscParams::FullMatrix { pre }, OscParams::FullMatrix { pre: gpre }) => {
            let d_o = d_o.real();
            for ((g, &z), &d) in gpre.data.iter_mut().zip(&pre.data).zip(&d_o.data) {
                let s = sigmoid(z);
                *g += d * s * (1.0 - s);
            }
        }
        (OscParams::GatedOuter { row, col }, OscParams::GatedOuter { row: grow, col: gcol }) => {
            let d_o = d_o.real();
            let g = cache.g.as_ref().unwrap();
            let gbar = cache.gbar.as_ref().unwrap();
            let mut dg = vec![0.0; k];
            let mut dgbar = vec![0.0; p];
            for j in 0..k {
                let row_d = d_o.row(j);
                dg[j] = tensor::dot(row_d, gbar);
                tensor::axpy(&mut dgbar, g[j], row_d);
            }
            gate_proj_backward(row, grow, tau, x, cache.z_g.as_ref().unwrap(), &dg, d_x);
            gate_proj_backward(col, gcol, tau, x, cache.z_gbar.as_ref().unwrap(), &dgbar, d_x);
        }
        (OscParams::GatedColBroadcast { col }, OscParams::GatedColBroadcast { col: gcol }) => {
            let d_o = d_o.real();
            let mut dgbar = vec![0.0; p];
            for j in 0..k {
                tensor::axpy(&mut dgbar, 1.0, d_o.row(j));
            }
            gate_proj_backward(col, gcol, tau, x, cache.z_gbar.as_ref().unwrap(), &dgbar, d_x);
        }
        (OscParams::GatedRowBroadcast { row }, OscParams::GatedRowBroadcast { row: grow }) => {
            let d_o = d_o.real();
            let dg: Vector = (0..k).map(|j| d_o.row(j).iter().sum()).collect();
            gate_proj_backward(row, grow, tau, x, cache.z_g.as_ref().unwrap(), &dg, d_x);
        }
        (OscParams::StaticRow { pre }, OscParams::StaticRow { pre: gpre }) => {
            let d_o = d_o.real();
            for (j, &z) in pre.iter().enumerate() {
                let s = sigmoid(z);
                let dlam: f64 = d_o.row(j).iter().sum();
                gpre[j] += dlam * s * (1.0 - s);
            }
        }
        (OscParams::StaticCol { pre }, OscParams::StaticCol { pre: gpre }) => {
            let d_o = d_o.real();
            let mut dlam = vec![0.0; p];
            for j in 0..k {
                tensor::axpy(&mut dlam, 1.0, d_o.row(j));
            }
            for ((g, &z), &d) in gpre.iter_mut().zip(pre.iter()).zip(&dlam) {
                let s = sigmoid(z);
                *g += d * s * (1.0 - s);
            }
        }
        (
            OscParams::StaticRowGatedOuter { pre, row, col },
            OscParams::StaticRowGatedOuter { pre: gpre, row: grow, col: gcol },
        ) => {
            let d_o = d_o.real();
            let g = cache.g.as_ref().unwrap();
            let gbar = cache.gbar.as_ref().unwrap();
            let mut dg = vec![0.0; k];
            let mut dgbar = vec![0.0; p];
            for (j, &z) in pre.iter().enumerate() {
                let lam = sigmoid(z);
                let row_d = d_o.row(j);
                let dot_gbar = tensor::dot(row_d, gbar);
                gpre[j] += dot_gbar * g[j] * lam * (1.0 - lam);
                dg[j] = lam * dot_gbar;
                tensor::axpy(&mut dgbar, lam * g[j], row_d);
            }
            gate_proj_backward(row, grow, tau, x, cache.z_g.as_ref().unwrap(), &dg, d_x);
            gate_proj_backward(col, gcol, tau, x, cache.z_gbar.as_ref().unwrap(), &dgbar, d_x);
        }
        (
            OscParams::StaticColGatedOuter { pre, row, col },
            OscParams::StaticColGatedOuter { pre: gpre, row: grow, col: gcol },
        ) => {
            let d_o = d_o.real();
            let g = cache.g.as_ref().unwrap();
            let gbar = cache.gbar.as_ref().unwrap();
            let lam: Vector = pre.iter().map(|&z| sigmoid(z)).collect();
            let mut dg = vec![0.0; k];
            let mut dlam = vec![0.0; p];
            let mut dgbar = vec![0.0; p];
            for j in 0..k {
                let row_d = d_o.row(j);
                for c in 0..p {
                    let d = row_d[c];
                    dg[j] += d * lam[c] * gbar[c];
                    dgbar[c] += d * lam[c] * g[j];
                    dlam[c] += d * g[j] * gbar[c];
                }
            }
            for ((gp, &z), &d) in gpre.iter_mut().zip(pre.iter()).zip(&dlam) {
                let s = sigmoid(z);
                *gp += d * s * (1.0 - s);
            }
            gate_proj_backward(row, grow, tau, x, cache.z_g.as_ref().unwrap(), &dg, d_x);
            gate_proj_backward(col, gcol, tau, x, cache.z_gbar.as_ref().unwrap(), &dgbar, d_x);
        }
        (
            OscParams::StaticRowGatedCol { pre, col },
            OscParams::StaticRowGatedCol { pre: gpre, col: gcol },
        ) => {
            let d_o = d_o.real();
            let gbar = cache.gbar.as_ref().unwrap();
            let mut dgbar = vec![0.0; p];
            for (j, &z) in pre.iter().enumerate() {
                let lam = sigmoid(z);
                let row_d = d_o.row(j);
                gpre[j] += tensor::dot(row_d, gbar) * lam * (1.0 - lam);
                tensor::axpy(&mut dgbar, lam, row_d);
            }
            gate_proj_backward(col, gcol, tau, x, cache.z_gbar.as_ref().unwrap(), &dgbar, d_x);
        }
        (
            OscParams::GatedRowStaticCol { row, pre },
            OscParams::GatedRowStaticCol { row: grow, pre: gpre },
        ) => {
            let d_o = d_o.real();
            let g = cache.g.as_ref().unwrap();
            let lam: Vector = pre.iter().map(|&z| sigmoid(z)).collect();
            let mut dg = vec![0.0; k];
            let mut dlam = vec![0.0; p];
            for j in 0..k {
                let row_d = d_o.row(j);
                dg[j] = tensor::dot(row_d, &lam);
                tensor::axpy(&mut dlam, g[j], row_d);
            }
            for ((gp, &z), &d) in gpre.iter_mut().zip(pre.iter()).zip(&dlam) {
                let s = sigmoid(z);
                *gp += d * s * (1.0 - s);
            }
            gate_proj_backward(row, grow, tau, x, cache.z_g.as_ref().unwrap(), &dg, d_x);
        }
        (OscParams::AllOnes, OscParams::AllOnes) => {}
        (OscParams::Phases { theta }, OscParams::Phases { theta: gtheta }) => {
            let d_o = d_o.complex();
            for (j, &th) in theta.iter().enumerate() {
                let (sin, cos) = th.sin_cos();
                let mut acc = 0.0;
                for c in 0..p {
                    let (dre, dim) = d_o.get(j, c);
                    acc += cos * dim - sin * dre;
                }
                gtheta[j] += acc;
            }
        }
        (
            OscParams::SsmDecay { a_log, delta_log },
            OscParams::SsmDecay { a_log: ga_log, delta_log: gdelta_log },
        ) => {
            let d_o = d_o.real();
            let delta = delta_log.exp();
            for (j, &al) in a_log.iter().enumerate() {
                let a = -al.exp();
                let lam = (delta * a).exp();
                let dlam = match code.psi {
                    Psi::Elementwise => d_o.row(j).iter().sum::<f64>(),
                    Psi::Matrix => d_o.get(j, j),
                };
                let da = dlam * lam * delta;
                ga_log[j] += da * a; // dA/da_log = -exp(a_log) = a
                *gdelta_log += dlam * lam * a * delta; // dDelta/ddelta_log = delta
            }
        }
        _ => panic!("oscillation parameter/gradient variant mismatch"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::DEFAULT_TAU;
    use crate::scan::Grad;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn gate_values() {
        // sigmoid(0)^(1/16) = 0.5^(1/16)
        let out = gate(&[0.0], 16.0);
        assert!((out[0] - 0.9576032806985737).abs() < 1e-12);
        assert_eq!(gate(&[0.0], 1.0), vec![0.5]);
        assert!((gate(&[50.0], 16.0)[0] - 1.0).abs() < 1e-12);
        assert!((gate(&[50.0], 3.0)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gate_monotone_in_tau_at_zero() {
        let taus = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
        let mut prev = 0.0;
        for &t in &taus {
            let v = gate(&[0.0], t)[0];
            assert!(v > prev, "gate(0, tau) must increase with tau");
            prev = v;
        }
        assert!(gate(&[0.0], 1e9)[0] > 0.999_999_999);
    }

    #[test]
    fn gate_backward_matches_fd() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..50 {
            let z: f64 = rng.random_range(-4.0..4.0);
            let tau: f64 = rng.random_range(0.5..64.0);
            let eps = 1e-6;
            let fd = (gate(&[z + eps], tau)[0] - gate(&[z - eps], tau)[0]) / (2.0 * eps);
            let an = gate_deriv(&[z], tau)[0];
            assert!((fd - an).abs() < 1e-8, "z={z} tau={tau}: {fd} vs {an}");
        }
    }

    #[test]
    fn alibi_ladder() {
        assert_eq!(alibi_decay(1), vec![0.00390625]);
        let k8 = alibi_decay(8);
        assert_eq!(k8[7], 0.00390625);
        for w in k8.windows(2) {
            assert!(w[1] < w[0]);
        }
        for &v in &alibi_decay(17) {
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn ssm_parameterize_examples() {
        let (_, o, _) = ssm_parameterize(&[-1.0], &[0.5], &[0.2], 1.0).unwrap();
        assert!((o[0] - (-1.0f64).exp()).abs() < 1e-15);

        let err = ssm_parameterize(&[-0.0], &[0.5], &[0.2], 1.0).unwrap_err();
        assert_eq!(err, StateError::NonNegativeDecay { index: 0, value: -0.0 });

        assert!(matches!(
            ssm_parameterize(&[-1.0], &[0.5], &[0.2], 0.0),
            Err(StateError::BadStep(_))
        ));

        // delta -> 0 gives lossless memory
        let (_, o, _) = ssm_parameterize(&[-3.0], &[1.0], &[1.0], 1e-12).unwrap();
        assert!((o[0] - 1.0).abs() < 1e-9);
    }

    fn code_with(o_code: u8) -> ModelCode {
        ModelCode::parse(&format!("1-{o_code}-1-0")).unwrap()
    }

    fn rand_x(rng: &mut ChaCha12Rng, len: usize) -> Vector {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn code_10_is_all_ones_for_any_input() {
        let mut rng = ChaCha12Rng::seed_from_u64(30);
        let code = ModelCode::parse("0-10-0-0").unwrap();
        let params = init_layer_params(&code, 6, 4, 3, &mut rng);
        for _ in 0..3 {
            let x = rand_x(&mut rng, 6);
            let (states, _) = compute_eos(&params, &code, &x);
            match states.o {
                Osc::Real(m) => assert!(m.data.iter().all(|&v| v == 1.0)),
                _ => panic!("expected real"),
            }
        }
    }

    #[test]
    fn data_independent_codes_ignore_input() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for o_code in [0u8, 4, 5, 10, 11] {
            let code = code_with(o_code);
            let params = init_layer_params(&code, 6, 4, 3, &mut rng);
            let x1 = rand_x(&mut rng, 6);
            let x2 = rand_x(&mut rng, 6);
            let (s1, _) = compute_eos(&params, &code, &x1);
            let (s2, _) = compute_eos(&params, &code, &x2);
            match (&s1.o, &s2.o) {
                (Osc::Real(a), Osc::Real(b)) => assert_eq!(a.data, b.data, "o_code {o_code}"),
                (Osc::Complex(a), Osc::Complex(b)) => assert_eq!(a.data, b.data),
                _ => panic!("kind mismatch"),
            }
        }
    }

    #[test]
    fn data_dependent_codes_respond_to_input() {
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        for o_code in [1u8, 2, 3, 6, 7, 8, 9] {
            let code = code_with(o_code);
            let params = init_layer_params(&code, 6, 4, 3, &mut rng);
            let x1 = rand_x(&mut rng, 6);
            let x2 = rand_x(&mut rng, 6);
            let (s1, _) = compute_eos(&params, &code, &x1);
            let (s2, _) = compute_eos(&params, &code, &x2);
            match (&s1.o, &s2.o) {
                (Osc::Real(a), Osc::Real(b)) => {
                    assert_ne!(a.data, b.data, "o_code {o_code} ignored its input");
                    for &v in &a.data {
                        assert!(v > 0.0 && v < 1.0, "o_code {o_code} entry {v} outside (0,1)");
                    }
                }
                _ => panic!("expected real"),
            }
        }
    }

    #[test]
    fn phases_are_unit_modulus() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let code = code_with(11);
        let params = init_layer_params(&code, 6, 4, 3, &mut rng);
        let (states, _) = compute_eos(&params, &code, &rand_x(&mut rng, 6));
        match states.o {
            Osc::Complex(m) => {
                for r in 0..m.rows {
                    for c in 0..m.cols {
                        let (re, im) = m.get(r, c);
                        assert!((re.hypot(im) - 1.0).abs() < 1e-12);
                    }
                }
            }
            _ => panic!("expected complex"),
        }
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_expand() {
        let mut rng = ChaCha12Rng::seed_from_u64(34);
        let code = ModelCode::parse("1-10-1-0").unwrap();
        let params = init_layer_params(&code, 6, 4, 3, &mut rng);
        let (states, _) = compute_eos(&params, &code, &vec![0.0; 6]);
        assert!(states.e.iter().all(|&v| v == 0.0));
        assert!(states.i.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn data_independent_entries_in_unit_interval_at_init() {
        let mut rng = ChaCha12Rng::seed_from_u64(35);
        for o_code in [0u8, 4, 5, 10] {
            let code = code_with(o_code);
            let params = init_layer_params(&code, 6, 4, 3, &mut rng);
            let (states, _) = compute_eos(&params, &code, &rand_x(&mut rng, 6));
            if let Osc::Real(m) = states.o {
                for &v in &m.data {
                    assert!(v > 0.0 && v <= 1.0);
                }
            }
        }
        // ssm decays too
        let code = ModelCode::parse("0").unwrap();
        let params = init_layer_params(&code, 6, 4, 3, &mut rng);
        let (states, _) = compute_eos(&params, &code, &rand_x(&mut rng, 6));
        if let Osc::Real(m) = states.o {
            for &v in &m.data {
                assert!(v > 0.0 && v <= 1.0);
            }
        }
    }

    /// Per-code finite-difference check of the full eos backward through a
    /// random linear readout of (e, o, s, i).
    #[test]
    fn eos_backward_matches_finite_differences() {
        let (d_model, k, d) = (5, 4, 3);
        for kind_text in
            ["0", "1-0-1-0", "1-1-1-0", "1-2-1-4", "1-3-1-2", "0-4-1-0", "1-5-0-0", "1-6-1-0",
             "1-7-1-3", "1-8-1-5", "1-9-1-6", "1-10-1-7", "1-11-1-0"]
        {
            for psi in [Psi::Elementwise, Psi::Matrix] {
                let mut rng = ChaCha12Rng::seed_from_u64(40);
                let code = ModelCode::parse(kind_text).unwrap().with_psi(psi).with_tau(DEFAULT_TAU).unwrap();
                let params = init_layer_params(&code, d_model, k, d, &mut rng);
                let x = rand_x(&mut rng, d_model);
                let p = params.p;

                // fixed random readout weights
                let ce = rand_x(&mut rng, k);
                let cs = rand_x(&mut rng, k);
                let ci = rand_x(&mut rng, d);
                let co: Vec<f64> = (0..2 * k * p).map(|_| rng.random_range(-1.0..1.0)).collect();

                let loss = |params: &LayerParams, x: &[f64]| -> f64 {
                    let (states, _) = compute_eos(params, &code, x);
                    let mut l = tensor::dot(&states.e, &ce)
                        + tensor::dot(&states.s, &cs)
                        + tensor::dot(&states.i, &ci);
                    match &states.o {
                        Osc::Real(m) => {
                            for (idx, &v) in m.data.iter().enumerate() {
                                l += co[idx] * v;
                            }
                        }
                        Osc::Complex(m) => {
                            for (idx, &v) in m.data.iter().enumerate() {
                                l += co[idx] * v;
                            }
                        }
                    }
                    l
                };

                let (states, cache) = compute_eos(&params, &code, &x);
                let d_o = match &states.o {
                    Osc::Real(m) => {
                        let mut g = Matrix::zeros(m.rows, m.cols);
                        for (idx, v) in g.data.iter_mut().enumerate() {
                            *v = co[idx];
                        }
                        Grad::Real(g)
                    }
                    Osc::Complex(m) => {
                        let mut g = CMatrix::zeros(m.rows, m.cols);
                        for (idx, v) in g.data.iter_mut().enumerate() {
                            *v = co[idx];
                        }
                        Grad::Complex(g)
                    }
                };
                let mut grads = params.zeros_like();
                let mut d_x = vec![0.0; d_model];
                compute_eos_backward(
                    &params, &code, &x, &cache, &ce, &d_o, &cs, &ci, &mut grads, &mut d_x,
                );

                // check input cotangent by fd
                let eps = 1e-6;
                for a in 0..d_model {
                    let mut xp = x.clone();
                    xp[a] += eps;
                    let up = loss(&params, &xp);
                    xp[a] -= 2.0 * eps;
                    let dn = loss(&params, &xp);
                    let fd = (up - dn) / (2.0 * eps);
                    assert!(
                        (d_x[a] - fd).abs() <= 1e-7_f64.max(1e-5 * fd.abs().max(d_x[a].abs())),
                        "{kind_text} psi={:?} d_x[{a}]: {} vs {fd}",
                        psi,
                        d_x[a]
                    );
                }
            }
        }
    }
}
