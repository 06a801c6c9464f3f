//! Central finite-difference verification of the analytical backward passes,
//! at two granularities: one mixing layer (state calculation composed with
//! the scan and a fixed linear readout) and the full model through the
//! cross-entropy loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::code::{Activation, ModelCode, Psi, A_CODE_MAX, O_CODE_MAX};
use crate::model::{forward_backward, init_model_params, ModelConfig, SampleStats};
use crate::scan::{backward_scan, forward_scan, OscSeq, ScanInputs};
use crate::state::{compute_eos, compute_eos_backward, init_layer_params, LayerParams, Osc};
use crate::tensor::{self, Vector};

/// Finite-difference step.
pub const GRADCHECK_EPS: f64 = 1e-5;
/// Pass threshold on the error metric below.
pub const GRADCHECK_TOL: f64 = 1e-4;
/// Denominator floor; errors on gradients below this magnitude are absolute
/// (so the effective rule is rel <= 1e-4 or abs <= 1e-8).
const ERR_FLOOR: f64 = 1e-4;

fn err_metric(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(ERR_FLOOR)
}

#[derive(Clone, Debug)]
pub struct GroupReport {
    pub name: String,
    pub max_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub label: String,
    pub groups: Vec<GroupReport>,
    pub max_err: f64,
    pub pass: bool,
}

impl GradCheckReport {
    fn from_groups(label: String, groups: Vec<GroupReport>) -> Self {
        let max_err = groups.iter().fold(0.0f64, |m, g| m.max(g.max_err));
        GradCheckReport { label, groups, max_err, pass: max_err <= GRADCHECK_TOL }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerDims {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub d_model: usize,
}

impl Default for LayerDims {
    fn default() -> Self {
        LayerDims { n: 6, k: 4, d: 3, d_model: 5 }
    }
}

fn rand_vec(rng: &mut ChaCha12Rng, len: usize, lo: f64, hi: f64) -> Vector {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

/// Loss of one layer: scan outputs contracted with fixed readout weights.
fn layer_loss(
    params: &LayerParams,
    code: &ModelCode,
    xs: &[Vector],
    readout: &[Vector],
) -> f64 {
    let n = xs.len();
    let mut e = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut i = Vec::with_capacity(n);
    let mut o_real = Vec::new();
    let mut o_complex = Vec::new();
    for x in xs {
        let (states, _) = compute_eos(params, code, x);
        e.push(states.e);
        s.push(states.s);
        i.push(states.i);
        match states.o {
            Osc::Real(m) => o_real.push(m),
            Osc::Complex(m) => o_complex.push(m),
        }
    }
    let o = if o_complex.is_empty() { OscSeq::Real(o_real) } else { OscSeq::Complex(o_complex) };
    let out = forward_scan(&ScanInputs { e, o, s, i, psi: code.psi }).expect("layer scan");
    out.y.iter().zip(readout).map(|(y, c)| tensor::dot(y, c)).sum()
}

/// Check one code at layer granularity: analytical gradients of the layer
/// loss w.r.t. every parameter group and the inputs, against central
/// differences.
pub fn check_layer(code: &ModelCode, dims: LayerDims, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let params = init_layer_params(code, dims.d_model, dims.k, dims.d, &mut rng);
    let readout: Vec<Vector> = (0..dims.n).map(|_| rand_vec(&mut rng, dims.d, -1.0, 1.0)).collect();

    // keep hard-kink activations away from their kinks so central differences
    // stay one-sided
    let kinky = matches!(code.act(), Activation::Relu | Activation::ReluSquared);
    let mut xs: Vec<Vector> = Vec::new();
    for attempt in 0..100u64 {
        rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(attempt * 7919));
        let candidate: Vec<Vector> =
            (0..dims.n).map(|_| rand_vec(&mut rng, dims.d_model, -1.0, 1.0)).collect();
        if !kinky {
            xs = candidate;
            break;
        }
        let mut min_abs = f64::INFINITY;
        for x in &candidate {
            let (_, cache) = compute_eos(&params, code, x);
            for z in cache.z_e.iter().chain(cache.z_s.iter()) {
                min_abs = min_abs.min(z.abs());
            }
        }
        if min_abs > 1e-3 {
            xs = candidate;
            break;
        }
    }
    assert!(!xs.is_empty(), "could not find kink-free inputs");

    // analytical pass
    let n = xs.len();
    let mut e = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut i = Vec::with_capacity(n);
    let mut o_real = Vec::new();
    let mut o_complex = Vec::new();
    let mut eos_caches = Vec::with_capacity(n);
    for x in &xs {
        let (states, cache) = compute_eos(&params, code, x);
        e.push(states.e);
        s.push(states.s);
        i.push(states.i);
        match states.o {
            Osc::Real(m) => o_real.push(m),
            Osc::Complex(m) => o_complex.push(m),
        }
        eos_caches.push(cache);
    }
    let o = if o_complex.is_empty() { OscSeq::Real(o_real) } else { OscSeq::Complex(o_complex) };
    let inputs = ScanInputs { e, o, s, i, psi: code.psi };
    let out = forward_scan(&inputs).expect("layer scan");
    let step_grads = backward_scan(&inputs, &out.cache, &readout).expect("layer backward");
    let mut grads = params.zeros_like();
    let mut d_xs: Vec<Vector> = vec![vec![0.0; dims.d_model]; n];
    for t in 0..n {
        let g = &step_grads[t];
        compute_eos_backward(
            &params,
            code,
            &xs[t],
            &eos_caches[t],
            &g.d_e,
            &g.d_o,
            &g.d_s,
            &g.d_i,
            &mut grads,
            &mut d_xs[t],
        );
    }

    // finite differences over the flat parameter vector, grouped by name
    let flat = params.flatten();
    let flat_grads = grads.flatten();
    let groups_meta = params.param_groups("");
    let mut groups = Vec::new();
    let mut offset = 0usize;
    let mut work = params.clone();
    for (name, len) in groups_meta {
        let mut max_err = 0.0f64;
        for idx in offset..offset + len {
            let mut pert = flat.clone();
            pert[idx] += GRADCHECK_EPS;
            work.set_from_flat(&pert);
            let up = layer_loss(&work, code, &xs, &readout);
            pert[idx] -= 2.0 * GRADCHECK_EPS;
            work.set_from_flat(&pert);
            let dn = layer_loss(&work, code, &xs, &readout);
            let fd = (up - dn) / (2.0 * GRADCHECK_EPS);
            max_err = max_err.max(err_metric(flat_grads[idx], fd));
        }
        offset += len;
        groups.push(GroupReport { name, max_err });
    }
    work.set_from_flat(&flat);

    // inputs
    let mut max_err = 0.0f64;
    for t in 0..n {
        for a in 0..dims.d_model {
            let mut pert = xs.clone();
            pert[t][a] += GRADCHECK_EPS;
            let up = layer_loss(&params, code, &pert, &readout);
            pert[t][a] -= 2.0 * GRADCHECK_EPS;
            let dn = layer_loss(&params, code, &pert, &readout);
            let fd = (up - dn) / (2.0 * GRADCHECK_EPS);
            max_err = max_err.max(err_metric(d_xs[t][a], fd));
        }
    }
    groups.push(GroupReport { name: "input".to_string(), max_err });

    GradCheckReport::from_groups(format!("{} psi={} tau={}", code, code.psi.as_str(), code.tau), groups)
}

fn model_mean_loss(cfg: &ModelConfig, params: &crate::model::ModelParams, tokens: &[u16], targets: &[i32]) -> f64 {
    crate::model::forward_eval(cfg, params, tokens, targets).expect("model eval").mean_loss()
}

/// Full-model check: gradients of the mean masked cross entropy w.r.t. every
/// parameter group.
pub fn check_model(code: &ModelCode, seed: u64) -> GradCheckReport {
    let cfg = ModelConfig::new(8, 4, 2, 12, *code);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let params = init_model_params(&cfg, &mut rng);
    let n = 6;
    let tokens: Vec<u16> = (0..n).map(|_| rng.random_range(0..cfg.vocab_size as u16)).collect();
    let targets: Vec<i32> = (0..n)
        .map(|t| if t >= 2 && t % 2 == 0 { rng.random_range(0..cfg.vocab_size as i32) } else { -1 })
        .collect();

    let mut grads = params.zeros_like();
    let stats: SampleStats =
        forward_backward(&cfg, &params, &tokens, &targets, &mut grads).expect("model backward");
    let scale = 1.0 / stats.queries as f64;
    let flat_grads: Vec<f64> = grads.flatten().iter().map(|g| g * scale).collect();

    let flat = params.flatten();
    let mut work = params.clone();
    let mut groups = Vec::new();
    let mut offset = 0usize;
    for (name, len) in params.param_groups() {
        let mut max_err = 0.0f64;
        for idx in offset..offset + len {
            let mut pert = flat.clone();
            pert[idx] += GRADCHECK_EPS;
            work.set_from_flat(&pert);
            let up = model_mean_loss(&cfg, &work, &tokens, &targets);
            pert[idx] -= 2.0 * GRADCHECK_EPS;
            work.set_from_flat(&pert);
            let dn = model_mean_loss(&cfg, &work, &tokens, &targets);
            let fd = (up - dn) / (2.0 * GRADCHECK_EPS);
            max_err = max_err.max(err_metric(flat_grads[idx], fd));
        }
        offset += len;
        groups.push(GroupReport { name, max_err });
    }
    GradCheckReport::from_groups(format!("model {} psi={}", code, code.psi.as_str()), groups)
}

/// The acceptance grid: every oscillation construction and the SSM
/// parameterization under both psi, plus every activation on o_code 1.
pub fn layer_grid() -> Vec<ModelCode> {
    let mut out = Vec::new();
    for psi in [Psi::Elementwise, Psi::Matrix] {
        for o in 0..=O_CODE_MAX {
            out.push(ModelCode::parse(&format!("1-{o}-1-0")).unwrap().with_psi(psi));
        }
        for a in 0..=A_CODE_MAX {
            out.push(ModelCode::parse(&format!("1-1-1-{a}")).unwrap().with_psi(psi));
        }
        out.push(ModelCode::parse("0").unwrap().with_psi(psi));
    }
    out
}

/// Run the layer-level suite over the full grid.
pub fn run_layer_suite(seed: u64) -> Vec<GradCheckReport> {
    layer_grid()
        .iter()
        .enumerate()
        .map(|(idx, code)| check_layer(code, LayerDims::default(), seed.wrapping_add(idx as u64)))
        .collect()
}

/// Model-level suite: every o_code and the SSM code under both psi.
pub fn run_model_suite(seed: u64) -> Vec<GradCheckReport> {
    let mut reports = Vec::new();
    for (idx, psi) in [Psi::Elementwise, Psi::Matrix].into_iter().enumerate() {
        for o in 0..=O_CODE_MAX {
            let code = ModelCode::parse(&format!("1-{o}-1-0")).unwrap().with_psi(psi);
            reports.push(check_model(&code, seed.wrapping_add((idx * 13 + o as usize) as u64)));
        }
        let code = ModelCode::parse("0").unwrap().with_psi(psi);
        reports.push(check_model(&code, seed.wrapping_add(777 + idx as u64)));
    }
    reports
}
