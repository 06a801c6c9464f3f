// Temporary component timings for the training hot path.
use std::time::Instant;

use lcsm::code::ModelCode;
use lcsm::model::{forward_backward, init_model_params, ModelConfig};
use lcsm::scan::{backward_scan, forward_scan, OscSeq, ScanInputs};
use lcsm::state::{compute_eos, compute_eos_backward, init_layer_params, Osc};
use lcsm::Psi;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn main() {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let (n, k, d, dm) = (64usize, 64usize, 64usize, 64usize);
    let code = ModelCode::parse("1-1-1-2").unwrap().with_psi(Psi::Elementwise);
    let params = init_layer_params(&code, dm, k, d, &mut rng);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..dm).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let reps = 200;

    // compute_eos
    let t0 = Instant::now();
    let mut sink = 0.0;
    for _ in 0..reps {
        for x in &xs {
            let (st, _) = compute_eos(&params, &code, x);
            sink += st.e[0];
        }
    }
    let eos_us = t0.elapsed().as_micros() as f64 / reps as f64;

    // build inputs once
    let build = || {
        let mut e = Vec::new(); let mut s = Vec::new(); let mut i = Vec::new(); let mut o = Vec::new();
        let mut caches = Vec::new();
        for x in &xs {
            let (st, c) = compute_eos(&params, &code, x);
            e.push(st.e); s.push(st.s); i.push(st.i);
            if let Osc::Real(m) = st.o { o.push(m); }
            caches.push(c);
        }
        (ScanInputs { e, o: OscSeq::Real(o), s, i, psi: Psi::Elementwise }, caches)
    };
    let (inputs, caches) = build();
    let dy: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();

    let t0 = Instant::now();
    for _ in 0..reps {
        let out = forward_scan(&inputs).unwrap();
        sink += out.y[0][0];
    }
    let fwd_us = t0.elapsed().as_micros() as f64 / reps as f64;

    let out = forward_scan(&inputs).unwrap();
    let t0 = Instant::now();
    for _ in 0..reps {
        let g = backward_scan(&inputs, &out.cache, &dy).unwrap();
        sink += g[0].d_e[0];
    }
    let bwd_us = t0.elapsed().as_micros() as f64 / reps as f64;

    let grads_proto = params.zeros_like();
    let step_grads = backward_scan(&inputs, &out.cache, &dy).unwrap();
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut grads = grads_proto.clone();
        let mut d_x = vec![0.0; dm];
        for t in 0..n {
            let g = &step_grads[t];
            compute_eos_backward(&params, &code, &xs[t], &caches[t], &g.d_e, &g.d_o, &g.d_s, &g.d_i, &mut grads, &mut d_x);
        }
        sink += d_x[0];
    }
    let eosb_us = t0.elapsed().as_micros() as f64 / reps as f64;

    // rank-1 route
    let r1 = lcsm::scan::Rank1ScanInputs {
        e: inputs.e.clone(),
        g: (0..n).map(|_| (0..k).map(|_| rng.random_range(0.05..0.99)).collect()).collect(),
        gbar: (0..n).map(|_| (0..d).map(|_| rng.random_range(0.05..0.99)).collect()).collect(),
        s: inputs.s.clone(),
        i: inputs.i.clone(),
    };
    let t0 = Instant::now();
    for _ in 0..reps {
        let out = lcsm::scan::forward_scan_rank1(&r1).unwrap();
        sink += out.y[0][0];
    }
    let r1f_us = t0.elapsed().as_micros() as f64 / reps as f64;
    let r1out = lcsm::scan::forward_scan_rank1(&r1).unwrap();
    let t0 = Instant::now();
    for _ in 0..reps {
        let g = lcsm::scan::backward_scan_rank1(&r1, &r1out.cache, &dy).unwrap();
        sink += g[0].d_e[0];
    }
    let r1b_us = t0.elapsed().as_micros() as f64 / reps as f64;
    println!("rank1 fwd {r1f_us:.1} us  bwd {r1b_us:.1} us");

    // full model sample
    let cfg = ModelConfig::new(dm, k, 2, 128, code);
    let mparams = init_model_params(&cfg, &mut rng);
    let tokens: Vec<u16> = (0..n).map(|_| rng.random_range(0..128u16)).collect();
    let targets: Vec<i32> = (0..n).map(|t| if t % 8 == 5 { rng.random_range(0..128) } else { -1 }).collect();
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut grads = mparams.zeros_like();
        let st = forward_backward(&cfg, &mparams, &tokens, &targets, &mut grads).unwrap();
        sink += st.loss_sum;
    }
    let full_us = t0.elapsed().as_micros() as f64 / reps as f64;

    // zeros_like alone
    let t0 = Instant::now();
    for _ in 0..reps {
        let g = mparams.zeros_like();
        sink += g.final_gamma[0];
    }
    let zeros_us = t0.elapsed().as_micros() as f64 / reps as f64;

    println!("per-sequence (n=64, k=d=dm=64), one layer unless noted:");
    println!("  compute_eos x64        {eos_us:9.1} us");
    println!("  forward_scan           {fwd_us:9.1} us");
    println!("  backward_scan          {bwd_us:9.1} us");
    println!("  eos_backward x64       {eosb_us:9.1} us");
    println!("  full fwd+bwd (2 layers){full_us:9.1} us");
    println!("  zeros_like             {zeros_us:9.1} us");
    println!("(sink {sink:e})");
}
