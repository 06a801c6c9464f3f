//! The core recurrence: forward scan, exact backward scan, and a brute-force
//! unrolled oracle.
//!
//! Forward, per step t (m_0 = zeros(k, d)):
//!   Type1 (psi = odot):  m_t = o_t ⊙ m_{t-1} + e_t i_t^T,   o_t in R^{k x d}
//!   Type2 (psi = times): m_t = o_t m_{t-1} + e_t i_t^T,     o_t in R^{k x k}
//!   readout:             y_t = m_t^T s_t
//! Complex memory uses the identical recurrence with complex o_t and m_t and
//! reads out through the real part: y_t = Re(m_t)^T s_t.
//!
//! Backward, reverse sweep with dm_n = s_n dy_n^T and for t = n..1:
//!   ds_t = m_t dy_t
//!   de_t = dm_t i_t
//!   di_t = dm_t^T e_t
//!   Type1: do_t = dm_t ⊙ m_{t-1},   dm_{t-1} = o_t ⊙ dm_t + s_{t-1} dy_{t-1}^T
//!   Type2: do_t = dm_t m_{t-1}^T,   dm_{t-1} = o_t^T dm_t + s_{t-1} dy_{t-1}^T
//! (The oscillation cotangent takes m_{t-1}, the pre-update memory; writing
//! m_t there does not satisfy the chain rule, as the finite-difference suite
//! confirms.) Complex memory replaces transposes with conjugate transposes
//! and ⊙ by conjugate elementwise products; only the real channel receives
//! the readout term since s_t reads Re(m_t).

use thiserror::Error;

use crate::code::Psi;
use crate::tensor::{
    self, CMatrix, Matrix, Vector, cmatmul, cmatmul_conj_t, cmatmul_t_conj, cmatvec_t_real,
    chadamard, hadamard, matmul, matvec, matvec_t, outer,
};

/// Max sequence length accepted by the O(n^2) oracle.
pub const ORACLE_MAX_LEN: usize = 64;

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("scan inputs are empty")]
    Empty,
    #[error("{0}")]
    ShapeMismatch(String),
    #[error("non-finite memory entry at timestep {step}")]
    NonFinite { step: usize },
    #[error("oracle limited to n <= {max}, got {n}")]
    OracleTooLong { n: usize, max: usize },
}

/// Oscillation sequence: real matrices or complex (unit-modulus) matrices.
#[derive(Clone, Debug)]
pub enum OscSeq {
    Real(Vec<Matrix>),
    Complex(Vec<CMatrix>),
}

impl OscSeq {
    pub fn len(&self) -> usize {
        match self {
            OscSeq::Real(v) => v.len(),
            OscSeq::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, OscSeq::Complex(_))
    }
}

/// Per-sequence inputs to the scan.
#[derive(Clone, Debug)]
pub struct ScanInputs {
    pub e: Vec<Vector>,
    pub o: OscSeq,
    pub s: Vec<Vector>,
    pub i: Vec<Vector>,
    pub psi: Psi,
}

impl ScanInputs {
    pub fn seq_len(&self) -> usize {
        self.e.len()
    }

    /// (n, k, d) after validating lengths and shapes.
    fn dims(&self) -> Result<(usize, usize, usize), ScanError> {
        let n = self.e.len();
        if n == 0 {
            return Err(ScanError::Empty);
        }
        for (what, len) in [("o", self.o.len()), ("s", self.s.len()), ("i", self.i.len())] {
            if len != n {
                return Err(ScanError::LengthMismatch { what, expected: n, got: len });
            }
        }
        let k = self.e[0].len();
        let d = self.i[0].len();
        let p = match self.psi {
            Psi::Elementwise => d,
            Psi::Matrix => k,
        };
        for t in 0..n {
            if self.e[t].len() != k || self.s[t].len() != k || self.i[t].len() != d {
                return Err(ScanError::ShapeMismatch(format!(
                    "step {}: e/s/i dims ({}, {}, {}) inconsistent with (k={}, d={})",
                    t + 1,
                    self.e[t].len(),
                    self.s[t].len(),
                    self.i[t].len(),
                    k,
                    d
                )));
            }
            let (or, oc) = match &self.o {
                OscSeq::Real(v) => (v[t].rows, v[t].cols),
                OscSeq::Complex(v) => (v[t].rows, v[t].cols),
            };
            if or != k || oc != p {
                return Err(ScanError::ShapeMismatch(format!(
                    "step {}: oscillation is {}x{}, expected {}x{} for psi={}",
                    t + 1,
                    or,
                    oc,
                    k,
                    p,
                    self.psi.as_str()
                )));
            }
        }
        Ok((n, k, d))
    }
}

/// Memory trajectory m_0..m_n kept for the backward pass.
#[derive(Clone, Debug)]
pub enum MemSeq {
    Real(Vec<Matrix>),
    Complex(Vec<CMatrix>),
}

impl MemSeq {
    pub fn len(&self) -> usize {
        match self {
            MemSeq::Real(v) => v.len(),
            MemSeq::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn real(&self) -> &Vec<Matrix> {
        match self {
            MemSeq::Real(v) => v,
            MemSeq::Complex(_) => panic!("expected real memory"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScanCache {
    pub m: MemSeq,
}

#[derive(Clone, Debug)]
pub struct ScanOutput {
    pub y: Vec<Vector>,
    pub cache: ScanCache,
}

/// Real or complex cotangent for memory / oscillation states.
#[derive(Clone, Debug)]
pub enum Grad {
    Real(Matrix),
    Complex(CMatrix),
}

impl Grad {
    pub fn real(&self) -> &Matrix {
        match self {
            Grad::Real(m) => m,
            Grad::Complex(_) => panic!("expected real gradient"),
        }
    }

    pub fn complex(&self) -> &CMatrix {
        match self {
            Grad::Complex(m) => m,
            Grad::Real(_) => panic!("expected complex gradient"),
        }
    }
}

/// Gradient bundle for one timestep.
#[derive(Clone, Debug)]
pub struct StepGrads {
    pub d_m: Grad,
    pub d_e: Vector,
    pub d_o: Grad,
    pub d_s: Vector,
    pub d_i: Vector,
}

/// Run the recurrence; returns outputs and the cached memory trajectory.
pub fn forward_scan(inputs: &ScanInputs) -> Result<ScanOutput, ScanError> {
    let (n, k, d) = inputs.dims()?;
    match &inputs.o {
        OscSeq::Real(o) => {
            let mut mem: Vec<Matrix> = Vec::with_capacity(n + 1);
            mem.push(Matrix::zeros(k, d));
            let mut y = Vec::with_capacity(n);
            for t in 0..n {
                let prev = &mem[t];
                let (m_t, y_t) = match inputs.psi {
                    Psi::Elementwise => {
                        // fused update and readout: rows stay in L1 between
                        // the elementwise update and the readout pass
                        let i_t = &inputs.i[t];
                        let s_t = &inputs.s[t];
                        let mut data = vec![0.0; k * d];
                        let mut y_t = vec![0.0; d];
                        for (j, dst) in data.chunks_exact_mut(d).enumerate() {
                            let ej = inputs.e[t][j];
                            let orow = o[t].row(j);
                            let prow = prev.row(j);
                            for (d_v, ((&ov, &pv), &iv)) in
                                dst.iter_mut().zip(orow.iter().zip(prow).zip(i_t))
                            {
                                *d_v = ov * pv + ej * iv;
                            }
                            tensor::axpy(&mut y_t, s_t[j], dst);
                        }
                        (Matrix { rows: k, cols: d, data }, y_t)
                    }
                    Psi::Matrix => {
                        let mut m = matmul(&o[t], prev);
                        for j in 0..k {
                            tensor::axpy(m.row_mut(j), inputs.e[t][j], &inputs.i[t]);
                        }
                        let y_t = matvec_t(&m, &inputs.s[t]);
                        (m, y_t)
                    }
                };
                if !m_t.is_finite() {
                    return Err(ScanError::NonFinite { step: t + 1 });
                }
                y.push(y_t);
                mem.push(m_t);
            }
            Ok(ScanOutput { y, cache: ScanCache { m: MemSeq::Real(mem) } })
        }
        OscSeq::Complex(o) => {
            let mut mem: Vec<CMatrix> = Vec::with_capacity(n + 1);
            mem.push(CMatrix::zeros(k, d));
            let mut y = Vec::with_capacity(n);
            for t in 0..n {
                let prev = &mem[t];
                let mut m_t = match inputs.psi {
                    Psi::Elementwise => chadamard(&o[t], prev),
                    Psi::Matrix => cmatmul(&o[t], prev),
                };
                m_t.add_real_assign(&outer(&inputs.e[t], &inputs.i[t]));
                if !m_t.is_finite() {
                    return Err(ScanError::NonFinite { step: t + 1 });
                }
                y.push(cmatvec_t_real(&m_t, &inputs.s[t]));
                mem.push(m_t);
            }
            Ok(ScanOutput { y, cache: ScanCache { m: MemSeq::Complex(mem) } })
        }
    }
}

/// Reverse sweep producing per-step gradients; index t-1 of the result holds
/// step t (one-based timesteps as in the forward recurrence).
pub fn backward_scan(
    inputs: &ScanInputs,
    cache: &ScanCache,
    dy: &[Vector],
) -> Result<Vec<StepGrads>, ScanError> {
    let (n, k, _d) = inputs.dims()?;
    if dy.len() != n {
        return Err(ScanError::LengthMismatch { what: "dy", expected: n, got: dy.len() });
    }
    if cache.m.len() != n + 1 {
        return Err(ScanError::LengthMismatch { what: "cache", expected: n + 1, got: cache.m.len() });
    }
    let mut out: Vec<Option<StepGrads>> = (0..n).map(|_| None).collect();

    match (&inputs.o, &cache.m) {
        (OscSeq::Real(o), MemSeq::Real(mem)) => {
            // dm_n = s_n dy_n^T; dm moves into the step bundle and the next
            // iteration reads it back, so no per-step copy is made.
            let mut dm = outer(&inputs.s[n - 1], &dy[n - 1]);
            for t in (1..=n).rev() {
                let m_t = &mem[t];
                let m_prev = &mem[t - 1];
                let d_s = matvec(m_t, &dy[t - 1]);
                let (d_e, d_i, d_o, next) = match inputs.psi {
                    Psi::Elementwise => {
                        // one fused pass over the memory cotangent produces
                        // the oscillation cotangent, the recursion input, and
                        // both vector gradients
                        let d = m_t.cols;
                        let i_t = &inputs.i[t - 1];
                        let e_t = &inputs.e[t - 1];
                        let mut d_e = vec![0.0; k];
                        let mut d_i = vec![0.0; d];
                        let mut d_o = vec![0.0; k * d];
                        let mut next = if t > 1 { vec![0.0; k * d] } else { Vec::new() };
                        for j in 0..k {
                            let dm_row = dm.row(j);
                            let mp_row = m_prev.row(j);
                            let do_row = &mut d_o[j * d..(j + 1) * d];
                            let ej = e_t[j];
                            let mut acc = [0.0f64; 4];
                            for (idx, (((dst, &dmv), &mpv), (&iv, div))) in do_row
                                .iter_mut()
                                .zip(dm_row)
                                .zip(mp_row)
                                .zip(i_t.iter().zip(d_i.iter_mut()))
                                .enumerate()
                            {
                                acc[idx & 3] += dmv * iv;
                                *div += ej * dmv;
                                *dst = dmv * mpv;
                            }
                            d_e[j] = (acc[0] + acc[1]) + (acc[2] + acc[3]);
                            if t > 1 {
                                let nx_row = &mut next[j * d..(j + 1) * d];
                                let o_row = o[t - 1].row(j);
                                let s_prev = inputs.s[t - 2][j];
                                for (dst, ((&ov, &dmv), &dyv)) in nx_row
                                    .iter_mut()
                                    .zip(o_row.iter().zip(dm_row).zip(&dy[t - 2]))
                                {
                                    *dst = ov * dmv + s_prev * dyv;
                                }
                            }
                        }
                        let d_o = Matrix { rows: k, cols: d, data: d_o };
                        let next = if t > 1 {
                            Matrix { rows: k, cols: d, data: next }
                        } else {
                            Matrix::zeros(1, 1)
                        };
                        (d_e, d_i, d_o, next)
                    }
                    Psi::Matrix => {
                        let d_e = matvec(&dm, &inputs.i[t - 1]);
                        let d_i = matvec_t(&dm, &inputs.e[t - 1]);
                        let d_o = matmul(&dm, &m_prev.transpose());
                        let next = if t > 1 {
                            let mut next = matmul(&o[t - 1].transpose(), &dm);
                            for j in 0..k {
                                tensor::axpy(next.row_mut(j), inputs.s[t - 2][j], &dy[t - 2]);
                            }
                            next
                        } else {
                            Matrix::zeros(1, 1)
                        };
                        (d_e, d_i, d_o, next)
                    }
                };
                out[t - 1] = Some(StepGrads {
                    d_m: Grad::Real(dm),
                    d_e,
                    d_o: Grad::Real(d_o),
                    d_s,
                    d_i,
                });
                dm = next;
            }
        }
        (OscSeq::Complex(o), MemSeq::Complex(mem)) => {
            let mut dm = CMatrix::from_real(&outer(&inputs.s[n - 1], &dy[n - 1]));
            for t in (1..=n).rev() {
                let m_t = &mem[t];
                let m_prev = &mem[t - 1];
                let d_s = matvec(&m_t.real_part(), &dy[t - 1]);
                let d_e = matvec(&dm.real_part(), &inputs.i[t - 1]);
                let d_i = matvec_t(&dm.real_part(), &inputs.e[t - 1]);
                let d_o = match inputs.psi {
                    Psi::Elementwise => chadamard(&dm, &m_prev.conj()),
                    Psi::Matrix => cmatmul_t_conj(&dm, m_prev),
                };
                out[t - 1] = Some(StepGrads {
                    d_m: Grad::Complex(dm),
                    d_e,
                    d_o: Grad::Complex(d_o),
                    d_s,
                    d_i,
                });
                let dm_here = out[t - 1].as_ref().unwrap().d_m.complex();
                if t > 1 {
                    let mut next = match inputs.psi {
                        Psi::Elementwise => chadamard(&o[t - 1].conj(), dm_here),
                        Psi::Matrix => cmatmul_conj_t(&o[t - 1], dm_here),
                    };
                    next.add_real_assign(&outer(&inputs.s[t - 2], &dy[t - 2]));
                    dm = next;
                } else {
                    dm = CMatrix::zeros(1, 1);
                }
            }
        }
        _ => {
            return Err(ScanError::ShapeMismatch(
                "cache memory kind does not match oscillation kind".to_string(),
            ))
        }
    }
    Ok(out.into_iter().map(|g| g.unwrap()).collect())
}

/// Inputs for the rank-one elementwise fast path, where every oscillation
/// state is an outer product o_t = g_t ⊗ gbar_t. Mathematically identical to
/// [`forward_scan`] with materialized outer products; it just never touches
/// k x d oscillation matrices, which roughly halves memory traffic.
#[derive(Clone, Debug)]
pub struct Rank1ScanInputs {
    pub e: Vec<Vector>,
    pub g: Vec<Vector>,
    pub gbar: Vec<Vector>,
    pub s: Vec<Vector>,
    pub i: Vec<Vector>,
}

/// Per-step gradients of the rank-one path; the oscillation cotangent is
/// already reduced onto the two factors.
#[derive(Clone, Debug)]
pub struct Rank1StepGrads {
    pub d_e: Vector,
    pub d_g: Vector,
    pub d_gbar: Vector,
    pub d_s: Vector,
    pub d_i: Vector,
}

impl Rank1ScanInputs {
    fn dims(&self) -> Result<(usize, usize, usize), ScanError> {
        let n = self.e.len();
        if n == 0 {
            return Err(ScanError::Empty);
        }
        for (what, len) in
            [("g", self.g.len()), ("gbar", self.gbar.len()), ("s", self.s.len()), ("i", self.i.len())]
        {
            if len != n {
                return Err(ScanError::LengthMismatch { what, expected: n, got: len });
            }
        }
        let k = self.e[0].len();
        let d = self.i[0].len();
        for t in 0..n {
            if self.e[t].len() != k
                || self.g[t].len() != k
                || self.s[t].len() != k
                || self.gbar[t].len() != d
                || self.i[t].len() != d
            {
                return Err(ScanError::ShapeMismatch(format!(
                    "step {}: rank-one input dims inconsistent with (k={k}, d={d})",
                    t + 1
                )));
            }
        }
        Ok((n, k, d))
    }

    /// Materialize into general scan inputs (verification route).
    pub fn materialize(&self) -> ScanInputs {
        let o = self
            .g
            .iter()
            .zip(&self.gbar)
            .map(|(g, gb)| outer(g, gb))
            .collect();
        ScanInputs {
            e: self.e.clone(),
            o: OscSeq::Real(o),
            s: self.s.clone(),
            i: self.i.clone(),
            psi: Psi::Elementwise,
        }
    }
}

/// Rank-one forward: m_t = (g_t ⊗ gbar_t) ⊙ m_{t-1} + e_t i_t^T, fused with
/// the readout.
pub fn forward_scan_rank1(inputs: &Rank1ScanInputs) -> Result<ScanOutput, ScanError> {
    let (n, k, d) = inputs.dims()?;
    let mut mem: Vec<Matrix> = Vec::with_capacity(n + 1);
    mem.push(Matrix::zeros(k, d));
    let mut y = Vec::with_capacity(n);
    for t in 0..n {
        let prev = &mem[t];
        let i_t = &inputs.i[t];
        let gbar_t = &inputs.gbar[t];
        let s_t = &inputs.s[t];
        let mut data = vec![0.0; k * d];
        let mut y_t = vec![0.0; d];
        for (j, dst) in data.chunks_exact_mut(d).enumerate() {
            let ej = inputs.e[t][j];
            let gj = inputs.g[t][j];
            let prow = prev.row(j);
            for (d_v, ((&gb, &pv), &iv)) in
                dst.iter_mut().zip(gbar_t.iter().zip(prow).zip(i_t))
            {
                *d_v = gj * gb * pv + ej * iv;
            }
            tensor::axpy(&mut y_t, s_t[j], dst);
        }
        let m_t = Matrix { rows: k, cols: d, data };
        if !m_t.is_finite() {
            return Err(ScanError::NonFinite { step: t + 1 });
        }
        y.push(y_t);
        mem.push(m_t);
    }
    Ok(ScanOutput { y, cache: ScanCache { m: MemSeq::Real(mem) } })
}

/// Rank-one backward; the reverse sweep of [`backward_scan`] with the
/// oscillation cotangent contracted onto g and gbar in the same pass, and
/// the shrink gradient folded into the previous-memory read.
pub fn backward_scan_rank1(
    inputs: &Rank1ScanInputs,
    cache: &ScanCache,
    dy: &[Vector],
) -> Result<Vec<Rank1StepGrads>, ScanError> {
    let (n, k, d) = inputs.dims()?;
    if dy.len() != n {
        return Err(ScanError::LengthMismatch { what: "dy", expected: n, got: dy.len() });
    }
    let mem = match &cache.m {
        MemSeq::Real(mem) => mem,
        MemSeq::Complex(_) => {
            return Err(ScanError::ShapeMismatch("rank-one path expects real memory".to_string()))
        }
    };
    if mem.len() != n + 1 {
        return Err(ScanError::LengthMismatch { what: "cache", expected: n + 1, got: mem.len() });
    }
    let mut out: Vec<Option<Rank1StepGrads>> = (0..n).map(|_| None).collect();
    let mut dm = outer(&inputs.s[n - 1], &dy[n - 1]);
    // d_s of the last step reads the final memory directly
    let mut d_s_here = matvec(&mem[n], &dy[n - 1]);
    for t in (1..=n).rev() {
        let m_prev = &mem[t - 1];
        let i_t = &inputs.i[t - 1];
        let e_t = &inputs.e[t - 1];
        let g_t = &inputs.g[t - 1];
        let gbar_t = &inputs.gbar[t - 1];
        let mut d_e = vec![0.0; k];
        let mut d_g = vec![0.0; k];
        let mut d_i = vec![0.0; d];
        let mut d_gbar = vec![0.0; d];
        let mut next = if t > 1 { vec![0.0; k * d] } else { Vec::new() };
        // d_s of step t-1 accumulates against m_{t-1} during the same pass
        let mut d_s_next = vec![0.0; k];
        let dy_prev = if t > 1 { Some(&dy[t - 2]) } else { None };
        for j in 0..k {
            let dm_row = dm.row(j);
            let mp_row = m_prev.row(j);
            let ej = e_t[j];
            let gj = g_t[j];
            let mut de_acc = [0.0f64; 4];
            let mut dg_acc = [0.0f64; 4];
            let mut ds_acc = [0.0f64; 4];
            match dy_prev {
                Some(dy_prev) => {
                    let nx_row = &mut next[j * d..(j + 1) * d];
                    let s_prev = inputs.s[t - 2][j];
                    for (idx, ((((&dmv, &mpv), (&gb, dgb)), (&iv, div)), (nx, &dyv))) in dm_row
                        .iter()
                        .zip(mp_row)
                        .zip(gbar_t.iter().zip(d_gbar.iter_mut()))
                        .zip(i_t.iter().zip(d_i.iter_mut()))
                        .zip(nx_row.iter_mut().zip(dy_prev))
                        .enumerate()
                    {
                        let a = idx & 3;
                        de_acc[a] += dmv * iv;
                        *div += ej * dmv;
                        let dm_mp = dmv * mpv;
                        dg_acc[a] += dm_mp * gb;
                        *dgb += dm_mp * gj;
                        *nx = gj * gb * dmv + s_prev * dyv;
                        ds_acc[a] += mpv * dyv;
                    }
                    d_s_next[j] = (ds_acc[0] + ds_acc[1]) + (ds_acc[2] + ds_acc[3]);
                }
                None => {
                    for (idx, (((&dmv, &mpv), (&gb, dgb)), (&iv, div))) in dm_row
                        .iter()
                        .zip(mp_row)
                        .zip(gbar_t.iter().zip(d_gbar.iter_mut()))
                        .zip(i_t.iter().zip(d_i.iter_mut()))
                        .enumerate()
                    {
                        let a = idx & 3;
                        de_acc[a] += dmv * iv;
                        *div += ej * dmv;
                        let dm_mp = dmv * mpv;
                        dg_acc[a] += dm_mp * gb;
                        *dgb += dm_mp * gj;
                    }
                }
            }
            d_e[j] = (de_acc[0] + de_acc[1]) + (de_acc[2] + de_acc[3]);
            d_g[j] = (dg_acc[0] + dg_acc[1]) + (dg_acc[2] + dg_acc[3]);
        }
        out[t - 1] = Some(Rank1StepGrads { d_e, d_g, d_gbar, d_s: d_s_here, d_i });
        d_s_here = d_s_next;
        if t > 1 {
            dm = Matrix { rows: k, cols: d, data: next };
        }
    }
    Ok(out.into_iter().map(|g| g.unwrap()).collect())
}

/// Direct evaluation of the unrolled sum, materializing each oscillation
/// product chain independently. O(n^2) memory terms, O(n^3) applications.
pub fn oracle_forward(inputs: &ScanInputs) -> Result<Vec<Vector>, ScanError> {
    let (n, k, d) = inputs.dims()?;
    if n > ORACLE_MAX_LEN {
        return Err(ScanError::OracleTooLong { n, max: ORACLE_MAX_LEN });
    }
    let mut y = Vec::with_capacity(n);
    match &inputs.o {
        OscSeq::Real(o) => {
            for t in 1..=n {
                let mut acc = Matrix::zeros(k, d);
                for src in 1..=t {
                    let mut term = outer(&inputs.e[src - 1], &inputs.i[src - 1]);
                    for r in src + 1..=t {
                        term = match inputs.psi {
                            Psi::Elementwise => hadamard(&o[r - 1], &term),
                            Psi::Matrix => matmul(&o[r - 1], &term),
                        };
                    }
                    acc.add_assign(&term);
                }
                y.push(matvec_t(&acc, &inputs.s[t - 1]));
            }
        }
        OscSeq::Complex(o) => {
            for t in 1..=n {
                let mut acc = CMatrix::zeros(k, d);
                for src in 1..=t {
                    let mut term = CMatrix::from_real(&outer(&inputs.e[src - 1], &inputs.i[src - 1]));
                    for r in src + 1..=t {
                        term = match inputs.psi {
                            Psi::Elementwise => chadamard(&o[r - 1], &term),
                            Psi::Matrix => cmatmul(&o[r - 1], &term),
                        };
                    }
                    acc.add_assign(&term);
                }
                y.push(cmatvec_t_real(&acc, &inputs.s[t - 1]));
            }
        }
    }
    Ok(y)
}
