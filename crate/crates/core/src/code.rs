//! Model codes: the `e-o-s-a` grammar, the activation table, and the
//! oscillation-construction table.
//!
//! A code string is either the single character "0" (state-space
//! parameterization) or four dash-separated fields:
//!   e: 0/1  expand state data dependency
//!   o: 0-11 oscillation construction
//!   s: 0/1  shrink state data dependency
//!   a: 0-7  activation applied to expand and shrink states
//!
//! The binary operator psi and the gate temperature tau are not part of the
//! code string; they ride along in [`ModelCode`] with defaults and are set
//! from the run configuration.

use std::fmt;

use thiserror::Error;

pub const O_CODE_MAX: u8 = 11;
pub const A_CODE_MAX: u8 = 7;
pub const DEFAULT_TAU: f64 = 16.0;

#[derive(Debug, Error, PartialEq)]
pub enum CodeError {
    #[error("model code `{0}` must be `0` or four dash-separated fields `e-o-s-a`")]
    Arity(String),
    #[error("model code field {field} value {value} out of range 0..={max}")]
    FieldRange { field: &'static str, value: u64, max: u64 },
    #[error("model code field {field}: `{text}` is not an integer")]
    NotAnInteger { field: &'static str, text: String },
    #[error("tau must be positive, got {0}")]
    BadTau(f64),
}

/// How the previous memory is combined with the oscillation state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Psi {
    /// Elementwise product; oscillation state is k x d.
    Elementwise,
    /// Matrix product; oscillation state is k x k.
    Matrix,
}

impl Psi {
    pub fn as_str(self) -> &'static str {
        match self {
            Psi::Elementwise => "odot",
            Psi::Matrix => "times",
        }
    }

    pub fn parse(text: &str) -> Option<Psi> {
        match text {
            "odot" | "elementwise" => Some(Psi::Elementwise),
            "times" | "matrix" => Some(Psi::Matrix),
            _ => None,
        }
    }
}

/// Activation function table (code 0..=7).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    OnePlusElu,
    Silu,
    Elu,
    ReluSquared,
    Square,
}

impl Activation {
    pub fn from_code(code: u8) -> Option<Activation> {
        use Activation::*;
        Some(match code {
            0 => Identity,
            1 => Relu,
            2 => Sigmoid,
            3 => OnePlusElu,
            4 => Silu,
            5 => Elu,
            6 => ReluSquared,
            7 => Square,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        use Activation::*;
        match self {
            Identity => 0,
            Relu => 1,
            Sigmoid => 2,
            OnePlusElu => 3,
            Silu => 4,
            Elu => 5,
            ReluSquared => 6,
            Square => 7,
        }
    }

    #[inline]
    pub fn apply_scalar(self, x: f64) -> f64 {
        use Activation::*;
        match self {
            Identity => x,
            Relu => x.max(0.0),
            Sigmoid => sigmoid(x),
            OnePlusElu => 1.0 + elu(x),
            Silu => x * sigmoid(x),
            Elu => elu(x),
            ReluSquared => {
                let r = x.max(0.0);
                r * r
            }
            Square => x * x,
        }
    }

    /// Exact analytical derivative (subgradient 0 at relu kinks).
    #[inline]
    pub fn deriv_scalar(self, x: f64) -> f64 {
        use Activation::*;
        match self {
            Identity => 1.0,
            Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            OnePlusElu | Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            ReluSquared => {
                if x > 0.0 {
                    2.0 * x
                } else {
                    0.0
                }
            }
            Square => 2.0 * x,
        }
    }

    pub fn apply(self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply_scalar(x)).collect()
    }

    pub fn deriv(self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.deriv_scalar(x)).collect()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

/// Parameterization family plus the four code slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CodeKind {
    /// Standalone code "0": expand/oscillation/shrink derived from a
    /// state-space cell; all three data-independent, no activation.
    Ssm,
    /// Linear parameterization with explicit slots.
    Linear { e_dep: bool, o_code: u8, s_dep: bool, act: Activation },
}

/// A fully specified model variant: code slots plus psi and tau.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelCode {
    pub kind: CodeKind,
    pub psi: Psi,
    pub tau: f64,
}

impl ModelCode {
    /// Parse a code string; psi defaults to elementwise and tau to 16.
    pub fn parse(text: &str) -> Result<ModelCode, CodeError> {
        let kind = parse_code(text)?;
        Ok(ModelCode { kind, psi: Psi::Elementwise, tau: DEFAULT_TAU })
    }

    pub fn with_psi(mut self, psi: Psi) -> Self {
        self.psi = psi;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self, CodeError> {
        if !(tau > 0.0) {
            return Err(CodeError::BadTau(tau));
        }
        self.tau = tau;
        Ok(self)
    }

    pub fn is_ssm(&self) -> bool {
        matches!(self.kind, CodeKind::Ssm)
    }

    pub fn e_dep(&self) -> bool {
        match self.kind {
            CodeKind::Ssm => false,
            CodeKind::Linear { e_dep, .. } => e_dep,
        }
    }

    pub fn s_dep(&self) -> bool {
        match self.kind {
            CodeKind::Ssm => false,
            CodeKind::Linear { s_dep, .. } => s_dep,
        }
    }

    /// Oscillation slot; SSM parameterization behaves like a data-independent
    /// per-row decay (reported as code 4).
    pub fn o_code(&self) -> u8 {
        match self.kind {
            CodeKind::Ssm => 4,
            CodeKind::Linear { o_code, .. } => o_code,
        }
    }

    pub fn act(&self) -> Activation {
        match self.kind {
            CodeKind::Ssm => Activation::Identity,
            CodeKind::Linear { act, .. } => act,
        }
    }

    /// True for the one construction that needs complex memory.
    pub fn complex_memory(&self) -> bool {
        self.o_code() == 11 && !self.is_ssm()
    }
}

impl fmt::Display for ModelCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            CodeKind::Ssm => write!(f, "0"),
            CodeKind::Linear { e_dep, o_code, s_dep, act } => write!(
                f,
                "{}-{}-{}-{}",
                e_dep as u8,
                o_code,
                s_dep as u8,
                act.code()
            ),
        }
    }
}

/// Parse the bare code string into its slots.
pub fn parse_code(text: &str) -> Result<CodeKind, CodeError> {
    let trimmed = text.trim();
    if trimmed == "0" {
        return Ok(CodeKind::Ssm);
    }
    let parts: Vec<&str> = trimmed.split('-').collect();
    if parts.len() != 4 {
        return Err(CodeError::Arity(trimmed.to_string()));
    }
    let field = |idx: usize, name: &'static str, max: u64| -> Result<u64, CodeError> {
        let v: u64 = parts[idx]
            .parse()
            .map_err(|_| CodeError::NotAnInteger { field: name, text: parts[idx].to_string() })?;
        if v > max {
            return Err(CodeError::FieldRange { field: name, value: v, max });
        }
        Ok(v)
    };
    let e = field(0, "e_dep", 1)?;
    let o = field(1, "o_code", O_CODE_MAX as u64)?;
    let s = field(2, "s_dep", 1)?;
    let a = field(3, "a_code", A_CODE_MAX as u64)?;
    Ok(CodeKind::Linear {
        e_dep: e == 1,
        o_code: o as u8,
        s_dep: s == 1,
        act: Activation::from_code(a as u8).unwrap(),
    })
}

/// All valid code kinds: the SSM code plus the full 2 x 12 x 2 x 8 grid.
pub fn all_code_kinds() -> Vec<CodeKind> {
    let mut out = vec![CodeKind::Ssm];
    for e in 0..2u8 {
        for o in 0..=O_CODE_MAX {
            for s in 0..2u8 {
                for a in 0..=A_CODE_MAX {
                    out.push(CodeKind::Linear {
                        e_dep: e == 1,
                        o_code: o,
                        s_dep: s == 1,
                        act: Activation::from_code(a).unwrap(),
                    });
                }
            }
        }
    }
    out
}
