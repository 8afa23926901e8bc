use rand::Rng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records every tensor as a tape leaf.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), requires_grad))
            .collect()
    }

    /// Replaces all tensors with ones from `other`, which must have the same layout.
    pub fn copy_from(&mut self, other: &ParamSet) -> Result<()> {
        if self.names != other.names
            || self
                .tensors
                .iter()
                .zip(&other.tensors)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Dimension("parameter layouts differ".into()));
        }
        self.tensors.clone_from(&other.tensors);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearIdx {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormIdx {
    pub gain: usize,
    pub bias: usize,
}

/// linear → layer norm → SiLU → linear
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FfnIdx {
    pub fc1: LinearIdx,
    pub norm: NormIdx,
    pub fc2: LinearIdx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionIdx {
    pub q: LinearIdx,
    pub k: LinearIdx,
    pub v: LinearIdx,
    pub o: LinearIdx,
}

/// Allocates and initializes layers into a [`ParamSet`].
///
/// Linear weights and biases are drawn from `U(-1/√fan_in, 1/√fan_in)`;
/// layer norms start at gain 1, bias 0.
pub struct ParamBuilder<'r, R: Rng> {
    set: ParamSet,
    rng: &'r mut R,
}

impl<'r, R: Rng> ParamBuilder<'r, R> {
    pub fn new(rng: &'r mut R) -> Self {
        ParamBuilder {
            set: ParamSet::default(),
            rng,
        }
    }

    pub fn linear(&mut self, name: &str, inp: usize, out: usize) -> LinearIdx {
        let bound = 1.0 / (inp as f64).sqrt();
        let w: Vec<f64> = (0..inp * out)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        let b: Vec<f64> = (0..out)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        LinearIdx {
            w: self.set.push(
                format!("{name}.weight"),
                Tensor::new(vec![inp, out], w).expect("sized above"),
            ),
            b: self.set.push(format!("{name}.bias"), Tensor::vector(b)),
        }
    }

    pub fn zero_linear(&mut self, name: &str, inp: usize, out: usize) -> LinearIdx {
        LinearIdx {
            w: self
                .set
                .push(format!("{name}.weight"), Tensor::zeros(&[inp, out])),
            b: self.set.push(format!("{name}.bias"), Tensor::zeros(&[out])),
        }
    }

    pub fn layer_norm(&mut self, name: &str, d: usize) -> NormIdx {
        NormIdx {
            gain: self.set.push(format!("{name}.gain"), Tensor::ones(&[d])),
            bias: self.set.push(format!("{name}.bias"), Tensor::zeros(&[d])),
        }
    }

    pub fn ffn(&mut self, name: &str, inp: usize, hidden: usize, out: usize) -> FfnIdx {
        FfnIdx {
            fc1: self.linear(&format!("{name}.fc1"), inp, hidden),
            norm: self.layer_norm(&format!("{name}.norm"), hidden),
            fc2: self.linear(&format!("{name}.fc2"), hidden, out),
        }
    }

    pub fn attention(&mut self, name: &str, width: usize) -> AttentionIdx {
        AttentionIdx {
            q: self.linear(&format!("{name}.q"), width, width),
            k: self.linear(&format!("{name}.k"), width, width),
            v: self.linear(&format!("{name}.v"), width, width),
            o: self.linear(&format!("{name}.o"), width, width),
        }
    }

    pub fn finish(self) -> ParamSet {
        self.set
    }
}

pub fn linear(tape: &mut Tape, p: &[Var], idx: LinearIdx, x: Var) -> Result<Var> {
    tape.linear(x, p[idx.w], Some(p[idx.b]))
}

pub fn layer_norm(tape: &mut Tape, p: &[Var], idx: NormIdx, x: Var) -> Result<Var> {
    tape.layer_norm(x, p[idx.gain], p[idx.bias])
}

pub fn ffn(tape: &mut Tape, p: &[Var], idx: FfnIdx, x: Var) -> Result<Var> {
    let h = linear(tape, p, idx.fc1, x)?;
    let h = layer_norm(tape, p, idx.norm, h)?;
    let h = tape.silu(h);
    linear(tape, p, idx.fc2, h)
}

/// Multi-head causal self-attention over `batch` sequences of `len` tokens
/// stored as the rows of `x`.
pub fn causal_self_attention(
    tape: &mut Tape,
    p: &[Var],
    idx: AttentionIdx,
    x: Var,
    batch: usize,
    len: usize,
    heads: usize,
) -> Result<Var> {
    let q = linear(tape, p, idx.q, x)?;
    let k = linear(tape, p, idx.k, x)?;
    let v = linear(tape, p, idx.v, x)?;
    let a = tape.causal_attention(q, k, v, batch, len, heads)?;
    linear(tape, p, idx.o, a)
}
