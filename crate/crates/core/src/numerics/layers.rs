//! Recurrent layers, dropout and the stand-alone softmax loss.

use std::rc::Rc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::graph::{log_softmax, softmax, Graph, Var};
use super::tensor::{ParamId, ParameterSet, Tensor};
use crate::error::{Error, Result};

/// Weights of one GRU direction.
///
/// Gate layout of `w_x` rows: update gate, reset gate, candidate.
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// h~ = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ h~
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruParams {
    pub w_x: ParamId,
    pub bias: ParamId,
    pub u_zr: ParamId,
    pub u_h: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruParams {
    /// Register the four tensors of a GRU direction under `prefix`.
    pub fn register<R: Rng + ?Sized>(
        params: &mut ParameterSet,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(GruParams {
            w_x: params.insert(
                &format!("{prefix}.w_x"),
                Tensor::fan_in_uniform(vec![3 * hidden, input], rng),
            )?,
            u_zr: params.insert(
                &format!("{prefix}.u_zr"),
                Tensor::fan_in_uniform(vec![2 * hidden, hidden], rng),
            )?,
            u_h: params.insert(
                &format!("{prefix}.u_h"),
                Tensor::fan_in_uniform(vec![hidden, hidden], rng),
            )?,
            bias: params.insert(&format!("{prefix}.b"), Tensor::zeros(vec![3 * hidden]))?,
            input,
            hidden,
        })
    }
}

/// Bidirectional GRU layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiGruParams {
    pub forward: GruParams,
    pub backward: GruParams,
}

impl BiGruParams {
    pub fn register<R: Rng + ?Sized>(
        params: &mut ParameterSet,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(BiGruParams {
            forward: GruParams::register(params, &format!("{prefix}.fwd"), input, hidden, rng)?,
            backward: GruParams::register(params, &format!("{prefix}.bwd"), input, hidden, rng)?,
        })
    }
}

pub fn gru_cell(g: &mut Graph<'_>, p: &GruParams, input: Var, hidden: Var) -> Result<Var> {
    if g.dim(input) != p.input || g.dim(hidden) != p.hidden {
        return Err(Error::Config(format!(
            "gru expects input {} / hidden {}, got {} / {}",
            p.input,
            p.hidden,
            g.dim(input),
            g.dim(hidden)
        )));
    }
    let h = p.hidden;
    let gx = g.affine(p.w_x, p.bias, input);
    let gh = g.matvec(p.u_zr, hidden);

    let zx = g.slice(gx, 0, h);
    let zh = g.slice(gh, 0, h);
    let z_pre = g.add(zx, zh);
    let z = g.sigmoid(z_pre);

    let rx = g.slice(gx, h, 2 * h);
    let rh = g.slice(gh, h, 2 * h);
    let r_pre = g.add(rx, rh);
    let r = g.sigmoid(r_pre);

    let reset_h = g.mul(r, hidden);
    let cand_h = g.matvec(p.u_h, reset_h);
    let cand_x = g.slice(gx, 2 * h, 3 * h);
    let cand_pre = g.add(cand_x, cand_h);
    let cand = g.tanh(cand_pre);

    // h' = h + z ⊙ (h~ − h)
    let delta = g.sub(cand, hidden);
    let step = g.mul(z, delta);
    Ok(g.add(hidden, step))
}

/// Run one direction over a sequence from a zero state.
pub fn gru_sequence(
    g: &mut Graph<'_>,
    p: &GruParams,
    inputs: &[Var],
    reverse: bool,
) -> Result<Vec<Var>> {
    let mut state = g.zeros(p.hidden);
    let mut out = vec![state; inputs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..inputs.len()).rev())
    } else {
        Box::new(0..inputs.len())
    };
    for i in order {
        state = gru_cell(g, p, inputs[i], state)?;
        out[i] = state;
    }
    Ok(out)
}

/// Top-layer states of a (possibly stacked) bidirectional RNN.
#[derive(Clone, Debug)]
pub struct BiRnnOutput {
    /// `[forward_i; backward_i]` per position.
    pub states: Vec<Var>,
    pub forward: Vec<Var>,
    pub backward: Vec<Var>,
}

impl BiRnnOutput {
    /// Forward state after the last position.
    pub fn final_forward(&self) -> Var {
        *self.forward.last().expect("non-empty")
    }

    /// Backward state after consuming the first position.
    pub fn final_backward(&self) -> Var {
        self.backward[0]
    }
}

/// Stacked bidirectional GRU; layer `k` consumes the concatenated outputs
/// of layer `k − 1`. When `dropout` carries an RNG, one variational mask per
/// layer boundary is shared by all timesteps.
pub fn bidirectional_rnn(
    g: &mut Graph<'_>,
    inputs: &[Var],
    layers: &[BiGruParams],
    dropout: &mut Dropout<'_>,
) -> Result<BiRnnOutput> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("empty input sequence".into()));
    }
    if layers.is_empty() {
        return Err(Error::Config("at least one recurrent layer required".into()));
    }
    let mut current = inputs.to_vec();
    let mut result = None;
    for (k, layer) in layers.iter().enumerate() {
        if k > 0 {
            current = dropout.apply_sequence(g, &current, DropoutMode::Variational)?;
        }
        let forward = gru_sequence(g, &layer.forward, &current, false)?;
        let backward = gru_sequence(g, &layer.backward, &current, true)?;
        let states: Vec<Var> = forward
            .iter()
            .zip(&backward)
            .map(|(&f, &b)| g.concat(&[f, b]))
            .collect();
        current = states.clone();
        result = Some(BiRnnOutput {
            states,
            forward,
            backward,
        });
    }
    Ok(result.expect("at least one layer"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropoutMode {
    /// Fresh mask per call.
    Standard,
    /// One mask per sequence, reused at every timestep.
    Variational,
}

/// Inverted dropout. Without an RNG it is the identity (evaluation mode).
pub struct Dropout<'r> {
    rate: f64,
    rng: Option<&'r mut dyn RngCore>,
}

impl<'r> Dropout<'r> {
    pub fn new(rate: f64, rng: Option<&'r mut dyn RngCore>) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        Ok(Dropout { rate, rng })
    }

    pub fn evaluation() -> Self {
        Dropout { rate: 0.0, rng: None }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Keep-mask scaled by `1 / (1 − rate)`; `None` when dropout is inactive.
    pub fn sample_mask(&mut self, n: usize) -> Option<Rc<Vec<f64>>> {
        let rate = self.rate;
        if rate == 0.0 {
            return None;
        }
        let rng = self.rng.as_mut()?;
        let keep = 1.0 / (1.0 - rate);
        Some(Rc::new(
            (0..n)
                .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
                .collect(),
        ))
    }

    pub fn apply(&mut self, g: &mut Graph<'_>, x: Var) -> Var {
        match self.sample_mask(g.dim(x)) {
            Some(mask) => g.mask(x, mask),
            None => x,
        }
    }

    pub fn apply_sequence(
        &mut self,
        g: &mut Graph<'_>,
        xs: &[Var],
        mode: DropoutMode,
    ) -> Result<Vec<Var>> {
        match mode {
            DropoutMode::Standard => Ok(xs.iter().map(|&x| self.apply(g, x)).collect()),
            DropoutMode::Variational => {
                let Some(&first) = xs.first() else {
                    return Ok(Vec::new());
                };
                let n = g.dim(first);
                if xs.iter().any(|&x| g.dim(x) != n) {
                    return Err(Error::InvalidInput(
                        "variational dropout needs equal widths across timesteps".into(),
                    ));
                }
                match self.sample_mask(n) {
                    Some(mask) => Ok(xs.iter().map(|&x| g.mask(x, mask.clone())).collect()),
                    None => Ok(xs.to_vec()),
                }
            }
        }
    }
}

/// Stand-alone inverted dropout on a plain vector.
pub fn dropout_values(
    values: &[f64],
    rate: f64,
    rng: Option<&mut dyn RngCore>,
) -> Result<Vec<f64>> {
    let mut d = Dropout::new(rate, rng)?;
    Ok(match d.sample_mask(values.len()) {
        Some(mask) => values.iter().zip(mask.iter()).map(|(v, m)| v * m).collect(),
        None => values.to_vec(),
    })
}

/// `−log softmax(logits)[target]` and its gradient with respect to the
/// logits.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(Error::InvalidInput(format!(
            "target {target} outside {} classes",
            logits.len()
        )));
    }
    let loss = -log_softmax(logits)[target];
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    Ok((loss, grad))
}
