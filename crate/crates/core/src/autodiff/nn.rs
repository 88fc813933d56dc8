//! Multilayer perceptrons and LSTM stacks recorded on a [`Tape`].

use serde::{Deserialize, Serialize};

use super::params::ParamVector;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Fully connected ReLU network. `hidden_layers = 0` is a single affine map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub in_dim: usize,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub out_dim: usize,
    #[serde(default)]
    pub dropout: f64,
}

impl MlpSpec {
    pub fn new(in_dim: usize, hidden_layers: usize, hidden_units: usize, out_dim: usize) -> Self {
        Self { in_dim, hidden_layers, hidden_units, out_dim, dropout: 0.0 }
    }

    pub fn linear(in_dim: usize, out_dim: usize) -> Self {
        Self::new(in_dim, 0, 1, out_dim)
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Config("MLP input and output dims must be positive".into()));
        }
        if self.hidden_layers > 0 && self.hidden_units == 0 {
            return Err(Error::Config("MLP needs at least one hidden unit".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of each affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        if self.hidden_layers == 0 {
            return vec![(self.in_dim, self.out_dim)];
        }
        let mut dims = vec![(self.in_dim, self.hidden_units)];
        dims.extend((1..self.hidden_layers).map(|_| (self.hidden_units, self.hidden_units)));
        dims.push((self.hidden_units, self.out_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn register(&self, params: &mut ParamVector, prefix: &str) -> Result<()> {
        self.validate()?;
        for (l, (i, o)) in self.layer_dims().into_iter().enumerate() {
            params.register(format!("{prefix}.l{l}.w"), i * o)?;
            params.register(format!("{prefix}.l{l}.b"), o)?;
        }
        Ok(())
    }

    /// Forward pass on a `batch × in_dim` input.
    pub fn forward(
        &self,
        params: &ParamVector,
        prefix: &str,
        x: &Var,
        training: bool,
        rng: Option<&mut SeededRng>,
    ) -> Result<Var> {
        let tape = x.tape();
        let ws = self.leaves(params, prefix, &tape)?;
        self.forward_with(&ws, x, training, rng)
    }

    /// Records the weight leaves once so repeated applications (one per
    /// integration step) share them.
    pub fn leaves(&self, params: &ParamVector, prefix: &str, tape: &Tape) -> Result<Vec<(Var, Var)>> {
        self.layer_dims()
            .into_iter()
            .enumerate()
            .map(|(l, (i, o))| {
                Ok((
                    params.leaf(tape, &format!("{prefix}.l{l}.w"), i, o)?,
                    params.leaf(tape, &format!("{prefix}.l{l}.b"), 1, o)?,
                ))
            })
            .collect()
    }

    pub fn forward_with(
        &self,
        weights: &[(Var, Var)],
        x: &Var,
        training: bool,
        mut rng: Option<&mut SeededRng>,
    ) -> Result<Var> {
        if x.cols() != self.in_dim {
            return Err(Error::Shape(format!("MLP expects {} inputs, got {}", self.in_dim, x.cols())));
        }
        let last = weights.len() - 1;
        let mut h = x.clone();
        for (l, (w, b)) in weights.iter().enumerate() {
            h = h.matmul(w) + b;
            if l < last {
                h = h.relu();
                if training && self.dropout > 0.0 {
                    let r = rng
                        .as_deref_mut()
                        .ok_or_else(|| Error::Config("dropout in training mode needs an rng".into()))?;
                    h = dropout(&h, self.dropout, r);
                }
            }
        }
        Ok(h)
    }
}

/// Inverted dropout: kept activations are scaled by `1 / (1 - p)`.
pub fn dropout(h: &Var, p: f64, rng: &mut SeededRng) -> Var {
    if p == 0.0 {
        return h.clone();
    }
    let (rows, cols) = h.shape();
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..rows * cols).map(|_| if rng.bernoulli(p) { 0.0 } else { keep }).collect();
    h * h.tape().constant(Tensor::new(rows, cols, mask))
}

/// Evaluates an MLP on one input vector.
pub fn mlp_forward(
    spec: &MlpSpec,
    params: &ParamVector,
    prefix: &str,
    input: &[f64],
    training: bool,
    rng: Option<&mut SeededRng>,
) -> Result<Vec<f64>> {
    if input.len() != spec.in_dim {
        return Err(Error::Shape(format!("MLP expects {} inputs, got {}", spec.in_dim, input.len())));
    }
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite MLP input".into()));
    }
    let tape = Tape::new();
    let x = tape.constant(Tensor::row(input.to_vec()));
    Ok(spec.forward(params, prefix, &x, training, rng)?.value().into_data())
}

/// Stacked LSTM with input, forget, candidate and output gates (in that
/// column order inside the fused weight matrices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmSpec {
    pub layers: usize,
    pub in_dim: usize,
    pub hidden: usize,
}

/// Final per-layer states and the top layer's per-step outputs.
#[derive(Debug, Clone)]
pub struct LstmOutput {
    pub h: Vec<Var>,
    pub c: Vec<Var>,
    pub outputs: Vec<Var>,
}

impl LstmOutput {
    pub fn top_h(&self) -> &Var {
        self.h.last().expect("at least one layer")
    }

    pub fn top_c(&self) -> &Var {
        self.c.last().expect("at least one layer")
    }
}

impl LstmSpec {
    pub fn new(layers: usize, in_dim: usize, hidden: usize) -> Self {
        Self { layers, in_dim, hidden }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.in_dim == 0 {
            return Err(Error::Config("LSTM needs layers, inputs and hidden units".into()));
        }
        Ok(())
    }

    fn layer_in(&self, k: usize) -> usize {
        if k == 0 {
            self.in_dim
        } else {
            self.hidden
        }
    }

    pub fn param_count(&self) -> usize {
        let g = 4 * self.hidden;
        (0..self.layers).map(|k| self.layer_in(k) * g + self.hidden * g + g).sum()
    }

    pub fn register(&self, params: &mut ParamVector, prefix: &str) -> Result<()> {
        self.validate()?;
        let g = 4 * self.hidden;
        for k in 0..self.layers {
            params.register(format!("{prefix}.l{k}.wx"), self.layer_in(k) * g)?;
            params.register(format!("{prefix}.l{k}.wh"), self.hidden * g)?;
            params.register(format!("{prefix}.l{k}.b"), g)?;
        }
        Ok(())
    }

    /// Runs the stack over `seq` (each element `batch × in_dim`). `init`
    /// supplies per-layer `(h, c)`; zeros otherwise. Dropout `p` is applied
    /// between layers in training mode.
    pub fn forward(
        &self,
        params: &ParamVector,
        prefix: &str,
        seq: &[Var],
        init: Option<(&[Var], &[Var])>,
        dropout_p: f64,
        training: bool,
        mut rng: Option<&mut SeededRng>,
    ) -> Result<LstmOutput> {
        let first = seq.first().ok_or_else(|| Error::Input("empty LSTM input sequence".into()))?;
        let tape = first.tape();
        let batch = first.rows();
        let d = self.hidden;
        let mut hs = Vec::with_capacity(self.layers);
        let mut cs = Vec::with_capacity(self.layers);
        let mut inputs: Vec<Var> = seq.to_vec();
        for x in &inputs {
            if x.cols() != self.in_dim {
                return Err(Error::Shape(format!("LSTM expects {} inputs, got {}", self.in_dim, x.cols())));
            }
        }
        for k in 0..self.layers {
            let wx = params.leaf(&tape, &format!("{prefix}.l{k}.wx"), self.layer_in(k), 4 * d)?;
            let wh = params.leaf(&tape, &format!("{prefix}.l{k}.wh"), d, 4 * d)?;
            let b = params.leaf(&tape, &format!("{prefix}.l{k}.b"), 1, 4 * d)?;
            let (mut h, mut c) = match init {
                Some((h0, c0)) => (h0[k].clone(), c0[k].clone()),
                None => (tape.constant(Tensor::zeros(batch, d)), tape.constant(Tensor::zeros(batch, d))),
            };
            let mut outs = Vec::with_capacity(inputs.len());
            for x in &inputs {
                let z = x.matmul(&wx) + h.matmul(&wh) + &b;
                let i = z.slice_cols(0, d).sigmoid();
                let f = z.slice_cols(d, d).sigmoid();
                let g = z.slice_cols(2 * d, d).tanh();
                let o = z.slice_cols(3 * d, d).sigmoid();
                c = &f * &c + &i * &g;
                h = &o * &c.tanh();
                outs.push(h.clone());
            }
            if training && dropout_p > 0.0 && k + 1 < self.layers {
                let r =
                    rng.as_deref_mut().ok_or_else(|| Error::Config("dropout in training mode needs an rng".into()))?;
                outs = outs.iter().map(|o| dropout(o, dropout_p, r)).collect();
            }
            hs.push(h);
            cs.push(c);
            inputs = outs;
        }
        Ok(LstmOutput { h: hs, c: cs, outputs: inputs })
    }
}

/// Final top-layer `(h, c)` and per-step outputs for a single sequence.
pub fn lstm_forward(
    spec: &LstmSpec,
    params: &ParamVector,
    prefix: &str,
    sequence: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    if sequence.is_empty() {
        return Err(Error::Input("empty LSTM input sequence".into()));
    }
    let tape = Tape::new();
    let seq: Vec<Var> = sequence.iter().map(|s| tape.constant(Tensor::row(s.clone()))).collect();
    let out = spec.forward(params, prefix, &seq, None, 0.0, false, None)?;
    Ok((
        out.top_h().value().into_data(),
        out.top_c().value().into_data(),
        out.outputs.iter().map(|o| o.value().into_data()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_zero_output() {
        let spec = MlpSpec::new(3, 2, 4, 2);
        let mut p = ParamVector::new();
        spec.register(&mut p, "m").unwrap();
        assert_eq!(mlp_forward(&spec, &p, "m", &[1.0, -2.0, 3.0], false, None).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer() {
        let spec = MlpSpec::linear(2, 2);
        let mut p = ParamVector::new();
        spec.register(&mut p, "m").unwrap();
        p.slice_mut("m.l0.w").unwrap().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(mlp_forward(&spec, &p, "m", &[1.5, -2.0], false, None).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn relu_pair_reconstructs_identity() {
        // hidden units relu(x), relu(-x); output weights (1, -1)
        let spec = MlpSpec::new(1, 1, 2, 1);
        let mut p = ParamVector::new();
        spec.register(&mut p, "m").unwrap();
        p.slice_mut("m.l0.w").unwrap().copy_from_slice(&[1.0, -1.0]);
        p.slice_mut("m.l1.w").unwrap().copy_from_slice(&[1.0, -1.0]);
        for x in [0.7, -0.7] {
            let y = mlp_forward(&spec, &p, "m", &[x], false, None).unwrap()[0];
            assert!((y - x).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_and_numeric_errors() {
        let spec = MlpSpec::new(2, 1, 3, 1);
        let mut p = ParamVector::new();
        spec.register(&mut p, "m").unwrap();
        assert!(matches!(mlp_forward(&spec, &p, "m", &[1.0], false, None), Err(Error::Shape(_))));
        assert!(matches!(mlp_forward(&spec, &p, "m", &[1.0, f64::NAN], false, None), Err(Error::Numeric(_))));
    }

    #[test]
    fn zero_dropout_is_identity() {
        let tape = Tape::new();
        let h = tape.constant(Tensor::row(vec![1.0, -2.0, 3.0]));
        let mut rng = SeededRng::new(3);
        assert_eq!(dropout(&h, 0.0, &mut rng).value(), h.value());
    }

    #[test]
    fn param_count_matches_layout() {
        let spec = MlpSpec::new(3, 2, 16, 1);
        assert_eq!(spec.param_count(), 3 * 16 + 16 + 16 * 16 + 16 + 16 + 1);
        let mut p = ParamVector::new();
        spec.register(&mut p, "m").unwrap();
        assert_eq!(p.len(), 353);
        let l = LstmSpec::new(2, 3, 4);
        let mut q = ParamVector::new();
        l.register(&mut q, "e").unwrap();
        assert_eq!(q.len(), l.param_count());
    }

    #[test]
    fn lstm_zero_weights_stay_at_zero() {
        let spec = LstmSpec::new(2, 2, 3);
        let mut p = ParamVector::new();
        spec.register(&mut p, "e").unwrap();
        let seq = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, 3.0]];
        let (h, c, outs) = lstm_forward(&spec, &p, "e", &seq).unwrap();
        assert!(h.iter().chain(&c).all(|&v| v == 0.0));
        assert!(outs.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_empty_sequence_is_an_input_error() {
        let spec = LstmSpec::new(1, 2, 3);
        let mut p = ParamVector::new();
        spec.register(&mut p, "e").unwrap();
        assert!(matches!(lstm_forward(&spec, &p, "e", &[]), Err(Error::Input(_))));
    }

    #[test]
    fn lstm_single_step_matches_cell_equations() {
        let spec = LstmSpec::new(1, 1, 1);
        let mut p = ParamVector::new();
        spec.register(&mut p, "e").unwrap();
        // gates i, f, g, o
        p.slice_mut("e.l0.wx").unwrap().copy_from_slice(&[0.5, -0.3, 0.8, 0.2]);
        p.slice_mut("e.l0.b").unwrap().copy_from_slice(&[0.1, 0.0, -0.1, 0.05]);
        let x = 0.7;
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.5 * x + 0.1);
        let g = (0.8 * x - 0.1f64).tanh();
        let o = sig(0.2 * x + 0.05);
        let c = i * g;
        let h = o * c.tanh();
        let (hh, cc, _) = lstm_forward(&spec, &p, "e", &[vec![x]]).unwrap();
        assert!((hh[0] - h).abs() < 1e-15 && (cc[0] - c).abs() < 1e-15);
    }

    #[test]
    fn lstm_is_order_sensitive() {
        let spec = LstmSpec::new(2, 2, 3);
        let mut p = ParamVector::new();
        spec.register(&mut p, "e").unwrap();
        let mut rng = SeededRng::new(11);
        for v in p.values_mut() {
            *v = rng.uniform(-0.5, 0.5);
        }
        let a = vec![vec![1.0, -0.5], vec![0.2, 0.9]];
        let b = vec![a[1].clone(), a[0].clone()];
        let (ha, ca, _) = lstm_forward(&spec, &p, "e", &a).unwrap();
        let (hb, cb, _) = lstm_forward(&spec, &p, "e", &b).unwrap();
        assert_ne!(ha, hb);
        assert_ne!(ca, cb);
    }
}
