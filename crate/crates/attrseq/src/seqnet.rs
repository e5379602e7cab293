//! Conditioned LSTM over item sequences.
//!
//! Step 1 consumes the reserved start symbol and its hidden state is shifted
//! additively by the attribute code, so every later prediction is conditioned
//! on the attributes. Step t > 1 consumes the one-hot of item t-2, and the
//! prediction at step t is scored against item t-1: each item is predicted
//! from the strict prefix before it plus the attributes, never from itself.
//!
//! All four gates use the logistic function by default; the conventional tanh
//! candidate gate is available behind [`GateActivation::Tanh`]. Gradients are
//! hand-derived backpropagation through time, validated against central
//! finite differences in the tests and in the gradient-check command.

use serde::{Deserialize, Serialize};

use crate::data::one_hot;
use crate::error::{Error, Result};
use crate::numeric::{
    glorot_uniform, orthogonal, sigmoid, softmax, tanh_vec, Matrix, RandomSource, Vector,
};

/// Activation of the candidate (g) gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateActivation {
    /// Logistic, like the other three gates.
    #[default]
    Sigmoid,
    /// The conventional LSTM candidate activation.
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceNetParams {
    pub w_i: Matrix,
    pub u_i: Matrix,
    pub b_i: Vector,
    pub w_f: Matrix,
    pub u_f: Matrix,
    pub b_f: Vector,
    pub w_o: Matrix,
    pub u_o: Matrix,
    pub b_o: Vector,
    pub w_g: Matrix,
    pub u_g: Matrix,
    pub b_g: Vector,
    pub w_y: Matrix,
    pub b_y: Vector,
    pub g_gate: GateActivation,
}

/// Gate and state values of one step.
#[derive(Debug, Clone)]
pub struct LstmStep {
    pub i: Vector,
    pub f: Vector,
    pub o: Vector,
    pub g: Vector,
    pub c: Vector,
    pub h: Vector,
}

/// Everything the backward pass needs from one sequence forward pass.
#[derive(Debug, Clone)]
pub struct SequenceForwardTrace {
    /// Input index fed at each step: the start symbol, then items[0..l-1].
    pub inputs: Vec<usize>,
    /// Item scored at each step: items[0..l].
    pub targets: Vec<usize>,
    pub gates_i: Vec<Vector>,
    pub gates_f: Vec<Vector>,
    pub gates_o: Vec<Vector>,
    pub gates_g: Vec<Vector>,
    /// Cell states c^(0..l); index 0 is the zero initial state.
    pub cells: Vec<Vector>,
    /// Hidden states h^(0..l); index 0 is the zero initial state.
    pub hiddens: Vec<Vector>,
    /// Softmax outputs y^(1..l).
    pub predictions: Vec<Vector>,
    /// The attribute code added into h^(1), when conditioning was on.
    pub condition: Option<Vector>,
}

impl SequenceNetParams {
    pub fn init(
        vocab_size: usize,
        hidden_dim: usize,
        g_gate: GateActivation,
        rng: &mut RandomSource,
    ) -> Result<Self> {
        if vocab_size < 1 || hidden_dim < 1 {
            return Err(Error::config("vocabulary size and hidden dimension must be at least 1"));
        }
        let input_width = vocab_size + 1;
        // Fixed draw order so two models built from the same seed (for example
        // the full model and its unconditioned variant) share initial weights.
        let w_i = glorot_uniform(hidden_dim, input_width, rng);
        let u_i = orthogonal(hidden_dim, rng);
        let w_f = glorot_uniform(hidden_dim, input_width, rng);
        let u_f = orthogonal(hidden_dim, rng);
        let w_o = glorot_uniform(hidden_dim, input_width, rng);
        let u_o = orthogonal(hidden_dim, rng);
        let w_g = glorot_uniform(hidden_dim, input_width, rng);
        let u_g = orthogonal(hidden_dim, rng);
        let w_y = glorot_uniform(vocab_size, hidden_dim, rng);
        Ok(SequenceNetParams {
            w_i,
            u_i,
            b_i: Vector::zeros(hidden_dim),
            w_f,
            u_f,
            b_f: Vector::zeros(hidden_dim),
            w_o,
            u_o,
            b_o: Vector::zeros(hidden_dim),
            w_g,
            u_g,
            b_g: Vector::zeros(hidden_dim),
            w_y,
            b_y: Vector::zeros(vocab_size),
            g_gate,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.b_i.dim()
    }

    pub fn vocab_size(&self) -> usize {
        self.b_y.dim()
    }

    /// r + 1: every real item plus the reserved start symbol.
    pub fn input_width(&self) -> usize {
        self.vocab_size() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.hidden_dim();
        let iw = self.input_width();
        let gates = [
            ("i", &self.w_i, &self.u_i, &self.b_i),
            ("f", &self.w_f, &self.u_f, &self.b_f),
            ("o", &self.w_o, &self.u_o, &self.b_o),
            ("g", &self.w_g, &self.u_g, &self.b_g),
        ];
        for (name, w, u, b) in gates {
            if !w.shape_consistent() || w.rows() != d || w.cols() != iw {
                return Err(Error::corrupt(format!("gate {name} input weights have wrong shape")));
            }
            if !u.shape_consistent() || u.rows() != d || u.cols() != d {
                return Err(Error::corrupt(format!(
                    "gate {name} recurrent weights have wrong shape"
                )));
            }
            if b.dim() != d {
                return Err(Error::corrupt(format!("gate {name} bias has wrong dimension")));
            }
            if !w.is_finite() || !u.is_finite() || !b.is_finite() {
                return Err(Error::corrupt(format!("gate {name} has non-finite entries")));
            }
        }
        if !self.w_y.shape_consistent()
            || self.w_y.rows() != self.vocab_size()
            || self.w_y.cols() != d
        {
            return Err(Error::corrupt("output weights have wrong shape"));
        }
        if !self.w_y.is_finite() || !self.b_y.is_finite() {
            return Err(Error::corrupt("output layer has non-finite entries"));
        }
        Ok(())
    }

    /// One LSTM step. `condition` may only be present at `t == 1`, where it is
    /// added into the hidden state after the gate arithmetic.
    pub fn step(
        &self,
        input: &Vector,
        prev_h: &Vector,
        prev_c: &Vector,
        condition: Option<&Vector>,
        t: usize,
    ) -> Result<LstmStep> {
        let d = self.hidden_dim();
        if input.dim() != self.input_width() {
            return Err(Error::input(format!(
                "step input has dimension {}, expected {}",
                input.dim(),
                self.input_width()
            )));
        }
        if prev_h.dim() != d || prev_c.dim() != d {
            return Err(Error::input("previous state dimension mismatch"));
        }
        if let Some(v) = condition {
            if t != 1 {
                return Err(Error::input("conditioning is only applied at the first step"));
            }
            if v.dim() != d {
                return Err(Error::input(format!(
                    "condition has dimension {}, hidden state has {d}",
                    v.dim()
                )));
            }
        }

        let gate = |w: &Matrix, u: &Matrix, b: &Vector| -> Vector {
            let mut z = w.matvec(input);
            z.add_scaled(1.0, &u.matvec(prev_h));
            z.add_scaled(1.0, b);
            z
        };
        let i = sigmoid(&gate(&self.w_i, &self.u_i, &self.b_i));
        let f = sigmoid(&gate(&self.w_f, &self.u_f, &self.b_f));
        let o = sigmoid(&gate(&self.w_o, &self.u_o, &self.b_o));
        let zg = gate(&self.w_g, &self.u_g, &self.b_g);
        let g = match self.g_gate {
            GateActivation::Sigmoid => sigmoid(&zg),
            GateActivation::Tanh => tanh_vec(&zg),
        };

        let mut c = f.hadamard(prev_c);
        c.add_scaled(1.0, &i.hadamard(&g));
        let mut h = o.hadamard(&tanh_vec(&c));
        if let Some(v) = condition {
            h.add_scaled(1.0, v);
        }
        Ok(LstmStep { i, f, o, g, c, h })
    }

    /// Next-item distribution from a hidden state.
    pub fn predict(&self, h: &Vector) -> Vector {
        let mut logits = self.w_y.matvec(h);
        logits.add_scaled(1.0, &self.b_y);
        softmax(&logits)
    }

    /// Forward pass over a whole sequence. Returns the trace and the summed
    /// cross-entropy of predicting each item from its strict prefix.
    pub fn forward(
        &self,
        condition: Option<&Vector>,
        items: &[usize],
    ) -> Result<(SequenceForwardTrace, f64)> {
        let l = items.len();
        if l == 0 {
            return Err(Error::input("cannot run the sequence network on an empty sequence"));
        }
        let r = self.vocab_size();
        if let Some(&bad) = items.iter().find(|&&it| it >= r) {
            return Err(Error::input(format!("item index {bad} outside vocabulary of size {r}")));
        }

        let mut trace = SequenceForwardTrace {
            inputs: Vec::with_capacity(l),
            targets: items.to_vec(),
            gates_i: Vec::with_capacity(l),
            gates_f: Vec::with_capacity(l),
            gates_o: Vec::with_capacity(l),
            gates_g: Vec::with_capacity(l),
            cells: Vec::with_capacity(l + 1),
            hiddens: Vec::with_capacity(l + 1),
            predictions: Vec::with_capacity(l),
            condition: condition.cloned(),
        };
        trace.cells.push(Vector::zeros(self.hidden_dim()));
        trace.hiddens.push(Vector::zeros(self.hidden_dim()));

        let mut loss = 0.0;
        for t in 1..=l {
            let input_idx = if t == 1 { r } else { items[t - 2] };
            let input = one_hot(input_idx, self.input_width())?;
            let step = self.step(
                &input,
                &trace.hiddens[t - 1],
                &trace.cells[t - 1],
                if t == 1 { condition } else { None },
                t,
            )?;
            let y = self.predict(&step.h);
            loss -= y.get(items[t - 1]).ln();

            trace.inputs.push(input_idx);
            trace.gates_i.push(step.i);
            trace.gates_f.push(step.f);
            trace.gates_o.push(step.o);
            trace.gates_g.push(step.g);
            trace.cells.push(step.c);
            trace.hiddens.push(step.h);
            trace.predictions.push(y);
        }
        Ok((trace, loss))
    }

    /// Backpropagation through time. Returns parameter gradients and the
    /// gradient of the loss with respect to the conditioning code (zero when
    /// the trace was unconditioned).
    pub fn backward(&self, trace: &SequenceForwardTrace) -> (SequenceNetGrads, Vector) {
        let d = self.hidden_dim();
        let l = trace.targets.len();
        assert_eq!(trace.predictions.len(), l, "stale trace");
        let mut grads = SequenceNetGrads::zeros_like(self);
        let mut code_grad = Vector::zeros(d);
        // Gradients arriving from step t+1 through the recurrence.
        let mut dh_next = Vector::zeros(d);
        let mut dc_next = Vector::zeros(d);

        for t in (1..=l).rev() {
            let y = &trace.predictions[t - 1];
            let target = trace.targets[t - 1];
            let h = &trace.hiddens[t];
            let c = &trace.cells[t];
            let prev_h = &trace.hiddens[t - 1];
            let prev_c = &trace.cells[t - 1];
            let (i, f, o, g) = (
                &trace.gates_i[t - 1],
                &trace.gates_f[t - 1],
                &trace.gates_o[t - 1],
                &trace.gates_g[t - 1],
            );

            // Softmax cross-entropy: d loss / d logits = y - onehot(target).
            let mut du = y.clone();
            du.set(target, du.get(target) - 1.0);
            grads.w_y.add_outer(1.0, &du, h);
            grads.b_y.add_scaled(1.0, &du);

            let mut dh = self.w_y.matvec_t(&du);
            dh.add_scaled(1.0, &dh_next);
            if t == 1 {
                if trace.condition.is_some() {
                    // h^(1) = o ⊙ tanh(c) + code, so the code receives dh as is.
                    code_grad = dh.clone();
                }
            }

            let tanh_c = tanh_vec(c);
            let mut dc = Vector::zeros(d);
            let mut dz_i = Vector::zeros(d);
            let mut dz_f = Vector::zeros(d);
            let mut dz_o = Vector::zeros(d);
            let mut dz_g = Vector::zeros(d);
            for n in 0..d {
                let dhn = dh.get(n);
                let d_o = dhn * tanh_c.get(n);
                dz_o.set(n, d_o * o.get(n) * (1.0 - o.get(n)));
                let mut dcn = dhn * o.get(n) * (1.0 - tanh_c.get(n) * tanh_c.get(n));
                dcn += dc_next.get(n);
                dc.set(n, dcn);
                let d_i = dcn * g.get(n);
                dz_i.set(n, d_i * i.get(n) * (1.0 - i.get(n)));
                let d_f = dcn * prev_c.get(n);
                dz_f.set(n, d_f * f.get(n) * (1.0 - f.get(n)));
                let d_g = dcn * i.get(n);
                let dzg = match self.g_gate {
                    GateActivation::Sigmoid => d_g * g.get(n) * (1.0 - g.get(n)),
                    GateActivation::Tanh => d_g * (1.0 - g.get(n) * g.get(n)),
                };
                dz_g.set(n, dzg);
            }

            let input = one_hot(trace.inputs[t - 1], self.input_width()).expect("trace input");
            grads.w_i.add_outer(1.0, &dz_i, &input);
            grads.w_f.add_outer(1.0, &dz_f, &input);
            grads.w_o.add_outer(1.0, &dz_o, &input);
            grads.w_g.add_outer(1.0, &dz_g, &input);
            grads.u_i.add_outer(1.0, &dz_i, prev_h);
            grads.u_f.add_outer(1.0, &dz_f, prev_h);
            grads.u_o.add_outer(1.0, &dz_o, prev_h);
            grads.u_g.add_outer(1.0, &dz_g, prev_h);
            grads.b_i.add_scaled(1.0, &dz_i);
            grads.b_f.add_scaled(1.0, &dz_f);
            grads.b_o.add_scaled(1.0, &dz_o);
            grads.b_g.add_scaled(1.0, &dz_g);

            dh_next = self.u_i.matvec_t(&dz_i);
            dh_next.add_scaled(1.0, &self.u_f.matvec_t(&dz_f));
            dh_next.add_scaled(1.0, &self.u_o.matvec_t(&dz_o));
            dh_next.add_scaled(1.0, &self.u_g.matvec_t(&dz_g));
            dc_next = dc.hadamard(f);
        }
        (grads, code_grad)
    }

    /// The embedding of an instance: the final cell state of a read-only
    /// forward pass, conditioned on the attribute code when one is given.
    pub fn extract_embedding(&self, condition: Option<&Vector>, items: &[usize]) -> Result<Vector> {
        let l = items.len();
        if l == 0 {
            return Err(Error::input("cannot embed an empty sequence"));
        }
        let r = self.vocab_size();
        if let Some(&bad) = items.iter().find(|&&it| it >= r) {
            return Err(Error::input(format!("item index {bad} outside vocabulary of size {r}")));
        }
        let mut h = Vector::zeros(self.hidden_dim());
        let mut c = Vector::zeros(self.hidden_dim());
        for t in 1..=l {
            let input_idx = if t == 1 { r } else { items[t - 2] };
            let input = one_hot(input_idx, self.input_width())?;
            let step = self.step(&input, &h, &c, if t == 1 { condition } else { None }, t)?;
            h = step.h;
            c = step.c;
        }
        Ok(c)
    }

    /// `params += scale · grads`; pass `-learning_rate` for a descent step.
    pub fn apply_gradients(&mut self, grads: &SequenceNetGrads, scale: f64) {
        self.w_i.add_scaled(scale, &grads.w_i);
        self.u_i.add_scaled(scale, &grads.u_i);
        self.b_i.add_scaled(scale, &grads.b_i);
        self.w_f.add_scaled(scale, &grads.w_f);
        self.u_f.add_scaled(scale, &grads.u_f);
        self.b_f.add_scaled(scale, &grads.b_f);
        self.w_o.add_scaled(scale, &grads.w_o);
        self.u_o.add_scaled(scale, &grads.u_o);
        self.b_o.add_scaled(scale, &grads.b_o);
        self.w_g.add_scaled(scale, &grads.w_g);
        self.u_g.add_scaled(scale, &grads.u_g);
        self.b_g.add_scaled(scale, &grads.b_g);
        self.w_y.add_scaled(scale, &grads.w_y);
        self.b_y.add_scaled(scale, &grads.b_y);
    }

    /// Named mutable views of every parameter buffer, in a fixed order that
    /// matches [`SequenceNetGrads::named_grads`]. Used by gradient checking.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("sequence.w_i".to_owned(), self.w_i.data_mut()),
            ("sequence.u_i".to_owned(), self.u_i.data_mut()),
            ("sequence.b_i".to_owned(), self.b_i.data_mut()),
            ("sequence.w_f".to_owned(), self.w_f.data_mut()),
            ("sequence.u_f".to_owned(), self.u_f.data_mut()),
            ("sequence.b_f".to_owned(), self.b_f.data_mut()),
            ("sequence.w_o".to_owned(), self.w_o.data_mut()),
            ("sequence.u_o".to_owned(), self.u_o.data_mut()),
            ("sequence.b_o".to_owned(), self.b_o.data_mut()),
            ("sequence.w_g".to_owned(), self.w_g.data_mut()),
            ("sequence.u_g".to_owned(), self.u_g.data_mut()),
            ("sequence.b_g".to_owned(), self.b_g.data_mut()),
            ("sequence.w_y".to_owned(), self.w_y.data_mut()),
            ("sequence.b_y".to_owned(), self.b_y.data_mut()),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct SequenceNetGrads {
    pub w_i: Matrix,
    pub u_i: Matrix,
    pub b_i: Vector,
    pub w_f: Matrix,
    pub u_f: Matrix,
    pub b_f: Vector,
    pub w_o: Matrix,
    pub u_o: Matrix,
    pub b_o: Vector,
    pub w_g: Matrix,
    pub u_g: Matrix,
    pub b_g: Vector,
    pub w_y: Matrix,
    pub b_y: Vector,
}

impl SequenceNetGrads {
    pub fn zeros_like(params: &SequenceNetParams) -> Self {
        let d = params.hidden_dim();
        let iw = params.input_width();
        let r = params.vocab_size();
        SequenceNetGrads {
            w_i: Matrix::zeros(d, iw),
            u_i: Matrix::zeros(d, d),
            b_i: Vector::zeros(d),
            w_f: Matrix::zeros(d, iw),
            u_f: Matrix::zeros(d, d),
            b_f: Vector::zeros(d),
            w_o: Matrix::zeros(d, iw),
            u_o: Matrix::zeros(d, d),
            b_o: Vector::zeros(d),
            w_g: Matrix::zeros(d, iw),
            u_g: Matrix::zeros(d, d),
            b_g: Vector::zeros(d),
            w_y: Matrix::zeros(r, d),
            b_y: Vector::zeros(r),
        }
    }

    pub fn add(&mut self, other: &SequenceNetGrads) {
        self.w_i.add_scaled(1.0, &other.w_i);
        self.u_i.add_scaled(1.0, &other.u_i);
        self.b_i.add_scaled(1.0, &other.b_i);
        self.w_f.add_scaled(1.0, &other.w_f);
        self.u_f.add_scaled(1.0, &other.u_f);
        self.b_f.add_scaled(1.0, &other.b_f);
        self.w_o.add_scaled(1.0, &other.w_o);
        self.u_o.add_scaled(1.0, &other.u_o);
        self.b_o.add_scaled(1.0, &other.b_o);
        self.w_g.add_scaled(1.0, &other.w_g);
        self.u_g.add_scaled(1.0, &other.u_g);
        self.b_g.add_scaled(1.0, &other.b_g);
        self.w_y.add_scaled(1.0, &other.w_y);
        self.b_y.add_scaled(1.0, &other.b_y);
    }

    pub fn scale(&mut self, s: f64) {
        self.w_i.scale(s);
        self.u_i.scale(s);
        self.b_i.scale(s);
        self.w_f.scale(s);
        self.u_f.scale(s);
        self.b_f.scale(s);
        self.w_o.scale(s);
        self.u_o.scale(s);
        self.b_o.scale(s);
        self.w_g.scale(s);
        self.u_g.scale(s);
        self.b_g.scale(s);
        self.w_y.scale(s);
        self.b_y.scale(s);
    }

    pub fn norm_sq(&self) -> f64 {
        self.w_i.norm_sq()
            + self.u_i.norm_sq()
            + self.b_i.norm_sq()
            + self.w_f.norm_sq()
            + self.u_f.norm_sq()
            + self.b_f.norm_sq()
            + self.w_o.norm_sq()
            + self.u_o.norm_sq()
            + self.b_o.norm_sq()
            + self.w_g.norm_sq()
            + self.u_g.norm_sq()
            + self.b_g.norm_sq()
            + self.w_y.norm_sq()
            + self.b_y.norm_sq()
    }

    /// Named views matching [`SequenceNetParams::named_params_mut`].
    pub fn named_grads(&self) -> Vec<(String, &[f64])> {
        vec![
            ("sequence.w_i".to_owned(), self.w_i.data()),
            ("sequence.u_i".to_owned(), self.u_i.data()),
            ("sequence.b_i".to_owned(), self.b_i.data()),
            ("sequence.w_f".to_owned(), self.w_f.data()),
            ("sequence.u_f".to_owned(), self.u_f.data()),
            ("sequence.b_f".to_owned(), self.b_f.data()),
            ("sequence.w_o".to_owned(), self.w_o.data()),
            ("sequence.u_o".to_owned(), self.u_o.data()),
            ("sequence.b_o".to_owned(), self.b_o.data()),
            ("sequence.w_g".to_owned(), self.w_g.data()),
            ("sequence.u_g".to_owned(), self.u_g.data()),
            ("sequence.b_g".to_owned(), self.b_g.data()),
            ("sequence.w_y".to_owned(), self.w_y.data()),
            ("sequence.b_y".to_owned(), self.b_y.data()),
        ]
    }
}
