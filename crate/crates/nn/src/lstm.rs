//! Single-layer bidirectional LSTM.

use rand::Rng;

use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::layers::INIT_STD;
use crate::tensor::{ParamId, ParamStore, Tensor};

/// One LSTM direction. Gate blocks are laid out as input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub input_weight: ParamId,
    pub hidden_weight: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            input_weight: store.add(
                format!("{name}.input_weight"),
                Tensor::truncated_normal(vec![input_dim, 4 * hidden], INIT_STD, rng),
            ),
            hidden_weight: store.add(
                format!("{name}.hidden_weight"),
                Tensor::truncated_normal(vec![hidden, 4 * hidden], INIT_STD, rng),
            ),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(vec![4 * hidden])),
            hidden,
        }
    }

    /// Runs over rows `order` of the pre-projected inputs `[n, 4h]`, returning
    /// one hidden state per visited row, in visiting order.
    fn run(&self, g: &mut Graph, projected: Var, order: impl Iterator<Item = usize>) -> Result<Vec<Var>> {
        let h = self.hidden;
        let w_hh = g.param(self.hidden_weight);
        let mut state: Option<(Var, Var)> = None;
        let mut outputs = Vec::new();
        for t in order {
            let mut gates = g.row(projected, t)?;
            if let Some((prev_h, _)) = state {
                let rec = g.matmul(prev_h, w_hh)?;
                gates = g.add(gates, rec)?;
            }
            let sig = g.sigmoid(gates);
            let input_gate = g.slice_cols(sig, 0, h)?;
            let forget_gate = g.slice_cols(sig, h, h)?;
            let output_gate = g.slice_cols(sig, 3 * h, h)?;
            let candidate = g.slice_cols(gates, 2 * h, h)?;
            let candidate = g.tanh(candidate);
            let mut cell = g.mul(input_gate, candidate)?;
            if let Some((_, prev_c)) = state {
                let kept = g.mul(forget_gate, prev_c)?;
                cell = g.add(cell, kept)?;
            }
            let squashed = g.tanh(cell);
            let hidden = g.mul(output_gate, squashed)?;
            outputs.push(hidden);
            state = Some((hidden, cell));
        }
        Ok(outputs)
    }
}

#[derive(Debug, Clone)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
    pub input_dim: usize,
    pub hidden: usize,
}

/// Output of [`BiLstm::forward`].
#[derive(Debug, Clone, Copy)]
pub struct BiLstmOutput {
    /// `[n, 2·hidden]`: forward state then backward state for each position.
    pub states: Var,
    /// Forward state after the last unpadded position, `[1, hidden]`.
    pub final_forward: Var,
    /// Backward state after reaching position 0, `[1, hidden]`.
    pub final_backward: Var,
}

impl BiLstm {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            forward: LstmCell::new(store, &format!("{name}.forward"), input_dim, hidden, rng),
            backward: LstmCell::new(store, &format!("{name}.backward"), input_dim, hidden, rng),
            input_dim,
            hidden,
        }
    }

    /// `valid_len` limits both directions to the first rows; states beyond it are zero.
    pub fn forward(&self, g: &mut Graph, seq: Var, valid_len: Option<usize>) -> Result<BiLstmOutput> {
        let (n, k) = g.dims(seq);
        if n == 0 {
            return Err(NnError::EmptySequence { op: "bilstm" });
        }
        if k != self.input_dim {
            return Err(NnError::Shape {
                op: "bilstm",
                axis: 1,
                expected: self.input_dim,
                found: k,
            });
        }
        let len = valid_len.unwrap_or(n);
        if len == 0 {
            return Err(NnError::EmptySequence { op: "bilstm" });
        }
        if len > n {
            return Err(NnError::Shape {
                op: "bilstm",
                axis: 0,
                expected: n,
                found: len,
            });
        }
        let fwd_proj = project(g, &self.forward, seq)?;
        let bwd_proj = project(g, &self.backward, seq)?;
        let fwd = self.forward.run(g, fwd_proj, 0..len)?;
        let mut bwd = self.backward.run(g, bwd_proj, (0..len).rev())?;
        let final_forward = *fwd.last().expect("len >= 1");
        let final_backward = *bwd.last().expect("len >= 1");
        bwd.reverse();

        let mut fwd_rows = fwd;
        if len < n {
            let pad = g.input(n - len, self.hidden, vec![0.0; (n - len) * self.hidden])?;
            fwd_rows.push(pad);
            bwd.push(pad);
        }
        let fwd_states = g.concat_rows(&fwd_rows)?;
        let bwd_states = g.concat_rows(&bwd)?;
        let states = g.concat_cols(&[fwd_states, bwd_states])?;
        Ok(BiLstmOutput {
            states,
            final_forward,
            final_backward,
        })
    }
}

fn project(g: &mut Graph, cell: &LstmCell, seq: Var) -> Result<Var> {
    let w = g.param(cell.input_weight);
    let b = g.param(cell.bias);
    let x = g.matmul(seq, w)?;
    g.add_row(x, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let lstm = BiLstm::new(&mut store, "l", 3, 2, &mut rng);
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let mut g = Graph::new(&store);
        let x = g.input(4, 3, vec![0.7; 12]).unwrap();
        let out = lstm.forward(&mut g, x, None).unwrap();
        assert_eq!(g.dims(out.states), (4, 4));
        assert!(g.value(out.states).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let lstm = BiLstm::new(&mut store, "l", 3, 2, &mut rng);
        let mut g = Graph::new(&store);
        let x = g.input(0, 3, vec![]).unwrap();
        assert!(matches!(
            lstm.forward(&mut g, x, None),
            Err(NnError::EmptySequence { .. })
        ));
    }

    #[test]
    fn padded_positions_do_not_leak() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let lstm = BiLstm::new(&mut store, "l", 2, 3, &mut rng);
        let data: Vec<f64> = (0..6).map(|i| i as f64 * 0.3 - 0.5).collect();
        let mut padded = data.clone();
        padded.extend([9.0, -9.0, 4.0, 4.0]);

        let mut g = Graph::new(&store);
        let a = g.input(3, 2, data).unwrap();
        let b = g.input(5, 2, padded).unwrap();
        let oa = lstm.forward(&mut g, a, None).unwrap();
        let ob = lstm.forward(&mut g, b, Some(3)).unwrap();
        assert_eq!(g.value(oa.final_forward), g.value(ob.final_forward));
        assert_eq!(g.value(oa.final_backward), g.value(ob.final_backward));
        assert_eq!(g.value(oa.states), &g.value(ob.states)[..18]);
        assert!(g.value(ob.states)[18..].iter().all(|&v| v == 0.0));
    }
}
