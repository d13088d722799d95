//! Finite-difference gradient checks for every layer type, as plain functions
//! returning one report per check.

use relsrl_nn::gradcheck::{check_input, check_params, GradCheckReport};
use relsrl_nn::{BiLstm, Encoder, EncoderConfig, Graph, Mlp, MultiHeadAttention, ParamStore, Result, Var};

use super::{random_vec, rng};

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub type Checks = Vec<(&'static str, GradCheckReport)>;

fn randomize(store: &mut ParamStore, seed: u64, scale: f64) {
    let mut r = rng(seed);
    for id in store.ids().collect::<Vec<_>>() {
        let n = store.get(id).len();
        store.get_mut(id).data_mut().copy_from_slice(&random_vec(&mut r, n, scale));
    }
}

/// Projects a matrix to a scalar with fixed random weights so every entry matters.
fn weighted_sum(g: &mut Graph, x: Var, seed: u64) -> Result<Var> {
    let (r, c) = g.dims(x);
    let w = g.input(r, c, random_vec(&mut rng(seed), r * c, 1.0))?;
    let p = g.mul(x, w)?;
    Ok(g.sum(p))
}

pub fn elementwise_ops() -> Checks {
    let mut out = Checks::new();
    let store = ParamStore::new();
    let x = random_vec(&mut rng(1), 12, 2.0);
    let r = check_input(&store, 3, 4, &x, STEP, |g, v| {
        let a = g.sigmoid(v);
        let b = g.tanh(v);
        let c = g.gelu(v);
        let d = g.relu(v);
        let s = g.add(a, b)?;
        let s = g.mul(s, c)?;
        let s = g.add(s, d)?;
        let t = g.transpose(s);
        let t = g.scale(t, 0.7);
        weighted_sum(g, t, 2)
    })
    .unwrap();
    out.push(("elementwise", r));
    out
}

pub fn structural_ops() -> Checks {
    let mut out = Checks::new();
    let store = ParamStore::new();
    let x = random_vec(&mut rng(3), 12, 1.0);
    let r = check_input(&store, 3, 4, &x, STEP, |g, v| {
        let a = g.slice_cols(v, 1, 2)?;
        let b = g.slice_rows(v, 1, 2)?;
        let c = g.matmul(a, b)?;
        let d = g.concat_cols(&[c, a])?;
        let e = g.concat_rows(&[d, d])?;
        let f = g.reshape(e, 4, 9)?;
        let row = g.row(v, 0)?;
        let gathered = g.gather(v, &[2, 0, 2])?;
        let h = g.add_row(gathered, row)?;
        let s1 = weighted_sum(g, f, 4)?;
        let s2 = weighted_sum(g, h, 5)?;
        g.add(s1, s2)
    })
    .unwrap();
    out.push(("structural", r));
    out
}

pub fn layer_norm_and_softmax() -> Checks {
    let mut out = Checks::new();
    let mut store = ParamStore::new();
    let ln = relsrl_nn::LayerNorm::new(&mut store, "ln", 5);
    randomize(&mut store, 6, 1.0);
    let x = random_vec(&mut rng(7), 15, 2.0);
    let loss = |g: &mut Graph, v: Var| {
        let y = ln.forward(g, v)?;
        let s = g.masked_softmax(y, &[true, false, true, true, true])?;
        weighted_sum(g, s, 8)
    };
    out.push(("layer_norm input", check_input(&store, 3, 5, &x, STEP, loss).unwrap()));
    let r = check_params(&mut store, STEP, |_| true, |g| {
        let v = g.input(3, 5, x.clone())?;
        loss(g, v)
    })
    .unwrap();
    out.push(("layer_norm params", r));
    out
}

pub fn cross_entropy_gradient() -> Checks {
    let mut out = Checks::new();
    let store = ParamStore::new();
    let x = random_vec(&mut rng(9), 12, 3.0);
    let r = check_input(&store, 3, 4, &x, STEP, |g, v| g.cross_entropy(v, &[1, 3, 0], &[true, false, true])).unwrap();
    out.push(("cross_entropy", r));
    out
}

pub fn attention_gradient() -> Checks {
    let mut out = Checks::new();
    let mut store = ParamStore::new();
    let attn = MultiHeadAttention::new(&mut store, "attn", 8, 2, &mut rng(10)).unwrap();
    randomize(&mut store, 11, 0.5);
    let x = random_vec(&mut rng(12), 32, 1.0);
    let mask = [true, true, true, false];
    let loss = |g: &mut Graph, v: Var| {
        let y = attn.forward(g, v, &mask)?;
        weighted_sum(g, y, 13)
    };
    out.push(("attention input", check_input(&store, 4, 8, &x, STEP, loss).unwrap()));
    let r = check_params(&mut store, STEP, |_| true, |g| {
        let v = g.input(4, 8, x.clone())?;
        loss(g, v)
    })
    .unwrap();
    out.push(("attention params", r));
    out
}

pub fn encoder_gradient() -> Checks {
    let mut out = Checks::new();
    let mut store = ParamStore::new();
    let mut cfg = EncoderConfig::tiny(12);
    cfg.layers = 2;
    cfg.dropout = 0.0;
    let enc = Encoder::new(&mut store, "enc", cfg, &mut rng(14)).unwrap();
    randomize(&mut store, 15, 0.5);
    let r = check_params(&mut store, STEP, |_| true, |g| {
        let h = enc.forward(g, &[3, 7, 1, 11, 0], &[0, 0, 0, 1, 1], &[true, true, true, true, false])?;
        weighted_sum(g, h, 16)
    })
    .unwrap();
    out.push(("encoder", r));
    out
}

pub fn bilstm_gradient() -> Checks {
    let mut out = Checks::new();
    let mut store = ParamStore::new();
    let lstm = BiLstm::new(&mut store, "lstm", 3, 4, &mut rng(17));
    randomize(&mut store, 18, 0.7);
    let x = random_vec(&mut rng(19), 15, 1.0);
    let loss = |g: &mut Graph, v: Var| {
        let out = lstm.forward(g, v, Some(4))?;
        let a = weighted_sum(g, out.states, 20)?;
        let fin = g.concat_cols(&[out.final_forward, out.final_backward])?;
        let b = weighted_sum(g, fin, 21)?;
        g.add(a, b)
    };
    out.push(("bilstm input", check_input(&store, 5, 3, &x, STEP, loss).unwrap()));
    let r = check_params(&mut store, STEP, |_| true, |g| {
        let v = g.input(5, 3, x.clone())?;
        loss(g, v)
    })
    .unwrap();
    out.push(("bilstm params", r));
    out
}

pub fn mlp_gradient() -> Checks {
    let mut out = Checks::new();
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "mlp", 6, 8, 5, &mut rng(22)).unwrap();
    randomize(&mut store, 23, 0.8);
    let x = random_vec(&mut rng(24), 12, 1.0);
    let loss = |g: &mut Graph, v: Var| {
        let y = mlp.forward(g, v)?;
        g.cross_entropy(y, &[4, 1], &[true, true])
    };
    out.push(("mlp input", check_input(&store, 2, 6, &x, STEP, loss).unwrap()));
    let r = check_params(&mut store, STEP, |_| true, |g| {
        let v = g.input(2, 6, x.clone())?;
        loss(g, v)
    })
    .unwrap();
    out.push(("mlp params", r));
    out
}

/// Every layer check, in a fixed order.
pub fn all() -> Checks {
    let mut out = Checks::new();
    out.extend(elementwise_ops());
    out.extend(structural_ops());
    out.extend(layer_norm_and_softmax());
    out.extend(cross_entropy_gradient());
    out.extend(attention_gradient());
    out.extend(encoder_gradient());
    out.extend(bilstm_gradient());
    out.extend(mlp_gradient());
    out
}
