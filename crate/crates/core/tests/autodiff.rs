mod common;

use common::finite_difference_check;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skiplift::params::Graph;
use skiplift::{Error, ParamStore, Result, Tape, Tensor, Var};

fn store(shapes: &[(&str, &[usize])], seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    for (name, shape) in shapes {
        s.insert(*name, Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)));
    }
    s
}

fn assert_grads(params: &ParamStore, loss: impl Fn(&mut Graph) -> Result<Var>) {
    for e in finite_difference_check(params, 1e-6, loss).unwrap() {
        assert!(e.relative < 1e-6, "{}: relative error {:.3e}", e.name, e.relative);
    }
}

// weighted sum so that every output element matters differently
fn probe(g: &mut Graph, y: Var) -> Result<Var> {
    let shape = g.tape.shape(y).to_vec();
    let w = Tensor::from_fn(&shape, |i| ((i * 7 % 11) as f64 - 5.0) / 3.0);
    let w = g.constant(w);
    let p = g.tape.mul(y, w)?;
    g.tape.sum(p)
}

#[test]
fn matmul_and_bias() {
    let p = store(&[("a", &[3, 4]), ("b", &[4, 5]), ("c", &[5])], 1);
    assert_grads(&p, |g| {
        let (a, b, c) = (g.p("a")?, g.p("b")?, g.p("c")?);
        let y = g.tape.matmul(a, b)?;
        let y = g.tape.add_bias(y, c)?;
        probe(g, y)
    });
}

#[test]
fn batched_products_with_transpose() {
    let p = store(&[("q", &[2, 3, 4]), ("k", &[2, 5, 4])], 2);
    assert_grads(&p, |g| {
        let (q, k) = (g.p("q")?, g.p("k")?);
        let s = g.tape.batch_matmul(q, k, true)?;
        let s = g.tape.softmax(s, 2)?;
        let v = g.tape.batch_matmul(s, k, false)?;
        probe(g, v)
    });
}

#[test]
fn nonlinearities() {
    let p = store(&[("x", &[4, 6])], 3);
    assert_grads(&p, |g| {
        let x = g.p("x")?;
        let a = g.tape.gelu(x)?;
        let b = g.tape.sigmoid(x)?;
        let c = g.tape.abs(x)?;
        let d = g.tape.square(x)?;
        let ab = g.tape.add(a, b)?;
        let cd = g.tape.sub(c, d)?;
        let y = g.tape.mul(ab, cd)?;
        probe(g, y)
    });
}

#[test]
fn sqrt_of_positive_values() {
    let p = store(&[("x", &[3, 3])], 4);
    assert_grads(&p, |g| {
        let x = g.p("x")?;
        let x2 = g.tape.square(x)?;
        let one = g.constant(Tensor::full(&[3, 3], 1.0));
        let y = g.tape.add(x2, one)?;
        let y = g.tape.sqrt(y)?;
        probe(g, y)
    });
}

#[test]
fn layer_norm_gain_and_bias() {
    let p = store(&[("x", &[5, 8]), ("n.gain", &[8]), ("n.bias", &[8])], 5);
    assert_grads(&p, |g| {
        let x = g.p("x")?;
        let y = g.layer_norm(x, "n")?;
        probe(g, y)
    });
}

#[test]
fn shape_ops() {
    let p = store(&[("x", &[4, 6]), ("z", &[2, 6])], 6);
    assert_grads(&p, |g| {
        let (x, z) = (g.p("x")?, g.p("z")?);
        let rows = g.tape.gather_rows_padded(x, &[Some(3), None, Some(0), Some(3)])?;
        let stacked = g.tape.concat_rows(&[rows, z])?;
        let left = g.tape.slice_cols(stacked, 1, 3)?;
        let right = g.tape.slice_cols(stacked, 3, 3)?;
        let wide = g.tape.concat_cols(&[left, right])?;
        let t = g.tape.transpose(wide)?;
        let r = g.tape.reshape(t, &[3, 2, 6])?;
        let r = g.tape.permute(r, &[2, 0, 1])?;
        let s = g.tape.sum_last(r)?;
        let s = g.tape.scale(s, 0.5)?;
        probe(g, s)
    });
}

#[test]
fn mean_reduction() {
    let p = store(&[("x", &[7])], 7);
    assert_grads(&p, |g| {
        let x = g.p("x")?;
        let x2 = g.tape.square(x)?;
        g.tape.mean(x2)
    });
}

#[test]
fn gather_then_inverse_is_identity() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::from_fn(&[5, 2], |i| i as f64));
    let perm = [2, 4, 0, 3, 1];
    let mut inv = [0; 5];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    let y = tape.gather_rows(x, &perm).unwrap();
    let back = tape.gather_rows(y, &inv).unwrap();
    assert_eq!(tape.value(back), tape.value(x));
}

#[test]
fn shared_input_accumulates_gradient() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::from_fn(&[3], |i| i as f64 + 1.0));
    let y = tape.mul(x, x).unwrap();
    let y = tape.add(y, x).unwrap();
    let s = tape.sum(y).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[3.0, 5.0, 7.0]);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::zeros(&[2, 2]));
    assert!(matches!(tape.backward(x), Err(Error::Tape(_))));
}

#[test]
fn shape_mismatch_is_an_error() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    assert!(matches!(tape.matmul(a, b), Err(Error::Shape(_))));
    assert!(matches!(tape.gather_rows(a, &[2]), Err(Error::Index(_))));
}

#[test]
fn flops_follow_scopes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[4, 8]));
    let b = tape.constant(Tensor::zeros(&[8, 3]));
    tape.set_scope("first");
    let ab = tape.matmul(a, b).unwrap();
    let prev = tape.set_scope("second");
    assert_eq!(prev, "first");
    let c = tape.constant(Tensor::zeros(&[3, 5]));
    tape.matmul(ab, c).unwrap();
    assert_eq!(tape.flops().macs("first"), 4 * 8 * 3);
    assert_eq!(tape.flops().macs("second"), 4 * 3 * 5);
    assert_eq!(tape.flops().total_macs(), 96 + 60);
}

#[test]
fn inference_graph_leaves_no_gradients() {
    let p = store(&[("w", &[2, 2])], 8);
    let mut g = Graph::inference(&p);
    let w = g.p("w").unwrap();
    let s = g.tape.sum(w).unwrap();
    g.tape.backward(s).unwrap();
    assert!(g.tape.grad(w).is_none());
}
