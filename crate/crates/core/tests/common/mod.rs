#![allow(dead_code)]

use skiplift::params::Graph;
use skiplift::{ParamStore, Result, Var};

/// Per-tensor gradient error of `loss` against central differences.
pub struct GradError {
    pub name: String,
    /// `‖ad − fd‖ / max(‖fd‖, 1e-6·|L|)`. The floor only matters for tensors
    /// whose true gradient vanishes (e.g. attention key biases, which shift
    /// every score in a row equally); there the check becomes absolute.
    pub relative: f64,
    /// Largest `|ad − fd| / (|fd| + 1e-8)` over the tensor's elements.
    pub worst_element: f64,
}

pub fn finite_difference_check(
    params: &ParamStore,
    h: f64,
    loss: impl Fn(&mut Graph) -> Result<Var>,
) -> Result<Vec<GradError>> {
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::inference(store);
        let l = loss(&mut g)?;
        Ok(g.tape.value(l).data()[0])
    };
    let (grads, value) = {
        let mut g = Graph::new(params);
        let l = loss(&mut g)?;
        let value = g.tape.value(l).data()[0];
        (g.backward(l)?, value)
    };
    let floor = 1e-6 * value.abs().max(1.0);
    let mut store = params.clone();
    let mut out = Vec::new();
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let n = store.get(&name).unwrap().len();
        let ad = grads.get(&name).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; n]);
        let mut fd = vec![0.0; n];
        for i in 0..n {
            let orig = store.get(&name).unwrap().data()[i];
            store.get_mut(&name).unwrap().data_mut()[i] = orig + h;
            let up = eval(&store)?;
            store.get_mut(&name).unwrap().data_mut()[i] = orig - h;
            let down = eval(&store)?;
            store.get_mut(&name).unwrap().data_mut()[i] = orig;
            fd[i] = (up - down) / (2.0 * h);
        }
        let diff: f64 = ad.iter().zip(&fd).map(|(a, f)| (a - f).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fd.iter().map(|f| f * f).sum::<f64>().sqrt();
        let worst = ad.iter().zip(&fd).map(|(a, f)| (a - f).abs() / (f.abs() + 1e-8)).fold(0.0, f64::max);
        out.push(GradError { name, relative: diff / norm.max(floor), worst_element: worst });
    }
    Ok(out)
}

/// Prints one PASS/FAIL line and fails the test on FAIL. The line goes
/// straight to the process stdout so the harness does not swallow it.
pub fn verdict(criterion: usize, title: &str, ok: bool, detail: &str) {
    use std::io::Write;
    let tag = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[{tag}] criterion {criterion}: {title} | {detail}");
    let _ = out.flush();
    assert!(ok, "criterion {criterion} failed: {detail}");
}
