//! Compares reverse-mode gradients of the full training loss with central
//! finite differences on a tiny model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skiplift::model::train::{sample_loss, Sample};
use skiplift::{Graph, ModelConfig, Network, Tensor};

fn main() -> skiplift::Result<()> {
    let cfg = ModelConfig::tiny();
    let net = Network::new(cfg.clone(), 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (t, j) = (cfg.frames, cfg.joints);
    let clip = Tensor::from_fn(&[t, 2 * j], |_| rng.random_range(-1.0..1.0));
    let gt = Tensor::from_fn(&[t, 3 * j], |_| rng.random_range(-300.0..300.0));
    let s = Sample { clip, target_gt: gt.row(t / 2).to_vec(), gt, target_offset: t / 2, rotated: None };

    let mut g = Graph::new(net.params());
    let (loss, parts) = sample_loss(&net, &mut g, &s)?;
    let grads = g.backward(loss)?;
    println!("loss {:.4} (target {:.4}, full {:.4})", parts.total, parts.target, parts.full);

    let h = 1e-5;
    let eval = |params: &skiplift::ParamStore| -> skiplift::Result<f64> {
        let mut g = Graph::inference(params);
        let (l, _) = sample_loss(&net, &mut g, &s)?;
        Ok(g.tape.value(l).data()[0])
    };
    let mut store = net.params().clone();
    for (name, grad) in grads.iter() {
        let mut diff = 0.0;
        let mut norm = 0.0;
        for i in 0..grad.len() {
            let orig = store.get(name).unwrap().data()[i];
            store.get_mut(name).unwrap().data_mut()[i] = orig + h;
            let up = eval(&store)?;
            store.get_mut(name).unwrap().data_mut()[i] = orig - h;
            let down = eval(&store)?;
            store.get_mut(name).unwrap().data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            diff += (grad.data()[i] - fd).powi(2);
            norm += fd * fd;
        }
        println!("{name:<28} relative error {:.2e}", diff.sqrt() / (norm.sqrt() + 1e-8));
    }
    Ok(())
}
