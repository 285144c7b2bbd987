//! Reverse-mode gradients of a two-layer network checked against central
//! finite differences.

use acdistill::diffcore::{Graph, ParamStore, Tensor};
use acdistill::error::Result;

fn loss(store: &ParamStore, x: &Tensor, target: &[f32]) -> Result<(Graph, acdistill::diffcore::Var)> {
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let (w1, b1) = (g.param(store, "w1")?, g.param(store, "b1")?);
    let (w2, b2) = (g.param(store, "w2")?, g.param(store, "b2")?);
    let h = g.linear(xv, w1, b1, "l1")?;
    let h = g.tanh(h);
    let z = g.linear(h, w2, b2, "l2")?;
    let l = g.bce_with_logits(z, target.to_vec())?;
    Ok((g, l))
}

fn main() -> Result<()> {
    let mut store = ParamStore::new();
    store.insert("w1", Tensor::new(vec![3, 4], (0..12).map(|i| (i as f32 * 0.37).sin()).collect())?)?;
    store.insert("b1", Tensor::new(vec![4], vec![0.1, -0.2, 0.05, 0.0])?)?;
    store.insert("w2", Tensor::new(vec![4, 2], (0..8).map(|i| (i as f32 * 0.71).cos()).collect())?)?;
    store.insert("b2", Tensor::new(vec![2], vec![0.0, 0.3])?)?;
    let x = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.2, -0.7])?;
    let target = [1.0, 0.0, 0.0, 1.0];

    let (g, l) = loss(&store, &x, &target)?;
    println!("loss {:.6}", g.value(l).data()[0]);
    g.backward(l, &mut store)?;

    let eps = 1e-2f32;
    for path in ["w1", "b1", "w2", "b2"] {
        let analytic = store.get(path)?.grad().expect("filled").data().to_vec();
        let mut worst = 0.0f32;
        for i in 0..analytic.len() {
            let mut probe = store.clone();
            let orig = probe.value(path)?.data()[i];
            let mut at = |v: f32| -> Result<f32> {
                let mut t = probe.value(path)?.clone();
                t.data_mut()[i] = v;
                probe.replace(path, t)?;
                let (g, l) = loss(&probe, &x, &target)?;
                Ok(g.value(l).data()[0])
            };
            let numeric = (at(orig + eps)? - at(orig - eps)?) / (2.0 * eps);
            worst = worst.max((numeric - analytic[i]).abs());
        }
        println!("{path}: max |analytic - numeric| = {worst:.2e}");
    }
    Ok(())
}
