//! Fits y = sin(x) with a small dense network, backprop and Adam.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsc_lab::nn::{Adam, DenseNet};

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = DenseNet::new(&[1, 32, 32, 1], &mut rng);
    let mut adam = Adam::new(net.num_params());
    let xs = Array2::from_shape_fn((64, 1), |(i, _)| -3.0 + 6.0 * i as f64 / 63.0);
    let ys = xs.mapv(f64::sin);

    for step in 0..=3000 {
        let (out, cache) = net.forward_batch(xs.view())?;
        let err = &out - &ys;
        let loss = err.mapv(|e| e * e).mean().unwrap();
        let upstream = err.mapv(|e| 2.0 * e / xs.nrows() as f64);
        let mut grads = vec![0.0; net.num_params()];
        net.backward(&cache, upstream.view(), &mut grads);
        adam.update(net.params_mut(), &grads, 1e-3);
        if step % 500 == 0 {
            println!("step {step:>4} mse {loss:.5}");
        }
    }
    println!("f(1.0) = {:.3}, sin(1.0) = {:.3}", net.forward(&[1.0])?[0], 1f64.sin());
    Ok(())
}
