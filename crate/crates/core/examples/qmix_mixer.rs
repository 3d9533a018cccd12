//! The monotonic mixing network: non-negative weights and a joint value
//! that never drops when one agent's value rises.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsc_lab::marl::MixingNet;

fn main() {
    let (n, state_dim) = (4, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mixer = MixingNet::new(n, state_dim, 8, 16, &mut rng);
    println!("{} parameters", mixer.num_params());

    let state: Vec<f64> = (0..state_dim).map(|_| rng.random()).collect();
    let (w1, w2) = mixer.effective_weights(&state);
    let min = w1.iter().chain(&w2).cloned().fold(f64::INFINITY, f64::min);
    println!("smallest mixing weight {min:.4}");

    let states = Array2::from_shape_fn((5, state_dim), |(_, j)| state[j]);
    // Row k raises agent 0's value by k.
    let qs = Array2::from_shape_fn((5, n), |(k, i)| if i == 0 { k as f64 } else { -1.0 });
    let q_tot = mixer.forward(qs.view(), states.view());
    for (k, q) in q_tot.iter().enumerate() {
        println!("Q_0 = {k} -> Q_tot = {q:.4}");
    }
}
