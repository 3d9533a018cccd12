//! Serves an environment over TCP and drives it with the bundled client.

use std::sync::Arc;

use tsc_lab::envserver::{serve, RemoteEnv};
use tsc_lab::env::EnvConfig;
use tsc_lab::mesosim::{generate_trips, TripSpec};
use tsc_lab::netgraph::{generate_grid, GridSpec};

fn main() -> anyhow::Result<()> {
    let net = Arc::new(generate_grid(&GridSpec::new(2, 2))?);
    let flows = generate_trips(&net, &TripSpec::uniform(300.0));
    let server = serve(EnvConfig::new(net, flows), "127.0.0.1:0")?;
    println!("listening on {}", server.local_addr());

    let mut remote = RemoteEnv::connect(server.local_addr())?;
    println!("remote spec: {:?}", remote.spec());
    let n = remote.spec().n_agents;
    remote.reset(Some(11))?;
    let mut ret = 0.0;
    for t in 0..remote.spec().episode_limit {
        // Advance every signal on every other step.
        let r = remote.step(&vec![t % 2; n])?;
        ret += r.reward;
    }
    println!("episode return {ret:.1}");
    remote.close()?;
    server.shutdown();
    Ok(())
}
