//! Drives the queue simulator directly with a hand-rolled cycle.

use std::sync::Arc;

use tsc_lab::mesosim::{generate_trips, SimParams, Simulator, TripSpec};
use tsc_lab::netgraph::{generate_grid, GridSpec};

fn main() -> anyhow::Result<()> {
    let net = Arc::new(generate_grid(&GridSpec::new(2, 2))?);
    let flows = generate_trips(&net, &TripSpec::uniform(600.0));
    let mut sim = Simulator::new(net.clone(), &flows, SimParams::default(), 7)?;

    for second in 0..600u64 {
        // Switch every signal to the next green every 30 s.
        if second % 30 == 0 {
            for s in 0..net.num_signals() {
                let next = (sim.state().signals[s].committed_green() + 1) % net.num_phases(s);
                sim.set_phase(s, next)?;
            }
        }
        sim.spawn();
        sim.tick();
        if (second + 1) % 120 == 0 {
            let st = sim.state();
            let queued: usize = st.lanes.iter().map(|l| l.queued.len()).sum();
            println!(
                "t={:>4}s active {:>3} queued {:>3} completed {:>4} dropped {}",
                st.clock,
                st.active(),
                queued,
                st.completed,
                st.dropped
            );
        }
    }
    let st = sim.state();
    let tt = &st.completed_travel_times;
    if !tt.is_empty() {
        println!("mean travel time {:.1} s", tt.iter().sum::<f64>() / tt.len() as f64);
    }
    Ok(())
}
