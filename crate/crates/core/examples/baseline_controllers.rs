//! Compares the rule-based controllers on the same scenario.

use std::collections::BTreeMap;

use tsc_lab::baselines::ControllerSpec;
use tsc_lab::env::ActionMode;
use tsc_lab::harness::{evaluate, EvalAgent, Scenario, EVAL_SEED_OFFSET};
use tsc_lab::mesosim::TripSpec;

fn main() -> anyhow::Result<()> {
    let mut trips = TripSpec::uniform(200.0);
    trips.rate_by_prefix = BTreeMap::from([("W".into(), 700.0), ("E".into(), 700.0)]);
    let mut scenario = Scenario::grid(2, 2, trips);

    let specs = [
        ControllerSpec::fixed_time(),
        ControllerSpec::Random,
        ControllerSpec::Greedy,
        ControllerSpec::max_pressure(),
        ControllerSpec::sotl(),
    ];
    println!("{:<12} {:>10} {:>10} {:>12}", "controller", "queue", "delay", "travel_time");
    for spec in specs {
        scenario.env.action_mode = spec.required_mode().unwrap_or(ActionMode::RoundRobin);
        let env = scenario.env_config(0)?;
        let report = evaluate(&env, &EvalAgent::Controller(spec.clone()), 5, EVAL_SEED_OFFSET, 1)?;
        let s = report.summary;
        println!(
            "{:<12} {:>10.2} {:>10.3} {:>12.1}",
            spec.name(),
            s.mean_queue,
            s.mean_delay,
            s.mean_travel_time.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
