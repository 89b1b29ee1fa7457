//! Fixtures shared by the criterion benchmarks.

use chns_core::{RunConfig, State, System};

/// Default system and initial state on an `n × n` grid.
pub fn default_setup(n: usize) -> (System, State) {
    let cfg = RunConfig {
        nx: n,
        ny: n,
        ..RunConfig::default()
    };
    let sys = System::from_config(&cfg).expect("default config is valid");
    let state = cfg.initial.state(sys.grid());
    (sys, state)
}
