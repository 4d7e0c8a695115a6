use furl_core::env::{GoalMode, Task};
use furl_core::experiment::{Algo, ExperimentConfig};
use furl_lab::settings::{to_settings, RunSpec, Settings};

const FILE: &str = "
[run]
algo = relay
env = reach
seed = 7
steps = 1234
rho = 0.5

[env]
goal_mode = random

[oracle]
epsilon = 0.25
seed = 11

[sac]
hidden = 32, 32
batch_size = 64

[relay]
steps = 10,20
enabled = yes
";

#[test]
fn file_values_land_in_the_config() {
    let spec = Settings::from_ini_str(FILE).unwrap().resolve().unwrap();
    let c = &spec.cfg;
    assert_eq!(c.algo, Algo::Relay);
    assert_eq!(c.env.task, Task::Reach);
    assert_eq!(c.env.goal_mode, GoalMode::Random);
    assert_eq!((c.seed, c.total_steps, c.rho), (7, 1234, 0.5));
    assert_eq!(c.oracle.epsilon, 0.25);
    assert_eq!(c.oracle_seed, Some(11));
    assert_eq!(c.sac.hidden, [32, 32]);
    assert_eq!(c.sac.batch_size, 64);
    assert_eq!(c.relay.relay_steps, [10, 20]);
}

#[test]
fn empty_settings_give_the_defaults() {
    let spec = Settings::new().resolve().unwrap();
    assert_eq!(spec.cfg, ExperimentConfig::new(Algo::Furl, Task::TrapReach));
    assert_eq!(spec.cfg.oracle.epsilon, 0.8);
}

#[test]
fn later_sources_override_earlier_ones() {
    let mut s = Settings::from_ini_str(FILE).unwrap();
    let mut cli = Settings::new();
    cli.set("run", "seed", "3").unwrap();
    cli.set_assignment("sac.lr=3e-4").unwrap();
    s.merge(&cli);
    let spec = s.resolve().unwrap();
    assert_eq!(spec.cfg.seed, 3);
    assert_eq!(spec.cfg.sac.lr, 3e-4);
    assert_eq!(spec.cfg.total_steps, 1234);
}

#[test]
fn bad_input_is_rejected() {
    assert!(Settings::from_ini_str("[run]\nalgoo = furl\n").is_err());
    assert!(Settings::from_ini_str("seed = 1\n").is_err());
    assert!(Settings::from_ini_str("[run]\nalgo = nope\n").unwrap().resolve().is_err());
    assert!(Settings::from_ini_str("[run]\nsteps = many\n").unwrap().resolve().is_err());
    assert!(Settings::from_ini_str("[oracle]\nepsilon = 2\n").unwrap().resolve().is_err());
    assert!(Settings::new().set_assignment("sac.lr").is_err());
}

#[test]
fn rendering_round_trips() {
    let spec = Settings::from_ini_str(FILE).unwrap().resolve().unwrap();
    let text = to_settings(&spec).to_ini_string();
    let back: RunSpec = Settings::from_ini_str(&text).unwrap().resolve().unwrap();
    assert_eq!(back, spec);
}
