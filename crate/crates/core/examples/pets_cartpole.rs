//! Runs desk-scale PETS on continuous cart-pole and prints the learning curve.
//!
//! `cargo run --release -p mbrl --example pets_cartpole -- [seed] [probabilistic]`

use std::time::Instant;

use mbrl::algorithms::{pets_run_with_observer, PetsConfig};
use mbrl::envs::CartPole;

fn main() -> mbrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = PetsConfig::cartpole();
    cfg.seed = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));
    if args.next().as_deref() == Some("probabilistic") {
        cfg.model.deterministic = false;
        cfg.num_trials = 30;
    }
    let start = Instant::now();
    let out = pets_run_with_observer(&cfg, &mut CartPole::new(), None, &mut |row, _, _| {
        println!(
            "trial {:>2}  return {:>6.1}  epochs {:>3}  {:>6.1}s",
            row.trial,
            row.episode_return,
            row.train_epochs,
            start.elapsed().as_secs_f64()
        );
    })?;
    println!("mean of last 3: {:.1}", out.curve.mean_last(3).unwrap_or(f64::NAN));
    println!("elapsed: {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
