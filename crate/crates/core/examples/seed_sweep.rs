//! Run both reward schemes on a scenario across a range of seeds and print
//! the final entropy, pass@n and top-mode mass for each arm.
//!
//! cargo run --release --example seed_sweep -- scenarios/majority_trap.json 10

use evolrl::reward::Scheme;
use evolrl::simulator::{EnvConfig, Environment, MetricsRecord};
use evolrl::Exec;

fn top(m: &MetricsRecord) -> f64 {
    m.mode_histogram.iter().copied().fold(0.0, f64::max)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().ok_or("usage: seed_sweep <scenario.json> [seeds]")?;
    let seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);
    let base = EnvConfig::from_json(&std::fs::read_to_string(path)?)?;

    let start = std::time::Instant::now();
    let (mut entropy_wins, mut pass_wins, mut collapsed) = (0, 0, 0);
    println!("seed  arm            entropy  pass1   pass_n  maj_n   top_mode");
    for seed in 0..seeds {
        let mut finals = Vec::new();
        for scheme in [Scheme::EvolRl, Scheme::MajorityOnly] {
            let cfg = EnvConfig { seed, scheme, ..base.clone() };
            let run = Environment::new(cfg)?.run(Exec::default())?;
            let last = run.metrics.last().cloned().ok_or("scenario has zero steps")?;
            println!(
                "{seed:<5} {:<14} {:.3}    {:.3}   {:.4}  {:.3}   {:.3}",
                scheme.to_string(),
                last.entropy_nats,
                last.pass1,
                last.pass_n,
                last.maj_n,
                top(&last)
            );
            finals.push(last);
        }
        let (evol, maj) = (&finals[0], &finals[1]);
        entropy_wins += (evol.entropy_nats > maj.entropy_nats) as u32;
        pass_wins += (evol.pass_n >= maj.pass_n) as u32;
        collapsed += (top(maj) >= 0.95) as u32;
    }
    println!(
        "entropy higher under evolrl: {entropy_wins}/{seeds}, pass_n no worse: {pass_wins}/{seeds}, majority-only collapsed: {collapsed}/{seeds} ({:.1?})",
        start.elapsed()
    );
    Ok(())
}
