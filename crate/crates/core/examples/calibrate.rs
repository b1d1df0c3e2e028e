//! Prints the observed quantities behind the locked acceptance thresholds.
//!
//! cargo run --release -p sr-core --example calibrate [seed] [format]

use sr_core::experiments::{
    run_conditioning, run_error_growth, ConditioningParams, ErrorGrowthParams, ExperimentConfig,
    SummandDistribution,
};
use sr_core::{FormatSpec, RoundingMode};

fn main() -> sr_core::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20240601);
    let rn = RoundingMode::NearestEven;
    let sr = RoundingMode::SrProportional;

    let fmt: FormatSpec = std::env::args().nth(2).unwrap_or("fp16".into()).parse()?;
    let cfg = ExperimentConfig::new(fmt, vec![rn, sr], seed, 100);
    let params = ErrorGrowthParams {
        n_list: vec![1_000, 3_000, 10_000, 30_000, 100_000],
        distribution: SummandDistribution::Uniform01,
    };
    let eg = run_error_growth(&cfg, &params)?;
    print!("{}", eg.to_table().to_csv_string());
    for f in &eg.fits {
        println!("slope {}: {:.4} +- {:.4}", f.mode, f.slope, f.stderr);
    }
    let ratio = eg.row(rn, 100_000).unwrap().median_err / eg.row(sr, 100_000).unwrap().median_err;
    println!("rn/sr median ratio at n=1e5: {ratio:.2}");

    let fmt = FormatSpec::fixed(true, 4, 8)?;
    let cfg = ExperimentConfig::new(fmt, vec![sr], seed, 1000);
    let cond = run_conditioning(&cfg, &ConditioningParams::new(200, 5, true))?;
    print!("{}", cond.to_table().to_csv_string());
    let row = &cond.rows[0];
    println!(
        "sigma_min before {:e}, after q05 {:e}, frac > 1e-12: {}",
        cond.sigma_min_before, row.sigma_min_after.q05, row.frac_positive
    );
    Ok(())
}
