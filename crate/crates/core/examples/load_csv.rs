//! Load a CSV table with its cost config.
//!
//! cargo run --example load_csv -- DATA.csv COST_CONFIG.json

use std::path::PathBuf;

use catrobust::bench::{load_csv_file, CostConfig};

fn main() -> catrobust::Result<()> {
    let mut args = std::env::args().skip(1).map(PathBuf::from);
    let (Some(data), Some(config)) = (args.next(), args.next()) else {
        eprintln!("usage: load_csv DATA.csv COST_CONFIG.json");
        std::process::exit(2);
    };
    let cfg = CostConfig::load(&config)?;
    let loaded = load_csv_file(&data, &cfg)?;
    println!("config hash {}", loaded.config_hash);
    println!("{} rows, class counts {:?}", loaded.dataset.len(), loaded.dataset.class_counts());
    for (f, m) in loaded.cost_model.features().iter().zip(loaded.cost_model.matrices()) {
        let possible = (0..m.dim())
            .flat_map(|j| (0..m.dim()).map(move |k| (j, k)))
            .filter(|&(j, k)| j != k && m.is_possible(j, k))
            .count();
        println!("  {:<12} {:>3} values, {possible} possible changes", f.name, f.cardinality());
    }
    Ok(())
}
