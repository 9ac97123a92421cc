//! Generate the synthetic benchmark and write it next to its cost config.
//!
//! cargo run --example synthetic_data -- [OUT_DIR]

use catrobust::bench::{gen_synthetic, SyntheticSpec};

fn main() -> catrobust::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic".into());
    let spec = SyntheticSpec::default();
    let s = gen_synthetic(&spec, 1)?;
    let counts = s.data.dataset.class_counts();
    println!("{} rows, class counts {counts:?}", s.data.dataset.len());
    for (f, cheap) in s.data.cost_model.features().iter().zip(&s.cheap) {
        println!("  {:<6} {:>2} values{}", f.name, f.cardinality(), if *cheap { "  (cheap to change)" } else { "" });
    }
    std::fs::create_dir_all(&out)?;
    std::fs::write(format!("{out}/data.csv"), &s.csv)?;
    std::fs::write(format!("{out}/cost_config.json"), s.config.to_json()?)?;
    println!("wrote {out}/data.csv and {out}/cost_config.json");
    Ok(())
}
