//! Run a reduced benchmark end to end and print the report table.
//!
//! cargo run --release --example pipeline -- [SPEC.json]

use catrobust::bench::{emit_report, run_pipeline, ExperimentSpec, ReportFormat};

fn main() -> catrobust::Result<()> {
    let spec = match std::env::args().nth(1) {
        Some(path) => ExperimentSpec::load(path.as_ref())?,
        None => {
            let mut spec = ExperimentSpec::from_json(
                r#"{
                    "data": {"kind": "synthetic", "spec": {"n_samples": 2000}},
                    "seeds": [1],
                    "eps_grid": [1.0, 5.0, 30.0],
                    "percentiles": [0.15],
                    "out_dir": "pipeline_out"
                }"#,
            )?;
            spec.train.epochs = 4;
            spec.bilevel.epochs = 6;
            spec
        }
    };
    let report = run_pipeline(&spec)?;
    print!("{}", emit_report(&report, ReportFormat::Table)?);
    Ok(())
}
