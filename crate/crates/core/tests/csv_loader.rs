use catrobust::bench::{load_csv, CostConfig};

const CONFIG: &str = r#"{
  "label_column": "fraud",
  "target_class": 1,
  "features": [
    {"type": "categorical", "name": "card", "values": ["visa", "amex", "mc"],
     "cost_matrix": [[0, 5, 3], [null, 0, 2], [1, 1, 0]]},
    {"type": "numeric", "name": "amount", "n_bins": 2, "per_unit_cost": 0.5}
  ]
}"#;

const TABLE: &str = "amount,card,fraud\n10,visa,0\n30,amex,1\n12,mc,1\n28,visa,0\n";

#[test]
fn loads_named_columns_in_config_order() {
    let cfg = CostConfig::from_json(CONFIG).unwrap();
    let data = load_csv(TABLE.as_bytes(), &cfg).unwrap();
    let ds = &data.dataset;
    assert_eq!(ds.len(), 4);
    assert_eq!(ds.labels(), &[0, 1, 1, 0]);
    assert_eq!(ds.rows()[1][0], 1);
    assert_eq!(ds.rows()[2][0], 2);
    // Two bins over [10, 30]: 10 and 12 fall low, 28 and 30 high.
    let bins: Vec<usize> = ds.rows().iter().map(|r| r[1]).collect();
    assert_eq!(bins, vec![0, 1, 0, 1]);
    let cm = &data.cost_model;
    assert_eq!(cm.matrices()[0].price(0, 1), 5.0);
    assert!(!cm.matrices()[0].is_possible(1, 0));
    // Midpoints 15 and 25 at 0.5 per unit.
    assert_eq!(cm.matrices()[1].price(0, 1), 5.0);
    assert_eq!(data.config_hash, cfg.hash());
}

#[test]
fn unknown_category_and_missing_column_are_rejected() {
    let cfg = CostConfig::from_json(CONFIG).unwrap();
    assert!(load_csv("amount,card,fraud\n10,discover,0\n".as_bytes(), &cfg).is_err());
    assert!(load_csv("amount,fraud\n10,0\n".as_bytes(), &cfg).is_err());
    assert!(load_csv("amount,card,fraud\n10,visa,2\n".as_bytes(), &cfg).is_err());
}

#[test]
fn malformed_configs_are_config_errors() {
    for bad in [
        r#"{"label_column": "y", "target_class": 2, "features": []}"#,
        r#"{"label_column": "y", "target_class": 1, "features": [{"type": "categorical", "name": "a", "values": ["x"], "cost_matrix": [[0]]}]}"#,
        r#"{"label_column": "y", "target_class": 1, "features": [], "extra": 1}"#,
    ] {
        assert!(matches!(CostConfig::from_json(bad), Err(catrobust::Error::Config(_))), "{bad}");
    }
}

#[test]
fn bundled_dataset_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs");
    for name in ["ieeecis", "baf", "credit"] {
        let cfg = CostConfig::load(&dir.join(format!("{name}.json"))).unwrap();
        assert!(!cfg.features.is_empty(), "{name}");
    }
}
