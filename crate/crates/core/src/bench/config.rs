//! Cost configuration documents and CSV table ingestion.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cost_model::{fit_bins, Binner, CostMatrix, CostModel, Dataset, FeatureSpec};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub label_column: String,
    /// The class the adversary attacks.
    pub target_class: u8,
    pub features: Vec<FeatureConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureConfig {
    Categorical {
        name: String,
        values: Vec<String>,
        /// Row-major, `null` marks an impossible transition.
        cost_matrix: Vec<Vec<Option<f64>>>,
    },
    Numeric {
        name: String,
        n_bins: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        per_unit_cost: Option<f64>,
        /// Explicit bin-to-bin prices; overrides `per_unit_cost`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cost_matrix: Option<Vec<Vec<Option<f64>>>>,
    },
}

impl FeatureConfig {
    pub fn name(&self) -> &str {
        match self {
            Self::Categorical { name, .. } | Self::Numeric { name, .. } => name,
        }
    }
}

impl CostConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("cost config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read cost config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_class > 1 {
            return Err(Error::Config(format!("target_class must be 0 or 1, got {}", self.target_class)));
        }
        if self.features.is_empty() {
            return Err(Error::Config("cost config lists no features".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name()) || f.name() == self.label_column {
                return Err(Error::Config(format!("duplicate column '{}'", f.name())));
            }
            match f {
                FeatureConfig::Categorical { cost_matrix, values, name } if cost_matrix.len() != values.len() => {
                    return Err(Error::Config(format!(
                        "feature '{name}': {} values but a {}-row cost matrix",
                        values.len(),
                        cost_matrix.len()
                    )));
                }
                FeatureConfig::Categorical { values, name, .. }
                    if values.len() < 2 || values.iter().collect::<std::collections::HashSet<_>>().len() != values.len() =>
                {
                    return Err(Error::Config(format!("feature '{name}' needs at least 2 distinct values")));
                }
                FeatureConfig::Numeric {
                    name,
                    per_unit_cost: None,
                    cost_matrix: None,
                    ..
                } => {
                    return Err(Error::Config(format!(
                        "numeric feature '{name}' needs per_unit_cost or cost_matrix"
                    )));
                }
                FeatureConfig::Numeric { name, n_bins, .. } if *n_bins < 2 => {
                    return Err(Error::Config(format!("numeric feature '{name}' needs at least 2 bins")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("cost config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A loaded table together with its cost model and the fitted numeric bins.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub cost_model: CostModel,
    /// One entry per feature; `None` for categorical features.
    pub binners: Vec<Option<Binner>>,
    pub config_hash: String,
}

/// Reads a CSV with a header row. Categorical cells must match a configured
/// value; numeric cells are decimals binned by quantiles of the column.
pub fn load_csv(data: impl std::io::Read, config: &CostConfig) -> Result<LoadedData> {
    config.validate()?;
    let mut reader = csv::Reader::from_reader(data);
    let header: HashMap<String, usize> = reader
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();
    let column = |name: &str| {
        header
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("CSV has no column '{name}'")))
    };
    let label_col = column(&config.label_column)?;
    let feature_cols: Vec<usize> = config.features.iter().map(|f| column(f.name())).collect::<Result<_>>()?;
    let mut labels = Vec::new();
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); config.features.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let label = record.get(label_col).unwrap_or("").trim();
        labels.push(match label {
            "0" => 0,
            "1" => 1,
            other => return Err(invalid(format!("row {}: label must be 0 or 1, got '{other}'", line + 1))),
        });
        for (f, &c) in feature_cols.iter().enumerate() {
            raw[f].push(record.get(c).unwrap_or("").trim().to_string());
        }
    }
    if labels.is_empty() {
        return Err(invalid("CSV has no data rows"));
    }
    let mut specs = Vec::new();
    let mut matrices = Vec::new();
    let mut binners = Vec::new();
    let mut columns: Vec<Vec<usize>> = Vec::new();
    for (f, cfg) in config.features.iter().enumerate() {
        match cfg {
            FeatureConfig::Categorical {
                name,
                values,
                cost_matrix,
            } => {
                let spec = FeatureSpec::new(name.clone(), values.clone())?;
                let idx = raw[f]
                    .iter()
                    .enumerate()
                    .map(|(r, cell)| {
                        spec.index_of(cell).ok_or_else(|| {
                            invalid(format!("row {}: '{cell}' is not a value of feature '{name}'", r + 1))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                matrices.push(CostMatrix::from_rows(cost_matrix)?);
                specs.push(spec);
                columns.push(idx);
                binners.push(None);
            }
            FeatureConfig::Numeric {
                name,
                n_bins,
                per_unit_cost,
                cost_matrix,
            } => {
                let values = raw[f]
                    .iter()
                    .enumerate()
                    .map(|(r, cell)| {
                        cell.parse::<f64>()
                            .map_err(|_| invalid(format!("row {}: '{cell}' in '{name}' is not a number", r + 1)))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let binner = fit_bins(&values, *n_bins)?;
                let matrix = match (cost_matrix, per_unit_cost) {
                    (Some(rows), _) => {
                        if rows.len() != binner.n_bins() {
                            return Err(Error::Config(format!(
                                "feature '{name}': cost matrix has {} rows but the column yields {} bins",
                                rows.len(),
                                binner.n_bins()
                            )));
                        }
                        CostMatrix::from_rows(rows)?
                    }
                    (None, Some(unit)) => CostMatrix::from_per_unit(&binner.midpoints(), *unit)?,
                    (None, None) => unreachable!("validated"),
                };
                specs.push(FeatureSpec::indexed(name.clone(), binner.n_bins(), "bin")?);
                matrices.push(matrix);
                columns.push(values.iter().map(|&v| binner.bin_of(v)).collect());
                binners.push(Some(binner));
            }
        }
    }
    let rows: Vec<Vec<usize>> = (0..labels.len()).map(|r| columns.iter().map(|c| c[r]).collect()).collect();
    let specs: std::sync::Arc<[FeatureSpec]> = specs.into();
    let cost_model = CostModel::new(specs.clone(), matrices, config.target_class)?;
    let dataset = Dataset::new(specs, rows, labels)?;
    Ok(LoadedData {
        dataset,
        cost_model,
        binners,
        config_hash: config.hash(),
    })
}

pub fn load_csv_file(path: &Path, config: &CostConfig) -> Result<LoadedData> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot open dataset {}: {e}", path.display())))?;
    load_csv(std::io::BufReader::new(file), config)
}
