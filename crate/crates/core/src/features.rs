//! Principal-component compression of the indicator groups.
//!
//! Each group (macro, technical, attention) is z-scored upstream and then
//! reduced to a fixed number of components: PCM1-2, TECH1-3 and BD1.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::marketdata::{AlignedPanel, DataError, MONTHLY_HEADER};

/// Retained eigenvalues below this are treated as a rank deficiency.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcaError {
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("component {component} has eigenvalue {eigenvalue:e}; data is rank deficient")]
    RankDeficient { component: usize, eigenvalue: f64 },
    #[error("non-finite input data")]
    NonFinite,
    #[error("missing column `{0}`")]
    MissingColumn(String),
}

impl PcaError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, PcaError::RankDeficient { .. } | PcaError::NonFinite)
    }
}

impl From<DataError> for PcaError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::MissingColumn(c) => PcaError::MissingColumn(c),
            other => PcaError::BadShape(other.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Macro,
    Tech,
    Attention,
}

impl Group {
    pub fn component_prefix(self) -> &'static str {
        match self {
            Group::Macro => "PCM",
            Group::Tech => "TECH",
            Group::Attention => "BD",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Macro => "macro",
            Group::Tech => "tech",
            Group::Attention => "attention",
        }
    }

    /// Whether the group's columns live in the monthly table of a panel.
    pub fn is_monthly(self) -> bool {
        self == Group::Macro
    }
}

impl std::str::FromStr for Group {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "macro" => Ok(Group::Macro),
            "tech" => Ok(Group::Tech),
            "attention" => Ok(Group::Attention),
            _ => Err(format!("unknown indicator group `{s}`")),
        }
    }
}

/// Technical indicators entering the TECH components.
pub const TECH_COLUMNS: [&str; 12] = [
    "turn", "boll", "ma5", "ma20", "macd", "rsi", "sobv", "roc", "volume", "high", "low", "open",
];
pub const ATTENTION_COLUMNS: [&str; 5] = ["csi300", "csi500", "sse50", "hsparts", "hsetf"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub group: Group,
    pub columns: Vec<String>,
    pub retain: usize,
}

impl GroupSpec {
    pub fn new(group: Group, columns: &[&str], retain: usize) -> Self {
        assert!(retain >= 1 && retain <= columns.len(), "retain must be within 1..=columns");
        Self {
            group,
            columns: columns.iter().map(|s| s.to_string()).collect(),
            retain,
        }
    }

    pub fn macro_default() -> Self {
        Self::new(Group::Macro, &MONTHLY_HEADER[1..], 2)
    }

    pub fn tech_default() -> Self {
        Self::new(Group::Tech, &TECH_COLUMNS, 3)
    }

    pub fn attention_default() -> Self {
        Self::new(Group::Attention, &ATTENTION_COLUMNS, 1)
    }

    pub fn defaults() -> Vec<Self> {
        vec![Self::macro_default(), Self::tech_default(), Self::attention_default()]
    }

    pub fn component_names(&self) -> Vec<String> {
        (1..=self.retain)
            .map(|k| format!("{}{k}", self.group.component_prefix()))
            .collect()
    }
}

/// A fitted principal-component model for one indicator group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub group: Option<Group>,
    pub columns: Vec<String>,
    pub means: Vec<f64>,
    /// `p x k`; column `j` is the loading vector of component `j`.
    pub loadings: Matrix,
    /// Variances of the retained components, nonincreasing.
    pub variances: Vec<f64>,
    /// Share of total variance carried by each retained component.
    pub contributions: Vec<f64>,
    /// All `p` eigenvalues of the sample covariance, nonincreasing.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn n_features(&self) -> usize {
        self.loadings.rows()
    }

    pub fn n_components(&self) -> usize {
        self.loadings.cols()
    }

    /// Contribution of every component, retained or not.
    pub fn all_contributions(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        self.eigenvalues.iter().map(|e| e / total).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| crate::Error::json(path, e))?;
        crate::marketdata::write_text(path, &text)
    }

    pub fn load(path: impl AsRef<Path>) -> crate::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| crate::Error::json(path, e))
    }
}

/// Fits PCA on an `n x p` data matrix via the eigendecomposition of its sample covariance.
///
/// Eigenvectors are ordered by decreasing eigenvalue and signed so that the
/// largest-magnitude entry of each loading vector is positive.
pub fn fit_pca(data: &Matrix, retain: usize) -> Result<PcaModel, PcaError> {
    let (n, p) = data.shape();
    if n < 2 || p == 0 || retain == 0 || retain > p {
        return Err(PcaError::BadShape(format!(
            "{n}x{p} data with {retain} components"
        )));
    }
    if !data.is_finite() {
        return Err(PcaError::NonFinite);
    }
    let means: Vec<f64> = data.sum_rows().iter().map(|s| s / n as f64).collect();
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let row = data.row(i);
        for a in 0..p {
            let da = row[a] - means[a];
            for b in a..p {
                cov[(a, b)] += da * (row[b] - means[b]);
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let trace: f64 = (0..p).map(|a| cov[(a, a)]).sum();
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();

    let mut loadings = Matrix::zeros(p, retain);
    for (j, &src) in order.iter().take(retain).enumerate() {
        if eigenvalues[j] < RANK_TOL {
            return Err(PcaError::RankDeficient {
                component: j + 1,
                eigenvalue: eigenvalues[j],
            });
        }
        let v = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for r in 1..p {
            if v[r].abs() > v[pivot].abs() {
                pivot = r;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..p {
            loadings[(r, j)] = sign * v[r];
        }
    }
    let total = if trace > 0.0 { trace } else { eigenvalues.iter().sum() };
    Ok(PcaModel {
        group: None,
        columns: Vec::new(),
        means,
        loadings,
        variances: eigenvalues[..retain].to_vec(),
        contributions: eigenvalues[..retain].iter().map(|e| e / total).collect(),
        eigenvalues,
    })
}

/// Component scores `(data - means) * loadings`.
pub fn transform(model: &PcaModel, data: &Matrix) -> Result<Matrix, PcaError> {
    if data.cols() != model.n_features() {
        return Err(PcaError::BadShape(format!(
            "expected {} columns, got {}",
            model.n_features(),
            data.cols()
        )));
    }
    if !data.is_finite() {
        return Err(PcaError::NonFinite);
    }
    let mut centered = data.clone();
    for i in 0..centered.rows() {
        for (x, m) in centered.row_mut(i).iter_mut().zip(&model.means) {
            *x -= m;
        }
    }
    Ok(centered.matmul(&model.loadings))
}

/// Reconstruction `scores * loadings^T + means`.
pub fn inverse_transform(model: &PcaModel, scores: &Matrix) -> Result<Matrix, PcaError> {
    if scores.cols() != model.n_components() {
        return Err(PcaError::BadShape(format!(
            "expected {} components, got {}",
            model.n_components(),
            scores.cols()
        )));
    }
    let mut out = scores.matmul_t(&model.loadings);
    out.add_row_vector(&model.means);
    Ok(out)
}

/// Fits one PCA per group on the training rows and appends the component scores to the panel.
///
/// Daily groups are fitted on the first `train_rows` rows. The macro group is
/// fitted on the months referenced by those rows and its components are
/// appended to the monthly table.
pub fn extract_factor_panel(
    panel: &AlignedPanel,
    specs: &[GroupSpec],
    train_rows: usize,
) -> Result<(AlignedPanel, Vec<PcaModel>), PcaError> {
    let train_rows = train_rows.min(panel.len());
    let train_months = panel.month_index[..train_rows]
        .last()
        .map_or(0, |t| t + 1);
    let mut out = panel.clone();
    let mut models = Vec::with_capacity(specs.len());
    for spec in specs {
        let table = if spec.group.is_monthly() {
            &panel.monthly
        } else {
            &panel.daily
        };
        let data = table.to_matrix(&spec.columns)?;
        let fit_rows = if spec.group.is_monthly() {
            train_months
        } else {
            train_rows
        };
        let mut model = fit_pca(&data.slice_rows(0, fit_rows), spec.retain)?;
        model.group = Some(spec.group);
        model.columns = spec.columns.clone();
        let scores = transform(&model, &data)?;
        let target = if spec.group.is_monthly() {
            &mut out.monthly
        } else {
            &mut out.daily
        };
        for (j, name) in spec.component_names().into_iter().enumerate() {
            target.push(name, scores.column(j))?;
        }
        models.push(model);
    }
    Ok((out, models))
}
