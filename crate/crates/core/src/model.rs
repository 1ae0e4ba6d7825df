//! Problem data: plant, noise, prior, cost weights and reference trajectory.
//!
//! Everything downstream consumes the validated forms. Validation checks
//! shapes, symmetrizes covariances and checks definiteness of the weights.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;
use crate::linalg::{self, Matrix, Vector, PD_TOL, PSD_TOL};

/// Linear plant `x' = A x + B u + w`, observation `z = C x + v`, Gaussian prior on `x_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    /// Process-noise covariance.
    pub w: Matrix,
    /// Measurement-noise covariance.
    pub v: Matrix,
    pub x0_mean: Vector,
    pub x0_cov: Matrix,
}

/// A [`SystemModel`] whose shapes agree and whose covariances are symmetric PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModel(SystemModel);

impl ValidatedModel {
    pub fn n(&self) -> usize {
        self.0.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.0.b.ncols()
    }
    pub fn s(&self) -> usize {
        self.0.c.nrows()
    }
    pub fn into_inner(self) -> SystemModel {
        self.0
    }
}

impl std::ops::Deref for ValidatedModel {
    type Target = SystemModel;
    fn deref(&self) -> &SystemModel {
        &self.0
    }
}

fn shape(m: &Matrix) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

fn check_shape(field: &str, m: &Matrix, rows: usize, cols: usize) -> Result<(), ValidationError> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(ValidationError::DimensionMismatch {
            field: field.to_string(),
            expected: format!("{rows}x{cols}"),
            found: shape(m),
        });
    }
    if !linalg::is_finite(m) {
        return Err(ValidationError::NonFinite(field.to_string()));
    }
    Ok(())
}

fn check_len(field: &str, v: &Vector, n: usize) -> Result<(), ValidationError> {
    if v.len() != n {
        return Err(ValidationError::DimensionMismatch {
            field: field.to_string(),
            expected: format!("length {n}"),
            found: format!("length {}", v.len()),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ValidationError::NonFinite(field.to_string()));
    }
    Ok(())
}

/// Symmetrizes `m` and rejects it if its smallest eigenvalue is below [`PSD_TOL`].
pub(crate) fn psd(field: &str, m: &Matrix) -> Result<Matrix, ValidationError> {
    let sym = linalg::symmetrize(m);
    let min = linalg::min_eigenvalue(&sym);
    if min < PSD_TOL {
        return Err(ValidationError::NotPsd {
            matrix: field.to_string(),
            min_eigenvalue: min,
        });
    }
    Ok(sym)
}

fn pd(field: &str, stage: Option<usize>, m: &Matrix) -> Result<(), ValidationError> {
    let min = linalg::min_eigenvalue(m);
    if min > PD_TOL {
        Ok(())
    } else {
        Err(ValidationError::NotPd {
            matrix: field.to_string(),
            stage,
            min_eigenvalue: min,
        })
    }
}

pub fn validate_model(model: SystemModel) -> Result<ValidatedModel, ValidationError> {
    let n = model.a.nrows();
    if n == 0 {
        return Err(ValidationError::Invalid("state dimension must be positive".into()));
    }
    check_shape("A", &model.a, n, n)?;
    let m = model.b.ncols();
    check_shape("B", &model.b, n, m)?;
    let s = model.c.nrows();
    check_shape("C", &model.c, s, n)?;
    check_shape("W", &model.w, n, n)?;
    check_shape("V", &model.v, s, s)?;
    check_len("x0_mean", &model.x0_mean, n)?;
    check_shape("x0_cov", &model.x0_cov, n, n)?;

    let w = psd("W", &model.w)?;
    let v = psd("V", &model.v)?;
    let x0_cov = psd("x0_cov", &model.x0_cov)?;
    Ok(ValidatedModel(SystemModel {
        w,
        v,
        x0_cov,
        ..model
    }))
}

/// A per-stage weight given either once for all stages or stage by stage.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSchedule {
    Constant(Matrix),
    PerStage(Vec<Matrix>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub q: WeightSchedule,
    pub r: WeightSchedule,
    pub q_terminal: Matrix,
}

impl CostWeights {
    pub fn constant(q: Matrix, r: Matrix, q_terminal: Matrix) -> Self {
        Self {
            q: WeightSchedule::Constant(q),
            r: WeightSchedule::Constant(r),
            q_terminal,
        }
    }
}

/// Stage weights broadcast to the horizon and checked positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedWeights {
    q: Vec<Matrix>,
    r: Vec<Matrix>,
    q_terminal: Matrix,
    constant: bool,
}

impl ValidatedWeights {
    pub fn horizon(&self) -> usize {
        self.q.len()
    }
    pub fn q(&self, k: usize) -> &Matrix {
        &self.q[k]
    }
    pub fn r(&self, k: usize) -> &Matrix {
        &self.r[k]
    }
    pub fn q_terminal(&self) -> &Matrix {
        &self.q_terminal
    }
    pub fn q_stages(&self) -> &[Matrix] {
        &self.q
    }
    pub fn r_stages(&self) -> &[Matrix] {
        &self.r
    }
    /// True when both stage weights were given as single constant matrices.
    pub fn is_constant(&self) -> bool {
        self.constant
    }
    /// The stage weights used by time-invariant controllers.
    pub fn steady(&self) -> Option<(&Matrix, &Matrix)> {
        self.constant.then(|| (&self.q[0], &self.r[0]))
    }

    /// Multiplies every weight by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            q: self.q.iter().map(|m| m * alpha).collect(),
            r: self.r.iter().map(|m| m * alpha).collect(),
            q_terminal: &self.q_terminal * alpha,
            constant: self.constant,
        }
    }
}

fn broadcast(
    field: &str,
    schedule: &WeightSchedule,
    dim: usize,
    horizon: usize,
) -> Result<Vec<Matrix>, ValidationError> {
    let list = match schedule {
        WeightSchedule::Constant(m) => {
            check_shape(field, m, dim, dim)?;
            pd(field, None, m)?;
            vec![m.clone(); horizon]
        }
        WeightSchedule::PerStage(ms) => {
            if ms.len() < horizon {
                return Err(ValidationError::WrongLength {
                    field: field.to_string(),
                    expected: horizon,
                    found: ms.len(),
                });
            }
            for (k, m) in ms.iter().take(horizon).enumerate() {
                check_shape(&format!("{field}[{k}]"), m, dim, dim)?;
                pd(field, Some(k), m)?;
            }
            ms[..horizon].to_vec()
        }
    };
    Ok(list)
}

pub fn validate_weights(
    weights: &CostWeights,
    n: usize,
    m: usize,
    horizon: usize,
) -> Result<ValidatedWeights, ValidationError> {
    let q = broadcast("Q", &weights.q, n, horizon)?;
    let r = broadcast("R", &weights.r, m, horizon)?;
    check_shape("Q_terminal", &weights.q_terminal, n, n)?;
    pd("Q_terminal", None, &weights.q_terminal)?;
    let constant = matches!(
        (&weights.q, &weights.r),
        (WeightSchedule::Constant(_), WeightSchedule::Constant(_))
    );
    Ok(ValidatedWeights {
        q,
        r,
        q_terminal: weights.q_terminal.clone(),
        constant,
    })
}

/// The deterministic reference `x̄_k`.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Constant(Vector),
    Trajectory(Vec<Vector>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSpec {
    pub xbar: Reference,
    /// Covariance of the per-rollout reference offset `w̄`.
    pub offset_cov: Option<Matrix>,
}

impl ReferenceSpec {
    pub fn constant(xbar: Vector) -> Self {
        Self {
            xbar: Reference::Constant(xbar),
            offset_cov: None,
        }
    }

    pub fn trajectory(xbar: Vec<Vector>) -> Self {
        Self {
            xbar: Reference::Trajectory(xbar),
            offset_cov: None,
        }
    }

    pub fn with_offset_cov(mut self, cov: Matrix) -> Self {
        self.offset_cov = Some(cov);
        self
    }

    /// `x̄_k`; constant references are defined at every index.
    pub fn at(&self, k: usize) -> Result<&Vector, ValidationError> {
        match &self.xbar {
            Reference::Constant(v) => Ok(v),
            Reference::Trajectory(list) => list.get(k).ok_or(ValidationError::IndexOutOfRange {
                index: k,
                last: list.len().saturating_sub(1),
            }),
        }
    }

    /// The limiting value tracked by time-invariant controllers: the constant, or
    /// the last listed point of a trajectory.
    pub fn limit(&self) -> &Vector {
        match &self.xbar {
            Reference::Constant(v) => v,
            Reference::Trajectory(list) => list.last().expect("validated trajectory is non-empty"),
        }
    }

    pub fn dim(&self) -> usize {
        self.limit().len()
    }

    /// Same reference shifted by a constant offset.
    pub fn shifted(&self, offset: &Vector) -> Self {
        let xbar = match &self.xbar {
            Reference::Constant(v) => Reference::Constant(v + offset),
            Reference::Trajectory(list) => {
                Reference::Trajectory(list.iter().map(|v| v + offset).collect())
            }
        };
        Self {
            xbar,
            offset_cov: self.offset_cov.clone(),
        }
    }
}

/// `x̄_k`, or `IndexOutOfRange` past the end of a listed trajectory.
pub fn reference_at(reference: &ReferenceSpec, k: usize) -> Result<&Vector, ValidationError> {
    reference.at(k)
}

/// Checks vector lengths, the `N + 1` coverage of a listed trajectory (when a
/// horizon is given) and symmetrizes the offset covariance.
pub fn validate_reference(
    reference: &ReferenceSpec,
    n: usize,
    horizon: Option<usize>,
) -> Result<ReferenceSpec, ValidationError> {
    match &reference.xbar {
        Reference::Constant(v) => check_len("xbar", v, n)?,
        Reference::Trajectory(list) => {
            if list.is_empty() {
                return Err(ValidationError::WrongLength {
                    field: "xbar_list".into(),
                    expected: horizon.map_or(1, |h| h + 1),
                    found: 0,
                });
            }
            for (k, v) in list.iter().enumerate() {
                check_len(&format!("xbar_list[{k}]"), v, n)?;
            }
            if let Some(h) = horizon {
                if list.len() < h + 1 {
                    return Err(ValidationError::WrongLength {
                        field: "xbar_list".into(),
                        expected: h + 1,
                        found: list.len(),
                    });
                }
            }
        }
    }
    let offset_cov = match &reference.offset_cov {
        Some(c) => {
            check_shape("offset_cov", c, n, n)?;
            Some(psd("offset_cov", c)?)
        }
        None => None,
    };
    Ok(ReferenceSpec {
        xbar: reference.xbar.clone(),
        offset_cov,
    })
}

// ---------------------------------------------------------------------------
// Problem documents (JSON)

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemDoc {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
    pub x0_mean: Vec<f64>,
    pub x0_cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightDoc {
    Constant(Vec<Vec<f64>>),
    PerStage(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsDoc {
    #[serde(rename = "Q")]
    pub q: WeightDoc,
    #[serde(rename = "R")]
    pub r: WeightDoc,
    #[serde(rename = "Q_terminal")]
    pub q_terminal: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReferenceDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xbar: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xbar_list: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_cov: Option<Vec<Vec<f64>>>,
}

/// On-disk problem document: `system`, `weights`, `reference`, `horizon`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemDoc {
    pub system: SystemDoc,
    pub weights: WeightsDoc,
    pub reference: ReferenceDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

/// A parsed problem. Weights are validated later, once the horizon is known.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: ValidatedModel,
    pub weights: CostWeights,
    pub reference: ReferenceSpec,
    pub horizon: Option<usize>,
}

pub fn matrix_from_rows(field: &str, rows: &[Vec<f64>]) -> Result<Matrix, ValidationError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(ValidationError::DimensionMismatch {
            field: format!("{field}[{i}]"),
            expected: format!("row of length {ncols}"),
            found: format!("row of length {}", r.len()),
        });
    }
    Ok(Matrix::from_row_iterator(
        nrows,
        ncols,
        rows.iter().flat_map(|r| r.iter().copied()),
    ))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn weight_schedule(field: &str, doc: &WeightDoc) -> Result<WeightSchedule, ValidationError> {
    Ok(match doc {
        WeightDoc::Constant(rows) => WeightSchedule::Constant(matrix_from_rows(field, rows)?),
        WeightDoc::PerStage(list) => WeightSchedule::PerStage(
            list.iter()
                .enumerate()
                .map(|(k, rows)| matrix_from_rows(&format!("{field}[{k}]"), rows))
                .collect::<Result<_, _>>()?,
        ),
    })
}

impl ProblemDoc {
    pub fn parse(text: &str) -> Result<Self, ValidationError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ValidationError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ValidationError> {
        let text = fs::read_to_string(path).map_err(|e| ValidationError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn into_problem(self) -> Result<Problem, ValidationError> {
        let s = &self.system;
        let model = validate_model(SystemModel {
            a: matrix_from_rows("system.A", &s.a)?,
            b: matrix_from_rows("system.B", &s.b)?,
            c: matrix_from_rows("system.C", &s.c)?,
            w: matrix_from_rows("system.W", &s.w)?,
            v: matrix_from_rows("system.V", &s.v)?,
            x0_mean: Vector::from_vec(s.x0_mean.clone()),
            x0_cov: matrix_from_rows("system.x0_cov", &s.x0_cov)?,
        })?;
        let weights = CostWeights {
            q: weight_schedule("weights.Q", &self.weights.q)?,
            r: weight_schedule("weights.R", &self.weights.r)?,
            q_terminal: matrix_from_rows("weights.Q_terminal", &self.weights.q_terminal)?,
        };
        let xbar = match (&self.reference.xbar, &self.reference.xbar_list) {
            (Some(v), None) => Reference::Constant(Vector::from_vec(v.clone())),
            (None, Some(list)) => Reference::Trajectory(
                list.iter().map(|v| Vector::from_vec(v.clone())).collect(),
            ),
            _ => {
                return Err(ValidationError::Parse {
                    path: "reference".into(),
                    message: "exactly one of `xbar` or `xbar_list` is required".into(),
                })
            }
        };
        let offset_cov = self
            .reference
            .offset_cov
            .as_ref()
            .map(|rows| matrix_from_rows("reference.offset_cov", rows))
            .transpose()?;
        if self.horizon == Some(0) {
            return Err(ValidationError::Invalid("horizon must be positive".into()));
        }
        let reference = validate_reference(
            &ReferenceSpec { xbar, offset_cov },
            model.n(),
            self.horizon,
        )?;
        Ok(Problem {
            model,
            weights,
            reference,
            horizon: self.horizon,
        })
    }
}

impl Problem {
    pub fn load(path: &Path) -> Result<Self, ValidationError> {
        ProblemDoc::load(path)?.into_problem()
    }

    pub fn parse(text: &str) -> Result<Self, ValidationError> {
        ProblemDoc::parse(text)?.into_problem()
    }

    pub fn weights_for(&self, horizon: usize) -> Result<ValidatedWeights, ValidationError> {
        validate_weights(&self.weights, self.model.n(), self.model.m(), horizon)
    }
}
