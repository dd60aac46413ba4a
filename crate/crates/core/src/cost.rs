//! Assembly of the dense matching cost matrix (classification plus
//! localization plus background column) and the background-augmented
//! marginals that make the Hungarian assignment an optimal-transport
//! instance.

use ndarray::Array2;

use crate::error::{MatchError, Result};
use crate::geometry::{giou, iou, l1_box, BBox};
use crate::numeric::kahan_sum;

/// A model prediction: per-class probabilities plus a box.
///
/// With a softmax head the probabilities sum to 1; sigmoid/focal heads relax
/// that, so only the per-entry `[0, 1]` range is enforced here.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub class_probs: Vec<f64>,
    pub bbox: BBox,
}

impl Prediction {
    pub fn new(class_probs: Vec<f64>, bbox: BBox) -> Result<Self> {
        if class_probs.is_empty() {
            return Err(MatchError::EmptyInput("class_probs"));
        }
        if class_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(MatchError::InvalidArgument(
                "class probabilities must lie in [0,1]".into(),
            ));
        }
        Ok(Self { class_probs, bbox })
    }
}

/// An annotated object: class index plus a box.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub class_id: usize,
    pub bbox: BBox,
}

/// Weights of the composite matching cost and the constant background cost.
#[derive(Debug, Clone, Copy)]
pub struct CostWeights {
    pub lambda_prob: f64,
    pub lambda_l1: f64,
    pub lambda_giou: f64,
    pub lambda_iou: f64,
    pub c_background: f64,
}

impl CostWeights {
    pub fn new(
        lambda_prob: f64,
        lambda_l1: f64,
        lambda_giou: f64,
        lambda_iou: f64,
        c_background: f64,
    ) -> Result<Self> {
        let lambdas = [lambda_prob, lambda_l1, lambda_giou, lambda_iou];
        if lambdas.iter().any(|l| *l < 0.0 || !l.is_finite()) {
            return Err(MatchError::InvalidArgument(
                "cost weights must be finite and nonnegative".into(),
            ));
        }
        if lambdas.iter().all(|l| *l == 0.0) {
            return Err(MatchError::InvalidArgument(
                "at least one cost weight must be strictly positive".into(),
            ));
        }
        if !c_background.is_finite() {
            return Err(MatchError::InvalidArgument(
                "background cost must be finite".into(),
            ));
        }
        Ok(Self {
            lambda_prob,
            lambda_l1,
            lambda_giou,
            lambda_iou,
            c_background,
        })
    }

    /// Transformer-detector preset: probability 2, l1 5, GIoU 2, background 0.8.
    pub fn detr() -> Self {
        Self {
            lambda_prob: 2.0,
            lambda_l1: 5.0,
            lambda_giou: 2.0,
            lambda_iou: 0.0,
            c_background: 0.8,
        }
    }

    /// Anchor-detector preset: pure IoU cost with the 0.5 matching threshold
    /// playing the role of the background cost.
    pub fn ssd() -> Self {
        Self {
            lambda_prob: 0.0,
            lambda_l1: 0.0,
            lambda_giou: 0.0,
            lambda_iou: 1.0,
            c_background: 0.5,
        }
    }
}

/// Dense `np x (ng + 1)` matching cost; the last column is the background
/// unless the matrix was built without one.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: Array2<f64>,
    ng: usize,
    background: bool,
}

impl CostMatrix {
    /// Wraps a dense matrix whose last column is the background. A single
    /// column is legal and means "no real ground truths".
    pub fn with_background(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(MatchError::DimensionMismatch(format!(
                "background cost matrix needs >= 1 row and >= 1 column, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        Self::checked(values, true)
    }

    /// Wraps a dense matrix with no background column (all columns are
    /// real ground truths).
    pub fn without_background(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(MatchError::DimensionMismatch(
                "cost matrix must be non-empty".into(),
            ));
        }
        Self::checked(values, false)
    }

    fn checked(values: Array2<f64>, background: bool) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MatchError::InvalidArgument(
                "cost matrix entries must be finite".into(),
            ));
        }
        let ng = values.ncols() - usize::from(background);
        Ok(Self {
            values,
            ng,
            background,
        })
    }

    /// Number of predictions (rows).
    pub fn np(&self) -> usize {
        self.values.nrows()
    }

    /// Number of real ground truths (columns excluding the background).
    pub fn ng(&self) -> usize {
        self.ng
    }

    /// Total number of columns.
    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn has_background(&self) -> bool {
        self.background
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }
}

/// Row and column mass distributions for a transport instance. Both sides
/// must be nonnegative and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalPair {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl MarginalPair {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        for (name, side) in [("alpha", &alpha), ("beta", &beta)] {
            if side.is_empty() {
                return Err(MatchError::EmptyInput("marginal"));
            }
            if side.iter().any(|x| *x < 0.0 || !x.is_finite()) {
                return Err(MatchError::InvalidArgument(format!(
                    "{name} must be nonnegative and finite"
                )));
            }
            let total = kahan_sum(side.iter().copied());
            if (total - 1.0).abs() > 1e-12 {
                return Err(MatchError::InvalidArgument(format!(
                    "{name} must sum to 1 (got {total})"
                )));
            }
        }
        Ok(Self { alpha, beta })
    }

    /// Uniform `1/np` over rows and `1/m` over `m` columns; the plain
    /// no-background convention.
    pub fn uniform(np: usize, m: usize) -> Result<Self> {
        if np == 0 || m == 0 {
            return Err(MatchError::EmptyInput("marginal"));
        }
        Self::new(vec![1.0 / np as f64; np], vec![1.0 / m as f64; m])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }
}

/// Composite matching cost:
/// `lambda_prob (1 - c_hat[class]) + lambda_l1 |b_hat - b|_1
///  + lambda_giou (1 - GIoU) + lambda_iou (1 - IoU)`,
/// with the background column filled with the constant `c_background`.
pub fn build_cost(
    preds: &[Prediction],
    gts: &[GroundTruth],
    w: &CostWeights,
) -> Result<CostMatrix> {
    if preds.is_empty() {
        return Err(MatchError::EmptyInput("predictions"));
    }
    let nc = preds[0].class_probs.len();
    if preds.iter().any(|p| p.class_probs.len() != nc) {
        return Err(MatchError::DimensionMismatch(
            "predictions disagree on class count".into(),
        ));
    }
    if let Some(g) = gts.iter().find(|g| g.class_id >= nc) {
        return Err(MatchError::InvalidArgument(format!(
            "ground-truth class {} out of range for {} classes",
            g.class_id, nc
        )));
    }

    let np = preds.len();
    let ng = gts.len();
    let mut values = Array2::zeros((np, ng + 1));
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let mut c = 0.0;
            if w.lambda_prob > 0.0 {
                c += w.lambda_prob * (1.0 - p.class_probs[g.class_id]);
            }
            if w.lambda_l1 > 0.0 {
                c += w.lambda_l1 * l1_box(&p.bbox, &g.bbox);
            }
            if w.lambda_giou > 0.0 {
                c += w.lambda_giou * (1.0 - giou(&p.bbox, &g.bbox));
            }
            if w.lambda_iou > 0.0 {
                c += w.lambda_iou * (1.0 - iou(&p.bbox, &g.bbox));
            }
            values[(i, j)] = c;
        }
        values[(i, ng)] = w.c_background;
    }
    CostMatrix::with_background(values)
}

/// The background-augmented marginals that make bipartite matching an
/// optimal-transport instance: uniform `1/np` over predictions, `1/np` per
/// ground truth and `(np - ng)/np` on the background entry.
pub fn prop1_marginals(np: usize, ng: usize) -> Result<MarginalPair> {
    if np == 0 {
        return Err(MatchError::EmptyInput("predictions"));
    }
    if ng > np {
        return Err(MatchError::Infeasible { np, ng });
    }
    let npf = np as f64;
    let alpha = vec![1.0 / npf; np];
    let mut beta = vec![1.0 / npf; ng];
    beta.push((np - ng) as f64 / npf);
    MarginalPair::new(alpha, beta)
}
