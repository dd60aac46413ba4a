//! File formats: problem JSON, cost-matrix CSV, plan/assignment output in
//! JSON or CSV, and the solve summary block.
//!
//! JSON numbers are written with the shortest representation that parses
//! back to the identical f64, so plan round-trips are bit exact.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use uotod_core::{
    Assignment, BBox, CostMatrix, CostWeights, GroundTruth, ObjectiveBreakdown, Prediction,
    TransportPlan,
};

use crate::HarnessError;

#[derive(Debug, Serialize, Deserialize)]
struct PredictionRecord {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    class_probs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GroundTruthRecord {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    class_id: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightsRecord {
    lambda_prob: f64,
    lambda_l1: f64,
    lambda_giou: f64,
    lambda_iou: f64,
    c_background: f64,
}

/// One matching problem: predictions, ground truths, and cost weights.
#[derive(Debug, Serialize, Deserialize)]
pub struct ProblemRecord {
    predictions: Vec<PredictionRecord>,
    ground_truth: Vec<GroundTruthRecord>,
    weights: WeightsRecord,
}

pub struct Problem {
    pub predictions: Vec<Prediction>,
    pub ground_truth: Vec<GroundTruth>,
    pub weights: CostWeights,
}

impl ProblemRecord {
    pub fn from_problem(p: &Problem) -> Self {
        Self {
            predictions: p
                .predictions
                .iter()
                .map(|pr| PredictionRecord {
                    bbox: [pr.bbox.cx(), pr.bbox.cy(), pr.bbox.w(), pr.bbox.h()],
                    class_probs: pr.class_probs.clone(),
                })
                .collect(),
            ground_truth: p
                .ground_truth
                .iter()
                .map(|g| GroundTruthRecord {
                    bbox: [g.bbox.cx(), g.bbox.cy(), g.bbox.w(), g.bbox.h()],
                    class_id: g.class_id,
                })
                .collect(),
            weights: WeightsRecord {
                lambda_prob: p.weights.lambda_prob,
                lambda_l1: p.weights.lambda_l1,
                lambda_giou: p.weights.lambda_giou,
                lambda_iou: p.weights.lambda_iou,
                c_background: p.weights.c_background,
            },
        }
    }

    pub fn into_problem(self) -> Result<Problem, HarnessError> {
        let predictions = self
            .predictions
            .into_iter()
            .map(|r| {
                let b = BBox::new(r.bbox[0], r.bbox[1], r.bbox[2], r.bbox[3])?;
                Ok(Prediction::new(r.class_probs, b)?)
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let ground_truth = self
            .ground_truth
            .into_iter()
            .map(|r| {
                let b = BBox::new(r.bbox[0], r.bbox[1], r.bbox[2], r.bbox[3])?;
                Ok(GroundTruth {
                    class_id: r.class_id,
                    bbox: b,
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let weights = CostWeights::new(
            self.weights.lambda_prob,
            self.weights.lambda_l1,
            self.weights.lambda_giou,
            self.weights.lambda_iou,
            self.weights.c_background,
        )?;
        Ok(Problem {
            predictions,
            ground_truth,
            weights,
        })
    }
}

pub fn save_problem(path: &Path, problem: &Problem) -> Result<(), HarnessError> {
    let record = ProblemRecord::from_problem(problem);
    fs::write(path, serde_json::to_string_pretty(&record)?)?;
    Ok(())
}

pub fn load_problem(path: &Path) -> Result<Problem, HarnessError> {
    let text = fs::read_to_string(path)?;
    let record: ProblemRecord = serde_json::from_str(&text)?;
    record.into_problem()
}

/// Reads a plain cost CSV: a one-line header, then `np` rows of
/// `ng + 1` comma-separated values whose last column is the background.
pub fn load_cost_csv(path: &Path) -> Result<CostMatrix, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| HarnessError::Format(format!("bad number {tok:?} on line {}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(HarnessError::Format("cost CSV has no data rows".into()));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(HarnessError::Format("ragged cost CSV".into()));
    }
    let mut values = Array2::zeros((rows.len(), cols));
    for (i, row) in rows.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            values[(i, j)] = *x;
        }
    }
    Ok(CostMatrix::with_background(values)?)
}

pub fn write_cost_csv(path: &Path, cost: &CostMatrix) -> Result<(), HarnessError> {
    let mut out = String::new();
    let header: Vec<String> = (0..cost.ng())
        .map(|j| format!("gt{j}"))
        .chain(std::iter::once("background".to_string()))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..cost.np() {
        let row: Vec<String> = (0..cost.cols()).map(|j| format!("{}", cost.get(i, j))).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Solve summary reported next to every plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub solver: String,
    pub np: usize,
    pub ng: usize,
    pub transport_cost: f64,
    pub objective_transport: f64,
    pub objective_entropy: f64,
    pub objective_kl_alpha: f64,
    pub objective_kl_beta: f64,
    pub objective_total: f64,
    pub row_residual: f64,
    pub col_residual: f64,
    pub n_pos: f64,
    pub n_neg: f64,
    pub iterations_run: Option<usize>,
}

impl Summary {
    pub fn set_objective(&mut self, o: &ObjectiveBreakdown) {
        self.objective_transport = o.transport_term;
        self.objective_entropy = o.entropy_term;
        self.objective_kl_alpha = o.kl_alpha_term;
        self.objective_kl_beta = o.kl_beta_term;
        self.objective_total = o.total;
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlanFile {
    pub np: usize,
    pub cols: usize,
    pub values: Vec<Vec<f64>>,
    pub summary: Summary,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AssignmentFile {
    pub gt_to_pred: Vec<usize>,
    pub total_cost: f64,
    pub summary: Summary,
}

pub fn plan_to_rows(plan: &TransportPlan) -> Vec<Vec<f64>> {
    (0..plan.np())
        .map(|i| (0..plan.cols()).map(|j| plan.get(i, j)).collect())
        .collect()
}

pub fn write_plan_json(
    path: &Path,
    plan: &TransportPlan,
    summary: &Summary,
) -> Result<(), HarnessError> {
    let file = PlanFile {
        np: plan.np(),
        cols: plan.cols(),
        values: plan_to_rows(plan),
        summary: summary.clone(),
    };
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn read_plan_json(path: &Path) -> Result<(TransportPlan, Summary), HarnessError> {
    let text = fs::read_to_string(path)?;
    let file: PlanFile = serde_json::from_str(&text)?;
    let mut values = Array2::zeros((file.np, file.cols));
    for (i, row) in file.values.iter().enumerate() {
        if row.len() != file.cols {
            return Err(HarnessError::Format("ragged plan rows".into()));
        }
        for (j, x) in row.iter().enumerate() {
            values[(i, j)] = *x;
        }
    }
    Ok((TransportPlan::from_array(values)?, file.summary))
}

pub fn write_plan_csv(path: &Path, plan: &TransportPlan) -> Result<(), HarnessError> {
    let mut out = String::new();
    let header: Vec<String> = (0..plan.cols()).map(|j| format!("col{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..plan.np() {
        let row: Vec<String> = (0..plan.cols()).map(|j| format!("{}", plan.get(i, j))).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_assignment_json(
    path: &Path,
    a: &Assignment,
    summary: &Summary,
) -> Result<(), HarnessError> {
    let file = AssignmentFile {
        gt_to_pred: a.gt_to_pred.clone(),
        total_cost: a.total_cost,
        summary: summary.clone(),
    };
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn write_assignment_csv(path: &Path, a: &Assignment) -> Result<(), HarnessError> {
    let mut out = String::from("gt,pred\n");
    for (j, i) in a.gt_to_pred.iter().enumerate() {
        out.push_str(&format!("{j},{i}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}
