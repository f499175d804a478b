//! Min-norm task weighting: the point of the simplex whose combination of
//! task gradients has the smallest norm, found by Frank–Wolfe with away
//! steps on the Gram matrix.

use serde::{Deserialize, Serialize};

use crate::error::{contract, AttackError, Result};

pub const MAX_ITERATIONS: usize = 250;
pub const GAP_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinNormSolution {
    pub weights: Vec<f64>,
    /// `‖Σ wᵢ gᵢ‖²` at the returned weights.
    pub objective: f64,
    pub iterations: usize,
    /// Frank–Wolfe duality gap at exit.
    pub gap: f64,
}

/// The four per-task losses and their flattened gradients with respect to
/// one shared vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskGradients {
    pub losses: [f64; 4],
    /// Order: rank, detect, topic, sem.
    pub gradients: [Vec<f64>; 4],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MgdaWeights {
    pub rank: f64,
    pub detect: f64,
    pub topic: f64,
    pub sem: f64,
}

impl MgdaWeights {
    pub fn uniform() -> Self {
        Self { rank: 0.25, detect: 0.25, topic: 0.25, sem: 0.25 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.rank, self.detect, self.topic, self.sem]
    }

    pub fn from_array(w: [f64; 4]) -> Self {
        Self { rank: w[0], detect: w[1], topic: w[2], sem: w[3] }
    }
}

fn gram(grads: &[Vec<f64>]) -> Vec<Vec<f64>> {
    grads.iter().map(|a| grads.iter().map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect()).collect()
}

fn mat_vec(m: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(w).map(|(a, b)| a * b).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `argmin_{w ∈ Δ} ‖Σ wᵢ gᵢ‖²` for 2–4 gradients of equal length.
/// Starts from uniform weights, so equal gradients return uniform
/// weights. Ties between vertices go to the lowest index.
pub fn min_norm_weights(grads: &[Vec<f64>]) -> Result<MinNormSolution> {
    let n = grads.len();
    if !(2..=4).contains(&n) {
        return Err(contract(format!("min-norm weighting takes 2 to 4 gradients, got {n}")));
    }
    if grads.iter().any(|g| g.len() != grads[0].len()) {
        return Err(contract("task gradients differ in length"));
    }
    if grads.iter().flatten().any(|x| !x.is_finite()) {
        return Err(AttackError::Numeric("non-finite task gradient".into()));
    }
    let m = gram(grads);
    let mut w = vec![1.0 / n as f64; n];
    let mut iterations = 0;
    let mut gap;
    loop {
        let mw = mat_vec(&m, &w);
        let obj = dot(&w, &mw);
        let s = (0..n).fold(0, |best, i| if mw[i] < mw[best] { i } else { best });
        gap = obj - mw[s];
        if gap < GAP_TOLERANCE || iterations >= MAX_ITERATIONS {
            break;
        }
        iterations += 1;
        let away = (0..n).filter(|&i| w[i] > 0.0).fold(None, |best: Option<usize>, i| match best {
            Some(b) if mw[b] >= mw[i] => Some(b),
            _ => Some(i),
        });
        let away = away.expect("weights sum to one");
        let away_gap = mw[away] - obj;
        let (d, max_step) = if gap >= away_gap || w[away] >= 1.0 {
            let mut d: Vec<f64> = w.iter().map(|x| -x).collect();
            d[s] += 1.0;
            (d, 1.0)
        } else {
            let mut d = w.clone();
            d[away] -= 1.0;
            (d, w[away] / (1.0 - w[away]))
        };
        let md = mat_vec(&m, &d);
        let curvature = dot(&d, &md);
        let slope = dot(&d, &mw);
        let step = if curvature > 0.0 { (-slope / curvature).clamp(0.0, max_step) } else if slope < 0.0 { max_step } else { 0.0 };
        if step == 0.0 {
            break;
        }
        for (wi, di) in w.iter_mut().zip(&d) {
            *wi = (*wi + step * di).max(0.0);
        }
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= z);
    }
    let objective = dot(&w, &mat_vec(&m, &w));
    Ok(MinNormSolution { weights: w, objective, iterations, gap })
}

/// Min-norm weights over the four task gradients.
pub fn mgda_weights(g: &TaskGradients) -> Result<MgdaWeights> {
    let sol = min_norm_weights(&g.gradients)?;
    Ok(MgdaWeights::from_array([sol.weights[0], sol.weights[1], sol.weights[2], sol.weights[3]]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_unit_gradients_split_evenly() {
        let s = min_norm_weights(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((s.weights[0] - 0.5).abs() < 1e-12 && (s.weights[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn equal_gradients_stay_uniform() {
        let g = vec![0.3, -1.2, 2.0];
        let s = min_norm_weights(&[g.clone(), g.clone(), g]).unwrap();
        assert_eq!(s.iterations, 0);
        assert!(s.weights.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn two_to_one_case_matches_a_grid_search() {
        let g = [vec![2.0, 0.0], vec![0.0, 1.0]];
        let s = min_norm_weights(&g).unwrap();
        assert!((s.weights[0] - 0.2).abs() < 1e-9 && (s.weights[1] - 0.8).abs() < 1e-9);
        let f = |w: f64| (2.0 * w).powi(2) + (1.0 - w).powi(2);
        let best = (0..=10_000).map(|i| i as f64 * 1e-4).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
        assert!((best - 0.2).abs() < 1e-4);
        assert!((s.objective - f(0.2)).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(min_norm_weights(&[vec![1.0], vec![f64::NAN]]), Err(AttackError::Numeric(_))));
        assert!(matches!(min_norm_weights(&[vec![1.0]]), Err(AttackError::Contract(_))));
        assert!(matches!(min_norm_weights(&[vec![1.0], vec![1.0, 2.0]]), Err(AttackError::Contract(_))));
    }
}
