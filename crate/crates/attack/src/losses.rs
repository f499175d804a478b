//! The four adversarial losses, as plain functions and as tape
//! operations.

use mawseo_core::cosine;
use mawseo_nn::{Graph, Tensor, Var};

use crate::ranker::SubstituteRanker;

pub const PROBABILITY_FLOOR: f64 = 1e-7;

pub fn rank_loss_value(score: f64) -> f64 {
    -score
}

pub fn detect_loss_value(d_true: f64, d_false: f64) -> f64 {
    let c = |p: f64| p.clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR);
    c(d_true).ln() - c(d_false).ln()
}

pub fn topic_loss_value(p_soft: &[f64], topic: &[f64]) -> f64 {
    -cosine(p_soft, topic)
}

pub fn consistency_loss_value(p_soft: &[f64], upper: &[f64], lower: &[f64]) -> f64 {
    -0.5 * (cosine(p_soft, upper) + cosine(p_soft, lower))
}

/// `−Score(q, doc)` where `doc` already contains the soft paragraph.
pub fn rank_loss(g: &mut Graph<'_>, ranker: &SubstituteRanker, query: &Tensor, doc: Var) -> Var {
    let s = ranker.score_var(g, query, doc);
    g.neg(s)
}

/// `log d_true − log d_false` from a `1×2` probability row.
pub fn detect_loss(g: &mut Graph<'_>, probabilities: Var) -> Var {
    let p = g.clamp(probabilities, PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR);
    let lp = g.log(p);
    let t = g.slice_cols(lp, 0, 1);
    let f = g.slice_cols(lp, 1, 1);
    let d = g.sub(t, f);
    g.sum(d)
}

pub fn topic_loss(g: &mut Graph<'_>, p_soft: Var, topic: Var) -> Var {
    let c = g.cosine(p_soft, topic);
    g.neg(c)
}

pub fn consistency_loss(g: &mut Graph<'_>, p_soft: Var, upper: Var, lower: Var) -> Var {
    let a = g.cosine(p_soft, upper);
    let b = g.cosine(p_soft, lower);
    let s = g.add(a, b);
    g.scale(s, -0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranker::RankerConfig;
    use mawseo_nn::{gradcheck::relative_error, Init};

    #[test]
    fn analytic_values() {
        assert_eq!(rank_loss_value(5.0), -5.0);
        assert_eq!(detect_loss_value(0.5, 0.5), 0.0);
        assert!((detect_loss_value(0.1, 0.9) - (-2.1972245773362196)).abs() < 1e-12);
        let v = [0.3, -0.4, 1.2];
        assert!((topic_loss_value(&v, &v) + 1.0).abs() < 1e-12);
        assert_eq!(consistency_loss_value(&[1.0, 0.0], &[0.0, 1.0], &[0.0, -2.0]), 0.0);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!(consistency_loss_value(&v, &v, &neg).abs() < 1e-12);
    }

    #[test]
    fn detect_loss_is_antisymmetric_and_increasing() {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..200 {
            let t = i as f64 / 200.0;
            let l = detect_loss_value(t, 1.0 - t);
            assert!((l + detect_loss_value(1.0 - t, t)).abs() < 1e-12);
            assert!(l > prev);
            prev = l;
        }
        assert!(detect_loss_value(0.0, 1.0).is_finite());
    }

    #[test]
    fn tape_versions_agree_with_values() {
        let mut g = Graph::new();
        let p = g.input(Tensor::row_vector(vec![0.25, 0.75]));
        let l = detect_loss(&mut g, p);
        assert!((g.scalar(l) - detect_loss_value(0.25, 0.75)).abs() < 1e-12);
        let a = g.input(Tensor::row_vector(vec![1.0, 2.0, 0.5]));
        let b = g.input(Tensor::row_vector(vec![-1.0, 0.3, 2.0]));
        let c = g.input(Tensor::row_vector(vec![0.2, 0.2, 0.1]));
        let t = topic_loss(&mut g, a, b);
        assert!((g.scalar(t) - topic_loss_value(&[1.0, 2.0, 0.5], &[-1.0, 0.3, 2.0])).abs() < 1e-12);
        let s = consistency_loss(&mut g, a, b, c);
        let want = consistency_loss_value(&[1.0, 2.0, 0.5], &[-1.0, 0.3, 2.0], &[0.2, 0.2, 0.1]);
        assert!((g.scalar(s) - want).abs() < 1e-12);
    }

    #[test]
    fn rank_loss_gradient_wrt_soft_rows() {
        let mut ranker = SubstituteRanker::new(4, RankerConfig { hidden_dim: 3, head_hidden: 5, kmax: 2, ..RankerConfig::default() });
        // a fresh head has a zero output layer, which would make the score
        // independent of the document
        let mut init = Init::new(5);
        let ids: Vec<_> = ranker.store().ids().collect();
        for id in ids {
            let (r, c) = ranker.store().get(id).shape();
            *ranker.store_mut().get_mut(id) = init.uniform(r, c, 0.8);
        }
        let query = Init::new(1).uniform(2, 4, 1.0);
        let article = Init::new(2).uniform(5, 4, 1.0);
        let soft = Init::new(3).uniform(3, 4, 1.0);
        let eval = |soft: &Tensor| -> (f64, Tensor, Tensor) {
            let mut g = Graph::with_params(ranker.store());
            let a = g.input(article.clone());
            let s = g.input(soft.clone());
            let doc = g.concat_rows(&[a, s]);
            let l = rank_loss(&mut g, &ranker, &query, doc);
            let sc = ranker.score_var(&mut g, &query, doc);
            let gl = g.backward(l);
            let gs = g.backward(sc);
            (g.scalar(l), gl.wrt(s).unwrap().clone(), gs.wrt(s).unwrap().clone())
        };
        let (_, grad, score_grad) = eval(&soft);
        for (a, b) in grad.data().iter().zip(score_grad.data()) {
            assert!((a + b).abs() < 1e-12);
        }
        let eps = 1e-6;
        for k in 0..soft.len() {
            let mut up = soft.clone();
            up.data_mut()[k] += eps;
            let mut down = soft.clone();
            down.data_mut()[k] -= eps;
            let numeric = (eval(&up).0 - eval(&down).0) / (2.0 * eps);
            assert!(relative_error(grad.data()[k], numeric) <= 1e-3, "entry {k}: {} vs {numeric}", grad.data()[k]);
        }
    }
}
