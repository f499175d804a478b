//! Linear-chain CRF math in log space: partition function, marginals and
//! Viterbi decoding. The differentiable NLL op in [`crate::graph`] is built
//! on these.

use crate::tensor::Tensor;

pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Posterior quantities of a CRF over one sequence.
#[derive(Clone, Debug)]
pub struct CrfMarginals {
    pub log_partition: f64,
    /// `T × L` per-position label marginals; each row sums to 1.
    pub unary: Tensor,
    /// `L × L` expected transition counts summed over positions.
    pub pair: Tensor,
}

fn check_shapes(emissions: &Tensor, transitions: &Tensor, start: &Tensor, end: &Tensor) -> usize {
    let labels = emissions.cols();
    assert!(emissions.rows() > 0, "CRF over an empty sequence");
    assert_eq!(transitions.shape(), (labels, labels), "transition matrix shape");
    assert_eq!(start.shape(), (1, labels), "start scores shape");
    assert_eq!(end.shape(), (1, labels), "end scores shape");
    labels
}

pub fn marginals(emissions: &Tensor, transitions: &Tensor, start: &Tensor, end: &Tensor) -> CrfMarginals {
    let labels = check_shapes(emissions, transitions, start, end);
    let steps = emissions.rows();

    let mut alpha = Tensor::zeros(steps, labels);
    for j in 0..labels {
        alpha.set(0, j, start.get(0, j) + emissions.get(0, j));
    }
    for t in 1..steps {
        for j in 0..labels {
            let v = log_sum_exp((0..labels).map(|i| alpha.get(t - 1, i) + transitions.get(i, j)));
            alpha.set(t, j, v + emissions.get(t, j));
        }
    }
    let log_partition = log_sum_exp((0..labels).map(|j| alpha.get(steps - 1, j) + end.get(0, j)));

    let mut beta = Tensor::zeros(steps, labels);
    for j in 0..labels {
        beta.set(steps - 1, j, end.get(0, j));
    }
    for t in (0..steps - 1).rev() {
        for i in 0..labels {
            let v = log_sum_exp(
                (0..labels).map(|j| transitions.get(i, j) + emissions.get(t + 1, j) + beta.get(t + 1, j)),
            );
            beta.set(t, i, v);
        }
    }

    let mut unary = Tensor::zeros(steps, labels);
    for t in 0..steps {
        for j in 0..labels {
            unary.set(t, j, (alpha.get(t, j) + beta.get(t, j) - log_partition).exp());
        }
    }
    let mut pair = Tensor::zeros(labels, labels);
    for t in 0..steps.saturating_sub(1) {
        for i in 0..labels {
            for j in 0..labels {
                let lp = alpha.get(t, i) + transitions.get(i, j) + emissions.get(t + 1, j) + beta.get(t + 1, j)
                    - log_partition;
                pair.set(i, j, pair.get(i, j) + lp.exp());
            }
        }
    }
    CrfMarginals { log_partition, unary, pair }
}

pub fn sequence_score(emissions: &Tensor, transitions: &Tensor, start: &Tensor, end: &Tensor, tags: &[usize]) -> f64 {
    check_shapes(emissions, transitions, start, end);
    assert_eq!(tags.len(), emissions.rows(), "tag sequence length");
    let mut s = start.get(0, tags[0]) + end.get(0, tags[tags.len() - 1]);
    for (t, &y) in tags.iter().enumerate() {
        s += emissions.get(t, y);
        if t > 0 {
            s += transitions.get(tags[t - 1], y);
        }
    }
    s
}

/// Highest-scoring label sequence. Ties resolve to the lowest label index.
pub fn viterbi(emissions: &Tensor, transitions: &Tensor, start: &Tensor, end: &Tensor) -> Vec<usize> {
    let labels = check_shapes(emissions, transitions, start, end);
    let steps = emissions.rows();
    let mut score: Vec<f64> = (0..labels).map(|j| start.get(0, j) + emissions.get(0, j)).collect();
    let mut back = vec![vec![0usize; labels]; steps];
    for t in 1..steps {
        let mut next = vec![0.0; labels];
        for j in 0..labels {
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (i, s) in score.iter().enumerate() {
                let v = s + transitions.get(i, j);
                if v > best.0 {
                    best = (v, i);
                }
            }
            next[j] = best.0 + emissions.get(t, j);
            back[t][j] = best.1;
        }
        score = next;
    }
    let mut last = 0;
    let mut best = f64::NEG_INFINITY;
    for (j, s) in score.iter().enumerate() {
        let v = s + end.get(0, j);
        if v > best {
            best = v;
            last = j;
        }
    }
    let mut path = vec![0; steps];
    path[steps - 1] = last;
    for t in (1..steps).rev() {
        path[t - 1] = back[t][path[t]];
    }
    path
}
