use mawseo_nn::{check_gradients, Graph, Init, ParamStore, Tensor};
use proptest::prelude::*;

fn store_with(shapes: &[(usize, usize)], seed: u64) -> ParamStore {
    let mut store = ParamStore::new();
    let mut init = Init::new(seed);
    for (i, &(r, c)) in shapes.iter().enumerate() {
        store.add(format!("p{i}"), init.uniform(r, c, 1.0));
    }
    store
}

#[test]
fn elementwise_and_matrix_ops() {
    let store = store_with(&[(3, 4), (4, 2), (1, 2), (3, 2)], 11);
    let ids: Vec<_> = store.ids().collect();
    let report = check_gradients(&store, 1e-6, |g| {
        let a = g.param(ids[0]);
        let b = g.param(ids[1]);
        let r = g.param(ids[2]);
        let c = g.param(ids[3]);
        let ab = g.matmul(a, b);
        let ab = g.add_row(ab, r);
        let t = g.tanh(ab);
        let s = g.sigmoid(c);
        let m = g.mul(t, s);
        let m = g.mul_row(m, r);
        let d = g.sub(m, c);
        let e = g.exp(d);
        let e = g.add_const(e, 1.0);
        let l = g.log(e);
        let q = g.matmul_t(l, c);
        let q = g.square(q);
        let tr = g.transpose(q);
        let sm = g.softmax_rows(tr);
        let lsm = g.log_softmax_rows(q);
        let x = g.sum(sm);
        let y = g.mean(lsm);
        let z = g.scale_by(lsm, x);
        let denom = e.clone_var(g);
        let z = g.div_by(z, denom);
        let zs = g.sum(z);
        g.add(zs, y)
    });
    assert!(report.passes(1e-4), "{report:?}");
}

trait CloneVar {
    fn clone_var(self, g: &mut Graph<'_>) -> mawseo_nn::Var;
}

impl CloneVar for mawseo_nn::Var {
    /// A positive scalar derived from `self`.
    fn clone_var(self, g: &mut Graph<'_>) -> mawseo_nn::Var {
        let s = g.sum(self);
        let s = g.square(s);
        g.add_const(s, 1.0)
    }
}

#[test]
fn structural_ops() {
    let store = store_with(&[(2, 3), (2, 2), (4, 3)], 12);
    let ids: Vec<_> = store.ids().collect();
    let report = check_gradients(&store, 1e-6, |g| {
        let a = g.param(ids[0]);
        let b = g.param(ids[1]);
        let c = g.param(ids[2]);
        let cc = g.concat_cols(&[a, b]);
        let s = g.slice_cols(cc, 1, 3);
        let cr = g.concat_rows(&[s, c]);
        let sr = g.slice_rows(cr, 1, 4);
        let re = g.reshape(sr, 3, 4);
        let gath = g.gather(re, &[0, 5, 5, 11]);
        let sr2 = g.sum_rows(re);
        let sc = g.sum_cols(re);
        let sc = g.transpose(sc);
        let mr = g.mean_rows(re);
        let cl = g.clamp(mr, -0.3, 0.3);
        let parts = g.concat_cols(&[gath, sr2, sc, cl]);
        let sq = g.square(parts);
        g.sum(sq)
    });
    assert!(report.passes(1e-4), "{report:?}");
}

#[test]
fn cosine_and_pooling_ops() {
    let store = store_with(&[(2, 5), (6, 5)], 13);
    let ids: Vec<_> = store.ids().collect();
    let report = check_gradients(&store, 1e-6, |g| {
        let a = g.param(ids[0]);
        let b = g.param(ids[1]);
        let cos = g.cosine_rows(a, b);
        let mx = g.max_cols(cos);
        let km = g.kmax_mean_cols(cos, 3);
        let both = g.add(mx, km);
        let s = g.sum(both);
        let a0 = g.slice_rows(a, 0, 1);
        let b0 = g.slice_rows(b, 2, 1);
        let c = g.cosine(a0, b0);
        g.add(s, c)
    });
    assert!(report.passes(1e-5), "{report:?}");
}

#[test]
fn crf_nll_gradients() {
    let store = store_with(&[(5, 3), (3, 3), (1, 3), (1, 3)], 14);
    let ids: Vec<_> = store.ids().collect();
    let report = check_gradients(&store, 1e-6, |g| {
        let e = g.param(ids[0]);
        let t = g.param(ids[1]);
        let s = g.param(ids[2]);
        let n = g.param(ids[3]);
        g.crf_nll(e, t, s, n, &[0, 2, 2, 1, 0])
    });
    assert!(report.passes(1e-4), "{report:?}");
}

#[test]
fn repeated_backward_sweeps_are_independent() {
    let mut g = Graph::new();
    let x = g.input(Tensor::row_vector(vec![1.0, 2.0]));
    let a = g.sum(x);
    let sq = g.square(x);
    let b = g.sum(sq);
    let ga = g.backward(a);
    let gb = g.backward(b);
    assert_eq!(ga.wrt(x).unwrap().data(), &[1.0, 1.0]);
    assert_eq!(gb.wrt(x).unwrap().data(), &[2.0, 4.0]);
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(v in proptest::collection::vec(-30.0f64..30.0, 1..20)) {
        let mut g = Graph::new();
        let x = g.input(Tensor::row_vector(v));
        let s = g.softmax_rows(x);
        let total: f64 = g.value(s).data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_rows_bounded(a in proptest::collection::vec(-5.0f64..5.0, 4), b in proptest::collection::vec(-5.0f64..5.0, 4)) {
        let mut g = Graph::new();
        let x = g.input(Tensor::row_vector(a));
        let y = g.input(Tensor::row_vector(b));
        let c = g.cosine(x, y);
        let v = g.scalar(c);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
    }
}
