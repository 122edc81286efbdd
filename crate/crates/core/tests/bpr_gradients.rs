mod common;

use common::{random_params, random_store, rng, StoreShape};
use mixmatch_core::catalog::EmbeddingStore;
use mixmatch_core::retrieval::{bpr_gradients, bpr_loss, item_key, query_key, MatchModelParams, TrainingTriple};
use rand::Rng;

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;
/// Floor of the relative-error denominator for near-zero components.
const FLOOR: f64 = 1e-2;

/// f64 restatement of the model used as the finite-difference target.
#[derive(Clone)]
struct Params64 {
    d: usize,
    alpha: f64,
    w1: Vec<f64>,
    beta: [f64; 3],
    emb: [Vec<f64>; 3],
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

fn project(f: &[f64], w1: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for (a, &x) in f.iter().enumerate() {
        for b in 0..d {
            out[b] += x * w1[a * d + b];
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn loss(p: &Params64, f: &[Vec<f64>; 3]) -> f64 {
    let vq = project(&f[0], &p.w1, p.d);
    let score = |j: usize| {
        p.alpha + p.beta[0] + p.beta[j] + dot(&p.emb[0], &p.emb[j]) + dot(&vq, &project(&f[j], &p.w1, p.d))
    };
    let x = score(1) - score(2);
    (1.0 + (-x).exp()).ln()
}

fn central(p: &Params64, f: &[Vec<f64>; 3], bump: impl Fn(&mut Params64, f64)) -> f64 {
    let (mut up, mut down) = (p.clone(), p.clone());
    bump(&mut up, H);
    bump(&mut down, -H);
    (loss(&up, f) - loss(&down, f)) / (2.0 * H)
}

fn rel(analytic: f32, numeric: f64) -> f64 {
    let a = f64::from(analytic);
    (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR)
}

struct Instance {
    store: EmbeddingStore,
    params: MatchModelParams,
    triple: TrainingTriple,
}

fn instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let shape = StoreShape {
        d_raw: r.random_range(1..=8),
        d_sem: 2,
        tops: 3,
        bottoms: 1,
        queries: 1,
        pairs_per_query: 0,
    };
    let d = r.random_range(1..=4);
    let store = random_store(&mut r, &shape);
    let params = random_params(&mut r, &store, d, 1.0);
    let q = store.queries().next().unwrap().id.clone();
    let j = r.random_range(0..3);
    let k = (j + r.random_range(1..3)) % 3;
    let triple = TrainingTriple::new(q, format!("top-{j}"), format!("top-{k}"));
    Instance { store, params, triple }
}

#[test]
fn analytic_matches_central_differences() {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let Instance { store, params, triple } = instance(seed);
        let grad = bpr_gradients(&triple, &store, &params).unwrap();
        let keys = [query_key(&triple.query), item_key(&triple.positive), item_key(&triple.negative)];
        let p = Params64 {
            d: params.d,
            alpha: f64::from(params.alpha),
            w1: widen(&params.w1),
            beta: [0, 1, 2].map(|i| f64::from(params.entities[&keys[i]].beta)),
            emb: [0, 1, 2].map(|i| widen(&params.entities[&keys[i]].emb)),
        };
        let f = [
            widen(&store.query(&triple.query).unwrap().feature),
            widen(&store.item(&triple.positive).unwrap().feature),
            widen(&store.item(&triple.negative).unwrap().feature),
        ];
        let mut check = |analytic: f32, numeric: f64, what: &str| {
            let e = rel(analytic, numeric);
            worst = worst.max(e);
            assert!(e < TOL, "seed {seed} {what}: analytic {analytic} numeric {numeric} rel {e}");
        };

        check(grad.d_alpha, central(&p, &f, |q, h| q.alpha += h), "alpha");
        let d_beta = [grad.d_beta_q, grad.d_beta_j, grad.d_beta_k];
        let d_emb = [&grad.d_emb_q, &grad.d_emb_j, &grad.d_emb_k];
        for e in 0..3 {
            check(d_beta[e], central(&p, &f, |q, h| q.beta[e] += h), "beta");
            for (b, &g) in d_emb[e].iter().enumerate() {
                check(g, central(&p, &f, |q, h| q.emb[e][b] += h), "emb");
            }
        }
        for (n, &g) in grad.d_w1.iter().enumerate() {
            check(g, central(&p, &f, |q, h| q.w1[n] += h), "w1");
        }
        let l = bpr_loss(std::slice::from_ref(&triple), &store, &params, 0.0).unwrap();
        assert!((f64::from(l.ranking) - loss(&p, &f)).abs() < 1e-5);
        assert!((l.ranking - grad.loss).abs() < 1e-5);
    }
    println!("worst relative error {worst:.3e}");
}

#[test]
fn bias_terms_cancel() {
    for seed in 0..20 {
        let Instance { store, params, triple } = instance(seed);
        let grad = bpr_gradients(&triple, &store, &params).unwrap();
        assert_eq!(grad.d_alpha, 0.0);
        assert_eq!(grad.d_beta_q, 0.0);
        assert_eq!(grad.d_beta_j, -grad.d_beta_k);
    }
}

#[test]
fn regularization_is_reported_separately() {
    let Instance { store, params, triple } = instance(3);
    let plain = bpr_loss(std::slice::from_ref(&triple), &store, &params, 0.0).unwrap();
    let reg = bpr_loss(std::slice::from_ref(&triple), &store, &params, 0.5).unwrap();
    assert_eq!(plain.ranking, reg.ranking);
    assert_eq!(plain.regularization, 0.0);
    assert!((reg.regularization - 0.5 * params.regularized_norm_sq()).abs() < 1e-6);
    assert_eq!(reg.total, reg.ranking + reg.regularization);
}
