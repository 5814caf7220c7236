mod common;

use common::{grad, max_rel_err, numeric_grad};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sacfd::ndiff::{ActionBounds, Activation, Graph, Mlp, MlpSpec, Tensor};

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

#[test]
fn critic_loss_gradient() {
    for seed in 0..3 {
        let err = grad::critic_err(seed);
        assert!(err < TOL, "critic seed {seed}: rel err {err}");
    }
}

#[test]
fn actor_loss_gradient() {
    for seed in 0..3 {
        let err = grad::actor_err(seed);
        assert!(err < TOL, "actor seed {seed}: rel err {err}");
    }
}

#[test]
fn alpha_loss_gradient() {
    for seed in 0..10 {
        let err = grad::alpha_err(seed);
        assert!(err < TOL, "alpha seed {seed}: rel err {err}");
    }
}

#[test]
fn log_prob_gradient() {
    for (seed, bounds) in [(0, grad::BOUNDS), (1, ActionBounds { low: -5.0, high: 30.0 })] {
        let err = grad::log_prob_err(seed, bounds);
        assert!(err < TOL, "log prob: rel err {err}");
    }
}

#[test]
fn random_mlp_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (widths, act) in [
        (vec![4, 6, 3], Activation::Tanh),
        (vec![3, 5, 5, 2], Activation::Relu),
        (vec![2, 4, 1], Activation::Linear),
    ] {
        let spec = MlpSpec::new(widths.clone(), act, Activation::Linear).unwrap();
        let net = Mlp::init(spec, &mut rng);
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..widths[0]).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let loss_of = |net: &Mlp| -> (Graph, sacfd::ndiff::Var, Vec<sacfd::ndiff::Var>) {
            let mut g = Graph::new();
            let vars = net.bind(&mut g, true).unwrap();
            let xv = g.constant(x.clone()).unwrap();
            let out = net.forward_graph(&mut g, &vars, xv).unwrap();
            let t = g.tanh(out).unwrap();
            let sq = g.square(t).unwrap();
            let loss = g.mean(sq).unwrap();
            (g, loss, vars)
        };
        let (g, loss, vars) = loss_of(&net);
        let analytic = net.collect_grads(&g.backward(loss).unwrap(), &vars);
        let f = |theta: &[f64]| {
            let mut n = net.clone();
            n.params.copy_from_slice(theta);
            let (g, loss, _) = loss_of(&n);
            g.value(loss).item()
        };
        let err = max_rel_err(&analytic, &numeric_grad(&f, &net.params, H));
        assert!(err < TOL, "{widths:?} {act}: rel err {err}");
    }
}

#[test]
fn random_graph_ops() {
    // exercises every primitive on a composite expression
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let a0: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b0: Vec<f64> = (0..6).map(|_| rng.gen_range(0.5..2.0)).collect();
        let expr = |a: &[f64], b: &[f64]| {
            let mut g = Graph::new();
            let av = g.param(Tensor::new(2, 3, a.to_vec()).unwrap()).unwrap();
            let bv = g.param(Tensor::new(3, 2, b.to_vec()).unwrap()).unwrap();
            let m = g.matmul(av, bv).unwrap();
            let t = g.tanh(m).unwrap();
            let e = g.exp(t).unwrap();
            let r = g.relu(m).unwrap();
            let s = g.add(e, r).unwrap();
            let l = g.log(s).unwrap();
            let mn = g.min(l, t).unwrap();
            let sq = g.square(mn).unwrap();
            let prod = g.mul(sq, e).unwrap();
            let c0 = g.column(prod, 0).unwrap();
            let c1 = g.column(m, 1).unwrap();
            let cat = g.concat(c0, c1).unwrap();
            let sc = g.scale(cat, 0.7).unwrap();
            let off = g.offset(sc, 0.1).unwrap();
            let ng = g.neg(off).unwrap();
            let cl = g.clamp(ng, -5.0, 5.0).unwrap();
            let out = g.sum(cl).unwrap();
            let mean = g.mean(sq).unwrap();
            let total = g.add(out, mean).unwrap();
            (g, total, av, bv)
        };
        let (g, total, av, bv) = expr(&a0, &b0);
        let grads = g.backward(total).unwrap();
        let mut analytic = grads.wrt(av).unwrap().data().to_vec();
        analytic.extend_from_slice(grads.wrt(bv).unwrap().data());
        let mut x = a0.clone();
        x.extend_from_slice(&b0);
        let f = |x: &[f64]| {
            let (g, total, _, _) = expr(&x[..6], &x[6..]);
            g.value(total).item()
        };
        let err = max_rel_err(&analytic, &numeric_grad(&f, &x, H));
        assert!(err < TOL, "rel err {err}");
    }
}
