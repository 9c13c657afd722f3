//! Independent straight-line re-implementation of the per-step dynamics,
//! checked against `rollout_step`.
//!
//! The reference below is deliberately primitive: raw nested loops over
//! `Vec<Vec<f64>>` weights, no shared code with the crate's linear algebra.
//! It implements, in order: the leaky prior update with recurrent, class, and
//! top-down drive; the tanh readout; and the gain-weighted bottom-up
//! posterior correction.

use cernet_core::config::{ModelConfig, TopdownSource};
use cernet_core::model::{initial_posteriors, one_hot, rollout_step};
use cernet_core::params::NetworkParams;
use cernet_core::rng::Rng;

type M = Vec<Vec<f64>>;

struct RefNet {
    nodes: Vec<usize>,
    tau: Vec<f64>,
    alpha: Vec<f64>,
    w_r: Vec<M>,     // w_r[n][i][j]
    w_hh: Vec<M>,    // w_hh[n][above][below]
    b_r: Vec<Vec<f64>>,
    w_c: M,          // w_c[class][top_node]
    w_o: M,          // w_o[bottom_node][dim]
    b_o: Vec<f64>,
    use_prior_context: bool,
}

/// One step of the reference dynamics. Returns (priors, prediction,
/// posteriors, layer_errors, sensory_error).
#[allow(clippy::needless_range_loop)]
fn ref_step(
    net: &RefNet,
    c: &[f64],
    prev_q: &[Vec<f64>],
    obs: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
    let n_layers = net.nodes.len();
    let mut priors: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
    for n in (0..n_layers).rev() {
        let d = net.nodes[n];
        let mut h = vec![0.0; d];
        for i in 0..d {
            let mut inner = net.b_r[n][i];
            for j in 0..d {
                inner += net.w_r[n][i][j] * prev_q[n][j].tanh();
            }
            if n == n_layers - 1 {
                for (k, ck) in c.iter().enumerate() {
                    inner += ck * net.w_c[k][i];
                }
            } else {
                let ctx = if net.use_prior_context { &priors[n + 1] } else { &prev_q[n + 1] };
                for (a, cv) in ctx.iter().enumerate() {
                    inner += cv.tanh() * net.w_hh[n][a][i];
                }
            }
            h[i] = (1.0 - 1.0 / net.tau[n]) * prev_q[n][i] + inner / net.tau[n];
        }
        priors[n] = h;
    }
    let dim = net.b_o.len();
    let mut x = net.b_o.clone();
    for d in 0..dim {
        for i in 0..net.nodes[0] {
            x[d] += priors[0][i].tanh() * net.w_o[i][d];
        }
    }
    let eps: Vec<f64> = x.iter().zip(obs).map(|(p, o)| p - o).collect();
    let mut posteriors = Vec::new();
    let mut layer_errors: Vec<Vec<f64>> = Vec::new();
    for n in 0..n_layers {
        let d = net.nodes[n];
        let mut lifted = vec![0.0; d];
        for i in 0..d {
            if n == 0 {
                for (k, e) in eps.iter().enumerate() {
                    lifted[i] += net.w_o[i][k] * e;
                }
            } else {
                for (j, e) in layer_errors[n - 1].iter().enumerate() {
                    lifted[i] += net.w_hh[n - 1][i][j] * e;
                }
            }
        }
        let mut q = vec![0.0; d];
        let mut err = vec![0.0; d];
        for i in 0..d {
            let th = priors[n][i].tanh();
            q[i] = priors[n][i] - net.alpha[n] * (1.0 - th * th) * lifted[i];
            err[i] = priors[n][i] - q[i];
        }
        posteriors.push(q);
        layer_errors.push(err);
    }
    (priors, x, posteriors, layer_errors, eps)
}

fn to_nested(m: &cernet_core::linalg::Mat) -> M {
    m.to_rows()
}

fn run_comparison(topdown: TopdownSource) {
    let config = ModelConfig::new(vec![4, 2], vec![3.0, 7.0], vec![0.08, 0.02], 3, 2)
        .unwrap()
        .with_topdown_source(topdown);
    let params = NetworkParams::init(&config, 2024);
    let refnet = RefNet {
        nodes: config.nodes_per_layer.clone(),
        tau: config.tau_h.clone(),
        alpha: config.alpha_h.clone(),
        w_r: params.w_r.iter().map(to_nested).collect(),
        w_hh: params.w_hh.iter().map(to_nested).collect(),
        b_r: params.b_r.clone(),
        w_c: to_nested(&params.w_c),
        w_o: to_nested(&params.w_o),
        b_o: params.b_o.clone(),
        use_prior_context: topdown == TopdownSource::PriorT,
    };
    let c = one_hot(1, 3).unwrap();
    let mut rng = Rng::new(99);
    let observations: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..2).map(|_| rng.uniform_in(-0.7, 0.7)).collect())
        .collect();

    let mut prev_impl = initial_posteriors(&config);
    let mut prev_ref = initial_posteriors(&config);
    for (t, obs) in observations.iter().enumerate() {
        let step = rollout_step(&params, &config, &c, &prev_impl, Some(obs), t).unwrap();
        let (rp, rx, rq, rerr, reps) = ref_step(&refnet, &c.values, &prev_ref, obs);
        for n in 0..config.num_layers() {
            for i in 0..config.nodes_per_layer[n] {
                assert!(
                    (step.states[n].h_prior[i] - rp[n][i]).abs() < 1e-12,
                    "prior mismatch t={t} layer={n} node={i}"
                );
                assert!(
                    (step.states[n].h_posterior[i] - rq[n][i]).abs() < 1e-12,
                    "posterior mismatch t={t} layer={n} node={i}"
                );
                assert!(
                    (step.states[n].layer_error[i] - rerr[n][i]).abs() < 1e-12,
                    "layer error mismatch t={t} layer={n} node={i}"
                );
            }
        }
        for d in 0..2 {
            assert!((step.prediction[d] - rx[d]).abs() < 1e-12, "prediction mismatch t={t}");
            assert!(
                (step.sensory_error.as_ref().unwrap()[d] - reps[d]).abs() < 1e-12,
                "sensory error mismatch t={t}"
            );
        }
        prev_impl = step.posteriors();
        prev_ref = rq;
    }
}

#[test]
fn rollout_matches_reference_prior_t() {
    run_comparison(TopdownSource::PriorT);
}

#[test]
fn rollout_matches_reference_posterior_tminus1() {
    run_comparison(TopdownSource::PosteriorTminus1);
}
