//! Independent straight-line re-implementations of the model's forward
//! pass, compared against the library.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempora::corpus::BowDocument;
use tempora::model::{compute_beta, doc_log_likelihood, elbo, CorpusStats, ModelHyper, ModelParams, Noise};

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = v.iter().map(|x| x.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// KL(N(m1, e^lv1) ‖ N(m2, e^lv2)) for one coordinate.
fn kl1(m1: f64, lv1: f64, m2: f64, lv2: f64) -> f64 {
    0.5 * (lv2 - lv1) + (lv1.exp() + (m1 - m2).powi(2)) / (2.0 * lv2.exp()) - 0.5
}

fn at(p: &ModelParams, group: usize, i: usize) -> f64 {
    p.groups()[group].1.data()[i]
}

/// The ELBO formula written out with explicit index loops.
fn straight_line_elbo(docs: &[BowDocument], n_docs: usize, means: &[f64], p: &ModelParams, h: &ModelHyper, noise: &Noise) -> f64 {
    let (k_n, l_n, v_n, t_n, hh, he) = (h.num_topics, h.embed_size, h.vocab_size, h.num_slices, h.theta_hidden, h.eta_hidden);
    // α sample and its KL
    let mut alpha = vec![vec![vec![0.0; l_n]; k_n]; t_n];
    let mut kl_alpha = 0.0;
    for t in 0..t_n {
        for k in 0..k_n {
            for l in 0..l_n {
                let i = (t * k_n + k) * l_n + l;
                let m = p.alpha_mean.data()[i];
                let lv = p.alpha_logvar.data()[i];
                alpha[t][k][l] = m + (0.5 * lv).exp() * noise.alpha[i];
                kl_alpha += if t == 0 { kl1(m, lv, 0.0, 0.0) } else { kl1(m, lv, alpha[t - 1][k][l], h.sigma2_alpha.ln()) };
            }
        }
    }
    // β
    let mut beta = vec![vec![vec![0.0; v_n]; k_n]; t_n];
    for t in 0..t_n {
        for k in 0..k_n {
            let logits: Vec<f64> = (0..v_n)
                .map(|v| (0..l_n).map(|l| p.rho.data()[v * l_n + l] * alpha[t][k][l]).sum())
                .collect();
            beta[t][k] = softmax(&logits);
        }
    }
    // η via an explicit LSTM
    let cols = v_n + he;
    let (mut hs, mut cs) = (vec![0.0; he], vec![0.0; he]);
    let mut eta = vec![vec![0.0; k_n]; t_n];
    let mut kl_eta = 0.0;
    for t in 0..t_n {
        let mut xh: Vec<f64> = means[t * v_n..(t + 1) * v_n].to_vec();
        xh.extend_from_slice(&hs);
        let gate = |row: usize| -> f64 { at(p, 4, row) + (0..cols).map(|c| at(p, 3, row * cols + c) * xh[c]).sum::<f64>() };
        let mut h_new = vec![0.0; he];
        let mut c_new = vec![0.0; he];
        for j in 0..he {
            let i = sig(gate(j));
            let f = sig(gate(he + j));
            let g = gate(2 * he + j).tanh();
            let o = sig(gate(3 * he + j));
            c_new[j] = f * cs[j] + i * g;
            h_new[j] = o * c_new[j].tanh();
        }
        hs = h_new;
        cs = c_new;
        let prev = if t == 0 { vec![0.0; k_n] } else { eta[t - 1].clone() };
        let u: Vec<f64> = hs.iter().chain(prev.iter()).copied().collect();
        for k in 0..k_n {
            let m = at(p, 6, k) + (0..he + k_n).map(|c| at(p, 5, k * (he + k_n) + c) * u[c]).sum::<f64>();
            let lv = at(p, 8, k) + (0..he + k_n).map(|c| at(p, 7, k * (he + k_n) + c) * u[c]).sum::<f64>();
            eta[t][k] = m + (0.5 * lv).exp() * noise.eta[t * k_n + k];
            kl_eta += if t == 0 { kl1(m, lv, 0.0, 0.0) } else { kl1(m, lv, prev[k], h.sigma2_eta.ln()) };
        }
    }
    // documents
    let mut doc_sum = 0.0;
    for (d, doc) in docs.iter().enumerate() {
        let total: f64 = doc.counts.iter().map(|&(_, c)| c as f64).sum();
        let mut x = vec![0.0; v_n + k_n];
        for &(id, c) in &doc.counts {
            x[id as usize] = c as f64 / total;
        }
        x[v_n..].copy_from_slice(&eta[doc.slice]);
        let hidden: Vec<f64> = (0..hh)
            .map(|r| softplus(at(p, 10, r) + (0..v_n + k_n).map(|c| at(p, 9, r * (v_n + k_n) + c) * x[c]).sum::<f64>()))
            .collect();
        let mut z = vec![0.0; k_n];
        let mut kl_theta = 0.0;
        for k in 0..k_n {
            let m = at(p, 12, k) + (0..hh).map(|j| at(p, 11, k * hh + j) * hidden[j]).sum::<f64>();
            let lv = at(p, 14, k) + (0..hh).map(|j| at(p, 13, k * hh + j) * hidden[j]).sum::<f64>();
            z[k] = m + (0.5 * lv).exp() * noise.theta[d * k_n + k];
            kl_theta += kl1(m, lv, eta[doc.slice][k], h.sigma2_theta.ln());
        }
        let theta = softmax(&z);
        let mut ll = 0.0;
        for &(id, c) in &doc.counts {
            let pw: f64 = (0..k_n).map(|k| theta[k] * beta[doc.slice][k][id as usize]).sum();
            ll += c as f64 * (pw + 1e-12).ln();
        }
        doc_sum += ll - kl_theta;
    }
    n_docs as f64 / docs.len() as f64 * doc_sum - kl_eta - kl_alpha
}

fn random_instance(seed: u64) -> (ModelHyper, ModelParams, Vec<BowDocument>, CorpusStats, Noise) {
    let h = ModelHyper {
        num_topics: 2,
        embed_size: 3,
        theta_hidden: 4,
        eta_hidden: 3,
        vocab_size: 4,
        num_slices: 2,
        sigma2_alpha: 0.005,
        sigma2_eta: 0.005,
        sigma2_theta: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::zeros(&h);
    for (_, t) in p.groups_mut() {
        t.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-0.8..0.8));
    }
    let docs: Vec<BowDocument> = (0..5)
        .map(|d| BowDocument::new(d % 2, (0..3).map(|_| (rng.random_range(0..4u32), rng.random_range(1..5u32)))))
        .collect();
    let means: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..0.5)).collect();
    let stats = CorpusStats { num_docs: 40, slice_means: means };
    let noise = Noise::sample(&h, docs.len(), &mut rng);
    (h, p, docs, stats, noise)
}

#[test]
fn elbo_matches_straight_line_oracle() {
    for seed in 0..10 {
        let (h, p, docs, stats, noise) = random_instance(seed);
        let batch: Vec<&BowDocument> = docs.iter().collect();
        let got = elbo(&batch, &stats, &p, &h, &noise).unwrap().elbo;
        let want = straight_line_elbo(&docs, stats.num_docs, &stats.slice_means, &p, &h, &noise);
        assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn log_likelihood_matches_per_token_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (k, v) = (3, 6);
        let theta = softmax(&(0..k).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>());
        let beta: Vec<f64> = (0..k).flat_map(|_| softmax(&(0..v).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>())).collect();
        let tokens: Vec<u32> = (0..12).map(|_| rng.random_range(0..v as u32)).collect();
        let doc = BowDocument::new(0, tokens.iter().map(|&w| (w, 1)));
        let oracle: f64 = tokens
            .iter()
            .map(|&w| ((0..k).map(|j| theta[j] * beta[j * v + w as usize]).sum::<f64>() + 1e-12).ln())
            .sum();
        assert!((doc_log_likelihood(&doc, &theta, &beta) - oracle).abs() < 1e-12);
    }
}

#[test]
fn beta_rows_on_simplex_for_random_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let h = ModelHyper {
            num_topics: 3,
            embed_size: 4,
            vocab_size: 7,
            num_slices: 2,
            ..ModelHyper::default()
        };
        let mut p = ModelParams::zeros(&h);
        let scale = rng.random_range(0.1..20.0);
        p.rho.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-scale..scale));
        p.alpha_mean.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-scale..scale));
        let beta = compute_beta(&p.alpha_mean, &p.rho).unwrap();
        for t in 0..2 {
            for k in 0..3 {
                let row = beta.row(t, k);
                assert!(row.iter().all(|&b| b > 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
