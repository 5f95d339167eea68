mod common;

use btot_core::baselines::{lda_m_step_batch, lda_m_step_online};
use btot_core::bayes_tot::{btot_m_step_batch, btot_m_step_online};
use btot_core::corpus::{build_corpus, normalize_timestamps};
use btot_core::estep::{lda_e_step, tot_e_step, wbtot_e_step, ExpectedLogBeta};
use btot_core::eval::{coherence_cv, sym_kl, top_words, weighted_dispersion, Ranking, TopicTimeHistogram};
use btot_core::model::SweepOptions;
use btot_core::numerics::beta::solve_beta_from_logstats;
use btot_core::numerics::beta_prior::{beta_prior_moments, BetaPriorMoments};
use btot_core::synth::{generate_corpus, DocLength, SynthConfig};
use btot_core::train::corpus_elbo;
use btot_core::*;
use ndarray::Array2;
use proptest::prelude::*;

use common::brute_force_cv;

fn doc_strategy(v: usize) -> impl Strategy<Value = Document> {
    (prop::collection::btree_map(0..v, 1u32..6, 1..12), 0.01f64..0.99)
        .prop_map(|(m, t)| Document::new("d", &m, t).unwrap())
}

fn elb_strategy(k: usize, v: usize) -> impl Strategy<Value = ExpectedLogBeta> {
    prop::collection::vec(0.05f64..5.0, k * v)
        .prop_map(move |x| ExpectedLogBeta::from_lambda(&Array2::from_shape_vec((k, v), x).unwrap()))
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|x| {
        let s: f64 = x.iter().sum();
        x.into_iter().map(|v| v / s).collect()
    })
}

fn prior_strategy() -> impl Strategy<Value = BetaPriorParams> {
    (-3.0f64..1.0, 0.05f64..0.999, 0.01f64..0.99)
        .prop_map(|(lnu, s, f)| BetaPriorParams::new(10f64.powf(lnu), [(s * f).ln(), (s * (1.0 - f)).ln()]).unwrap())
}

fn stats_strategy() -> impl Strategy<Value = TimeSuffStats> {
    prop_oneof![
        Just(0.0),
        0.0f64..1e-3,
        (-1.0f64..4.0).prop_map(|e| 10f64.powf(e)),
    ]
    .prop_flat_map(|n| {
        prop_oneof![
            (1e-4f64..1.0 - 1e-4).prop_map(move |t| TimeSuffStats::new(n, [t.ln(), (1.0 - t).ln()])),
            (0.2f64..200.0, 0.2f64..200.0)
                .prop_map(move |(a, b)| TimeSuffStats::new(n, BetaParams { rho: [a, b] }.expected_log_stats())),
        ]
    })
}

fn small_corpus(seed: u64, d: usize) -> Corpus {
    let mut sc = SynthConfig::new(3, 30, d);
    sc.doc_len = DocLength::Poisson(15.0);
    generate_corpus(&sc, None, seed).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn time_scale_round_trips(raw in prop::collection::vec(-1e4f64..1e4, 2..20), margin in 0.001f64..0.2) {
        let (scale, ts) = normalize_timestamps(&raw, margin).unwrap();
        for (&x, &t) in raw.iter().zip(&ts) {
            prop_assert!(t >= margin - 1e-12 && t <= 1.0 - margin + 1e-12);
            if !scale.is_degenerate() {
                let back = scale.inverse(t);
                prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(scale.raw_max - scale.raw_min));
            }
        }
    }

    #[test]
    fn built_corpus_respects_margin_and_df(
        docs in prop::collection::vec((prop::collection::vec(0usize..8, 0..10), 0.0f64..100.0), 1..15),
        min_df in 1usize..3,
    ) {
        let raw: Vec<RawDocument> = docs
            .iter()
            .enumerate()
            .map(|(i, (toks, ts))| RawDocument {
                id: i.to_string(),
                tokens: toks.iter().map(|w| format!("w{w}")).collect(),
                raw_timestamp: *ts,
            })
            .collect();
        let Ok(c) = build_corpus(&raw, min_df, 1.0, 0.01) else { return Ok(()) };
        for d in &c.documents {
            prop_assert!(d.total >= 1);
            prop_assert!(d.t >= 0.01 - 1e-12 && d.t <= 0.99 + 1e-12);
        }
        // df over raw documents, restricted to retained words.
        for id in 0..c.vocab_size() {
            let w = c.vocab.word(id);
            let df = raw.iter().filter(|r| r.tokens.iter().any(|t| t == w)).count();
            prop_assert_eq!(c.vocab.df(id), df);
            prop_assert_eq!(c.document_frequencies()[id], df);
        }
    }

    #[test]
    fn solver_inverts_exact_log_stats(a in 0.2f64..50.0, b in 0.2f64..50.0) {
        let r = solve_beta_from_logstats(BetaParams { rho: [a, b] }.expected_log_stats()).unwrap();
        prop_assert!((r.rho[0] - a).abs() < 1e-8 * a);
        prop_assert!((r.rho[1] - b).abs() < 1e-8 * b);
    }

    #[test]
    fn lda_e_step_ignores_word_order(doc in doc_strategy(20), elb in elb_strategy(3, 20), seed in any::<u64>()) {
        let alpha = [0.3, 0.2, 0.5];
        let a = lda_e_step(&doc, &elb, &alpha, 1e-12, 1000);
        let mut perm: Vec<usize> = (0..doc.words.len()).collect();
        let mut s = seed;
        for i in (1..perm.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled = Document {
            words: perm.iter().map(|&i| doc.words[i]).collect(),
            counts: perm.iter().map(|&i| doc.counts[i]).collect(),
            ..doc.clone()
        };
        let b = lda_e_step(&shuffled, &elb, &alpha, 1e-12, 1000);
        for (x, y) in a.gamma.iter().zip(&b.gamma) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        for (row, &i) in perm.iter().enumerate() {
            for k in 0..3 {
                prop_assert!((a.phi[[i, k]] - b.phi[[row, k]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn e_step_outputs_are_normalized(doc in doc_strategy(20), elb in elb_strategy(4, 20)) {
        let alpha = [0.1, 0.2, 0.3, 0.4];
        let p = lda_e_step(&doc, &elb, &alpha, 1e-10, 500);
        for row in p.phi.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-10);
        }
        for (g, a) in p.gamma.iter().zip(&alpha) {
            prop_assert!(*g >= *a);
        }
    }

    #[test]
    fn tot_with_uniform_betas_is_lda(doc in doc_strategy(15), elb in elb_strategy(3, 15)) {
        let alpha = [0.5, 0.5, 0.5];
        let lda = lda_e_step(&doc, &elb, &alpha, 1e-12, 1000);
        let tot = tot_e_step(&doc, &elb, &alpha, &[BetaParams::uniform(); 3], 1e-12, 1000);
        for (x, y) in lda.gamma.iter().zip(&tot.gamma) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn wbtot_gamma_reconstructs(
        doc in doc_strategy(15),
        elb in elb_strategy(3, 15),
        ny in 0.1f64..10.0,
        rho in prop::collection::vec((0.5f64..30.0, 0.5f64..30.0), 3),
    ) {
        let alpha = [0.2, 0.4, 0.6];
        let m: Vec<BetaPriorMoments> = rho.iter().map(|&(a, b)| BetaPriorMoments::point(&BetaParams { rho: [a, b] })).collect();
        let p = wbtot_e_step(&doc, &elb, &alpha, &m, ny, 1e-12, 1000);
        prop_assert!((p.epsilon.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let n_dk = p.doc.topic_counts(&doc);
        for k in 0..3 {
            let g = alpha[k] + n_dk[k] + ny * p.epsilon[k];
            prop_assert!((p.doc.gamma[k] - g).abs() < 1e-9 * g.max(1.0));
        }
    }

    #[test]
    fn full_online_step_is_a_batch_step(stats in prop::collection::vec(0.0f64..50.0, 12), eta in 0.01f64..1.0) {
        let s = Array2::from_shape_vec((3, 4), stats).unwrap();
        let lambda = Array2::from_elem((3, 4), 7.0);
        let cfg = OnlineConfig { batch_size: 10, tau: 0.0, kappa: 0.7, total_docs: 10 };
        prop_assert_eq!(lda_m_step_online(&lambda, &s, eta, 1.0, &cfg), lda_m_step_batch(&s, eta));
    }

    #[test]
    fn m_steps_respect_the_hoelder_bound(
        prior in prior_strategy(),
        batches in prop::collection::vec(prop::collection::vec(stats_strategy(), 3), 1..10),
        kappa in 0.51f64..1.0,
        tau in 0.0f64..5.0,
        scale in 1usize..500,
    ) {
        for p in btot_m_step_batch(&batches[0], &prior) {
            prop_assert!(p.mu >= prior.nu && p.satisfies_holder(&prior), "{p:?}");
        }
        let cfg = OnlineConfig { batch_size: 10, tau, kappa, total_docs: 10 * scale };
        let mut posts = vec![prior.as_posterior(); 3];
        for (t, b) in batches.iter().enumerate() {
            let rho_t = btot_core::baselines::mixing_rate(t + 1, &cfg).unwrap();
            posts = btot_m_step_online(&posts, b, &prior, rho_t, &cfg);
            for p in &posts {
                prop_assert!(p.satisfies_holder(&prior), "{p:?}");
            }
        }
    }

    #[test]
    fn cached_moments_match_recomputation(prior in prior_strategy(), stats in prop::collection::vec(stats_strategy(), 3)) {
        let spec = ModelSpec { prior, ..ModelSpec::new(ModelKind::Btot, 3) };
        let ModelState::Btot(mut s) = ModelState::init(&spec, 5, 0).unwrap() else { unreachable!() };
        s.set_posteriors(btot_m_step_batch(&stats, &prior)).unwrap();
        for (p, m) in s.posteriors.iter().zip(&s.moments) {
            prop_assert_eq!(beta_prior_moments(p, s.method).unwrap(), *m);
        }
    }

    #[test]
    fn sym_kl_is_nonnegative_and_symmetric(p in distribution(6), q in distribution(6)) {
        let a = sym_kl(&p, &q).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert_eq!(a, sym_kl(&q, &p).unwrap());
        prop_assert!(sym_kl(&p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn dispersion_scale_and_translation(
        mass in prop::collection::vec(0.0f64..10.0, 1..30),
        c in 0.1f64..100.0,
        shift in -1000i32..1000,
    ) {
        prop_assume!(mass.iter().sum::<f64>() > 0.0);
        let hist = |m: Vec<f64>, off: f64| TopicTimeHistogram {
            topic: 0,
            edges: (0..=m.len()).map(|i| off + i as f64).collect(),
            mass: m,
        };
        let base = weighted_dispersion(&hist(mass.clone(), 0.0)).unwrap();
        let scaled = weighted_dispersion(&hist(mass.iter().map(|x| x * c).collect(), 0.0)).unwrap();
        let moved = weighted_dispersion(&hist(mass.clone(), shift as f64)).unwrap();
        prop_assert!((base.0 - scaled.0).abs() < 1e-9 && (base.1 - scaled.1).abs() < 1e-9);
        prop_assert!((base.0 - moved.0).abs() < 1e-9 && (base.1 - moved.1).abs() < 1e-9);
    }

    #[test]
    fn top_words_ignore_row_rescaling(
        lambda in prop::collection::vec(0.01f64..10.0, 3 * 25),
        c in prop::collection::vec(0.1f64..10.0, 3),
    ) {
        let lam = Array2::from_shape_vec((3, 25), lambda).unwrap();
        let mut scaled = lam.clone();
        for (mut row, f) in scaled.rows_mut().into_iter().zip(&c) {
            row *= *f;
        }
        let hyper = DirichletHyper::symmetric(3, 0.1, 0.1);
        let a = LdaState { lambda: lam, hyper: hyper.clone() };
        let b = LdaState { lambda: scaled, hyper };
        for ranking in [Ranking::Beta, Ranking::RLog] {
            for t in 0..3 {
                prop_assert_eq!(top_words(&a, t, 5, ranking).unwrap().ids(), top_words(&b, t, 5, ranking).unwrap().ids());
            }
        }
    }

    #[test]
    fn coherence_matches_window_enumeration(
        seqs in prop::collection::vec(prop::collection::vec(0usize..10, 0..25), 1..=10),
        words in prop::collection::btree_set(0usize..10, 1..6),
        window in 1usize..=20,
    ) {
        prop_assume!(seqs.iter().any(|s| !s.is_empty()));
        let words: Vec<usize> = words.into_iter().collect();
        let got = coherence_cv(std::slice::from_ref(&words), &seqs, window, 1e-12).unwrap();
        let want = brute_force_cv(&words, &seqs, window, 1e-12);
        prop_assert!((got[0].cv - want).abs() <= 1e-12, "{} vs {}", got[0].cv, want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn perplexity_ignores_document_order(seed in 0u64..1000, rot in 1usize..39) {
        let c = small_corpus(seed, 40);
        let state = ModelState::init(&ModelSpec::new(ModelKind::Wbtot, 3), c.vocab_size(), seed).unwrap();
        let mut docs = c.documents.clone();
        docs.rotate_left(rot);
        docs.reverse();
        let opts = SweepOptions::default();
        let (_, a) = corpus_elbo(&state, &c.documents, &opts).unwrap();
        let (_, b) = corpus_elbo(&state, &docs, &opts).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }
}

#[test]
fn synth_is_deterministic_and_strictly_inside_the_unit_interval() {
    let a = small_corpus(9, 200);
    let b = small_corpus(9, 200);
    assert_eq!(a.documents, b.documents);
    assert!(a.documents.iter().all(|d| d.t > 0.0 && d.t < 1.0));
}
