//! Cross-module properties of the network: dropout scaling, gradient
//! correctness over many seeds, and state-carry equivalence under
//! arbitrary chunkings.

use sporal_core::matrix::Matrix;
use sporal_core::network::{
    forward_window, gradient_check, init_params, zero_states, Dims, ForwardMode,
};
use sporal_core::rng::RngStream;

fn random_window(rng: &mut RngStream, lanes: usize, steps: usize, d: usize) -> Vec<Matrix> {
    (0..steps)
        .map(|_| Matrix::from_fn(lanes, d, |_, _| rng.uniform(-1.0, 1.0).unwrap()))
        .collect()
}

/// Inverted-dropout scaling: the mask average of train-mode outputs
/// converges to the p=0 output. 2% tolerance over 10^4 mask draws.
#[test]
fn dropout_mask_average_matches_undropped_output() {
    let dims = Dims::new(3, 8, 3, 2);
    let net = init_params(dims, 60);
    let mut rng = RngStream::new(61, 0);
    let x = random_window(&mut rng, 1, 4, 3);
    let s0 = zero_states(&net, 1);

    let (clean, _, _) = forward_window(&net, &x, &s0, ForwardMode::Infer).unwrap();

    let draws = 10_000;
    let mut drop_rng = RngStream::named(62, "dropout");
    let mut acc = vec![vec![0.0f64; 3]; 4];
    for _ in 0..draws {
        let (probs, _, _) = forward_window(
            &net,
            &x,
            &s0,
            ForwardMode::Train { dropout_p: 0.5, rng: &mut drop_rng },
        )
        .unwrap();
        for (t, p) in probs.iter().enumerate() {
            for c in 0..3 {
                acc[t][c] += p.get(0, c);
            }
        }
    }
    for (t, row) in acc.iter().enumerate() {
        for (c, &sum) in row.iter().enumerate() {
            let mean = sum / draws as f64;
            let diff = (mean - clean[t].get(0, c)).abs();
            assert!(diff <= 0.02, "t={t} c={c}: mask-mean {mean} vs clean {} ", clean[t].get(0, c));
        }
    }
}

/// Gradient check stays under 1e-4 across 20 random small instances.
#[test]
fn gradient_check_holds_over_twenty_seeds() {
    for seed in 0..20u64 {
        let dims = Dims::new(4, 5, 3, 2);
        let net = init_params(dims, 1000 + seed);
        let mut rng = RngStream::new(seed, 9);
        let x = random_window(&mut rng, 2, 4, 4);
        let targets: Vec<Vec<usize>> = (0..4)
            .map(|_| (0..2).map(|_| rng.index(3).unwrap()).collect())
            .collect();
        let mask: Vec<Vec<bool>> = (0..4)
            .map(|_| (0..2).map(|_| rng.next_f64() < 0.85).collect())
            .collect();
        let err = gradient_check(&net, &x, &targets, &mask, 1e-5).unwrap();
        assert!(err <= 1e-4, "seed {seed}: max rel err {err}");
    }
}

/// Windowed inference with carried state equals whole-sequence inference
/// for arbitrary split points.
#[test]
fn arbitrary_chunkings_preserve_probabilities() {
    let mut outer = RngStream::new(70, 0);
    for case in 0..10 {
        let dims = Dims::new(3, 6, 4, 2);
        let net = init_params(dims, 700 + case);
        let t_len = 30 + outer.index(40).unwrap();
        let x = random_window(&mut outer, 1, t_len, 3);
        let s0 = zero_states(&net, 1);
        let (full, _, _) = forward_window(&net, &x, &s0, ForwardMode::Infer).unwrap();

        // Random chunking.
        let mut cuts: Vec<usize> = (0..3).map(|_| 1 + outer.index(t_len - 1).unwrap()).collect();
        cuts.sort_unstable();
        cuts.dedup();
        let mut state = s0.clone();
        let mut pos = 0usize;
        let mut chunked = Vec::new();
        for &cut in cuts.iter().chain(std::iter::once(&t_len)) {
            if cut <= pos {
                continue;
            }
            let (p, next, _) =
                forward_window(&net, &x[pos..cut], &state, ForwardMode::Infer).unwrap();
            state = next;
            chunked.extend(p);
            pos = cut;
        }
        assert_eq!(chunked.len(), full.len());
        for (a, b) in chunked.iter().zip(&full) {
            for (x1, x2) in a.data().iter().zip(b.data()) {
                assert!((x1 - x2).abs() <= 1e-12);
            }
        }
    }
}
