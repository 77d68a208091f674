//! Central finite-difference checks for every differentiable op, over
//! random small tensors and many seeds.

use genrec_core::numerics::gradcheck::{check_gradients, GradCheck};
use genrec_core::numerics::{Graph, NodeId, NumericsError, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 20;

fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn(shape, 1.0, rng)
}

fn run_all_seeds<F>(name: &str, mut case: F)
where
    F: FnMut(&mut ChaCha8Rng) -> Result<(), String>,
{
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Err(e) = case(&mut rng) {
            panic!("{name} failed at seed {seed}: {e}");
        }
    }
}

#[test]
fn matmul_grads() {
    run_all_seeds("matmul", |rng| {
        let a = randn(&[3, 4], rng);
        let b = randn(&[4, 2], rng);
        check_gradients(
            &[a, b],
            |g, n| {
                let c = g.matmul(n[0], n[1])?;
                g.sum(c)
            },
            GradCheck::default(),
        )
        .map(|_| ())
    });
}

#[test]
fn transpose_grads() {
    run_all_seeds("transpose", |rng| {
        let a = randn(&[3, 5], rng);
        let w = randn(&[3, 5], rng);
        check_gradients(
            &[a, w],
            |g, n| {
                let t = g.transpose(n[0])?;
                let t2 = g.transpose(t)?;
                let prod = g.mul(t2, n[1])?;
                g.sum(prod)
            },
            GradCheck::default(),
        )
        .map(|_| ())
    });
}

#[test]
fn add_and_mul_grads() {
    run_all_seeds("add/mul", |rng| {
        let a = randn(&[2, 6], rng);
        let b = randn(&[2, 6], rng);
        let c = randn(&[2, 6], rng);
        check_gradients(
            &[a, b, c],
            |g, n| {
                let s = g.add(n[0], n[1])?;
                let p = g.mul(s, n[2])?;
                g.sum(p)
            },
            GradCheck::default(),
        )
        .map(|_| ())
    });
}

#[test]
fn add_bias_grads() {
    run_all_seeds("add_bias", |rng| {
        let x = randn(&[4, 3], rng);
        let b = randn(&[3], rng);
        check_gradients(
            &[x, b],
            |g, n| {
                let y = g.add_bias(n[0], n[1])?;
                let sq = g.mul(y, y)?;
                let s = g.sum(sq)?;
                // Keep the loss O(1) so f32 finite differences stay sharp.
                g.scale(s, 1.0 / 12.0)
            },
            GradCheck::default(),
        )
        .map(|_| ())
    });
}

#[test]
fn scale_grads() {
    run_all_seeds("scale", |rng| {
        let x = randn(&[3, 3], rng);
        check_gradients(
            &[x],
            |g, n| {
                let y = g.scale(n[0], 0.37)?;
                let sq = g.mul(y, y)?;
                g.sum(sq)
            },
            GradCheck::default(),
        )
        .map(|_| ())
    });
}

#[test]
fn softmax_grads() {
    run_all_seeds("softmax", |rng| {
        let x = randn(&[3, 5], rng);
        let w = randn(&[3, 5], rng);
        check_gradients(
            &[x, w],
            |g, n| {
                let s = g.softmax(n[0])?;
                let p = g.mul(s, n[1])?;
                g.sum(p)
            },
            GradCheck::default(),
        )
        .map(|_| ())
    });
}

#[test]
fn masked_softmax_grads() {
    run_all_seeds("masked_softmax", |rng| {
        let x = randn(&[3, 4], rng);
        let w = randn(&[3, 4], rng);
        // Row 0 fully allowed, row 1 partial, row 2 fully masked.
        let mask = vec![
            true, true, true, true, //
            true, false, true, false, //
            false, false, false, false,
        ];
        check_gradients(
            &[x, w],
            move |g, n| {
                let s = g.masked_softmax(n[0], mask.clone())?;
                let p = g.mul(s, n[1])?;
                g.sum(p)
            },
            GradCheck::default(),
        )
        .map(|_| ())
    });
}

#[test]
fn layer_norm_grads() {
    run_all_seeds("layer_norm", |rng| {
        let x = randn(&[3, 6], rng);
        let gain = randn(&[6], rng);
        let bias = randn(&[6], rng);
        let w = randn(&[3, 6], rng);
        check_gradients(
            &[x, gain, bias, w],
            |g, n| {
                let y = g.layer_norm(n[0], n[1], n[2])?;
                let p = g.mul(y, n[3])?;
                g.sum(p)
            },
            GradCheck::default(),
        )
        .map(|_| ())
    });
}

#[test]
fn gelu_grads() {
    run_all_seeds("gelu", |rng| {
        let x = randn(&[4, 4], rng);
        check_gradients(
            &[x],
            |g, n| {
                let y = g.gelu(n[0])?;
                g.sum(y)
            },
            GradCheck::default(),
        )
        .map(|_| ())
    });
}

#[test]
fn embedding_grads() {
    run_all_seeds("embedding", |rng| {
        let table = randn(&[5, 4], rng);
        let w = randn(&[4, 4], rng);
        // Repeated index 2 exercises scatter-add accumulation.
        check_gradients(
            &[table, w],
            |g, n| {
                let e = g.embedding(n[0], &[2, 0, 2, 4])?;
                let p = g.mul(e, n[1])?;
                g.sum(p)
            },
            GradCheck::default(),
        )
        .map(|_| ())
    });
}

#[test]
fn concat_and_slice_grads() {
    run_all_seeds("concat/slice", |rng| {
        let a = randn(&[3, 2], rng);
        let b = randn(&[3, 3], rng);
        check_gradients(
            &[a, b],
            |g, n| {
                let c = g.concat_cols(&[n[0], n[1]])?;
                let s = g.slice_cols(c, 1, 3)?;
                let sq = g.mul(s, s)?;
                g.sum(sq)
            },
            GradCheck::default(),
        )
        .map(|_| ())
    });
}

#[test]
fn cross_entropy_grads() {
    run_all_seeds("cross_entropy", |rng| {
        let logits = randn(&[4, 6], rng);
        check_gradients(
            &[logits],
            |g, n| g.cross_entropy(n[0], &[1, 5, 0, 3], None),
            GradCheck::default(),
        )
        .map(|_| ())
    });
}

#[test]
fn cross_entropy_with_ignore_grads() {
    run_all_seeds("cross_entropy ignore", |rng| {
        let logits = randn(&[4, 6], rng);
        check_gradients(
            &[logits],
            |g, n| g.cross_entropy(n[0], &[1, 0, 2, 0], Some(0)),
            GradCheck::default(),
        )
        .map(|_| ())
    });
}

/// The loss path used in training: projection, softmax-based cross-entropy.
#[test]
fn projection_cross_entropy_chain_grads() {
    run_all_seeds("chain", |rng| {
        let x = randn(&[3, 4], rng);
        let w = randn(&[4, 5], rng);
        let b = randn(&[5], rng);
        check_gradients(
            &[x, w, b],
            |g, n| {
                let h = g.matmul(n[0], n[1])?;
                let logits = g.add_bias(h, n[2])?;
                g.cross_entropy(logits, &[0, 4, 2], None)
            },
            GradCheck::default(),
        )
        .map(|_| ())
    });
}

/// Self-attention shaped block: projections, masked softmax, value mix.
#[test]
fn attention_block_grads() {
    run_all_seeds("attention", |rng| {
        let x = randn(&[3, 4], rng);
        let wq = randn(&[4, 4], rng);
        let wk = randn(&[4, 4], rng);
        let wv = randn(&[4, 4], rng);
        // Causal mask over 3 positions.
        let mask = vec![
            true, false, false, //
            true, true, false, //
            true, true, true,
        ];
        check_gradients(
            &[x, wq, wk, wv],
            move |g, n| {
                let q = g.matmul(n[0], n[1])?;
                let k = g.matmul(n[0], n[2])?;
                let v = g.matmul(n[0], n[3])?;
                let kt = g.transpose(k)?;
                let scores = g.matmul(q, kt)?;
                let scaled = g.scale(scores, 0.5)?;
                let attn = g.masked_softmax(scaled, mask.clone())?;
                let out = g.matmul(attn, v)?;
                let sq = g.mul(out, out)?;
                let s = g.sum(sq)?;
                g.scale(s, 1.0 / 40.0)
            },
            GradCheck::default(),
        )
        .map(|_| ())
    });
}

/// Gradient of a node not on the loss path stays absent; unrelated leaves
/// do not perturb the check.
#[test]
fn unreached_nodes_get_no_gradient() {
    let mut g = Graph::new();
    let used = g.leaf(Tensor::ones(&[2, 2]));
    let unused = g.leaf(Tensor::ones(&[2, 2]));
    let loss = g.sum(used).unwrap();
    g.backward(loss).unwrap();
    assert!(g.grad(used).is_some());
    assert!(g.grad(unused).is_none());
}

/// Build error surfaces instead of panicking when shapes disagree.
#[test]
fn oracle_surfaces_build_errors() {
    let bad = |g: &mut Graph, n: &[NodeId]| -> Result<NodeId, NumericsError> {
        let t = g.matmul(n[0], n[0])?;
        g.sum(t)
    };
    let x = Tensor::zeros(&[2, 3]);
    assert!(check_gradients(&[x], bad, GradCheck::default()).is_err());
}
