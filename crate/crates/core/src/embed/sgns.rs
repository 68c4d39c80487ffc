//! Skip-gram with negative sampling over walk corpora.

use std::cell::Cell;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{mix_seed, AliasTable, EmbedError, EmbeddingModel, SgnsConfig};
use crate::lexicon::ConceptId;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `−log σ(u_o·v_c) − Σ_k log σ(−u_k·v_c)` for one center/context pair.
pub fn pair_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    let pos = -sigmoid(dot(context, center)).ln();
    let neg: f64 = negatives.iter().map(|u| -sigmoid(-dot(u, center)).ln()).sum();
    pos + neg
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGradients {
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Analytic gradient of [`pair_loss`]. With `s = u·v_c` and label `l`, each
/// target contributes `(σ(s) − l)·u` to the center and `(σ(s) − l)·v_c` to
/// its own output vector.
pub fn pair_gradients(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> PairGradients {
    let mut g_center = vec![0.0; center.len()];
    let mut term = |u: &[f64], label: f64| -> Vec<f64> {
        let coef = sigmoid(dot(u, center)) - label;
        for (g, x) in g_center.iter_mut().zip(u) {
            *g += coef * x;
        }
        center.iter().map(|x| coef * x).collect()
    };
    let context_grad = term(context, 1.0);
    let neg_grads = negatives.iter().map(|u| term(u, 0.0)).collect();
    PairGradients {
        center: g_center,
        context: context_grad,
        negatives: neg_grads,
    }
}

/// Parameter rows with shared-reference updates, so that one training loop
/// serves both the plain single-worker buffer and the lock-free shared one.
trait Params {
    fn load(&self, i: usize) -> f32;
    fn store(&self, i: usize, v: f32);
}

struct Plain<'a>(&'a [Cell<f32>]);

impl Params for Plain<'_> {
    #[inline]
    fn load(&self, i: usize) -> f32 {
        self.0[i].get()
    }
    #[inline]
    fn store(&self, i: usize, v: f32) {
        self.0[i].set(v)
    }
}

struct Shared<'a>(&'a [AtomicU32]);

impl Params for Shared<'_> {
    #[inline]
    fn load(&self, i: usize) -> f32 {
        f32::from_bits(self.0[i].load(Ordering::Relaxed))
    }
    #[inline]
    fn store(&self, i: usize, v: f32) {
        self.0[i].store(v.to_bits(), Ordering::Relaxed)
    }
}

/// One SGD step on a center/context pair with the given negatives, applied
/// in place. Returns the pair loss evaluated before the update.
fn step<P: Params>(
    input: &P,
    output: &P,
    dim: usize,
    center: usize,
    context: usize,
    negatives: &[usize],
    lr: f32,
    v: &mut [f32],
    grad: &mut [f32],
) -> f64 {
    let base = center * dim;
    for (j, x) in v.iter_mut().enumerate() {
        *x = input.load(base + j);
    }
    grad.fill(0.0);
    let mut loss = 0.0f64;
    for (target, label) in std::iter::once((context, 1.0f32)).chain(negatives.iter().map(|&n| (n, 0.0))) {
        let row = target * dim;
        let mut s = 0.0f32;
        for (j, x) in v.iter().enumerate() {
            s += output.load(row + j) * x;
        }
        let sig = sigmoid(s as f64);
        loss -= if label > 0.0 { sig.ln() } else { (1.0 - sig).ln() };
        let g = (label - sig as f32) * lr;
        for (j, x) in v.iter().enumerate() {
            let u = output.load(row + j);
            grad[j] += g * u;
            output.store(row + j, u + g * x);
        }
    }
    for (j, d) in grad.iter().enumerate() {
        input.store(base + j, input.load(base + j) + d);
    }
    loss
}

/// Plain-buffer form of the in-place update, exposed for tests: applies one
/// step to row-major `input` and `output` matrices.
pub fn sgd_pair_step(
    input: &mut [f32],
    output: &mut [f32],
    dim: usize,
    center: usize,
    context: usize,
    negatives: &[usize],
    lr: f32,
) -> f64 {
    let input = Plain(Cell::from_mut(input).as_slice_of_cells());
    let output = Plain(Cell::from_mut(output).as_slice_of_cells());
    let mut v = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    step(&input, &output, dim, center, context, negatives, lr, &mut v, &mut g)
}

/// Mean pair loss per epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingHistory {
    pub epoch_loss: Vec<f64>,
}

struct Corpus<'a> {
    walks: &'a [Vec<u32>],
    noise: AliasTable,
    noise_ids: Vec<usize>,
    total_tokens: u64,
}

struct EpochCtx<'a> {
    cfg: &'a SgnsConfig,
    dim: usize,
    corpus: &'a Corpus<'a>,
    processed: &'a AtomicU64,
    total: u64,
}

fn run_walks<P: Params>(ctx: &EpochCtx, input: &P, output: &P, walks: &[Vec<u32>], rng: &mut ChaCha8Rng) -> (f64, u64) {
    let cfg = ctx.cfg;
    let mut v = vec![0.0f32; ctx.dim];
    let mut g = vec![0.0f32; ctx.dim];
    let mut negs = Vec::with_capacity(cfg.negative_samples);
    let (mut loss, mut pairs) = (0.0, 0u64);
    for walk in walks {
        for (pos, &c) in walk.iter().enumerate() {
            let done = ctx.processed.fetch_add(1, Ordering::Relaxed);
            let progress = done as f32 / ctx.total.max(1) as f32;
            let lr = (cfg.initial_lr - (cfg.initial_lr - cfg.min_lr) * progress).max(cfg.min_lr);
            let b = rng.gen_range(1..=cfg.window);
            let lo = pos.saturating_sub(b);
            let hi = (pos + b).min(walk.len() - 1);
            for o_pos in lo..=hi {
                if o_pos == pos {
                    continue;
                }
                let o = walk[o_pos] as usize;
                negs.clear();
                for _ in 0..cfg.negative_samples {
                    let k = ctx.corpus.noise_ids[ctx.corpus.noise.sample(rng)];
                    if k != o {
                        negs.push(k);
                    }
                }
                loss += step(input, output, ctx.dim, c as usize, o, &negs, lr, &mut v, &mut g);
                pairs += 1;
            }
        }
    }
    (loss, pairs)
}

/// Trains node vectors on walks whose entries index into `vocab`.
pub fn train_embeddings(walks: &[Vec<u32>], vocab: &[ConceptId], config: &SgnsConfig) -> Result<EmbeddingModel, EmbedError> {
    train_with_history(walks, vocab, config).map(|(m, _)| m)
}

pub fn train_with_history(
    walks: &[Vec<u32>],
    vocab: &[ConceptId],
    config: &SgnsConfig,
) -> Result<(EmbeddingModel, TrainingHistory), EmbedError> {
    config.validate()?;
    let total_tokens: u64 = walks.iter().map(|w| w.len() as u64).sum();
    if total_tokens == 0 {
        return Err(EmbedError::NoWalks);
    }
    let n = vocab.len();
    let dim = config.dimension;
    let mut counts = vec![0u64; n];
    for &t in walks.iter().flatten() {
        let t = t as usize;
        if t >= n {
            return Err(EmbedError::Config(format!("walk token {t} outside vocabulary of {n}")));
        }
        counts[t] += 1;
    }
    let noise_ids: Vec<usize> = (0..n).filter(|&i| counts[i] > 0).collect();
    let noise_weights: Vec<f64> = noise_ids.iter().map(|&i| (counts[i] as f64).powf(0.75)).collect();
    let corpus = Corpus {
        walks,
        noise: AliasTable::new(&noise_weights),
        noise_ids,
        total_tokens,
    };

    let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, 0xE4B]));
    let mut input: Vec<f32> = (0..n * dim)
        .map(|_| (init_rng.gen::<f32>() - 0.5) / dim as f32)
        .collect();
    let mut output = vec![0.0f32; n * dim];
    let processed = AtomicU64::new(0);
    let ctx = EpochCtx {
        cfg: config,
        dim,
        corpus: &corpus,
        processed: &processed,
        total: corpus.total_tokens * config.epochs as u64,
    };
    let mut history = TrainingHistory::default();

    if config.workers == 1 {
        let inp = Plain(Cell::from_mut(input.as_mut_slice()).as_slice_of_cells());
        let out = Plain(Cell::from_mut(output.as_mut_slice()).as_slice_of_cells());
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, 1]));
        for _ in 0..config.epochs {
            let (loss, pairs) = run_walks(&ctx, &inp, &out, corpus.walks, &mut rng);
            history.epoch_loss.push(loss / pairs.max(1) as f64);
        }
    } else {
        let inp_atomic: Vec<AtomicU32> = input.iter().map(|x| AtomicU32::new(x.to_bits())).collect();
        let out_atomic: Vec<AtomicU32> = output.iter().map(|x| AtomicU32::new(x.to_bits())).collect();
        let (inp, out) = (Shared(&inp_atomic), Shared(&out_atomic));
        let chunk = corpus.walks.len().div_ceil(config.workers).max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| EmbedError::Config(e.to_string()))?;
        for epoch in 0..config.epochs {
            let (loss, pairs) = pool.install(|| {
                corpus
                    .walks
                    .par_chunks(chunk)
                    .enumerate()
                    .map(|(w, shard)| {
                        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, 2, epoch as u64, w as u64]));
                        run_walks(&ctx, &inp, &out, shard, &mut rng)
                    })
                    .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
            });
            history.epoch_loss.push(loss / pairs.max(1) as f64);
        }
        input = inp_atomic.iter().map(|a| f32::from_bits(a.load(Ordering::Relaxed))).collect();
        output.clear();
    }

    let model = EmbeddingModel::from_flat(dim, config.seed, vocab.to_vec(), input)
        .map_err(|e| EmbedError::Config(e.to_string()))?;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{generate_walks, RelationGraph, WalkConfig};

    fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
        if scale == 0.0 { diff } else { diff / scale }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-6;
        for _ in 0..20 {
            let d = 8;
            let vc = random_vec(&mut rng, d);
            let uo = random_vec(&mut rng, d);
            let negs: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, d)).collect();
            let neg_refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
            let g = pair_gradients(&vc, &uo, &neg_refs);
            let fd = |perturb: &dyn Fn(usize, f64) -> f64| -> Vec<f64> {
                (0..d).map(|j| (perturb(j, h) - perturb(j, -h)) / (2.0 * h)).collect()
            };
            let center_fd = fd(&|j, e| {
                let mut v = vc.clone();
                v[j] += e;
                pair_loss(&v, &uo, &neg_refs)
            });
            let context_fd = fd(&|j, e| {
                let mut u = uo.clone();
                u[j] += e;
                pair_loss(&vc, &u, &neg_refs)
            });
            assert!(rel_err(&center_fd, &g.center) < 1e-5);
            assert!(rel_err(&context_fd, &g.context) < 1e-5);
        }
    }

    #[test]
    fn in_place_step_follows_the_analytic_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 6;
        let input64: Vec<f64> = random_vec(&mut rng, 4 * dim);
        let output64: Vec<f64> = random_vec(&mut rng, 4 * dim);
        let mut input: Vec<f32> = input64.iter().map(|&x| x as f32).collect();
        let mut output: Vec<f32> = output64.iter().map(|&x| x as f32).collect();
        let (c, o, negs) = (0usize, 1usize, [2usize, 3]);
        let row = |m: &[f32], i: usize| m[i * dim..(i + 1) * dim].iter().map(|&x| x as f64).collect::<Vec<_>>();
        let (vc, uo, u2, u3) = (row(&input, c), row(&output, o), row(&output, 2), row(&output, 3));
        let grads = pair_gradients(&vc, &uo, &[&u2, &u3]);
        let expected_loss = pair_loss(&vc, &uo, &[&u2, &u3]);
        let lr = 0.1f32;
        let loss = sgd_pair_step(&mut input, &mut output, dim, c, o, &negs, lr);
        assert!((loss - expected_loss).abs() < 1e-5);
        let check = |after: Vec<f64>, before: &[f64], g: &[f64]| {
            for ((a, b), g) in after.iter().zip(before).zip(g) {
                assert!((a - (b - lr as f64 * g)).abs() < 1e-5);
            }
        };
        check(row(&input, c), &vc, &grads.center);
        check(row(&output, o), &uo, &grads.context);
        check(row(&output, 2), &u2, &grads.negatives[0]);
        check(row(&output, 3), &u3, &grads.negatives[1]);
    }

    #[test]
    fn loss_trends_down_across_epochs() {
        let g = RelationGraph::from_indexed_edges(
            8,
            &[(0, 1, 1), (1, 2, 1), (2, 0, 1), (2, 3, 1), (3, 4, 1), (4, 5, 1), (5, 6, 1), (6, 7, 1), (7, 4, 1)],
        );
        let walks = generate_walks(&g, &WalkConfig { walks_per_node: 10, walk_length: 30, ..WalkConfig::default() }).unwrap();
        let cfg = SgnsConfig { dimension: 16, window: 4, epochs: 8, ..SgnsConfig::default() };
        let (_, hist) = train_with_history(&walks, g.node_ids(), &cfg).unwrap();
        let avg = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let l = &hist.epoch_loss;
        assert!(avg(&l[5..]) < avg(&l[..3]), "{l:?}");
        for w in l.windows(3).collect::<Vec<_>>().windows(2) {
            assert!(avg(w[1]) <= avg(w[0]) * 1.02, "{l:?}");
        }
    }

    #[test]
    fn single_worker_is_bitwise_deterministic() {
        let g = RelationGraph::from_indexed_edges(5, &[(0, 1, 1), (1, 2, 2), (2, 3, 1), (3, 4, 1), (4, 0, 3)]);
        let walks = generate_walks(&g, &WalkConfig { walks_per_node: 4, walk_length: 20, ..WalkConfig::default() }).unwrap();
        let cfg = SgnsConfig { dimension: 8, epochs: 2, ..SgnsConfig::default() };
        let a = train_embeddings(&walks, g.node_ids(), &cfg).unwrap();
        let b = train_embeddings(&walks, g.node_ids(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multi_worker_trains() {
        let g = RelationGraph::from_indexed_edges(5, &[(0, 1, 1), (1, 2, 2), (2, 3, 1), (3, 4, 1), (4, 0, 3)]);
        let walks = generate_walks(&g, &WalkConfig { walks_per_node: 4, walk_length: 20, ..WalkConfig::default() }).unwrap();
        let cfg = SgnsConfig { dimension: 8, epochs: 2, workers: 3, ..SgnsConfig::default() };
        let m = train_embeddings(&walks, g.node_ids(), &cfg).unwrap();
        assert_eq!(m.len(), 5);
        assert!(m.iter().all(|(_, v)| v.iter().all(|x| x.is_finite())));
    }

    #[test]
    fn bad_config_rejected() {
        let vocab = [ConceptId::from("a")];
        let walks = vec![vec![0u32]];
        for cfg in [
            SgnsConfig { dimension: 0, ..SgnsConfig::default() },
            SgnsConfig { epochs: 0, ..SgnsConfig::default() },
        ] {
            assert!(matches!(train_embeddings(&walks, &vocab, &cfg), Err(EmbedError::Config(_))));
        }
        assert_eq!(train_embeddings(&[], &vocab, &SgnsConfig::default()), Err(EmbedError::NoWalks));
    }
}
