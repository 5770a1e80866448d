//! The questioner: belief-weighted object features, a vis-diff context vector
//! and a gated recurrent decoder, on top of a trained guesser that serves as
//! its state estimator.
//!
//! Per turn `t` with belief `p_t` over the objects:
//!
//! ```text
//! w_i  = p_t[i] * P_i                      P = estimator object projections
//! d_i  = w_i - mean_{j != i} w_j
//! v_t  = tanh(mean_i [w_i ; d_i * d_i] * C + c)
//! h_0  = tanh(v_t * I + i)
//! ```
//!
//! and a GRU over word embeddings emits the question one token at a time.
//! The estimator is frozen unless fine-tuning is switched on, in which case
//! the token loss also flows into its object projections and beliefs.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::ModelCheckpoint;
use crate::dataset::{GameRecord, Vocabulary};
use crate::encoder::{ObjectFeatureSet, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::guesser::{validate_belief, BeliefState, GuesserExample, GuesserModel};
use crate::numkernel::{
    add_outer, argmax, sigmoid, softmax_cross_entropy, softmax_unchecked, vec_matmul, vec_matmul_t,
    ParamSet, Tensor2,
};
use crate::training::{fit, EvalSummary, TrainReport, TrainSchedule};
use crate::world::{lookup_scene, Scene, SceneMap};

pub const QUESTIONER_KIND: &str = "questioner";
/// Name prefix of the embedded estimator inside the questioner's parameters.
pub const ESTIMATOR_PREFIX: &str = "estimator.";
pub const DECODER_INIT_BOUND: f64 = 0.1;

pub mod names {
    pub const WORD_EMB: &str = "questioner.word_emb";
    pub const CTX_W: &str = "questioner.ctx.w";
    pub const CTX_B: &str = "questioner.ctx.b";
    pub const INIT_W: &str = "questioner.init.w";
    pub const INIT_B: &str = "questioner.init.b";
    pub const WZ: &str = "questioner.gru.wz";
    pub const UZ: &str = "questioner.gru.uz";
    pub const BZ: &str = "questioner.gru.bz";
    pub const WR: &str = "questioner.gru.wr";
    pub const UR: &str = "questioner.gru.ur";
    pub const BR: &str = "questioner.gru.br";
    pub const WN: &str = "questioner.gru.wn";
    pub const UN: &str = "questioner.gru.un";
    pub const BN: &str = "questioner.gru.bn";
    pub const CZ: &str = "questioner.gru.cz";
    pub const CR: &str = "questioner.gru.cr";
    pub const CN: &str = "questioner.gru.cn";
    pub const OUT_W: &str = "questioner.out.w";
    pub const OUT_B: &str = "questioner.out.b";
}
use names::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionerConfig {
    /// Must match the estimator's hidden size.
    pub hidden_size: usize,
    pub word_embed_size: usize,
    pub freeze_estimator: bool,
    pub max_turns: usize,
    pub max_question_len: usize,
    #[serde(default)]
    pub include_failed_games: bool,
    pub schedule: TrainSchedule,
}

impl Default for QuestionerConfig {
    fn default() -> Self {
        QuestionerConfig {
            hidden_size: 32,
            word_embed_size: 64,
            freeze_estimator: true,
            max_turns: 5,
            max_question_len: 12,
            include_failed_games: false,
            schedule: TrainSchedule {
                epochs: 30,
                // Validation loss plateaus for several epochs before the
                // decoder starts reading the scene.
                patience: 10,
                learning_rate: 1e-2,
                ..TrainSchedule::default()
            },
        }
    }
}

impl QuestionerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_turns == 0 {
            return Err(Error::InvalidSpec("max_turns must be at least 1".into()));
        }
        if self.max_question_len == 0 || self.word_embed_size == 0 || self.hidden_size < 2 {
            return Err(Error::InvalidSpec(
                "question length, word embedding and hidden sizes must be positive".into(),
            ));
        }
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionerContext {
    pub v_t: Vec<f64>,
    pub turn_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeStrategy {
    Greedy,
    /// Softmax sampling at the given temperature.
    Sample {
        temperature: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedQuestion {
    /// Emitted ids, `[EOS]` excluded.
    pub ids: Vec<usize>,
    pub text: String,
}

/// Row `i` scaled by `p[i]`.
pub fn reweight_objects(objects: &Tensor2, p: &[f64]) -> Result<Tensor2> {
    validate_belief(p)?;
    if objects.rows() != p.len() {
        return Err(Error::InvalidShape(format!(
            "{} object rows for a belief over {} objects",
            objects.rows(),
            p.len()
        )));
    }
    let mut w = objects.clone();
    for (i, &pi) in p.iter().enumerate() {
        w.row_mut(i).iter_mut().for_each(|v| *v *= pi);
    }
    Ok(w)
}

/// `d_i = w_i - mean_{j != i} w_j`.
pub fn leave_one_out_differences(weighted: &Tensor2) -> Result<Tensor2> {
    let n = weighted.rows();
    if n < 2 {
        return Err(Error::InvalidScene(format!(
            "vis-diff needs at least two objects, got {n}"
        )));
    }
    let total = weighted.col_sums();
    let mut d = weighted.clone();
    let k = 1.0 / (n - 1) as f64;
    for i in 0..n {
        for (v, s) in d.row_mut(i).iter_mut().zip(&total) {
            *v -= k * (s - *v);
        }
    }
    Ok(d)
}

struct VisCache {
    diffs: Tensor2,
    pooled: Vec<f64>,
    v: Vec<f64>,
}

fn vis_forward(params: &ParamSet, weighted: &Tensor2) -> Result<VisCache> {
    let n = weighted.rows();
    let diffs = leave_one_out_differences(weighted)?;
    let d = weighted.cols();
    let mut pooled = vec![0.0; 2 * d];
    for i in 0..n {
        for (k, (&w, &dd)) in weighted.row(i).iter().zip(diffs.row(i)).enumerate() {
            pooled[k] += w / n as f64;
            pooled[d + k] += dd * dd / n as f64;
        }
    }
    let mut v = vec_matmul(&pooled, params.get(CTX_W));
    v.iter_mut()
        .zip(params.get(CTX_B).data())
        .for_each(|(x, b)| *x = (*x + b).tanh());
    Ok(VisCache { diffs, pooled, v })
}

/// Belief-weighted rows rescaled by the object count, so a uniform belief
/// leaves them at the scale of the object features whatever the scene size.
fn context_rows(objects: &Tensor2, p: &[f64]) -> Result<Tensor2> {
    let mut w = reweight_objects(objects, p)?;
    w.scale(objects.rows() as f64);
    Ok(w)
}

/// Context vector of belief-weighted object rows. Differences enter squared:
/// the plain leave-one-out differences always sum to zero over objects.
pub fn vis_diff(params: &ParamSet, weighted: &Tensor2) -> Result<Vec<f64>> {
    Ok(vis_forward(params, weighted)?.v)
}

/// Returns the gradient with respect to the weighted rows.
fn vis_backward(params: &ParamSet, cache: &VisCache, g_v: &[f64], grads: &mut ParamSet) -> Tensor2 {
    let g_pre: Vec<f64> = g_v
        .iter()
        .zip(&cache.v)
        .map(|(g, v)| g * (1.0 - v * v))
        .collect();
    add_outer(grads.get_mut(CTX_W), &cache.pooled, &g_pre);
    add_to(grads.get_mut(CTX_B).data_mut(), &g_pre);
    let g_pooled = vec_matmul_t(&g_pre, params.get(CTX_W));
    let (n, d) = cache.diffs.shape();
    let nf = n as f64;
    let mut g_w = Tensor2::zeros(n, d);
    let mut g_d = Tensor2::zeros(n, d);
    for i in 0..n {
        for k in 0..d {
            g_w.set(i, k, g_pooled[k] / nf);
            g_d.set(i, k, g_pooled[d + k] * 2.0 * cache.diffs.get(i, k) / nf);
        }
    }
    let total = g_d.col_sums();
    let k = 1.0 / (n - 1) as f64;
    for i in 0..n {
        for (c, g) in g_w.row_mut(i).iter_mut().enumerate() {
            let gd = g_d.get(i, c);
            *g += gd * (1.0 + k) - k * total[c];
        }
    }
    g_w
}

fn add_to(acc: &mut [f64], g: &[f64]) {
    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
}

fn affine(
    x: &[f64],
    w: &Tensor2,
    h: &[f64],
    u: &Tensor2,
    v: &[f64],
    c: &Tensor2,
    b: &Tensor2,
) -> Vec<f64> {
    let mut a = vec_matmul(x, w);
    add_to(&mut a, &vec_matmul(h, u));
    add_to(&mut a, &vec_matmul(v, c));
    add_to(&mut a, b.data());
    a
}

struct StepCache {
    token: usize,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    h: Vec<f64>,
}

/// One recurrent step; the context `v` enters every gate.
fn gru_step(params: &ParamSet, token: usize, v: &[f64], h_prev: &[f64]) -> StepCache {
    let x = params.get(WORD_EMB).row(token);
    let gate = |w, u, c, b, h: &[f64]| {
        affine(
            x,
            params.get(w),
            h,
            params.get(u),
            v,
            params.get(c),
            params.get(b),
        )
    };
    let z: Vec<f64> = gate(WZ, UZ, CZ, BZ, h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let r: Vec<f64> = gate(WR, UR, CR, BR, h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let n: Vec<f64> = gate(WN, UN, CN, BN, &rh)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let h = (0..h_prev.len())
        .map(|k| (1.0 - z[k]) * n[k] + z[k] * h_prev[k])
        .collect();
    StepCache {
        token,
        h_prev: h_prev.to_vec(),
        z,
        r,
        n,
        h,
    }
}

/// Backward of one GRU step given `d loss / d h`; returns `d loss / d h_prev`
/// and adds `d loss / d v` into `g_v`.
fn gru_step_backward(
    params: &ParamSet,
    c: &StepCache,
    v: &[f64],
    g_h: &[f64],
    g_v: &mut [f64],
    grads: &mut ParamSet,
) -> Vec<f64> {
    let d = g_h.len();
    let x = params.get(WORD_EMB).row(c.token).to_vec();
    let mut g_prev: Vec<f64> = (0..d).map(|k| g_h[k] * c.z[k]).collect();
    let g_an: Vec<f64> = (0..d)
        .map(|k| g_h[k] * (1.0 - c.z[k]) * (1.0 - c.n[k] * c.n[k]))
        .collect();
    let g_az: Vec<f64> = (0..d)
        .map(|k| g_h[k] * (c.h_prev[k] - c.n[k]) * c.z[k] * (1.0 - c.z[k]))
        .collect();
    let rh: Vec<f64> = c.r.iter().zip(&c.h_prev).map(|(a, b)| a * b).collect();
    add_outer(grads.get_mut(WN), &x, &g_an);
    add_outer(grads.get_mut(UN), &rh, &g_an);
    add_to(grads.get_mut(BN).data_mut(), &g_an);
    add_outer(grads.get_mut(CN), v, &g_an);
    add_to(g_v, &vec_matmul_t(&g_an, params.get(CN)));
    let g_rh = vec_matmul_t(&g_an, params.get(UN));
    let g_ar: Vec<f64> = (0..d)
        .map(|k| g_rh[k] * c.h_prev[k] * c.r[k] * (1.0 - c.r[k]))
        .collect();
    for k in 0..d {
        g_prev[k] += g_rh[k] * c.r[k];
    }
    let mut g_x = vec_matmul_t(&g_an, params.get(WN));
    for (gate, w, u, cc, b) in [(&g_az, WZ, UZ, CZ, BZ), (&g_ar, WR, UR, CR, BR)] {
        add_outer(grads.get_mut(w), &x, gate);
        add_outer(grads.get_mut(u), &c.h_prev, gate);
        add_outer(grads.get_mut(cc), v, gate);
        add_to(g_v, &vec_matmul_t(gate, params.get(cc)));
        add_to(grads.get_mut(b).data_mut(), gate);
        add_to(&mut g_x, &vec_matmul_t(gate, params.get(w)));
        add_to(&mut g_prev, &vec_matmul_t(gate, params.get(u)));
    }
    add_to(grads.get_mut(WORD_EMB).row_mut(c.token), &g_x);
    g_prev
}

fn initial_hidden(params: &ParamSet, v_t: &[f64]) -> Vec<f64> {
    let mut h = vec_matmul(v_t, params.get(INIT_W));
    h.iter_mut()
        .zip(params.get(INIT_B).data())
        .for_each(|(x, b)| *x = (*x + b).tanh());
    h
}

fn output_logits(params: &ParamSet, h: &[f64]) -> Vec<f64> {
    let mut y = vec_matmul(h, params.get(OUT_W));
    add_to(&mut y, params.get(OUT_B).data());
    y
}

/// Initializes the decoder parameters (the estimator is added separately).
pub fn init_decoder_params(
    vocab_size: usize,
    hidden: usize,
    word_embed: usize,
    bound: f64,
    seed: u64,
) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0A5C);
    let mut p = ParamSet::new();
    let mut u = |r: usize, c: usize| Tensor2::uniform(r, c, bound, &mut rng);
    p.insert(WORD_EMB, u(vocab_size, word_embed));
    p.insert(CTX_W, u(2 * FEATURE_DIM, hidden));
    p.insert(CTX_B, u(1, hidden));
    p.insert(INIT_W, u(hidden, hidden));
    p.insert(INIT_B, u(1, hidden));
    for (w, uu, c, b) in [(WZ, UZ, CZ, BZ), (WR, UR, CR, BR), (WN, UN, CN, BN)] {
        p.insert(w, u(word_embed, hidden));
        p.insert(uu, u(hidden, hidden));
        p.insert(c, u(hidden, hidden));
        p.insert(b, u(1, hidden));
    }
    p.insert(OUT_W, u(hidden, vocab_size));
    p.insert(OUT_B, u(1, vocab_size));
    p
}

fn masked(vocab_size: usize) -> impl Fn(usize) -> bool {
    move |i| i == Vocabulary::PAD || i == Vocabulary::CLS || i >= vocab_size
}

/// Decodes from `[SOS]` until `[EOS]` or `max_len` tokens; `[PAD]` and `[CLS]`
/// are never emitted.
pub fn decode_question<R: Rng>(
    v_t: &[f64],
    params: &ParamSet,
    vocab: &Vocabulary,
    max_len: usize,
    strategy: DecodeStrategy,
    rng: &mut R,
) -> Result<DecodedQuestion> {
    if max_len == 0 {
        return Err(Error::InvalidSpec("max_len must be at least 1".into()));
    }
    let is_masked = masked(vocab.len());
    let mut h = initial_hidden(params, v_t);
    let mut token = Vocabulary::SOS;
    let mut ids = Vec::new();
    for _ in 0..max_len {
        h = gru_step(params, token, v_t, &h).h;
        let mut logits = output_logits(params, &h);
        for (i, l) in logits.iter_mut().enumerate() {
            if is_masked(i) {
                *l = f64::NEG_INFINITY;
            }
        }
        token = match strategy {
            DecodeStrategy::Greedy => argmax(&logits),
            DecodeStrategy::Sample { temperature } => {
                let t = temperature.max(1e-6);
                let scaled: Vec<f64> = logits.iter().map(|l| l / t).collect();
                let p = softmax_unchecked(&scaled);
                WeightedIndex::new(&p)
                    .map_err(|e| Error::NumericalFailure(format!("sampling: {e}")))?
                    .sample(rng)
            }
        };
        if token == Vocabulary::EOS {
            break;
        }
        ids.push(token);
    }
    let text = if ids.is_empty() {
        String::new()
    } else {
        format!("{}?", vocab.decode(&ids))
    };
    Ok(DecodedQuestion { ids, text })
}

/// One gold dialog prepared for teacher forcing.
#[derive(Debug, Clone)]
pub struct QuestionerExample {
    pub dialog: GuesserExample,
    /// Per turn: decoder inputs (`[SOS]`, words) and targets (words, `[EOS]`).
    pub sequences: Vec<(Vec<usize>, Vec<usize>)>,
}

struct TurnForward {
    vis: VisCache,
    h0: Vec<f64>,
    steps: Vec<StepCache>,
    g_logits: Vec<Vec<f64>>,
}

struct DialogForward {
    objects: Tensor2,
    unroll: crate::guesser::DialogUnroll,
    turns: Vec<TurnForward>,
    loss_sum: f64,
    tokens: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionerModel {
    pub config: QuestionerConfig,
    pub vocab: Vocabulary,
    /// Decoder tensors plus the estimator's under [`ESTIMATOR_PREFIX`].
    pub params: ParamSet,
    estimator: GuesserModel,
}

impl QuestionerModel {
    /// Fresh decoder on top of `estimator`; fails if vocabularies or hidden
    /// sizes disagree.
    pub fn new(config: QuestionerConfig, estimator: GuesserModel, seed: u64) -> Result<Self> {
        Self::with_init_bound(config, estimator, seed, DECODER_INIT_BOUND)
    }

    pub fn with_init_bound(
        config: QuestionerConfig,
        estimator: GuesserModel,
        seed: u64,
        bound: f64,
    ) -> Result<Self> {
        config.validate()?;
        if estimator.config.hidden_size != config.hidden_size {
            return Err(Error::IncompatibleCheckpoint(format!(
                "estimator hidden size {} differs from questioner hidden size {}",
                estimator.config.hidden_size, config.hidden_size
            )));
        }
        let vocab = estimator.vocab.clone();
        let mut params = init_decoder_params(
            vocab.len(),
            config.hidden_size,
            config.word_embed_size,
            bound,
            seed,
        );
        params.merge_prefixed(ESTIMATOR_PREFIX, estimator.params.clone());
        Ok(QuestionerModel {
            config,
            vocab,
            params,
            estimator,
        })
    }

    pub fn estimator(&self) -> &GuesserModel {
        &self.estimator
    }

    /// Estimator parameters as stored in `params`.
    pub fn estimator_params(params: &ParamSet) -> ParamSet {
        let mut p = params.clone();
        p.take_prefixed(ESTIMATOR_PREFIX)
    }

    pub fn example(&self, game: &GameRecord, scene: &Scene) -> Result<QuestionerExample> {
        let dialog = self.estimator.example(game, scene)?;
        let cap = self.config.max_question_len.saturating_sub(1).max(1);
        let sequences = game
            .turns
            .iter()
            .map(|t| {
                let mut words = self.vocab.word_ids(&t.question);
                words.truncate(cap);
                let mut input = vec![Vocabulary::SOS];
                input.extend(&words);
                let mut target = words;
                target.push(Vocabulary::EOS);
                (input, target)
            })
            .collect();
        Ok(QuestionerExample { dialog, sequences })
    }

    pub fn examples(
        &self,
        games: &[GameRecord],
        scenes: &SceneMap,
    ) -> Result<Vec<QuestionerExample>> {
        games
            .iter()
            .map(|g| self.example(g, lookup_scene(scenes, g.scene_id)?))
            .collect()
    }

    /// Context for the next question given the current belief.
    pub fn context(
        &self,
        params: &ParamSet,
        feats: &ObjectFeatureSet,
        belief: &BeliefState,
    ) -> Result<QuestionerContext> {
        let weighted = context_rows(&feats.rows, &belief.probabilities)?;
        Ok(QuestionerContext {
            v_t: vis_diff(params, &weighted)?,
            turn_index: belief.turn_index,
        })
    }

    /// Greedy question for `belief` over the scene's objects.
    pub fn ask(&self, feats: &ObjectFeatureSet, belief: &BeliefState) -> Result<DecodedQuestion> {
        self.ask_with(
            feats,
            belief,
            DecodeStrategy::Greedy,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
    }

    pub fn ask_with<R: Rng>(
        &self,
        feats: &ObjectFeatureSet,
        belief: &BeliefState,
        strategy: DecodeStrategy,
        rng: &mut R,
    ) -> Result<DecodedQuestion> {
        let ctx = self.context(&self.params, feats, belief)?;
        decode_question(
            &ctx.v_t,
            &self.params,
            &self.vocab,
            self.config.max_question_len,
            strategy,
            rng,
        )
    }

    fn forward(
        &self,
        params: &ParamSet,
        est: &ParamSet,
        ex: &QuestionerExample,
    ) -> Result<DialogForward> {
        let feats = &ex.dialog.feats;
        let unroll = self.estimator.unroll(est, feats, &ex.dialog.turns)?;
        let objects = feats.rows.clone();
        let mut turns = Vec::with_capacity(ex.sequences.len());
        let mut loss_sum = 0.0;
        let mut tokens = 0;
        for (t, (input, target)) in ex.sequences.iter().enumerate() {
            let weighted = context_rows(&objects, &unroll.beliefs[t])?;
            let vis = vis_forward(params, &weighted)?;
            let h0 = initial_hidden(params, &vis.v);
            let mut h = h0.clone();
            let mut steps = Vec::with_capacity(input.len());
            let mut g_logits = Vec::with_capacity(input.len());
            for (&tok, &tgt) in input.iter().zip(target) {
                let step = gru_step(params, tok, &vis.v, &h);
                let logits = output_logits(params, &step.h);
                let (l, g) = softmax_cross_entropy(&logits, tgt)?;
                loss_sum += l;
                tokens += 1;
                h = step.h.clone();
                steps.push(step);
                g_logits.push(g);
            }
            turns.push(TurnForward {
                vis,
                h0,
                steps,
                g_logits,
            });
        }
        Ok(DialogForward {
            objects,
            unroll,
            turns,
            loss_sum,
            tokens,
        })
    }

    /// Mean token cross-entropy of one dialog and its gradient. Estimator
    /// gradients are included only when fine-tuning.
    pub fn loss_and_grad(
        &self,
        params: &ParamSet,
        ex: &QuestionerExample,
    ) -> Result<(f64, ParamSet)> {
        let fine_tune = !self.config.freeze_estimator;
        let est = if fine_tune {
            Self::estimator_params(params)
        } else {
            self.estimator.params.clone()
        };
        let fwd = self.forward(params, &est, ex)?;
        if fwd.tokens == 0 {
            return Err(Error::InvalidData("dialog without question tokens".into()));
        }
        let scale = 1.0 / fwd.tokens as f64;
        let mut grads = params.zeros_like();
        let n = fwd.objects.rows();
        let mut belief_grads = vec![vec![0.0; n]; fwd.unroll.beliefs.len()];
        for (t, turn) in fwd.turns.iter().enumerate() {
            let d = turn.h0.len();
            let mut g_h = vec![0.0; d];
            let mut g_v = vec![0.0; d];
            for (step, g_l) in turn.steps.iter().zip(&turn.g_logits).rev() {
                let g_l: Vec<f64> = g_l.iter().map(|g| g * scale).collect();
                add_outer(grads.get_mut(OUT_W), &step.h, &g_l);
                add_to(grads.get_mut(OUT_B).data_mut(), &g_l);
                add_to(&mut g_h, &vec_matmul_t(&g_l, params.get(OUT_W)));
                g_h = gru_step_backward(params, step, &turn.vis.v, &g_h, &mut g_v, &mut grads);
            }
            let g_pre: Vec<f64> = g_h
                .iter()
                .zip(&turn.h0)
                .map(|(g, h)| g * (1.0 - h * h))
                .collect();
            add_outer(grads.get_mut(INIT_W), &turn.vis.v, &g_pre);
            add_to(grads.get_mut(INIT_B).data_mut(), &g_pre);
            add_to(&mut g_v, &vec_matmul_t(&g_pre, params.get(INIT_W)));
            let g_w = vis_backward(params, &turn.vis, &g_v, &mut grads);
            if fine_tune {
                let nf = n as f64;
                for i in 0..n {
                    belief_grads[t][i] +=
                        nf * crate::numkernel::dot(g_w.row(i), fwd.objects.row(i));
                }
            }
        }
        if fine_tune {
            let mut est_grads = est.zeros_like();
            self.estimator
                .unroll_backward(&est, &fwd.unroll, &belief_grads, &mut est_grads);
            for (k, g) in est_grads.iter() {
                grads
                    .get_mut(&format!("{ESTIMATOR_PREFIX}{k}"))
                    .add_assign(g);
            }
        }
        Ok((fwd.loss_sum * scale, grads))
    }

    /// Total token negative log-likelihood and token count over `examples`.
    pub fn token_nll(
        &self,
        params: &ParamSet,
        examples: &[QuestionerExample],
    ) -> Result<(f64, usize)> {
        let est = if self.config.freeze_estimator {
            self.estimator.params.clone()
        } else {
            Self::estimator_params(params)
        };
        let parts: Vec<(f64, usize)> = examples
            .par_iter()
            .map(|ex| {
                self.forward(params, &est, ex)
                    .map(|f| (f.loss_sum, f.tokens))
            })
            .collect::<Result<_>>()?;
        Ok(parts
            .into_iter()
            .fold((0.0, 0), |(a, b), (l, n)| (a + l, b + n)))
    }

    fn summarize(&self, params: &ParamSet, examples: &[QuestionerExample]) -> Result<EvalSummary> {
        let (nll, n) = self.token_nll(params, examples)?;
        Ok(EvalSummary {
            loss: nll / n.max(1) as f64,
            accuracy: None,
        })
    }

    /// Per-token perplexity of the gold questions.
    pub fn perplexity(&self, games: &[GameRecord], scenes: &SceneMap) -> Result<f64> {
        let games: Vec<GameRecord> = games
            .iter()
            .filter(|g| !g.turns.is_empty())
            .cloned()
            .collect();
        if games.is_empty() {
            return Err(Error::EmptyInput("no dialogs to score".into()));
        }
        let ex = self.examples(&games, scenes)?;
        let (nll, n) = self.token_nll(&self.params, &ex)?;
        Ok((nll / n as f64).exp())
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            model_kind: QUESTIONER_KIND.into(),
            config: serde_json::json!({
                "questioner": self.config,
                "estimator": self.estimator.config,
            }),
            vocab: self.vocab.clone(),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self> {
        ckpt.expect_kind(QUESTIONER_KIND)?;
        #[derive(Deserialize)]
        struct Stored {
            questioner: QuestionerConfig,
            estimator: crate::guesser::GuesserConfig,
        }
        let stored: Stored = ckpt.config_as()?;
        let estimator = GuesserModel::from_parts(
            stored.estimator,
            ckpt.vocab.clone(),
            Self::estimator_params(&ckpt.params),
        )?;
        let mut model = QuestionerModel::new(stored.questioner, estimator, 0)?;
        ckpt.check_manifest(&model.params)?;
        model.params = ckpt.params.clone();
        Ok(model)
    }
}

/// Teacher-forced training on gold dialogs. The estimator comes from a
/// trained guesser and stays frozen unless `freeze_estimator` is off.
pub fn train_questioner(
    train: &[GameRecord],
    valid: &[GameRecord],
    scenes: &SceneMap,
    vocab: &Vocabulary,
    estimator: &GuesserModel,
    config: &QuestionerConfig,
) -> Result<(QuestionerModel, TrainReport)> {
    if &estimator.vocab != vocab {
        return Err(Error::IncompatibleCheckpoint(
            "estimator vocabulary differs from the corpus vocabulary".into(),
        ));
    }
    let mut model = QuestionerModel::new(config.clone(), estimator.clone(), config.schedule.seed)?;
    let usable = |gs: &[GameRecord]| -> Vec<GameRecord> {
        gs.iter()
            .filter(|g| (config.include_failed_games || g.is_success()) && !g.turns.is_empty())
            .cloned()
            .collect()
    };
    let train_ex = model.examples(&usable(train), scenes)?;
    let valid_ex = model.examples(&usable(valid), scenes)?;
    if train_ex.is_empty() {
        return Err(Error::InvalidData("no dialogs to train on".into()));
    }
    let frozen = config.freeze_estimator;
    let mut params = model.params.clone();
    let report = fit(
        &mut params,
        &train_ex,
        &valid_ex,
        &config.schedule,
        |p, ex| model.loss_and_grad(p, ex),
        |p, exs| model.summarize(p, exs),
        |name| !(frozen && name.starts_with(ESTIMATOR_PREFIX)),
    )?;
    let est = QuestionerModel::estimator_params(&params);
    model.estimator = GuesserModel::from_parts(estimator.config.clone(), vocab.clone(), est)?;
    model.params = params;
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gold_fixture, GoldCorpus};
    use crate::encoder::object_features;
    use crate::guesser::{train_guesser, GuesserConfig};
    use crate::numkernel::{grad_check, DEFAULT_STEP};
    use crate::world::{generate_scene, parse_question, rule_answer, QuestionSemantics, SceneSpec};
    use std::sync::OnceLock;

    fn tiny_estimator(vocab: &Vocabulary, layers: usize, seed: u64) -> GuesserModel {
        let cfg = GuesserConfig {
            hidden_size: 4,
            layer_count: layers,
            answer_embed_size: 3,
            head_hidden: 5,
            ..Default::default()
        };
        GuesserModel::with_init_bound(cfg, vocab.clone(), seed, 1.0).unwrap()
    }

    fn tiny_config(freeze: bool) -> QuestionerConfig {
        QuestionerConfig {
            hidden_size: 4,
            word_embed_size: 3,
            freeze_estimator: freeze,
            max_question_len: 3,
            ..Default::default()
        }
    }

    #[test]
    fn reweight_examples() {
        let rows = Tensor2::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let w = reweight_objects(&rows, &[0.8, 0.2]).unwrap();
        assert_eq!(w.data(), &[0.8, 0.8, 0.2, 0.2]);
        let r3 = Tensor2::from_rows(&[vec![3.0, -3.0], vec![6.0, 1.5], vec![-9.0, 0.3]]).unwrap();
        let u = reweight_objects(&r3, &[1.0 / 3.0; 3]).unwrap();
        for (a, b) in u.data().iter().zip(r3.data()) {
            assert!((a - b / 3.0).abs() < 1e-15);
        }
        let one_hot = reweight_objects(&r3, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(one_hot.data(), &[0.0, 0.0, 6.0, 1.5, 0.0, 0.0]);
        assert!(matches!(
            reweight_objects(&rows, &[0.7, 0.7]),
            Err(Error::InvalidBelief(_))
        ));
    }

    #[test]
    fn reweight_is_linear_in_belief() {
        let r = Tensor2::from_rows(&[vec![0.5, -2.0], vec![1.0, 4.0]]).unwrap();
        let a = reweight_objects(&r, &[0.3, 0.7]).unwrap();
        let b = reweight_objects(&r, &[0.9, 0.1]).unwrap();
        let mix = reweight_objects(&r, &[0.5 * 0.3 + 0.5 * 0.9, 0.5 * 0.7 + 0.5 * 0.1]).unwrap();
        for i in 0..4 {
            let want = 0.5 * a.data()[i] + 0.5 * b.data()[i];
            assert!((mix.data()[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn leave_one_out_examples() {
        let r0 = vec![1.0, 2.0];
        let r1 = vec![-3.0, 0.5];
        let w = Tensor2::from_rows(&[r0.clone(), r1.clone()]).unwrap();
        let d = leave_one_out_differences(&w).unwrap();
        assert_eq!(d.row(0), &[4.0, 1.5]);
        assert_eq!(d.row(1), &[-4.0, -1.5]);
        assert_eq!(d.col_sums(), vec![0.0, 0.0]);
        let same = Tensor2::from_rows(&vec![vec![0.2, 0.4]; 3]).unwrap();
        let d = leave_one_out_differences(&same).unwrap();
        assert!(d.data().iter().all(|&v| v.abs() < 1e-15));
        assert!(matches!(
            leave_one_out_differences(&Tensor2::zeros(1, 2)),
            Err(Error::InvalidScene(_))
        ));
    }

    #[test]
    fn vis_diff_of_identical_rows_projects_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = init_decoder_params(10, 2, 3, 0.5, 1);
        let row: Vec<f64> = (0..FEATURE_DIM).map(|k| (k as f64 * 0.37).sin()).collect();
        let w = Tensor2::from_rows(&[row.clone(), row.clone(), row.clone()]).unwrap();
        let v = vis_diff(&p, &w).unwrap();
        let mut input = row;
        input.resize(2 * FEATURE_DIM, 0.0);
        let mut want = vec_matmul(&input, p.get(CTX_W));
        want.iter_mut()
            .zip(p.get(CTX_B).data())
            .for_each(|(x, b)| *x = (*x + b).tanh());
        for (x, y) in v.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
        let shuffled = Tensor2::uniform(5, FEATURE_DIM, 1.0, &mut rng);
        let mut rev = Tensor2::zeros(5, FEATURE_DIM);
        for i in 0..5 {
            rev.row_mut(i).copy_from_slice(shuffled.row(4 - i));
        }
        let a = vis_diff(&p, &shuffled).unwrap();
        let b = vis_diff(&p, &rev).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_parameters_repeat_one_token() {
        let fx = gold_fixture(10, 5, 1);
        let mut p = init_decoder_params(fx.vocab.len(), 4, 3, 0.5, 2);
        p.iter_mut().for_each(|(_, t)| t.scale(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = decode_question(
            &[0.0; 4],
            &p,
            &fx.vocab,
            6,
            DecodeStrategy::Greedy,
            &mut rng,
        )
        .unwrap();
        assert_eq!(q.ids, vec![Vocabulary::SOS; 6]);
        assert!(q
            .ids
            .iter()
            .all(|&i| i != Vocabulary::PAD && i != Vocabulary::CLS));
    }

    #[test]
    fn decoding_is_deterministic_and_never_emits_reserved_tokens() {
        let fx = gold_fixture(10, 5, 1);
        let p = init_decoder_params(fx.vocab.len(), 4, 3, 2.0, 7);
        let v = [0.4, -0.2, 0.9, 0.1];
        let mut r1 = ChaCha8Rng::seed_from_u64(0);
        let mut r2 = ChaCha8Rng::seed_from_u64(0);
        let a = decode_question(&v, &p, &fx.vocab, 12, DecodeStrategy::Greedy, &mut r1).unwrap();
        let b = decode_question(&v, &p, &fx.vocab, 12, DecodeStrategy::Greedy, &mut r2).unwrap();
        assert_eq!(a, b);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = decode_question(
                &v,
                &p,
                &fx.vocab,
                12,
                DecodeStrategy::Sample { temperature: 2.0 },
                &mut rng,
            )
            .unwrap();
            assert!(s.ids.len() <= 12);
            assert!(s
                .ids
                .iter()
                .all(|&i| i != Vocabulary::PAD && i != Vocabulary::CLS && i != Vocabulary::EOS));
        }
        assert!(decode_question(&v, &p, &fx.vocab, 0, DecodeStrategy::Greedy, &mut r1).is_err());
    }

    fn one_turn_fixture() -> (GoldCorpus, GameRecord) {
        let fx = gold_fixture(30, 5, 4);
        let mut game = fx
            .games
            .iter()
            .find(|g| fx.scenes[g.scene_id as usize].len() >= 3)
            .unwrap()
            .clone();
        game.turns.truncate(1);
        (fx, game)
    }

    #[test]
    fn decoder_gradient_one_turn_three_tokens() {
        let (fx, game) = one_turn_fixture();
        let scene = &fx.scenes[game.scene_id as usize];
        for (seed, layers) in [(0u64, 1), (1, 0), (2, 1)] {
            let est = tiny_estimator(&fx.vocab, layers, seed);
            let m = QuestionerModel::with_init_bound(tiny_config(true), est, seed, 1.0).unwrap();
            let ex = m.example(&game, scene).unwrap();
            assert_eq!(ex.sequences[0].1.len(), 3);
            let r = grad_check(|p| m.loss_and_grad(p, &ex), &m.params, DEFAULT_STEP).unwrap();
            assert!(r.max_rel_error <= 1e-4, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn fine_tune_gradient_reaches_the_estimator() {
        let fx = gold_fixture(30, 5, 4);
        let mut game = fx
            .games
            .iter()
            .find(|g| g.turns.len() >= 2)
            .unwrap()
            .clone();
        game.turns.truncate(2);
        let scene = &fx.scenes[game.scene_id as usize];
        let est = tiny_estimator(&fx.vocab, 1, 9);
        let m = QuestionerModel::with_init_bound(tiny_config(false), est, 9, 1.0).unwrap();
        let ex = m.example(&game, scene).unwrap();
        let (_, g) = m.loss_and_grad(&m.params, &ex).unwrap();
        let mut checked = 0;
        for (name, t) in m.params.iter() {
            if !name.starts_with(ESTIMATOR_PREFIX) {
                continue;
            }
            for i in 0..t.data().len() {
                let mut plus = m.params.clone();
                plus.get_mut(name).data_mut()[i] += DEFAULT_STEP;
                let mut minus = m.params.clone();
                minus.get_mut(name).data_mut()[i] -= DEFAULT_STEP;
                let fd = (m.loss_and_grad(&plus, &ex).unwrap().0
                    - m.loss_and_grad(&minus, &ex).unwrap().0)
                    / (2.0 * DEFAULT_STEP);
                let an = g.get(name).data()[i];
                // Below 1e-6 the difference quotient is dominated by round-off.
                if fd.abs() > 1e-6 {
                    assert!(
                        (an - fd).abs() / fd.abs() <= 1e-4,
                        "{name}[{i}]: {an} vs {fd}"
                    );
                    checked += 1;
                } else {
                    assert!((an - fd).abs() <= 1e-9, "{name}[{i}]: {an} vs {fd}");
                }
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn incompatible_estimators_are_rejected() {
        let fx = gold_fixture(20, 5, 4);
        let est = tiny_estimator(&fx.vocab, 1, 0);
        assert!(matches!(
            QuestionerModel::new(QuestionerConfig::default(), est.clone(), 0),
            Err(Error::IncompatibleCheckpoint(_))
        ));
        let other = gold_fixture(20, 5, 99);
        let mut vocab = other.vocab.clone();
        if vocab == fx.vocab {
            vocab = Vocabulary::build(&other.games[..1], 1);
        }
        let r = train_questioner(
            &fx.games,
            &[],
            &fx.scene_map(),
            &vocab,
            &est,
            &tiny_config(true),
        );
        assert!(matches!(r, Err(Error::IncompatibleCheckpoint(_))));
    }

    struct Trained {
        fx: GoldCorpus,
        questioner: QuestionerModel,
    }

    fn trained() -> &'static Trained {
        static CELL: OnceLock<Trained> = OnceLock::new();
        CELL.get_or_init(|| {
            let fx = gold_fixture(400, 5, 11);
            let map = fx.scene_map();
            let (train, valid) = fx.games.split_at(300);
            let (guesser, _) =
                train_guesser(train, valid, &map, &fx.vocab, &GuesserConfig::default()).unwrap();
            let (questioner, _) = train_questioner(
                train,
                valid,
                &map,
                &fx.vocab,
                &guesser,
                &QuestionerConfig::default(),
            )
            .unwrap();
            Trained { fx, questioner }
        })
    }

    #[test]
    fn perplexity_beats_uniform_by_five() {
        let t = trained();
        let map = t.fx.scene_map();
        let ppl = t.questioner.perplexity(&t.fx.games[300..], &map).unwrap();
        let uniform = t.fx.vocab.len() as f64;
        assert!(ppl * 5.0 < uniform, "perplexity {ppl} vs |V| {uniform}");
    }

    #[test]
    fn generated_questions_parse() {
        let t = trained();
        let q = &t.questioner;
        let mut parsed = 0;
        let mut total = 0;
        for seed in 0..40 {
            let scene = generate_scene(&SceneSpec::default(), 5000 + seed).unwrap();
            let feats = object_features(&scene);
            let target = seed as usize % scene.len();
            let mut belief = BeliefState::uniform(scene.len());
            for _ in 0..q.config.max_turns {
                let question = q.ask(&feats, &belief).unwrap();
                let sem = parse_question(&question.text);
                total += 1;
                if sem != QuestionSemantics::Unparseable {
                    parsed += 1;
                }
                let answer = rule_answer(&scene, target, &sem).unwrap();
                belief = BeliefState {
                    probabilities: q
                        .estimator()
                        .observe(&feats, &belief.probabilities, &question.text, answer)
                        .unwrap(),
                    turn_index: belief.turn_index + 1,
                };
            }
        }
        assert!(parsed as f64 >= 0.9 * total as f64, "{parsed}/{total}");
    }

    #[test]
    fn frozen_estimator_bytes_survive_training() {
        let t = trained();
        let ckpt = t.questioner.to_checkpoint();
        let est = t.questioner.estimator().to_checkpoint();
        let mut inner = ckpt.params.clone();
        let inner = inner.take_prefixed(ESTIMATOR_PREFIX);
        let rebuilt = ModelCheckpoint {
            params: inner,
            ..est.clone()
        };
        assert_eq!(rebuilt.to_bytes(), est.to_bytes());
        let back = QuestionerModel::from_checkpoint(
            &ModelCheckpoint::from_bytes(&ckpt.to_bytes()).unwrap(),
        )
        .unwrap();
        assert_eq!(back, t.questioner);
    }
}
