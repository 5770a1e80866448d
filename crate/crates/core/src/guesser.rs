//! Guesser agent and state estimator.
//!
//! Each turn fuses object states with the sentence state
//! (`f_i = h_obj[i] ⊙ h_cls`), scales each row by the object's current
//! belief, adds the projected answer embedding, scores every object with a
//! shared head, and mixes the softmax of those scores into the running
//! belief: `p_{t+1} = α·softmax(logits) + (1 − α)·p_t`. Beliefs start
//! uniform; the final guess is the argmax, lowest index on ties.
//!
//! Training backpropagates the cross-entropy of the final belief through the
//! whole unrolled dialog, including every earlier belief.
//!
//! [`GuesserVariant::PreConcatenation`] instead appends the answer word to the
//! question tokens and skips the answer embedding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::ModelCheckpoint;
use crate::dataset::{GameRecord, QuestionTokens, Vocabulary, DEFAULT_MAX_QUESTION_LEN};
use crate::encoder::{
    object_features, EncodeMode, Encoder, EncoderConfig, EncoderGrad, EncoderOutput,
    ObjectFeatureSet, ToyCache, ToyEncoder, AGENT_INIT_BOUND,
};
use crate::error::{Error, Result};
use crate::numkernel::{
    add_outer, argmax, dense_backward, dense_forward, dot, init_dense, init_mlp, mlp_backward,
    mlp_forward_with, softmax, softmax_backward, vec_matmul, vec_matmul_t, Activation, MlpCache,
    ParamSet, Tensor2, HEAD_INIT_BOUND, PROB_FLOOR,
};
use crate::training::{fit, EvalSummary, TrainReport, TrainSchedule};
use crate::world::{lookup_scene, AnswerClass, Scene, SceneMap};

pub const GUESSER_KIND: &str = "guesser";
pub const BELIEF_TOLERANCE: f64 = 1e-6;
const ANS_EMB: &str = "guesser.ans_emb";
const ANS_PROJ: &str = "guesser.ans_proj";
const HEAD: &str = "guesser.head";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuesserVariant {
    PostFusion,
    PreConcatenation,
}

impl std::str::FromStr for GuesserVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "post_fusion" | "post-fusion" => Ok(GuesserVariant::PostFusion),
            "pre_concatenation" | "pre-concatenation" => Ok(GuesserVariant::PreConcatenation),
            other => Err(Error::Config(format!("unknown guesser variant {other:?}"))),
        }
    }
}

/// Per-object scoring head shared across objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Mlp,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuesserConfig {
    pub hidden_size: usize,
    pub layer_count: usize,
    pub answer_embed_size: usize,
    pub head: HeadKind,
    pub head_hidden: usize,
    #[serde(default)]
    pub head_activation: Activation,
    pub alpha: f64,
    pub variant: GuesserVariant,
    pub max_question_len: usize,
    /// Also supervise every intermediate belief.
    pub per_turn_supervision: bool,
    /// Train on failed gold games as well as successful ones.
    #[serde(default)]
    pub include_failed_games: bool,
    pub schedule: TrainSchedule,
}

impl Default for GuesserConfig {
    fn default() -> Self {
        GuesserConfig {
            hidden_size: 32,
            layer_count: 1,
            answer_embed_size: 16,
            head: HeadKind::Mlp,
            head_hidden: 64,
            head_activation: Activation::Tanh,
            alpha: 0.9,
            variant: GuesserVariant::PostFusion,
            max_question_len: DEFAULT_MAX_QUESTION_LEN,
            per_turn_supervision: false,
            include_failed_games: false,
            schedule: TrainSchedule {
                epochs: 40,
                batch_size: 32,
                patience: 8,
                learning_rate: 1e-2,
                ..TrainSchedule::default()
            },
        }
    }
}

impl GuesserConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidSpec(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.answer_embed_size == 0 || self.head_hidden == 0 {
            return Err(Error::InvalidSpec("guesser sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub probabilities: Vec<f64>,
    pub turn_index: usize,
}

impl BeliefState {
    pub fn uniform(n: usize) -> Self {
        BeliefState {
            probabilities: vec![1.0 / n as f64; n],
            turn_index: 0,
        }
    }
}

pub fn validate_belief(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidBelief("empty belief".into()));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidBelief(
            "entries must be finite and non-negative".into(),
        ));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > BELIEF_TOLERANCE {
        return Err(Error::InvalidBelief(format!("entries sum to {s}")));
    }
    Ok(())
}

/// `alpha * fresh + (1 - alpha) * previous`.
pub fn accumulate(fresh: &[f64], previous: &[f64], alpha: f64) -> Vec<f64> {
    fresh
        .iter()
        .zip(previous)
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect()
}

/// Row `i` is `h_obj[i] ⊙ h_cls`.
pub fn fuse_objects(out: &EncoderOutput) -> Tensor2 {
    let mut f = out.h_obj.clone();
    for i in 0..f.rows() {
        for (v, c) in f.row_mut(i).iter_mut().zip(&out.h_cls) {
            *v *= c;
        }
    }
    f
}

/// Highest-probability object, lowest index on ties.
pub fn guess(p: &BeliefState) -> usize {
    argmax(&p.probabilities)
}

enum HeadCache {
    Mlp(MlpCache),
    Linear(Vec<f64>),
}

/// Everything one turn's backward pass needs.
struct TurnCache {
    enc: ToyCache,
    out: EncoderOutput,
    fused: Tensor2,
    p_in: Vec<f64>,
    answer: AnswerClass,
    heads: Vec<HeadCache>,
    fresh: Vec<f64>,
}

/// Forward state of a whole dialog, kept for backpropagation.
pub struct DialogUnroll {
    /// `beliefs[0]` is uniform; `beliefs[t]` follows turn `t`.
    pub beliefs: Vec<Vec<f64>>,
    turns: Vec<TurnCache>,
}

impl std::fmt::Debug for DialogUnroll {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DialogUnroll")
            .field("beliefs", &self.beliefs)
            .finish_non_exhaustive()
    }
}

/// A dialog with its inputs tokenized for the model's variant.
#[derive(Debug, Clone)]
pub struct GuesserExample {
    pub feats: ObjectFeatureSet,
    pub turns: Vec<(QuestionTokens, AnswerClass)>,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogOutcome {
    pub beliefs: Vec<Vec<f64>>,
    pub guess: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuesserModel {
    pub config: GuesserConfig,
    pub vocab: Vocabulary,
    pub params: ParamSet,
    encoder: ToyEncoder,
}

fn answer_vector(params: &ParamSet, answer: AnswerClass) -> Vec<f64> {
    let emb = params.get(ANS_EMB).row(answer.index());
    match params.try_get(ANS_PROJ) {
        Some(w) => vec_matmul(emb, w),
        None => emb.to_vec(),
    }
}

fn head_forward(params: &ParamSet, config: &GuesserConfig, v: &[f64]) -> (f64, HeadCache) {
    match config.head {
        HeadKind::Mlp => {
            let (y, c) = mlp_forward_with(params, HEAD, v, config.head_activation);
            (y[0], HeadCache::Mlp(c))
        }
        HeadKind::Linear => (
            dense_forward(params, HEAD, v)[0],
            HeadCache::Linear(v.to_vec()),
        ),
    }
}

fn head_backward(params: &ParamSet, cache: &HeadCache, g: f64, grads: &mut ParamSet) -> Vec<f64> {
    match cache {
        HeadCache::Mlp(c) => mlp_backward(params, HEAD, c, &[g], grads),
        HeadCache::Linear(v) => dense_backward(params, HEAD, v, &[g], grads),
    }
}

/// One belief step on an already fused `N x d` matrix.
pub fn belief_update(
    fused: &Tensor2,
    p_t: &BeliefState,
    answer: Option<AnswerClass>,
    params: &ParamSet,
    config: &GuesserConfig,
) -> Result<BeliefState> {
    let (p, _, _) = step_fused(fused, &p_t.probabilities, answer, params, config)?;
    Ok(BeliefState {
        probabilities: p,
        turn_index: p_t.turn_index + 1,
    })
}

type StepResult = (Vec<f64>, Vec<HeadCache>, Vec<f64>);

fn step_fused(
    fused: &Tensor2,
    p_t: &[f64],
    answer: Option<AnswerClass>,
    params: &ParamSet,
    config: &GuesserConfig,
) -> Result<StepResult> {
    validate_belief(p_t)?;
    if fused.rows() != p_t.len() {
        return Err(Error::InvalidShape(format!(
            "{} fused rows for a belief over {} objects",
            fused.rows(),
            p_t.len()
        )));
    }
    let a_vec = answer.map(|a| answer_vector(params, a));
    let mut logits = Vec::with_capacity(p_t.len());
    let mut heads = Vec::with_capacity(p_t.len());
    for (i, &p) in p_t.iter().enumerate() {
        let mut v: Vec<f64> = fused.row(i).iter().map(|x| p * x).collect();
        if let Some(a) = &a_vec {
            v.iter_mut().zip(a).for_each(|(x, y)| *x += y);
        }
        let (logit, cache) = head_forward(params, config, &v);
        logits.push(logit);
        heads.push(cache);
    }
    let fresh = softmax(&logits)?;
    Ok((accumulate(&fresh, p_t, config.alpha), heads, fresh))
}

impl GuesserModel {
    pub fn new(config: GuesserConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        Self::with_init_bounds(config, vocab, seed, AGENT_INIT_BOUND, HEAD_INIT_BOUND)
    }

    /// Same bound for encoder and head.
    pub fn with_init_bound(
        config: GuesserConfig,
        vocab: Vocabulary,
        seed: u64,
        bound: f64,
    ) -> Result<Self> {
        Self::with_init_bounds(config, vocab, seed, bound, bound)
    }

    pub fn with_init_bounds(
        config: GuesserConfig,
        vocab: Vocabulary,
        seed: u64,
        encoder_bound: f64,
        bound: f64,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_size;
        let encoder = ToyEncoder::new(EncoderConfig::new(d, vocab.len(), config.layer_count)?);
        let mut params = encoder.init_params_scaled(seed, encoder_bound);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6E55);
        let e = config.answer_embed_size;
        params.insert(
            ANS_EMB,
            Tensor2::uniform(AnswerClass::ALL.len(), e, bound, &mut rng),
        );
        if e != d {
            params.insert(ANS_PROJ, Tensor2::uniform(e, d, bound, &mut rng));
        }
        match config.head {
            HeadKind::Mlp => init_mlp(&mut params, HEAD, d, config.head_hidden, 1, bound, &mut rng),
            HeadKind::Linear => init_dense(&mut params, HEAD, d, 1, bound, &mut rng),
        }
        // A bias on the shared output logit cancels in the softmax over objects.
        params.retain(|k| k != "guesser.head.b2" && k != "guesser.head.b");
        Ok(GuesserModel {
            config,
            vocab,
            params,
            encoder,
        })
    }

    pub fn encoder(&self) -> &ToyEncoder {
        &self.encoder
    }

    pub fn tokens_for(&self, question: &str, answer: AnswerClass) -> QuestionTokens {
        let suffix = match self.config.variant {
            GuesserVariant::PostFusion => None,
            GuesserVariant::PreConcatenation => Some(answer.token()),
        };
        self.vocab
            .encode_with_suffix(question, suffix, self.config.max_question_len)
    }

    pub fn example(&self, game: &GameRecord, scene: &Scene) -> Result<GuesserExample> {
        scene.object(game.target_id)?;
        Ok(GuesserExample {
            feats: object_features(scene),
            turns: game
                .turns
                .iter()
                .map(|t| (self.tokens_for(&t.question, t.answer), t.answer))
                .collect(),
            target: game.target_id,
        })
    }

    pub fn examples(&self, games: &[GameRecord], scenes: &SceneMap) -> Result<Vec<GuesserExample>> {
        games
            .iter()
            .map(|g| self.example(g, lookup_scene(scenes, g.scene_id)?))
            .collect()
    }

    fn post_fusion_answer(&self, answer: AnswerClass) -> Option<AnswerClass> {
        (self.config.variant == GuesserVariant::PostFusion).then_some(answer)
    }

    fn turn_forward(
        &self,
        params: &ParamSet,
        feats: &ObjectFeatureSet,
        tokens: &QuestionTokens,
        answer: AnswerClass,
        p_t: &[f64],
    ) -> Result<(Vec<f64>, TurnCache)> {
        let (out, enc) = self
            .encoder
            .forward(params, tokens, feats, EncodeMode::Guesser)?;
        let fused = fuse_objects(&out);
        let (p_next, heads, fresh) = step_fused(
            &fused,
            p_t,
            self.post_fusion_answer(answer),
            params,
            &self.config,
        )?;
        Ok((
            p_next,
            TurnCache {
                enc,
                out,
                fused,
                p_in: p_t.to_vec(),
                answer,
                heads,
                fresh,
            },
        ))
    }

    /// Gradient flowing into `p_{t+1}` becomes the returned gradient on `p_t`.
    fn turn_backward(
        &self,
        params: &ParamSet,
        c: &TurnCache,
        g_next: &[f64],
        grads: &mut ParamSet,
    ) -> Vec<f64> {
        let alpha = self.config.alpha;
        let g_fresh: Vec<f64> = g_next.iter().map(|g| alpha * g).collect();
        let mut g_p: Vec<f64> = g_next.iter().map(|g| (1.0 - alpha) * g).collect();
        let g_logits = softmax_backward(&c.fresh, &g_fresh);
        let d = self.config.hidden_size;
        let mut g_ans = vec![0.0; d];
        let mut eg = EncoderGrad::zeros_for(&c.out);
        for (i, cache) in c.heads.iter().enumerate() {
            let g_v = head_backward(params, cache, g_logits[i], grads);
            g_ans.iter_mut().zip(&g_v).for_each(|(a, g)| *a += g);
            g_p[i] += dot(c.fused.row(i), &g_v);
            let p = c.p_in[i];
            let h_obj = c.out.h_obj.row(i);
            for k in 0..d {
                let g_f = p * g_v[k];
                eg.h_obj.row_mut(i)[k] = g_f * c.out.h_cls[k];
                eg.h_cls[k] += g_f * h_obj[k];
            }
        }
        if self.config.variant == GuesserVariant::PostFusion {
            let a = c.answer.index();
            match params.try_get(ANS_PROJ) {
                Some(w) => {
                    let emb = params.get(ANS_EMB).row(a).to_vec();
                    add_outer(grads.get_mut(ANS_PROJ), &emb, &g_ans);
                    let g_emb = vec_matmul_t(&g_ans, w);
                    let row = grads.get_mut(ANS_EMB).row_mut(a);
                    row.iter_mut().zip(&g_emb).for_each(|(r, g)| *r += g);
                }
                None => {
                    let row = grads.get_mut(ANS_EMB).row_mut(a);
                    row.iter_mut().zip(&g_ans).for_each(|(r, g)| *r += g);
                }
            }
        }
        self.encoder.backward(params, &c.enc, &eg, grads);
        g_p
    }

    /// Runs every turn from a uniform belief.
    pub fn unroll(
        &self,
        params: &ParamSet,
        feats: &ObjectFeatureSet,
        turns: &[(QuestionTokens, AnswerClass)],
    ) -> Result<DialogUnroll> {
        let n = feats.len();
        if n == 0 {
            return Err(Error::InvalidScene("scene without objects".into()));
        }
        let mut beliefs = vec![vec![1.0 / n as f64; n]];
        let mut caches = Vec::with_capacity(turns.len());
        for (tokens, answer) in turns {
            let (p, c) = self.turn_forward(
                params,
                feats,
                tokens,
                *answer,
                beliefs.last().expect("non-empty"),
            )?;
            beliefs.push(p);
            caches.push(c);
        }
        Ok(DialogUnroll {
            beliefs,
            turns: caches,
        })
    }

    /// Accumulates parameter gradients given `d loss / d beliefs[t]` for
    /// every `t` (the uniform start is a constant).
    pub fn unroll_backward(
        &self,
        params: &ParamSet,
        unroll: &DialogUnroll,
        belief_grads: &[Vec<f64>],
        grads: &mut ParamSet,
    ) {
        assert_eq!(
            belief_grads.len(),
            unroll.beliefs.len(),
            "one gradient per belief"
        );
        let mut g = belief_grads.last().expect("non-empty").clone();
        for t in (0..unroll.turns.len()).rev() {
            let mut g_prev = self.turn_backward(params, &unroll.turns[t], &g, grads);
            g_prev
                .iter_mut()
                .zip(&belief_grads[t])
                .for_each(|(a, b)| *a += b);
            g = g_prev;
        }
    }

    pub fn loss_and_grad(&self, params: &ParamSet, ex: &GuesserExample) -> Result<(f64, ParamSet)> {
        if ex.turns.is_empty() {
            return Err(Error::InvalidData("dialog without turns".into()));
        }
        let unroll = self.unroll(params, &ex.feats, &ex.turns)?;
        let n = ex.feats.len();
        let t_max = unroll.beliefs.len() - 1;
        let supervised: Vec<usize> = if self.config.per_turn_supervision {
            (1..=t_max).collect()
        } else {
            vec![t_max]
        };
        let w = 1.0 / supervised.len() as f64;
        let mut loss = 0.0;
        let mut belief_grads = vec![vec![0.0; n]; t_max + 1];
        for &t in &supervised {
            let p = unroll.beliefs[t][ex.target];
            loss += -w * p.max(PROB_FLOOR).ln();
            if p > PROB_FLOOR {
                belief_grads[t][ex.target] = -w / p;
            }
        }
        let mut grads = params.zeros_like();
        self.unroll_backward(params, &unroll, &belief_grads, &mut grads);
        Ok((loss, grads))
    }

    /// One live belief step for a question and its answer.
    pub fn observe(
        &self,
        feats: &ObjectFeatureSet,
        belief: &[f64],
        question: &str,
        answer: AnswerClass,
    ) -> Result<Vec<f64>> {
        let tokens = self.tokens_for(question, answer);
        Ok(self
            .turn_forward(&self.params, feats, &tokens, answer, belief)?
            .0)
    }

    pub fn run_example(&self, ex: &GuesserExample) -> Result<DialogOutcome> {
        if ex.turns.is_empty() {
            return Err(Error::InvalidData("dialog without turns".into()));
        }
        let unroll = self.unroll(&self.params, &ex.feats, &ex.turns)?;
        let last = unroll.beliefs.last().expect("non-empty");
        let guess = argmax(last);
        Ok(DialogOutcome {
            guess,
            success: guess == ex.target,
            beliefs: unroll.beliefs,
        })
    }

    /// Belief trajectory (uniform start included), final guess and success.
    pub fn run_dialog(&self, game: &GameRecord, scene: &Scene) -> Result<DialogOutcome> {
        self.run_example(&self.example(game, scene)?)
    }

    fn summarize(&self, params: &ParamSet, examples: &[GuesserExample]) -> Result<EvalSummary> {
        let scored: Vec<(f64, bool)> = examples
            .par_iter()
            .map(|ex| {
                let u = self.unroll(params, &ex.feats, &ex.turns)?;
                let last = u.beliefs.last().expect("non-empty");
                Ok((
                    -last[ex.target].max(PROB_FLOOR).ln(),
                    argmax(last) == ex.target,
                ))
            })
            .collect::<Result<_>>()?;
        let n = scored.len().max(1) as f64;
        Ok(EvalSummary {
            loss: scored.iter().map(|s| s.0).sum::<f64>() / n,
            accuracy: Some(scored.iter().filter(|s| s.1).count() as f64 / n),
        })
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            model_kind: GUESSER_KIND.into(),
            config: serde_json::to_value(&self.config).expect("config serializes"),
            vocab: self.vocab.clone(),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self> {
        ckpt.expect_kind(GUESSER_KIND)?;
        Self::from_parts(ckpt.config_as()?, ckpt.vocab.clone(), ckpt.params.clone())
    }

    pub fn from_parts(config: GuesserConfig, vocab: Vocabulary, params: ParamSet) -> Result<Self> {
        let mut model = GuesserModel::new(config, vocab, 0)?;
        let probe = ModelCheckpoint {
            model_kind: GUESSER_KIND.into(),
            config: serde_json::Value::Null,
            vocab: model.vocab.clone(),
            params,
        };
        probe.check_manifest(&model.params)?;
        model.params = probe.params;
        Ok(model)
    }
}

/// Trains on dialogs whose gold game succeeded, unless failed games are
/// included by configuration.
pub fn train_guesser(
    train: &[GameRecord],
    valid: &[GameRecord],
    scenes: &SceneMap,
    vocab: &Vocabulary,
    config: &GuesserConfig,
) -> Result<(GuesserModel, TrainReport)> {
    let mut model = GuesserModel::new(config.clone(), vocab.clone(), config.schedule.seed)?;
    let usable = |gs: &[GameRecord]| -> Vec<GameRecord> {
        gs.iter()
            .filter(|g| (config.include_failed_games || g.is_success()) && !g.turns.is_empty())
            .cloned()
            .collect()
    };
    let train_ex = model.examples(&usable(train), scenes)?;
    let valid_ex = model.examples(&usable(valid), scenes)?;
    if train_ex.is_empty() {
        return Err(Error::InvalidData(
            "no successful dialogs to train on".into(),
        ));
    }
    let mut params = model.params.clone();
    let report = fit(
        &mut params,
        &train_ex,
        &valid_ex,
        &config.schedule,
        |p, ex| model.loss_and_grad(p, ex),
        |p, exs| model.summarize(p, exs),
        |_| true,
    )?;
    model.params = params;
    Ok((model, report))
}

/// Fraction of dialogs whose final guess is the target.
pub fn eval_guesser(model: &GuesserModel, games: &[GameRecord], scenes: &SceneMap) -> Result<f64> {
    let games: Vec<&GameRecord> = games.iter().filter(|g| !g.turns.is_empty()).collect();
    if games.is_empty() {
        return Err(Error::EmptyInput("no dialogs to evaluate".into()));
    }
    let hits: Vec<bool> = games
        .par_iter()
        .map(|g| {
            Ok(model
                .run_dialog(g, lookup_scene(scenes, g.scene_id)?)?
                .success)
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}
