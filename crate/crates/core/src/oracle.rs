//! Oracle agent: answers yes / no / n/a about the target object.
//!
//! The fused feature is `(h_img ⊙ h_cls) ⊕ (h_tgt ⊙ h_cls) ⊕ c_cat`, where
//! `c_cat` embeds the target's category. A tanh MLP maps it to three logits.
//! Training minimizes mean cross-entropy over every (question, target,
//! answer) triple with early stopping on validation accuracy.
//!
//! The weak variant sees the question and the target category but gets
//! all-zero object features, so it is blind to color, size and position.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::ModelCheckpoint;
use crate::dataset::{GameRecord, QuestionTokens, Vocabulary, DEFAULT_MAX_QUESTION_LEN};
use crate::encoder::{
    object_features, EncodeMode, Encoder, EncoderConfig, EncoderGrad, EncoderOutput,
    ObjectFeatureSet, ToyEncoder, AGENT_INIT_BOUND,
};
use crate::error::{Error, Result};
use crate::numkernel::{
    argmax, init_mlp, mlp_backward, mlp_forward, softmax, softmax_cross_entropy, ParamSet, Tensor2,
    HEAD_INIT_BOUND,
};
use crate::training::{fit, EvalSummary, TrainReport, TrainSchedule};
use crate::world::{
    lookup_scene, parse_question, AnswerClass, Category, QuestionType, Scene, SceneMap,
};

pub const ORACLE_KIND: &str = "oracle";
const CAT_EMB: &str = "oracle.cat_emb";
const MLP: &str = "oracle.mlp";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub hidden_size: usize,
    pub layer_count: usize,
    pub category_embed_size: usize,
    pub mlp_hidden: usize,
    pub max_question_len: usize,
    /// Blind the encoder to object features.
    pub weak: bool,
    pub schedule: TrainSchedule,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            hidden_size: 32,
            layer_count: 1,
            category_embed_size: 16,
            mlp_hidden: 64,
            max_question_len: DEFAULT_MAX_QUESTION_LEN,
            weak: false,
            schedule: TrainSchedule {
                epochs: 40,
                patience: 8,
                ..TrainSchedule::default()
            },
        }
    }
}

/// Fusion vector of length `2d + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFusion {
    pub values: Vec<f64>,
}

pub fn fuse_background_target(
    h_img: &[f64],
    h_tgt: &[f64],
    h_cls: &[f64],
    c_cat: &[f64],
) -> Result<OracleFusion> {
    let d = h_cls.len();
    if h_img.len() != d || h_tgt.len() != d {
        return Err(Error::InvalidShape(format!(
            "fusion inputs of sizes {}, {}, {} must agree",
            h_img.len(),
            h_tgt.len(),
            d
        )));
    }
    let mut values = Vec::with_capacity(2 * d + c_cat.len());
    values.extend(h_img.iter().zip(h_cls).map(|(a, b)| a * b));
    values.extend(h_tgt.iter().zip(h_cls).map(|(a, b)| a * b));
    values.extend_from_slice(c_cat);
    Ok(OracleFusion { values })
}

/// Answer distribution in [`AnswerClass`] index order.
pub fn predict_answer(params: &ParamSet, fusion: &OracleFusion) -> Result<Vec<f64>> {
    let (logits, _) = mlp_forward(params, MLP, &fusion.values);
    softmax(&logits)
}

/// One training or evaluation triple with its inputs precomputed.
#[derive(Debug, Clone)]
pub struct OracleExample {
    pub feats: ObjectFeatureSet,
    pub tokens: QuestionTokens,
    pub target: usize,
    pub category: Category,
    pub answer: AnswerClass,
    pub question_type: QuestionType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleModel {
    pub config: OracleConfig,
    pub vocab: Vocabulary,
    pub params: ParamSet,
    encoder: ToyEncoder,
}

impl OracleModel {
    pub fn new(config: OracleConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        Self::with_init_bounds(config, vocab, seed, AGENT_INIT_BOUND, HEAD_INIT_BOUND)
    }

    /// Same bound for encoder and head.
    pub fn with_init_bound(
        config: OracleConfig,
        vocab: Vocabulary,
        seed: u64,
        bound: f64,
    ) -> Result<Self> {
        Self::with_init_bounds(config, vocab, seed, bound, bound)
    }

    pub fn with_init_bounds(
        config: OracleConfig,
        vocab: Vocabulary,
        seed: u64,
        encoder_bound: f64,
        bound: f64,
    ) -> Result<Self> {
        let encoder = ToyEncoder::new(EncoderConfig::new(
            config.hidden_size,
            vocab.len(),
            config.layer_count,
        )?);
        if config.category_embed_size == 0 || config.mlp_hidden == 0 {
            return Err(Error::InvalidSpec(
                "oracle head sizes must be positive".into(),
            ));
        }
        let mut params = encoder.init_params_scaled(seed, encoder_bound);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0AC1E);
        params.insert(
            CAT_EMB,
            Tensor2::uniform(
                Category::ALL.len(),
                config.category_embed_size,
                bound,
                &mut rng,
            ),
        );
        init_mlp(
            &mut params,
            MLP,
            2 * config.hidden_size + config.category_embed_size,
            config.mlp_hidden,
            AnswerClass::ALL.len(),
            bound,
            &mut rng,
        );
        Ok(OracleModel {
            config,
            vocab,
            params,
            encoder,
        })
    }

    pub fn encoder(&self) -> &ToyEncoder {
        &self.encoder
    }

    pub fn example(
        &self,
        scene: &Scene,
        target: usize,
        question: &str,
        answer: AnswerClass,
    ) -> Result<OracleExample> {
        let category = scene.object(target)?.category;
        let mut feats = object_features(scene);
        if self.config.weak {
            feats.rows.scale(0.0);
        }
        Ok(OracleExample {
            feats,
            tokens: self
                .vocab
                .encode_question(question, self.config.max_question_len),
            target,
            category,
            answer,
            question_type: parse_question(question).question_type(),
        })
    }

    /// Prepares every turn of `games` as an example.
    pub fn examples(&self, games: &[GameRecord], scenes: &SceneMap) -> Result<Vec<OracleExample>> {
        let mut out = Vec::new();
        for g in games {
            let scene = lookup_scene(scenes, g.scene_id)?;
            for t in &g.turns {
                out.push(self.example(scene, g.target_id, &t.question, t.answer)?);
            }
        }
        Ok(out)
    }

    pub fn fuse(&self, out: &EncoderOutput, category: Category) -> Result<OracleFusion> {
        self.fuse_with(&self.params, out, category)
    }

    fn fuse_with(
        &self,
        params: &ParamSet,
        out: &EncoderOutput,
        category: Category,
    ) -> Result<OracleFusion> {
        let h_tgt = out
            .h_tgt()
            .ok_or_else(|| Error::InvalidSpec("encoder output lacks a target row".into()))?;
        fuse_background_target(
            &out.h_img,
            h_tgt,
            &out.h_cls,
            params.get(CAT_EMB).row(category.index()),
        )
    }

    fn distribution(&self, params: &ParamSet, ex: &OracleExample) -> Result<Vec<f64>> {
        let out = self.encoder.encode(
            params,
            &ex.tokens,
            &ex.feats,
            EncodeMode::Oracle {
                target_id: ex.target,
            },
        )?;
        let fusion = self.fuse_with(params, &out, ex.category)?;
        predict_answer(params, &fusion)
    }

    pub fn predict_example(&self, ex: &OracleExample) -> Result<Vec<f64>> {
        self.distribution(&self.params, ex)
    }

    /// Answer distribution for a free-text question.
    pub fn predict(&self, scene: &Scene, target: usize, question: &str) -> Result<Vec<f64>> {
        let ex = self.example(scene, target, question, AnswerClass::NA)?;
        self.predict_example(&ex)
    }

    pub fn answer(&self, scene: &Scene, target: usize, question: &str) -> Result<AnswerClass> {
        let p = self.predict(scene, target, question)?;
        Ok(AnswerClass::from_index(argmax(&p)).expect("three classes"))
    }

    /// Cross-entropy of one example and its gradient over all parameters.
    pub fn loss_and_grad(&self, params: &ParamSet, ex: &OracleExample) -> Result<(f64, ParamSet)> {
        let d = self.config.hidden_size;
        let (out, cache) = self.encoder.forward(
            params,
            &ex.tokens,
            &ex.feats,
            EncodeMode::Oracle {
                target_id: ex.target,
            },
        )?;
        let fusion = self.fuse_with(params, &out, ex.category)?;
        let (logits, mlp_cache) = mlp_forward(params, MLP, &fusion.values);
        let (loss, g_logits) = softmax_cross_entropy(&logits, ex.answer.index())?;

        let mut grads = params.zeros_like();
        let g_x = mlp_backward(params, MLP, &mlp_cache, &g_logits, &mut grads);
        let (g_img_part, rest) = g_x.split_at(d);
        let (g_tgt_part, g_cat) = rest.split_at(d);
        for (g, v) in grads
            .get_mut(CAT_EMB)
            .row_mut(ex.category.index())
            .iter_mut()
            .zip(g_cat)
        {
            *g += v;
        }
        let h_tgt = out.h_obj.row(ex.target);
        let mut eg = EncoderGrad::zeros_for(&out);
        for k in 0..d {
            eg.h_img[k] = g_img_part[k] * out.h_cls[k];
            eg.h_cls[k] = g_img_part[k] * out.h_img[k] + g_tgt_part[k] * h_tgt[k];
        }
        for (k, g) in eg.h_obj.row_mut(ex.target).iter_mut().enumerate() {
            *g = g_tgt_part[k] * out.h_cls[k];
        }
        self.encoder.backward(params, &cache, &eg, &mut grads);
        Ok((loss, grads))
    }

    fn summarize(&self, params: &ParamSet, examples: &[OracleExample]) -> Result<EvalSummary> {
        let scored: Vec<(f64, bool)> = examples
            .par_iter()
            .map(|ex| {
                let p = self.distribution(params, ex)?;
                let label = ex.answer.index();
                Ok((
                    -p[label].max(crate::numkernel::PROB_FLOOR).ln(),
                    argmax(&p) == label,
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
            model_kind: ORACLE_KIND.into(),
            config: serde_json::to_value(&self.config).expect("config serializes"),
            vocab: self.vocab.clone(),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self> {
        ckpt.expect_kind(ORACLE_KIND)?;
        let config: OracleConfig = ckpt.config_as()?;
        let mut model = OracleModel::new(config, ckpt.vocab.clone(), 0)?;
        ckpt.check_manifest(&model.params)?;
        model.params = ckpt.params.clone();
        Ok(model)
    }
}

pub fn train_oracle(
    train: &[GameRecord],
    valid: &[GameRecord],
    scenes: &SceneMap,
    vocab: &Vocabulary,
    config: &OracleConfig,
) -> Result<(OracleModel, TrainReport)> {
    let mut model = OracleModel::new(config.clone(), vocab.clone(), config.schedule.seed)?;
    let train_ex = model.examples(train, scenes)?;
    let valid_ex = model.examples(valid, scenes)?;
    if train_ex.is_empty() {
        return Err(Error::InvalidData(
            "no answered questions to train on".into(),
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

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeAccuracy {
    /// `None` when no question of this type was seen.
    pub accuracy: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub overall: f64,
    pub count: usize,
    pub by_type: BTreeMap<String, TypeAccuracy>,
}

/// Accuracy against the answers recorded in `games`, overall and per type.
pub fn eval_oracle(
    model: &OracleModel,
    games: &[GameRecord],
    scenes: &SceneMap,
) -> Result<OracleReport> {
    let examples = model.examples(games, scenes)?;
    let hits: Vec<bool> = examples
        .par_iter()
        .map(|ex| Ok(argmax(&model.predict_example(ex)?) == ex.answer.index()))
        .collect::<Result<_>>()?;
    Ok(accuracy_report(
        examples.iter().map(|e| e.question_type).zip(hits),
    ))
}

pub fn accuracy_report(items: impl IntoIterator<Item = (QuestionType, bool)>) -> OracleReport {
    let mut counts: BTreeMap<QuestionType, (usize, usize)> =
        QuestionType::ALL.iter().map(|&t| (t, (0, 0))).collect();
    let (mut right, mut total) = (0, 0);
    for (t, ok) in items {
        let c = counts.get_mut(&t).expect("all types present");
        c.1 += 1;
        total += 1;
        if ok {
            c.0 += 1;
            right += 1;
        }
    }
    OracleReport {
        overall: if total == 0 {
            0.0
        } else {
            right as f64 / total as f64
        },
        count: total,
        by_type: counts
            .into_iter()
            .map(|(t, (r, n))| {
                (
                    t.name().to_string(),
                    TypeAccuracy {
                        accuracy: (n > 0).then(|| r as f64 / n as f64),
                        count: n,
                    },
                )
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gold_fixture, GoldCorpus};
    use crate::numkernel::{grad_check, DEFAULT_STEP};
    use crate::world::{generate_scene, SceneSpec};

    #[test]
    fn fusion_arithmetic() {
        let f = fuse_background_target(&[1.0, 2.0], &[3.0, 4.0], &[2.0, 2.0], &[9.0]).unwrap();
        assert_eq!(f.values, vec![2.0, 4.0, 6.0, 8.0, 9.0]);
        let z =
            fuse_background_target(&[0.0; 4], &[0.0; 4], &[0.7; 4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(z.values.len(), 12);
        assert!(z.values[..8].iter().all(|&v| v == 0.0));
        assert_eq!(&z.values[8..], &[1.0, 2.0, 3.0, 4.0]);
        let c = fuse_background_target(&[0.4, -2.0], &[1.5, 3.0], &[0.0, 0.0], &[]).unwrap();
        assert!(c.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_head_is_uniform() {
        let fx = gold_fixture(20, 5, 0);
        let mut m = OracleModel::new(OracleConfig::default(), fx.vocab.clone(), 1).unwrap();
        m.params.get_mut("oracle.mlp.w2").scale(0.0);
        m.params.get_mut("oracle.mlp.b2").scale(0.0);
        let s = &fx.scenes[0];
        let p = m.predict(s, 0, "is it red?").unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn predictions_are_distributions() {
        let fx = gold_fixture(10, 5, 0);
        let m = OracleModel::with_init_bound(OracleConfig::default(), fx.vocab.clone(), 4, 0.5)
            .unwrap();
        for s in &fx.scenes {
            for t in 0..s.len() {
                let p = m.predict(s, t, "is it on the left?").unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unknown_target_rejected() {
        let fx = gold_fixture(5, 5, 0);
        let m = OracleModel::new(OracleConfig::default(), fx.vocab.clone(), 1).unwrap();
        let s = &fx.scenes[0];
        assert!(matches!(
            m.predict(s, s.len(), "is it red?"),
            Err(Error::InvalidTarget { .. })
        ));
    }

    fn tiny_config(layers: usize) -> OracleConfig {
        OracleConfig {
            hidden_size: 4,
            layer_count: layers,
            category_embed_size: 3,
            mlp_hidden: 5,
            ..Default::default()
        }
    }

    #[test]
    fn full_graph_gradient() {
        let fx = gold_fixture(4, 5, 3);
        for (seed, layers) in [(0u64, 1usize), (1, 0), (2, 1)] {
            let m = OracleModel::with_init_bound(tiny_config(layers), fx.vocab.clone(), seed, 1.0)
                .unwrap();
            let scene = generate_scene(&SceneSpec::fixed(3), seed).unwrap();
            let ex = m
                .example(&scene, 1, "is it the dog on the left?", AnswerClass::No)
                .unwrap();
            let r = grad_check(|p| m.loss_and_grad(p, &ex), &m.params, DEFAULT_STEP).unwrap();
            assert!(r.max_rel_error <= 1e-4, "{r:?}");
        }
    }

    #[test]
    fn weak_variant_ignores_visual_features() {
        let fx = gold_fixture(5, 5, 0);
        let cfg = OracleConfig {
            weak: true,
            ..Default::default()
        };
        let m = OracleModel::with_init_bound(cfg, fx.vocab.clone(), 2, 0.5).unwrap();
        let mut s = fx.scenes[0].clone();
        let a = m.predict(&s, 0, "is it red?").unwrap();
        for o in &mut s.objects {
            o.color = crate::world::Color::Blue;
            o.bbox = [0.1, 0.1, 0.2, 0.2].into();
        }
        let b = m.predict(&s, 0, "is it red?").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_recombines_and_recounts() {
        let items = vec![
            (QuestionType::Object, true),
            (QuestionType::Object, false),
            (QuestionType::Color, true),
            (QuestionType::Location, true),
            (QuestionType::Location, true),
        ];
        let r = accuracy_report(items.clone());
        for key in ["object", "color", "size", "location", "other"] {
            assert!(r.by_type.contains_key(key));
        }
        assert_eq!(r.by_type["size"].accuracy, None);
        let brute = items.iter().filter(|i| i.1).count() as f64 / items.len() as f64;
        assert_eq!(r.overall, brute);
        let recombined: f64 = r
            .by_type
            .values()
            .filter_map(|t| t.accuracy.map(|a| a * t.count as f64))
            .sum::<f64>()
            / r.count as f64;
        assert!((recombined - r.overall).abs() < 1e-9);
        let all = accuracy_report(vec![
            (QuestionType::Color, true),
            (QuestionType::Size, true),
        ]);
        assert_eq!(all.by_type["color"].accuracy, Some(1.0));
        assert_eq!(all.by_type["size"].accuracy, Some(1.0));
    }

    #[test]
    fn loss_decreases_and_training_is_deterministic() {
        let GoldCorpus {
            scenes,
            games,
            vocab,
            ..
        } = gold_fixture(200, 5, 11);
        let cfg = OracleConfig {
            schedule: TrainSchedule {
                epochs: 50,
                patience: 50,
                batch_size: usize::MAX,
                max_steps: Some(50),
                learning_rate: 5e-4,
                ..Default::default()
            },
            ..Default::default()
        };
        let map = crate::world::scene_map(&scenes);
        let (a, report) = train_oracle(&games, &[], &map, &vocab, &cfg).unwrap();
        assert_eq!(report.step_losses.len(), 50);
        for w in report.step_losses.windows(2) {
            assert!(w[1] < w[0], "{:?}", report.step_losses);
        }
        let (b, _) = train_oracle(&games, &[], &map, &vocab, &cfg).unwrap();
        assert_eq!(a.to_checkpoint().to_bytes(), b.to_checkpoint().to_bytes());
    }

    #[test]
    fn checkpoint_round_trip() {
        let fx = gold_fixture(5, 5, 0);
        let mut m = OracleModel::new(OracleConfig::default(), fx.vocab.clone(), 9).unwrap();
        m.params.quantize_f32();
        let back = OracleModel::from_checkpoint(
            &ModelCheckpoint::from_bytes(&m.to_checkpoint().to_bytes()).unwrap(),
        )
        .unwrap();
        assert_eq!(back, m);
    }
}
