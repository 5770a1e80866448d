//! Multi-modal encoder shared by all three agents.
//!
//! The built-in [`ToyEncoder`] embeds question tokens, projects object
//! feature rows through `tanh`, optionally runs one co-attention round
//! (text attends over objects, objects attend over text, each followed by a
//! residual feed-forward), and mean-pools each stream into `h_cls` and
//! `h_img`. Mean pooling keeps `h_img` invariant and `h_obj` equivariant
//! under object reordering.
//!
//! Parameters live in a [`ParamSet`] under the `enc.` prefix so they can share
//! one set with an agent head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::QuestionTokens;
use crate::error::{Error, Result};
use crate::numkernel::{
    add_outer, softmax_rows, softmax_rows_backward, tanh_grad_from_output, vec_matmul,
    vec_matmul_t, ParamSet, Tensor2,
};
use crate::world::{Category, Color, Scene, SizeClass};

pub const INIT_BOUND: f64 = 0.08;
/// Encoder init range the agents train from. Wider than [`INIT_BOUND`]: the
/// product fusions downstream otherwise start with vanishing signal.
pub const AGENT_INIT_BOUND: f64 = 0.4;
pub const SPATIAL_DIM: usize = 7;

/// Width of an object feature row: attribute one-hots plus 7 spatial values.
pub const FEATURE_DIM: usize =
    Category::ALL.len() + Color::ALL.len() + SizeClass::ALL.len() + SPATIAL_DIM;

/// Raw per-object features, one row per scene object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectFeatureSet {
    pub rows: Tensor2,
}

impl ObjectFeatureSet {
    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.rows() == 0
    }
}

/// Category ⊕ color ⊕ size one-hots, then
/// `(x_min, y_min, x_max, y_max, width, height, area)`.
pub fn object_features(scene: &Scene) -> ObjectFeatureSet {
    let mut rows = Tensor2::zeros(scene.len(), FEATURE_DIM);
    let color_off = Category::ALL.len();
    let size_off = color_off + Color::ALL.len();
    let spatial_off = size_off + SizeClass::ALL.len();
    for (i, o) in scene.objects.iter().enumerate() {
        let r = rows.row_mut(i);
        r[o.category.index()] = 1.0;
        r[color_off + o.color.index()] = 1.0;
        r[size_off + o.size_class.index()] = 1.0;
        let b = &o.bbox;
        let spatial = [
            b.x_min,
            b.y_min,
            b.x_max,
            b.y_max,
            b.width(),
            b.height(),
            b.area(),
        ];
        r[spatial_off..].copy_from_slice(&spatial);
    }
    ObjectFeatureSet { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodeMode {
    Oracle { target_id: usize },
    Guesser,
    Questioner,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub h_img: Vec<f64>,
    pub h_obj: Tensor2,
    pub h_cls: Vec<f64>,
    pub h_tok: Tensor2,
    /// Row of `h_obj` designated as the target (oracle mode only).
    pub target: Option<usize>,
}

impl EncoderOutput {
    pub fn h_tgt(&self) -> Option<&[f64]> {
        self.target.map(|t| self.h_obj.row(t))
    }
}

/// Upstream gradient for each encoder output.
#[derive(Debug, Clone)]
pub struct EncoderGrad {
    pub h_img: Vec<f64>,
    pub h_obj: Tensor2,
    pub h_cls: Vec<f64>,
    pub h_tok: Tensor2,
}

impl EncoderGrad {
    pub fn zeros_for(out: &EncoderOutput) -> Self {
        let d = out.h_cls.len();
        EncoderGrad {
            h_img: vec![0.0; d],
            h_obj: Tensor2::zeros(out.h_obj.rows(), d),
            h_cls: vec![0.0; d],
            h_tok: Tensor2::zeros(out.h_tok.rows(), d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub hidden_size: usize,
    pub vocab_size: usize,
    /// 0 or 1 co-attention rounds.
    pub layer_count: usize,
}

impl EncoderConfig {
    pub fn new(hidden_size: usize, vocab_size: usize, layer_count: usize) -> Result<Self> {
        if hidden_size < 2 {
            return Err(Error::InvalidSpec(format!(
                "hidden size must be at least 2, got {hidden_size}"
            )));
        }
        if layer_count > 1 {
            return Err(Error::InvalidSpec(format!(
                "layer count must be 0 or 1, got {layer_count}"
            )));
        }
        Ok(EncoderConfig {
            hidden_size,
            vocab_size,
            layer_count,
        })
    }
}

/// A swappable encoder: forward with a cache, and a backward pass that
/// accumulates parameter gradients.
pub trait Encoder {
    type Cache;

    fn config(&self) -> &EncoderConfig;

    fn forward(
        &self,
        params: &ParamSet,
        tokens: &QuestionTokens,
        feats: &ObjectFeatureSet,
        mode: EncodeMode,
    ) -> Result<(EncoderOutput, Self::Cache)>;

    fn backward(
        &self,
        params: &ParamSet,
        cache: &Self::Cache,
        grad: &EncoderGrad,
        grads: &mut ParamSet,
    );

    /// Question-independent per-object states.
    fn project_objects(&self, params: &ParamSet, feats: &ObjectFeatureSet) -> Tensor2;

    /// Backward of [`Encoder::project_objects`] given its output.
    fn project_objects_backward(
        &self,
        params: &ParamSet,
        feats: &ObjectFeatureSet,
        projected: &Tensor2,
        grad: &Tensor2,
        grads: &mut ParamSet,
    );

    fn encode(
        &self,
        params: &ParamSet,
        tokens: &QuestionTokens,
        feats: &ObjectFeatureSet,
        mode: EncodeMode,
    ) -> Result<EncoderOutput> {
        self.forward(params, tokens, feats, mode).map(|(o, _)| o)
    }
}

pub mod names {
    pub const TOK_EMB: &str = "enc.tok_emb";
    pub const VIS_W: &str = "enc.vis_w";
    pub const VIS_B: &str = "enc.vis_b";
    pub const TXT_Q: &str = "enc.coattn.txt_q";
    pub const OBJ_K: &str = "enc.coattn.obj_k";
    pub const OBJ_V: &str = "enc.coattn.obj_v";
    pub const OBJ_Q: &str = "enc.coattn.obj_q";
    pub const TXT_K: &str = "enc.coattn.txt_k";
    pub const TXT_V: &str = "enc.coattn.txt_v";
    pub const TXT_FF_W: &str = "enc.coattn.txt_ff_w";
    pub const TXT_FF_B: &str = "enc.coattn.txt_ff_b";
    pub const OBJ_FF_W: &str = "enc.coattn.obj_ff_w";
    pub const OBJ_FF_B: &str = "enc.coattn.obj_ff_b";
    pub const TXT_POOL_W: &str = "enc.txt_pool_w";
    pub const TXT_POOL_B: &str = "enc.txt_pool_b";
    pub const IMG_POOL_W: &str = "enc.img_pool_w";
    pub const IMG_POOL_B: &str = "enc.img_pool_b";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyEncoder {
    pub config: EncoderConfig,
}

#[derive(Debug, Clone)]
pub struct ToyCache {
    token_ids: Vec<usize>,
    feats: Tensor2,
    t0: Tensor2,
    v0: Tensor2,
    coattn: Option<CoAttnCache>,
    t_out: Tensor2,
    v_out: Tensor2,
    mean_t: Vec<f64>,
    mean_v: Vec<f64>,
    h_cls: Vec<f64>,
    h_img: Vec<f64>,
}

#[derive(Debug, Clone)]
struct CoAttnCache {
    q_t: Tensor2,
    k_v: Tensor2,
    val_v: Tensor2,
    a_tv: Tensor2,
    t1: Tensor2,
    q_v: Tensor2,
    k_t: Tensor2,
    val_t: Tensor2,
    a_vt: Tensor2,
    v1: Tensor2,
    g_t: Tensor2,
    g_v: Tensor2,
}

impl ToyEncoder {
    pub fn new(config: EncoderConfig) -> Self {
        ToyEncoder { config }
    }

    /// Uniform(-0.08, 0.08) initialization under the `enc.` prefix.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        self.init_params_scaled(seed, INIT_BOUND)
    }

    pub fn init_params_scaled(&self, seed: u64, bound: f64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.config.hidden_size;
        let mut p = ParamSet::new();
        let mut add = |name: &str, r: usize, c: usize, rng: &mut ChaCha8Rng| {
            p.insert(name, Tensor2::uniform(r, c, bound, rng));
        };
        add(names::TOK_EMB, self.config.vocab_size, d, &mut rng);
        add(names::VIS_W, FEATURE_DIM, d, &mut rng);
        add(names::VIS_B, 1, d, &mut rng);
        if self.config.layer_count == 1 {
            for n in [
                names::TXT_Q,
                names::OBJ_K,
                names::OBJ_V,
                names::OBJ_Q,
                names::TXT_K,
                names::TXT_V,
                names::TXT_FF_W,
                names::OBJ_FF_W,
            ] {
                add(n, d, d, &mut rng);
            }
            add(names::TXT_FF_B, 1, d, &mut rng);
            add(names::OBJ_FF_B, 1, d, &mut rng);
        }
        add(names::TXT_POOL_W, d, d, &mut rng);
        add(names::TXT_POOL_B, 1, d, &mut rng);
        add(names::IMG_POOL_W, d, d, &mut rng);
        add(names::IMG_POOL_B, 1, d, &mut rng);
        p
    }

    fn check_inputs(&self, tokens: &QuestionTokens, feats: &ObjectFeatureSet) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::InvalidShape("empty question".into()));
        }
        if let Some(&bad) = tokens.ids.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::InvalidShape(format!(
                "token {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        if feats.is_empty() || feats.rows.cols() != FEATURE_DIM {
            return Err(Error::InvalidShape(format!(
                "object features must be N x {FEATURE_DIM} with N > 0"
            )));
        }
        Ok(())
    }
}

fn pool(mean: &[f64], w: &Tensor2, b: &Tensor2) -> Vec<f64> {
    vec_matmul(mean, w)
        .into_iter()
        .zip(b.data())
        .map(|(x, bi)| (x + bi).tanh())
        .collect()
}

/// Accumulates the gradient of `tanh(mean * w + b)` and returns d(mean).
fn pool_backward(
    mean: &[f64],
    out: &[f64],
    grad_out: &[f64],
    w: &Tensor2,
    gw: &mut Tensor2,
    gb: &mut Tensor2,
) -> Vec<f64> {
    let pre: Vec<f64> = grad_out
        .iter()
        .zip(out)
        .map(|(g, y)| g * (1.0 - y * y))
        .collect();
    add_outer(gw, mean, &pre);
    gb.data_mut()
        .iter_mut()
        .zip(&pre)
        .for_each(|(b, g)| *b += g);
    vec_matmul_t(&pre, w)
}

fn linear_rows(x: &Tensor2, w: &Tensor2, b: &Tensor2) -> Tensor2 {
    let mut out = x.matmul(w);
    out.add_row_broadcast(b.data());
    out
}

fn add_col_sums(acc: &mut Tensor2, g: &Tensor2) {
    for (a, s) in acc.data_mut().iter_mut().zip(g.col_sums()) {
        *a += s;
    }
}

impl Encoder for ToyEncoder {
    type Cache = ToyCache;

    fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn forward(
        &self,
        params: &ParamSet,
        tokens: &QuestionTokens,
        feats: &ObjectFeatureSet,
        mode: EncodeMode,
    ) -> Result<(EncoderOutput, ToyCache)> {
        self.check_inputs(tokens, feats)?;
        let target = match mode {
            EncodeMode::Oracle { target_id } => {
                if target_id >= feats.len() {
                    return Err(Error::InvalidTarget {
                        target: target_id,
                        objects: feats.len(),
                    });
                }
                Some(target_id)
            }
            EncodeMode::Guesser | EncodeMode::Questioner => None,
        };
        let d = self.config.hidden_size;
        let emb = params.get(names::TOK_EMB);
        let mut t0 = Tensor2::zeros(tokens.len(), d);
        for (l, &id) in tokens.ids.iter().enumerate() {
            t0.row_mut(l).copy_from_slice(emb.row(id));
        }
        let v0 = self.project_objects(params, feats);

        let (t_out, v_out, coattn) = if self.config.layer_count == 1 {
            let scale = 1.0 / (d as f64).sqrt();
            let q_t = t0.matmul(params.get(names::TXT_Q));
            let k_v = v0.matmul(params.get(names::OBJ_K));
            let val_v = v0.matmul(params.get(names::OBJ_V));
            let mut s_tv = q_t.matmul_t(&k_v);
            s_tv.scale(scale);
            let a_tv = softmax_rows(&s_tv);
            let mut t1 = a_tv.matmul(&val_v);
            t1.add_assign(&t0);

            let q_v = v0.matmul(params.get(names::OBJ_Q));
            let k_t = t0.matmul(params.get(names::TXT_K));
            let val_t = t0.matmul(params.get(names::TXT_V));
            let mut s_vt = q_v.matmul_t(&k_t);
            s_vt.scale(scale);
            let a_vt = softmax_rows(&s_vt);
            let mut v1 = a_vt.matmul(&val_t);
            v1.add_assign(&v0);

            let g_t = linear_rows(
                &t1,
                params.get(names::TXT_FF_W),
                params.get(names::TXT_FF_B),
            )
            .map(f64::tanh);
            let g_v = linear_rows(
                &v1,
                params.get(names::OBJ_FF_W),
                params.get(names::OBJ_FF_B),
            )
            .map(f64::tanh);
            let mut t2 = t1.clone();
            t2.add_assign(&g_t);
            let mut v2 = v1.clone();
            v2.add_assign(&g_v);
            (
                t2,
                v2,
                Some(CoAttnCache {
                    q_t,
                    k_v,
                    val_v,
                    a_tv,
                    t1,
                    q_v,
                    k_t,
                    val_t,
                    a_vt,
                    v1,
                    g_t,
                    g_v,
                }),
            )
        } else {
            (t0.clone(), v0.clone(), None)
        };

        let mean_t = t_out.row_mean();
        let mean_v = v_out.row_mean();
        let h_cls = pool(
            &mean_t,
            params.get(names::TXT_POOL_W),
            params.get(names::TXT_POOL_B),
        );
        let h_img = pool(
            &mean_v,
            params.get(names::IMG_POOL_W),
            params.get(names::IMG_POOL_B),
        );
        let out = EncoderOutput {
            h_img: h_img.clone(),
            h_obj: v_out.clone(),
            h_cls: h_cls.clone(),
            h_tok: t_out.clone(),
            target,
        };
        if !(out.h_obj.is_finite() && out.h_cls.iter().all(|v| v.is_finite())) {
            return Err(Error::NumericalFailure(
                "encoder produced non-finite states".into(),
            ));
        }
        let cache = ToyCache {
            token_ids: tokens.ids.clone(),
            feats: feats.rows.clone(),
            t0,
            v0,
            coattn,
            t_out,
            v_out,
            mean_t,
            mean_v,
            h_cls,
            h_img,
        };
        Ok((out, cache))
    }

    fn backward(
        &self,
        params: &ParamSet,
        cache: &ToyCache,
        grad: &EncoderGrad,
        grads: &mut ParamSet,
    ) {
        let d = self.config.hidden_size;
        let n_tok = cache.t_out.rows();
        let n_obj = cache.v_out.rows();

        let g_mean_t = {
            let w = params.get(names::TXT_POOL_W);
            let mut gw = std::mem::replace(grads.get_mut(names::TXT_POOL_W), Tensor2::zeros(0, 0));
            let mut gb = std::mem::replace(grads.get_mut(names::TXT_POOL_B), Tensor2::zeros(0, 0));
            let g = pool_backward(
                &cache.mean_t,
                &cache.h_cls,
                &grad.h_cls,
                w,
                &mut gw,
                &mut gb,
            );
            *grads.get_mut(names::TXT_POOL_W) = gw;
            *grads.get_mut(names::TXT_POOL_B) = gb;
            g
        };
        let g_mean_v = {
            let w = params.get(names::IMG_POOL_W);
            let mut gw = std::mem::replace(grads.get_mut(names::IMG_POOL_W), Tensor2::zeros(0, 0));
            let mut gb = std::mem::replace(grads.get_mut(names::IMG_POOL_B), Tensor2::zeros(0, 0));
            let g = pool_backward(
                &cache.mean_v,
                &cache.h_img,
                &grad.h_img,
                w,
                &mut gw,
                &mut gb,
            );
            *grads.get_mut(names::IMG_POOL_W) = gw;
            *grads.get_mut(names::IMG_POOL_B) = gb;
            g
        };

        let mut g_t_out = grad.h_tok.clone();
        for l in 0..n_tok {
            for (g, m) in g_t_out.row_mut(l).iter_mut().zip(&g_mean_t) {
                *g += m / n_tok as f64;
            }
        }
        let mut g_v_out = grad.h_obj.clone();
        for i in 0..n_obj {
            for (g, m) in g_v_out.row_mut(i).iter_mut().zip(&g_mean_v) {
                *g += m / n_obj as f64;
            }
        }

        let (g_t0, g_v0) = match &cache.coattn {
            None => (g_t_out, g_v_out),
            Some(c) => {
                let scale = 1.0 / (d as f64).sqrt();
                // Residual feed-forward on each stream.
                let g_pre_t = tanh_grad_from_output(&c.g_t, &g_t_out);
                grads
                    .get_mut(names::TXT_FF_W)
                    .add_assign(&c.t1.t_matmul(&g_pre_t));
                add_col_sums(grads.get_mut(names::TXT_FF_B), &g_pre_t);
                let mut g_t1 = g_t_out;
                g_t1.add_assign(&g_pre_t.matmul_t(params.get(names::TXT_FF_W)));

                let g_pre_v = tanh_grad_from_output(&c.g_v, &g_v_out);
                grads
                    .get_mut(names::OBJ_FF_W)
                    .add_assign(&c.v1.t_matmul(&g_pre_v));
                add_col_sums(grads.get_mut(names::OBJ_FF_B), &g_pre_v);
                let mut g_v1 = g_v_out;
                g_v1.add_assign(&g_pre_v.matmul_t(params.get(names::OBJ_FF_W)));

                // Text attends over objects: t1 = t0 + A_tv * val_v.
                let mut g_t0 = g_t1.clone();
                let mut g_v0 = g_v1.clone();
                let g_a_tv = g_t1.matmul_t(&c.val_v);
                let g_val_v = c.a_tv.t_matmul(&g_t1);
                let mut g_s_tv = softmax_rows_backward(&c.a_tv, &g_a_tv);
                g_s_tv.scale(scale);
                let g_q_t = g_s_tv.matmul(&c.k_v);
                let g_k_v = g_s_tv.t_matmul(&c.q_t);

                grads
                    .get_mut(names::TXT_Q)
                    .add_assign(&cache.t0.t_matmul(&g_q_t));
                g_t0.add_assign(&g_q_t.matmul_t(params.get(names::TXT_Q)));
                grads
                    .get_mut(names::OBJ_K)
                    .add_assign(&cache.v0.t_matmul(&g_k_v));
                g_v0.add_assign(&g_k_v.matmul_t(params.get(names::OBJ_K)));
                grads
                    .get_mut(names::OBJ_V)
                    .add_assign(&cache.v0.t_matmul(&g_val_v));
                g_v0.add_assign(&g_val_v.matmul_t(params.get(names::OBJ_V)));

                // Objects attend over text: v1 = v0 + A_vt * val_t.
                let g_a_vt = g_v1.matmul_t(&c.val_t);
                let g_val_t = c.a_vt.t_matmul(&g_v1);
                let mut g_s_vt = softmax_rows_backward(&c.a_vt, &g_a_vt);
                g_s_vt.scale(scale);
                let g_q_v = g_s_vt.matmul(&c.k_t);
                let g_k_t = g_s_vt.t_matmul(&c.q_v);

                grads
                    .get_mut(names::OBJ_Q)
                    .add_assign(&cache.v0.t_matmul(&g_q_v));
                g_v0.add_assign(&g_q_v.matmul_t(params.get(names::OBJ_Q)));
                grads
                    .get_mut(names::TXT_K)
                    .add_assign(&cache.t0.t_matmul(&g_k_t));
                g_t0.add_assign(&g_k_t.matmul_t(params.get(names::TXT_K)));
                grads
                    .get_mut(names::TXT_V)
                    .add_assign(&cache.t0.t_matmul(&g_val_t));
                g_t0.add_assign(&g_val_t.matmul_t(params.get(names::TXT_V)));
                (g_t0, g_v0)
            }
        };

        let feats = ObjectFeatureSet {
            rows: cache.feats.clone(),
        };
        self.project_objects_backward(params, &feats, &cache.v0, &g_v0, grads);
        let g_emb = grads.get_mut(names::TOK_EMB);
        for (l, &id) in cache.token_ids.iter().enumerate() {
            for (g, v) in g_emb.row_mut(id).iter_mut().zip(g_t0.row(l)) {
                *g += v;
            }
        }
    }

    fn project_objects(&self, params: &ParamSet, feats: &ObjectFeatureSet) -> Tensor2 {
        linear_rows(
            &feats.rows,
            params.get(names::VIS_W),
            params.get(names::VIS_B),
        )
        .map(f64::tanh)
    }

    fn project_objects_backward(
        &self,
        _params: &ParamSet,
        feats: &ObjectFeatureSet,
        projected: &Tensor2,
        grad: &Tensor2,
        grads: &mut ParamSet,
    ) {
        let g_pre = tanh_grad_from_output(projected, grad);
        grads
            .get_mut(names::VIS_W)
            .add_assign(&feats.rows.t_matmul(&g_pre));
        add_col_sums(grads.get_mut(names::VIS_B), &g_pre);
    }
}
