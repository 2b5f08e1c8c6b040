//! The candidate scorer: multi-scale encoder plus per-candidate predictor.

use serde::{Deserialize, Serialize};

use super::backbone::{Backbone, BackboneCache, BackboneRegistry, StageFeatures};
use super::rf::{RfBlock, RfCache};
use super::NetError;
use crate::grid::{CandidateGrid, TargetGrid};
use crate::nn::{
    block_max_pool, block_max_pool_backward, concat_channels, global_avg_pool,
    global_avg_pool_backward, relu_vec, relu_vec_backward, resize_bilinear,
    resize_bilinear_backward, sigmoid, split_channels, BlockPool, Conv2d, Linear, Param, Tensor,
};

/// Per-candidate presence probabilities, row-major, each strictly in (0, 1).
///
/// Serializes as `{"values": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreGrid {
    pub values: Vec<f64>,
}

impl ScoreGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Encoder output: the four backbone stages, the receptive-field-enlarged
/// mid stages, and the channel-concatenated aggregate at `f1` resolution.
pub struct MultiScaleFeatures {
    pub f1: Tensor,
    pub f2: Tensor,
    pub f3: Tensor,
    pub f4: Tensor,
    pub rf2: Tensor,
    pub rf3: Tensor,
    pub f_all: Tensor,
}

/// Per-candidate local descriptors: channel-wise maxima of `f1`, `RF(f2)`
/// and `RF(f3)` over the candidate's scaled grid block. Row `i` of each
/// matrix belongs to candidate `i`.
pub struct LocalFeatureSet {
    pub from_f1: Tensor,
    pub from_rf2: Tensor,
    pub from_rf3: Tensor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PptConfig {
    /// Grid side M; scores are produced for M×M candidates.
    pub m: usize,
    /// Channel width each encoder branch is projected to before concatenation.
    pub c_b: usize,
    /// Predictor hidden width.
    pub hidden: usize,
    /// Backbone registry name.
    pub backbone: String,
    /// Weight-initialization seed.
    pub seed: u64,
}

impl Default for PptConfig {
    fn default() -> Self {
        Self {
            m: 16,
            c_b: 32,
            hidden: 64,
            backbone: "toy".to_string(),
            seed: 0,
        }
    }
}

/// Scores every grid candidate with the probability that a camouflaged
/// object is present at that cell.
///
/// The encoder aggregates four backbone stages into `f_all`; the predictor
/// is three stacked 1×1 stages evaluated once per candidate, with the
/// spatially pooled aggregate as input and the candidate's local maxima
/// injected before each stage in turn. Batched evaluation is a plain loop
/// over candidates, so it is identical to sequential evaluation.
pub struct PptNet {
    cfg: PptConfig,
    backbone: Box<dyn Backbone>,
    rf2: RfBlock,
    rf3: RfBlock,
    rf4: RfBlock,
    proj1: Conv2d,
    proj2: Conv2d,
    proj3: Conv2d,
    fc1: Linear,
    fc2: Linear,
    fc3: Linear,
}

/// Everything the training backward pass needs from one forward evaluation.
pub struct ForwardCache {
    image: Tensor,
    stages: StageFeatures,
    backbone_cache: BackboneCache,
    rf2_out: Tensor,
    rf2_cache: RfCache,
    rf3_out: Tensor,
    rf3_cache: RfCache,
    rf4_out: Tensor,
    rf4_cache: RfCache,
    proj_outs: [Tensor; 3],
    f_all: Tensor,
    gap: Vec<f64>,
    pools: [BlockPool; 3],
    // Per-candidate predictor intermediates, candidate-major.
    in1: Vec<Vec<f64>>,
    pre1: Vec<Vec<f64>>,
    in2: Vec<Vec<f64>>,
    pre2: Vec<Vec<f64>>,
    in3: Vec<Vec<f64>>,
    scores: Vec<f64>,
}

impl PptNet {
    pub fn new(cfg: PptConfig, registry: &BackboneRegistry) -> Result<Self, NetError> {
        use rand::SeedableRng;
        let backbone = registry.create(&cfg.backbone, cfg.seed)?;
        // Head weights come from a separate stream so the backbone choice
        // does not shift them.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
        let [c1, c2, c3, c4] = backbone.stage_channels();
        let cb = cfg.c_b;
        let rf2 = RfBlock::new("rf2", c2, cb, &mut rng);
        let rf3 = RfBlock::new("rf3", c3, cb, &mut rng);
        let rf4 = RfBlock::new("rf4", c4, cb, &mut rng);
        let proj1 = Conv2d::k1("proj1", c1, cb, &mut rng);
        let proj2 = Conv2d::k1("proj2", cb, cb, &mut rng);
        let proj3 = Conv2d::k1("proj3", cb, cb, &mut rng);
        let fc1 = Linear::new("fc1", 4 * cb + c1, cfg.hidden, &mut rng);
        let fc2 = Linear::new("fc2", cfg.hidden + cb, cfg.hidden, &mut rng);
        let fc3 = Linear::new("fc3", cfg.hidden + cb, 1, &mut rng);
        Ok(Self {
            cfg,
            backbone,
            rf2,
            rf3,
            rf4,
            proj1,
            proj2,
            proj3,
            fc1,
            fc2,
            fc3,
        })
    }

    pub fn config(&self) -> &PptConfig {
        &self.cfg
    }

    pub fn backbone_name(&self) -> &str {
        self.backbone.name()
    }

    fn check_image(&self, image: &Tensor) -> Result<(), NetError> {
        if image.shape().len() != 3 || image.shape()[0] != 3 {
            return Err(NetError::BadImageShape {
                shape: image.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Runs the encoder: backbone stages, RF enlargement, per-branch
    /// projection, bilinear resampling to `f1`'s size, concatenation.
    pub fn aggregate_features(&self, image: &Tensor) -> Result<MultiScaleFeatures, NetError> {
        self.check_image(image)?;
        let (stages, _) = self.backbone.forward(image);
        let (rf2, _) = self.rf2.forward(&stages.f2);
        let (rf3, _) = self.rf3.forward(&stages.f3);
        let (rf4, _) = self.rf4.forward(&stages.f4);
        let b1 = self.proj1.forward(&stages.f1);
        let b2 = self.proj2.forward(&rf2);
        let b3 = self.proj3.forward(&rf3);
        let (h1, w1) = stages.f1.spatial();
        let f_all = concat_channels(&[
            &b1,
            &resize_bilinear(&b2, h1, w1),
            &resize_bilinear(&b3, h1, w1),
            &resize_bilinear(&rf4, h1, w1),
        ]);
        Ok(MultiScaleFeatures {
            f1: stages.f1,
            f2: stages.f2,
            f3: stages.f3,
            f4: stages.f4,
            rf2,
            rf3,
            f_all,
        })
    }

    /// Channel-wise maxima over each candidate's scaled block on `f1`,
    /// `RF(f2)` and `RF(f3)` (the top stage is aggregate-only).
    pub fn local_features(
        &self,
        feats: &MultiScaleFeatures,
        grid: &CandidateGrid,
    ) -> LocalFeatureSet {
        LocalFeatureSet {
            from_f1: block_max_pool(&feats.f1, grid.m).features,
            from_rf2: block_max_pool(&feats.rf2, grid.m).features,
            from_rf3: block_max_pool(&feats.rf3, grid.m).features,
        }
    }

    /// Scores all N = M×M candidates of one image.
    pub fn predict_scores(
        &self,
        image: &Tensor,
        grid: &CandidateGrid,
    ) -> Result<ScoreGrid, NetError> {
        if grid.m != self.cfg.m {
            return Err(NetError::GridMismatch {
                net_m: self.cfg.m,
                grid_m: grid.m,
            });
        }
        let cache = self.forward_cached(image)?;
        Ok(ScoreGrid {
            values: cache.scores,
        })
    }

    /// Full forward pass retaining intermediates for [`PptNet::backward`].
    pub fn forward_cached(&self, image: &Tensor) -> Result<ForwardCache, NetError> {
        self.check_image(image)?;
        let m = self.cfg.m;
        let (stages, backbone_cache) = self.backbone.forward(image);
        let (rf2_out, rf2_cache) = self.rf2.forward(&stages.f2);
        let (rf3_out, rf3_cache) = self.rf3.forward(&stages.f3);
        let (rf4_out, rf4_cache) = self.rf4.forward(&stages.f4);
        let b1 = self.proj1.forward(&stages.f1);
        let b2 = self.proj2.forward(&rf2_out);
        let b3 = self.proj3.forward(&rf3_out);
        let (h1, w1) = stages.f1.spatial();
        let f_all = concat_channels(&[
            &b1,
            &resize_bilinear(&b2, h1, w1),
            &resize_bilinear(&b3, h1, w1),
            &resize_bilinear(&rf4_out, h1, w1),
        ]);
        let gap = global_avg_pool(&f_all);
        let pools = [
            block_max_pool(&stages.f1, m),
            block_max_pool(&rf2_out, m),
            block_max_pool(&rf3_out, m),
        ];

        let n = m * m;
        let c1 = self.backbone.stage_channels()[0];
        let cb = self.cfg.c_b;
        let mut in1 = Vec::with_capacity(n);
        let mut pre1 = Vec::with_capacity(n);
        let mut in2 = Vec::with_capacity(n);
        let mut pre2 = Vec::with_capacity(n);
        let mut in3 = Vec::with_capacity(n);
        let mut scores = Vec::with_capacity(n);
        for i in 0..n {
            let mut v1 = Vec::with_capacity(gap.len() + c1);
            v1.extend_from_slice(&gap);
            v1.extend_from_slice(&pools[0].features.data()[i * c1..(i + 1) * c1]);
            let z1 = self.fc1.forward(&v1);
            let a1 = relu_vec(&z1);

            let mut v2 = Vec::with_capacity(a1.len() + cb);
            v2.extend_from_slice(&a1);
            v2.extend_from_slice(&pools[1].features.data()[i * cb..(i + 1) * cb]);
            let z2 = self.fc2.forward(&v2);
            let a2 = relu_vec(&z2);

            let mut v3 = Vec::with_capacity(a2.len() + cb);
            v3.extend_from_slice(&a2);
            v3.extend_from_slice(&pools[2].features.data()[i * cb..(i + 1) * cb]);
            let z3 = self.fc3.forward(&v3);
            scores.push(sigmoid(z3[0]));

            in1.push(v1);
            pre1.push(z1);
            in2.push(v2);
            pre2.push(z2);
            in3.push(v3);
        }
        Ok(ForwardCache {
            image: image.clone(),
            stages,
            backbone_cache,
            rf2_out,
            rf2_cache,
            rf3_out,
            rf3_cache,
            rf4_out,
            rf4_cache,
            proj_outs: [b1, b2, b3],
            f_all,
            gap,
            pools,
            in1,
            pre1,
            in2,
            pre2,
            in3,
            scores,
        })
    }

    /// Backpropagates `d(loss)/d(score_i)` through the whole net,
    /// accumulating parameter gradients.
    pub fn backward(&mut self, cache: &ForwardCache, dscores: &[f64]) {
        let m = self.cfg.m;
        let n = m * m;
        assert_eq!(dscores.len(), n, "score gradient length mismatch");
        let c1 = self.backbone.stage_channels()[0];
        let cb = self.cfg.c_b;
        let hidden = self.cfg.hidden;

        let mut g_gap = vec![0.0; cache.gap.len()];
        let mut g_mp =
            [Tensor::zeros(&[n, c1]), Tensor::zeros(&[n, cb]), Tensor::zeros(&[n, cb])];
        for i in 0..n {
            let p = cache.scores[i];
            let dz3 = dscores[i] * p * (1.0 - p);
            let gin3 = self.fc3.backward(&cache.in3[i], &[dz3]);
            let (gh2, gmp3) = gin3.split_at(hidden);
            g_mp[2].data_mut()[i * cb..(i + 1) * cb].copy_from_slice(gmp3);

            let gz2 = relu_vec_backward(&cache.pre2[i], gh2);
            let gin2 = self.fc2.backward(&cache.in2[i], &gz2);
            let (gh1, gmp2) = gin2.split_at(hidden);
            g_mp[1].data_mut()[i * cb..(i + 1) * cb].copy_from_slice(gmp2);

            let gz1 = relu_vec_backward(&cache.pre1[i], gh1);
            let gin1 = self.fc1.backward(&cache.in1[i], &gz1);
            let (gg, gmp1) = gin1.split_at(cache.gap.len());
            for (a, b) in g_gap.iter_mut().zip(gg) {
                *a += b;
            }
            g_mp[0].data_mut()[i * c1..(i + 1) * c1].copy_from_slice(gmp1);
        }

        let (h1, w1) = cache.stages.f1.spatial();
        let g_f_all = global_avg_pool_backward(&g_gap, cache.f_all.channels(), h1, w1);
        let parts = split_channels(&g_f_all, &[cb, cb, cb, cb]);

        // Branch 1: proj1 on f1, plus the f1 local max pool.
        let mut g_f1 = self.proj1.backward(&cache.stages.f1, &parts[0]);
        {
            let pool_g = block_max_pool_backward(&g_mp[0], &cache.pools[0].argmax, c1, h1, w1);
            add_into(&mut g_f1, &pool_g);
        }

        // Branch 2: resize -> proj2 -> rf2, plus the rf2 local max pool.
        let (h2, w2) = cache.rf2_out.spatial();
        let g_b2 = resize_bilinear_backward(&parts[1], h2, w2);
        let mut g_rf2 = self.proj2.backward(&cache.rf2_out, &g_b2);
        add_into(
            &mut g_rf2,
            &block_max_pool_backward(&g_mp[1], &cache.pools[1].argmax, cb, h2, w2),
        );
        let g_f2 = self.rf2.backward(&cache.stages.f2, &cache.rf2_cache, &g_rf2);

        // Branch 3: same shape as branch 2.
        let (h3, w3) = cache.rf3_out.spatial();
        let g_b3 = resize_bilinear_backward(&parts[2], h3, w3);
        let mut g_rf3 = self.proj3.backward(&cache.rf3_out, &g_b3);
        add_into(
            &mut g_rf3,
            &block_max_pool_backward(&g_mp[2], &cache.pools[2].argmax, cb, h3, w3),
        );
        let g_f3 = self.rf3.backward(&cache.stages.f3, &cache.rf3_cache, &g_rf3);

        // Branch 4: aggregate-only, no local pool, no projection conv.
        let (h4, w4) = cache.rf4_out.spatial();
        let g_rf4 = resize_bilinear_backward(&parts[3], h4, w4);
        let g_f4 = self.rf4.backward(&cache.stages.f4, &cache.rf4_cache, &g_rf4);

        self.backbone.backward(
            &cache.image,
            &cache.backbone_cache,
            &StageFeatures {
                f1: g_f1,
                f2: g_f2,
                f3: g_f3,
                f4: g_f4,
            },
        );
    }

    /// All trainable parameters: backbone first, then the head, in a fixed
    /// order. `including_backbone = false` yields only head parameters.
    pub fn params_mut(&mut self, including_backbone: bool) -> Vec<&mut Param> {
        let mut out = Vec::new();
        if including_backbone {
            out.extend(self.backbone.params_mut());
        }
        out.extend(self.rf2.params_mut());
        out.extend(self.rf3.params_mut());
        out.extend(self.rf4.params_mut());
        out.extend(self.proj1.params_mut());
        out.extend(self.proj2.params_mut());
        out.extend(self.proj3.params_mut());
        out.extend(self.fc1.params_mut());
        out.extend(self.fc2.params_mut());
        out.extend(self.fc3.params_mut());
        out
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        out.extend(self.backbone.params());
        out.extend(self.rf2.params());
        out.extend(self.rf3.params());
        out.extend(self.rf4.params());
        out.extend(self.proj1.params());
        out.extend(self.proj2.params());
        out.extend(self.proj3.params());
        out.extend(self.fc1.params());
        out.extend(self.fc2.params());
        out.extend(self.fc3.params());
        out
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut(true) {
            p.zero_grad();
        }
    }

    /// Flattens all parameter values in canonical order.
    pub fn param_vector(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    /// Flattens all accumulated gradients in canonical order.
    pub fn grad_vector(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| p.grad.data().iter().copied())
            .collect()
    }

    pub fn set_param_vector(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for p in self.params_mut(true) {
            let len = p.len();
            p.value
                .data_mut()
                .copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        assert_eq!(offset, flat.len(), "parameter vector length mismatch");
    }

    /// Zeroes the output stage; every score becomes exactly sigmoid(0) = 0.5.
    pub fn zero_output_layer(&mut self) {
        self.fc3.w.value.data_mut().fill(0.0);
        self.fc3.b.value.data_mut().fill(0.0);
    }
}

fn add_into(acc: &mut Tensor, other: &Tensor) {
    debug_assert_eq!(acc.shape(), other.shape());
    for (a, b) in acc.data_mut().iter_mut().zip(other.data()) {
        *a += b;
    }
}

/// Mean squared error between predicted scores and pooled targets.
pub fn mse_loss(pred: &ScoreGrid, target: &TargetGrid) -> Result<f64, NetError> {
    if pred.values.len() != target.values.len() {
        return Err(NetError::LengthMismatch {
            pred: pred.values.len(),
            target: target.values.len(),
        });
    }
    let n = pred.values.len() as f64;
    Ok(pred
        .values
        .iter()
        .zip(&target.values)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// Gradient of [`mse_loss`] w.r.t. the predictions, scaled by `weight`.
pub fn mse_grad(pred: &[f64], target: &[f64], weight: f64) -> Vec<f64> {
    let n = pred.len() as f64;
    pred.iter()
        .zip(target)
        .map(|(p, t)| weight * 2.0 * (p - t) / n)
        .collect()
}
