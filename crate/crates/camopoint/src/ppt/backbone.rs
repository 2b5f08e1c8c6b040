//! Pluggable multi-scale feature extractors.
//!
//! The scorer only needs four feature maps of decreasing resolution, so the
//! backbone sits behind a trait and is picked from a registry by name. The
//! built-in backbones are small train-from-scratch CNNs; heavier pretrained
//! extractors can be registered without touching the rest of the net.

use std::any::Any;
use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::NetError;
use crate::nn::{relu, relu_backward, Conv2d, Param, Tensor};

/// The four feature maps of one image, lowest-level first. Spatial size is
/// non-increasing from `f1` to `f4`.
#[derive(Debug, Clone)]
pub struct StageFeatures {
    pub f1: Tensor,
    pub f2: Tensor,
    pub f3: Tensor,
    pub f4: Tensor,
}

/// Opaque forward-pass state handed back to [`Backbone::backward`].
pub type BackboneCache = Box<dyn Any + Send>;

pub trait Backbone: Send + Sync {
    fn name(&self) -> &str;
    /// Channel counts of `f1..f4`.
    fn stage_channels(&self) -> [usize; 4];
    /// Nominal spatial strides of `f1..f4` relative to the input.
    fn stage_strides(&self) -> [usize; 4];
    fn forward(&self, image: &Tensor) -> (StageFeatures, BackboneCache);
    /// Accumulates parameter gradients from per-stage output gradients.
    fn backward(&mut self, image: &Tensor, cache: &BackboneCache, grads: &StageFeatures);
    fn params_mut(&mut self) -> Vec<&mut Param>;
    fn params(&self) -> Vec<&Param>;
}

/// Five stride-2 3×3 convolutions with ReLU: two for the stride-4 `f1`
/// stage, one per later stage.
pub struct ToyBackbone {
    name: String,
    channels: [usize; 4],
    convs: [Conv2d; 5],
}

struct ToyCache {
    // Pre-activation output of each conv, in order.
    pre: [Tensor; 5],
}

impl ToyBackbone {
    pub fn new(name: &str, channels: [usize; 4], rng: &mut ChaCha8Rng) -> Self {
        let [c1, c2, c3, c4] = channels;
        let convs = [
            Conv2d::k3(&format!("{name}.stem"), 3, c1, 2, rng),
            Conv2d::k3(&format!("{name}.stage1"), c1, c1, 2, rng),
            Conv2d::k3(&format!("{name}.stage2"), c1, c2, 2, rng),
            Conv2d::k3(&format!("{name}.stage3"), c2, c3, 2, rng),
            Conv2d::k3(&format!("{name}.stage4"), c3, c4, 2, rng),
        ];
        Self {
            name: name.to_string(),
            channels,
            convs,
        }
    }
}

impl Backbone for ToyBackbone {
    fn name(&self) -> &str {
        &self.name
    }

    fn stage_channels(&self) -> [usize; 4] {
        self.channels
    }

    fn stage_strides(&self) -> [usize; 4] {
        [4, 8, 16, 32]
    }

    fn forward(&self, image: &Tensor) -> (StageFeatures, BackboneCache) {
        let mut pre = Vec::with_capacity(5);
        let mut x = image.clone();
        for conv in &self.convs {
            let z = conv.forward(&x);
            x = relu(&z);
            pre.push(z);
        }
        let pre: [Tensor; 5] = pre.try_into().expect("five stages");
        let feats = StageFeatures {
            f1: relu(&pre[1]),
            f2: relu(&pre[2]),
            f3: relu(&pre[3]),
            f4: relu(&pre[4]),
        };
        (feats, Box::new(ToyCache { pre }))
    }

    fn backward(&mut self, image: &Tensor, cache: &BackboneCache, grads: &StageFeatures) {
        let cache = cache.downcast_ref::<ToyCache>().expect("toy cache");
        let stage_grads = [&grads.f1, &grads.f2, &grads.f3, &grads.f4];
        // Walk the chain backwards, folding in each stage's output gradient
        // where that stage taps off. `ga` is the gradient w.r.t. the ReLU
        // activation that conv `i` feeds.
        let mut g: Option<Tensor> = None;
        for i in (0..5).rev() {
            let mut ga = match g.take() {
                Some(g) => g,
                None => Tensor::zeros(cache.pre[i].shape()),
            };
            if i >= 1 {
                for (a, b) in ga.data_mut().iter_mut().zip(stage_grads[i - 1].data()) {
                    *a += b;
                }
            }
            let gz = relu_backward(&cache.pre[i], &ga);
            let input = if i == 0 {
                image.clone()
            } else {
                relu(&cache.pre[i - 1])
            };
            g = Some(self.convs[i].backward(&input, &gz));
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.convs.iter_mut().flat_map(|c| c.params_mut()).collect()
    }

    fn params(&self) -> Vec<&Param> {
        self.convs.iter().flat_map(|c| c.params()).collect()
    }
}

pub type BackboneFactory = fn(u64) -> Box<dyn Backbone>;

/// Name-keyed registry of backbone constructors.
#[derive(Default)]
pub struct BackboneRegistry {
    factories: BTreeMap<String, BackboneFactory>,
}

impl BackboneRegistry {
    pub fn with_builtins() -> Self {
        let mut reg = Self::default();
        reg.register("toy", |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Box::new(ToyBackbone::new("toy", [16, 32, 48, 64], &mut rng))
        });
        reg.register("toy-small", |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Box::new(ToyBackbone::new("toy-small", [8, 12, 16, 24], &mut rng))
        });
        reg
    }

    pub fn register(&mut self, name: &str, factory: BackboneFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn create(&self, name: &str, seed: u64) -> Result<Box<dyn Backbone>, NetError> {
        match self.factories.get(name) {
            Some(f) => Ok(f(seed)),
            None => Err(NetError::UnknownBackbone {
                name: name.to_string(),
                known: self.names().join(", "),
            }),
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.factories.keys().cloned().collect()
    }
}
