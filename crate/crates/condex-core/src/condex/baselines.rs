//! Context-free and adaptation-based baselines sharing the process model's
//! trunk shape.

use std::collections::BTreeMap;

use crate::collect::{GraspObservation, GraspScorer};
use crate::error::{CoreError, Result};
use crate::nncore::{Graph, ModelParams, NodeId};
use crate::render::GraspPatch;

use super::{
    check_params, init_params, read_meta, stage_params, trunk, Architecture, Staged, INPUT_GAIN,
    KIND_DEXNET, KIND_IGML,
};

/// Plain grasp-quality net: trunk, depth scalar, two dense layers, sigmoid.
/// No context path at all.
#[derive(Clone, Debug)]
pub struct DexnetModel {
    pub arch: Architecture,
    pub params: ModelParams,
}

/// Score node for the context-free net.
pub(crate) fn baseline_forward(
    g: &mut Graph,
    staged: &Staged,
    arch: &Architecture,
    patch: &GraspPatch,
) -> Result<NodeId> {
    let t = trunk(g, staged, "net", arch, patch)?;
    let z = g.scalar(patch.grasp_z * INPUT_GAIN)?;
    let h = g.concat(&[t, z])?;
    let a = g.dense(h, staged.id("net.fc1.w"), staged.id("net.fc1.b"))?;
    let a = g.relu(a)?;
    let logit = g.dense(a, staged.id("net.fc2.w"), staged.id("net.fc2.b"))?;
    g.sigmoid(logit)
}

impl DexnetModel {
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let params = init_params(KIND_DEXNET, &arch, super::Aggregator::Mean, seed, 0.0, 0.0)?;
        Ok(DexnetModel { arch, params })
    }

    pub fn from_params(params: ModelParams) -> Result<Self> {
        let meta = read_meta(&params)?;
        if meta.kind != KIND_DEXNET {
            return Err(CoreError::Format(format!(
                "checkpoint holds model kind {}, not the context-free baseline",
                meta.kind
            )));
        }
        check_params(KIND_DEXNET, &meta.arch, super::Aggregator::Mean, &params)?;
        Ok(DexnetModel { arch: meta.arch, params })
    }

    pub fn predict(&self, patch: &GraspPatch) -> Result<f64> {
        Ok(self.predict_batch(std::slice::from_ref(patch))?[0])
    }

    pub fn predict_batch(&self, patches: &[GraspPatch]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let staged = stage_params(&mut g, &self.params)?;
        patches
            .iter()
            .map(|p| {
                let node = baseline_forward(&mut g, &staged, &self.arch, p)?;
                Ok(g.value(node))
            })
            .collect()
    }
}

pub struct DexnetScorer<'a>(pub &'a DexnetModel);

impl GraspScorer for DexnetScorer<'_> {
    fn score(&self, _context: &[GraspObservation], candidate: &GraspPatch) -> Result<f64> {
        self.0.predict(candidate)
    }
}

/// MAML-style baseline: same net as the context-free model, but meta-trained
/// so a few plain-gradient steps on the context set specialize it. First
/// order only; the outer update uses the gradient at the adapted weights.
#[derive(Clone, Debug)]
pub struct IgmlModel {
    pub arch: Architecture,
    pub adapt_steps: usize,
    pub inner_lr: f64,
    pub params: ModelParams,
}

impl IgmlModel {
    pub fn init(arch: Architecture, adapt_steps: usize, inner_lr: f64, seed: u64) -> Result<Self> {
        if !(inner_lr > 0.0 && inner_lr.is_finite()) {
            return Err(CoreError::Config(format!(
                "inner learning rate {inner_lr} must be > 0"
            )));
        }
        let params = init_params(
            KIND_IGML,
            &arch,
            super::Aggregator::Mean,
            seed,
            adapt_steps as f64,
            inner_lr,
        )?;
        Ok(IgmlModel { arch, adapt_steps, inner_lr, params })
    }

    pub fn from_params(params: ModelParams) -> Result<Self> {
        let meta = read_meta(&params)?;
        if meta.kind != KIND_IGML {
            return Err(CoreError::Format(format!(
                "checkpoint holds model kind {}, not the adaptation baseline",
                meta.kind
            )));
        }
        check_params(KIND_IGML, &meta.arch, super::Aggregator::Mean, &params)?;
        Ok(IgmlModel {
            arch: meta.arch,
            adapt_steps: meta.adapt_steps,
            inner_lr: meta.inner_lr,
            params,
        })
    }

    /// Mean cross-entropy of `params` on a set of observations, with the
    /// parameter gradients written back into `params`.
    pub(crate) fn loss_and_grads(
        arch: &Architecture,
        params: &mut ModelParams,
        obs: &[GraspObservation],
    ) -> Result<f64> {
        let mut g = Graph::new();
        let staged = stage_params(&mut g, params)?;
        let terms = obs
            .iter()
            .map(|o| {
                let p = baseline_forward(&mut g, &staged, arch, &o.patch)?;
                g.cross_entropy(p, o.y())
            })
            .collect::<Result<Vec<_>>>()?;
        let sum = g.add_n(&terms)?;
        let loss = g.scale(sum, 1.0 / terms.len() as f64)?;
        g.backward(loss)?;
        super::write_back_grads(&g, &staged, params);
        Ok(g.value(loss))
    }

    /// Run the inner loop on a context set, returning the adapted weights
    /// and the context loss before/after.
    pub fn adapt(&self, context: &[GraspObservation]) -> Result<(ModelParams, f64, f64)> {
        let mut adapted = self.params.clone();
        if context.is_empty() || self.adapt_steps == 0 {
            return Ok((adapted, f64::NAN, f64::NAN));
        }
        let mut first = 0.0;
        for step in 0..self.adapt_steps {
            let loss = Self::loss_and_grads(&self.arch, &mut adapted, context)?;
            if step == 0 {
                first = loss;
            }
            for (_, t) in adapted.iter_mut() {
                if let Some(grad) = t.grad.take() {
                    for (w, g) in t.values.iter_mut().zip(&grad) {
                        *w -= self.inner_lr * g;
                    }
                }
            }
        }
        // Loss after the final step, without another update.
        let mut probe = adapted.clone();
        let last = Self::loss_and_grads(&self.arch, &mut probe, context)?;
        Ok((adapted, first, last))
    }

    /// Adapt on the context, then score the targets with the adapted net.
    pub fn predict_targets(
        &self,
        context: &[GraspObservation],
        targets: &[GraspPatch],
    ) -> Result<Vec<f64>> {
        let (adapted, _, _) = self.adapt(context)?;
        let mut g = Graph::new();
        let staged = stage_params(&mut g, &adapted)?;
        targets
            .iter()
            .map(|p| {
                let node = baseline_forward(&mut g, &staged, &self.arch, p)?;
                Ok(g.value(node))
            })
            .collect()
    }

    /// Average the target-set gradients at the adapted weights over the
    /// episodes of one batch (the first-order meta-gradient) and store them
    /// on the shared initialization.
    pub(crate) fn accumulate_meta_grads(
        &mut self,
        episodes: &[crate::collect::Episode],
    ) -> Result<f64> {
        let mut sums: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut total_loss = 0.0;
        for ep in episodes {
            let (mut adapted, _, _) = self.adapt(&ep.context)?;
            total_loss += Self::loss_and_grads(&self.arch, &mut adapted, &ep.target)?;
            for (name, t) in adapted.iter_mut() {
                if let Some(g) = t.grad.take() {
                    match sums.get_mut(name) {
                        Some(acc) => {
                            for (a, v) in acc.iter_mut().zip(&g) {
                                *a += v;
                            }
                        }
                        None => {
                            sums.insert(name.to_string(), g);
                        }
                    }
                }
            }
        }
        let n = episodes.len() as f64;
        for (name, t) in self.params.iter_mut() {
            t.grad = sums
                .remove(name)
                .map(|mut g| {
                    for v in &mut g {
                        *v /= n;
                    }
                    g
                });
        }
        Ok(total_loss / episodes.len() as f64)
    }
}

pub struct IgmlScorer<'a>(pub &'a IgmlModel);

impl GraspScorer for IgmlScorer<'_> {
    fn score(&self, context: &[GraspObservation], candidate: &GraspPatch) -> Result<f64> {
        Ok(self.0.predict_targets(context, std::slice::from_ref(candidate))?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{fake_obs, fake_patch, tiny_arch};
    use super::*;
    use crate::nncore::ModelParams;

    #[test]
    fn dexnet_is_blind_to_context() {
        let model = DexnetModel::init(tiny_arch(), 3).unwrap();
        let patch = fake_patch(16, 9);
        let scorer = DexnetScorer(&model);
        let no_ctx = scorer.score(&[], &patch).unwrap();
        let ctx: Vec<GraspObservation> = (0..6).map(|i| fake_obs(16, i, 1)).collect();
        assert_eq!(scorer.score(&ctx, &patch).unwrap(), no_ctx);
        assert!(no_ctx > 0.0 && no_ctx < 1.0);
    }

    #[test]
    fn zero_adapt_steps_reduces_to_the_initialization() {
        let igml = IgmlModel::init(tiny_arch(), 0, 0.1, 4).unwrap();
        let twin = DexnetModel {
            arch: igml.arch,
            params: igml.params.clone(),
        };
        let ctx: Vec<GraspObservation> = (0..5).map(|i| fake_obs(16, i, (i % 2) as u8)).collect();
        let targets: Vec<GraspPatch> = (0..3).map(|i| fake_patch(16, 50 + i)).collect();
        assert_eq!(
            igml.predict_targets(&ctx, &targets).unwrap(),
            twin.predict_batch(&targets).unwrap()
        );
    }

    #[test]
    fn adaptation_moves_the_weights_and_reduces_context_loss() {
        let igml = IgmlModel::init(tiny_arch(), 2, 0.05, 11).unwrap();
        let ctx: Vec<GraspObservation> = (0..8).map(|i| fake_obs(16, i, (i % 2) as u8)).collect();
        let (adapted, before, after) = igml.adapt(&ctx).unwrap();
        assert!(after < before, "context loss {before} -> {after}");
        assert_ne!(
            adapted.get("net.fc2.w").unwrap().values,
            igml.params.get("net.fc2.w").unwrap().values
        );
        // The shared initialization itself is untouched by adaptation.
        let again = igml.predict_targets(&ctx, &[fake_patch(16, 70)]).unwrap();
        assert_eq!(
            again,
            igml.predict_targets(&ctx, &[fake_patch(16, 70)]).unwrap()
        );
    }

    #[test]
    fn checkpoint_round_trip_keeps_adaptation_settings() {
        let igml = IgmlModel::init(tiny_arch(), 3, 0.07, 12).unwrap();
        let back =
            IgmlModel::from_params(ModelParams::from_bytes(&igml.params.to_bytes()).unwrap())
                .unwrap();
        assert_eq!(back.adapt_steps, 3);
        assert!((back.inner_lr - 0.07).abs() < 1e-15);

        let dex = DexnetModel::init(tiny_arch(), 12).unwrap();
        assert!(IgmlModel::from_params(dex.params.clone()).is_err());
        assert!(DexnetModel::from_params(igml.params.clone()).is_err());
    }
}
