//! Grasp-quality models: a conditional neural process that conditions on
//! observed grasp outcomes, plus context-free and adaptation-based baselines.
//!
//! All three share one conv trunk shape over the depth crop. The process
//! model runs an encoder over each context observation (crop, depth scalar,
//! label), merges the embeddings into a task representation, and feeds that
//! to the decoder alongside the target crop.

mod baselines;
mod train;

pub use baselines::{DexnetModel, DexnetScorer, IgmlModel, IgmlScorer};
pub use train::{train_condex, train_dexnet, train_igml, TrainConfig, TrainLog};

use std::fmt;
use std::str::FromStr;

use crate::collect::{GraspObservation, GraspScorer};
use crate::error::{CoreError, Result};
use crate::nncore::{uniform_fan_in, Graph, ModelParams, NodeId, Tensor};
use crate::render::GraspPatch;
use crate::rng::{rng_from, salts};

/// Crops and depth scalars are metric (tens of millimeters); this gain puts
/// them in unit range for the first layer.
pub const INPUT_GAIN: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregator {
    Mean,
    Attention,
}

impl Aggregator {
    fn code(self) -> f64 {
        match self {
            Aggregator::Mean => 0.0,
            Aggregator::Attention => 1.0,
        }
    }

    fn from_code(code: f64) -> Result<Self> {
        match code as i64 {
            0 => Ok(Aggregator::Mean),
            1 => Ok(Aggregator::Attention),
            other => Err(CoreError::Format(format!("unknown aggregator code {other}"))),
        }
    }
}

impl FromStr for Aggregator {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "attention" => Ok(Aggregator::Attention),
            other => Err(CoreError::Config(format!(
                "aggregator {other:?} is not \"mean\" or \"attention\""
            ))),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregator::Mean => "mean",
            Aggregator::Attention => "attention",
        })
    }
}

/// Layer sizes for the shared trunk and heads. `default_for` gives the
/// stock sizes; anything else is fair game as long as the dims stay valid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub patch_size: usize,
    pub conv1_channels: usize,
    pub conv1_kernel: usize,
    pub conv2_channels: usize,
    pub conv2_kernel: usize,
    pub hidden: usize,
    pub repr_dim: usize,
}

impl Architecture {
    pub fn default_for(patch_size: usize) -> Self {
        Architecture {
            patch_size,
            conv1_channels: 16,
            conv1_kernel: 7,
            conv2_channels: 16,
            conv2_kernel: 5,
            hidden: 64,
            repr_dim: 32,
        }
    }

    /// Flattened feature length after conv-relu-pool twice.
    pub fn trunk_len(&self) -> Result<usize> {
        let err = || {
            CoreError::Config(format!(
                "trunk does not fit: patch {} with kernels {}/{}",
                self.patch_size, self.conv1_kernel, self.conv2_kernel
            ))
        };
        if self.patch_size < self.conv1_kernel {
            return Err(err());
        }
        let s1 = (self.patch_size - self.conv1_kernel + 1) / 2;
        if s1 < self.conv2_kernel {
            return Err(err());
        }
        let s2 = (s1 - self.conv2_kernel + 1) / 2;
        if s2 == 0 {
            return Err(err());
        }
        Ok(self.conv2_channels * s2 * s2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv1_channels == 0
            || self.conv2_channels == 0
            || self.conv1_kernel == 0
            || self.conv2_kernel == 0
            || self.hidden == 0
            || self.repr_dim == 0
        {
            return Err(CoreError::Config("architecture sizes must be >= 1".into()));
        }
        self.trunk_len().map(|_| ())
    }
}

const META_NAME: &str = "meta";
const KIND_CONDEX: f64 = 0.0;
const KIND_DEXNET: f64 = 1.0;
const KIND_IGML: f64 = 2.0;

/// Architecture and model-kind footer carried inside the checkpoint, so a
/// saved model reloads without any side channel.
fn meta_tensor(kind: f64, arch: &Architecture, agg: f64, adapt_steps: f64, inner_lr: f64) -> Tensor {
    Tensor::from_values(
        &[11],
        vec![
            kind,
            arch.patch_size as f64,
            arch.conv1_channels as f64,
            arch.conv1_kernel as f64,
            arch.conv2_channels as f64,
            arch.conv2_kernel as f64,
            arch.hidden as f64,
            arch.repr_dim as f64,
            agg,
            adapt_steps,
            inner_lr,
        ],
    )
    .expect("meta tensor is fixed-size")
}

struct Meta {
    kind: f64,
    arch: Architecture,
    agg: f64,
    adapt_steps: usize,
    inner_lr: f64,
}

fn read_meta(params: &ModelParams) -> Result<Meta> {
    let t = params
        .get(META_NAME)
        .ok_or_else(|| CoreError::Format("checkpoint lacks a meta tensor".into()))?;
    if t.numel() != 11 {
        return Err(CoreError::Format("meta tensor has the wrong arity".into()));
    }
    let v = &t.values;
    Ok(Meta {
        kind: v[0],
        arch: Architecture {
            patch_size: v[1] as usize,
            conv1_channels: v[2] as usize,
            conv1_kernel: v[3] as usize,
            conv2_channels: v[4] as usize,
            conv2_kernel: v[5] as usize,
            hidden: v[6] as usize,
            repr_dim: v[7] as usize,
        },
        agg: v[8],
        adapt_steps: v[9] as usize,
        inner_lr: v[10],
    })
}

/// (name, shape, fan_in) for every trainable tensor of one model kind.
fn tensor_specs(
    kind: f64,
    arch: &Architecture,
    aggregator: Aggregator,
) -> Result<Vec<(String, Vec<usize>, usize)>> {
    let t = arch.trunk_len()?;
    let (c1, k1) = (arch.conv1_channels, arch.conv1_kernel);
    let (c2, k2) = (arch.conv2_channels, arch.conv2_kernel);
    let (h, r) = (arch.hidden, arch.repr_dim);
    let trunk = |prefix: &str| {
        vec![
            (format!("{prefix}.conv1.w"), vec![c1, 1, k1, k1], k1 * k1),
            (format!("{prefix}.conv1.b"), vec![c1], k1 * k1),
            (format!("{prefix}.conv2.w"), vec![c2, c1, k2, k2], c1 * k2 * k2),
            (format!("{prefix}.conv2.b"), vec![c2], c1 * k2 * k2),
        ]
    };
    let mut specs = Vec::new();
    if kind == KIND_CONDEX {
        specs.extend(trunk("enc"));
        specs.push(("enc.fc1.w".into(), vec![h, t + 2], t + 2));
        specs.push(("enc.fc1.b".into(), vec![h], t + 2));
        specs.push(("enc.fc2.w".into(), vec![r, h], h));
        specs.push(("enc.fc2.b".into(), vec![r], h));
        if aggregator == Aggregator::Attention {
            specs.push(("enc.query.w".into(), vec![r, t + 1], t + 1));
            specs.push(("enc.query.b".into(), vec![r], t + 1));
        }
        specs.extend(trunk("dec"));
        specs.push(("dec.fc1.w".into(), vec![h, t + 1 + r], t + 1 + r));
        specs.push(("dec.fc1.b".into(), vec![h], t + 1 + r));
        specs.push(("dec.fc2.w".into(), vec![1, h], h));
        specs.push(("dec.fc2.b".into(), vec![1], h));
    } else {
        specs.extend(trunk("net"));
        specs.push(("net.fc1.w".into(), vec![h, t + 1], t + 1));
        specs.push(("net.fc1.b".into(), vec![h], t + 1));
        specs.push(("net.fc2.w".into(), vec![1, h], h));
        specs.push(("net.fc2.b".into(), vec![1], h));
    }
    Ok(specs)
}

fn init_params(
    kind: f64,
    arch: &Architecture,
    aggregator: Aggregator,
    seed: u64,
    adapt_steps: f64,
    inner_lr: f64,
) -> Result<ModelParams> {
    arch.validate()?;
    let mut params = ModelParams::new(seed);
    for (i, (name, shape, fan_in)) in tensor_specs(kind, arch, aggregator)?.iter().enumerate() {
        let mut rng = rng_from(seed, &[salts::INIT, i as u64]);
        params.add(name, uniform_fan_in(shape, *fan_in, &mut rng))?;
    }
    params.add(
        META_NAME,
        meta_tensor(kind, arch, aggregator.code(), adapt_steps, inner_lr),
    )?;
    Ok(params)
}

fn check_params(
    kind: f64,
    arch: &Architecture,
    aggregator: Aggregator,
    params: &ModelParams,
) -> Result<()> {
    for (name, shape, _) in tensor_specs(kind, arch, aggregator)? {
        match params.get(&name) {
            Some(t) if t.shape == shape => {}
            Some(t) => {
                return Err(CoreError::ShapeMismatch {
                    op: "checkpoint",
                    left: shape,
                    right: t.shape.clone(),
                })
            }
            None => return Err(CoreError::Format(format!("checkpoint lacks tensor {name:?}"))),
        }
    }
    Ok(())
}

/// Trainable tensors staged as graph leaves, addressable by name.
pub(crate) struct Staged {
    pairs: Vec<(String, NodeId)>,
}

impl Staged {
    pub(crate) fn id(&self, name: &str) -> NodeId {
        self.pairs
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("parameter {name:?} not staged"))
            .1
    }

    pub(crate) fn pairs(&self) -> &[(String, NodeId)] {
        &self.pairs
    }
}

pub(crate) fn stage_params(g: &mut Graph, params: &ModelParams) -> Result<Staged> {
    let mut pairs = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        if name == META_NAME {
            continue;
        }
        pairs.push((name.to_string(), g.leaf(&t.shape, &t.values)?));
    }
    Ok(Staged { pairs })
}

/// Copy the graph's leaf gradients back into the parameter grad slots.
pub(crate) fn write_back_grads(g: &Graph, staged: &Staged, params: &mut ModelParams) {
    for (name, id) in staged.pairs() {
        if let Some(t) = params.get_mut(name) {
            t.grad = g.grad(*id).map(<[f64]>::to_vec);
        }
    }
}

/// conv-relu-pool twice then flatten, under `prefix` weights.
pub(crate) fn trunk(
    g: &mut Graph,
    staged: &Staged,
    prefix: &str,
    arch: &Architecture,
    patch: &GraspPatch,
) -> Result<NodeId> {
    if patch.size != arch.patch_size {
        return Err(CoreError::ShapeMismatch {
            op: "trunk",
            left: vec![arch.patch_size, arch.patch_size],
            right: vec![patch.size, patch.size],
        });
    }
    let scaled: Vec<f64> = patch.pixels.iter().map(|v| v * INPUT_GAIN).collect();
    let x = g.leaf(&[1, patch.size, patch.size], &scaled)?;
    let c1 = g.conv2d(
        x,
        staged.id(&format!("{prefix}.conv1.w")),
        staged.id(&format!("{prefix}.conv1.b")),
        1,
    )?;
    let a1 = g.relu(c1)?;
    let p1 = g.maxpool2(a1)?;
    let c2 = g.conv2d(
        p1,
        staged.id(&format!("{prefix}.conv2.w")),
        staged.id(&format!("{prefix}.conv2.b")),
        1,
    )?;
    let a2 = g.relu(c2)?;
    let p2 = g.maxpool2(a2)?;
    g.flatten(p2)
}

/// One context observation -> its feature embedding r_i.
pub(crate) fn encode_obs_node(
    g: &mut Graph,
    staged: &Staged,
    arch: &Architecture,
    obs: &GraspObservation,
) -> Result<NodeId> {
    let t = trunk(g, staged, "enc", arch, &obs.patch)?;
    let z = g.scalar(obs.z() * INPUT_GAIN)?;
    let y = g.scalar(obs.y())?;
    let h = g.concat(&[t, z, y])?;
    let a = g.dense(h, staged.id("enc.fc1.w"), staged.id("enc.fc1.b"))?;
    let a = g.relu(a)?;
    g.dense(a, staged.id("enc.fc2.w"), staged.id("enc.fc2.b"))
}

/// Merge context embeddings into one task representation. Empty context
/// gives the zero vector; attention additionally needs the target's query.
pub fn aggregate(
    g: &mut Graph,
    embeddings: &[NodeId],
    mode: Aggregator,
    target_query: Option<NodeId>,
    dim: usize,
) -> Result<NodeId> {
    if embeddings.is_empty() {
        return g.leaf(&[dim], &vec![0.0; dim]);
    }
    match mode {
        Aggregator::Mean => g.mean_over_set(embeddings),
        Aggregator::Attention => {
            let q = target_query
                .ok_or_else(|| CoreError::invalid("attention aggregation needs a target query"))?;
            g.dot_product_attention(q, embeddings, embeddings)
        }
    }
}

/// The conditional-process grasp model.
#[derive(Clone, Debug)]
pub struct CondexModel {
    pub arch: Architecture,
    pub aggregator: Aggregator,
    pub params: ModelParams,
}

impl CondexModel {
    pub fn init(arch: Architecture, aggregator: Aggregator, seed: u64) -> Result<Self> {
        let params = init_params(KIND_CONDEX, &arch, aggregator, seed, 0.0, 0.0)?;
        Ok(CondexModel { arch, aggregator, params })
    }

    /// Rebuild from a loaded checkpoint; kind, sizes, and aggregator come
    /// from the embedded meta tensor.
    pub fn from_params(params: ModelParams) -> Result<Self> {
        let meta = read_meta(&params)?;
        if meta.kind != KIND_CONDEX {
            return Err(CoreError::Format(format!(
                "checkpoint holds model kind {}, not a conditional-process model",
                meta.kind
            )));
        }
        let aggregator = Aggregator::from_code(meta.agg)?;
        check_params(KIND_CONDEX, &meta.arch, aggregator, &params)?;
        Ok(CondexModel { arch: meta.arch, aggregator, params })
    }

    /// h_theta(x, z, y) for one observation.
    pub fn encode_context(&self, obs: &GraspObservation) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let staged = stage_params(&mut g, &self.params)?;
        let r = encode_obs_node(&mut g, &staged, &self.arch, obs)?;
        Ok(g.values(r).to_vec())
    }

    /// Mean-mode task representation for a context set. Attention mode has
    /// no target-free representation.
    pub fn task_representation(&self, context: &[GraspObservation]) -> Result<Vec<f64>> {
        if self.aggregator != Aggregator::Mean {
            return Err(CoreError::invalid(
                "task_representation is only defined for the mean aggregator",
            ));
        }
        let mut g = Graph::new();
        let staged = stage_params(&mut g, &self.params)?;
        let embeddings = context
            .iter()
            .map(|o| encode_obs_node(&mut g, &staged, &self.arch, o))
            .collect::<Result<Vec<_>>>()?;
        let r = aggregate(&mut g, &embeddings, Aggregator::Mean, None, self.arch.repr_dim)?;
        Ok(g.values(r).to_vec())
    }

    /// Score each target crop conditioned on the context set.
    pub fn predict_targets(
        &self,
        context: &[GraspObservation],
        targets: &[GraspPatch],
    ) -> Result<Vec<f64>> {
        let refs: Vec<&GraspPatch> = targets.iter().collect();
        let mut g = Graph::new();
        let staged = stage_params(&mut g, &self.params)?;
        let probs = predict_nodes(&mut g, &staged, self.arch, self.aggregator, context, &refs)?;
        Ok(probs.iter().map(|&p| g.value(p)).collect())
    }
}

/// Shared forward pass: one sigmoid score node per target, all on the same
/// graph so training can keep building the loss on top.
pub(crate) fn predict_nodes(
    g: &mut Graph,
    staged: &Staged,
    arch: Architecture,
    aggregator: Aggregator,
    context: &[GraspObservation],
    targets: &[&GraspPatch],
) -> Result<Vec<NodeId>> {
    let embeddings = context
        .iter()
        .map(|o| encode_obs_node(g, staged, &arch, o))
        .collect::<Result<Vec<_>>>()?;
    let shared_r = match aggregator {
        Aggregator::Mean => Some(aggregate(g, &embeddings, Aggregator::Mean, None, arch.repr_dim)?),
        Aggregator::Attention => None,
    };
    let mut out = Vec::with_capacity(targets.len());
    for &patch in targets {
        let t = trunk(g, staged, "dec", &arch, patch)?;
        let z = g.scalar(patch.grasp_z * INPUT_GAIN)?;
        let r = match shared_r {
            Some(r) => r,
            None => {
                let hq = g.concat(&[t, z])?;
                let q = g.dense(hq, staged.id("enc.query.w"), staged.id("enc.query.b"))?;
                aggregate(g, &embeddings, Aggregator::Attention, Some(q), arch.repr_dim)?
            }
        };
        let h = g.concat(&[t, z, r])?;
        let a = g.dense(h, staged.id("dec.fc1.w"), staged.id("dec.fc1.b"))?;
        let a = g.relu(a)?;
        let logit = g.dense(a, staged.id("dec.fc2.w"), staged.id("dec.fc2.b"))?;
        out.push(g.sigmoid(logit)?);
    }
    Ok(out)
}

/// Ranks candidate grasps by the process model's score under the current
/// context; plugs into accumulated context collection.
pub struct CnpScorer<'a>(pub &'a CondexModel);

impl GraspScorer for CnpScorer<'_> {
    fn score(&self, context: &[GraspObservation], candidate: &GraspPatch) -> Result<f64> {
        Ok(self.0.predict_targets(context, std::slice::from_ref(candidate))?[0])
    }
}

/// A checkpoint of whichever family, reconstructed from its stored kind.
#[derive(Clone, Debug)]
pub enum AnyModel {
    Condex(CondexModel),
    Dexnet(DexnetModel),
    Igml(IgmlModel),
}

impl AnyModel {
    pub fn from_params(params: ModelParams) -> Result<Self> {
        let meta = read_meta(&params)?;
        if meta.kind == KIND_CONDEX {
            Ok(AnyModel::Condex(CondexModel::from_params(params)?))
        } else if meta.kind == KIND_DEXNET {
            Ok(AnyModel::Dexnet(DexnetModel::from_params(params)?))
        } else if meta.kind == KIND_IGML {
            Ok(AnyModel::Igml(IgmlModel::from_params(params)?))
        } else {
            Err(CoreError::Format(format!(
                "checkpoint kind {} is not recognized",
                meta.kind
            )))
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            AnyModel::Condex(_) => "condex",
            AnyModel::Dexnet(_) => "dexnet",
            AnyModel::Igml(_) => "igml",
        }
    }

    pub fn params(&self) -> &ModelParams {
        match self {
            AnyModel::Condex(m) => &m.params,
            AnyModel::Dexnet(m) => &m.params,
            AnyModel::Igml(m) => &m.params,
        }
    }

    pub fn architecture(&self) -> &Architecture {
        match self {
            AnyModel::Condex(m) => &m.arch,
            AnyModel::Dexnet(m) => &m.arch,
            AnyModel::Igml(m) => &m.arch,
        }
    }

    pub fn predict_targets(
        &self,
        context: &[GraspObservation],
        targets: &[GraspPatch],
    ) -> Result<Vec<f64>> {
        match self {
            AnyModel::Condex(m) => m.predict_targets(context, targets),
            AnyModel::Dexnet(m) => m.predict_batch(targets),
            AnyModel::Igml(m) => m.predict_targets(context, targets),
        }
    }
}

impl GraspScorer for AnyModel {
    fn score(&self, context: &[GraspObservation], candidate: &GraspPatch) -> Result<f64> {
        Ok(self.predict_targets(context, std::slice::from_ref(candidate))?[0])
    }
}
