//! Binary model files. The layout is described in `docs/model-format.md`.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::cnn::{CnnArchitecture, CnnModel};
use super::forest::{DecisionTree, ForestModel, ForestParams, Node};
use super::knn::KnnModel;
use super::ModelError;
use crate::dsp::SpectrogramParams;

pub const MAGIC: &[u8; 4] = b"BSNG";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Knn,
    Forest,
    Cnn,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            ModelKind::Knn => 0,
            ModelKind::Forest => 1,
            ModelKind::Cnn => 2,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        [ModelKind::Knn, ModelKind::Forest, ModelKind::Cnn].into_iter().find(|k| k.tag() == t)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Knn => "knn",
            ModelKind::Forest => "forest",
            ModelKind::Cnn => "cnn",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "knn" => Ok(ModelKind::Knn),
            "forest" | "random_forest" => Ok(ModelKind::Forest),
            "cnn" => Ok(ModelKind::Cnn),
            other => Err(format!("unknown model kind `{other}`")),
        }
    }
}

/// What a recording must go through before the model sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSettings {
    pub spectrogram: SpectrogramParams,
    pub include_c0: bool,
    pub window_s: f64,
    pub denoise: bool,
    pub highpass_hz: Option<f64>,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            spectrogram: SpectrogramParams::default(),
            include_c0: false,
            window_s: 5.0,
            denoise: false,
            highpass_hz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Knn(KnnModel),
    Forest(ForestModel),
    Cnn(CnnModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Knn(_) => ModelKind::Knn,
            Model::Forest(_) => ModelKind::Forest,
            Model::Cnn(_) => ModelKind::Cnn,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Model::Knn(m) => m.n_classes,
            Model::Forest(m) => m.n_classes,
            Model::Cnn(m) => m.n_classes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub class_table: Vec<String>,
    pub features: FeatureSettings,
    pub model: Model,
}

impl ModelArtifact {
    /// Probability rows for feature vectors (k-NN, forest) or flattened
    /// images (CNN).
    pub fn predict_proba(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        match &self.model {
            Model::Knn(m) => Ok(m.predict_batch(inputs)),
            Model::Forest(m) => Ok(m.predict_batch(inputs)),
            Model::Cnn(m) => {
                let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
                m.predict_proba(&refs)
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    class_table: Vec<String>,
    features: FeatureSettings,
    hyper_params: serde_json::Value,
}

#[derive(Deserialize)]
struct KnnHyper {
    k: usize,
    n_classes: usize,
}

#[derive(Deserialize)]
struct ForestHyper {
    params: ForestParams,
    n_features: usize,
    n_classes: usize,
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).ok_or(ModelError::TruncatedPayload)?;
        let s = self.buf.get(self.pos..end).ok_or(ModelError::TruncatedPayload)?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<usize, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<usize, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize)
    }
    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ModelError> {
        // Bounds-check before allocating so a corrupt count cannot OOM.
        let bytes = self.take(n.checked_mul(8).ok_or(ModelError::TruncatedPayload)?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::Corrupt(msg.into())
}

/// Serializes an artifact. The output is a pure function of the artifact.
pub fn save_model(artifact: &ModelArtifact) -> Vec<u8> {
    let hyper_params = match &artifact.model {
        Model::Knn(m) => json!({ "k": m.k, "n_classes": m.n_classes }),
        Model::Forest(m) => json!({ "params": m.params, "n_features": m.n_features, "n_classes": m.n_classes }),
        Model::Cnn(m) => serde_json::to_value(&m.arch).expect("architecture serializes"),
    };
    let header = Header {
        kind: artifact.model.kind(),
        class_table: artifact.class_table.clone(),
        features: artifact.features.clone(),
        hyper_params,
    };
    let header = serde_json::to_vec(&header).expect("header serializes");

    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.u16(FORMAT_VERSION);
    w.u8(artifact.model.kind().tag());
    w.u32(header.len());
    w.0.extend_from_slice(&header);
    match &artifact.model {
        Model::Knn(m) => {
            let dim = m.mean.len();
            w.u32(m.points.len());
            w.u32(dim);
            w.f64s(&m.mean);
            w.f64s(&m.std);
            m.constant.iter().for_each(|&c| w.u8(c as u8));
            m.points.iter().for_each(|p| w.f64s(p));
            m.labels.iter().for_each(|&l| w.u32(l));
        }
        Model::Forest(m) => {
            w.u32(m.trees.len());
            for t in &m.trees {
                w.u32(t.nodes.len());
                for node in &t.nodes {
                    match node {
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            w.u8(0);
                            w.u32(*feature as usize);
                            w.f64s(&[*threshold]);
                            w.u32(*left as usize);
                            w.u32(*right as usize);
                        }
                        Node::Leaf { counts } => {
                            w.u8(1);
                            w.u32(counts.len());
                            counts.iter().for_each(|&c| w.u32(c as usize));
                        }
                    }
                }
            }
        }
        Model::Cnn(m) => {
            w.u32(m.params.len());
            for t in &m.params {
                w.u64(t.len());
                w.f64s(t);
            }
        }
    }
    w.0
}

pub fn load_model(bytes: &[u8]) -> Result<ModelArtifact, ModelError> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(ModelError::UnsupportedVersion(version));
    }
    let kind = ModelKind::from_tag(r.u8()?).ok_or_else(|| corrupt("unknown kind tag"))?;
    let hlen = r.u32()?;
    let header: Header = serde_json::from_slice(r.take(hlen)?).map_err(|e| corrupt(format!("header: {e}")))?;
    if header.kind != kind {
        return Err(corrupt("kind tag disagrees with header"));
    }
    if header.class_table.is_empty() {
        return Err(corrupt("empty class table"));
    }
    let n_classes = header.class_table.len();
    let hyper = header.hyper_params;
    let model = match kind {
        ModelKind::Knn => {
            let h: KnnHyper = serde_json::from_value(hyper).map_err(|e| corrupt(e.to_string()))?;
            let n = r.u32()?;
            let dim = r.u32()?;
            let mean = r.f64s(dim)?;
            let std = r.f64s(dim)?;
            let constant = (0..dim).map(|_| r.u8().map(|b| b != 0)).collect::<Result<_, _>>()?;
            let points = (0..n).map(|_| r.f64s(dim)).collect::<Result<_, _>>()?;
            let labels: Vec<usize> = (0..n).map(|_| r.u32()).collect::<Result<_, _>>()?;
            if h.k == 0 || h.k > n || labels.iter().any(|&l| l >= h.n_classes) {
                return Err(corrupt("inconsistent k-NN payload"));
            }
            Model::Knn(KnnModel {
                k: h.k,
                n_classes: h.n_classes,
                mean,
                std,
                constant,
                points,
                labels,
            })
        }
        ModelKind::Forest => {
            let h: ForestHyper = serde_json::from_value(hyper).map_err(|e| corrupt(e.to_string()))?;
            let n_trees = r.u32()?;
            let mut trees = Vec::new();
            for _ in 0..n_trees {
                let n_nodes = r.u32()?;
                let mut nodes = Vec::new();
                for _ in 0..n_nodes {
                    let node = match r.u8()? {
                        0 => {
                            let feature = r.u32()? as u32;
                            let threshold = r.f64()?;
                            let (left, right) = (r.u32()? as u32, r.u32()? as u32);
                            if feature as usize >= h.n_features || left as usize >= n_nodes || right as usize >= n_nodes {
                                return Err(corrupt("split node out of range"));
                            }
                            Node::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            }
                        }
                        1 => {
                            let len = r.u32()?;
                            let counts = (0..len).map(|_| r.u32().map(|c| c as u32)).collect::<Result<_, _>>()?;
                            Node::Leaf { counts }
                        }
                        _ => return Err(corrupt("unknown node tag")),
                    };
                    nodes.push(node);
                }
                trees.push(DecisionTree { nodes });
            }
            Model::Forest(ForestModel {
                trees,
                n_classes: h.n_classes,
                n_features: h.n_features,
                params: h.params,
            })
        }
        ModelKind::Cnn => {
            let arch: CnnArchitecture = serde_json::from_value(hyper).map_err(|e| corrupt(e.to_string()))?;
            let lens = arch.tensor_lengths()?;
            let count = r.u32()?;
            if count != lens.len() {
                return Err(corrupt("wrong tensor count"));
            }
            let mut params = Vec::with_capacity(count);
            for &want in &lens {
                let len = r.u64()?;
                if len != want {
                    return Err(corrupt("tensor length disagrees with architecture"));
                }
                params.push(r.f64s(len)?);
            }
            Model::Cnn(CnnModel::from_params(arch, params))
        }
    };
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    if model.n_classes() != n_classes {
        return Err(corrupt("class table size disagrees with model"));
    }
    Ok(ModelArtifact {
        class_table: header.class_table,
        features: header.features,
        model,
    })
}
