//! Persistence: a binary container for datasets and versioned JSON text for
//! models, networks, and forests. Float arrays in the text formats are
//! base-16 encodings of the f64 bits, so round trips are exact; dataset
//! pixels are float32 little-endian. Writes go to a temp file and rename.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::deep::{DeepLevel, DeepRm};
use crate::error::StoreError;
use crate::evo::{EvoDrm, EvoLevel};
use crate::forest::{DecisionTree, Forest, TreeNode};
use crate::linalg::Matrix;
use crate::net::{
    Activation, Connectivity, FeedforwardNet, Layer, NetMeta, Pooling, SoftmaxHead,
};
use crate::shallow::ShallowRm;

pub const DATA_MAGIC: &[u8; 8] = b"DRMDATA1";
pub const FORMAT_VERSION: u32 = 1;

// ---------------------------------------------------------------- helpers

fn f64_to_hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn hex_to_f64(s: &str) -> Result<f64, StoreError> {
    let bits = u64::from_str_radix(s, 16)
        .map_err(|_| StoreError::Schema(format!("bad float hex: {s}")))?;
    Ok(f64::from_bits(bits))
}

/// Shaped f64 array with bit-exact hex payload.
#[derive(Debug, Serialize, Deserialize)]
struct ArrayF64 {
    shape: Vec<usize>,
    hex: Vec<String>,
}

impl ArrayF64 {
    fn from_slice(shape: &[usize], data: &[f64]) -> Self {
        Self {
            shape: shape.to_vec(),
            hex: data.iter().map(|v| f64_to_hex(*v)).collect(),
        }
    }

    fn expect_len(&self) -> usize {
        self.shape.iter().product()
    }

    fn to_vec(&self) -> Result<Vec<f64>, StoreError> {
        if self.hex.len() != self.expect_len() {
            return Err(StoreError::Schema(format!(
                "array length {} does not match shape {:?}",
                self.hex.len(),
                self.shape
            )));
        }
        self.hex.iter().map(|s| hex_to_f64(s)).collect()
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp-write");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn check_version(found: u32) -> Result<(), StoreError> {
    if found > FORMAT_VERSION || found == 0 {
        return Err(StoreError::VersionMismatch {
            found,
            supported: FORMAT_VERSION,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------- datasets

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    version: u32,
    dtype: String,
    endianness: String,
    n: usize,
    channels: usize,
    height: usize,
    width: usize,
    has_labels: bool,
    has_paths: bool,
    path_len: usize,
    seed: u64,
    generator: String,
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), StoreError> {
    let violations = dataset.validate();
    if !violations.is_empty() {
        return Err(StoreError::Model(crate::error::ModelError::Invalid(
            violations,
        )));
    }
    let header = DatasetHeader {
        version: FORMAT_VERSION,
        dtype: "float32".into(),
        endianness: "little".into(),
        n: dataset.len(),
        channels: dataset.channels,
        height: dataset.height,
        width: dataset.width,
        has_labels: dataset.labels.is_some(),
        has_paths: dataset.paths.is_some(),
        path_len: dataset.path_len,
        seed: dataset.seed,
        generator: dataset.generator.clone(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| StoreError::Schema(format!("header encode: {e}")))?;
    let mut bytes = Vec::with_capacity(16 + header_json.len() + dataset.images.len() * 4);
    bytes.extend_from_slice(DATA_MAGIC);
    bytes.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for v in &dataset.images {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(labels) = &dataset.labels {
        for l in labels {
            bytes.extend_from_slice(&l.to_le_bytes());
        }
    }
    if let Some(paths) = &dataset.paths {
        for p in paths {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
    }
    atomic_write(path, &bytes)
}

pub fn load_dataset(path: &Path) -> Result<Dataset, StoreError> {
    let mut file = fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    if bytes.len() < 16 {
        return Err(StoreError::Corrupt("file shorter than magic + header length".into()));
    }
    if &bytes[0..8] != DATA_MAGIC {
        return Err(StoreError::Corrupt("bad magic".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + header_len {
        return Err(StoreError::Corrupt("truncated header".into()));
    }
    let header: DatasetHeader = serde_json::from_slice(&bytes[16..16 + header_len])
        .map_err(|e| StoreError::Schema(format!("header decode: {e}")))?;
    check_version(header.version)?;
    if header.dtype != "float32" || header.endianness != "little" {
        return Err(StoreError::Schema(format!(
            "unsupported dtype/endianness: {}/{}",
            header.dtype, header.endianness
        )));
    }
    let pixel_count = header.n * header.channels * header.height * header.width;
    let mut offset = 16 + header_len;
    let need = pixel_count * 4
        + if header.has_labels { header.n * 8 } else { 0 }
        + if header.has_paths {
            header.n * header.path_len * 8
        } else {
            0
        };
    if bytes.len() < offset + need {
        return Err(StoreError::Corrupt(format!(
            "truncated payload: need {} bytes, have {}",
            offset + need,
            bytes.len()
        )));
    }
    let mut images = Vec::with_capacity(pixel_count);
    for _ in 0..pixel_count {
        images.push(f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap()));
        offset += 4;
    }
    let labels = if header.has_labels {
        let mut ls = Vec::with_capacity(header.n);
        for _ in 0..header.n {
            ls.push(i64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap()));
            offset += 8;
        }
        Some(ls)
    } else {
        None
    };
    let paths = if header.has_paths {
        let count = header.n * header.path_len;
        let mut ps = Vec::with_capacity(count);
        for _ in 0..count {
            ps.push(i64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap()));
            offset += 8;
        }
        Some(ps)
    } else {
        None
    };
    let dataset = Dataset {
        channels: header.channels,
        height: header.height,
        width: header.width,
        images,
        labels,
        paths,
        path_len: header.path_len,
        seed: header.seed,
        generator: header.generator,
    };
    let violations = dataset.validate();
    if !violations.is_empty() {
        return Err(StoreError::Schema(format!(
            "loaded dataset violates invariants: {}",
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    Ok(dataset)
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn manifest_path(data_path: &Path) -> std::path::PathBuf {
    let mut name = data_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".manifest.json");
    data_path.with_file_name(name)
}

/// Write `<data>.manifest.json` recording the file checksum.
pub fn write_manifest(data_path: &Path) -> Result<(), StoreError> {
    let bytes = fs::read(data_path)?;
    let manifest = Manifest {
        file: data_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    };
    let json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| StoreError::Schema(format!("manifest encode: {e}")))?;
    atomic_write(&manifest_path(data_path), &json)
}

/// Verify a dataset against its manifest when one exists; absent manifests
/// pass silently.
pub fn verify_manifest(data_path: &Path) -> Result<(), StoreError> {
    let mpath = manifest_path(data_path);
    if !mpath.exists() {
        return Ok(());
    }
    let manifest: Manifest = serde_json::from_slice(&fs::read(&mpath)?)
        .map_err(|e| StoreError::Schema(format!("manifest decode: {e}")))?;
    let actual = sha256_hex(&fs::read(data_path)?);
    if actual != manifest.sha256 {
        return Err(StoreError::ChecksumMismatch {
            path: data_path.display().to_string(),
            expected: manifest.sha256,
            actual,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------- models

/// A persisted model of any family, with optional image shape metadata used
/// by shape-aware commands (activity maximization, translational specs).
#[derive(Debug, Clone)]
pub enum StoredModel {
    Shallow(ShallowRm<f64>),
    Deep(DeepRm<f64>),
    Evo(EvoDrm<f64>),
}

#[derive(Debug, Clone)]
pub struct ModelFile {
    pub model: StoredModel,
    pub image_shape: Option<(usize, usize, usize)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ShallowSchema {
    class_prior: ArrayF64,
    nuisance_prior: ArrayF64,
    templates: ArrayF64,
    noise_var: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct DeepLevelSchema {
    transforms: Vec<ArrayF64>,
    biases: Vec<ArrayF64>,
    level_noise: ArrayF64,
    prior: ArrayF64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DeepSchema {
    top_prior: ArrayF64,
    top_templates: ArrayF64,
    levels: Vec<DeepLevelSchema>,
    pixel_noise: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct EvoLevelSchema {
    mutations: Vec<ArrayF64>,
    prior: ArrayF64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EvoSchema {
    root_templates: ArrayF64,
    root_prior: ArrayF64,
    levels: Vec<EvoLevelSchema>,
    leaf_histograms: Vec<ArrayF64>,
    label_count: usize,
    pixel_noise: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelSchema {
    format: String,
    version: u32,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_shape: Option<[usize; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shallow: Option<ShallowSchema>,
    #[serde(skip_serializing_if = "Option::is_none")]
    deep: Option<DeepSchema>,
    #[serde(skip_serializing_if = "Option::is_none")]
    evo: Option<EvoSchema>,
}

fn matrix_to_schema(m: &Matrix<f64>) -> ArrayF64 {
    ArrayF64::from_slice(&[m.rows(), m.cols()], m.data())
}

fn matrix_from_schema(a: &ArrayF64) -> Result<Matrix<f64>, StoreError> {
    if a.shape.len() != 2 {
        return Err(StoreError::Schema("matrix arrays need a 2-entry shape".into()));
    }
    Ok(Matrix::from_rows(a.shape[0], a.shape[1], a.to_vec()?))
}

pub fn save_model(file: &ModelFile, path: &Path) -> Result<(), StoreError> {
    let mut schema = ModelSchema {
        format: "drm-model".into(),
        version: FORMAT_VERSION,
        kind: String::new(),
        image_shape: file.image_shape.map(|(c, h, w)| [c, h, w]),
        shallow: None,
        deep: None,
        evo: None,
    };
    match &file.model {
        StoredModel::Shallow(m) => {
            schema.kind = "shallow".into();
            schema.shallow = Some(ShallowSchema {
                class_prior: ArrayF64::from_slice(&[m.class_count()], m.class_prior()),
                nuisance_prior: ArrayF64::from_slice(&[m.nuisance_count()], m.nuisance_prior()),
                templates: ArrayF64::from_slice(
                    &[m.class_count(), m.nuisance_count(), m.dim()],
                    m.templates(),
                ),
                noise_var: f64_to_hex(m.noise_var()),
            });
        }
        StoredModel::Deep(m) => {
            schema.kind = "deep".into();
            let levels = m
                .levels()
                .iter()
                .map(|level| DeepLevelSchema {
                    transforms: level.transforms.iter().map(matrix_to_schema).collect(),
                    biases: level
                        .biases
                        .iter()
                        .map(|b| ArrayF64::from_slice(&[b.len()], b))
                        .collect(),
                    level_noise: ArrayF64::from_slice(&[level.noise_diag.len()], &level.noise_diag),
                    prior: ArrayF64::from_slice(&[level.prior.len()], &level.prior),
                })
                .collect();
            schema.deep = Some(DeepSchema {
                top_prior: ArrayF64::from_slice(&[m.class_count()], m.top_prior()),
                top_templates: ArrayF64::from_slice(
                    &[m.class_count(), m.top_dim()],
                    &(0..m.class_count())
                        .flat_map(|c| m.top_template(c).to_vec())
                        .collect::<Vec<_>>(),
                ),
                levels,
                pixel_noise: f64_to_hex(m.pixel_noise()),
            });
        }
        StoredModel::Evo(m) => {
            schema.kind = "evo".into();
            let levels = m
                .levels()
                .iter()
                .map(|level| EvoLevelSchema {
                    mutations: level
                        .mutations
                        .iter()
                        .map(|v| ArrayF64::from_slice(&[v.len()], v))
                        .collect(),
                    prior: ArrayF64::from_slice(&[level.prior.len()], &level.prior),
                })
                .collect();
            let leaf_count = m.paths().total() as usize;
            schema.evo = Some(EvoSchema {
                root_templates: ArrayF64::from_slice(
                    &[m.class_count(), m.dim()],
                    &(0..m.class_count())
                        .flat_map(|c| m.root_template(c).to_vec())
                        .collect::<Vec<_>>(),
                ),
                root_prior: ArrayF64::from_slice(&[m.class_count()], m.root_prior()),
                levels,
                leaf_histograms: (0..leaf_count)
                    .map(|l| ArrayF64::from_slice(&[m.label_count()], m.leaf_histogram(l)))
                    .collect(),
                label_count: m.label_count(),
                pixel_noise: f64_to_hex(m.pixel_noise()),
            });
        }
    }
    let json = serde_json::to_vec_pretty(&schema)
        .map_err(|e| StoreError::Schema(format!("model encode: {e}")))?;
    atomic_write(path, &json)
}

pub fn load_model(path: &Path) -> Result<ModelFile, StoreError> {
    let bytes = fs::read(path)?;
    let schema: ModelSchema = serde_json::from_slice(&bytes)
        .map_err(|e| StoreError::Schema(format!("model decode: {e}")))?;
    if schema.format != "drm-model" {
        return Err(StoreError::Schema(format!(
            "not a model file (format {})",
            schema.format
        )));
    }
    check_version(schema.version)?;
    let image_shape = schema.image_shape.map(|[c, h, w]| (c, h, w));
    let model = match schema.kind.as_str() {
        "shallow" => {
            let s = schema
                .shallow
                .ok_or_else(|| StoreError::Schema("missing shallow payload".into()))?;
            if s.templates.shape.len() != 3 {
                return Err(StoreError::Schema("templates need shape (C, G, D)".into()));
            }
            let dim = s.templates.shape[2];
            StoredModel::Shallow(
                ShallowRm::new(
                    s.class_prior.to_vec()?,
                    s.nuisance_prior.to_vec()?,
                    s.templates.to_vec()?,
                    dim,
                    hex_to_f64(&s.noise_var)?,
                )
                .map_err(StoreError::Model)?,
            )
        }
        "deep" => {
            let s = schema
                .deep
                .ok_or_else(|| StoreError::Schema("missing deep payload".into()))?;
            if s.top_templates.shape.len() != 2 {
                return Err(StoreError::Schema("top templates need shape (C, D)".into()));
            }
            let top_dim = s.top_templates.shape[1];
            let levels = s
                .levels
                .iter()
                .map(|l| {
                    Ok(DeepLevel {
                        transforms: l
                            .transforms
                            .iter()
                            .map(matrix_from_schema)
                            .collect::<Result<_, StoreError>>()?,
                        biases: l
                            .biases
                            .iter()
                            .map(|b| b.to_vec())
                            .collect::<Result<_, StoreError>>()?,
                        noise_diag: l.level_noise.to_vec()?,
                        prior: l.prior.to_vec()?,
                    })
                })
                .collect::<Result<Vec<_>, StoreError>>()?;
            StoredModel::Deep(
                DeepRm::new(
                    s.top_prior.to_vec()?,
                    s.top_templates.to_vec()?,
                    top_dim,
                    levels,
                    hex_to_f64(&s.pixel_noise)?,
                )
                .map_err(StoreError::Model)?,
            )
        }
        "evo" => {
            let s = schema
                .evo
                .ok_or_else(|| StoreError::Schema("missing evo payload".into()))?;
            if s.root_templates.shape.len() != 2 {
                return Err(StoreError::Schema("root templates need shape (C, D)".into()));
            }
            let dim = s.root_templates.shape[1];
            let levels = s
                .levels
                .iter()
                .map(|l| {
                    Ok(EvoLevel {
                        mutations: l
                            .mutations
                            .iter()
                            .map(|m| m.to_vec())
                            .collect::<Result<_, StoreError>>()?,
                        prior: l.prior.to_vec()?,
                    })
                })
                .collect::<Result<Vec<_>, StoreError>>()?;
            StoredModel::Evo(
                EvoDrm::new(
                    s.root_templates.to_vec()?,
                    dim,
                    s.root_prior.to_vec()?,
                    levels,
                    s.leaf_histograms
                        .iter()
                        .map(|h| h.to_vec())
                        .collect::<Result<_, StoreError>>()?,
                    s.label_count,
                    hex_to_f64(&s.pixel_noise)?,
                )
                .map_err(StoreError::Model)?,
            )
        }
        other => {
            return Err(StoreError::Schema(format!("unknown model kind {other}")));
        }
    };
    Ok(ModelFile { model, image_shape })
}

// ---------------------------------------------------------------- networks

#[derive(Debug, Serialize, Deserialize)]
struct LayerSchema {
    weights: ArrayF64,
    biases: ArrayF64,
    connectivity: String,
    stride: usize,
    activation: String,
    pooling: String,
    pool_groups: Vec<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetSchema {
    format: String,
    version: u32,
    layers: Vec<LayerSchema>,
    head_weights: ArrayF64,
    head_biases: ArrayF64,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<(usize, usize)>,
}

pub fn save_net(net: &FeedforwardNet<f64>, path: &Path) -> Result<(), StoreError> {
    let schema = NetSchema {
        format: "drm-net".into(),
        version: FORMAT_VERSION,
        layers: net
            .layers
            .iter()
            .map(|l| LayerSchema {
                weights: matrix_to_schema(&l.weights),
                biases: ArrayF64::from_slice(&[l.biases.len()], &l.biases),
                connectivity: match l.connectivity {
                    Connectivity::Fully => "fully".into(),
                    Connectivity::Local => "local".into(),
                    Connectivity::Convolutional => "convolutional".into(),
                },
                stride: l.stride,
                activation: match l.activation {
                    Activation::Relu => "relu".into(),
                    Activation::None => "none".into(),
                },
                pooling: match l.pooling {
                    Pooling::Max => "max".into(),
                    Pooling::Mean => "mean".into(),
                    Pooling::None => "none".into(),
                },
                pool_groups: l.pool_groups.clone(),
            })
            .collect(),
        head_weights: matrix_to_schema(&net.head.weights),
        head_biases: ArrayF64::from_slice(&[net.head.biases.len()], &net.head.biases),
        meta: net.meta.as_ref().map(|m| (m.class_count, m.nuisance_count)),
    };
    let json = serde_json::to_vec_pretty(&schema)
        .map_err(|e| StoreError::Schema(format!("net encode: {e}")))?;
    atomic_write(path, &json)
}

pub fn load_net(path: &Path) -> Result<FeedforwardNet<f64>, StoreError> {
    let bytes = fs::read(path)?;
    let schema: NetSchema = serde_json::from_slice(&bytes)
        .map_err(|e| StoreError::Schema(format!("net decode: {e}")))?;
    if schema.format != "drm-net" {
        return Err(StoreError::Schema(format!(
            "not a net file (format {})",
            schema.format
        )));
    }
    check_version(schema.version)?;
    let layers = schema
        .layers
        .iter()
        .map(|l| {
            Ok(Layer {
                weights: matrix_from_schema(&l.weights)?,
                biases: l.biases.to_vec()?,
                connectivity: match l.connectivity.as_str() {
                    "fully" => Connectivity::Fully,
                    "local" => Connectivity::Local,
                    "convolutional" => Connectivity::Convolutional,
                    other => {
                        return Err(StoreError::Schema(format!("unknown connectivity {other}")))
                    }
                },
                stride: l.stride,
                activation: match l.activation.as_str() {
                    "relu" => Activation::Relu,
                    "none" => Activation::None,
                    other => {
                        return Err(StoreError::Schema(format!("unknown activation {other}")))
                    }
                },
                pooling: match l.pooling.as_str() {
                    "max" => Pooling::Max,
                    "mean" => Pooling::Mean,
                    "none" => Pooling::None,
                    other => return Err(StoreError::Schema(format!("unknown pooling {other}"))),
                },
                pool_groups: l.pool_groups.clone(),
            })
        })
        .collect::<Result<Vec<_>, StoreError>>()?;
    let net = FeedforwardNet {
        layers,
        head: SoftmaxHead {
            weights: matrix_from_schema(&schema.head_weights)?,
            biases: schema.head_biases.to_vec()?,
        },
        meta: schema.meta.map(|(c, g)| NetMeta {
            class_count: c,
            nuisance_count: g,
        }),
    };
    let violations = net.validate();
    if !violations.is_empty() {
        return Err(StoreError::Schema(format!(
            "loaded net violates invariants: {}",
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    Ok(net)
}

// ---------------------------------------------------------------- forests

#[derive(Debug, Serialize, Deserialize)]
struct TreeNodeSchema {
    filter: ArrayF64,
    children: Vec<usize>,
    histogram: ArrayF64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ForestSchema {
    format: String,
    version: u32,
    dim: usize,
    label_count: usize,
    trees: Vec<Vec<TreeNodeSchema>>,
}

pub fn save_forest(forest: &Forest<f64>, path: &Path) -> Result<(), StoreError> {
    let schema = ForestSchema {
        format: "drm-forest".into(),
        version: FORMAT_VERSION,
        dim: forest.trees[0].dim,
        label_count: forest.trees[0].label_count,
        trees: forest
            .trees
            .iter()
            .map(|t| {
                t.nodes
                    .iter()
                    .map(|n| TreeNodeSchema {
                        filter: ArrayF64::from_slice(&[n.filter.len()], &n.filter),
                        children: n.children.clone(),
                        histogram: ArrayF64::from_slice(&[n.histogram.len()], &n.histogram),
                    })
                    .collect()
            })
            .collect(),
    };
    let json = serde_json::to_vec_pretty(&schema)
        .map_err(|e| StoreError::Schema(format!("forest encode: {e}")))?;
    atomic_write(path, &json)
}

pub fn load_forest(path: &Path) -> Result<Forest<f64>, StoreError> {
    let bytes = fs::read(path)?;
    let schema: ForestSchema = serde_json::from_slice(&bytes)
        .map_err(|e| StoreError::Schema(format!("forest decode: {e}")))?;
    if schema.format != "drm-forest" {
        return Err(StoreError::Schema(format!(
            "not a forest file (format {})",
            schema.format
        )));
    }
    check_version(schema.version)?;
    let trees = schema
        .trees
        .iter()
        .map(|nodes| {
            Ok(DecisionTree {
                nodes: nodes
                    .iter()
                    .map(|n| {
                        Ok(TreeNode {
                            filter: n.filter.to_vec()?,
                            children: n.children.clone(),
                            histogram: n.histogram.to_vec()?,
                        })
                    })
                    .collect::<Result<Vec<_>, StoreError>>()?,
                dim: schema.dim,
                label_count: schema.label_count,
            })
        })
        .collect::<Result<Vec<_>, StoreError>>()?;
    let forest = Forest { trees };
    let violations = forest.validate();
    if !violations.is_empty() {
        return Err(StoreError::Schema(format!(
            "loaded forest violates invariants: {}",
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    Ok(forest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shallow::uniform_prior;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("drm-store-test-{}-{name}", std::process::id()));
        p
    }

    fn toy_shallow() -> ShallowRm<f64> {
        ShallowRm::new(
            uniform_prior(2),
            uniform_prior(2),
            vec![
                0.1,
                -0.2,
                std::f64::consts::PI,
                1e-300,
                0.0,
                -0.0,
                42.5,
                2.0_f64.sqrt(),
            ],
            2,
            0.37,
        )
        .unwrap()
    }

    #[test]
    fn model_roundtrip_is_bitwise() {
        let path = tmp("model.json");
        let file = ModelFile {
            model: StoredModel::Shallow(toy_shallow()),
            image_shape: Some((1, 1, 2)),
        };
        save_model(&file, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        match loaded.model {
            StoredModel::Shallow(m) => {
                let orig = toy_shallow();
                assert_eq!(m.templates(), orig.templates());
                assert_eq!(m.noise_var().to_bits(), orig.noise_var().to_bits());
            }
            _ => panic!("wrong kind"),
        }
        assert_eq!(loaded.image_shape, Some((1, 1, 2)));
        fs::remove_file(&path).ok();
    }

    #[test]
    fn dataset_roundtrip_is_bitwise() {
        let path = tmp("data.bin");
        let data = crate::dataset::generate_shallow(&toy_shallow(), 25, 9, true, None).unwrap();
        save_dataset(&data, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(data, loaded);
        fs::remove_file(&path).ok();
    }

    #[test]
    fn truncated_dataset_is_corrupt_not_partial() {
        let path = tmp("trunc.bin");
        let data = crate::dataset::generate_shallow(&toy_shallow(), 10, 1, true, None).unwrap();
        save_dataset(&data, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 13]).unwrap();
        match load_dataset(&path) {
            Err(StoreError::Corrupt(_)) => {}
            other => panic!("expected corrupt error, got {other:?}"),
        }
        fs::remove_file(&path).ok();
    }

    #[test]
    fn bad_magic_is_detected() {
        let path = tmp("magic.bin");
        fs::write(&path, b"NOTMAGIC00000000").unwrap();
        match load_dataset(&path) {
            Err(StoreError::Corrupt(msg)) => assert!(msg.contains("magic")),
            other => panic!("expected corrupt error, got {other:?}"),
        }
        fs::remove_file(&path).ok();
    }

    #[test]
    fn future_version_is_rejected() {
        let path = tmp("future.json");
        let file = ModelFile {
            model: StoredModel::Shallow(toy_shallow()),
            image_shape: None,
        };
        save_model(&file, &path).unwrap();
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\": 1", "\"version\": 999");
        fs::write(&path, text).unwrap();
        match load_model(&path) {
            Err(StoreError::VersionMismatch { found: 999, .. }) => {}
            other => panic!("expected version mismatch, got {other:?}"),
        }
        fs::remove_file(&path).ok();
    }

    #[test]
    fn manifest_detects_tampering() {
        let path = tmp("manifest.bin");
        let data = crate::dataset::generate_shallow(&toy_shallow(), 5, 2, true, None).unwrap();
        save_dataset(&data, &path).unwrap();
        write_manifest(&path).unwrap();
        verify_manifest(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            verify_manifest(&path),
            Err(StoreError::ChecksumMismatch { .. })
        ));
        fs::remove_file(&path).ok();
        fs::remove_file(manifest_path(&path)).ok();
    }
}
