//! Model serialization.
//!
//! Dense nets round-trip through a versioned JSON document:
//!
//! ```json
//! {"version":1,"input_dim":2,"n_classes":2,
//!  "activation":{"kind":"softplus","rho":10.0},
//!  "layers":[{"w":[[...]],"b":[...]}]}
//! ```
//!
//! Weight matrices are nested row-major arrays. Parameters survive a
//! save/load cycle bit-exactly: floats are printed with the shortest
//! representation that parses back to the same bits. Quadratic fixture models
//! serialize with `"kind":"quadratic"` and are recognized on load.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, DenseLayer, DenseNet, ForwardTrace, Head, Model, QuadraticModel};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerFile {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DenseFile {
    version: u32,
    input_dim: usize,
    n_classes: usize,
    activation: Activation,
    #[serde(default, skip_serializing_if = "head_is_default")]
    explain_head: Head,
    layers: Vec<LayerFile>,
}

fn head_is_default(h: &Head) -> bool {
    *h == Head::Probability
}

#[derive(Serialize, Deserialize)]
struct QuadraticFile {
    version: u32,
    kind: String,
    input_dim: usize,
    quad: Vec<Vec<f64>>,
    linear: Vec<f64>,
    constant: f64,
}

/// Either model kind, behind one `Model` implementation so the CLI can load
/// whatever a file contains.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Dense(DenseNet),
    Quadratic(QuadraticModel),
}

impl Model for AnyModel {
    fn input_dim(&self) -> usize {
        match self {
            AnyModel::Dense(m) => m.input_dim(),
            AnyModel::Quadratic(m) => m.input_dim(),
        }
    }

    fn n_classes(&self) -> usize {
        match self {
            AnyModel::Dense(m) => m.n_classes(),
            AnyModel::Quadratic(m) => m.n_classes(),
        }
    }

    fn forward(&self, x: &Array1<f64>) -> Result<ForwardTrace> {
        match self {
            AnyModel::Dense(m) => m.forward(x),
            AnyModel::Quadratic(m) => m.forward(x),
        }
    }

    fn output_gradient(&self, x: &Array1<f64>, class: usize, head: Head) -> Result<Array1<f64>> {
        match self {
            AnyModel::Dense(m) => m.output_gradient(x, class, head),
            AnyModel::Quadratic(m) => m.output_gradient(x, class, head),
        }
    }

    fn saliency_head(&self) -> Head {
        match self {
            AnyModel::Dense(m) => m.saliency_head(),
            AnyModel::Quadratic(m) => m.saliency_head(),
        }
    }
}

fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    if rows.is_empty() {
        return Err(Error::Ingestion(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Ingestion(format!("{what}: ragged matrix rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat)
        .map_err(|e| Error::Ingestion(format!("{what}: {e}")))
}

/// Serialize a dense net to its JSON document.
pub fn dense_to_json(net: &DenseNet) -> Result<String> {
    let file = DenseFile {
        version: MODEL_FORMAT_VERSION,
        input_dim: net.input_dim(),
        n_classes: net.n_classes(),
        activation: net.hidden_activation(),
        explain_head: net.explain_head(),
        layers: net
            .layers()
            .iter()
            .map(|l| LayerFile {
                w: matrix_to_rows(&l.weights),
                b: l.biases.to_vec(),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&file)?)
}

fn quadratic_to_json(m: &QuadraticModel) -> Result<String> {
    let file = QuadraticFile {
        version: MODEL_FORMAT_VERSION,
        kind: "quadratic".into(),
        input_dim: m.input_dim(),
        quad: matrix_to_rows(m.quad()),
        linear: m.linear().to_vec(),
        constant: m.constant(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn model_to_json(model: &AnyModel) -> Result<String> {
    match model {
        AnyModel::Dense(m) => dense_to_json(m),
        AnyModel::Quadratic(m) => quadratic_to_json(m),
    }
}

pub fn model_from_json(json: &str) -> Result<AnyModel> {
    let value: serde_json::Value = serde_json::from_str(json)?;
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Ingestion("model file missing version".into()))?;
    if version != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::Ingestion(format!(
            "unsupported model format version {version}, expected {MODEL_FORMAT_VERSION}"
        )));
    }
    if value.get("kind").and_then(|k| k.as_str()) == Some("quadratic") {
        let file: QuadraticFile = serde_json::from_value(value)?;
        let quad = rows_to_matrix(&file.quad, "quadratic term")?;
        let model = QuadraticModel::new(quad, Array1::from_vec(file.linear), file.constant)?;
        if model.input_dim() != file.input_dim {
            return Err(Error::Ingestion(format!(
                "declared input_dim {} does not match quadratic term ({})",
                file.input_dim,
                model.input_dim()
            )));
        }
        return Ok(AnyModel::Quadratic(model));
    }
    let file: DenseFile = serde_json::from_value(value)?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for (idx, layer) in file.layers.iter().enumerate() {
        let weights = rows_to_matrix(&layer.w, &format!("layer {idx} weights"))?;
        if weights.nrows() != layer.b.len() {
            return Err(Error::Ingestion(format!(
                "layer {idx}: {} weight rows vs {} biases",
                weights.nrows(),
                layer.b.len()
            )));
        }
        layers.push(DenseLayer {
            weights,
            biases: Array1::from_vec(layer.b.clone()),
        });
    }
    let net = DenseNet::new(layers, file.activation)?.with_explain_head(file.explain_head);
    if net.input_dim() != file.input_dim {
        return Err(Error::Ingestion(format!(
            "declared input_dim {} does not match first layer ({})",
            file.input_dim,
            net.input_dim()
        )));
    }
    if net.n_classes() != file.n_classes {
        return Err(Error::Ingestion(format!(
            "declared n_classes {} does not match last layer ({})",
            file.n_classes,
            net.n_classes()
        )));
    }
    Ok(net.into())
}

impl From<DenseNet> for AnyModel {
    fn from(net: DenseNet) -> Self {
        AnyModel::Dense(net)
    }
}

impl From<QuadraticModel> for AnyModel {
    fn from(m: QuadraticModel) -> Self {
        AnyModel::Quadratic(m)
    }
}

pub fn save_model(model: &AnyModel, path: &Path) -> Result<()> {
    let json = model_to_json(model)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<AnyModel> {
    let json = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    model_from_json(&json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dense::linear_score_net;
    use crate::model::quadratic::standard_quadratic_fixture;
    use rand::{Rng, SeedableRng};

    #[test]
    fn dense_round_trip_is_bit_exact() {
        // Awkward floats: subnormals-adjacent values, long decimals, exact powers.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut net = DenseNet::random(&[3, 5, 2], Activation::Softplus { rho: 10.0 }, 1).unwrap();
        for layer in net.layers_mut() {
            layer.weights.mapv_inplace(|w| w * rng.gen_range(0.9..1.1) + 1e-17);
        }
        let json1 = dense_to_json(&net).unwrap();
        let loaded = model_from_json(&json1).unwrap();
        let json2 = model_to_json(&loaded).unwrap();
        assert_eq!(json1, json2);
        match loaded {
            AnyModel::Dense(ref d) => {
                for (a, b) in d.layers().iter().zip(net.layers()) {
                    for (x, y) in a.weights.iter().zip(b.weights.iter()) {
                        assert_eq!(x.to_bits(), y.to_bits());
                    }
                    for (x, y) in a.biases.iter().zip(b.biases.iter()) {
                        assert_eq!(x.to_bits(), y.to_bits());
                    }
                }
            }
            _ => panic!("expected dense model"),
        }
    }

    #[test]
    fn schema_field_shape_is_stable() {
        let net = linear_score_net(&[1.0, 2.0], 0.5);
        let json = dense_to_json(&net).unwrap();
        assert_eq!(
            json,
            r#"{"version":1,"input_dim":2,"n_classes":2,"activation":{"kind":"softplus","rho":10.0},"layers":[{"w":[[1.0,2.0],[0.0,0.0]],"b":[0.5,0.0]}]}"#
        );
    }

    #[test]
    fn logit_head_survives_round_trip_and_default_is_omitted() {
        let net = linear_score_net(&[1.0], 0.0).with_explain_head(Head::Logit);
        let json = dense_to_json(&net).unwrap();
        assert!(json.contains(r#""explain_head":"logit""#));
        match model_from_json(&json).unwrap() {
            AnyModel::Dense(d) => assert_eq!(d.explain_head(), Head::Logit),
            _ => panic!(),
        }
        let plain = dense_to_json(&linear_score_net(&[1.0], 0.0)).unwrap();
        assert!(!plain.contains("explain_head"));
    }

    #[test]
    fn quadratic_round_trip() {
        let m = standard_quadratic_fixture();
        let json = quadratic_to_json(&m).unwrap();
        match model_from_json(&json).unwrap() {
            AnyModel::Quadratic(q) => assert_eq!(q, m),
            _ => panic!("expected quadratic model"),
        }
    }

    #[test]
    fn version_and_consistency_checks() {
        let bad_version = r#"{"version":2,"input_dim":1,"n_classes":2,"activation":{"kind":"relu"},"layers":[{"w":[[1.0],[0.0]],"b":[0.0,0.0]}]}"#;
        assert!(matches!(
            model_from_json(bad_version),
            Err(Error::Ingestion(_))
        ));
        let wrong_dim = r#"{"version":1,"input_dim":3,"n_classes":2,"activation":{"kind":"relu"},"layers":[{"w":[[1.0],[0.0]],"b":[0.0,0.0]}]}"#;
        assert!(matches!(model_from_json(wrong_dim), Err(Error::Ingestion(_))));
        let ragged = r#"{"version":1,"input_dim":2,"n_classes":2,"activation":{"kind":"relu"},"layers":[{"w":[[1.0,2.0],[0.0]],"b":[0.0,0.0]}]}"#;
        assert!(matches!(model_from_json(ragged), Err(Error::Ingestion(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_model(Path::new("/nonexistent/model.json")).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
