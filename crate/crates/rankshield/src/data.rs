//! Dataset ingestion, normalization, splitting, and synthetic generation.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::derive_seed;

/// Feature-scaling state carried by a dataset so transforms are recorded and
/// invertible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Normalization {
    None,
    Zscore { mean: Vec<f64>, std: Vec<f64> },
    Minmax { min: Vec<f64>, max: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationKind {
    Zscore,
    Minmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `(n_samples, n_features)`.
    pub features: Array2<f64>,
    /// Class indices in `0..n_classes`.
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    /// Original label strings, indexed by class; records the categorical
    /// mapping in first-appearance order.
    pub label_names: Vec<String>,
    pub normalization: Normalization,
}

/// Which CSV column holds the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        let n = features.ncols();
        let names = (0..n).map(|i| format!("f{i}")).collect();
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let label_names = (0..n_classes).map(|c| c.to_string()).collect();
        Dataset::with_names(features, labels, names, label_names)
    }

    pub fn with_names(
        features: Array2<f64>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::Shape(format!(
                "{} feature names vs {} columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features contain NaN or infinity".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= label_names.len()) {
            return Err(Error::Index(format!(
                "label {bad} out of range for {} classes",
                label_names.len()
            )));
        }
        Ok(Dataset {
            features,
            labels,
            feature_names,
            label_names,
            normalization: Normalization::None,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn sample(&self, i: usize) -> Array1<f64> {
        self.features.row(i).to_owned()
    }

    /// Undoes the recorded normalization, returning raw-space features.
    pub fn denormalized_features(&self) -> Array2<f64> {
        let mut out = self.features.clone();
        match &self.normalization {
            Normalization::None => {}
            Normalization::Zscore { mean, std } => {
                for mut row in out.outer_iter_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = *v * std[j] + mean[j];
                    }
                }
            }
            Normalization::Minmax { min, max } => {
                for mut row in out.outer_iter_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = *v * (max[j] - min[j]) + min[j];
                    }
                }
            }
        }
        out
    }
}

/// Loads a CSV file. All non-label columns must parse as floats; the label
/// column is treated as categorical with classes assigned in
/// first-appearance order.
pub fn load_csv(path: &Path, label: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Ingestion(format!("{}: {e}", path.display())),
            _ => Error::Ingestion(e.to_string()),
        })?;

    let headers: Option<Vec<String>> = if has_header {
        Some(
            reader
                .headers()
                .map_err(|e| Error::Ingestion(e.to_string()))?
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut label_strings: Vec<String> = Vec::new();
    let mut width: Option<usize> = None;
    let mut label_idx: Option<usize> = None;

    for (row_num, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            Error::Ingestion(format!("row {}: {e}", row_num + 1))
        })?;
        let ncols = record.len();
        match width {
            None => {
                width = Some(ncols);
                label_idx = Some(match label {
                    LabelColumn::Index(i) => {
                        if *i >= ncols {
                            return Err(Error::Ingestion(format!(
                                "label column {i} out of range for {ncols} columns"
                            )));
                        }
                        *i
                    }
                    LabelColumn::Name(name) => match &headers {
                        Some(h) => h.iter().position(|c| c == name).ok_or_else(|| {
                            Error::Ingestion(format!("label column {name:?} not found in header"))
                        })?,
                        None => {
                            return Err(Error::Ingestion(
                                "label column by name requires a header row".into(),
                            ))
                        }
                    },
                });
            }
            Some(w) if w != ncols => {
                return Err(Error::Ingestion(format!(
                    "row {}: {ncols} columns, expected {w}",
                    row_num + 1
                )));
            }
            _ => {}
        }
        let li = label_idx.unwrap();
        let mut row = Vec::with_capacity(ncols - 1);
        for (col, field) in record.iter().enumerate() {
            if col == li {
                label_strings.push(field.to_string());
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Ingestion(format!(
                    "row {}, column {}: cannot parse {field:?} as a number",
                    row_num + 1,
                    col + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion(format!(
                    "row {}, column {}: non-finite value",
                    row_num + 1,
                    col + 1
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(Error::Ingestion(format!(
            "{}: no data rows",
            path.display()
        )));
    }

    // Map labels to 0..C-1 in first-appearance order.
    let mut mapping: BTreeMap<String, usize> = BTreeMap::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut labels = Vec::with_capacity(label_strings.len());
    for s in label_strings {
        let next = label_names.len();
        let id = *mapping.entry(s.clone()).or_insert_with(|| {
            label_names.push(s);
            next
        });
        labels.push(id);
    }

    let n_features = width.unwrap() - 1;
    let li = label_idx.unwrap();
    let feature_names: Vec<String> = match &headers {
        Some(h) => h
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != li)
            .map(|(_, s)| s.clone())
            .collect(),
        None => (0..n_features).map(|i| format!("f{i}")).collect(),
    };

    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let features = Array2::from_shape_vec((rows.len(), n_features), flat)
        .map_err(|e| Error::Ingestion(e.to_string()))?;
    Dataset::with_names(features, labels, feature_names, label_names)
}

/// Applies a per-feature scaling, recording its parameters on the dataset.
/// Constant columns pass through unchanged with a logged warning. Normalizing
/// an already-normalized dataset is rejected so parameters stay meaningful.
pub fn normalize(dataset: &Dataset, kind: NormalizationKind) -> Result<Dataset> {
    if dataset.normalization != Normalization::None {
        return Err(Error::Usage(
            "dataset is already normalized; denormalize first".into(),
        ));
    }
    if dataset.len() < 2 {
        return Err(Error::Usage(
            "normalization needs at least two samples".into(),
        ));
    }
    let n = dataset.n_features();
    let mut out = dataset.features.clone();
    match kind {
        NormalizationKind::Zscore => {
            let mut means = Vec::with_capacity(n);
            let mut stds = Vec::with_capacity(n);
            for j in 0..n {
                let col: Vec<f64> = dataset.features.column(j).to_vec();
                let mean = crate::util::pairwise_mean(&col);
                let mut std = {
                    let sq: Vec<f64> = col.iter().map(|v| (v - mean) * (v - mean)).collect();
                    (crate::util::pairwise_sum(&sq) / col.len() as f64).sqrt()
                };
                if std < 1e-12 {
                    log::warn!(
                        "feature {:?} is constant; passing through unscaled",
                        dataset.feature_names[j]
                    );
                    std = 1.0;
                    means.push(0.0);
                } else {
                    means.push(mean);
                }
                stds.push(std);
            }
            for mut row in out.outer_iter_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = (*v - means[j]) / stds[j];
                }
            }
            let mut d = dataset.clone();
            d.features = out;
            d.normalization = Normalization::Zscore {
                mean: means,
                std: stds,
            };
            Ok(d)
        }
        NormalizationKind::Minmax => {
            let mut mins = Vec::with_capacity(n);
            let mut maxs = Vec::with_capacity(n);
            for j in 0..n {
                let col = dataset.features.column(j);
                let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if (max - min).abs() < 1e-12 {
                    log::warn!(
                        "feature {:?} is constant; passing through unscaled",
                        dataset.feature_names[j]
                    );
                    mins.push(0.0);
                    maxs.push(1.0);
                } else {
                    mins.push(min);
                    maxs.push(max);
                }
            }
            for mut row in out.outer_iter_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = (*v - mins[j]) / (maxs[j] - mins[j]);
                }
            }
            let mut d = dataset.clone();
            d.features = out;
            d.normalization = Normalization::Minmax {
                min: mins,
                max: maxs,
            };
            Ok(d)
        }
    }
}

/// Stratified split into train/validation/test by per-class shuffling.
/// Fractions must be non-negative and sum to 1; class proportions are
/// preserved within one sample per class per split.
pub fn split(
    dataset: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let (a, b, c) = fractions;
    if a < 0.0 || b < 0.0 || c < 0.0 {
        return Err(Error::Usage("split fractions must be non-negative".into()));
    }
    if (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!(
            "split fractions must sum to 1, got {}",
            a + b + c
        )));
    }
    let n_classes = dataset.n_classes();
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in dataset.labels.iter().enumerate() {
        per_class[y].push(i);
    }

    let mut splits: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (class, indices) in per_class.iter().enumerate() {
        if indices.is_empty() {
            continue;
        }
        let mut idx = indices.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, class as u64));
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        // Cumulative rounding keeps the split exhaustive.
        let c1 = (n * a).round() as usize;
        let c2 = (n * (a + b)).round() as usize;
        let c1 = c1.min(idx.len());
        let c2 = c2.max(c1).min(idx.len());
        splits[0].extend_from_slice(&idx[..c1]);
        splits[1].extend_from_slice(&idx[c1..c2]);
        splits[2].extend_from_slice(&idx[c2..]);
    }

    let take = |ids: &[usize]| -> Dataset {
        let mut feats = Array2::zeros((ids.len(), dataset.n_features()));
        let mut labels = Vec::with_capacity(ids.len());
        for (r, &i) in ids.iter().enumerate() {
            feats.row_mut(r).assign(&dataset.features.row(i));
            labels.push(dataset.labels[i]);
        }
        Dataset {
            features: feats,
            labels,
            feature_names: dataset.feature_names.clone(),
            label_names: dataset.label_names.clone(),
            normalization: dataset.normalization.clone(),
        }
    };
    Ok((take(&splits[0]), take(&splits[1]), take(&splits[2])))
}

/// Synthetic two-Gaussian binary task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_features: usize,
    pub n_samples: usize,
    /// Distance between the class means along a random unit direction.
    pub class_separation: f64,
    /// Isotropic noise variance around each class mean.
    pub noise_cov: f64,
    /// Strength of the quadratic nuisance coupling; 0 disables it.
    pub quad_coupling: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_features: 16,
            n_samples: 2000,
            class_separation: 3.0,
            noise_cov: 1.0,
            quad_coupling: 0.4,
            seed: 0,
        }
    }
}

/// Generates the synthetic task: two Gaussian blobs on a random direction,
/// optionally warped by a quadratic nuisance coupling (every fourth feature
/// receives a bent copy of its right neighbor) so the learned model has real
/// input curvature. Labels are balanced within one sample and the row order
/// is shuffled.
pub fn synth_gaussians(spec: &SynthSpec) -> Result<Dataset> {
    if spec.n_features == 0 || spec.n_samples < 2 {
        return Err(Error::Usage(
            "synthetic task needs features and at least two samples".into(),
        ));
    }
    if !(spec.class_separation.is_finite() && spec.class_separation >= 0.0) {
        return Err(Error::Usage("class separation must be >= 0".into()));
    }
    if !(spec.noise_cov.is_finite() && spec.noise_cov > 0.0) {
        return Err(Error::Usage("noise covariance must be positive".into()));
    }
    let n = spec.n_features;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Random unit separation direction.
    let mut dir = Array1::from_shape_fn(n, |_| {
        let z: f64 = rng.sample(StandardNormal);
        z
    });
    let norm = dir.dot(&dir).sqrt();
    if norm < 1e-12 {
        dir[0] = 1.0;
    } else {
        dir /= norm;
    }

    let sigma = spec.noise_cov.sqrt();
    let half = spec.class_separation / 2.0;
    let mut features = Array2::zeros((spec.n_samples, n));
    let mut labels = Vec::with_capacity(spec.n_samples);
    for s in 0..spec.n_samples {
        let y = s % 2;
        let sign = if y == 0 { -1.0 } else { 1.0 };
        let mut x = Array1::from_shape_fn(n, |j| {
            let z: f64 = rng.sample(StandardNormal);
            sign * half * dir[j] + sigma * z
        });
        if spec.quad_coupling != 0.0 {
            // Bend every fourth feature by the square of its right neighbor.
            let mut step = 0;
            while step < n {
                let j = (step + 1) % n;
                if j != step {
                    x[step] += spec.quad_coupling * x[j] * x[j];
                }
                step += 4;
            }
        }
        features.row_mut(s).assign(&x);
        labels.push(y);
    }

    // Shuffle row order so naive prefix splits stay balanced.
    let mut order: Vec<usize> = (0..spec.n_samples).collect();
    order.shuffle(&mut rng);
    let mut shuffled = Array2::zeros((spec.n_samples, n));
    let mut shuffled_labels = Vec::with_capacity(spec.n_samples);
    for (r, &i) in order.iter().enumerate() {
        shuffled.row_mut(r).assign(&features.row(i));
        shuffled_labels.push(labels[i]);
    }

    Dataset::with_names(
        shuffled,
        shuffled_labels,
        (0..n).map(|i| format!("f{i}")).collect(),
        vec!["0".into(), "1".into()],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn load_csv_basic() {
        let f = write_csv("a,b,label\n1.0,2.0,yes\n3.0,4.0,no\n5.5,6.5,yes\n");
        let d = load_csv(f.path(), &LabelColumn::Name("label".into()), true).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.feature_names, vec!["a", "b"]);
        // first-appearance mapping: yes -> 0, no -> 1
        assert_eq!(d.labels, vec![0, 1, 0]);
        assert_eq!(d.label_names, vec!["yes", "no"]);
        assert_eq!(d.features[(2, 1)], 6.5);
    }

    #[test]
    fn load_csv_label_by_index_without_header() {
        let f = write_csv("1.0,0,2.0\n3.0,1,4.0\n");
        let d = load_csv(f.path(), &LabelColumn::Index(1), false).unwrap();
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.labels, vec![0, 1]);
        assert_eq!(d.feature_names, vec!["f0", "f1"]);
    }

    #[test]
    fn load_csv_errors_name_locations() {
        let f = write_csv("a,b,label\n1.0,abc,yes\n");
        let err = load_csv(f.path(), &LabelColumn::Name("label".into()), true).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1"), "{msg}");
        assert!(msg.contains("column 2"), "{msg}");

        let header_only = write_csv("a,b,label\n");
        assert!(matches!(
            load_csv(header_only.path(), &LabelColumn::Name("label".into()), true),
            Err(Error::Ingestion(m)) if m.contains("no data rows")
        ));

        let ragged = write_csv("a,b,label\n1.0,2.0,yes\n1.0,yes\n");
        let err = load_csv(ragged.path(), &LabelColumn::Name("label".into()), true).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");

        assert!(load_csv(
            Path::new("/nonexistent/data.csv"),
            &LabelColumn::Index(0),
            false
        )
        .is_err());
    }

    #[test]
    fn zscore_normalization_and_inverse() {
        let d = Dataset::new(
            ndarray::array![[0.0, 10.0], [10.0, 10.0], [5.0, 10.0], [5.0, 10.0]],
            vec![0, 1, 0, 1],
        )
        .unwrap();
        let z = normalize(&d, NormalizationKind::Zscore).unwrap();
        // Column 0: mean 5, population std sqrt(12.5).
        let col0: Vec<f64> = z.features.column(0).to_vec();
        let mean: f64 = col0.iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        // Constant column passes through.
        assert_eq!(z.features.column(1).to_vec(), vec![10.0; 4]);
        // Inverse recovers the original.
        let back = z.denormalized_features();
        for (a, b) in back.iter().zip(d.features.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Double normalization is rejected.
        assert!(normalize(&z, NormalizationKind::Zscore).is_err());
    }

    #[test]
    fn zscore_already_standard_is_unchanged() {
        // Column with exact zero mean, unit population variance.
        let d = Dataset::new(ndarray::array![[1.0], [-1.0]], vec![0, 1]).unwrap();
        let z = normalize(&d, NormalizationKind::Zscore).unwrap();
        assert!((z.features[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((z.features[(1, 0)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn minmax_hand_values() {
        let d = Dataset::new(ndarray::array![[0.0], [10.0], [5.0]], vec![0, 1, 0]).unwrap();
        let m = normalize(&d, NormalizationKind::Minmax).unwrap();
        assert_eq!(m.features.column(0).to_vec(), vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn split_is_stratified_disjoint_exhaustive_deterministic() {
        let n = 100;
        let feats = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let d = Dataset::new(feats, labels).unwrap();
        let (tr, va, te) = split(&d, (0.6, 0.2, 0.2), 9).unwrap();
        assert_eq!(tr.len() + va.len() + te.len(), n);
        assert_eq!(tr.len(), 60);
        assert_eq!(va.len(), 20);
        // class balance within 1
        for part in [&tr, &va, &te] {
            let pos = part.labels.iter().filter(|&&y| y == 1).count();
            let neg = part.labels.len() - pos;
            assert!(pos.abs_diff(neg) <= 1);
        }
        // disjoint: feature value encodes the original row index
        let mut seen = std::collections::BTreeSet::new();
        for part in [&tr, &va, &te] {
            for row in part.features.outer_iter() {
                assert!(seen.insert(row[0] as i64), "duplicate row");
            }
        }
        // determinism
        let (tr2, _, _) = split(&d, (0.6, 0.2, 0.2), 9).unwrap();
        assert_eq!(tr.features, tr2.features);
        let (tr3, _, _) = split(&d, (0.6, 0.2, 0.2), 10).unwrap();
        assert_ne!(tr.features, tr3.features);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let d = Dataset::new(ndarray::array![[1.0], [2.0]], vec![0, 1]).unwrap();
        assert!(split(&d, (0.5, 0.2, 0.2), 0).is_err());
        assert!(split(&d, (-0.1, 0.6, 0.5), 0).is_err());
    }

    #[test]
    fn synth_is_balanced_and_deterministic() {
        let spec = SynthSpec {
            n_samples: 201,
            ..SynthSpec::default()
        };
        let d = synth_gaussians(&spec).unwrap();
        assert_eq!(d.len(), 201);
        let pos = d.labels.iter().filter(|&&y| y == 1).count();
        assert!(pos.abs_diff(201 - pos) <= 1);
        let d2 = synth_gaussians(&spec).unwrap();
        assert_eq!(d.features, d2.features);
        let d3 = synth_gaussians(&SynthSpec {
            seed: 1,
            ..spec.clone()
        })
        .unwrap();
        assert_ne!(d.features, d3.features);
    }

    #[test]
    fn synth_classes_are_separated() {
        let spec = SynthSpec {
            n_features: 8,
            n_samples: 400,
            class_separation: 10.0,
            noise_cov: 0.1,
            quad_coupling: 0.0,
            seed: 3,
        };
        let d = synth_gaussians(&spec).unwrap();
        // Project onto the mean difference; classes should separate cleanly.
        let mut mean0 = Array1::<f64>::zeros(8);
        let mut mean1 = Array1::<f64>::zeros(8);
        let (mut c0, mut c1) = (0.0, 0.0);
        for (row, &y) in d.features.outer_iter().zip(&d.labels) {
            if y == 0 {
                mean0 = mean0 + row.to_owned();
                c0 += 1.0;
            } else {
                mean1 = mean1 + row.to_owned();
                c1 += 1.0;
            }
        }
        mean0 /= c0;
        mean1 /= c1;
        let w = &mean1 - &mean0;
        let mut errors = 0;
        let mid = (mean0.dot(&w) + mean1.dot(&w)) / 2.0;
        for (row, &y) in d.features.outer_iter().zip(&d.labels) {
            let s = row.dot(&w);
            let pred = if s > mid { 1 } else { 0 };
            if pred != y {
                errors += 1;
            }
        }
        assert!(errors == 0, "{errors} linear errors at separation 10");
    }

    #[test]
    fn synth_rejects_degenerate_specs() {
        assert!(synth_gaussians(&SynthSpec {
            n_features: 0,
            ..SynthSpec::default()
        })
        .is_err());
        assert!(synth_gaussians(&SynthSpec {
            noise_cov: 0.0,
            ..SynthSpec::default()
        })
        .is_err());
    }
}
