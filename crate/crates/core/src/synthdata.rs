//! Deterministic synthetic stand-in for the rendered material grid.
//!
//! Each material is a Gaussian latent `z_m`. Every (environment, shape) cell
//! owns a fixed linear map into feature space, shared by all materials:
//! `A_{e,s} ∝ G + α (S_s + E_e + C_{e,s}) / √3`, optionally restricted to a
//! random latent subspace so one cell reveals only part of the material.
//! The same material therefore looks different in every cell, while cells
//! that share a shape or an environment stay related. A view feature is
//! `normalize(A_{e,s} z_m + ε)`.
//!
//! A part sample takes one random cell of its material and adds an
//! object-specific nuisance vector drawn from a fixed low-rank subspace, which
//! swamps raw cosine similarity but can be learned away.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Condition, Dataset, MaterialViewSet, PartSample, Split, SplitAssignment};
use crate::error::{Error, Result};
use crate::format::{read_matrix, write_atomic, write_matrix};
use crate::tensor::Tensor;
use crate::trainer::split_objects;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPLIT_FILE: &str = "split.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_materials: usize,
    pub n_objects: usize,
    pub parts_per_object: usize,
    pub n_env: usize,
    pub n_shapes: usize,
    /// Latent material dimension.
    pub d_lat: usize,
    /// Feature dimension of views and part descriptors.
    pub d_in: usize,
    pub view_noise_sigma: f64,
    pub part_nuisance_sigma: f64,
    /// Weight of the per-cell terms against the map shared by all cells.
    /// 0 makes every cell identical; large values make cells unrelated.
    pub cell_spread: f64,
    /// Latent directions each cell reveals; below `d_lat` a single view
    /// cannot pin down the material.
    pub cell_latent_rank: usize,
    /// Rank of the subspace object nuisance vectors live in.
    pub nuisance_rank: usize,
    /// Fraction of objects assigned to the test split.
    pub test_fraction: f64,
    /// Extra shapes never shown in the view grid.
    pub unseen_shapes: usize,
    /// Extra environments never shown in the view grid.
    pub unseen_envs: usize,
    /// Extra materials that only ever appear in unseen-material parts.
    pub unseen_materials: usize,
    /// Additional parts per object rendered under each unseen condition.
    pub unseen_parts_per_object: usize,
    /// Debug: every cell map is the identity embedding `D_lat → D_in`.
    pub identity_maps: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_materials: 64,
            n_objects: 1000,
            parts_per_object: 4,
            n_env: 7,
            n_shapes: 6,
            d_lat: 16,
            d_in: 32,
            view_noise_sigma: 0.05,
            part_nuisance_sigma: 0.3,
            cell_spread: 1.0,
            cell_latent_rank: 16,
            nuisance_rank: 8,
            test_fraction: 0.25,
            unseen_shapes: 0,
            unseen_envs: 0,
            unseen_materials: 0,
            unseen_parts_per_object: 0,
            identity_maps: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_materials", self.n_materials),
            ("n_objects", self.n_objects),
            ("parts_per_object", self.parts_per_object),
            ("n_env", self.n_env),
            ("n_shapes", self.n_shapes),
            ("d_lat", self.d_lat),
            ("d_in", self.d_in),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
        }
        if self.cell_latent_rank == 0 {
            return Err(Error::InvalidConfig("cell_latent_rank must be at least 1".into()));
        }
        if !(self.view_noise_sigma >= 0.0 && self.part_nuisance_sigma >= 0.0 && self.cell_spread >= 0.0) {
            return Err(Error::InvalidConfig("sigmas and cell_spread must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return Err(Error::InvalidConfig("test_fraction must lie in [0, 1]".into()));
        }
        let unseen = self.unseen_shapes + self.unseen_envs + self.unseen_materials;
        if self.unseen_parts_per_object > 0 && unseen == 0 {
            return Err(Error::InvalidConfig(
                "unseen_parts_per_object needs unseen shapes, envs or materials".into(),
            ));
        }
        Ok(())
    }

    pub fn n_views(&self) -> usize {
        self.n_env * self.n_shapes
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDims {
    pub n_env: usize,
    pub n_shapes: usize,
    pub d_in: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialRecord {
    pub id: String,
    /// `MCEB` file with `n_env · n_shapes` rows, relative to the manifest.
    pub views: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorRef {
    pub file: String,
    pub row: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartRecord {
    pub sample_id: String,
    pub object_id: String,
    pub truth_material_id: String,
    pub split: Split,
    #[serde(default)]
    pub condition: Condition,
    pub descriptor: DescriptorRef,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub dims: GridDims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    pub materials: Vec<MaterialRecord>,
    pub parts: Vec<PartRecord>,
    /// Optional split file overriding the per-part split tags.
    #[serde(default)]
    pub split_file: Option<String>,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter().map(|x| x / n).collect()
    } else {
        v.to_vec()
    }
}

/// `D_in × D_lat` map applied to a latent.
fn apply(map: &[f64], z: &[f64], d_in: usize) -> Vec<f64> {
    let d_lat = z.len();
    (0..d_in)
        .map(|i| (0..d_lat).map(|j| map[i * d_lat + j] * z[j]).sum())
        .collect()
}

/// `rows × cols` matrix with orthonormal columns (Gram-Schmidt on Gaussian draws).
fn orthonormal_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let mut q = vec![0.0; rows * cols];
    for c in 0..cols {
        let mut v = gaussian(rng, rows, 1.0);
        for prev in 0..c {
            let d: f64 = (0..rows).map(|i| v[i] * q[i * cols + prev]).sum();
            for i in 0..rows {
                v[i] -= d * q[i * cols + prev];
            }
        }
        let v = normalize(&v);
        for i in 0..rows {
            q[i * cols + c] = v[i];
        }
    }
    q
}

/// `a (m×k) · b (k×k)`.
fn apply_matrix(a: &[f64], b: &[f64], m: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        for l in 0..k {
            let x = a[i * k + l];
            for j in 0..k {
                out[i * k + j] += x * b[l * k + j];
            }
        }
    }
    out
}

struct CellMaps {
    d_in: usize,
    d_lat: usize,
    spread: f64,
    latent_rank: usize,
    shared: Vec<f64>,
    shapes: Vec<Vec<f64>>,
    envs: Vec<Vec<f64>>,
    identity: bool,
    rng: ChaCha8Rng,
}

impl CellMaps {
    fn new(cfg: &SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(0);
        let n = cfg.d_in * cfg.d_lat;
        let sigma = 1.0 / (cfg.d_lat as f64).sqrt();
        let shared = gaussian(&mut rng, n, sigma);
        let shapes = (0..cfg.n_shapes + cfg.unseen_shapes)
            .map(|_| gaussian(&mut rng, n, sigma))
            .collect();
        let envs = (0..cfg.n_env + cfg.unseen_envs)
            .map(|_| gaussian(&mut rng, n, sigma))
            .collect();
        Self {
            d_in: cfg.d_in,
            d_lat: cfg.d_lat,
            spread: cfg.cell_spread,
            latent_rank: cfg.cell_latent_rank,
            shared,
            shapes,
            envs,
            identity: cfg.identity_maps,
            rng,
        }
    }

    /// Map for (environment, shape); each call draws a fresh cell-specific term.
    fn cell(&mut self, env: usize, shape: usize) -> Vec<f64> {
        let n = self.d_in * self.d_lat;
        if self.identity {
            let mut m = vec![0.0; n];
            for i in 0..self.d_in.min(self.d_lat) {
                m[i * self.d_lat + i] = 1.0;
            }
            return m;
        }
        let sigma = 1.0 / (self.d_lat as f64).sqrt();
        let own = gaussian(&mut self.rng, n, sigma);
        let k = self.spread / 3f64.sqrt();
        let scale = 1.0 / (1.0 + self.spread * self.spread).sqrt();
        let map: Vec<f64> = (0..n)
            .map(|i| scale * (self.shared[i] + k * (self.shapes[shape][i] + self.envs[env][i] + own[i])))
            .collect();
        if self.latent_rank >= self.d_lat {
            return map;
        }
        // restrict to a random latent subspace: map · Q Qᵀ, rescaled to keep the output energy
        let q = orthonormal_columns(&mut self.rng, self.d_lat, self.latent_rank);
        let r = self.latent_rank;
        let gain = (self.d_lat as f64 / r as f64).sqrt();
        let proj: Vec<f64> = (0..self.d_lat * self.d_lat)
            .map(|ij| {
                let (i, j) = (ij / self.d_lat, ij % self.d_lat);
                (0..r).map(|c| q[i * r + c] * q[j * r + c]).sum()
            })
            .collect();
        apply_matrix(&map, &proj, self.d_in, self.d_lat)
            .into_iter()
            .map(|v| v * gain)
            .collect()
    }
}

fn material_id(m: usize) -> String {
    format!("mat_{m:04}")
}

fn to_tensor(rows: &[Vec<f64>], cols: usize) -> Tensor<f32> {
    Tensor::from_vec(
        &[rows.len(), cols],
        rows.iter().flatten().map(|&v| v as f32).collect(),
    )
    .expect("rows have equal length")
}

/// In-memory generation; [`generate`] writes the result to disk.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<(Dataset, SplitAssignment)> {
    cfg.validate()?;
    let mut maps = CellMaps::new(cfg);
    let grid: Vec<Vec<f64>> = (0..cfg.n_env)
        .flat_map(|e| (0..cfg.n_shapes).map(move |s| (e, s)))
        .map(|(e, s)| maps.cell(e, s))
        .collect::<Vec<_>>();
    let mut basis_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    basis_rng.set_stream(3);
    let nuisance_basis = gaussian(&mut basis_rng, cfg.d_in * cfg.nuisance_rank, 1.0);

    let mut mat_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    mat_rng.set_stream(1);
    let latents: Vec<Vec<f64>> = (0..cfg.n_materials + cfg.unseen_materials)
        .map(|_| gaussian(&mut mat_rng, cfg.d_lat, 1.0))
        .collect();
    let mut materials = Vec::with_capacity(latents.len());
    for (m, z) in latents.iter().enumerate() {
        let rows: Vec<Vec<f64>> = grid
            .iter()
            .map(|a| {
                let noise = gaussian(&mut mat_rng, cfg.d_in, cfg.view_noise_sigma);
                let v: Vec<f64> = apply(a, z, cfg.d_in)
                    .iter()
                    .zip(&noise)
                    .map(|(x, n)| x + n)
                    .collect();
                normalize(&v)
            })
            .collect();
        materials.push(MaterialViewSet::new(
            material_id(m),
            cfg.n_env,
            cfg.n_shapes,
            cfg.d_in,
            to_tensor(&rows, cfg.d_in).into_data(),
        )?);
    }

    let mut part_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    part_rng.set_stream(2);
    let object_ids: Vec<String> = (0..cfg.n_objects).map(|o| format!("obj_{o:05}")).collect();
    let split = SplitAssignment {
        objects: split_objects(&object_ids, cfg.test_fraction, cfg.seed)?,
    };

    let mut parts = Vec::new();
    let make_part = |rng: &mut ChaCha8Rng, cell_map: &[f64], m: usize, nuisance: &[f64]| {
        let clean = normalize(&apply(cell_map, &latents[m], cfg.d_in));
        let noise = gaussian(rng, cfg.d_in, cfg.view_noise_sigma);
        let v: Vec<f64> = (0..cfg.d_in)
            .map(|i| clean[i] + cfg.part_nuisance_sigma * nuisance[i] + noise[i])
            .collect();
        normalize(&v).into_iter().map(|x| x as f32).collect::<Vec<f32>>()
    };

    for object_id in &object_ids {
        let weights = gaussian(&mut part_rng, cfg.nuisance_rank, 1.0);
        let nuisance: Vec<f64> = (0..cfg.d_in)
            .map(|i| {
                (0..cfg.nuisance_rank)
                    .map(|r| nuisance_basis[i * cfg.nuisance_rank + r] * weights[r])
                    .sum()
            })
            .collect();
        let object_split = split.get(object_id).expect("every object assigned");

        let pick_materials = |rng: &mut ChaCha8Rng, n: usize, pool: std::ops::Range<usize>| {
            // distinct materials within an object while the pool allows it
            let mut chosen: Vec<usize> = Vec::with_capacity(n);
            while chosen.len() < n {
                let m = rng.random_range(pool.clone());
                if chosen.len() >= pool.len() || !chosen.contains(&m) {
                    chosen.push(m);
                }
            }
            chosen
        };

        let mut k = 0;
        let seen = 0..cfg.n_materials;
        for m in pick_materials(&mut part_rng, cfg.parts_per_object, seen.clone()) {
            let cell = part_rng.random_range(0..grid.len());
            let descriptor = make_part(&mut part_rng, &grid[cell], m, &nuisance);
            parts.push(PartSample {
                sample_id: format!("{object_id}_p{k:02}"),
                object_id: object_id.clone(),
                truth_material_id: material_id(m),
                split: object_split,
                condition: Condition::Main,
                descriptor,
            });
            k += 1;
        }
        for (condition, available) in [
            (Condition::UnseenShapes, cfg.unseen_shapes),
            (Condition::UnseenLighting, cfg.unseen_envs),
            (Condition::UnseenMaterials, cfg.unseen_materials),
        ] {
            if available == 0 {
                continue;
            }
            let pool = match condition {
                Condition::UnseenMaterials => cfg.n_materials..cfg.n_materials + available,
                _ => seen.clone(),
            };
            for m in pick_materials(&mut part_rng, cfg.unseen_parts_per_object, pool) {
                let (env, shape) = match condition {
                    Condition::UnseenShapes => (
                        part_rng.random_range(0..cfg.n_env),
                        cfg.n_shapes + part_rng.random_range(0..available),
                    ),
                    Condition::UnseenLighting => (
                        cfg.n_env + part_rng.random_range(0..available),
                        part_rng.random_range(0..cfg.n_shapes),
                    ),
                    _ => (
                        part_rng.random_range(0..cfg.n_env),
                        part_rng.random_range(0..cfg.n_shapes),
                    ),
                };
                let map = if env < cfg.n_env && shape < cfg.n_shapes {
                    grid[env * cfg.n_shapes + shape].clone()
                } else {
                    maps.cell(env, shape)
                };
                let descriptor = make_part(&mut part_rng, &map, m, &nuisance);
                parts.push(PartSample {
                    sample_id: format!("{object_id}_p{k:02}"),
                    object_id: object_id.clone(),
                    truth_material_id: material_id(m),
                    split: object_split,
                    condition,
                    descriptor,
                });
                k += 1;
            }
        }
    }

    let dataset = Dataset::new(cfg.n_env, cfg.n_shapes, cfg.d_in, materials, parts)?;
    Ok((dataset, split))
}

/// Generates the dataset and writes manifest, view files, descriptors and split into `out_dir`.
pub fn generate(cfg: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    let (dataset, split) = generate_dataset(cfg)?;
    let manifest = write_dataset(&dataset, Some(cfg.clone()), Some(&split), out_dir)?;
    Ok(manifest)
}

/// Persists any dataset in manifest form.
pub fn write_dataset(
    dataset: &Dataset,
    synth: Option<SynthConfig>,
    split: Option<&SplitAssignment>,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let views_dir = out_dir.join("views");
    fs::create_dir_all(&views_dir).map_err(|e| Error::io(views_dir.display().to_string(), e))?;

    let mut materials = Vec::with_capacity(dataset.materials.len());
    for m in &dataset.materials {
        let rel = format!("views/{}.mceb", m.material_id);
        let t = Tensor::from_vec(&[m.n_views(), m.d_in], m.views.clone())?;
        write_matrix(&out_dir.join(&rel), &t)?;
        materials.push(MaterialRecord {
            id: m.material_id.clone(),
            views: rel,
        });
    }

    const PARTS_FILE: &str = "parts.mceb";
    let descriptors: Vec<f32> = dataset.parts.iter().flat_map(|p| p.descriptor.clone()).collect();
    write_matrix(
        &out_dir.join(PARTS_FILE),
        &Tensor::from_vec(&[dataset.parts.len(), dataset.d_in], descriptors)?,
    )?;
    let parts = dataset
        .parts
        .iter()
        .enumerate()
        .map(|(row, p)| PartRecord {
            sample_id: p.sample_id.clone(),
            object_id: p.object_id.clone(),
            truth_material_id: p.truth_material_id.clone(),
            split: p.split,
            condition: p.condition,
            descriptor: DescriptorRef {
                file: PARTS_FILE.into(),
                row,
            },
        })
        .collect();

    let split_file = match split {
        Some(s) => {
            write_split(s, &out_dir.join(SPLIT_FILE))?;
            Some(SPLIT_FILE.to_string())
        }
        None => None,
    };

    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        dims: GridDims {
            n_env: dataset.n_env,
            n_shapes: dataset.n_shapes,
            d_in: dataset.d_in,
        },
        synth,
        materials,
        parts,
        split_file,
    };
    let json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::SchemaError(e.to_string()))?;
    write_atomic(&out_dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

pub fn write_split(split: &SplitAssignment, path: &Path) -> Result<()> {
    let json = serde_json::to_vec_pretty(split).map_err(|e| Error::SchemaError(e.to_string()))?;
    write_atomic(path, &json)
}

pub fn read_split(path: &Path) -> Result<SplitAssignment> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::SchemaError(format!("{}: {e}", path.display())))
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.join(rel)
}

/// Reads a manifest and every array it references, validating shapes and finiteness.
pub fn load_manifest(path: &Path) -> Result<(DatasetManifest, Dataset)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let manifest: DatasetManifest = serde_json::from_slice(&bytes)
        .map_err(|e| Error::SchemaError(format!("{}: {e}", path.display())))?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::VersionMismatch {
            what: "manifest",
            expected: MANIFEST_SCHEMA_VERSION,
            found: manifest.schema_version,
        });
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let GridDims {
        n_env,
        n_shapes,
        d_in,
    } = manifest.dims;
    let n_views = n_env * n_shapes;

    let mut materials = Vec::with_capacity(manifest.materials.len());
    for rec in &manifest.materials {
        let file = resolve(base, &rec.views);
        let t = read_matrix(&file).map_err(|e| match e {
            Error::Io { source, .. } => {
                Error::io(format!("material {}: {}", rec.id, file.display()), source)
            }
            other => Error::ShapeMismatch(format!("material {}: {other}", rec.id)),
        })?;
        if t.rows() != n_views || t.cols() != d_in {
            return Err(Error::ShapeMismatch(format!(
                "material {}: view file is {}x{}, expected {n_views}x{d_in} ({n_env} envs x {n_shapes} shapes)",
                rec.id,
                t.rows(),
                t.cols()
            )));
        }
        materials.push(MaterialViewSet::new(
            rec.id.clone(),
            n_env,
            n_shapes,
            d_in,
            t.into_data(),
        )?);
    }

    let mut cache: std::collections::HashMap<String, Tensor<f32>> = Default::default();
    let mut parts = Vec::with_capacity(manifest.parts.len());
    for rec in &manifest.parts {
        if !cache.contains_key(&rec.descriptor.file) {
            let t = read_matrix(&resolve(base, &rec.descriptor.file))?;
            if t.cols() != d_in {
                return Err(Error::ShapeMismatch(format!(
                    "descriptor file {} has {} columns, expected {d_in}",
                    rec.descriptor.file,
                    t.cols()
                )));
            }
            cache.insert(rec.descriptor.file.clone(), t);
        }
        let t = &cache[&rec.descriptor.file];
        if rec.descriptor.row >= t.rows() {
            return Err(Error::ShapeMismatch(format!(
                "part {}: row {} outside descriptor file with {} rows",
                rec.sample_id,
                rec.descriptor.row,
                t.rows()
            )));
        }
        parts.push(PartSample {
            sample_id: rec.sample_id.clone(),
            object_id: rec.object_id.clone(),
            truth_material_id: rec.truth_material_id.clone(),
            split: rec.split,
            condition: rec.condition,
            descriptor: t.row(rec.descriptor.row).to_vec(),
        });
    }

    let mut dataset = Dataset::new(n_env, n_shapes, d_in, materials, parts)?;
    if let Some(split_file) = &manifest.split_file {
        dataset.apply_split(&read_split(&resolve(base, split_file))?)?;
    }
    Ok((manifest, dataset))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    load_manifest(path).map(|(_, d)| d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::norm;

    fn small() -> SynthConfig {
        SynthConfig {
            n_materials: 8,
            n_objects: 12,
            parts_per_object: 3,
            n_env: 7,
            n_shapes: 6,
            seed: 4,
            ..Default::default()
        }
    }

    #[test]
    fn grid_has_42_views_per_material() {
        let (ds, _) = generate_dataset(&small()).unwrap();
        assert!(ds.materials.iter().all(|m| m.n_views() == 42));
        assert_eq!(ds.parts.len(), 12 * 3);
        assert_eq!(ds.object_ids().len(), 12);
    }

    #[test]
    fn emitted_vectors_are_unit_norm() {
        let cfg = SynthConfig {
            unseen_shapes: 1,
            unseen_envs: 2,
            unseen_materials: 3,
            unseen_parts_per_object: 1,
            ..small()
        };
        let (ds, _) = generate_dataset(&cfg).unwrap();
        for m in &ds.materials {
            for v in 0..m.n_views() {
                assert!((norm(m.view(v)) - 1.0).abs() < 1e-6);
            }
        }
        for p in &ds.parts {
            assert!((norm(&p.descriptor) - 1.0).abs() < 1e-6);
        }
        let count = |c| ds.parts.iter().filter(|p| p.condition == c).count();
        assert_eq!(count(Condition::Main), 36);
        assert_eq!(count(Condition::UnseenShapes), 12);
        assert_eq!(count(Condition::UnseenLighting), 12);
        assert_eq!(count(Condition::UnseenMaterials), 12);
        assert_eq!(ds.materials.len(), 11);
        assert!(ds
            .parts
            .iter()
            .filter(|p| p.condition == Condition::UnseenMaterials)
            .all(|p| ds.material_index(&p.truth_material_id).unwrap() >= 8));
    }

    #[test]
    fn identity_maps_without_noise_collapse_views() {
        let cfg = SynthConfig {
            d_in: 16,
            d_lat: 16,
            view_noise_sigma: 0.0,
            identity_maps: true,
            ..small()
        };
        let (ds, _) = generate_dataset(&cfg).unwrap();
        // the latent is recoverable from stream 1 directly
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let z = gaussian(&mut rng, cfg.d_lat, 1.0);
        let want = normalize(&z);
        let m0 = &ds.materials[0];
        for v in 0..m0.n_views() {
            for (a, b) in m0.view(v).iter().zip(&want) {
                assert!((*a as f64 - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn same_seed_writes_identical_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate(&small(), a.path()).unwrap();
        generate(&small(), b.path()).unwrap();
        for rel in ["manifest.json", "parts.mceb", "split.json", "views/mat_0003.mceb"] {
            assert_eq!(
                fs::read(a.path().join(rel)).unwrap(),
                fs::read(b.path().join(rel)).unwrap(),
                "{rel}"
            );
        }
    }

    #[test]
    fn round_trip_preserves_records() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let (ds, _) = generate_dataset(&cfg).unwrap();
        generate(&cfg, dir.path()).unwrap();
        let (manifest, back) = load_manifest(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(manifest.synth.as_ref(), Some(&cfg));
        assert_eq!(back.materials, ds.materials);
        assert_eq!(back.parts, ds.parts);
    }

    #[test]
    fn missing_view_file_names_material() {
        let dir = tempfile::tempdir().unwrap();
        generate(&small(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("views/mat_0002.mceb")).unwrap();
        let err = load_manifest(&dir.path().join(MANIFEST_FILE)).unwrap_err();
        assert!(err.to_string().contains("mat_0002"), "{err}");
    }

    #[test]
    fn hand_built_manifest_enforces_grid() {
        let dir = tempfile::tempdir().unwrap();
        let views = Tensor::from_vec(&[6, 2], vec![0.6f32, 0.8, 1.0, 0.0, 0.0, 1.0, 0.6, 0.8, 1.0, 0.0, 0.0, 1.0]).unwrap();
        fs::create_dir_all(dir.path().join("views")).unwrap();
        write_matrix(&dir.path().join("views/m.mceb"), &views).unwrap();
        write_matrix(&dir.path().join("p.mceb"), &Tensor::from_vec(&[1, 2], vec![1.0f32, 0.0]).unwrap()).unwrap();
        let manifest = |n_env: usize, n_shapes: usize| {
            format!(
                r#"{{"schema_version":1,"dims":{{"n_env":{n_env},"n_shapes":{n_shapes},"d_in":2}},
                "materials":[{{"id":"m","views":"views/m.mceb"}}],
                "parts":[{{"sample_id":"s","object_id":"o","truth_material_id":"m","split":"test",
                           "descriptor":{{"file":"p.mceb","row":0}}}}]}}"#
            )
        };
        let path = dir.path().join(MANIFEST_FILE);
        fs::write(&path, manifest(3, 2)).unwrap();
        let (_, ds) = load_manifest(&path).unwrap();
        assert_eq!(ds.materials[0].n_views(), 6);
        assert_eq!(ds.parts[0].split, Split::Test);

        fs::write(&path, manifest(2, 2)).unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::ShapeMismatch(_))));

        fs::write(&path, r#"{"schema_version":1}"#).unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::SchemaError(_))));
    }
}
