//! In-memory dataset: per-material view sets and masked part samples.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Rendering condition a part sample was drawn under.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Same environments and shapes as the material view grid.
    #[default]
    Main,
    /// A base shape that never appears in the view grid.
    UnseenShapes,
    /// An environment that never appears in the view grid.
    UnseenLighting,
    /// A material that never appears in any training pair.
    UnseenMaterials,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Main,
        Condition::UnseenShapes,
        Condition::UnseenLighting,
        Condition::UnseenMaterials,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Condition::Main => "Main Evaluation",
            Condition::UnseenShapes => "Unseen Shapes",
            Condition::UnseenLighting => "Unseen Lighting",
            Condition::UnseenMaterials => "Unseen Materials",
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            Condition::Main => "main",
            Condition::UnseenShapes => "unseen_shapes",
            Condition::UnseenLighting => "unseen_lighting",
            Condition::UnseenMaterials => "unseen_materials",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.key() == key)
    }
}

/// One material's `V × D_in` view features, ordered environment-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialViewSet {
    pub material_id: String,
    pub n_env: usize,
    pub n_shapes: usize,
    pub d_in: usize,
    /// Row `e * n_shapes + s` holds the view under environment `e` and shape `s`.
    pub views: Vec<f32>,
}

impl MaterialViewSet {
    pub fn new(
        material_id: impl Into<String>,
        n_env: usize,
        n_shapes: usize,
        d_in: usize,
        views: Vec<f32>,
    ) -> Result<Self> {
        let material_id = material_id.into();
        if n_env == 0 || n_shapes == 0 || d_in == 0 {
            return Err(Error::ShapeMismatch(format!(
                "material {material_id}: empty view grid"
            )));
        }
        if views.len() != n_env * n_shapes * d_in {
            return Err(Error::ShapeMismatch(format!(
                "material {material_id}: expected {}x{} views, got {} values",
                n_env * n_shapes,
                d_in,
                views.len()
            )));
        }
        if views.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch(format!(
                "material {material_id}: non-finite view feature"
            )));
        }
        Ok(Self {
            material_id,
            n_env,
            n_shapes,
            d_in,
            views,
        })
    }

    pub fn n_views(&self) -> usize {
        self.n_env * self.n_shapes
    }

    pub fn view(&self, i: usize) -> &[f32] {
        &self.views[i * self.d_in..(i + 1) * self.d_in]
    }

    pub fn cell(&self, env: usize, shape: usize) -> &[f32] {
        self.view(env * self.n_shapes + shape)
    }

    /// Keeps the first `shapes` shapes under the first `envs` environments.
    pub fn restrict(&self, shapes: usize, envs: usize) -> Result<Self> {
        if shapes == 0 || envs == 0 || shapes > self.n_shapes || envs > self.n_env {
            return Err(Error::InvalidConfig(format!(
                "subset {shapes} shapes x {envs} envs outside {}x{} grid",
                self.n_shapes, self.n_env
            )));
        }
        let mut views = Vec::with_capacity(shapes * envs * self.d_in);
        for e in 0..envs {
            for s in 0..shapes {
                views.extend_from_slice(self.cell(e, s));
            }
        }
        Self::new(self.material_id.clone(), envs, shapes, self.d_in, views)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartSample {
    pub sample_id: String,
    pub object_id: String,
    pub truth_material_id: String,
    pub split: Split,
    pub condition: Condition,
    pub descriptor: Vec<f32>,
}

/// Object id → split side.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub objects: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn get(&self, object_id: &str) -> Option<Split> {
        self.objects.get(object_id).copied()
    }

    pub fn count(&self, split: Split) -> usize {
        self.objects.values().filter(|&&s| s == split).count()
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub n_env: usize,
    pub n_shapes: usize,
    pub d_in: usize,
    pub materials: Vec<MaterialViewSet>,
    pub parts: Vec<PartSample>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(
        n_env: usize,
        n_shapes: usize,
        d_in: usize,
        materials: Vec<MaterialViewSet>,
        parts: Vec<PartSample>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(materials.len());
        for (i, m) in materials.iter().enumerate() {
            if m.n_env != n_env || m.n_shapes != n_shapes || m.d_in != d_in {
                return Err(Error::ShapeMismatch(format!(
                    "material {}: grid {}x{}x{} does not match dataset {}x{}x{}",
                    m.material_id, m.n_env, m.n_shapes, m.d_in, n_env, n_shapes, d_in
                )));
            }
            if index.insert(m.material_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(m.material_id.clone()));
            }
        }
        for p in &parts {
            if !index.contains_key(&p.truth_material_id) {
                return Err(Error::UnknownMaterial(p.truth_material_id.clone()));
            }
            if p.descriptor.len() != d_in {
                return Err(Error::ShapeMismatch(format!(
                    "part {}: descriptor length {} != {d_in}",
                    p.sample_id,
                    p.descriptor.len()
                )));
            }
            if p.descriptor.iter().any(|v| !v.is_finite()) {
                return Err(Error::ShapeMismatch(format!(
                    "part {}: non-finite descriptor",
                    p.sample_id
                )));
            }
        }
        Ok(Self {
            n_env,
            n_shapes,
            d_in,
            materials,
            parts,
            index,
        })
    }

    pub fn n_views(&self) -> usize {
        self.n_env * self.n_shapes
    }

    pub fn material(&self, id: &str) -> Option<&MaterialViewSet> {
        self.index.get(id).map(|&i| &self.materials[i])
    }

    pub fn material_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Sorted, de-duplicated object ids.
    pub fn object_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.parts.iter().map(|p| p.object_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn apply_split(&mut self, assignment: &SplitAssignment) -> Result<()> {
        for p in &self.parts {
            if assignment.get(&p.object_id).is_none() {
                return Err(Error::SchemaError(format!(
                    "split file does not assign object {}",
                    p.object_id
                )));
            }
        }
        for p in &mut self.parts {
            p.split = assignment.get(&p.object_id).expect("checked above");
        }
        Ok(())
    }

    pub fn parts_in(&self, split: Split, condition: Condition) -> impl Iterator<Item = &PartSample> {
        self.parts
            .iter()
            .filter(move |p| p.split == split && p.condition == condition)
    }

    /// Same dataset with every material's view grid cut down to a sub-grid.
    pub fn restrict_views(&self, shapes: usize, envs: usize) -> Result<Self> {
        let materials = self
            .materials
            .iter()
            .map(|m| m.restrict(shapes, envs))
            .collect::<Result<Vec<_>>>()?;
        Self::new(envs, shapes, self.d_in, materials, self.parts.clone())
    }
}
