//! Exhaustive cosine retrieval, Top-k scoring and the evaluation harnesses.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Condition, Dataset, MaterialViewSet, PartSample, Split};
use crate::descriptor::cosine_sim;
use crate::encoder::{embed_material, embed_part, init_params, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::scalar::{norm, Scalar};
use crate::trainer::{train, TrainConfig};

/// Allowed deviation of a stored or query embedding from unit length.
pub const UNIT_NORM_TOL: f64 = 1e-5;

fn check_unit(v: &[f32]) -> Result<()> {
    let n = norm(v).as_f64();
    if (n - 1.0).abs() > UNIT_NORM_TOL || !n.is_finite() {
        return Err(Error::NonUnitNorm { norm: n });
    }
    Ok(())
}

/// Dot product accumulated in `f64`; the single scoring rule used by ranking and oracles.
pub fn score(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Descending score, then ascending id. Scores are finite; `-0.0` ties with `0.0`.
fn compare(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(b.0))
}

/// Top `k` of `(id, score)` pairs under the declared order.
pub fn rank_scores(ids: &[String], scores: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    let cmp = |&i: &usize, &j: &usize| compare((&ids[i], scores[i]), (&ids[j], scores[j]));
    let k = k.min(ids.len());
    if k < order.len() && k > 0 {
        order.select_nth_unstable_by(k - 1, cmp);
        order.truncate(k);
    }
    order.sort_by(cmp);
    order.truncate(k);
    order.into_iter().map(|i| (ids[i].clone(), scores[i])).collect()
}

/// Immutable id → unit embedding table.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialIndex {
    ids: Vec<String>,
    dim: usize,
    matrix: Vec<f32>,
}

impl MaterialIndex {
    pub fn build(pairs: Vec<(String, Vec<f32>)>) -> Result<Self> {
        let Some(dim) = pairs.first().map(|(_, v)| v.len()) else {
            return Err(Error::InvalidConfig("material index needs at least one entry".into()));
        };
        let mut seen = HashSet::with_capacity(pairs.len());
        let mut ids = Vec::with_capacity(pairs.len());
        let mut matrix = Vec::with_capacity(pairs.len() * dim);
        for (id, v) in pairs {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            check_unit(&v)?;
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            ids.push(id);
            matrix.extend(v);
        }
        Ok(Self { ids, dim, matrix })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    /// Exact top-`min(k, N)` materials for a unit query.
    pub fn rank(&self, query: &[f32], k: usize) -> Result<Vec<(String, f64)>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        check_unit(query)?;
        let scores: Vec<f64> = (0..self.len()).map(|i| score(self.row(i), query)).collect();
        Ok(rank_scores(&self.ids, &scores, k))
    }
}

pub fn build_index(pairs: Vec<(String, Vec<f32>)>) -> Result<MaterialIndex> {
    MaterialIndex::build(pairs)
}

/// Percentage of rankings whose truth appears within the first `k` entries.
pub fn topk_accuracy(rankings: &[Vec<(String, f64)>], truths: &[String], k: usize) -> Result<f64> {
    if rankings.len() != truths.len() {
        return Err(Error::LengthMismatch(format!(
            "{} rankings vs {} truths",
            rankings.len(),
            truths.len()
        )));
    }
    if rankings.is_empty() {
        return Err(Error::LengthMismatch("no rankings to score".into()));
    }
    let hits = rankings
        .iter()
        .zip(truths)
        .filter(|(r, t)| r.iter().take(k).any(|(id, _)| id == *t))
        .count();
    Ok(100.0 * hits as f64 / rankings.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Maximum cosine over the view grid.
    V1Max,
    /// Mean cosine over the view grid.
    V2Mean,
}

/// Raw-feature score of a part descriptor against a material's views.
pub fn baseline_score(part: &[f32], views: &MaterialViewSet, mode: BaselineMode) -> Result<f64> {
    if part.len() != views.d_in {
        return Err(Error::DimensionMismatch {
            expected: views.d_in,
            got: part.len(),
        });
    }
    let part: Vec<f64> = part.iter().map(|&x| x as f64).collect();
    let mut best = f64::NEG_INFINITY;
    let mut total = 0.0;
    for v in 0..views.n_views() {
        let view: Vec<f64> = views.view(v).iter().map(|&x| x as f64).collect();
        let c = cosine_sim(&part, &view)?;
        best = best.max(c);
        total += c;
    }
    Ok(match mode {
        BaselineMode::V1Max => best,
        BaselineMode::V2Mean => total / views.n_views() as f64,
    })
}

#[derive(Clone, Copy, Debug)]
pub enum Method<'a> {
    MatClip(&'a EncoderParams<f32>),
    Baseline(BaselineMode),
}

impl Method<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Method::MatClip(_) => "matclip",
            Method::Baseline(BaselineMode::V1Max) => "v1",
            Method::Baseline(BaselineMode::V2Mean) => "v2",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub condition: Condition,
    pub top1: f64,
    pub top5: f64,
    pub n: usize,
}

/// Ranks every part against all materials of the dataset.
fn rankings_for(method: Method<'_>, dataset: &Dataset, parts: &[&PartSample], k: usize) -> Result<Vec<Vec<(String, f64)>>> {
    match method {
        Method::MatClip(params) => {
            let pairs = dataset
                .materials
                .iter()
                .map(|m| Ok((m.material_id.clone(), embed_material(params, m)?)))
                .collect::<Result<Vec<_>>>()?;
            let index = MaterialIndex::build(pairs)?;
            parts
                .iter()
                .map(|p| index.rank(&embed_part(params, p)?, k))
                .collect()
        }
        Method::Baseline(mode) => {
            let ids: Vec<String> = dataset.materials.iter().map(|m| m.material_id.clone()).collect();
            parts
                .iter()
                .map(|p| {
                    let scores = dataset
                        .materials
                        .iter()
                        .map(|m| baseline_score(&p.descriptor, m, mode))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(rank_scores(&ids, &scores, k))
                })
                .collect()
        }
    }
}

/// Top-1 and Top-5 of one method over the parts of a split and condition.
pub fn evaluate(method: Method<'_>, dataset: &Dataset, split: Split, condition: Condition) -> Result<MetricsRow> {
    let parts: Vec<&PartSample> = dataset.parts_in(split, condition).collect();
    if parts.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no {split} parts under condition {}",
            condition.key()
        )));
    }
    let rankings = rankings_for(method, dataset, &parts, 5)?;
    let truths: Vec<String> = parts.iter().map(|p| p.truth_material_id.clone()).collect();
    Ok(MetricsRow {
        method: method.name().to_string(),
        condition,
        top1: topk_accuracy(&rankings, &truths, 1)?,
        top5: topk_accuracy(&rankings, &truths, 5)?,
        n: parts.len(),
    })
}

/// [`evaluate`] for every method over each condition that has parts in `split`.
pub fn evaluate_all(methods: &[Method<'_>], dataset: &Dataset, split: Split) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for method in methods {
        for condition in Condition::ALL {
            if dataset.parts_in(split, condition).next().is_some() {
                rows.push(evaluate(*method, dataset, split, condition)?);
            }
        }
    }
    Ok(rows)
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("method,condition,top1,top5,n\n");
    for r in rows {
        writeln!(out, "{},{},{:.4},{:.4},{}", r.method, r.condition.key(), r.top1, r.top5, r.n)
            .expect("writing to a String");
    }
    out
}

/// One row per method, a T-1/T-5 column pair per condition; absent cells show `-`.
pub fn metrics_markdown(rows: &[MetricsRow]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut cells: BTreeMap<(&str, Condition), &MetricsRow> = BTreeMap::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
        cells.insert((&r.method, r.condition), r);
    }
    let mut out = String::from("| Method |");
    for c in Condition::ALL {
        write!(out, " {} T-1 | {} T-5 |", c.label(), c.label()).unwrap();
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(2 * Condition::ALL.len()));
    out.push('\n');
    for m in methods {
        write!(out, "| {m} |").unwrap();
        for c in Condition::ALL {
            match cells.get(&(m, c)) {
                Some(r) => write!(out, " {:.2} | {:.2} |", r.top1, r.top5).unwrap(),
                None => out.push_str(" - | - |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Label for a `shapes × envs` sub-grid of an `n_shapes × n_env` grid.
pub fn ablation_label(shapes: usize, envs: usize, n_shapes: usize, n_env: usize) -> String {
    if shapes == n_shapes && envs == n_env {
        return "Full Model".into();
    }
    let s = match shapes {
        1 => "Plane Shape".to_string(),
        k if k == n_shapes => "All Shapes".to_string(),
        k => format!("{k} Shapes"),
    };
    let e = match envs {
        1 => "1 Environment Map".to_string(),
        k if k == n_env => "All Environment Maps".to_string(),
        k => format!("{k} Environment Maps"),
    };
    format!("{s}, {e}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub shapes: usize,
    pub envs: usize,
    pub top1: f64,
    pub top5: f64,
}

/// Retrains on each view sub-grid and scores held-out main-condition parts.
/// `encoder` supplies everything but `n_views`, which follows the subset.
pub fn ablate(
    train_config: &TrainConfig,
    encoder: EncoderConfig,
    init_seed: u64,
    dataset: &Dataset,
    subsets: &[(usize, usize)],
) -> Result<Vec<AblationRow>> {
    subsets
        .iter()
        .map(|&(shapes, envs)| {
            let restricted = dataset.restrict_views(shapes, envs)?;
            let config = EncoderConfig {
                n_views: shapes * envs,
                ..encoder
            };
            let trained = train(train_config, &restricted, init_params(config, init_seed)?)?;
            let row = evaluate(Method::MatClip(&trained.params), &restricted, Split::Test, Condition::Main)?;
            Ok(AblationRow {
                label: ablation_label(shapes, envs, dataset.n_shapes, dataset.n_env),
                shapes,
                envs,
                top1: row.top1,
                top5: row.top5,
            })
        })
        .collect()
}

pub fn ablation_markdown(rows: &[AblationRow]) -> String {
    let mut out = String::from("| Model | Top-1 | Top-5 |\n|---|---:|---:|\n");
    for r in rows {
        writeln!(out, "| {} | {:.2} | {:.2} |", r.label, r.top1, r.top5).unwrap();
    }
    out
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("label,shapes,envs,top1,top5\n");
    for r in rows {
        writeln!(out, "\"{}\",{},{},{:.4},{:.4}", r.label, r.shapes, r.envs, r.top1, r.top5).unwrap();
    }
    out
}
