//! Concept statistics per emotion category and per-image region reports.
//!
//! For category `c` and concept `i`: frequency `f = N / ΣN`, mean attention
//! `a`, weighted frequency `w = f·a`, then a TF-IDF score that separates
//! category-specific concepts from ones common to every category.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{build_graph_with, EmotionGraph};
use crate::ingestion::Sample;
use crate::io::write_atomic;
use crate::numerics::Matrix;
use crate::training::{forward, SolverModel};

/// `(category, concept)`
pub type CellKey = (usize, String);
pub type Table = BTreeMap<CellKey, f64>;

/// One counted object instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConceptObservation {
    pub category: usize,
    pub concept: String,
    pub attention: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Grouping {
    #[default]
    Gold,
    Predicted,
}

/// Runs the model over `samples` and records every object whose detector
/// confidence passes the model's threshold, with the attention weight the
/// forward pass assigned to it.
pub fn collect_observations(
    model: &SolverModel,
    samples: &[Sample],
    grouping: Grouping,
) -> Result<Vec<ConceptObservation>> {
    if !model.mode.use_objects {
        return Err(Error::Config(
            "concept statistics need a mode that uses objects".into(),
        ));
    }
    let tau = model.graph.tau;
    let mut out = Vec::new();
    for s in samples {
        let f = forward(model, s)?;
        let category = match grouping {
            Grouping::Gold => s.label,
            Grouping::Predicted => f.predicted(),
        };
        for (i, concept) in s.concepts.iter().enumerate() {
            if s.confidences[i] >= tau {
                out.push(ConceptObservation {
                    category,
                    concept: concept.clone(),
                    attention: f.attention[i],
                });
            }
        }
    }
    Ok(out)
}

pub fn object_counts(obs: &[ConceptObservation]) -> BTreeMap<CellKey, usize> {
    let mut counts = BTreeMap::new();
    for o in obs {
        *counts.entry((o.category, o.concept.clone())).or_insert(0) += 1;
    }
    counts
}

/// `f_{c,i} = N_{c,i} / Σ_i N_{c,i}`. Every listed category must own at least one observation.
pub fn object_frequency(obs: &[ConceptObservation], categories: &[usize]) -> Result<Table> {
    let counts = object_counts(obs);
    let mut totals: BTreeMap<usize, usize> = BTreeMap::new();
    for ((c, _), n) in &counts {
        *totals.entry(*c).or_insert(0) += n;
    }
    for c in categories {
        if !totals.contains_key(c) {
            return Err(Error::Empty(format!("category {c} has no counted objects")));
        }
    }
    Ok(counts
        .into_iter()
        .map(|((c, concept), n)| {
            let f = n as f64 / totals[&c] as f64;
            ((c, concept), f)
        })
        .collect())
}

/// Arithmetic mean of the attention over each cell's instances.
pub fn mean_attention(obs: &[ConceptObservation]) -> Table {
    let mut acc: BTreeMap<CellKey, (f64, usize)> = BTreeMap::new();
    for o in obs {
        let e = acc
            .entry((o.category, o.concept.clone()))
            .or_insert((0.0, 0));
        e.0 += o.attention;
        e.1 += 1;
    }
    acc.into_iter()
        .filter_map(|(k, (sum, n))| {
            let mean = sum / n as f64;
            if mean.is_finite() {
                Some((k, mean))
            } else {
                log::warn!("dropping cell {k:?}: non-finite attention");
                None
            }
        })
        .collect()
}

fn describe(key: &CellKey) -> String {
    format!("{}/{}", key.0, key.1)
}

/// Elementwise `f · a`; both tables must share the same keys.
pub fn weighted_frequency(f: &Table, a: &Table) -> Result<Table> {
    let missing: Vec<String> = f
        .keys()
        .filter(|k| !a.contains_key(*k))
        .chain(a.keys().filter(|k| !f.contains_key(*k)))
        .map(describe)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingKeys(missing));
    }
    Ok(f.iter().map(|(k, fv)| (k.clone(), fv * a[k])).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedConcept {
    pub concept: String,
    pub tf: f64,
    pub idf: f64,
    pub score: f64,
}

/// Per-category TF-IDF ranking of the weighted frequencies.
///
/// `tf = w / Σ_i w` within the category, `idf = ln((1+C)/(1+df)) + 1` with
/// `df` the number of categories where the concept occurs. Ties are broken
/// alphabetically.
pub fn tfidf_rank(w: &Table, top_k: usize) -> Result<BTreeMap<usize, Vec<RankedConcept>>> {
    if top_k == 0 {
        return Err(Error::Config("top_k must be at least 1".into()));
    }
    let categories: BTreeSet<usize> = w.keys().map(|(c, _)| *c).collect();
    let n_cat = categories.len() as f64;
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, concept) in w.keys() {
        *df.entry(concept.as_str()).or_insert(0) += 1;
    }
    let mut out = BTreeMap::new();
    for c in categories {
        let cells: Vec<(&String, f64)> = w
            .range((c, String::new())..)
            .take_while(|((k, _), _)| *k == c)
            .map(|((_, s), v)| (s, *v))
            .collect();
        let total: f64 = cells.iter().map(|(_, v)| v).sum();
        let mut ranked: Vec<RankedConcept> = cells
            .into_iter()
            .map(|(concept, v)| {
                let tf = if total > 0.0 { v / total } else { 0.0 };
                let idf = ((1.0 + n_cat) / (1.0 + df[concept.as_str()] as f64)).ln() + 1.0;
                RankedConcept {
                    concept: concept.clone(),
                    tf,
                    idf,
                    score: tf * idf,
                }
            })
            .collect();
        ranked.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.concept.cmp(&b.concept))
        });
        ranked.truncate(top_k);
        out.insert(c, ranked);
    }
    Ok(out)
}

/// One row of the concept table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConceptStats {
    pub category: usize,
    pub rank: usize,
    pub concept: String,
    pub count: usize,
    pub frequency: f64,
    pub attention: f64,
    pub weighted: f64,
    pub tfidf: f64,
}

/// Full pipeline from observations to ranked rows.
pub fn concept_table(
    obs: &[ConceptObservation],
    categories: &[usize],
    top_k: usize,
) -> Result<Vec<ConceptStats>> {
    let counts = object_counts(obs);
    let f = object_frequency(obs, categories)?;
    let a = mean_attention(obs);
    let w = weighted_frequency(&f, &a)?;
    let ranked = tfidf_rank(&w, top_k)?;
    let mut rows = Vec::new();
    for (c, list) in ranked {
        for (r, item) in list.into_iter().enumerate() {
            let key = (c, item.concept.clone());
            rows.push(ConceptStats {
                category: c,
                rank: r + 1,
                count: counts[&key],
                frequency: f[&key],
                attention: a[&key],
                weighted: w[&key],
                tfidf: item.score,
                concept: item.concept,
            });
        }
    }
    Ok(rows)
}

const TABLE_HEADER: &str = "\
# emotional concepts per category
# N: detections with confidence >= tau; f = N / sum_i N (within category)
# a: mean attention over those detections; w = f * a
# tfidf = tf * idf, tf = w / sum_i w (within category), idf = ln((1+C)/(1+df)) + 1
# df: number of categories containing the concept; ties ranked alphabetically
";

pub fn concept_table_csv(rows: &[ConceptStats]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["category", "rank", "concept", "N", "f", "a", "w", "tfidf"])
        .map_err(|e| Error::Config(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.category.to_string(),
            r.rank.to_string(),
            r.concept.clone(),
            r.count.to_string(),
            r.frequency.to_string(),
            r.attention.to_string(),
            r.weighted.to_string(),
            r.tfidf.to_string(),
        ])
        .map_err(|e| Error::Config(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(format!("{TABLE_HEADER}{}", String::from_utf8_lossy(&body)))
}

/// Writes `concepts_<category>.csv` per category and `concepts_all.csv`.
/// Returns the written paths.
pub fn write_concept_tables(dir: &Path, rows: &[ConceptStats]) -> Result<Vec<std::path::PathBuf>> {
    let mut paths = Vec::new();
    let categories: BTreeSet<usize> = rows.iter().map(|r| r.category).collect();
    for c in categories {
        let subset: Vec<ConceptStats> = rows.iter().filter(|r| r.category == c).cloned().collect();
        let path = dir.join(format!("concepts_{c}.csv"));
        write_atomic(&path, concept_table_csv(&subset)?.as_bytes())?;
        paths.push(path);
    }
    let path = dir.join("concepts_all.csv");
    write_atomic(&path, concept_table_csv(rows)?.as_bytes())?;
    paths.push(path);
    Ok(paths)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionRow {
    pub slot: usize,
    pub concept: String,
    pub confidence: f64,
    pub attention: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionReport {
    pub image_id: String,
    pub label: usize,
    pub predicted: usize,
    /// Active objects, highest attention first.
    pub rows: Vec<RegionRow>,
}

pub const EMPTY_REPORT_NOTE: &str = "no object passed the confidence threshold";

impl RegionReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "image {} label {} predicted {}",
            self.image_id, self.label, self.predicted
        );
        if self.rows.is_empty() {
            let _ = writeln!(out, "({EMPTY_REPORT_NOTE})");
            return out;
        }
        let _ = writeln!(out, "slot\tconcept\tconfidence\tattention");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.3}\t{:.3}",
                r.slot, r.concept, r.confidence, r.attention
            );
        }
        out
    }
}

/// Attention-ranked active objects of one image, taken from the same forward
/// pass the classifier uses.
pub fn region_report(model: &SolverModel, sample: &Sample) -> Result<RegionReport> {
    let f = forward(model, sample)?;
    let mut rows: Vec<RegionRow> = f
        .active
        .iter()
        .enumerate()
        .filter(|(_, &a)| a)
        .map(|(i, _)| RegionRow {
            slot: i,
            concept: sample.concepts[i].clone(),
            confidence: sample.confidences[i],
            attention: f.attention[i],
        })
        .collect();
    rows.sort_by(|a, b| {
        b.attention
            .total_cmp(&a.attention)
            .then(a.slot.cmp(&b.slot))
    });
    Ok(RegionReport {
        image_id: sample.image_id.clone(),
        label: sample.label,
        predicted: f.predicted(),
        rows,
    })
}

/// The graph the model builds for one sample under its own mode.
pub fn explain_graph(model: &SolverModel, sample: &Sample) -> Result<EmotionGraph> {
    Ok(build_graph_with(sample, &model.graph, &model.mode.graph_options())?.0)
}

/// Tab-separated matrix with a row/column header of slot indices.
pub fn render_matrix(m: &Matrix) -> String {
    let mut out = String::new();
    for j in 0..m.cols() {
        let _ = write!(out, "\t{j}");
    }
    out.push('\n');
    for i in 0..m.rows() {
        let _ = write!(out, "{i}");
        for j in 0..m.cols() {
            let _ = write!(out, "\t{:.4}", m[(i, j)] + 0.0);
        }
        out.push('\n');
    }
    out
}
