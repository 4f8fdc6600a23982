//! Word-vector tables in the common `token f1 f2 ... fd` text layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};
use crate::numerics::Matrix;

use super::records::{DetectionRecord, PAD_CONCEPT};

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

/// Outcome of embedding one slot's concept.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lookup {
    /// Whole concept, or at least one of its tokens, was found.
    Known,
    /// Nothing found and unknowns were allowed: zero vector, slot inactive.
    Unknown,
    Padding,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::shape("embedding", (self.dim, 1), (vector.len(), 1)));
        }
        self.vectors.insert(token.into(), vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    /// Parses the text layout. With `dim = None` the width of the first line
    /// fixes the dimension.
    pub fn parse(text: &str, dim: Option<usize>) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = dim.map(EmbeddingTable::new);
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            let values = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|e| Error::Parse {
                        line: line_no,
                        message: format!("bad number {f:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(x) = values.iter().find(|x| !x.is_finite()) {
                return Err(Error::at_line(
                    line_no,
                    Error::Numeric(format!("{token}: {x}")),
                ));
            }
            let t = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
            t.insert(token, values)
                .map_err(|e| Error::at_line(line_no, e))?;
        }
        table.ok_or_else(|| Error::Empty("embedding table".into()))
    }

    pub fn load(path: &Path, dim: Option<usize>) -> Result<Self> {
        Self::parse(&read_to_string(path)?, dim)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (token, v) in &self.vectors {
            out.push_str(token);
            for x in v {
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    /// Embeds one concept string.
    ///
    /// An exact entry wins; otherwise the concept is split on spaces and
    /// underscores and the known token vectors are averaged.
    pub fn embed(&self, concept: &str, allow_unknown: bool) -> Result<(Vec<f64>, Lookup)> {
        if concept == PAD_CONCEPT {
            return Ok((vec![0.0; self.dim], Lookup::Padding));
        }
        if let Some(v) = self.get(concept) {
            return Ok((v.to_vec(), Lookup::Known));
        }
        let mut sum = vec![0.0; self.dim];
        let mut found = 0usize;
        for token in concept.split(|c: char| c.is_whitespace() || c == '_') {
            if let Some(v) = self.get(token) {
                crate::numerics::axpy(1.0, v, &mut sum);
                found += 1;
            }
        }
        if found > 0 {
            let k = found as f64;
            sum.iter_mut().for_each(|x| *x /= k);
            return Ok((sum, Lookup::Known));
        }
        if allow_unknown {
            Ok((vec![0.0; self.dim], Lookup::Unknown))
        } else {
            Err(Error::UnknownConcept(concept.to_string()))
        }
    }
}

/// Semantic node matrix `O` (`N x d2`): row `i` embeds slot `i`'s concept.
pub fn embed_concepts(
    record: &DetectionRecord,
    table: &EmbeddingTable,
    allow_unknown: bool,
) -> Result<(Matrix, Vec<Lookup>)> {
    let mut o = Matrix::zeros(record.objects.len(), table.dim());
    let mut lookups = Vec::with_capacity(record.objects.len());
    for (i, slot) in record.objects.iter().enumerate() {
        let (v, lookup) = table.embed(&slot.concept, allow_unknown)?;
        o.row_mut(i).copy_from_slice(&v);
        lookups.push(lookup);
    }
    Ok((o, lookups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::records::ObjectSlot;

    fn record(concepts: &[&str]) -> DetectionRecord {
        DetectionRecord {
            image_id: "x".into(),
            label: 0,
            scene: None,
            objects: concepts
                .iter()
                .map(|c| ObjectSlot {
                    concept: c.to_string(),
                    confidence: 0.5,
                    visual: vec![0.0],
                    attribute: None,
                })
                .collect(),
        }
    }

    fn table() -> EmbeddingTable {
        EmbeddingTable::parse("dog 1 0 2\nstop 1 2 3\nsign 3 -2 5\ncat 0 1 0\n", None).unwrap()
    }

    #[test]
    fn same_concept_everywhere() {
        let (o, _) = embed_concepts(&record(&["dog"; 4]), &table(), false).unwrap();
        for i in 0..4 {
            assert_eq!(o.row(i), &[1.0, 0.0, 2.0]);
        }
    }

    #[test]
    fn multi_token_mean() {
        let (v, lookup) = table().embed("stop sign", false).unwrap();
        // hand-computed: ((1+3)/2, (2-2)/2, (3+5)/2)
        assert_eq!(v, vec![2.0, 0.0, 4.0]);
        assert_eq!(lookup, Lookup::Known);
        let (v, _) = table().embed("stop_unicorn", false).unwrap();
        assert_eq!(v, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn unknown_concept() {
        let err = table().embed("unicorn", false).unwrap_err();
        assert!(err.to_string().contains("unicorn"));
        let (v, lookup) = table().embed("unicorn", true).unwrap();
        assert_eq!(v, vec![0.0; 3]);
        assert_eq!(lookup, Lookup::Unknown);
    }

    #[test]
    fn permutation_and_locality() {
        let t = table();
        let (o, _) = embed_concepts(&record(&["dog", "cat", "stop sign"]), &t, false).unwrap();
        let (p, _) = embed_concepts(&record(&["stop sign", "dog", "cat"]), &t, false).unwrap();
        assert_eq!(p, o.permute_rows(&[2, 0, 1]));
        let (q, _) = embed_concepts(&record(&["dog", "sign", "stop sign"]), &t, false).unwrap();
        assert_eq!(q.row(0), o.row(0));
        assert_eq!(q.row(2), o.row(2));
    }

    #[test]
    fn ragged_table_is_rejected() {
        let err = EmbeddingTable::parse("a 1 2\nb 1 2 3\n", None).unwrap_err();
        assert!(matches!(err, Error::AtLine { line: 2, .. }));
        let err = EmbeddingTable::parse("a 1 x\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn text_round_trip() {
        let mut t = EmbeddingTable::new(2);
        t.insert("a", vec![0.1 + 0.2, -1e-300]).unwrap();
        t.insert("b", vec![std::f64::consts::PI, 7.0]).unwrap();
        assert_eq!(EmbeddingTable::parse(&t.to_text(), Some(2)).unwrap(), t);
    }
}
