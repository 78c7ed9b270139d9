//! Knowledge graph data model: vocabularies, split triple lists, reverse
//! relation augmentation and the filter index used for filtered ranking.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split `{other}`"))),
        }
    }
}

/// A tail-prediction query `(head, relation, ?)` with its gold answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub head: usize,
    pub relation: usize,
    pub target: usize,
}

impl From<Triple> for Query {
    fn from(t: Triple) -> Self {
        Self {
            head: t.head,
            relation: t.relation,
            target: t.tail,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), i);
        i
    }

    fn push_new(&mut self, name: String) -> usize {
        let i = self.names.len();
        self.index.insert(name.clone(), i);
        self.names.push(name);
        i
    }
}

/// Entities, relations and the three split triple lists.
///
/// Indices are dense and assigned in first-appearance order over train,
/// then valid, then test. The graph is immutable once loaded except for the
/// one-shot [`KnowledgeGraph::add_reverse_relations`].
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    reverse_augmented: bool,
}

impl KnowledgeGraph {
    /// Build a graph directly from index triples. Entity and relation names
    /// are the decimal indices.
    pub fn from_triples(
        num_entities: usize,
        num_relations: usize,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        let mut kg = KnowledgeGraph::default();
        for i in 0..num_entities {
            kg.entities.intern(&i.to_string());
        }
        for i in 0..num_relations {
            kg.relations.intern(&i.to_string());
        }
        kg.train = train;
        kg.valid = valid;
        kg.test = test;
        kg.validate()?;
        Ok(kg)
    }

    fn validate(&self) -> Result<()> {
        let mut seen: HashMap<Triple, Split> = HashMap::new();
        for split in Split::ALL {
            for t in self.split(split) {
                for (what, index, len) in [
                    ("entity", t.head, self.num_entities()),
                    ("relation", t.relation, self.num_relations()),
                    ("entity", t.tail, self.num_entities()),
                ] {
                    if index >= len {
                        return Err(Error::IndexOutOfRange { what, index, len });
                    }
                }
                if let Some(&other) = seen.get(t) {
                    if other != split {
                        return Err(Error::InvalidConfig(format!(
                            "triple {t:?} appears in both {} and {}",
                            other.name(),
                            split.name()
                        )));
                    }
                }
                seen.insert(*t, split);
            }
        }
        Ok(())
    }

    pub fn num_entities(&self) -> usize {
        self.entities.names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.names.len()
    }

    pub fn entity_name(&self, i: usize) -> &str {
        &self.entities.names[i]
    }

    pub fn relation_name(&self, i: usize) -> &str {
        &self.relations.names[i]
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entities.index.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relations.index.get(name).copied()
    }

    pub fn is_reverse_augmented(&self) -> bool {
        self.reverse_augmented
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut Vec<Triple> {
        match split {
            Split::Train => &mut self.train,
            Split::Valid => &mut self.valid,
            Split::Test => &mut self.test,
        }
    }

    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    /// Number of relations before augmentation.
    pub fn num_base_relations(&self) -> usize {
        if self.reverse_augmented {
            self.num_relations() / 2
        } else {
            self.num_relations()
        }
    }

    /// Index of the inverse of `relation` in an augmented graph.
    pub fn inverse_relation(&self, relation: usize) -> Option<usize> {
        if !self.reverse_augmented {
            return None;
        }
        let half = self.num_relations() / 2;
        Some(if relation < half {
            relation + half
        } else {
            relation - half
        })
    }

    /// Double the relation vocabulary and append `(t, r + |R|, h)` for every
    /// `(h, r, t)` to the same split.
    pub fn add_reverse_relations(mut self) -> Result<Self> {
        if self.reverse_augmented {
            return Err(Error::AlreadyAugmented);
        }
        let base = self.num_relations();
        for r in 0..base {
            let name = format!("{}_reverse", self.relations.names[r]);
            self.relations.push_new(name);
        }
        for split in Split::ALL {
            let list = self.split_mut(split);
            let n = list.len();
            list.reserve(n);
            for i in 0..n {
                let t = list[i];
                list.push(Triple::new(t.tail, t.relation + base, t.head));
            }
        }
        self.reverse_augmented = true;
        Ok(self)
    }

    /// One tail-prediction query per triple of the split. After augmentation
    /// this covers both the head and tail direction of every original fact.
    pub fn queries(&self, split: Split) -> Result<Vec<Query>> {
        if !self.reverse_augmented {
            return Err(Error::NotAugmented);
        }
        Ok(self.split(split).iter().copied().map(Query::from).collect())
    }

    /// Render a split as `head<sep>relation<sep>tail` lines.
    pub fn to_triple_lines(&self, split: Split, separator: char) -> String {
        let mut out = String::new();
        for t in self.split(split) {
            let _ = writeln!(
                out,
                "{}{separator}{}{separator}{}",
                self.entity_name(t.head),
                self.relation_name(t.relation),
                self.entity_name(t.tail)
            );
        }
        out
    }
}

/// Incremental loader that shares vocabularies across split files.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    kg: KnowledgeGraph,
    seen: HashMap<Triple, Split>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_file(&mut self, split: Split, path: &Path, separator: char) -> Result<&mut Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        self.add_text(split, &text, separator)
            .map_err(|(line, message)| Error::Parse {
                path: path.to_owned(),
                line,
                message,
            })?;
        Ok(self)
    }

    /// Parse triples from text. Errors carry the 1-based line number.
    pub fn add_text(
        &mut self,
        split: Split,
        text: &str,
        separator: char,
    ) -> std::result::Result<&mut Self, (usize, String)> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(separator).collect();
            if fields.len() != 3 {
                return Err((
                    lineno + 1,
                    format!("expected 3 fields, found {}", fields.len()),
                ));
            }
            if fields.iter().any(|f| f.is_empty()) {
                return Err((lineno + 1, "empty field".to_owned()));
            }
            let head = self.kg.entities.intern(fields[0]);
            let relation = self.kg.relations.intern(fields[1]);
            let tail = self.kg.entities.intern(fields[2]);
            let t = Triple::new(head, relation, tail);
            if let Some(&other) = self.seen.get(&t) {
                if other != split {
                    return Err((
                        lineno + 1,
                        format!("triple already present in {} split", other.name()),
                    ));
                }
            }
            self.seen.insert(t, split);
            self.kg.split_mut(split).push(t);
        }
        Ok(self)
    }

    pub fn build(self) -> KnowledgeGraph {
        self.kg
    }
}

/// Load a single triple file as the training split.
pub fn load_triples(path: &Path, separator: char) -> Result<KnowledgeGraph> {
    let mut b = GraphBuilder::new();
    b.add_file(Split::Train, path, separator)?;
    Ok(b.build())
}

/// Load train / valid / test files in that order so indices follow
/// first appearance across all three.
pub fn load_dataset(
    train: &Path,
    valid: Option<&Path>,
    test: Option<&Path>,
    separator: char,
) -> Result<KnowledgeGraph> {
    let mut b = GraphBuilder::new();
    b.add_file(Split::Train, train, separator)?;
    if let Some(p) = valid {
        b.add_file(Split::Valid, p, separator)?;
    }
    if let Some(p) = test {
        b.add_file(Split::Test, p, separator)?;
    }
    Ok(b.build())
}

/// Known true tails for every `(head, relation)` across all splits.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    tails: HashMap<(usize, usize), Vec<usize>>,
}

impl FilterIndex {
    pub fn build(kg: &KnowledgeGraph) -> Result<Self> {
        if !kg.is_reverse_augmented() {
            return Err(Error::NotAugmented);
        }
        Ok(Self::from_triples(kg.all_triples().copied()))
    }

    /// Build from any triple source; no augmentation requirement.
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut tails: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for t in triples {
            tails.entry((t.head, t.relation)).or_default().push(t.tail);
        }
        for v in tails.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        Self { tails }
    }

    /// Sorted known tails; empty for unknown pairs.
    pub fn tails(&self, head: usize, relation: usize) -> &[usize] {
        self.tails
            .get(&(head, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn contains(&self, t: Triple) -> bool {
        self.tails(t.head, t.relation).binary_search(&t.tail).is_ok()
    }

    pub fn len(&self) -> usize {
        self.tails.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tails.is_empty()
    }
}

/// Adjacency over a set of splits: `(head, relation) -> tails`.
pub(crate) fn adjacency<'a>(
    triples: impl IntoIterator<Item = &'a Triple>,
) -> HashMap<(usize, usize), HashSet<usize>> {
    let mut adj: HashMap<(usize, usize), HashSet<usize>> = HashMap::new();
    for t in triples {
        adj.entry((t.head, t.relation)).or_default().insert(t.tail);
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(train: &str) -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        b.add_text(Split::Train, train, '\t').unwrap();
        b.build()
    }

    #[test]
    fn counts_small_file() {
        let kg = parse("a\tr\tb\nb\tr\tc\na\ts\tc\n");
        assert_eq!(kg.num_entities(), 3);
        assert_eq!(kg.num_relations(), 2);
        assert_eq!(kg.split(Split::Train).len(), 3);
        assert!(!kg.is_reverse_augmented());
    }

    #[test]
    fn empty_input() {
        let kg = parse("");
        assert_eq!(kg.num_entities(), 0);
        assert_eq!(kg.num_relations(), 0);
        assert!(kg.split(Split::Train).is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let mut b = GraphBuilder::new();
        let err = b.add_text(Split::Train, "a\tr\tb\n\na\tb\n", '\t').unwrap_err();
        assert_eq!(err.0, 3);
    }

    #[test]
    fn custom_separator() {
        let mut b = GraphBuilder::new();
        b.add_text(Split::Train, "a,r,b\n", ',').unwrap();
        assert_eq!(b.build().num_entities(), 2);
    }

    #[test]
    fn valid_only_entities_are_admitted() {
        let mut b = GraphBuilder::new();
        b.add_text(Split::Train, "a\tr\tb\n", '\t').unwrap();
        b.add_text(Split::Valid, "c\tq\td\n", '\t').unwrap();
        let kg = b.build();
        assert_eq!(kg.entity_id("c"), Some(2));
        assert_eq!(kg.relation_id("q"), Some(1));
    }

    #[test]
    fn cross_split_duplicate_rejected() {
        let mut b = GraphBuilder::new();
        b.add_text(Split::Train, "a\tr\tb\n", '\t').unwrap();
        assert!(b.add_text(Split::Test, "a\tr\tb\n", '\t').is_err());
    }

    #[test]
    fn missing_file() {
        let err = load_triples(Path::new("/nonexistent/triples.txt"), '\t').unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn reverse_doubles() {
        let kg = parse("a\tr\tb\nb\tr\tc\na\ts\tc\n")
            .add_reverse_relations()
            .unwrap();
        assert_eq!(kg.num_relations(), 4);
        assert_eq!(kg.split(Split::Train).len(), 6);
        // (a, r0, b) -> (b, r2, a)
        assert!(kg.split(Split::Train).contains(&Triple::new(1, 2, 0)));
        assert_eq!(kg.inverse_relation(0), Some(2));
        assert_eq!(kg.inverse_relation(3), Some(1));
        assert!(matches!(
            kg.add_reverse_relations(),
            Err(Error::AlreadyAugmented)
        ));
    }

    #[test]
    fn filter_index_semantics() {
        let kg = KnowledgeGraph::from_triples(
            3,
            1,
            vec![Triple::new(0, 0, 1), Triple::new(0, 0, 1)],
            vec![],
            vec![Triple::new(0, 0, 2)],
        )
        .unwrap()
        .add_reverse_relations()
        .unwrap();
        let f = FilterIndex::build(&kg).unwrap();
        assert_eq!(f.tails(0, 0), &[1, 2]);
        assert_eq!(f.tails(1, 1), &[0]);
        assert!(f.tails(2, 0).is_empty());
    }

    #[test]
    fn filter_requires_augmentation() {
        let kg = parse("a\tr\tb\n");
        assert!(matches!(FilterIndex::build(&kg), Err(Error::NotAugmented)));
    }

    #[test]
    fn two_queries_per_fact() {
        let triples: Vec<Triple> = (0..10).map(|i| Triple::new(i, 0, i + 1)).collect();
        let kg = KnowledgeGraph::from_triples(11, 1, vec![], vec![], triples)
            .unwrap()
            .add_reverse_relations()
            .unwrap();
        let qs = kg.queries(Split::Test).unwrap();
        assert_eq!(qs.len(), 20);
        for (q, t) in qs.iter().zip(kg.split(Split::Test)) {
            assert_eq!(q.target, t.tail);
        }
    }

    #[test]
    fn out_of_range_rejected() {
        let err = KnowledgeGraph::from_triples(2, 1, vec![Triple::new(0, 0, 5)], vec![], vec![]);
        assert!(matches!(err, Err(Error::IndexOutOfRange { .. })));
    }
}
