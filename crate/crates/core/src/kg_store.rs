//! Triple files, vocabularies and the filter index used by filtered ranking.
//!
//! Datasets follow the usual benchmark layout: a directory with `train.txt`,
//! `valid.txt` and `test.txt`, one `head\trelation\ttail` triple per line.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bijection between symbol names and dense ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    entities: IndexSet<String>,
    relations: IndexSet<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary from name lists, ids following list order.
    pub fn from_names<E, R>(entities: E, relations: R) -> Result<Self>
    where
        E: IntoIterator,
        E::Item: Into<String>,
        R: IntoIterator,
        R::Item: Into<String>,
    {
        let mut vocab = Self::new();
        for name in entities {
            let name = name.into();
            if !vocab.entities.insert(name.clone()) {
                return Err(Error::Vocabulary(format!("duplicate entity '{name}'")));
            }
        }
        for name in relations {
            let name = name.into();
            if !vocab.relations.insert(name.clone()) {
                return Err(Error::Vocabulary(format!("duplicate relation '{name}'")));
            }
        }
        Ok(vocab)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entities.get_index_of(name)
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relations.get_index_of(name)
    }

    pub fn entity_name(&self, id: usize) -> Option<&str> {
        self.entities.get_index(id).map(String::as_str)
    }

    pub fn relation_name(&self, id: usize) -> Option<&str> {
        self.relations.get_index(id).map(String::as_str)
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(String::as_str)
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.relations.iter().map(String::as_str)
    }

    /// Decodes a triple back into its symbol names.
    pub fn decode(&self, triple: Triple) -> Option<(&str, &str, &str)> {
        Some((
            self.entity_name(triple.head)?,
            self.relation_name(triple.relation)?,
            self.entity_name(triple.tail)?,
        ))
    }

    fn encode(&mut self, head: &str, relation: &str, tail: &str, mode: VocabMode) -> Result<Triple> {
        match mode {
            VocabMode::Extend => {
                let head = self.entities.insert_full(head.to_owned()).0;
                let relation = self.relations.insert_full(relation.to_owned()).0;
                let tail = self.entities.insert_full(tail.to_owned()).0;
                Ok(Triple::new(head, relation, tail))
            }
            VocabMode::Strict => {
                let entity = |name: &str| {
                    self.entity_id(name)
                        .ok_or_else(|| Error::Vocabulary(format!("unknown entity '{name}'")))
                };
                let head = entity(head)?;
                let tail = entity(tail)?;
                let relation = self
                    .relation_id(relation)
                    .ok_or_else(|| Error::Vocabulary(format!("unknown relation '{relation}'")))?;
                Ok(Triple::new(head, relation, tail))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub const fn new(head: usize, relation: usize, tail: usize) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// Whether unseen symbols may be added to a vocabulary while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabMode {
    Extend,
    Strict,
}

#[derive(Debug, Clone)]
pub struct LoadedTriples {
    pub triples: Vec<Triple>,
    pub vocab: Vocabulary,
    /// Exact repeats of an earlier line in the same file, dropped.
    pub duplicates: usize,
}

/// Reads one triple file. Without a vocabulary a fresh one is built in order
/// of first appearance.
pub fn load_triples(path: &Path, vocab: Option<Vocabulary>, mode: VocabMode) -> Result<LoadedTriples> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_triples(BufReader::new(file), path, vocab, mode)
}

/// Same as [`load_triples`] over any buffered reader; `source` is only used in
/// error messages.
pub fn parse_triples<R: BufRead>(
    reader: R,
    source: &Path,
    vocab: Option<Vocabulary>,
    mode: VocabMode,
) -> Result<LoadedTriples> {
    let mut vocab = vocab.unwrap_or_default();
    let mut seen = HashSet::new();
    let mut triples = Vec::new();
    let mut duplicates = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: source.to_path_buf(),
                line: line_no,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if let Some(pos) = fields.iter().position(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: source.to_path_buf(),
                line: line_no,
                message: format!("field {} is empty", pos + 1),
            });
        }
        let triple = vocab.encode(fields[0], fields[1], fields[2], mode)?;
        if seen.insert(triple) {
            triples.push(triple);
        } else {
            duplicates += 1;
        }
    }
    Ok(LoadedTriples {
        triples,
        vocab,
        duplicates,
    })
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

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.txt",
            Split::Valid => "valid.txt",
            Split::Test => "test.txt",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!(
                "unknown split '{other}', expected train, valid or test"
            ))),
        }
    }
}

/// Symbol lists shipped with some benchmark copies. They name every entity of
/// the original graph, including ones that appear in no split.
const DICTIONARIES: [(&str, &str, DictLayout); 2] = [
    ("entities.dict", "relations.dict", DictLayout::IdFirst),
    ("entity2id.txt", "relation2id.txt", DictLayout::NameFirst),
];

#[derive(Debug, Clone, Copy)]
enum DictLayout {
    /// `id<TAB>name` per line.
    IdFirst,
    /// A count line, then `name<TAB>id` per line.
    NameFirst,
}

fn read_dictionary(path: &Path, layout: DictLayout) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().peekable();
    if let DictLayout::NameFirst = layout {
        lines.next();
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: message.to_owned(),
        };
        let (a, b) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected two tab-separated fields"))?;
        let (id, name) = match layout {
            DictLayout::IdFirst => (a, b),
            DictLayout::NameFirst => (b, a),
        };
        let id: usize = id.trim().parse().map_err(|_| parse_err("id is not an integer"))?;
        rows.push((id, name.trim().to_owned()));
    }
    rows.sort();
    if rows.iter().enumerate().any(|(i, (id, _))| *id != i) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "ids must be exactly 0..n".into(),
        });
    }
    Ok(rows.into_iter().map(|(_, name)| name).collect())
}

/// Vocabulary seeded from the first dictionary pair found in `dir`, or empty.
fn load_dictionaries(dir: &Path) -> Result<Vocabulary> {
    for (entities, relations, layout) in DICTIONARIES {
        let (ep, rp) = (dir.join(entities), dir.join(relations));
        if ep.is_file() && rp.is_file() {
            return Vocabulary::from_names(read_dictionary(&ep, layout)?, read_dictionary(&rp, layout)?);
        }
    }
    Ok(Vocabulary::new())
}

/// Train/valid/test triples sharing one vocabulary.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraphDataset {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub vocab: Vocabulary,
    /// Within-split duplicates dropped while loading, per split.
    pub duplicates_dropped: [usize; 3],
}

impl KnowledgeGraphDataset {
    /// Loads `train.txt`, `valid.txt` and `test.txt` from `dir`, assigning ids
    /// by first appearance in that order. When the directory also holds
    /// `entities.dict` / `relations.dict` (or `entity2id.txt` /
    /// `relation2id.txt`), ids come from those lists instead and symbols
    /// missing from them are appended.
    pub fn load(dir: &Path) -> Result<Self> {
        let paths: Vec<PathBuf> = Split::ALL.iter().map(|s| dir.join(s.file_name())).collect();
        if let Some(missing) = paths.iter().find(|p| !p.is_file()) {
            return Err(Error::MissingSplit(missing.clone()));
        }
        let mut dataset = Self::default();
        let mut vocab = Some(load_dictionaries(dir)?);
        for (i, (split, path)) in Split::ALL.iter().zip(&paths).enumerate() {
            let loaded = load_triples(path, vocab.take(), VocabMode::Extend)?;
            if loaded.duplicates > 0 {
                log::warn!(
                    "{}: dropped {} duplicate triples",
                    path.display(),
                    loaded.duplicates
                );
            }
            dataset.duplicates_dropped[i] = loaded.duplicates;
            *dataset.split_mut(*split) = loaded.triples;
            vocab = Some(loaded.vocab);
        }
        dataset.vocab = vocab.unwrap_or_default();
        Ok(dataset)
    }

    /// Builds a dataset from named triples, mostly for tests and examples.
    pub fn from_named<S: AsRef<str>>(
        train: &[(S, S, S)],
        valid: &[(S, S, S)],
        test: &[(S, S, S)],
    ) -> Self {
        let mut dataset = Self::default();
        for (i, (split, rows)) in Split::ALL.iter().zip([train, valid, test]).enumerate() {
            let mut seen = HashSet::new();
            let mut out = Vec::with_capacity(rows.len());
            for (h, r, t) in rows {
                let triple = dataset
                    .vocab
                    .encode(h.as_ref(), r.as_ref(), t.as_ref(), VocabMode::Extend)
                    .expect("extend mode never fails");
                if seen.insert(triple) {
                    out.push(triple);
                } else {
                    dataset.duplicates_dropped[i] += 1;
                }
            }
            *dataset.split_mut(*split) = out;
        }
        dataset
    }

    /// Writes the three split files plus `entities.dict` and `relations.dict`
    /// into `dir`, creating it if needed. Loading the result reproduces the
    /// same ids.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (file, names) in [
            ("entities.dict", self.vocab.entities().collect::<Vec<_>>()),
            ("relations.dict", self.vocab.relations().collect()),
        ] {
            let path = dir.join(file);
            let text: String = names.iter().enumerate().map(|(i, n)| format!("{i}\t{n}\n")).collect();
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        for split in Split::ALL {
            let path = dir.join(split.file_name());
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            for t in self.split(split) {
                let (h, r, tl) = self
                    .vocab
                    .decode(*t)
                    .ok_or_else(|| Error::Vocabulary(format!("triple {t:?} has unknown ids")))?;
                writeln!(w, "{h}\t{r}\t{tl}").map_err(|e| Error::io(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
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

    pub fn num_entities(&self) -> usize {
        self.vocab.num_entities()
    }

    pub fn num_relations(&self) -> usize {
        self.vocab.num_relations()
    }

    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// Known-true completions of `(head, relation, ?)` and `(?, relation, tail)`
/// over every split.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    tails: HashMap<(usize, usize), Vec<usize>>,
    heads: HashMap<(usize, usize), Vec<usize>>,
}

impl FilterIndex {
    pub fn from_triples<'a, I>(triples: I) -> Self
    where
        I: IntoIterator<Item = &'a Triple>,
    {
        let mut index = Self::default();
        for t in triples {
            index.tails.entry((t.head, t.relation)).or_default().push(t.tail);
            index.heads.entry((t.relation, t.tail)).or_default().push(t.head);
        }
        for v in index.tails.values_mut().chain(index.heads.values_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        index
    }

    /// Sorted true tails for `(head, relation)`.
    pub fn true_tails(&self, head: usize, relation: usize) -> &[usize] {
        self.tails
            .get(&(head, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Sorted true heads for `(relation, tail)`.
    pub fn true_heads(&self, relation: usize, tail: usize) -> &[usize] {
        self.heads
            .get(&(relation, tail))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.true_tails(triple.head, triple.relation)
            .binary_search(&triple.tail)
            .is_ok()
    }

    /// Number of distinct triples indexed.
    pub fn len(&self) -> usize {
        self.tails.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tails.is_empty()
    }

    #[cfg(test)]
    fn head_map(&self) -> &HashMap<(usize, usize), Vec<usize>> {
        &self.heads
    }
}

pub fn build_filter_index(dataset: &KnowledgeGraphDataset) -> FilterIndex {
    FilterIndex::from_triples(dataset.all_triples())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

pub fn dataset_stats(dataset: &KnowledgeGraphDataset) -> DatasetStats {
    DatasetStats {
        entities: dataset.num_entities(),
        relations: dataset.num_relations(),
        train: dataset.train.len(),
        valid: dataset.valid.len(),
        test: dataset.test.len(),
    }
}
