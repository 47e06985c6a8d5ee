//! Readers and writers for the on-disk formats: corpus and knowledge-base
//! JSON lines, topic TSV, qrels, run files, abbreviation and gazetteer
//! lists, and prompt templates.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use factrank_core::corpus::{Dataset, Document, ExpectedAnswer, QuerySpec};
use factrank_core::eval::{Dimension, LabeledQuery, QrelSet};
use factrank_core::evidence::Article;
use factrank_core::fusion::{parse_run, RunLine};
use factrank_core::gentext::PromptTemplate;
use factrank_core::providers::doubles::GazetteerNer;
use factrank_core::text::{collapse_whitespace, strip_tags, SentenceSplitter};
use serde::{Deserialize, Serialize};

use crate::AppError;

pub(crate) fn read_text(path: &Path) -> Result<String, AppError> {
    fs::read_to_string(path).map_err(|source| AppError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), AppError> {
    let io = |source| AppError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut file = fs::File::create(path).map_err(io)?;
    file.write_all(text.as_bytes()).map_err(io)
}

fn bad_line(path: &Path, line: usize, reason: impl Into<String>) -> AppError {
    AppError::Format {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// One corpus line: `{"id","url","title","text","dataset"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(default = "fixture")]
    pub dataset: Dataset,
}

fn fixture() -> Dataset {
    Dataset::Fixture
}

impl CorpusRecord {
    /// Tags are stripped and whitespace collapsed.
    pub fn into_document(self) -> Document {
        Document {
            doc_id: self.id.trim().to_string(),
            url: self.url.filter(|u| !u.trim().is_empty()),
            title: collapse_whitespace(&strip_tags(&self.title)),
            body: collapse_whitespace(&strip_tags(&self.text)),
            dataset: self.dataset,
        }
    }
}

impl From<&Document> for CorpusRecord {
    fn from(doc: &Document) -> Self {
        Self {
            id: doc.doc_id.clone(),
            url: doc.url.clone(),
            title: doc.title.clone(),
            text: doc.body.clone(),
            dataset: doc.dataset,
        }
    }
}

fn read_json_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, AppError> {
    let text = read_text(path)?;
    parse_json_lines(&text, path)
}

fn parse_json_lines<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<Vec<T>, AppError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| bad_line(path, i + 1, e.to_string())))
        .collect()
}

pub fn read_corpus(path: &Path) -> Result<Vec<Document>, AppError> {
    let records: Vec<CorpusRecord> = read_json_lines(path)?;
    Ok(records.into_iter().map(CorpusRecord::into_document).collect())
}

pub fn corpus_lines(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&serde_json::to_string(&CorpusRecord::from(doc)).expect("corpus record serializes"));
        out.push('\n');
    }
    out
}

/// Knowledge-base dump: one `{"ref_id","title","text"}` object per line.
pub fn read_articles(path: &Path) -> Result<Vec<Article>, AppError> {
    let articles: Vec<Article> = read_json_lines(path)?;
    for (i, a) in articles.iter().enumerate() {
        if a.ref_id.trim().is_empty() || a.body.trim().is_empty() {
            return Err(bad_line(path, i + 1, "article needs a ref_id and text"));
        }
    }
    Ok(articles)
}

/// `query_id<TAB>text<TAB>narrative<TAB>expected_answer`; the last two
/// fields may be empty or absent. Lines starting with `#` are comments.
pub fn parse_topics(text: &str, path: &Path) -> Result<Vec<QuerySpec>, AppError> {
    let mut seen = BTreeSet::new();
    let mut topics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 4 {
            return Err(bad_line(path, i + 1, "expected 2 to 4 tab-separated fields"));
        }
        let (id, query) = (fields[0], fields[1]);
        if id.is_empty() || query.is_empty() {
            return Err(bad_line(path, i + 1, "query id and text are required"));
        }
        if !seen.insert(id.to_string()) {
            return Err(bad_line(path, i + 1, format!("duplicate query id `{id}`")));
        }
        let narrative = fields.get(2).filter(|n| !n.is_empty()).map(|n| n.to_string());
        let expected_answer = match fields.get(3).map(|a| a.to_ascii_lowercase()) {
            None => None,
            Some(a) if a.is_empty() || a == "none" => None,
            Some(a) if a == "yes" => Some(ExpectedAnswer::Yes),
            Some(a) if a == "no" => Some(ExpectedAnswer::No),
            Some(a) => return Err(bad_line(path, i + 1, format!("unknown expected answer `{a}`"))),
        };
        topics.push(QuerySpec {
            query_id: id.to_string(),
            text: query.to_string(),
            narrative,
            expected_answer,
        });
    }
    Ok(topics)
}

pub fn read_topics(path: &Path) -> Result<Vec<QuerySpec>, AppError> {
    parse_topics(&read_text(path)?, path)
}

pub fn read_qrels(path: &Path, dimension: Dimension) -> Result<QrelSet, AppError> {
    QrelSet::parse(&read_text(path)?, dimension).map_err(|error| AppError::Input {
        context: path.display().to_string(),
        error,
    })
}

pub fn read_run(path: &Path) -> Result<Vec<RunLine>, AppError> {
    parse_run(&read_text(path)?).map_err(|error| AppError::Input {
        context: path.display().to_string(),
        error,
    })
}

pub fn read_splitter(path: &Path) -> Result<SentenceSplitter, AppError> {
    Ok(SentenceSplitter::from_list(&read_text(path)?))
}

pub fn read_template(path: &Path) -> Result<PromptTemplate, AppError> {
    PromptTemplate::parse(&read_text(path)?).map_err(|error| AppError::Input {
        context: path.display().to_string(),
        error,
    })
}

/// Loads `medicines.txt` and `diseases.txt` from `dir`.
pub fn read_gazetteer(dir: &Path) -> Result<GazetteerNer, AppError> {
    let medicines = read_text(&dir.join("medicines.txt"))?;
    let diseases = read_text(&dir.join("diseases.txt"))?;
    Ok(GazetteerNer::new(&medicines, &diseases))
}

/// Passage labels for the `d_NE` search: one JSON object per line with the
/// query, its articles and the relevant `[ref_id, ordinal]` pairs.
#[derive(Debug, Clone, Deserialize)]
struct LabeledRecord {
    query_id: String,
    text: String,
    articles: Vec<Article>,
    relevant: Vec<(String, usize)>,
}

pub fn read_passage_labels(path: &Path) -> Result<Vec<LabeledQuery>, AppError> {
    let records: Vec<LabeledRecord> = read_json_lines(path)?;
    Ok(records
        .into_iter()
        .map(|r| LabeledQuery {
            query: QuerySpec::new(r.query_id, r.text),
            articles: r.articles,
            relevant: r.relevant.into_iter().collect(),
        })
        .collect())
}

/// Resolves `value` against `base` unless it is absolute.
pub(crate) fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = Path::new(value);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
