use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::warn;

use super::{
    parse_concept_line, parse_relation_line, tokenize_line, ConceptSpan, ConceptType, Corpus,
    CorpusError, Document, InstanceKey, RelationInstance, Result, Sentence, SpanRef,
};

/// Tag assigned when no tag file accompanies a document.
pub const PLACEHOLDER_POS: &str = "NN";
pub const PLACEHOLDER_CHUNK: &str = "NP";

/// Directories holding the paired `.txt`, `.con`, `.rel` and `.tags` files.
#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub txt: PathBuf,
    pub con: PathBuf,
    pub rel: PathBuf,
    pub tags: Option<PathBuf>,
}

impl CorpusPaths {
    /// All four file kinds side by side in one directory.
    pub fn single(dir: impl Into<PathBuf>) -> Self {
        let dir = dir.into();
        CorpusPaths {
            txt: dir.clone(),
            con: dir.clone(),
            rel: dir.clone(),
            tags: Some(dir),
        }
    }
}

fn read(path: &Path) -> Result<Option<String>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(CorpusError::io(path, e)),
    }
}

/// Reads a tag file: `token<TAB>POS<TAB>chunk` per line, sentences separated
/// by blank lines.
pub fn read_tag_file(contents: &str) -> Result<Vec<Vec<(String, String, String)>>> {
    let mut blocks = Vec::new();
    let mut cur = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                blocks.push(std::mem::take(&mut cur));
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(CorpusError::Invalid(format!(
                "line {}: expected token<TAB>POS<TAB>chunk, got {} fields",
                i + 1,
                fields.len()
            )));
        }
        cur.push((fields[0].to_string(), fields[1].to_string(), fields[2].to_string()));
    }
    if !cur.is_empty() {
        blocks.push(cur);
    }
    Ok(blocks)
}

fn read_sentences(doc_id: &str, text: &str) -> Vec<Sentence> {
    text.lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let tokens = tokenize_line(line);
            (!tokens.is_empty()).then(|| Sentence {
                doc_id: doc_id.to_string(),
                line: i + 1,
                tokens,
            })
        })
        .collect()
}

fn apply_tags(sentences: &mut [Sentence], tags: Option<(&Path, String)>) -> Result<()> {
    let Some((path, contents)) = tags else {
        for t in sentences.iter_mut().flat_map(|s| s.tokens.iter_mut()) {
            t.pos = PLACEHOLDER_POS.to_string();
            t.chunk = PLACEHOLDER_CHUNK.to_string();
        }
        return Ok(());
    };
    let blocks = read_tag_file(&contents).map_err(|e| e.at(path, 0))?;
    if blocks.len() != sentences.len() {
        return Err(CorpusError::Invalid(format!(
            "{}: {} tagged sentences for {} text sentences",
            path.display(),
            blocks.len(),
            sentences.len()
        )));
    }
    for (s, block) in sentences.iter_mut().zip(blocks) {
        if block.len() != s.tokens.len() {
            return Err(CorpusError::Invalid(format!(
                "{}: sentence on line {} has {} tokens but {} tags",
                path.display(),
                s.line,
                s.tokens.len(),
                block.len()
            )));
        }
        for (tok, (text, pos, chunk)) in s.tokens.iter_mut().zip(block) {
            if tok.text != text {
                return Err(CorpusError::Invalid(format!(
                    "{}: tag token {text:?} does not match text token {:?} on line {}",
                    path.display(),
                    tok.text,
                    s.line
                )));
            }
            tok.pos = pos;
            tok.chunk = chunk;
        }
    }
    Ok(())
}

fn check_concept(c: &ConceptSpan, doc: &Document) -> std::result::Result<(), String> {
    let Some(s) = doc.sentence_at(c.line) else {
        return Err(format!("concept line {} has no sentence", c.line));
    };
    if c.tok_end >= s.len() {
        return Err(format!(
            "concept tokens {}..={} exceed sentence length {}",
            c.tok_start,
            c.tok_end,
            s.len()
        ));
    }
    let surface = s.tokens[c.tok_start..=c.tok_end]
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    if surface.to_lowercase() != c.text.to_lowercase() {
        return Err(format!(
            "concept text {:?} does not match sentence tokens {surface:?}",
            c.text
        ));
    }
    Ok(())
}

fn find_concept<'a>(concepts: &'a [ConceptSpan], r: &SpanRef) -> Option<&'a ConceptSpan> {
    concepts
        .iter()
        .find(|c| c.line == r.line && c.tok_start == r.tok_start && c.tok_end == r.tok_end)
}

fn load_document(id: &str, paths: &CorpusPaths, sources: &mut Vec<PathBuf>) -> Result<Document> {
    let txt_path = paths.txt.join(format!("{id}.txt"));
    let text = read(&txt_path)?.unwrap_or_default();
    sources.push(txt_path);
    let mut sentences = read_sentences(id, &text);

    let tag_file = match &paths.tags {
        Some(dir) => {
            let p = dir.join(format!("{id}.tags"));
            read(&p)?.map(|c| (p, c))
        }
        None => None,
    };
    apply_tags(&mut sentences, tag_file.as_ref().map(|(p, c)| (p.as_path(), c.clone())))?;
    if let Some((p, _)) = tag_file {
        sources.push(p);
    }

    let mut doc = Document {
        id: id.to_string(),
        sentences: sentences.into_iter().map(Arc::new).collect(),
        ..Default::default()
    };

    let con_path = paths.con.join(format!("{id}.con"));
    match read(&con_path)? {
        None => warn!("{}: missing, document loaded without concepts", con_path.display()),
        Some(contents) => {
            for (i, line) in contents.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let c = parse_concept_line(line).map_err(|e| e.at(&con_path, i + 1))?;
                check_concept(&c, &doc)
                    .map_err(|m| CorpusError::Invalid(m).at(&con_path, i + 1))?;
                doc.concepts.push(c);
            }
            sources.push(con_path);
        }
    }

    let rel_path = paths.rel.join(format!("{id}.rel"));
    if let Some(contents) = read(&rel_path)? {
        let mut dangling = Vec::new();
        let mut seen: HashSet<InstanceKey> = HashSet::new();
        for (i, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let at = |e: CorpusError| e.at(&rel_path, i + 1);
            let rel = parse_relation_line(line).map_err(at)?;
            let (Some(a), Some(b)) = (
                find_concept(&doc.concepts, &rel.first),
                find_concept(&doc.concepts, &rel.second),
            ) else {
                dangling.push(format!(
                    "{}:{}: {}",
                    rel_path.display(),
                    i + 1,
                    line.trim_end()
                ));
                continue;
            };
            let (treatment, problem) = match (a.ctype, b.ctype) {
                (ConceptType::Treatment, ConceptType::Problem) => (a, b),
                (ConceptType::Problem, ConceptType::Treatment) => (b, a),
                _ => {
                    return Err(at(CorpusError::Invalid(format!(
                        "relation arguments must be one treatment and one problem, got {} and {}",
                        a.ctype.as_str(),
                        b.ctype.as_str()
                    ))))
                }
            };
            if treatment.line != problem.line {
                warn!(
                    "{}:{}: relation spans two sentences, dropped",
                    rel_path.display(),
                    i + 1
                );
                continue;
            }
            let sentence = Arc::clone(doc.sentence_at(treatment.line).expect("checked concept"));
            let inst = RelationInstance {
                sentence,
                treatment: treatment.clone(),
                problem: problem.clone(),
                label: rel.label,
            };
            if !seen.insert(inst.key()) {
                warn!(
                    "{}:{}: duplicate label for an annotated pair, keeping the first",
                    rel_path.display(),
                    i + 1
                );
                continue;
            }
            doc.relations.push(inst);
        }
        if !dangling.is_empty() {
            return Err(CorpusError::Dangling(dangling));
        }
        sources.push(rel_path);
    }
    Ok(doc)
}

/// Loads every `<id>.txt` under `paths.txt` (sorted by id) with its
/// annotations.
pub fn load_corpus(paths: &CorpusPaths) -> Result<Corpus> {
    let entries = fs::read_dir(&paths.txt).map_err(|e| CorpusError::io(&paths.txt, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CorpusError::io(&paths.txt, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    let mut sources = Vec::new();
    let documents = ids
        .iter()
        .map(|id| load_document(id, paths, &mut sources))
        .collect::<Result<Vec<_>>>()?;
    let corpus = Corpus { documents, sources };
    log::info!(
        "loaded {} documents: {} sentences, {} concepts, {} relations",
        corpus.documents.len(),
        corpus.n_sentences(),
        corpus.n_concepts(),
        corpus.n_relations()
    );
    Ok(corpus)
}
