use std::collections::VecDeque;

use super::{RuleContext, RuleError};
use crate::corpus::RelationInstance;

/// Dependency tree over one sentence: 0-based head index per token, `-1`
/// for the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseGraph {
    heads: Vec<i64>,
    labels: Vec<String>,
}

impl ParseGraph {
    /// Validates one root, in-range heads and acyclicity.
    pub fn new(heads: Vec<i64>, labels: Vec<String>) -> Result<Self, RuleError> {
        let n = heads.len();
        if labels.len() != n {
            return Err(RuleError::Parse("heads and labels differ in length".into()));
        }
        let roots = heads.iter().filter(|&&h| h == -1).count();
        if roots != 1 {
            return Err(RuleError::Parse(format!("expected exactly one root, found {roots}")));
        }
        if let Some((i, h)) = heads
            .iter()
            .enumerate()
            .find(|(i, &h)| h < -1 || h >= n as i64 || h == *i as i64)
        {
            return Err(RuleError::Parse(format!("token {i} has invalid head {h}")));
        }
        for start in 0..n {
            let mut cur = start;
            for _ in 0..=n {
                match heads[cur] {
                    -1 => break,
                    h => cur = h as usize,
                }
            }
            if heads[cur] != -1 {
                return Err(RuleError::Parse(format!("cycle through token {start}")));
            }
        }
        Ok(ParseGraph { heads, labels })
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn head(&self, i: usize) -> i64 {
        self.heads[i]
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    /// Token indices on the tree path from `from` to `to`, endpoints
    /// excluded (breadth-first over undirected arcs).
    pub fn path_between(&self, from: usize, to: usize) -> Vec<usize> {
        let n = self.len();
        if from == to {
            return Vec::new();
        }
        let mut adj = vec![Vec::new(); n];
        for (i, &h) in self.heads.iter().enumerate() {
            if h >= 0 {
                adj[i].push(h as usize);
                adj[h as usize].push(i);
            }
        }
        let mut prev = vec![usize::MAX; n];
        prev[from] = from;
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            if u == to {
                break;
            }
            for &v in &adj[u] {
                if prev[v] == usize::MAX {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        let mut path = Vec::new();
        let mut cur = prev[to];
        while cur != from {
            path.push(cur);
            cur = prev[cur];
        }
        path.reverse();
        path
    }
}

/// Tokens between the two entities in surface order.
pub fn surface_path(inst: &RelationInstance) -> Vec<String> {
    RuleContext::new(inst).middle
}

/// Words on the dependency path between the last tokens of the two spans,
/// from the surface-first entity to the second. Without a parse this is the
/// surface path.
pub fn dep_shortest_path(parse: Option<&ParseGraph>, inst: &RelationInstance) -> Result<Vec<String>, RuleError> {
    let Some(parse) = parse else {
        return Ok(surface_path(inst));
    };
    let tokens = &inst.sentence.tokens;
    if parse.len() != tokens.len() {
        return Err(RuleError::Parse(format!(
            "parse has {} tokens, sentence has {}",
            parse.len(),
            tokens.len()
        )));
    }
    let (first, second) = inst.surface_order();
    Ok(parse
        .path_between(first.tok_end, second.tok_end)
        .into_iter()
        .map(|i| tokens[i].text.clone())
        .collect())
}

/// Reads a `.dep` sidecar: `index<TAB>head<TAB>label` per token, sentences
/// separated by blank lines.
pub fn parse_dep_file(text: &str) -> Result<Vec<ParseGraph>, RuleError> {
    let mut graphs = Vec::new();
    let mut heads = Vec::new();
    let mut labels = Vec::new();
    let flush = |heads: &mut Vec<i64>, labels: &mut Vec<String>, graphs: &mut Vec<ParseGraph>| {
        if heads.is_empty() {
            return Ok(());
        }
        graphs.push(ParseGraph::new(std::mem::take(heads), std::mem::take(labels))?);
        Ok::<(), RuleError>(())
    };
    for (i, line) in text.lines().enumerate() {
        let at = |e: RuleError| RuleError::AtLine {
            line: i + 1,
            source: Box::new(e),
        };
        if line.trim().is_empty() {
            flush(&mut heads, &mut labels, &mut graphs).map_err(at)?;
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(at(RuleError::Parse("expected index<TAB>head<TAB>label".into())));
        }
        let index: usize = f[0]
            .trim()
            .parse()
            .map_err(|_| at(RuleError::Parse(format!("bad index {:?}", f[0]))))?;
        if index != heads.len() {
            return Err(at(RuleError::Parse(format!(
                "token index {index}, expected {}",
                heads.len()
            ))));
        }
        let head: i64 = f[1]
            .trim()
            .parse()
            .map_err(|_| at(RuleError::Parse(format!("bad head {:?}", f[1]))))?;
        heads.push(head);
        labels.push(f[2].trim().to_string());
    }
    let last = text.lines().count();
    flush(&mut heads, &mut labels, &mut graphs).map_err(|e| RuleError::AtLine {
        line: last,
        source: Box::new(e),
    })?;
    Ok(graphs)
}
