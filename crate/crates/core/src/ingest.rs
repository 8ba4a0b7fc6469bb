//! Branch-table parsing, radial topology validation and sequential renumbering.
//!
//! Two input formats are accepted:
//!
//! * delimited text, one branch per line: `branch from to r_ohm x_ohm p_kw q_kvar [cap_kva]`,
//!   separated by whitespace or commas. A trailing `*` on the branch number marks an
//!   open tie line, whose load columns may be left blank. `#` starts a comment line.
//! * JSON: `{"base": {"kv": .., "mva": ..}, "root": 1, "branches": [{"id", "from", "to",
//!   "r", "x", "p", "q", "cap", "open"}, ..]}`.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{to_per_unit, Branch, BranchRecord, NetworkModel, PerUnitBase, Phasor};

/// Units every table is read in: ohms, kW, kVAr and kVA.
pub const DECLARED_UNITS: [&str; 4] = ["ohm", "kW", "kVAr", "kVA"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Delimited,
    Json,
}

impl TableFormat {
    /// Picks the format from a file name: `.json` is JSON, anything else delimited.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => TableFormat::Json,
            _ => TableFormat::Delimited,
        }
    }
}

/// Optional network-level settings carried by a JSON file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileMeta {
    pub base: Option<PerUnitBase>,
    pub root: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub rows: Vec<BranchRecord>,
    pub source_name: String,
    pub meta: FileMeta,
}

impl RawTable {
    /// Builds a table after checking ids are unique and every record is sane.
    pub fn new(rows: Vec<BranchRecord>, source_name: impl Into<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("empty branch table".into()));
        }
        let mut seen = HashMap::new();
        for (i, row) in rows.iter().enumerate() {
            row.check()?;
            if let Some(prev) = seen.insert(row.branch_id, i) {
                return Err(Error::Data(format!(
                    "duplicate branch id {} (rows {} and {})",
                    row.branch_id,
                    prev + 1,
                    i + 1
                )));
            }
        }
        Ok(RawTable {
            rows,
            source_name: source_name.into(),
            meta: FileMeta::default(),
        })
    }

    pub fn closed(&self) -> impl Iterator<Item = &BranchRecord> {
        self.rows.iter().filter(|r| !r.is_tie)
    }

    pub fn ties(&self) -> impl Iterator<Item = &BranchRecord> {
        self.rows.iter().filter(|r| r.is_tie)
    }
}

pub fn parse_branch_table(text: &str, format: TableFormat) -> Result<RawTable> {
    parse_named(text, format, "<input>")
}

pub fn parse_named(text: &str, format: TableFormat, source_name: &str) -> Result<RawTable> {
    match format {
        TableFormat::Delimited => parse_delimited(text, source_name),
        TableFormat::Json => parse_json(text, source_name),
    }
}

fn parse_delimited(text: &str, source_name: &str) -> Result<RawTable> {
    let mut rows: Vec<BranchRecord> = Vec::new();
    let mut lines_of: HashMap<usize, usize> = HashMap::new();
    let mut seen_data = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = if line.contains(',') {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        if !seen_data && fields[0].eq_ignore_ascii_case("branch") {
            // header row
            seen_data = true;
            continue;
        }
        seen_data = true;

        let record = parse_row(&fields, line_no)?;
        record.check().map_err(|e| match e {
            Error::Data(msg) => Error::Parse {
                line: line_no,
                message: msg,
            },
            other => other,
        })?;
        if let Some(prev) = lines_of.insert(record.branch_id, line_no) {
            return Err(Error::Data(format!(
                "duplicate branch id {} (lines {} and {})",
                record.branch_id, prev, line_no
            )));
        }
        rows.push(record);
    }

    RawTable::new(rows, source_name)
}

fn parse_row(fields: &[&str], line: usize) -> Result<BranchRecord> {
    let err = |message: String| Error::Parse { line, message };

    let (id_text, is_tie) = match fields[0].strip_suffix('*') {
        Some(stripped) => (stripped.trim(), true),
        None => (fields[0], false),
    };
    let branch_id = parse_index(id_text, "branch number", line)?;

    let expected = if is_tie { 5..=8 } else { 7..=8 };
    if !expected.contains(&fields.len()) {
        return Err(err(format!(
            "expected {}-{} fields for branch {branch_id}, found {}",
            expected.start(),
            expected.end(),
            fields.len()
        )));
    }

    let sending_node = parse_index(fields[1], "sending node", line)?;
    let receiving_node = parse_index(fields[2], "receiving node", line)?;
    let resistance = parse_number(fields[3], "resistance", line)?;
    let reactance = parse_number(fields[4], "reactance", line)?;

    // Tie rows may omit the load columns entirely: `id* from to r x [cap]`.
    let (load_p, load_q, cap_field) = match (is_tie, fields.len()) {
        (true, 5) => (0.0, 0.0, None),
        (true, 6) => (0.0, 0.0, Some(fields[5])),
        _ => (
            parse_optional(fields[5], "real load", line)?.unwrap_or(0.0),
            parse_optional(fields[6], "reactive load", line)?.unwrap_or(0.0),
            fields.get(7).copied(),
        ),
    };
    if !is_tie && (fields[5].is_empty() || fields[6].is_empty()) {
        return Err(err(format!("branch {branch_id}: missing load field")));
    }
    let capacity = match cap_field {
        Some(text) => parse_optional(text, "capacity", line)?,
        None => None,
    };

    Ok(BranchRecord {
        branch_id,
        sending_node,
        receiving_node,
        resistance,
        reactance,
        load_p,
        load_q,
        capacity,
        is_tie,
    })
}

fn parse_index(text: &str, what: &str, line: usize) -> Result<usize> {
    text.parse::<usize>().map_err(|_| Error::Parse {
        line,
        message: format!("malformed {what} `{text}`"),
    })
}

fn parse_number(text: &str, what: &str, line: usize) -> Result<f64> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            message: format!("malformed {what} `{text}`"),
        }),
    }
}

fn parse_optional(text: &str, what: &str, line: usize) -> Result<Option<f64>> {
    if text.is_empty() {
        Ok(None)
    } else {
        parse_number(text, what, line).map(Some)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonBase {
    kv: f64,
    mva: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonBranch {
    id: usize,
    from: usize,
    to: usize,
    r: f64,
    x: f64,
    #[serde(default)]
    p: f64,
    #[serde(default)]
    q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cap: Option<f64>,
    #[serde(default)]
    open: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonNetwork {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<JsonBase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    root: Option<usize>,
    branches: Vec<JsonBranch>,
}

fn parse_json(text: &str, source_name: &str) -> Result<RawTable> {
    let doc: JsonNetwork = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let rows = doc
        .branches
        .into_iter()
        .map(|b| BranchRecord {
            branch_id: b.id,
            sending_node: b.from,
            receiving_node: b.to,
            resistance: b.r,
            reactance: b.x,
            load_p: b.p,
            load_q: b.q,
            capacity: b.cap,
            is_tie: b.open,
        })
        .collect();
    let mut table = RawTable::new(rows, source_name)?;
    table.meta.base = doc
        .base
        .map(|b| PerUnitBase::new(b.kv, b.mva))
        .transpose()?;
    table.meta.root = doc.root;
    Ok(table)
}

/// Writes a table in the delimited format read by [`parse_branch_table`].
pub fn write_delimited(table: &RawTable) -> String {
    let mut out = String::from("# branch from to r_ohm x_ohm p_kw q_kvar cap_kva\n");
    for r in &table.rows {
        let star = if r.is_tie { "*" } else { "" };
        let _ = write!(
            out,
            "{}{} {} {} {} {} {} {}",
            r.branch_id,
            star,
            r.sending_node,
            r.receiving_node,
            r.resistance,
            r.reactance,
            r.load_p,
            r.load_q
        );
        if let Some(cap) = r.capacity {
            let _ = write!(out, " {cap}");
        }
        out.push('\n');
    }
    out
}

pub fn write_json(table: &RawTable) -> String {
    let doc = JsonNetwork {
        base: table.meta.base.map(|b| JsonBase {
            kv: b.kv_base,
            mva: b.mva_base,
        }),
        root: table.meta.root,
        branches: table
            .rows
            .iter()
            .map(|r| JsonBranch {
                id: r.branch_id,
                from: r.sending_node,
                to: r.receiving_node,
                r: r.resistance,
                x: r.reactance,
                p: r.load_p,
                q: r.load_q,
                cap: r.capacity,
                open: r.is_tie,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("network serializes")
}

/// Parent/children structure of the closed branches, indices into the slice
/// the tree was built from.
struct Tree {
    node_count: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

/// With `allow_gaps`, node labels touched by no closed branch are ignored
/// instead of being reported as disconnected.
fn build_tree(closed: &[&BranchRecord], root: usize, allow_gaps: bool) -> Result<Tree> {
    if root == 0 {
        return Err(Error::Topology("root node must be at least 1".into()));
    }
    let node_count = closed
        .iter()
        .map(|b| b.sending_node.max(b.receiving_node))
        .max()
        .unwrap_or(0)
        .max(root);

    let mut parent: Vec<Option<usize>> = vec![None; node_count];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); node_count];
    for (i, b) in closed.iter().enumerate() {
        let to = b.receiving_node - 1;
        if let Some(prev) = parent[to] {
            return Err(Error::Topology(format!(
                "node {} has two incoming closed branches ({} and {})",
                b.receiving_node, closed[prev].branch_id, b.branch_id
            )));
        }
        parent[to] = Some(i);
        children[b.sending_node - 1].push(i);
    }

    if children[root - 1].is_empty() {
        return Err(Error::Topology(format!(
            "root node {root} feeds no closed branch"
        )));
    }

    let mut visited = vec![false; node_count];
    let mut queue = VecDeque::from([root - 1]);
    visited[root - 1] = true;
    while let Some(k) = queue.pop_front() {
        for &b in &children[k] {
            let to = closed[b].receiving_node - 1;
            if !visited[to] {
                visited[to] = true;
                queue.push_back(to);
            }
        }
    }

    if let Some(b) = parent[root - 1] {
        let rec = closed[b];
        return Err(if visited[rec.sending_node - 1] {
            Error::Topology(format!(
                "cycle through branch {} ({} -> {})",
                rec.branch_id, rec.sending_node, rec.receiving_node
            ))
        } else {
            Error::Topology(format!(
                "root node {root} is fed by branch {}",
                rec.branch_id
            ))
        });
    }

    for start in 0..node_count {
        if visited[start] || (allow_gaps && parent[start].is_none() && children[start].is_empty()) {
            continue;
        }
        // Nodes unreachable from the root: walk up until the chain either
        // ends (a separate component) or revisits itself (a cycle).
        let mut on_path = vec![false; node_count];
        let mut cur = start;
        loop {
            on_path[cur] = true;
            match parent[cur] {
                None => {
                    return Err(Error::Topology(format!(
                        "node {} is disconnected from root {root}",
                        start + 1
                    )))
                }
                Some(b) => {
                    let next = closed[b].sending_node - 1;
                    if on_path[next] {
                        let rec = closed[b];
                        return Err(Error::Topology(format!(
                            "cycle through branch {} ({} -> {})",
                            rec.branch_id, rec.sending_node, rec.receiving_node
                        )));
                    }
                    cur = next;
                }
            }
        }
    }

    Ok(Tree {
        node_count,
        parent,
        children,
    })
}

fn sorted_closed(table: &RawTable) -> Vec<&BranchRecord> {
    let mut closed: Vec<&BranchRecord> = table.closed().collect();
    closed.sort_by_key(|b| b.branch_id);
    closed
}

fn check_ties(table: &RawTable, node_count: usize) -> Result<()> {
    for t in table.ties() {
        if t.sending_node > node_count || t.receiving_node > node_count {
            return Err(Error::Topology(format!(
                "tie line {} references a node outside 1..={node_count}",
                t.branch_id
            )));
        }
    }
    Ok(())
}

/// First branch (in id order) numbered before the branch feeding it.
fn ordering_violation(closed: &[&BranchRecord], tree: &Tree, root: usize) -> Option<String> {
    closed.iter().find_map(|b| {
        if b.sending_node == root {
            return None;
        }
        let feeder = closed[tree.parent[b.sending_node - 1]?];
        (feeder.branch_id > b.branch_id).then(|| {
            format!(
                "branch {} leaves node {} before branch {} reaches it",
                b.branch_id, b.sending_node, feeder.branch_id
            )
        })
    })
}

/// Summary printed by the `validate` command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TopologyReport {
    pub node_count: usize,
    pub branch_count: usize,
    pub tie_count: usize,
    pub leaf_count: usize,
    pub ordered: bool,
    /// Fails only when `ordered` is false.
    pub ordering_issue: Option<String>,
}

/// Checks the tree shape and reports ordering status without failing on it.
pub fn inspect_topology(table: &RawTable, root: usize) -> Result<TopologyReport> {
    let closed = sorted_closed(table);
    let tree = build_tree(&closed, root, false)?;
    check_ties(table, tree.node_count)?;
    let issue = ordering_violation(&closed, &tree, root);
    Ok(TopologyReport {
        node_count: tree.node_count,
        branch_count: closed.len(),
        tie_count: table.ties().count(),
        leaf_count: (1..=tree.node_count)
            .filter(|&k| k != root && tree.children[k - 1].is_empty())
            .count(),
        ordered: issue.is_none(),
        ordering_issue: issue,
    })
}

/// Validates the closed branches as a tree rooted at `root` and converts the
/// network to per-unit.
pub fn validate_radial(table: &RawTable, root: usize, base: PerUnitBase) -> Result<NetworkModel> {
    let closed = sorted_closed(table);
    let tree = build_tree(&closed, root, false)?;
    check_ties(table, tree.node_count)?;
    if let Some(issue) = ordering_violation(&closed, &tree, root) {
        return Err(Error::Ordering(issue));
    }

    let n = tree.node_count;
    let mut branches = Vec::with_capacity(closed.len());
    let mut node_load = vec![Phasor::ZERO; n];
    for b in &closed {
        let pu = to_per_unit(b, &base)?;
        node_load[b.receiving_node - 1] = pu.load;
        branches.push(Branch {
            id: b.branch_id,
            from: b.sending_node,
            to: b.receiving_node,
            impedance: pu.impedance,
            capacity: b.capacity,
        });
    }

    let mut ties: Vec<BranchRecord> = table.ties().cloned().collect();
    ties.sort_by_key(|t| t.branch_id);

    Ok(NetworkModel {
        node_count: n,
        root,
        branches,
        tie_lines: ties,
        children: tree.children,
        parent: tree.parent,
        node_load,
        base,
    })
}

/// Old and new node labels produced by [`renumber_sequential`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMapping {
    old_to_new: BTreeMap<usize, usize>,
    new_to_old: BTreeMap<usize, usize>,
}

impl NodeMapping {
    fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let old_to_new: BTreeMap<usize, usize> = pairs.into_iter().collect();
        let new_to_old = old_to_new.iter().map(|(&o, &n)| (n, o)).collect();
        NodeMapping {
            old_to_new,
            new_to_old,
        }
    }

    pub fn new_of(&self, old: usize) -> Option<usize> {
        self.old_to_new.get(&old).copied()
    }

    pub fn old_of(&self, new: usize) -> Option<usize> {
        self.new_to_old.get(&new).copied()
    }

    pub fn is_identity(&self) -> bool {
        self.old_to_new.iter().all(|(o, n)| o == n)
    }

    pub fn len(&self) -> usize {
        self.old_to_new.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_to_new.is_empty()
    }
}

/// True when root is 1 and closed branch `j` runs from a lower-numbered node
/// into node `j + 1`.
fn is_sequential(closed: &[&BranchRecord], root: usize) -> bool {
    root == 1
        && closed
            .iter()
            .all(|b| b.receiving_node == b.branch_id + 1 && b.sending_node < b.receiving_node)
}

/// Relabels nodes and branches into the sequential numbering scheme.
///
/// Tables already in that scheme come back unchanged with an identity
/// mapping. Otherwise nodes are relabelled in breadth-first order from the
/// root (root becomes 1, siblings ordered by their old label), the closed
/// branch into new node `k` gets id `k - 1`, and tie lines follow in their
/// original id order.
pub fn renumber_sequential(table: &RawTable, root: usize) -> Result<(RawTable, NodeMapping)> {
    let closed = sorted_closed(table);
    let tree = build_tree(&closed, root, true)?;
    check_ties(table, tree.node_count)?;

    if is_sequential(&closed, root) {
        let mapping = NodeMapping::from_pairs((1..=tree.node_count).map(|k| (k, k)));
        return Ok((table.clone(), mapping));
    }

    let mut order = Vec::with_capacity(tree.node_count);
    let mut queue = VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        order.push(node);
        let mut kids: Vec<usize> = tree.children[node - 1]
            .iter()
            .map(|&b| closed[b].receiving_node)
            .collect();
        kids.sort_unstable();
        queue.extend(kids);
    }
    let mapping = NodeMapping::from_pairs(order.iter().enumerate().map(|(i, &old)| (old, i + 1)));

    let mut rows = Vec::with_capacity(table.rows.len());
    for (i, &old) in order.iter().enumerate().skip(1) {
        let b = closed[tree.parent[old - 1].expect("non-root node has a feeder")];
        rows.push(BranchRecord {
            branch_id: i,
            sending_node: mapping.new_of(b.sending_node).expect("visited"),
            receiving_node: i + 1,
            ..b.clone()
        });
    }

    let mut ties: Vec<&BranchRecord> = table.ties().collect();
    ties.sort_by_key(|t| t.branch_id);
    let first_tie_id = rows.len() + 1;
    for (next_id, t) in (first_tie_id..).zip(ties) {
        let (Some(from), Some(to)) = (
            mapping.new_of(t.sending_node),
            mapping.new_of(t.receiving_node),
        ) else {
            return Err(Error::Topology(format!(
                "tie line {} references a node outside the feeder",
                t.branch_id
            )));
        };
        rows.push(BranchRecord {
            branch_id: next_id,
            sending_node: from,
            receiving_node: to,
            ..t.clone()
        });
    }

    let mut out = RawTable::new(rows, table.source_name.clone())?;
    out.meta = table.meta.clone();
    if out.meta.root.is_some() {
        out.meta.root = Some(1);
    }
    Ok((out, mapping))
}
