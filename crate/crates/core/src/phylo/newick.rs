use super::{DatedTree, PhyloError, TreeNode};

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
}

struct RawNode {
    label: Option<String>,
    length: Option<f64>,
    children: Vec<usize>,
    length_offset: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: impl Into<String>) -> PhyloError {
        PhyloError::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) -> Result<(), PhyloError> {
        while self.pos < self.text.len() {
            match self.text[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' => self.pos += 1,
                b'[' => {
                    let start = self.pos;
                    while self.pos < self.text.len() && self.text[self.pos] != b']' {
                        self.pos += 1;
                    }
                    if self.pos == self.text.len() {
                        self.pos = start;
                        return Err(self.error("unterminated comment"));
                    }
                    self.pos += 1;
                }
                _ => break,
            }
        }
        Ok(())
    }

    fn peek(&mut self) -> Result<Option<u8>, PhyloError> {
        self.skip_ws()?;
        Ok(self.text.get(self.pos).copied())
    }

    fn label(&mut self) -> Result<Option<String>, PhyloError> {
        match self.peek()? {
            Some(b'\'') => {
                let start = self.pos;
                self.pos += 1;
                let mut out = Vec::new();
                loop {
                    match self.text.get(self.pos) {
                        None => {
                            self.pos = start;
                            return Err(self.error("unterminated quoted label"));
                        }
                        Some(b'\'') if self.text.get(self.pos + 1) == Some(&b'\'') => {
                            out.push(b'\'');
                            self.pos += 2;
                        }
                        Some(b'\'') => {
                            self.pos += 1;
                            break;
                        }
                        Some(&b) => {
                            out.push(b);
                            self.pos += 1;
                        }
                    }
                }
                Ok(Some(String::from_utf8_lossy(&out).into_owned()))
            }
            Some(_) => {
                let start = self.pos;
                while let Some(&b) = self.text.get(self.pos) {
                    if b"():,;[]' \t\r\n".contains(&b) {
                        break;
                    }
                    self.pos += 1;
                }
                if self.pos == start {
                    Ok(None)
                } else {
                    Ok(Some(
                        String::from_utf8_lossy(&self.text[start..self.pos]).into_owned(),
                    ))
                }
            }
            None => Ok(None),
        }
    }

    fn length(&mut self) -> Result<Option<f64>, PhyloError> {
        if self.peek()? != Some(b':') {
            return Ok(None);
        }
        self.pos += 1;
        self.skip_ws()?;
        let start = self.pos;
        while let Some(&b) = self.text.get(self.pos) {
            if b.is_ascii_digit() || b"+-.eE".contains(&b) {
                self.pos += 1;
            } else {
                break;
            }
        }
        let raw = std::str::from_utf8(&self.text[start..self.pos]).unwrap_or("");
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(Some(v)),
            Ok(_) => {
                self.pos = start;
                Err(self.error(format!("invalid branch length '{raw}'")))
            }
            Err(_) => {
                self.pos = start;
                Err(self.error("expected a branch length after ':'"))
            }
        }
    }

    fn subtree(&mut self, nodes: &mut Vec<RawNode>) -> Result<usize, PhyloError> {
        let mut children = Vec::new();
        let open = self.pos;
        if self.peek()? == Some(b'(') {
            self.pos += 1;
            loop {
                children.push(self.subtree(nodes)?);
                match self.peek()? {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    Some(c) => {
                        return Err(self.error(format!(
                            "expected ',' or ')' but found '{}'",
                            c as char
                        )))
                    }
                    None => return Err(self.error("unbalanced parentheses: missing ')'")),
                }
            }
            if children.len() != 2 {
                return Err(PhyloError::UnsupportedTopology {
                    offset: open,
                    children: children.len(),
                });
            }
        }
        let label = self.label()?;
        let length_offset = self.pos;
        let length = self.length()?;
        if children.is_empty() && label.is_none() && length.is_none() {
            return Err(self.error("expected a leaf label or subtree"));
        }
        nodes.push(RawNode {
            label,
            length,
            children,
            length_offset,
        });
        Ok(nodes.len() - 1)
    }
}

/// Parse Newick text into a dated tree whose latest leaf sits at
/// `most_recent_tip_time`. Node times come from root-to-node path lengths.
pub fn parse_newick(text: &str, most_recent_tip_time: f64) -> Result<DatedTree, PhyloError> {
    let mut parser = Parser {
        text: text.as_bytes(),
        pos: 0,
    };
    if parser.peek()? == Some(b';') {
        parser.pos += 1;
        if parser.peek()?.is_some() {
            return Err(parser.error("unexpected text after ';'"));
        }
        return Ok(DatedTree::empty());
    }
    let mut raw = Vec::new();
    let root = parser.subtree(&mut raw)?;
    match parser.peek()? {
        Some(b';') => parser.pos += 1,
        Some(b')') => return Err(parser.error("unbalanced parentheses: unexpected ')'")),
        Some(c) => return Err(parser.error(format!("expected ';' but found '{}'", c as char))),
        None => return Err(parser.error("missing terminating ';'")),
    }
    if parser.peek()?.is_some() {
        return Err(parser.error("unexpected text after ';'"));
    }

    // Depth from the root; every non-root branch needs a length.
    let mut depth = vec![0.0; raw.len()];
    let mut parent = vec![None; raw.len()];
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        for &ch in &raw[v].children {
            let len = raw[ch].length.ok_or(PhyloError::Parse {
                offset: raw[ch].length_offset,
                message: "missing branch length".into(),
            })?;
            depth[ch] = depth[v] + len;
            parent[ch] = Some(v);
            stack.push(ch);
        }
    }
    let max_leaf_depth = raw
        .iter()
        .enumerate()
        .filter(|(_, n)| n.children.is_empty())
        .map(|(i, _)| depth[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = most_recent_tip_time - max_leaf_depth;

    let nodes = raw
        .into_iter()
        .enumerate()
        .map(|(i, n)| TreeNode {
            label: n.label,
            parent: parent[i],
            children: n.children,
            time: depth[i] + shift,
        })
        .collect();
    DatedTree::from_nodes(nodes, Some(root))
}

fn format_label(label: &str) -> String {
    if label.bytes().any(|b| b"():,;[]' \t\r\n".contains(&b)) {
        format!("'{}'", label.replace('\'', "''"))
    } else {
        label.to_string()
    }
}

/// Write the tree as Newick with branch lengths equal to time differences.
pub fn to_newick(tree: &DatedTree) -> String {
    let Some(root) = tree.root else {
        return ";".to_string();
    };
    let mut out = String::new();
    write_node(tree, root, &mut out);
    out.push(';');
    out
}

fn write_node(tree: &DatedTree, v: usize, out: &mut String) {
    let node = &tree.nodes[v];
    if !node.children.is_empty() {
        out.push('(');
        for (i, &ch) in node.children.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write_node(tree, ch, out);
        }
        out.push(')');
    }
    if let Some(label) = &node.label {
        out.push_str(&format_label(label));
    }
    if let Some(p) = node.parent {
        let len = node.time - tree.nodes[p].time;
        out.push(':');
        out.push_str(&format!("{len}"));
    }
}
