//! HTML documents to bounded text segments.
//!
//! The segmenter walks the parsed DOM breadth-first. Whenever the text under
//! a node (the node plus all descendants) is non-empty and shorter than the
//! threshold — 2000 characters by default — that whole subtree becomes one
//! segment and is pruned from the queue. Oversize leaves are split on
//! whitespace into as many sub-threshold pieces as needed. The result is an
//! ordered list of chunks that each fit comfortably into a ranking model,
//! while following the page's own structural boundaries.
//!
//! Text is whitespace-normalized at parse time: each text node's runs of
//! whitespace collapse to single spaces and ends are trimmed. A node's text
//! is the space-joined concatenation of its descendant chunks, so cached
//! lengths are exact.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::ingest::SearchResult;

/// Default segment threshold in characters. Segments are always strictly
/// shorter than this. Tunable via configuration.
pub const DEFAULT_MAX_SEGMENT_CHARS: usize = 2000;

/// Tag used for text nodes.
pub const TEXT_TAG: &str = "#text";

/// Tags whose text never counts as visible page content.
const EXCLUDED_TAGS: &[&str] = &["script", "style", "head", "noscript", "template"];

/// A parsed DOM node: either an element with children or a text leaf.
/// The total visible text length is cached at construction and is exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomNode {
    tag: String,
    direct_text: String,
    children: Vec<DomNode>,
    total_text_len: usize,
}

impl DomNode {
    /// A text leaf. The raw text is whitespace-normalized; the node may end
    /// up empty (zero length), in which case the segmenter ignores it.
    pub fn text(raw: &str) -> Self {
        let normalized = normalize_ws(raw);
        let total_text_len = normalized.chars().count();
        DomNode {
            tag: TEXT_TAG.to_string(),
            direct_text: normalized,
            children: Vec::new(),
            total_text_len,
        }
    }

    /// An element node over the given children, text length precomputed.
    pub fn element(tag: &str, children: Vec<DomNode>) -> Self {
        let mut total = 0usize;
        let mut non_empty = 0usize;
        for child in &children {
            if child.total_text_len > 0 {
                total += child.total_text_len;
                non_empty += 1;
            }
        }
        if non_empty > 1 {
            total += non_empty - 1; // single-space joins between chunks
        }
        DomNode {
            tag: tag.to_string(),
            direct_text: String::new(),
            children,
            total_text_len: total,
        }
    }

    pub fn is_text(&self) -> bool {
        self.tag == TEXT_TAG
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn direct_text(&self) -> &str {
        &self.direct_text
    }

    pub fn children(&self) -> &[DomNode] {
        &self.children
    }

    /// Characters of visible text in this subtree (space-joined chunks).
    pub fn total_text_len(&self) -> usize {
        self.total_text_len
    }

    /// The subtree's visible text: descendant chunks joined by single
    /// spaces, in document order. Length always equals `total_text_len`.
    pub fn visible_text(&self) -> String {
        let mut out = String::with_capacity(self.total_text_len);
        self.collect_text(&mut out);
        out
    }

    fn collect_text(&self, out: &mut String) {
        if self.is_text() {
            if !self.direct_text.is_empty() {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(&self.direct_text);
            }
            return;
        }
        for child in &self.children {
            child.collect_text(out);
        }
    }
}

/// Where a segment came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentOrigin {
    WebPage,
    ApiResponse,
    Snippet,
}

/// A bounded, non-blank chunk of context text with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Position of the source document within the sample.
    pub doc_index: usize,
    pub text: String,
    /// `text.chars().count()`, cached.
    pub char_len: usize,
    pub origin: SegmentOrigin,
    /// Child indices from the document root; split fragments append their
    /// fragment ordinal to the split node's path.
    pub node_path: Vec<usize>,
}

impl Segment {
    pub fn new(doc_index: usize, text: String, origin: SegmentOrigin, node_path: Vec<usize>) -> Self {
        debug_assert!(text.chars().any(|c| !c.is_whitespace()));
        let char_len = text.chars().count();
        Segment {
            doc_index,
            text,
            char_len,
            origin,
            node_path,
        }
    }
}

/// Parses arbitrary HTML bytes into a [`DomNode`] tree. Never fails:
/// malformed markup degrades to whatever the lenient parser recovers, and
/// undecodable bytes are replaced. Script, style, head, noscript, template,
/// and comment content is excluded from visible text.
pub fn parse_html(raw: &[u8]) -> DomNode {
    let text = String::from_utf8_lossy(raw);
    let html = scraper::Html::parse_document(&text);
    convert_children_of(html.tree.root(), "#document")
}

fn convert_children_of(node: ego_tree::NodeRef<'_, scraper::Node>, tag: &str) -> DomNode {
    let mut children = Vec::new();
    for child in node.children() {
        match child.value() {
            scraper::Node::Text(t) => {
                let leaf = DomNode::text(&t.text);
                if leaf.total_text_len() > 0 {
                    children.push(leaf);
                }
            }
            scraper::Node::Element(el) => {
                let name = el.name();
                if EXCLUDED_TAGS.contains(&name) {
                    continue;
                }
                let converted = convert_children_of(child, name);
                if converted.total_text_len() > 0 {
                    children.push(converted);
                }
            }
            // Comments, doctypes, processing instructions carry no visible text.
            _ => {}
        }
    }
    DomNode::element(tag, children)
}

/// Breadth-first threshold segmentation. At each visited node: empty text
/// skips it, text shorter than `max_chars` emits the subtree as one segment
/// (pruning its children), anything else enqueues the children. Oversize
/// text leaves go through [`split_oversize_text`]. Output order is BFS
/// discovery order.
pub fn segment_tree(root: &DomNode, max_chars: usize, doc_index: usize) -> Vec<Segment> {
    assert!(max_chars >= 2, "max_chars must be at least 2");
    let mut segments = Vec::new();
    let mut queue: VecDeque<(&DomNode, Vec<usize>)> = VecDeque::new();
    queue.push_back((root, Vec::new()));

    while let Some((node, path)) = queue.pop_front() {
        let len = node.total_text_len();
        if len == 0 {
            continue;
        }
        if len < max_chars {
            segments.push(Segment::new(
                doc_index,
                node.visible_text(),
                SegmentOrigin::WebPage,
                path,
            ));
            continue;
        }
        if node.is_text() {
            for (ordinal, piece) in split_oversize_text(node.direct_text(), max_chars)
                .into_iter()
                .enumerate()
            {
                let mut fragment_path = path.clone();
                fragment_path.push(ordinal);
                segments.push(Segment::new(
                    doc_index,
                    piece,
                    SegmentOrigin::WebPage,
                    fragment_path,
                ));
            }
            continue;
        }
        for (i, child) in node.children().iter().enumerate() {
            let mut child_path = path.clone();
            child_path.push(i);
            queue.push_back((child, child_path));
        }
    }
    segments
}

/// Greedy whitespace split: packs tokens left to right into pieces strictly
/// shorter than `max_chars`, joined by single spaces. A single token at or
/// over the threshold is hard-split at character boundaries into pieces of
/// `max_chars - 1` characters (last piece may be shorter).
pub fn split_oversize_text(text: &str, max_chars: usize) -> Vec<String> {
    assert!(max_chars >= 2, "max_chars must be at least 2");
    let mut out = Vec::new();
    let mut current = String::new();
    let mut current_len = 0usize;

    for token in text.split_whitespace() {
        let token_len = token.chars().count();
        if token_len >= max_chars {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
                current_len = 0;
            }
            let chars: Vec<char> = token.chars().collect();
            for piece in chars.chunks(max_chars - 1) {
                out.push(piece.iter().collect());
            }
            continue;
        }
        let joined_len = if current.is_empty() {
            token_len
        } else {
            current_len + 1 + token_len
        };
        if joined_len < max_chars {
            if !current.is_empty() {
                current.push(' ');
            }
            current.push_str(token);
            current_len = joined_len;
        } else {
            out.push(std::mem::take(&mut current));
            current.push_str(token);
            current_len = token_len;
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Exposes a result's `page_snippet` as one extra ranking candidate.
/// Oversize snippets keep only their first split fragment.
pub fn snippet_segment(
    result: &SearchResult,
    doc_index: usize,
    max_chars: usize,
) -> Option<Segment> {
    let normalized = normalize_ws(&result.page_snippet);
    if normalized.is_empty() {
        return None;
    }
    let text = if normalized.chars().count() < max_chars {
        normalized
    } else {
        split_oversize_text(&normalized, max_chars).into_iter().next()?
    };
    Some(Segment::new(doc_index, text, SegmentOrigin::Snippet, Vec::new()))
}

/// Parses and segments one document in a single step.
pub fn segment_document(html: &[u8], max_chars: usize, doc_index: usize) -> Vec<Segment> {
    segment_tree(&parse_html(html), max_chars, doc_index)
}

/// Collapses whitespace runs to single spaces and trims the ends.
pub(crate) fn normalize_ws(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for token in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    #[test]
    fn parse_empty_input() {
        let root = parse_html(b"");
        assert_eq!(root.total_text_len(), 0);
    }

    #[test]
    fn parse_simple_paragraph() {
        let root = parse_html(b"<p>hi</p>");
        assert_eq!(root.visible_text(), "hi");
        assert_eq!(root.total_text_len(), 2);
    }

    #[test]
    fn parse_excludes_script_text() {
        let root = parse_html(b"<div><script>x=1</script>ok</div>");
        assert_eq!(root.visible_text(), "ok");
    }

    #[test]
    fn parse_excludes_style_head_noscript_comments() {
        let html = b"<html><head><title>T</title><style>p{}</style></head>\
<body><!-- c --><noscript>ns</noscript>body text</body></html>";
        let root = parse_html(html);
        assert_eq!(root.visible_text(), "body text");
    }

    #[test]
    fn parse_survives_malformed_markup() {
        let root = parse_html(b"<div><p>un<b>closed and <broken");
        let text = root.visible_text();
        assert!(text.contains("un") && text.contains("closed and"));
    }

    #[test]
    fn segment_empty_tree_yields_nothing() {
        let root = DomNode::element("#document", vec![]);
        assert!(segment_tree(&root, 2000, 0).is_empty());
    }

    #[test]
    fn segment_small_paragraph_whole() {
        let root = parse_html(b"<p>hello world</p>");
        let segments = segment_tree(&root, 2000, 0);
        assert_eq!(segments.len(), 1);
        assert_eq!(segments[0].text, "hello world");
        assert_eq!(segments[0].char_len, 11);
    }

    #[test]
    fn segment_splits_at_children_when_root_is_over_threshold() {
        let a = "a".repeat(1500);
        let b = "b".repeat(1500);
        let root = DomNode::element(
            "#document",
            vec![
                DomNode::element("div", vec![DomNode::text(&a)]),
                DomNode::element("div", vec![DomNode::text(&b)]),
            ],
        );
        let segments = segment_tree(&root, 2000, 0);
        assert_eq!(segments.len(), 2);
        assert_eq!(segments[0].text, a);
        assert_eq!(segments[1].text, b);
        assert_eq!(segments[0].node_path, vec![0]);
        assert_eq!(segments[1].node_path, vec![1]);
    }

    #[test]
    fn segment_bfs_emits_shallower_nodes_first() {
        // depth-1 sibling after a deep subtree still comes out in BFS order
        let deep = DomNode::element(
            "div",
            vec![
                DomNode::element("div", vec![DomNode::text(&"x".repeat(1200))]),
                DomNode::element("div", vec![DomNode::text(&"y".repeat(1200))]),
            ],
        );
        let shallow = DomNode::element("p", vec![DomNode::text("short")]);
        let root = DomNode::element("#document", vec![deep, shallow]);
        let segments = segment_tree(&root, 2000, 0);
        let texts: Vec<&str> = segments.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts[0], "short");
        assert_eq!(texts[1], "x".repeat(1200));
        assert_eq!(texts[2], "y".repeat(1200));
    }

    #[test]
    fn split_fits_in_one() {
        assert_eq!(split_oversize_text("a b", 10), vec!["a b".to_string()]);
    }

    #[test]
    fn split_packs_many_tokens_under_threshold() {
        let tokens: Vec<String> = (0..600).map(|i| format!("w{i:03}x")).collect();
        let text = tokens.join(" ");
        let pieces = split_oversize_text(&text, 2000);
        for piece in &pieces {
            assert!(piece.chars().count() < 2000);
        }
        let rejoined = pieces.join(" ");
        assert_eq!(rejoined, text);
    }

    #[test]
    fn split_hard_splits_giant_token() {
        let token = "z".repeat(3000);
        let pieces = split_oversize_text(&token, 2000);
        assert_eq!(pieces.len(), 2);
        assert_eq!(pieces[0].chars().count(), 1999);
        assert_eq!(pieces[1].chars().count(), 1001);
        assert_eq!(pieces.concat(), token);
    }

    #[test]
    fn snippet_empty_is_none() {
        let result = SearchResult::default();
        assert!(snippet_segment(&result, 0, 2000).is_none());
    }

    #[test]
    fn snippet_non_blank_becomes_segment() {
        let result = SearchResult {
            page_snippet: "Honolulu elevation is 6 m".to_string(),
            ..Default::default()
        };
        let seg = snippet_segment(&result, 3, 2000).unwrap();
        assert_eq!(seg.origin, SegmentOrigin::Snippet);
        assert_eq!(seg.doc_index, 3);
        assert_eq!(seg.text, "Honolulu elevation is 6 m");
    }

    #[test]
    fn snippet_oversize_keeps_first_fragment() {
        let result = SearchResult {
            page_snippet: "word ".repeat(1000),
            ..Default::default()
        };
        let seg = snippet_segment(&result, 0, 2000).unwrap();
        assert!(seg.char_len < 2000);
        assert!(seg.text.starts_with("word"));
    }

    #[test]
    fn determinism_identical_bytes_identical_segments() {
        let html = b"<div><p>alpha beta</p><p>gamma</p></div>";
        assert_eq!(segment_document(html, 2000, 0), segment_document(html, 2000, 0));
    }

    // -- property tests ------------------------------------------------

    fn char_multiset(text: &str) -> BTreeMap<char, usize> {
        let mut counts = BTreeMap::new();
        for c in text.chars().filter(|c| !c.is_whitespace()) {
            *counts.entry(c).or_insert(0) += 1;
        }
        counts
    }

    fn arb_tree() -> impl Strategy<Value = DomNode> {
        let leaf = "[a-d ]{0,120}".prop_map(|s| DomNode::text(&s));
        leaf.prop_recursive(5, 64, 6, |inner| {
            prop::collection::vec(inner, 0..6)
                .prop_map(|children| DomNode::element("div", children))
        })
    }

    proptest! {
        #[test]
        fn coverage_and_bound_hold_for_random_trees(tree in arb_tree(), max in 2usize..80) {
            let root = DomNode::element("#document", vec![tree]);
            let segments = segment_tree(&root, max, 0);
            let mut combined = BTreeMap::new();
            for seg in &segments {
                prop_assert!(seg.char_len < max);
                prop_assert_eq!(seg.char_len, seg.text.chars().count());
                for (c, n) in char_multiset(&seg.text) {
                    *combined.entry(c).or_insert(0) += n;
                }
            }
            prop_assert_eq!(combined, char_multiset(&root.visible_text()));
        }

        #[test]
        fn split_pieces_always_under_threshold(s in "[a-z ]{0,400}", max in 2usize..50) {
            for piece in split_oversize_text(&s, max) {
                prop_assert!(piece.chars().count() < max);
                prop_assert!(!piece.is_empty());
            }
        }

        #[test]
        fn split_preserves_tokens_when_none_oversize(
            tokens in prop::collection::vec("[a-z]{1,8}", 0..60),
        ) {
            let text = tokens.join(" ");
            let pieces = split_oversize_text(&text, 10);
            let rejoined = pieces.join(" ");
            prop_assert_eq!(
                rejoined.split_whitespace().collect::<Vec<_>>(),
                text.split_whitespace().collect::<Vec<_>>()
            );
        }
    }
}
