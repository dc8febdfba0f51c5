//! HTML to plain text for evidence documents.
//!
//! Rules: drop `head`, `script`, `style`, `noscript`, `template`, `svg`,
//! `iframe`, `nav` and `footer` subtrees; block-level elements and `br` end a
//! line; source line breaks count as spaces, whitespace inside a line
//! collapses to one space, and blank lines go.

use scraper::{Html, Node};

const SKIPPED: [&str; 9] = [
    "head", "script", "style", "noscript", "template", "svg", "iframe", "nav", "footer",
];

const BLOCKS: [&str; 30] = [
    "address", "article", "aside", "blockquote", "body", "dd", "details", "div", "dl", "dt",
    "figcaption", "figure", "form", "h1", "h2", "h3", "h4", "h5", "h6", "header", "hr", "li",
    "main", "ol", "p", "pre", "section", "table", "tr", "ul",
];

fn walk(node: ego_tree::NodeRef<'_, Node>, out: &mut String) {
    for child in node.children() {
        match child.value() {
            Node::Text(t) => out.extend(t.chars().map(|c| if c.is_whitespace() { ' ' } else { c })),
            Node::Element(el) => {
                let name = el.name();
                if SKIPPED.contains(&name) {
                    continue;
                }
                if name == "br" {
                    out.push('\n');
                    continue;
                }
                let block = BLOCKS.contains(&name) || name == "td" || name == "th";
                if block {
                    out.push('\n');
                }
                walk(child, out);
                if block {
                    out.push('\n');
                }
            }
            _ => {}
        }
    }
}

pub fn extract_text(html: &str) -> String {
    let doc = Html::parse_document(html);
    let mut raw = String::new();
    walk(doc.tree.root(), &mut raw);
    raw.lines()
        .map(|line| line.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|line| !line.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}
