//! Static link extraction from HTML. Scripts are never executed.

use std::cell::RefCell;

use lol_html::{element, HtmlRewriter, Settings};

use super::scope::LinkRole;
use crate::model::CanonicalUri;

/// Elements whose `href`/`src` reference another resource.
pub(crate) const LINK_SELECTOR: &str =
    "a[href], area[href], link[href], base[href], img[src], script[src], source[src], iframe[src], embed[src], audio[src], video[src], track[src], input[src]";

const NAVIGATION_RELS: &[&str] = &[
    "alternate",
    "next",
    "prev",
    "canonical",
    "author",
    "help",
    "license",
    "search",
];

pub fn is_html(content_type: &str) -> bool {
    let mime = content_type
        .split(';')
        .next()
        .unwrap_or("")
        .trim()
        .to_ascii_lowercase();
    mime == "text/html" || mime == "application/xhtml+xml"
}

/// The attribute holding the reference and its role, for a tag matched by
/// [`LINK_SELECTOR`]. `None` for `<base>`.
pub(crate) fn reference_attr(tag: &str, rel: Option<&str>) -> Option<(&'static str, LinkRole)> {
    match tag {
        "a" | "area" => Some(("href", LinkRole::Navigation)),
        "link" => {
            let rel = rel.unwrap_or("").to_ascii_lowercase();
            let nav = rel
                .split_ascii_whitespace()
                .any(|r| NAVIGATION_RELS.contains(&r));
            Some((
                "href",
                if nav {
                    LinkRole::Navigation
                } else {
                    LinkRole::Embedded
                },
            ))
        }
        "base" => None,
        _ => Some(("src", LinkRole::Embedded)),
    }
}

/// Resolves an attribute value against `base`. Non-HTTP schemes and
/// fragment-only references yield `None`.
pub fn resolve_reference(base: &CanonicalUri, raw: &str) -> Option<CanonicalUri> {
    let raw = raw.trim();
    if raw.is_empty() || raw.starts_with('#') {
        return None;
    }
    let lower = raw.to_ascii_lowercase();
    if let Some((scheme, _)) = lower.split_once(':') {
        let is_scheme = !scheme.is_empty()
            && scheme
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c));
        if is_scheme && scheme != "http" && scheme != "https" {
            return None;
        }
    }
    base.join(raw).ok()
}

/// Links in an HTML body, in document order, with duplicates removed.
/// Non-HTML content yields nothing.
pub fn extract_links(
    body: &[u8],
    content_type: &str,
    base: &CanonicalUri,
) -> Vec<(CanonicalUri, LinkRole)> {
    if !is_html(content_type) {
        return Vec::new();
    }
    let base = RefCell::new(base.clone());
    let found: RefCell<Vec<(CanonicalUri, LinkRole)>> = RefCell::new(Vec::new());
    let mut rewriter = HtmlRewriter::new(
        Settings {
            element_content_handlers: vec![element!(LINK_SELECTOR, |el| {
                let tag = el.tag_name();
                let rel = el.get_attribute("rel");
                match reference_attr(&tag, rel.as_deref()) {
                    None => {
                        let href = el.get_attribute("href").unwrap_or_default();
                        let next = resolve_reference(&base.borrow(), &href);
                        if let Some(next) = next {
                            *base.borrow_mut() = next;
                        }
                    }
                    Some((attr, role)) => {
                        let value = el.get_attribute(attr).unwrap_or_default();
                        if let Some(uri) = resolve_reference(&base.borrow(), &value) {
                            found.borrow_mut().push((uri, role));
                        }
                    }
                }
                Ok(())
            })],
            ..Settings::new()
        },
        |_: &[u8]| {},
    );
    // Malformed markup degrades to whatever was collected so far.
    match rewriter.write(body) {
        Ok(()) => {
            let _ = rewriter.end();
        }
        Err(_) => drop(rewriter),
    }
    let mut seen = std::collections::HashSet::new();
    found
        .into_inner()
        .into_iter()
        .filter(|link| seen.insert(link.clone()))
        .collect()
}
