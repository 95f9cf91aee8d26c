use std::cell::RefCell;

use lol_html::{element, HtmlRewriter, Settings};

use super::urim::UriM;
use crate::crawler::{is_html, reference_attr, resolve_reference, LINK_SELECTOR};

/// Rewrites `href`/`src` references in an HTML payload to URI-Ms under the
/// context's timestamp. Everything outside those attributes, scripts
/// included, is left as it was. Non-HTML payloads are returned unchanged.
pub fn rewrite_links(body: &[u8], content_type: &str, context: &UriM) -> Vec<u8> {
    if !is_html(content_type) {
        return body.to_vec();
    }
    let base = RefCell::new(context.target.clone());
    let mut out = Vec::with_capacity(body.len() + body.len() / 4);
    let result = {
        let mut rewriter = HtmlRewriter::new(
            Settings {
                element_content_handlers: vec![element!(LINK_SELECTOR, |el| {
                    let tag = el.tag_name();
                    let rel = el.get_attribute("rel");
                    let attr = reference_attr(&tag, rel.as_deref()).map_or("href", |(a, _)| a);
                    let value = el.get_attribute(attr).unwrap_or_default();
                    let resolved = resolve_reference(&base.borrow(), &value);
                    if let Some(uri) = resolved {
                        if tag == "base" {
                            *base.borrow_mut() = uri.clone();
                        }
                        el.set_attribute(attr, &context.with_target(uri).to_string())?;
                    }
                    Ok(())
                })],
                ..Settings::new()
            },
            |chunk: &[u8]| out.extend_from_slice(chunk),
        );
        rewriter.write(body).and_then(|_| rewriter.end())
    };
    match result {
        Ok(()) => out,
        Err(e) => {
            tracing::debug!(error = %e, "html rewrite failed, serving payload unchanged");
            body.to_vec()
        }
    }
}
