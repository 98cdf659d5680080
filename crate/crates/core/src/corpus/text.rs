use crate::{Error, Result};

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|piece| !piece.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn strip_scheme(url: &str) -> &str {
    for scheme in ["http://", "https://"] {
        if url.len() >= scheme.len() && url[..scheme.len()].eq_ignore_ascii_case(scheme) {
            return &url[scheme.len()..];
        }
    }
    url
}

/// Tokenizes a URL after dropping an `http://` or `https://` prefix.
pub fn tokenize_url(url: &str) -> Vec<String> {
    tokenize(strip_scheme(url))
}

/// Lowercase host of a URL, without scheme, credentials or port.
/// Returns an empty string when no host can be found.
pub fn extract_domain(raw_url: &str) -> String {
    let trimmed = raw_url.trim();
    let rest = match trimmed.find("://") {
        Some(i) => &trimmed[i + 3..],
        None => trimmed,
    };
    let authority = rest.split(['/', '?', '#']).next().unwrap_or("");
    let host = authority.rsplit('@').next().unwrap_or("");
    let host = match host.rfind(':') {
        Some(i) if host[i + 1..].chars().all(|c| c.is_ascii_digit()) => &host[..i],
        _ => host,
    };
    if host.is_empty() || host.chars().any(|c| c.is_whitespace()) {
        return String::new();
    }
    host.to_lowercase()
}

/// A window of body tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Passage {
    pub doc_id: String,
    pub start: usize,
    pub tokens: Vec<String>,
}

/// Offsets and lengths of overlapping windows over `len` tokens.
///
/// Windows start every `width - overlap` tokens and stop once a window
/// reaches the end; a sequence no longer than `width` gives one window.
pub fn passage_spans(len: usize, width: usize, overlap: usize) -> Result<Vec<(usize, usize)>> {
    if width <= overlap {
        return Err(Error::InvalidConfig(format!(
            "passage width {width} must exceed overlap {overlap}"
        )));
    }
    let stride = width - overlap;
    let mut spans = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + width).min(len);
        spans.push((start, end - start));
        if start + width >= len {
            break;
        }
        start += stride;
    }
    Ok(spans)
}

pub fn segment_passages(
    doc_id: &str,
    body_tokens: &[String],
    width: usize,
    overlap: usize,
) -> Result<Vec<Passage>> {
    Ok(passage_spans(body_tokens.len(), width, overlap)?
        .into_iter()
        .map(|(start, len)| Passage {
            doc_id: doc_id.to_string(),
            start,
            tokens: body_tokens[start..start + len].to_vec(),
        })
        .collect())
}
