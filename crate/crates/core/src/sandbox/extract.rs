use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("response contains no fenced code block")]
    NoCodeBlock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractWarning {
    /// Several candidate blocks; the first was used.
    MultipleBlocks(usize),
    /// No block was tagged as Python; an untagged one was used.
    UntaggedBlock,
    /// The response ended inside a block.
    UnterminatedBlock,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extracted {
    pub source: String,
    pub warnings: Vec<ExtractWarning>,
}

struct Block {
    info: String,
    body: String,
    terminated: bool,
}

/// Opening fence: up to three spaces, then three or more backticks or tildes.
fn fence(line: &str) -> Option<(char, usize, &str)> {
    let trimmed = line.trim_start_matches(' ');
    if line.len() - trimmed.len() > 3 {
        return None;
    }
    let ch = trimmed.chars().next().filter(|c| *c == '`' || *c == '~')?;
    let n = trimmed.chars().take_while(|c| *c == ch).count();
    (n >= 3).then(|| (ch, n, trimmed[n..].trim()))
}

fn blocks(text: &str) -> Vec<Block> {
    let mut out = Vec::new();
    let mut lines = text.split_inclusive('\n');
    while let Some(line) = lines.next() {
        let Some((ch, n, info)) = fence(line.trim_end_matches(['\n', '\r'])) else { continue };
        if ch == '`' && info.contains('`') {
            continue;
        }
        let mut body = String::new();
        let mut terminated = false;
        for inner in lines.by_ref() {
            let bare = inner.trim_end_matches(['\n', '\r']);
            if let Some((c2, n2, rest)) = fence(bare) {
                if c2 == ch && n2 >= n && rest.is_empty() {
                    terminated = true;
                    break;
                }
            }
            body.push_str(inner);
        }
        out.push(Block {
            info: info.to_string(),
            body,
            terminated,
        });
    }
    out
}

fn is_python(info: &str) -> bool {
    let lang = info.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
    matches!(lang.as_str(), "python" | "python3" | "py")
}

/// Body of the first Python-tagged fenced block, or of an untagged block when
/// none is tagged.
pub fn extract_code(response: &str) -> Result<Extracted, ExtractError> {
    let all = blocks(response);
    let tagged: Vec<&Block> = all.iter().filter(|b| is_python(&b.info)).collect();
    let mut warnings = Vec::new();
    let chosen = if !tagged.is_empty() {
        if tagged.len() > 1 {
            warnings.push(ExtractWarning::MultipleBlocks(tagged.len()));
        }
        tagged[0]
    } else {
        let untagged: Vec<&Block> = all.iter().filter(|b| b.info.is_empty()).collect();
        let first = *untagged.first().ok_or(ExtractError::NoCodeBlock)?;
        warnings.push(ExtractWarning::UntaggedBlock);
        if untagged.len() > 1 {
            warnings.push(ExtractWarning::MultipleBlocks(untagged.len()));
        }
        first
    };
    if !chosen.terminated {
        warnings.push(ExtractWarning::UnterminatedBlock);
    }
    Ok(Extracted {
        source: chosen.body.clone(),
        warnings,
    })
}
