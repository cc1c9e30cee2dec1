/// Calls that open interactive viewers and never return in a headless run.
pub const DEFAULT_BLOCKLIST: &[&str] = &["LayoutViewer"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sanitized {
    pub source: String,
    /// Removed lines, without their terminators.
    pub hits: Vec<String>,
}

/// Drops every line containing any of `blocklist` as a substring. Other lines,
/// including their terminators, are kept byte for byte.
pub fn sanitize(source: &str, blocklist: &[impl AsRef<str>]) -> Sanitized {
    let mut kept = String::with_capacity(source.len());
    let mut hits = Vec::new();
    for line in source.split_inclusive('\n') {
        let bare = line.trim_end_matches(['\n', '\r']);
        if blocklist.iter().any(|p| !p.as_ref().is_empty() && bare.contains(p.as_ref())) {
            hits.push(bare.to_string());
        } else {
            kept.push_str(line);
        }
    }
    Sanitized { source: kept, hits }
}
