//! Single-aspect span extraction from multi-aspect reviews using frequent
//! `word :` markers as segment boundaries.

use std::collections::{HashMap, HashSet};

const COLON: &str = ":";

/// Words `w` whose pattern `w :` occurs strictly more than `freq_threshold`
/// times across `reviews`.
pub fn anchor_patterns<S: AsRef<str>>(reviews: &[Vec<S>], freq_threshold: usize) -> HashSet<String> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for review in reviews {
        for pair in review.windows(2) {
            let (w, next) = (pair[0].as_ref(), pair[1].as_ref());
            if next == COLON && w != COLON {
                *counts.entry(w).or_insert(0) += 1;
            }
        }
    }
    counts
        .into_iter()
        .filter(|&(_, c)| c > freq_threshold)
        .map(|(w, _)| w.to_string())
        .collect()
}

/// For every occurrence of a target anchor (`appearance :`, `a :`, ...),
/// emits the tokens after it up to the next anchor pattern or the end of
/// the review. Reviews without a target anchor contribute nothing; empty
/// spans are dropped.
pub fn extract_aspect<S: AsRef<str>>(
    reviews: &[Vec<S>],
    target_markers: &HashSet<String>,
    freq_threshold: usize,
) -> Vec<Vec<String>> {
    let anchors = anchor_patterns(reviews, freq_threshold);
    let is_anchor_at = |review: &[S], i: usize| {
        i + 1 < review.len()
            && review[i + 1].as_ref() == COLON
            && anchors.contains(review[i].as_ref())
    };
    let mut spans = Vec::new();
    for review in reviews {
        let mut i = 0;
        while i < review.len() {
            if is_anchor_at(review, i) && target_markers.contains(review[i].as_ref()) {
                let start = i + 2;
                let mut end = start;
                while end < review.len() && !is_anchor_at(review, end) {
                    end += 1;
                }
                if end > start {
                    spans.push(review[start..end].iter().map(|s| s.as_ref().to_string()).collect());
                }
                i = end;
            } else {
                i += 1;
            }
        }
    }
    spans
}
