/// Smallest offset at which `pattern` occurs in `text`, by Knuth-Morris-Pratt.
/// An empty pattern matches at 0.
pub fn kmp_find<T: PartialEq>(pattern: &[T], text: &[T]) -> Option<usize> {
    if pattern.is_empty() {
        return Some(0);
    }
    // failure[i]: length of the longest proper border of pattern[..=i]
    let mut failure = vec![0usize; pattern.len()];
    let mut k = 0;
    for i in 1..pattern.len() {
        while k > 0 && pattern[i] != pattern[k] {
            k = failure[k - 1];
        }
        if pattern[i] == pattern[k] {
            k += 1;
        }
        failure[i] = k;
    }
    let mut q = 0;
    for (i, t) in text.iter().enumerate() {
        while q > 0 && *t != pattern[q] {
            q = failure[q - 1];
        }
        if *t == pattern[q] {
            q += 1;
        }
        if q == pattern.len() {
            return Some(i + 1 - q);
        }
    }
    None
}

/// Quadratic reference search with the same contract as [`kmp_find`].
pub fn naive_find<T: PartialEq>(pattern: &[T], text: &[T]) -> Option<usize> {
    if pattern.len() > text.len() {
        return if pattern.is_empty() { Some(0) } else { None };
    }
    (0..=text.len() - pattern.len()).find(|&i| text[i..i + pattern.len()] == *pattern)
}
