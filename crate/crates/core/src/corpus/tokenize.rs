/// Splits text into word-level tokens.
///
/// Words are separated on Unicode whitespace. Leading and trailing
/// non-alphanumeric characters are peeled off one character at a time and
/// become tokens of their own, so `"Bell."` yields `["Bell", "."]` while
/// `"don't"` stays whole. Case is preserved.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        push_word(word, &mut out);
    }
    out
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

fn push_word<'a>(word: &'a str, out: &mut Vec<&'a str>) {
    let mut rest = word;
    while let Some(c) = rest.chars().next() {
        if !is_punct(c) {
            break;
        }
        let (head, tail) = rest.split_at(c.len_utf8());
        out.push(head);
        rest = tail;
    }
    if rest.is_empty() {
        return;
    }
    let mut trailing = Vec::new();
    while let Some(c) = rest.chars().next_back() {
        if !is_punct(c) {
            break;
        }
        let (head, tail) = rest.split_at(rest.len() - c.len_utf8());
        trailing.push(tail);
        rest = head;
    }
    out.push(rest);
    out.extend(trailing.into_iter().rev());
}

/// Non-empty lines of `text`; each one is a sentence for BOS/EOS framing.
pub fn sentences(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter(|l| !l.trim().is_empty())
}
