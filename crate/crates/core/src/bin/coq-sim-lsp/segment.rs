//! Splits a document into sentences the way Coq's lexer does.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub start: usize,
    pub end: usize,
    /// Set when the text ran out before a terminating `.`.
    pub unterminated: bool,
}

pub fn sentences(text: &str) -> Vec<Sentence> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    loop {
        i = skip_blank(b, i);
        if i >= b.len() {
            break;
        }
        let start = i;
        match b[i] {
            b'{' | b'}' => {
                out.push(Sentence { start, end: i + 1, unterminated: false });
                i += 1;
                continue;
            }
            c @ (b'-' | b'+' | b'*') => {
                let mut j = i;
                while j < b.len() && b[j] == c {
                    j += 1;
                }
                out.push(Sentence { start, end: j, unterminated: false });
                i = j;
                continue;
            }
            _ => {}
        }
        let mut j = i;
        let mut done = false;
        while j < b.len() {
            if starts_comment(b, j) {
                j = skip_comment(b, j);
                continue;
            }
            match b[j] {
                b'"' => j = skip_string(b, j),
                b'.' => {
                    let next = b.get(j + 1).copied();
                    j += 1;
                    if next.is_none() || next.is_some_and(|c| c.is_ascii_whitespace()) {
                        done = true;
                        break;
                    }
                }
                _ => j += 1,
            }
        }
        out.push(Sentence { start, end: j, unterminated: !done });
        i = j;
    }
    out
}

fn starts_comment(b: &[u8], i: usize) -> bool {
    b.get(i) == Some(&b'(') && b.get(i + 1) == Some(&b'*')
}

fn skip_comment(b: &[u8], mut i: usize) -> usize {
    let mut depth = 0;
    while i < b.len() {
        if starts_comment(b, i) {
            depth += 1;
            i += 2;
        } else if b[i] == b'*' && b.get(i + 1) == Some(&b')') {
            depth -= 1;
            i += 2;
            if depth == 0 {
                return i;
            }
        } else if b[i] == b'"' {
            i = skip_string(b, i);
        } else {
            i += 1;
        }
    }
    b.len()
}

fn skip_string(b: &[u8], mut i: usize) -> usize {
    i += 1;
    while i < b.len() {
        if b[i] == b'"' {
            // `""` is an escaped quote inside a Coq string.
            if b.get(i + 1) == Some(&b'"') {
                i += 2;
                continue;
            }
            return i + 1;
        }
        i += 1;
    }
    b.len()
}

fn skip_blank(b: &[u8], mut i: usize) -> usize {
    loop {
        while i < b.len() && b[i].is_ascii_whitespace() {
            i += 1;
        }
        if starts_comment(b, i) {
            i = skip_comment(b, i);
        } else {
            return i;
        }
    }
}

/// Text of a sentence without its comments, with the final `.` removed.
pub fn strip(text: &str) -> String {
    let b = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut last = 0;
    while i < b.len() {
        if starts_comment(b, i) {
            out.push_str(&text[last..i]);
            out.push(' ');
            i = skip_comment(b, i);
            last = i;
        } else if b[i] == b'"' {
            i = skip_string(b, i);
        } else {
            i += 1;
        }
    }
    out.push_str(&text[last..]);
    let trimmed = out.trim_end();
    trimmed.strip_suffix('.').unwrap_or(trimmed).trim().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<&str> {
        sentences(src).iter().map(|s| &src[s.start..s.end]).collect()
    }

    #[test]
    fn sample_sentences() {
        let src = "Require Import List.\nLemma rev_append: forall {a} (l1 l2: list a),\n  rev (l1 ++ l2) = rev l2 ++ rev l1.\nProof.\nintros a l1 l2. induction l1; intros. \n  - simpl. rewrite app_nil_r. reflexivity.\n  - simpl. rewrite IHl1.\nAdmitted.\n";
        assert_eq!(texts(src).len(), 13);
        assert_eq!(texts(src)[0], "Require Import List.");
        assert_eq!(texts(src)[5], "-");
    }

    #[test]
    fn comments_and_qualified_names() {
        let src = "(* a. b. *) Require Coq.Lists.List. (* x *)\nCheck (* . *) O.";
        assert_eq!(texts(src), vec!["Require Coq.Lists.List.", "Check (* . *) O."]);
    }

    #[test]
    fn unterminated_tail() {
        let s = sentences("Check O. Check");
        assert_eq!(s.len(), 2);
        assert!(s[1].unterminated);
        assert!(!s[0].unterminated);
    }

    #[test]
    fn strings_hide_dots() {
        let src = "Notation \"x . y\" := (app x y) (at level 60).";
        assert_eq!(texts(src).len(), 1);
    }

    #[test]
    fn strip_removes_comment_and_dot() {
        assert_eq!(strip("Check (* c *) O."), "Check   O");
    }
}
