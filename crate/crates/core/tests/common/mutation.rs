//! Text mutations of valid workflows, for gate-discipline checks.

use proptest::prelude::*;

#[derive(Debug, Clone)]
pub enum Mutation {
    DeleteLine(usize),
    DuplicateLine(usize),
    SwapLines(usize, usize),
    Indent(usize),
    Dedent(usize),
    DeleteChar(usize),
    InsertText(usize, String),
    RenameEvent(String),
}

pub fn mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        any::<usize>().prop_map(Mutation::DeleteLine),
        any::<usize>().prop_map(Mutation::DuplicateLine),
        (any::<usize>(), any::<usize>()).prop_map(|(a, b)| Mutation::SwapLines(a, b)),
        any::<usize>().prop_map(Mutation::Indent),
        any::<usize>().prop_map(Mutation::Dedent),
        any::<usize>().prop_map(Mutation::DeleteChar),
        (any::<usize>(), prop_oneof![
            Just(": ".to_string()),
            Just("[".to_string()),
            Just("\"".to_string()),
            Just("- ".to_string()),
            Just("\t".to_string()),
            Just("runs-on: ".to_string()),
            Just("uses: ".to_string()),
            "[ -~]{1,6}",
        ])
            .prop_map(|(at, s)| Mutation::InsertText(at, s)),
        "[a-z_]{1,10}".prop_map(Mutation::RenameEvent),
    ]
}

pub fn apply(src: &str, m: &Mutation) -> String {
    let mut lines: Vec<String> = src.lines().map(str::to_string).collect();
    let n = lines.len().max(1);
    match m {
        Mutation::DeleteLine(i) => {
            lines.remove(i % lines.len());
        }
        Mutation::DuplicateLine(i) => {
            let l = lines[i % n].clone();
            lines.insert(i % n, l);
        }
        Mutation::SwapLines(a, b) => lines.swap(a % n, b % n),
        Mutation::Indent(i) => lines[i % n].insert_str(0, "  "),
        Mutation::Dedent(i) => {
            let l = &mut lines[i % n];
            let cut = l.len() - l.trim_start().len();
            l.replace_range(..cut.min(2), "");
        }
        Mutation::DeleteChar(i) => {
            let text = lines.join("\n");
            let chars: Vec<char> = text.chars().collect();
            let at = i % chars.len();
            return chars[..at].iter().chain(&chars[at + 1..]).collect();
        }
        Mutation::InsertText(i, s) => {
            let text = lines.join("\n");
            let mut at = i % (text.len() + 1);
            while !text.is_char_boundary(at) {
                at -= 1;
            }
            return format!("{}{}{}", &text[..at], s, &text[at..]);
        }
        Mutation::RenameEvent(e) => {
            return src.replacen("push", e, 1);
        }
    }
    lines.join("\n")
}