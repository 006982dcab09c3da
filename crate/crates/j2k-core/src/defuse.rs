//! Lightweight definition/use analysis over notebook cell source.
//!
//! This is a line-oriented scan, not a full parser. Comments and string
//! literals (including f-strings) are stripped first, then each logical line
//! is matched against a small set of binding forms: simple and tuple
//! assignment, augmented assignment, `import`/`from ... import`, `def`,
//! `class`, `for`, and `with`. Anything else is treated as an expression
//! statement whose identifiers are reads. A line that looks like a binding
//! form but cannot be parsed contributes conservatively: every identifier on
//! it becomes a use, none become defs, and `lossy_lines` is incremented.
//!
//! Reads inside function bodies are attributed to the defining cell at
//! definition time, and the use set contains every read in the cell, even
//! when the name is also defined earlier in the same cell (the graph builder
//! resolves those against sequential notebook order).

/// Names never treated as cross-cell uses.
pub const BUILTIN_ALLOWLIST: &[&str] = &[
    "print",
    "len",
    "range",
    "enumerate",
    "zip",
    "list",
    "dict",
    "set",
    "tuple",
    "str",
    "int",
    "float",
    "bool",
    "open",
    "sum",
    "min",
    "max",
    "abs",
    "sorted",
    "map",
    "filter",
    "type",
    "isinstance",
    "Exception",
];

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "case", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if",
    "import", "in", "is", "lambda", "match", "nonlocal", "not", "or", "pass", "raise", "return",
    "try", "while", "with", "yield",
];

/// Per-cell analysis result. All three name lists are ordered by first
/// appearance and free of duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DefUseSet {
    pub defs: Vec<String>,
    pub uses: Vec<String>,
    pub imports: Vec<String>,
    /// Lines that looked like a binding form but could not be parsed and
    /// fell back to the conservative all-uses contribution.
    pub lossy_lines: usize,
}

impl DefUseSet {
    fn add_def(&mut self, name: &str) {
        if !self.defs.iter().any(|d| d == name) {
            self.defs.push(name.to_owned());
        }
    }

    fn add_import(&mut self, module: &str) {
        if !self.imports.iter().any(|m| m == module) {
            self.imports.push(module.to_owned());
        }
    }
}

/// Extra names to treat as builtins, merged with [`BUILTIN_ALLOWLIST`].
#[derive(Debug, Clone, Default)]
pub struct DefUseOptions {
    pub extra_builtins: Vec<String>,
}

impl DefUseOptions {
    fn is_builtin(&self, name: &str) -> bool {
        BUILTIN_ALLOWLIST.contains(&name) || self.extra_builtins.iter().any(|b| b == name)
    }
}

/// Analyzes one cell's source with the default builtin allowlist.
pub fn extract_def_use(source: &str) -> DefUseSet {
    extract_def_use_with(source, &DefUseOptions::default())
}

/// Analyzes one cell's source. Never fails; see module docs for the
/// conservative fallback.
pub fn extract_def_use_with(source: &str, opts: &DefUseOptions) -> DefUseSet {
    let mut set = DefUseSet::default();
    for line in logical_lines(source) {
        scan_line(&line, opts, &mut set);
    }
    set
}

/// Returns the contents of every string literal in the source, in order.
/// Used for best-effort input-file detection.
pub fn string_literals(source: &str) -> Vec<String> {
    let mut literals = Vec::new();
    strip_strings(source, Some(&mut literals));
    literals
}

/// Strips comments and string literals, then joins backslash continuations.
fn logical_lines(source: &str) -> Vec<String> {
    let cleaned = strip_strings(source, None);
    let mut lines: Vec<String> = Vec::new();
    let mut pending: Option<String> = None;
    for line in cleaned.lines() {
        let mut current = pending.take().unwrap_or_default();
        if let Some(stripped) = line.strip_suffix('\\') {
            current.push_str(stripped);
            current.push(' ');
            pending = Some(current);
        } else {
            current.push_str(line);
            lines.push(current);
        }
    }
    if let Some(rest) = pending {
        lines.push(rest);
    }
    lines
}

#[derive(Clone, Copy, PartialEq)]
enum StrState {
    None,
    Single(char),
    Triple(char),
}

/// Replaces every string literal with a single space and drops `#` comments.
/// Triple-quoted strings may span lines; the newline structure of the code
/// outside literals is preserved. When `collect` is given, literal contents
/// are pushed onto it.
fn strip_strings(source: &str, mut collect: Option<&mut Vec<String>>) -> String {
    let chars: Vec<char> = source.chars().collect();
    let mut out = String::with_capacity(source.len());
    let mut literal = String::new();
    let mut state = StrState::None;
    let mut raw = false;
    let mut i = 0usize;

    while i < chars.len() {
        let c = chars[i];
        match state {
            StrState::None => {
                if c == '#' {
                    // Comment runs to end of line.
                    while i < chars.len() && chars[i] != '\n' {
                        i += 1;
                    }
                    continue;
                }
                if c == '\'' || c == '"' {
                    raw = trim_string_prefix(&mut out);
                    if chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c) {
                        state = StrState::Triple(c);
                        i += 3;
                    } else {
                        state = StrState::Single(c);
                        i += 1;
                    }
                    out.push(' ');
                    literal.clear();
                    continue;
                }
                out.push(c);
                i += 1;
            }
            StrState::Single(q) => {
                if c == '\\' && !raw && i + 1 < chars.len() {
                    literal.push(c);
                    literal.push(chars[i + 1]);
                    i += 2;
                    continue;
                }
                if c == q || c == '\n' {
                    // Unterminated single-quoted strings end at the newline.
                    if c == '\n' {
                        out.push('\n');
                    }
                    finish_literal(&mut collect, &mut literal);
                    state = StrState::None;
                    i += 1;
                    continue;
                }
                literal.push(c);
                i += 1;
            }
            StrState::Triple(q) => {
                if c == '\\' && !raw && i + 1 < chars.len() {
                    literal.push(c);
                    literal.push(chars[i + 1]);
                    i += 2;
                    continue;
                }
                if c == q && chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q) {
                    finish_literal(&mut collect, &mut literal);
                    state = StrState::None;
                    i += 3;
                    continue;
                }
                if c == '\n' {
                    out.push('\n');
                }
                literal.push(c);
                i += 1;
            }
        }
    }
    finish_literal(&mut collect, &mut literal);
    out
}

fn finish_literal(collect: &mut Option<&mut Vec<String>>, literal: &mut String) {
    if !literal.is_empty() {
        if let Some(sink) = collect.as_deref_mut() {
            sink.push(std::mem::take(literal));
        } else {
            literal.clear();
        }
    }
}

/// Removes a short `r`/`b`/`f`/`u` string prefix that was already copied to
/// the cleaned output, returning whether it marks a raw string.
fn trim_string_prefix(out: &mut String) -> bool {
    let tail: String = out
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
        .collect();
    if tail.is_empty() || tail.len() > 2 {
        return false;
    }
    if tail
        .chars()
        .all(|c| matches!(c, 'r' | 'b' | 'f' | 'u' | 'R' | 'B' | 'F' | 'U'))
    {
        out.truncate(out.len() - tail.len());
        return tail.chars().any(|c| matches!(c, 'r' | 'R'));
    }
    false
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && !KEYWORDS.contains(&s)
}

fn scan_line(line: &str, opts: &DefUseOptions, set: &mut DefUseSet) {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return;
    }

    let ok = if let Some(rest) = strip_keyword(trimmed, "import") {
        scan_import(rest, set)
    } else if let Some(rest) = strip_keyword(trimmed, "from") {
        scan_from_import(rest, set)
    } else if let Some(rest) = strip_def_keyword(trimmed) {
        scan_def(rest, opts, set)
    } else if let Some(rest) = strip_keyword(trimmed, "class") {
        scan_class(rest, opts, set)
    } else if let Some(rest) = strip_keyword(trimmed, "for") {
        scan_for(rest, opts, set)
    } else if let Some(rest) = strip_keyword(trimmed, "with") {
        scan_with(rest, opts, set)
    } else if let Some((lhs, rhs)) = split_augmented(trimmed) {
        scan_augmented(lhs, rhs, opts, set)
    } else if let Some((lhs, rhs)) = split_assignment(trimmed) {
        scan_assignment(lhs, rhs, opts, set)
    } else {
        // Expression statement: every identifier read counts as a use.
        scan_expression(trimmed, opts, set);
        true
    };

    if !ok {
        // Conservative fallback: all identifiers become uses, none defs.
        set.lossy_lines += 1;
        scan_expression(trimmed, opts, set);
    }
}

fn strip_keyword<'a>(line: &'a str, kw: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(kw)?;
    if rest.starts_with(char::is_whitespace) {
        Some(rest.trim_start())
    } else {
        None
    }
}

fn strip_def_keyword(line: &str) -> Option<&str> {
    let line = strip_keyword(line, "async").unwrap_or(line);
    strip_keyword(line, "def")
}

/// `import mod.sub as alias, other` — defs the bound aliases, records the
/// top-level module names.
fn scan_import(rest: &str, set: &mut DefUseSet) -> bool {
    let rest = rest.trim_end_matches(':').trim();
    if rest.is_empty() {
        return false;
    }
    let mut bindings = Vec::new();
    for part in rest.split(',') {
        let part = part.trim();
        let (module, alias) = match part.split_once(" as ") {
            Some((m, a)) => (m.trim(), Some(a.trim())),
            None => (part, None),
        };
        let top = module.split('.').next().unwrap_or("");
        if !is_ident(top) || !module.split('.').all(is_ident) {
            return false;
        }
        if let Some(a) = alias {
            if !is_ident(a) {
                return false;
            }
        }
        bindings.push((top.to_owned(), alias.unwrap_or(top).to_owned()));
    }
    for (module, bound) in bindings {
        set.add_import(&module);
        set.add_def(&bound);
    }
    true
}

/// `from mod.sub import a as b, c` — defs the imported names, records the
/// top-level module. Star imports fall back to the lossy path.
fn scan_from_import(rest: &str, set: &mut DefUseSet) -> bool {
    let Some((module_part, names_part)) = rest.split_once(" import ") else {
        return false;
    };
    let module = module_part.trim().trim_start_matches('.');
    let top = module.split('.').next().unwrap_or("");
    let names = names_part
        .trim()
        .trim_start_matches('(')
        .trim_end_matches(')')
        .trim();
    if names.contains('*') {
        return false;
    }
    let mut bindings = Vec::new();
    for part in names.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue; // trailing comma in a parenthesized list
        }
        let bound = match part.split_once(" as ") {
            Some((n, a)) => {
                if !is_ident(n.trim()) {
                    return false;
                }
                a.trim()
            }
            None => part,
        };
        if !is_ident(bound) {
            return false;
        }
        bindings.push(bound.to_owned());
    }
    if bindings.is_empty() {
        return false;
    }
    // A purely relative import (`from . import x`) records no module.
    if !top.is_empty() {
        if !module.split('.').all(is_ident) {
            return false;
        }
        set.add_import(top);
    }
    for bound in bindings {
        set.add_def(&bound);
    }
    true
}

/// `def name(params) -> ret:` — defs the function name; parameter names are
/// binding positions while annotations and defaults are reads.
fn scan_def(rest: &str, opts: &DefUseOptions, set: &mut DefUseSet) -> bool {
    let Some(open) = rest.find('(') else {
        return false;
    };
    let name = rest[..open].trim();
    if !is_ident(name) {
        return false;
    }
    let Some(close) = find_matching_paren(rest, open) else {
        return false;
    };
    set.add_def(name);
    for param in split_top_level(&rest[open + 1..close], ',') {
        let param = param.trim().trim_start_matches('*').trim();
        if param.is_empty() {
            continue;
        }
        // Everything after the annotation/default separator is read.
        let boundary = param.find([':', '=']);
        if let Some(b) = boundary {
            scan_expression(&param[b + 1..], opts, set);
        }
    }
    // Return annotation, if any.
    if let Some(arrow) = rest[close..].find("->") {
        let tail = rest[close + arrow + 2..].trim_end().trim_end_matches(':');
        scan_expression(tail, opts, set);
    }
    true
}

/// `class Name(Base, metaclass=m):` — defs the class name, reads the bases.
fn scan_class(rest: &str, opts: &DefUseOptions, set: &mut DefUseSet) -> bool {
    let rest = rest.trim_end().trim_end_matches(':');
    let (name, bases) = match rest.find('(') {
        Some(open) => {
            let Some(close) = find_matching_paren(rest, open) else {
                return false;
            };
            (rest[..open].trim(), Some(&rest[open + 1..close]))
        }
        None => (rest.trim(), None),
    };
    if !is_ident(name) {
        return false;
    }
    set.add_def(name);
    if let Some(bases) = bases {
        // Wrap in parens so keyword arguments like `metaclass=` are skipped.
        scan_expression(&format!("({bases})"), opts, set);
    }
    true
}

/// `for a, b in expr:` — defs the loop targets, reads the iterable.
fn scan_for(rest: &str, opts: &DefUseOptions, set: &mut DefUseSet) -> bool {
    let Some(pos) = find_top_level_word(rest, "in") else {
        return false;
    };
    let targets = &rest[..pos];
    let iterable = rest[pos + 2..].trim_end().trim_end_matches(':');
    let Some(names) = parse_target_list(targets) else {
        return false;
    };
    scan_expression(iterable, opts, set);
    for name in names {
        set.add_def(&name);
    }
    true
}

/// `with expr as name, expr2:` — reads the context expressions, defs the
/// bound names.
fn scan_with(rest: &str, opts: &DefUseOptions, set: &mut DefUseSet) -> bool {
    let rest = rest.trim_end().trim_end_matches(':');
    let mut bindings = Vec::new();
    let mut exprs = Vec::new();
    for item in split_top_level(rest, ',') {
        let item = item.trim();
        if item.is_empty() {
            return false;
        }
        match split_top_level_as(item) {
            Some((expr, target)) => {
                let Some(names) = parse_target_list(target) else {
                    return false;
                };
                exprs.push(expr.to_owned());
                bindings.extend(names);
            }
            None => exprs.push(item.to_owned()),
        }
    }
    for expr in exprs {
        scan_expression(&expr, opts, set);
    }
    for name in bindings {
        set.add_def(&name);
    }
    true
}

fn scan_augmented(lhs: &str, rhs: &str, opts: &DefUseOptions, set: &mut DefUseSet) -> bool {
    let target = lhs.trim();
    if !is_ident(target) {
        return false;
    }
    // Augmented assignment reads the target, then writes it.
    add_use(target, opts, set);
    scan_expression(rhs, opts, set);
    set.add_def(target);
    true
}

fn scan_assignment(lhs: &str, rhs: &str, opts: &DefUseOptions, set: &mut DefUseSet) -> bool {
    // A second top-level `=` on the right means a chained assignment, which
    // the restricted grammar does not cover.
    if find_top_level_assign(rhs).is_some() {
        return false;
    }
    // Annotated assignment: `name: Type = expr`.
    let (target_part, annotation) = match split_top_level_once(lhs, ':') {
        Some((t, a)) => (t, Some(a)),
        None => (lhs, None),
    };
    let Some(names) = parse_target_list(target_part) else {
        return false;
    };
    if annotation.is_some() && names.len() != 1 {
        return false;
    }
    if let Some(ann) = annotation {
        scan_expression(ann, opts, set);
    }
    scan_expression(rhs, opts, set);
    for name in names {
        set.add_def(&name);
    }
    true
}

/// Parses `a`, `a, b`, `(a, b)`, `a, *rest` into identifier names.
fn parse_target_list(text: &str) -> Option<Vec<String>> {
    let mut text = text.trim();
    // Strip one balanced outer paren/bracket layer.
    loop {
        let stripped = strip_outer_group(text);
        if stripped == text {
            break;
        }
        text = stripped;
    }
    let mut names = Vec::new();
    for part in split_top_level(text, ',') {
        let part = part.trim().trim_start_matches('*').trim();
        if part.is_empty() {
            continue;
        }
        if !is_ident(part) {
            return None;
        }
        names.push(part.to_owned());
    }
    if names.is_empty() {
        None
    } else {
        Some(names)
    }
}

fn strip_outer_group(text: &str) -> &str {
    let text = text.trim();
    let bytes = text.as_bytes();
    if bytes.len() < 2 {
        return text;
    }
    let pairs = [(b'(', b')'), (b'[', b']')];
    for (open, close) in pairs {
        if bytes[0] == open && bytes[bytes.len() - 1] == close {
            // Only strip when the outer pair actually matches.
            let mut depth = 0i32;
            for (i, &b) in bytes.iter().enumerate() {
                if b == open {
                    depth += 1;
                } else if b == close {
                    depth -= 1;
                    if depth == 0 && i != bytes.len() - 1 {
                        return text;
                    }
                }
            }
            if depth == 0 {
                return text[1..text.len() - 1].trim();
            }
        }
    }
    text
}

fn add_use(name: &str, opts: &DefUseOptions, set: &mut DefUseSet) {
    if opts.is_builtin(name) {
        return;
    }
    if !set.uses.iter().any(|u| u == name) {
        set.uses.push(name.to_owned());
    }
}

/// Scans free text for identifier reads. Attribute accesses read only the
/// leftmost name, and keyword-argument names inside call parentheses are
/// skipped.
fn scan_expression(text: &str, opts: &DefUseOptions, set: &mut DefUseSet) {
    let chars: Vec<char> = text.chars().collect();
    let mut depth = 0i32;
    let mut prev_non_ws: Option<char> = None;
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        if c == '(' || c == '[' || c == '{' {
            depth += 1;
        } else if c == ')' || c == ']' || c == '}' {
            depth -= 1;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let after_dot = prev_non_ws == Some('.');
            prev_non_ws = Some(chars[i - 1]);
            if after_dot || KEYWORDS.contains(&word.as_str()) {
                continue;
            }
            // Keyword argument `name=value` inside a call.
            let mut j = i;
            while j < chars.len() && chars[j] == ' ' {
                j += 1;
            }
            if depth > 0 && chars.get(j) == Some(&'=') && chars.get(j + 1) != Some(&'=') {
                continue;
            }
            add_use(&word, opts, set);
            continue;
        }
        if !c.is_whitespace() {
            prev_non_ws = Some(c);
        }
        i += 1;
    }
}

const AUGMENTED_OPS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
];

/// Finds a top-level augmented-assignment operator and splits around it.
fn split_augmented(line: &str) -> Option<(&str, &str)> {
    let bytes = line.as_bytes();
    let mut depth = 0i32;
    let mut i = 0usize;
    while i < bytes.len() {
        match bytes[i] {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            _ => {}
        }
        if depth == 0 {
            for op in AUGMENTED_OPS {
                if bytes[i..].starts_with(op.as_bytes()) {
                    return Some((&line[..i], &line[i + op.len()..]));
                }
            }
        }
        i += 1;
    }
    None
}

/// Finds the position of a top-level plain `=` (not `==`, `<=`, etc.).
fn find_top_level_assign(line: &str) -> Option<usize> {
    let bytes = line.as_bytes();
    let mut depth = 0i32;
    for i in 0..bytes.len() {
        match bytes[i] {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            b'=' if depth == 0 => {
                let prev = if i == 0 { b' ' } else { bytes[i - 1] };
                let next = bytes.get(i + 1).copied().unwrap_or(b' ');
                if next != b'=' && !b"=!<>+-*/%&|^:~".contains(&prev) {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn split_assignment(line: &str) -> Option<(&str, &str)> {
    let pos = find_top_level_assign(line)?;
    Some((&line[..pos], &line[pos + 1..]))
}

fn split_top_level(text: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0usize;
    for (i, c) in text.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            c if c == sep && depth == 0 => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&text[start..]);
    parts
}

fn split_top_level_once(text: &str, sep: char) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    for (i, c) in text.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            c if c == sep && depth == 0 => return Some((&text[..i], &text[i + 1..])),
            _ => {}
        }
    }
    None
}

/// Splits `expr as target` at the top level.
fn split_top_level_as(text: &str) -> Option<(&str, &str)> {
    let pos = find_top_level_word(text, "as")?;
    Some((&text[..pos], &text[pos + 2..]))
}

/// Finds a whole word at paren depth 0, delimited by non-identifier chars.
fn find_top_level_word(text: &str, word: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0i32;
    let mut i = 0usize;
    while i < bytes.len() {
        match bytes[i] {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            _ => {}
        }
        if depth == 0 && bytes[i..].starts_with(word.as_bytes()) {
            let before_ok = i == 0 || !is_ident_byte(bytes[i - 1]);
            let after = bytes.get(i + word.len()).copied();
            let after_ok = after.is_none_or(|b| !is_ident_byte(b));
            if before_ok && after_ok {
                return Some(i);
            }
        }
        i += 1;
    }
    None
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn find_matching_paren(text: &str, open: usize) -> Option<usize> {
    let mut depth = 0i32;
    for (i, c) in text.char_indices() {
        if i < open {
            continue;
        }
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}
