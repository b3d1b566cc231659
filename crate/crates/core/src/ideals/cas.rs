//! Macaulay2 and Singular scripts for presentations and toric maps, and a
//! small parser that checks the emitted subset of both languages.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use super::{IdealPresentation, ToricMap};
use crate::polynomial::{Polynomial, Symbol};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dialect {
    M2,
    Singular,
}

impl FromStr for Dialect {
    type Err = String;
    fn from_str(s: &str) -> Result<Dialect, String> {
        match s {
            "m2" | "macaulay2" => Ok(Dialect::M2),
            "singular" => Ok(Dialect::Singular),
            other => Err(format!("unknown dialect {other:?}; expected m2 or singular")),
        }
    }
}

const INDENT: &str = "    ";

fn names(symbols: &[Symbol]) -> String {
    symbols.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ")
}

/// One item per line, comma separated, indented.
fn listing<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| format!("{INDENT}{x}")).collect::<Vec<_>>().join(",\n")
}

fn product(factors: &[Polynomial]) -> String {
    factors.iter().map(|f| if f.len() > 1 { format!("({f})") } else { f.to_string() }).collect::<Vec<_>>().join("*")
}

/// Script declaring the ring and the ideal, then asking for a minimal
/// generating set and, when a saturating element is known, the saturation.
pub fn export_presentation(pres: &IdealPresentation, dialect: Dialect) -> String {
    let gens: Vec<String> = pres.polynomials().map(|p| p.to_string()).collect();
    let mut s = String::new();
    match dialect {
        Dialect::M2 => {
            let _ = writeln!(s, "-- {}: {} generators in {} indeterminates", pres.name, gens.len(), pres.ring().len());
            let _ = writeln!(s, "R = QQ[{}];", names(pres.ring()));
            if gens.is_empty() {
                let _ = writeln!(s, "I = ideal(0_R);");
            } else {
                let _ = writeln!(s, "I = ideal(\n{}\n{INDENT});", listing(&gens));
            }
            let _ = writeln!(s, "G = mingens I;");
            let _ = writeln!(s, "print numcols G;");
            if !pres.saturate_by().is_empty() {
                let _ = writeln!(s, "pp = {};", product(pres.saturate_by()));
                let _ = writeln!(s, "J = saturate(I, pp);");
                let _ = writeln!(s, "print numcols mingens J;");
            }
        }
        Dialect::Singular => {
            let _ = writeln!(s, "// {}: {} generators in {} indeterminates", pres.name, gens.len(), pres.ring().len());
            let _ = writeln!(s, "LIB \"elim.lib\";");
            let _ = writeln!(s, "ring R = 0, ({}), dp;", names(pres.ring()));
            if gens.is_empty() {
                let _ = writeln!(s, "ideal I = 0;");
            } else {
                let _ = writeln!(s, "ideal I =\n{};", listing(&gens));
            }
            let _ = writeln!(s, "ideal G = minbase(I);");
            let _ = writeln!(s, "print(size(G));");
            if !pres.saturate_by().is_empty() {
                let _ = writeln!(s, "poly pp = {};", product(pres.saturate_by()));
                let _ = writeln!(s, "def J = sat(I, pp);");
            }
        }
    }
    s
}

/// Script computing the kernel of the monomial map, and the kernel of the
/// same map into the quotient by the floret relations.
pub fn export_toric(map: &ToricMap, dialect: Dialect) -> String {
    let images: Vec<String> = map.images().iter().map(|m| m.to_string()).collect();
    let relations: Vec<String> = map.relations().iter().map(|r| r.to_string()).collect();
    let mut s = String::new();
    match dialect {
        Dialect::M2 => {
            let _ = writeln!(
                s,
                "-- {}: {} indeterminates, {} parameters",
                map.name,
                map.source().len(),
                map.target().len()
            );
            let _ = writeln!(s, "R = QQ[{}];", names(map.source()));
            let _ = writeln!(s, "S = QQ[{}];", names(map.target()));
            let _ = writeln!(s, "phi = map(S, R, {{\n{}\n{INDENT}}});", listing(&images));
            let _ = writeln!(s, "T = ker phi;");
            let _ = writeln!(s, "G = mingens T;");
            let _ = writeln!(s, "print numcols G;");
            if !relations.is_empty() {
                let _ = writeln!(s, "Q = S / ideal(\n{}\n{INDENT});", listing(&relations));
                let _ = writeln!(s, "psi = map(Q, R, {{\n{}\n{INDENT}}});", listing(&images));
                let _ = writeln!(s, "K = ker psi;");
                let _ = writeln!(s, "print numcols mingens K;");
            }
        }
        Dialect::Singular => {
            let _ = writeln!(
                s,
                "// {}: {} indeterminates, {} parameters",
                map.name,
                map.source().len(),
                map.target().len()
            );
            let _ = writeln!(s, "ring R = 0, ({}), dp;", names(map.source()));
            let _ = writeln!(s, "ring S = 0, ({}), dp;", names(map.target()));
            let _ = writeln!(s, "map phi = R,\n{};", listing(&images));
            let _ = writeln!(s, "ideal zero = 0;");
            if !relations.is_empty() {
                let _ = writeln!(s, "ideal q =\n{};", listing(&relations));
            }
            let _ = writeln!(s, "setring R;");
            let _ = writeln!(s, "ideal T = preimage(S, phi, zero);");
            let _ = writeln!(s, "ideal G = minbase(T);");
            let _ = writeln!(s, "print(size(G));");
            if !relations.is_empty() {
                let _ = writeln!(s, "ideal K = preimage(S, phi, q);");
                let _ = writeln!(s, "print(size(minbase(K)));");
            }
        }
    }
    s
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("statement {index} ({text:?}): {msg}")]
pub struct ScriptError {
    pub index: usize,
    pub text: String,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Object {
    Ring(Vec<String>),
    Ideal { ring: String, gens: usize },
    Map { source: String, target: String },
    Poly,
    Value,
}

/// What a script declares, as recovered by [`parse_script`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScriptSummary {
    /// Ring name to its variables.
    pub rings: BTreeMap<String, Vec<String>>,
    /// Ideals given by an explicit generator list, with their lengths.
    pub ideals: BTreeMap<String, usize>,
    /// Map name to (source ring, image count).
    pub maps: BTreeMap<String, (String, usize)>,
}

struct Checker {
    objects: BTreeMap<String, Object>,
    current: Option<String>,
    summary: ScriptSummary,
}

type Check<T> = Result<T, String>;

impl Checker {
    fn ring_vars(&self, ring: &str) -> Check<&[String]> {
        match self.objects.get(ring) {
            Some(Object::Ring(v)) => Ok(v),
            _ => Err(format!("{ring} is not a ring")),
        }
    }

    fn current_vars(&self) -> Check<BTreeSet<String>> {
        let r = self.current.as_ref().ok_or("no ring in use")?;
        Ok(self.ring_vars(r)?.iter().cloned().collect())
    }

    fn expect_kind(&self, name: &str, want: &str) -> Check<()> {
        let ok = matches!(
            (self.objects.get(name), want),
            (Some(Object::Ring(_)), "ring")
                | (Some(Object::Ideal { .. }), "ideal")
                | (Some(Object::Map { .. }), "map")
                | (Some(Object::Poly), "poly")
        );
        if ok {
            Ok(())
        } else {
            Err(format!("{name} is not a declared {want}"))
        }
    }

    fn define(&mut self, name: &str, obj: Object) -> Check<()> {
        if !is_name(name) {
            return Err(format!("{name:?} is not an identifier"));
        }
        if let Object::Ring(vars) = &obj {
            self.summary.rings.insert(name.to_string(), vars.clone());
        }
        self.objects.insert(name.to_string(), obj);
        Ok(())
    }
}

fn is_name(s: &str) -> bool {
    let mut c = s.chars();
    c.next().is_some_and(|x| x.is_ascii_alphabetic()) && c.all(|x| x.is_ascii_alphanumeric() || x == '_')
}

fn ident_list(s: &str) -> Check<Vec<String>> {
    let vars: Vec<String> = s.split(',').map(|v| v.trim().to_string()).collect();
    if vars.iter().any(|v| !is_name(v)) {
        return Err(format!("bad variable list {s:?}"));
    }
    let distinct: BTreeSet<&String> = vars.iter().collect();
    if distinct.len() != vars.len() {
        return Err("repeated variable".into());
    }
    Ok(vars)
}

/// Splits on top-level commas.
fn split_top(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (k, c) in s.char_indices() {
        match c {
            '(' | '{' | '[' => depth += 1,
            ')' | '}' | ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..k]);
                start = k + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

/// Recursive-descent check of `expr := ['-'] term (('+'|'-') term)*`,
/// `term := factor ('*' factor)*`, `factor := int | var ['^' int] | '(' expr ')'`.
struct Expr<'a> {
    src: &'a [u8],
    pos: usize,
    vars: &'a BTreeSet<String>,
}

impl Expr<'_> {
    fn ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.src.get(self.pos).copied()
    }

    fn int(&mut self) -> bool {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        self.pos > start
    }

    fn factor(&mut self) -> Check<()> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                self.expr()?;
                if self.peek() != Some(b')') {
                    return Err("unbalanced parenthesis".into());
                }
                self.pos += 1;
                Ok(())
            }
            Some(c) if c.is_ascii_digit() => {
                self.int();
                Ok(())
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                if !self.vars.contains(name) {
                    return Err(format!("{name} is not a variable of the ring in use"));
                }
                if self.peek() == Some(b'^') {
                    self.pos += 1;
                    self.ws();
                    if !self.int() {
                        return Err("expected an exponent".into());
                    }
                }
                Ok(())
            }
            _ => Err(format!("unexpected input at byte {}", self.pos)),
        }
    }

    fn term(&mut self) -> Check<()> {
        self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            self.factor()?;
        }
        Ok(())
    }

    fn expr(&mut self) -> Check<()> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        self.term()?;
        while matches!(self.peek(), Some(b'+') | Some(b'-')) {
            self.pos += 1;
            self.term()?;
        }
        Ok(())
    }
}

fn check_poly(text: &str, vars: &BTreeSet<String>) -> Check<()> {
    let mut e = Expr { src: text.as_bytes(), pos: 0, vars };
    e.expr()?;
    if e.peek().is_some() {
        return Err(format!("trailing input in {text:?}"));
    }
    Ok(())
}

fn check_polys(list: &str, vars: &BTreeSet<String>) -> Check<usize> {
    let items = split_top(list);
    for item in &items {
        check_poly(item.trim(), vars)?;
    }
    Ok(items.len())
}

fn strip_comments(text: &str, marker: &str) -> String {
    text.lines().map(|l| l.split(marker).next().unwrap_or("")).collect::<Vec<_>>().join("\n")
}

fn inside<'a>(s: &'a str, open: &str, close: &str) -> Option<&'a str> {
    s.strip_prefix(open)?.strip_suffix(close)
}

/// Splits `name = rhs`.
fn assignment(stmt: &str) -> Option<(&str, &str)> {
    let (l, r) = stmt.split_once('=')?;
    Some((l.trim(), r.trim()))
}

fn m2_statement(ck: &mut Checker, stmt: &str) -> Check<()> {
    if let Some(rest) = stmt.strip_prefix("print ") {
        let rest = rest.trim();
        let target = rest.strip_prefix("numcols ").ok_or("print expects numcols")?.trim();
        let target = target.strip_prefix("mingens ").map(str::trim).unwrap_or(target);
        return ck.objects.contains_key(target).then_some(()).ok_or(format!("{target} is undefined"));
    }
    let (name, rhs) = assignment(stmt).ok_or("expected an assignment")?;
    if let Some(vars) = inside(rhs, "QQ[", "]") {
        ck.define(name, Object::Ring(ident_list(vars)?))?;
        ck.current = Some(name.to_string());
        return Ok(());
    }
    if let Some((base, rels)) = rhs.split_once('/') {
        let base = base.trim();
        let vars = ck.ring_vars(base)?.to_vec();
        let rels = inside(rels.trim(), "ideal(", ")").ok_or("quotient expects ideal(...)")?;
        let set = vars.iter().cloned().collect();
        check_polys(rels, &set)?;
        ck.define(name, Object::Ring(vars))?;
        ck.current = Some(name.to_string());
        return Ok(());
    }
    if let Some(body) = inside(rhs, "ideal(", ")") {
        let ring = ck.current.clone().ok_or("no ring in use")?;
        let gens = if body.trim() == format!("0_{ring}") { 0 } else { check_polys(body, &ck.current_vars()?)? };
        ck.summary.ideals.insert(name.to_string(), gens);
        return ck.define(name, Object::Ideal { ring, gens });
    }
    if let Some(body) = inside(rhs, "map(", ")") {
        let parts = split_top(body);
        let [target, source, images] = parts.as_slice() else {
            return Err("map expects (target, source, {images})".into());
        };
        let (target, source) = (target.trim(), source.trim());
        let tvars: BTreeSet<String> = ck.ring_vars(target)?.iter().cloned().collect();
        let n = ck.ring_vars(source)?.len();
        let images = inside(images.trim(), "{", "}").ok_or("map images must be a list")?;
        let count = check_polys(images, &tvars)?;
        if count != n {
            return Err(format!("map lists {count} images for {n} variables"));
        }
        ck.summary.maps.insert(name.to_string(), (source.to_string(), count));
        return ck.define(name, Object::Map { source: source.to_string(), target: target.to_string() });
    }
    if let Some(m) = rhs.strip_prefix("ker ") {
        let m = m.trim();
        ck.expect_kind(m, "map")?;
        let Some(Object::Map { source, .. }) = ck.objects.get(m).cloned() else { unreachable!() };
        return ck.define(name, Object::Ideal { ring: source, gens: 0 });
    }
    if let Some(i) = rhs.strip_prefix("mingens ") {
        ck.expect_kind(i.trim(), "ideal")?;
        return ck.define(name, Object::Value);
    }
    if let Some(body) = inside(rhs, "saturate(", ")") {
        let parts = split_top(body);
        let [i, p] = parts.as_slice() else { return Err("saturate expects (ideal, element)".into()) };
        ck.expect_kind(i.trim(), "ideal")?;
        if ck.objects.contains_key(p.trim()) {
            ck.expect_kind(p.trim(), "poly")?;
        } else {
            check_poly(p.trim(), &ck.current_vars()?)?;
        }
        let ring = ck.current.clone().ok_or("no ring in use")?;
        return ck.define(name, Object::Ideal { ring, gens: 0 });
    }
    check_poly(rhs, &ck.current_vars()?)?;
    ck.define(name, Object::Poly)
}

fn singular_statement(ck: &mut Checker, stmt: &str) -> Check<()> {
    if let Some(lib) = stmt.strip_prefix("LIB ") {
        let lib = lib.trim();
        return (lib.starts_with('"') && lib.ends_with('"') && lib.len() > 2).then_some(()).ok_or("bad LIB".into());
    }
    if let Some(r) = stmt.strip_prefix("setring ") {
        let r = r.trim();
        ck.expect_kind(r, "ring")?;
        ck.current = Some(r.to_string());
        return Ok(());
    }
    if let Some(body) = inside(stmt, "print(", ")") {
        let body = body.trim();
        let inner = inside(body, "size(", ")").ok_or("print expects size(...)")?.trim();
        let inner = inside(inner, "minbase(", ")").unwrap_or(inner).trim();
        return ck.expect_kind(inner, "ideal");
    }
    let (decl, rhs) = assignment(stmt).ok_or("expected a declaration")?;
    let (kind, name) = decl.split_once(' ').ok_or("declaration needs a type")?;
    let name = name.trim();
    match kind {
        "ring" => {
            let parts = split_top(rhs);
            let [ch, vars, ord] = parts.as_slice() else { return Err("ring expects 0, (vars), dp".into()) };
            if ch.trim() != "0" || ord.trim() != "dp" {
                return Err("ring must be over characteristic 0 with dp ordering".into());
            }
            let vars = inside(vars.trim(), "(", ")").ok_or("ring variables need parentheses")?;
            ck.define(name, Object::Ring(ident_list(vars)?))?;
            ck.current = Some(name.to_string());
            Ok(())
        }
        "ideal" => {
            let ring = ck.current.clone().ok_or("no ring in use")?;
            if let Some(arg) = inside(rhs, "minbase(", ")") {
                ck.expect_kind(arg.trim(), "ideal")?;
                return ck.define(name, Object::Ideal { ring, gens: 0 });
            }
            if let Some(args) = inside(rhs, "preimage(", ")") {
                let parts = split_top(args);
                let [r, m, i] = parts.as_slice() else { return Err("preimage expects (ring, map, ideal)".into()) };
                ck.expect_kind(r.trim(), "ring")?;
                ck.expect_kind(m.trim(), "map")?;
                ck.expect_kind(i.trim(), "ideal")?;
                let Some(Object::Map { source, target }) = ck.objects.get(m.trim()).cloned() else { unreachable!() };
                if source != ring || target != r.trim() {
                    return Err(format!("preimage must run in {source} with {target} as the image ring"));
                }
                return ck.define(name, Object::Ideal { ring, gens: 0 });
            }
            let gens = if rhs == "0" { 0 } else { check_polys(rhs, &ck.current_vars()?)? };
            ck.summary.ideals.insert(name.to_string(), gens);
            ck.define(name, Object::Ideal { ring, gens })
        }
        "map" => {
            let parts = split_top(rhs);
            let (source, images) = parts.split_first().ok_or("map expects a ring")?;
            let source = source.trim();
            let n = ck.ring_vars(source)?.len();
            let vars = ck.current_vars()?;
            for im in images {
                check_poly(im.trim(), &vars)?;
            }
            if images.len() != n {
                return Err(format!("map lists {} images for {n} variables", images.len()));
            }
            let target = ck.current.clone().expect("ring in use");
            ck.summary.maps.insert(name.to_string(), (source.to_string(), images.len()));
            ck.define(name, Object::Map { source: source.to_string(), target })
        }
        "poly" => {
            check_poly(rhs, &ck.current_vars()?)?;
            ck.define(name, Object::Poly)
        }
        "def" => {
            let args = inside(rhs, "sat(", ")").ok_or("def is only used with sat(...)")?;
            let parts = split_top(args);
            let [i, p] = parts.as_slice() else { return Err("sat expects (ideal, poly)".into()) };
            ck.expect_kind(i.trim(), "ideal")?;
            ck.expect_kind(p.trim(), "poly")?;
            ck.define(name, Object::Value)
        }
        other => Err(format!("unsupported declaration type {other}")),
    }
}

/// Checks a script of the emitted subset: every statement is well formed,
/// every name is declared before use and every polynomial uses only the
/// variables of the ring in use.
pub fn parse_script(text: &str, dialect: Dialect) -> Result<ScriptSummary, ScriptError> {
    let marker = match dialect {
        Dialect::M2 => "--",
        Dialect::Singular => "//",
    };
    let body = strip_comments(text, marker);
    let mut ck = Checker { objects: BTreeMap::new(), current: None, summary: ScriptSummary::default() };
    let stmts: Vec<&str> = body.split(';').collect();
    let (last, stmts) = stmts.split_last().expect("split yields one item");
    for (index, raw) in stmts.iter().enumerate() {
        let stmt = raw.split_whitespace().collect::<Vec<_>>().join(" ");
        let stmt = tidy(&stmt);
        let result = match dialect {
            Dialect::M2 => m2_statement(&mut ck, &stmt),
            Dialect::Singular => singular_statement(&mut ck, &stmt),
        };
        result.map_err(|msg| ScriptError { index, text: stmt.clone(), msg })?;
    }
    if !last.trim().is_empty() {
        return Err(ScriptError { index: stmts.len(), text: last.trim().to_string(), msg: "missing `;`".into() });
    }
    Ok(ck.summary)
}

/// Removes the blanks that the line layout puts next to brackets.
fn tidy(s: &str) -> String {
    s.replace("( ", "(").replace(" )", ")").replace("{ ", "{").replace(" }", "}")
}
