//! Line-oriented query files.
//!
//! ```text
//! # comment
//! semiring sum_product
//! relation R1(x1:int, x2, x3=ps_partkey) annot=l_quantity file=lineitem.csv
//! output x1, x2
//! pk R1(x1)
//! unique R1(x2, x3)
//! fk R1.x2 -> R2.x2
//! select R1: x2 >= 5 and x3 != 'a' and x1 between 1 and 9
//! ```
//!
//! `attr:kind` declares a domain, `attr=column` binds a CSV column (default:
//! the attribute name). File paths are relative to the query file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{
    make_query, AnnotationSource, CmpOp, ConjunctiveQuery, DomainKind, Operand, Predicate, RelationSpec,
    SemiringKind, TableSource, Term, Value,
};
use crate::optimizer::{ForeignKey, SchemaConstraints};

#[derive(Clone, Debug)]
pub struct QueryFile {
    pub query: ConjunctiveQuery,
    pub constraints: SchemaConstraints,
}

pub fn parse_query_file(path: &Path) -> Result<QueryFile> {
    let text = std::fs::read_to_string(path)?;
    parse_query_str(&text, path.parent())
}

/// Cursor over one line; columns are 1-based character positions.
struct Cursor<'a> {
    line: usize,
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            column: self.text[..self.pos].chars().count() + 1,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let r = self.rest();
        self.pos += r.len() - r.trim_start().len();
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.rest().is_empty()
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<()> {
        if self.eat(s) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{s}`")))
        }
    }

    /// Identifier of letters, digits, `_` and `'`.
    fn ident(&mut self, what: &str) -> Result<String> {
        self.skip_ws();
        let r = self.rest();
        let len = r
            .char_indices()
            .find(|(_, c)| !(c.is_alphanumeric() || *c == '_' || *c == '\''))
            .map_or(r.len(), |(i, _)| i);
        if len == 0 {
            return Err(self.err(format!("expected {what}")));
        }
        self.pos += len;
        Ok(r[..len].to_string())
    }

    /// Bare token up to whitespace or one of `stops`.
    fn token(&mut self, what: &str, stops: &[char]) -> Result<String> {
        self.skip_ws();
        let r = self.rest();
        let len = r
            .char_indices()
            .find(|(_, c)| c.is_whitespace() || stops.contains(c))
            .map_or(r.len(), |(i, _)| i);
        if len == 0 {
            return Err(self.err(format!("expected {what}")));
        }
        self.pos += len;
        Ok(r[..len].to_string())
    }

    fn literal(&mut self) -> Result<Value> {
        self.skip_ws();
        if self.eat("'") {
            let r = self.rest();
            let end = r.find('\'').ok_or_else(|| self.err("unterminated string"))?;
            self.pos += end + 1;
            return Ok(Value::str(&r[..end]));
        }
        if self.rest().starts_with("date") {
            self.pos += 4;
            self.expect("'")?;
            let r = self.rest();
            let end = r.find('\'').ok_or_else(|| self.err("unterminated date"))?;
            let v = Value::parse(&r[..end], DomainKind::Date).map_err(|_| self.err("bad date, expected YYYY-MM-DD"))?;
            self.pos += end + 1;
            return Ok(v);
        }
        let start = self.pos;
        let tok = self.token("literal", &[',', ')'])?;
        let kind = Value::infer_kind(&tok);
        if !matches!(kind, DomainKind::Integer | DomainKind::Float) {
            self.pos = start;
            return Err(self.err(format!("bad literal `{tok}` (quote strings)")));
        }
        Value::parse(&tok, kind).map_err(|_| self.err("bad literal"))
    }

    fn cmp_op(&mut self) -> Result<CmpOp> {
        for (s, op) in [
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("!=", CmpOp::Ne),
            ("<>", CmpOp::Ne),
            ("=", CmpOp::Eq),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
        ] {
            if self.eat(s) {
                return Ok(op);
            }
        }
        Err(self.err("expected comparison operator"))
    }
}

fn is_attr_start(r: &str) -> bool {
    r.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_') && !r.starts_with("date'")
}

fn predicate(c: &mut Cursor) -> Result<Predicate> {
    let mut terms = Vec::new();
    loop {
        let attr = c.ident("attribute")?;
        c.skip_ws();
        if c.rest().starts_with("between") {
            c.pos += "between".len();
            let lo = c.literal()?;
            if c.ident("`and`")? != "and" {
                return Err(c.err("expected `and`"));
            }
            let hi = c.literal()?;
            terms.push(Term::Between { attr, lo, hi });
        } else {
            let op = c.cmp_op()?;
            c.skip_ws();
            let rhs = if is_attr_start(c.rest()) {
                Operand::Attr(c.ident("attribute")?)
            } else {
                Operand::Lit(c.literal()?)
            };
            terms.push(Term::Cmp { attr, op, rhs });
        }
        if c.at_end() {
            break;
        }
        let kw = c.ident("`and`")?;
        if kw != "and" {
            return Err(c.err("expected `and`"));
        }
    }
    Ok(Predicate { terms })
}

fn name_list(c: &mut Cursor) -> Result<Vec<String>> {
    c.expect("(")?;
    let mut out = Vec::new();
    if c.eat(")") {
        return Ok(out);
    }
    loop {
        out.push(c.ident("attribute")?);
        if c.eat(")") {
            return Ok(out);
        }
        c.expect(",")?;
    }
}

/// Parses query-file text; relative `file=` paths resolve against `base`.
pub fn parse_query_str(text: &str, base: Option<&Path>) -> Result<QueryFile> {
    let mut specs: Vec<RelationSpec> = Vec::new();
    let mut output: Option<Vec<String>> = None;
    let mut semiring = SemiringKind::SumProduct;
    let mut selections: BTreeMap<String, Predicate> = BTreeMap::new();
    let mut constraints = SchemaConstraints::default();
    // Deferred reference checks: (line, column, relation, attrs).
    let mut refs: Vec<(usize, usize, String, Vec<String>)> = Vec::new();
    // Output attributes with their (line, column).
    let mut out_pos: Vec<(usize, usize, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("");
        let mut c = Cursor {
            line: i + 1,
            text: body,
            pos: 0,
        };
        if c.at_end() {
            continue;
        }
        let kw = c.ident("keyword")?;
        match kw.as_str() {
            "semiring" => {
                let name = c.token("semiring name", &[])?;
                semiring = SemiringKind::parse_name(&name).ok_or_else(|| c.err(format!("unknown semiring `{name}`")))?;
            }
            "relation" => {
                let name = c.ident("relation name")?;
                if specs.iter().any(|s| s.name == name) {
                    return Err(c.err(format!("relation `{name}` declared twice")));
                }
                c.expect("(")?;
                let mut attrs: Vec<(String, Option<DomainKind>)> = Vec::new();
                let mut columns: Vec<String> = Vec::new();
                loop {
                    let a = c.ident("attribute")?;
                    let kind = if c.eat(":") {
                        let k = c.ident("domain")?;
                        Some(DomainKind::parse_name(&k).ok_or_else(|| c.err(format!("unknown domain `{k}`")))?)
                    } else {
                        None
                    };
                    let col = if c.eat("=") { c.token("column", &[',', ')'])? } else { a.clone() };
                    attrs.push((a, kind));
                    columns.push(col);
                    if c.eat(")") {
                        break;
                    }
                    c.expect(",")?;
                }
                let mut spec = RelationSpec {
                    name,
                    attrs,
                    annotation: AnnotationSource::One,
                    source: None,
                };
                while !c.at_end() {
                    let key = c.ident("option")?;
                    c.expect("=")?;
                    let val = c.token("value", &[])?;
                    match key.as_str() {
                        "annot" => spec.annotation = AnnotationSource::Column(val),
                        "file" => {
                            let p = PathBuf::from(&val);
                            let path = match base {
                                Some(b) if p.is_relative() => b.join(p),
                                _ => p,
                            };
                            spec.source = Some(TableSource {
                                path,
                                columns: columns.clone(),
                            });
                        }
                        _ => return Err(c.err(format!("unknown option `{key}`"))),
                    }
                }
                specs.push(spec);
            }
            "output" => {
                let mut out = Vec::new();
                while !c.at_end() {
                    c.skip_ws();
                    let col = c.pos + 1;
                    let a = c.ident("attribute")?;
                    out_pos.push((i + 1, col, a.clone()));
                    out.push(a);
                    if !c.at_end() {
                        c.expect(",")?;
                    }
                }
                output = Some(out);
            }
            "pk" | "unique" => {
                let col = c.pos + 1;
                let rel = c.ident("relation name")?;
                let attrs = name_list(&mut c)?;
                refs.push((i + 1, col, rel.clone(), attrs.clone()));
                if kw == "pk" {
                    constraints.primary_keys.insert(rel, attrs);
                } else {
                    constraints.uniques.entry(rel).or_default().push(attrs);
                }
            }
            "fk" => {
                let col = c.pos + 1;
                let child = c.ident("relation name")?;
                c.expect(".")?;
                let ca = c.ident("attribute")?;
                c.expect("->")?;
                let parent = c.ident("relation name")?;
                c.expect(".")?;
                let pa = c.ident("attribute")?;
                refs.push((i + 1, col, child.clone(), vec![ca.clone()]));
                refs.push((i + 1, col, parent.clone(), vec![pa.clone()]));
                constraints.foreign_keys.push(ForeignKey::new(&child, &ca, &parent, &pa));
            }
            "select" => {
                let col = c.pos + 1;
                let rel = c.ident("relation name")?;
                c.expect(":")?;
                let p = predicate(&mut c)?;
                refs.push((i + 1, col, rel.clone(), p.attrs().into_iter().map(String::from).collect()));
                let prev = selections.remove(&rel).unwrap_or_default();
                selections.insert(rel, prev.and(p));
            }
            other => {
                c.pos = 0;
                c.skip_ws();
                return Err(c.err(format!("unknown keyword `{other}`")));
            }
        }
    }
    for (line, column, rel, attrs) in &refs {
        let spec = specs.iter().find(|s| &s.name == rel).ok_or_else(|| Error::Parse {
            line: *line,
            column: *column,
            message: format!("unknown relation `{rel}`"),
        })?;
        for a in attrs {
            if !spec.attrs.iter().any(|(x, _)| x == a) {
                return Err(Error::Parse {
                    line: *line,
                    column: *column,
                    message: format!("`{rel}` has no attribute `{a}`"),
                });
            }
        }
    }
    for (line, column, a) in &out_pos {
        if !specs.iter().any(|s| s.attrs.iter().any(|(x, _)| x == a)) {
            return Err(Error::Parse {
                line: *line,
                column: *column,
                message: format!("output attribute `{a}` appears in no relation"),
            });
        }
    }
    let output = output.unwrap_or_default();
    let out_refs: Vec<&str> = output.iter().map(String::as_str).collect();
    let mut query = make_query(specs, &out_refs, semiring, selections)?;
    let kinds: BTreeMap<String, DomainKind> =
        query.attributes.iter().filter_map(|a| a.kind.map(|k| (a.name.clone(), k))).collect();
    for p in query.selections.values_mut() {
        p.coerce_literals(|a| kinds.get(a).copied());
    }
    constraints.validate(Some(&query))?;
    Ok(QueryFile { query, constraints })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    const Q1: &str = "\
# profit query
semiring sum_product
relation R1(x1, x2, x3, x4) annot=l_quantity
relation R2(x2, x5)
relation R3(x3, x4) annot=ps_supplycost
relation R4(x3, x6)
relation R5(x4, x7)
relation R6(x7, x8)
output x1, x2, x8
";

    #[test]
    fn q1_file_matches_fixture() {
        let f = parse_query_str(Q1, None).unwrap();
        let q = fixtures::q1();
        assert_eq!(f.query.relations, q.relations);
        assert_eq!(f.query.output, q.output);
        assert_eq!(f.query.semiring, q.semiring);
        assert!(f.constraints.is_empty());
    }

    #[test]
    fn minimal_file() {
        let f = parse_query_str("relation R(a)\n", None).unwrap();
        assert_eq!(f.query.n(), 1);
        assert!(f.query.output.is_empty());
    }

    #[test]
    fn constraints_selections_and_bindings() {
        let text = "\
semiring max_plus
relation R(a:int, b=col_b) file=r.csv
relation S(b, c:string)
output a
pk S(b)
fk R.b -> S.b
select S: c = 'x' and b between 1 and 4
select R: a >= 2
";
        let f = parse_query_str(text, Some(Path::new("/data"))).unwrap();
        let src = f.query.relations[0].source.as_ref().unwrap();
        assert_eq!(src.path, PathBuf::from("/data/r.csv"));
        assert_eq!(src.columns, ["a", "col_b"]);
        assert_eq!(f.constraints.foreign_keys.len(), 1);
        assert_eq!(f.query.selections["S"].to_string(), "c = 'x' and b between 1 and 4");
        assert_eq!(f.query.selections["R"].terms.len(), 1);
    }

    #[test]
    fn unknown_output_attribute() {
        let e = parse_query_str("relation R(a)\noutput a,  b\n", None).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, column: 12, .. }), "{e}");
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_query_str("relation R(a)\nselect R: z > 1\n", None).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse_query_str("relation R(a,)\n", None).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, column: 14, .. }), "{e}");
        let e = parse_query_str("relation R(a)\n  frobnicate\n", None).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, column: 3, .. }), "{e}");
        assert!(matches!(parse_query_str("relation R(a)\npk T(a)\n", None), Err(Error::Parse { .. })));
        assert!(parse_query_str("relation R(a)\noutput q\n", None).is_err());
    }
}
