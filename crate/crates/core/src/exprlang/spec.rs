use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use super::expr::{format_number, Expr, Func};
use super::parse::{parse_in_scope, ParseError, ParseErrorKind, Scope};
use super::table::HermiteTable;

/// Closed coordinate interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("expected {expected} {what}, found {found}")]
    Count { what: &'static str, expected: usize, found: usize },
    #[error("variable names must be distinct identifiers that are not function names: {0:?}")]
    BadVariable(String),
    #[error("empty domain interval {lo}:{hi} for variable {var}")]
    BadDomain { var: usize, lo: f64, hi: f64 },
    #[error("{block}{index} references variable index {var} beyond dimension {dim}")]
    UnknownVariable { block: char, index: usize, var: usize, dim: usize },
    #[error("two different tables named {0:?}")]
    TableNameClash(String),
}

/// An immersion `f: M → R^{2n+2}` together with a transversal field `C`, both
/// given componentwise as expressions in `2n+1` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ImmersionSpec {
    n: usize,
    vars: Vec<String>,
    domain: Vec<Interval>,
    f: Vec<Expr>,
    c: Vec<Expr>,
}

fn valid_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
        && Func::from_name(s).is_none()
}

impl ImmersionSpec {
    pub fn new(
        n: usize,
        vars: Vec<String>,
        domain: Vec<Interval>,
        f: Vec<Expr>,
        c: Vec<Expr>,
    ) -> Result<Self, SpecError> {
        let m = 2 * n + 1;
        let count = |what, found| {
            if found == m {
                Ok(())
            } else {
                Err(SpecError::Count { what, expected: m, found })
            }
        };
        count("variables", vars.len())?;
        count("domain intervals", domain.len())?;
        for (k, v) in vars.iter().enumerate() {
            if !valid_identifier(v) || vars[..k].contains(v) {
                return Err(SpecError::BadVariable(v.clone()));
            }
        }
        for (var, iv) in domain.iter().enumerate() {
            if !(iv.lo < iv.hi) || !iv.lo.is_finite() || !iv.hi.is_finite() {
                return Err(SpecError::BadDomain { var, lo: iv.lo, hi: iv.hi });
            }
        }
        for (block, comps) in [('f', &f), ('C', &c)] {
            if comps.len() != m + 1 {
                return Err(SpecError::Count {
                    what: if block == 'f' { "f components" } else { "C components" },
                    expected: m + 1,
                    found: comps.len(),
                });
            }
            for (index, e) in comps.iter().enumerate() {
                if let Some(var) = e.max_var().filter(|&v| v >= m) {
                    return Err(SpecError::UnknownVariable { block, index: index + 1, var, dim: m });
                }
            }
        }
        let spec = ImmersionSpec { n, vars, domain, f, c };
        let tables = spec.tables();
        for (k, t) in tables.iter().enumerate() {
            if tables[..k].iter().any(|o| o.name() == t.name()) || spec.vars.iter().any(|v| v == t.name()) {
                return Err(SpecError::TableNameClash(t.name().to_string()));
            }
        }
        Ok(spec)
    }

    /// Same immersion with a different transversal field.
    pub fn with_transversal(&self, c: Vec<Expr>) -> Result<Self, SpecError> {
        ImmersionSpec::new(self.n, self.vars.clone(), self.domain.clone(), self.f.clone(), c)
    }

    pub fn with_domain(&self, domain: Vec<Interval>) -> Result<Self, SpecError> {
        ImmersionSpec::new(self.n, self.vars.clone(), domain, self.f.clone(), self.c.clone())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension `2n+1` of the hypersurface.
    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    /// Dimension `2n+2` of the ambient space.
    pub fn ambient_dim(&self) -> usize {
        2 * self.n + 2
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn domain(&self) -> &[Interval] {
        &self.domain
    }

    pub fn f(&self) -> &[Expr] {
        &self.f
    }

    pub fn c(&self) -> &[Expr] {
        &self.c
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim() && self.domain.iter().zip(point).all(|(iv, &x)| iv.contains(x))
    }

    /// Tables referenced by any component, in first-appearance order.
    pub fn tables(&self) -> Vec<Arc<HermiteTable>> {
        let mut out: Vec<Arc<HermiteTable>> = Vec::new();
        for e in self.f.iter().chain(&self.c) {
            for t in e.tables() {
                if !out.iter().any(|o| **o == *t) {
                    out.push(t);
                }
            }
        }
        out
    }

    /// Serialises in the line-based immersion file format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n {}", self.n);
        let _ = writeln!(s, "vars {}", self.vars.join(" "));
        let dom: Vec<String> = self
            .domain
            .iter()
            .map(|iv| format!("{}:{}", format_number(iv.lo), format_number(iv.hi)))
            .collect();
        let _ = writeln!(s, "domain {}", dom.join(" "));
        for t in self.tables() {
            let _ = write!(s, "table {} {}:{}", t.name(), format_number(t.lo()), format_number(t.hi()));
            for [v, d, dd] in t.knots() {
                let _ = write!(s, " {},{},{}", format_number(*v), format_number(*d), format_number(*dd));
            }
            s.push('\n');
        }
        for (block, comps) in [('f', &self.f), ('C', &self.c)] {
            for (i, e) in comps.iter().enumerate() {
                let _ = writeln!(s, "{block}{} = {}", i + 1, e.display(&self.vars));
            }
        }
        s
    }
}

fn parse_interval(tok: &str) -> Option<Interval> {
    let (lo, hi) = tok.split_once(':')?;
    let bound = |t: &str| t.parse::<f64>().ok().filter(|v| v.is_finite());
    Some(Interval::new(bound(lo)?, bound(hi)?))
}

struct Line<'a> {
    number: usize,
    text: &'a str,
    /// 1-based column of `text` within the raw line.
    column: usize,
}

fn significant_lines(text: &str) -> impl Iterator<Item = Line<'_>> {
    text.lines().enumerate().filter_map(|(k, raw)| {
        let body = raw.split('#').next().unwrap_or("");
        let trimmed = body.trim_start();
        let lead = body.len() - trimmed.len();
        let trimmed = trimmed.trim_end();
        if trimmed.is_empty() {
            None
        } else {
            Some(Line { number: k + 1, text: trimmed, column: body[..lead].chars().count() + 1 })
        }
    })
}

fn header<'a>(line: Option<&Line<'a>>, key: &'static str) -> Result<&'a str, ParseError> {
    let line = line.ok_or(ParseError::new(ParseErrorKind::MissingHeader(key), 1, 1))?;
    match line.text.split_once(char::is_whitespace) {
        Some((k, rest)) if k == key => Ok(rest.trim()),
        _ if line.text == key => Ok(""),
        _ => Err(ParseError::new(ParseErrorKind::MissingHeader(key), line.number, line.column)),
    }
}

fn parse_table(line: &Line<'_>, rest: &str) -> Result<HermiteTable, ParseError> {
    let bad = |msg: String| ParseError::new(ParseErrorKind::BadTable(msg), line.number, line.column);
    let mut toks = rest.split_whitespace();
    let name = toks.next().ok_or_else(|| bad("missing name".into()))?;
    if !valid_identifier(name) {
        return Err(bad(format!("invalid name {name:?}")));
    }
    let range = toks
        .next()
        .and_then(parse_interval)
        .ok_or_else(|| bad("missing lo:hi range".into()))?;
    let mut knots = Vec::new();
    for tok in toks {
        let vals: Vec<f64> = tok
            .split(',')
            .map(str::parse::<f64>)
            .collect::<Result<_, _>>()
            .map_err(|_| bad(format!("malformed knot {tok:?}")))?;
        let knot: [f64; 3] = vals
            .try_into()
            .map_err(|_| bad(format!("knot {tok:?} needs value,slope,curvature")))?;
        knots.push(knot);
    }
    HermiteTable::new(name, range.lo, range.hi, knots)
        .ok_or_else(|| bad("needs at least two finite knots and lo < hi".into()))
}

/// Parses the line-based immersion file format:
///
/// ```text
/// n 1
/// vars x y z
/// domain -1:1 -1:1 -1:1
/// f1 = x + y
/// ...
/// C4 = cosh(z)
/// ```
///
/// `#` starts a comment. Generated files may additionally contain `table`
/// lines declaring sampled functions before the components that use them.
pub fn parse_immersion(text: &str) -> Result<ImmersionSpec, ParseError> {
    let lines: Vec<Line<'_>> = significant_lines(text).collect();
    let mut it = lines.iter();

    let first = it.next();
    let n_text = header(first, "n")?;
    let at = |l: Option<&Line<'_>>, kind| {
        let (line, col) = l.map_or((1, 1), |l| (l.number, l.column));
        ParseError::new(kind, line, col)
    };
    let n: usize = n_text
        .parse()
        .map_err(|_| at(first, ParseErrorKind::BadHeader(format!("n {n_text:?}"))))?;
    if n == 0 || n > 16 {
        return Err(at(first, ParseErrorKind::BadHeader(format!("n must be in 1..=16, got {n}"))));
    }
    let m = 2 * n + 1;

    let vars_line = it.next();
    let vars: Vec<String> = header(vars_line, "vars")?.split_whitespace().map(String::from).collect();
    if vars.len() != m {
        return Err(at(
            vars_line,
            ParseErrorKind::BadHeader(format!("expected {m} variables, found {}", vars.len())),
        ));
    }
    for (k, v) in vars.iter().enumerate() {
        if !valid_identifier(v) || vars[..k].contains(v) {
            return Err(at(vars_line, ParseErrorKind::BadHeader(format!("bad variable name {v:?}"))));
        }
    }

    let dom_line = it.next();
    let domain: Vec<Interval> = header(dom_line, "domain")?
        .split_whitespace()
        .map(|t| {
            parse_interval(t)
                .filter(|iv| iv.lo < iv.hi && iv.lo.is_finite() && iv.hi.is_finite())
                .ok_or_else(|| at(dom_line, ParseErrorKind::BadHeader(format!("bad interval {t:?}"))))
        })
        .collect::<Result<_, _>>()?;
    if domain.len() != m {
        return Err(at(
            dom_line,
            ParseErrorKind::BadHeader(format!("expected {m} intervals, found {}", domain.len())),
        ));
    }

    let mut tables: Vec<Arc<HermiteTable>> = Vec::new();
    let mut f: Vec<Option<Expr>> = vec![None; m + 1];
    let mut c: Vec<Option<Expr>> = vec![None; m + 1];
    let mut last_line = dom_line.map_or(1, |l| l.number);
    for line in it {
        last_line = line.number;
        if let Some(rest) = line.text.strip_prefix("table ") {
            let t = parse_table(line, rest)?;
            if tables.iter().any(|o| o.name() == t.name()) || vars.iter().any(|v| v == t.name()) {
                return Err(at(Some(line), ParseErrorKind::DuplicateKey(t.name().to_string())));
            }
            tables.push(Arc::new(t));
            continue;
        }
        let (key, rhs) = line
            .text
            .split_once('=')
            .ok_or_else(|| at(Some(line), ParseErrorKind::UnknownLine))?;
        let key = key.trim();
        let (block, slots) = match key.chars().next() {
            Some('f') => ('f', &mut f),
            Some('C') => ('C', &mut c),
            _ => return Err(at(Some(line), ParseErrorKind::UnknownLine)),
        };
        let index: usize = key[1..].parse().map_err(|_| at(Some(line), ParseErrorKind::UnknownLine))?;
        if index == 0 || index > m + 1 {
            return Err(at(
                Some(line),
                ParseErrorKind::ComponentCount { block, expected: m + 1, found: index },
            ));
        }
        if slots[index - 1].is_some() {
            return Err(at(Some(line), ParseErrorKind::DuplicateKey(key.to_string())));
        }
        let offset = line.text.len() - rhs.len();
        let column = line.column + line.text[..offset].chars().count();
        let scope = Scope { vars: &vars, tables: &tables };
        slots[index - 1] = Some(parse_in_scope(rhs, &scope, line.number, column)?);
    }

    let collect = |block: char, slots: Vec<Option<Expr>>| -> Result<Vec<Expr>, ParseError> {
        let found = slots.iter().filter(|s| s.is_some()).count();
        if found != m + 1 {
            return Err(ParseError::new(
                ParseErrorKind::ComponentCount { block, expected: m + 1, found },
                last_line,
                1,
            ));
        }
        Ok(slots.into_iter().flatten().collect())
    };
    let f = collect('f', f)?;
    if c.iter().all(Option::is_none) {
        return Err(ParseError::new(ParseErrorKind::MissingTransversal, last_line, 1));
    }
    let c = collect('C', c)?;
    ImmersionSpec::new(n, vars, domain, f, c)
        .map_err(|e| ParseError::new(ParseErrorKind::BadHeader(e.to_string()), 1, 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "n 1\nvars x y z\ndomain -1:1 -1:1 -1:1\nf1 = x + y\nf2 = sinh(z)\nf3 = x - y\nf4 = cosh(z)\nC1 = x\nC2 = sinh(z)\nC3 = x\nC4 = cosh(z)\n";

    #[test]
    fn parses_sample_and_round_trips() {
        let spec = parse_immersion(SAMPLE).unwrap();
        assert_eq!(spec.n(), 1);
        assert_eq!(spec.vars(), &["x", "y", "z"]);
        assert_eq!(spec.to_text(), SAMPLE);
    }

    #[test]
    fn comments_and_order_are_tolerated() {
        let text = "# header\nn 1   # one\nvars x y z\ndomain -1:1 -1:1 -1:1\n\nC4 = cosh(z)\nC3 = x\nC2 = sinh(z)\nC1 = x\nf1 = x + y\nf2 = sinh(z)\nf3 = x - y\nf4 = cosh(z)\n";
        assert_eq!(parse_immersion(text).unwrap(), parse_immersion(SAMPLE).unwrap());
    }

    #[test]
    fn wrong_component_count() {
        let text = SAMPLE.replace("f4 = cosh(z)\n", "");
        let e = parse_immersion(&text).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::ComponentCount { block: 'f', expected: 4, found: 3 });
        assert_eq!(e.to_string(), "10:1: expected 4 f components, found 3");
    }

    #[test]
    fn non_finite_domain_is_rejected() {
        for bad in ["domain -inf:1 -1:1 -1:1", "domain -1:NaN -1:1 -1:1", "domain -1:1e999 -1:1 -1:1"] {
            let text = SAMPLE.replace("domain -1:1 -1:1 -1:1", bad);
            assert!(parse_immersion(&text).is_err(), "{bad}");
        }
    }

    #[test]
    fn missing_transversal() {
        let text: String = SAMPLE.lines().take(7).map(|l| format!("{l}\n")).collect();
        assert_eq!(parse_immersion(&text).unwrap_err().kind, ParseErrorKind::MissingTransversal);
    }

    #[test]
    fn header_and_key_errors() {
        assert_eq!(
            parse_immersion("vars x y z\n").unwrap_err().kind,
            ParseErrorKind::MissingHeader("n")
        );
        assert_eq!(parse_immersion("").unwrap_err().kind, ParseErrorKind::MissingHeader("n"));
        let dup = SAMPLE.replace("f3 = x - y", "f2 = x - y");
        assert_eq!(parse_immersion(&dup).unwrap_err().kind, ParseErrorKind::DuplicateKey("f2".into()));
        let far = SAMPLE.replace("f4", "f5");
        assert!(matches!(
            parse_immersion(&far).unwrap_err().kind,
            ParseErrorKind::ComponentCount { found: 5, .. }
        ));
        let bad_dom = SAMPLE.replace("domain -1:1 -1:1 -1:1", "domain 1:-1 -1:1 -1:1");
        assert!(matches!(parse_immersion(&bad_dom).unwrap_err().kind, ParseErrorKind::BadHeader(_)));
    }

    #[test]
    fn expression_errors_report_file_positions() {
        let text = SAMPLE.replace("f3 = x - y", "f3 = x - w");
        let e = parse_immersion(&text).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier("w".into()));
        assert_eq!((e.location.line, e.location.column), (6, 10));
    }

    #[test]
    fn tables_round_trip() {
        let text = "n 1\nvars x y z\ndomain -1:1 -1:1 -1:1\ntable g -1:1 0,1,0 0.5,1.25,-0.5 1,1,0\nf1 = x + y\nf2 = g(z)\nf3 = x - y\nf4 = g'(z)\nC1 = 0\nC2 = 0\nC3 = 0\nC4 = 1\n";
        let spec = parse_immersion(text).unwrap();
        assert_eq!(spec.tables().len(), 1);
        assert_eq!(spec.to_text(), text);
        let bad = text.replace("0.5,1.25,-0.5", "0.5,1.25");
        assert!(matches!(parse_immersion(&bad).unwrap_err().kind, ParseErrorKind::BadTable(_)));
    }
}
