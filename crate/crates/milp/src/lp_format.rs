//! CPLEX-style LP text: `Maximize`/`Minimize`, `Subject To`, `Bounds`,
//! `Binary`, `General`, `End`. Comments start with a backslash.
//!
//! The writer lists every variable in the objective (zero coefficients
//! included) so that parsing the output restores the same variable order.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Result, SolverError};
use crate::problem::{MilpProblem, Relation, Sense, VarId};

const TERMS_PER_LINE: usize = 6;

fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

fn write_terms(out: &mut String, terms: impl Iterator<Item = (String, f64)>) {
    for (k, (name, a)) in terms.enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if a.is_sign_negative() { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {name}", fmt_num(a.abs()));
    }
}

pub fn write_lp(problem: &MilpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ Problem: {}", problem.name);
    out.push_str(match problem.sense {
        Sense::Maximize => "Maximize\n",
        Sense::Minimize => "Minimize\n",
    });
    out.push_str(" obj:");
    write_terms(
        &mut out,
        problem
            .variables
            .iter()
            .zip(&problem.objective)
            .map(|(v, &c)| (v.name.clone(), c)),
    );
    if problem.objective_offset != 0.0 {
        let sign = if problem.objective_offset < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {}", fmt_num(problem.objective_offset.abs()));
    }
    out.push_str("\nSubject To\n");
    for c in &problem.constraints {
        let _ = write!(out, " {}:", c.name);
        if c.terms.is_empty() {
            let _ = write!(out, " 0 {}", problem.variables.first().map_or("x", |v| v.name.as_str()));
        }
        write_terms(
            &mut out,
            c.terms.iter().map(|&(v, a)| (problem.variables[v.0].name.clone(), a)),
        );
        let _ = writeln!(out, " {} {}", c.relation.symbol(), fmt_num(c.rhs));
    }
    out.push_str("Bounds\n");
    for v in &problem.variables {
        if v.is_binary() || (v.lower == 0.0 && v.upper == f64::INFINITY) {
            continue;
        }
        if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            let _ = writeln!(out, " {} free", v.name);
        } else if v.lower == v.upper {
            let _ = writeln!(out, " {} = {}", v.name, fmt_num(v.lower));
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", fmt_num(v.lower), v.name, fmt_num(v.upper));
        }
    }
    let bins: Vec<&str> = problem
        .variables
        .iter()
        .filter(|v| v.is_binary())
        .map(|v| v.name.as_str())
        .collect();
    if !bins.is_empty() {
        out.push_str("Binary\n");
        for chunk in bins.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    let gens: Vec<&str> = problem
        .variables
        .iter()
        .filter(|v| v.integer && !v.is_binary())
        .map(|v| v.name.as_str())
        .collect();
    if !gens.is_empty() {
        out.push_str("General\n");
        for chunk in gens.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Plus,
    Minus,
    Colon,
    Rel(Relation),
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Tok>> {
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '+' {
            toks.push(Tok::Plus);
            i += 1;
        } else if c == '-' {
            toks.push(Tok::Minus);
            i += 1;
        } else if c == ':' {
            toks.push(Tok::Colon);
            i += 1;
        } else if c == '<' || c == '>' || c == '=' {
            let next = chars.get(i + 1).copied();
            let (rel, len) = match (c, next) {
                ('<', Some('=')) | ('=', Some('<')) => (Relation::Le, 2),
                ('>', Some('=')) | ('=', Some('>')) => (Relation::Ge, 2),
                ('<', _) => (Relation::Le, 1),
                ('>', _) => (Relation::Ge, 1),
                _ => (Relation::Eq, 1),
            };
            toks.push(Tok::Rel(rel));
            i += len;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut k = i + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    i = k;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<f64>().map_err(|_| SolverError::Parse {
                line: lineno,
                message: format!("bad number '{s}'"),
            })?;
            toks.push(Tok::Num(v));
        } else if c.is_alphabetic() || "_[].'!\"#$%&()/,;?@`{}|~".contains(c) {
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() && !"+-:<>=".contains(chars[i]) {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let lower = s.to_ascii_lowercase();
            if lower == "inf" || lower == "infinity" {
                toks.push(Tok::Num(f64::INFINITY));
            } else {
                toks.push(Tok::Ident(s));
            }
        } else {
            return Err(SolverError::Parse {
                line: lineno,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(toks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Binary,
    General,
    End,
}

fn section_header(line: &str) -> Option<(Section, Option<Sense>)> {
    let l = line.trim().to_ascii_lowercase();
    let l = l.as_str();
    match l {
        "maximize" | "maximise" | "maximum" | "max" => Some((Section::Objective, Some(Sense::Maximize))),
        "minimize" | "minimise" | "minimum" | "min" => Some((Section::Objective, Some(Sense::Minimize))),
        "subject to" | "such that" | "st" | "s.t." => Some((Section::Constraints, None)),
        "bounds" | "bound" => Some((Section::Bounds, None)),
        "binary" | "binaries" | "bin" => Some((Section::Binary, None)),
        "general" | "generals" | "gen" | "integer" | "integers" => Some((Section::General, None)),
        "end" => Some((Section::End, None)),
        _ => None,
    }
}

struct Builder {
    problem: MilpProblem,
    index: HashMap<String, usize>,
    explicit_bounds: Vec<bool>,
}

impl Builder {
    fn var(&mut self, name: &str) -> VarId {
        if let Some(&j) = self.index.get(name) {
            return VarId(j);
        }
        let id = self.problem.add_var(name, 0.0, f64::INFINITY, 0.0);
        self.index.insert(name.to_string(), id.0);
        self.explicit_bounds.push(false);
        id
    }
}

/// Parse a linear expression; returns terms and the constant part.
fn parse_expr(toks: &[Tok], b: &mut Builder, line: usize) -> Result<(Vec<(VarId, f64)>, f64)> {
    let mut terms = Vec::new();
    let mut constant = 0.0;
    let mut i = 0;
    while i < toks.len() {
        let mut sign = 1.0;
        while let Some(t) = toks.get(i) {
            match t {
                Tok::Plus => i += 1,
                Tok::Minus => {
                    sign = -sign;
                    i += 1;
                }
                _ => break,
            }
        }
        match (toks.get(i), toks.get(i + 1)) {
            (Some(Tok::Num(c)), Some(Tok::Ident(name))) => {
                terms.push((b.var(name), sign * c));
                i += 2;
            }
            (Some(Tok::Num(c)), _) => {
                constant += sign * c;
                i += 1;
            }
            (Some(Tok::Ident(name)), _) => {
                terms.push((b.var(name), sign));
                i += 1;
            }
            (None, _) => break,
            (Some(t), _) => {
                return Err(SolverError::Parse {
                    line,
                    message: format!("unexpected token {t:?} in expression"),
                })
            }
        }
    }
    Ok((terms, constant))
}

/// Split off a leading `name:` label.
fn take_label(toks: &[Tok]) -> (Option<String>, &[Tok]) {
    match toks {
        [Tok::Ident(name), Tok::Colon, rest @ ..] => (Some(name.clone()), rest),
        _ => (None, toks),
    }
}

pub fn parse_lp(text: &str) -> Result<MilpProblem> {
    let mut b = Builder {
        problem: MilpProblem::new("lp", Sense::Minimize),
        index: HashMap::new(),
        explicit_bounds: Vec::new(),
    };
    let mut section = Section::None;
    let mut seen_objective = false;
    // constraint tokens accumulate across lines until a right-hand side completes them
    let mut pending: Vec<Tok> = Vec::new();
    let mut pending_line = 0;
    let mut objective_toks: Vec<Tok> = Vec::new();
    let mut objective_line = 0;

    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        let line = match raw.find('\\') {
            Some(p) => {
                if let Some(name) = raw[p + 1..].trim().strip_prefix("Problem:") {
                    b.problem.name = name.trim().to_string();
                }
                &raw[..p]
            }
            None => raw,
        };
        if line.trim().is_empty() {
            continue;
        }
        if let Some((sec, sense)) = section_header(line) {
            if section == Section::Constraints && !pending.is_empty() {
                return Err(SolverError::Parse {
                    line: pending_line,
                    message: "incomplete constraint".into(),
                });
            }
            if let Some(s) = sense {
                b.problem.sense = s;
                seen_objective = true;
                objective_line = lineno;
            }
            if section == Section::Objective && sec != Section::Objective {
                let (_, body) = take_label(&objective_toks);
                let body = body.to_vec();
                let (terms, constant) = parse_expr(&body, &mut b, objective_line)?;
                for (v, c) in terms {
                    b.problem.objective[v.0] += c;
                }
                b.problem.objective_offset = constant;
            }
            section = sec;
            if sec == Section::End {
                break;
            }
            continue;
        }
        let toks = tokenize(line, lineno)?;
        match section {
            Section::None => {
                return Err(SolverError::Parse {
                    line: lineno,
                    message: "content before objective section".into(),
                })
            }
            Section::Objective => objective_toks.extend(toks),
            Section::Constraints => {
                if pending.is_empty() {
                    pending_line = lineno;
                }
                pending.extend(toks);
                let rel_at = pending.iter().position(|t| matches!(t, Tok::Rel(_)));
                if let Some(r) = rel_at {
                    // complete once a number (optionally signed) follows the relation
                    let after = &pending[r + 1..];
                    let rhs = match after {
                        [Tok::Num(v)] => Some(*v),
                        [Tok::Minus, Tok::Num(v)] => Some(-*v),
                        [Tok::Plus, Tok::Num(v)] => Some(*v),
                        [] | [Tok::Minus] | [Tok::Plus] => None,
                        _ => {
                            return Err(SolverError::Parse {
                                line: lineno,
                                message: "expected a number after the relation".into(),
                            })
                        }
                    };
                    if let Some(rhs) = rhs {
                        let Tok::Rel(rel) = pending[r].clone() else { unreachable!() };
                        let (label, body) = take_label(&pending[..r]);
                        let body = body.to_vec();
                        let (terms, constant) = parse_expr(&body, &mut b, pending_line)?;
                        let name = label.unwrap_or_else(|| format!("c{}", b.problem.constraints.len() + 1));
                        b.problem.add_constraint(name, terms, rel, rhs - constant);
                        pending.clear();
                    }
                }
            }
            Section::Bounds => parse_bound(&toks, &mut b, lineno)?,
            Section::Binary | Section::General => {
                for t in toks {
                    let Tok::Ident(name) = t else {
                        return Err(SolverError::Parse {
                            line: lineno,
                            message: "expected variable names".into(),
                        });
                    };
                    let v = b.var(&name).0;
                    let var = &mut b.problem.variables[v];
                    var.integer = true;
                    if section == Section::Binary {
                        var.lower = 0.0;
                        var.upper = 1.0;
                    }
                }
            }
            Section::End => unreachable!(),
        }
    }
    if !seen_objective {
        return Err(SolverError::Parse {
            line: 1,
            message: "missing objective section".into(),
        });
    }
    if !pending.is_empty() {
        return Err(SolverError::Parse {
            line: pending_line,
            message: "incomplete constraint".into(),
        });
    }
    if section == Section::Objective {
        let (_, body) = take_label(&objective_toks);
        let body = body.to_vec();
        let (terms, constant) = parse_expr(&body, &mut b, objective_line)?;
        for (v, c) in terms {
            b.problem.objective[v.0] += c;
        }
        b.problem.objective_offset = constant;
    }
    Ok(b.problem)
}

fn signed_num(toks: &[Tok]) -> Option<(f64, usize)> {
    match toks {
        [Tok::Minus, Tok::Num(v), ..] => Some((-v, 2)),
        [Tok::Plus, Tok::Num(v), ..] => Some((*v, 2)),
        [Tok::Num(v), ..] => Some((*v, 1)),
        _ => None,
    }
}

fn parse_bound(toks: &[Tok], b: &mut Builder, line: usize) -> Result<()> {
    let err = || SolverError::Parse {
        line,
        message: "unrecognised bound".into(),
    };
    match toks {
        [Tok::Ident(name), Tok::Ident(kw)] if kw.eq_ignore_ascii_case("free") => {
            let v = b.var(name).0;
            b.problem.variables[v].lower = f64::NEG_INFINITY;
            b.problem.variables[v].upper = f64::INFINITY;
            Ok(())
        }
        [Tok::Ident(name), Tok::Rel(rel), rest @ ..] => {
            let (val, used) = signed_num(rest).ok_or_else(err)?;
            if used != rest.len() {
                return Err(err());
            }
            let v = b.var(name).0;
            let var = &mut b.problem.variables[v];
            match rel {
                Relation::Le => var.upper = val,
                Relation::Ge => var.lower = val,
                Relation::Eq => {
                    var.lower = val;
                    var.upper = val;
                }
            }
            Ok(())
        }
        _ => {
            let (lo, used) = signed_num(toks).ok_or_else(err)?;
            let rest = &toks[used..];
            match rest {
                [Tok::Rel(Relation::Le), Tok::Ident(name), tail @ ..] => {
                    let v = b.var(name).0;
                    b.problem.variables[v].lower = lo;
                    match tail {
                        [] => Ok(()),
                        [Tok::Rel(Relation::Le), hi @ ..] => {
                            let (hi, used) = signed_num(hi).ok_or_else(err)?;
                            if used != tail.len() - 1 {
                                return Err(err());
                            }
                            b.problem.variables[v].upper = hi;
                            Ok(())
                        }
                        _ => Err(err()),
                    }
                }
                [Tok::Rel(Relation::Ge), Tok::Ident(name)] => {
                    let v = b.var(name).0;
                    b.problem.variables[v].upper = lo;
                    Ok(())
                }
                _ => Err(err()),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MilpProblem {
        let mut p = MilpProblem::new("sample", Sense::Maximize);
        let x = p.add_var("x", 0.0, 2.0, 3.0);
        let y = p.add_var("y", 0.0, f64::INFINITY, 2.0);
        let z = p.add_var("z", f64::NEG_INFINITY, f64::INFINITY, -0.5);
        let b = p.add_binary("b", 1.25);
        let n = p.add_integer("n", -3.0, 7.0, 0.0);
        p.add_constraint("eq6_balance_t3_s2", vec![(x, 1.0), (y, 1.0)], Relation::Le, 4.0);
        p.add_constraint("mix", vec![(z, -2.5e-3), (b, 1e6), (n, 1.0)], Relation::Ge, -1.5);
        p.add_constraint("fix", vec![(x, 1.0), (z, 1.0)], Relation::Eq, 0.0);
        p.objective_offset = 12.5;
        p
    }

    #[test]
    fn write_then_parse_restores_problem() {
        let p = sample();
        let text = write_lp(&p);
        let q = parse_lp(&text).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn parses_hand_written_text() {
        let text = "\\ tiny\nMinimize\n obj: 2 a - b + 3\nSubject To\n r1: a + b\n   >= 1\n -a + 2 b <= 4\nBounds\n a <= 10\n -1 <= b <= 1\nGeneral\n a\nEnd\n";
        let p = parse_lp(text).unwrap();
        assert_eq!(p.sense, Sense::Minimize);
        assert_eq!(p.objective, vec![2.0, -1.0]);
        assert_eq!(p.objective_offset, 3.0);
        assert_eq!(p.constraints.len(), 2);
        assert_eq!(p.constraints[1].name, "c2");
        assert_eq!(p.constraints[0].relation, Relation::Ge);
        assert!(p.variables[0].integer);
        assert_eq!((p.variables[1].lower, p.variables[1].upper), (-1.0, 1.0));
    }

    #[test]
    fn reports_line_of_bad_token() {
        let text = "Maximize\n obj: x\nSubject To\n c: x <= 4 $\nEnd\n";
        match parse_lp(text) {
            Err(SolverError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
