//! Line-oriented text format for a single [`ConicProgram`]; grammar in
//! `docs/conic-format.md`.

use std::fmt::Write as _;

use super::{AffineExpr, ConicProgram, LinearRow, SocBlock};
use crate::error::{Error, Result};

const HEADER: &str = "conic-program 1";

fn terms_to_string(out: &mut String, terms: &[(usize, f64)]) {
    for &(j, c) in terms {
        let _ = write!(out, " {j}:{c}");
    }
}

pub fn write_program(p: &ConicProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "vars {}", p.n_vars());
    for (j, &c) in p.objective.iter().enumerate() {
        if c != 0.0 {
            let _ = writeln!(out, "obj {j} {c}");
        }
    }
    for (j, &(lo, hi)) in p.bounds.iter().enumerate() {
        if lo.is_finite() || hi.is_finite() {
            let _ = writeln!(out, "bound {j} {lo} {hi}");
        }
    }
    for r in &p.eq_rows {
        let _ = write!(out, "eq {}", r.rhs);
        terms_to_string(&mut out, &r.coeffs);
        out.push('\n');
    }
    for r in &p.ineq_rows {
        let _ = write!(out, "le {}", r.rhs);
        terms_to_string(&mut out, &r.coeffs);
        out.push('\n');
    }
    for b in &p.soc_blocks {
        let _ = writeln!(out, "soc {}", 1 + b.x.len());
        for e in std::iter::once(&b.t).chain(&b.x) {
            let _ = write!(out, "aff {}", e.constant);
            terms_to_string(&mut out, &e.terms);
            out.push('\n');
        }
    }
    out.push_str("end\n");
    out
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Data(format!("conic program line {line}: {msg}"))
}

fn parse_f64(line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| bad(line, format!("bad number `{s}`")))
}

fn parse_usize(line: usize, s: &str) -> Result<usize> {
    s.parse::<usize>().map_err(|_| bad(line, format!("bad index `{s}`")))
}

fn parse_terms<'a>(line: usize, parts: impl Iterator<Item = &'a str>) -> Result<Vec<(usize, f64)>> {
    parts
        .map(|tok| {
            let (j, c) = tok.split_once(':').ok_or_else(|| bad(line, format!("bad term `{tok}`")))?;
            Ok((parse_usize(line, j)?, parse_f64(line, c)?))
        })
        .collect()
}

pub fn read_program(text: &str) -> Result<ConicProgram> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    match lines.next() {
        Some((_, l)) if l == HEADER => {}
        Some((n, l)) => return Err(bad(n, format!("expected `{HEADER}`, found `{l}`"))),
        None => return Err(bad(0, "empty input")),
    }
    let mut program = match lines.next() {
        Some((n, l)) => {
            let count = l.strip_prefix("vars ").ok_or_else(|| bad(n, "expected `vars N`"))?;
            ConicProgram::new(parse_usize(n, count.trim())?)
        }
        None => return Err(bad(0, "missing `vars` line")),
    };

    let mut pending: Option<(usize, usize, Vec<AffineExpr>)> = None;
    let mut ended = false;
    for (n, l) in lines.by_ref() {
        let mut parts = l.split_whitespace();
        let keyword = parts.next().unwrap_or_default();
        if let Some((_, dim, exprs)) = pending.as_mut() {
            if keyword != "aff" {
                return Err(bad(n, "cone block truncated"));
            }
            let constant = parse_f64(n, parts.next().ok_or_else(|| bad(n, "missing constant"))?)?;
            exprs.push(AffineExpr::new(parse_terms(n, parts)?, constant));
            if exprs.len() == *dim {
                let (_, _, mut exprs) = pending.take().expect("pending block");
                let t = exprs.remove(0);
                program.soc_blocks.push(SocBlock { t, x: exprs });
            }
            continue;
        }
        match keyword {
            "obj" => {
                let j = parse_usize(n, parts.next().ok_or_else(|| bad(n, "missing index"))?)?;
                let c = parse_f64(n, parts.next().ok_or_else(|| bad(n, "missing value"))?)?;
                *program.objective.get_mut(j).ok_or_else(|| bad(n, "index out of range"))? = c;
            }
            "bound" => {
                let j = parse_usize(n, parts.next().ok_or_else(|| bad(n, "missing index"))?)?;
                let lo = parse_f64(n, parts.next().ok_or_else(|| bad(n, "missing lower"))?)?;
                let hi = parse_f64(n, parts.next().ok_or_else(|| bad(n, "missing upper"))?)?;
                *program.bounds.get_mut(j).ok_or_else(|| bad(n, "index out of range"))? = (lo, hi);
            }
            "eq" | "le" => {
                let rhs = parse_f64(n, parts.next().ok_or_else(|| bad(n, "missing rhs"))?)?;
                let row = LinearRow::new(parse_terms(n, parts)?, rhs);
                if keyword == "eq" {
                    program.eq_rows.push(row);
                } else {
                    program.ineq_rows.push(row);
                }
            }
            "soc" => {
                let dim = parse_usize(n, parts.next().ok_or_else(|| bad(n, "missing dimension"))?)?;
                if dim < 2 {
                    return Err(bad(n, "cone dimension must be at least 2"));
                }
                pending = Some((n, dim, Vec::with_capacity(dim)));
            }
            "end" => {
                ended = true;
                break;
            }
            other => return Err(bad(n, format!("unknown keyword `{other}`"))),
        }
    }
    if let Some((n, _, _)) = pending {
        return Err(bad(n, "cone block truncated"));
    }
    if !ended {
        return Err(bad(0, "missing `end`"));
    }
    program.validate()?;
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_terms(n: usize) -> impl Strategy<Value = Vec<(usize, f64)>> {
        prop::collection::vec((0..n, -1e6f64..1e6), 0..4)
    }

    prop_compose! {
        fn arb_program()(n in 1usize..6)(
            objective in prop::collection::vec(-10.0f64..10.0, n),
            eq in prop::collection::vec((arb_terms(n), -1e3f64..1e3), 0..3),
            le in prop::collection::vec((arb_terms(n), -1e3f64..1e3), 0..3),
            soc in prop::collection::vec(
                prop::collection::vec((arb_terms(n), -5.0f64..5.0), 2..4), 0..3),
            lo in prop::collection::vec(prop::option::of(-5.0f64..0.0), n),
        ) -> ConicProgram {
            let mut p = ConicProgram::new(objective.len());
            p.objective = objective;
            p.eq_rows = eq.into_iter().map(|(t, r)| LinearRow::new(t, r)).collect();
            p.ineq_rows = le.into_iter().map(|(t, r)| LinearRow::new(t, r)).collect();
            p.soc_blocks = soc
                .into_iter()
                .map(|mut v| {
                    let (tt, tc) = v.remove(0);
                    SocBlock {
                        t: AffineExpr::new(tt, tc),
                        x: v.into_iter().map(|(t, c)| AffineExpr::new(t, c)).collect(),
                    }
                })
                .collect();
            p.bounds = lo.into_iter().map(|l| (l.unwrap_or(f64::NEG_INFINITY), f64::INFINITY)).collect();
            p
        }
    }

    proptest! {
        #[test]
        fn text_round_trip(p in arb_program()) {
            let text = write_program(&p);
            let q = read_program(&text).unwrap();
            prop_assert_eq!(p, q);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_program("").is_err());
        assert!(read_program("conic-program 1\nvars 2\nfoo\nend\n").is_err());
        assert!(read_program("conic-program 1\nvars 1\nsoc 3\naff 0 0:1\nend\n").is_err());
        assert!(read_program("conic-program 1\nvars 1\neq 1 4:1\nend\n").is_err());
        assert!(read_program("conic-program 1\nvars 1\n").is_err());
    }
}
