//! Sparse triplet text export of a QCQP.
//!
//! Each form is written as its homogeneous Hermitian matrix `B̂` of side
//! `n + 1`, with `value = [φ; 1]† B̂ [φ; 1]`, one line per nonzero entry:
//! `tag;row;col;re;im`. The tag carries the sense as `:eq`, `:le` or `:max`.

use std::collections::BTreeMap;
use std::io::Write;

use super::form::{QcqpProblem, QuadraticForm, Sense};
use crate::error::Result;
use crate::linalg::C64;

fn homogeneous_entries(form: &QuadraticForm, n: usize) -> BTreeMap<(usize, usize), C64> {
    let mut out: BTreeMap<(usize, usize), C64> = BTreeMap::new();
    let mut add = |r: usize, col: usize, v: C64| *out.entry((r, col)).or_insert(C64::new(0.0, 0.0)) += v;
    let mut constant = form.constant;
    for t in &form.terms {
        let (a, w) = (&t.left, &t.right);
        for &(j, aj) in &a.terms {
            for &(k, wk) in &w.terms {
                let m = t.coeff * aj.conj() * wk * 0.5;
                add(j, k, m);
                add(k, j, m.conj());
            }
        }
        for &(k, wk) in &w.terms {
            let beta = t.coeff.conj() * a.constant * wk.conj();
            add(k, n, beta * 0.5);
            add(n, k, beta.conj() * 0.5);
        }
        for &(j, aj) in &a.terms {
            let beta = t.coeff * w.constant * aj.conj();
            add(j, n, beta * 0.5);
            add(n, j, beta.conj() * 0.5);
        }
        constant += (t.coeff * a.constant.conj() * w.constant).re;
    }
    add(n, n, C64::new(constant, 0.0));
    out.retain(|_, v| *v != C64::new(0.0, 0.0));
    out
}

fn write_form<W: Write>(out: &mut W, form: &QuadraticForm, n: usize, sense: &str) -> Result<()> {
    for ((r, col), v) in homogeneous_entries(form, n) {
        writeln!(out, "{}:{sense};{r};{col};{};{}", form.tag, v.re, v.im)?;
    }
    Ok(())
}

pub fn write_triplets<W: Write>(problem: &QcqpProblem, out: &mut W) -> Result<()> {
    writeln!(out, "# n = {}; value = [phi; 1]^H B [phi; 1]", problem.n)?;
    write_form(out, &problem.objective, problem.n, "max")?;
    for f in &problem.constraints {
        let sense = match f.sense {
            Sense::Equal => "eq",
            Sense::LessEqual => "le",
        };
        write_form(out, f, problem.n, sense)?;
    }
    Ok(())
}
