//! Exact sparse Gaussian elimination over the rationals.

use std::collections::BTreeMap;

use crate::rational::Rational;

/// Solves the square system `A x = b` where `rows[i]` lists the nonzero
/// entries `(column, value)` of row `i`. Returns `None` when `A` is
/// singular.
///
/// Pivots follow a minimum-degree order: the remaining column with the
/// fewest nonzeros, then the shortest row within it, lowest index on ties.
/// The solution of a nonsingular system does not depend on this order.
pub(crate) fn solve_square(rows: &[Vec<(usize, Rational)>], rhs: &[Rational], n: usize) -> Option<Vec<Rational>> {
    assert_eq!(rows.len(), n);
    assert_eq!(rhs.len(), n);
    let mut a: Vec<BTreeMap<usize, Rational>> = rows
        .iter()
        .map(|r| {
            let mut m = BTreeMap::new();
            for (c, v) in r {
                if !v.is_zero() {
                    let e = m.entry(*c).or_insert_with(Rational::zero);
                    *e += v;
                }
            }
            m.retain(|_, v: &mut Rational| !v.is_zero());
            m
        })
        .collect();
    let mut b = rhs.to_vec();
    let mut col_rows: Vec<BTreeMap<usize, ()>> = vec![BTreeMap::new(); n];
    for (i, r) in a.iter().enumerate() {
        for &c in r.keys() {
            col_rows[c].insert(i, ());
        }
    }
    let mut row_done = vec![false; n];
    let mut col_done = vec![false; n];
    let mut order: Vec<(usize, usize)> = Vec::with_capacity(n);

    for _ in 0..n {
        let col = (0..n)
            .filter(|&c| !col_done[c])
            .min_by_key(|&c| (col_rows[c].len(), c))?;
        if col_rows[col].is_empty() {
            return None;
        }
        let prow = *col_rows[col].keys().min_by_key(|&&r| (a[r].len(), r))?;
        col_done[col] = true;
        row_done[prow] = true;
        order.push((prow, col));
        let pivot_row = a[prow].clone();
        let pv = pivot_row[&col].clone();
        let targets: Vec<usize> = col_rows[col].keys().copied().filter(|&r| r != prow).collect();
        for r in targets {
            let f = &a[r][&col] / &pv;
            for (&c, v) in &pivot_row {
                let delta = &f * v;
                let entry = a[r].entry(c).or_insert_with(Rational::zero);
                *entry -= &delta;
                if entry.is_zero() {
                    a[r].remove(&c);
                    col_rows[c].remove(&r);
                } else {
                    col_rows[c].insert(r, ());
                }
            }
            let db = &f * &b[prow];
            b[r] -= db;
        }
        for &c in pivot_row.keys() {
            col_rows[c].remove(&prow);
        }
    }

    let mut x = vec![Rational::zero(); n];
    for &(r, c) in order.iter().rev() {
        let mut acc = b[r].clone();
        for (&j, v) in &a[r] {
            if j != c {
                acc -= v * &x[j];
            }
        }
        x[c] = acc / &a[r][&c];
    }
    Some(x)
}
