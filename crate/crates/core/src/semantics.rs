//! Protected evaluation of trees and the checks that let a candidate skip
//! the expensive cross-validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exprtree::{DynTree, ExprTree, Primitive};

/// Row-wise values of a feature.
pub type FeatureVector = Vec<f64>;

/// Applies a function primitive. `b` is ignored by unary primitives.
///
/// Panics on terminals or when a binary primitive gets no second operand.
pub fn apply_primitive(prim: Primitive, a: f64, b: Option<f64>) -> f64 {
    match prim {
        Primitive::Square => a * a,
        Primitive::SqrtP => a.abs().sqrt(),
        Primitive::LogP => log_p(a),
        Primitive::Exp => a.exp(),
        Primitive::Add | Primitive::Mul | Primitive::Sub | Primitive::AqDiv => {
            let b = b.unwrap_or_else(|| panic!("{prim:?} needs two operands"));
            binary(prim, a, b)
        }
        Primitive::Feature(_) | Primitive::Const(_) => panic!("{prim:?} is not a function"),
    }
}

#[inline]
fn log_p(a: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a.abs().ln()
    }
}

#[inline]
fn binary(prim: Primitive, a: f64, b: f64) -> f64 {
    match prim {
        Primitive::Add => a + b,
        Primitive::Sub => a - b,
        Primitive::Mul => a * b,
        Primitive::AqDiv => a / (1.0 + b * b).sqrt(),
        _ => unreachable!(),
    }
}

fn eval_node(
    prim: Primitive,
    columns: &[Vec<f64>],
    n_rows: usize,
    mut child: impl FnMut(usize) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    match prim {
        Primitive::Feature(i) => columns.get(i).cloned().ok_or(Error::FeatureIndex {
            index: i,
            available: columns.len(),
        }),
        Primitive::Const(v) => Ok(vec![v; n_rows]),
        Primitive::Square | Primitive::SqrtP | Primitive::LogP | Primitive::Exp => {
            let mut a = child(0)?;
            for x in &mut a {
                *x = apply_primitive(prim, *x, None);
            }
            Ok(a)
        }
        _ => {
            let mut a = child(0)?;
            let b = child(1)?;
            for (x, y) in a.iter_mut().zip(&b) {
                *x = binary(prim, *x, *y);
            }
            Ok(a)
        }
    }
}

/// Evaluates a tree over feature columns (all of the same length).
pub fn eval_tree(tree: &DynTree, columns: &[Vec<f64>]) -> Result<FeatureVector> {
    let n = columns.first().map_or(0, Vec::len);
    fn rec(t: &DynTree, columns: &[Vec<f64>], n: usize) -> Result<Vec<f64>> {
        eval_node(t.prim, columns, n, |i| rec(&t.children[i], columns, n))
    }
    rec(tree, columns, n)
}

/// Evaluates the expressed part of a template; introns are never read.
pub fn eval_template(tree: &ExprTree, columns: &[Vec<f64>]) -> Result<FeatureVector> {
    let n = columns.first().map_or(0, Vec::len);
    fn rec(t: &ExprTree, pos: usize, columns: &[Vec<f64>], n: usize) -> Result<Vec<f64>> {
        eval_node(t.get(pos), columns, n, |i| rec(t, 2 * pos + 1 + i, columns, n))
    }
    rec(tree, 0, columns, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Valid,
    Constant,
    Extreme,
    Duplicate,
    Unchanged,
}

impl Verdict {
    /// Constant, extreme and duplicate features get the worst error.
    pub fn is_rejected(self) -> bool {
        matches!(self, Verdict::Constant | Verdict::Extreme | Verdict::Duplicate)
    }
}

/// Magnitude bounds for the extreme-value check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            lower: 1e-10,
            upper: 1e10,
        }
    }
}

/// Runs the four skip checks in order: constant, extreme values (non-finite,
/// nonzero magnitude below `lower`, or above `upper`), exact duplicate of a
/// previously constructed feature, unchanged with respect to `cached`.
pub fn check_criteria(
    v: &[f64],
    previous: &[FeatureVector],
    bounds: Bounds,
    cached: Option<&[f64]>,
) -> Result<Verdict> {
    for p in previous.iter().map(Vec::len).chain(cached.map(<[f64]>::len)) {
        if p != v.len() {
            return Err(Error::LengthMismatch {
                expected: v.len(),
                actual: p,
            });
        }
    }
    if v.iter().all(|&x| x == v[0]) {
        return Ok(Verdict::Constant);
    }
    let extreme = |x: f64| {
        let m = x.abs();
        !x.is_finite() || (m != 0.0 && m < bounds.lower) || m > bounds.upper
    };
    if v.iter().any(|&x| extreme(x)) {
        return Ok(Verdict::Extreme);
    }
    if previous.iter().any(|p| p.as_slice() == v) {
        return Ok(Verdict::Duplicate);
    }
    if cached == Some(v) {
        return Ok(Verdict::Unchanged);
    }
    Ok(Verdict::Valid)
}

/// Values and error from an individual's last evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedOutput {
    pub values: FeatureVector,
    pub error: f64,
}
