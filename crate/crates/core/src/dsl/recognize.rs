use std::collections::BTreeMap;

use serde::Serialize;

use super::ast::{AssignOp, Expr, LoopVar, TaskSpec};
use super::Bindings;
use crate::error::{Error, Result};

/// How an auxiliary leaf varies over the (i, j) output tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum LeafClass {
    Constant,
    VecI,
    VecJ,
    MatIJ,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuxLeaf {
    pub name: String,
    pub class: LeafClass,
}

/// One of the two multiplied operands. `transposed` means it is subscripted
/// `[k][i]` (for A) or `[j][k]` (for B) instead of `[i][k]` / `[k][j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OperandPattern {
    pub name: String,
    pub transposed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmltInfo {
    pub result: String,
    pub a: OperandPattern,
    pub b: OperandPattern,
    /// In order of first appearance in the statement.
    pub aux_leaves: Vec<AuxLeaf>,
    #[serde(skip)]
    pub i: LoopVar,
    #[serde(skip)]
    pub j: LoopVar,
    #[serde(skip)]
    pub k: LoopVar,
    pub accumulate: bool,
}

/// Iteration-space extents plus the start of each range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dims {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub origin_i: usize,
    pub origin_j: usize,
    pub origin_k: usize,
}

impl Dims {
    pub fn new(m: usize, k: usize, n: usize) -> Self {
        Dims { m, k, n, origin_i: 0, origin_j: 0, origin_k: 0 }
    }
}

impl MmltInfo {
    pub fn vars(&self) -> [&str; 3] {
        [&self.i.name, &self.j.name, &self.k.name]
    }

    pub fn aux_class(&self, name: &str) -> Option<LeafClass> {
        self.aux_leaves.iter().find(|l| l.name == name).map(|l| l.class)
    }

    /// Evaluate the loop ranges under `bindings`.
    pub fn dims(&self, bindings: &Bindings) -> Result<Dims> {
        let range = |v: &LoopVar| -> Result<(usize, usize)> {
            let lookup = |n: &str| bindings.get(n).copied();
            let eval = |e: &Expr| {
                e.eval_int(&lookup).ok_or_else(|| {
                    let mut missing = None;
                    e.walk(&mut |x| {
                        if let Expr::Var(n) = x {
                            if !bindings.contains_key(n) && missing.is_none() {
                                missing = Some(n.clone());
                            }
                        }
                    });
                    match missing {
                        Some(n) => Error::MissingBinding(n),
                        None => Error::InvalidArgument(format!("range bound `{e}` is not an integer")),
                    }
                })
            };
            let (s, e) = (eval(&v.start)?, eval(&v.end)?);
            if s < 0 || e < s {
                return Err(Error::InvalidArgument(format!(
                    "range of `{}` is [{s}, {e}); it must satisfy 0 <= start <= end",
                    v.name
                )));
            }
            Ok((s as usize, (e - s) as usize))
        };
        let (oi, m) = range(&self.i)?;
        let (oj, n) = range(&self.j)?;
        let (ok, k) = range(&self.k)?;
        Ok(Dims { m, k, n, origin_i: oi, origin_j: oj, origin_k: ok })
    }
}

// Built once per compile; boxing the info would only add indirection.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Recognition {
    Mmlt(MmltInfo),
    NotMmlt { failed_condition: u8 },
}

impl Recognition {
    pub fn mmlt(&self) -> Option<&MmltInfo> {
        match self {
            Recognition::Mmlt(info) => Some(info),
            Recognition::NotMmlt { .. } => None,
        }
    }

    pub fn into_mmlt(self) -> Result<MmltInfo> {
        match self {
            Recognition::Mmlt(info) => Ok(info),
            Recognition::NotMmlt { failed_condition } => Err(Error::NotMmlt { condition: failed_condition }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    A(bool),
    B(bool),
    Aux(LeafClass),
}

/// Decide whether `task` is a matrix-multiplication-like task.
///
/// Conditions, checked in order:
/// 1. a single statement (guaranteed by the grammar);
/// 2. exactly three loop variables;
/// 3. the target is a 2-D array subscripted by two distinct loop variables,
///    which become `i` and `j`; the third variable is `k`;
/// 4. the right-hand side reads exactly two distinct 2-D arrays, one as
///    `[i][k]` or `[k][i]` and one as `[k][j]` or `[j][k]`. Every other array
///    must be an auxiliary leaf indexed by `i`, `j`, `[i][j]`, or nothing.
pub fn recognize(task: &TaskSpec) -> Recognition {
    classify(task).unwrap_or_else(|c| Recognition::NotMmlt { failed_condition: c })
}

/// Variables and array references in evaluation order, without descending
/// into subscripts.
fn operand_refs<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
    match e {
        Expr::Binary { lhs, rhs, .. } => {
            operand_refs(lhs, out);
            operand_refs(rhs, out);
        }
        Expr::Num(_) => {}
        other => out.push(other),
    }
}

fn classify(task: &TaskSpec) -> std::result::Result<Recognition, u8> {
    if task.loop_vars.len() != 3 {
        return Err(2);
    }
    let stmt = &task.statement;
    let target_vars: Vec<&str> = stmt.target.indices.iter().filter_map(Expr::as_var).collect();
    if stmt.target.indices.len() != 2 || target_vars.len() != 2 || target_vars[0] == target_vars[1] {
        return Err(3);
    }
    let find = |n: &str| task.loop_vars.iter().find(|v| v.name == n).cloned();
    let (Some(i), Some(j)) = (find(target_vars[0]), find(target_vars[1])) else {
        return Err(3);
    };
    let k = task
        .loop_vars
        .iter()
        .find(|v| v.name != i.name && v.name != j.name)
        .cloned()
        .ok_or(3u8)?;

    let mut roles: BTreeMap<String, Role> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut bad = false;
    let mut leaves = Vec::new();
    operand_refs(&stmt.value, &mut leaves);
    for e in leaves {
        let (name, role) = match e {
            Expr::Index(r) => {
                let vars: Option<Vec<&str>> = r.indices.iter().map(Expr::as_var).collect();
                let role = match vars.as_deref() {
                    Some([x]) if *x == i.name => Some(Role::Aux(LeafClass::VecI)),
                    Some([x]) if *x == j.name => Some(Role::Aux(LeafClass::VecJ)),
                    Some([x, y]) if *x == i.name && *y == k.name => Some(Role::A(false)),
                    Some([x, y]) if *x == k.name && *y == i.name => Some(Role::A(true)),
                    Some([x, y]) if *x == k.name && *y == j.name => Some(Role::B(false)),
                    Some([x, y]) if *x == j.name && *y == k.name => Some(Role::B(true)),
                    Some([x, y]) if *x == i.name && *y == j.name => Some(Role::Aux(LeafClass::MatIJ)),
                    _ => None,
                };
                (r.name.as_str(), role)
            }
            Expr::Var(n) if n == &i.name || n == &j.name || n == &k.name => (n.as_str(), None),
            Expr::Var(n) => (n.as_str(), Some(Role::Aux(LeafClass::Constant))),
            _ => continue,
        };
        let Some(role) = role else {
            bad = true;
            continue;
        };
        if name == stmt.target.name {
            bad = true;
            continue;
        }
        match roles.get(name) {
            Some(prev) if *prev != role => bad = true,
            Some(_) => {}
            None => {
                roles.insert(name.to_string(), role);
                order.push(name.to_string());
            }
        }
    }
    if bad {
        return Err(4);
    }

    let mut a = None;
    let mut b = None;
    let mut aux_leaves = Vec::new();
    for name in &order {
        match roles[name] {
            Role::A(t) if a.is_none() => a = Some(OperandPattern { name: name.clone(), transposed: t }),
            Role::B(t) if b.is_none() => b = Some(OperandPattern { name: name.clone(), transposed: t }),
            Role::A(_) | Role::B(_) => return Err(4),
            Role::Aux(class) => aux_leaves.push(AuxLeaf { name: name.clone(), class }),
        }
    }
    let (Some(a), Some(b)) = (a, b) else {
        return Err(4);
    };
    Ok(Recognition::Mmlt(MmltInfo {
        result: stmt.target.name.clone(),
        a,
        b,
        aux_leaves,
        i,
        j,
        k,
        accumulate: stmt.op == AssignOp::AddAssign,
    }))
}
