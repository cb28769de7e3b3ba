//! Expression DAG with common-subexpression sharing and mask rewriting.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::dsl::{ArrayRef, AssignOp, BinOp, Expr, LeafClass, MmltInfo, Recognition, Stmt};
use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum OpCode {
    Add,
    Sub,
    Mul,
    Div,
    CmpGt,
    CmpGe,
    CmpLt,
    CmpLe,
    CmpEq,
    /// `x - mask * y`, children `(x, mask, y)`.
    MaskSub,
    /// `x + mask * y`, children `(x, mask, y)`.
    MaskAdd,
    /// `x + y * z`; only produced by kernel lowering, never by [`build_dag`].
    Fmadd,
}

impl OpCode {
    pub fn is_cmp(self) -> bool {
        matches!(self, OpCode::CmpGt | OpCode::CmpGe | OpCode::CmpLt | OpCode::CmpLe | OpCode::CmpEq)
    }

    pub fn is_masked(self) -> bool {
        matches!(self, OpCode::MaskSub | OpCode::MaskAdd)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            OpCode::Add => "add",
            OpCode::Sub => "sub",
            OpCode::Mul => "mul",
            OpCode::Div => "div",
            OpCode::CmpGt => "gtcmp",
            OpCode::CmpGe => "gecmp",
            OpCode::CmpLt => "ltcmp",
            OpCode::CmpLe => "lecmp",
            OpCode::CmpEq => "eqcmp",
            OpCode::MaskSub => "masksub",
            OpCode::MaskAdd => "maskadd",
            OpCode::Fmadd => "fmadd",
        }
    }

    fn from_binop(op: BinOp) -> OpCode {
        match op {
            BinOp::Add => OpCode::Add,
            BinOp::Sub => OpCode::Sub,
            BinOp::Mul => OpCode::Mul,
            BinOp::Div => OpCode::Div,
            BinOp::Gt => OpCode::CmpGt,
            BinOp::Ge => OpCode::CmpGe,
            BinOp::Lt => OpCode::CmpLt,
            BinOp::Le => OpCode::CmpLe,
            BinOp::Eq => OpCode::CmpEq,
        }
    }

    fn binop(self) -> Option<BinOp> {
        Some(match self {
            OpCode::Add => BinOp::Add,
            OpCode::Sub => BinOp::Sub,
            OpCode::Mul => BinOp::Mul,
            OpCode::Div => BinOp::Div,
            OpCode::CmpGt => BinOp::Gt,
            OpCode::CmpGe => BinOp::Ge,
            OpCode::CmpLt => BinOp::Lt,
            OpCode::CmpLe => BinOp::Le,
            OpCode::CmpEq => BinOp::Eq,
            OpCode::MaskSub | OpCode::MaskAdd | OpCode::Fmadd => return None,
        })
    }

    /// Scalar semantics; masks are 0.0 or 1.0.
    #[inline]
    pub fn apply(self, x: f64, y: f64, z: f64) -> f64 {
        match self {
            OpCode::MaskSub => x - y * z,
            OpCode::MaskAdd | OpCode::Fmadd => x + y * z,
            op => op.binop().map(|b| b.apply(x, y)).unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum LeafRole {
    A,
    B,
    Aux(LeafClass),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// A value read from an operand; `reference` is the subscripted form as written.
    Leaf { name: String, role: LeafRole, reference: Expr },
    Literal(f64),
    Op(OpCode),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub children: Vec<NodeId>,
}

impl Node {
    pub fn op(&self) -> Option<OpCode> {
        match self.kind {
            NodeKind::Op(op) => Some(op),
            _ => None,
        }
    }

    pub fn is_mask(&self) -> bool {
        self.op().is_some_and(OpCode::is_cmp)
    }

    /// Name used for this leaf in pseudo instructions (`A`, `THRES`, `100`).
    pub fn placeholder(&self) -> Option<String> {
        match &self.kind {
            NodeKind::Leaf { name, .. } => Some(name.to_uppercase()),
            NodeKind::Literal(v) => Some(v.to_string()),
            NodeKind::Op(_) => None,
        }
    }
}

/// Nodes are stored children-first, so index order is a topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprDag {
    pub nodes: Vec<Node>,
    pub root: NodeId,
    pub accumulate: bool,
    pub target: ArrayRef,
}

#[derive(Hash, PartialEq, Eq)]
enum Key {
    Leaf(String),
    Literal(u64),
    Op(OpCode, Vec<NodeId>),
}

struct Builder<'a> {
    info: &'a MmltInfo,
    nodes: Vec<Node>,
    index: HashMap<Key, NodeId>,
}

impl Builder<'_> {
    fn intern(&mut self, key: Key, node: Node) -> NodeId {
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(node);
        self.index.insert(key, id);
        id
    }

    fn literal(&mut self, v: f64) -> NodeId {
        // +0.0 and -0.0 must stay distinct: x - 0.0 and x - -0.0 differ for x = -0.0.
        self.intern(Key::Literal(v.to_bits()), Node { kind: NodeKind::Literal(v), children: vec![] })
    }

    fn op(&mut self, op: OpCode, children: Vec<NodeId>) -> NodeId {
        self.intern(Key::Op(op, children.clone()), Node { kind: NodeKind::Op(op), children })
    }

    fn leaf(&mut self, name: &str, reference: &Expr) -> Result<NodeId> {
        let info = self.info;
        let role = if name == info.a.name {
            LeafRole::A
        } else if name == info.b.name {
            LeafRole::B
        } else if let Some(class) = info.aux_class(name) {
            LeafRole::Aux(class)
        } else {
            return Err(Error::UnsupportedExpression(format!("`{reference}` is not an operand of the recognized task")));
        };
        let node = Node {
            kind: NodeKind::Leaf { name: name.to_string(), role, reference: reference.clone() },
            children: vec![],
        };
        Ok(self.intern(Key::Leaf(name.to_string()), node))
    }

    /// Lower an expression; the flag is true for mask-valued results.
    fn lower(&mut self, e: &Expr) -> Result<(NodeId, bool)> {
        match e {
            Expr::Num(v) => Ok((self.literal(*v), false)),
            Expr::Var(name) => Ok((self.leaf(name, e)?, false)),
            Expr::Index(r) => Ok((self.leaf(&r.name, e)?, false)),
            Expr::Binary { op, lhs, rhs } if op.is_comparison() => {
                let x = self.numeric(lhs)?;
                let y = self.numeric(rhs)?;
                Ok((self.op(OpCode::from_binop(*op), vec![x, y]), true))
            }
            Expr::Binary { op: BinOp::Sub, lhs, rhs } if has_masked_factor(rhs) => {
                let x = self.numeric(lhs)?;
                let (mask, y) = self.split_masked(rhs)?;
                Ok((self.op(OpCode::MaskSub, vec![x, mask, y]), false))
            }
            Expr::Binary { op: BinOp::Add, lhs, rhs } if has_masked_factor(rhs) => {
                let x = self.numeric(lhs)?;
                let (mask, y) = self.split_masked(rhs)?;
                Ok((self.op(OpCode::MaskAdd, vec![x, mask, y]), false))
            }
            Expr::Binary { op: BinOp::Add, lhs, rhs } if has_masked_factor(lhs) => {
                let x = self.numeric(rhs)?;
                let (mask, y) = self.split_masked(lhs)?;
                Ok((self.op(OpCode::MaskAdd, vec![x, mask, y]), false))
            }
            Expr::Binary { op, lhs, rhs } => {
                let x = self.numeric(lhs)?;
                let y = self.numeric(rhs)?;
                Ok((self.op(OpCode::from_binop(*op), vec![x, y]), false))
            }
        }
    }

    /// Lower to a numeric value; a bare comparison becomes `MaskAdd(0, cond, 1)`.
    fn numeric(&mut self, e: &Expr) -> Result<NodeId> {
        let (id, is_mask) = self.lower(e)?;
        if !is_mask {
            return Ok(id);
        }
        let zero = self.literal(0.0);
        let one = self.literal(1.0);
        Ok(self.op(OpCode::MaskAdd, vec![zero, id, one]))
    }

    /// Pull the first comparison out of a left-associated product, returning
    /// `(mask, product of the remaining factors)`.
    fn split_masked(&mut self, e: &Expr) -> Result<(NodeId, NodeId)> {
        let mut factors = spine(e);
        let at = factors.iter().position(|f| is_comparison(f)).expect("caller checked for a comparison factor");
        let cond = factors.remove(at);
        let (mask, _) = self.lower(cond)?;
        let mut rest = factors.into_iter();
        let mut acc = match rest.next() {
            Some(f) => self.numeric(f)?,
            None => self.literal(1.0),
        };
        for f in rest {
            let y = self.numeric(f)?;
            acc = self.op(OpCode::Mul, vec![acc, y]);
        }
        Ok((mask, acc))
    }
}

fn is_comparison(e: &Expr) -> bool {
    matches!(e, Expr::Binary { op, .. } if op.is_comparison())
}

/// Factors of a left-associated product `((f0 * f1) * f2) ...`.
fn spine(e: &Expr) -> Vec<&Expr> {
    match e {
        Expr::Binary { op: BinOp::Mul, lhs, rhs } => {
            let mut v = spine(lhs);
            v.push(rhs);
            v
        }
        other => vec![other],
    }
}

fn has_masked_factor(e: &Expr) -> bool {
    spine(e).into_iter().any(is_comparison)
}

/// Build the shared DAG for a recognized task's statement.
///
/// `X - (cond)*Y` becomes `MaskSub(X, cond, Y)` and `X + (cond)*Y` becomes
/// `MaskAdd(X, cond, Y)`. A comparison used anywhere else as a number is
/// materialized as `MaskAdd(0, cond, 1)`.
pub fn build_dag(stmt: &Stmt, recog: &Recognition) -> Result<ExprDag> {
    let info = recog
        .mmlt()
        .ok_or_else(|| Error::UnsupportedExpression("the task is not matrix-multiplication-like".into()))?;
    let mut b = Builder { info, nodes: Vec::new(), index: HashMap::new() };
    let root = b.numeric(&stmt.value)?;
    Ok(ExprDag {
        nodes: b.nodes,
        root,
        accumulate: stmt.op == AssignOp::AddAssign,
        target: stmt.target.clone(),
    })
}

impl ExprDag {
    pub fn op_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.op().is_some()).count()
    }

    /// Evaluate with caller-supplied leaf values. `values` is scratch space.
    #[inline]
    pub fn eval_with(&self, values: &mut Vec<f64>, mut leaf: impl FnMut(NodeId, &Node) -> f64) -> f64 {
        values.clear();
        for (id, node) in self.nodes.iter().enumerate() {
            let v = match &node.kind {
                NodeKind::Literal(v) => *v,
                NodeKind::Leaf { .. } => leaf(id, node),
                NodeKind::Op(op) => {
                    let c = &node.children;
                    let arg = |n: usize| c.get(n).map(|&x| values[x]).unwrap_or(0.0);
                    op.apply(arg(0), arg(1), arg(2))
                }
            };
            values.push(v);
        }
        values[self.root]
    }

    /// Rebuild an equivalent statement; building its DAG again gives an
    /// isomorphic graph.
    pub fn to_statement(&self) -> Stmt {
        Stmt {
            target: self.target.clone(),
            op: if self.accumulate { AssignOp::AddAssign } else { AssignOp::Assign },
            value: self.expr_of(self.root),
        }
    }

    fn expr_of(&self, id: NodeId) -> Expr {
        let node = &self.nodes[id];
        match &node.kind {
            NodeKind::Literal(v) => Expr::Num(*v),
            NodeKind::Leaf { reference, .. } => reference.clone(),
            NodeKind::Op(op) => {
                let c = &node.children;
                match op.binop() {
                    Some(b) => Expr::binary(b, self.expr_of(c[0]), self.expr_of(c[1])),
                    None => {
                        let outer = if *op == OpCode::MaskSub { BinOp::Sub } else { BinOp::Add };
                        let product = Expr::binary(BinOp::Mul, self.expr_of(c[1]), self.expr_of(c[2]));
                        Expr::binary(outer, self.expr_of(c[0]), product)
                    }
                }
            }
        }
    }

    /// Structural fingerprint: equal for isomorphic DAGs.
    pub fn canonical(&self) -> String {
        fn go(d: &ExprDag, id: NodeId, out: &mut String) {
            let n = &d.nodes[id];
            match &n.kind {
                NodeKind::Literal(v) => out.push_str(&format!("#{:x}", v.to_bits())),
                NodeKind::Leaf { name, .. } => out.push_str(name),
                NodeKind::Op(op) => {
                    out.push('(');
                    out.push_str(op.mnemonic());
                    for &c in &n.children {
                        out.push(' ');
                        go(d, c, out);
                    }
                    out.push(')');
                }
            }
        }
        let mut s = format!("{}:{}:", self.nodes.len(), self.accumulate);
        go(self, self.root, &mut s);
        s
    }
}

/// Scalar evaluation of the right-hand side with named leaf values.
pub fn eval_scalar(dag: &ExprDag, bindings: &HashMap<String, f64>) -> Result<f64> {
    for node in &dag.nodes {
        if let NodeKind::Leaf { name, .. } = &node.kind {
            if !bindings.contains_key(name) {
                return Err(Error::MissingBinding(name.clone()));
            }
        }
    }
    let mut scratch = Vec::with_capacity(dag.nodes.len());
    Ok(dag.eval_with(&mut scratch, |_, node| match &node.kind {
        NodeKind::Leaf { name, .. } => bindings[name],
        _ => unreachable!(),
    }))
}

impl fmt::Display for ExprDag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (id, node) in self.nodes.iter().enumerate() {
            match &node.kind {
                NodeKind::Leaf { reference, role, .. } => {
                    let role = match role {
                        LeafRole::A => "a-like".to_string(),
                        LeafRole::B => "b-like".to_string(),
                        LeafRole::Aux(c) => format!("{c:?}"),
                    };
                    writeln!(f, "n{id} = leaf {reference} ({role})")?
                }
                NodeKind::Literal(v) => writeln!(f, "n{id} = const {v}")?,
                NodeKind::Op(op) => {
                    write!(f, "n{id} = {}", op.mnemonic())?;
                    for c in &node.children {
                        write!(f, " n{c}")?;
                    }
                    writeln!(f)?;
                }
            }
        }
        let how = if self.accumulate { "+=" } else { "=" };
        write!(f, "{} {how} n{}", self.target, self.root)
    }
}
