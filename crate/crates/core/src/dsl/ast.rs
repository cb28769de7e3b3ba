use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Eq => "==",
        }
    }

    /// Binding strength; all levels are left-associative.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Gt | BinOp::Ge | BinOp::Lt | BinOp::Le | BinOp::Eq => 1,
            BinOp::Add | BinOp::Sub => 2,
            BinOp::Mul | BinOp::Div => 3,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 1
    }

    /// Scalar semantics shared by every evaluator; comparisons yield 1.0 or 0.0.
    pub fn apply(self, x: f64, y: f64) -> f64 {
        let truth = |b: bool| if b { 1.0 } else { 0.0 };
        match self {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => x / y,
            BinOp::Gt => truth(x > y),
            BinOp::Ge => truth(x >= y),
            BinOp::Lt => truth(x < y),
            BinOp::Le => truth(x <= y),
            BinOp::Eq => truth(x == y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Index(ArrayRef),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    /// The identifier if this is a bare variable.
    pub fn as_var(&self) -> Option<&str> {
        match self {
            Expr::Var(name) => Some(name),
            _ => None,
        }
    }

    /// Visit every node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Index(r) => r.indices.iter().for_each(|e| e.walk(f)),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            Expr::Num(_) | Expr::Var(_) => {}
        }
    }

    /// Integer evaluation for ranges and subscripts.
    pub fn eval_int(&self, lookup: &dyn Fn(&str) -> Option<i64>) -> Option<i64> {
        match self {
            Expr::Num(v) => (v.fract() == 0.0).then_some(*v as i64),
            Expr::Var(name) => lookup(name),
            Expr::Index(_) => None,
            Expr::Binary { op, lhs, rhs } => {
                let x = lhs.eval_int(lookup)?;
                let y = rhs.eval_int(lookup)?;
                match op {
                    BinOp::Add => x.checked_add(y),
                    BinOp::Sub => x.checked_sub(y),
                    BinOp::Mul => x.checked_mul(y),
                    BinOp::Div => x.checked_div(y),
                    _ => Some(op.apply(x as f64, y as f64) as i64),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayRef {
    pub name: String,
    pub indices: Vec<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignOp {
    Assign,
    AddAssign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub target: ArrayRef,
    pub op: AssignOp,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopVar {
    pub name: String,
    pub start: Expr,
    pub end: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub loop_vars: Vec<LoopVar>,
    pub statement: Stmt,
}

impl TaskSpec {
    pub fn loop_var(&self, name: &str) -> Option<&LoopVar> {
        self.loop_vars.iter().find(|v| v.name == name)
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, parent: u8, right: bool) -> fmt::Result {
    match e {
        Expr::Binary { op, .. } if op.precedence() < parent || (right && op.precedence() == parent) => {
            write!(f, "({e})")
        }
        _ => write!(f, "{e}"),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(name) => f.write_str(name),
            Expr::Index(r) => write!(f, "{r}"),
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                write_operand(f, lhs, p, false)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, rhs, p, true)
            }
        }
    }
}

impl fmt::Display for ArrayRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        for idx in &self.indices {
            write!(f, "[{idx}]")?;
        }
        Ok(())
    }
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            AssignOp::Assign => "=",
            AssignOp::AddAssign => "+=",
        };
        write!(f, "{} {op} {};", self.target, self.value)
    }
}

/// Canonical form; `parse_task(&spec.to_string())` gives back `spec`.
impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("where(")?;
        for (n, v) in self.loop_vars.iter().enumerate() {
            if n > 0 {
                f.write_str(" and ")?;
            }
            write!(f, "{} in [{}..{}]", v.name, v.start, v.end)?;
        }
        writeln!(f, ") {{")?;
        writeln!(f, "    {}", self.statement)?;
        f.write_str("}")
    }
}
