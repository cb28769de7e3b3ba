//! Reference interpreter: the loop nest exactly as written.
//!
//! Expressions are flattened to postfix tapes over a small value stack, so
//! the interpreter works for any task the parser accepts, not only those in
//! the recognized class.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::dsl::{AssignOp, BinOp, Bindings, Expr, TaskSpec};
use crate::error::{Error, Result};
use crate::exec::OperandValue;
use crate::matrix::{Layout, MatrixBuffer};

/// An array operand seen through its strides. Vectors have one column.
struct Array<'a> {
    name: &'a str,
    data: &'a [f64],
    rank: usize,
    rows: usize,
    cols: usize,
    s0: usize,
    s1: usize,
}

#[derive(Clone, Copy)]
enum Step {
    Const(f64),
    Loop(usize),
    /// Matrix element subscripted by two bare loop variables.
    Direct { arr: usize, r: usize, c: usize },
    /// Element whose subscripts are the top `rank` stack values.
    Index { arr: usize },
    Bin(BinOp),
}

#[derive(Clone, Copy)]
enum Fault {
    Range { arr: usize, r: i64, c: i64 },
    NotInteger(f64),
}

#[derive(Default)]
struct Tape {
    steps: Vec<Step>,
    depth: usize,
}

struct Compiler<'a> {
    loops: Vec<&'a str>,
    bindings: &'a Bindings,
    inputs: &'a BTreeMap<String, OperandValue>,
    arrays: Vec<Array<'a>>,
}

impl<'a> Compiler<'a> {
    fn tape(&mut self, e: &'a Expr) -> Result<Tape> {
        let mut t = Tape::default();
        let mut sp = 0;
        self.emit(e, &mut t, &mut sp)?;
        Ok(t)
    }

    fn push(t: &mut Tape, sp: &mut usize, step: Step, pops: usize) {
        *sp = *sp - pops + 1;
        t.depth = t.depth.max(*sp);
        t.steps.push(step);
    }

    fn emit(&mut self, e: &'a Expr, t: &mut Tape, sp: &mut usize) -> Result<()> {
        match e {
            Expr::Num(v) => Self::push(t, sp, Step::Const(*v), 0),
            Expr::Var(n) => {
                let step = if let Some(slot) = self.loops.iter().position(|l| l == n) {
                    Step::Loop(slot)
                } else if let Some(OperandValue::Scalar(x)) = self.inputs.get(n) {
                    Step::Const(*x)
                } else if let Some(x) = self.bindings.get(n) {
                    Step::Const(*x as f64)
                } else {
                    return Err(Error::MissingBinding(n.clone()));
                };
                Self::push(t, sp, step, 0);
            }
            Expr::Index(r) => {
                let rank = r.indices.len();
                let array = match (self.inputs.get(&r.name), rank) {
                    (Some(OperandValue::Matrix(m)), 2) => {
                        let (s0, s1) = m.strides();
                        Array { name: &r.name, data: &m.data, rank, rows: m.rows, cols: m.cols, s0, s1 }
                    }
                    (Some(OperandValue::Vector(v)), 1) => {
                        Array { name: &r.name, data: v, rank, rows: v.len(), cols: 1, s0: 1, s1: 0 }
                    }
                    (Some(_), n) => return Err(Error::operand(&r.name, format!("cannot be indexed with {n} subscripts"))),
                    (None, _) => return Err(Error::MissingBinding(r.name.clone())),
                };
                let arr = self.arrays.len();
                self.arrays.push(array);
                let slot = |e: &Expr| match e {
                    Expr::Var(n) => self.loops.iter().position(|l| l == n),
                    _ => None,
                };
                if let (2, Some(r), Some(c)) = (rank, slot(&r.indices[0]), r.indices.get(1).and_then(slot)) {
                    Self::push(t, sp, Step::Direct { arr, r, c }, 0);
                } else {
                    for i in &r.indices {
                        self.emit(i, t, sp)?;
                    }
                    Self::push(t, sp, Step::Index { arr }, rank);
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                self.emit(lhs, t, sp)?;
                self.emit(rhs, t, sp)?;
                Self::push(t, sp, Step::Bin(*op), 2);
            }
        }
        Ok(())
    }
}

fn integer(v: f64) -> std::result::Result<i64, Fault> {
    if v.fract() != 0.0 {
        return Err(Fault::NotInteger(v));
    }
    Ok(v as i64)
}

#[inline]
fn element(arrays: &[Array], arr: usize, r: i64, c: i64) -> std::result::Result<f64, Fault> {
    let a = &arrays[arr];
    if r < 0 || c < 0 || r as usize >= a.rows || c as usize >= a.cols {
        return Err(Fault::Range { arr, r, c });
    }
    Ok(a.data[r as usize * a.s0 + c as usize * a.s1])
}

impl Tape {
    #[inline]
    fn run(&self, arrays: &[Array], vars: &[i64], stack: &mut [f64]) -> std::result::Result<f64, Fault> {
        let mut sp = 0;
        for step in &self.steps {
            match *step {
                Step::Const(v) => {
                    stack[sp] = v;
                    sp += 1;
                }
                Step::Loop(s) => {
                    stack[sp] = vars[s] as f64;
                    sp += 1;
                }
                Step::Direct { arr, r, c } => {
                    stack[sp] = element(arrays, arr, vars[r], vars[c])?;
                    sp += 1;
                }
                Step::Index { arr } => {
                    let v = if arrays[arr].rank == 2 {
                        sp -= 2;
                        element(arrays, arr, integer(stack[sp])?, integer(stack[sp + 1])?)?
                    } else {
                        sp -= 1;
                        element(arrays, arr, integer(stack[sp])?, 0)?
                    };
                    stack[sp] = v;
                    sp += 1;
                }
                Step::Bin(op) => {
                    sp -= 1;
                    stack[sp - 1] = op.apply(stack[sp - 1], stack[sp]);
                }
            }
        }
        Ok(stack[0])
    }

    fn int(&self, arrays: &[Array], vars: &[i64], stack: &mut [f64]) -> std::result::Result<i64, Fault> {
        integer(self.run(arrays, vars, stack)?)
    }
}

/// Execute the statement for every point of the loop nest, outermost loop
/// first. A one-subscript target writes column 0 of `result`.
pub fn run_naive(
    task: &TaskSpec,
    bindings: &Bindings,
    inputs: &BTreeMap<String, OperandValue>,
    result: &mut MatrixBuffer,
) -> Result<f64> {
    let stmt = &task.statement;
    if stmt.target.indices.len() > 2 {
        return Err(Error::UnsupportedExpression(format!("target `{}` has more than two subscripts", stmt.target)));
    }
    let mut cc = Compiler { loops: task.loop_vars.iter().map(|v| v.name.as_str()).collect(), bindings, inputs, arrays: vec![] };
    let value = cc.tape(&stmt.value)?;
    let target: Vec<Tape> = stmt.target.indices.iter().map(|i| cc.tape(i)).collect::<Result<_>>()?;
    let ranges: Vec<(Tape, Tape)> =
        task.loop_vars.iter().map(|v| Ok((cc.tape(&v.start)?, cc.tape(&v.end)?))).collect::<Result<_>>()?;
    let arrays = cc.arrays;
    let depth = ranges.iter().flat_map(|(a, b)| [a, b]).chain(&target).chain([&value]).map(|t| t.depth).max().unwrap_or(1);
    let mut stack = vec![0.0; depth.max(1)];

    let accumulate = stmt.op == AssignOp::AddAssign;
    let (rows, cols) = (result.rows, result.cols);
    let (s0, s1) = result.strides();
    let out = &mut result.data;
    let start = Instant::now();
    let mut vars = vec![0i64; ranges.len()];
    let outcome = nest(0, &ranges, &arrays, &mut vars, &mut stack, &mut |vars, stack| {
        let v = value.run(&arrays, vars, stack)?;
        let mut at = [0i64; 2];
        for (slot, t) in at.iter_mut().zip(&target) {
            *slot = t.int(&arrays, vars, stack)?;
        }
        let [r, c] = at;
        if r < 0 || c < 0 || r as usize >= rows || c as usize >= cols {
            return Err(Fault::Range { arr: usize::MAX, r, c });
        }
        let cell = &mut out[r as usize * s0 + c as usize * s1];
        *cell = if accumulate { *cell + v } else { v };
        Ok(())
    });
    let elapsed = start.elapsed().as_secs_f64();
    match outcome {
        Ok(()) => Ok(elapsed),
        Err(Fault::NotInteger(v)) => Err(Error::InvalidArgument(format!("subscript {v} is not an integer"))),
        Err(Fault::Range { arr, r, c }) => {
            let (name, at) = match arrays.get(arr) {
                Some(a) if a.rank == 1 => (a.name, format!("[{r}]")),
                Some(a) => (a.name, format!("[{r}][{c}]")),
                None => (stmt.target.name.as_str(), format!("[{r}][{c}]")),
            };
            Err(Error::operand(name, format!("index {at} is out of range")))
        }
    }
}

fn nest<F>(
    level: usize,
    ranges: &[(Tape, Tape)],
    arrays: &[Array],
    vars: &mut Vec<i64>,
    stack: &mut [f64],
    body: &mut F,
) -> std::result::Result<(), Fault>
where
    F: FnMut(&[i64], &mut [f64]) -> std::result::Result<(), Fault>,
{
    if level == ranges.len() {
        return body(vars, stack);
    }
    let lo = ranges[level].0.int(arrays, vars, stack)?;
    let hi = ranges[level].1.int(arrays, vars, stack)?;
    for x in lo..hi {
        vars[level] = x;
        nest(level + 1, ranges, arrays, vars, stack, body)?;
    }
    Ok(())
}

/// A zero result sized from the loop ranges when the target is subscripted
/// by bare loop variables with constant bounds.
pub fn result_for(task: &TaskSpec, bindings: &Bindings) -> Result<MatrixBuffer> {
    let lookup = |n: &str| bindings.get(n).copied();
    let mut extent = [1usize; 2];
    for (slot, idx) in extent.iter_mut().zip(&task.statement.target.indices) {
        let var = idx
            .as_var()
            .and_then(|v| task.loop_var(v))
            .ok_or_else(|| Error::InvalidArgument(format!("cannot size `{}` from the loop ranges", task.statement.target)))?;
        let end = var.end.eval_int(&lookup).ok_or_else(|| Error::InvalidArgument(format!("range end `{}` is not constant", var.end)))?;
        *slot = usize::try_from(end).map_err(|_| Error::InvalidArgument(format!("negative range end {end}")))?;
    }
    Ok(MatrixBuffer::zeros(extent[0], extent[1], Layout::RowMajor))
}
