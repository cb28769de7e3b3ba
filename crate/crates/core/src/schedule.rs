//! Scheduling an expression DAG into a pseudo-instruction program.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::dag::{ExprDag, NodeId, NodeKind, OpCode};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    /// A leaf value assumed to sit in a register already.
    Leaf { node: NodeId, name: String },
    Temp(usize),
    Mask(usize),
    Result,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instr {
    pub op: OpCode,
    pub dst: Operand,
    /// In DAG child order; masked ops are `(x, mask, y)`.
    pub srcs: Vec<Operand>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoProgram {
    pub instrs: Vec<Instr>,
    pub n_extra_vec_regs: usize,
    pub n_mask_regs: usize,
    pub accumulate: bool,
    pub result_name: String,
}

/// Register need per node: 0 for leaves, otherwise the Sethi-Ullman style
/// `max(1, max_t(l_t + t))` over the distinct op children sorted by need.
pub fn labels(dag: &ExprDag) -> Vec<usize> {
    let mut label = vec![0; dag.nodes.len()];
    for (id, node) in dag.nodes.iter().enumerate() {
        if node.op().is_none() {
            continue;
        }
        let mut ls: Vec<usize> = distinct(&node.children).into_iter().map(|c| label[c]).filter(|&l| l > 0).collect();
        ls.sort_unstable_by(|a, b| b.cmp(a));
        label[id] = ls.iter().enumerate().map(|(t, l)| l + t).max().unwrap_or(0).max(1);
    }
    label
}

fn distinct(children: &[NodeId]) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = Vec::with_capacity(children.len());
    for &c in children {
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

/// labelfs: depth-first from the root, visiting the child with the larger
/// label first (left child on ties), computing shared nodes once.
pub fn schedule_labelfs(dag: &ExprDag) -> PseudoProgram {
    let label = labels(dag);
    let mut order = Vec::new();
    let mut done = vec![false; dag.nodes.len()];
    visit(dag, dag.root, &mut done, &mut order, &|kids: &mut Vec<NodeId>| {
        kids.sort_by(|a, b| label[*b].cmp(&label[*a]))
    });
    schedule_in_order(dag, &order)
}

/// Plain left-to-right postorder, the baseline labelfs is measured against.
pub fn schedule_postorder(dag: &ExprDag) -> PseudoProgram {
    let mut order = Vec::new();
    let mut done = vec![false; dag.nodes.len()];
    visit(dag, dag.root, &mut done, &mut order, &|_: &mut Vec<NodeId>| {});
    schedule_in_order(dag, &order)
}

fn visit(dag: &ExprDag, id: NodeId, done: &mut [bool], order: &mut Vec<NodeId>, arrange: &dyn Fn(&mut Vec<NodeId>)) {
    if done[id] || dag.nodes[id].op().is_none() {
        return;
    }
    let mut kids = distinct(&dag.nodes[id].children);
    arrange(&mut kids);
    for k in kids {
        visit(dag, k, done, order, arrange);
    }
    done[id] = true;
    order.push(id);
}

/// Emit one instruction per op node in `order` (a topological order of all
/// op nodes reachable from the root) and assign registers.
pub fn schedule_in_order(dag: &ExprDag, order: &[NodeId]) -> PseudoProgram {
    let operand = |id: NodeId| -> Operand {
        let node = &dag.nodes[id];
        match node.op() {
            Some(op) if op.is_cmp() => Operand::Mask(id),
            Some(_) => Operand::Temp(id),
            None => Operand::Leaf { node: id, name: node.placeholder().unwrap_or_default() },
        }
    };
    let mut instrs: Vec<Instr> = order
        .iter()
        .map(|&id| {
            let node = &dag.nodes[id];
            let dst = if id == dag.root && !dag.accumulate { Operand::Result } else { operand(id) };
            Instr { op: node.op().expect("order holds op nodes"), dst, srcs: node.children.iter().map(|&c| operand(c)).collect() }
        })
        .collect();
    if dag.accumulate {
        instrs.push(Instr { op: OpCode::Add, dst: Operand::Result, srcs: vec![Operand::Result, operand(dag.root)] });
    }
    let result_name = dag.target.name.clone();
    allocate(instrs, dag.accumulate, result_name)
}

/// Rename virtual temps and masks onto physical ids. Sources whose last use
/// is the current instruction are freed before the destination is allocated,
/// and the lowest free id is reused.
fn allocate(mut instrs: Vec<Instr>, accumulate: bool, result_name: String) -> PseudoProgram {
    let mut last_use: HashMap<Operand, usize> = HashMap::new();
    for (pc, ins) in instrs.iter().enumerate() {
        for s in &ins.srcs {
            if matches!(s, Operand::Temp(_) | Operand::Mask(_)) {
                last_use.insert(s.clone(), pc);
            }
        }
    }
    let mut pools = [Pool::default(), Pool::default()];
    let mut map: HashMap<Operand, usize> = HashMap::new();
    for (pc, ins) in instrs.iter_mut().enumerate() {
        let mut dying = Vec::new();
        for s in ins.srcs.iter_mut() {
            let (pool, virt) = match s {
                Operand::Temp(v) => (0, *v),
                Operand::Mask(v) => (1, *v),
                _ => continue,
            };
            let key = s.clone();
            let phys = *map.get(&key).expect("source read before it is written");
            if last_use.get(&key) == Some(&pc) && !dying.contains(&key) {
                dying.push(key);
                pools[pool].free.insert(phys);
            }
            let _ = virt;
            *s = if pool == 0 { Operand::Temp(phys) } else { Operand::Mask(phys) };
        }
        let pool = match ins.dst {
            Operand::Temp(_) => 0,
            Operand::Mask(_) => 1,
            _ => continue,
        };
        let phys = pools[pool].take();
        map.insert(ins.dst.clone(), phys);
        ins.dst = if pool == 0 { Operand::Temp(phys) } else { Operand::Mask(phys) };
    }
    PseudoProgram {
        instrs,
        n_extra_vec_regs: pools[0].high,
        n_mask_regs: pools[1].high,
        accumulate,
        result_name,
    }
}

#[derive(Default)]
struct Pool {
    free: BTreeSet<usize>,
    high: usize,
}

impl Pool {
    fn take(&mut self) -> usize {
        match self.free.pop_first() {
            Some(id) => id,
            None => {
                self.high += 1;
                self.high - 1
            }
        }
    }
}

impl PseudoProgram {
    /// Rewrite a trailing `mul T x y; add R R T` into `fmadd R x y` and
    /// recount temporaries.
    pub fn fuse_accumulate(&self) -> PseudoProgram {
        let n = self.instrs.len();
        if !self.accumulate || n < 2 {
            return self.clone();
        }
        let (mul, add) = (&self.instrs[n - 2], &self.instrs[n - 1]);
        let fusable = mul.op == OpCode::Mul
            && matches!(mul.dst, Operand::Temp(_))
            && add.op == OpCode::Add
            && add.dst == Operand::Result
            && add.srcs == [Operand::Result, mul.dst.clone()]
            && !self.instrs[..n - 2].iter().any(|i| i.srcs.contains(&mul.dst));
        if !fusable {
            return self.clone();
        }
        let mut instrs = self.instrs[..n - 2].to_vec();
        let mut srcs = vec![Operand::Result];
        srcs.extend(mul.srcs.iter().cloned());
        instrs.push(Instr { op: OpCode::Fmadd, dst: Operand::Result, srcs });
        // Physical ids are unique per live range already; rename them apart
        // so the allocator can repack.
        let virt = virtualize(instrs);
        allocate(virt, self.accumulate, self.result_name.clone())
    }

    /// Run the program on scalars; `r` is the current result value and the
    /// return value is the new one.
    pub fn run_scalar(&self, r: f64, mut leaf: impl FnMut(NodeId) -> f64) -> f64 {
        let mut temps = vec![0.0; self.n_extra_vec_regs];
        let mut masks = vec![0.0; self.n_mask_regs];
        let mut result = r;
        for ins in &self.instrs {
            let mut arg = |o: &Operand| match o {
                Operand::Leaf { node, .. } => leaf(*node),
                Operand::Temp(t) => temps[*t],
                Operand::Mask(m) => masks[*m],
                Operand::Result => result,
            };
            let a: Vec<f64> = ins.srcs.iter().map(&mut arg).collect();
            let get = |n: usize| a.get(n).copied().unwrap_or(0.0);
            let v = ins.op.apply(get(0), get(1), get(2));
            match ins.dst {
                Operand::Temp(t) => temps[t] = v,
                Operand::Mask(m) => masks[m] = v,
                Operand::Result => result = v,
                Operand::Leaf { .. } => unreachable!("leaves are never written"),
            }
        }
        result
    }
}

/// Give every definition a fresh virtual id, following reads to the most
/// recent definition of each physical register.
fn virtualize(mut instrs: Vec<Instr>) -> Vec<Instr> {
    let mut current: HashMap<Operand, usize> = HashMap::new();
    let rename = |o: &Operand, v: usize| match o {
        Operand::Temp(_) => Operand::Temp(v),
        Operand::Mask(_) => Operand::Mask(v),
        other => other.clone(),
    };
    for (pc, ins) in instrs.iter_mut().enumerate() {
        for s in ins.srcs.iter_mut() {
            if let Some(&v) = current.get(s) {
                *s = rename(s, v);
            }
        }
        if matches!(ins.dst, Operand::Temp(_) | Operand::Mask(_)) {
            current.insert(ins.dst.clone(), pc);
            ins.dst = rename(&ins.dst, pc);
        }
    }
    instrs
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Leaf { name, .. } => f.write_str(name),
            Operand::Temp(t) => write!(f, "REG{t}"),
            Operand::Mask(m) => write!(f, "MASKREG{m}"),
            Operand::Result => f.write_str("R"),
        }
    }
}

impl PseudoProgram {
    fn write_operand(&self, f: &mut fmt::Formatter<'_>, o: &Operand) -> fmt::Result {
        match o {
            Operand::Result => f.write_str(&self.result_name.to_uppercase()),
            other => write!(f, "{other}"),
        }
    }
}

/// One instruction per line as `opcode dst src...`; masked ops list the mask
/// first, as in `masksub REG0 MASKREG0 REG0 REG1`.
impl fmt::Display for PseudoProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, ins) in self.instrs.iter().enumerate() {
            if n > 0 {
                writeln!(f)?;
            }
            f.write_str(ins.op.mnemonic())?;
            f.write_str(" ")?;
            self.write_operand(f, &ins.dst)?;
            let mut srcs: Vec<&Operand> = ins.srcs.iter().collect();
            if ins.op.is_masked() {
                srcs.swap(0, 1);
            }
            for s in srcs {
                f.write_str(" ")?;
                self.write_operand(f, s)?;
            }
        }
        Ok(())
    }
}

/// Leaf nodes the program reads, in first-use order.
pub fn leaf_operands(program: &PseudoProgram) -> Vec<(NodeId, String)> {
    let mut out: Vec<(NodeId, String)> = Vec::new();
    for ins in &program.instrs {
        for s in &ins.srcs {
            if let Operand::Leaf { node, name } = s {
                if !out.iter().any(|(n, _)| n == node) {
                    out.push((*node, name.clone()));
                }
            }
        }
    }
    out
}

/// Whether a node's value is a literal (used when binding leaf registers).
pub fn literal_value(dag: &ExprDag, node: NodeId) -> Option<f64> {
    match dag.nodes[node].kind {
        NodeKind::Literal(v) => Some(v),
        _ => None,
    }
}
