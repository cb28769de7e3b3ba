//! Kernel sizing against a vector-register budget and lowering to a block recipe.

use std::fmt;

use serde::Serialize;

use crate::dag::{build_dag, ExprDag, LeafRole, NodeId, NodeKind};
use crate::dsl::{recognize, LeafClass, MmltInfo, TaskSpec};
use crate::error::{Error, Result};
use crate::schedule::{leaf_operands, schedule_labelfs, PseudoProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MachineModel {
    /// Elements per vector register (S_w).
    pub simd_width: usize,
    /// Vector registers available to the kernel (R).
    pub n_vec_regs: usize,
    pub max_kernel_h: usize,
    pub max_kernel_w: usize,
}

impl Default for MachineModel {
    /// 512-bit vectors of f64 with 32 registers.
    fn default() -> Self {
        MachineModel { simd_width: 8, n_vec_regs: 32, max_kernel_h: 12, max_kernel_w: 16 }
    }
}

impl MachineModel {
    pub fn new(simd_width: usize, n_vec_regs: usize) -> Result<Self> {
        let m = MachineModel { simd_width, n_vec_regs, max_kernel_w: (2 * simd_width).max(16), ..Default::default() };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidMachine(msg));
        if ![2, 4, 8, 16].contains(&self.simd_width) {
            return bad(format!("simd width {} is not one of 2, 4, 8, 16", self.simd_width));
        }
        if self.n_vec_regs < 4 {
            return bad(format!("{} vector registers; at least 4 are required", self.n_vec_regs));
        }
        if !(1..=12).contains(&self.max_kernel_h) {
            return bad(format!("max kernel height {} is outside 1..=12", self.max_kernel_h));
        }
        if self.max_kernel_w < self.simd_width || !self.max_kernel_w.is_multiple_of(self.simd_width) {
            return bad(format!(
                "max kernel width {} must be a positive multiple of the simd width {}",
                self.max_kernel_w, self.simd_width
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KernelShape {
    pub i_h: usize,
    pub i_w: usize,
}

impl fmt::Display for KernelShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.i_h, self.i_w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LoadStrategy {
    /// One element broadcast to all lanes, reloaded per row.
    BroadcastRowElement,
    /// `i_w / S_w` contiguous vectors, loaded once per kk.
    VectorRow,
    /// Broadcast once in the prologue.
    BroadcastConstant,
    /// One vector per subresult position.
    SubresultLoad,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeafLoad {
    pub node: NodeId,
    pub placeholder: String,
    pub strategy: LoadStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerLine {
    pub name: String,
    pub class: LeafClass,
    pub registers: usize,
}

/// Vector-register demand of a kernel shape, item by item.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegisterLedger {
    pub subresults: usize,
    pub a_broadcast: usize,
    pub b_rows: usize,
    pub aux: Vec<LedgerLine>,
    pub extras: usize,
    pub total: usize,
    /// Mask registers live in their own file and are not part of `total`.
    pub masks: usize,
}

pub fn register_ledger(
    program: &PseudoProgram,
    leaves: &[(String, LeafClass)],
    shape: KernelShape,
    simd_width: usize,
) -> RegisterLedger {
    let vecs = shape.i_w.div_ceil(simd_width);
    let aux: Vec<LedgerLine> = leaves
        .iter()
        .map(|(name, class)| LedgerLine {
            name: name.clone(),
            class: *class,
            registers: match class {
                LeafClass::VecJ => vecs,
                LeafClass::Constant | LeafClass::VecI | LeafClass::MatIJ => 1,
            },
        })
        .collect();
    let subresults = shape.i_h * vecs;
    let total = subresults + 1 + vecs + aux.iter().map(|l| l.registers).sum::<usize>() + program.n_extra_vec_regs;
    RegisterLedger {
        subresults,
        a_broadcast: 1,
        b_rows: vecs,
        aux,
        extras: program.n_extra_vec_regs,
        total,
        masks: program.n_mask_regs,
    }
}

/// `i_h * ceil(i_w/S_w)` subresults, one A broadcast, `ceil(i_w/S_w)` B rows,
/// the auxiliary leaves, and the program's extra temporaries.
pub fn count_vec_registers(program: &PseudoProgram, leaves: &[LeafClass], shape: KernelShape, simd_width: usize) -> usize {
    let named: Vec<(String, LeafClass)> = leaves.iter().map(|c| (String::new(), *c)).collect();
    register_ledger(program, &named, shape, simd_width).total
}

/// Largest shape within the budget: start at the maximum, lower `i_h`; when
/// no height fits, halve `i_w` and start over.
pub fn choose_kernel_shape(program: &PseudoProgram, leaves: &[LeafClass], machine: &MachineModel) -> Result<KernelShape> {
    machine.validate()?;
    let sw = machine.simd_width;
    let mut i_w = machine.max_kernel_w;
    loop {
        for i_h in (1..=machine.max_kernel_h).rev() {
            let shape = KernelShape { i_h, i_w };
            if count_vec_registers(program, leaves, shape, sw) <= machine.n_vec_regs {
                return Ok(shape);
            }
        }
        if i_w == sw {
            let needed = count_vec_registers(program, leaves, KernelShape { i_h: 1, i_w: sw }, sw);
            return Err(Error::NoFeasibleKernel { registers: machine.n_vec_regs, needed });
        }
        i_w = (i_w / 2 / sw * sw).max(sw);
    }
}

/// Per-kk work of one block under a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockSchedule {
    pub accumulators: usize,
    pub vector_loads_per_kk: usize,
    pub broadcasts_per_kk: usize,
    pub subresult_loads_per_kk: usize,
    pub prologue_broadcasts: usize,
    pub instrs_per_kk: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelPlan {
    pub shape: KernelShape,
    pub simd_width: usize,
    #[serde(serialize_with = "program_text")]
    pub program: PseudoProgram,
    pub leaf_loads: Vec<LeafLoad>,
    pub total_vec_regs: usize,
    pub ledger: RegisterLedger,
    pub schedule: BlockSchedule,
}

fn program_text<S: serde::Serializer>(p: &PseudoProgram, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(p.to_string().lines())
}

/// Aux leaves read by the program (literals count as constants), in first-use order.
pub fn aux_leaves(dag: &ExprDag, program: &PseudoProgram) -> Vec<(String, LeafClass)> {
    leaf_operands(program)
        .into_iter()
        .filter_map(|(node, name)| match &dag.nodes[node].kind {
            NodeKind::Leaf { role: LeafRole::Aux(class), .. } => Some((name, *class)),
            NodeKind::Literal(_) => Some((name, LeafClass::Constant)),
            _ => None,
        })
        .collect()
}

pub fn lower_kernel(dag: &ExprDag, program: &PseudoProgram, shape: KernelShape, simd_width: usize) -> KernelPlan {
    let leaf_loads: Vec<LeafLoad> = leaf_operands(program)
        .into_iter()
        .map(|(node, placeholder)| {
            let strategy = match &dag.nodes[node].kind {
                NodeKind::Leaf { role: LeafRole::A | LeafRole::Aux(LeafClass::VecI), .. } => LoadStrategy::BroadcastRowElement,
                NodeKind::Leaf { role: LeafRole::B | LeafRole::Aux(LeafClass::VecJ), .. } => LoadStrategy::VectorRow,
                NodeKind::Leaf { role: LeafRole::Aux(LeafClass::MatIJ), .. } => LoadStrategy::SubresultLoad,
                _ => LoadStrategy::BroadcastConstant,
            };
            LeafLoad { node, placeholder, strategy }
        })
        .collect();
    let ledger = register_ledger(program, &aux_leaves(dag, program), shape, simd_width);
    let vecs = shape.i_w.div_ceil(simd_width);
    let count = |s: LoadStrategy| leaf_loads.iter().filter(|l| l.strategy == s).count();
    let schedule = BlockSchedule {
        accumulators: shape.i_h * vecs,
        vector_loads_per_kk: vecs * count(LoadStrategy::VectorRow),
        broadcasts_per_kk: shape.i_h * count(LoadStrategy::BroadcastRowElement),
        subresult_loads_per_kk: shape.i_h * vecs * count(LoadStrategy::SubresultLoad),
        prologue_broadcasts: count(LoadStrategy::BroadcastConstant),
        instrs_per_kk: shape.i_h * vecs * program.instrs.len(),
    };
    KernelPlan {
        shape,
        simd_width,
        program: program.clone(),
        leaf_loads,
        total_vec_regs: ledger.total,
        ledger,
        schedule,
    }
}

/// A recognized task with its DAG, schedule and kernel plan.
#[derive(Debug, Clone)]
pub struct CompiledTask {
    pub task: TaskSpec,
    pub info: MmltInfo,
    pub dag: ExprDag,
    /// The labelfs program before accumulate fusion.
    pub program: PseudoProgram,
    pub plan: KernelPlan,
    pub machine: MachineModel,
}

pub fn compile(task: &TaskSpec, machine: &MachineModel) -> Result<CompiledTask> {
    let recog = recognize(task);
    let info = recog.clone().into_mmlt()?;
    let dag = build_dag(&task.statement, &recog)?;
    let program = schedule_labelfs(&dag);
    let fused = program.fuse_accumulate();
    let classes: Vec<LeafClass> = aux_leaves(&dag, &fused).into_iter().map(|(_, c)| c).collect();
    let shape = choose_kernel_shape(&fused, &classes, machine)?;
    let plan = lower_kernel(&dag, &fused, shape, machine.simd_width);
    Ok(CompiledTask { task: task.clone(), info, dag, program, plan, machine: *machine })
}

impl fmt::Display for RegisterLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "  subresults          {:>3}", self.subresults)?;
        writeln!(f, "  A broadcast         {:>3}", self.a_broadcast)?;
        writeln!(f, "  B rows              {:>3}", self.b_rows)?;
        for l in &self.aux {
            let label = format!("{} ({:?})", l.name, l.class);
            writeln!(f, "  {label:<20}{:>3}", l.registers)?;
        }
        writeln!(f, "  compiler temps      {:>3}", self.extras)?;
        writeln!(f, "  total               {:>3}", self.total)?;
        write!(f, "  mask registers      {:>3} (separate file)", self.masks)
    }
}

impl fmt::Display for KernelPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.schedule;
        let vecs = self.shape.i_w.div_ceil(self.simd_width);
        writeln!(f, "kernel {} (S_w = {}, {} vector registers)", self.shape, self.simd_width, self.total_vec_regs)?;
        writeln!(f, "prologue: zero {} accumulators, broadcast {} constants", s.accumulators, s.prologue_broadcasts)?;
        writeln!(f, "per kk:")?;
        for l in self.leaf_loads.iter().filter(|l| l.strategy == LoadStrategy::VectorRow) {
            writeln!(f, "  load {vecs} vector(s) of {}", l.placeholder)?;
        }
        writeln!(f, "  for each of {} rows:", self.shape.i_h)?;
        for l in &self.leaf_loads {
            match l.strategy {
                LoadStrategy::BroadcastRowElement => writeln!(f, "    broadcast {}", l.placeholder)?,
                LoadStrategy::SubresultLoad => writeln!(f, "    load {vecs} vector(s) of {}", l.placeholder)?,
                _ => {}
            }
        }
        writeln!(f, "    for each of {vecs} vector column(s):")?;
        for line in self.program.to_string().lines() {
            writeln!(f, "      {line}")?;
        }
        write!(
            f,
            "epilogue: {} {} accumulators into {}",
            if self.program.accumulate { "add" } else { "store" },
            s.accumulators,
            self.program.result_name
        )
    }
}
