//! Operand binding and block execution.

mod kernel;
mod pack;
mod scalar;

use std::collections::BTreeMap;

pub use kernel::{execute_block, Block};
pub use pack::{pack_panel, PackedPanel, PanelKind};
pub use scalar::execute_scalar_region;

use crate::dag::{ExprDag, LeafRole, NodeKind, OpCode};
use crate::dsl::{Dims, LeafClass, MmltInfo};
use crate::error::{Error, Result};
use crate::matrix::{gen_matrix, seed_for, DataMode, Layout, MatrixBuffer};
use crate::plan::{CompiledTask, KernelShape};
use crate::schedule::Operand;
use crate::tiled::SubtaskBounds;

#[derive(Debug, Clone, PartialEq)]
pub enum OperandValue {
    Matrix(MatrixBuffer),
    Vector(Vec<f64>),
    Scalar(f64),
}

/// Named inputs plus the result matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Operands {
    pub inputs: BTreeMap<String, OperandValue>,
    pub result: MatrixBuffer,
}

/// How to synthesize operands for a task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataSpec {
    pub seed: u64,
    pub mode: DataMode,
    pub layout_a: Layout,
    pub layout_b: Layout,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec { seed: 1, mode: DataMode::Int, layout_a: Layout::RowMajor, layout_b: Layout::RowMajor }
    }
}

impl Operands {
    pub fn new(result: MatrixBuffer) -> Self {
        Operands { inputs: BTreeMap::new(), result }
    }

    pub fn with(mut self, name: impl Into<String>, value: OperandValue) -> Self {
        self.inputs.insert(name.into(), value);
        self
    }

    /// Random inputs sized for `dims` (including range origins) and a zero result.
    pub fn generate(info: &MmltInfo, dims: &Dims, spec: &DataSpec) -> Operands {
        let rows_i = dims.origin_i + dims.m;
        let cols_j = dims.origin_j + dims.n;
        let depth = dims.origin_k + dims.k;
        let gen = |name: &str, r: usize, c: usize, layout: Layout| gen_matrix(seed_for(spec.seed, name), r, c, layout, spec.mode);
        let vector = |name: &str, n: usize| gen(name, 1, n, Layout::RowMajor).data;
        let (ar, ac) = if info.a.transposed { (depth, rows_i) } else { (rows_i, depth) };
        let (br, bc) = if info.b.transposed { (cols_j, depth) } else { (depth, cols_j) };
        let mut ops = Operands::new(MatrixBuffer::zeros(rows_i, cols_j, Layout::RowMajor))
            .with(&info.a.name, OperandValue::Matrix(gen(&info.a.name, ar, ac, spec.layout_a)))
            .with(&info.b.name, OperandValue::Matrix(gen(&info.b.name, br, bc, spec.layout_b)));
        for leaf in &info.aux_leaves {
            let name = leaf.name.as_str();
            let value = match leaf.class {
                LeafClass::Constant => OperandValue::Scalar(vector(name, 1)[0]),
                LeafClass::VecI => OperandValue::Vector(vector(name, rows_i)),
                LeafClass::VecJ => OperandValue::Vector(vector(name, cols_j)),
                LeafClass::MatIJ => OperandValue::Matrix(gen(name, rows_i, cols_j, Layout::RowMajor)),
            };
            ops.inputs.insert(name.to_string(), value);
        }
        ops
    }
}

/// Affine read-only view: element `(x, y)` is `data[off + x*s0 + y*s1]`.
#[derive(Debug, Clone, Copy)]
pub struct MatView<'a> {
    pub data: &'a [f64],
    pub off: usize,
    pub s0: usize,
    pub s1: usize,
}

impl<'a> MatView<'a> {
    #[inline(always)]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[self.off + x * self.s0 + y * self.s1]
    }

    #[inline]
    pub fn shifted(&self, dx: usize, dy: usize) -> MatView<'a> {
        MatView { off: self.off + dx * self.s0 + dy * self.s1, ..*self }
    }

    /// View of a matrix with `(x, y)` mapped to buffer element `(x, y)`, or to
    /// `(y, x)` when `transposed`.
    pub fn of(m: &'a MatrixBuffer, transposed: bool) -> Self {
        let (rs, cs) = m.strides();
        let (s0, s1) = if transposed { (cs, rs) } else { (rs, cs) };
        MatView { data: &m.data, off: 0, s0, s1 }
    }
}

/// Where each DAG leaf gets its value; indexed by node id.
#[derive(Debug, Clone, Copy)]
pub enum LeafSource<'a> {
    A,
    B,
    /// Read at `(i, j)`; vectors use a zero stride on the unused axis.
    Aux(MatView<'a>),
    Value(f64),
    NotALeaf,
}

/// A task bound to concrete operands, in 0-based iteration coordinates.
#[derive(Debug, Clone)]
pub struct BoundTask<'a> {
    pub dims: Dims,
    pub accumulate: bool,
    /// `(i, kk)`.
    pub a: MatView<'a>,
    /// `(kk, j)`.
    pub b: MatView<'a>,
    pub leaves: Vec<LeafSource<'a>>,
    pub packed_a: Option<PackedPanel>,
    pub packed_b: Option<PackedPanel>,
    /// The plan's program is a single `fmadd R R A B`.
    pub plain_fmadd: bool,
}

impl<'a> BoundTask<'a> {
    pub fn bind(ct: &CompiledTask, dims: &Dims, inputs: &'a BTreeMap<String, OperandValue>) -> Result<Self> {
        let (oi, oj, ok) = (dims.origin_i, dims.origin_j, dims.origin_k);
        let (rows_i, cols_j, depth) = (oi + dims.m, oj + dims.n, ok + dims.k);
        let matrix = |name: &str, rows: usize, cols: usize| -> Result<&'a MatrixBuffer> {
            match inputs.get(name) {
                Some(OperandValue::Matrix(m)) if m.rows >= rows && m.cols >= cols => Ok(m),
                Some(OperandValue::Matrix(m)) => Err(Error::operand(
                    name,
                    format!("is {}x{} but the loop ranges need at least {rows}x{cols}", m.rows, m.cols),
                )),
                Some(_) => Err(Error::operand(name, "must be a matrix")),
                None => Err(Error::MissingBinding(name.to_string())),
            }
        };
        let info = &ct.info;
        let a = if info.a.transposed {
            MatView::of(matrix(&info.a.name, depth, rows_i)?, true)
        } else {
            MatView::of(matrix(&info.a.name, rows_i, depth)?, false)
        }
        .shifted(oi, ok);
        let b = if info.b.transposed {
            MatView::of(matrix(&info.b.name, cols_j, depth)?, true)
        } else {
            MatView::of(matrix(&info.b.name, depth, cols_j)?, false)
        }
        .shifted(ok, oj);
        let mut leaves = Vec::with_capacity(ct.dag.nodes.len());
        for node in &ct.dag.nodes {
            let src = match &node.kind {
                NodeKind::Op(_) => LeafSource::NotALeaf,
                NodeKind::Literal(v) => LeafSource::Value(*v),
                NodeKind::Leaf { role: LeafRole::A, .. } => LeafSource::A,
                NodeKind::Leaf { role: LeafRole::B, .. } => LeafSource::B,
                NodeKind::Leaf { name, role: LeafRole::Aux(class), .. } => aux_source(name, *class, inputs, oi, oj, rows_i, cols_j)?,
            };
            leaves.push(src);
        }
        let fmadd = &ct.plan.program.instrs;
        let plain_fmadd = fmadd.len() == 1 && fmadd[0].op == OpCode::Fmadd && {
            let roles: Vec<Option<&LeafSource>> = fmadd[0].srcs[1..]
                .iter()
                .map(|s| match s {
                    Operand::Leaf { node, .. } => Some(&leaves[*node]),
                    _ => None,
                })
                .collect();
            matches!(roles.as_slice(), [Some(LeafSource::A), Some(LeafSource::B)] | [Some(LeafSource::B), Some(LeafSource::A)])
        };
        Ok(BoundTask {
            dims: *dims,
            accumulate: ct.dag.accumulate,
            a,
            b,
            leaves,
            packed_a: None,
            packed_b: None,
            plain_fmadd,
        })
    }

    /// Copy A into `i_h`-row slabs and B into `i_w`-column slabs, each ordered
    /// by kk over the full K range.
    pub fn pack(&mut self, shape: KernelShape) {
        let d = self.dims;
        self.packed_a = Some(PackedPanel::from_view(self.a, PanelKind::A, d.m, d.k, shape.i_h));
        self.packed_b = Some(PackedPanel::from_view(self.b, PanelKind::B, d.n, d.k, shape.i_w));
    }

    /// A at block origin `(i0, k0)`, as `(r, kk)`.
    #[inline]
    pub fn a_block(&self, i0: usize, k0: usize, rows: usize) -> MatView<'_> {
        self.packed_a
            .as_ref()
            .and_then(|p| p.block_view(i0, k0, rows))
            .unwrap_or_else(|| self.a.shifted(i0, k0))
    }

    /// B at block origin `(k0, j0)`, as `(kk, c)`.
    #[inline]
    pub fn b_block(&self, k0: usize, j0: usize, cols: usize) -> MatView<'_> {
        self.packed_b
            .as_ref()
            .and_then(|p| p.block_view(j0, k0, cols))
            .unwrap_or_else(|| self.b.shifted(k0, j0))
    }

    #[inline]
    pub fn leaf_value(&self, node: usize, i: usize, j: usize, k: usize) -> f64 {
        match self.leaves[node] {
            LeafSource::A => self.a.get(i, k),
            LeafSource::B => self.b.get(k, j),
            LeafSource::Aux(v) => v.get(i, j),
            LeafSource::Value(x) => x,
            LeafSource::NotALeaf => f64::NAN,
        }
    }
}

fn aux_source<'a>(
    name: &str,
    class: LeafClass,
    inputs: &'a BTreeMap<String, OperandValue>,
    oi: usize,
    oj: usize,
    rows_i: usize,
    cols_j: usize,
) -> Result<LeafSource<'a>> {
    let value = inputs.get(name).ok_or_else(|| Error::MissingBinding(name.to_string()))?;
    let vector = |len: usize| match value {
        OperandValue::Vector(v) if v.len() >= len => Ok(v.as_slice()),
        OperandValue::Vector(v) => Err(Error::operand(name, format!("has {} elements; {len} needed", v.len()))),
        _ => Err(Error::operand(name, "must be a vector")),
    };
    Ok(match class {
        LeafClass::Constant => match value {
            OperandValue::Scalar(x) => LeafSource::Value(*x),
            _ => return Err(Error::operand(name, "must be a scalar")),
        },
        LeafClass::VecI => LeafSource::Aux(MatView { data: vector(rows_i)?, off: oi, s0: 1, s1: 0 }),
        LeafClass::VecJ => LeafSource::Aux(MatView { data: vector(cols_j)?, off: oj, s0: 0, s1: 1 }),
        LeafClass::MatIJ => match value {
            OperandValue::Matrix(m) if m.rows >= rows_i && m.cols >= cols_j => {
                LeafSource::Aux(MatView::of(m, false).shifted(oi, oj))
            }
            OperandValue::Matrix(m) => {
                return Err(Error::operand(name, format!("is {}x{}; {rows_i}x{cols_j} needed", m.rows, m.cols)))
            }
            _ => return Err(Error::operand(name, "must be a matrix")),
        },
    })
}

/// Destination for result updates, addressed in iteration coordinates.
pub trait ResultSink {
    fn add(&mut self, i: usize, j: usize, v: f64);
    fn store(&mut self, i: usize, j: usize, v: f64);
    /// Called once for each block or scalar region before its updates,
    /// with the iteration points it covers.
    #[inline]
    fn visit(&mut self, _region: &SubtaskBounds) {}
}

pub struct ResultView<'a> {
    data: &'a mut [f64],
    off: usize,
    rs: usize,
    cs: usize,
}

impl<'a> ResultView<'a> {
    pub fn new(m: &'a mut MatrixBuffer, dims: &Dims) -> Self {
        let (rs, cs) = m.strides();
        ResultView { off: dims.origin_i * rs + dims.origin_j * cs, rs, cs, data: &mut m.data }
    }
}

impl ResultSink for ResultView<'_> {
    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[self.off + i * self.rs + j * self.cs] += v;
    }

    #[inline]
    fn store(&mut self, i: usize, j: usize, v: f64) {
        self.data[self.off + i * self.rs + j * self.cs] = v;
    }
}

/// Check that the result matrix covers the iteration space.
pub fn check_result(result: &MatrixBuffer, dims: &Dims, name: &str) -> Result<()> {
    let (r, c) = (dims.origin_i + dims.m, dims.origin_j + dims.n);
    if result.rows < r || result.cols < c {
        return Err(Error::operand(name, format!("is {}x{}; {r}x{c} needed", result.rows, result.cols)));
    }
    Ok(())
}

/// Scalar evaluation helper shared by the fringe path and tests.
#[inline]
pub(crate) fn eval_point(dag: &ExprDag, task: &BoundTask, scratch: &mut Vec<f64>, i: usize, j: usize, k: usize) -> f64 {
    dag.eval_with(scratch, |id, _| task.leaf_value(id, i, j, k))
}
