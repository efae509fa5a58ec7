//! Instruction-stream generators and reference oracles for the matrix
//! multiplication, DAXPY and the convolution.
//!
//! Streams are unrolled traces: loop control is resolved at generation time
//! and only the branch issue slots remain. Every oracle accumulates in the
//! same order as its stream, so simulated results match exactly.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::MachineConfig;
use crate::isa::{
    AccessMode, ArithOp, ElemType, MemRef, Program, ScalarInstr, ScalarOperand, Sew, VReg,
    VectorInstr, XReg,
};
use crate::memory::Memory;
use crate::perf::{gap_stats, loss_pct, BoundKind, RooflineModel, SimReport};
use crate::scalar::fma_loop_period;
use crate::sim::{SimError, SimOptions, Simulator, Trace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("invalid kernel shape: {0}")]
    Shape(String),
    #[error("kernels run on 64-bit elements, not {0}")]
    Sew(Sew),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelKind {
    /// `C <- A B + C` on `n x n` matrices in blocks of `tile` rows.
    Matmul { n: usize, tile: usize },
    /// `Y <- alpha X + Y`.
    Daxpy { n: usize, alpha: f64 },
    /// Direct convolution of a padded `c_in x (h+k-1) x (w+k-1)` input with
    /// `c_out x c_in x k x k` weights, `tile_co` output channels at a time.
    Dconv {
        c_out: usize,
        c_in: usize,
        k: usize,
        h: usize,
        w: usize,
        tile_co: usize,
    },
}

impl KernelKind {
    pub fn matmul(n: usize) -> Self {
        KernelKind::Matmul { n, tile: 4 }
    }

    pub fn daxpy(n: usize) -> Self {
        KernelKind::Daxpy { n, alpha: 1.5 }
    }

    /// The default layer: 64 x 3 x 7 x 7 weights over 3 x 112 x 112 images.
    pub fn dconv() -> Self {
        KernelKind::Dconv {
            c_out: 64,
            c_in: 3,
            k: 7,
            h: 112,
            w: 112,
            tile_co: 8,
        }
    }

    /// Double-precision flops the kernel performs.
    pub fn flops(&self) -> u64 {
        match *self {
            KernelKind::Matmul { n, .. } => 2 * (n as u64).pow(3),
            KernelKind::Daxpy { n, .. } => 2 * n as u64,
            KernelKind::Dconv {
                c_out,
                c_in,
                k,
                h,
                w,
                ..
            } => 2 * (c_out * c_in * k * k * h * w) as u64,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Matmul { .. } => "matmul",
            KernelKind::Daxpy { .. } => "daxpy",
            KernelKind::Dconv { .. } => "dconv",
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let bad = |m: &str| Err(KernelError::Shape(m.to_string()));
        match *self {
            KernelKind::Matmul { n, tile } => {
                if n == 0 {
                    return bad("matmul needs n >= 1");
                }
                if tile == 0 || tile > MAX_TILE {
                    return bad("matmul tile must be in 1..=16");
                }
            }
            KernelKind::Daxpy { alpha, .. } => {
                if !alpha.is_finite() {
                    return bad("alpha must be finite");
                }
            }
            KernelKind::Dconv {
                c_out,
                c_in,
                k,
                h,
                w,
                tile_co,
            } => {
                if [c_out, c_in, k, h, w].contains(&0) {
                    return bad("convolution sizes must be >= 1");
                }
                if tile_co == 0 || tile_co > MAX_TILE {
                    return bad("convolution tile must be in 1..=16");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub seed: u64,
    pub sew: Sew,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, seed: u64) -> Self {
        KernelSpec {
            kind,
            seed,
            sew: Sew::E64,
        }
    }
}

/// Program section of a matrix-multiplication block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseKind {
    LoadC,
    Compute,
    StoreC,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub kind: PhaseKind,
    /// Program positions.
    pub range: Range<usize>,
}

/// A generated stream plus the memory it runs on and the expected output.
#[derive(Debug, Clone)]
pub struct KernelInstance {
    pub spec: KernelSpec,
    pub program: Program,
    pub memory: Memory,
    pub output_addr: u64,
    pub expected: Vec<f64>,
    pub phases: Vec<Phase>,
}

impl KernelInstance {
    /// Largest relative error of the output region of `mem`.
    pub fn max_rel_error(&self, mem: &Memory) -> f64 {
        let got = mem.read_f64s(self.output_addr, self.expected.len());
        max_rel_error(&got, &self.expected)
    }

    /// Program positions of the compute phases.
    pub fn compute_ranges(&self) -> Vec<Range<usize>> {
        self.phases
            .iter()
            .filter(|p| p.kind == PhaseKind::Compute)
            .map(|p| p.range.clone())
            .collect()
    }
}

/// `max |got - want| / max(|want|, tiny)`; infinite on length mismatch.
pub fn max_rel_error(got: &[f64], want: &[f64]) -> f64 {
    if got.len() != want.len() {
        return f64::INFINITY;
    }
    got.iter()
        .zip(want)
        .map(|(g, w)| {
            if g.to_bits() == w.to_bits() {
                0.0
            } else {
                (g - w).abs() / w.abs().max(f64::MIN_POSITIVE)
            }
        })
        .fold(0.0, f64::max)
}

const MAX_TILE: usize = 16;
const BASE_ADDR: u64 = 0x10_0000;
const REGION_ALIGN: u64 = 4096;

fn x(id: u32) -> XReg {
    XReg::new(id).unwrap_or(XReg::ZERO)
}

fn v(id: u32) -> VReg {
    VReg::new(id).unwrap_or_else(|_| unreachable!())
}

const T0: u32 = 5;
const T1: u32 = 6;
const A0: u32 = 10;
const A1: u32 = 11;
const A2: u32 = 12;
const A3: u32 = 13;
const A4: u32 = 14;
const A5: u32 = 15;
const A6: u32 = 16;
const A7: u32 = 17;

const V_A: u32 = 0;
const V_B: [u32; 2] = [1, 2];
const V_C: u32 = 8;

fn mem(base: u32, offset: i64) -> MemRef {
    MemRef {
        base: x(base),
        offset,
    }
}

/// Small helper to emit stream text-free.
struct Emit {
    p: Program,
}

impl Emit {
    fn new() -> Self {
        Emit { p: Program::new() }
    }

    fn pos(&self) -> usize {
        self.p.len()
    }

    fn li(&mut self, rd: u32, imm: i64) {
        self.addi(rd, 0, imm);
    }

    fn addi(&mut self, rd: u32, rs1: u32, imm: i64) {
        self.p.push(ScalarInstr::Add {
            rd: x(rd),
            rs1: x(rs1),
            rs2: ScalarOperand::Imm(imm),
        });
    }

    fn add(&mut self, rd: u32, rs1: u32, rs2: u32) {
        self.p.push(ScalarInstr::Add {
            rd: x(rd),
            rs1: x(rs1),
            rs2: ScalarOperand::Reg(x(rs2)),
        });
    }

    fn ld(&mut self, rd: u32, base: u32) {
        self.p.push(ScalarInstr::Ld {
            rd: x(rd),
            mem: mem(base, 0),
        });
    }

    fn bne(&mut self, rs1: u32, rs2: u32) {
        self.p.push(ScalarInstr::Branch {
            rs1: x(rs1),
            rs2: x(rs2),
        });
    }

    fn setvl(&mut self, rd: u32, rs: u32) {
        self.p.push(VectorInstr::SetVl {
            rd: x(rd),
            rs: x(rs),
            sew: Sew::E64,
        });
    }

    fn vld(&mut self, vd: u32, base: u32) {
        self.p.push(VectorInstr::Load {
            vd: v(vd),
            mem: mem(base, 0),
            mode: AccessMode::Unit,
        });
    }

    fn vst(&mut self, vs: u32, base: u32) {
        self.p.push(VectorInstr::Store {
            vs: v(vs),
            mem: mem(base, 0),
            mode: AccessMode::Unit,
        });
    }

    fn vins(&mut self, vd: u32, rs: u32) {
        self.p.push(VectorInstr::Insert {
            vd: v(vd),
            rs: x(rs),
            idx: XReg::ZERO,
        });
    }

    fn vmadd(&mut self, vd: u32, a: u32, b: u32) {
        self.p.push(VectorInstr::arith(
            ArithOp::Madd,
            ElemType::Float,
            v(vd),
            &[v(a), v(b), v(vd)],
        ));
    }

    fn vmul(&mut self, vd: u32, a: u32, b: u32) {
        self.p.push(VectorInstr::arith(
            ArithOp::Mul,
            ElemType::Float,
            v(vd),
            &[v(a), v(b)],
        ));
    }
}

/// Addresses of the three matrices of a multiplication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatmulLayout {
    pub a: u64,
    pub b: u64,
    pub c: u64,
}

fn align(x: u64) -> u64 {
    x.div_ceil(REGION_ALIGN) * REGION_ALIGN
}

impl MatmulLayout {
    pub fn packed(n: usize) -> Self {
        let bytes = (n * n * 8) as u64;
        let a = BASE_ADDR;
        let b = align(a + bytes);
        let c = align(b + bytes);
        MatmulLayout { a, b, c }
    }
}

/// Strip-mined, blocked matrix multiplication `C <- A B + C` with
/// double-buffered rows of `B`, returning the stream and its phases.
pub fn gen_matmul(
    n: usize,
    tile: usize,
    vlmax: usize,
    layout: MatmulLayout,
) -> (Program, Vec<Phase>) {
    let mut e = Emit::new();
    let mut phases = Vec::new();
    let row = (n * 8) as i64;
    e.li(A2, row);
    e.li(A3, row);
    e.li(A7, (layout.b + (n as u64) * row as u64) as i64);
    let mut c = 0;
    while c < n {
        let vl = (n - c).min(vlmax);
        e.li(A6, (n - c) as i64);
        e.setvl(T1, A6);
        let mut r = 0;
        while r < n {
            let tt = tile.min(n - r);
            let c_block = layout.c + ((r * n + c) * 8) as u64;

            let start = e.pos();
            e.li(A5, c_block as i64);
            for j in 0..tt {
                e.vld(V_C + j as u32, A5);
                e.add(A5, A5, A2);
            }
            phases.push(Phase {
                kind: PhaseKind::LoadC,
                range: start..e.pos(),
            });

            let start = e.pos();
            e.li(A0, (layout.a + (r * n * 8) as u64) as i64);
            e.li(A1, (layout.b + (c * 8) as u64) as i64);
            e.li(A4, 8 - tt as i64 * row);
            e.vld(V_B[0], A1);
            e.add(A1, A1, A3);
            for i in 0..n {
                if i + 1 < n {
                    e.vld(V_B[(i + 1) % 2], A1);
                    e.add(A1, A1, A3);
                }
                for j in 0..tt {
                    e.ld(T0, A0);
                    e.add(A0, A0, A2);
                    e.vins(V_A, T0);
                    e.vmadd(V_C + j as u32, V_A, V_B[i % 2]);
                }
                e.add(A0, A0, A4);
                if i % 2 == 1 || i + 1 == n {
                    e.bne(A1, A7);
                }
            }
            phases.push(Phase {
                kind: PhaseKind::Compute,
                range: start..e.pos(),
            });

            let start = e.pos();
            e.li(A5, c_block as i64);
            for j in 0..tt {
                e.vst(V_C + j as u32, A5);
                e.add(A5, A5, A2);
            }
            phases.push(Phase {
                kind: PhaseKind::StoreC,
                range: start..e.pos(),
            });
            r += tt;
        }
        c += vl;
    }
    (e.p, phases)
}

/// Strip-mined `Y <- alpha X + Y`, broadcasting `alpha` once per strip.
pub fn gen_daxpy(n: usize, vlmax: usize, alpha: f64, x_addr: u64, y_addr: u64) -> Program {
    let mut e = Emit::new();
    e.p.set_reg(x(A4), alpha.to_bits());
    e.p.set_reg(x(A0), x_addr);
    e.p.set_reg(x(A1), y_addr);
    e.p.set_reg(x(A6), n as u64);
    let mut done = 0;
    let mut strip = 0;
    while done < n {
        let vl = (n - done).min(vlmax);
        let (vx, vy) = if strip % 2 == 0 { (1, 2) } else { (3, 4) };
        e.setvl(T1, A6);
        e.vins(V_A, A4);
        e.vld(vx, A0);
        e.vld(vy, A1);
        e.vmadd(vy, V_A, vx);
        e.vst(vy, A1);
        e.addi(A0, A0, (vl * 8) as i64);
        e.addi(A1, A1, (vl * 8) as i64);
        e.addi(A6, A6, -(vl as i64));
        e.bne(A6, 0);
        done += vl;
        strip += 1;
    }
    e.p
}

/// Addresses of the convolution operands. Weights are stored with the
/// output channel innermost: `[c_in][k][k][c_out]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DconvLayout {
    pub input: u64,
    pub weights: u64,
    pub output: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ConvShape {
    c_out: usize,
    c_in: usize,
    k: usize,
    h: usize,
    w: usize,
    tile: usize,
}

impl ConvShape {
    fn of(kind: &KernelKind) -> Option<Self> {
        match *kind {
            KernelKind::Dconv {
                c_out,
                c_in,
                k,
                h,
                w,
                tile_co,
            } => Some(ConvShape {
                c_out,
                c_in,
                k,
                h,
                w,
                tile: tile_co,
            }),
            _ => None,
        }
    }

    fn in_h(&self) -> usize {
        self.h + self.k - 1
    }

    fn in_w(&self) -> usize {
        self.w + self.k - 1
    }

    fn input_len(&self) -> usize {
        self.c_in * self.in_h() * self.in_w()
    }

    fn weight_len(&self) -> usize {
        self.c_out * self.c_in * self.k * self.k
    }

    fn output_len(&self) -> usize {
        self.c_out * self.h * self.w
    }

    fn input_idx(&self, ci: usize, y: usize, xx: usize) -> usize {
        (ci * self.in_h() + y) * self.in_w() + xx
    }

    fn weight_idx(&self, co: usize, ci: usize, kh: usize, kw: usize) -> usize {
        ((ci * self.k + kh) * self.k + kw) * self.c_out + co
    }

    fn output_idx(&self, co: usize, y: usize, xx: usize) -> usize {
        (co * self.h + y) * self.w + xx
    }

    fn layout(&self) -> DconvLayout {
        let input = BASE_ADDR;
        let weights = align(input + 8 * self.input_len() as u64);
        let output = align(weights + 8 * self.weight_len() as u64);
        DconvLayout {
            input,
            weights,
            output,
        }
    }
}

/// Row-vectorized direct convolution. Each output row is a vector; every
/// (input channel, kernel row, kernel column) loads the shifted input row
/// once and applies it to `tile` output-channel accumulators with a
/// broadcast weight.
fn gen_dconv(s: &ConvShape, vlmax: usize, l: DconvLayout) -> Program {
    let mut e = Emit::new();
    let mut buf = 0;
    for co0 in (0..s.c_out).step_by(s.tile) {
        let tile = s.tile.min(s.c_out - co0);
        for y in 0..s.h {
            let mut x0 = 0;
            while x0 < s.w {
                let vl = (s.w - x0).min(vlmax);
                e.li(A6, vl as i64);
                e.setvl(T1, A6);
                let mut first = true;
                for ci in 0..s.c_in {
                    for kh in 0..s.k {
                        for kw in 0..s.k {
                            let vin = V_B[buf];
                            buf ^= 1;
                            e.li(
                                A1,
                                (l.input + 8 * s.input_idx(ci, y + kh, x0 + kw) as u64) as i64,
                            );
                            e.vld(vin, A1);
                            e.li(
                                A0,
                                (l.weights + 8 * s.weight_idx(co0, ci, kh, kw) as u64) as i64,
                            );
                            for j in 0..tile {
                                e.ld(T0, A0);
                                e.addi(A0, A0, 8);
                                e.vins(V_A, T0);
                                let acc = V_C + j as u32;
                                if first {
                                    e.vmul(acc, V_A, vin);
                                } else {
                                    e.vmadd(acc, V_A, vin);
                                }
                            }
                            first = false;
                        }
                    }
                }
                for j in 0..tile {
                    e.li(
                        A5,
                        (l.output + 8 * s.output_idx(co0 + j, y, x0) as u64) as i64,
                    );
                    e.vst(V_C + j as u32, A5);
                }
                x0 += vl;
            }
        }
    }
    e.p
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// `C + A B` accumulating over the inner index in ascending order with
/// fused multiply-adds.
pub fn matmul_reference(n: usize, a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    let mut out = c.to_vec();
    for r in 0..n {
        for i in 0..n {
            let s = a[r * n + i];
            for col in 0..n {
                out[r * n + col] = s.mul_add(b[i * n + col], out[r * n + col]);
            }
        }
    }
    out
}

pub fn daxpy_reference(alpha: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(y)
        .map(|(xi, yi)| alpha.mul_add(*xi, *yi))
        .collect()
}

/// Direct convolution over a padded input, accumulating in (input channel,
/// kernel row, kernel column) order; the first product is not fused.
fn dconv_reference(s: &ConvShape, input: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; s.output_len()];
    for co in 0..s.c_out {
        for y in 0..s.h {
            for xx in 0..s.w {
                let mut acc = None;
                for ci in 0..s.c_in {
                    for kh in 0..s.k {
                        for kw in 0..s.k {
                            let wv = weights[s.weight_idx(co, ci, kh, kw)];
                            let iv = input[s.input_idx(ci, y + kh, xx + kw)];
                            acc = Some(match acc {
                                None => wv * iv,
                                Some(a) => wv.mul_add(iv, a),
                            });
                        }
                    }
                }
                out[s.output_idx(co, y, xx)] = acc.unwrap_or_default();
            }
        }
    }
    out
}

/// Builds the stream, the initial memory and the expected output.
pub fn build(spec: &KernelSpec, cfg: &MachineConfig) -> Result<KernelInstance, KernelError> {
    if spec.sew != Sew::E64 {
        return Err(KernelError::Sew(spec.sew));
    }
    spec.kind.validate()?;
    let vlmax = cfg.vlmax(Sew::E64);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut memory = Memory::new();
    let (program, phases, output_addr, expected) = match spec.kind {
        KernelKind::Matmul { n, tile } => {
            let l = MatmulLayout::packed(n);
            let a = random_vec(&mut rng, n * n);
            let b = random_vec(&mut rng, n * n);
            let c = random_vec(&mut rng, n * n);
            memory.write_f64s(l.a, &a);
            memory.write_f64s(l.b, &b);
            memory.write_f64s(l.c, &c);
            let (p, phases) = gen_matmul(n, tile, vlmax, l);
            (p, phases, l.c, matmul_reference(n, &a, &b, &c))
        }
        KernelKind::Daxpy { n, alpha } => {
            let xa = BASE_ADDR;
            let ya = align(xa + 8 * n as u64);
            let xs = random_vec(&mut rng, n);
            let ys = random_vec(&mut rng, n);
            memory.write_f64s(xa, &xs);
            memory.write_f64s(ya, &ys);
            let p = gen_daxpy(n, vlmax, alpha, xa, ya);
            (p, Vec::new(), ya, daxpy_reference(alpha, &xs, &ys))
        }
        KernelKind::Dconv { .. } => {
            let s = ConvShape::of(&spec.kind).unwrap_or_else(|| unreachable!());
            let l = s.layout();
            let input = random_vec(&mut rng, s.input_len());
            let weights = random_vec(&mut rng, s.weight_len());
            memory.write_f64s(l.input, &input);
            memory.write_f64s(l.weights, &weights);
            let p = gen_dconv(&s, vlmax, l);
            (
                p,
                Vec::new(),
                l.output,
                dconv_reference(&s, &input, &weights),
            )
        }
    };
    Ok(KernelInstance {
        spec: *spec,
        program,
        memory,
        output_addr,
        expected,
        phases,
    })
}

/// Arithmetic intensity in dpflop per byte of compulsory memory traffic.
pub fn intensity(kind: &KernelKind) -> f64 {
    match *kind {
        KernelKind::Matmul { n, .. } => n as f64 / 16.0,
        KernelKind::Daxpy { .. } => 1.0 / 12.0,
        KernelKind::Dconv { .. } => {
            let s = ConvShape::of(kind).unwrap_or_else(|| unreachable!());
            let bytes = 8 * (s.input_len() + s.output_len());
            kind.flops() as f64 / bytes as f64
        }
    }
}

/// Outcome of simulating one kernel.
#[derive(Debug, Clone)]
pub struct KernelRun {
    pub spec: KernelSpec,
    pub report: SimReport,
    pub max_rel_error: f64,
    pub intensity: f64,
    /// Issue gap of the scalar core's FMA loop, used by the issue-rate line.
    pub delta: f64,
    pub bound: f64,
    pub loss_pct: f64,
    pub memory: Memory,
    /// Unit and port activity, when the options asked for it.
    pub trace: Option<Trace>,
}

impl KernelRun {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Generates, simulates and checks a kernel. The issue gap is measured over
/// the vector FMA dispatches of each compute phase (the whole stream when the
/// kernel has no phases), skipping the first gap of every phase.
pub fn run(
    spec: &KernelSpec,
    cfg: &MachineConfig,
    opts: SimOptions,
) -> Result<KernelRun, KernelError> {
    let inst = build(spec, cfg)?;
    let mut sim = Simulator::new(cfg, inst.program.clone(), inst.memory.clone(), opts)?;
    let mut report = sim.run()?;
    let ranges = match inst.compute_ranges() {
        r if r.is_empty() => std::iter::once(0..inst.program.len()).collect(),
        r => r,
    };
    let mut gaps = Vec::new();
    for r in ranges {
        let d = sim.fma_dispatches(r);
        let g: Vec<u64> = d.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.extend(g.into_iter().skip(1));
    }
    report.issue_gap = gap_stats(&gaps);
    let delta = fma_loop_period(&cfg.scalar) as f64;
    let intensity = intensity(&spec.kind);
    let model = RooflineModel::from_config(cfg, delta);
    let bound = model
        .bound(BoundKind::for_kernel(&spec.kind), intensity)
        .unwrap_or(model.peak);
    if report.performance > bound * (1.0 + 1e-9) {
        report.invariants.above_bound += 1;
    }
    let trace = sim.trace().cloned();
    let memory = sim.into_memory();
    let max_rel_error = inst.max_rel_error(&memory);
    Ok(KernelRun {
        spec: *spec,
        loss_pct: loss_pct(report.performance, bound),
        report,
        max_rel_error,
        intensity,
        delta,
        bound,
        memory,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::VOpcode;

    fn count(p: &Program, op: VOpcode) -> usize {
        p.instrs
            .iter()
            .filter(|i| i.as_vector().is_some_and(|v| v.opcode() == op))
            .count()
    }

    #[test]
    fn matmul_instruction_count_closed_form() {
        let (n, t) = (16usize, 4usize);
        let (p, phases) = gen_matmul(n, t, 64, MatmulLayout::packed(n));
        let blocks = n / t;
        // setup 3, per strip 2, per block: phase I 1+2t, phase II
        // 3 + 2 + 2(n-1) + (4t+1)n + n/2, phase III 1+2t.
        let per_block = (1 + 2 * t) + (3 + 2 + 2 * (n - 1) + (4 * t + 1) * n + n / 2) + (1 + 2 * t);
        assert_eq!(p.len(), 3 + 2 + blocks * per_block);
        assert_eq!(count(&p, VOpcode::Vmadd), n * n);
        assert_eq!(count(&p, VOpcode::Vld), blocks * (t + n));
        assert_eq!(phases.len(), 3 * blocks);
    }

    #[test]
    fn strips_cover_columns_once() {
        let n = 20;
        let (p, _) = gen_matmul(n, 4, 8, MatmulLayout::packed(n));
        assert_eq!(count(&p, VOpcode::Setvl), 3);
        assert_eq!(count(&p, VOpcode::Vmadd), 3 * n * n);
    }

    #[test]
    fn identity_a_adds_b() {
        let n = 3;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        let b: Vec<f64> = (0..9).map(f64::from).collect();
        let c = vec![0.5; 9];
        let out = matmul_reference(n, &a, &b, &c);
        let want: Vec<f64> = b.iter().map(|x| x + 0.5).collect();
        assert_eq!(out, want);
    }

    #[test]
    fn daxpy_zero_alpha_and_empty() {
        let y = vec![1.0, -2.0];
        assert_eq!(daxpy_reference(0.0, &[3.0, 4.0], &y), y);
        assert!(gen_daxpy(0, 64, 1.0, 0, 0).is_empty());
    }

    #[test]
    fn intensities() {
        assert_eq!(intensity(&KernelKind::matmul(256)), 16.0);
        assert_eq!(intensity(&KernelKind::daxpy(10)), 1.0 / 12.0);
        let i = intensity(&KernelKind::dconv());
        assert!((i - 34.9).abs() < 0.05, "{i}");
        assert_eq!(KernelKind::dconv().flops(), 236_027_904);
    }

    #[test]
    fn rel_error() {
        assert_eq!(max_rel_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((max_rel_error(&[1.1], &[1.0]) - 0.1).abs() < 1e-12);
        assert!(max_rel_error(&[1.0], &[]).is_infinite());
    }
}
