//! Simulated instruction subset and its plain-text assembly form.
//!
//! The scalar side understands `ld`, `add` and `bne`; every vector mnemonic
//! decodes to [`ScalarInstr::VDispatch`], the record the scalar core hands
//! over to the vector unit. Programs are traces: loops are already unrolled
//! by the kernel generators, so `bne` only occupies an issue slot.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Architectural vector registers.
pub const NUM_VREGS: usize = 32;
/// Architectural scalar integer registers.
pub const NUM_XREGS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsaError {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("register id {0} out of range (must be < 32)")]
    RegisterRange(u32),
    #[error("bad register `{0}`")]
    BadRegister(String),
    #[error("bad immediate `{0}`")]
    BadImmediate(String),
    #[error("bad memory operand `{0}`")]
    BadMemOperand(String),
    #[error("`{mnemonic}` expects {expected} operands, got {got}")]
    OperandCount {
        mnemonic: String,
        expected: usize,
        got: usize,
    },
    #[error("bad element width `{0}`")]
    BadSew(String),
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<IsaError>,
    },
    #[error("bad directive `{0}`")]
    BadDirective(String),
}

/// Vector register id, always `< 32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VReg(u8);

impl VReg {
    pub fn new(id: u32) -> Result<Self, IsaError> {
        if (id as usize) < NUM_VREGS {
            Ok(VReg(id as u8))
        } else {
            Err(IsaError::RegisterRange(id))
        }
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

const ABI_NAMES: [&str; NUM_XREGS] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4",
    "a5", "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4",
    "t5", "t6",
];

/// Scalar integer register id. `x0` reads as zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct XReg(u8);

impl XReg {
    pub const ZERO: XReg = XReg(0);

    pub fn new(id: u32) -> Result<Self, IsaError> {
        if (id as usize) < NUM_XREGS {
            Ok(XReg(id as u8))
        } else {
            Err(IsaError::RegisterRange(id))
        }
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for XReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(ABI_NAMES[self.0 as usize])
    }
}

impl FromStr for XReg {
    type Err = IsaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "fp" {
            return Ok(XReg(8));
        }
        if let Some(pos) = ABI_NAMES.iter().position(|n| *n == s) {
            return Ok(XReg(pos as u8));
        }
        match s.strip_prefix('x').map(str::parse::<u32>) {
            Some(Ok(id)) => XReg::new(id),
            _ => Err(IsaError::BadRegister(s.to_string())),
        }
    }
}

/// Standard element width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sew {
    E8,
    E16,
    E32,
    E64,
}

impl Sew {
    pub fn bits(self) -> usize {
        match self {
            Sew::E8 => 8,
            Sew::E16 => 16,
            Sew::E32 => 32,
            Sew::E64 => 64,
        }
    }

    pub fn bytes(self) -> usize {
        self.bits() / 8
    }

    /// Elements packed into one 64-bit datapath word.
    pub fn per_word(self) -> usize {
        64 / self.bits()
    }

    pub fn from_bits(bits: usize) -> Option<Sew> {
        match bits {
            8 => Some(Sew::E8),
            16 => Some(Sew::E16),
            32 => Some(Sew::E32),
            64 => Some(Sew::E64),
            _ => None,
        }
    }

    /// Element width after a promotion, if one exists.
    pub fn widened(self) -> Option<Sew> {
        match self {
            Sew::E8 => Some(Sew::E16),
            Sew::E16 => Some(Sew::E32),
            Sew::E32 => Some(Sew::E64),
            Sew::E64 => None,
        }
    }
}

impl fmt::Display for Sew {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.bits())
    }
}

impl FromStr for Sew {
    type Err = IsaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('e')
            .and_then(|b| b.parse::<usize>().ok())
            .and_then(Sew::from_bits)
            .ok_or_else(|| IsaError::BadSew(s.to_string()))
    }
}

/// Maximum vector length for a register file of `vrf_bytes_per_lane` bytes
/// per lane holding 32 registers.
pub fn vlmax(lanes: usize, vrf_bytes_per_lane: usize, sew: Sew) -> usize {
    vrf_bytes_per_lane / NUM_VREGS * 8 / sew.bits() * lanes
}

/// Current vector-length configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VecConfig {
    pub vl: usize,
    pub sew: Sew,
    pub vlmax: usize,
}

impl VecConfig {
    /// Configuration right after reset: `vl = vlmax`.
    pub fn new(lanes: usize, vrf_bytes_per_lane: usize, sew: Sew) -> Self {
        let vlmax = vlmax(lanes, vrf_bytes_per_lane, sew);
        VecConfig {
            vl: vlmax,
            sew,
            vlmax,
        }
    }
}

/// `vl = min(requested, vlmax)`; the element width is left untouched.
pub fn set_vector_length(requested: usize, cfg: VecConfig) -> VecConfig {
    VecConfig {
        vl: requested.min(cfg.vlmax),
        ..cfg
    }
}

/// Register or immediate scalar operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScalarOperand {
    Reg(XReg),
    Imm(i64),
}

impl fmt::Display for ScalarOperand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarOperand::Reg(r) => write!(f, "{r}"),
            ScalarOperand::Imm(i) => write!(f, "{i}"),
        }
    }
}

/// `offset(base)` memory operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemRef {
    pub base: XReg,
    pub offset: i64,
}

impl fmt::Display for MemRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.offset, self.base)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessMode {
    Unit,
    Strided(XReg),
    Indexed(VReg),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    /// `vd = a * b + c`
    Madd,
    Add,
    Mul,
    Div,
    Sqrt,
}

impl ArithOp {
    pub fn arity(self) -> usize {
        match self {
            ArithOp::Madd => 3,
            ArithOp::Add | ArithOp::Mul | ArithOp::Div => 2,
            ArithOp::Sqrt => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElemType {
    Float,
    Int,
}

/// Opcode of a vector instruction, used for filtering timelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VOpcode {
    Vld,
    Vst,
    Vlds,
    Vldx,
    Vsts,
    Vstx,
    Vmadd,
    Vadd,
    Vmul,
    Vdiv,
    Vsqrt,
    Vins,
    Vext,
    Vslide,
    Setvl,
}

/// Decoded vector instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VectorInstr {
    Load {
        vd: VReg,
        mem: MemRef,
        mode: AccessMode,
    },
    Store {
        vs: VReg,
        mem: MemRef,
        mode: AccessMode,
    },
    Arith {
        op: ArithOp,
        ty: ElemType,
        widen: bool,
        vd: VReg,
        srcs: [Option<VReg>; 3],
    },
    /// Scalar-to-vector move. With a zero index the scalar lands at the first
    /// position of every lane and the register becomes scalar-shaped.
    Insert { vd: VReg, rs: XReg, idx: XReg },
    /// Vector-to-scalar move; the scalar core waits for the result.
    Extract { rd: XReg, vs: VReg, idx: XReg },
    /// `vd[i] = vs[i + amount]` for `i + amount < vl`.
    Slide {
        vd: VReg,
        vs: VReg,
        amount: ScalarOperand,
    },
    /// `rd = vl = min(rs, vlmax)`; the scalar core waits for the result.
    SetVl { rd: XReg, rs: XReg, sew: Sew },
}

impl VectorInstr {
    pub fn arith(op: ArithOp, ty: ElemType, vd: VReg, srcs: &[VReg]) -> Self {
        let mut s = [None; 3];
        for (slot, r) in s.iter_mut().zip(srcs) {
            *slot = Some(*r);
        }
        VectorInstr::Arith {
            op,
            ty,
            widen: false,
            vd,
            srcs: s,
        }
    }

    pub fn opcode(&self) -> VOpcode {
        match self {
            VectorInstr::Load { mode, .. } => match mode {
                AccessMode::Unit => VOpcode::Vld,
                AccessMode::Strided(_) => VOpcode::Vlds,
                AccessMode::Indexed(_) => VOpcode::Vldx,
            },
            VectorInstr::Store { mode, .. } => match mode {
                AccessMode::Unit => VOpcode::Vst,
                AccessMode::Strided(_) => VOpcode::Vsts,
                AccessMode::Indexed(_) => VOpcode::Vstx,
            },
            VectorInstr::Arith { op, .. } => match op {
                ArithOp::Madd => VOpcode::Vmadd,
                ArithOp::Add => VOpcode::Vadd,
                ArithOp::Mul => VOpcode::Vmul,
                ArithOp::Div => VOpcode::Vdiv,
                ArithOp::Sqrt => VOpcode::Vsqrt,
            },
            VectorInstr::Insert { .. } => VOpcode::Vins,
            VectorInstr::Extract { .. } => VOpcode::Vext,
            VectorInstr::Slide { .. } => VOpcode::Vslide,
            VectorInstr::SetVl { .. } => VOpcode::Setvl,
        }
    }

    /// Vector register written, if any.
    pub fn vdest(&self) -> Option<VReg> {
        match *self {
            VectorInstr::Load { vd, .. }
            | VectorInstr::Arith { vd, .. }
            | VectorInstr::Insert { vd, .. }
            | VectorInstr::Slide { vd, .. } => Some(vd),
            _ => None,
        }
    }

    /// Vector registers read, in operand order.
    pub fn vsources(&self) -> Vec<VReg> {
        match *self {
            VectorInstr::Load { mode, .. } => match mode {
                AccessMode::Indexed(v) => vec![v],
                _ => vec![],
            },
            VectorInstr::Store { vs, mode, .. } => match mode {
                AccessMode::Indexed(v) => vec![vs, v],
                _ => vec![vs],
            },
            VectorInstr::Arith { srcs, .. } => srcs.iter().flatten().copied().collect(),
            VectorInstr::Extract { vs, .. } | VectorInstr::Slide { vs, .. } => vec![vs],
            VectorInstr::Insert { .. } | VectorInstr::SetVl { .. } => vec![],
        }
    }

    /// Scalar registers whose values travel with the instruction.
    pub fn xsources(&self) -> Vec<XReg> {
        match *self {
            VectorInstr::Load { mem, mode, .. } | VectorInstr::Store { mem, mode, .. } => {
                match mode {
                    AccessMode::Strided(s) => vec![mem.base, s],
                    _ => vec![mem.base],
                }
            }
            VectorInstr::Insert { rs, idx, .. } => vec![rs, idx],
            VectorInstr::Extract { idx, .. } => vec![idx],
            VectorInstr::Slide { amount, .. } => match amount {
                ScalarOperand::Reg(r) => vec![r],
                ScalarOperand::Imm(_) => vec![],
            },
            VectorInstr::SetVl { rs, .. } => vec![rs],
            VectorInstr::Arith { .. } => vec![],
        }
    }

    /// Scalar register written back by the vector unit, if any.
    pub fn xdest(&self) -> Option<XReg> {
        match *self {
            VectorInstr::Extract { rd, .. } | VectorInstr::SetVl { rd, .. } => Some(rd),
            _ => None,
        }
    }
}

fn mode_suffix(mode: AccessMode) -> &'static str {
    match mode {
        AccessMode::Unit => "",
        AccessMode::Strided(_) => "s",
        AccessMode::Indexed(_) => "x",
    }
}

fn fmt_mode(f: &mut fmt::Formatter<'_>, mode: AccessMode) -> fmt::Result {
    match mode {
        AccessMode::Unit => Ok(()),
        AccessMode::Strided(r) => write!(f, ", {r}"),
        AccessMode::Indexed(v) => write!(f, ", {v}"),
    }
}

impl fmt::Display for VectorInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            VectorInstr::Load { vd, mem, mode } => {
                write!(f, "vld{} {vd}, {mem}", mode_suffix(mode))?;
                fmt_mode(f, mode)
            }
            VectorInstr::Store { vs, mem, mode } => {
                write!(f, "vst{} {vs}, {mem}", mode_suffix(mode))?;
                fmt_mode(f, mode)
            }
            VectorInstr::Arith {
                op,
                ty,
                widen,
                vd,
                srcs,
            } => {
                let name = match op {
                    ArithOp::Madd => "vmadd",
                    ArithOp::Add => "vadd",
                    ArithOp::Mul => "vmul",
                    ArithOp::Div => "vdiv",
                    ArithOp::Sqrt => "vsqrt",
                };
                let suffix = match (ty, widen) {
                    (ElemType::Float, _) => "",
                    (ElemType::Int, false) => ".i",
                    (ElemType::Int, true) => ".iw",
                };
                write!(f, "{name}{suffix} {vd}")?;
                for s in srcs.iter().flatten() {
                    write!(f, ", {s}")?;
                }
                Ok(())
            }
            VectorInstr::Insert { vd, rs, idx } => write!(f, "vins {vd}, {rs}, {idx}"),
            VectorInstr::Extract { rd, vs, idx } => write!(f, "vext {rd}, {vs}, {idx}"),
            VectorInstr::Slide { vd, vs, amount } => write!(f, "vslide {vd}, {vs}, {amount}"),
            VectorInstr::SetVl { rd, rs, sew } => write!(f, "setvl {rd}, {rs}, {sew}"),
        }
    }
}

/// Instruction as seen by the scalar core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScalarInstr {
    /// 64-bit load.
    Ld {
        rd: XReg,
        mem: MemRef,
    },
    Add {
        rd: XReg,
        rs1: XReg,
        rs2: ScalarOperand,
    },
    /// Resolved branch of an unrolled trace; it only takes an issue slot.
    Branch {
        rs1: XReg,
        rs2: XReg,
    },
    VDispatch(VectorInstr),
}

/// Scalar-side opcode, used for filtering timelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Opcode {
    Ld,
    Add,
    Branch,
    VDispatch(VOpcode),
}

impl ScalarInstr {
    pub fn opcode(&self) -> Opcode {
        match self {
            ScalarInstr::Ld { .. } => Opcode::Ld,
            ScalarInstr::Add { .. } => Opcode::Add,
            ScalarInstr::Branch { .. } => Opcode::Branch,
            ScalarInstr::VDispatch(v) => Opcode::VDispatch(v.opcode()),
        }
    }

    pub fn as_vector(&self) -> Option<&VectorInstr> {
        match self {
            ScalarInstr::VDispatch(v) => Some(v),
            _ => None,
        }
    }

    /// Scalar registers this instruction reads.
    pub fn reads(&self) -> Vec<XReg> {
        match *self {
            ScalarInstr::Ld { mem, .. } => vec![mem.base],
            ScalarInstr::Add { rs1, rs2, .. } => match rs2 {
                ScalarOperand::Reg(r) => vec![rs1, r],
                ScalarOperand::Imm(_) => vec![rs1],
            },
            ScalarInstr::Branch { rs1, rs2 } => vec![rs1, rs2],
            ScalarInstr::VDispatch(v) => v.xsources(),
        }
    }

    /// Scalar register this instruction writes.
    pub fn writes(&self) -> Option<XReg> {
        match *self {
            ScalarInstr::Ld { rd, .. } | ScalarInstr::Add { rd, .. } => Some(rd),
            ScalarInstr::Branch { .. } => None,
            ScalarInstr::VDispatch(v) => v.xdest(),
        }
    }
}

impl From<VectorInstr> for ScalarInstr {
    fn from(v: VectorInstr) -> Self {
        ScalarInstr::VDispatch(v)
    }
}

impl fmt::Display for ScalarInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarInstr::Ld { rd, mem } => write!(f, "ld {rd}, {mem}"),
            ScalarInstr::Add { rd, rs1, rs2 } => write!(f, "add {rd}, {rs1}, {rs2}"),
            ScalarInstr::Branch { rs1, rs2 } => write!(f, "bne {rs1}, {rs2}"),
            ScalarInstr::VDispatch(v) => write!(f, "{v}"),
        }
    }
}

/// Symbolic names for vector registers (`vA`, `vB0`, `vC3`, ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aliases {
    map: HashMap<String, VReg>,
}

impl Aliases {
    pub fn empty() -> Self {
        Aliases {
            map: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, reg: VReg) {
        self.map.insert(name.to_string(), reg);
    }

    pub fn get(&self, name: &str) -> Option<VReg> {
        self.map.get(name).copied()
    }
}

/// Register names used by the matrix-multiplication listing:
/// `vA` = v0, `vB0..vB2` = v1..v3, `vC0..vC15` = v8..v23.
impl Default for Aliases {
    fn default() -> Self {
        let mut a = Aliases::empty();
        a.insert("vA", VReg(0));
        for i in 0..3 {
            a.insert(&format!("vB{i}"), VReg(1 + i));
        }
        for i in 0..16 {
            a.insert(&format!("vC{i}"), VReg(8 + i));
        }
        a
    }
}

fn parse_vreg(s: &str, aliases: &Aliases) -> Result<VReg, IsaError> {
    if let Some(r) = aliases.get(s) {
        return Ok(r);
    }
    match s.strip_prefix('v').map(str::parse::<u32>) {
        Some(Ok(id)) => VReg::new(id),
        _ => Err(IsaError::BadRegister(s.to_string())),
    }
}

fn parse_imm(s: &str) -> Result<i64, IsaError> {
    let err = || IsaError::BadImmediate(s.to_string());
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let mag = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).map_err(|_| err())?
    } else {
        body.parse::<u64>().map_err(|_| err())?
    };
    if neg {
        if mag > i64::MAX as u64 + 1 {
            return Err(err());
        }
        Ok((mag as i64).wrapping_neg())
    } else {
        i64::try_from(mag).map_err(|_| err())
    }
}

fn parse_scalar_operand(s: &str) -> Result<ScalarOperand, IsaError> {
    match s.parse::<XReg>() {
        Ok(r) => Ok(ScalarOperand::Reg(r)),
        Err(IsaError::RegisterRange(id)) => Err(IsaError::RegisterRange(id)),
        Err(_) => parse_imm(s).map(ScalarOperand::Imm),
    }
}

fn parse_mem(s: &str) -> Result<MemRef, IsaError> {
    let err = || IsaError::BadMemOperand(s.to_string());
    let open = s.find('(').ok_or_else(err)?;
    let inner = s[open + 1..].strip_suffix(')').ok_or_else(err)?;
    let off = s[..open].trim();
    let offset = if off.is_empty() { 0 } else { parse_imm(off)? };
    Ok(MemRef {
        base: inner.trim().parse()?,
        offset,
    })
}

fn expect_ops(mnemonic: &str, ops: &[&str], expected: usize) -> Result<(), IsaError> {
    if ops.len() == expected {
        Ok(())
    } else {
        Err(IsaError::OperandCount {
            mnemonic: mnemonic.to_string(),
            expected,
            got: ops.len(),
        })
    }
}

/// Decodes one instruction using the default register aliases.
pub fn decode(raw: &str) -> Result<ScalarInstr, IsaError> {
    decode_with(raw, &Aliases::default())
}

/// Decodes one instruction (no comment, no directive).
pub fn decode_with(raw: &str, aliases: &Aliases) -> Result<ScalarInstr, IsaError> {
    let raw = raw.trim();
    let (mnemonic, rest) = match raw.find(char::is_whitespace) {
        Some(i) => (&raw[..i], raw[i..].trim()),
        None => (raw, ""),
    };
    let ops: Vec<&str> = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',').map(str::trim).collect()
    };
    let vreg = |s: &str| parse_vreg(s, aliases);

    let (base, suffix) = match mnemonic.split_once('.') {
        Some((b, s)) => (b, Some(s)),
        None => (mnemonic, None),
    };
    let (ty, widen) = match suffix {
        None => (ElemType::Float, false),
        Some("i") => (ElemType::Int, false),
        Some("iw") => (ElemType::Int, true),
        Some(_) => return Err(IsaError::UnknownMnemonic(mnemonic.to_string())),
    };
    let arith_op = match base {
        "vmadd" => Some(ArithOp::Madd),
        "vadd" => Some(ArithOp::Add),
        "vmul" => Some(ArithOp::Mul),
        "vdiv" => Some(ArithOp::Div),
        "vsqrt" => Some(ArithOp::Sqrt),
        _ => None,
    };
    if let Some(op) = arith_op {
        let allowed = match op {
            ArithOp::Madd => !widen,
            ArithOp::Add | ArithOp::Mul => true,
            ArithOp::Div | ArithOp::Sqrt => suffix.is_none(),
        };
        if !allowed {
            return Err(IsaError::UnknownMnemonic(mnemonic.to_string()));
        }
        expect_ops(mnemonic, &ops, 1 + op.arity())?;
        let vd = vreg(ops[0])?;
        let mut srcs = [None; 3];
        for (slot, s) in srcs.iter_mut().zip(&ops[1..]) {
            *slot = Some(vreg(s)?);
        }
        return Ok(VectorInstr::Arith {
            op,
            ty,
            widen,
            vd,
            srcs,
        }
        .into());
    }
    if suffix.is_some() {
        return Err(IsaError::UnknownMnemonic(mnemonic.to_string()));
    }

    let instr = match mnemonic {
        "ld" => {
            expect_ops(mnemonic, &ops, 2)?;
            ScalarInstr::Ld {
                rd: ops[0].parse()?,
                mem: parse_mem(ops[1])?,
            }
        }
        "add" => {
            expect_ops(mnemonic, &ops, 3)?;
            ScalarInstr::Add {
                rd: ops[0].parse()?,
                rs1: ops[1].parse()?,
                rs2: parse_scalar_operand(ops[2])?,
            }
        }
        "bne" => {
            expect_ops(mnemonic, &ops, 2)?;
            ScalarInstr::Branch {
                rs1: ops[0].parse()?,
                rs2: ops[1].parse()?,
            }
        }
        "vld" | "vlds" | "vldx" | "vst" | "vsts" | "vstx" => {
            let load = mnemonic.starts_with("vld");
            let mode_ch = mnemonic.chars().nth(3);
            let n = if mode_ch.is_some() { 3 } else { 2 };
            expect_ops(mnemonic, &ops, n)?;
            let reg = vreg(ops[0])?;
            let mem = parse_mem(ops[1])?;
            let mode = match mode_ch {
                None => AccessMode::Unit,
                Some('s') => AccessMode::Strided(ops[2].parse()?),
                Some(_) => AccessMode::Indexed(vreg(ops[2])?),
            };
            if load {
                VectorInstr::Load { vd: reg, mem, mode }.into()
            } else {
                VectorInstr::Store { vs: reg, mem, mode }.into()
            }
        }
        "vins" => {
            expect_ops(mnemonic, &ops, 3)?;
            VectorInstr::Insert {
                vd: vreg(ops[0])?,
                rs: ops[1].parse()?,
                idx: ops[2].parse()?,
            }
            .into()
        }
        "vext" => {
            expect_ops(mnemonic, &ops, 3)?;
            VectorInstr::Extract {
                rd: ops[0].parse()?,
                vs: vreg(ops[1])?,
                idx: ops[2].parse()?,
            }
            .into()
        }
        "vslide" => {
            expect_ops(mnemonic, &ops, 3)?;
            VectorInstr::Slide {
                vd: vreg(ops[0])?,
                vs: vreg(ops[1])?,
                amount: parse_scalar_operand(ops[2])?,
            }
            .into()
        }
        "setvl" => {
            if ops.len() != 2 && ops.len() != 3 {
                return Err(IsaError::OperandCount {
                    mnemonic: mnemonic.to_string(),
                    expected: 3,
                    got: ops.len(),
                });
            }
            let sew = match ops.get(2) {
                Some(s) => s.parse()?,
                None => Sew::E64,
            };
            VectorInstr::SetVl {
                rd: ops[0].parse()?,
                rs: ops[1].parse()?,
                sew,
            }
            .into()
        }
        _ => return Err(IsaError::UnknownMnemonic(mnemonic.to_string())),
    };
    Ok(instr)
}

/// An unrolled instruction trace plus the scalar register values it starts
/// from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub init_regs: Vec<(XReg, u64)>,
    pub instrs: Vec<ScalarInstr>,
}

impl Program {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_reg(&mut self, reg: XReg, value: u64) {
        self.init_regs.retain(|(r, _)| *r != reg);
        self.init_regs.push((reg, value));
    }

    pub fn push(&mut self, instr: impl Into<ScalarInstr>) {
        self.instrs.push(instr.into());
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    /// Parses assembly text: one instruction per line, `;` starts a comment.
    /// Directives: `.set <xreg>, <value>` and `.alias <name>, <vreg>`.
    pub fn parse(text: &str) -> Result<Program, IsaError> {
        let mut aliases = Aliases::default();
        let mut prog = Program::new();
        for (n, line) in text.lines().enumerate() {
            let code = line.split(';').next().unwrap_or("").trim();
            if code.is_empty() {
                continue;
            }
            let wrap = |e: IsaError| IsaError::Line {
                line: n + 1,
                source: Box::new(e),
            };
            if let Some(dir) = code.strip_prefix('.') {
                let (name, rest) = dir.split_once(char::is_whitespace).unwrap_or((dir, ""));
                let args: Vec<&str> = rest.split(',').map(str::trim).collect();
                match (name, args.as_slice()) {
                    ("set", [reg, value]) => {
                        let reg: XReg = reg.parse().map_err(wrap)?;
                        let v = parse_imm(value)
                            .map(|v| v as u64)
                            .or_else(|e| {
                                value
                                    .strip_prefix("0x")
                                    .and_then(|h| u64::from_str_radix(h, 16).ok())
                                    .ok_or(e)
                            })
                            .map_err(wrap)?;
                        prog.set_reg(reg, v);
                    }
                    ("alias", [alias, reg]) => {
                        let r = parse_vreg(reg, &Aliases::empty()).map_err(wrap)?;
                        aliases.insert(alias, r);
                    }
                    _ => return Err(wrap(IsaError::BadDirective(code.to_string()))),
                }
                continue;
            }
            prog.instrs.push(decode_with(code, &aliases).map_err(wrap)?);
        }
        Ok(prog)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (r, v) in &self.init_regs {
            writeln!(f, ".set {r}, {:#x}", v)?;
        }
        for i in &self.instrs {
            writeln!(f, "{i}")?;
        }
        Ok(())
    }
}
