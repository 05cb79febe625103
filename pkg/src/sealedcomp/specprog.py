"""Bounded expression language for analytics programs and functional specs.

Every operator is total on bytes so a program can be checked against its
specification by enumerating the whole input domain:

    add  saturates at 255        sub  saturates at 0
    mul  wraps modulo 256        lt   yields 0 or 1
    if   selects ``then`` when the condition is non-zero

Canonical encoding (all operands one byte, so big-endian is trivial)::

    program := 0x01 arity wm_len wm[wm_len] n_extra expr{1 + n_extra}
    expr    := 0x01 c | 0x02 i | op expr expr | 0x20 expr expr expr
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

MAX_DEPTH = 32
MAX_ARITY = 2
PROGRAM_VERSION = 0x01

OP_CONST = 0x01
OP_INPUT = 0x02
OP_ADD = 0x10
OP_SUB = 0x11
OP_MUL = 0x12
OP_MIN = 0x13
OP_MAX = 0x14
OP_LT = 0x15
OP_IF = 0x20


class InputDomainError(ValueError):
    """Inputs do not match the declared arity or range."""


class DecodeError(ValueError):
    """Bytes are not a canonical program or expression encoding."""


class ExpressionError(ValueError):
    """An expression tree violates a structural bound."""


@dataclass(frozen=True)
class Const:
    value: int

    def __post_init__(self):
        if not 0 <= self.value <= 255:
            raise ExpressionError(f"constant {self.value} outside [0, 255]")


@dataclass(frozen=True)
class Input:
    index: int

    def __post_init__(self):
        if not 0 <= self.index < MAX_ARITY:
            raise ExpressionError(f"input index {self.index} outside [0, {MAX_ARITY})")


@dataclass(frozen=True)
class BinOp:
    op: int
    left: "Expression"
    right: "Expression"

    def __post_init__(self):
        if self.op not in _BINOPS:
            raise ExpressionError(f"unknown binary opcode {self.op:#x}")


@dataclass(frozen=True)
class If:
    cond: "Expression"
    then: "Expression"
    orelse: "Expression"


Expression = Union[Const, Input, BinOp, If]


def add(a: Expression, b: Expression) -> BinOp:
    return BinOp(OP_ADD, a, b)


def sub(a: Expression, b: Expression) -> BinOp:
    return BinOp(OP_SUB, a, b)


def mul(a: Expression, b: Expression) -> BinOp:
    return BinOp(OP_MUL, a, b)


def min_(a: Expression, b: Expression) -> BinOp:
    return BinOp(OP_MIN, a, b)


def max_(a: Expression, b: Expression) -> BinOp:
    return BinOp(OP_MAX, a, b)


def lt(a: Expression, b: Expression) -> BinOp:
    return BinOp(OP_LT, a, b)


def _scalar_binop(op: int, a: int, b: int) -> int:
    if op == OP_ADD:
        return min(a + b, 255)
    if op == OP_SUB:
        return max(a - b, 0)
    if op == OP_MUL:
        return (a * b) % 256
    if op == OP_MIN:
        return min(a, b)
    if op == OP_MAX:
        return max(a, b)
    return int(a < b)


_BINOPS = frozenset({OP_ADD, OP_SUB, OP_MUL, OP_MIN, OP_MAX, OP_LT})


def depth(e: Expression) -> int:
    match e:
        case Const() | Input():
            return 1
        case BinOp(left=l, right=r):
            return 1 + max(depth(l), depth(r))
        case If(cond=c, then=t, orelse=f):
            return 1 + max(depth(c), depth(t), depth(f))
    raise ExpressionError(f"not an expression: {e!r}")


def max_input_index(e: Expression) -> int:
    """Largest input index referenced, or -1 for a closed expression."""
    match e:
        case Const():
            return -1
        case Input(index=i):
            return i
        case BinOp(left=l, right=r):
            return max(max_input_index(l), max_input_index(r))
        case If(cond=c, then=t, orelse=f):
            return max(max_input_index(c), max_input_index(t), max_input_index(f))
    raise ExpressionError(f"not an expression: {e!r}")


def eval_expr(e: Expression, inputs: Sequence[int]) -> int:
    match e:
        case Const(value=v):
            return v
        case Input(index=i):
            return inputs[i]
        case BinOp(op=op, left=l, right=r):
            return _scalar_binop(op, eval_expr(l, inputs), eval_expr(r, inputs))
        case If(cond=c, then=t, orelse=f):
            return eval_expr(t, inputs) if eval_expr(c, inputs) else eval_expr(f, inputs)
    raise ExpressionError(f"not an expression: {e!r}")


def eval_grid(e: Expression, columns: np.ndarray) -> np.ndarray:
    """Evaluate ``e`` at every domain point at once; ``columns[i]`` holds input i."""
    match e:
        case Const(value=v):
            return np.full(columns.shape[1], v, dtype=np.int64)
        case Input(index=i):
            return columns[i].astype(np.int64)
        case BinOp(op=op, left=l, right=r):
            a, b = eval_grid(l, columns), eval_grid(r, columns)
            if op == OP_ADD:
                return np.minimum(a + b, 255)
            if op == OP_SUB:
                return np.maximum(a - b, 0)
            if op == OP_MUL:
                return (a * b) % 256
            if op == OP_MIN:
                return np.minimum(a, b)
            if op == OP_MAX:
                return np.maximum(a, b)
            return (a < b).astype(np.int64)
        case If(cond=c, then=t, orelse=f):
            return np.where(eval_grid(c, columns) != 0, eval_grid(t, columns), eval_grid(f, columns))
    raise ExpressionError(f"not an expression: {e!r}")


def _check_inputs(inputs: Sequence[int], ranges: Sequence[tuple[int, int]]) -> tuple[int, ...]:
    if len(inputs) != len(ranges):
        raise InputDomainError(f"expected {len(ranges)} inputs, got {len(inputs)}")
    for x, (lo, hi) in zip(inputs, ranges):
        if isinstance(x, bool) or not isinstance(x, (int, np.integer)) or not lo <= x <= hi:
            raise InputDomainError(f"input {x!r} outside [{lo}, {hi}]")
    return tuple(int(x) for x in inputs)


def _check_expr(e: Expression, arity: int, what: str) -> None:
    if depth(e) > MAX_DEPTH:
        raise ExpressionError(f"{what} deeper than {MAX_DEPTH}")
    if max_input_index(e) >= arity:
        raise InputDomainError(f"{what} reads input {max_input_index(e)} but arity is {arity}")


@dataclass(frozen=True)
class FunctionalSpec:
    """The DP's reference function over a box of byte inputs."""

    input_ranges: tuple[tuple[int, int], ...]
    reference_expr: Expression
    declared_output_arity: int = 1

    def __post_init__(self):
        ranges = tuple((int(lo), int(hi)) for lo, hi in self.input_ranges)
        object.__setattr__(self, "input_ranges", ranges)
        if not 1 <= len(ranges) <= MAX_ARITY:
            raise InputDomainError(f"input arity must be 1 or 2, got {len(ranges)}")
        for lo, hi in ranges:
            if not 0 <= lo <= hi <= 255:
                raise InputDomainError(f"bad input range [{lo}, {hi}]")
        if self.declared_output_arity != 1:
            raise ValueError("reference specs declare exactly one output channel")
        _check_expr(self.reference_expr, len(ranges), "reference")

    @property
    def input_arity(self) -> int:
        return len(self.input_ranges)

    @property
    def domain_size(self) -> int:
        n = 1
        for lo, hi in self.input_ranges:
            n *= hi - lo + 1
        return n

    def check_inputs(self, inputs: Sequence[int]) -> tuple[int, ...]:
        return _check_inputs(inputs, self.input_ranges)

    def domain_columns(self) -> np.ndarray:
        """Domain points in lexicographic order, one row per input."""
        shape = [hi - lo + 1 for lo, hi in self.input_ranges]
        grid = np.indices(shape).reshape(len(shape), -1)
        lows = np.array([lo for lo, _ in self.input_ranges]).reshape(-1, 1)
        return grid + lows

    def to_dict(self) -> dict:
        return {
            "input_ranges": [list(r) for r in self.input_ranges],
            "reference_expr": encode_expr(self.reference_expr).hex(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FunctionalSpec":
        return cls(
            input_ranges=tuple(tuple(r) for r in data["input_ranges"]),
            reference_expr=decode_expr(bytes.fromhex(data["reference_expr"])),
        )


@dataclass(frozen=True)
class Program:
    """Analytics software: one declared output channel plus optional extras.

    ``watermark`` is opaque bytes carried in the encoding (and therefore the
    digest); the harness uses it to tag a program's identity.
    """

    arity: int
    declared_channel: Expression
    extra_channels: tuple[Expression, ...] = ()
    watermark: bytes = b""

    def __post_init__(self):
        object.__setattr__(self, "extra_channels", tuple(self.extra_channels))
        if not 1 <= self.arity <= MAX_ARITY:
            raise InputDomainError(f"program arity must be 1 or 2, got {self.arity}")
        if len(self.watermark) > 255 or len(self.extra_channels) > 255:
            raise ExpressionError("watermark and extra channel count are limited to 255")
        _check_expr(self.declared_channel, self.arity, "declared channel")
        for k, e in enumerate(self.extra_channels):
            _check_expr(e, self.arity, f"extra channel {k}")

    @property
    def channels(self) -> tuple[Expression, ...]:
        return (self.declared_channel, *self.extra_channels)

    @property
    def encoding(self) -> bytes:
        return encode(self)


def _encode_into(e: Expression, out: bytearray) -> None:
    match e:
        case Const(value=v):
            out += bytes((OP_CONST, v))
        case Input(index=i):
            out += bytes((OP_INPUT, i))
        case BinOp(op=op, left=l, right=r):
            out.append(op)
            _encode_into(l, out)
            _encode_into(r, out)
        case If(cond=c, then=t, orelse=f):
            out.append(OP_IF)
            _encode_into(c, out)
            _encode_into(t, out)
            _encode_into(f, out)
        case _:
            raise ExpressionError(f"not an expression: {e!r}")


def encode_expr(e: Expression) -> bytes:
    out = bytearray()
    _encode_into(e, out)
    return bytes(out)


def encode(p: Program) -> bytes:
    out = bytearray((PROGRAM_VERSION, p.arity, len(p.watermark)))
    out += p.watermark
    out.append(len(p.extra_channels))
    for e in p.channels:
        _encode_into(e, out)
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def byte(self) -> int:
        if self.pos >= len(self.data):
            raise DecodeError("truncated encoding")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated encoding")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def expr(self, level: int = 1) -> Expression:
        if level > MAX_DEPTH:
            raise DecodeError(f"expression deeper than {MAX_DEPTH}")
        op = self.byte()
        try:
            if op == OP_CONST:
                return Const(self.byte())
            if op == OP_INPUT:
                return Input(self.byte())
        except ExpressionError as exc:
            raise DecodeError(str(exc)) from exc
        if op in _BINOPS:
            return BinOp(op, self.expr(level + 1), self.expr(level + 1))
        if op == OP_IF:
            return If(self.expr(level + 1), self.expr(level + 1), self.expr(level + 1))
        raise DecodeError(f"unknown opcode {op:#04x} at offset {self.pos - 1}")

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError(f"{len(self.data) - self.pos} trailing bytes")


def decode_expr(data: bytes) -> Expression:
    r = _Reader(bytes(data))
    e = r.expr()
    r.finish()
    return e


def decode(data: bytes) -> Program:
    r = _Reader(bytes(data))
    version = r.byte()
    if version != PROGRAM_VERSION:
        raise DecodeError(f"unsupported program version {version}")
    arity = r.byte()
    watermark = r.take(r.byte())
    n_extra = r.byte()
    declared = r.expr()
    extras = tuple(r.expr() for _ in range(n_extra))
    r.finish()
    try:
        return Program(arity, declared, extras, watermark)
    except (ExpressionError, InputDomainError) as exc:
        raise DecodeError(str(exc)) from exc


def digest(p: Program) -> bytes:
    return hashlib.sha256(encode(p)).digest()


def evaluate(p: Program, inputs: Sequence[int], spec: FunctionalSpec | None = None) -> tuple[int, ...]:
    """Run every channel of ``p``; the declared value comes first."""
    if spec is not None:
        if spec.input_arity != p.arity:
            raise InputDomainError("program and spec disagree on arity")
        xs = spec.check_inputs(inputs)
    else:
        xs = _check_inputs(inputs, ((0, 255),) * p.arity)
    return tuple(eval_expr(e, xs) for e in p.channels)


def spec_evaluate(s: FunctionalSpec, inputs: Sequence[int]) -> int:
    return eval_expr(s.reference_expr, s.check_inputs(inputs))


Point = tuple[int, ...]


@dataclass(frozen=True)
class Pass:
    def to_dict(self) -> dict:
        return {"verdict": "Pass"}


@dataclass(frozen=True)
class Incorrect:
    witness: Point

    def to_dict(self) -> dict:
        return {"verdict": "Incorrect", "witness": list(self.witness)}


@dataclass(frozen=True)
class Leak:
    channel: int
    witness: tuple[Point, Point]

    def to_dict(self) -> dict:
        return {"verdict": "Leak", "channel": self.channel, "witness": [list(w) for w in self.witness]}


AuditVerdict = Union[Pass, Incorrect, Leak]


def _point(columns: np.ndarray, idx: int) -> Point:
    return tuple(int(v) for v in columns[:, idx])


def first_variation(values: np.ndarray) -> int | None:
    """Index of the first entry that differs from entry 0, if any."""
    hits = np.flatnonzero(values != values[0])
    return int(hits[0]) if hits.size else None


def audit(p: Program, s: FunctionalSpec) -> AuditVerdict:
    """Exhaustively compare ``p`` with ``s`` over the full input domain.

    Incorrectness is checked first, on the declared channel. Only a
    correct program is then checked for leaks: an extra channel leaks
    if it is not constant over the domain. Witnesses are the
    lexicographically first point (or pair of points).
    """
    if p.arity != s.input_arity:
        raise InputDomainError(f"program arity {p.arity} != spec arity {s.input_arity}")
    cols = s.domain_columns()
    declared = eval_grid(p.declared_channel, cols)
    reference = eval_grid(s.reference_expr, cols)
    bad = np.flatnonzero(declared != reference)
    if bad.size:
        return Incorrect(_point(cols, int(bad[0])))
    for k, e in enumerate(p.extra_channels):
        j = first_variation(eval_grid(e, cols))
        if j is not None:
            return Leak(k, (_point(cols, 0), _point(cols, j)))
    return Pass()


def channel_is_constant(e: Expression, s: FunctionalSpec) -> bool:
    return first_variation(eval_grid(e, s.domain_columns())) is None


# Demo: driver ranking, rank(s, h) = max(0, 100 - 2s - 3h) with saturating ops.
def ubi_rank_expr() -> Expression:
    s, h = Input(0), Input(1)
    return sub(sub(Const(100), add(s, s)), add(h, add(h, h)))


def ubi_rank_spec() -> FunctionalSpec:
    return FunctionalSpec(((0, 255), (0, 255)), ubi_rank_expr())


def ubi_rank_program(watermark: bytes = b"") -> Program:
    return Program(2, ubi_rank_expr(), (), watermark)
