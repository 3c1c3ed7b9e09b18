"""Threshold-circuit IR: gate DAG, evaluation, metrics and netlist text format.

Gate ids are dense and topological: every gate only reads gates with a
smaller id, and the ``IN`` gates are exactly ids ``0 .. n_inputs-1``.
Majority is strict: ``MAJ(b_1..b_m) = 1`` iff more than ``m/2`` inputs are 1.
"""

from __future__ import annotations

import json
import re
from array import array
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

IN, C0, C1, NOT, AND, OR, MAJ = range(7)
OP_NAMES = ("IN", "C0", "C1", "NOT", "AND", "OR", "MAJ")
OP_CODES = {name: code for code, name in enumerate(OP_NAMES)}

FORMAT_VERSION = "v1"
BASES = ("ac0", "tc0")


class CircuitError(ValueError):
    pass


class NetlistParseError(CircuitError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class Gate:
    id: int
    op: int
    inputs: tuple[int, ...]

    @property
    def name(self) -> str:
        return OP_NAMES[self.op]


def _check_arity(op: int, nin: int, gid: int) -> None:
    if op in (IN, C0, C1):
        if nin:
            raise CircuitError(f"g{gid}: {OP_NAMES[op]} takes no inputs")
    elif op == NOT:
        if nin != 1:
            raise CircuitError(f"g{gid}: NOT takes exactly one input, got {nin}")
    elif op in (AND, OR, MAJ):
        if nin < 1:
            raise CircuitError(f"g{gid}: {OP_NAMES[op]} needs at least one input")
    else:
        raise CircuitError(f"g{gid}: unknown op {op}")


class Circuit:
    """Immutable gate DAG in compressed (CSR) form."""

    def __init__(self, ops, offsets, flat, outputs: Sequence[int], meta=None, depths=None):
        self.ops = np.asarray(ops, dtype=np.int8)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.flat = np.asarray(flat, dtype=np.int64)
        self.outputs = tuple(int(o) for o in outputs)
        self.meta = dict(meta or {})
        self._validate()
        self.n_inputs = int(np.count_nonzero(self.ops == IN))
        self._depths = None if depths is None else np.asarray(depths, dtype=np.int64)
        self._schedule = None

    # -- construction -----------------------------------------------------
    @classmethod
    def from_gates(cls, gates: Iterable, outputs: Sequence[int], meta=None) -> "Circuit":
        """Build from a stream of ``Gate`` (or ``(id, op, inputs)``) in id order."""
        ops, offsets, flat = [], [0], []
        for expect, g in enumerate(gates):
            gid, op, ins = (g.id, g.op, g.inputs) if isinstance(g, Gate) else g
            if isinstance(op, str):
                op = OP_CODES[op]
            if gid != expect:
                raise CircuitError(f"gate id gap: expected g{expect}, got g{gid}")
            _check_arity(op, len(ins), gid)
            for x in ins:
                if not 0 <= x < gid:
                    raise CircuitError(f"g{gid}: reference to g{x} is not to an earlier gate")
            ops.append(op)
            flat.extend(ins)
            offsets.append(len(flat))
        return cls(ops, offsets, flat, outputs, meta)

    def _validate(self) -> None:
        g = len(self.ops)
        if len(self.offsets) != g + 1 or self.offsets[0] != 0 or self.offsets[-1] != len(self.flat):
            raise CircuitError("malformed offset table")
        if not self.outputs:
            raise CircuitError("circuit has no outputs")
        if (self.ops < 0).any() or (self.ops > MAJ).any():
            raise CircuitError("unknown op code")
        fan = np.diff(self.offsets)
        nullary = np.isin(self.ops, (IN, C0, C1))
        if (fan[nullary] != 0).any():
            raise CircuitError(f"g{int(np.flatnonzero(nullary & (fan != 0))[0])}: input/constant with inputs")
        if (fan[self.ops == NOT] != 1).any():
            raise CircuitError(f"g{int(np.flatnonzero((self.ops == NOT) & (fan != 1))[0])}: NOT arity")
        if (fan[~nullary] < 1).any():
            raise CircuitError(f"g{int(np.flatnonzero(~nullary & (fan < 1))[0])}: empty fan-in")
        owner = np.repeat(np.arange(g, dtype=np.int64), fan)
        bad = (self.flat >= owner) | (self.flat < 0)
        if bad.any():
            e = int(np.flatnonzero(bad)[0])
            raise CircuitError(f"g{int(owner[e])}: reference to g{int(self.flat[e])} is not to an earlier gate")
        n_in = int(np.count_nonzero(self.ops == IN))
        if n_in and (self.ops[:n_in] != IN).any() or (self.ops[n_in:] == IN).any():
            raise CircuitError("IN gates must be exactly the first ids")
        for o in self.outputs:
            if not 0 <= o < g:
                raise CircuitError(f"output g{o} does not exist")

    # -- access -----------------------------------------------------------
    def __len__(self) -> int:
        return len(self.ops)

    def gate(self, i: int) -> Gate:
        a, b = self.offsets[i], self.offsets[i + 1]
        return Gate(i, int(self.ops[i]), tuple(int(x) for x in self.flat[a:b]))

    def gates(self):
        for i in range(len(self.ops)):
            yield self.gate(i)

    @property
    def size(self) -> int:
        return len(self.ops)

    @property
    def depths(self) -> np.ndarray:
        if self._depths is None:
            self._depths = forward_depths(self)
        return self._depths

    @property
    def depth(self) -> int:
        return int(self.depths.max()) if len(self.ops) else 0

    def has_maj(self) -> bool:
        return bool((self.ops == MAJ).any())

    def op_counts(self) -> dict[str, int]:
        counts = np.bincount(self.ops, minlength=len(OP_NAMES))
        return {OP_NAMES[i]: int(c) for i, c in enumerate(counts) if c}

    def __eq__(self, other):
        return (isinstance(other, Circuit) and np.array_equal(self.ops, other.ops)
                and np.array_equal(self.offsets, other.offsets)
                and np.array_equal(self.flat, other.flat)
                and self.outputs == other.outputs and self.meta == other.meta)


def forward_depths(c: Circuit) -> np.ndarray:
    depth = [0] * len(c.ops)
    off, flat = c.offsets.tolist(), c.flat.tolist()
    for g in range(len(depth)):
        a, b = off[g], off[g + 1]
        if a != b:
            depth[g] = 1 + max(depth[x] for x in flat[a:b])
    return np.array(depth, dtype=np.int64)


def reverse_depth(c: Circuit) -> int:
    """Longest path computed from the sinks backwards (independent of forward_depths)."""
    height = [0] * len(c.ops)
    off, flat = c.offsets.tolist(), c.flat.tolist()
    for g in range(len(height) - 1, -1, -1):
        h = height[g] + 1
        for x in flat[off[g]:off[g + 1]]:
            if height[x] < h:
                height[x] = h
    return max(height) if height else 0


def size_depth(c: Circuit) -> tuple[int, int]:
    return c.size, c.depth


# ---------------------------------------------------------------------------
# builders


class Builder:
    """Append-only circuit builder; ids are handed out densely from 0."""

    def __init__(self):
        self._ops = array("b")
        self._offsets = array("q", [0])
        self._flat = array("q")
        self._depth = array("q")
        self.n_inputs = 0

    @property
    def next_id(self) -> int:
        return len(self._ops)

    def gate(self, op: int, ins=()) -> int:
        gid = len(self._ops)
        if op == IN:
            if self.n_inputs != gid:
                raise CircuitError("inputs must be added before any other gate")
            self.n_inputs += 1
        ins = tuple(ins)
        _check_arity(op, len(ins), gid)
        self._ops.append(op)
        self._flat.extend(ins)
        self._offsets.append(len(self._flat))
        d = self._depth
        self._depth.append(1 + max(d[x] for x in ins) if ins else 0)
        return gid

    def input(self) -> int:
        return self.gate(IN)

    def inputs(self, count: int) -> list[int]:
        return [self.gate(IN) for _ in range(count)]

    def c0(self) -> int:
        return self.gate(C0)

    def c1(self) -> int:
        return self.gate(C1)

    def not_(self, x: int) -> int:
        return self.gate(NOT, (x,))

    def and_(self, xs) -> int:
        return self.gate(AND, xs)

    def or_(self, xs) -> int:
        return self.gate(OR, xs)

    def maj(self, xs) -> int:
        return self.gate(MAJ, xs)

    def depth_of(self, x: int) -> int:
        return self._depth[x]

    def build(self, outputs: Sequence[int], meta=None) -> Circuit:
        return Circuit(np.frombuffer(self._ops, dtype=np.int8),
                       np.frombuffer(self._offsets, dtype=np.int64),
                       np.frombuffer(self._flat, dtype=np.int64),
                       outputs, meta, depths=np.frombuffer(self._depth, dtype=np.int64))


class StreamBuilder(Builder):
    """Writes each gate as a netlist line the moment it is created.

    Only the next free id is retained; the netlist is never materialised.
    """

    def __init__(self, sink: TextIO):
        self._sink = sink
        self._next = 0
        self.n_inputs = 0
        self.bytes_emitted = 0

    @property
    def next_id(self) -> int:
        return self._next

    def gate(self, op: int, ins=()) -> int:
        gid = self._next
        if op == IN:
            self.n_inputs += 1
        ins = tuple(ins)
        _check_arity(op, len(ins), gid)
        line = format_gate(gid, op, ins)
        self._sink.write(line)
        self.bytes_emitted += len(line)
        self._next = gid + 1
        return gid

    def write(self, text: str) -> None:
        self._sink.write(text)
        self.bytes_emitted += len(text)

    def depth_of(self, x: int) -> int:
        raise NotImplementedError("streaming builder keeps no per-gate state")

    def build(self, outputs, meta=None):
        raise NotImplementedError("streaming builder cannot materialise a circuit")


class CountingBuilder(Builder):
    """Counts gates without storing them; used to size gadget templates.

    Port ids handed to gadgets may be negative placeholders; depths are tracked
    relative to depth 0 at every port.
    """

    def __init__(self, track_depth: bool = True):
        self._next = 0
        self.n_inputs = 0
        self.max_depth = 0
        self._track = track_depth
        self._depth: dict[int, int] = {}

    @property
    def next_id(self) -> int:
        return self._next

    def gate(self, op: int, ins=()) -> int:
        gid = self._next
        _check_arity(op, len(ins), gid)
        if self._track:
            d = self._depth
            dep = 1 + max(d.get(x, 0) for x in ins) if ins else 0
            if dep:
                d[gid] = dep
                if dep > self.max_depth:
                    self.max_depth = dep
        self._next = gid + 1
        return gid

    def depth_of(self, x: int) -> int:
        return self._depth.get(x, 0)

    def build(self, outputs, meta=None):
        raise NotImplementedError


# ---------------------------------------------------------------------------
# evaluation


def evaluate(c: Circuit, bits: Sequence[int]) -> list[int]:
    """Reference evaluator: one pass over gates in id order."""
    if len(bits) != c.n_inputs:
        raise CircuitError(f"expected {c.n_inputs} input bits, got {len(bits)}")
    ops, off, flat = c.ops.tolist(), c.offsets.tolist(), c.flat.tolist()
    val = [0] * len(ops)
    for g, op in enumerate(ops):
        ins = flat[off[g]:off[g + 1]]
        if op == IN:
            v = bits[g] & 1
        elif op == C0:
            v = 0
        elif op == C1:
            v = 1
        elif op == NOT:
            v = 1 - val[ins[0]]
        elif op == AND:
            v = int(all(val[x] for x in ins))
        elif op == OR:
            v = int(any(val[x] for x in ins))
        else:
            v = int(2 * sum(val[x] for x in ins) > len(ins))
        val[g] = v
    return [val[o] for o in c.outputs]


_BIT = np.arange(64, dtype=np.uint64)


def _schedule(c: Circuit):
    """Group gates by (depth, op) with gathered input index arrays."""
    if c._schedule is not None:
        return c._schedule
    depths = c.depths
    fan = np.diff(c.offsets)
    order = np.lexsort((c.ops, depths))
    groups = []
    keys = depths[order] * 8 + c.ops[order]
    cuts = np.flatnonzero(np.diff(keys)) + 1
    for chunk in np.split(order, cuts):
        if not len(chunk):
            continue
        op = int(c.ops[chunk[0]])
        if op == IN:
            continue
        f = fan[chunk]
        starts = c.offsets[chunk]
        if f.sum():
            idx = np.repeat(starts - np.concatenate(([0], np.cumsum(f)[:-1])), f) + np.arange(f.sum())
            src = c.flat[idx]
            seg = np.concatenate(([0], np.cumsum(f)[:-1]))
        else:
            src = seg = None
        groups.append((op, chunk, src, seg, f))
    c._schedule = groups
    return groups


def evaluate_batch(c: Circuit, inputs) -> np.ndarray:
    """Evaluate on many input vectors at once (rows of a 0/1 matrix).

    Lanes are packed 64 to a machine word and gates are processed level by
    level; the result is identical to :func:`evaluate` row by row.
    """
    inputs = np.asarray(inputs, dtype=np.uint8)
    if inputs.ndim != 2 or inputs.shape[1] != c.n_inputs:
        raise CircuitError(f"expected a (T, {c.n_inputs}) input matrix, got {inputs.shape}")
    groups = _schedule(c)
    out_idx = np.array(c.outputs, dtype=np.int64)
    T = inputs.shape[0]
    result = np.zeros((T, len(out_idx)), dtype=np.uint8)
    for lo in range(0, T, 64):
        block = inputs[lo:lo + 64]
        lanes = block.shape[0]
        vals = np.zeros(len(c.ops), dtype=np.uint64)
        if c.n_inputs:
            vals[:c.n_inputs] = (block.astype(np.uint64) << _BIT[:lanes, None]).sum(axis=0, dtype=np.uint64)
        for op, gids, src, seg, fan in groups:
            if op == C0:
                vals[gids] = 0
            elif op == C1:
                vals[gids] = ~np.uint64(0)
            elif op == NOT:
                vals[gids] = ~vals[src]
            elif op == AND:
                vals[gids] = np.bitwise_and.reduceat(vals[src], seg)
            elif op == OR:
                vals[gids] = np.bitwise_or.reduceat(vals[src], seg)
            else:
                bits = ((vals[src][:, None] >> _BIT) & np.uint64(1)).astype(np.int32)
                cnt = np.add.reduceat(bits, seg, axis=0)
                on = (2 * cnt > fan[:, None]).astype(np.uint64)
                vals[gids] = (on << _BIT).sum(axis=1, dtype=np.uint64)
        ov = vals[out_idx]
        result[lo:lo + lanes] = ((ov[None, :] >> _BIT[:lanes, None]) & np.uint64(1)).astype(np.uint8)
    return result


# ---------------------------------------------------------------------------
# netlist text


_META_KEY = re.compile(r"^[A-Za-z0-9_.\-]+$")


def format_gate(gid: int, op: int, ins: Sequence[int]) -> str:
    return f"g{gid} = {OP_NAMES[op]}({','.join(f'g{x}' for x in ins)})\n"


def header_line(basis: str, n_inputs: int) -> str:
    return f"tc0-netlist {FORMAT_VERSION} basis={basis} inputs={n_inputs}\n"


def outputs_line(outputs: Iterable[int]) -> str:
    return "outputs: " + " ".join(f"g{o}" for o in outputs) + "\n"


def meta_block(meta: dict) -> str:
    lines = ["meta:\n"]
    for key in sorted(meta):
        if not _META_KEY.match(key):
            raise CircuitError(f"bad meta key {key!r}")
        lines.append(f"  {key}: {json.dumps(meta[key], sort_keys=True, separators=(',', ':'))}\n")
    lines.append("end\n")
    return "".join(lines)


def serialize(c: Circuit, basis: str = "tc0") -> str:
    if basis not in BASES:
        raise CircuitError(f"unknown basis {basis!r}")
    if basis == "ac0" and c.has_maj():
        raise CircuitError("MAJ gate in a circuit declared basis=ac0")
    parts = [header_line(basis, c.n_inputs)]
    ops, off, flat = c.ops.tolist(), c.offsets.tolist(), c.flat.tolist()
    for g, op in enumerate(ops):
        parts.append(format_gate(g, op, flat[off[g]:off[g + 1]]))
    parts.append(outputs_line(c.outputs))
    parts.append(meta_block(c.meta))
    return "".join(parts)


_HEADER = re.compile(r"^tc0-netlist (v\d+) basis=(\w+) inputs=(\d+)$")
_GATE = re.compile(r"^g(\d+) = ([A-Z0-9]+)\(([^)]*)\)$")


def deserialize(text: str) -> Circuit:
    circuit, _ = parse_netlist(text)
    return circuit


def parse_netlist(text: str) -> tuple[Circuit, str]:
    """Parse netlist text; returns the circuit and its declared basis."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise NetlistParseError(1, "empty document")
    m = _HEADER.match(lines[0])
    if not m:
        raise NetlistParseError(1, "bad header")
    version, basis, n_in = m.group(1), m.group(2), int(m.group(3))
    if version != FORMAT_VERSION:
        raise NetlistParseError(1, f"unsupported version {version}")
    if basis not in BASES:
        raise NetlistParseError(1, f"unknown basis {basis}")
    ops, offsets, flat = [], [0], []
    i = 1
    while i < len(lines) and lines[i].startswith("g"):
        gm = _GATE.match(lines[i])
        if not gm:
            raise NetlistParseError(i + 1, f"cannot parse gate line {lines[i]!r}")
        gid, name, args = int(gm.group(1)), gm.group(2), gm.group(3)
        if gid != len(ops):
            raise NetlistParseError(i + 1, f"expected g{len(ops)}, got g{gid}")
        if name not in OP_CODES:
            raise NetlistParseError(i + 1, f"unknown op {name}")
        op = OP_CODES[name]
        if op == MAJ and basis == "ac0":
            raise NetlistParseError(i + 1, "MAJ gate under basis=ac0")
        ins = []
        if args:
            for a in args.split(","):
                if not re.fullmatch(r"g\d+", a):
                    raise NetlistParseError(i + 1, f"bad argument {a!r}")
                x = int(a[1:])
                if x >= gid:
                    raise NetlistParseError(i + 1, f"forward reference g{x}")
                ins.append(x)
        try:
            _check_arity(op, len(ins), gid)
        except CircuitError as exc:
            raise NetlistParseError(i + 1, str(exc)) from None
        ops.append(op)
        flat.extend(ins)
        offsets.append(len(flat))
        i += 1
    if i >= len(lines) or not lines[i].startswith("outputs:"):
        raise NetlistParseError(i + 1, "expected outputs line")
    outs = []
    for tok in lines[i][len("outputs:"):].split():
        if not re.fullmatch(r"g\d+", tok):
            raise NetlistParseError(i + 1, f"bad output {tok!r}")
        outs.append(int(tok[1:]))
    i += 1
    if i >= len(lines) or lines[i] != "meta:":
        raise NetlistParseError(i + 1, "expected meta block")
    i += 1
    meta = {}
    while i < len(lines) and lines[i] != "end":
        mm = re.fullmatch(r"  ([A-Za-z0-9_.\-]+): (.*)", lines[i])
        if not mm:
            raise NetlistParseError(i + 1, f"bad meta line {lines[i]!r}")
        try:
            meta[mm.group(1)] = json.loads(mm.group(2))
        except json.JSONDecodeError as exc:
            raise NetlistParseError(i + 1, f"bad meta value: {exc}") from None
        i += 1
    if i >= len(lines):
        raise NetlistParseError(i, "missing end of meta block")
    if i != len(lines) - 1:
        raise NetlistParseError(i + 2, "trailing content after end")
    try:
        c = Circuit(ops, offsets, flat, outs, meta)
    except CircuitError as exc:
        raise NetlistParseError(i + 1, str(exc)) from None
    if c.n_inputs != n_in:
        raise NetlistParseError(1, f"header says {n_in} inputs, found {c.n_inputs}")
    return c, basis
