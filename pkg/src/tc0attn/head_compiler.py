"""Compile attention heads, layers and whole models into threshold circuits.

A head is laid out position by position.  Inputs come first, with bit ``t`` of
component ``c`` of position ``j`` at id ``(j*k + c)*p + t``.  Then every
position ``i`` gets one block of the same size holding, in order: n score
gadgets, the max gadget, (optionally) n explicit equality tests, n select
gadgets, the vector sum, the argmax count and k dividers.

Every gadget's gate structure depends only on port widths, so its size and
the offsets of its outputs can be measured once.  :class:`HeadPlan` turns that
into closed-form ids, which is what lets :func:`emit_streaming` print the
netlist without ever holding it.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, TextIO

from . import floatp as fp
from . import synth
from .attention import FFNSpec, LayerSpec, ModelSpec, ScoreSpec
from .circuit import (Builder, Circuit, CountingBuilder, StreamBuilder, header_line,
                      meta_block, outputs_line)
from .floatp import ConfigError, Params

PLAN_VERSION = 1
AUDIT_C = 32


# ---------------------------------------------------------------------------
# per-position stages; each takes one flat port list


def _score_stage(b, ports, spec: ScoreSpec, k: int, p: int):
    kp = k * p
    x = [ports[c * p:(c + 1) * p] for c in range(k)]
    y = [ports[kp + c * p:kp + (c + 1) * p] for c in range(k)]
    return synth.score_into(b, spec, x, y, p)


def _max_stage(b, ports, n: int, p: int):
    maxbits, ind = synth.float_max_into(b, [ports[j * p:(j + 1) * p] for j in range(n)], p)
    return maxbits + ind


def _eq_stage(b, ports, p: int):
    return [synth.float_eq_into(b, ports[:p], ports[p:2 * p])]


def _sel_stage(b, ports, kp: int):
    return synth.sel_into(b, ports[:kp], ports[kp])


def _sum_stage(b, ports, n: int, k: int, p: int, count_bits: int):
    vecs = [[ports[(j * k + c) * p:(j * k + c + 1) * p] for c in range(k)] for j in range(n)]
    return [w for comp in synth.float_sum_into(b, vecs, p, count_bits) for w in comp]


def _count_stage(b, ports, count_bits: int):
    return synth.count_into(b, ports[:], count_bits)


def _div_stage(b, ports, p: int, nmax: int):
    return synth.float_div_into(b, ports[:p], ports[p:], p, nmax)


@dataclass(frozen=True)
class Template:
    """Size of one gadget instance and where its outputs sit.

    ``outs[t] >= 0`` is an offset from the instance's first gate; a negative
    entry ``-(1 + r)`` means output ``t`` is wired straight to port ``r``.
    """

    size: int
    outs: tuple[int, ...]
    depth: int
    n_ports: int


def measure(stage: Callable, n_ports: int) -> Template:
    cb = CountingBuilder(track_depth=True)
    outs = stage(cb, [-(1 + r) for r in range(n_ports)])
    return Template(cb.next_id, tuple(outs), cb.max_depth, n_ports)


class Ports(Sequence):
    """Read-only port view computed on demand from an index function."""

    __slots__ = ("_fn", "_len")

    def __init__(self, fn: Callable[[int], int], length: int):
        self._fn = fn
        self._len = length

    def __len__(self):
        return self._len

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return [self._fn(r) for r in range(*idx.indices(self._len))]
        if idx < 0:
            idx += self._len
        if not 0 <= idx < self._len:
            raise IndexError(idx)
        return self._fn(idx)


STAGES = ("score", "max", "eq", "sel", "sum", "count", "div")


class HeadPlan:
    """Closed-form gate numbering for one head circuit."""

    def __init__(self, params: Params, spec: ScoreSpec, literal_levels: bool = False):
        spec.check(params.k, params.p)
        self.params, self.spec, self.literal = params, spec, literal_levels
        n, k, p, H = params.n, params.k, params.p, params.count_bits
        kp = k * p
        self.stages = {
            "score": partial(_score_stage, spec=spec, k=k, p=p),
            "max": partial(_max_stage, n=n, p=p),
            "eq": partial(_eq_stage, p=p),
            "sel": partial(_sel_stage, kp=kp),
            "sum": partial(_sum_stage, n=n, k=k, p=p, count_bits=H),
            "count": partial(_count_stage, count_bits=H),
            "div": partial(_div_stage, p=p, nmax=params.nmax),
        }
        ports = {"score": 2 * kp, "max": n * p, "eq": 2 * p, "sel": kp + 1,
                 "sum": n * kp, "count": n, "div": p + H}
        self.copies = {"score": n, "max": 1, "eq": n if literal_levels else 0, "sel": n,
                       "sum": 1, "count": 1, "div": k}
        self.tpl = {s: measure(self.stages[s], ports[s]) for s in STAGES if self.copies[s]}
        self.offset = {}
        off = 0
        for s in STAGES:
            self.offset[s] = off
            if self.copies[s]:
                off += self.copies[s] * self.tpl[s].size
        self.block = off
        self.n_inputs = n * kp
        self.size = self.n_inputs + n * self.block

    # id arithmetic -------------------------------------------------------

    def input_id(self, j: int, r: int) -> int:
        return j * self.params.k * self.params.p + r

    def start(self, stage: str, i: int, inst: int) -> int:
        return self.n_inputs + i * self.block + self.offset[stage] + inst * self.tpl[stage].size

    def port(self, stage: str, i: int, inst: int, r: int) -> int:
        k, p = self.params.k, self.params.p
        kp = k * p
        if stage == "score":
            return self.input_id(i, r) if r < kp else self.input_id(inst, r - kp)
        if stage == "max":
            return self.out("score", i, r // p, r % p)
        if stage == "eq":
            return self.out("score", i, inst, r) if r < p else self.out("max", i, 0, r - p)
        if stage == "sel":
            return self.input_id(inst, r) if r < kp else self.indicator(i, inst)
        if stage == "sum":
            return self.out("sel", i, r // kp, r % kp)
        if stage == "count":
            return self.indicator(i, r)
        if stage == "div":
            return self.out("sum", i, 0, inst * p + r) if r < p else self.out("count", i, 0, r - p)
        raise KeyError(stage)

    def out(self, stage: str, i: int, inst: int, t: int) -> int:
        o = self.tpl[stage].outs[t]
        if o >= 0:
            return self.start(stage, i, inst) + o
        return self.port(stage, i, inst, -1 - o)

    def indicator(self, i: int, j: int) -> int:
        if self.literal:
            return self.out("eq", i, j, 0)
        return self.out("max", i, 0, self.params.p + j)

    def ports(self, stage: str, i: int, inst: int) -> Ports:
        return Ports(lambda r: self.port(stage, i, inst, r), self.tpl[stage].n_ports)

    def output_ids(self):
        k, p = self.params.k, self.params.p
        for i in range(self.params.n):
            for c in range(k):
                for t in range(p):
                    yield self.out("div", i, c, t)

    def meta(self) -> dict:
        P = self.params
        return {"generator": "compile_head", "n": P.n, "k": P.k, "p": P.p,
                "count_bits": P.count_bits, "score_kind": self.spec.kind,
                "score": self.spec.digest(), "plan_version": PLAN_VERSION,
                "literal_levels": self.literal,
                "stage_depths": {s: t.depth for s, t in self.tpl.items()},
                "stage_sizes": {s: P.n * self.copies[s] * t.size for s, t in self.tpl.items()}}

    @property
    def stage_sizes(self) -> dict[str, int]:
        return self.meta()["stage_sizes"]


# ---------------------------------------------------------------------------
# in-memory compilation


def head_into(b: Builder, X: Sequence[Sequence[int]], plan: HeadPlan) -> list[list[int]]:
    """Append one head to ``b``; ``X[j]`` holds the k*p wires of position j."""
    n, k, p = plan.params.n, plan.params.k, plan.params.p
    st = plan.stages
    out = []
    for i in range(n):
        scores = [st["score"](b, list(X[i]) + list(X[j])) for j in range(n)]
        mx = st["max"](b, [w for s in scores for w in s])
        if plan.literal:
            ind = [st["eq"](b, scores[j] + mx[:p])[0] for j in range(n)]
        else:
            ind = mx[p:]
        sels = [st["sel"](b, list(X[j]) + [ind[j]]) for j in range(n)]
        sm = st["sum"](b, [w for s in sels for w in s])
        cnt = st["count"](b, ind)
        out.append([w for c in range(k) for w in st["div"](b, sm[c * p:(c + 1) * p] + cnt)])
    return out


def compile_head(params: Params, spec: ScoreSpec, literal_levels: bool = False) -> Circuit:
    plan = HeadPlan(params, spec, literal_levels)
    b = Builder()
    kp = params.k * params.p
    X = [b.inputs(kp) for _ in range(params.n)]
    out = head_into(b, X, plan)
    if b.next_id != plan.size:
        raise AssertionError(f"plan predicts {plan.size} gates, builder made {b.next_id}")
    return b.build([w for pos in out for w in pos], plan.meta())


# ---------------------------------------------------------------------------
# streaming emission


@dataclass
class AuditStats:
    peak_live_counters: int = 0
    peak_counter_bits: int = 0
    gates_emitted: int = 0
    bytes_emitted: int = 0
    counter_widths: dict = field(default_factory=dict)

    def bound_holds(self, n: int, C: int = AUDIT_C) -> bool:
        return self.peak_counter_bits <= C * max(1, math.ceil(math.log2(n)))


class _Counters:
    """Tracks the loop counters alive at any moment (the only retained state)."""

    def __init__(self, stats: AuditStats, sb: StreamBuilder):
        self.stats, self.sb = stats, sb
        self.live: list[int] = []

    def loop(self, name: str, stop: int):
        width = max(1, stop.bit_length())
        self.stats.counter_widths[name] = width
        self.live.append(width)
        try:
            for v in range(stop):
                self._note()
                yield v
        finally:
            self.live.pop()

    def _note(self):
        s = self.stats
        # the next gate id is one more counter
        bits = sum(self.live) + max(1, self.sb.next_id.bit_length())
        s.peak_live_counters = max(s.peak_live_counters, len(self.live) + 1)
        s.peak_counter_bits = max(s.peak_counter_bits, bits)


def emit_streaming(params: Params, spec: ScoreSpec, sink: TextIO,
                   literal_levels: bool = False) -> AuditStats:
    """Write ``serialize(compile_head(...))`` to ``sink`` without building the circuit."""
    plan = HeadPlan(params, spec, literal_levels)
    stats = AuditStats()
    sb = StreamBuilder(sink)
    ctr = _Counters(stats, sb)
    n, k = params.n, params.k
    sb.write(header_line("tc0", plan.n_inputs))
    for _ in ctr.loop("input", plan.n_inputs):
        sb.input()

    def run(stage, i, inst):
        if sb.next_id != plan.start(stage, i, inst):
            raise AssertionError(f"{stage}[{i},{inst}] starts at g{sb.next_id}, "
                                 f"plan says g{plan.start(stage, i, inst)}")
        plan.stages[stage](sb, plan.ports(stage, i, inst))

    for i in ctr.loop("i", n):
        for j in ctr.loop("j", n):
            run("score", i, j)
        run("max", i, 0)
        if literal_levels:
            for j in ctr.loop("j", n):
                run("eq", i, j)
        for j in ctr.loop("j", n):
            run("sel", i, j)
        run("sum", i, 0)
        run("count", i, 0)
        for c in ctr.loop("c", k):
            run("div", i, c)
    sb.write(outputs_line(plan.output_ids()))
    sb.write(meta_block(plan.meta()))
    stats.gates_emitted = sb.next_id
    stats.bytes_emitted = sb.bytes_emitted
    return stats


# ---------------------------------------------------------------------------
# layers and whole models


def const_into(b: Builder, f: fp.FloatP) -> list[int]:
    c0, c1 = b.c0(), b.c1()
    return [c1 if bit else c0 for bit in fp.encode(f)]


def ffn_into(b: Builder, concat: Sequence[int], ffn: FFNSpec, h: int, k: int, p: int) -> list[int]:
    if ffn.kind == "table":
        width = h * k * p
        table = ffn.table
        f = synth.BitFn(width, k * p, table.__getitem__, name="ffn_table")
        return synth.lut_into(b, list(concat), f)
    comps = [concat[c * p:(c + 1) * p] for c in range(h * k)]
    cond = compare_into(b, comps, ffn.cmp, p)
    ncond = b.not_(cond)
    c0, c1 = b.c0(), b.c1()
    out = []
    for tv, ev in zip(ffn.then_vec, ffn.else_vec):
        tb, eb = fp.encode(fp.from_value(tv, p)), fp.encode(fp.from_value(ev, p))
        for x, y in zip(tb, eb):
            out.append(c1 if x and y else c0 if not (x or y) else cond if x else ncond)
    return out


def compare_into(b: Builder, comps: Sequence[Sequence[int]], cmp, p: int) -> int:
    left = comps[cmp.left]
    right = comps[cmp.right] if cmp.right is not None else const_into(b, fp.from_value(cmp.const, p))
    return synth.float_ge_into(b, left, right, p, strict=cmp.op == ">")


def layer_into(b: Builder, X, layer: LayerSpec, params: Params,
               literal_levels: bool = False) -> list[list[int]]:
    k, p = params.k, params.p
    h = len(layer.heads)
    outs = [head_into(b, X, HeadPlan(params, spec, literal_levels)) for spec in layer.heads]
    return [ffn_into(b, [w for o in outs for w in o[i]], layer.ffn, h, k, p)
            for i in range(params.n)]


def _check_layer(params: Params, layer: LayerSpec):
    layer.check(params.k, params.p)
    if layer.ffn.kind == "table" and len(layer.heads) * params.k * params.p > synth.LUT_CAP:
        raise ConfigError(f"FFN table over {len(layer.heads) * params.k * params.p} bits "
                          f"exceeds the LUT cap of {synth.LUT_CAP}")


def compile_layer(params: Params, layer: LayerSpec, literal_levels: bool = False) -> Circuit:
    _check_layer(params, layer)
    b = Builder()
    X = [b.inputs(params.k * params.p) for _ in range(params.n)]
    out = layer_into(b, X, layer, params, literal_levels)
    return b.build([w for pos in out for w in pos],
                   {"generator": "compile_layer", "n": params.n, "k": params.k, "p": params.p,
                    "count_bits": params.count_bits, "heads": len(layer.heads),
                    "layer": layer.to_json()})


def embed_into(b: Builder, code: Sequence[int], model: ModelSpec, j: int, p: int) -> list[int]:
    """Embedding of position ``j`` (1-based) from its symbol code bits.

    Code values beyond the alphabet map to the all-zero encoding.
    """
    nsym = len(model.alphabet)
    w = model.code_bits
    out = []
    for c in range(model.k):
        positional = model.embedding != "table" and c >= 1
        if positional:
            out += const_into(b, model.symbol_vector(0, j, p)[c])
            continue
        enc = [fp.encode_int(model.symbol_vector(s, j, p)[c]) for s in range(nsym)]
        f = synth.BitFn(w, p, lambda u, enc=enc: enc[u] if u < nsym else 0, name=f"embed{c}")
        out += synth.lut_into(b, list(code), f)
    return out


def compile_transformer(params: Params, model: ModelSpec, literal_levels: bool = False) -> Circuit:
    """Circuit reading ``n * code_bits`` symbol-code bits and returning the readout bit."""
    if params.k != model.k:
        raise ConfigError(f"params.k={params.k} but the model has k={model.k}")
    model.check(params.n, params.p)
    for layer in model.layers:
        _check_layer(params, layer)
    b = Builder()
    w = model.code_bits
    codes = [b.inputs(w) for _ in range(params.n)]
    X = [embed_into(b, codes[j], model, j + 1, params.p) for j in range(params.n)]
    for layer in model.layers:
        X = layer_into(b, X, layer, params, literal_levels)
    p = params.p
    first = [X[0][c * p:(c + 1) * p] for c in range(model.k)]
    out = compare_into(b, first, model.readout, p)
    return b.build([out], {"generator": "compile_transformer", "n": params.n, "k": params.k,
                           "p": p, "count_bits": params.count_bits, "model": model.to_json()})


def word_bits(word: Sequence[str], model: ModelSpec) -> list[int]:
    index = {s: i for i, s in enumerate(model.alphabet)}
    return [bit for a in word for bit in fp.int_to_bits(index[a], model.code_bits)]
