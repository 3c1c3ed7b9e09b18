"""Verification, growth measurement and the end-to-end majority demo."""

from __future__ import annotations

import csv
import itertools
import json
import random
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import attention as A
from . import floatp as fp
from . import head_compiler as H
from . import synth
from .circuit import Circuit, evaluate_batch
from .floatp import ConfigError, Params

EXHAUSTIVE_CAP = 2 ** 20
MAX_REPORTED = 10
CHUNK = 4096

GROWTH_HEADER = ["n", "p", "size", "depth", "inputs", "score", "max", "eq", "sel", "sum",
                 "count", "div"]


# ---------------------------------------------------------------------------
# input domains


@dataclass(frozen=True)
class Slot:
    """One input field of a circuit: a float, or an integer in [lo, hi]."""

    width: int
    values: tuple  # FloatP for floats, int otherwise
    is_float: bool

    def bits(self, v) -> list[int]:
        return fp.encode(v) if self.is_float else fp.int_to_bits(v, self.width)


def float_slot(p: int) -> Slot:
    return Slot(p, fp.canonical_values(p), True)


def int_slot(lo: int, hi: int, width: int) -> Slot:
    return Slot(width, tuple(range(lo, hi + 1)), False)


@dataclass
class Target:
    name: str
    circuit: Circuit
    slots: list[Slot]
    oracle: Callable[[Sequence], list[int]]


def _flat_bits(vec) -> list[int]:
    return [b for f in vec for b in fp.encode(f)]


def _group(vals, n, k):
    return [tuple(vals[j * k:(j + 1) * k]) for j in range(n)]


@dataclass
class VerifyConfig:
    target: str = "head"
    n: int = 2
    k: int = 1
    p: int = 4
    score: A.ScoreSpec = field(default_factory=lambda: A.ScoreSpec("dot"))
    mode: str = "random"
    trials: int = 1000
    seed: int = 0
    literal_levels: bool = False
    nmax: int | None = None
    count_bits: int | None = None
    layer: A.LayerSpec | None = None
    model: A.ModelSpec | None = None

    def params(self) -> Params:
        return Params(self.n, self.k, self.p, count_bits=self.count_bits)

    def to_json(self) -> dict:
        d = {"target": self.target, "n": self.n, "k": self.k, "p": self.p,
             "score": self.score.to_json(), "mode": self.mode, "trials": self.trials,
             "seed": self.seed, "literal_levels": self.literal_levels, "nmax": self.nmax,
             "count_bits": self.count_bits}
        if self.layer is not None:
            d["layer"] = self.layer.to_json()
        if self.model is not None:
            d["model"] = self.model.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "VerifyConfig":
        d = dict(d)
        d["score"] = A.ScoreSpec.from_json(d["score"])
        if "layer" in d:
            d["layer"] = A.LayerSpec.from_json(d["layer"])
        if "model" in d:
            d["model"] = A.ModelSpec.from_json(d["model"])
        return cls(**d)


def build_target(cfg: VerifyConfig) -> Target:
    """Circuit, input slots and bit-level oracle for one verification target."""
    n, k, p = cfg.n, cfg.k, cfg.p
    fs = float_slot(p)
    name = cfg.target.removeprefix("op:")
    if name == "head":
        P = cfg.params()
        c = H.compile_head(P, cfg.score, cfg.literal_levels)
        return Target(name, c, [fs] * (n * k),
                      lambda v: _flat_bits(x for pos in A.head_ref(_group(v, n, k), cfg.score, p)
                                           for x in pos))
    if name == "layer":
        if cfg.layer is None:
            raise ConfigError("layer target needs a layer spec")
        c = H.compile_layer(cfg.params(), cfg.layer, cfg.literal_levels)
        return Target(name, c, [fs] * (n * k),
                      lambda v: _flat_bits(x for pos in A.layer_ref(_group(v, n, k), cfg.layer, p)
                                           for x in pos))
    if name == "transformer":
        m = cfg.model
        if m is None:
            raise ConfigError("transformer target needs a model")
        c = H.compile_transformer(Params(n, m.k, p, count_bits=cfg.count_bits), m,
                                  cfg.literal_levels)
        sym = int_slot(0, len(m.alphabet) - 1, m.code_bits)
        return Target(name, c, [sym] * n,
                      lambda v: [A.transformer_ref([m.alphabet[i] for i in v], m, p)])
    if name == "sum":
        c = synth.float_sum_circuit(n, k, p, cfg.count_bits or max(fp.DEFAULT_COUNT_BITS,
                                                               n.bit_length()))
        return Target(name, c, [fs] * (n * k), lambda v: _flat_bits(fp.sum_trunc(_group(v, n, k), p)))
    if name == "div":
        nmax = cfg.nmax or n
        c = synth.float_div_circuit(p, nmax)
        return Target(name, c, [fs, int_slot(1, nmax, nmax.bit_length())],
                      lambda v: _flat_bits(fp.div_trunc([v[0]], v[1], p)))
    if name == "eq":
        return Target(name, synth.float_eq_circuit(p), [fs, fs], lambda v: [fp.eq(v[0], v[1])])
    if name == "sel":
        return Target(name, synth.sel_circuit(k, p), [fs] * k + [int_slot(0, 1, 1)],
                      lambda v: _flat_bits(fp.sel(v[:k], v[k])))
    if name == "max":
        def oracle(v):
            m, idx = fp.max_seq(v)
            return fp.encode(m) + [int(j + 1 in idx) for j in range(n)]
        return Target(name, synth.float_max_circuit(n, p), [fs] * n, oracle)
    if name == "score":
        c = synth.score_circuit(cfg.score, k, p)
        return Target(name, c, [fs] * (2 * k),
                      lambda v: fp.encode(A.score(cfg.score, v[:k], v[k:], p)))
    raise ConfigError(f"unknown verification target {cfg.target!r}")


OP_NAMES = ("sum", "div", "eq", "sel", "max", "score")


# ---------------------------------------------------------------------------
# verification


@dataclass
class Mismatch:
    inputs: str
    circuit: str
    oracle: str


@dataclass
class VerifyReport:
    config: dict
    cases: int
    mismatches: list[Mismatch]
    total_mismatches: int
    elapsed: float
    size: int
    depth: int

    @property
    def verdict(self) -> str:
        return "pass" if not self.mismatches else "fail"

    def to_json(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict
        return d

    @classmethod
    def from_json(cls, d: dict) -> "VerifyReport":
        d = {key: v for key, v in d.items() if key != "verdict"}
        d["mismatches"] = [Mismatch(**m) for m in d["mismatches"]]
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)


def _bitstr(bits) -> str:
    return "".join(str(int(b)) for b in bits)


def _cases(slots: Sequence[Slot], mode: str, trials: int, seed: int):
    if mode == "exhaustive":
        total = 1
        for s in slots:
            total *= len(s.values)
        if total > EXHAUSTIVE_CAP:
            raise ConfigError(f"exhaustive mode would need {total} cases (cap {EXHAUSTIVE_CAP})")
        return total, itertools.product(*(s.values for s in slots))
    if mode != "random":
        raise ConfigError(f"unknown mode {mode!r}")
    rng = random.Random(seed)

    def gen():
        for _ in range(trials):
            yield tuple(rng.choice(s.values) for s in slots)

    return trials, gen()


def verify_equivalence(cfg: VerifyConfig, circuit: Circuit | None = None) -> VerifyReport:
    """Compare circuit and oracle bit-for-bit on enumerated or sampled inputs.

    ``circuit`` overrides the compiled circuit (e.g. one read back from a file).
    """
    t0 = time.perf_counter()
    tgt = build_target(cfg)
    c = tgt.circuit if circuit is None else circuit
    total, cases = _cases(tgt.slots, cfg.mode, cfg.trials, cfg.seed)
    shown, count = [], 0
    while True:
        chunk = list(itertools.islice(cases, CHUNK))
        if not chunk:
            break
        rows = np.array([[b for s, v in zip(tgt.slots, case) for b in s.bits(v)] for case in chunk],
                        dtype=np.uint8).reshape(len(chunk), c.n_inputs)
        got = evaluate_batch(c, rows)
        for row, out, case in zip(rows, got, chunk):
            want = tgt.oracle(case)
            if out.tolist() != want:
                count += 1
                if len(shown) < MAX_REPORTED:
                    shown.append(Mismatch(_bitstr(row), _bitstr(out), _bitstr(want)))
    return VerifyReport(cfg.to_json(), total, shown, count, time.perf_counter() - t0,
                        c.size, c.depth)


def fuzz_decode(p: int, trials: int = 10000, seed: int = 0) -> dict:
    """Feed raw bit patterns to the decoder: each must round-trip or be rejected."""
    rng = random.Random(seed)
    codes = fp.canonical_codes(p)
    accepted = bad = 0
    seen = set()
    for _ in range(trials):
        x = rng.randrange(2 ** p)
        try:
            f = fp.decode_int(x, p)
        except fp.NonCanonicalError:
            bad += x in codes
            continue
        accepted += 1
        seen.add(x)
        bad += fp.encode_int(f) != x or x not in codes
    return {"p": p, "trials": trials, "accepted": accepted, "bad": bad,
            "accepted_codes": sorted(seen)}


def default_op_suite(trials: int = 200, seed: int = 0) -> list[VerifyConfig]:
    """Exhaustive p=4 sweep plus a randomized sweep at p=6 and p=8."""
    cfgs = []
    for n in (1, 2, 3):
        cfgs += [VerifyConfig("op:sum", n=n, k=1, p=4, mode="exhaustive"),
                 VerifyConfig("op:max", n=n, k=1, p=4, mode="exhaustive")]
    cfgs += [VerifyConfig("op:div", p=4, nmax=m, mode="exhaustive") for m in (1, 2, 3, 4)]
    cfgs += [VerifyConfig("op:eq", p=4, mode="exhaustive"),
             VerifyConfig("op:sel", k=1, p=4, mode="exhaustive"),
             VerifyConfig("op:score", k=1, p=4, mode="exhaustive")]
    for p in (6, 8):
        for k in (1, 2):
            cfgs += [VerifyConfig("op:sum", n=5, k=k, p=p, trials=trials, seed=seed),
                     VerifyConfig("op:sel", k=k, p=p, trials=trials, seed=seed),
                     VerifyConfig("op:score", k=k, p=p, trials=trials, seed=seed)]
        cfgs += [VerifyConfig("op:max", n=5, p=p, trials=trials, seed=seed),
                 VerifyConfig("op:div", p=p, nmax=16, trials=trials, seed=seed),
                 VerifyConfig("op:eq", p=p, trials=trials, seed=seed)]
    return cfgs


# ---------------------------------------------------------------------------
# growth


@dataclass
class GrowthRow:
    n: int
    p: int
    size: int
    depth: int
    gates_by_stage: dict

    def csv_row(self) -> list:
        return [self.n, self.p, self.size, self.depth] + \
            [self.gates_by_stage.get(s, 0) for s in GROWTH_HEADER[4:]]


@dataclass
class GrowthResult:
    rows: list[GrowthRow]
    coeffs: list[Fraction]  # ascending powers of n
    fit_exact: bool
    depth_constant: bool
    complete: bool = True

    def predict(self, n: int) -> Fraction:
        return polyval(self.coeffs, n)


class BudgetExceeded(ConfigError):
    def __init__(self, msg, result: GrowthResult):
        super().__init__(msg)
        self.result = result


def interpolate(xs: Sequence[int], ys: Sequence[int]) -> list[Fraction]:
    """Exact coefficients (ascending) of the polynomial through the points."""
    m = len(xs)
    coeffs = [Fraction(0)] * m
    for i in range(m):
        basis = [Fraction(1)]
        denom = Fraction(1)
        for j in range(m):
            if j == i:
                continue
            basis = [Fraction(0)] + basis
            for t in range(len(basis) - 1):
                basis[t] -= xs[j] * basis[t + 1]
            denom *= xs[i] - xs[j]
        for t in range(m):
            coeffs[t] += ys[i] * basis[t] / denom
    return coeffs


def polyval(coeffs: Sequence[Fraction], x: int) -> Fraction:
    acc = Fraction(0)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def growth_stats(ns: Sequence[int], k: int = 1, p: int | None = None,
                 schedule: tuple[float, float] | None = None,
                 spec: A.ScoreSpec | None = None, degree: int = 3,
                 max_gates: int | None = None) -> GrowthResult:
    """Compile a head per n and fit an exact polynomial to the first degree+1 sizes."""
    ns = list(ns)
    if len(ns) < degree + 2:
        raise ConfigError(f"need at least {degree + 2} values of n, got {len(ns)}")
    if (p is None) == (schedule is None):
        raise ConfigError("give exactly one of a fixed p or a (c0, c1) schedule")
    spec = A.ScoreSpec("dot") if spec is None else spec
    rows = []

    def result(complete):
        pts = rows[:degree + 1]
        coeffs = interpolate([r.n for r in pts], [r.size for r in pts]) if len(pts) == degree + 1 else []
        exact = bool(coeffs) and all(polyval(coeffs, r.n) == r.size for r in rows)
        return GrowthResult(rows, coeffs, exact, len({r.depth for r in rows}) <= 1, complete)

    for n in ns:
        P = Params(n, k, p) if schedule is None else Params.from_schedule(n, k, *schedule)
        if max_gates is not None:
            plan = H.HeadPlan(P, spec)
            if plan.size > max_gates:
                raise BudgetExceeded(f"n={n} needs {plan.size} gates (budget {max_gates})",
                                     result(False))
        c = H.compile_head(P, spec)
        stages = dict(c.meta["stage_sizes"])
        stages["inputs"] = c.n_inputs
        rows.append(GrowthRow(n, P.p, c.size, c.depth, stages))
    return result(True)


def write_growth_csv(rows: Sequence[GrowthRow], path_or_file) -> None:
    own = isinstance(path_or_file, str)
    f = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(GROWTH_HEADER)
        for r in rows:
            w.writerow(r.csv_row())
    finally:
        if own:
            f.close()


# ---------------------------------------------------------------------------
# majority demo


def majority_model() -> A.ModelSpec:
    """One uniform-attention layer deciding #a > #b.

    Zero score matrices make every position tie, so attention is the plain
    average (count_a/n, count_b/n); the FFN keeps (1, 0) iff the first average
    is larger, and the readout accepts iff that component is positive.
    """
    zero = ((0, 0), (0, 0))
    head = A.ScoreSpec("bilinear", Q=zero, K=zero)
    ffn = A.FFNSpec("compare", cmp=A.Comparator(0, ">", right=1),
                    then_vec=(1, 0), else_vec=(0, 0))
    return A.ModelSpec(alphabet=("a", "b"), k=2, embedding="table",
                       layers=(A.LayerSpec((head,), ffn),),
                       readout=A.Comparator(0, ">", const=0),
                       vectors=((1, 0), (0, 1)))


@dataclass
class DemoRow:
    n: int
    size: int
    depth: int
    words: int
    mismatches: int
    agree_with_majority: int


@dataclass
class DemoReport:
    p: int
    rows: list[DemoRow]
    elapsed: float

    @property
    def verdict(self) -> str:
        return "pass" if all(r.mismatches == 0 for r in self.rows) else "fail"

    @property
    def agreement(self) -> float:
        return sum(r.agree_with_majority for r in self.rows) / sum(r.words for r in self.rows)


def demo_majority(n_max: int = 10, p: int = 10, model: A.ModelSpec | None = None) -> DemoReport:
    """Circuit vs reference on every word of every length up to ``n_max``."""
    model = majority_model() if model is None else model
    t0 = time.perf_counter()
    cb = n_max.bit_length()
    rows = []
    for n in range(1, n_max + 1):
        c = H.compile_transformer(Params(n, model.k, p, count_bits=cb), model)
        words = list(itertools.product(model.alphabet, repeat=n))
        inp = np.array([H.word_bits(w, model) for w in words], dtype=np.uint8).reshape(len(words), -1)
        got = evaluate_batch(c, inp)[:, 0]
        bad = agree = 0
        for w, g in zip(words, got):
            ref = A.transformer_ref(w, model, p)
            bad += int(g) != ref
            agree += ref == int(w.count("a") > w.count("b"))
        rows.append(DemoRow(n, c.size, c.depth, len(words), bad, agree))
    return DemoReport(p, rows, time.perf_counter() - t0)
