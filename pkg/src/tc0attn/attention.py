"""Exact reference semantics for average-hard attention transformers.

Everything here is computed with exact rationals and the precision-``p``
truncation of :mod:`tc0attn.floatp`; the circuits are checked against it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from . import floatp as fp
from .floatp import ConfigError, FloatP

TWO_TRUNC = "two-trunc"
ONE_TRUNC = "one-trunc"


@dataclass(frozen=True)
class ScoreSpec:
    """Scoring function sigma(x, x').

    ``dot``: truncated exact inner product.  ``bilinear``: truncated exact
    ``(Q x) . (K x')`` for small integer matrices.  ``table``: a bit-level
    function from the two encodings (x bits first, LSB-first index) to a
    p-bit encoding.
    """

    kind: str
    Q: tuple[tuple[int, ...], ...] | None = None
    K: tuple[tuple[int, ...], ...] | None = None
    table: tuple[int, ...] | None = None
    k: int | None = None
    p: int | None = None

    def __post_init__(self):
        if self.kind not in ("dot", "bilinear", "table"):
            raise ConfigError(f"unknown score kind {self.kind!r}")
        if self.kind == "bilinear":
            if self.Q is None or self.K is None:
                raise ConfigError("bilinear score needs Q and K")
            object.__setattr__(self, "Q", tuple(tuple(int(v) for v in r) for r in self.Q))
            object.__setattr__(self, "K", tuple(tuple(int(v) for v in r) for r in self.K))
            for M in (self.Q, self.K):
                if any(len(r) != len(M) for r in M):
                    raise ConfigError("bilinear matrices must be square")
        if self.kind == "table":
            if self.table is None or self.k is None or self.p is None:
                raise ConfigError("table score needs table, k and p")
            object.__setattr__(self, "table", tuple(int(v) for v in self.table))
            if len(self.table) != 2 ** (2 * self.k * self.p):
                raise ConfigError(
                    f"table has {len(self.table)} rows, expected 2**{2 * self.k * self.p}")

    def check(self, k: int, p: int) -> None:
        if self.kind == "bilinear":
            for M in (self.Q, self.K):
                if len(M) != k:
                    raise ConfigError(f"bilinear matrix is {len(M)}x{len(M)}, model has k={k}")
                if any(fp.truncate(v, p).value != v for r in M for v in r):
                    raise ConfigError("matrix entry not representable at this precision")
        if self.kind == "table" and (self.k != k or self.p != p):
            raise ConfigError(f"table built for (k={self.k}, p={self.p}), used at (k={k}, p={p})")

    def to_json(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "bilinear":
            d.update(Q=[list(r) for r in self.Q], K=[list(r) for r in self.K])
        if self.kind == "table":
            d.update(k=self.k, p=self.p, table=list(self.table))
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ScoreSpec":
        kind = d.get("kind")
        if kind == "bilinear":
            return cls("bilinear", Q=d["Q"], K=d["K"])
        if kind == "table":
            return cls("table", table=d["table"], k=d["k"], p=d["p"])
        return cls(kind)

    @classmethod
    def table_from(cls, fn: Callable, k: int, p: int) -> "ScoreSpec":
        """Tabulate a reference scoring function ``fn(x_vec, y_vec) -> FloatP``."""
        kp = k * p
        rows = []
        codes = fp.canonical_codes(p)
        for u in range(2 ** (2 * kp)):
            parts = [(u >> (i * p)) & ((1 << p) - 1) for i in range(2 * k)]
            if all(c in codes for c in parts):
                xs = tuple(fp.decode_int(c, p) for c in parts)
                rows.append(fp.encode_int(fn(xs[:k], xs[k:])))
            else:
                rows.append(0)
        return cls("table", table=rows, k=k, p=p)

    def digest(self) -> str:
        raw = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(raw.encode()).hexdigest()[:16]


def score(spec: ScoreSpec, x: Sequence[FloatP], y: Sequence[FloatP], p: int) -> FloatP:
    if len(x) != len(y):
        raise ValueError("score of vectors with different dimension")
    if spec.kind == "dot":
        return fp.truncate(sum((a.value * b.value for a, b in zip(x, y)), Fraction(0)), p)
    if spec.kind == "bilinear":
        k = len(x)
        u = [sum((spec.Q[r][c] * x[c].value for c in range(k)), Fraction(0)) for r in range(k)]
        v = [sum((spec.K[r][c] * y[c].value for c in range(k)), Fraction(0)) for r in range(k)]
        return fp.truncate(sum((a * b for a, b in zip(u, v)), Fraction(0)), p)
    if spec.k != len(x) or spec.p != p:
        raise ValueError("table width mismatch")
    u = 0
    for i, f in enumerate(list(x) + list(y)):
        u |= fp.encode_int(f) << (i * p)
    return fp.decode_int(spec.table[u], p)


def xi(s: Sequence[FloatP]) -> list[Fraction]:
    """Uniform distribution over the argmax set of the scores."""
    _, best = fp.max_seq(s)
    w = Fraction(1, len(best))
    return [w if i + 1 in best else Fraction(0) for i in range(len(s))]


def head_ref(X: Sequence[Sequence[FloatP]], spec: ScoreSpec, p: int,
             mode: str = TWO_TRUNC) -> list[tuple[FloatP, ...]]:
    if not X:
        raise ValueError("empty input sequence")
    out = []
    for xi_vec in X:
        scores = [score(spec, xi_vec, xj, p) for xj in X]
        _, best = fp.max_seq(scores)
        chosen = [X[j - 1] for j in sorted(best)]
        if mode == TWO_TRUNC:
            out.append(fp.div_trunc(fp.sum_trunc(chosen, p), len(best), p))
        elif mode == ONE_TRUNC:
            k = len(xi_vec)
            out.append(tuple(
                fp.truncate(sum((v[c].value for v in chosen), Fraction(0)) / len(best), p)
                for c in range(k)))
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return out


# ---------------------------------------------------------------------------
# layers and models


@dataclass(frozen=True)
class Comparator:
    """``left`` (an index into a vector) compared with ``right`` (an index) or ``const``."""

    left: int
    op: str = ">"
    right: int | None = None
    const: Fraction | None = None

    def __post_init__(self):
        if self.op not in (">", ">="):
            raise ConfigError(f"comparator op must be '>' or '>=', got {self.op!r}")
        if (self.right is None) == (self.const is None):
            raise ConfigError("comparator needs exactly one of right / const")
        if self.const is not None:
            object.__setattr__(self, "const", Fraction(self.const))

    def decide(self, vec: Sequence[FloatP]) -> int:
        a = vec[self.left].value
        b = vec[self.right].value if self.right is not None else self.const
        return int(a > b if self.op == ">" else a >= b)

    def to_json(self):
        d = {"left": self.left, "op": self.op}
        if self.right is not None:
            d["right"] = self.right
        else:
            d["const"] = str(self.const)
        return d

    @classmethod
    def from_json(cls, d):
        return cls(left=d["left"], op=d.get("op", ">"), right=d.get("right"),
                   const=Fraction(d["const"]) if "const" in d else None)


@dataclass(frozen=True)
class FFNSpec:
    """Position-wise function on the concatenated head outputs.

    ``table``: explicit truth table over ``h*k*p`` input bits giving ``k*p`` output
    bits (integers, LSB-first).  ``compare``: ``then_vec`` if the comparator holds
    on the concatenated vector, else ``else_vec``.
    """

    kind: str
    table: tuple[int, ...] | None = None
    cmp: Comparator | None = None
    then_vec: tuple[Fraction, ...] | None = None
    else_vec: tuple[Fraction, ...] | None = None

    def __post_init__(self):
        if self.kind == "table":
            if self.table is None:
                raise ConfigError("table FFN needs a table")
            object.__setattr__(self, "table", tuple(int(v) for v in self.table))
        elif self.kind == "compare":
            if self.cmp is None or self.then_vec is None or self.else_vec is None:
                raise ConfigError("compare FFN needs cmp, then and else vectors")
            object.__setattr__(self, "then_vec", tuple(Fraction(v) for v in self.then_vec))
            object.__setattr__(self, "else_vec", tuple(Fraction(v) for v in self.else_vec))
        else:
            raise ConfigError(f"unknown FFN kind {self.kind!r}")

    def apply(self, concat: Sequence[FloatP], k: int, p: int) -> tuple[FloatP, ...]:
        if self.kind == "table":
            u = 0
            for i, f in enumerate(concat):
                u |= fp.encode_int(f) << (i * p)
            if u >= len(self.table):
                raise ConfigError("FFN table width mismatch")
            word = self.table[u]
            return tuple(fp.decode_int((word >> (c * p)) & ((1 << p) - 1), p) for c in range(k))
        vec = self.then_vec if self.cmp.decide(concat) else self.else_vec
        return tuple(fp.from_value(v, p) for v in vec)

    def check(self, h: int, k: int, p: int) -> None:
        if self.kind == "table":
            if len(self.table) != 2 ** (h * k * p):
                raise ConfigError(
                    f"FFN table has {len(self.table)} rows, expected 2**{h * k * p}")
            if any(v >> (k * p) for v in self.table):
                raise ConfigError("FFN table entry wider than k*p bits")
        else:
            idx = [self.cmp.left] + ([self.cmp.right] if self.cmp.right is not None else [])
            if any(not 0 <= i < h * k for i in idx):
                raise ConfigError("comparator index outside the concatenated head output")
            for vec in (self.then_vec, self.else_vec):
                if len(vec) != k:
                    raise ConfigError("FFN branch vector has wrong dimension")
                for v in vec:
                    _exact(v, p)
            if self.cmp.const is not None:
                _exact(self.cmp.const, p)

    def to_json(self):
        if self.kind == "table":
            return {"kind": "table", "table": list(self.table)}
        return {"kind": "compare", "cmp": self.cmp.to_json(),
                "then": [str(v) for v in self.then_vec], "else": [str(v) for v in self.else_vec]}

    @classmethod
    def from_json(cls, d):
        if d["kind"] == "table":
            return cls("table", table=d["table"])
        return cls("compare", cmp=Comparator.from_json(d["cmp"]),
                   then_vec=[Fraction(v) for v in d["then"]],
                   else_vec=[Fraction(v) for v in d["else"]])

    @classmethod
    def table_from(cls, fn: Callable, h: int, k: int, p: int) -> "FFNSpec":
        """Tabulate ``fn(concat_vec) -> k-vector of FloatP`` over canonical inputs."""
        codes = fp.canonical_codes(p)
        rows = []
        for u in range(2 ** (h * k * p)):
            parts = [(u >> (i * p)) & ((1 << p) - 1) for i in range(h * k)]
            if all(c in codes for c in parts):
                out = fn(tuple(fp.decode_int(c, p) for c in parts))
                rows.append(sum(fp.encode_int(f) << (c * p) for c, f in enumerate(out)))
            else:
                rows.append(0)
        return cls("table", table=rows)


def _exact(v, p) -> FloatP:
    try:
        return fp.from_value(v, p)
    except ValueError:
        raise ConfigError(f"constant {v} is not representable at p={p}") from None


@dataclass(frozen=True)
class LayerSpec:
    heads: tuple[ScoreSpec, ...]
    ffn: FFNSpec

    def __post_init__(self):
        object.__setattr__(self, "heads", tuple(self.heads))
        if not self.heads:
            raise ConfigError("a layer needs at least one head")

    def check(self, k: int, p: int) -> None:
        for h in self.heads:
            h.check(k, p)
        self.ffn.check(len(self.heads), k, p)

    def to_json(self):
        return {"heads": [h.to_json() for h in self.heads], "ffn": self.ffn.to_json()}

    @classmethod
    def from_json(cls, d):
        return cls(tuple(ScoreSpec.from_json(h) for h in d["heads"]), FFNSpec.from_json(d["ffn"]))


@dataclass(frozen=True)
class ModelSpec:
    """A toy transformer: embedding, layers, and a readout at position 1.

    Embedding kinds: ``binary`` gives ``(i, j, 0, ...)`` and ``onehot`` gives
    ``(i, 2**j, 0, ...)`` for the i-th symbol (1-based) at position j;
    ``table`` gives a fixed vector per symbol.  The readout is a comparator
    evaluated on the final vector at position 1.
    """

    alphabet: tuple[str, ...]
    k: int
    embedding: str
    layers: tuple[LayerSpec, ...]
    readout: Comparator
    vectors: tuple[tuple[Fraction, ...], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(set(self.alphabet)) != len(self.alphabet) or not self.alphabet:
            raise ConfigError("alphabet must be non-empty with distinct symbols")
        if self.embedding not in ("binary", "onehot", "table"):
            raise ConfigError(f"unknown embedding {self.embedding!r}")
        if self.embedding in ("binary", "onehot") and self.k < 2:
            raise ConfigError("positional embeddings need k >= 2")
        if self.embedding == "table":
            if self.vectors is None or len(self.vectors) != len(self.alphabet):
                raise ConfigError("table embedding needs one vector per symbol")
            object.__setattr__(self, "vectors",
                               tuple(tuple(Fraction(v) for v in vec) for vec in self.vectors))
            if any(len(vec) != self.k for vec in self.vectors):
                raise ConfigError("embedding vector has wrong dimension")
        if self.readout.right is not None and not 0 <= self.readout.right < self.k:
            raise ConfigError("readout index out of range")
        if not 0 <= self.readout.left < self.k:
            raise ConfigError("readout index out of range")

    def check(self, n: int, p: int) -> None:
        q = fp.q_of(p)
        if self.embedding == "onehot" and n > q:
            raise ConfigError(f"one-hot positions need q >= n (q={q}, n={n})")
        if self.embedding == "table":
            for vec in self.vectors:
                for v in vec:
                    _exact(v, p)
        for layer in self.layers:
            layer.check(self.k, p)
        if self.readout.const is not None:
            _exact(self.readout.const, p)

    @property
    def code_bits(self) -> int:
        return max(0, (len(self.alphabet) - 1).bit_length())

    def symbol_vector(self, sym_index: int, j: int, p: int) -> tuple[FloatP, ...]:
        """Embedding of the ``sym_index``-th symbol (0-based) at position ``j`` (1-based)."""
        if self.embedding == "table":
            return tuple(fp.truncate(v, p) for v in self.vectors[sym_index])
        pos = j if self.embedding == "binary" else 2 ** j
        vals = [sym_index + 1, pos] + [0] * (self.k - 2)
        return tuple(fp.truncate(v, p) for v in vals)

    def to_json(self):
        d = {"alphabet": list(self.alphabet), "k": self.k, "embedding": self.embedding,
             "layers": [l.to_json() for l in self.layers], "readout": self.readout.to_json()}
        if self.vectors is not None:
            d["vectors"] = [[str(v) for v in vec] for vec in self.vectors]
        return d

    @classmethod
    def from_json(cls, d):
        vectors = d.get("vectors")
        return cls(alphabet=tuple(d["alphabet"]), k=int(d["k"]), embedding=d["embedding"],
                   layers=tuple(LayerSpec.from_json(l) for l in d["layers"]),
                   readout=Comparator.from_json(d["readout"]),
                   vectors=None if vectors is None else [[Fraction(v) for v in vec] for vec in vectors])


def layer_ref(X, layer: LayerSpec, p: int, mode: str = TWO_TRUNC):
    k = len(X[0])
    outs = [head_ref(X, spec, p, mode) for spec in layer.heads]
    return [layer.ffn.apply(sum((o[i] for o in outs), ()), k, p) for i in range(len(X))]


def encode_input(word: Sequence[str], model: ModelSpec, p: int, n: int | None = None):
    n = len(word) if n is None else n
    if len(word) != n:
        raise ConfigError(f"word has length {len(word)}, expected {n}")
    if n < 1:
        raise ConfigError("empty word")
    model.check(n, p)
    index = {s: i for i, s in enumerate(model.alphabet)}
    try:
        return [model.symbol_vector(index[a], j + 1, p) for j, a in enumerate(word)]
    except KeyError as exc:
        raise ConfigError(f"symbol {exc.args[0]!r} not in the alphabet") from None


def transformer_ref(word: Sequence[str], model: ModelSpec, p: int, mode: str = TWO_TRUNC) -> int:
    X = encode_input(word, model, p)
    for layer in model.layers:
        X = layer_ref(X, layer, p, mode)
    return model.readout.decide(X[0])


def truncation_divergence(p: int, n_max: int = 3):
    """First tie set (k=1) where the two head truncation modes disagree.

    Searches multisets of canonical values of size 2..n_max, which covers the
    all-tie case of any head.  Returns ``(values, two_trunc, one_trunc)`` or None.
    """
    from itertools import combinations_with_replacement

    vals = fp.canonical_values(p)
    for size in range(2, n_max + 1):
        for combo in combinations_with_replacement(vals, size):
            two = fp.div_trunc(fp.sum_trunc([(v,) for v in combo], p), size, p)[0]
            one = fp.truncate(sum((v.value for v in combo), Fraction(0)) / size, p)
            if two != one:
                return combo, two, one
    return None
