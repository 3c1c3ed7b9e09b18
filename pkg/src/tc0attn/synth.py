"""Gate-level generators for the building blocks of an attention head.

Every generator comes in two forms: ``*_into(b, ...)`` writes gates into a
builder and returns output wire ids (so gadgets compose), and a standalone
function returning a :class:`Circuit` with fresh inputs.  Bit vectors are
LSB-first throughout.  Gadgets never share gates with each other, and their
gate structure depends only on port widths, never on the ids they are wired to.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Iterable, Sequence

from . import floatp as fp
from .attention import ScoreSpec
from .circuit import Builder, Circuit
from .floatp import ConfigError

LUT_CAP = 16

Wires = Sequence[int]


# ---------------------------------------------------------------------------
# two-level lookup tables


@dataclass(frozen=True, eq=False)
class BitFn:
    """A total function on ``in_width`` bits, given as ``fn(int) -> int``.

    ``support`` optionally lists the only inputs on which the function can be
    nonzero; the compiler then enumerates just those.
    """

    in_width: int
    out_width: int
    fn: Callable[[int], int]
    support: tuple[int, ...] | None = None
    name: str = "bitfn"

    @cached_property
    def minterms(self) -> tuple[tuple[int, ...], ...]:
        domain = self.support if self.support is not None else range(2 ** self.in_width)
        per_bit = [[] for _ in range(self.out_width)]
        for u in domain:
            v = self.fn(u)
            if v >> self.out_width:
                raise ValueError(f"{self.name}({u}) = {v} exceeds {self.out_width} bits")
            t = 0
            while v:
                if v & 1:
                    per_bit[t].append(u)
                v >>= 1
                t += 1
        return tuple(tuple(sorted(m)) for m in per_bit)

    def __call__(self, u: int) -> int:
        return self.fn(u)


def lut_into(b: Builder, ins: Wires, f: BitFn, cap: int = LUT_CAP) -> list[int]:
    """Depth-3 DNF: a NOT layer, one AND per input that sets some output bit, one OR per output."""
    w = f.in_width
    if len(ins) != w:
        raise ValueError(f"{f.name}: expected {w} inputs, got {len(ins)}")
    if w > cap:
        raise ConfigError(f"{f.name}: LUT input width {w} exceeds the cap of {cap}")
    terms = f.minterms
    full = 2 ** w
    constant = [len(t) == 0 or len(t) == full for t in terms]
    nots = [b.not_(x) for x in ins] if not all(constant) else []
    rows: dict[int, int] = {}
    outs = []
    for t, is_const in zip(terms, constant):
        if is_const:
            outs.append(b.c1() if t else b.c0())
            continue
        for u in t:
            if u not in rows:
                rows[u] = b.and_([ins[i] if (u >> i) & 1 else nots[i] for i in range(w)])
        outs.append(b.or_([rows[u] for u in t]))
    return outs


def lut_compile(f: BitFn, cap: int = LUT_CAP) -> Circuit:
    b = Builder()
    ins = b.inputs(f.in_width)
    outs = lut_into(b, ins, f, cap)
    return b.build(outs, {"generator": "lut_compile", "name": f.name,
                          "in_width": f.in_width, "out_width": f.out_width})


# ---------------------------------------------------------------------------
# counting


def threshold_into(b: Builder, ins: Wires, kk: int, c0: int | None = None,
                   c1: int | None = None) -> int:
    """1 iff at least ``kk`` inputs are 1, via one strict MAJ with constant padding."""
    n = len(ins)
    if kk <= 0:
        return b.c1() if c1 is None else c1
    if kk > n:
        return b.c0() if c0 is None else c0
    ones = max(0, n - 2 * kk + 1)
    zeros = max(0, 2 * kk - 1 - n)
    pad = []
    if ones:
        c1 = b.c1() if c1 is None else c1
        pad = [c1] * ones
    if zeros:
        c0 = b.c0() if c0 is None else c0
        pad = [c0] * zeros
    return b.maj(list(ins) + pad)


def threshold_at_least(n: int, kk: int) -> Circuit:
    if not 0 <= kk <= n + 1:
        raise ValueError(f"threshold {kk} outside [0, {n + 1}]")
    b = Builder()
    ins = b.inputs(n)
    out = threshold_into(b, ins, kk)
    return b.build([out], {"generator": "threshold_at_least", "n": n, "k": kk})


def count_into(b: Builder, ins: Wires, out_width: int | None = None) -> list[int]:
    """Binary popcount: bit t = OR over d with bit t set of [count >= d and not count >= d+1]."""
    r = len(ins)
    width = r.bit_length() if out_width is None else out_width
    if r.bit_length() > width:
        raise ValueError(f"{width} bits cannot hold a count of {r}")
    c0, c1 = b.c0(), b.c1()
    th = [threshold_into(b, ins, d, c0, c1) for d in range(1, r + 1)] + [c0]
    exact = [b.and_([th[d], b.not_(th[d + 1])]) for d in range(r)]
    return [b.or_([c0] + [exact[d - 1] for d in range(1, r + 1) if (d >> t) & 1])
            for t in range(width)]


def exact_count_bits(n: int, out_width: int | None = None) -> Circuit:
    b = Builder()
    ins = b.inputs(n)
    outs = count_into(b, ins, out_width)
    return b.build(outs, {"generator": "exact_count_bits", "n": n})


# ---------------------------------------------------------------------------
# constant-depth binary arithmetic (AND/OR/NOT only)


def _xor(b: Builder, x: int, y: int, nx: int | None = None, ny: int | None = None) -> int:
    nx = b.not_(x) if nx is None else nx
    ny = b.not_(y) if ny is None else ny
    return b.or_([b.and_([x, ny]), b.and_([nx, y])])


def _xnor(b: Builder, x: int, y: int, nx: int, ny: int) -> int:
    return b.or_([b.and_([x, y]), b.and_([nx, ny])])


def _lookahead(b: Builder, gen: Wires, prop: Wires) -> list[int]:
    """carry[i] = OR_{j<i} (gen[j] AND prop[j+1..i-1]) for i = 1..len."""
    return [b.or_([b.and_([gen[j]] + list(prop[j + 1:i])) for j in range(i)])
            for i in range(1, len(gen) + 1)]


def add_into(b: Builder, x: Wires, y: Wires) -> list[int]:
    """Unsigned sum of two equal-width words; ``len(x) + 1`` output bits."""
    if len(x) != len(y):
        raise ValueError("add_into needs equal widths")
    nx = [b.not_(v) for v in x]
    ny = [b.not_(v) for v in y]
    gen = [b.and_([a, c]) for a, c in zip(x, y)]
    prop = [b.or_([a, c]) for a, c in zip(x, y)]
    half = [_xor(b, a, c, na, nc) for a, c, na, nc in zip(x, y, nx, ny)]
    carry = _lookahead(b, gen, prop)
    out = [half[0]] + [_xor(b, half[i], carry[i - 1]) for i in range(1, len(x))]
    return out + [carry[-1]]


def sub_into(b: Builder, x: Wires, y: Wires) -> tuple[list[int], int]:
    """``x - y`` modulo 2**width and the borrow-out flag (1 iff x < y)."""
    if len(x) != len(y):
        raise ValueError("sub_into needs equal widths")
    nx = [b.not_(v) for v in x]
    ny = [b.not_(v) for v in y]
    gen = [b.and_([na, c]) for na, c in zip(nx, y)]
    prop = [b.or_([na, c]) for na, c in zip(nx, y)]
    half = [_xor(b, a, c, na, nc) for a, c, na, nc in zip(x, y, nx, ny)]
    borrow = _lookahead(b, gen, prop)
    out = [half[0]] + [_xor(b, half[i], borrow[i - 1]) for i in range(1, len(x))]
    return out, borrow[-1]


def cmp_into(b: Builder, x: Wires, y: Wires) -> tuple[int, int, int]:
    """One-hot (lt, eq, gt) for unsigned words."""
    if len(x) != len(y):
        raise ValueError("cmp_into needs equal widths")
    w = len(x)
    nx = [b.not_(v) for v in x]
    ny = [b.not_(v) for v in y]
    same = [_xnor(b, x[i], y[i], nx[i], ny[i]) for i in range(w)]
    lt = b.or_([b.and_([nx[i], y[i]] + same[i + 1:]) for i in range(w)])
    eq = b.and_(same)
    gt = b.or_([b.and_([x[i], ny[i]] + same[i + 1:]) for i in range(w)])
    return lt, eq, gt


def _two_words(width: int):
    b = Builder()
    x = b.inputs(width)
    y = b.inputs(width)
    return b, x, y


def add2(width: int) -> Circuit:
    b, x, y = _two_words(width)
    return b.build(add_into(b, x, y), {"generator": "add2", "width": width})


def sub2(width: int) -> Circuit:
    b, x, y = _two_words(width)
    diff, borrow = sub_into(b, x, y)
    return b.build(diff + [borrow], {"generator": "sub2", "width": width})


def cmp_fixed(width: int) -> Circuit:
    b, x, y = _two_words(width)
    return b.build(list(cmp_into(b, x, y)), {"generator": "cmp_fixed", "width": width})


# ---------------------------------------------------------------------------
# iterated addition


@lru_cache(maxsize=None)
def _block_sum_fn(bsz: int, ell: int) -> BitFn:
    """Sum_i count_i * 2**i over ``bsz`` counts of ``bsz`` bits, each at most ``ell``."""
    mask = (1 << bsz) - 1

    def fn(u):
        return sum(((u >> (i * bsz)) & mask) << i for i in range(bsz))

    support = []
    for u in range(2 ** (bsz * bsz)):
        if all(((u >> (i * bsz)) & mask) <= ell for i in range(bsz)):
            support.append(u)
    return BitFn(bsz * bsz, 2 * bsz, fn, tuple(support), name=f"blocksum{bsz}")


def itadd_into(b: Builder, rows: Sequence[Wires], out_width: int | None = None,
               count_bits: int | None = None) -> list[int]:
    """Exact unsigned sum of many rows in constant depth.

    Stage 1 counts every column and regroups the count bits into
    ``count_bits`` non-overlapping rows.  Stage 2 cuts the columns into blocks
    of ``bsz`` and turns each block into a low part (row A) and a spill that
    lands wholly inside the next block (row B).  Stage 3 adds A and B.
    """
    nrows = len(rows)
    width = max((len(r) for r in rows), default=0)
    if out_width is None:
        out_width = width + (nrows - 1).bit_length() + 1 if nrows else 1
    if nrows == 0:
        c0 = b.c0()
        return [c0] * out_width
    if nrows == 1:
        row = list(rows[0])
        if len(row) < out_width:
            c0 = b.c0()
            row += [c0] * (out_width - len(row))
        return row[:out_width]
    ell = nrows.bit_length() if count_bits is None else count_bits
    if nrows.bit_length() > ell:
        raise ValueError(f"count_bits={ell} too small for {nrows} rows")
    c0 = b.c0()
    grid = [list(r) + [c0] * (width - len(r)) for r in rows]
    # stage 1: column counts; count bit t of column c has weight 2**(c+t)
    counts = [count_into(b, [r[c] for r in grid], ell) for c in range(width)]
    total = width + ell - 1
    bsz = ell.bit_length()
    nblocks = -(-total // bsz)
    fn = _block_sum_fn(bsz, ell)
    row_a, row_b = [], [c0] * bsz
    for blk in range(nblocks):
        col_counts = []
        for pos in range(blk * bsz, blk * bsz + bsz):
            col = [counts[pos - t][t] if 0 <= pos - t < width else c0 for t in range(ell)]
            col_counts.extend(count_into(b, col, bsz))
        s = lut_into(b, col_counts, fn)
        row_a.extend(s[:bsz])
        row_b.extend(s[bsz:])
    row_a.extend([c0] * bsz)
    result = add_into(b, row_a, row_b)
    if len(result) < out_width:
        result += [c0] * (out_width - len(result))
    return result[:out_width]


def itadd(rows: int, width: int, out_width: int | None = None,
          count_bits: int | None = None) -> Circuit:
    b = Builder()
    grid = [b.inputs(width) for _ in range(rows)]
    outs = itadd_into(b, grid, out_width, count_bits)
    return b.build(outs, {"generator": "itadd", "rows": rows, "width": width,
                          "stages": ["column-count", "block-save", "add2"]})


# ---------------------------------------------------------------------------
# floats <-> exact fixed point


@dataclass(frozen=True)
class FixedPointLayout:
    width: int
    lsb_exponent: int
    signed: bool = True


def standard_layout(p: int) -> FixedPointLayout:
    q = fp.q_of(p)
    return FixedPointLayout(2 * q + fp.mant_bits(p), -q)


def _exp_literals(b: Builder, enc: Wires, p: int):
    """AND-literal lists selecting each exponent value E in [-q, q]."""
    h = p // 2
    q = fp.q_of(p)
    ebits = list(enc[h:])
    neg = [b.not_(x) for x in ebits]
    lits = {}
    for e in range(-q, q + 1):
        mag = abs(e)
        lit = [ebits[0] if e < 0 else neg[0]]
        lit += [ebits[1 + i] if (mag >> i) & 1 else neg[1 + i] for i in range(h - 1)]
        lits[e] = lit
    return lits


def expand_into(b: Builder, enc: Wires, p: int) -> tuple[int, list[int]]:
    """Sign bit and exact magnitude ``M * 2**(E+q)`` of a canonical encoding."""
    q = fp.q_of(p)
    mb = fp.mant_bits(p)
    mant = list(enc[1:1 + mb])
    lits = _exp_literals(b, enc, p)
    width = 2 * q + mb
    terms = [[] for _ in range(width)]
    for e in range(-q, q + 1):
        for j in range(mb):
            terms[j + e + q].append(b.and_(lits[e] + [mant[j]]))
    return enc[0], [b.or_(t) for t in terms]


def float_expand(p: int) -> Circuit:
    b = Builder()
    enc = b.inputs(p)
    sign, mag = expand_into(b, enc, p)
    lay = standard_layout(p)
    return b.build([sign] + mag, {"generator": "float_expand", "p": p,
                                  "layout": [lay.width, lay.lsb_exponent]})


def _gt_const(b: Builder, x: Wires, nx: Wires, K: int, c0: int) -> int:
    """1 iff unsigned x > K (K a non-negative constant)."""
    w = len(x)
    if K >= 2 ** w - 1:
        return b.or_([c0])
    terms = []
    for i in range(w):
        if not (K >> i) & 1:
            terms.append(b.and_([x[i]] + [x[j] if (K >> j) & 1 else nx[j] for j in range(i + 1, w)]))
    return b.or_(terms)


def fixed_to_float_into(b: Builder, sign: int, mag: Wires, p: int, e0: int) -> list[int]:
    """Truncate ``(-1)**sign * mag * 2**e0`` into a canonical p-bit encoding."""
    q = fp.q_of(p)
    mb = fp.mant_bits(p)
    w = len(mag)
    c0 = b.c0()
    nmag = [b.not_(x) for x in mag]
    ovf = _gt_const(b, mag, nmag, q << (q - e0), c0)
    zs = list(range(-q, q + 1))
    gt = {}
    for z in zs:
        s = e0 + z
        K = q >> s if s >= 0 else q << (-s)
        gt[z] = _gt_const(b, mag, nmag, K, c0)
    ngt = {z: b.not_(gt[z]) for z in zs}

    mant_terms = [[ovf] for _ in range(mb)]
    exp_terms = [[] for _ in range(p // 2)]
    any_terms = [ovf]
    e_ovf = fp.encode(fp.canonicalize(1, q, q, p))[p // 2:]
    for i, bit in enumerate(e_ovf):
        if bit:
            exp_terms[i].append(ovf)

    def add_exp(term, e):
        bits = fp.encode(fp.FloatP(1, 1, e, p))[p // 2:]
        for i, bit in enumerate(bits):
            if bit:
                exp_terms[i].append(term)

    for z in zs:
        s = e0 + z
        m = [mag[j - s] if 0 <= j - s < w else None for j in range(mb)]
        present = [x for x in m if x is not None]
        if not present:
            continue
        sel = [ngt[z]] + ([gt[z + 1]] if z < q else [])
        nz = b.or_(present)
        if z < q:
            top = m[mb - 1]
            dbl = b.and_([b.not_(top), nz]) if top is not None else nz
            keep = [b.not_(dbl)]
        else:
            dbl, keep = None, []
        for j in range(mb):
            if m[j] is not None:
                mant_terms[j].append(b.and_(sel + keep + [m[j]]))
            if dbl is not None and j >= 1 and m[j - 1] is not None:
                mant_terms[j].append(b.and_(sel + [dbl, m[j - 1]]))
        t_keep = b.and_(sel + keep + [nz])
        add_exp(t_keep, -z)
        any_terms.append(t_keep)
        if dbl is not None:
            t_dbl = b.and_(sel + [dbl])
            add_exp(t_dbl, -z - 1)
            any_terms.append(t_dbl)
    sgn = b.and_([sign, b.or_(any_terms)])
    mant = [b.or_(t) for t in mant_terms]
    exps = [b.or_(t) if t else b.or_([c0]) for t in exp_terms]
    return [sgn] + mant + exps


def fixed_to_float(p: int, layout: FixedPointLayout | None = None) -> Circuit:
    layout = standard_layout(p) if layout is None else layout
    b = Builder()
    sign = b.input()
    mag = b.inputs(layout.width)
    outs = fixed_to_float_into(b, sign, mag, p, layout.lsb_exponent)
    return b.build(outs, {"generator": "fixed_to_float", "p": p,
                          "layout": [layout.width, layout.lsb_exponent]})


def signed_diff_into(b: Builder, x: Wires, y: Wires) -> tuple[int, list[int]]:
    """Sign-magnitude of ``x - y`` for unsigned words of equal width."""
    lt, _, _ = cmp_into(b, x, y)
    ge = b.not_(lt)
    hi = [b.or_([b.and_([ge, a]), b.and_([lt, c])]) for a, c in zip(x, y)]
    lo = [b.or_([b.and_([ge, c]), b.and_([lt, a])]) for a, c in zip(x, y)]
    diff, _ = sub_into(b, hi, lo)
    return lt, diff


def signed_sum_into(b: Builder, terms: Sequence[tuple[int, Wires]], width: int,
                    count_bits: int | None = None) -> tuple[int, list[int]]:
    """Exact sum of sign-magnitude terms as (sign, magnitude of ``width`` bits)."""
    pos, neg = [], []
    for s, mag in terms:
        ns = b.not_(s)
        pos.append([b.and_([m, ns]) for m in mag])
        neg.append([b.and_([m, s]) for m in mag])
    sp = itadd_into(b, pos, width, count_bits)
    sn = itadd_into(b, neg, width, count_bits)
    return signed_diff_into(b, sp, sn)


# ---------------------------------------------------------------------------
# the attention-head operations


def float_sum_into(b: Builder, vecs: Sequence[Sequence[Wires]], p: int,
                   count_bits: int | None = None) -> list[list[int]]:
    """Componentwise truncated exact sum of n vectors (each k encodings)."""
    n = len(vecs)
    k = len(vecs[0])
    cb = n.bit_length() if count_bits is None else count_bits
    lay = standard_layout(p)
    out = []
    for c in range(k):
        terms = [expand_into(b, v[c], p) for v in vecs]
        sign, mag = signed_sum_into(b, terms, lay.width + cb, cb)
        out.append(fixed_to_float_into(b, sign, mag, p, lay.lsb_exponent))
    return out


def float_sum_circuit(n: int, k: int, p: int, count_bits: int | None = None) -> Circuit:
    b = Builder()
    vecs = [[b.inputs(p) for _ in range(k)] for _ in range(n)]
    outs = float_sum_into(b, vecs, p, count_bits)
    return b.build([x for comp in outs for x in comp],
                   {"generator": "float_sum", "n": n, "k": k, "p": p})


@lru_cache(maxsize=None)
def div_bitfn(p: int, nmax: int) -> BitFn:
    """Truth table of truncate(x / d): x in the low p bits, d in the next bits."""
    cb = nmax.bit_length()
    codes = sorted(fp.canonical_codes(p))
    table = {}
    for code in codes:
        x = fp.decode_int(code, p)
        for d in range(1, nmax + 1):
            table[code | (d << p)] = fp.encode_int(fp.div_trunc([x], d, p)[0])
    return BitFn(p + cb, p, lambda u: table.get(u, 0), tuple(sorted(table)),
                 name=f"div_p{p}_n{nmax}")


def float_div_into(b: Builder, x: Wires, d: Wires, p: int, nmax: int) -> list[int]:
    return lut_into(b, list(x) + list(d), div_bitfn(p, nmax))


def float_div_circuit(p: int, nmax: int) -> Circuit:
    b = Builder()
    x = b.inputs(p)
    d = b.inputs(nmax.bit_length())
    outs = float_div_into(b, x, d, p, nmax)
    return b.build(outs, {"generator": "float_div", "p": p, "nmax": nmax})


def float_eq_into(b: Builder, x: Wires, y: Wires) -> int:
    return b.and_([_xnor(b, a, c, b.not_(a), b.not_(c)) for a, c in zip(x, y)])


def float_eq_circuit(p: int) -> Circuit:
    b, x, y = _two_words(p)
    return b.build([float_eq_into(b, x, y)], {"generator": "float_eq", "p": p})


def sel_into(b: Builder, x: Wires, y: int) -> list[int]:
    return [b.and_([v, y]) for v in x]


def sel_circuit(k: int, p: int) -> Circuit:
    b = Builder()
    x = b.inputs(k * p)
    y = b.input()
    return b.build(sel_into(b, x, y), {"generator": "sel", "k": k, "p": p})


def _signed_ge(b: Builder, sj, nsj, st, nst, lt, eq, gt) -> tuple[int, int]:
    """(s_j >= s_t, s_t >= s_j) from signs and the magnitude comparison."""
    ge_jt = b.or_([b.and_([nsj, st]), b.and_([nsj, nst, gt]), b.and_([nsj, nst, eq]),
                   b.and_([sj, st, lt]), b.and_([sj, st, eq])])
    ge_tj = b.or_([b.and_([nst, sj]), b.and_([nst, nsj, lt]), b.and_([nst, nsj, eq]),
                   b.and_([st, sj, gt]), b.and_([st, sj, eq])])
    return ge_jt, ge_tj


def float_max_into(b: Builder, scores: Sequence[Wires], p: int) -> tuple[list[int], list[int]]:
    """Maximum encoding and the argmax indicator vector."""
    n = len(scores)
    if n == 1:
        return list(scores[0]), [b.c1()]
    exp = [expand_into(b, s, p) for s in scores]
    neg = [b.not_(s[0]) for s in scores]
    ge = {}
    for j in range(n):
        for t in range(j + 1, n):
            lt, eq, gt = cmp_into(b, exp[j][1], exp[t][1])
            ge[j, t], ge[t, j] = _signed_ge(b, scores[j][0], neg[j], scores[t][0], neg[t],
                                            lt, eq, gt)
    ind = [b.and_([ge[j, t] for t in range(n) if t != j]) for j in range(n)]
    maxbits = [b.or_([b.and_([scores[j][i], ind[j]]) for j in range(n)]) for i in range(p)]
    return maxbits, ind


def float_max_circuit(n: int, p: int) -> Circuit:
    b = Builder()
    scores = [b.inputs(p) for _ in range(n)]
    maxbits, ind = float_max_into(b, scores, p)
    return b.build(maxbits + ind, {"generator": "float_max", "n": n, "p": p})


def float_ge_into(b: Builder, x: Wires, y: Wires, p: int, strict: bool) -> int:
    """x > y (strict) or x >= y on canonical encodings."""
    (sx, mx), (sy, my) = expand_into(b, x, p), expand_into(b, y, p)
    lt, eq, gt = cmp_into(b, mx, my)
    nsx, nsy = b.not_(sx), b.not_(sy)
    if strict:
        return b.or_([b.and_([nsx, sy]), b.and_([nsx, nsy, gt]), b.and_([sx, sy, lt])])
    return _signed_ge(b, sx, nsx, sy, nsy, lt, eq, gt)[0]


# ---------------------------------------------------------------------------
# scoring


def _mant_literals(enc: Wires, p: int) -> list[int]:
    return list(enc[1:1 + fp.mant_bits(p)])


def _mul_mag_into(b: Builder, x: Wires, y: Wires) -> list[int]:
    """Exact product of two unsigned words by partial products and ITADD."""
    rows = []
    c0 = b.c0()
    for i, xi in enumerate(x):
        rows.append([c0] * i + [b.and_([xi, yj]) for yj in y])
    return itadd_into(b, rows, len(x) + len(y))


def float_mul_exact_into(b: Builder, x: Wires, y: Wires, p: int) -> tuple[int, list[int]]:
    """Exact product of two floats as sign and magnitude with lsb weight 2**(-2q)."""
    q = fp.q_of(p)
    mb = fp.mant_bits(p)
    sign = _xor(b, x[0], y[0])
    mp = _mul_mag_into(b, _mant_literals(x, p), _mant_literals(y, p))
    lx = _exp_literals(b, x, p)
    ly = _exp_literals(b, y, p)
    ohx = {e: b.and_(lx[e]) for e in lx}
    ohy = {e: b.and_(ly[e]) for e in ly}
    pairs = {s: [] for s in range(-2 * q, 2 * q + 1)}
    for ex in ohx:
        for ey in ohy:
            pairs[ex + ey].append(b.and_([ohx[ex], ohy[ey]]))
    ohs = {s: b.or_(v) for s, v in pairs.items()}
    width = 4 * q + 2 * mb
    terms = [[] for _ in range(width)]
    for s, g in ohs.items():
        for t in range(2 * mb):
            terms[t + s + 2 * q].append(b.and_([g, mp[t]]))
    c0 = b.c0()
    return sign, [b.or_(t) if t else b.or_([c0]) for t in terms]


def _const_scale_rows(b: Builder, terms, coeffs, c0):
    """Sign-magnitude rows of sum_c coeffs[c] * value_c, one row per set bit."""
    out = []
    for (s, mag), a in zip(terms, coeffs):
        if a == 0:
            continue
        sgn = s if a > 0 else b.not_(s)
        for bit in range(abs(a).bit_length()):
            if (abs(a) >> bit) & 1:
                out.append((sgn, [c0] * bit + list(mag)))
    return out


def _linear_into(b: Builder, vec: Sequence[Wires], M, p: int):
    """Exact rows of M @ vec as (sign, magnitude) with lsb weight 2**(-q)."""
    lay = standard_layout(p)
    terms = [expand_into(b, enc, p) for enc in vec]
    c0 = b.c0()
    res = []
    for row in M:
        bound = sum(abs(a) for a in row) * (2 ** lay.width - 1)
        width = max(1, bound.bit_length())
        rows = _const_scale_rows(b, terms, row, c0)
        cb = max(1, len(rows).bit_length())
        if not rows:
            res.append((c0, [c0]))
            continue
        res.append(signed_sum_into(b, rows, width, cb))
    return res


def score_into(b: Builder, spec: ScoreSpec, x: Sequence[Wires], y: Sequence[Wires],
               p: int) -> list[int]:
    """Score encoding for two k-vectors of encodings."""
    k = len(x)
    q = fp.q_of(p)
    if spec.kind == "table":
        flat = [w for enc in list(x) + list(y) for w in enc]
        return lut_into(b, flat, _table_bitfn(spec))
    if spec.kind == "dot":
        prods = [float_mul_exact_into(b, x[c], y[c], p) for c in range(k)]
    else:
        u = _linear_into(b, x, spec.Q, p)
        v = _linear_into(b, y, spec.K, p)
        prods = [(_xor(b, su, sv), _mul_mag_into(b, mu, mv)) for (su, mu), (sv, mv) in zip(u, v)]
    width = max(len(m) for _, m in prods) + k.bit_length()
    sign, mag = signed_sum_into(b, prods, width, k.bit_length())
    return fixed_to_float_into(b, sign, mag, p, -2 * q)


_TABLES: dict = {}


def _table_bitfn(spec: ScoreSpec) -> BitFn:
    key = spec.digest()
    if key not in _TABLES:
        table = spec.table
        _TABLES[key] = BitFn(2 * spec.k * spec.p, spec.p, table.__getitem__, name="score_table")
    return _TABLES[key]


def score_circuit(spec: ScoreSpec, k: int, p: int) -> Circuit:
    spec.check(k, p)
    b = Builder()
    x = [b.inputs(p) for _ in range(k)]
    y = [b.inputs(p) for _ in range(k)]
    outs = score_into(b, spec, x, y, p)
    return b.build(outs, {"generator": "score", "kind": spec.kind, "k": k, "p": p,
                          "spec": spec.digest()})
