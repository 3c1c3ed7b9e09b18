import itertools
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tc0attn import attention as A
from tc0attn import floatp as fp
from tc0attn import synth as S
from tc0attn.circuit import MAJ, Builder, evaluate, evaluate_batch
from tc0attn.floatp import ConfigError


def bits(x, w):
    return fp.int_to_bits(x, w)


def num(bs):
    return fp.bits_to_int(int(b) for b in bs)


def run_rows(c, rows):
    return evaluate_batch(c, np.array(rows, dtype=np.uint8).reshape(len(rows), c.n_inputs))


XOR = S.BitFn(2, 1, lambda u: (u & 1) ^ (u >> 1), name="xor")


def test_xor_lut():
    c = S.lut_compile(XOR)
    assert (c.size, c.depth) == (7, 3)
    assert [evaluate(c, [a, b])[0] for a in (0, 1) for b in (0, 1)] == [0, 1, 1, 0]
    assert not c.has_maj()


def test_lut_constants_and_cap():
    c = S.lut_compile(S.BitFn(3, 2, lambda u: 2))
    assert c.op_counts().get("NOT", 0) == 0
    assert all(evaluate(c, bits(u, 3)) == [0, 1] for u in range(8))
    with pytest.raises(ConfigError):
        S.lut_compile(S.BitFn(17, 1, lambda u: 0))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 2 ** 32))
def test_random_lut(w, out, seed):
    rng = random.Random(seed)
    table = [rng.randrange(2 ** out) for _ in range(2 ** w)]
    c = S.lut_compile(S.BitFn(w, out, table.__getitem__))
    assert c.depth <= 3
    got = run_rows(c, [bits(u, w) for u in range(2 ** w)])
    assert [num(r) for r in got] == table


@pytest.mark.parametrize("n", range(1, 9))
def test_threshold_and_count(n):
    rows = [bits(u, n) for u in range(2 ** n)]
    pops = [bin(u).count("1") for u in range(2 ** n)]
    for kk in range(0, n + 2):
        c = S.threshold_at_least(n, kk)
        assert c.op_counts().get("MAJ", 0) <= 1
        assert run_rows(c, rows)[:, 0].tolist() == [int(x >= kk) for x in pops]
    c = S.exact_count_bits(n)
    assert [num(r) for r in run_rows(c, rows)] == pops


def test_maj_padding_is_shared():
    b = Builder()
    x = b.inputs(5)
    S.threshold_into(b, x, 1)
    c = b.build([b.next_id - 1])
    maj = c.gate(c.size - 1)
    assert maj.op == MAJ and len(maj.inputs) == 9


@pytest.mark.parametrize("w", [1, 2, 3, 4])
def test_add_sub_cmp_exhaustive(w):
    rows = [bits(x, w) + bits(y, w) for x in range(2 ** w) for y in range(2 ** w)]
    pairs = [(x, y) for x in range(2 ** w) for y in range(2 ** w)]
    add, sub, cmp = S.add2(w), S.sub2(w), S.cmp_fixed(w)
    assert [num(r) for r in run_rows(add, rows)] == [x + y for x, y in pairs]
    got = run_rows(sub, rows)
    assert [num(r[:w]) for r in got] == [(x - y) % 2 ** w for x, y in pairs]
    assert got[:, w].tolist() == [int(x < y) for x, y in pairs]
    assert run_rows(cmp, rows).tolist() == [[int(x < y), int(x == y), int(x > y)] for x, y in pairs]


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(1, 20), st.integers(0, 2 ** 32))
def test_itadd_random(rows, width, seed):
    rng = random.Random(seed)
    c = S.itadd(rows, width)
    vals = [[rng.randrange(2 ** width) for _ in range(rows)] for _ in range(64)]
    got = run_rows(c, [[b for v in vs for b in bits(v, width)] for vs in vals])
    assert [num(r) for r in got] == [sum(vs) for vs in vals]


def test_itadd_depth_is_constant_in_rows():
    depths = {S.itadd(r, 6, out_width=12, count_bits=5).depth for r in range(2, 32)}
    assert len(depths) == 1


@pytest.mark.parametrize("p", [4, 6])
def test_expand_and_back(p):
    q = fp.q_of(p)
    ex, back = S.float_expand(p), S.fixed_to_float(p)
    for f in fp.canonical_values(p):
        out = evaluate(ex, fp.encode(f))
        assert (-1) ** out[0] * num(out[1:]) * Fraction(2) ** -q == f.value
        assert evaluate(back, out) == fp.encode(f)


@pytest.mark.parametrize("p", [4, 6])
def test_fixed_to_float_exhaustive(p):
    q = fp.q_of(p)
    lay = S.standard_layout(p)
    c = S.fixed_to_float(p)
    rows = [[s] + bits(m, lay.width) for s in (0, 1) for m in range(2 ** lay.width)]
    got = run_rows(c, rows)
    for row, out in zip(rows, got):
        r = (-1) ** row[0] * num(row[1:]) * Fraction(2) ** -q
        assert out.tolist() == fp.encode(fp.truncate(r, p))


def enc(fs):
    return [b for f in fs for b in fp.encode(f)]


@pytest.mark.parametrize("n", [1, 2, 3])
def test_sum_and_max_exhaustive_p4(n):
    vals = fp.canonical_values(4)
    s, m = S.float_sum_circuit(n, 1, 4), S.float_max_circuit(n, 4)
    for xs in itertools.product(vals, repeat=n):
        assert evaluate(s, enc(xs)) == enc(fp.sum_trunc([(x,) for x in xs], 4))
        best, idx = fp.max_seq(xs)
        assert evaluate(m, enc(xs)) == fp.encode(best) + [int(j + 1 in idx) for j in range(n)]


def test_div_eq_sel_p4():
    vals = fp.canonical_values(4)
    dv, eq, sel = S.float_div_circuit(4, 4), S.float_eq_circuit(4), S.sel_circuit(1, 4)
    assert dv.depth == 3
    for x in vals:
        for d in range(1, 5):
            assert evaluate(dv, fp.encode(x) + bits(d, 3)) == enc(fp.div_trunc([x], d, 4))
        for y in vals:
            assert evaluate(eq, fp.encode(x) + fp.encode(y)) == [fp.eq(x, y)]
        for bit in (0, 1):
            assert evaluate(sel, fp.encode(x) + [bit]) == enc(fp.sel([x], bit))


def test_div_outside_domain_is_zero():
    c = S.float_div_circuit(4, 3)
    assert evaluate(c, fp.encode(fp.from_value(1, 4)) + [0, 0]) == [0] * 4


SCORES = [A.ScoreSpec("dot"),
          A.ScoreSpec("bilinear", Q=[[1, -2], [0, 2]], K=[[2, 1], [-1, 0]])]


@pytest.mark.parametrize("spec", SCORES, ids=["dot", "bilinear"])
@pytest.mark.parametrize("p", [4, 6])
def test_score_random(spec, p):
    rng = random.Random(p)
    k = 2
    c = S.score_circuit(spec, k, p)
    cases = [[fp.rand_canonical(p, rng=rng) for _ in range(2 * k)] for _ in range(200)]
    got = run_rows(c, [enc(v) for v in cases])
    for v, out in zip(cases, got):
        assert out.tolist() == fp.encode(A.score(spec, v[:k], v[k:], p))


def test_table_score_circuit():
    spec = A.ScoreSpec.table_from(lambda x, y: fp.truncate(x[0].value * 2 - y[0].value, 4), 1, 4)
    c = S.score_circuit(spec, 1, 4)
    for x in fp.canonical_values(4):
        for y in fp.canonical_values(4):
            assert evaluate(c, fp.encode(x) + fp.encode(y)) == fp.encode(A.score(spec, [x], [y], 4))


def test_gate_structure_ignores_port_ids():
    # the same gadget wired to different ids has the same shape
    def shape(offset):
        b = Builder()
        ins = b.inputs(offset + 12)
        start = b.next_id
        S.float_sum_into(b, [[ins[offset:offset + 6]], [ins[offset + 6:offset + 12]]], 6, 5)
        return b.next_id - start
    assert shape(0) == shape(7)
