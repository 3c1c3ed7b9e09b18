import io
import itertools
import random

import numpy as np
import pytest

from tc0attn import attention as A
from tc0attn import floatp as fp
from tc0attn import head_compiler as H
from tc0attn.circuit import deserialize, evaluate, evaluate_batch, serialize
from tc0attn.floatp import ConfigError, Params
from tc0attn.harness import majority_model

DOT = A.ScoreSpec("dot")


def enc_X(X):
    return [b for pos in X for f in pos for b in fp.encode(f)]


def check_head(c, X, spec, p, mode=A.TWO_TRUNC):
    assert evaluate(c, enc_X(X)) == enc_X(A.head_ref(X, spec, p, mode))


def test_examples():
    c = H.compile_head(Params(2, 1, 6), DOT)
    for xs, want in (((1, 3), 3), ((2, 2), 2)):
        X = [(fp.from_value(x, 6),) for x in xs]
        assert evaluate(c, enc_X(X)) == enc_X([(fp.from_value(want, 6),)] * 2)


def test_single_position_is_identity():
    c = H.compile_head(Params(1, 2, 6), DOT)
    for f in fp.canonical_values(6)[::3]:
        X = [(f, -f)]
        assert evaluate(c, enc_X(X)) == enc_X(X)


@pytest.mark.parametrize("literal", [False, True])
def test_exhaustive_p4(literal):
    c = H.compile_head(Params(2, 1, 4), DOT, literal)
    for a, b in itertools.product(fp.canonical_values(4), repeat=2):
        check_head(c, [(a,), (b,)], DOT, 4)


def test_plan_matches_builder():
    for n, k, p in ((2, 1, 6), (3, 2, 6), (5, 1, 8)):
        P = Params(n, k, p)
        plan = H.HeadPlan(P, DOT)
        c = H.compile_head(P, DOT)
        assert c.size == plan.size
        assert list(c.outputs) == list(plan.output_ids())
        ind = [plan.indicator(n - 1, j) for j in range(n)]
        assert min(ind) > plan.start("max", n - 1, 0)


@pytest.mark.parametrize("n, k, literal", [(2, 1, False), (4, 1, False), (3, 2, True)])
def test_streaming_matches_in_memory(n, k, literal):
    P = Params(n, k, 6)
    buf = io.StringIO()
    stats = H.emit_streaming(P, DOT, buf, literal)
    text = serialize(H.compile_head(P, DOT, literal))
    assert buf.getvalue() == text
    assert stats.gates_emitted == deserialize(text).size
    assert stats.bytes_emitted == len(text)
    assert stats.bound_holds(n)


def test_counter_bits_grow_slowly():
    small = H.emit_streaming(Params(2, 1, 4), DOT, io.StringIO())
    big = H.emit_streaming(Params(8, 1, 4), DOT, io.StringIO())
    assert big.peak_live_counters == small.peak_live_counters
    assert big.peak_counter_bits - small.peak_counter_bits <= H.AUDIT_C * 2


def test_random_against_oracle():
    rng = random.Random(3)
    spec = A.ScoreSpec("bilinear", Q=[[1, 0], [1, -1]], K=[[0, 2], [1, 0]])
    for P, sp in ((Params(3, 2, 6), DOT), (Params(4, 2, 6), spec), (Params(5, 1, 8), DOT)):
        c = H.compile_head(P, sp)
        Xs = [[tuple(fp.rand_canonical(P.p, rng=rng) for _ in range(P.k)) for _ in range(P.n)]
              for _ in range(100)]
        got = evaluate_batch(c, np.array([enc_X(X) for X in Xs], dtype=np.uint8))
        for X, out in zip(Xs, got):
            assert out.tolist() == enc_X(A.head_ref(X, sp, P.p))


def test_meta():
    c = H.compile_head(Params(3, 1, 6), DOT)
    assert c.meta["plan_version"] == H.PLAN_VERSION
    assert c.meta["score"] == DOT.digest()
    assert set(c.meta["stage_depths"]) >= {"score", "max", "sel", "sum", "count", "div"}
    assert sum(c.meta["stage_sizes"].values()) + c.n_inputs == c.size


def identity_ffn(h, k, p):
    return A.FFNSpec.table_from(lambda v: v[:k], h, k, p)


def test_identity_layer_is_head():
    P = Params(2, 1, 4)
    layer = A.LayerSpec((DOT,), identity_ffn(1, 1, 4))
    c = H.compile_layer(P, layer)
    for a, b in itertools.product(fp.canonical_values(4), repeat=2):
        check_head(c, [(a,), (b,)], DOT, 4)


def test_two_head_projection():
    P = Params(2, 1, 4)
    other = A.ScoreSpec("bilinear", Q=[[-1]], K=[[1]])
    layer = A.LayerSpec((DOT, other), identity_ffn(2, 1, 4))
    c = H.compile_layer(P, layer)
    for a, b in itertools.product(fp.canonical_values(4), repeat=2):
        X = [(a,), (b,)]
        assert evaluate(c, enc_X(X)) == enc_X(A.layer_ref(X, layer, 4))
        check_head(c, X, DOT, 4)


def test_layer_cap():
    layer = A.LayerSpec((DOT,), identity_ffn(1, 1, 4))
    with pytest.raises(ConfigError):
        H.compile_layer(Params(2, 1, 6), layer)


def test_majority_layer_exhaustive():
    m = majority_model()
    P = Params(4, 2, 8)
    c = H.compile_layer(P, m.layers[0])
    vals = fp.canonical_values(8)
    rng = random.Random(0)
    Xs = [[tuple(rng.choice(vals) for _ in range(2)) for _ in range(4)] for _ in range(300)]
    Xs += [A.encode_input(w, m, 8) for w in itertools.product("ab", repeat=4)]
    got = evaluate_batch(c, np.array([enc_X(X) for X in Xs], dtype=np.uint8))
    for X, out in zip(Xs, got):
        assert out.tolist() == enc_X(A.layer_ref(X, m.layers[0], 8))


def test_transformer_examples():
    m = majority_model()
    c = H.compile_transformer(Params(3, 2, 10), m)
    assert c.n_inputs == 3
    assert evaluate(c, H.word_bits("aab", m)) == [1]
    assert evaluate(c, H.word_bits("abb", m)) == [0]


def test_positional_transformer():
    m = A.ModelSpec(("a", "b", "c"), 2, "binary",
                    (A.LayerSpec((DOT,), A.FFNSpec("compare", cmp=A.Comparator(1, ">=", right=0),
                                                   then_vec=(1, 1), else_vec=(-1, 0))),),
                    A.Comparator(0, ">", const=0))
    P = Params(3, 2, 6)
    c = H.compile_transformer(P, m)
    assert c.n_inputs == 6
    for w in itertools.product(m.alphabet, repeat=3):
        assert evaluate(c, H.word_bits(w, m)) == [A.transformer_ref(w, m, 6)]


def test_single_symbol_model():
    m = A.ModelSpec(("a",), 1, "table", (), A.Comparator(0, ">", const=1), vectors=((2,),))
    c = H.compile_transformer(Params(1, 1, 6), m)
    assert c.n_inputs == 0
    assert evaluate(c, []) == [1]
