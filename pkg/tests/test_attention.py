import itertools
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from tc0attn import attention as A
from tc0attn import floatp as fp
from tc0attn.floatp import ConfigError
from tc0attn.harness import majority_model

DOT = A.ScoreSpec("dot")


def vec(*xs, p=6):
    return [(fp.from_value(x, p),) for x in xs]


def values(out):
    return [tuple(f.value for f in pos) for pos in out]


def test_head_examples():
    assert values(A.head_ref(vec(1, 3), DOT, 6)) == [(3,), (3,)]
    assert values(A.head_ref(vec(2, 2), DOT, 6)) == [(2,), (2,)]
    assert values(A.head_ref(vec(-1), DOT, 6)) == [(-1,)]


def test_score_truncates_once():
    x = [fp.from_value(3, 6), fp.from_value(3, 6)]
    assert A.score(DOT, x, x, 6).value == 16  # 18 truncates to 16
    spec = A.ScoreSpec("bilinear", Q=[[1, 0], [0, 0]], K=[[0, 1], [0, 0]])
    y = [fp.from_value(2, 6), fp.from_value(Fraction(1, 2), 6)]
    assert A.score(spec, y, y, 6).value == 1


def test_xi_examples():
    s = [fp.from_value(x, 6) for x in (1, 3, 3)]
    assert A.xi(s) == [0, Fraction(1, 2), Fraction(1, 2)]


@pytest.mark.parametrize("n", [1, 2, 3])
def test_xi_exhaustive_p4(n):
    for s in itertools.product(fp.canonical_values(4), repeat=n):
        w = A.xi(s)
        _, idx = fp.max_seq(s)
        assert sum(w) == 1
        assert {i + 1 for i, x in enumerate(w) if x} == idx
        assert len({x for x in w if x}) == 1


def test_truncation_modes_diverge():
    combo, two, one = A.truncation_divergence(6)
    assert two != one
    # clamping: -48 saturates to -24 before the division by 2
    assert [f.value for f in combo] == [-24, -24] and (two.value, one.value) == (-12, -24)
    # without saturation: 9 truncates to 8 before the division by 3
    X = vec(3, 3, 3)
    assert values(A.head_ref(X, DOT, 6, A.TWO_TRUNC))[0] == (2,)
    assert values(A.head_ref(X, DOT, 6, A.ONE_TRUNC))[0] == (3,)


def test_table_score():
    spec = A.ScoreSpec.table_from(lambda x, y: fp.truncate(x[0].value - y[0].value, 4), 1, 4)
    a, b = fp.from_value(1, 4), fp.from_value(-1, 4)
    assert A.score(spec, [a], [b], 4).value == 2
    with pytest.raises(ConfigError):
        spec.check(1, 6)


def test_bilinear_entries_must_fit():
    spec = A.ScoreSpec("bilinear", Q=[[3]], K=[[1]])
    spec.check(1, 6)
    with pytest.raises(ConfigError):
        spec.check(1, 4)
    with pytest.raises(ConfigError):
        spec.check(2, 6)


def test_majority_examples():
    m = majority_model()
    assert A.transformer_ref("aab", m, 10) == 1
    assert A.transformer_ref("abb", m, 10) == 0
    assert A.transformer_ref("ab", m, 10) == 0  # a tie is not a majority


def test_positional_embeddings():
    for kind, second in (("binary", 3), ("onehot", 8)):
        m = A.ModelSpec(("a", "b"), 2, kind, (), A.Comparator(0, ">", const=1))
        X = A.encode_input("abb", m, 8)
        assert [f.value for f in X[2]] == [2, second]
    onehot = A.ModelSpec(("a",), 2, "onehot", (), A.Comparator(0, ">", const=0))
    with pytest.raises(ConfigError):
        A.encode_input("a" * 4, onehot, 6)  # q = 3 < n


def test_unknown_symbol():
    with pytest.raises(ConfigError):
        A.encode_input("abc", majority_model(), 10)


def test_model_json_roundtrip():
    m = majority_model()
    assert A.ModelSpec.from_json(m.to_json()) == m
    ffn = A.FFNSpec.table_from(lambda v: (v[1],), 2, 1, 4)
    layer = A.LayerSpec((DOT, A.ScoreSpec("bilinear", Q=[[1]], K=[[-1]])), ffn)
    assert A.LayerSpec.from_json(layer.to_json()) == layer


def test_ffn_compare_needs_representable():
    ffn = A.FFNSpec("compare", cmp=A.Comparator(0, ">", const=Fraction(1, 3)),
                    then_vec=(1,), else_vec=(0,))
    with pytest.raises(ConfigError):
        ffn.check(1, 1, 6)


@given(st.lists(st.sampled_from(fp.canonical_values(6)), min_size=1, max_size=6))
def test_uniform_average_when_all_tie(xs):
    zero = A.ScoreSpec("bilinear", Q=[[0]], K=[[0]])
    X = [(x,) for x in xs]
    out = A.head_ref(X, zero, 6)
    want = fp.div_trunc(fp.sum_trunc(X, 6), len(xs), 6)
    assert all(pos == want for pos in out)
