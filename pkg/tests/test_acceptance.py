"""Acceptance gate: one PASS/FAIL line per criterion, at full stated scale.

Run with ``pytest tests/test_acceptance.py -v``; the per-criterion lines are
repeated in the terminal summary.
"""

import io
import itertools
import math
import random
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from tc0attn import attention as A
from tc0attn import floatp as fp
from tc0attn import harness as Hn
from tc0attn import head_compiler as H
from tc0attn import synth as S
from tc0attn.circuit import evaluate, evaluate_batch, serialize
from tc0attn.floatp import Params

GOLDEN = Path(__file__).parent / "golden"
DOT = A.ScoreSpec("dot")
BILINEAR = A.ScoreSpec("bilinear", Q=[[1, -2], [0, 2]], K=[[2, 1], [-1, 0]])


def bits(x, w):
    return fp.int_to_bits(x, w)


def num(bs):
    return fp.bits_to_int(int(b) for b in bs)


def run_rows(c, rows):
    return evaluate_batch(c, np.array(rows, dtype=np.uint8).reshape(len(rows), c.n_inputs))


def finish(record, num_, ok, detail, t0, limit):
    elapsed = time.perf_counter() - t0
    within = elapsed < limit
    record(num_, ok and within, f"{detail}; limit {limit:.0f}s", elapsed)
    assert ok, detail
    assert within, f"took {elapsed:.1f}s, limit {limit}s"


def test_c01_truncation(record_criterion):
    t0 = time.perf_counter()
    worked = fp.truncate(Fraction(5, 16), 6).value == Fraction(1, 4)
    fix = all(fp.truncate(f.value, p) == f for p in (4, 6, 8) for f in fp.canonical_values(p))
    pair = fp.truncate(3, 6).value == 3 and fp.truncate(Fraction(31, 10), 6).value == 2
    finish(record_criterion, 1, worked and fix and pair,
           f"worked example {worked}, fixpoint p=4,6,8 {fix}, regression pair {pair}", t0, 10)


def test_c02_xor_pin(record_criterion):
    t0 = time.perf_counter()
    c = S.lut_compile(S.BitFn(2, 1, lambda u: (u & 1) ^ (u >> 1), name="xor"))
    table = [evaluate(c, [a, b])[0] for a in (0, 1) for b in (0, 1)]
    ok = c.size == 7 and c.depth == 3 and table == [0, 1, 1, 0]
    finish(record_criterion, 2, ok, f"size {c.size}, depth {c.depth}, table {table}", t0, 1)


def test_c03_gadgets(record_criterion):
    t0 = time.perf_counter()
    rng = random.Random(2024)
    bad = checked = 0
    # itadd exhaustive
    for rows in (1, 2, 3):
        for w in (1, 2, 3, 4):
            c = S.itadd(rows, w)
            cases = list(itertools.product(range(2 ** w), repeat=rows))
            got = run_rows(c, [[b for v in vs for b in bits(v, w)] for vs in cases])
            bad += sum(num(r) != sum(vs) for r, vs in zip(got, cases))
            checked += len(cases)
    # itadd random: 20 shapes x 500 trials, always including the largest
    shapes = [(16, 64)] + [(rng.randint(1, 16), rng.randint(1, 64)) for _ in range(19)]
    for rows, w in shapes:
        c = S.itadd(rows, w)
        cases = [[rng.randrange(2 ** w) for _ in range(rows)] for _ in range(500)]
        got = run_rows(c, [[b for v in vs for b in bits(v, w)] for vs in cases])
        bad += sum(num(r) != sum(vs) for r, vs in zip(got, cases))
        checked += len(cases)
    # two-operand gadgets
    for w, pairs in ((4, list(itertools.product(range(16), repeat=2))),
                     (64, [(rng.randrange(2 ** 64), rng.randrange(2 ** 64)) for _ in range(10 ** 4)])):
        rows = [bits(x, w) + bits(y, w) for x, y in pairs]
        add, sub, cmp = run_rows(S.add2(w), rows), run_rows(S.sub2(w), rows), run_rows(S.cmp_fixed(w), rows)
        for (x, y), a, s, c in zip(pairs, add, sub, cmp):
            bad += num(a) != x + y
            bad += num(s[:w]) != (x - y) % 2 ** w or s[w] != int(x < y)
            bad += c.tolist() != [int(x < y), int(x == y), int(x > y)]
        checked += 3 * len(pairs)
    # threshold and exact count
    for n in range(1, 13):
        rows = [bits(u, n) for u in range(2 ** n)]
        pops = [bin(u).count("1") for u in range(2 ** n)]
        for kk in range(0, n + 2):
            got = run_rows(S.threshold_at_least(n, kk), rows)[:, 0]
            bad += sum(int(g) != int(x >= kk) for g, x in zip(got, pops))
        got = run_rows(S.exact_count_bits(n), rows)
        bad += sum(num(r) != x for r, x in zip(got, pops))
        checked += (n + 3) * len(rows)
    finish(record_criterion, 3, bad == 0, f"{checked} checks, {bad} mismatches", t0, 300)


def op_configs():
    cfgs = []
    for n in (1, 2, 3):
        cfgs += [Hn.VerifyConfig("op:sum", n=n, k=1, p=4, mode="exhaustive"),
                 Hn.VerifyConfig("op:max", n=n, k=1, p=4, mode="exhaustive")]
    cfgs += [Hn.VerifyConfig("op:div", p=4, nmax=m, mode="exhaustive") for m in (1, 2, 3, 4)]
    cfgs += [Hn.VerifyConfig("op:eq", p=4, mode="exhaustive"),
             Hn.VerifyConfig("op:sel", k=1, p=4, mode="exhaustive"),
             Hn.VerifyConfig("op:score", k=1, p=4, mode="exhaustive"),
             Hn.VerifyConfig("op:score", k=1, p=4, score=A.ScoreSpec("bilinear", Q=[[2]], K=[[-1]]),
                             mode="exhaustive")]
    seed = 0
    for p in (6, 8):
        for n in (2, 4, 8, 16):
            for k in (1, 2):
                seed += 1
                cfgs.append(Hn.VerifyConfig("op:sum", n=n, k=k, p=p, trials=1000, seed=seed))
            cfgs.append(Hn.VerifyConfig("op:max", n=n, p=p, trials=1000, seed=seed))
        for m in (4, 16):
            cfgs.append(Hn.VerifyConfig("op:div", p=p, nmax=m, trials=1000, seed=m))
        cfgs.append(Hn.VerifyConfig("op:eq", p=p, trials=1000, seed=p))
        for k in (1, 2):
            cfgs.append(Hn.VerifyConfig("op:sel", k=k, p=p, trials=1000, seed=k))
            for spec in (DOT, BILINEAR if k == 2 else A.ScoreSpec("bilinear", Q=[[2]], K=[[-1]])):
                cfgs.append(Hn.VerifyConfig("op:score", k=k, p=p, score=spec, trials=1000, seed=k))
    return cfgs


def test_c04_operations(record_criterion):
    t0 = time.perf_counter()
    reports = [Hn.verify_equivalence(cfg) for cfg in op_configs()]
    bad = sum(r.total_mismatches for r in reports)
    cases = sum(r.cases for r in reports)
    finish(record_criterion, 4, bad == 0,
           f"{len(reports)} configs, {cases} cases, {bad} mismatches", t0, 600)


def test_c05_head(record_criterion):
    t0 = time.perf_counter()
    reports = [Hn.verify_equivalence(Hn.VerifyConfig("head", n=2, k=1, p=4, mode="exhaustive"))]
    exhaustive_cases = reports[0].cases
    seed = 0
    for n in (2, 4, 8, 16):
        for k in (1, 2):
            for p in (6, 8):
                seed += 1
                reports.append(Hn.verify_equivalence(
                    Hn.VerifyConfig("head", n=n, k=k, p=p, trials=1000, seed=seed)))
    bad = sum(r.total_mismatches for r in reports)
    ok = bad == 0 and exhaustive_cases == 49
    finish(record_criterion, 5, ok,
           f"exhaustive {exhaustive_cases} cases + 16 random configs x 1000, {bad} mismatches",
           t0, 900)


def test_c06_constant_depth(record_criterion):
    t0 = time.perf_counter()
    fixed = {n: H.compile_head(Params(n, 1, 6), DOT).depth for n in range(2, 33)}
    sched = {}
    for n in (4, 8, 16):
        P = Params.from_schedule(n, 1, 2, 2)
        assert P.p == math.ceil(2 * math.log2(n)) + 2
        sched[(n, P.p)] = H.compile_head(P, DOT).depth
    ok = len(set(fixed.values())) == 1 and len(set(sched.values())) == 1
    finish(record_criterion, 6, ok,
           f"p=6 depths over n=2..32: {sorted(set(fixed.values()))}; schedule {sched}", t0, 600)


def test_c07_polynomial_size(record_criterion, tmp_path):
    t0 = time.perf_counter()
    res = Hn.growth_stats(range(2, 21), k=1, p=6)
    path = tmp_path / "growth_k1_p6.csv"
    Hn.write_growth_csv(res.rows, str(path))
    header_ok = path.read_text().splitlines()[0] == (GOLDEN / "growth_header.csv").read_text().strip()
    held_out = [r for r in res.rows if r.n >= 6]
    exact = all(res.predict(r.n) == r.size for r in held_out)
    poly = " + ".join(f"{c}*n^{i}" for i, c in enumerate(res.coeffs))
    finish(record_criterion, 7, exact and header_ok and len(held_out) == 15,
           f"size = {poly}; exact on n=6..20: {exact}; csv header pinned: {header_ok}", t0, 600)


def test_c08_uniformity(record_criterion):
    t0 = time.perf_counter()
    identical, bits_used, bounds = [], {}, []
    for n in (2, 8, 16):
        P = Params(n, 1, 6)
        buf = io.StringIO()
        st = H.emit_streaming(P, DOT, buf)
        text = serialize(H.compile_head(P, DOT))
        identical.append(buf.getvalue() == text)
        bits_used[n] = st.peak_counter_bits
        bounds.append(st.bound_holds(n, H.AUDIT_C))
        del buf, text
    need = max(b / math.ceil(math.log2(n)) for n, b in bits_used.items())
    ok = all(identical) and all(bounds)
    finish(record_criterion, 8, ok,
           f"byte-identical {identical}; peak counter bits {bits_used}; C={H.AUDIT_C} "
           f"(smallest that works: {need:.1f})", t0, 300)


def test_c09_majority(record_criterion):
    t0 = time.perf_counter()
    rep = Hn.demo_majority(10, 10)
    words = sum(r.words for r in rep.rows)
    bad = sum(r.mismatches for r in rep.rows)
    finish(record_criterion, 9, rep.verdict == "pass",
           f"n=1..10 at p=10: {words} words, {bad} mismatches; reference agrees with majority "
           f"on {rep.agreement:.2%} (informational)", t0, 900)


def test_c10_xi(record_criterion):
    t0 = time.perf_counter()
    bad = total = 0
    for n in (1, 2, 3):
        for s in itertools.product(fp.canonical_values(4), repeat=n):
            w = A.xi(s)
            _, idx = fp.max_seq(s)
            nonzero = {x for x in w if x}
            ok = sum(w) == 1 and {i + 1 for i, x in enumerate(w) if x} == idx and len(nonzero) == 1
            bad += not ok
            total += 1
    finish(record_criterion, 10, bad == 0, f"{total} score vectors, {bad} violations", t0, 10)
