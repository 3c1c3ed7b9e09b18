"""Command-line entry point (``tc0attn``)."""

from __future__ import annotations

import argparse
import io
import json
import sys

from . import attention as A
from . import harness as Hn
from . import head_compiler as H
from .circuit import CircuitError, NetlistParseError, evaluate, parse_netlist, serialize
from .floatp import ConfigError, Params

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _read_json(path):
    with open(path) as f:
        return json.load(f)


def parse_score(text: str, k: int | None = None) -> A.ScoreSpec:
    kind, _, path = text.partition(":")
    if kind == "dot" and not path:
        return A.ScoreSpec("dot")
    if kind == "bilinear":
        if path:
            d = _read_json(path)
            return A.ScoreSpec("bilinear", Q=d["Q"], K=d["K"])
        eye = [[int(i == j) for j in range(k or 1)] for i in range(k or 1)]
        return A.ScoreSpec("bilinear", Q=eye, K=eye)
    if kind == "table" and path:
        d = _read_json(path)
        d.setdefault("kind", "table")
        return A.ScoreSpec.from_json(d)
    raise ConfigError(f"bad --score {text!r} (dot | bilinear[:file] | table:<file>)")


def _params(a, k=None) -> Params:
    k = a.k if k is None else k
    if a.c0 is not None or a.c1 is not None:
        if a.c0 is None or a.c1 is None:
            raise ConfigError("--c0 and --c1 go together")
        return Params.from_schedule(a.n, k, a.c0, a.c1)
    if a.p is None:
        raise ConfigError("give --p or --c0/--c1")
    return Params(a.n, k, a.p)


def _emit(text: str, out):
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _load_layer(path) -> A.LayerSpec:
    d = _read_json(path)
    if "layers" in d:
        return A.ModelSpec.from_json(d).layers[0]
    return A.LayerSpec.from_json(d)


def _summary(c):
    print(f"size={c.size} depth={c.depth} inputs={c.n_inputs} outputs={len(c.outputs)}",
          file=sys.stderr)


def cmd_compile_head(a):
    P = _params(a)
    c = H.compile_head(P, parse_score(a.score, P.k), a.literal_levels)
    _summary(c)
    _emit(serialize(c), a.out)
    return EXIT_OK


def cmd_compile_layer(a):
    if not a.model:
        raise ConfigError("compile-layer needs --model")
    c = H.compile_layer(_params(a), _load_layer(a.model), a.literal_levels)
    _summary(c)
    _emit(serialize(c), a.out)
    return EXIT_OK


def cmd_compile_transformer(a):
    if not a.model:
        raise ConfigError("compile-transformer needs --model")
    model = A.ModelSpec.from_json(_read_json(a.model))
    c = H.compile_transformer(_params(a, model.k), model, a.literal_levels)
    _summary(c)
    _emit(serialize(c), a.out)
    return EXIT_OK


def cmd_eval(a):
    with open(a.netlist) as f:
        c, _ = parse_netlist(f.read())
    bits = a.bits.strip()
    if any(ch not in "01" for ch in bits):
        raise ConfigError("input must be a 0/1 string")
    print("".join(map(str, evaluate(c, [int(ch) for ch in bits]))))
    return EXIT_OK


def _report(reports, out):
    for r in reports:
        cfg = r.config
        print(f"{cfg['target']:<10} n={cfg['n']} k={cfg['k']} p={cfg['p']} mode={cfg['mode']} "
              f"cases={r.cases} mismatches={r.total_mismatches} {r.verdict}")
        for m in r.mismatches:
            print(f"  in={m.inputs} circuit={m.circuit} oracle={m.oracle}")
    if out:
        with open(out, "w") as f:
            json.dump([r.to_json() for r in reports], f, sort_keys=True, indent=1)
    return EXIT_OK if all(r.verdict == "pass" for r in reports) else EXIT_MISMATCH


def cmd_verify_head(a):
    P = _params(a)
    cfg = Hn.VerifyConfig("head", n=P.n, k=P.k, p=P.p, score=parse_score(a.score, P.k),
                          mode=a.mode, trials=a.trials, seed=a.seed,
                          literal_levels=a.literal_levels)
    return _report([Hn.verify_equivalence(cfg)], a.out)


def cmd_verify_ops(a):
    cfgs = Hn.default_op_suite(a.trials, a.seed)
    if a.op:
        cfgs = [c for c in cfgs if c.target == f"op:{a.op}"]
    code = _report([Hn.verify_equivalence(c) for c in cfgs], a.out)
    if a.fuzz:
        for p in (4, 6, 8):
            rep = Hn.fuzz_decode(p, a.fuzz, a.seed)
            print(f"fuzz-decode p={p} patterns={rep['trials']} accepted={rep['accepted']} "
                  f"wrong={rep['bad']}")
            if rep["bad"]:
                code = EXIT_MISMATCH
    return code


def cmd_stats(a):
    ns = range(a.n_min, a.n_max + 1)
    sched = (a.c0, a.c1) if a.c0 is not None else None
    p = None if sched else a.p
    try:
        res = Hn.growth_stats(ns, a.k, p=p, schedule=sched, spec=parse_score(a.score, a.k),
                              max_gates=a.max_gates)
        code = EXIT_OK
    except Hn.BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        res, code = exc.result, EXIT_CONFIG
    buf = io.StringIO()
    Hn.write_growth_csv(res.rows, buf)
    if a.csv:
        with open(a.csv, "w") as f:
            f.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    if res.coeffs:
        poly = " + ".join(f"({c})*n^{i}" for i, c in enumerate(res.coeffs))
        print(f"size = {poly}; exact on all rows: {res.fit_exact}", file=sys.stderr)
    print(f"depth constant: {res.depth_constant}", file=sys.stderr)
    return code


def cmd_demo(a):
    rep = Hn.demo_majority(a.n_max, a.p)
    for r in rep.rows:
        print(f"n={r.n:<3} size={r.size:<8} depth={r.depth} words={r.words:<5} "
              f"mismatches={r.mismatches} agree_with_majority={r.agree_with_majority}/{r.words}")
    print(f"circuit == reference: {rep.verdict}; "
          f"reference agrees with majority on {rep.agreement:.4f} of words")
    return EXIT_OK if rep.verdict == "pass" else EXIT_MISMATCH


def cmd_audit(a):
    spec = parse_score(a.score, a.k)
    ok = True
    for n in a.n:
        P = Params.from_schedule(n, a.k, a.c0, a.c1) if a.c0 is not None else Params(n, a.k, a.p)
        buf = io.StringIO()
        st = H.emit_streaming(P, spec, buf, a.literal_levels)
        same = buf.getvalue() == serialize(H.compile_head(P, spec, a.literal_levels))
        bound = st.bound_holds(n)
        ok &= same and bound
        print(json.dumps({"n": n, "p": P.p, "identical": same, "bound_holds": bound,
                          "C": H.AUDIT_C, "peak_counter_bits": st.peak_counter_bits,
                          "peak_live_counters": st.peak_live_counters,
                          "gates_emitted": st.gates_emitted, "bytes_emitted": st.bytes_emitted}))
    return EXIT_OK if ok else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tc0attn", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(sp, n=True):
        if n:
            sp.add_argument("--n", type=int, default=2)
        sp.add_argument("--k", type=int, default=1)
        sp.add_argument("--p", type=int)
        sp.add_argument("--c0", type=float)
        sp.add_argument("--c1", type=float)
        sp.add_argument("--score", default="dot")
        sp.add_argument("--literal-levels", action="store_true")
        sp.add_argument("--out")

    for name, fn in (("compile-head", cmd_compile_head), ("compile-layer", cmd_compile_layer),
                     ("compile-transformer", cmd_compile_transformer)):
        sp = sub.add_parser(name)
        common(sp)
        sp.add_argument("--model")
        sp.set_defaults(fn=fn)

    sp = sub.add_parser("eval")
    sp.add_argument("netlist")
    sp.add_argument("bits")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("verify-head")
    common(sp)
    sp.add_argument("--mode", choices=["exhaustive", "random"], default="random")
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_verify_head)

    sp = sub.add_parser("verify-ops")
    sp.add_argument("--op", choices=Hn.OP_NAMES)
    sp.add_argument("--fuzz", type=int, default=0, metavar="N",
                    help="also feed N raw bit patterns per precision to the decoder")
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_verify_ops)

    sp = sub.add_parser("stats")
    common(sp, n=False)
    sp.add_argument("--n-min", type=int, default=2)
    sp.add_argument("--n-max", type=int, default=20)
    sp.add_argument("--csv")
    sp.add_argument("--max-gates", type=int)
    sp.set_defaults(fn=cmd_stats)

    sp = sub.add_parser("demo-majority")
    sp.add_argument("--n-max", type=int, default=10)
    sp.add_argument("--p", type=int, default=10)
    sp.set_defaults(fn=cmd_demo)

    sp = sub.add_parser("audit-uniformity")
    common(sp, n=False)
    sp.add_argument("--n", type=int, nargs="+", default=[2, 8, 16])
    sp.set_defaults(fn=cmd_audit)
    return ap


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    if getattr(a, "p", None) is None and getattr(a, "c0", None) is None and a.cmd in (
            "compile-head", "compile-layer", "compile-transformer", "verify-head", "stats",
            "audit-uniformity"):
        a.p = 6
    try:
        return a.fn(a)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NetlistParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CircuitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc, OSError) else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
