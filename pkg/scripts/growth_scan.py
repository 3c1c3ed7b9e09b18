"""Size/depth scan of compile_head; writes results/growth_k{k}_p{p}.csv."""

import argparse
from pathlib import Path

from tc0attn import harness as Hn

ap = argparse.ArgumentParser()
ap.add_argument("--k", type=int, default=1)
ap.add_argument("--p", type=int, default=6)
ap.add_argument("--n-min", type=int, default=2)
ap.add_argument("--n-max", type=int, default=20)
ap.add_argument("--outdir", default="results")
args = ap.parse_args()

res = Hn.growth_stats(range(args.n_min, args.n_max + 1), args.k, p=args.p)
out = Path(args.outdir)
out.mkdir(exist_ok=True)
path = out / f"growth_k{args.k}_p{args.p}.csv"
Hn.write_growth_csv(res.rows, str(path))
for r in res.rows:
    print(f"n={r.n:<3} size={r.size:<9} depth={r.depth}")
print("size(n) =", " + ".join(f"({c})n^{i}" for i, c in enumerate(res.coeffs)))
print("exact on every row:", res.fit_exact, "| depth constant:", res.depth_constant)
print("wrote", path)
