"""Majority-of-a's demo: circuit vs reference on every word up to n_max."""

import sys

from tc0attn import harness as Hn

n_max = int(sys.argv[1]) if len(sys.argv) > 1 else 10
rep = Hn.demo_majority(n_max, 10)
for r in rep.rows:
    print(f"n={r.n:<3} size={r.size:<8} depth={r.depth} words={r.words:<5} "
          f"mismatches={r.mismatches} agree={r.agree_with_majority}/{r.words}")
print(f"verdict={rep.verdict} agreement={rep.agreement:.4f} elapsed={rep.elapsed:.1f}s")
