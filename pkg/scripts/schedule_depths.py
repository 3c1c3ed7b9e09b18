"""Depth of compile_head under the precision schedule p = ceil(c1*log2 n) + c0."""

import sys

from tc0attn import attention as A
from tc0attn import head_compiler as H
from tc0attn.floatp import Params

c0, c1 = (float(x) for x in sys.argv[1:3]) if len(sys.argv) > 2 else (2, 2)
for n in (4, 8, 16):
    P = Params.from_schedule(n, 1, c0, c1)
    c = H.compile_head(P, A.ScoreSpec("dot"))
    print(f"n={n:<3} p={P.p:<3} size={c.size:<9} depth={c.depth}")
