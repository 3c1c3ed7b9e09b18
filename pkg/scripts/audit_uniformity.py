"""Stream head netlists and compare them with the in-memory compiler."""

import io
import math
import sys

from tc0attn import attention as A
from tc0attn import head_compiler as H
from tc0attn.circuit import serialize
from tc0attn.floatp import Params

ns = [int(x) for x in sys.argv[1:]] or [2, 8, 16]
spec = A.ScoreSpec("dot")
for n in ns:
    P = Params(n, 1, 6)
    buf = io.StringIO()
    st = H.emit_streaming(P, spec, buf)
    same = buf.getvalue() == serialize(H.compile_head(P, spec))
    ratio = st.peak_counter_bits / max(1, math.ceil(math.log2(n)))
    print(f"n={n:<3} identical={same} gates={st.gates_emitted} "
          f"counter_bits={st.peak_counter_bits} bits/ceil(log2 n)={ratio:.1f} (C={H.AUDIT_C})")
