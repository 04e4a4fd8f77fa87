"""Random coefficient suite checked against the a-priori bounds at two resolutions.

Each case gets energy, L-infinity and L^r-contraction records; the
``required slack`` column shows how much relaxation a record would need
(zero means it holds outright).
"""

import math
import time

from driftfem.harness import random_suite, required_slack, run_suite
from driftfem.mesh import build_structured_mesh

cases = random_suite(seed=0, n_cases=20)
for n in (32, 64):
    mesh = build_structured_mesh(n, n)
    t = time.perf_counter()
    rep = run_suite(cases, mesh, rs=(1, 2, math.inf), slack=0.02, with_duality=False)
    dt = time.perf_counter() - t
    worst = max(rep.records, key=lambda r: r.measured / r.bound if r.bound > 0 else 0)
    print(f"{n}x{n}: {len(rep.records)} records in {dt:.1f}s, failures={len(rep.failures())}, "
          f"required slack={max(required_slack(r) for r in rep.records):.3g}")
    print(f"  tightest: {worst.case_id} {worst.check} measured/bound={worst.measured / worst.bound:.3g}")
print()
print(rep.summary())
