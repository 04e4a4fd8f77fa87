"""Manufactured-solution convergence for pure diffusion and for a drift problem.

Prints the error table and observed orders; P1 should give about 2 in L2
and about 1 in H1.
"""

from driftfem import mms_convergence_study

for name in ("diffusion", "drift"):
    res = mms_convergence_study(name, levels=(8, 16, 32, 64))
    print(f"\n{name}")
    print(f"{'n':>4} {'h':>9} {'L2 err':>11} {'H1 err':>11} {'L2 ord':>7} {'H1 ord':>7}")
    for n, h, e2, e1, o2, o1 in res.rows:
        fmt = lambda o: "   -   " if o != o else f"{o:7.3f}"  # nan on the first row
        print(f"{n:4d} {h:9.5f} {e2:11.3e} {e1:11.3e} {fmt(o2)} {fmt(o1)}")
    print("passed:", res.passed)
