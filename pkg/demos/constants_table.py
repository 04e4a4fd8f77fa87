"""Table of the explicit estimate constants for a few parameter choices."""

from driftfem import compute_constants

print(f"{'d':>2} {'q':>4} {'2_*':>5} {'lam':>5} {'N':>7} {'C1':>9} {'theta':>6} {'C2':>11}")
for d, q, ts, lam in [(2, 2.0, 1.5, 1.0), (2, 2.0, 1.5, 0.5), (2, 3.0, 1.2, 1.0),
                      (3, 2.0, 1.2, 1.0), (3, 4.0, 1.2, 2.0), (4, 3.0, 4 / 3, 1.0)]:
    k = compute_constants(lam, d, q, ts)
    print(f"{d:2d} {q:4.1f} {k.two_star:5.3f} {lam:5.2f} {k.N:7.3f} {k.C1:9.4f} {k.theta:6.2f} {k.C2:11.4g}")
