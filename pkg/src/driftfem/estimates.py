"""Explicit constants of the energy, boundedness and L1-stability estimates.

Everything here is closed-form arithmetic on ``(lam, d, q, two_star, |U|)``.
The constants are valid upper bounds, not sharp ones.

Notation used in the code:

* ``two_star``   lower exponent (2d/(d+2) for d >= 3, free in (1, 2) for d = 2)
* ``two_upper``  its Sobolev partner, 2d/(d-2) for d >= 3 and
                 two_star / (two_star - 1) for d = 2
* ``N``          Sobolev constant, ``||u||_{two_upper} <= N ||grad u||_2``
"""

import math
from dataclasses import dataclass, asdict

__all__ = [
    "EstimateConstants",
    "lower_exponent",
    "upper_exponent",
    "sobolev_N",
    "energy_C1",
    "energy_bound_factor",
    "moser_constants",
    "moser_bracket",
    "moser_eps",
    "compute_constants",
    "linf_bound",
    "stability_rhs",
]


def _check_d(d):
    if int(d) != d or d < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {d}")


def lower_exponent(d, two_star=1.5):
    _check_d(d)
    if d >= 3:
        return 2.0 * d / (d + 2.0)
    if not (1.0 < two_star < 2.0):
        raise ValueError(f"two_star must lie in (1, 2) for d = 2, got {two_star}")
    return float(two_star)


def upper_exponent(d, two_star=1.5):
    _check_d(d)
    if d >= 3:
        return 2.0 * d / (d - 2.0)
    ts = lower_exponent(d, two_star)
    return ts / (ts - 1.0)


def sobolev_N(d, two_star=1.5, volume=1.0):
    """Sobolev constant: ``2(d-1)/(d-2)`` for d >= 3, ``(2^*/2) |U|^(1/2^*)`` for d = 2."""
    _check_d(d)
    if volume <= 0:
        raise ValueError("volume must be positive")
    if d >= 3:
        return 2.0 * (d - 1.0) / (d - 2.0)
    p = upper_exponent(d, two_star)
    return p / 2.0 * volume ** (1.0 / p)


def energy_bound_factor(eps, lam, N):
    """Gradient bound ``||grad u||_2^2 / S`` obtained from a given Young parameter `eps`.

    From ``lam |grad u|^2 <= (N^2 + 1) eps |grad u|^2 + S / (4 eps)`` with
    ``S = ||f||^2 + ||F||^2``; only meaningful for ``0 < eps < lam / (N^2 + 1)``.
    """
    a = N * N + 1.0
    return 1.0 / (4.0 * eps * (lam - a * eps))


def energy_C1(lam, d, two_star=1.5, volume=1.0):
    """Constant of the energy estimate for the full H^1_0 norm.

    The Young parameter ``eps = lam / (2 (N^2 + 1))`` gives
    ``||grad u||_2 <= sqrt(N^2 + 1) / lam * (||f||_{two_star} + ||F||_2)``;
    Hoelder plus the Sobolev bound give
    ``||u||_2 <= N |U|^(1/2 - 1/two_upper) ||grad u||_2``, hence

        C1 = sqrt(N^2 + 1) * sqrt(1 + N^2 |U|^(1 - 2/two_upper)) / lam.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    N = sobolev_N(d, two_star, volume)
    p = upper_exponent(d, two_star)
    eps = lam / (2.0 * (N * N + 1.0))
    grad_factor = math.sqrt(energy_bound_factor(eps, lam, N))
    poincare = math.sqrt(1.0 + N * N * volume ** (1.0 - 2.0 / p))
    return grad_factor * poincare


def _pow(base, exponent):
    try:
        return base**exponent
    except OverflowError:
        return math.inf


def _moser_base(lam, d, q, two_star, volume):
    _check_d(d)
    ts = lower_exponent(d, two_star)
    if not (q > d / 2.0 and q >= ts):
        raise ValueError(f"need q > d/2 and q >= two_star, got q={q}, d={d}, two_star={ts}")
    d0 = float(d) if d >= 3 else 1.0 + q
    s = 2.0 * d0 / (d0 - 2.0)
    N1 = 2.0 * (d - 1.0) / (d - 2.0) if d >= 3 else 0.5 * s * volume ** (1.0 / s)
    e = d0 / (2.0 * q - d0)
    K1 = (2.0 * q - d0) / (2.0 * q) * (2.0 * q / d0) ** (-e)
    c0 = lam / (2.0 * N1 * math.sqrt(lam + 1.0))
    return d0, s, N1, e, K1, c0


def moser_eps(beta, lam, d, q, two_star=1.5, volume=1.0):
    """Interpolation parameter used at step ``beta`` of the iteration."""
    _, _, _, _, _, c0 = _moser_base(lam, d, q, two_star, volume)
    return c0 / (beta + 2.0)


def moser_bracket(beta, lam, d, q, two_star=1.5, volume=1.0):
    """Bound on ``||grad v||_2^2 / ||v||_2^2`` at step `beta`, before any simplification.

    Combines the Caccioppoli-type inequality
    ``lam/P |grad v|^2 <= (1 + P/lam) ||v||_{2q/(q-1)}^2`` (``P = beta + 2``)
    with the interpolation bound
    ``||v||_{2q/(q-1)} <= N1 eps |grad v| + Q ||v||_2`` at the prescribed
    ``eps``; squaring with ``(a+b)^2 <= 2a^2 + 2b^2`` and absorbing half of
    the gradient gives ``(4P/lam)(1 + P/lam) Q^2``.
    """
    d0, s, N1, e, K1, c0 = _moser_base(lam, d, q, two_star, volume)
    P = beta + 2.0
    eps = c0 / P
    Q = eps * volume ** (1.0 / s - 0.5) + K1 * eps ** (-e)
    return 4.0 * P / lam * (1.0 + P / lam) * Q * Q


def moser_constants(lam, d, q, two_star=1.5, volume=1.0):
    """Constants of the Moser iteration leading to the L^inf bound.

    ``theta = 2 + 2 d0/(2q - d0)`` is the growth exponent of
    :func:`moser_bracket` in ``P = beta + 2``, which makes it the smallest
    exponent for which a finite ``K2`` can dominate the bracket for every
    ``beta >= 0``.  Using ``1/P <= P^e`` and ``1 + P/lam <= P (1/2 + 1/lam)``
    for ``P >= 2``::

        K2 = (4/lam) (1/2 + 1/lam) (c0 |U|^(1/s - 1/2) + K1 c0^(-e))^2.

    Returns a dict with d0, s, N1, sigma, theta, K1..K6 and C2 (= K6).
    When ``sigma`` is close to 1 (d = 2 with ``two_star`` near 2) K5 exceeds
    the double range; it and everything built on it are then ``inf``, a
    valid but vacuous bound.
    """
    d0, s, N1, e, K1, c0 = _moser_base(lam, d, q, two_star, volume)
    ts = lower_exponent(d, two_star)
    p = upper_exponent(d, two_star)
    N = sobolev_N(d, two_star, volume)
    C1 = energy_C1(lam, d, two_star, volume)

    theta = 2.0 + 2.0 * e
    K2 = 4.0 / lam * (0.5 + 1.0 / lam) * (c0 * volume ** (1.0 / s - 0.5) + K1 * c0 ** (-e)) ** 2
    K3 = volume ** (1.0 / p - 0.5) + N * math.sqrt(K2)
    sigma = d / (d - 2.0) if d >= 3 else p / 2.0
    K4 = (K3 * K3 * 2.0**theta + 1.0) * sigma**theta
    series = sigma / (sigma - 1.0) ** 2  # sum_{j>=0} j / sigma^j
    K5 = _pow(K4, series)
    K6 = C1 * math.sqrt(K5) * (volume ** (1.0 / ts - 1.0 / q) + volume ** (0.5 - 0.5 / q)) + math.sqrt(K5) * math.sqrt(volume)
    return {
        "d0": d0, "s": s, "N1": N1, "sigma": sigma, "theta": theta, "series": series,
        "K1": K1, "K2": K2, "K3": K3, "K4": K4, "K5": K5, "K6": K6, "C2": K6,
    }


@dataclass(frozen=True)
class EstimateConstants:
    d: int
    q: float
    two_star: float
    two_star_conj: float
    volume: float
    lam: float
    N: float
    C1: float
    C2: float
    C3: float
    d0: float
    sigma: float
    theta: float
    K1: float
    K2: float
    K3: float
    K4: float
    K5: float
    K6: float

    def C4(self, f_norm_2star, F_norm_2):
        return self.C1 * (f_norm_2star + F_norm_2)

    def as_dict(self):
        return asdict(self)


def compute_constants(lam, d=2, q=2.0, two_star=1.5, volume=1.0):
    """Every constant at once."""
    ts = lower_exponent(d, two_star)
    m = moser_constants(lam, d, q, ts, volume)
    C1 = energy_C1(lam, d, ts, volume)
    return EstimateConstants(
        d=int(d), q=float(q), two_star=ts, two_star_conj=upper_exponent(d, ts), volume=float(volume),
        lam=float(lam), N=sobolev_N(d, ts, volume), C1=C1, C2=m["C2"], C3=math.sqrt(volume) * C1,
        d0=m["d0"], sigma=m["sigma"], theta=m["theta"],
        K1=m["K1"], K2=m["K2"], K3=m["K3"], K4=m["K4"], K5=m["K5"], K6=m["K6"],
    )


def linf_bound(constants, f_norm_q, F_norm_2q):
    """``C2 (||f||_q + ||F||_{2q})``."""
    if f_norm_q < 0 or F_norm_2q < 0:
        raise ValueError("norms must be nonnegative")
    return constants.C2 * (f_norm_q + F_norm_2q)


def stability_rhs(constants, dB2, dc, dA_grad_u, df1, dF2, alpha, f_norm_2star, F_norm_2):
    """Right-hand side of the L1-stability estimate.

    ``alpha^-1 C4 (dB2 + N dc) + C3 dA_grad_u + alpha^-1 df1 + C3 dF2`` with
    ``C4 = C1 (||f||_{two_star} + ||F||_2)`` and ``C3 = |U|^(1/2) C1``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    vals = (dB2, dc, dA_grad_u, df1, dF2, f_norm_2star, F_norm_2)
    if any(v < 0 for v in vals):
        raise ValueError("perturbation sizes and norms must be nonnegative")
    C4 = constants.C4(f_norm_2star, F_norm_2)
    C3 = constants.C3
    return C4 * (dB2 + constants.N * dc) / alpha + C3 * dA_grad_u + df1 / alpha + C3 * dF2
