"""Independent oracles used to freeze expected values for the test suite.

Everything in here deliberately avoids the library's own code paths:

* ``phi_riemann``       brute-force midpoint Riemann sum for the angular
                        kernel average (n = 2), 10^6 panels by default.
* ``phi_hyp``           closed form via the Gauss hypergeometric series,
                        evaluated in arbitrary precision with mpmath.
* ``hardy_constant_mp`` tanh-sinh quadrature of the sharp-constant integral
                        in arbitrary precision, with the r -> 1 endpoint
                        mapped through r = 1 - exp(-s).
* ``dense_energy_sum``  from-scratch double sum of the discrete nonlocal
                        energy over all node pairs.

Run ``python tests/oracles.py`` to regenerate the frozen tables that the
tests assert against.
"""

from __future__ import annotations

import mpmath as mp
import numpy as np


def phi_riemann(alpha: float, p: float, r: float, panels: int = 1_000_000) -> float:
    """Midpoint Riemann sum for the n = 2 kernel average.

    Uses the t = sin(theta) substitution so the endpoint weight
    (1 - t^2)^(-1/2) disappears exactly; the two-point sphere carries
    counting measure 2.
    """
    pa = p * alpha
    theta = (np.arange(panels) + 0.5) / panels * np.pi - np.pi / 2.0
    vals = (1.0 - 2.0 * r * np.sin(theta) + r * r) ** (-(2.0 + pa) / 2.0)
    return 2.0 * float(vals.sum()) * np.pi / panels


def phi_hyp(n: int, alpha, p, r) -> mp.mpf:
    """Kernel average via closed forms at the current mpmath precision."""
    r = mp.mpf(r)
    pa = mp.mpf(p) * mp.mpf(alpha)
    if n == 1:
        return (1 - r) ** (-(1 + pa)) + (1 + r) ** (-(1 + pa))
    if n == 2:
        s = (2 + pa) / 2
        return 2 * mp.pi * mp.hyp2f1(s, s, 1, r * r)
    raise NotImplementedError("oracle covers n in {1, 2}")


def hardy_constant_mp(n: int, alpha, p, dps: int = 40) -> mp.mpf:
    """Sharp fractional Hardy constant by high-precision quadrature.

    Splits the radial integral at 1/2; the outer half is integrated in
    s = -log(1 - r) where the integrand decays like exp(-p(1-alpha)s).
    The tail evaluation raises the working precision with s so that
    1 - exp(-s) never rounds to 1.
    """
    with mp.workdps(dps):
        a = mp.mpf(alpha)
        pp = mp.mpf(p)
        pa = pp * a
        beta = (n - pa) / pp
        if beta == 0:
            raise ValueError("degenerate: p equals n/alpha")

        def integrand(r):
            return r ** (pa - 1) * abs(1 - r ** beta) ** pp * phi_hyp(n, a, pp, r)

        # inner piece in u = r^pa: for tiny p*alpha the raw integrand keeps
        # substantial mass below the working-precision radius 10^-dps,
        # which tanh-sinh in r silently truncates
        def inner_u(u):
            r = u ** (1 / pa)
            return abs(1 - r ** beta) ** pp * phi_hyp(n, a, pp, r) / pa

        half = mp.mpf(1) / 2
        inner = mp.quad(inner_u, [0, half ** pa])

        def tail(s):
            with mp.extraprec(int(1.5 * float(s)) + 30):
                r = 1 - mp.e ** (-s)
                val = integrand(r) * mp.e ** (-s)
            return val

        decay = float(pp * (1 - a))
        s_max = mp.mpf(max(80.0, 140.0 / decay))
        outer = mp.quad(tail, [mp.log(2), 5, s_max])
        return 2 * (inner + outer)


def hardy_constant_mp_direct(n: int, alpha, p, dps: int = 25) -> mp.mpf:
    """Second route: single tanh-sinh pass straight over r in (0, 1)."""
    with mp.workdps(dps):
        a = mp.mpf(alpha)
        pp = mp.mpf(p)
        pa = pp * a
        beta = (n - pa) / pp
        if beta == 0:
            raise ValueError("degenerate: p equals n/alpha")

        def integrand(r):
            return r ** (pa - 1) * abs(1 - r ** beta) ** pp * phi_hyp(n, a, pp, r)

        return 2 * mp.quad(integrand, [0, mp.mpf(1) / 2, 1])


def dense_energy_sum(coords, weights, interior, u_int, n, alpha, p,
                     adjacent_factor=None, tail=None):
    """Double sum of the discrete nonlocal energy over every node pair.

    ``u_int`` holds interior values; exterior nodes contribute zeros.
    ``adjacent_factor`` multiplies kernel entries of touching 1-d cells,
    ``tail`` is an optional per-interior-node far-field coefficient; both
    must be supplied by the caller so this stays a plain transcription of
    the pair sum.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float).T).T
    m = len(weights)
    u = np.zeros(m)
    u[np.asarray(interior)] = u_int
    pa = p * alpha
    total = 0.0
    for i in range(m):
        for j in range(m):
            if i == j or (not interior[i] and not interior[j]):
                continue
            d = np.linalg.norm(coords[i] - coords[j])
            k = weights[i] * weights[j] * d ** (-(n + pa))
            if adjacent_factor is not None and abs(i - j) == 1:
                k *= adjacent_factor
            total += k * abs(u[i] - u[j]) ** p
    if tail is not None:
        idx = [i for i in range(m) if interior[i]]
        for row, i in enumerate(idx):
            total += 2.0 * weights[i] * tail[row] * abs(u[i]) ** p
    return total


ALPHAS = (0.25, 0.5, 0.75)
PS = (2.0, 3.0)


def regenerate() -> None:
    print("# frozen oracle values (regenerated by tests/oracles.py)")
    print("HARDY_CONSTANTS = {")
    for n in (1, 2):
        for a in ALPHAS:
            for p in PS:
                if abs(p - n / a) < 1e-12:
                    print(f"    ({n}, {a}, {p}): None,  # degenerate p = n/alpha")
                    continue
                c = hardy_constant_mp(n, a, p)
                c2 = hardy_constant_mp_direct(n, a, p)
                rel = abs(c - c2) / abs(c)
                print(f"    ({n}, {a}, {p}): {mp.nstr(c, 17)},  # cross-route rel diff {mp.nstr(rel, 3)}")
    print("}")
    r = 0.5
    v_riemann = phi_riemann(0.5, 2.0, r)
    v_hyp = float(phi_hyp(2, 0.5, 2.0, r))
    print(f"PHI_2_HALF = {v_hyp!r}  # riemann 1e6 panels: {v_riemann!r}")
    print(f"# |riemann - hyp| = {abs(v_riemann - v_hyp):.3e}")
    with mp.workdps(30):
        extra = hardy_constant_mp(1, 0.9, 1.0)
        print(f"HARDY_1_09_1 = {mp.nstr(extra, 17)}")


if __name__ == "__main__":
    regenerate()
