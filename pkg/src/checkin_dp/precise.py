"""Reference evaluations of the accounting formulas in arbitrary precision.

This module does not share code with :mod:`checkin_dp.accountant`. Each formula is
written out again from its plain statement, using ``mpmath`` at 60 significant
digits, so cancellation in ``e^eps0 - 1`` cannot hide a bug in the fast path.
Results are returned as ``mpmath.mpf``; call ``float()`` to compare.
"""

from __future__ import annotations

from mpmath import mp, mpf

DIGITS = 60


def _m(x):
    return mpf(x)


def fixed_window_eps(eps0, delta, m, p0):
    with mp.workdps(DIGITS):
        e0, d, m, p0 = _m(eps0), _m(delta), _m(m), _m(p0)
        a = mp.exp(e0)
        first = p0 * (a - 1) * mp.sqrt(2 * a * mp.log(1 / d) / m)
        second = p0 ** 2 * a * (a - 1) ** 2 / (2 * m)
        return +(first + second)


def replacement_eps(eps0, delta, m, w_max):
    with mp.workdps(DIGITS):
        e0, d, m, w = _m(eps0), _m(delta), _m(m), _m(w_max)
        a = mp.exp(e0)
        return +(w ** 2 * a * (a - 1) ** 2 / (2 * m)
                 + w * (a - 1) * mp.sqrt(2 * a * mp.log(1 / d) / m))


def sliding_eps(eps0, delta, m):
    with mp.workdps(DIGITS):
        e0, d, m = _m(eps0), _m(delta), _m(m)
        a = mp.exp(e0)
        return +(a * (a - 1) ** 2 / (2 * m) + (a - 1) * mp.sqrt(2 * a * mp.log(1 / d) / m))


def avg_eps(eps0, delta, delta2, n, m):
    with mp.workdps(DIGITS):
        e0, d, d2, n, m = map(_m, (eps0, delta, delta2, n, m))
        eps1 = mp.sqrt(1 / n + 1 / m) + mp.sqrt(mp.log(1 / d2) / n)
        g = mp.exp(e0) - 1
        return +(mp.exp(4 * e0) * g ** 2 * eps1 ** 2 / 2
                 + mp.exp(2 * e0) * g * eps1 * mp.sqrt(2 * mp.log(1 / d)))


def swap_eps(eps0, delta, n):
    with mp.workdps(DIGITS):
        e0, d, n = _m(eps0), _m(delta), _m(n)
        g = mp.exp(e0) - 1
        return +(mp.exp(3 * e0) * g ** 2 / (2 * n)
                 + mp.exp(3 * e0 / 2) * g * mp.sqrt(2 * mp.log(1 / d) / n))


shuffle_new_eps = swap_eps


def shuffle_old_eps(eps0, delta, n):
    with mp.workdps(DIGITS):
        e0, d, n = _m(eps0), _m(delta), _m(n)
        c = 2 * mp.exp(2 * e0) * (mp.exp(e0) - 1)
        return +(c * (mp.exp(c / n) - 1) + c * mp.sqrt(2 * mp.log(1 / d) / n))


def bin_sgd_eps(eps0, delta, ell):
    with mp.workdps(DIGITS):
        e0, d = _m(eps0), _m(delta)
        n = mpf(sum(ell))
        norm = mp.sqrt(mp.fsum(mpf(v) ** 2 for v in ell))
        g = mp.exp(e0) - 1
        return +(norm ** 2 * mp.exp(4 * e0) * g ** 2 / (2 * n ** 2)
                 + norm * mp.exp(2 * e0) * g * mp.sqrt(2 * mp.log(1 / d)) / n)


def het_eps(a, b, k, delta):
    with mp.workdps(DIGITS):
        a, b, k, d = map(_m, (a, b, k, delta))
        return +(a ** 2 / (2 * k * (1 - b)) + mp.sqrt(2 * a ** 2 * mp.log(1 / d) / (k * (1 - b))))


def kov_eps(eps_list, delta):
    with mp.workdps(DIGITS):
        d = _m(delta)
        es = [_m(e) for e in eps_list]
        lin = mp.fsum((mp.exp(e) - 1) * e / (mp.exp(e) + 1) for e in es)
        return +(lin + mp.sqrt(2 * mp.log(1 / d) * mp.fsum(e ** 2 for e in es)))


def advanced_eps(eps1, k, delta_slack):
    with mp.workdps(DIGITS):
        e1, k, ds = _m(eps1), _m(k), _m(delta_slack)
        return +(e1 * mp.sqrt(2 * k * mp.log(1 / ds)) + k * e1 * (mp.exp(e1) - 1))


def epoch_eps(eps0, n, m, beta, delta_slack):
    """Per-run fixed-window epsilon at ``p0 = m/n`` composed ``n // m`` times."""
    with mp.workdps(DIGITS):
        per_run = fixed_window_eps(eps0, beta, m, mpf(m) / mpf(n))
        return advanced_eps(per_run, int(n) // int(m), delta_slack)


def cheu_threshold(eps0, delta1):
    with mp.workdps(DIGITS):
        e0, d1 = _m(eps0), _m(delta1)
        inner = 2 + mp.log(2 / d1) / mp.log(1 / (1 - mp.exp(-5 * e0)))
        return +((1 - mp.exp(-e0)) * d1 / (4 * mp.exp(e0) * inner))


def bin_load_bound(n, m, delta):
    with mp.workdps(DIGITS):
        n, m, d = map(_m, (n, m, delta))
        return +(mp.sqrt(n + n ** 2 / m) + mp.sqrt(n * mp.log(1 / d)))


def gaussian_eps0(clip_norm, sigma, delta0):
    with mp.workdps(DIGITS):
        return +(2 * _m(clip_norm) / _m(sigma) * mp.sqrt(2 * mp.log(mpf("1.25") / _m(delta0))))


def lr_fixed(i, radius, lipschitz, sigma, p, n, p0, m):
    with mp.workdps(DIGITS):
        i, R, L, s, p, n, p0, m = map(_m, (i, radius, lipschitz, sigma, p, n, p0, m))
        return +(R * (1 - 2 * mp.exp(-n * p0 / m)) / mp.sqrt((p * s ** 2 + L ** 2) * i))


def lr_avg(i, radius, lipschitz, sigma, p, n, m):
    with mp.workdps(DIGITS):
        i, R, L, s, p, n, m = map(_m, (i, radius, lipschitz, sigma, p, n, m))
        return +(R * mp.sqrt(n) / mp.sqrt((m * p * s ** 2 + n * L ** 2) * i))


def lr_smooth(radius, lipschitz, smoothness, sigma, p, n, m):
    with mp.workdps(DIGITS):
        R, L, beta, s, p, n, m = map(_m, (radius, lipschitz, smoothness, sigma, p, n, m))
        return +(R * mp.sqrt(n) / (beta * R * mp.sqrt(n) + m * mp.sqrt(L ** 2 + p * s ** 2)))
