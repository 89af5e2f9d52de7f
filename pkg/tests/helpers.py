"""Shared oracles for the test suite.

Every oracle here is deliberately independent of the production code path it
checks: brute-force enumeration, direct formula evaluation, or a different
algebraic route to the same quantity.
"""

from fractions import Fraction
from itertools import combinations
from math import comb

from scipy.stats import chi2

from randisc import stein


def chi_square_pvalue(observed, expected_probs, trials):
    """Plain Pearson chi-square p-value against exact cell probabilities."""
    stat = 0.0
    dof = -1
    for obs, pr in zip(observed, expected_probs):
        exp = float(pr) * trials
        if exp == 0:
            assert obs == 0, "observed mass in a zero-probability cell"
            continue
        stat += (obs - exp) ** 2 / exp
        dof += 1
    return float(chi2.sf(stat, dof))


def balanced_vectors(n):
    """All sign vectors with zero sum, as tuples."""
    for pos in combinations(range(n), n // 2):
        u = [-1] * n
        for j in pos:
            u[j] = 1
        yield tuple(u)


def lazy_walk_oracle(r, p):
    """P[V = k] for V ~ R(r, p) via the difference-of-binomials identity
    (independent of the production step-convolution route)."""
    p = Fraction(p)
    a, b = p.numerator, p.denominator
    out = {}
    for k in range(-r, r + 1):
        num = sum(
            comb(r, x) * comb(r, x - k) * a ** (2 * x - k) * (b - a) ** (2 * r - 2 * x + k)
            for x in range(max(0, k), min(r, r + k) + 1)
        )
        out[k] = Fraction(num, b ** (2 * r))
    return out


def row_value_counts(row, radius=0):
    """Number of balanced u with |<u, row>| <= radius (direct enumeration)."""
    n = len(row)
    count = 0
    for u in balanced_vectors(n):
        if abs(sum(s * a for s, a in zip(u, row))) <= radius:
            count += 1
    return count


def even_rows(n):
    """All 0/1 rows of length n with even sum."""
    for mask in range(1 << n):
        row = [(mask >> j) & 1 for j in range(n)]
        if sum(row) % 2 == 0:
            yield tuple(row)


def brute_ratio_dense(n, p):
    """E[Z^2|P]/E[Z|P]^2 for one parity-conditioned Bernoulli row (m = 1),
    by full enumeration over even-parity rows."""
    p = Fraction(p)
    ez = Fraction(0)
    ez2 = Fraction(0)
    total = Fraction(0)
    for row in even_rows(n):
        w = sum(row)
        mass = p**w * (1 - p) ** (n - w)
        z = row_value_counts(row, 0)
        total += mass
        ez += mass * z
        ez2 += mass * z * z
    ez /= total
    ez2 /= total
    return ez2 / ez**2, ez


def brute_ratio_poisson_fixed(n, w, radius=0):
    """Same ratio for one Poisson row conditioned on weight w (m = 1), by
    enumeration of all n**w placements."""
    rows = {}
    total = n**w

    def rec(slots_left, row):
        if slots_left == 0:
            key = tuple(row)
            rows[key] = rows.get(key, 0) + 1
            return
        for j in range(n):
            row[j] += 1
            rec(slots_left - 1, row)
            row[j] -= 1

    rec(w, [0] * n)
    ez = Fraction(0)
    ez2 = Fraction(0)
    for row, cnt in rows.items():
        z = row_value_counts(row, radius)
        ez += Fraction(cnt, total) * z
        ez2 += Fraction(cnt, total) * z * z
    return ez2 / ez**2, ez


def random_birth_death(rng, w):
    """Valid random coefficient spec: a strictly decreasing to a_w = 0,
    b strictly increasing from b_0 = 0, small rational increments."""
    incs = [Fraction(rng.randint(1, 8), rng.randint(1, 8)) for _ in range(w)]
    a = [sum(incs[s:], Fraction(0)) for s in range(w)] + [Fraction(0)]
    incs_b = [Fraction(rng.randint(1, 8), rng.randint(1, 8)) for _ in range(w)]
    b = [Fraction(0)] + [sum(incs_b[: s + 1], Fraction(0)) for s in range(w)]
    return stein.BirthDeathSpec(w, tuple(a), tuple(b))


def check_inverse_guarantees(bd, t, with_oracle=True):
    """All four inverse guarantees, exactly; optionally cross-check against
    a forward-substitution linear solve."""
    mu = stein.stationary_pmf(bd)
    sol = stein.stein_invert(bd, t)
    image = stein.stein_apply(bd, sol.f)
    for s in range(bd.w + 1):
        assert image[s] == (1 if s == t else 0) - mu[t]
    f = sol.f
    for s in range(bd.w + 1):
        assert f[s] <= 0 if s <= t else f[s] >= 0
    for s in range(bd.w):
        if s == t:
            assert f[s + 1] >= f[s]
        else:
            assert f[s + 1] <= f[s]
    assert sol.max_delta() == sol.delta_f[t]
    assert sol.delta_f[t] <= min(1 / bd.a[t], 1 / bd.b[t])
    assert sol.l1_delta() <= 2 * sol.delta_f[t]
    if with_oracle:
        oracle = [Fraction(0)] * (bd.w + 2)
        for s in range(bd.w):
            target = (1 if s == t else 0) - mu[t]
            oracle[s + 1] = (target + bd.b[s] * oracle[s]) / bd.a[s]
        assert list(sol.f) == oracle


def brute_ratio_bernoulli_fixed(n, w):
    """Same ratio for one 0/1 row of exact weight w (m = 1)."""
    ez = Fraction(0)
    ez2 = Fraction(0)
    total = comb(n, w)
    for pos in combinations(range(n), w):
        row = [0] * n
        for j in pos:
            row[j] = 1
        z = row_value_counts(row, 0)
        ez += Fraction(z, total)
        ez2 += Fraction(z * z, total)
    return ez2 / ez**2, ez
