"""Bernoulli/Poisson matrix ensembles, the even-parity coupling, and
conditioned fixed-weight row samplers.

All sampling is exact: entries are drawn by rejection from rational weight
tables, so a sampled matrix follows the stated law *exactly* and the result
is a pure function of (spec, seed) on every platform.  Per-row substreams
come from counter-based key splitting (see rng.derive_key), so outputs do
not depend on evaluation order or thread count.
"""

import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .errors import InvariantViolation, ParameterError, UnsupportedDistributionError
from .locallimits import Pmf, binomial_pmf, truncated_poisson_pmf
from .rng import IntegerTable, Stream, derive_key, table_from_fractions

POISSON_SAMPLER_TAIL = Fraction(1, 2**60)
PINELIS_DEFAULT_TAIL = Fraction(1, 10**15)

# stream-domain tags, so sampling and coupling never share a substream
_DOMAIN_SAMPLE = 0x5A
_DOMAIN_COUPLE = 0xC0
_DOMAIN_FIXED = 0xF1


@dataclass(frozen=True)
class EnsembleSpec:
    """Parameters of an i.i.d. matrix ensemble.

    kind "bernoulli" uses param = p with 0 <= p <= 1/2 (callers wanting
    p > 1/2 must flip explicitly); kind "poisson" uses param = rate >= 0.
    n must be even.
    """

    kind: str
    m: int
    n: int
    param: Fraction
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "param", Fraction(self.param))
        if self.kind not in ("bernoulli", "poisson"):
            raise ParameterError(f"unknown ensemble kind {self.kind!r}")
        if self.m < 1 or self.n < 1:
            raise ParameterError("matrix dimensions must be positive")
        if self.n % 2:
            raise ParameterError(f"n must be even, got {self.n}")
        if self.kind == "bernoulli" and not 0 <= self.param <= Fraction(1, 2):
            raise ParameterError(f"bernoulli p={self.param} outside [0, 1/2]")
        if self.kind == "poisson" and self.param < 0:
            raise ParameterError(f"poisson rate {self.param} is negative")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must fit in 64 bits")


@dataclass(frozen=True)
class IntMatrix:
    """Dense m x n matrix of nonnegative integers, row-major."""

    m: int
    n: int
    entries: tuple

    def __post_init__(self):
        if len(self.entries) != self.m * self.n:
            raise ParameterError("entry count does not match dimensions")
        if any(e < 0 for e in self.entries):
            raise ParameterError("entries must be nonnegative")

    @classmethod
    def from_rows(cls, rows):
        rows = [list(r) for r in rows]
        if not rows:
            raise ParameterError("matrix needs at least one row")
        n = len(rows[0])
        if any(len(r) != n for r in rows):
            raise ParameterError("ragged rows")
        return cls(len(rows), n, tuple(v for r in rows for v in r))

    def row(self, i):
        return self.entries[i * self.n : (i + 1) * self.n]

    def rows(self):
        return [self.row(i) for i in range(self.m)]

    def row_sums(self):
        return [sum(self.row(i)) for i in range(self.m)]

    def to_numpy(self):
        import numpy as np

        return np.array(self.entries, dtype=np.int64).reshape(self.m, self.n)


@lru_cache(maxsize=64)
def _entry_table(kind, param):
    if kind == "bernoulli":
        return IntegerTable([param.denominator - param.numerator, param.numerator])
    pmf, _ = truncated_poisson_pmf(param, POISSON_SAMPLER_TAIL)
    return table_from_fractions(pmf.weights)


def sample(spec: EnsembleSpec) -> IntMatrix:
    """Draw a matrix from the ensemble; deterministic given (spec, seed)."""
    table = _entry_table(spec.kind, spec.param)
    entries = []
    for i in range(spec.m):
        stream = Stream(derive_key(spec.seed, _DOMAIN_SAMPLE, i))
        entries.extend(table.draw(stream) for _ in range(spec.n))
    return IntMatrix(spec.m, spec.n, tuple(entries))


# ---------------------------------------------------------------------------
# Parity coupling


@dataclass(frozen=True)
class CouplingTable:
    """Joint law of (X, X') where X ~ base and X' ~ base conditioned even,
    with |X - X'| <= 1 almost surely.

    `t` maps each even integer 2j to the mass P(X = 2j-1, X' = 2j); the rest
    of an odd column falls to 2j-2.  `truncation` records the cut point when
    the base pmf was truncated (None for finitely supported bases).
    """

    base: Pmf
    even_marginal: Pmf
    t: dict
    joint: dict
    truncation: int = None

    def even_step_weights(self, x):
        """Integer weights for X' in {x+1, x-1} given an odd value X = x."""
        up = self.joint.get((x, x + 1), Fraction(0))
        down = self.joint.get((x, x - 1), Fraction(0))
        den = up.denominator * down.denominator
        return int(up * den), int(down * den)


def pinelis_joint(mu: Pmf, truncation=None) -> CouplingTable:
    """Couple mu with mu-conditioned-even so the two values differ by <= 1.

    The overlap masses t_{2j} follow the recursion
    t_{2j+2} = t_{2j} + mu_{2j} (1 - 1/Q) + mu_{2j+1}, with Q the even mass
    of mu.  Requires mu log-concave (binomial with p <= 1/2, Poisson);
    violation of 0 <= t_{2j} <= mu_{2j-1} is detected exactly and raised.
    """
    if mu.mode != "exact":
        raise ParameterError("pinelis_joint requires an exact pmf")
    if mu.lo < 0:
        raise ParameterError("pinelis_joint requires support on nonnegative integers")
    Q = sum(mu[k] for k in mu.support() if k % 2 == 0)
    if Q == 0:
        raise UnsupportedDistributionError("base pmf has no even mass")
    even_weights = tuple(mu[k] / Q if k % 2 == 0 else Fraction(0) for k in mu.support())
    even_marginal = Pmf(mu.offset, even_weights)

    joint = {}
    t = {}
    prev = Fraction(0)
    for twoj in range(0, mu.hi + 3, 2):
        t[twoj] = prev
        prev = prev + mu[twoj] * (1 - 1 / Q) + mu[twoj + 1]
    for twoj in sorted(t):
        lo_ok = t[twoj] >= 0
        hi_ok = t[twoj] <= mu[twoj - 1]
        if not (lo_ok and hi_ok):
            raise InvariantViolation(
                f"t_{twoj}={t[twoj]} outside [0, mu_{twoj - 1}={mu[twoj - 1]}]; "
                "base pmf is not log-concave"
            )
    for k in mu.support():
        if mu[k] == 0:
            continue
        if k % 2 == 0:
            joint[(k, k)] = mu[k]
        else:
            up = t[k + 1]
            down = mu[k] - t[k + 1]
            if up:
                joint[(k, k + 1)] = up
            if down:
                joint[(k, k - 1)] = down
    table = CouplingTable(mu, even_marginal, t, joint, truncation)
    _check_coupling(table)
    return table


def _check_coupling(table):
    """Exact marginal/support checks (zero tolerance)."""
    row = {}
    col = {}
    for (x, x2), mass in table.joint.items():
        if mass < 0:
            raise InvariantViolation("negative joint mass")
        if abs(x - x2) > 1:
            raise InvariantViolation("joint support leaves |x - x'| <= 1")
        if x2 % 2:
            raise InvariantViolation("coupled value must be even")
        row[x] = row.get(x, Fraction(0)) + mass
        col[x2] = col.get(x2, Fraction(0)) + mass
    for k in table.base.support():
        if row.get(k, Fraction(0)) != table.base[k]:
            raise InvariantViolation(f"row marginal mismatch at {k}")
    for k in table.even_marginal.support():
        if col.get(k, Fraction(0)) != table.even_marginal[k]:
            raise InvariantViolation(f"column marginal mismatch at {k}")


def truncated_poisson_coupling(lam, tail=PINELIS_DEFAULT_TAIL):
    """Pinelis table for a Poisson base, truncated where the tail < `tail`."""
    pmf, cut = truncated_poisson_pmf(Fraction(lam), tail)
    return pinelis_joint(pmf, truncation=cut)


def row_sum_pmf(kind, n, param):
    """Law of one row sum under the sampler.

    Bernoulli rows sum to an exact Binomial(n, p).  Poisson rows are summed
    as Poisson(n * rate) truncated at the sampler tail; the discrepancy from
    the truncated-entry convolution is below n * 2**-60 in total variation.
    """
    if kind == "bernoulli":
        return binomial_pmf(n, param), None
    pmf, cut = truncated_poisson_pmf(Fraction(n) * param, POISSON_SAMPLER_TAIL)
    return pmf, cut


@lru_cache(maxsize=64)
def _row_coupling_table(kind, n, param):
    base, cut = row_sum_pmf(kind, n, param)
    return pinelis_joint(base, truncation=cut)


def couple_even_parity(A: IntMatrix, spec=None, seed=0, *, kind=None, param=None) -> IntMatrix:
    """Adjust each row of A by at most one unit step so every row sum is even.

    Draws X' from the Pinelis conditional given X = row sum, then applies the
    step: bernoulli rows flip a uniformly chosen one (decrement) or zero
    (increment); poisson rows decrement an entry picked proportionally to its
    value, or increment a uniformly chosen entry.  Even rows never change.
    The ensemble may be given as an EnsembleSpec or as (kind=, param=).
    """
    if spec is not None:
        kind, param = spec.kind, spec.param
    if kind not in ("bernoulli", "poisson"):
        raise ParameterError(f"unknown ensemble kind {kind!r}")
    param = Fraction(param)
    if kind == "bernoulli" and any(e not in (0, 1) for e in A.entries):
        raise ParameterError("bernoulli coupling needs a 0/1 matrix")
    table = _row_coupling_table(kind, A.n, param)
    out_rows = []
    for i in range(A.m):
        row = list(A.row(i))
        x = sum(row)
        if x % 2 == 0:
            out_rows.append(row)
            continue
        stream = Stream(derive_key(seed, _DOMAIN_COUPLE, i))
        if x > table.base.hi:
            # beyond the truncated table (total mass < 2**-60); step down
            up_w, down_w = 0, 1
        else:
            up_w, down_w = table.even_step_weights(x)
        go_up = stream.below(up_w + down_w) < up_w
        if go_up:
            if kind == "bernoulli":
                zeros = [j for j, v in enumerate(row) if v == 0]
                row[zeros[stream.below(len(zeros))]] = 1
            else:
                row[stream.below(len(row))] += 1
        else:
            if x == 0:
                raise InvariantViolation("decrement requested on an all-zero row")
            if kind == "bernoulli":
                ones = [j for j, v in enumerate(row) if v == 1]
                row[ones[stream.below(len(ones))]] = 0
            else:
                pick = stream.below(x)
                acc = 0
                for j, v in enumerate(row):
                    acc += v
                    if pick < acc:
                        row[j] -= 1
                        break
        out_rows.append(row)
    return IntMatrix.from_rows(out_rows)


def sample_fixed_weight(kind, n, w, seed):
    """Sample one row conditioned on total weight w.

    kind "poisson_with_replacement": occupancy counts of w uniform cell
    choices (the conditional law of a Poisson row given its sum).
    kind "bernoulli_without_replacement": uniform 0/1 row with exactly w
    ones (the conditional law of a Bernoulli row given its sum).
    """
    if w < 0 or n < 1:
        raise ParameterError("need n >= 1 and w >= 0")
    stream = Stream(derive_key(seed, _DOMAIN_FIXED))
    if kind == "poisson_with_replacement":
        row = [0] * n
        for _ in range(w):
            row[stream.below(n)] += 1
        return row
    if kind == "bernoulli_without_replacement":
        if w > n:
            raise ParameterError(f"cannot place {w} ones in {n} slots")
        row = [0] * n
        for j in stream.shuffle_prefix(n, w):
            row[j] = 1
        return row
    raise ParameterError(f"unknown fixed-weight kind {kind!r}")


# ---------------------------------------------------------------------------
# Matrix file format: first line "m n", then m rows of n integers, LF-ended.

_HEADER = re.compile(r"^(\d+)\s+(\d+)$")


def write_matrix(path, A: IntMatrix):
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{A.m} {A.n}\n")
        for i in range(A.m):
            fh.write(" ".join(str(v) for v in A.row(i)) + "\n")


def read_matrix(path) -> IntMatrix:
    with open(path) as fh:
        header = fh.readline().strip()
        match = _HEADER.match(header)
        if not match:
            raise ParameterError(f"bad matrix header {header!r}")
        m, n = int(match.group(1)), int(match.group(2))
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            vals = [int(tok) for tok in line.split()]
            if len(vals) != n:
                raise ParameterError(f"ragged row of length {len(vals)}, expected {n}")
            if any(v < 0 for v in vals):
                raise ParameterError("matrix entries must be nonnegative")
            rows.append(vals)
        if len(rows) != m:
            raise ParameterError(f"expected {m} rows, found {len(rows)}")
    return IntMatrix.from_rows(rows)
