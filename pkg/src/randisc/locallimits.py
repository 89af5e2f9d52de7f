"""Exact lattice pmfs (binomial, hypergeometric, lazy walk) and the classical
local-limit approximations / tail bounds used to sanity-check them.

Exact mode keeps every weight as a Fraction; a pmf sums to exactly 1 with
zero tolerance.  Log mode stores log-weights as floats for sizes past the
exact cap.  The lazy walk R(r, p) is the law of a sum of r i.i.d. steps on
{-1, 0, 1} with P(+1) = P(-1) = p(1-p); equivalently the difference of two
independent Binomial(r, p) counts.  Its step variance is 2p(1-p).
"""

from dataclasses import dataclass
from fractions import Fraction
from math import comb, exp, factorial, lgamma, log, pi, sqrt

from .errors import CapacityError, ParameterError

EXACT_SIZE_CAP = 4096

# Frozen prefactors for the tail-bound kinds, fitted once on calibration
# grids (max exact/shape ratio, then a safety margin) and pinned here.
# cramer: n <= 2000, p in [1/6, 5/6], all r -> max ratio 1.107.
# hyp_tail: npop <= 1024, w/npop in [1/8, 1/2], successes/npop in [1/8, 3/4]
# -> max ratio 3.72.
CRAMER_PREFACTOR = 1.25
HYP_TAIL_PREFACTOR = 4.2


@dataclass(frozen=True)
class Pmf:
    """Probability mass function over the contiguous range
    [offset, offset + len(weights)).

    In exact mode `weights` are Fractions summing to exactly 1; in log mode
    they are float log-probabilities (-inf allowed) summing to 1 within
    1e-12 after exponentiation.
    """

    offset: int
    weights: tuple
    mode: str = "exact"
    step_variance: Fraction = None  # set for lazy-walk pmfs

    def __post_init__(self):
        if self.mode not in ("exact", "log"):
            raise ParameterError(f"unknown pmf mode {self.mode!r}")
        if not self.weights:
            raise ParameterError("empty pmf")
        if self.mode == "exact":
            if any(w < 0 for w in self.weights):
                raise ParameterError("negative weight in exact pmf")
            if sum(self.weights) != 1:
                raise ParameterError("exact pmf must sum to exactly 1")
        else:
            total = sum(exp(w) for w in self.weights)
            if abs(total - 1.0) > 1e-12:
                raise ParameterError(f"log pmf sums to {total}, not 1")

    @property
    def lo(self):
        return self.offset

    @property
    def hi(self):
        return self.offset + len(self.weights) - 1

    def support(self):
        return range(self.lo, self.hi + 1)

    def __getitem__(self, k):
        """Probability at integer k (0 outside the stored range)."""
        if self.lo <= k <= self.hi:
            w = self.weights[k - self.offset]
            return w if self.mode == "exact" else exp(w)
        return Fraction(0) if self.mode == "exact" else 0.0

    def mass(self, ks):
        """Total probability of a set of integers."""
        zero = Fraction(0) if self.mode == "exact" else 0.0
        return sum((self[k] for k in ks), zero)

    def mean(self):
        return sum(k * self[k] for k in self.support())

    def variance(self):
        mu = self.mean()
        return sum((k - mu) ** 2 * self[k] for k in self.support())


# ---------------------------------------------------------------------------
# Exact constructions


def convolve_integer(xs, ys):
    """Exact convolution of nonnegative integer sequences.

    Packs each sequence into a single big integer (Kronecker substitution)
    so the whole convolution rides on one subquadratic bigint multiply.
    """
    if not xs or not ys:
        return []
    width = (
        max(xs).bit_length()
        + max(ys).bit_length()
        + min(len(xs), len(ys)).bit_length()
        + 1
    )
    X = 0
    for v in reversed(xs):
        X = (X << width) | v
    Y = 0
    for v in reversed(ys):
        Y = (Y << width) | v
    Z = X * Y
    mask = (1 << width) - 1
    out = []
    for _ in range(len(xs) + len(ys) - 1):
        out.append(Z & mask)
        Z >>= width
    return out


def binomial_pmf(n, p, mode="auto"):
    """Binomial(n, p) pmf, exact for n <= EXACT_SIZE_CAP."""
    p = Fraction(p)
    if not 0 <= p <= 1:
        raise ParameterError(f"binomial p={p} outside [0, 1]")
    if n < 0:
        raise ParameterError("binomial n must be >= 0")
    if mode == "auto":
        mode = "exact" if n <= EXACT_SIZE_CAP else "log"
    if mode == "exact":
        if n > EXACT_SIZE_CAP:
            raise CapacityError(f"exact binomial capped at n={EXACT_SIZE_CAP}")
        a, b = p.numerator, p.denominator
        den = b**n
        weights = tuple(
            Fraction(comb(n, k) * a**k * (b - a) ** (n - k), den) for k in range(n + 1)
        )
        return Pmf(0, weights)
    if p in (0, 1):
        raise ParameterError("log-mode binomial needs 0 < p < 1")
    lp, lq = log(p), log(1 - p)
    lw = [
        lgamma(n + 1) - lgamma(k + 1) - lgamma(n - k + 1) + k * lp + (n - k) * lq
        for k in range(n + 1)
    ]
    return Pmf(0, tuple(lw), mode="log")


def hypergeometric_pmf(w, ksucc, npop, mode="auto"):
    """Hypergeometric pmf: w draws without replacement, ksucc successes in a
    population of npop."""
    if ksucc > npop:
        raise ParameterError(f"successes {ksucc} exceed population {npop}")
    if not 0 <= w <= npop:
        raise ParameterError(f"draws w={w} outside [0, {npop}]")
    if mode == "auto":
        mode = "exact" if npop <= EXACT_SIZE_CAP else "log"
    lo = max(0, w - (npop - ksucc))
    hi = min(w, ksucc)
    if mode == "exact":
        if npop > EXACT_SIZE_CAP:
            raise CapacityError(f"exact hypergeometric capped at N={EXACT_SIZE_CAP}")
        den = comb(npop, w)
        weights = tuple(
            Fraction(comb(ksucc, k) * comb(npop - ksucc, w - k), den)
            for k in range(lo, hi + 1)
        )
        return Pmf(lo, weights)

    def lcomb(a, b):
        return lgamma(a + 1) - lgamma(b + 1) - lgamma(a - b + 1)

    lden = lcomb(npop, w)
    lw = [lcomb(ksucc, k) + lcomb(npop - ksucc, w - k) - lden for k in range(lo, hi + 1)]
    return Pmf(lo, tuple(lw), mode="log")


def lazy_walk_pmf(r, p, mode="auto"):
    """Law of the r-step lazy walk R(r, p), exact for r <= EXACT_SIZE_CAP.

    Exact mode convolves the integer numerators of the three-point step on a
    doubling (convolve-and-square) schedule, so only O(log r) convolutions
    are performed and the common denominator stays the literal b**(2r).
    """
    p = Fraction(p)
    if not 0 <= p <= 1:
        raise ParameterError(f"lazy walk p={p} outside [0, 1]")
    if r < 0:
        raise ParameterError("lazy walk length must be >= 0")
    sigma2 = 2 * p * (1 - p)
    if mode == "auto":
        mode = "exact" if r <= EXACT_SIZE_CAP else "log"
    if mode == "exact":
        if r > EXACT_SIZE_CAP:
            raise CapacityError(f"exact lazy walk capped at r={EXACT_SIZE_CAP}")
        if r == 0:
            return Pmf(0, (Fraction(1),), step_variance=sigma2)
        a, b = p.numerator, p.denominator
        side = a * (b - a)
        step = [side, a * a + (b - a) ** 2, side]  # numerators over b**2
        acc = None
        pw = None  # accumulated walk length
        sq = step
        sq_len = 1
        rr = r
        while rr:
            if rr & 1:
                if acc is None:
                    acc, pw = sq, sq_len
                else:
                    acc = convolve_integer(acc, sq)
                    pw += sq_len
            rr >>= 1
            if rr:
                sq = convolve_integer(sq, sq)
                sq_len *= 2
        den = b ** (2 * r)
        weights = tuple(Fraction(v, den) for v in acc)
        return Pmf(-r, weights, step_variance=sigma2)
    # log mode: P(V = k) = sum_x C(r,x) C(r,x-k) p^(2x-k) q^(2r-2x+k),
    # the cross-correlation of Binomial(r, p) with itself.
    if p in (0, 1):
        raise ParameterError("log-mode lazy walk needs 0 < p < 1")
    lb = binomial_pmf(r, p, mode="log").weights
    lw = []
    for k in range(-r, r + 1):
        terms = [lb[x] + lb[x - k] for x in range(max(0, k), min(r, r + k) + 1)]
        m = max(terms)
        lw.append(m + log(sum(exp(t - m) for t in terms)))
    return Pmf(-r, tuple(lw), mode="log", step_variance=sigma2)


def truncated_poisson_pmf(lam, tail_bound=Fraction(1, 2**60)):
    """Poisson(lam) truncated and renormalized so the discarded true tail is
    below `tail_bound`; the cut point is chosen by pure rational arithmetic
    (tail(K) <= lam^(K+1)/(K+1)! * (1 - lam/(K+2))^-1), so it is identical on
    every platform.  Returns (pmf, truncation_point).
    """
    lam = Fraction(lam)
    if lam < 0:
        raise ParameterError(f"poisson rate {lam} is negative")
    if lam == 0:
        return Pmf(0, (Fraction(1),)), 0
    hi = max(2, int(lam) + 2)
    term = lam**hi / factorial(hi)  # lam^hi / hi!
    while not (lam < hi + 2 and term * (hi + 2) / (hi + 2 - lam) < tail_bound):
        hi += 1
        term = term * lam / hi
    raw = []
    t = Fraction(1)
    for k in range(hi + 1):
        if k:
            t = t * lam / k
        raw.append(t)
    total = sum(raw)
    return Pmf(0, tuple(w / total for w in raw)), hi


def exact_pmf(family, **params):
    """Dispatcher over the exact families; used by the CLI.

    family: "binomial" (n, p) | "hypergeometric" (w, ksucc, npop)
    | "lazy_walk" (r, p).
    """
    if family == "binomial":
        return binomial_pmf(params["n"], params["p"])
    if family == "hypergeometric":
        return hypergeometric_pmf(params["w"], params["ksucc"], params["npop"])
    if family == "lazy_walk":
        return lazy_walk_pmf(params["r"], params["p"])
    raise ParameterError(f"unknown pmf family {family!r}")


@dataclass(frozen=True)
class LatticePoint:
    """A point (s, c) of a conditioned-pair lattice with band offset k;
    l = s - w/2 and j = c - beta*s are the recentred coordinates."""

    w: int
    s: int
    c: int
    k: int = 0

    def __post_init__(self):
        if not 0 <= self.s <= self.w:
            raise ParameterError(f"s={self.s} outside [0, {self.w}]")
        if not 0 <= self.c <= self.s:
            raise ParameterError(f"c={self.c} outside [0, s={self.s}]")

    def l(self):
        return Fraction(2 * self.s - self.w, 2)

    def j(self, beta):
        return self.c - Fraction(beta) * self.s


# ---------------------------------------------------------------------------
# Approximations and tail bounds

APPROX_KINDS = (
    "demoivre",
    "stirling_binom",
    "cramer_tail",
    "hyp_tail",
    "poisson_tail",
    "edgeworth_lazy",
)

_DELTA = Fraction(1, 10)  # validity window for the de Moivre approximation
# The quarter-variance Gaussian bound needs p(1-p) >= 1/8 to dominate the
# binomial large-deviation rate; 1/6 leaves margin.
_DELTA_CRAMER = Fraction(1, 6)


def approx_eval(kind, params, point):
    """Evaluate one approximation/bound at a lattice point.

    kind / params / meaning of `point`:
      demoivre        (n, p)           point = binomial count r; leading
                                       Gaussian value for C(n,r)p^r q^(n-r)
      stirling_binom  (n,)             point = r; Gaussian approximation of
                                       the raw coefficient C(n, r)
      cramer_tail     (n, p)           point = r; Gaussian upper bound on the
                                       binomial pmf
      hyp_tail        (w, ksucc, npop) point = success count k; upper bound
                                       on the hypergeometric pmf
      poisson_tail    (lam,)           point = deviation x >= 0; bound on
                                       P(|S - lam| > x)
      edgeworth_lazy  (r, p)           point = walk endpoint k; Gaussian
                                       density with the 1/r lattice
                                       correction for R(r, p)
    Tail kinds return the bound value; the others return the formula's
    leading value.
    """
    if kind == "demoivre":
        n, p = params["n"], Fraction(params["p"])
        _require_central_p(kind, p)
        r = point
        _require_range(kind, r, 0, n)
        v = float(n * p * (1 - p))
        k = float(r - n * p)
        return exp(-k * k / (2 * v)) / sqrt(2 * pi * v)
    if kind == "stirling_binom":
        n = params["n"]
        r = point
        _require_range(kind, r, 0, n)
        return sqrt(2 / (pi * n)) * 2.0**n * exp(-2 * (r - n / 2) ** 2 / n)
    if kind == "cramer_tail":
        n, p = params["n"], Fraction(params["p"])
        _require_central_p(kind, p, _DELTA_CRAMER)
        r = point
        _require_range(kind, r, 0, n)
        v = float(n * p * (1 - p))
        k = float(r - n * p)
        return CRAMER_PREFACTOR / sqrt(n) * exp(-k * k / (4 * v))
    if kind == "hyp_tail":
        w, ksucc, npop = params["w"], params["ksucc"], params["npop"]
        if not 1 <= w < npop:
            raise ParameterError(f"hyp_tail needs 1 <= w < npop, got w={w}, npop={npop}")
        if ksucc > npop:
            raise ParameterError("hyp_tail successes exceed population")
        k = point
        pfrac = ksucc / npop
        lam = abs(k - w * pfrac) / sqrt(w)
        f = w / (npop - w)
        expo = -2 * lam**2 / (1 - w / npop) - (0.25 + f**3 / 3) * lam**4 / npop
        return HYP_TAIL_PREFACTOR / sqrt(npop) * exp(expo)
    if kind == "poisson_tail":
        lam = float(Fraction(params["lam"]))
        if lam < 0:
            raise ParameterError("poisson_tail rate must be >= 0")
        x = float(point)
        if x < 0:
            raise ParameterError("poisson_tail deviation must be >= 0")
        if lam + x == 0:
            return 2.0
        return 2.0 * exp(-x * x / (2 * (lam + x)))
    if kind == "edgeworth_lazy":
        r, p = params["r"], Fraction(params["p"])
        if r < 1:
            raise ParameterError("edgeworth_lazy needs r >= 1")
        if not 0 < p < 1:
            raise ParameterError("edgeworth_lazy needs 0 < p < 1")
        s2 = float(2 * p * (1 - p))
        k = point
        lead = exp(-k * k / (2 * r * s2)) / sqrt(2 * pi * r * s2)
        corr = (k**4 - 6 * k**2 + 3) * (1 / s2 - 3) / (24 * r)
        return lead * (1 + corr)
    raise ParameterError(f"unknown approximation kind {kind!r}")


def _require_central_p(kind, p, delta=_DELTA):
    if not delta <= p <= 1 - delta:
        raise ParameterError(
            f"{kind} requires p in [{delta}, {1 - delta}] (central-p hypothesis), got {p}"
        )


def _require_range(kind, r, lo, hi):
    if not lo <= r <= hi:
        raise ParameterError(f"{kind} point {r} outside [{lo}, {hi}]")


def _exact_reference(kind, params, point):
    """Exact value the approximation is judged against (float)."""
    if kind in ("demoivre", "cramer_tail"):
        return float(binomial_pmf(params["n"], params["p"])[point])
    if kind == "stirling_binom":
        return float(comb(params["n"], point))
    if kind == "hyp_tail":
        return float(hypergeometric_pmf(params["w"], params["ksucc"], params["npop"])[point])
    if kind == "edgeworth_lazy":
        return float(lazy_walk_pmf(params["r"], params["p"])[point])
    raise ParameterError(f"unknown approximation kind {kind!r}")


@dataclass
class ScanRow:
    kind: str
    params: dict
    point: int
    exact: float
    approx: float
    rel_error: float


@dataclass
class ScanResult:
    rows: list
    decay_exponent: float = None  # fitted d(log rel_error)/d(log size)


def error_scan(kind, param_grid, size_key=None):
    """Tabulate exact vs approximate values over a grid.

    `param_grid` is a sequence of dicts, each holding the kind's parameters
    plus "point".  When `size_key` names a parameter taking >= 3 distinct
    values, the decay exponent of rel_error against that size is fitted by
    least squares on the log-log scale.
    """
    grid = list(param_grid)
    if not grid:
        raise ParameterError("error_scan needs a nonempty grid")
    rows = []
    for gp in grid:
        gp = dict(gp)
        point = gp.pop("point")
        if kind == "poisson_tail":
            # the truncated-renormalised pmf dominates the true Poisson pmf,
            # so bound >= this value also implies bound >= the true mass
            exact = float(truncated_poisson_pmf(Fraction(gp["lam"]))[0][point])
            x = abs(point - Fraction(gp["lam"]))
            approx = approx_eval(kind, gp, x)
        else:
            exact = _exact_reference(kind, gp, point)
            approx = approx_eval(kind, gp, point)
        rel = abs(approx - exact) / exact if exact else float("inf")
        rows.append(ScanRow(kind, gp, point, exact, approx, rel))
    rows.sort(key=lambda row: (sorted(row.params.items()), row.point))
    result = ScanResult(rows)
    if size_key is not None:
        pts = [(log(r.params[size_key]), log(r.rel_error)) for r in rows if r.rel_error > 0]
        sizes = {x for x, _ in pts}
        if len(sizes) >= 3:
            xbar = sum(x for x, _ in pts) / len(pts)
            ybar = sum(y for _, y in pts) / len(pts)
            sxx = sum((x - xbar) ** 2 for x, _ in pts)
            sxy = sum((x - xbar) * (y - ybar) for x, y in pts)
            result.decay_exponent = sxy / sxx
    return result
