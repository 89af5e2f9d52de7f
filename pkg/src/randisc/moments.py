"""Exact-rational first and second moments of the balanced-solution count
under the three row conditionings, the overlap functions psi/phi, and the
numeric checks behind the rectangular-CSP second-moment conditions.

Conventions.  A constraint row is "satisfied" by a balanced vector u when
<u, row> lies in a symmetric band K.  psi is the single-vector satisfaction
probability, phi(beta) the pair probability for two balanced vectors
agreeing on a beta fraction of coordinates, and the second-moment ratio is

    E[Z^2]/E[Z]^2 = C(n, n/2)^-1 * sum_r C(n/2, r)^2 prod_i
                    (phi_i(2r/n) / psi_i^2)

with the overlap count r enumerated exactly (beta = 2r/n is never a float).
Everything here is computed in exact rational arithmetic by default; the
dichotomy of interest lives in 1 + Theta(1/n) corrections that floats blur.
"""

from dataclasses import dataclass
from fractions import Fraction
from math import comb, exp, lgamma, log

from .errors import CapacityError, ParameterError

CASES = ("bernoulli_parity_dense", "bernoulli_fixed_weight", "poisson_fixed_weight")

EXACT_N_CAP = 64
EXACT_M_CAP = 8


@dataclass(frozen=True)
class SymmetricBand:
    """Set {k : |k| <= radius, k = parity (mod 2)}; parity taken from w."""

    radius: int
    parity: int = 0

    def __post_init__(self):
        if self.radius < 0:
            raise ParameterError("band radius must be >= 0")
        if self.parity not in (0, 1):
            raise ParameterError("band parity must be 0 or 1")

    def members(self):
        return tuple(
            k for k in range(-self.radius, self.radius + 1) if (k - self.parity) % 2 == 0
        )

    def targets(self, w):
        """The band in count space: {(w + k)/2 : k in K}."""
        return tuple((w + k) // 2 for k in self.members())


@dataclass(frozen=True)
class OverlapScenario:
    """A conditioned pair experiment: rows of weight w against two balanced
    vectors agreeing on beta*n coordinates, constrained to the band K."""

    case: str
    n: int
    w: int
    beta: Fraction
    band: SymmetricBand = None

    def __post_init__(self):
        object.__setattr__(self, "beta", Fraction(self.beta))
        if self.case not in CASES:
            raise ParameterError(f"unknown case {self.case!r}")
        if self.band is None:
            object.__setattr__(self, "band", SymmetricBand(0, self.w % 2))
        if self.band.parity != self.w % 2:
            raise ParameterError("band parity must match w")
        if not 0 <= self.beta <= 1:
            raise ParameterError(f"beta={self.beta} outside [0, 1]")
        if self.n % 2:
            raise ParameterError("n must be even")
        if self.w < 0:
            raise ParameterError("w must be >= 0")
        if self.case != "poisson_fixed_weight":
            if self.w % 2:
                raise ParameterError("fixed-weight bernoulli scenarios need even w")
            if self.w > self.n:
                raise ParameterError("w cannot exceed n")
            if (self.beta * self.n) % 2 != 0:
                raise ParameterError(
                    f"beta={self.beta} has nonintegral agreement count beta*n/2"
                )
            if self.band.radius != 0 and self.case == "bernoulli_fixed_weight":
                raise ParameterError("bernoulli fixed-weight case uses the zero band")

    @property
    def gamma(self):
        return 1 - self.beta

    @property
    def x(self):
        return self.beta - Fraction(1, 2)


# ---------------------------------------------------------------------------
# Row satisfaction probabilities


def parity_prob(n, p):
    """P(Binomial(n, p) is even) = 1/2 + (1 - 2p)^n / 2, exactly."""
    p = Fraction(p)
    if not 0 <= p <= Fraction(1, 2):
        raise ParameterError(f"p={p} outside [0, 1/2]")
    return Fraction(1, 2) + (1 - 2 * p) ** n / 2


def _walk_zero_probs(r_max, p):
    """P[R(j, p) = 0] for j = 0..r_max by incremental exact convolution."""
    p = Fraction(p)
    a, b = p.numerator, p.denominator
    side, mid = a * (b - a), a * a + (b - a) ** 2
    den = b * b
    # numerators of R(j, p) over den^j, support -j..j
    cur = [1]
    zeros = [Fraction(1)]
    for j in range(1, r_max + 1):
        nxt = [0] * (len(cur) + 2)
        for i, v in enumerate(cur):
            nxt[i] += v * side
            nxt[i + 1] += v * mid
            nxt[i + 2] += v * side
        cur = nxt
        zeros.append(Fraction(cur[j], den**j))
    return zeros


def psi_phi_dense(n, p, overlap_r):
    """Parity-conditioned dense case with K = {0}.

    psi = P[U = 0] / P(row even) with U ~ R(n/2, p);
    phi(2r/n) = P[V = 0] P[V' = 0] / P(row even) with V ~ R(r, p),
    V' ~ R(n/2 - r, p) independent.
    """
    if n % 2:
        raise ParameterError("n must be even")
    if not 0 <= overlap_r <= n // 2:
        raise ParameterError(f"overlap_r={overlap_r} outside [0, {n // 2}]")
    zeros = _walk_zero_probs(n // 2, p)
    pp = parity_prob(n, p)
    psi = zeros[n // 2] / pp
    phi = zeros[overlap_r] * zeros[n // 2 - overlap_r] / pp
    return psi, phi


def psi_dense(n, p):
    return psi_phi_dense(n, p, 0)[0]


def psi_fixed_weight(scenario: OverlapScenario):
    """Single-vector satisfaction probability for the fixed-weight cases."""
    w = scenario.w
    if scenario.case == "poisson_fixed_weight":
        return Fraction(sum(comb(w, (w + k) // 2) for k in scenario.band.members()), 2**w)
    if scenario.case == "bernoulli_fixed_weight":
        n = scenario.n
        return Fraction(comb(n // 2, w // 2) ** 2, comb(n, w))
    raise ParameterError(f"{scenario.case} is not a fixed-weight case")


def phi_fixed_weight(scenario: OverlapScenario):
    """Pair satisfaction probability for the fixed-weight cases.

    Out-of-range binomial coefficients vanish, so beta in {0, 1} needs no
    special-casing.
    """
    w, beta, gamma = scenario.w, scenario.beta, scenario.gamma
    if scenario.case == "bernoulli_fixed_weight":
        n = scenario.n
        bn, gn = int(beta * n // 2), int(gamma * n // 2)
        num = sum(
            comb(bn, t) ** 2 * comb(gn, w // 2 - t) ** 2 for t in range(w // 2 + 1)
        )
        return Fraction(num, comb(n, w))
    if scenario.case == "poisson_fixed_weight":
        ks = scenario.band.members()
        total = Fraction(0)
        for k in ks:
            n1 = (w + k) // 2
            n2 = (w - k) // 2
            for k2 in ks:
                inner = Fraction(0)
                for c in range(0, n2 + 1):
                    top = (w + k2) // 2 - c
                    if not 0 <= top <= n1:
                        continue
                    eb = 2 * c + (k - k2) // 2
                    eg = w + (k2 - k) // 2 - 2 * c
                    inner += comb(n1, top) * comb(n2, c) * beta**eb * gamma**eg
                total += comb(w, n1) * inner
        return total / 2**w
    raise ParameterError(f"{scenario.case} is not a fixed-weight case")


def psi_phi_fixed_weight(scenario: OverlapScenario):
    return psi_fixed_weight(scenario), phi_fixed_weight(scenario)


def _row_psi_phi_functions(case, n, p=None, w=None, band_radius=0):
    """Per-row (psi, phi at overlap r) closures for the ratio machinery."""
    if case == "bernoulli_parity_dense":
        if band_radius != 0:
            raise ParameterError("dense parity case uses the zero band")
        zeros = _walk_zero_probs(n // 2, p)
        pp = parity_prob(n, p)
        psi = zeros[n // 2] / pp

        def phi(r):
            return zeros[r] * zeros[n // 2 - r] / pp

        return psi, phi
    if case == "bernoulli_fixed_weight":
        # psi is beta-free; beta = 1 is integral for every even n
        scen0 = OverlapScenario(case, n, w, Fraction(1))
        psi = psi_fixed_weight(scen0)

        def phi(r):
            return phi_fixed_weight(OverlapScenario(case, n, w, Fraction(2 * r, n)))

        return psi, phi
    if case == "poisson_fixed_weight":
        band = SymmetricBand(band_radius, w % 2)
        scen0 = OverlapScenario(case, n, w, Fraction(1), band)
        psi = psi_fixed_weight(scen0)
        if psi == 0:
            raise ParameterError(
                f"band radius {band_radius} is unreachable for w={w} (psi = 0)"
            )

        def phi(r):
            return phi_fixed_weight(
                OverlapScenario(case, n, w, Fraction(2 * r, n), band)
            )

        return psi, phi
    raise ParameterError(f"unknown case {case!r}")


# ---------------------------------------------------------------------------
# Moments


@dataclass
class ExpectedCount:
    """E[Z | conditioning]; exact value present when within the exact cap."""

    value: Fraction
    log_value: float


def expected_solution_count(case, *, n, m=None, p=None, w=None, band_radius=0):
    """E[Z] = C(n, n/2) * prod_i psi_i for the requested conditioning.

    `w` may be a single weight or a per-row sequence (fixed-weight cases);
    the dense case uses m i.i.d. parity-conditioned rows with K = {0}.
    Exact for n <= 64; always reports the log value (relative error below
    1e-12 past the cap).
    """
    psis = _per_row_psis(case, n=n, m=m, p=p, w=w, band_radius=band_radius)
    if n <= EXACT_N_CAP:
        value = Fraction(comb(n, n // 2))
        for ps in psis:
            value *= ps
        return ExpectedCount(value, _log_fraction(value))
    logv = lgamma(n + 1) - 2 * lgamma(n // 2 + 1)
    for ps in psis:
        logv += _log_fraction(ps)
    return ExpectedCount(None, logv)


def _per_row_psis(case, *, n, m=None, p=None, w=None, band_radius=0):
    if case == "bernoulli_parity_dense":
        if m is None or p is None:
            raise ParameterError("dense case needs m and p")
        return [psi_dense(n, p)] * m
    ws = _weights_list(w, m)
    out = []
    for wi in ws:
        band = SymmetricBand(band_radius, wi % 2) if case == "poisson_fixed_weight" else None
        scen = OverlapScenario(case, n, wi, Fraction(1), band)
        out.append(psi_fixed_weight(scen))
    return out


def _weights_list(w, m):
    if w is None:
        raise ParameterError("fixed-weight cases need w")
    if isinstance(w, int):
        if m is None:
            raise ParameterError("scalar w needs m")
        return [w] * m
    return list(w)


def _log_fraction(fr):
    return log(fr.numerator) - log(fr.denominator)


@dataclass
class OverlapTerm:
    r: int
    beta: Fraction
    phi_over_psi2: Fraction
    term: Fraction  # C(n/2, r)^2 * prod_i (phi_i/psi_i^2)^... / C(n, n/2)


@dataclass
class RatioResult:
    ratio: Fraction
    profile: list


def second_moment_ratio(case, *, n, m=None, p=None, w=None, band_radius=0, exact=True):
    """E[Z^2]/E[Z]^2 as the exact overlap sum, with a per-overlap profile.

    Exact mode is capped at n <= 64, m <= 8 (CapacityError beyond; pass
    exact=False for the log-space float fallback).
    """
    if n % 2:
        raise ParameterError("n must be even")
    if case == "bernoulli_parity_dense":
        if m is None:
            raise ParameterError("dense case needs m")
        rows = [("dense", None)] * m
    else:
        rows = [("w", wi) for wi in _weights_list(w, m)]
    m_eff = len(rows)
    if exact and (n > EXACT_N_CAP or m_eff > EXACT_M_CAP):
        raise CapacityError(
            f"exact ratio capped at n<={EXACT_N_CAP}, m<={EXACT_M_CAP}; "
            "pass exact=False for the log-space fallback"
        )

    # group identical rows so the per-overlap product is a small power product
    groups = {}
    for tag in rows:
        groups[tag] = groups.get(tag, 0) + 1
    fns = {}
    for (tag, wi), _cnt in groups.items():
        fns[(tag, wi)] = _row_psi_phi_functions(
            case, n, p=p, w=wi, band_radius=band_radius
        )

    half = n // 2
    denom = comb(n, half)
    total = Fraction(0) if exact else 0.0
    profile = []
    for r in range(half + 1):
        beta = Fraction(2 * r, n)
        ratio_prod = Fraction(1) if exact else 0.0
        rep_ratio = None
        for (tag, wi), cnt in groups.items():
            psi, phi_fn = fns[(tag, wi)]
            rr = phi_fn(r) / psi**2
            if rep_ratio is None:
                rep_ratio = rr
            if exact:
                ratio_prod *= rr**cnt
            else:
                ratio_prod += cnt * _log_fraction(rr)
        coeff = Fraction(comb(half, r) ** 2, denom)
        if exact:
            term = coeff * ratio_prod
            total += term
        else:
            term = float(coeff) * exp(ratio_prod)
            total += term
        profile.append(OverlapTerm(r, beta, rep_ratio, term))
    return RatioResult(total, profile)


# ---------------------------------------------------------------------------
# Second-moment-method condition checks


@dataclass
class SmmConditionFlags:
    first_moment_holds: bool
    c_margin: float  # log E[Z] / n
    weak_bound_holds: bool
    c_delta: Fraction  # smallest grid constant with phi <= C_delta psi^2
    strong_bound_holds: bool
    c_strong: Fraction  # smallest constant with phi(1/2+x) <= (1+C x^2) psi^2
    c_fit: float  # least-squares quadratic coefficient of phi/psi^2 - 1
    central_ratio: Fraction  # phi(1/2)/psi^2 at the grid centre


@dataclass
class MomentReport:
    case: str
    n: int
    m: int
    psi: Fraction
    phi_at: dict  # beta -> phi(beta)
    first_moment: ExpectedCount
    ratio: Fraction
    condition_flags: SmmConditionFlags = None


def check_smm_conditions(report: MomentReport, m, delta, eps):
    """Evaluate the three second-moment conditions on the report's beta grid.

    Weak bound: C_delta = max of phi/psi^2 over beta in [delta, 1-delta].
    Strong bound: on the window |beta - 1/2| < eps (at least 5 grid points
    required), fit phi/psi^2 - 1 ~ C x^2 by least squares and report the
    smallest exact constant making the quadratic bound hold; the flag also
    demands the central ratio sit within 1/(10 m) of 1.
    First moment: positive margin c = log E[Z] / n.
    """
    delta = Fraction(delta)
    eps = Fraction(eps)
    if not report.phi_at:
        raise ParameterError("report carries no phi grid")
    psi2 = report.psi**2
    window = {b: v for b, v in report.phi_at.items() if abs(b - Fraction(1, 2)) < eps}
    if len(window) < 5:
        raise ParameterError(
            f"need at least 5 grid points in (1/2-eps, 1/2+eps), have {len(window)}"
        )
    annulus = {b: v for b, v in report.phi_at.items() if delta <= b <= 1 - delta}
    if not annulus:
        raise ParameterError("no grid points in [delta, 1-delta]")

    c_delta = max(v / psi2 for v in annulus.values())
    weak = True  # finite by construction on the grid; the value is the datum

    xs, ys = [], []
    c_strong = Fraction(0)
    central = None
    for b, v in sorted(window.items()):
        x = b - Fraction(1, 2)
        y = v / psi2 - 1
        if x == 0:
            central = v / psi2
        else:
            c_strong = max(c_strong, y / x**2)
        xs.append(x)
        ys.append(y)
    if central is None:
        raise ParameterError("central point beta = 1/2 missing from the grid")
    num = sum(float(y) * float(x) ** 2 for x, y in zip(xs, ys))
    den = sum(float(x) ** 4 for x in xs)
    c_fit = num / den if den else 0.0
    strong = abs(central - 1) <= Fraction(1, 10 * m)

    c_margin = report.first_moment.log_value / report.n
    first = c_margin > 0
    return SmmConditionFlags(
        first, c_margin, weak, c_delta, strong, c_strong, c_fit, central
    )


def moment_report(case, *, n, m=None, p=None, w=None, band_radius=0, exact=True):
    """Assemble psi, the full phi grid, E[Z] and the overlap ratio."""
    ratio = second_moment_ratio(
        case, n=n, m=m, p=p, w=w, band_radius=band_radius, exact=exact
    )
    if case == "bernoulli_parity_dense":
        psi = psi_dense(n, p)
        phi_at = {
            t.beta: psi_phi_dense(n, p, t.r)[1] for t in ratio.profile
        }
        m_eff = m
    else:
        ws = _weights_list(w, m)
        if len(set(ws)) != 1:
            raise ParameterError("moment_report needs identical row weights")
        wi = ws[0]
        band = SymmetricBand(band_radius, wi % 2) if case == "poisson_fixed_weight" else None
        psi = psi_fixed_weight(OverlapScenario(case, n, wi, Fraction(1), band))
        phi_at = {
            t.beta: phi_fixed_weight(OverlapScenario(case, n, wi, t.beta, band))
            for t in ratio.profile
        }
        m_eff = len(ws)
    first = expected_solution_count(
        case, n=n, m=m_eff, p=p, w=w, band_radius=band_radius
    )
    return MomentReport(case, n, m_eff, psi, phi_at, first, ratio.ratio)
