"""Command-line front end.

Subcommands: gen, disc, zcount, moments, ratio, stein, lclt, phase.
Exit codes partition cleanly: 0 success, 2 user/parameter error, 3 capacity
error, 4 internal invariant violation.  Probability and rate flags accept
exact rationals ("1/3") or decimal strings ("0.25"); rationals survive
unchanged into the exact moment computations.
"""

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from math import sqrt

from . import ensembles, locallimits, moments, solver, stein
from .errors import CapacityError, InvariantViolation, ParameterError
from .rng import derive_key

WILSON_Z = 1.959963984540054  # 95%


def _fraction(text):
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ParameterError(f"bad rational {text!r}: {exc}") from None


def _fmt_fraction(fr):
    if fr is None:
        return None
    return f"{fr.numerator}/{fr.denominator}"


# ---------------------------------------------------------------------------
# Phase scan


@dataclass
class PhaseScanConfig:
    kind: str
    m: int
    param: Fraction
    r: int
    n_values: tuple
    trials: int
    parity: str  # "none" | "even"
    threads: int
    seed: int
    out: str = None

    def __post_init__(self):
        if any(n % 2 for n in self.n_values):
            raise ParameterError("all n values must be even")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if self.parity not in ("none", "even"):
            raise ParameterError(f"parity must be none or even, got {self.parity!r}")
        if self.threads < 1:
            raise ParameterError("threads must be >= 1")


def wilson_interval(successes, trials, z=WILSON_Z):
    """95% Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    phat = successes / trials
    z2 = z * z
    denom = 1 + z2 / trials
    centre = phat + z2 / (2 * trials)
    half = z * sqrt(phat * (1 - phat) / trials + z2 / (4 * trials * trials))
    return (centre - half) / denom, (centre + half) / denom


def _phase_trial(cfg, point_idx, n, trial_idx):
    seed = derive_key(cfg.seed, point_idx, trial_idx)
    spec = ensembles.EnsembleSpec(cfg.kind, cfg.m, n, cfg.param, seed)
    A = ensembles.sample(spec)
    if cfg.parity == "even":
        A = ensembles.couple_even_parity(A, spec, derive_key(seed, 0xEE))
    found, _ = solver.disc_exists_mitm(A, cfg.r, balanced_only=True)
    return found


def run_phase_scan(cfg: PhaseScanConfig):
    """Monte Carlo feasibility frequencies over the n grid.

    Rows: (n, trials, successes, p_hat, wilson_lo, wilson_hi).  Results are
    reduced in grid order after all trials complete, so the output is
    byte-identical for any thread count.
    """
    offending = [
        n
        for n in cfg.n_values
        if n > solver.MITM_N_CAP or cfg.m > solver.MITM_M_CAP
    ]
    if offending:
        raise CapacityError(
            f"grid points n in {offending} (m={cfg.m}) exceed mitm caps "
            f"(n<={solver.MITM_N_CAP}, m<={solver.MITM_M_CAP})"
        )
    jobs = [
        (pi, n, t)
        for pi, n in enumerate(cfg.n_values)
        for t in range(cfg.trials)
    ]
    if cfg.threads == 1:
        outcomes = [_phase_trial(cfg, pi, n, t) for pi, n, t in jobs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            outcomes = list(
                pool.map(lambda job: _phase_trial(cfg, *job), jobs, chunksize=8)
            )
    rows = []
    for pi, n in enumerate(cfg.n_values):
        wins = sum(
            1
            for (qi, _, t), ok in zip(jobs, outcomes)
            if qi == pi and ok
        )
        lo, hi = wilson_interval(wins, cfg.trials)
        rows.append((n, cfg.trials, wins, wins / cfg.trials, lo, hi))
    return rows


def _phase_csv(rows):
    lines = ["n,trials,successes,p_hat,wilson_lo,wilson_hi"]
    for n, trials, wins, phat, lo, hi in rows:
        lines.append(f"{n},{trials},{wins},{phat:.6f},{lo:.6f},{hi:.6f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_gen(args):
    spec = ensembles.EnsembleSpec(
        args.ensemble, args.m, args.n, _fraction(args.p), args.seed
    )
    A = ensembles.sample(spec)
    if args.parity == "even":
        A = ensembles.couple_even_parity(A, spec, derive_key(args.seed, 0xEE))
    if args.out:
        ensembles.write_matrix(args.out, A)
    else:
        sys.stdout.write(f"{A.m} {A.n}\n")
        for i in range(A.m):
            sys.stdout.write(" ".join(str(v) for v in A.row(i)) + "\n")
    return 0


def _cmd_disc(args):
    A = ensembles.read_matrix(args.infile)
    if args.method == "brute":
        cap = args.cap if args.cap else solver.EXHAUSTIVE_CAP
        res = solver.disc_exhaustive(A, balanced_only=args.balanced, cap=cap)
    else:
        if args.r is None:
            raise ParameterError("--method mitm needs --r")
        caps = (args.cap, solver.MITM_M_CAP) if args.cap else None
        ok, wit = solver.disc_exists_mitm(A, args.r, balanced_only=args.balanced, caps=caps)
        print(json.dumps({"feasible": ok, "r": args.r, "witness": str(wit) if wit else None}))
        return 0
    print(json.dumps(res.to_json_dict()))
    return 0


def _cmd_zcount(args):
    A = ensembles.read_matrix(args.infile)
    count = solver.count_solutions(A, args.r)
    print(json.dumps({"r": args.r, "count": count}))
    return 0


def _moment_kwargs(args):
    case = {
        "dense": "bernoulli_parity_dense",
        "bernoulli-fixed": "bernoulli_fixed_weight",
        "poisson-fixed": "poisson_fixed_weight",
    }[args.case]
    kw = {"n": args.n, "m": args.m, "band_radius": args.band}
    if case == "bernoulli_parity_dense":
        if args.p is None:
            raise ParameterError("dense case needs --p")
        kw["p"] = _fraction(args.p)
    else:
        if args.w is None:
            raise ParameterError("fixed-weight cases need --w")
        kw["w"] = args.w
    return case, kw


def _cmd_moments(args):
    case, kw = _moment_kwargs(args)
    report = moments.moment_report(case, **kw)
    flags = None
    if args.check:
        flags = moments.check_smm_conditions(
            report, args.m, Fraction(1, 8), Fraction(1, 4)
        )
    payload = {
        "case": case,
        "n": report.n,
        "m": report.m,
        "psi": _fmt_fraction(report.psi),
        "phi": [
            [b.numerator, b.denominator, _fmt_fraction(v)]
            for b, v in sorted(report.phi_at.items())
        ],
        "first_moment": _fmt_fraction(report.first_moment.value),
        "log_first_moment": report.first_moment.log_value,
        "ratio": _fmt_fraction(report.ratio),
    }
    if flags:
        payload["flags"] = {
            "first_moment_holds": flags.first_moment_holds,
            "c_margin": flags.c_margin,
            "weak_bound_holds": flags.weak_bound_holds,
            "C_delta": _fmt_fraction(flags.c_delta),
            "strong_bound_holds": flags.strong_bound_holds,
            "C_strong": _fmt_fraction(flags.c_strong),
            "C_fit": flags.c_fit,
            "central_ratio": _fmt_fraction(flags.central_ratio),
        }
    print(json.dumps(payload))
    return 0


def _cmd_ratio(args):
    case, kw = _moment_kwargs(args)
    res = moments.second_moment_ratio(case, **kw)
    payload = {
        "case": case,
        "ratio": _fmt_fraction(res.ratio),
        "profile": [
            {
                "r": t.r,
                "beta": _fmt_fraction(t.beta),
                "phi_over_psi2": _fmt_fraction(t.phi_over_psi2),
                "term": _fmt_fraction(t.term),
            }
            for t in res.profile
        ],
    }
    print(json.dumps(payload))
    return 0


def _stein_scenario(args, case):
    scen_case = "poisson_fixed_weight" if case == "poisson" else "bernoulli_fixed_weight"
    n = args.n if args.n is not None else 2 * args.w
    band = moments.SymmetricBand(args.band, args.w % 2)
    return moments.OverlapScenario(scen_case, n, args.w, _fraction(args.beta), band)


def _load_birth_death(path):
    """JSON file with fields w, a, b; coefficients as "num/den" strings."""
    with open(path) as fh:
        data = json.load(fh)
    try:
        return stein.BirthDeathSpec(
            data["w"],
            tuple(_fraction(str(v)) for v in data["a"]),
            tuple(_fraction(str(v)) for v in data["b"]),
        )
    except KeyError as exc:
        raise ParameterError(f"spec file missing field {exc}") from None


def _cmd_stein(args):
    if args.stein_cmd == "verify-inverse":
        if args.spec == "binomial":
            bd = stein.binomial_pair_spec(args.w)
        elif args.spec == "hypergeometric":
            if args.n is None:
                raise ParameterError("hypergeometric spec needs --n")
            bd = stein.hypergeometric_pair_spec(args.n, args.w)
        else:
            if args.file is None:
                raise ParameterError("--spec file needs --file PATH")
            bd = _load_birth_death(args.file)
            if bd.w != args.w:
                raise ParameterError(f"spec file has w={bd.w}, flag says {args.w}")
        sol = stein.stein_invert(bd, args.t)
        mu = stein.stationary_pmf(bd)
        image = stein_apply_residual(bd, sol, mu)
        print(
            json.dumps(
                {
                    "w": args.w,
                    "t": args.t,
                    "max_delta": _fmt_fraction(sol.max_delta()),
                    "l1_delta": _fmt_fraction(sol.l1_delta()),
                    "bound": _fmt_fraction(min(1 / bd.a[args.t], 1 / bd.b[args.t])),
                    "inverse_residual": _fmt_fraction(image),
                }
            )
        )
        return 0
    if args.stein_cmd == "verify-identity":
        scen = _stein_scenario(args, args.case)
        rep = stein.identity_report(args.case, scen)
        print(
            json.dumps(
                {
                    "case": args.case,
                    "w": args.w,
                    "beta": args.beta,
                    "band": args.band,
                    "lhs": _fmt_fraction(rep.lhs),
                    "rhs": _fmt_fraction(rep.rhs),
                    "residual": _fmt_fraction(rep.residual),
                    "band_term": _fmt_fraction(rep.band_term),
                    "corrected_residual": _fmt_fraction(rep.corrected_residual),
                }
            )
        )
        return 0
    if args.stein_cmd == "scan-bounds":
        ws = [int(tok) for tok in args.w_list.split(",")]
        beta = _fraction(args.beta)
        out = []
        for w in ws:
            n = args.n_factor * w
            scen_case = (
                "poisson_fixed_weight" if args.case == "poisson" else "bernoulli_fixed_weight"
            )
            band = moments.SymmetricBand(0, w % 2)
            scen = moments.OverlapScenario(scen_case, n, w, beta, band)
            g1 = stein.fit_g1_bound(args.case, scen)
            scen_half = moments.OverlapScenario(scen_case, n, w, Fraction(1, 2), band)
            g2_ref, c2 = stein.fit_g2_bound(args.case, scen_half)
            g2, _ = stein.fit_g2_bound(args.case, scen, c2_reference=c2)
            out.append(
                {
                    "w": w,
                    "g1_constant": g1.constant,
                    "g1_decay": g1.decay,
                    "g2_c2": c2,
                    "g2_c1": g2.constant,
                    "g2_decay": g2.decay,
                }
            )
        print(json.dumps(out))
        return 0
    raise ParameterError(f"unknown stein subcommand {args.stein_cmd!r}")


def stein_apply_residual(bd, sol, mu):
    """Max |T f - (indicator - mu_t)| over the state space; 0 when exact."""
    image = stein.stein_apply(bd, sol.f)
    worst = Fraction(0)
    for s in range(bd.w + 1):
        target = (1 if s == sol.t else 0) - mu[sol.t]
        worst = max(worst, abs(image[s] - target))
    return worst


def _cmd_lclt(args):
    grid = []
    points = [int(tok) for tok in args.points.split(",")]
    sizes = [int(tok) for tok in args.sizes.split(",")]
    for size in sizes:
        for point in points:
            entry = {"point": point}
            if args.kind in ("demoivre", "cramer_tail"):
                entry.update(n=size, p=_fraction(args.p))
            elif args.kind == "stirling_binom":
                entry.update(n=size)
            elif args.kind == "edgeworth_lazy":
                entry.update(r=size, p=_fraction(args.p))
            elif args.kind == "hyp_tail":
                entry.update(w=size, ksucc=args.ksucc, npop=args.npop)
            elif args.kind == "poisson_tail":
                entry.update(lam=_fraction(args.p))
            else:
                raise ParameterError(f"unknown kind {args.kind!r}")
            grid.append(entry)
    size_key = {
        "demoivre": "n",
        "cramer_tail": "n",
        "stirling_binom": "n",
        "edgeworth_lazy": "r",
        "hyp_tail": "w",
        "poisson_tail": None,
    }[args.kind]
    scan = locallimits.error_scan(args.kind, grid, size_key=size_key)
    keys = sorted(scan.rows[0].params) if scan.rows else []
    out = ["kind," + ",".join(keys) + ",point,exact,approx,rel_error"]
    for row in scan.rows:
        ptxt = ",".join(str(row.params[k]) for k in keys)
        out.append(
            f"{row.kind},{ptxt},{row.point},{row.exact:.12g},{row.approx:.12g},{row.rel_error:.6g}"
        )
    text = "\n".join(out) + "\n"
    if scan.decay_exponent is not None:
        text += f"# decay_exponent,{scan.decay_exponent:.4f}\n"
    sys.stdout.write(text)
    return 0


def _cmd_phase(args):
    n_values = tuple(range(args.n_start, args.n_stop + 1, args.n_stride))
    cfg = PhaseScanConfig(
        kind=args.ensemble,
        m=args.m,
        param=_fraction(args.p),
        r=args.r,
        n_values=n_values,
        trials=args.trials,
        parity=args.parity,
        threads=args.threads,
        seed=args.seed,
        out=args.out,
    )
    rows = run_phase_scan(cfg)
    text = _phase_csv(rows)
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# Parser


def _build_parser():
    top = argparse.ArgumentParser(prog="randisc", description=__doc__)
    sub = top.add_subparsers(dest="cmd")

    g = sub.add_parser("gen", help="sample a matrix and write the text format")
    g.add_argument("--ensemble", choices=("bernoulli", "poisson"), required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--p", required=True, help="p or rate; rational like 1/3 or decimal")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--parity", choices=("none", "even"), default="none")
    g.add_argument("--out")
    g.set_defaults(fn=_cmd_gen)

    d = sub.add_parser("disc", help="exact discrepancy / feasibility of a matrix file")
    d.add_argument("--in", dest="infile", required=True)
    d.add_argument("--method", choices=("brute", "mitm"), default="brute")
    d.add_argument("--balanced", action="store_true")
    d.add_argument("--r", type=int)
    d.add_argument("--cap", type=int, help="override the solver size cap")
    d.set_defaults(fn=_cmd_disc)

    z = sub.add_parser("zcount", help="count balanced solutions at radius r")
    z.add_argument("--in", dest="infile", required=True)
    z.add_argument("--r", type=int, required=True)
    z.set_defaults(fn=_cmd_zcount)

    def add_moment_flags(p):
        p.add_argument("--case", choices=("dense", "bernoulli-fixed", "poisson-fixed"), required=True)
        p.add_argument("--m", type=int, required=True)
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--p")
        p.add_argument("--w", type=int)
        p.add_argument("--band", type=int, default=0)

    mo = sub.add_parser("moments", help="psi/phi grid, first moment, overlap ratio")
    add_moment_flags(mo)
    mo.add_argument("--check", action="store_true", help="evaluate the smm condition flags")
    mo.set_defaults(fn=_cmd_moments)

    ra = sub.add_parser("ratio", help="second-moment ratio with overlap profile")
    add_moment_flags(ra)
    ra.set_defaults(fn=_cmd_ratio)

    st = sub.add_parser("stein", help="stein-inverse and pair-identity verification")
    stsub = st.add_subparsers(dest="stein_cmd")
    vi = stsub.add_parser("verify-inverse")
    vi.add_argument("--w", type=int, required=True)
    vi.add_argument("--t", type=int, required=True)
    vi.add_argument("--spec", choices=("binomial", "hypergeometric", "file"), default="binomial")
    vi.add_argument("--n", type=int)
    vi.add_argument("--file", help="JSON birth-death spec for --spec file")
    vd = stsub.add_parser("verify-identity")
    vd.add_argument("--case", choices=("poisson", "bernoulli"), required=True)
    vd.add_argument("--w", type=int, required=True)
    vd.add_argument("--n", type=int)
    vd.add_argument("--beta", required=True)
    vd.add_argument("--band", type=int, default=0)
    sc = stsub.add_parser("scan-bounds")
    sc.add_argument("--case", choices=("poisson", "bernoulli"), required=True)
    sc.add_argument("--w-list", required=True)
    sc.add_argument("--beta", default="5/8")
    sc.add_argument("--n-factor", type=int, default=4)
    st.set_defaults(fn=_cmd_stein)

    lc = sub.add_parser("lclt", help="error scans for the local-limit formulas")
    lc.add_argument("--kind", choices=locallimits.APPROX_KINDS, required=True)
    lc.add_argument("--sizes", required=True, help="comma list, e.g. 100,200,400")
    lc.add_argument("--points", default="0")
    lc.add_argument("--p", default="1/2")
    lc.add_argument("--ksucc", type=int)
    lc.add_argument("--npop", type=int)
    lc.set_defaults(fn=_cmd_lclt)

    ph = sub.add_parser("phase", help="Monte Carlo feasibility scan over n")
    ph.add_argument("--ensemble", choices=("bernoulli", "poisson"), default="bernoulli")
    ph.add_argument("--m", type=int, required=True)
    ph.add_argument("--p", required=True)
    ph.add_argument("--r", type=int, required=True)
    ph.add_argument("--n-start", type=int, required=True)
    ph.add_argument("--n-stop", type=int, required=True)
    ph.add_argument("--n-stride", type=int, default=4)
    ph.add_argument("--trials", type=int, required=True)
    ph.add_argument("--parity", choices=("none", "even"), default="none")
    ph.add_argument("--threads", type=int, default=None)
    ph.add_argument("--seed", type=int, required=True)
    ph.add_argument("--out")
    ph.set_defaults(fn=_cmd_phase)
    return top


def dispatch(argv) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if not getattr(args, "fn", None):
        parser.print_usage(sys.stderr)
        return 2
    if getattr(args, "cmd", None) == "phase" and args.threads is None:
        import os

        env = os.environ.get("RANDISC_THREADS")
        args.threads = int(env) if env else 1
    try:
        return args.fn(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: no such file: {exc.filename}", file=sys.stderr)
        return 2
    except CapacityError as exc:
        extra = f" ({exc.estimate})" if exc.estimate else ""
        print(f"capacity: {exc}{extra}", file=sys.stderr)
        return 3
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 4


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
