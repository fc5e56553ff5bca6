"""Hyperbolic motions as limits of long geodesics, and the bounds that control them.

Given a start x and a collision-free unit direction a, the geodesics from x
to ``x* + 2^n a`` (x* the base point) are solved for a range of n. Their
error budget is the function

    Psi(T) = m(x, x*)/sqrt(2 lam) + N^2/(lam a_flat) * int_{x*_flat}^{2T + 2|x*|} f

and its dyadic square-root tail ``Psi~(t) = sum_{j > log2 t} sqrt(2^-j Psi(2^j))``.
Every quantitative bound along the runs (length, midpoint, ray distance,
angle, time-radius window, hyperbolicity defect) is checked and recorded.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .config import Configuration, _require_unit, base_point, min_separation, norm, pair_separations
from .envelopes import Envelope
from .errors import InputDomainError, QuadratureError
from .mane import CAP, mane_potential
from .potentials import PotentialSpec
from .solver import GeodesicResult, SolveOptions, restricted_action, solve_geodesic

GEOM = 1.0 / (1.0 - 2.0**-0.5)
TAIL_RTOL = 1e-6
SLACK_FLOOR = 1e-9
RAY_SAMPLES = 32


# -- Psi tables -----------------------------------------------------------------------


def _dyadic_block(f: Envelope, i: int) -> float:
    return max(f.integral(2.0**i, 2.0 ** (i + 1)), 0.0)


def dyadic_tail(f: Envelope, start: int, max_terms: int = 400) -> float:
    """sum_{i >= start} sqrt(2^-i int_{2^i}^{2^(i+1)} f), geometric extrapolation at the end."""
    total = 0.0
    prev = None
    term = 0.0
    for i in range(start, start + max_terms):
        if i > 1000:
            break
        term = math.sqrt(2.0**-i * _dyadic_block(f, i))
        total += term
        if term == 0.0 or term < 1e-18 * total:
            return total
        if prev is not None and i - start > 8:
            ratio = term / prev
            if ratio >= 1.0:
                raise QuadratureError("envelope dyadic series does not converge")
        prev = term
    if prev is None or prev == 0.0:
        return total
    ratio = term / prev if prev else 0.0
    if ratio >= 1.0:
        raise QuadratureError("envelope dyadic series does not converge")
    return total + term * ratio / (1.0 - ratio)


@dataclass
class PsiTable:
    """Psi at dyadic T, its square-root tail Psi~, and the threshold scale n0."""

    x: Configuration
    a: Configuration
    lam: float
    F: PotentialSpec
    base_term: float
    envelope_coeff: float
    x_star: Configuration
    j_max: int
    psi_at: dict = field(default_factory=dict)
    psi_tilde_at: dict = field(default_factory=dict)
    tail_bound: float = 0.0
    truncation: int = 0
    n0: int = 0
    constants_validated: bool = True

    @property
    def a_flat(self) -> float:
        return min_separation(self.a)

    def psi(self, T: float) -> float:
        """Psi(T) for any T >= 0."""
        if T < 0:
            raise InputDomainError("Psi is defined for T >= 0")
        lo = min_separation(self.x_star)
        hi = 2.0 * T + 2.0 * norm(self.x_star)
        integral = self.F.envelope.integral(lo, hi) if hi > lo else 0.0
        return self.base_term + self.envelope_coeff * integral

    def _term(self, k: int) -> float:
        return math.sqrt(2.0**-k * self.psi(2.0**k))

    def _tail_after(self, J: int) -> float:
        """Upper bound for sum_{k > J} sqrt(2^-k Psi(2^k)); needs 2^(J+1) >= 2|x*|."""
        c = self.envelope_coeff
        f = self.F.envelope
        first = math.sqrt(self.psi(2.0**J)) * 2.0 ** (-(J + 1) / 2.0)
        if c == 0.0:
            return GEOM * first
        env = 2.0 ** (-(J + 1) / 2.0) * math.sqrt(_dyadic_block(f, J + 1)) \
            + math.sqrt(2.0) * dyadic_tail(f, J + 2)
        return GEOM * (first + math.sqrt(c) * env)

    def _min_tail_index(self) -> int:
        return max(0, math.ceil(math.log2(max(norm(self.x_star), 1.0))))

    def psi_tilde(self, t: float) -> float:
        """Psi~(t) for t >= 1: exact terms up to the truncation index plus the tail bound."""
        if t < 1.0:
            raise InputDomainError("Psi~ is defined for t >= 1")
        K = math.floor(math.log2(t)) + 1
        if 2.0 ** (K - 1) > t:  # guard against log2 rounding up at exact powers
            K -= 1
        return self._psi_tilde_from(K)

    def _psi_tilde_from(self, K: int) -> float:
        J = self.truncation
        if K > J:
            return self._tail_after(max(K - 1, self._min_tail_index()))
        return math.fsum(self._term(k) for k in range(K, J + 1)) + self.tail_bound

    def invariants(self) -> dict:
        """Monotonicity, the square-root comparison, and the n0 properties."""
        js = sorted(self.psi_at)
        psi = [self.psi_at[j] for j in js]
        tilde = [self.psi_tilde_at[j] for j in js]
        af = self.a_flat
        out = {
            "psi_nondecreasing": all(b >= a for a, b in zip(psi, psi[1:])),
            "psi_tilde_nonincreasing": all(b <= a for a, b in zip(tilde, tilde[1:])),
            "sqrt_ratio_below_tail": all(math.sqrt(self.psi_at[j] / 2.0**j) <= self.psi_tilde_at[j]
                                         for j in js if j >= 0),
            "n0_threshold": self._psi_tilde_from(self.n0 + 1) <= 2.0**-10 * af,
            "n0_scale": self.n0 >= 20 + math.log2(norm(self.x - self.x_star)),
            "linear_growth": all(self.psi_at[j] <= 2.0**-20 * af**2 * 2.0**j for j in js if j >= self.n0),
        }
        return out

    def to_dict(self) -> dict:
        return {"n0": self.n0, "base_term": self.base_term, "envelope_coeff": self.envelope_coeff,
                "tail_bound": self.tail_bound, "truncation": self.truncation,
                "constants_validated": self.constants_validated,
                "psi": {str(j): v for j, v in sorted(self.psi_at.items())},
                "psi_tilde": {str(j): v for j, v in sorted(self.psi_tilde_at.items())}}


def _base_options(opts: SolveOptions | None) -> SolveOptions:
    opts = opts or SolveOptions()
    return replace(opts, min_refinements=max(opts.min_refinements, 3), grading_ratio=None,
                   first_segment=None, restarts=0, spot_check=False)


def build_psi_table(x: Configuration, a: Configuration, lam: float, F: PotentialSpec,
                    j_max: int | None = None, opts: SolveOptions | None = None,
                    base_action: float | None = None) -> PsiTable:
    """Tabulate Psi and Psi~ at 2^j for 0 <= j <= j_max and locate n0.

    Psi~ is reported as the exact partial sum up to a truncation index J plus
    a rigorous bound on the remainder, with J chosen so the remainder bound is
    below 1e-6 of the sum at the top of the table. n0 is the first integer
    n >= 20 + log2|x - x*| with ``Psi~(2^n) <= 2^-10 a_flat``, where the tail
    sum starts at index n + 1.
    """
    if not lam > 0:
        raise InputDomainError("energy constant must be positive")
    _require_unit(a)
    af = min_separation(a)
    if af <= 0:
        raise InputDomainError("direction a has a collision")
    F.for_config(x)
    xs = base_point(x, a)
    if base_action is None:
        base_action = mane_potential(x, xs, F, lam, _base_options(opts)).upper
    table = PsiTable(x=x, a=a, lam=lam, F=F, base_term=base_action / math.sqrt(2.0 * lam),
                     envelope_coeff=F.N**2 / (lam * af), x_star=xs, j_max=0,
                     constants_validated=x.unit_masses)
    # n0 first, with a provisional truncation far beyond any scale of interest
    lo = math.ceil(20 + math.log2(norm(x - xs)))
    table.truncation = max(lo, table._min_tail_index()) + 1
    n0 = None
    for n in range(lo, lo + 400):
        table.truncation = max(table.truncation, n + 1)
        _settle_truncation(table, n + 1)
        if table._psi_tilde_from(n + 1) <= 2.0**-10 * af:
            n0 = n
            break
    if n0 is None:
        raise QuadratureError("Psi~ does not fall below 2^-10 a_flat within 400 dyadic scales")
    table.n0 = n0
    table.j_max = j_max if j_max is not None else n0 + 8
    _settle_truncation(table, table.j_max + 1)
    for j in range(0, table.j_max + 1):
        table.psi_at[j] = table.psi(2.0**j)
        table.psi_tilde_at[j] = table._psi_tilde_from(j + 1)
    return table


def _settle_truncation(table: PsiTable, K: int):
    """Push the truncation index until the tail bound is tiny next to the sum from K."""
    J = max(table.truncation, K, table._min_tail_index())
    for _ in range(2000):
        tail = table._tail_after(J)
        partial = math.fsum(table._term(k) for k in range(K, J + 1))
        if tail < TAIL_RTOL * (partial + tail):
            break
        J += 8
    table.truncation = J
    table.tail_bound = table._tail_after(J)


# -- runs -----------------------------------------------------------------------------


def run_options(opts: SolveOptions | None, n: int, n_from: int, x: Configuration) -> SolveOptions:
    """Graded, nested meshes; each step in n adds one refinement level."""
    opts = opts or SolveOptions(max_refinements=2)
    ratio = opts.grading_ratio or 1.25
    first = opts.first_segment or 2.0**-4 * (1.0 + norm(x))
    levels = opts.max_refinements + (n - n_from)
    return replace(opts, grading_ratio=ratio, first_segment=first, max_refinements=levels,
                   min_refinements=levels, restarts=0, spot_check=False)


def _solve_run(args):
    x, y, F, lam, opts, n = args
    try:
        return n, solve_geodesic(x, y, F, lam, opts), None
    except Exception as exc:  # recorded per run; the sequence continues
        return n, None, f"{type(exc).__name__}: {exc}"


@dataclass
class BoundCheck:
    lemma: str
    eq: str
    n: int
    where: float
    lhs: float
    rhs: float
    slack: float
    passed: bool
    asserted: bool

    def to_dict(self) -> dict:
        return {"lemma": self.lemma, "eq": self.eq, "n": self.n, "where": self.where,
                "lhs": self.lhs, "rhs": self.rhs, "slack": self.slack, "pass": self.passed,
                "asserted": self.asserted}


@dataclass
class VelocityEstimate:
    velocity: Configuration
    horizon: float
    error: float
    bound: float
    passed: bool


@dataclass
class HyperbolicReport:
    psi: PsiTable
    mode: str
    n_from: int
    n_to: int
    runs: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    crossings: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    flat_times: dict = field(default_factory=dict)
    velocity: VelocityEstimate | None = None
    cauchy_gaps: dict = field(default_factory=dict)
    cauchy_horizon: float | None = None
    defect_curve: list = field(default_factory=list)

    @property
    def x_star(self) -> Configuration:
        return self.psi.x_star

    @property
    def strict(self) -> bool:
        return self.mode == "strict"

    def asserted_checks(self):
        return [c for c in self.checks if c.asserted]

    def all_asserted_pass(self) -> bool:
        return all(c.passed for c in self.asserted_checks())

    def to_dict(self) -> dict:
        runs = []
        for n in sorted(set(self.runs) | set(self.failures)):
            entry = {"n": n}
            if n in self.runs:
                entry["result"] = self.runs[n].to_dict()
                entry["crossings"] = {str(j): s for j, s in sorted(self.crossings.get(n, {}).items())}
                entry["flat_exceeds_base_after"] = self.flat_times.get(n)
            else:
                entry["error"] = self.failures[n]
            runs.append(entry)
        out = {"mode": self.mode, "n_from": self.n_from, "n_to": self.n_to,
               "x_star": self.x_star.to_dict(), "psi": self.psi.to_dict(), "runs": runs,
               "checks": [c.to_dict() for c in self.checks],
               "all_asserted_pass": self.all_asserted_pass(),
               "cauchy_horizon": self.cauchy_horizon,
               "cauchy_gaps": {str(n): g for n, g in sorted(self.cauchy_gaps.items())},
               "psi_uses_upper_estimate": True}
        if self.velocity is not None:
            v = self.velocity
            out["velocity"] = {"estimate": v.velocity.to_dict(), "horizon": v.horizon,
                               "error": v.error, "bound": v.bound, "pass": v.passed}
        return out


def build_sequence(x: Configuration, a: Configuration, lam: float, F: PotentialSpec,
                   n_from: int, n_to: int, opts: SolveOptions | None = None, mode: str = "strict",
                   workers: int = 1, psi: PsiTable | None = None) -> HyperbolicReport:
    """Solve the geodesics to x* + 2^n a for n_from <= n <= n_to."""
    if mode not in ("strict", "exploratory"):
        raise InputDomainError(f"mode must be 'strict' or 'exploratory', got {mode!r}")
    if n_to < n_from:
        raise InputDomainError("need n_from <= n_to")
    psi = psi or build_psi_table(x, a, lam, F, opts=opts)
    if mode == "strict" and n_from <= psi.n0:
        raise InputDomainError(f"strict mode needs n_from > n0 = {psi.n0}, got {n_from}")
    if mode == "exploratory" and n_from < 4:
        raise InputDomainError("exploratory mode needs n_from >= 4")
    report = HyperbolicReport(psi=psi, mode=mode, n_from=n_from, n_to=n_to)
    jobs = [(x, psi.x_star + 2.0**n * a, F, lam, run_options(opts, n, n_from, x), n)
            for n in range(n_from, n_to + 1)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_solve_run, jobs))
    else:
        outcomes = [_solve_run(job) for job in jobs]
    for n, result, err in sorted(outcomes, key=lambda o: o[0]):
        if result is None:
            report.failures[n] = err
        else:
            report.runs[n] = result
    return report


# -- geometry along a run -------------------------------------------------------------


def _radii(path, x_star: Configuration) -> np.ndarray:
    rel = path.nodes - x_star.bodies
    return np.sqrt(np.einsum("kid,i->k", rel**2, path.masses))


def last_crossing(result: GeodesicResult, x_star: Configuration, R: float, before: float | None = None):
    """Largest t (<= before) with |gamma(t) - x*| = R on the piecewise-linear path, or None.

    An end radius within 1e-12 relative of R counts as a crossing at the end.
    """
    path = result.path
    times, nodes = path.times, path.nodes
    if before is not None and before < times[-1]:
        keep = times < before
        times = np.append(times[keep], before)
        nodes = np.concatenate([nodes[keep], path.at(before)[None]])
    rel = nodes[-1] - x_star.bodies
    end_r = math.sqrt(float(np.sum(path.masses[:, None] * rel**2)))
    if abs(end_r - R) <= 1e-12 * R:
        return float(times[-1])
    m = path.masses[None, :, None]
    q = nodes[:-1] - x_star.bodies
    e = np.diff(nodes, axis=0)
    A = np.sum(m * e * e, axis=(1, 2))
    B = 2.0 * np.sum(m * q * e, axis=(1, 2))
    C = np.sum(m * q * q, axis=(1, 2)) - R * R
    disc = B * B - 4.0 * A * C
    with np.errstate(invalid="ignore", divide="ignore"):
        w = (-B + np.sqrt(disc)) / (2.0 * A)
    hit = (A > 0) & (disc >= 0) & (w >= -1e-12) & (w <= 1.0 + 1e-12)
    idx = np.nonzero(hit)[0]
    if idx.size == 0:
        return None
    k = int(idx[-1])
    wk = min(1.0, max(0.0, float(w[k])))
    return float(times[k] + wk * (times[k + 1] - times[k]))


def crossing_times(result: GeodesicResult, x_star: Configuration, j_range) -> dict:
    """Last times at which the run sits at radius 2^j from x*."""
    out = {}
    end_r = _radii(result.path, x_star)[-1]
    for j in j_range:
        if 2.0**j > end_r * (1.0 + 1e-12):
            raise InputDomainError(f"run never reaches radius 2^{j}")
        t = last_crossing(result, x_star, 2.0**j)
        if t is None:
            raise InputDomainError(f"radius 2^{j} not attained")
        out[j] = t
    return out


def _wnorm(v, masses):
    return math.sqrt(float(np.sum(masses[:, None] * np.asarray(v) ** 2)))


def _kinetic_integral(result: GeodesicResult, t: float) -> float:
    """int_0^t |gamma'|^2 for the piecewise-linear path."""
    path = result.path
    dt = np.diff(path.times)
    sq = np.einsum("kid,i->k", np.diff(path.nodes, axis=0) ** 2, path.masses) / dt**2
    lo = np.clip(path.times[:-1], 0.0, t)
    hi = np.clip(path.times[1:], 0.0, t)
    return math.fsum(sq * (hi - lo))


def _slack(result: GeodesicResult) -> float:
    value = result.action.value
    rich = result.action.quadrature_error_estimate
    return max(10.0 * rich / value if value else 0.0, SLACK_FLOOR)


def _record(report, lemma, eq, n, where, lhs, rhs, eps, asserted):
    passed = bool(lhs <= rhs + eps * abs(rhs))
    report.checks.append(BoundCheck(lemma, eq, n, float(where), float(lhs), float(rhs),
                                    float(eps * abs(rhs)), passed, asserted))
    return passed


def _sample_times(t_lo: float, t_hi: float, crossings: dict, count: int = RAY_SAMPLES):
    ts = set(v for v in crossings.values() if t_lo <= v <= t_hi)
    if t_hi > t_lo > 0:
        ts.update(np.geomspace(t_lo, t_hi, count).tolist())
    ts.add(t_hi)
    return sorted(ts)


def check_length_bound(report: HyperbolicReport, n: int):
    """l(gamma) <= m/sqrt(2 lam) <= T + Psi(T) for the run ending at x* + 2^n a."""
    result = report.runs[n]
    lam = report.psi.lam
    eps = _slack(result)
    T = 2.0**n
    mid = result.action.value / math.sqrt(2.0 * lam)
    _record(report, "geodesic_length", "length_below_action", n, result.sigma,
            result.path.length(), mid, eps, report.strict)
    _record(report, "geodesic_length", "action_below_psi", n, result.sigma, mid,
            T + report.psi.psi(T), eps, report.strict)


def check_midpoint_bound(report: HyperbolicReport, n: int, tau: float, j: int):
    """Midpoint and ray-distance bounds for the sub-run ending at gamma(tau) = x* + 2^j b."""
    result = report.runs[n]
    psi = report.psi
    xs = psi.x_star
    masses = result.path.masses
    eps = _slack(result)
    S = 2.0**j
    end = result.path.at(tau)
    rel = end - xs.bodies
    S_actual = _wnorm(rel, masses)
    b = rel / S_actual
    cap_gap = _wnorm(b - psi.a.bodies, masses)
    cap = CAP * psi.a_flat
    asserted = report.strict and S >= 2.0**psi.n0
    _record(report, "midpoint_ray", "direction_cap", n, tau, cap_gap, cap, 1e-12 / max(cap, 1e-300), asserted)
    tau_half = last_crossing(result, xs, S_actual / 2.0, before=tau)
    if tau_half is None:
        _record(report, "midpoint_ray", "midpoint", n, tau, math.inf, 0.0, eps, asserted)
        return
    bound = math.sqrt(S_actual * psi.psi(S_actual))
    lhs = _wnorm(result.path.at(tau_half) - (xs.bodies + 0.5 * S_actual * b), masses)
    _record(report, "midpoint_ray", "midpoint", n, tau_half, lhs, 2.0 * bound, eps, asserted)
    worst = 0.0
    for t in np.linspace(tau_half, tau, RAY_SAMPLES):
        p = result.path.at(t) - xs.bodies
        proj = max(0.0, float(np.sum(masses[:, None] * p * b)))
        worst = max(worst, _wnorm(p - proj * b, masses))
    _record(report, "midpoint_ray", "ray_distance", n, tau, worst, 4.0 * bound, eps, asserted)


def check_angle_length_bounds(report: HyperbolicReport, n: int, t_lo: float):
    """Angle, partial length and separation floor at sample times t >= t_lo."""
    result = report.runs[n]
    psi = report.psi
    xs = psi.x_star
    masses = result.path.masses
    lam = psi.lam
    eps = _slack(result)
    r2l = math.sqrt(2.0 * lam)
    xs_flat = min_separation(xs)
    for t in _sample_times(t_lo, result.sigma, report.crossings.get(n, {})):
        p = result.path.at(t)
        rel = p - xs.bodies
        radius = _wnorm(rel, masses)
        if radius < 1.0:
            continue
        pt = psi.psi_tilde(radius)
        angle_err = _wnorm(rel / radius - psi.a.bodies, masses)
        _record(report, "angle_length", "angle", n, t, angle_err, 16.0 * pt, eps, report.strict)
        length = result.path.arclength_to(t)
        action = restricted_action(result, psi.F, 0.0, t) / r2l
        _record(report, "angle_length", "partial_length", n, t, length, action, eps, report.strict)
        _record(report, "angle_length", "partial_action", n, t, action, radius * (1.0 + pt * pt), eps,
                report.strict)
        flat = float(pair_separations(p).min())
        _record(report, "angle_length", "flat_floor", n, t, -flat, -xs_flat, eps, report.strict)


def check_time_bounds(report: HyperbolicReport, n: int, t_lo: float):
    """Kinetic integral, radius/time window and hyperbolicity defect at sample times."""
    result = report.runs[n]
    psi = report.psi
    xs = psi.x_star
    masses = result.path.masses
    lam = psi.lam
    eps = _slack(result)
    r2l = math.sqrt(2.0 * lam)
    a = psi.a.bodies
    for t in _sample_times(t_lo, result.sigma, report.crossings.get(n, {})):
        p = result.path.at(t)
        rel = p - xs.bodies
        radius = _wnorm(rel, masses)
        if radius < 1.0 or 0.5 * r2l * t < 1.0:
            continue
        pt = psi.psi_tilde(radius)
        pt_half = psi.psi_tilde(0.5 * r2l * t)
        strict = report.strict
        kin = _kinetic_integral(result, t)
        mid = r2l * radius * (1.0 + pt * pt)
        _record(report, "time_radius", "kinetic", n, t, kin, mid, eps, strict)
        _record(report, "time_radius", "kinetic_linear", n, t, mid, 8.0 * lam * t, eps, strict)
        ratio = radius / (r2l * t)
        _record(report, "time_radius", "ratio_lower", n, t, 1.0 / (1.0 + pt * pt), ratio, eps, strict)
        _record(report, "time_radius", "ratio_upper", n, t, ratio, 1.0 + pt * pt, eps, strict)
        _record(report, "time_radius", "ratio_window", n, t, 1.0 + pt * pt, 2.0, eps, strict)
        defect = _wnorm(rel - r2l * t * a, masses) / (r2l * t)
        _record(report, "time_radius", "defect_squared", n, t, defect**2, 2.0**9 * pt * pt, eps, strict)
        _record(report, "time_radius", "defect_squared_time", n, t, 2.0**9 * pt * pt,
                2.0**9 * pt_half * pt_half, eps, strict)
        if t >= 2.0 ** (psi.n0 + 1) / r2l:
            _record(report, "limit_defect", "defect", n, t, defect, 2.0**5 * pt_half, eps, strict)


def crossing_window_checks(report: HyperbolicReport, n: int):
    lam = report.psi.lam
    r2l = math.sqrt(2.0 * lam)
    eps = _slack(report.runs[n])
    for j, s in sorted(report.crossings.get(n, {}).items()):
        asserted = report.strict and j >= report.psi.n0
        _record(report, "time_radius", "crossing_lower", n, s, 2.0 ** (j - 1) / r2l, s, eps, asserted)
        _record(report, "time_radius", "crossing_upper", n, s, s, 2.0 ** (j + 1) / r2l, eps, asserted)
    seq = [report.crossings[n][j] for j in sorted(report.crossings.get(n, {}))]
    mono = all(b > a for a, b in zip(seq, seq[1:]))
    _record(report, "time_radius", "crossing_monotone", n, 0.0, 0.0 if mono else 1.0, 0.0, 0.0,
            report.strict)


def flat_exceeds_base_after(result: GeodesicResult, x_star: Configuration) -> float:
    """Earliest node time after which every node keeps flat norm >= x*_flat."""
    flats = pair_separations(result.path.nodes).min(axis=-1)
    bad = np.nonzero(flats < min_separation(x_star))[0]
    if bad.size == 0:
        return 0.0
    k = int(bad[-1])
    return float(result.path.times[min(k + 1, result.path.M - 1)])


def verify_runs(report: HyperbolicReport) -> HyperbolicReport:
    """Crossings and every bound check for each successful run."""
    psi = report.psi
    j_lo_global = psi.n0 if report.strict else min(psi.n0, report.n_from)
    for n, result in sorted(report.runs.items()):
        j_lo = min(j_lo_global, n)
        report.crossings[n] = crossing_times(result, psi.x_star, range(j_lo, n + 1))
        report.flat_times[n] = flat_exceeds_base_after(result, psi.x_star)
        t_lo = report.crossings[n][j_lo]
        check_length_bound(report, n)
        crossing_window_checks(report, n)
        for j, tau in sorted(report.crossings[n].items()):
            check_midpoint_bound(report, n, tau, j)
        check_angle_length_bounds(report, n, t_lo)
        check_time_bounds(report, n, t_lo)
    return report


# -- limits ---------------------------------------------------------------------------


def cauchy_gap(r1: GeodesicResult, r2: GeodesicResult, horizon: float) -> float:
    """sup over [0, horizon] of the distance between two timed runs."""
    ts = np.union1d(r1.path.times[r1.path.times <= horizon], r2.path.times[r2.path.times <= horizon])
    ts = np.append(ts, horizon)
    diff = r1.path.at_many(ts) - r2.path.at_many(ts)
    return float(np.max(np.sqrt(np.einsum("kid,i->k", diff**2, r1.path.masses))))


def cauchy_gaps(report: HyperbolicReport, horizon: float | None = None) -> dict:
    """Gaps between consecutive runs on a common horizon.

    The default horizon is the earliest last-crossing of radius 2^(n0+1)
    among the runs (so every run covers it), or of the smallest run's end
    radius when that is below 2^(n0+1).
    """
    ns = sorted(report.runs)
    if len(ns) < 2:
        raise InputDomainError("need at least two runs")
    if horizon is None:
        R = 2.0 ** min(report.psi.n0 + 1, ns[0])
        times = [last_crossing(report.runs[n], report.x_star, R) for n in ns]
        if any(t is None for t in times):
            raise InputDomainError("some run never reaches radius 2^(n0+1)")
        horizon = min(times)
    report.cauchy_horizon = horizon
    report.cauchy_gaps = {n: cauchy_gap(report.runs[n], report.runs[m], horizon)
                          for n, m in zip(ns, ns[1:]) if m == n + 1}
    return report.cauchy_gaps


def asymptotic_velocity(report: HyperbolicReport, horizon: float | None = None) -> VelocityEstimate:
    """gamma(T_h)/T_h from the largest run, against the limiting-defect envelope.

    The default horizon is the end time of the second largest run, the
    largest time covered by two runs.
    """
    ns = sorted(report.runs)
    if len(ns) < 2:
        raise InputDomainError("need at least two runs")
    psi = report.psi
    r2l = math.sqrt(2.0 * psi.lam)
    largest = report.runs[ns[-1]]
    if horizon is None:
        horizon = report.runs[ns[-2]].sigma
    if horizon > largest.sigma:
        raise InputDomainError("horizon exceeds the largest run")
    v = largest.path.at(horizon) / horizon
    masses = largest.path.masses
    err = _wnorm(v - r2l * psi.a.bodies, masses)
    bound = r2l * 2.0**5 * psi.psi_tilde(max(1.0, 0.5 * r2l * horizon))
    eps = _slack(largest)
    est = VelocityEstimate(Configuration(v, masses), horizon, err, bound,
                           bool(err <= bound * (1.0 + eps)))
    report.velocity = est
    return est


def defect_curve(report: HyperbolicReport, n: int | None = None, count: int = 64) -> list:
    """Rows (t, radius, angle_error, defect, bound) along a run, log-spaced in t."""
    n = max(report.runs) if n is None else n
    result = report.runs[n]
    psi = report.psi
    r2l = math.sqrt(2.0 * psi.lam)
    masses = result.path.masses
    t_lo = max(result.path.times[1], 2.0 / r2l)
    rows = []
    for t in np.geomspace(t_lo, result.sigma, count):
        rel = result.path.at(t) - psi.x_star.bodies
        radius = _wnorm(rel, masses)
        angle = _wnorm(rel / radius - psi.a.bodies, masses) if radius > 0 else math.nan
        defect = _wnorm(rel - r2l * t * psi.a.bodies, masses) / (r2l * t)
        bound = 2.0**5 * psi.psi_tilde(0.5 * r2l * t)
        rows.append((float(t), radius, angle, defect, bound))
    report.defect_curve = rows
    return rows


def run_hyperbolic(x, a, lam, F, n_from, n_to, opts=None, mode="strict", workers=1) -> HyperbolicReport:
    """Build the table, solve the runs, verify every bound and extract the limit."""
    report = build_sequence(x, a, lam, F, n_from, n_to, opts, mode, workers)
    verify_runs(report)
    if len(report.runs) >= 2:
        cauchy_gaps(report)
        asymptotic_velocity(report)
        vel = report.velocity
        eps = _slack(report.runs[max(report.runs)])
        _record(report, "limit_defect", "velocity", max(report.runs), vel.horizon, vel.error, vel.bound,
                eps, report.strict)
    if report.runs:
        defect_curve(report)
    return report
