"""Sampling helpers and the self-check suite driven by ``manegeo verify``."""

from __future__ import annotations

import math

import numpy as np

from .action import DiscretePath, action_gradient, maupertuis_action
from .config import Configuration, norm
from .errors import CollisionObstructionError, QuadratureError
from .hyperbolic import dyadic_tail
from .mane import _tolerance, mane_potential
from .oracle import shoot_match
from .potentials import PotentialSpec, envelope_violations, evaluate, gradient
from .solver import SolveOptions, solve_geodesic


def ordered_configuration(rng: np.random.Generator, masses, d: int = 2, spread: float = 3.0) -> Configuration:
    """Random configuration whose first coordinates are ordered with gaps >= 2.

    The set of such configurations is convex, so straight segments between
    two samples never meet a collision.
    """
    n = len(masses)
    bodies = rng.uniform(-spread, spread, size=(n, d))
    bodies[:, 0] = 3.0 * np.arange(n) + rng.uniform(0.0, 1.0, size=n) - 1.5 * (n - 1)
    return Configuration(bodies, masses)


def potential_gradient_error(F: PotentialSpec, x: Configuration, h: float = 1e-6) -> float:
    """Relative gap between the mass gradient and central differences of F."""
    g = gradient(F, x).bodies
    fd = np.zeros_like(g)
    step = h * max(1.0, norm(x))
    for i in range(x.N):
        for k in range(x.d):
            e = np.zeros_like(x.bodies)
            e[i, k] = step
            fd[i, k] = (evaluate(F, x + e) - evaluate(F, x - e)) / (2.0 * step) / x.masses[i]
    return float(np.max(np.abs(fd - g)) / max(np.max(np.abs(g)), 1e-300))


def action_gradient_error(path: DiscretePath, F: PotentialSpec, lam: float, h: float = 1e-6) -> float:
    """Relative gap between the discrete action gradient and central differences."""
    g = action_gradient(path, F, lam)
    fd = np.zeros_like(g)
    scale = h * max(1.0, float(np.max(np.abs(path.nodes))))
    for k in range(1, path.M - 1):
        for i in range(path.nodes.shape[1]):
            for c in range(path.nodes.shape[2]):
                plus, minus = path.nodes.copy(), path.nodes.copy()
                plus[k, i, c] += scale
                minus[k, i, c] -= scale
                fp = maupertuis_action(DiscretePath(plus, path.masses), F, lam).value
                fm = maupertuis_action(DiscretePath(minus, path.masses), F, lam).value
                fd[k, i, c] = (fp - fm) / (2.0 * scale)
    return float(np.max(np.abs(fd - g)) / max(np.max(np.abs(g)), 1e-300))


def metric_triple(F: PotentialSpec, lam: float, x, y, z, opts: SolveOptions | None = None) -> dict:
    """Symmetry, triangle inequality and the chord lower bound on one triple."""
    opts = opts or SolveOptions()
    est = {}
    for name, (p, q) in {"xy": (x, y), "yx": (y, x), "yz": (y, z), "xz": (x, z)}.items():
        m = mane_potential(p, q, F, lam, opts)
        est[name] = (m.upper, _tolerance(m.result, opts), m.analytic_lower)
    sym_gap = abs(est["xy"][0] - est["yx"][0])
    sym_tol = 2.0 * (est["xy"][1] + est["yx"][1])
    tri_slack = est["xz"][0] - est["xy"][0] - est["yz"][0]
    tri_tol = 3.0 * max(est["xz"][1], est["xy"][1], est["yz"][1])
    lower_ok = all(u + t >= low for u, t, low in est.values())
    return {"symmetry_gap": sym_gap, "symmetry_tol": sym_tol, "symmetry": bool(sym_gap <= sym_tol),
            "triangle_excess": tri_slack, "triangle_tol": tri_tol, "triangle": bool(tri_slack <= tri_tol),
            "lower_bound": bool(lower_ok)}


def _record(name, passed, **detail):
    return {"check": name, "pass": bool(passed), **detail}


def run_suite(F: PotentialSpec, lam: float, d: int = 2, seed: int = 0, samples: int = 3,
              opts: SolveOptions | None = None) -> list:
    """Envelope, gradient, metric-axiom and shooting checks; failures are data."""
    rng = np.random.default_rng(seed)
    opts = opts or SolveOptions(max_refinements=3)
    masses = F.masses
    out = []

    seps = np.geomspace(F.near_region_width, 1e8, 400)
    bad = envelope_violations(F, seps)
    out.append(_record("envelope_domination", not bad, violations=len(bad),
                       first=[list(bad[0][0]), bad[0][1], bad[0][2], bad[0][3]] if bad else None))
    try:
        tail = dyadic_tail(F.envelope, 1)
        out.append(_record("envelope_series", math.isfinite(tail), value=tail))
    except QuadratureError as exc:
        out.append(_record("envelope_series", False, error=str(exc)))

    worst = 0.0
    for _ in range(samples):
        worst = max(worst, potential_gradient_error(F, ordered_configuration(rng, masses, d)))
    out.append(_record("potential_gradient", worst <= 1e-6, max_relative_error=worst))

    worst = 0.0
    for _ in range(samples):
        a, b = ordered_configuration(rng, masses, d), ordered_configuration(rng, masses, d)
        s = np.linspace(0.0, 1.0, 9)[:, None, None]
        nodes = (1 - s) * a.bodies + s * b.bodies
        nodes[1:-1] += 0.1 * rng.standard_normal(nodes[1:-1].shape)
        worst = max(worst, action_gradient_error(DiscretePath(nodes, masses), F, lam))
    out.append(_record("action_gradient", worst <= 1e-6, max_relative_error=worst))

    verdicts = {"symmetry": 0, "triangle": 0, "lower_bound": 0}
    for _ in range(samples):
        x, y, z = (ordered_configuration(rng, masses, d) for _ in range(3))
        res = metric_triple(F, lam, x, y, z, opts)
        for k in verdicts:
            verdicts[k] += 0 if res[k] else 1
    for k, v in verdicts.items():
        out.append(_record(f"metric_{k}", v == 0, violations=v, triples=samples))

    x, y = ordered_configuration(rng, masses, d), ordered_configuration(rng, masses, d)
    mismatches = []
    try:
        for M in (65, 129, 257):
            r = solve_geodesic(x, y, F, lam, SolveOptions(initial_nodes=M, max_refinements=0,
                                                         optimizer_tolerance=1e-12))
            mismatches.append(shoot_match(r, F).mismatch)
        tiny = all(m < 1e-12 for m in mismatches)
        decreasing = all(b <= 1.1 * a for a, b in zip(mismatches, mismatches[1:]))
        out.append(_record("shooting_refinement", tiny or decreasing, mismatches=mismatches))
    except (CollisionObstructionError, ValueError, ArithmeticError) as exc:
        out.append(_record("shooting_refinement", False, error=str(exc)))
    return out
