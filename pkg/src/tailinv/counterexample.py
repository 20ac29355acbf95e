"""Log-periodically perturbed Pareto laws and non-uniqueness fixtures.

The base measure nu^alpha(dx) = alpha x^(-alpha-1) dx on (0, inf) is tilted by
1 + a cos(theta0 ln x) + b sin(theta0 ln x).  Its tail has the closed form

    x^-alpha [1 + alpha/(alpha^2+theta0^2) (a(alpha cos - theta0 sin) + b(alpha sin + theta0 cos))],

evaluated at theta0 ln x; x^alpha times the tail keeps oscillating, so the
law is not regularly varying.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .measures import DiscreteMeasure, MeasureError, Rect

SAMPLE_CHUNK = 1 << 18
NEWTON_XTOL = 1e-13


@dataclass(frozen=True)
class OscLawParams:
    alpha: float
    theta0: float
    a: float
    b: float
    r: float = 1.0
    sign_flip: bool = False  # True selects the (-a, -b) companion measure

    def __post_init__(self):
        if not self.alpha > 0:
            raise MeasureError("alpha must be positive")
        if self.theta0 == 0:
            raise MeasureError("theta0 must be nonzero")
        if not self.r > 0:
            raise MeasureError("truncation point r must be positive")
        if self.a**2 + self.b**2 > 1 + 1e-15:
            raise MeasureError("need a^2 + b^2 <= 1 for a nonnegative density")

    @property
    def sign(self) -> float:
        return -1.0 if self.sign_flip else 1.0

    @property
    def amplitude(self) -> float:
        """Half the peak-to-peak range of x^alpha * tail(x)."""
        al, th = self.alpha, self.theta0
        return al * math.hypot(self.a, self.b) / math.hypot(al, th)

    @property
    def period(self) -> float:
        """Period of the oscillation in ln x."""
        return 2 * math.pi / abs(self.theta0)

    def flipped(self) -> "OscLawParams":
        return replace(self, sign_flip=not self.sign_flip)


def _osc_factor(alpha, theta0, a, b, t):
    """x^alpha * tail(x) - 1 at t = ln x for the (+a, +b) measure with index alpha."""
    c, s = np.cos(theta0 * t), np.sin(theta0 * t)
    k = alpha / (alpha**2 + theta0**2)
    return k * (a * (alpha * c - theta0 * s) + b * (alpha * s + theta0 * c))


def _scaled_tail(alpha, theta0, a, b, x, level=1.0):
    """x^-alpha [level + osc] : tail of [level + a cos + b sin] nu^alpha beyond x."""
    x = np.asarray(x, dtype=float)
    t = np.log(x)
    return x ** (-alpha) * (level + _osc_factor(alpha, theta0, a, b, t))


def osc_density(params: OscLawParams, x):
    """Density of the tilted measure with respect to Lebesgue measure."""
    x = np.asarray(x, dtype=float)
    t = params.theta0 * np.log(x)
    tilt = 1 + params.sign * (params.a * np.cos(t) + params.b * np.sin(t))
    return tilt * params.alpha * x ** (-params.alpha - 1)


def osc_tail(params: OscLawParams, x, *, check_domain: bool = True):
    """Closed-form tail nu((x, inf)) of the tilted measure for x >= r."""
    x = np.asarray(x, dtype=float)
    if check_domain and np.any(x < params.r * (1 - 1e-15)):
        raise MeasureError(f"osc_tail is defined on [r, inf) with r = {params.r}")
    p = params
    return _scaled_tail(p.alpha, p.theta0, p.sign * p.a, p.sign * p.b, x)


def _tail_unchecked(params, x):
    return osc_tail(params, x, check_domain=False)


def minimal_truncation(params: OscLawParams) -> float:
    """Smallest r with nu((r, inf)) <= 1 (the tail is strictly decreasing)."""
    amp = params.amplitude
    lo = math.log(1 - amp) / params.alpha - 1e-3 if amp < 1 else -50.0
    hi = math.log(1 + amp) / params.alpha + 1e-3

    def g(t):
        return float(_tail_unchecked(params, math.exp(t))) - 1.0

    return math.exp(optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))


@dataclass(frozen=True, eq=False)
class OscillatingLaw:
    """Probability law: tilted measure on (r, inf) plus an atom at 1 carrying the rest."""

    params: OscLawParams
    atom_at_one: float

    def tail(self, x):
        """nu((x, inf)) for x >= r."""
        return osc_tail(self.params, x)

    def survival(self, s):
        """P(Y > s) for any real s."""
        s = np.asarray(s, dtype=float)
        r = self.params.r
        cont = _tail_unchecked(self.params, np.maximum(s, r))
        return cont + self.atom_at_one * (s < 1)

    def mean(self) -> float:
        """E Y, finite only when alpha > 1."""
        p = self.params
        if p.alpha <= 1:
            return math.inf
        beta = p.alpha - 1
        # int_r^inf x nu(dx) = (alpha/beta) * tail of the same tilt with index beta
        cont = p.alpha / beta * float(_scaled_tail(beta, p.theta0, p.sign * p.a, p.sign * p.b, p.r))
        return self.atom_at_one + cont

    def quantile_of_tail(self, v):
        """Solve tail(x) = v for v in (0, tail(r)] by safeguarded Newton on t = ln x."""
        return _invert_tail(self.params, np.asarray(v, dtype=float))


def build_law(params: OscLawParams) -> OscillatingLaw:
    """Probability law with the tilted measure beyond r and an atom at 1."""
    mass = float(_tail_unchecked(params, params.r))
    if mass > 1 + 1e-15:
        r_min = minimal_truncation(params)
        raise MeasureError(f"nu((r, inf)) = {mass:.6g} > 1; need r >= {r_min:.12g}")
    return OscillatingLaw(params, max(0.0, 1.0 - mass))


def _invert_tail(p: OscLawParams, v: np.ndarray) -> np.ndarray:
    al, th = p.alpha, p.theta0
    a, b = p.sign * p.a, p.sign * p.b
    k = al / (al**2 + th**2)
    ca, cb = k * (a * al + b * th), k * (b * al - a * th)  # osc = ca cos + cb sin
    amp = p.amplitude
    lv = np.log(v).reshape(-1)
    t_r = math.log(p.r)
    lo = np.maximum(((math.log1p(-amp) if amp < 1 else -np.inf) - lv) / al, t_r)
    hi = np.maximum((math.log1p(amp) - lv) / al, t_r)
    t = np.clip(-lv / al, lo, hi)
    out = t.copy()
    idx = np.arange(len(t))
    for _ in range(200):
        c, s = np.cos(th * t), np.sin(th * t)
        osc = ca * c + cb * s
        h = np.log1p(osc) - al * t - lv
        # h decreases in t: h > 0 means the root lies to the right
        pos = h > 0
        lo = np.where(pos, t, lo)
        hi = np.where(pos, hi, t)
        dh = -al * (1 + a * c + b * s) / (1 + osc)
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = t - h / dh
        bad = ~np.isfinite(tn) | (tn < lo) | (tn > hi)
        tn[bad] = 0.5 * (lo[bad] + hi[bad])
        done = (np.abs(tn - t) <= NEWTON_XTOL * np.maximum(1.0, np.abs(tn))) | (hi - lo <= NEWTON_XTOL)
        out[idx[done]] = tn[done]
        keep = ~done
        if not np.any(keep):
            break
        idx, t, lo, hi, lv = idx[keep], tn[keep], lo[keep], hi[keep], lv[keep]
    else:
        out[idx] = t
    return np.exp(out).reshape(np.shape(v))


@dataclass(frozen=True, eq=False)
class MixedLaw:
    """X = +Y_pos or -Y_neg with probability 1/2 each, optionally centered."""

    positive_part: OscillatingLaw
    negative_part: OscillatingLaw
    mix: tuple = (0.5, 0.5)
    centered: bool = False

    @property
    def params(self) -> OscLawParams:
        return self.positive_part.params

    def mean_uncentered(self) -> float:
        p, q = self.mix
        return p * self.positive_part.mean() - q * self.negative_part.mean()

    @property
    def shift(self) -> float:
        return self.mean_uncentered() if self.centered else 0.0

    def survival(self, s):
        """P(X > s) for s >= 0 (before centering)."""
        s = np.asarray(s, dtype=float)
        return self.mix[0] * self.positive_part.survival(s)

    def lower_tail(self, s):
        """P(X < -s) for s >= 0 (before centering)."""
        return self.mix[1] * self.negative_part.survival(np.asarray(s, dtype=float))


def symmetric_law(params: OscLawParams) -> MixedLaw:
    """Same tilted law on both half-lines."""
    law = build_law(params)
    return MixedLaw(law, law)


def flipped_pair_law(params: OscLawParams) -> MixedLaw:
    """(+a, +b) tilt on the right, (-a, -b) tilt on the left; centered when alpha > 1."""
    base = replace(params, sign_flip=False)
    pos, neg = build_law(base), build_law(base.flipped())
    return MixedLaw(pos, neg, centered=params.alpha > 1)


def _chunk_seeds(seed, n: int, chunk: int):
    k = max(1, -(-n // chunk))
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(k)


def _sample_chunk(law, n: int, ss: np.random.SeedSequence) -> np.ndarray:
    return draw(law, n, np.random.Generator(np.random.Philox(ss)))


def draw(law, n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws from an OscillatingLaw or MixedLaw using the given generator."""
    if isinstance(law, OscillatingLaw):
        return _sample_osc(law, rng.random(n))
    side = rng.random(n) < law.mix[0]
    u = rng.random(n)
    out = np.empty(n)
    out[side] = _sample_osc(law.positive_part, u[side])
    out[~side] = -_sample_osc(law.negative_part, u[~side])
    return out - law.shift


def _sample_osc(law: OscillatingLaw, u: np.ndarray) -> np.ndarray:
    out = np.ones_like(u)
    cont = u >= law.atom_at_one
    v = u[cont] - law.atom_at_one
    # v = 0 has probability zero; guard the log anyway
    v = np.maximum(v, np.finfo(float).tiny)
    out[cont] = law.quantile_of_tail(v)
    return out


def sample(law, n: int, seed=0, threads: int = 1, chunk: int = SAMPLE_CHUNK) -> np.ndarray:
    """n draws by inverse-CDF sampling; identical output for any thread count.

    ``seed`` is an integer or a SeedSequence; each chunk of ``chunk`` draws
    gets its own spawned Philox stream.
    """
    if n < 1:
        raise MeasureError("n must be >= 1")
    seeds = _chunk_seeds(seed, n, chunk)
    sizes = [min(chunk, n - i * chunk) for i in range(len(seeds))]
    if threads > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda a: _sample_chunk(law, *a), zip(sizes, seeds)))
    else:
        parts = [_sample_chunk(law, m, s) for m, s in zip(sizes, seeds)]
    return np.concatenate(parts)


def oscillation_profile(law, windows: int = 1, per_period: int = 1000):
    """(ln x, x^alpha tail(x)) on a dense grid spanning `windows` periods from ln r."""
    p = law.params
    t = np.linspace(math.log(p.r), math.log(p.r) + windows * p.period, windows * per_period + 1)
    return t, 1 + _osc_factor(p.alpha, p.theta0, p.sign * p.a, p.sign * p.b, t)


def oscillation_certificate(law, windows: int = 1, per_period: int = 1000):
    """(sup, inf) of x^alpha * tail(x) over the given number of periods in ln x.

    Dense evaluation followed by bounded refinement around the extreme grid
    points.  A gap sup - inf > 1e-6 certifies that the law is not regularly varying.
    """
    if windows < 1:
        raise MeasureError("windows must be >= 1")
    p = law.params
    al, th, a, b = p.alpha, p.theta0, p.sign * p.a, p.sign * p.b
    t, g = oscillation_profile(law, windows, per_period)
    h = t[1] - t[0]

    def refine(i, sgn):
        lo, hi = max(t[0], t[i] - h), min(t[-1], t[i] + h)
        res = optimize.minimize_scalar(
            lambda s: -sgn * (1 + _osc_factor(al, th, a, b, s)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
        )
        return max(sgn * g[i], -res.fun) * sgn

    sup = refine(int(np.argmax(g)), 1.0)
    inf = refine(int(np.argmin(g)), -1.0)
    return float(sup), float(inf)


def is_non_rv(sup: float, inf: float, gap: float = 1e-6) -> bool:
    return sup - inf > gap


# ---------------------------------------------------------------------------
# Non-uniqueness fixtures for the one-dimensional quadrant system
# ---------------------------------------------------------------------------


@dataclass
class NonUniquenessFixture:
    """Two solutions (nu1, nu2) of the quadrant system for the same rho.

    Measures are keyed by quadrant, (1,) and (-1,).  ``panel`` holds the
    sets on which both sides are exact: thresholds on cell boundaries so that
    every atom sits strictly inside a cell before and after the shift by rho.
    """

    nu1: dict
    nu2: dict
    rho: dict
    panel: list
    log_edges: np.ndarray
    shift: float
    variant: str
    meta: dict = field(default_factory=dict)

    def tv_difference(self) -> float:
        """Total variation between nu1 and nu2 over the window cells."""
        n = len(self.log_edges) - 1
        return float(sum(np.abs(self.nu1[v].masses[:n] - self.nu2[v].masses[:n]).sum() for v in self.nu1))

    def perturbed(self, factor: float) -> dict:
        """rho with the (-1,) component mass multiplied by factor."""
        r = self.rho[(-1,)]
        return {(1,): self.rho[(1,)], (-1,): DiscreteMeasure.from_arrays(1, r.points, r.masses * factor)}


def _cell_measure(alpha, theta0, level, a, b, edges) -> DiscreteMeasure:
    """Atoms at log-midpoints of cells with exact cell masses, plus the mass beyond the window."""
    x = np.exp(edges)
    F = _scaled_tail(alpha, theta0, a, b, x, level)
    masses = F[:-1] - F[1:]
    h = edges[1] - edges[0]
    pts = np.exp(np.concatenate([0.5 * (edges[:-1] + edges[1:]), [edges[-1] + 0.5 * h]]))
    m = np.concatenate([masses, [F[-1]]])
    keep = m > 0
    return DiscreteMeasure(1, pts[keep][:, None], m[keep])


def remark22_fixture(
    c1: float,
    c_minus1: float,
    alpha: float,
    theta0: float,
    a: float,
    b: float,
    variant: str = "sum",
    window: tuple = (-8.0, 8.0),
    n_cells: int = 10_000,
    panel_stride: int = 25,
) -> NonUniquenessFixture:
    """Discretized tilted and untilted solutions for a rho whose Mellin sum vanishes at theta0.

    variant "sum": nu_i^(1) = [c_i + a cos + b sin] nu^alpha with rho_1 = delta_1 and
    rho_-1 = exp(-alpha pi/theta0) delta_{exp(pi/theta0)}, so the sum of the two Mellin
    transforms vanishes at theta0.  variant "difference": the tilt enters with sign (-1)^i
    and rho_-1 = exp(-2 alpha pi/theta0) delta_{exp(2 pi/theta0)}, so their difference vanishes.
    """
    if a * a + b * b > 1 + 1e-15:
        raise MeasureError("need a^2 + b^2 <= 1")
    amp = math.hypot(a, b)
    if min(c1, c_minus1) < amp:
        raise MeasureError(f"densities go negative: need c_i >= sqrt(a^2+b^2) = {amp:.6g}")
    if theta0 == 0:
        raise MeasureError("theta0 must be nonzero")
    if variant == "sum":
        shift, tilt = math.pi / abs(theta0), {(1,): 1.0, (-1,): 1.0}
    elif variant == "difference":
        shift, tilt = 2 * math.pi / abs(theta0), {(1,): -1.0, (-1,): 1.0}
    else:
        raise MeasureError(f"unknown variant {variant!r}")
    L0, L1 = window
    # cell width divides the shift so shifted cells stay aligned
    k = max(1, round(shift / ((L1 - L0) / n_cells)))
    h = shift / k
    n = int(math.ceil((L1 - L0) / h - 1e-9))
    edges = L0 + h * np.arange(n + 1)

    c = {(1,): c1, (-1,): c_minus1}
    nu1 = {v: _cell_measure(alpha, theta0, c[v], tilt[v] * a, tilt[v] * b, edges) for v in c}
    nu2 = {v: _cell_measure(alpha, theta0, c[v], 0.0, 0.0, edges) for v in c}
    rho = {
        (1,): DiscreteMeasure(1, np.array([[1.0]]), np.array([1.0])),
        (-1,): DiscreteMeasure(1, np.array([[math.exp(shift)]]), np.array([math.exp(-alpha * shift)])),
    }
    # thresholds t with t and t * exp(-shift) both on cell edges inside the window
    first = k
    idx = np.arange(first, n + 1, panel_stride)
    panel = [Rect([math.exp(edges[i])], [math.inf]) for i in idx]
    panel += [Rect([math.exp(edges[i])], [math.exp(edges[j])]) for i, j in zip(idx[:-1], idx[1:])]
    meta = {"cell_width": h, "n_cells": n, "cells_per_shift": k, "window": list(window)}
    return NonUniquenessFixture(nu1, nu2, rho, panel, edges, shift, variant, meta)
