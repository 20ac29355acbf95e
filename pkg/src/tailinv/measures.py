"""Discrete measures on R^d and alpha-homogeneous tail measures.

A tail measure is stored through its spectral decomposition: finitely many
unit directions ``u_i`` with weights ``w_i``, representing

    mu(A) = sum_i w_i * int_0^inf 1{r u_i in A} alpha r^(-alpha-1) dr.

Measures are only ever evaluated on the ``EvalSet`` family (boxes bounded
away from the origin, norm exceedances and products of half-lines), where
the radial set along every direction is an interval and the integral has a
closed form.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

DIRECTION_TOL = 1e-12
MERGE_TOL = 1e-9
SINGULAR_COND = 1e12

QuadrantSign = tuple  # tuple of +1/-1 entries, one per coordinate


class MeasureError(ValueError):
    """Raised for malformed measures, sets or maps."""


def all_quadrants(dim: int) -> list[tuple[int, ...]]:
    """All 2^dim sign vectors, in lexicographic order with -1 first."""
    return [tuple(v) for v in itertools.product((-1, 1), repeat=dim)]


def _as_points(points, dim: int) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return np.zeros((0, dim))
    if dim == 1 and arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise MeasureError(f"points must have shape (n, {dim}), got {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# Discrete measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite nonnegative atomic measure; atoms sorted and coalesced."""

    dim: int
    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        self.points.setflags(write=False)
        self.masses.setflags(write=False)

    @classmethod
    def from_arrays(cls, dim: int, points, masses) -> "DiscreteMeasure":
        if dim < 1:
            raise MeasureError("dim must be >= 1")
        pts = _as_points(points, dim)
        m = np.asarray(masses, dtype=float).reshape(-1)
        if len(m) != len(pts):
            raise MeasureError("points and masses differ in length")
        bad = np.flatnonzero(~(m > 0) | ~np.isfinite(m))
        if bad.size:
            raise MeasureError(f"atom {bad[0]} has nonpositive or non-finite mass {m[bad[0]]}")
        if not np.all(np.isfinite(pts)):
            raise MeasureError("atom points must be finite")
        if len(pts) == 0:
            return cls(dim, np.zeros((0, dim)), np.zeros(0))
        uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inv.reshape(-1), m)
        return cls(dim, uniq, merged)

    @classmethod
    def empty(cls, dim: int) -> "DiscreteMeasure":
        return cls.from_arrays(dim, np.zeros((0, dim)), [])

    def __len__(self):
        return len(self.masses)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def atoms(self) -> list[tuple[tuple[float, ...], float]]:
        return [(tuple(p), float(m)) for p, m in zip(self.points, self.masses)]

    def scaled(self, c: float) -> "DiscreteMeasure":
        if c <= 0:
            raise MeasureError("scale factor must be positive")
        return DiscreteMeasure.from_arrays(self.dim, self.points, self.masses * c)

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        if other.dim != self.dim:
            raise MeasureError("dimension mismatch")
        return DiscreteMeasure.from_arrays(
            self.dim,
            np.vstack([self.points, other.points]),
            np.concatenate([self.masses, other.masses]),
        )

    def moment(self, power: float, coord: int | None = None) -> float:
        """int |x_coord|^power d(self), or the Euclidean-norm moment if coord is None."""
        base = np.linalg.norm(self.points, axis=1) if coord is None else np.abs(self.points[:, coord])
        return float(np.sum(self.masses * base**power))

    def evaluate(self, A: "EvalSet") -> float:
        """Mass of the atoms lying in the (closed) set A."""
        return float(self.masses[A.contains(self.points)].sum())

    def same_as(self, other: "DiscreteMeasure", rtol: float = 0.0) -> bool:
        if self.dim != other.dim or len(self) != len(other):
            return False
        if rtol == 0.0:
            return bool(np.array_equal(self.points, other.points) and np.array_equal(self.masses, other.masses))
        return bool(
            np.allclose(self.points, other.points, rtol=rtol, atol=0)
            and np.allclose(self.masses, other.masses, rtol=rtol, atol=0)
        )

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "atoms": [{"x": [float(v) for v in p], "m": float(m)} for p, m in zip(self.points, self.masses)],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DiscreteMeasure":
        dim = int(data["dim"])
        atoms = data.get("atoms", [])
        return make_discrete(dim, [(a["x"], a["m"]) for a in atoms])


def make_discrete(dim: int, atoms: Iterable[tuple[Union[float, Sequence[float]], float]]) -> DiscreteMeasure:
    """Build a canonical discrete measure from ``(point, mass)`` pairs."""
    if dim < 1:
        raise MeasureError("dim must be >= 1")
    pts, ms = [], []
    for idx, (x, m) in enumerate(atoms):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (dim,):
            raise MeasureError(f"atom {idx} has {x.size} coordinates, expected {dim}")
        if not m > 0:
            raise MeasureError(f"atom {idx} has nonpositive mass {m}")
        pts.append(x)
        ms.append(float(m))
    if not pts:
        return DiscreteMeasure.empty(dim)
    return DiscreteMeasure.from_arrays(dim, np.array(pts), np.array(ms))


# ---------------------------------------------------------------------------
# Evaluation sets
# ---------------------------------------------------------------------------


class EvalSet:
    """Base class of the set families on which measures are evaluated."""

    dim: int

    def radial_bounds(self, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """For rows v of V, the interval {r > 0 : r v in A} as (r_lo, r_hi).

        Empty intervals are returned with r_lo >= r_hi.
        """
        raise NotImplementedError

    def contains(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def scaled(self, t: float) -> "EvalSet":
        raise NotImplementedError

    def inf_norm(self) -> float:
        """inf over the set of the Euclidean norm."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(data: Mapping) -> "EvalSet":
        kind = data["type"]
        if kind == "rect":
            lo = [-np.inf if v is None else float(v) for v in data["lo"]]
            hi = [np.inf if v is None else float(v) for v in data["hi"]]
            return Rect(lo, hi)
        if kind == "norm_exceed":
            dim = data.get("dim")
            return NormExceed(float(data["radius"]), None if dim is None else int(dim))
        if kind == "half_line_product":
            return HalfLineProduct(data["signs"], data["thresholds"])
        raise MeasureError(f"unknown set type {kind!r}")


def _rect_radial(lo: np.ndarray, hi: np.ndarray, V: np.ndarray):
    V = np.atleast_2d(V)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        a = lo[None, :] / V
        b = hi[None, :] / V
    pos = V > 0
    neg = V < 0
    zero = ~(pos | neg)
    lower = np.where(pos, a, np.where(neg, b, 0.0))
    upper = np.where(pos, b, np.where(neg, a, np.inf))
    # a zero coordinate is compatible only if the interval covers 0
    blocked = zero & ~((lo[None, :] <= 0) & (hi[None, :] >= 0))
    r_lo = np.maximum(lower.max(axis=1), 0.0)
    r_hi = upper.min(axis=1)
    r_hi = np.where(blocked.any(axis=1), 0.0, r_hi)
    return r_lo, r_hi


@dataclass(frozen=True, eq=False)
class Rect(EvalSet):
    """Closed box prod_j [lo_j, hi_j] with extended-real bounds, away from 0."""

    lo: np.ndarray
    hi: np.ndarray

    def __init__(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise MeasureError("lo and hi must be vectors of equal length")
        if np.any(lo > hi):
            raise MeasureError("lo must not exceed hi")
        if np.all((lo <= 0) & (hi >= 0)):
            raise MeasureError("Rect must exclude the origin")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def radial_bounds(self, V):
        return _rect_radial(self.lo, self.hi, V)

    def contains(self, X):
        X = np.atleast_2d(X)
        return np.all((X >= self.lo) & (X <= self.hi), axis=1)

    def scaled(self, t):
        return Rect(self.lo * t, self.hi * t)

    def inf_norm(self):
        gap = np.where((self.lo <= 0) & (self.hi >= 0), 0.0, np.minimum(np.abs(self.lo), np.abs(self.hi)))
        return float(np.linalg.norm(gap))

    def to_dict(self):
        return {
            "type": "rect",
            "lo": [None if np.isinf(v) else float(v) for v in self.lo],
            "hi": [None if np.isinf(v) else float(v) for v in self.hi],
        }

    def __repr__(self):
        return f"Rect(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


@dataclass(frozen=True)
class NormExceed(EvalSet):
    """{x : |x| > radius}."""

    radius: float
    dim: int | None = None  # None: applies in every dimension

    def __post_init__(self):
        if not self.radius > 0:
            raise MeasureError("NormExceed radius must be positive")

    def radial_bounds(self, V):
        V = np.atleast_2d(V)
        norms = np.linalg.norm(V, axis=1)
        with np.errstate(divide="ignore"):
            r_lo = self.radius / norms
        return r_lo, np.where(norms > 0, np.inf, 0.0)

    def contains(self, X):
        return np.linalg.norm(np.atleast_2d(X), axis=1) > self.radius

    def scaled(self, t):
        return NormExceed(self.radius * t, self.dim)

    def inf_norm(self):
        return float(self.radius)

    def to_dict(self):
        return {"type": "norm_exceed", "radius": float(self.radius), "dim": self.dim}


@dataclass(frozen=True, eq=False)
class HalfLineProduct(EvalSet):
    """prod_j S_j with S_j = [t_j, inf), (-inf, -t_j] or R for sign +1, -1, 0."""

    signs: tuple
    thresholds: np.ndarray

    def __init__(self, signs, thresholds):
        signs = tuple(int(s) for s in np.atleast_1d(signs))
        thr = np.atleast_1d(np.asarray(thresholds, dtype=float))
        if len(signs) != len(thr):
            raise MeasureError("signs and thresholds differ in length")
        if any(s not in (-1, 0, 1) for s in signs):
            raise MeasureError("signs must be -1, 0 or +1")
        if np.any(thr < 0):
            raise MeasureError("thresholds must be nonnegative")
        if not any(s != 0 and t > 0 for s, t in zip(signs, thr)):
            raise MeasureError("HalfLineProduct needs a nonzero sign with positive threshold")
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "thresholds", thr)

    @property
    def dim(self) -> int:
        return len(self.signs)

    def as_rect_bounds(self):
        s = np.array(self.signs)
        lo = np.where(s > 0, self.thresholds, -np.inf)
        hi = np.where(s < 0, -self.thresholds, np.inf)
        return lo, hi

    def radial_bounds(self, V):
        lo, hi = self.as_rect_bounds()
        return _rect_radial(lo, hi, V)

    def contains(self, X):
        lo, hi = self.as_rect_bounds()
        X = np.atleast_2d(X)
        return np.all((X >= lo) & (X <= hi), axis=1)

    def scaled(self, t):
        return HalfLineProduct(self.signs, self.thresholds * t)

    def inf_norm(self):
        s = np.array(self.signs)
        return float(np.linalg.norm(np.where(s != 0, self.thresholds, 0.0)))

    def to_dict(self):
        return {"type": "half_line_product", "signs": list(self.signs), "thresholds": self.thresholds.tolist()}

    def __repr__(self):
        return f"HalfLineProduct(signs={self.signs}, thresholds={self.thresholds.tolist()})"


def radial_mass(V: np.ndarray, weights: np.ndarray, alpha: float, A: EvalSet) -> float:
    """sum_i w_i * int 1{r v_i in A} alpha r^(-alpha-1) dr for (unnormalized) rows v_i.

    With unnormalized v the result equals the mass of the spectral atom
    (v/|v|, w |v|^alpha), which is what pushforwards produce.
    """
    if len(weights) == 0:
        return 0.0
    r_lo, r_hi = A.radial_bounds(V)
    hit = r_hi > r_lo
    if not np.any(hit):
        return 0.0
    r_lo, r_hi, w = r_lo[hit], r_hi[hit], weights[hit]
    if np.any(r_lo <= 0):
        raise MeasureError("set meets the origin along a spectral ray")
    with np.errstate(divide="ignore", over="ignore"):
        ratio = r_lo / r_hi  # 0 for r_hi = inf
        # r_lo^-a - r_hi^-a written to avoid cancellation for short intervals
        seg = r_lo ** (-alpha) * -np.expm1(alpha * np.log(ratio))
    seg = np.where(ratio == 0, r_lo ** (-alpha), seg)
    return float(np.sum(w * seg))


# ---------------------------------------------------------------------------
# Tail measures
# ---------------------------------------------------------------------------


def _merge_directions(U: np.ndarray, w: np.ndarray, tol: float = MERGE_TOL):
    if len(w) <= 1:
        return U, w
    order = np.lexsort(U.T[::-1])
    U, w = U[order], w[order]
    if len(w) > 256:
        pairs = cKDTree(U).query_pairs(tol, output_type="ndarray")
        if len(pairs) == 0:
            return U, w
        g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(w), len(w)))
        _, labels = connected_components(g, directed=False)
    else:
        labels = -np.ones(len(w), dtype=int)
        nxt = 0
        for i in range(len(w)):
            if labels[i] >= 0:
                continue
            close = np.linalg.norm(U - U[i], axis=1) < tol
            labels[close & (labels < 0)] = nxt
            nxt += 1
    n_groups = labels.max() + 1
    if n_groups == len(w):
        return U, w
    Wsum = np.zeros(n_groups)
    np.add.at(Wsum, labels, w)
    # weights rescaled per group so tiny masses do not underflow the mean direction
    Wmax = np.zeros(n_groups)
    np.maximum.at(Wmax, labels, w)
    Usum = np.zeros((n_groups, U.shape[1]))
    np.add.at(Usum, labels, U * (w / Wmax[labels])[:, None])
    Umean = Usum / np.linalg.norm(Usum, axis=1, keepdims=True)
    order = np.lexsort(Umean.T[::-1])
    return Umean[order], Wsum[order]


@dataclass(frozen=True, eq=False)
class HomogeneousTailMeasure:
    """alpha-homogeneous measure with finitely many spectral atoms."""

    dim: int
    alpha: float
    directions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.directions.setflags(write=False)
        self.weights.setflags(write=False)

    @classmethod
    def from_arrays(cls, dim: int, alpha: float, directions, weights) -> "HomogeneousTailMeasure":
        if dim < 1:
            raise MeasureError("dim must be >= 1")
        if not alpha > 0:
            raise MeasureError("alpha must be positive")
        U = _as_points(directions, dim)
        w = np.asarray(weights, dtype=float).reshape(-1)
        if len(w) != len(U):
            raise MeasureError("directions and weights differ in length")
        if np.any(~(w > 0)):
            raise MeasureError("spectral weights must be positive")
        if len(w) and np.any(np.abs(np.linalg.norm(U, axis=1) - 1.0) > DIRECTION_TOL):
            raise MeasureError("spectral directions must have unit Euclidean norm")
        U, w = _merge_directions(U, w)
        return cls(dim, float(alpha), U, w)

    @classmethod
    def from_vectors(cls, dim: int, alpha: float, vectors, weights) -> "HomogeneousTailMeasure":
        """Spectral atoms from unnormalized vectors v: atom (v/|v|, w |v|^alpha)."""
        V = _as_points(vectors, dim)
        w = np.asarray(weights, dtype=float).reshape(-1)
        norms = np.linalg.norm(V, axis=1)
        keep = norms > 0
        return cls.from_arrays(dim, alpha, V[keep] / norms[keep, None], w[keep] * norms[keep] ** alpha)

    @classmethod
    def pareto(cls, alpha: float, weight: float = 1.0) -> "HomogeneousTailMeasure":
        """The measure alpha x^(-alpha-1) dx on (0, inf), times ``weight``."""
        return cls.from_arrays(1, alpha, [[1.0]], [weight])

    def __len__(self):
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        """mu({|x| > 1})."""
        return float(self.weights.sum())

    def is_zero(self) -> bool:
        return len(self.weights) == 0

    def scaled(self, c: float) -> "HomogeneousTailMeasure":
        if c <= 0:
            raise MeasureError("scale factor must be positive")
        return HomogeneousTailMeasure.from_arrays(self.dim, self.alpha, self.directions, self.weights * c)

    def reflected(self) -> "HomogeneousTailMeasure":
        """mu(-.)."""
        return HomogeneousTailMeasure.from_arrays(self.dim, self.alpha, -self.directions, self.weights)

    def normalized(self) -> "HomogeneousTailMeasure":
        return self.scaled(1.0 / self.total_mass)

    def __add__(self, other: "HomogeneousTailMeasure") -> "HomogeneousTailMeasure":
        if other.dim != self.dim or other.alpha != self.alpha:
            raise MeasureError("cannot add tail measures of different dim or alpha")
        return HomogeneousTailMeasure.from_arrays(
            self.dim,
            self.alpha,
            np.vstack([self.directions, other.directions]),
            np.concatenate([self.weights, other.weights]),
        )

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "alpha": self.alpha,
            "spectral": [{"dir": [float(v) for v in u], "w": float(w)} for u, w in zip(self.directions, self.weights)],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "HomogeneousTailMeasure":
        spec = data.get("spectral", [])
        dim = int(data["dim"])
        dirs = np.array([s["dir"] for s in spec], dtype=float).reshape(-1, dim)
        return cls.from_arrays(dim, float(data["alpha"]), dirs, [s["w"] for s in spec])


def tail_eval(mu: HomogeneousTailMeasure, A: EvalSet) -> float:
    """mu(A) for A in the EvalSet family."""
    if A.dim is not None and A.dim != mu.dim:
        raise MeasureError(f"set dimension {A.dim} does not match measure dimension {mu.dim}")
    return radial_mass(mu.directions, mu.weights, mu.alpha, A)


def check_invertible(M: np.ndarray, what: str = "matrix") -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise MeasureError(f"{what} must be square, got shape {M.shape}")
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise MeasureError(f"{what} is singular (condition number {cond:.3g})")
    return M


def pushforward(mu: HomogeneousTailMeasure, M) -> HomogeneousTailMeasure:
    """Image measure mu o M^-1 under an invertible linear map M."""
    M = check_invertible(M)
    if M.shape[0] != mu.dim:
        raise MeasureError("matrix size does not match measure dimension")
    return HomogeneousTailMeasure.from_vectors(mu.dim, mu.alpha, mu.directions @ M.T, mu.weights)


@dataclass
class QuadrantSplit:
    """Quadrant restrictions rho_v on (0, inf)^d plus atoms lying on the axes."""

    parts: dict
    axes: DiscreteMeasure = field(default=None)

    def __getitem__(self, v):
        return self.parts[tuple(v)]

    def __iter__(self):
        return iter(self.parts)

    def get(self, v, default=None):
        return self.parts.get(tuple(v), default)

    def items(self):
        return self.parts.items()

    def keys(self):
        return self.parts.keys()

    def values(self):
        return self.parts.values()

    def __len__(self):
        return len(self.parts)


def quadrant_split(m: DiscreteMeasure) -> QuadrantSplit:
    """Restrict an atomic measure to the open orthants, folded onto (0, inf)^d."""
    P, w = m.points, m.masses
    on_axes = np.any(P == 0, axis=1)
    parts = {}
    signs = np.sign(P[~on_axes]).astype(int)
    absP, wq = np.abs(P[~on_axes]), w[~on_axes]
    for v in all_quadrants(m.dim):
        sel = np.all(signs == np.array(v), axis=1)
        parts[v] = DiscreteMeasure.from_arrays(m.dim, absP[sel], wq[sel])
    axes = DiscreteMeasure.from_arrays(m.dim, P[on_axes], w[on_axes])
    return QuadrantSplit(parts, axes)
