"""Monte Carlo checks: simulate weighted sums and products, estimate tails.

Randomness comes from Philox streams spawned off one SeedSequence per run:
term j of a weighted sum uses child j, and every child is split into fixed
size chunks so results do not depend on the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.cluster.vq import kmeans2

from . import counterexample as cx
from .forward import ProductLaw, WeightFamily
from .measures import DiscreteMeasure, EvalSet, HomogeneousTailMeasure, MeasureError, NormExceed, radial_mass, tail_eval

CHUNK = 1 << 18


def _chunked(n: int, ss: np.random.SeedSequence, fn, threads: int = 1, chunk: int = CHUNK) -> np.ndarray:
    """Concatenate fn(m, rng) over fixed-size chunks with spawned Philox streams."""
    k = max(1, -(-n // chunk))
    seeds = ss.spawn(k)
    sizes = [min(chunk, n - i * chunk) for i in range(k)]

    def one(args):
        m, s = args
        return fn(m, np.random.Generator(np.random.Philox(s)))

    if threads > 1 and k > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(one, zip(sizes, seeds)))
    else:
        parts = [one(a) for a in zip(sizes, seeds)]
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Law specifications
# ---------------------------------------------------------------------------


class LawSpec:
    """Something that can draw an (n, dim) sample from a generator."""

    dim: int = 1

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Pareto(LawSpec):
    """iid coordinates with P(Z > x) = (x/scale)^-alpha, optionally with random signs."""

    alpha: float
    scale: float = 1.0
    symmetric: bool = False
    dim: int = 1

    def draw(self, n, rng):
        u = 1.0 - rng.random((n, self.dim))  # in (0, 1]
        z = self.scale * u ** (-1.0 / self.alpha)
        if self.symmetric:
            z *= np.where(rng.random((n, self.dim)) < 0.5, -1.0, 1.0)
        return z

    def to_dict(self):
        return {"type": "pareto", "alpha": self.alpha, "scale": self.scale, "symmetric": self.symmetric, "dim": self.dim}


@dataclass(frozen=True, eq=False)
class PolarPareto(LawSpec):
    """Z = R U with P(R > t) = t^-alpha on [1, inf) and U drawn from the normalized spectral measure."""

    measure: HomogeneousTailMeasure

    @property
    def dim(self):
        return self.measure.dim

    def draw(self, n, rng):
        mu = self.measure
        p = np.asarray(mu.weights) / np.sum(mu.weights)
        idx = rng.choice(len(p), size=n, p=p) if len(p) > 1 else np.zeros(n, dtype=int)
        R = (1.0 - rng.random(n)) ** (-1.0 / mu.alpha)
        return R[:, None] * np.asarray(mu.directions)[idx]

    def to_dict(self):
        return {"type": "polar_pareto", "measure": self.measure.to_dict()}


@dataclass(frozen=True, eq=False)
class Oscillating(LawSpec):
    """One of the log-periodic laws, embedded as (Z, 0, ..., 0) when dim > 1."""

    law: object  # cx.OscillatingLaw or cx.MixedLaw
    dim: int = 1
    variant: str = "single"

    def draw(self, n, rng):
        z = cx.draw(self.law, n, rng)
        out = np.zeros((n, self.dim))
        out[:, 0] = z
        return out

    def to_dict(self):
        p = self.law.params
        return {
            "type": "oscillating",
            "variant": self.variant,
            "alpha": p.alpha,
            "theta0": p.theta0,
            "a": p.a,
            "b": p.b,
            "r": p.r,
            "dim": self.dim,
        }


@dataclass(frozen=True, eq=False)
class Hybrid(LawSpec):
    """Atomic body with probability 1 - tail_prob, polar Pareto tail otherwise."""

    body: DiscreteMeasure
    tail: HomogeneousTailMeasure
    tail_prob: float

    def __post_init__(self):
        if not 0 < self.tail_prob <= 1:
            raise MeasureError("tail_prob must be in (0, 1]")
        if self.body.dim != self.tail.dim:
            raise MeasureError("body and tail dimensions differ")

    @property
    def dim(self):
        return self.tail.dim

    def draw(self, n, rng):
        out = PolarPareto(self.tail).draw(n, rng)
        use_body = rng.random(n) >= self.tail_prob
        if np.any(use_body) and len(self.body):
            p = self.body.masses / self.body.total_mass
            out[use_body] = self.body.points[rng.choice(len(p), size=int(use_body.sum()), p=p)]
        return out

    def to_dict(self):
        return {"type": "hybrid", "body": self.body.to_dict(), "tail": self.tail.to_dict(), "tail_prob": self.tail_prob}


@dataclass(frozen=True)
class Uniform(LawSpec):
    a: float
    b: float
    dim: int = 1

    def __post_init__(self):
        if not self.a < self.b:
            raise MeasureError("uniform law needs a < b")

    def draw(self, n, rng):
        return rng.uniform(self.a, self.b, size=(n, self.dim))

    def to_dict(self):
        return {"type": "uniform", "a": self.a, "b": self.b, "dim": self.dim}


@dataclass(frozen=True, eq=False)
class Atomic(LawSpec):
    """Draws from a ProductLaw (atoms with probabilities)."""

    product_law: ProductLaw

    @property
    def dim(self):
        return self.product_law.dim

    def draw(self, n, rng):
        law = self.product_law.law
        idx = rng.choice(len(law), size=n, p=law.masses / law.total_mass) if len(law) > 1 else np.zeros(n, dtype=int)
        return law.points[idx]

    def to_dict(self):
        return {"type": "atomic", **self.product_law.to_dict()}


def law_from_dict(data: Mapping) -> LawSpec:
    """Build a law specification from its JSON form."""
    kind = data.get("type")
    if kind == "pareto":
        return Pareto(float(data["alpha"]), float(data.get("scale", 1.0)), bool(data.get("symmetric", False)), int(data.get("dim", 1)))
    if kind == "polar_pareto":
        return PolarPareto(HomogeneousTailMeasure.from_dict(data["measure"]))
    if kind == "oscillating":
        params = cx.OscLawParams(float(data["alpha"]), float(data["theta0"]), float(data["a"]), float(data["b"]), float(data.get("r", 1.0)))
        variant = data.get("variant", "single")
        builders = {"single": cx.build_law, "symmetric": cx.symmetric_law, "flipped": cx.flipped_pair_law}
        if variant not in builders:
            raise MeasureError(f"unknown oscillating variant {variant!r}")
        return Oscillating(builders[variant](params), int(data.get("dim", 1)), variant)
    if kind == "hybrid":
        return Hybrid(DiscreteMeasure.from_dict(data["body"]), HomogeneousTailMeasure.from_dict(data["tail"]), float(data["tail_prob"]))
    if kind == "uniform":
        return Uniform(float(data["a"]), float(data["b"]), int(data.get("dim", 1)))
    if kind == "atomic":
        return Atomic(ProductLaw.from_dict(data))
    raise MeasureError(f"unknown law spec {kind!r}")


def _as_spec(law) -> LawSpec:
    if isinstance(law, LawSpec):
        return law
    if isinstance(law, (cx.OscillatingLaw, cx.MixedLaw)):
        return Oscillating(law)
    if isinstance(law, ProductLaw):
        return Atomic(law)
    if isinstance(law, HomogeneousTailMeasure):
        return PolarPareto(law)
    if isinstance(law, Mapping):
        return law_from_dict(law)
    raise MeasureError(f"unknown law spec {type(law).__name__}")


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class SampleBatch:
    dim: int
    values: np.ndarray  # (n, dim)
    seed: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.values), self.dim)
        if len(self.values) < 1:
            raise MeasureError("a batch needs at least one sample")

    def __len__(self):
        return len(self.values)

    def magnitudes(self) -> np.ndarray:
        if self.dim == 1:
            return np.abs(self.values[:, 0])
        return np.linalg.norm(self.values, axis=1)

    def coord(self, j: int = 0) -> np.ndarray:
        return self.values[:, j]


def ar1_family(dvec, tol: float = 1e-6, extra: int = 0) -> WeightFamily:
    """Truncated moving-average weights diag(d)^l, l = 0..L, for X_t = diag(d) X_{t-1} + Z_t."""
    d = np.atleast_1d(np.asarray(dvec, dtype=float))
    rho = np.max(np.abs(d))
    if not 0 < rho < 1:
        raise MeasureError("AR(1) coefficients need 0 < max|d_i| < 1")
    L = int(math.ceil(math.log(tol) / math.log(rho))) + extra
    return WeightFamily.diagonals([d**l for l in range(L + 1)])


def simulate_weighted_sum(law_Z, fam: WeightFamily, n: int, seed: int = 0, threads: int = 1) -> SampleBatch:
    """n iid copies of X = sum_j Psi_j Z^(j) with independent Z^(j) ~ law_Z."""
    spec = _as_spec(law_Z)
    if n < 1:
        raise MeasureError("n must be >= 1")
    if fam.kind != "scalars" and fam.dim != spec.dim:
        raise MeasureError(f"family acts on dimension {fam.dim}, law has {spec.dim}")
    children = np.random.SeedSequence(seed).spawn(len(fam))
    X = np.zeros((n, spec.dim))
    for entry, ss in zip(fam.entries, children):
        Z = _chunked(n, ss, spec.draw, threads)
        if fam.kind == "scalars":
            X += entry * Z
        elif fam.kind == "diag":
            X += Z * np.asarray(entry)[None, :]
        else:
            X += Z @ np.asarray(entry).T
    prov = {"kind": "weighted_sum", "law_Z": spec.to_dict(), "family": fam.to_dict(), "n": n}
    return SampleBatch(spec.dim, X, seed, prov)


def simulate_product(law_A, law_Z, n: int, seed: int = 0, threads: int = 1) -> SampleBatch:
    """n iid copies of X = A Z with A diagonal (or scalar) independent of Z."""
    spec_A, spec_Z = _as_spec(law_A), _as_spec(law_Z)
    if spec_A.dim not in (1, spec_Z.dim):
        raise MeasureError(f"law of A has dimension {spec_A.dim}, Z has {spec_Z.dim}")
    ss_A, ss_Z = np.random.SeedSequence(seed).spawn(2)
    A = _chunked(n, ss_A, spec_A.draw, threads)
    Z = _chunked(n, ss_Z, spec_Z.draw, threads)
    prov = {"kind": "product", "law_A": spec_A.to_dict(), "law_Z": spec_Z.to_dict(), "n": n}
    return SampleBatch(spec_Z.dim, A * Z, seed, prov)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


@dataclass
class HillEstimate:
    alpha_hat: float
    k: int
    ci95: tuple

    def to_dict(self):
        return {"alpha_hat": self.alpha_hat, "k": self.k, "ci95": list(self.ci95)}


def default_k(n: int) -> int:
    return max(1, min(int(n**0.6), n // 10))


def _magnitudes(x) -> np.ndarray:
    if isinstance(x, SampleBatch):
        return x.magnitudes()
    x = np.asarray(x, dtype=float)
    return np.abs(x) if x.ndim == 1 else np.linalg.norm(x, axis=1)


def hill(x, k: int | None = None) -> HillEstimate:
    """Hill estimator from the top k order statistics of |x|."""
    m = _magnitudes(x)
    n = len(m)
    k = default_k(n) if k is None else int(k)
    if not 1 <= k < n:
        raise MeasureError(f"need 1 <= k < n, got k={k}, n={n}")
    top = np.partition(m, n - k - 1)[n - k - 1 :]
    ref = top[0]
    if not ref > 0:
        raise MeasureError("nonpositive magnitudes among the top k+1 order statistics")
    spacing = float(np.mean(np.log(top[1:]) - math.log(ref)))
    if not spacing > 0:
        raise MeasureError("degenerate sample: the top log-spacings are all zero")
    a = 1.0 / spacing
    half = 1.96 / math.sqrt(k)
    return HillEstimate(a, k, (a * (1 - half), a * (1 + half)))


@dataclass
class TailRatio:
    s: float
    ratio: float
    sigma: float
    n_s: int
    n_2s: int
    sufficient: bool

    def to_dict(self):
        return dict(self.__dict__)


def tail_ratio(x, thresholds: Sequence[float], min_exceed: int = 100) -> list[TailRatio]:
    """P(|X| > 2s) / P(|X| > s) with binomial standard errors, per threshold."""
    m = np.sort(_magnitudes(x))
    n = len(m)
    out = []
    for s in thresholds:
        n_s = int(n - np.searchsorted(m, s, side="right"))
        n_2s = int(n - np.searchsorted(m, 2 * s, side="right"))
        ratio = n_2s / n_s if n_s else math.nan
        sigma = math.sqrt(ratio * (1 - ratio) / n_s) if n_s else math.nan
        out.append(TailRatio(float(s), ratio, sigma, n_s, n_2s, n_2s >= min_exceed))
    return out


def scaled_tail_profile(x, thresholds: Sequence[float], alpha: float):
    """(s, s^alpha * P^(X > s)) on the given thresholds, for the signed first coordinate."""
    v = np.sort(np.asarray(x.coord(0) if isinstance(x, SampleBatch) else x, dtype=float).reshape(-1))
    n = len(v)
    s = np.asarray(thresholds, dtype=float)
    counts = n - np.searchsorted(v, s, side="right")
    return s, s**alpha * counts / n, counts


@dataclass
class SpectralEstimate:
    measure: DiscreteMeasure  # unit directions with masses summing to 1
    n_exceed: int
    radius: float

    def to_dict(self):
        return {"measure": self.measure.to_dict(), "n_exceed": self.n_exceed, "radius": self.radius}


def _merge_centroids(C: np.ndarray, w: np.ndarray, tol: float):
    order = np.argsort(-w)
    groups: list[list[int]] = []
    for i in order:
        for g in groups:
            if np.linalg.norm(C[i] - C[g[0]]) < tol:
                g.append(i)
                break
        else:
            groups.append([i])
    dirs, mass = [], []
    for g in groups:
        v = np.sum(C[g] * w[g, None], axis=0)
        dirs.append(v / np.linalg.norm(v))
        mass.append(w[g].sum())
    return np.array(dirs), np.array(mass)


def empirical_spectral(
    batch,
    radius_quantile: float = 0.99,
    k: int = 8,
    seed: int = 0,
    min_exceed: int = 500,
    merge_tol: float = 0.05,
) -> SpectralEstimate:
    """Directions of the exceedances above a radius quantile, binned by k-means."""
    X = batch.values if isinstance(batch, SampleBatch) else np.atleast_2d(np.asarray(batch, dtype=float))
    if X.shape[0] == 1 and X.shape[1] > 1 and not isinstance(batch, SampleBatch):
        X = X.T
    if not 0 < radius_quantile < 1:
        raise MeasureError("radius_quantile must lie in (0, 1)")
    norms = np.linalg.norm(X, axis=1)
    radius = float(np.quantile(norms, radius_quantile))
    exc = norms > radius
    n_exc = int(exc.sum())
    if n_exc < min_exceed:
        raise MeasureError(f"only {n_exc} exceedances above the radius quantile; need {min_exceed}")
    U = X[exc] / norms[exc, None]
    d = X.shape[1]
    if d == 1:
        signs, counts = np.unique(np.sign(U[:, 0]), return_counts=True)
        return SpectralEstimate(DiscreteMeasure.from_arrays(1, signs[:, None], counts / n_exc), n_exc, radius)
    distinct, labels = np.unique(np.round(U, 12), axis=0, return_inverse=True)
    if len(distinct) <= k:
        C, kk = distinct, len(distinct)
        labels = labels.reshape(-1)
    else:
        kk = k
        C, labels = kmeans2(U, kk, minit="++", seed=np.random.default_rng(seed))
    counts = np.bincount(labels, minlength=kk).astype(float)
    keep = counts > 0
    C, w = C[keep], counts[keep] / n_exc
    C = C / np.linalg.norm(C, axis=1, keepdims=True)
    dirs, mass = _merge_centroids(C, w, merge_tol)
    return SpectralEstimate(DiscreteMeasure.from_arrays(d, dirs, mass / mass.sum()), n_exc, radius)


def bin_to_atoms(est: SpectralEstimate, predicted: HomogeneousTailMeasure):
    """Empirical bin masses gathered onto the nearest predicted direction.

    Returns rows (direction, empirical share, predicted share, binomial sigma).
    """
    P = np.asarray(predicted.directions)
    share = np.asarray(predicted.weights) / np.sum(predicted.weights)
    emp = np.zeros(len(P))
    for u, m in zip(est.measure.points, est.measure.masses):
        emp[int(np.argmin(np.linalg.norm(P - u, axis=1)))] += m
    sigma = np.sqrt(np.maximum(share * (1 - share), 1.0 / est.n_exceed) / est.n_exceed)
    return [(P[i], float(emp[i]), float(share[i]), float(sigma[i])) for i in range(len(P))]


@dataclass
class TailComparison:
    rows: list  # dicts with set, empirical, theoretical, sigma, z
    max_rel_dev: float
    max_z: float

    def to_dict(self):
        return {"rows": self.rows, "max_rel_dev": self.max_rel_dev, "max_z": self.max_z}


def compare_tail_measures(empirical, theoretical: HomogeneousTailMeasure, panel: Sequence[EvalSet], n_exceed: int | None = None) -> TailComparison:
    """Normalized panel masses of the empirical spectral bins against a theoretical tail measure.

    The empirical bins become a homogeneous measure with the theoretical index;
    both measures are scaled to unit mass outside the unit ball.
    """
    if isinstance(empirical, SpectralEstimate):
        n_exceed = empirical.n_exceed if n_exceed is None else n_exceed
        empirical = empirical.measure
    n_exceed = n_exceed or 1
    emp = HomogeneousTailMeasure.from_vectors(empirical.dim, theoretical.alpha, empirical.points, empirical.masses)
    emp_n = emp.scaled(1.0 / tail_eval(emp, NormExceed(1.0)))
    th_n = theoretical.scaled(1.0 / tail_eval(theoretical, NormExceed(1.0)))
    # the normalized empirical mass of A is a multinomial average of per-direction ray masses g_i(A)
    p = np.asarray(th_n.weights) / np.sum(th_n.weights)
    rows, rel, zs = [], [], []
    for A in panel:
        pe, pt = tail_eval(emp_n, A), tail_eval(th_n, A)
        g = np.array([radial_mass(u[None, :], np.ones(1), theoretical.alpha, A) for u in th_n.directions])
        var = float(np.sum(p * g**2) - np.sum(p * g) ** 2)
        sigma = math.sqrt(max(var, 1.0 / n_exceed) / n_exceed)
        z = abs(pe - pt) / sigma
        rows.append({"set": A.to_dict(), "empirical": pe, "theoretical": pt, "sigma": sigma, "z": z})
        rel.append(abs(pe - pt) / pt if pt > 0 else (0.0 if pe == 0 else math.inf))
        zs.append(z)
    return TailComparison(rows, float(max(rel)) if rel else 0.0, float(max(zs)) if zs else 0.0)
