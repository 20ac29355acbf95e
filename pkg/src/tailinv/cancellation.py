"""Mellin-type cancellation conditions and their numerical decision.

Every condition handled here has the form

    F(theta) = sum_a c_a exp(i <theta, l_a>) != 0  for all theta in R^d,

with real coefficients ``c_a`` (moment weight times a sign product) and
log-coordinates ``l_a``.  ``ExpSum`` stores such a sum.  Grid evidence can
only refute a condition or report "no zero up to theta_max"; the
``Certified`` status is reserved for analytic certificates (a dominant
term, a geometric progression of terms, identically nonzero closed forms).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import ndimage, optimize

from .forward import ProductLaw, WeightFamily
from .measures import (
    DiscreteMeasure,
    EvalSet,
    MeasureError,
    all_quadrants,
    make_discrete,
    quadrant_split,
)
from .forward import mult_convolve

log = logging.getLogger(__name__)

THETA_MAX = 50.0
GRID_STEP = 0.01
ZERO_TOL = 1e-9
THETA_XTOL = 1e-12
WARN_FACTOR = 1e3
MAX_GRID_POINTS = 4_000_000
RANDOM_DRAWS = 1_000_000
FREQ_MERGE_TOL = 1e-12
_CHUNK = 1 << 15

CERTIFIED = "Certified"
NO_ZERO = "NoZeroUpTo"
REFUTED = "Refuted"


def all_patterns(dim: int) -> list[tuple[int, ...]]:
    """The 2^dim sign-exponent patterns m in {0,1}^dim."""
    return [tuple(m) for m in itertools.product((0, 1), repeat=dim)]


@dataclass(frozen=True)
class CancellationTask:
    """Coordinates K to check, the index alpha and the moment margin delta'.

    ``coords_K`` holds 0-based coordinate indices.  ``alphas`` optionally
    gives one index per coordinate; by default every coordinate uses alpha.
    """

    coords_K: tuple
    alpha: float
    delta_prime: float | None = None
    alphas: tuple | None = None

    def __post_init__(self):
        if len(self.coords_K) == 0:
            raise MeasureError("K must be nonempty")
        if not self.alpha > 0:
            raise MeasureError("alpha must be positive")
        dp = self.alpha / 2 if self.delta_prime is None else self.delta_prime
        if not 0 < dp < self.alpha:
            raise MeasureError("delta' must lie in (0, alpha)")
        object.__setattr__(self, "delta_prime", dp)
        object.__setattr__(self, "coords_K", tuple(int(j) for j in self.coords_K))

    @classmethod
    def full(cls, dim: int, alpha: float, delta_prime=None) -> "CancellationTask":
        return cls(tuple(range(dim)), alpha, delta_prime)

    def alpha_j(self, j: int) -> float:
        return self.alpha if self.alphas is None else float(self.alphas[j])


# ---------------------------------------------------------------------------
# Exponential sums
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExpSum:
    """F(theta) = sum_a coeffs[a] * exp(i theta . freqs[a])."""

    coeffs: np.ndarray
    freqs: np.ndarray

    @classmethod
    def build(cls, coeffs, freqs, merge_tol: float = FREQ_MERGE_TOL) -> "ExpSum":
        c = np.asarray(coeffs, dtype=float).reshape(-1)
        L = np.asarray(freqs, dtype=float)
        if L.ndim == 1:
            L = L[:, None]
        if len(c) == 0:
            return cls(c, L.reshape(0, L.shape[1] if L.ndim == 2 else 1))
        scale = np.max(np.abs(c))
        key = np.round(L / merge_tol).astype(np.int64) if merge_tol > 0 else L
        uniq, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inv.reshape(-1), c)
        Lm = L[first]
        # exact cancellations (e.g. psi and -psi under a sign pattern) leave rounding dust
        keep = np.abs(merged) > 1e-14 * scale
        return cls(merged[keep], Lm[keep])

    @property
    def dim(self) -> int:
        return self.freqs.shape[1]

    def __len__(self):
        return len(self.coeffs)

    @property
    def identically_zero(self) -> bool:
        return len(self.coeffs) == 0

    def lipschitz(self) -> float:
        """Bound on the Lipschitz constant of theta -> F(theta)."""
        return float(np.sum(np.abs(self.coeffs) * np.linalg.norm(self.freqs, axis=1)))

    def dominance_margin(self) -> float:
        """max|c| - sum of the other |c|; positive means F never vanishes."""
        if self.identically_zero:
            return -np.inf
        a = np.abs(self.coeffs)
        return float(2 * a.max() - a.sum())

    def __call__(self, theta) -> np.ndarray:
        T = _as_thetas(theta, self.dim)
        out = np.empty(len(T), dtype=complex)
        for s in range(0, len(T), _CHUNK):
            phase = T[s : s + _CHUNK] @ self.freqs.T
            out[s : s + _CHUNK] = np.exp(1j * phase) @ self.coeffs
        return out


def _as_thetas(theta, dim: int) -> np.ndarray:
    T = np.asarray(theta, dtype=float)
    if T.ndim == 0:
        T = T.reshape(1, 1)
    elif T.ndim == 1:
        T = T[:, None] if dim == 1 else T[None, :]
    if T.shape[1] != dim:
        raise MeasureError(f"theta must have {dim} components")
    return T


def signed_expsum(points, masses, j: int, pattern: Sequence[int], alpha_j: float) -> ExpSum:
    """sum_a m_a |x_aj|^alpha_j prod_k |x_ak|^(i theta_k) sign(x_ak)^m_k for signed atoms x_a."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(P == 0):
        raise MeasureError("atoms must have no vanishing coordinate")
    m = np.asarray(masses, dtype=float)
    absP = np.abs(P)
    sgn = np.prod(np.where(np.array(pattern)[None, :] == 1, np.sign(P), 1.0), axis=1)
    return ExpSum.build(m * absP[:, j] ** alpha_j * sgn, np.log(absP))


def _quadrant_points(rho_by_quadrant: Mapping) -> tuple[np.ndarray, np.ndarray]:
    """Unfold quadrant measures on (0,inf)^d back to signed atoms v * x."""
    pts, ms = [], []
    for v, meas in rho_by_quadrant.items():
        if len(meas) == 0:
            continue
        if np.any(meas.points <= 0):
            raise MeasureError(f"quadrant {v} measure has a nonpositive coordinate")
        pts.append(meas.points * np.array(v, dtype=float))
        ms.append(meas.masses)
    if not pts:
        d = len(next(iter(rho_by_quadrant)))
        return np.zeros((0, d)), np.zeros(0)
    return np.vstack(pts), np.concatenate(ms)


def mellin_eval(rho_by_quadrant: Mapping, task: CancellationTask, j: int, pattern, theta) -> complex:
    """sum_v prod_k v_k^m_k int x_j^alpha_j prod_k x_k^(i theta_k) rho_v(dx) at one theta."""
    P, m = _quadrant_points(rho_by_quadrant)
    if len(m) == 0:
        return 0j
    es = signed_expsum(P, m, j, pattern, task.alpha_j(j))
    if es.identically_zero:
        return 0j
    return complex(es(np.atleast_1d(np.asarray(theta, dtype=float)).reshape(1, -1))[0])


@dataclass
class MellinProfile:
    alpha: float
    j: int
    pattern: tuple
    thetas: np.ndarray
    values: np.ndarray

    def rows(self):
        for t, v in zip(self.thetas, self.values):
            yield [*np.atleast_1d(t).tolist(), v.real, v.imag, abs(v)]


def mellin_profile(rho_by_quadrant: Mapping, task: CancellationTask, j: int, pattern, thetas) -> MellinProfile:
    """Signed Mellin sum on a grid of frequencies."""
    P, m = _quadrant_points(rho_by_quadrant)
    d = P.shape[1]
    T = _as_thetas(thetas, d)
    es = signed_expsum(P, m, j, pattern, task.alpha_j(j)) if len(m) else ExpSum.build([], np.zeros((0, d)))
    vals = np.zeros(len(T), dtype=complex) if es.identically_zero else es(T)
    return MellinProfile(task.alpha, j, tuple(pattern), T if d > 1 else T[:, 0], vals)


# ---------------------------------------------------------------------------
# Zero scanning
# ---------------------------------------------------------------------------


@dataclass
class ScanResult:
    witnesses: list  # list of (theta ndarray, |F|) with |F| <= zero_tol, nearest origin first
    global_min: tuple  # (theta, |F|)
    near_zeros: list  # refined minima in (zero_tol, WARN_FACTOR * zero_tol]
    method: str
    n_evaluations: int

    @property
    def found_zero(self) -> bool:
        return bool(self.witnesses)


def _refine_1d(f_abs, lo, hi):
    res = optimize.minimize_scalar(f_abs, bounds=(lo, hi), method="bounded", options={"xatol": THETA_XTOL})
    return np.array([res.x]), float(res.fun)


def _refine_nd(f_abs, x0, step):
    d = len(x0)
    simplex = np.vstack([x0, x0 + step * np.eye(d)])
    res = optimize.minimize(
        f_abs,
        x0,
        method="Nelder-Mead",
        options={"initial_simplex": simplex, "xatol": THETA_XTOL, "fatol": 1e-17, "maxiter": 4000 * d},
    )
    return np.asarray(res.x), float(res.fun)


def _polish(evaluator, x, dim, iters=30, h=1e-7):
    """Gauss-Newton on (Re F, Im F) with a finite-difference Jacobian; returns (x, |F|)."""
    x = np.array(x, dtype=float)
    fx = evaluator(x.reshape(1, dim))[0]
    for _ in range(iters):
        if fx == 0:
            break
        E = np.vstack([x + h * np.eye(dim), x - h * np.eye(dim)])
        vals = evaluator(E)
        dF = (vals[:dim] - vals[dim:]) / (2 * h)
        J = np.vstack([dF.real, dF.imag])
        step = np.linalg.lstsq(J, -np.array([fx.real, fx.imag]), rcond=None)[0]
        if not np.all(np.isfinite(step)) or np.linalg.norm(step) > 1.0:
            break
        xn = x + step
        fn = evaluator(xn.reshape(1, dim))[0]
        if abs(fn) >= abs(fx):
            break
        x, fx = xn, fn
    return x, float(abs(fx))


def scan_zeros(
    evaluator: Callable,
    theta_max: float = THETA_MAX,
    grid_step: float = GRID_STEP,
    zero_tol: float = ZERO_TOL,
    dim: int = 1,
    lipschitz: float | None = None,
    max_grid_points: int = MAX_GRID_POINTS,
    random_draws: int = RANDOM_DRAWS,
    seed: int = 0,
) -> ScanResult:
    """Search [-theta_max, theta_max]^dim for zeros of |evaluator|.

    ``evaluator`` maps an (n, dim) array of frequencies to n complex values.
    Grid local minima that could hide a zero between grid points are refined
    (bounded Brent in one dimension, Nelder-Mead otherwise).  An empty
    witness list is never a proof of nonvanishing.
    """
    if not (theta_max > 0 and grid_step > 0 and zero_tol > 0):
        raise MeasureError("theta_max, grid_step and zero_tol must be positive")

    def f_abs(t):
        return float(np.abs(evaluator(np.atleast_1d(t).reshape(1, dim)))[0])

    n_axis = 2 * int(round(theta_max / grid_step)) + 1
    use_grid = dim <= 3 and n_axis**dim <= max_grid_points
    if use_grid:
        axis = np.linspace(-theta_max, theta_max, n_axis)
        if dim == 1:
            T = axis[:, None]
        else:
            T = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
        vals = np.abs(evaluator(T))
        if lipschitz is None:
            grid = vals.reshape((n_axis,) * dim)
            lipschitz = max(float(np.max(np.abs(np.diff(grid, axis=k)))) for k in range(dim)) / grid_step
        threshold = max(10 * zero_tol, lipschitz * grid_step * np.sqrt(dim))
        grid = vals.reshape((n_axis,) * dim)
        is_min = ndimage.minimum_filter(grid, size=3, mode="nearest") == grid
        cand = np.flatnonzero(is_min.reshape(-1) & (vals <= threshold))
        method = "grid"
        n_eval = len(vals)
    else:
        rng = np.random.default_rng(seed)
        T = rng.uniform(-theta_max, theta_max, size=(random_draws, dim))
        vals = np.abs(evaluator(T))
        cand = np.argsort(vals)[:50]
        method = "random"
        n_eval = random_draws

    i_min = int(np.argmin(vals))
    global_min = (T[i_min].copy(), float(vals[i_min]))

    if np.max(vals) <= zero_tol:
        zero = np.zeros(dim)
        return ScanResult([(zero, f_abs(zero))], (zero, f_abs(zero)), [], method, n_eval)

    if len(cand) > 1000:
        cand = cand[np.argsort(vals[cand])[:1000]]

    witnesses, near = [], []
    for idx in cand:
        x0 = T[idx]
        if dim == 1:
            x, fx = _refine_1d(f_abs, max(x0[0] - grid_step, -theta_max), min(x0[0] + grid_step, theta_max))
        else:
            x, fx = _refine_nd(f_abs, x0, grid_step)
        if fx > 0:
            x, fx = _polish(evaluator, x, dim)
        if np.any(np.abs(x) > theta_max):
            continue
        if fx < global_min[1]:
            global_min = (x, fx)
        if fx <= zero_tol:
            if not any(np.linalg.norm(x - w) < 1e-8 for w, _ in witnesses):
                witnesses.append((x, fx))
        elif fx <= WARN_FACTOR * zero_tol:
            near.append((x, fx))
    witnesses.sort(key=lambda wf: (round(float(np.linalg.norm(wf[0])), 9), -float(wf[0][0])))
    return ScanResult(witnesses, global_min, near, method, n_eval)


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------


@dataclass
class DeterminingVerdict:
    status: str
    theta_max: float
    condition: str | None = None
    witness_theta: np.ndarray | None = None
    value: float | None = None
    conditions_checked: list = field(default_factory=list)
    min_abs_value: float | None = None
    min_location: np.ndarray | None = None
    certificates: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    search: str = "none"
    detail: dict = field(default_factory=dict)

    @property
    def refuted(self) -> bool:
        return self.status == REFUTED

    def to_dict(self) -> dict:
        def vec(x):
            return None if x is None else [float(v) for v in np.atleast_1d(x)]

        return {
            "status": self.status,
            "condition": self.condition,
            "witness_theta": vec(self.witness_theta),
            "value": self.value,
            "min_abs_value": self.min_abs_value,
            "min_location": vec(self.min_location),
            "theta_max": self.theta_max,
            "conditions_checked": list(self.conditions_checked),
            "certificates": self.certificates,
            "warnings": self.warnings,
            "search": self.search,
            "detail": self.detail,
        }


@dataclass
class _Condition:
    cond_id: str
    expsum: ExpSum | None  # terms whose nonvanishing is equivalent to the condition
    evaluator: Callable | None = None  # full closed form, if it differs from expsum
    certificate: str | None = None
    margin: float | None = None
    detail: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.expsum.dim

    def evaluate(self, T):
        if self.evaluator is not None:
            return self.evaluator(T)
        if self.expsum.identically_zero:
            return np.zeros(len(np.atleast_2d(T)), dtype=complex)
        return self.expsum(T)


def _decide(conds: list, theta_max, grid_step, zero_tol, seed=0) -> DeterminingVerdict:
    verdict = DeterminingVerdict(CERTIFIED, theta_max)
    best = None
    for c in conds:
        verdict.conditions_checked.append(c.cond_id)
        if c.certificate is None and not c.expsum.identically_zero:
            margin = c.expsum.dominance_margin()
            if margin > 0:
                c.certificate, c.margin = ("single-term" if len(c.expsum) == 1 else "merged-dominance"), margin
        if c.certificate is not None:
            verdict.certificates.append({"condition": c.cond_id, "kind": c.certificate, "margin": c.margin, **c.detail})
            continue
        if c.expsum.identically_zero:
            zero = np.zeros(c.dim)
            verdict.status, verdict.condition = REFUTED, c.cond_id
            verdict.witness_theta, verdict.value = zero, float(abs(c.evaluate(zero[None, :])[0]))
            verdict.min_abs_value, verdict.min_location = verdict.value, zero
            verdict.detail = {**c.detail, "identically_zero": True}
            return verdict
        lip = None if c.evaluator is not None else c.expsum.lipschitz()
        res = scan_zeros(c.evaluate, theta_max, grid_step, zero_tol, c.dim, lipschitz=lip, seed=seed)
        verdict.search = res.method
        if best is None or res.global_min[1] < best[1]:
            best = res.global_min
        for x, fx in res.near_zeros:
            verdict.warnings.append({"condition": c.cond_id, "theta": x.tolist(), "abs_value": fx, **c.detail})
        if res.found_zero:
            x, fx = res.witnesses[0]
            verdict.status, verdict.condition = REFUTED, c.cond_id
            verdict.witness_theta, verdict.value = x, fx
            verdict.min_abs_value, verdict.min_location = fx, x
            verdict.detail = dict(c.detail)
            return verdict
        verdict.status = NO_ZERO
    if best is not None:
        verdict.min_abs_value, verdict.min_location = best[1], best[0]
    return verdict


def _geometric_ratio(P: np.ndarray):
    """Coordinatewise ratio r if rows satisfy P[l] = P[0] * r^l, else None."""
    if len(P) < 2:
        return None
    r = P[1] / P[0]
    expected = P[0][None, :] * r[None, :] ** np.arange(len(P))[:, None]
    if np.allclose(P, expected, rtol=1e-12, atol=0):
        return r
    return None


def _atomic_conditions(P, masses, alpha, coords, id_for_pattern, patterns=None, geometric=False):
    """Conditions sum_a m_a |x_aj|^alpha prod |x_ak|^(i theta_k) sign^m_k over atoms x_a."""
    d = P.shape[1]
    ratio = _geometric_ratio(P) if geometric else None
    conds = []
    for j in coords:
        for pat in patterns or all_patterns(d):
            es = signed_expsum(P, masses, j, pat, alpha)
            c = _Condition(id_for_pattern(pat), es, detail={"j": j, "pattern": list(pat)})
            if ratio is not None and abs(abs(ratio[j]) ** alpha - 1.0) > 1e-12 and not es.identically_zero:
                # terms C z^l with |z| = |r_j|^alpha != 1: (1 - z^(q))/(1 - z) has no zero
                c.certificate, c.margin = "geometric-series", float(abs(1 - abs(ratio[j]) ** (alpha * len(P))))
            conds.append(c)
    return conds


def _apply_global_dominance(conds, certs: Mapping):
    for c in conds:
        cert = certs.get(c.detail.get("j"))
        if c.certificate is None and cert is not None:
            c.certificate, c.margin = "atom-dominance", cert.margin


@dataclass
class DominanceCertificate:
    j: int
    quadrant: tuple
    point: tuple
    mass: float
    margin: float


def certify_atom_dominance(rho_by_quadrant: Mapping, task: CancellationTask) -> dict:
    """For each j in K, an atom whose x_j^alpha moment beats all the others combined, or None."""
    out = {}
    items = [(v, meas) for v, meas in rho_by_quadrant.items() if len(meas)]
    for j in task.coords_K:
        aj = task.alpha_j(j)
        best, total = None, 0.0
        for v, meas in items:
            mom = meas.masses * meas.points[:, j] ** aj
            total += float(mom.sum())
            k = int(np.argmax(mom))
            if best is None or mom[k] > best[0]:
                best = (float(mom[k]), v, tuple(meas.points[k]), float(meas.masses[k]))
        if best is None:
            out[j] = None
            continue
        margin = best[0] - (total - best[0])
        out[j] = DominanceCertificate(j, best[1], best[2], best[3], margin) if margin > 0 else None
    return out


def _scalar_points(psis):
    if isinstance(psis, WeightFamily):
        if psis.kind != "scalars":
            raise MeasureError("expected a scalar weight family")
        psis = psis.entries
    psi = np.asarray(psis, dtype=float).reshape(-1)
    if psi.size == 0:
        raise MeasureError("weight family is empty")
    psi = psi[psi != 0]
    if psi.size == 0:
        raise MeasureError("all weights are zero")
    return psi


def check_scalar_determining(
    psis, alpha: float, theta_max=THETA_MAX, grid_step=GRID_STEP, zero_tol=ZERO_TOL
) -> DeterminingVerdict:
    """Decide whether scalar weights psi_j are alpha-regular-variation determining.

    Checks sum_j |psi_j|^(alpha+i theta) != 0 ("eq3.3") and
    sum_{psi_j>0} psi_j^(alpha+i theta) != sum_{psi_j<0} |psi_j|^(alpha+i theta) ("eq3.4").
    """
    psi = _scalar_points(psis)
    P = psi[:, None]
    task = CancellationTask((0,), alpha)
    rho = make_discrete(1, [((p,), 1.0) for p in psi])
    conds = _atomic_conditions(P, np.ones(len(psi)), alpha, (0,), lambda pat: "eq3.4" if pat[0] else "eq3.3", geometric=True)
    _apply_global_dominance(conds, certify_atom_dominance(quadrant_split(rho), task))
    return _decide(conds, theta_max, grid_step, zero_tol)


def check_diagonal_determining(
    fam: WeightFamily, alpha: float, theta_max=THETA_MAX, grid_step=GRID_STEP, zero_tol=ZERO_TOL, coords_K=None
) -> DeterminingVerdict:
    """Non-vanishing of the signed Mellin sums of diagonal coefficient vectors, all j and m."""
    if fam.kind == "scalars":
        vecs = np.array([[p] * fam.dim for p in fam.entries], dtype=float)
    elif fam.kind == "diag":
        vecs = fam.as_array()
    else:
        raise MeasureError("check_diagonal_determining needs diagonal vectors")
    nonzero = np.any(vecs != 0, axis=1)
    vecs = vecs[nonzero]
    if len(vecs) == 0:
        raise MeasureError("all coefficient vectors are zero")
    bad = np.flatnonzero(np.any(vecs == 0, axis=1))
    if bad.size:
        raise MeasureError(
            f"nonzero coefficient vector {bad[0]} has a vanishing coordinate; this needs the "
            "axes-mass extension of the conditions, which is not implemented"
        )
    d = vecs.shape[1]
    K = tuple(range(d)) if coords_K is None else tuple(coords_K)
    task = CancellationTask(K, alpha)
    conds = _atomic_conditions(vecs, np.ones(len(vecs)), alpha, K, lambda pat: "eq3.2", geometric=True)
    rho = DiscreteMeasure.from_arrays(d, vecs, np.ones(len(vecs)))
    _apply_global_dominance(conds, certify_atom_dominance(quadrant_split(rho), task))
    return _decide(conds, theta_max, grid_step, zero_tol)


def check_product_determining(
    law_A: ProductLaw, alpha: float, theta_max=THETA_MAX, grid_step=GRID_STEP, zero_tol=ZERO_TOL
) -> DeterminingVerdict:
    """Decide whether an atomic multiplier law A is alpha-regular-variation determining.

    Scalar A: E|A|^(alpha+i theta) != 0 ("eq4.2") and E A_+^(alpha+i theta) != E A_-^(alpha+i theta)
    ("eq4.3").  Diagonal A: the mixed signed moments for every j and m ("eq4.1").
    """
    zeros = law_A.zero_atoms()
    if zeros.size:
        raise MeasureError(f"law of A puts mass on a zero coordinate (atom {zeros[0]})")
    P, m = law_A.law.points, law_A.law.masses
    d = law_A.dim
    if d == 1:
        ids = lambda pat: "eq4.3" if pat[0] else "eq4.2"  # noqa: E731
    else:
        ids = lambda pat: "eq4.1"  # noqa: E731
    task = CancellationTask.full(d, alpha)
    conds = _atomic_conditions(P, m, alpha, task.coords_K, ids)
    _apply_global_dominance(conds, certify_atom_dominance(quadrant_split(law_A.law), task))
    return _decide(conds, theta_max, grid_step, zero_tol)


def check_measure_determining(
    rho: DiscreteMeasure, task: CancellationTask, theta_max=THETA_MAX, grid_step=GRID_STEP, zero_tol=ZERO_TOL
) -> DeterminingVerdict:
    """Cancellation conditions of the quadrant system for a general atomic rho."""
    split = quadrant_split(rho)
    if len(split.axes):
        raise MeasureError("rho charges the coordinate axes; the axes-mass extension is not implemented")
    P, m = _quadrant_points(split)
    if rho.dim == 1:
        ids = lambda pat: "eq2.13b" if pat[0] else "eq2.13a"  # noqa: E731
    else:
        ids = lambda pat: "eq2.12"  # noqa: E731
    conds = []
    for j in task.coords_K:
        conds += _atomic_conditions(P, m, task.alpha_j(j), (j,), ids)
    _apply_global_dominance(conds, certify_atom_dominance(split, task))
    return _decide(conds, theta_max, grid_step, zero_tol)


def _uniform_numerators(a: float, b: float, alpha: float):
    """Endpoint terms of int_a^b |x|^(s) 1{x>0 or x<0} dx * (s+1), s = alpha + i theta."""
    pos = []  # (coefficient, endpoint) for A_+
    neg = []
    p0, p1 = max(a, 0.0), max(b, 0.0)
    n0, n1 = max(-b, 0.0), max(-a, 0.0)
    if p1 > p0:
        pos += [(1.0, p1)] + ([(-1.0, p0)] if p0 > 0 else [])
    if n1 > n0:
        neg += [(1.0, n1)] + ([(-1.0, n0)] if n0 > 0 else [])
    return pos, neg


def check_uniform_product(
    a: float, b: float, alpha: float, theta_max=THETA_MAX, grid_step=GRID_STEP, zero_tol=ZERO_TOL
) -> DeterminingVerdict:
    """Determining check for A ~ Uniform(a, b) via closed-form Mellin integrals.

    E A_+^s = (b_+^(s+1) - a_+^(s+1)) / ((s+1)(b-a)) and likewise for A_-.  The factor
    1/((s+1)(b-a)) never vanishes, so each condition reduces to a short sum of
    endpoint powers whose moduli can be compared directly.
    """
    if not a < b:
        raise MeasureError("uniform law needs a < b")
    pos, neg = _uniform_numerators(a, b, alpha)

    def numerator(sign):
        terms = pos + [(sign * c, e) for c, e in neg]
        coeffs = [c * e ** (alpha + 1) for c, e in terms]
        return ExpSum.build(coeffs, np.log([[e] for _, e in terms]).reshape(-1, 1))

    def closed_form(sign):
        es = numerator(sign)

        def f(T):
            T = _as_thetas(T, 1)
            s = alpha + 1j * T[:, 0]
            num = np.zeros(len(T), dtype=complex) if es.identically_zero else es(T)
            return num / ((s + 1) * (b - a))

        return es, f

    conds = []
    for cid, sign in (("eq4.2", 1.0), ("eq4.3", -1.0)):
        es, f = closed_form(sign)
        c = _Condition(cid, es, evaluator=f, detail={"a": a, "b": b})
        if not es.identically_zero and es.dominance_margin() > 0:
            c.certificate, c.margin = "closed-form-modulus", es.dominance_margin() / ((alpha + 1) * (b - a))
        conds.append(c)
    return _decide(conds, theta_max, grid_step, zero_tol)


# ---------------------------------------------------------------------------
# Hypotheses and the quadrant equation system
# ---------------------------------------------------------------------------


@dataclass
class MomentReport:
    nondegeneracy: list  # rho({x_j != 0}) per coordinate
    nondegenerate: bool
    moment_lower: float  # int |y|^(alpha - delta')
    moment_upper: float  # int |y|^(alpha + delta')
    moment_max: float  # int max(|y|^(alpha-delta'), |y|^(alpha+delta'))
    quadrant_moments: dict  # {quadrant: {j: int x_j^alpha_j d rho_v}}
    small_multiplier: str
    axes_mass: float
    nu_tail_sup: float | None = None

    def to_dict(self) -> dict:
        return {
            "nondegeneracy": self.nondegeneracy,
            "nondegenerate": self.nondegenerate,
            "moment_lower": self.moment_lower,
            "moment_upper": self.moment_upper,
            "moment_max": self.moment_max,
            "quadrant_moments": {",".join(map(str, v)): {str(j): x for j, x in d.items()} for v, d in self.quadrant_moments.items()},
            "small_multiplier": self.small_multiplier,
            "axes_mass": self.axes_mass,
            "nu_tail_sup": self.nu_tail_sup,
        }


def validate_hypotheses(rho: DiscreteMeasure, nu_tail_probe=None, task: CancellationTask | None = None) -> MomentReport:
    """Report the moment and non-degeneracy hypotheses for an atomic rho.

    ``nu_tail_probe`` is either a callable s -> nu({x_j > s}) evaluated on a
    log grid, or a sequence of (s, tail) pairs; the report gives
    sup_s s^alpha * tail.
    """
    task = task or CancellationTask.full(rho.dim, 1.0)
    a, dp = task.alpha, task.delta_prime
    nondeg = [float(rho.masses[rho.points[:, j] != 0].sum()) for j in range(rho.dim)]
    norms = np.linalg.norm(rho.points, axis=1)
    lower = float(np.sum(rho.masses * norms ** (a - dp)))
    upper = float(np.sum(rho.masses * norms ** (a + dp)))
    mx = float(np.sum(rho.masses * np.maximum(norms ** (a - dp), norms ** (a + dp))))
    split = quadrant_split(rho)
    qm = {
        v: {j: float(np.sum(meas.masses * meas.points[:, j] ** task.alpha_j(j))) for j in task.coords_K}
        for v, meas in split.items()
    }
    sup = None
    if nu_tail_probe is not None:
        if callable(nu_tail_probe):
            s = np.logspace(-3, 6, 91)
            vals = np.array([nu_tail_probe(x) for x in s], dtype=float)
        else:
            arr = np.asarray(nu_tail_probe, dtype=float)
            s, vals = arr[:, 0], arr[:, 1]
        sup = float(np.max(s**a * vals))
    return MomentReport(
        nondegeneracy=nondeg,
        nondegenerate=min(nondeg) > 0,
        moment_lower=lower,
        moment_upper=upper,
        moment_max=mx,
        quadrant_moments=qm,
        small_multiplier="PASSED-BY-BOUNDED-SUPPORT",
        axes_mass=split.axes.total_mass,
        nu_tail_sup=sup,
    )


def _sign_product(v, w):
    return tuple(int(x * y) for x, y in zip(v, w))


def system_residual_table(rho_by_quadrant: Mapping, nu1_by_quadrant: Mapping, nu2_by_quadrant: Mapping, panel: Sequence[EvalSet]):
    """|lhs - rhs| of sum_w nu_w * rho_{vw} for every quadrant v and panel set."""
    dims = {m.dim for m in (*rho_by_quadrant.values(), *nu1_by_quadrant.values(), *nu2_by_quadrant.values())}
    if len(dims) != 1:
        raise MeasureError(f"dimension mismatch among measures: {sorted(dims)}")
    d = dims.pop()
    table = []
    for v in all_quadrants(d):
        lhs = np.zeros(len(panel))
        rhs = np.zeros(len(panel))
        for w in all_quadrants(d):
            r = rho_by_quadrant.get(_sign_product(v, w))
            if r is None or len(r) == 0:
                continue
            for nu_map, acc in ((nu1_by_quadrant, lhs), (nu2_by_quadrant, rhs)):
                nu = nu_map.get(w)
                if nu is None or len(nu) == 0:
                    continue
                conv = mult_convolve(nu, r)
                acc += [conv.evaluate(A) for A in panel]
        table.append((v, np.abs(lhs - rhs)))
    return table


def system_residual(rho_by_quadrant: Mapping, nu1_by_quadrant: Mapping, nu2_by_quadrant: Mapping, panel: Sequence[EvalSet]) -> float:
    """Max residual of the quadrant equation system over the panel sets."""
    table = system_residual_table(rho_by_quadrant, nu1_by_quadrant, nu2_by_quadrant, panel)
    return float(max(np.max(r) if len(r) else 0.0 for _, r in table))
