"""Constructive inversion of mu_X = sum_j mu_* o Psi_j^-1 for invertible matrices.

With T_j = Psi_j^-1 Psi_1 the identity mu_X(Psi_1 B) = mu_*(B) + sum_{j>=2} mu_*(T_j B)
iterates to an alternating series in mu_X.  A term mu_X(M B) with
M = Psi_1 T_{j_k} ... T_{j_1} is evaluated exactly by carrying the inverse
matrix onto the spectral rays of mu_X: M^-1 = P_{j_1} ... P_{j_k} Psi_1^-1,
P_j = Psi_1^-1 Psi_j.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import ortho_group

from .forward import WeightFamily, weighted_sum_tail
from .measures import (
    EvalSet,
    HomogeneousTailMeasure,
    MeasureError,
    NormExceed,
    SINGULAR_COND,
    pushforward,
    radial_mass,
    tail_eval,
)

log = logging.getLogger(__name__)

MAX_TERMS = 10_000_000
_CHUNK_ROWS = 1 << 18


class InfeasibleError(RuntimeError):
    """The contraction condition fails and no preconditioner was found."""


def gamma_min(M) -> float:
    """Smallest singular value, i.e. min over the unit sphere of |M z|."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return float(np.linalg.svd(M, compute_uv=False)[-1])


def op_norm(M) -> float:
    return float(np.linalg.norm(np.atleast_2d(np.asarray(M, dtype=float)), 2))


@dataclass
class ContractionCertificate:
    gamma1: float
    norms: list
    kappa: float
    alpha: float
    preconditioner: np.ndarray | None = None

    @property
    def feasible(self) -> bool:
        return self.gamma1 > 0 and self.kappa < 1

    def to_dict(self) -> dict:
        return {
            "gamma1": self.gamma1,
            "norms": list(self.norms),
            "kappa": self.kappa,
            "alpha": self.alpha,
            "feasible": self.feasible,
            "preconditioner": None if self.preconditioner is None else np.asarray(self.preconditioner).tolist(),
        }


def _matrices(fam) -> list[np.ndarray]:
    if isinstance(fam, WeightFamily):
        mats = fam.as_matrices()
    else:
        mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in fam]
    if not mats:
        raise MeasureError("weight family must be nonempty")
    for j, M in enumerate(mats):
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > SINGULAR_COND:
            raise MeasureError(f"Psi_{j + 1} (index {j}) is singular, condition number {cond:.3g}")
    return mats


def certify(fam, alpha: float, preconditioner=None) -> ContractionCertificate:
    """kappa = gamma(A Psi_1)^-alpha * sum_{j>=2} ||A Psi_j||^alpha; feasible iff kappa < 1."""
    mats = _matrices(fam)
    A = None
    if preconditioner is not None:
        A = np.atleast_2d(np.asarray(preconditioner, dtype=float))
        if np.linalg.cond(A) > SINGULAR_COND:
            raise MeasureError("preconditioner is singular")
        mats = [A @ M for M in mats]
    g = gamma_min(mats[0])
    norms = [op_norm(M) for M in mats[1:]]
    kappa = float(sum(n**alpha for n in norms) / g**alpha) if norms else 0.0
    return ContractionCertificate(g, norms, kappa, alpha, A)


def default_candidates(fam, n_random: int = 100, seed: int = 0) -> list[np.ndarray]:
    """Identity, Psi_1^-1, diagonal rescalings and random orthogonal x diagonal matrices."""
    mats = _matrices(fam)
    d = mats[0].shape[0]
    cands = [np.eye(d), np.linalg.inv(mats[0])]
    exps = np.linspace(-3, 3, 13)
    if d <= 3:
        grids = np.meshgrid(*([exps] * d), indexing="ij")
        for e in np.stack([g.reshape(-1) for g in grids], axis=1):
            if np.any(e != 0):
                cands.append(np.diag(10.0**e))
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        Q = ortho_group.rvs(d, random_state=rng) if d > 1 else np.array([[rng.choice([-1.0, 1.0])]])
        cands.append(Q @ np.diag(10.0 ** rng.uniform(-2, 2, size=d)))
    return cands


def search_preconditioner(fam, alpha: float, candidates: Sequence | None = None):
    """First candidate A with kappa(A Psi) < 1, as (A, certificate), or None."""
    if candidates is None:
        candidates = default_candidates(fam)
    if len(candidates) == 0:
        raise MeasureError("candidate list is empty")
    for A in candidates:
        try:
            cert = certify(fam, alpha, A)
        except MeasureError:
            continue
        if cert.feasible:
            return np.asarray(A, dtype=float), cert
    return None


@dataclass
class NeumannResult:
    value: float
    terms_used: int
    tail_bound: float
    per_term: list = field(default_factory=list)  # |level sum| for k = 0..n
    kappa: float = 0.0
    bound_constant: float = 0.0  # estimate of mu_*({|z| > 1}) used in the bound
    inf_norm: float = math.inf
    partial: bool = False
    n_terms_evaluated: int = 0
    preconditioner: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "terms_used": self.terms_used,
            "tail_bound": self.tail_bound,
            "per_term": list(self.per_term),
            "kappa": self.kappa,
            "bound_constant": self.bound_constant,
            "inf_norm": self.inf_norm,
            "partial": self.partial,
            "n_terms_evaluated": self.n_terms_evaluated,
            "preconditioner": None if self.preconditioner is None else np.asarray(self.preconditioner).tolist(),
        }


def _terms_through(m: int, n: int) -> int:
    """Number of multi-indices of length 0..n over m letters."""
    return n + 1 if m == 1 else (m ** (n + 1) - 1) // (m - 1)


def _level_sums(V0, w0, alpha, B, P, n) -> np.ndarray:
    """S_k = sum over multi-indices of length k of mu_X(Psi_1 T... B), k = 0..n."""
    S = np.zeros(n + 1)
    m = len(P)
    # explicit stack: depth can reach thousands when kappa is close to 1
    stack = [(V0, w0, 0)]
    while stack:
        V, w, k = stack.pop()
        S[k] += radial_mass(V, w, alpha, B)
        if k == n or m == 0:
            continue
        if len(V) * m <= _CHUNK_ROWS:
            stack.append((np.concatenate([V @ Pj.T for Pj in P]), np.tile(w, m), k + 1))
        else:
            for Pj in reversed(P):
                stack.append((V @ Pj.T, w, k + 1))
    return S


def neumann_invert(
    mu_X: HomogeneousTailMeasure,
    fam,
    B: EvalSet,
    tol: float = 1e-8,
    max_terms: int = MAX_TERMS,
    preconditioner=None,
) -> NeumannResult:
    """mu_*(B) from mu_X by the alternating series, truncated once the remainder bound <= tol.

    ``preconditioner`` is None, an invertible matrix A, or "auto" (search
    only if the raw family is infeasible).  With A the series is run for AX,
    whose tail measure is mu_X o A^-1 with family {A Psi_j}; mu_* is unchanged.
    The remainder after level n is at most c * (inf_B |z|)^-alpha * kappa^(n+1) / (1 - kappa),
    where c = gamma(Psi_1)^-alpha * mu_X(|x| > 1) bounds mu_*(|z| > 1).
    """
    mats = _matrices(fam)
    alpha = mu_X.alpha
    if mats[0].shape[0] != mu_X.dim:
        raise MeasureError(f"family acts on dimension {mats[0].shape[0]}, measure has {mu_X.dim}")
    A = None
    if isinstance(preconditioner, str):
        if preconditioner == "auto":
            if not certify(mats, alpha).feasible:
                found = search_preconditioner(mats, alpha)
                if found is None:
                    raise InfeasibleError("contraction condition fails and no preconditioner was found")
                A = found[0]
        elif preconditioner != "none":
            raise MeasureError(f"unknown preconditioner mode {preconditioner!r}")
    elif preconditioner is not None:
        A = np.atleast_2d(np.asarray(preconditioner, dtype=float))
    if A is not None:
        mu_X = pushforward(mu_X, A)
        mats = [A @ M for M in mats]
    cert = certify(mats, alpha)
    if not cert.feasible:
        raise InfeasibleError(f"contraction condition fails: kappa = {cert.kappa:.6g} >= 1")

    Psi1_inv = np.linalg.inv(mats[0])
    P = [Psi1_inv @ M for M in mats[1:]]
    V0 = (mu_X.directions @ Psi1_inv.T)
    w0 = np.asarray(mu_X.weights, dtype=float)

    inf_b = B.inf_norm()
    if not inf_b > 0:
        raise MeasureError("evaluation set must be bounded away from the origin")
    c = cert.gamma1 ** (-alpha) * tail_eval(mu_X, NormExceed(1.0))
    scale = c * inf_b ** (-alpha)
    kappa = cert.kappa
    m = len(P)

    if m == 0 or kappa == 0.0 or scale == 0.0:
        n, partial = 0, False
    else:
        # remainder <= sum_{k>n} scale * kappa^k = scale * kappa^(n+1) / (1 - kappa)
        tail = scale / (1.0 - kappa)
        need = math.log(tol / tail) / math.log(kappa) - 1 if tail > tol else 0.0
        n = max(0, math.ceil(need - 1e-12))
        partial = False
        if _terms_through(m, n) > max_terms:
            n_fit = 0
            while _terms_through(m, n_fit + 1) <= max_terms:
                n_fit += 1
            log.warning("term budget %d reached at depth %d before tol %g", max_terms, n_fit, tol)
            n, partial = n_fit, True

    S = _level_sums(V0, w0, alpha, B, P, n)
    signs = (-1.0) ** np.arange(n + 1)
    value = float(np.sum(signs * S))
    bound = 0.0 if m == 0 else float(scale * kappa ** (n + 1) / (1.0 - kappa))
    return NeumannResult(
        value=value,
        terms_used=n,
        tail_bound=bound,
        per_term=[float(s) for s in S],
        kappa=kappa,
        bound_constant=c,
        inf_norm=inf_b,
        partial=partial,
        n_terms_evaluated=_terms_through(m, n) if m else 1,
        preconditioner=A,
    )


@dataclass
class RoundtripRow:
    set: EvalSet
    truth: float
    recovered: float
    bound: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "set": self.set.to_dict(),
            "truth": self.truth,
            "recovered": self.recovered,
            "bound": self.bound,
            "pass": self.passed,
        }


def roundtrip_report(mu_Z: HomogeneousTailMeasure, fam, panel: Sequence[EvalSet], tol: float = 1e-8, **kw) -> list[RoundtripRow]:
    """Forward map then inversion on each panel set; pass iff |truth - recovered| <= bound + 1e-12."""
    if not isinstance(fam, WeightFamily):
        fam = WeightFamily.matrices(fam)
    if fam.kind != "matrices":
        fam = WeightFamily.matrices(fam.as_matrices())
    if not certify(fam, mu_Z.alpha).feasible and kw.get("preconditioner") in (None, "none"):
        raise InfeasibleError("contraction condition fails")
    mu_X = weighted_sum_tail(mu_Z, fam)
    rows = []
    for B in panel:
        truth = tail_eval(mu_Z, B)
        res = neumann_invert(mu_X, fam, B, tol, **kw)
        rows.append(RoundtripRow(B, truth, res.value, res.tail_bound, abs(truth - res.value) <= res.tail_bound + 1e-12))
    return rows
