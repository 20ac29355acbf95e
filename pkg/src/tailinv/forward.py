"""Forward tail maps: multiplicative convolution, weighted sums and products."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .measures import (
    DiscreteMeasure,
    HomogeneousTailMeasure,
    MeasureError,
    SINGULAR_COND,
    pushforward,
)

KINDS = ("scalars", "diag", "matrices")


@dataclass(frozen=True, eq=False)
class WeightFamily:
    """Finite coefficient family: scalars psi_j, diagonals d^(i) or matrices Psi_j.

    ``dim`` is the dimension of the vectors the family acts on; for scalars it
    defaults to 1 and the entry psi acts as psi * I.
    """

    kind: str
    dim: int
    entries: tuple
    tail_bound: float | None = None  # user-reported bound on the truncated remainder

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MeasureError(f"unknown family kind {self.kind!r}")
        if len(self.entries) == 0:
            raise MeasureError("weight family must be nonempty")

    @classmethod
    def scalars(cls, psis: Sequence[float], dim: int = 1, tail_bound=None) -> "WeightFamily":
        return cls("scalars", dim, tuple(float(p) for p in psis), tail_bound)

    @classmethod
    def diagonals(cls, vectors, tail_bound=None) -> "WeightFamily":
        vecs = [np.atleast_1d(np.asarray(v, dtype=float)) for v in vectors]
        if not vecs:
            raise MeasureError("weight family must be nonempty")
        d = len(vecs[0])
        if any(v.shape != (d,) for v in vecs):
            raise MeasureError("diagonal vectors must share one dimension")
        for v in vecs:
            v.setflags(write=False)
        return cls("diag", d, tuple(vecs), tail_bound)

    @classmethod
    def matrices(cls, mats, tail_bound=None) -> "WeightFamily":
        ms = [np.atleast_2d(np.asarray(m, dtype=float)) for m in mats]
        if not ms:
            raise MeasureError("weight family must be nonempty")
        d = ms[0].shape[0]
        if any(m.shape != (d, d) for m in ms):
            raise MeasureError("matrices must all be square of one size")
        for m in ms:
            m.setflags(write=False)
        return cls("matrices", d, tuple(ms), tail_bound)

    def __len__(self):
        return len(self.entries)

    @property
    def has_zero(self) -> bool:
        """True if any scalar or diagonal entry is exactly zero."""
        if self.kind == "scalars":
            return any(p == 0 for p in self.entries)
        if self.kind == "diag":
            return any(np.any(v == 0) for v in self.entries)
        return False

    def as_matrices(self) -> list[np.ndarray]:
        if self.kind == "scalars":
            return [p * np.eye(self.dim) for p in self.entries]
        if self.kind == "diag":
            return [np.diag(v) for v in self.entries]
        return [np.array(m) for m in self.entries]

    def as_array(self) -> np.ndarray:
        """Entries stacked: (q,) for scalars, (q, d) diagonals, (q, d, d) matrices."""
        return np.array(self.entries, dtype=float)

    def to_dict(self) -> dict:
        if self.kind == "scalars":
            entries = list(self.entries)
        else:
            entries = [np.asarray(e).tolist() for e in self.entries]
        out = {"kind": self.kind, "dim": self.dim, "entries": entries}
        if self.tail_bound is not None:
            out["tail_bound"] = self.tail_bound
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "WeightFamily":
        kind = data["kind"]
        tb = data.get("tail_bound")
        if kind == "scalars":
            return cls.scalars(data["entries"], int(data.get("dim", 1)), tb)
        if kind == "diag":
            fam = cls.diagonals(data["entries"], tb)
        elif kind == "matrices":
            fam = cls.matrices(data["entries"], tb)
        else:
            raise MeasureError(f"unknown family kind {kind!r}")
        if "dim" in data and int(data["dim"]) != fam.dim:
            raise MeasureError("declared dim does not match entries")
        return fam


@dataclass(frozen=True, eq=False)
class ProductLaw:
    """Atomic law of a random diagonal matrix A = diag(A_1..A_d) (scalar if dim 1).

    ``delta`` is the moment margin in E|A|^(alpha+delta) < inf; finite
    support makes that moment finite for every delta.
    """

    law: DiscreteMeasure
    delta: float = 1.0

    def __post_init__(self):
        if abs(self.law.total_mass - 1.0) > 1e-9:
            raise MeasureError(f"ProductLaw masses must sum to 1, got {self.law.total_mass}")
        if not self.delta > 0:
            raise MeasureError("delta must be positive")

    @classmethod
    def from_atoms(cls, dim: int, atoms, delta: float = 1.0) -> "ProductLaw":
        from .measures import make_discrete

        return cls(make_discrete(dim, atoms), delta)

    @property
    def dim(self) -> int:
        return self.law.dim

    def moment(self, alpha: float) -> float:
        """E|A|^(alpha+delta) with the Euclidean (= max-entry for diagonals) operator norm."""
        opnorm = np.max(np.abs(self.law.points), axis=1)
        return float(np.sum(self.law.masses * opnorm ** (alpha + self.delta)))

    def zero_atoms(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.law.points == 0, axis=1))

    def to_dict(self) -> dict:
        return {**self.law.to_dict(), "delta": self.delta}

    @classmethod
    def from_dict(cls, data: Mapping) -> "ProductLaw":
        return cls(DiscreteMeasure.from_dict(data), float(data.get("delta", 1.0)))


def mult_convolve(nu: DiscreteMeasure, rho: DiscreteMeasure) -> DiscreteMeasure:
    """(nu * rho)(B) = int nu(diag(x)^-1 B) rho(dx) for atomic measures."""
    if nu.dim != rho.dim:
        raise MeasureError(f"dimension mismatch: {nu.dim} vs {rho.dim}")
    if len(nu) == 0 or len(rho) == 0:
        return DiscreteMeasure.empty(nu.dim)
    P = (nu.points[:, None, :] * rho.points[None, :, :]).reshape(-1, nu.dim)
    m = (nu.masses[:, None] * rho.masses[None, :]).reshape(-1)
    return DiscreteMeasure.from_arrays(nu.dim, P, m)


def _family_matrices(fam: WeightFamily) -> list[np.ndarray]:
    mats = []
    for j, M in enumerate(fam.as_matrices()):
        if not np.any(M):
            # an all-zero coefficient contributes nothing away from the origin
            continue
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > SINGULAR_COND:
            raise MeasureError(
                f"family entry {j} is singular (condition number {cond:.3g}); coefficients with "
                "vanishing coordinates need the extended axes conditions, which are not supported here"
            )
        mats.append(M)
    return mats


def weighted_sum_tail(mu_Z: HomogeneousTailMeasure, fam: WeightFamily) -> HomogeneousTailMeasure:
    """Tail measure sum_j mu_Z o Psi_j^-1 of X = sum_j Psi_j Z^(j)."""
    if fam.dim != mu_Z.dim:
        raise MeasureError(f"family acts on dimension {fam.dim}, measure has {mu_Z.dim}")
    out = None
    for M in _family_matrices(fam):
        img = pushforward(mu_Z, M)
        out = img if out is None else out + img
    if out is None or out.is_zero():
        raise MeasureError("right-hand side vanishes")
    return out


def scalar_weight_tail(mu_Z: HomogeneousTailMeasure, psis) -> tuple[float, float, HomogeneousTailMeasure]:
    """(psi_plus, psi_minus, mu_X) with mu_X = psi_plus mu_Z + psi_minus mu_Z(-.)."""
    if isinstance(psis, WeightFamily):
        if psis.kind != "scalars":
            raise MeasureError("scalar_weight_tail needs a scalar family")
        psis = psis.entries
    psi = np.asarray(psis, dtype=float)
    if psi.size == 0 or not np.any(psi):
        raise MeasureError("all weights are zero")
    a = mu_Z.alpha
    psi_plus = float(np.sum(psi[psi > 0] ** a))
    psi_minus = float(np.sum(np.abs(psi[psi < 0]) ** a))
    parts = []
    if psi_plus > 0:
        parts.append(mu_Z.scaled(psi_plus))
    if psi_minus > 0:
        parts.append(mu_Z.reflected().scaled(psi_minus))
    mu_X = parts[0] if len(parts) == 1 else parts[0] + parts[1]
    return psi_plus, psi_minus, mu_X


def product_tail(mu_Z: HomogeneousTailMeasure, law_A: ProductLaw) -> HomogeneousTailMeasure:
    """Tail measure E[mu_Z o A^-1] of X = A Z for an atomic diagonal (or scalar) A."""
    zeros = law_A.zero_atoms()
    if zeros.size:
        raise MeasureError(f"law of A has an atom with a zero coordinate (atom {zeros[0]})")
    d = mu_Z.dim
    if law_A.dim not in (1, d):
        raise MeasureError(f"law of A has dimension {law_A.dim}, measure has {d}")
    out = None
    for a, m in zip(law_A.law.points, law_A.law.masses):
        diag = np.full(d, a[0]) if law_A.dim == 1 else a
        img = pushforward(mu_Z, np.diag(diag)).scaled(m)
        out = img if out is None else out + img
    if out is None or out.is_zero():
        raise MeasureError("right-hand side vanishes")
    return out
