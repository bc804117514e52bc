"""Eigenvalue-simplex projection and stratum labels for density matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .matqm import hermitian_eigh

DEFAULT_DEGENERACY_TOL = 1e-8


@dataclass(frozen=True)
class SpectralProfile:
    """Sorted spectrum of a density matrix and its degeneracy pattern.

    Attributes
    ----------
    probabilities : ndarray
        Ascending eigenvalues, clipped to ``[0, 1]``.
    groups : tuple of int
        Multiplicities of consecutive clusters of equal eigenvalues, ascending
        order. Zero eigenvalues form their own cluster.
    n_zero : int
        Number of eigenvalues treated as zero.
    """

    probabilities: np.ndarray
    groups: tuple[int, ...]
    n_zero: int = 0
    degeneracy_profile: tuple[tuple[int, int], ...] = field(init=False)

    def __post_init__(self):
        counts: dict[int, int] = {}
        for q in self.groups:
            counts[q] = counts.get(q, 0) + 1
        object.__setattr__(self, "degeneracy_profile", tuple(sorted(counts.items())))

    @property
    def dim(self) -> int:
        return len(self.probabilities)

    @property
    def is_regular(self) -> bool:
        return self.n_zero == 0

    @property
    def rank(self) -> int:
        return self.dim - self.n_zero


@dataclass(frozen=True)
class StratumLabel:
    profile: SpectralProfile
    fiber_description: str


def project_simplex(
    rho: np.ndarray,
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL,
    herm_tol: float = 1e-10,
    trace_tol: float = 1e-8,
) -> SpectralProfile:
    """Project a density matrix on the simplex of its sorted eigenvalues.

    Neighbouring eigenvalues closer than ``degeneracy_tol`` are clustered
    (transitive closure along the sorted list); eigenvalues below
    ``degeneracy_tol`` count as zero.

    Raises
    ------
    ValueError
        If ``rho`` is not Hermitian within ``herm_tol`` or its trace is off by
        more than ``trace_tol``.
    """
    rho = np.asarray(rho, dtype=complex)
    dec = hermitian_eigh(rho, herm_tol=herm_tol)
    tr = float(np.real(np.trace(rho)))
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"trace {tr:.12g} differs from 1")
    p = np.clip(dec.eigenvalues, 0.0, 1.0)
    return profile_from_eigenvalues(p, degeneracy_tol)


def profile_from_eigenvalues(p, degeneracy_tol: float = DEFAULT_DEGENERACY_TOL) -> SpectralProfile:
    """Build a :class:`SpectralProfile` from an ascending list of eigenvalues."""
    p = np.asarray(p, dtype=float)
    zero = p < degeneracy_tol
    n_zero = int(np.count_nonzero(zero))
    groups: list[int] = [n_zero] if n_zero else []
    nonzero = p[~zero]
    if nonzero.size:
        sizes = [1]
        for a, b in zip(nonzero[:-1], nonzero[1:]):
            if abs(b - a) < degeneracy_tol:
                sizes[-1] += 1
            else:
                sizes.append(1)
        groups.extend(sizes)
    return SpectralProfile(p.copy(), tuple(groups), n_zero)


def _quotient_label(n: int, groups: tuple[int, ...]) -> str:
    parts = []
    for q in sorted(set(groups), reverse=True):
        k = groups.count(q)
        if q == 1:
            parts.append(f"T^{k}" if k > 1 else "U(1)")
        else:
            parts.append(f"U({q})" + (f"^{k}" if k > 1 else ""))
    return f"U({n})/(" + "x".join(parts) + ")"


def classify_stratum(profile: SpectralProfile) -> StratumLabel:
    """Label the orbit type (fiber over the simplex point) of a profile.

    The fiber is ``U(n) / (U(q1)^k1 x ... x U(ql)^kl)``. Flag manifolds,
    projective spaces and Grassmannians get their usual names; every other
    pattern is labelled by the quotient itself, e.g. ``"U(4)/(U(2)xT^2)"``.
    """
    n = profile.dim
    g = tuple(profile.groups)
    if len(g) == 1:
        label = "{1}"
    elif profile.n_zero == n - 1:
        # pure states; for n = 2 this is also Fl(2,C), named as the projective space
        label = f"CP^{n - 1}"
    elif all(q == 1 for q in g):
        label = f"Fl({n},C)"
    elif len(g) == 2 and 1 in g:
        label = f"CP^{n - 1}"
    elif len(g) == 2:
        label = f"Gr_{min(g)}(C^{n})"
    else:
        label = _quotient_label(n, g)
    return StratumLabel(profile, label)


def profile_changes(profiles) -> list[int]:
    """Indices ``i`` where the degeneracy pattern differs from step ``i-1``."""
    out = []
    for i in range(1, len(profiles)):
        if profiles[i].groups != profiles[i - 1].groups:
            out.append(i)
    return out
