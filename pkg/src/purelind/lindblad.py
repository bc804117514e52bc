"""Lindblad models and the reference Liouville-space propagator.

Units: hbar = 1. The master equation is written as

    i d(rho)/dt = [H, rho] - (i/2) g_k {G_k^dag G_k, rho} + i g_k G_k rho G_k^dag

and the superoperator acts on the row-major flattening of ``rho``, for which
``vec(A rho B) = (A kron B^T) vec(rho)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .matqm import dagger, hermitian_part, kron, matrix_exp, max_abs

MatrixFn = Callable[[float], np.ndarray]

TRACE_DRIFT_TOL = 1e-6


def _constant(m: np.ndarray) -> MatrixFn:
    m = np.array(m, dtype=complex)
    m.setflags(write=False)
    return lambda t: m


@dataclass(frozen=True)
class LindbladModel:
    """Time-dependent Hamiltonian, jump operators and rates.

    Attributes
    ----------
    dim : int
        System dimension ``n``.
    hamiltonian : callable
        ``t -> (n, n)`` Hermitian matrix.
    jumps : sequence of callables
        ``t -> (n, n)`` jump operators.
    rates : ndarray
        Non-negative rates, one per jump operator.
    time_independent : bool
        Promise that the operators do not depend on ``t`` (enables caching).
    """

    dim: int
    hamiltonian: MatrixFn
    jumps: tuple[MatrixFn, ...] = ()
    rates: np.ndarray = field(default_factory=lambda: np.zeros(0))
    time_independent: bool = False

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float).reshape(-1)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "jumps", tuple(self.jumps))
        if len(self.jumps) != rates.size:
            raise ValueError("need exactly one rate per jump operator")
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise ValueError("rates must be finite and non-negative")

    @classmethod
    def constant(cls, h, jumps: Sequence = (), rates: Sequence[float] = ()) -> "LindbladModel":
        """Model with time-independent operators."""
        h = np.asarray(h, dtype=complex)
        return cls(h.shape[0], _constant(h), tuple(_constant(j) for j in jumps), np.asarray(rates, float), True)

    def with_rates(self, rates) -> "LindbladModel":
        return LindbladModel(self.dim, self.hamiltonian, self.jumps, np.asarray(rates, float), self.time_independent)

    def operators(self, t: float) -> tuple[np.ndarray, list[np.ndarray]]:
        """Return ``H(t)`` and the list of ``G_k(t)``."""
        return np.asarray(self.hamiltonian(t), dtype=complex), [np.asarray(j(t), dtype=complex) for j in self.jumps]

    def effective_hamiltonian(self, t: float) -> np.ndarray:
        """``H - (i/2) sum_k g_k G_k^dag G_k``."""
        h, gs = self.operators(t)
        heff = h.copy()
        for g, rate in zip(gs, self.rates):
            heff -= 0.5j * rate * (dagger(g) @ g)
        return heff

    def check(self, times: Sequence[float], herm_tol: float = 1e-10) -> None:
        """Validate shapes and Hermiticity of ``H`` at the sampled times."""
        for t in times:
            h, gs = self.operators(t)
            for m in [h, *gs]:
                if m.shape != (self.dim, self.dim):
                    raise ValueError(f"operator shape {m.shape} at t={t}, expected {(self.dim, self.dim)}")
                if not np.all(np.isfinite(m)):
                    raise ValueError(f"non-finite operator entries at t={t}")
            if max_abs(h - dagger(h)) > herm_tol:
                raise ValueError(f"Hamiltonian is not Hermitian at t={t}")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of ``[t0, t_end]`` into ``steps`` intervals."""

    t0: float
    t_end: float
    steps: int

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")
        if not self.t_end > self.t0:
            raise ValueError("t_end must exceed t0")

    @classmethod
    def from_dt(cls, t0: float, t_end: float, dt: float) -> "TimeGrid":
        steps = int(round((t_end - t0) / dt))
        if steps < 1 or abs(steps * dt - (t_end - t0)) > 1e-9 * max(1.0, abs(t_end - t0)):
            raise ValueError(f"dt={dt} does not divide [{t0}, {t_end}]")
        return cls(t0, t_end, steps)

    @property
    def dt(self) -> float:
        return (self.t_end - self.t0) / self.steps

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)

    def refined(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.t0, self.t_end, self.steps * factor)


def validate_density_matrix(
    rho, herm_tol: float = 1e-10, pos_tol: float = 1e-10, trace_tol: float | None = 1e-8
) -> np.ndarray:
    """Check that ``rho`` is a density matrix and return it as a complex array.

    ``trace_tol=None`` accepts any trace in ``(0, 1]`` (non-normalised class).
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise ValueError("density matrix has non-finite entries")
    if max_abs(rho - dagger(rho)) > herm_tol:
        raise ValueError("density matrix is not Hermitian")
    pmin = np.linalg.eigvalsh(hermitian_part(rho))[0]
    if pmin < -pos_tol:
        raise ValueError(f"density matrix has negative eigenvalue {pmin:.3e}")
    tr = np.real(np.trace(rho))
    if trace_tol is None:
        if not 0 < tr <= 1 + 1e-8:
            raise ValueError(f"trace {tr} outside (0, 1]")
    elif abs(tr - 1) > trace_tol:
        raise ValueError(f"trace {tr:.12g} differs from 1")
    return rho


def liouvillian(model: LindbladModel, t: float) -> np.ndarray:
    """Superoperator ``L(t)`` with ``vec(L(rho)) = liouvillian @ vec(rho)`` (row-major vec)."""
    n = model.dim
    eye = np.eye(n, dtype=complex)
    h, gs = model.operators(t)
    sup = kron(h, eye) - kron(eye, h.T)
    for g, rate in zip(gs, model.rates):
        gg = dagger(g) @ g
        sup += -0.5j * rate * (kron(gg, eye) + kron(eye, gg.T))
        sup += 1j * rate * kron(g, np.conj(g))
    return sup


def lindblad_rhs(model: LindbladModel, rho: np.ndarray, t: float) -> np.ndarray:
    """``d(rho)/dt = -i L(rho)``, evaluated directly in matrix form."""
    h, gs = model.operators(t)
    lrho = h @ rho - rho @ h
    for g, rate in zip(gs, model.rates):
        gg = dagger(g) @ g
        lrho += -0.5j * rate * (gg @ rho + rho @ gg) + 1j * rate * (g @ rho @ dagger(g))
    return -1j * lrho


@dataclass
class LindbladTrajectory:
    """Density matrices on a time grid.

    ``failed`` is set when the trace drifts by more than ``TRACE_DRIFT_TOL``;
    the trajectory is still complete so partial results can be inspected.
    """

    times: np.ndarray
    rho: np.ndarray
    trace_drift: float
    failed: bool = False
    diagnostic: str = ""


def propagate_lindblad(model: LindbladModel, rho0, grid: TimeGrid) -> LindbladTrajectory:
    """Integrate the master equation with a left-endpoint exponential splitting.

    Each step applies ``expm(-i dt L(t_i))`` to the flattened state and then
    re-symmetrises ``rho``. The scheme is first order in ``dt`` for
    time-dependent generators and exact for constant ones.
    """
    rho0 = validate_density_matrix(rho0, trace_tol=None)
    n = model.dim
    if rho0.shape != (n, n):
        raise ValueError("rho0 dimension does not match the model")
    times = grid.times
    dt = grid.dt
    out = np.empty((grid.steps + 1, n, n), dtype=complex)
    out[0] = rho0
    tr0 = np.real(np.trace(rho0))
    vec = rho0.reshape(-1).copy()
    for i in range(grid.steps):
        vec = matrix_exp(-1j * dt * liouvillian(model, times[i])) @ vec
        rho = hermitian_part(vec.reshape(n, n))
        out[i + 1] = rho
        vec = rho.reshape(-1).copy()
    drift = float(np.max(np.abs(np.real(np.einsum("tii->t", out)) - tr0)))
    traj = LindbladTrajectory(times, out, drift)
    if drift > TRACE_DRIFT_TOL:
        traj.failed = True
        traj.diagnostic = f"trace drift {drift:.3e} exceeds {TRACE_DRIFT_TOL:.0e}"
    return traj
