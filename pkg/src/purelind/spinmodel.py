"""Two-level benchmark: a spin-1/2 in a controlled magnetic field.

The environment acts in the dressed basis (eigenbasis of H): dephasing through
``G_z = R sz R^dag`` and emission through ``G_- = R s_- R^dag`` with
``s_- = sx - i sy = [[0, 0], [2, 0]]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .lindblad import LindbladModel

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = SIGMA_X - 1j * SIGMA_Y
PAULI_BASIS = (np.eye(2, dtype=complex), SIGMA_X, SIGMA_Y, SIGMA_Z)

GAMMA_Z = 1e-3
GAMMA_MINUS = 2e-3
EPSILON = 1e-5

SCHEDULE_FILE = "benchmark_schedule.dat"


@dataclass(frozen=True)
class FieldSchedule:
    """Tabulated field strength and direction, interpolated by a cubic spline.

    The spline keeps ``H(t)`` twice differentiable, which the phase
    generators (finite differences of sections) rely on.

    Attributes
    ----------
    t, B, theta, phi : ndarray
        Table columns; ``phi`` defaults to zeros.
    mu : float
        Coupling constant.
    """

    t: np.ndarray
    B: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    mu: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.t, float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("schedule times must be strictly increasing")
        for name in ("B", "theta", "phi"):
            col = np.asarray(getattr(self, name), float)
            if col.shape != t.shape or not np.all(np.isfinite(col)):
                raise ValueError(f"schedule column {name} is malformed")
            object.__setattr__(self, name, col)
        object.__setattr__(self, "t", t)
        if np.any(self.B < 0):
            raise ValueError("field strength must be non-negative")
        cols = np.column_stack([self.B, self.theta, self.phi])
        object.__setattr__(self, "_spline", CubicSpline(t, cols) if t.size > 2 else None)

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def at(self, t: float) -> tuple[float, float, float]:
        """Interpolated ``(B, theta, phi)``; constant extrapolation outside the table."""
        tc = min(max(t, self.t[0]), self.t[-1])
        if self._spline is None:
            return tuple(float(np.interp(tc, self.t, c)) for c in (self.B, self.theta, self.phi))
        b, theta, phi = self._spline(tc)
        return float(b), float(theta), float(phi)


def rotation(theta: float, phi: float = 0.0) -> np.ndarray:
    """Eigenvector matrix ``R`` of the spin Hamiltonian."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -np.exp(-1j * phi) * s], [np.exp(1j * phi) * s, c]], dtype=complex)


def spin_hamiltonian(B: float, theta: float, phi: float = 0.0, mu: float = 1.0) -> np.ndarray:
    st = np.sin(theta)
    return -0.5 * mu * B * np.array(
        [[np.cos(theta), np.exp(-1j * phi) * st], [np.exp(1j * phi) * st, -np.cos(theta)]], dtype=complex
    )


def dressed_jumps(theta: float, phi: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Closed forms of ``R sz R^dag`` and ``R s_- R^dag``."""
    st = np.sin(theta)
    ep = np.exp(-1j * phi)
    gz = np.array([[np.cos(theta), ep * st], [np.conj(ep) * st, -np.cos(theta)]], dtype=complex)
    gm = np.array(
        [[-ep * st, -2 * ep**2 * np.sin(theta / 2) ** 2], [2 * np.cos(theta / 2) ** 2, ep * st]],
        dtype=complex,
    )
    return gz, gm


def hamiltonian(sched: FieldSchedule, t: float) -> np.ndarray:
    B, theta, phi = sched.at(t)
    return spin_hamiltonian(B, theta, phi, sched.mu)


def jump_operators(sched: FieldSchedule, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Dephasing and emission operators ``(G_z, G_-)`` at time ``t``."""
    _, theta, phi = sched.at(t)
    return dressed_jumps(theta, phi)


def load_schedule(path: str | Path, mu: float = 1.0) -> FieldSchedule:
    """Read a whitespace table with columns ``t B theta [phi]``; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"schedule file not found: {path}")
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] not in (3, 4):
        raise ValueError(f"{path}: expected 3 or 4 columns, found {data.shape[1]}")
    phi = data[:, 3] if data.shape[1] == 4 else np.zeros(len(data))
    return FieldSchedule(data[:, 0], data[:, 1], data[:, 2], phi, mu)


def paper_schedule() -> FieldSchedule:
    """The shipped benchmark schedule (``phi = 0``, ``mu = 1``)."""
    with resources.as_file(resources.files("purelind") / "data" / SCHEDULE_FILE) as p:
        return load_schedule(p, mu=1.0)


def spin_model(sched: FieldSchedule, gamma_z: float = GAMMA_Z, gamma_minus: float = GAMMA_MINUS) -> LindbladModel:
    """Lindblad model with jumps ``(G_z, G_-)`` and rates ``(gamma_z, gamma_minus)``."""
    return LindbladModel(
        2,
        lambda t: hamiltonian(sched, t),
        (lambda t: jump_operators(sched, t)[0], lambda t: jump_operators(sched, t)[1]),
        np.array([gamma_z, gamma_minus]),
    )


def benchmark_model(gamma_z: float = GAMMA_Z, gamma_minus: float = GAMMA_MINUS) -> LindbladModel:
    return spin_model(paper_schedule(), gamma_z, gamma_minus)


def initial_state(eps: float = EPSILON) -> np.ndarray:
    """Regular state close to ``diag(0, 1)``: ``[[eps, eps], [eps, 1 - eps]]``."""
    return np.array([[eps, eps], [eps, 1 - eps]], dtype=complex)


def pauli_components(m: np.ndarray) -> np.ndarray:
    """Coefficients ``c`` with ``m = sum_a c_a sigma_a`` over ``(1, sx, sy, sz)``.

    Works on stacks ``(..., 2, 2)``; coefficients are complex in general.
    """
    m = np.asarray(m, dtype=complex)
    return np.stack([0.5 * np.einsum("...ij,ji->...", m, s) for s in PAULI_BASIS], axis=-1)
