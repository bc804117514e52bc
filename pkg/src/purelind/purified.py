"""Nonlinear Schrodinger dynamics of the purified state.

For a purified state ``Psi`` with W-factor ``W`` (``rho = W W^dag``) the flow

    i dPsi/dt = (H_eff kron 1) Psi + (i/2) g_k (G_k kron G_k^adj(Psi)) Psi,
    H_eff = H - (i/2) g_k G_k^dag G_k,

reduces on the system to the Lindblad equation. ``G^adj(Psi)`` is the ancilla
operator ``conj(W^+ G W)`` built with the pseudo-inverse ``W^+``. In W-factor
form the nonlinear term reads ``(1/2) g_k G_k W (W^+ G_k W)^dag``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lindblad import LindbladModel, TimeGrid, validate_density_matrix
from .matqm import (
    DEFAULT_RANK_TOL,
    dagger,
    matrix_exp,
    numerical_rank,
    partial_trace_ancilla,
    pseudo_inverse,
    reshape_to_operator,
    reshape_to_state,
    sqrtm_psd,
)

NORM_DRIFT_TOL = 1e-6


@dataclass(frozen=True)
class NlseState:
    """Purified state at time ``t`` with its cached W-factor."""

    psi: np.ndarray
    w: np.ndarray
    t: float = 0.0

    @classmethod
    def from_w(cls, w, t: float = 0.0) -> "NlseState":
        w = np.array(w, dtype=complex)
        return cls(reshape_to_state(w), w, t)

    @classmethod
    def from_psi(cls, psi, t: float = 0.0) -> "NlseState":
        psi = np.array(psi, dtype=complex)
        return cls(psi, reshape_to_operator(psi), t)

    @property
    def rho(self) -> np.ndarray:
        return partial_trace_ancilla(self.w)


def cstar_adjoint(gamma: np.ndarray, psi: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Ancilla-side adjoint ``conj(W^+ G W)`` of a system operator ``G`` relative to ``psi``.

    It satisfies ``(1 kron adj^dag) psi = (P_Ran(W) G kron 1) psi``.
    """
    w = reshape_to_operator(psi)
    return np.conj(pseudo_inverse(w, rank_tol) @ gamma @ w)


def nonlinear_term_w(w: np.ndarray, gammas, rates, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """``(1/2) sum_k g_k G_k W (W^+ G_k W)^dag`` for a W-factor."""
    wp = pseudo_inverse(w, rank_tol)
    out = np.zeros_like(w, dtype=complex)
    for g, rate in zip(gammas, rates):
        if rate == 0:
            continue
        gw = g @ w
        out += 0.5 * rate * gw @ dagger(wp @ gw)
    return out


def nlse_rhs_w(model: LindbladModel, w: np.ndarray, t: float, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Time derivative of the W-factor."""
    w = np.asarray(w, dtype=complex)
    _, gs = model.operators(t)
    return -1j * model.effective_hamiltonian(t) @ w + nonlinear_term_w(w, gs, model.rates, rank_tol)


def nlse_rhs(model: LindbladModel, state: NlseState, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Time derivative of the purified state vector."""
    return reshape_to_state(nlse_rhs_w(model, state.w, state.t, rank_tol))


def purify_initial(rho0) -> np.ndarray:
    """Purified state ``vec(sqrt(rho0))`` (Hermitian square root)."""
    rho0 = validate_density_matrix(rho0, trace_tol=None)
    return reshape_to_state(sqrtm_psd(rho0))


@dataclass
class NlseTrajectory:
    """W-factors on a time grid.

    If the numerical rank of the W-factor changed during a step, the
    trajectory is truncated after the last completed step, ``truncated`` is
    set and ``diagnostic`` explains why.
    """

    times: np.ndarray
    w: np.ndarray
    rank: int
    truncated: bool = False
    diagnostic: str = ""
    norm_drift: float = 0.0

    @property
    def psi(self) -> np.ndarray:
        return self.w.reshape(len(self.w), -1)

    @property
    def rho(self) -> np.ndarray:
        return partial_trace_ancilla(self.w)

    @property
    def failed(self) -> bool:
        return self.truncated or self.norm_drift > NORM_DRIFT_TOL

    def state(self, i: int) -> NlseState:
        return NlseState.from_w(self.w[i], float(self.times[i]))


class RankCollapse(RuntimeError):
    pass


def _pinv_and_rank(w: np.ndarray, rank_tol: float) -> tuple[np.ndarray, int]:
    u, s, vh = np.linalg.svd(w)
    if s[0] == 0.0:
        return np.zeros_like(w), 0
    keep = s > rank_tol * s[0]
    return (dagger(vh[keep]) / s[keep]) @ dagger(u[:, keep]), int(np.count_nonzero(keep))


def _dissipator_terms(w, wp, gammas, rates):
    """Decay plus refill, ``sum_k g_k (-(1/2) G^dag G W + (1/2) G W (W^+ G W)^dag)``."""
    out = np.zeros_like(w)
    for g, rate in zip(gammas, rates):
        if rate == 0:
            continue
        gw = g @ w
        out += 0.5 * rate * (gw @ dagger(wp @ gw) - dagger(g) @ gw)
    return out


def nlse_step(
    model: LindbladModel, w: np.ndarray, t: float, dt: float, rank: int | None = None, rank_tol: float = DEFAULT_RANK_TOL
) -> np.ndarray:
    """One step of the split integrator.

    The frame ``U(s) = expm(-i s H_eff(t))`` is built from the effective
    Hamiltonian at the left endpoint. In the frame ``W = U(s) V`` the
    remainder

        dV/ds = U^-1 [D(W, t+s) + (1/2) g_k G_k(t)^dag G_k(t) W],
        D(W, t') = (1/2) g_k [G_k W (W^+ G_k W)^dag - G_k^dag G_k W] at t',

    is integrated by RK4. The Hermitian part of the Hamiltonian stays frozen
    at ``t`` (as in the Lindblad reference), while decay and refill are always
    taken at the same instant, so the step conserves the norm to RK4 accuracy.

    Raises :class:`RankCollapse` if a stage changes the numerical rank.
    """
    h0, gs0 = model.operators(t)
    ops = {0.0: gs0, 0.5: model.operators(t + 0.5 * dt)[1], 1.0: model.operators(t + dt)[1]}
    decay0 = sum(0.5 * r * dagger(g) @ g for g, r in zip(gs0, model.rates))
    heff = h0 - 1j * decay0 if len(gs0) else h0
    u_half = matrix_exp(-0.5j * dt * heff)
    u_full = u_half @ u_half
    eye = np.eye(model.dim, dtype=complex)
    frames = {0.0: (eye, eye), 0.5: (u_half, np.linalg.inv(u_half)), 1.0: (u_full, np.linalg.inv(u_full))}

    def f(frac: float, v: np.ndarray) -> np.ndarray:
        u, uinv = frames[frac]
        wst = u @ v
        wp, r = _pinv_and_rank(wst, rank_tol)
        if rank is not None and r != rank:
            raise RankCollapse(f"numerical rank changed from {rank} to {r} near t={t + frac * dt:.6g}")
        # decay0 is already inside the exact frame
        return uinv @ (_dissipator_terms(wst, wp, ops[frac], model.rates) + decay0 @ wst)

    v = w
    k1 = f(0.0, v)
    k2 = f(0.5, v + 0.5 * dt * k1)
    k3 = f(0.5, v + 0.5 * dt * k2)
    k4 = f(1.0, v + dt * k3)
    v = v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return u_full @ v


def propagate_nlse(
    model: LindbladModel, psi0, grid: TimeGrid, rank_tol: float = DEFAULT_RANK_TOL
) -> NlseTrajectory:
    """Integrate the purified nonlinear Schrodinger equation on ``grid``.

    See :func:`nlse_step` for the scheme. The frame is restarted at every
    grid point, which is algebraically the same as carrying a global
    ``U_eff(t, 0)`` but keeps the frame well conditioned.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    w = reshape_to_operator(psi0)
    n = model.dim
    if w.shape != (n, n):
        raise ValueError("purified state dimension does not match the model")
    if not np.all(np.isfinite(w)):
        raise ValueError("initial state has non-finite amplitudes")
    if abs(np.linalg.norm(psi0) - 1) > 1e-8:
        raise ValueError("initial purified state must be normalised")
    rank = numerical_rank(w, rank_tol)
    times = grid.times
    out = np.empty((grid.steps + 1, n, n), dtype=complex)
    out[0] = w
    last = grid.steps
    diagnostic = ""
    for i in range(grid.steps):
        try:
            w = nlse_step(model, w, times[i], grid.dt, rank, rank_tol)
        except RankCollapse as exc:
            last, diagnostic = i, f"trajectory truncated at t={times[i]:.6g}: {exc}"
            break
        if numerical_rank(w, rank_tol) != rank:
            last = i
            diagnostic = f"trajectory truncated at t={times[i]:.6g}: numerical rank left {rank}"
            break
        out[i + 1] = w
    out = out[: last + 1]
    norms = np.sqrt(np.real(np.einsum("tij,tij->t", out, np.conj(out))))
    drift = float(np.max(np.abs(norms - norms[0])))
    traj = NlseTrajectory(times[: last + 1], out, rank, last < grid.steps, diagnostic, drift)
    if drift > NORM_DRIFT_TOL and not traj.diagnostic:
        traj.diagnostic = f"norm drift {drift:.3e} exceeds {NORM_DRIFT_TOL:.0e}"
    return traj
