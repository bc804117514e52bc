"""Operator-valued dynamical and geometric phases along purified trajectories.

A W-factor trajectory is written as ``W(t) = g_E(t) g_A(t) Wt(t) k(t)`` where

* ``Wt`` is a chosen section (a reference W-factor path),
* ``k`` is a right phase generated by a right connection, ``dk/dt = -A_R k``,
* ``g_A`` solves ``dV/dt = -V (A + eta)`` with ``A = dWt Wt^+`` and
  ``eta = Wt (dk/dt) k^-1 Wt^+`` (time-anti-ordered exponential),
* ``g_E`` solves ``dU/dt = -i E(rho) U`` with the nonlinear dynamical
  generator ``E(rho) = H_eff + (i/2) g_k G_k rho G_k^dag rho^+`` (time-ordered).

Time derivatives of sections are taken by second-order finite differences on
the grid, so all generators are mutually consistent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .lindblad import LindbladModel, TimeGrid
from .matqm import (
    DEFAULT_RANK_TOL,
    antihermitian_part,
    dagger,
    hermitian_eigh,
    hermitian_part,
    matrix_exp,
    max_abs,
    numerical_rank,
    partial_trace_ancilla,
    pseudo_inverse,
    sqrtm_psd,
)
from .strata import DEFAULT_DEGENERACY_TOL, profile_from_eigenvalues

UHLMANN_REG_TOL = 1e-10
CONNECTIONS = ("uhlmann", "sjoqvist", "none")


# -- generators ---------------------------------------------------------------


def dynamical_generator(model: LindbladModel, rho: np.ndarray, t: float, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """``E(rho) = H_eff(t) + (i/2) sum_k g_k G_k rho G_k^dag rho^+``."""
    rho = np.asarray(rho, dtype=complex)
    _, gs = model.operators(t)
    rp = pseudo_inverse(rho, rank_tol)
    e = model.effective_hamiltonian(t)
    for g, rate in zip(gs, model.rates):
        e = e + 0.5j * rate * g @ rho @ dagger(g) @ rp
    return e


def left_generator_A(w: np.ndarray, w_dot: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Left geometric generator ``dW W^+``."""
    return np.asarray(w_dot, dtype=complex) @ pseudo_inverse(w, rank_tol)


def uhlmann_generator(rho: np.ndarray, rho_dot: np.ndarray, reg_tol: float = UHLMANN_REG_TOL) -> np.ndarray:
    """Hermitian solution ``A`` of ``A rho + rho A = rho_dot``.

    Solved in the eigenbasis of ``rho`` as ``A_ij = rho_dot_ij / (p_i + p_j)``;
    entries with ``p_i + p_j < reg_tol`` are set to zero, which restricts the
    solution to the range of ``rho``.

    Raises
    ------
    ValueError
        If ``rho`` has no eigenvalue above ``reg_tol``.
    """
    dec = hermitian_eigh(rho)
    p = dec.eigenvalues
    if p[-1] < reg_tol:
        raise ValueError("density matrix is numerically zero; Uhlmann generator undefined")
    u = dec.eigenvectors
    r = dagger(u) @ hermitian_part(np.asarray(rho_dot, dtype=complex)) @ u
    s = p[:, None] + p[None, :]
    a = np.where(s >= reg_tol, r / np.where(s >= reg_tol, s, 1.0), 0.0)
    return hermitian_part(u @ a @ dagger(u))


def uhlmann_right_generator(w: np.ndarray, w_dot: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Right generator ``A_R = W^+ (dW - A_Uhl W)``, projected on its anti-Hermitian part."""
    w = np.asarray(w, dtype=complex)
    w_dot = np.asarray(w_dot, dtype=complex)
    rho = w @ dagger(w)
    rho_dot = w_dot @ dagger(w) + w @ dagger(w_dot)
    a_uhl = uhlmann_generator(rho, rho_dot)
    return antihermitian_part(pseudo_inverse(w, rank_tol) @ (w_dot - a_uhl @ w))


def _eigenprojectors(m: np.ndarray, degeneracy_tol: float) -> tuple[list[np.ndarray], bool]:
    """Spectral projectors of a Hermitian matrix, eigenvalues clustered within ``degeneracy_tol``.

    The flag reports a near-crossing: two clusters closer than ``1e3 * degeneracy_tol``.
    """
    dec = hermitian_eigh(m)
    p, u = dec.eigenvalues, dec.eigenvectors
    gaps = np.diff(p)
    near = bool(np.any((gaps >= degeneracy_tol) & (gaps < 1e3 * degeneracy_tol)))
    projs, start = [], 0
    for i in range(1, len(p) + 1):
        if i == len(p) or p[i] - p[i - 1] >= degeneracy_tol:
            v = u[:, start:i]
            projs.append(v @ dagger(v))
            start = i
    return projs, near


def sjoqvist_left_generator(w: np.ndarray, w_dot: np.ndarray, degeneracy_tol: float = DEFAULT_DEGENERACY_TOL) -> np.ndarray:
    """Block-diagonal part of ``dW W^-1`` in the eigenspaces of ``rho = W W^dag``."""
    w = np.asarray(w, dtype=complex)
    a = np.asarray(w_dot, dtype=complex) @ np.linalg.inv(w)
    projs, _ = _eigenprojectors(w @ dagger(w), degeneracy_tol)
    return sum(p @ a @ p for p in projs)


def sjoqvist_right_generator(
    w: np.ndarray, w_dot: np.ndarray, degeneracy_tol: float = DEFAULT_DEGENERACY_TOL, restricted: bool = False
) -> np.ndarray:
    """Interferometric right generator of a full-rank W-factor path.

    General form ``A_BR = -sum_j P_j dW^dag (W^dag)^-1 P_j``, with ``P_j`` the
    spectral projectors of ``sigma = W^dag W``. ``restricted=True`` evaluates
    the equivalent form ``P_j W^dag dW P_j sigma^-1 - P_j dsigma sigma^-1 P_j``.
    A warning is issued when two eigenvalues of ``sigma`` nearly cross, since
    the block structure is then ambiguous.
    """
    w = np.asarray(w, dtype=complex)
    w_dot = np.asarray(w_dot, dtype=complex)
    sigma = dagger(w) @ w
    projs, near = _eigenprojectors(sigma, degeneracy_tol)
    if near:
        warnings.warn("eigenvalues of W^dag W nearly degenerate: Sjoqvist blocks ambiguous", RuntimeWarning, stacklevel=2)
    if restricted:
        sig_dot = dagger(w_dot) @ w + dagger(w) @ w_dot
        sinv = np.linalg.inv(sigma)
        return sum(p @ dagger(w) @ w_dot @ p @ sinv - p @ sig_dot @ sinv @ p for p in projs)
    m = dagger(w_dot) @ np.linalg.inv(dagger(w))
    return -sum(p @ m @ p for p in projs)


# -- ordered exponentials -------------------------------------------------------


def ordered_exponential_path(
    generators: np.ndarray, dt: float, direction: str = "left", rule: str = "left", initial: np.ndarray | None = None
) -> np.ndarray:
    """Cumulative ordered exponentials of ``-A(t)`` on a uniform grid.

    Parameters
    ----------
    generators : ndarray, shape (N+1, n, n)
        ``A(t_0), ..., A(t_N)``.
    direction : {"left", "right"}
        ``"left"``: ``U_{i+1} = expm(-dt A_i) U_i`` (solves ``dU/dt = -A U``);
        ``"right"``: ``V_{i+1} = V_i expm(-dt A_i)`` (solves ``dV/dt = -V A``).
    rule : {"left", "trapezoid"}
        Generator used on ``[t_i, t_{i+1}]``: ``A_i`` (first order) or
        ``(A_i + A_{i+1}) / 2`` (second order).
    initial : ndarray, optional
        Value at ``t_0`` (identity by default).

    Returns
    -------
    ndarray, shape (N+1, n, n)
    """
    a = np.asarray(generators, dtype=complex)
    if direction not in ("left", "right"):
        raise ValueError("direction must be 'left' or 'right'")
    if rule == "left":
        steps = a[:-1]
    elif rule == "trapezoid":
        steps = 0.5 * (a[:-1] + a[1:])
    else:
        raise ValueError("rule must be 'left' or 'trapezoid'")
    n = a.shape[-1]
    out = np.empty_like(a)
    out[0] = np.eye(n) if initial is None else initial
    for i, ai in enumerate(steps):
        e = matrix_exp(-dt * ai)
        out[i + 1] = e @ out[i] if direction == "left" else out[i] @ e
    return out


def ordered_exponential(generators: np.ndarray, dt: float, direction: str = "left", rule: str = "left") -> np.ndarray:
    """Final value of :func:`ordered_exponential_path`."""
    return ordered_exponential_path(generators, dt, direction, rule)[-1]


def _remainder(model: LindbladModel, rho: np.ndarray, t: float, h: np.ndarray, rank_tol: float, dstep: float = 1e-6):
    """``r = E(rho) - H`` and its time derivative along the flow with ``H`` held at ``h``.

    ``d rho/dt`` comes from the master equation with Hamiltonian ``h``;
    the explicit time dependence of the jump operators is differentiated by
    central differences with step ``dstep``.
    """
    _, gs = model.operators(t)
    gp = model.operators(t + dstep)[1]
    gm = model.operators(t - dstep)[1]
    rp = pseudo_inverse(rho, rank_tol)
    drho = -1j * (h @ rho - rho @ h)
    for g, rate in zip(gs, model.rates):
        gg = dagger(g) @ g
        drho += rate * (g @ rho @ dagger(g) - 0.5 * (gg @ rho + rho @ gg))
    r = np.zeros_like(rho)
    rd = np.zeros_like(rho)
    for g, a, b, rate in zip(gs, gp, gm, model.rates):
        gd = (a - b) / (2 * dstep)
        refill = g @ rho @ dagger(g)
        r += 0.5j * rate * (refill @ rp - dagger(g) @ g)
        d_refill = gd @ rho @ dagger(g) + g @ drho @ dagger(g) + g @ rho @ dagger(gd)
        rd += 0.5j * rate * (d_refill @ rp - refill @ rp @ drho @ rp - dagger(gd) @ g - dagger(g) @ gd)
    return r, rd


def dynamical_phase(model: LindbladModel, times, rho: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Time-ordered exponential ``g_E`` of ``-i E(rho(t))`` along sampled densities.

    On ``[t_i, t_{i+1}]`` the Hermitian part is held at ``H(t_i)``, as in the
    purified and Lindblad integrators. The remainder ``r = E - H`` carries
    ``rho^+`` and is strongly curved when ``rho`` is nearly singular, so it
    is integrated with the end-corrected trapezoid rule, using one-sided
    derivatives taken inside the interval, plus the commutator term of the
    fourth-order Magnus expansion.
    """
    times = np.asarray(times, dtype=float)
    rho = np.asarray(rho, dtype=complex)
    out = np.empty((len(times), model.dim, model.dim), dtype=complex)
    out[0] = np.eye(model.dim)
    for i in range(len(times) - 1):
        dt = times[i + 1] - times[i]
        h = model.operators(times[i])[0]
        r0, d0 = _remainder(model, rho[i], times[i], h, rank_tol)
        r1, d1 = _remainder(model, rho[i + 1], times[i + 1], h, rank_tol)
        m0, m1 = -1j * (h + r0), -1j * (h + r1)
        omega = -1j * dt * (h + 0.5 * (r0 + r1) + dt / 12 * (d0 - d1)) + dt**2 / 12 * (m1 @ m0 - m0 @ m1)
        out[i + 1] = matrix_exp(omega) @ out[i]
    return out


# -- sections and decomposition ---------------------------------------------------


@dataclass
class SectionTrajectory:
    """Reference W-factor path ``Wt(t)`` sampled on a uniform grid."""

    times: np.ndarray
    w_tilde: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.w_tilde = np.asarray(self.w_tilde, dtype=complex)
        if self.w_tilde.shape[0] != self.times.size:
            raise ValueError("one W-factor per time sample is required")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def derivative(self) -> np.ndarray:
        """Second-order finite-difference ``dWt/dt`` (one-sided at the ends)."""
        return np.gradient(self.w_tilde, self.dt, axis=0, edge_order=2)

    @property
    def rho(self) -> np.ndarray:
        return partial_trace_ancilla(self.w_tilde)

    def ranks(self, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
        return np.array([numerical_rank(w, rank_tol) for w in self.w_tilde])

    def is_cyclic(self, degeneracy_tol: float = DEFAULT_DEGENERACY_TOL) -> bool:
        """Whether the normalised spectra at both ends agree within ``degeneracy_tol``."""
        ends = []
        for r in (self.rho[0], self.rho[-1]):
            p = np.linalg.eigvalsh(r)
            ends.append(p / p.sum())
        return bool(np.all(np.abs(ends[0] - ends[1]) < degeneracy_tol))


def sqrt_sigma_section(times, rho: np.ndarray) -> SectionTrajectory:
    """Diagonal section ``sqrt(diag(p_1, ..., p_n))`` built from the ascending spectrum of ``rho(t)``."""
    p = np.clip(np.linalg.eigvalsh(hermitian_part(np.asarray(rho, dtype=complex))), 0.0, None)
    w = np.zeros(p.shape + (p.shape[-1],), dtype=complex)
    idx = np.arange(p.shape[-1])
    w[:, idx, idx] = np.sqrt(p)
    return SectionTrajectory(times, w, "sqrt-sigma")


def right_generators(section: SectionTrajectory, connection: str, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """``A_R(t)`` of the chosen right connection along a section (zeros for ``"none"``)."""
    w, wd = section.w_tilde, section.derivative()
    if connection == "uhlmann":
        return np.array([uhlmann_right_generator(a, b, rank_tol) for a, b in zip(w, wd)])
    if connection == "sjoqvist":
        return np.array([sjoqvist_right_generator(a, b) for a, b in zip(w, wd)])
    if connection == "none":
        return np.zeros_like(w)
    raise ValueError(f"unknown connection {connection!r}; expected one of {CONNECTIONS}")


def uhlmann_right_phase(section: SectionTrajectory, rule: str = "trapezoid", rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Right phase ``k(t)`` of the Uhlmann connection (``dk/dt = -A_R k``, ``k(0) = 1``).

    The transported factor ``Wt k`` then satisfies the parallel-transport
    condition that ``d(Wt k) (Wt k)^+`` is Hermitian.
    """
    return ordered_exponential_path(right_generators(section, "uhlmann", rank_tol), section.dt, "left", rule)


def parallel_transport_residual(times, w_par: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """``|X - X^dag|_inf / |dW|_inf`` with ``X = dW W^+`` along a sampled path."""
    dt = float(times[1] - times[0])
    wd = np.gradient(np.asarray(w_par, dtype=complex), dt, axis=0, edge_order=2)
    out = np.empty(len(w_par))
    for i, (w, d) in enumerate(zip(w_par, wd)):
        x = d @ pseudo_inverse(w, rank_tol)
        out[i] = max_abs(x - dagger(x)) / max(max_abs(d), np.finfo(float).tiny)
    return out


@dataclass
class PhaseDecomposition:
    """Phases with ``W(t) = g_E g_A Wt k`` at every sample.

    Attributes
    ----------
    g_E, g_A, k : ndarray, shape (N+1, n, n)
        Dynamical phase, left geometric phase and right geometric phase.
    eta : ndarray
        Second-kind generator ``Wt (dk/dt) k^-1 Wt^+``.
    left_generator : ndarray
        ``dWt Wt^+``.
    reconstruction_residual : ndarray
        Per-time ``|vec(g_E g_A Wt k) - Psi|``.
    eta_residual : ndarray
        Per-time ``|eta rho_t + rho_t eta^dag|_inf``.
    """

    times: np.ndarray
    g_E: np.ndarray
    g_A: np.ndarray
    k: np.ndarray
    w_tilde: np.ndarray
    eta: np.ndarray
    left_generator: np.ndarray
    connection_kind: str
    reconstruction_residual: np.ndarray
    eta_residual: np.ndarray
    reconstruction_tol: float
    failed: bool = False
    diagnostic: str = ""
    warnings: list[str] = field(default_factory=list)

    def reconstruct(self) -> np.ndarray:
        return self.g_E @ self.g_A @ self.w_tilde @ self.k


def decompose_phases(
    model: LindbladModel,
    psi_traj,
    section: SectionTrajectory,
    connection_kind: str = "uhlmann",
    k: np.ndarray | None = None,
    reconstruction_tol: float | None = None,
    rule: str = "trapezoid",
    rank_tol: float = DEFAULT_RANK_TOL,
) -> PhaseDecomposition:
    """Split a W-factor trajectory into dynamical, left and right geometric phases.

    Parameters
    ----------
    psi_traj : NlseTrajectory
        Purified trajectory (anything with ``times`` and W-factors ``w``).
    section : SectionTrajectory
        Reference path on the same grid. It must stay in the same stratum
        (same rank) as the trajectory.
    connection_kind : {"uhlmann", "sjoqvist", "none"}
        Right connection generating ``k``. Ignored when ``k`` is supplied
        (custom right phase, reported as ``"custom"``).
    reconstruction_tol : float, optional
        Default ``1e-6 * sqrt(steps)``.
    rule : {"left", "trapezoid"}
        Quadrature for ``k`` and ``g_A``. ``g_E`` is built by
        :func:`dynamical_phase`.

    Notes
    -----
    ``g_A`` starts from ``W(0) Wt(0)^+`` so that the decomposition holds at
    ``t = 0`` when the section does not pass through ``W(0)``. ``g_E`` is
    built from the measured ``rho(t) = W W^dag``.
    """
    times = np.asarray(psi_traj.times, dtype=float)
    w = np.asarray(psi_traj.w, dtype=complex)
    if section.w_tilde.shape != w.shape or not np.allclose(section.times, times):
        raise ValueError("section and trajectory must share the time grid and dimension")
    steps = len(times) - 1
    dt = float(times[1] - times[0])
    if reconstruction_tol is None:
        reconstruction_tol = 1e-6 * np.sqrt(steps)
    diag_msgs: list[str] = []

    rank_w = numerical_rank(w[0], rank_tol)
    sec_ranks = section.ranks(rank_tol)
    if np.any(sec_ranks != rank_w):
        bad = int(np.flatnonzero(sec_ranks != rank_w)[0])
        raise ValueError(
            f"stratum mismatch: section has rank {sec_ranks[bad]} at t={times[bad]:.6g}, trajectory has rank {rank_w}"
        )

    wt = section.w_tilde
    wtd = section.derivative()
    wtp = np.array([pseudo_inverse(x, rank_tol) for x in wt])
    if k is None:
        a_r = right_generators(section, connection_kind, rank_tol)
        k = ordered_exponential_path(a_r, dt, "left", rule)
        kind = connection_kind
    else:
        k = np.asarray(k, dtype=complex)
        if k.shape != w.shape:
            raise ValueError("custom right phase must have one matrix per sample")
        kind = "custom"
    kd = np.gradient(k, dt, axis=0, edge_order=2) if kind in ("custom",) else None
    if kind == "custom":
        eta = wt @ kd @ np.linalg.inv(k) @ wtp
    else:
        eta = -wt @ a_r @ wtp  # dk k^-1 = -A_R
    a_left = wtd @ wtp
    g0 = w[0] @ wtp[0]
    g_a = ordered_exponential_path(a_left + eta, dt, "right", rule, initial=g0)

    g_e = dynamical_phase(model, times, partial_trace_ancilla(w), rank_tol)

    rho_t = partial_trace_ancilla(wt)
    eta_res = np.array([max_abs(e @ r + r @ dagger(e)) for e, r in zip(eta, rho_t)])
    recon = g_e @ g_a @ wt @ k
    resid = np.sqrt(np.sum(np.abs(recon - w) ** 2, axis=(1, 2)))
    if kind == "uhlmann":
        unit = max(max_abs(x @ dagger(x) - np.eye(x.shape[0])) for x in k)
        if unit > 1e-8:
            diag_msgs.append(f"right phase departs from unitarity by {unit:.3e}")
    failed = bool(resid.max() > reconstruction_tol)
    diagnostic = ""
    if failed:
        worst = int(np.argmax(resid))
        diagnostic = f"reconstruction residual {resid[worst]:.3e} at t={times[worst]:.6g} exceeds {reconstruction_tol:.3e}"
    return PhaseDecomposition(
        times, g_e, g_a, k, wt, eta, a_left, kind, resid, eta_res, float(reconstruction_tol), failed, diagnostic, diag_msgs
    )


# -- first-order adiabatic sections ------------------------------------------------


@dataclass
class AdiabaticSections:
    """Sections from first-order perturbed eigenvectors of the linearised purified generator.

    ``strong`` is built from the followed eigenvector alone and is rank one;
    ``strong_is_pure`` records that it therefore lies in the pure-state
    stratum and cannot serve as a section for a regular trajectory.
    """

    strong: SectionTrajectory
    weak: SectionTrajectory
    strong_is_pure: bool
    stratum_mismatch: bool
    followed: int
    phi: np.ndarray
    diagnostics: list[str] = field(default_factory=list)


def _expect(psi, op):
    return np.vdot(psi, op @ psi)


def first_order_eigenvectors(
    h: np.ndarray, gammas, rates, psi0: np.ndarray, order: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """First-order perturbed eigenvectors of ``H_U = H_eff + (i/2) g_k <G_k^dag>_psi0 G_k`` (ancilla block).

    Returns ``(zeta1, zeta0, mu0)``: the corrected vectors as columns, the
    unperturbed eigenvectors of ``h`` and its eigenvalues, with columns
    permuted by ``order`` if given.
    """
    mu0, z0 = np.linalg.eigh(hermitian_part(h))
    if order is not None:
        mu0, z0 = mu0[order], z0[:, order]
    n = len(mu0)
    gg = [dagger(g) @ g for g in gammas]
    # matrix elements in the unperturbed basis
    m_gg = sum(r * dagger(z0) @ x @ z0 for r, x in zip(rates, gg)) if len(gg) else np.zeros((n, n))
    mean_dag = [_expect(psi0, dagger(g)) for g in gammas]
    m_g = [dagger(z0) @ g @ z0 for g in gammas]
    diag_gg = np.real(np.diag(m_gg)) if len(gg) else np.zeros(n)
    mu = mu0 - 0.5j * diag_gg
    zeta = z0.astype(complex).copy()
    # first-order eigenvectors of H_eff
    for b in range(n):
        for c in range(n):
            if c != b:
                den = mu0[b] - mu0[c] - 0.5j * (diag_gg[b] - diag_gg[c])
                zeta[:, b] += -0.5j * m_gg[c, b] / den * z0[:, c]
    zeta1 = zeta.copy()
    # correction from the linearised nonlinear term
    for b in range(n):
        for d in range(n):
            if d == b:
                continue
            num = sum(r * mg[d, b] * md for r, mg, md in zip(rates, m_g, mean_dag))
            shift = sum(r * (mg[b, b] - mg[d, d]) * md for r, mg, md in zip(rates, m_g, mean_dag))
            den = mu[b] - mu[d] + 0.5j * shift
            zeta1[:, b] += 0.5j * num / den * z0[:, d]
    return zeta1, z0, mu0


def linearised_block(h: np.ndarray, gammas, rates, psi0: np.ndarray) -> np.ndarray:
    """Ancilla-``alpha`` block ``H_eff + (i/2) g_k <psi0|G_k^dag|psi0> G_k`` of the frozen generator."""
    out = np.asarray(h, dtype=complex).copy()
    for g, r in zip(gammas, rates):
        out += -0.5j * r * dagger(g) @ g + 0.5j * r * _expect(psi0, dagger(g)) * g
    return out


def zero_order_states(model: LindbladModel, psi0: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Unitary flow ``i psi' = H psi`` with left-endpoint exponentials."""
    out = np.empty((grid.steps + 1, model.dim), dtype=complex)
    out[0] = psi0
    for i, t in enumerate(grid.times[:-1]):
        out[i + 1] = matrix_exp(-1j * grid.dt * model.operators(t)[0]) @ out[i]
    return out


def adiabatic_sections(
    model: LindbladModel,
    psi_ref_traj,
    grid: TimeGrid,
    alpha: int = 0,
    gap_tol: float = 1e-6,
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL,
) -> AdiabaticSections:
    """Strong and weak adiabatic sections along a reference density trajectory.

    ``psi_ref_traj`` is a purified trajectory (or a stack of density
    matrices) on ``grid``. The zero-order state starts from the dominant
    eigenvector of the initial density matrix and follows the unitary flow. The followed eigenvector of
    ``H(t)`` is the one with the largest overlap with it at ``t = 0``, tracked
    by continuity. With ``zeta1_b`` the first-order vectors and ``p(t)`` the
    smallest eigenvalue of ``rho_ref(t)``:

    * strong: ``|zeta1_f><zeta1_f|`` (rank one);
    * weak: ``(1 - p) |zeta1_f><zeta1_f| + p |zeta1_o><zeta1_o|`` (two-level models).

    Both are returned as Hermitian square roots.
    """
    rho_ref = np.asarray(getattr(psi_ref_traj, "rho", psi_ref_traj), dtype=complex)
    times = grid.times
    n = model.dim
    if rho_ref.shape != (grid.steps + 1, n, n):
        raise ValueError("reference trajectory must match the grid")
    diagnostics: list[str] = []
    vals0, vecs0 = np.linalg.eigh(rho_ref[0])
    psi_start = vecs0[:, -1]
    psi0_t = zero_order_states(model, psi_start, grid)
    p_min = np.clip(np.linalg.eigvalsh(rho_ref)[:, 0], 0.0, None)

    _, z_init = np.linalg.eigh(hermitian_part(model.operators(times[0])[0]))
    followed = int(np.argmax(np.abs(dagger(z_init) @ psi_start)))
    order = np.arange(n)
    prev = z_init
    phi = np.empty((len(times), n, n), dtype=complex)
    strong = np.empty((len(times), n, n), dtype=complex)
    weak = np.empty((len(times), n, n), dtype=complex)
    gap_flagged = False
    for i, t in enumerate(times):
        h, gs = model.operators(t)
        mu0, z0 = np.linalg.eigh(hermitian_part(h))
        if n > 1 and np.min(np.diff(mu0)) < gap_tol and not gap_flagged:
            diagnostics.append(f"eigenvalue gap below {gap_tol:g} at t={t:.6g}: perturbation expansion invalid")
            gap_flagged = True
        # keep eigenvector labels continuous
        order = np.argmax(np.abs(dagger(prev) @ z0), axis=1)
        zeta1, z0o, _ = first_order_eigenvectors(h, gs, model.rates, psi0_t[i], order)
        prev = z0o
        phi[i] = zeta1
        zf = zeta1[:, followed]
        rho_s = np.outer(zf, np.conj(zf))
        strong[i] = rho_s / np.linalg.norm(zf)  # exact square root of a rank-one projector
        rho_w = (1 - p_min[i]) * rho_s
        for b in range(n):
            if b != followed:
                zb = zeta1[:, b]
                rho_w = rho_w + p_min[i] / (n - 1) * np.outer(zb, np.conj(zb))
        weak[i] = sqrtm_psd(hermitian_part(rho_w))

    rank_ref = numerical_rank(rho_ref[0])
    strong_sec = SectionTrajectory(times, strong, "strong-adiabatic")
    weak_sec = SectionTrajectory(times, weak, "weak-adiabatic")
    strong_pure = bool(np.all(strong_sec.ranks() == 1))
    mismatch = bool(np.any(strong_sec.ranks() != rank_ref))
    if mismatch:
        diagnostics.append(
            "strong adiabatic section is a pure state: stratum differs from the reference trajectory (rank "
            f"{rank_ref}); it cannot serve as a section"
        )
    return AdiabaticSections(strong_sec, weak_sec, strong_pure, mismatch, followed, phi, diagnostics)


def phase_profile_changes(rho: np.ndarray, degeneracy_tol: float = DEFAULT_DEGENERACY_TOL) -> list[int]:
    """Indices where the degeneracy pattern of ``rho(t)`` changes (stratum transitions)."""
    p = np.linalg.eigvalsh(hermitian_part(np.asarray(rho, dtype=complex)))
    groups = [profile_from_eigenvalues(x / x.sum(), degeneracy_tol).groups for x in p]
    return [i for i in range(1, len(groups)) if groups[i] != groups[i - 1]]
