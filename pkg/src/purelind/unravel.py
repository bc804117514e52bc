"""Pure-state representations of Lindblad dynamics.

Two deterministic nonlinear equations for a single state vector ("closest
pure" dynamics, with or without the mean-value shift) and two stochastic
unravelings whose ensemble average reproduces the density matrix:

* PDP, a piecewise deterministic process: non-Hermitian drift with
  renormalisation, interrupted by jumps ``psi -> G_k psi / |G_k psi|``;
* QSD, quantum state diffusion with one real Wiener increment per channel.

Ensembles are propagated as ``(n, n_trajectories)`` batches. Each
trajectory ``j`` owns a generator seeded from ``SeedSequence(master_seed,
spawn_key=(j,))``, so a trajectory is bit-identical whatever the ensemble
size or the batching.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lindblad import LindbladModel, TimeGrid
from .matqm import dagger, matrix_exp

SCHEMES = ("pdp", "qsd", "closest-pure-shifted", "closest-pure-unshifted")
JUMP_PROBABILITY_CAP = 0.1
RNG_BLOCK = 1024
BATCH_TRAJECTORIES = 8192


@dataclass(frozen=True)
class StochasticConfig:
    n_trajectories: int
    master_seed: int = 0
    scheme: str = "pdp"

    def __post_init__(self):
        if int(self.n_trajectories) != self.n_trajectories or self.n_trajectories < 1:
            raise ValueError("n_trajectories must be a positive integer")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")


@dataclass
class TrajectoryEnsemble:
    """Recorded state vectors of an ensemble.

    Attributes
    ----------
    times : ndarray, shape (n_rec,)
        Recorded times.
    states : ndarray, shape (n_trajectories, n_rec, n)
        Normalised state vectors.
    scheme : str
    max_jump_probability : float
        Largest total per-step jump probability met (PDP only).
    """

    times: np.ndarray
    states: np.ndarray
    scheme: str
    max_jump_probability: float = 0.0

    @property
    def n_trajectories(self) -> int:
        return self.states.shape[0]


@dataclass
class PureTrajectory:
    times: np.ndarray
    psi: np.ndarray
    norm_drift: float

    @property
    def rho(self) -> np.ndarray:
        return np.einsum("ti,tj->tij", self.psi, np.conj(self.psi))


def ensemble_density(ens: TrajectoryEnsemble, t_index: int) -> np.ndarray:
    """Uniform average of ``|psi><psi|`` over the ensemble at a recorded time."""
    psi = ens.states[:, t_index, :]
    return np.einsum("ki,kj->ij", psi, np.conj(psi)) / psi.shape[0]


def ensemble_densities(ens: TrajectoryEnsemble) -> np.ndarray:
    """:func:`ensemble_density` for every recorded time, shape ``(n_rec, n, n)``."""
    return np.einsum("kti,ktj->tij", ens.states, np.conj(ens.states)) / ens.n_trajectories


def trajectory_rngs(master_seed: int, n: int, first: int = 0) -> list[np.random.Generator]:
    """Independent generators for trajectories ``first .. first+n-1``."""
    return [
        np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(j,)))
        for j in range(first, first + n)
    ]


def _record_indices(grid: TimeGrid, record: Sequence[int] | None) -> np.ndarray:
    if record is None:
        return np.arange(grid.steps + 1)
    idx = np.asarray(record, dtype=int)
    if idx.ndim != 1 or np.any(idx < 0) or np.any(idx > grid.steps) or np.any(np.diff(idx) <= 0):
        raise ValueError("record must be strictly increasing grid indices")
    return idx


def _check_psi0(psi0, n: int) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=complex).reshape(-1)
    if psi0.shape != (n,):
        raise ValueError(f"initial state must have length {n}")
    if abs(np.linalg.norm(psi0) - 1) > 1e-8:
        raise ValueError("initial state must be normalised")
    return psi0


def _normalise(psi: np.ndarray) -> np.ndarray:
    """Normalise the columns of an ``(n, N)`` batch (or a single vector)."""
    return psi / np.sqrt(np.sum(psi.real**2 + psi.imag**2, axis=0))


def _apply(m: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """``m @ psi`` for an ``(n, N)`` batch, accumulated elementwise.

    BLAS kernels round differently depending on the batch width; explicit
    accumulation keeps every column independent of ``N``.
    """
    out = m[:, :1] * psi[0]
    for j in range(1, m.shape[1]):
        out = out + m[:, j : j + 1] * psi[j]
    return out


def _expect(psi: np.ndarray, op: np.ndarray) -> np.ndarray:
    """``<psi|op|psi>`` for a vector or the columns of an ``(n, N)`` batch."""
    return np.sum(np.conj(psi) * (op @ psi), axis=0)


class _BlockDraws:
    """Per-trajectory random numbers, drawn ``block`` steps at a time.

    Each generator is consumed sequentially, so the values seen by a
    trajectory do not depend on the block size or on the batch it runs in.
    """

    def __init__(self, rngs, kind: str, width: int, steps: int):
        self.rngs, self.kind, self.width = rngs, kind, width
        per_step = max(1, len(rngs) * width)
        self.size = int(np.clip(2**21 // per_step, 8, RNG_BLOCK))
        self.remaining = steps
        self.buf = None
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.buf is None or self.pos == self.buf.shape[0]:
            b = min(self.size, self.remaining)
            if self.kind == "uniform":
                self.buf = np.stack([r.random(b) for r in self.rngs], axis=-1)  # (b, N)
            else:
                self.buf = np.stack([r.standard_normal((b, self.width)) for r in self.rngs], axis=-1)  # (b, K, N)
            self.pos = 0
        out = self.buf[self.pos]
        self.pos += 1
        self.remaining -= 1
        return out


def _run_batch(model, psi0, grid, rngs, record, step) -> tuple[np.ndarray, np.ndarray, float]:
    """Shared driver: ``step(i, psi) -> (psi, p)`` on an ``(n, N)`` batch, ``p`` a jump probability."""
    n = model.dim
    psi = np.repeat(_check_psi0(psi0, n)[:, None], len(rngs), axis=1)
    idx = _record_indices(grid, record)
    out = np.empty((len(rngs), idx.size, n), dtype=complex)
    rec = 0
    if idx[0] == 0:
        out[:, 0] = psi.T
        rec = 1
    pmax = 0.0
    for i in range(grid.steps):
        psi, p = step(i, psi)
        pmax = max(pmax, p)
        if rec < idx.size and idx[rec] == i + 1:
            out[:, rec] = psi.T
            rec += 1
    return grid.times[idx], out, pmax


def _drift(model: LindbladModel, dt: float):
    """``t -> expm(-i dt H_eff(t))``, computed once for time-independent models."""
    if model.time_independent:
        u = matrix_exp(-1j * dt * model.effective_hamiltonian(0.0))
        return lambda t: u
    return lambda t: matrix_exp(-1j * dt * model.effective_hamiltonian(t))


def _pdp_batch(model, psi0, grid, rngs, record):
    drift_at = _drift(model, grid.dt)
    draws = _BlockDraws(rngs, "uniform", 1, grid.steps)
    times, dt = grid.times, grid.dt
    rates = model.rates

    def step(i, psi):
        _, gs = model.operators(times[i])
        u = draws.next()
        new = _normalise(_apply(drift_at(times[i]), psi))
        if not gs:
            return new, 0.0
        gpsi = np.stack([_apply(g, psi) for g in gs])  # (K, n, N)
        probs = (rates[:, None] * dt) * np.sum(gpsi.real**2 + gpsi.imag**2, axis=1)
        cum = np.cumsum(probs, axis=0)
        jumped = np.flatnonzero(u < cum[-1])
        if jumped.size:
            ch = np.sum(u[jumped] >= cum[:, jumped], axis=0)
            new[:, jumped] = _normalise(gpsi[ch, :, jumped].T)
        return new, float(cum[-1].max())

    return _run_batch(model, psi0, grid, rngs, record, step)


def _qsd_batch(model, psi0, grid, rngs, record):
    drift_at = _drift(model, grid.dt)
    n_ch = len(model.jumps)
    draws = _BlockDraws(rngs, "normal", max(n_ch, 1), grid.steps)
    times, dt = grid.times, grid.dt
    sdt = np.sqrt(dt)

    def step(i, psi):
        _, gs = model.operators(times[i])
        dw = draws.next() * sdt  # (K, N)
        psi = _normalise(_apply(drift_at(times[i]), psi))
        inc = np.zeros_like(psi)
        for k, (g, rate) in enumerate(zip(gs, model.rates)):
            if rate == 0:
                continue
            gpsi = _apply(g, psi)
            x = 2.0 * np.real(np.sum(np.conj(psi) * gpsi, axis=0))  # <G + G^dag>
            inc += (0.5 * rate * dt * x + np.sqrt(rate) * dw[k]) * gpsi
            inc -= (0.125 * rate * dt * x**2 + 0.5 * np.sqrt(rate) * dw[k] * x) * psi
        return _normalise(psi + inc), 0.0

    return _run_batch(model, psi0, grid, rngs, record, step)


def _warn_jumps(pmax: float) -> None:
    if pmax > JUMP_PROBABILITY_CAP:
        warnings.warn(
            f"jump probability per step reached {pmax:.3g} > {JUMP_PROBABILITY_CAP}; reduce the time step",
            RuntimeWarning,
            stacklevel=3,
        )


def propagate_pdp(model: LindbladModel, psi0, grid: TimeGrid, config: StochasticConfig, record=None) -> TrajectoryEnsemble:
    """Piecewise deterministic unraveling with first-order jump thinning.

    Per step, a trajectory jumps through channel ``k`` with probability
    ``g_k |G_k psi|^2 dt`` (a single uniform number selects both whether and
    which channel); otherwise it drifts with ``expm(-i dt H_eff(t_i))`` and is
    renormalised. A warning is issued if the total jump probability of a step
    exceeds 0.1.

    Parameters
    ----------
    record : sequence of int, optional
        Grid indices at which states are stored (default: all).
    """
    rngs = trajectory_rngs(config.master_seed, config.n_trajectories)
    times, states, pmax = _pdp_batch(model, psi0, grid, rngs, record)
    _warn_jumps(pmax)
    return TrajectoryEnsemble(times, states, "pdp", pmax)


def propagate_qsd(model: LindbladModel, psi0, grid: TimeGrid, config: StochasticConfig, record=None) -> TrajectoryEnsemble:
    """Quantum state diffusion with real Wiener increments, one per channel.

    Each step applies ``expm(-i dt H_eff(t_i))``, then the Euler-Maruyama
    increment

        (1/2) g_k (<x_k> G_k - <x_k>^2 / 4) psi dt + sqrt(g_k) dW_k (G_k - <x_k>/2) psi,

    with ``x_k = G_k + G_k^dag``, and renormalises.
    """
    rngs = trajectory_rngs(config.master_seed, config.n_trajectories)
    times, states, _ = _qsd_batch(model, psi0, grid, rngs, record)
    return TrajectoryEnsemble(times, states, "qsd")


def propagate_ensembles(model: LindbladModel, psi0, grid: TimeGrid, configs: Sequence[StochasticConfig], record=None):
    """Run several stochastic ensembles of one scheme as a single vectorised batch.

    Results are identical to running each config on its own.
    """
    schemes = {c.scheme for c in configs}
    if len(schemes) != 1 or not schemes <= {"pdp", "qsd"}:
        raise ValueError("all configs must share one stochastic scheme (pdp or qsd)")
    scheme = schemes.pop()
    batch = _pdp_batch if scheme == "pdp" else _qsd_batch
    out: list[TrajectoryEnsemble] = []
    chunk: list[StochasticConfig] = []

    def flush():
        rngs, bounds = [], [0]
        for c in chunk:
            rngs += trajectory_rngs(c.master_seed, c.n_trajectories)
            bounds.append(len(rngs))
        times, states, pmax = batch(model, psi0, grid, rngs, record)
        if scheme == "pdp":
            _warn_jumps(pmax)
        out.extend(TrajectoryEnsemble(times, states[a:b], scheme, pmax) for a, b in zip(bounds[:-1], bounds[1:]))
        chunk.clear()

    # moderate batches keep the per-generator draw blocks long
    for c in configs:
        chunk.append(c)
        if sum(x.n_trajectories for x in chunk) >= BATCH_TRAJECTORIES:
            flush()
    if chunk:
        flush()
    return out


def closest_pure_rhs(model: LindbladModel, psi: np.ndarray, t: float, shifted: bool) -> np.ndarray:
    """Time derivative of the closest-pure equations.

    shifted:   i psi' = (H_eff - <H_eff>) psi + i g_k <G_k^dag> (G_k - <G_k>) psi
    unshifted: i psi' = H_eff psi + (i/2) g_k <G_k^dag> G_k psi
    """
    _, gs = model.operators(t)
    heff = model.effective_hamiltonian(t)
    return _closest_pure_rhs(heff, gs, model.rates, psi, shifted)


def _closest_pure_rhs(heff, gs, rates, psi, shifted):
    out = -1j * (heff @ psi)
    if shifted:
        out += 1j * _expect(psi, heff) * psi
    for g, rate in zip(gs, rates):
        gpsi = g @ psi
        mean_dag = np.vdot(psi, dagger(g) @ psi)
        if shifted:
            out += rate * mean_dag * (gpsi - np.vdot(psi, gpsi) * psi)
        else:
            out += 0.5 * rate * mean_dag * gpsi
    return out


def propagate_closest_pure(model: LindbladModel, psi0, grid: TimeGrid, shifted: bool = True) -> PureTrajectory:
    """Integrate a closest-pure equation.

    The linear part ``expm(-i s H_eff(t_i))`` (minus the scalar
    ``<H_eff(t_i)>`` in the shifted case) is applied exactly and the rest is
    integrated by RK4 in that frame. As in the purified integrator, the
    Hermitian Hamiltonian is frozen at the left endpoint while dissipative
    terms are taken at the stage times. The shifted equation conserves the
    norm and is not renormalised; the unshifted one is renormalised after
    every step.
    """
    n = model.dim
    psi = _check_psi0(psi0, n)
    times, dt = grid.times, grid.dt
    out = np.empty((grid.steps + 1, n), dtype=complex)
    out[0] = psi
    eye = np.eye(n, dtype=complex)
    for i in range(grid.steps):
        t = times[i]
        h0 = model.operators(t)[0]
        heff0 = model.effective_hamiltonian(t)
        if shifted:
            # the mean-value shift at t_i is a scalar: put it in the exact frame too
            heff0 = heff0 - _expect(psi, heff0) / np.vdot(psi, psi) * eye
        u_half = matrix_exp(-0.5j * dt * heff0)
        u_full = u_half @ u_half
        frames = {0.0: (eye, eye), 0.5: (u_half, np.linalg.inv(u_half)), 1.0: (u_full, np.linalg.inv(u_full))}

        def f(frac, v):
            u, uinv = frames[frac]
            ts = t + frac * dt
            hs, gs = model.operators(ts)
            # stage generator: frozen Hermitian part, dissipative part at ts
            heff = h0 + (model.effective_hamiltonian(ts) - hs)
            x = u @ v
            return uinv @ (_closest_pure_rhs(heff, gs, model.rates, x, shifted) + 1j * heff0 @ x)

        k1 = f(0.0, psi)
        k2 = f(0.5, psi + 0.5 * dt * k1)
        k3 = f(0.5, psi + 0.5 * dt * k2)
        k4 = f(1.0, psi + dt * k3)
        psi = u_full @ (psi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
        if not shifted:
            psi = psi / np.linalg.norm(psi)
        out[i + 1] = psi
    drift = float(np.max(np.abs(np.linalg.norm(out, axis=1) - 1)))
    return PureTrajectory(times, out, drift)


def run_unraveling(model: LindbladModel, psi0, grid: TimeGrid, config: StochasticConfig, record=None):
    """Dispatch on ``config.scheme``; deterministic schemes return a one-member ensemble."""
    if config.scheme == "pdp":
        return propagate_pdp(model, psi0, grid, config, record)
    if config.scheme == "qsd":
        return propagate_qsd(model, psi0, grid, config, record)
    traj = propagate_closest_pure(model, psi0, grid, shifted=config.scheme == "closest-pure-shifted")
    idx = _record_indices(grid, record)
    psi = traj.psi[idx] / np.linalg.norm(traj.psi[idx], axis=1, keepdims=True)
    return TrajectoryEnsemble(traj.times[idx], psi[None], config.scheme)
