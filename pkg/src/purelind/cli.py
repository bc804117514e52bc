"""Command-line front end: ``purelind run`` and ``purelind validate``.

Configuration is a YAML file (keys documented in the README); command-line
flags override file values. Exit codes: 0 success, 2 invalid configuration,
3 numerical failure (partial outputs are kept).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .geomphase import CONNECTIONS, adiabatic_sections, decompose_phases, sqrt_sigma_section
from .lindblad import LindbladModel, TimeGrid, propagate_lindblad, validate_density_matrix
from .matqm import dagger, max_abs
from .purified import propagate_nlse, purify_initial
from .spinmodel import (
    EPSILON,
    GAMMA_MINUS,
    GAMMA_Z,
    FieldSchedule,
    initial_state,
    load_schedule,
    paper_schedule,
    pauli_components,
    spin_model,
)
from .unravel import JUMP_PROBABILITY_CAP, SCHEMES, StochasticConfig, TrajectoryEnsemble, ensemble_densities, run_unraveling

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
BENCHMARKS = ("paper-two-level",)
ALL_SCHEMES = ("lindblad", "nlse") + SCHEMES
SECTIONS = ("sqrt-sigma", "weak-adiabatic")
STOCHASTIC = ("pdp", "qsd")
BENCHMARK_GRID = {"t0": 0.0, "t_end": 630.0, "steps": 2800}
FMT = "%.17g"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything a run needs; built from YAML plus flag overrides."""

    benchmark: str | None = "paper-two-level"
    gamma_z: float = GAMMA_Z
    gamma_minus: float = GAMMA_MINUS
    epsilon: float = EPSILON
    schedule: str | None = None
    hamiltonian: list | None = None
    jumps: list = field(default_factory=list)
    rates: list = field(default_factory=list)
    rho0: list | None = None
    psi0: list | None = None
    t0: float = 0.0
    t_end: float | None = None
    steps: int | None = None
    dt: float | None = None
    schemes: list = field(default_factory=lambda: ["lindblad", "nlse"])
    trajectories: int = 100
    seed: int = 0
    record_every: int | None = None
    connection: str | None = None
    section: str = "sqrt-sigma"
    output: str = "purelind-out"
    plots: bool = True


# -- configuration ---------------------------------------------------------------


def _num(x, name: str) -> float:
    try:
        return float(x)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {x!r}") from None


def _matrix(x, name: str) -> np.ndarray:
    try:
        m = np.array([[complex(str(v).replace(" ", "")) for v in row] for row in x], dtype=complex)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a matrix of numbers") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"{name}: expected a square matrix, got shape {m.shape}")
    return m


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """Read a YAML config (optional) and apply non-``None`` overrides."""
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        raw = yaml.safe_load(p.read_text()) or {}
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
    known = {"model", "grid", "schemes", "stochastic", "phases", "output", "plots"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig()
    model = raw.get("model", {}) or {}
    inline = "hamiltonian" in model
    cfg.benchmark = None if inline else model.get("benchmark", cfg.benchmark)
    for key in ("gamma_z", "gamma_minus", "epsilon"):
        if key in model:
            setattr(cfg, key, _num(model[key], f"model.{key}"))
    for key in ("schedule", "hamiltonian", "jumps", "rates", "rho0", "psi0"):
        if key in model:
            setattr(cfg, key, model[key])
    grid = raw.get("grid", {}) or {}
    for key in ("t0", "t_end", "dt"):
        if key in grid:
            setattr(cfg, key, _num(grid[key], f"grid.{key}"))
    if "steps" in grid:
        cfg.steps = int(_num(grid["steps"], "grid.steps"))
    if "schemes" in raw:
        cfg.schemes = list(raw["schemes"])
    st = raw.get("stochastic", {}) or {}
    if "trajectories" in st:
        cfg.trajectories = int(_num(st["trajectories"], "stochastic.trajectories"))
    if "seed" in st:
        cfg.seed = int(_num(st["seed"], "stochastic.seed"))
    if "record_every" in st:
        cfg.record_every = int(_num(st["record_every"], "stochastic.record_every"))
    ph = raw.get("phases", {}) or {}
    cfg.connection = ph.get("connection", cfg.connection)
    cfg.section = ph.get("section", cfg.section)
    cfg.output = raw.get("output", cfg.output)
    cfg.plots = bool(raw.get("plots", cfg.plots))
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if overrides.get("benchmark") is not None:
        cfg.hamiltonian = None
    return cfg


@dataclass
class Prepared:
    model: LindbladModel
    grid: TimeGrid
    rho0: np.ndarray
    schedule: FieldSchedule | None


def _grid(cfg: RunConfig) -> TimeGrid:
    t_end = cfg.t_end if cfg.t_end is not None else (BENCHMARK_GRID["t_end"] if cfg.benchmark else None)
    if t_end is None:
        raise ConfigError("grid.t_end is required for inline models")
    if cfg.dt is not None and cfg.steps is not None:
        raise ConfigError("give either grid.steps or grid.dt, not both")
    try:
        if cfg.dt is not None:
            return TimeGrid.from_dt(cfg.t0, t_end, cfg.dt)
        steps = cfg.steps if cfg.steps is not None else (BENCHMARK_GRID["steps"] if cfg.benchmark else None)
        if steps is None:
            raise ConfigError("grid.steps or grid.dt is required for inline models")
        return TimeGrid(cfg.t0, t_end, steps)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None


def prepare(cfg: RunConfig) -> Prepared:
    """Build model, grid and initial state; raises :class:`ConfigError` on invalid input."""
    schedule = None
    if cfg.hamiltonian is not None:
        h = _matrix(cfg.hamiltonian, "model.hamiltonian")
        if max_abs(h - dagger(h)) > 1e-10:
            raise ConfigError("model.hamiltonian is not Hermitian")
        jumps = [_matrix(j, f"model.jumps[{i}]") for i, j in enumerate(cfg.jumps)]
        if any(j.shape != h.shape for j in jumps):
            raise ConfigError("jump operators must match the Hamiltonian dimension")
        rates = [_num(r, "model.rates") for r in cfg.rates]
        try:
            model = LindbladModel.constant(h, jumps, rates)
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None
        n = h.shape[0]
        if cfg.rho0 is not None:
            rho0 = _matrix(cfg.rho0, "model.rho0")
        elif cfg.psi0 is not None:
            psi = np.array([complex(str(v).replace(" ", "")) for v in cfg.psi0])
            psi = psi / np.linalg.norm(psi)
            rho0 = np.outer(psi, psi.conj())
        else:
            raise ConfigError("inline models need model.rho0 or model.psi0")
        if rho0.shape != (n, n):
            raise ConfigError("initial state dimension does not match the Hamiltonian")
    else:
        if cfg.benchmark not in BENCHMARKS:
            raise ConfigError(f"unknown benchmark {cfg.benchmark!r}; known: {BENCHMARKS}")
        try:
            schedule = load_schedule(cfg.schedule) if cfg.schedule else paper_schedule()
        except FileNotFoundError as exc:
            raise ConfigError(str(exc)) from None
        except ValueError as exc:
            raise ConfigError(f"schedule: {exc}") from None
        if not 0 < cfg.epsilon < 0.5:
            raise ConfigError("model.epsilon must lie in (0, 0.5)")
        try:
            model = spin_model(schedule, cfg.gamma_z, cfg.gamma_minus)
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None
        rho0 = initial_state(cfg.epsilon)
    try:
        rho0 = validate_density_matrix(rho0)
    except ValueError as exc:
        raise ConfigError(f"initial state: {exc}") from None
    grid = _grid(cfg)
    try:
        model.check(grid.times[:: max(1, grid.steps // 200)])
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None
    unknown = [s for s in cfg.schemes if s not in ALL_SCHEMES]
    if unknown or not cfg.schemes:
        raise ConfigError(f"unknown or missing schemes {unknown}; known: {ALL_SCHEMES}")
    if cfg.trajectories < 1:
        raise ConfigError("stochastic.trajectories must be positive")
    if cfg.record_every is not None and cfg.record_every < 1:
        raise ConfigError("stochastic.record_every must be positive")
    if cfg.connection is not None and cfg.connection not in CONNECTIONS:
        raise ConfigError(f"unknown connection {cfg.connection!r}; known: {CONNECTIONS}")
    if cfg.section not in SECTIONS:
        raise ConfigError(f"unknown section {cfg.section!r}; known: {SECTIONS}")
    return Prepared(model, grid, rho0, schedule)


def jump_probability_bound(model: LindbladModel, grid: TimeGrid) -> float:
    """Upper bound ``max_t sum_k g_k |G_k|_2^2 dt`` of the per-step jump probability."""
    worst = 0.0
    for t in grid.times[:: max(1, grid.steps // 200)]:
        _, gs = model.operators(t)
        worst = max(worst, sum(r * np.linalg.norm(g, 2) ** 2 for g, r in zip(gs, model.rates)) * grid.dt)
    return float(worst)


def validate(cfg: RunConfig) -> dict:
    """Dry-run check: ``{"errors": [...], "warnings": [...], "derived": {...}}``."""
    report: dict = {"errors": [], "warnings": [], "derived": {}}
    try:
        prep = prepare(cfg)
    except ConfigError as exc:
        report["errors"].append(str(exc))
        return report
    pbound = jump_probability_bound(prep.model, prep.grid)
    report["derived"] = {
        "dim": prep.model.dim,
        "t0": prep.grid.t0,
        "t_end": prep.grid.t_end,
        "steps": prep.grid.steps,
        "dt": prep.grid.dt,
        "jump_probability_bound": pbound,
        "initial_rank": int(np.linalg.matrix_rank(prep.rho0, tol=1e-10)),
    }
    if any(s in STOCHASTIC for s in cfg.schemes) and pbound > JUMP_PROBABILITY_CAP:
        report["warnings"].append(
            f"per-step jump probability may reach {pbound:.3g} > {JUMP_PROBABILITY_CAP}; reduce dt"
        )
    if cfg.connection is not None and report["derived"]["initial_rank"] < prep.model.dim:
        report["warnings"].append("initial state is not full rank: phase decomposition needs a regular stratum")
    return report


# -- output helpers ----------------------------------------------------------------


def _entry_columns(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i + 1}{j + 1}_{part}" for i in range(n) for j in range(n) for part in ("re", "im")]


def _entries(m: np.ndarray) -> np.ndarray:
    flat = m.reshape(len(m), -1)
    return np.stack([flat.real, flat.imag], axis=-1).reshape(len(m), -1)


def write_csv(path: Path, columns: list[str], data: np.ndarray) -> None:
    """CSV with a header row; numbers written with 17 significant digits."""
    np.savetxt(path, data, fmt=FMT, delimiter=",", header=",".join(columns), comments="")


def _operator_columns(name: str, n: int) -> list[str]:
    if n == 2:
        return [f"{name}_{a}_{part}" for a in ("s0", "sx", "sy", "sz") for part in ("re", "im")]
    return _entry_columns(f"{name}_", n)


def _operator_data(m: np.ndarray) -> np.ndarray:
    if m.shape[-1] == 2:
        c = pauli_components(m)
        return np.stack([c.real, c.imag], axis=-1).reshape(len(m), -1)
    return _entries(m)


def _mixture_ensembles(model, rho0, grid, cfg: RunConfig, scheme: str, record):
    """Unravel a possibly mixed initial state as an eigenvector mixture of ensembles."""
    p, v = np.linalg.eigh(rho0)
    parts = []
    for j in np.flatnonzero(p > 1e-14):
        seed = int(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(2**31 + int(j),)).generate_state(1)[0])
        conf = StochasticConfig(cfg.trajectories if scheme in STOCHASTIC else 1, seed, scheme)
        parts.append((float(p[j]), run_unraveling(model, v[:, j], grid, conf, record)))
    return parts


def _mixture_density(parts) -> np.ndarray:
    return sum(w * ensemble_densities(ens) for w, ens in parts)


# -- plotting ------------------------------------------------------------------------


def _plots(out: Path, results: dict, n: int) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []

    def save(fig, name):
        fig.tight_layout()
        fig.savefig(out / name, dpi=110)
        plt.close(fig)
        written.append(name)

    sched = results.get("schedule")
    if sched is not None:
        t, b, th = sched
        fig, ax = plt.subplots(1, 2, figsize=(9, 3.2))
        ax[0].plot(t, b)
        ax[0].set(xlabel="t (a.u.)", ylabel="B (a.u.)")
        ax[1].plot(t, th)
        ax[1].set(xlabel="t (a.u.)", ylabel="theta (rad)")
        save(fig, "schedule.png")

    lind = results.get("lindblad")
    nlse = results.get("nlse")
    if lind is not None or nlse is not None:
        fig, ax = plt.subplots(1, 2, figsize=(10, 3.6))
        if lind is not None:
            t, rho = lind
            for i in range(n):
                ax[0].plot(t, rho[:, i, i].real, label=f"rho{i + 1}{i + 1}")
            if n > 1:
                ax[0].plot(t, np.abs(rho[:, 0, 1]), label="|rho12|")
            ax[0].set(xlabel="t (a.u.)", title="density matrix")
            ax[0].legend(fontsize=7)
        if nlse is not None:
            t, w = nlse
            occ = np.abs(w.reshape(len(w), -1)) ** 2
            for c in range(occ.shape[1]):
                ax[1].plot(t, occ[:, c], label=f"|{c // n + 1}{c % n + 1}>>")
            ax[1].set(xlabel="t (a.u.)", title="purified state occupations")
            ax[1].legend(fontsize=7)
        save(fig, "populations.png")

    gap = results.get("gap")
    if gap is not None:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.semilogy(gap[0], np.maximum(gap[1], 1e-18))
        ax.set(xlabel="t (a.u.)", ylabel="|rho - pi_A(Psi)|_inf")
        save(fig, "gap.png")

    for scheme, (t, rho) in results.get("unravel", {}).items():
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for i in range(n):
            ax.plot(t, rho[:, i, i].real, label=f"rho{i + 1}{i + 1}")
        if lind is not None:
            for i in range(n):
                ax.plot(lind[0], lind[1][:, i, i].real, "k:", lw=0.8)
        ax.set(xlabel="t (a.u.)", title=scheme)
        ax.legend(fontsize=7)
        save(fig, f"{scheme}.png")

    ph = results.get("phases")
    if ph is not None:
        t, dec, sections = ph
        fig, ax = plt.subplots(2, 1, figsize=(6, 5.5), sharex=True)
        for a, (m, title) in zip(ax, [(dec.k, "right geometric phase k"), (dec.g_A, "left geometric phase g_A")]):
            comps = pauli_components(m) if n == 2 else m.reshape(len(m), -1)
            labels = ("s0", "sx", "sy", "sz") if n == 2 else [f"{i}" for i in range(comps.shape[1])]
            for c, lab in enumerate(labels):
                a.plot(t, comps[:, c].real, label=f"Re {lab}")
                a.plot(t, comps[:, c].imag, "--", label=f"Im {lab}")
            a.set(title=title)
            a.legend(fontsize=6, ncol=4)
        ax[-1].set(xlabel="t (a.u.)")
        save(fig, "phases.png")

        fig, ax = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
        for a, (m, title) in zip(ax, [(dec.w_tilde @ dec.k, "Psi(Wt k)"), (dec.g_A @ dec.w_tilde, "Psi(g_A Wt)")]):
            occ = np.abs(m.reshape(len(m), -1)) ** 2
            for c in range(occ.shape[1]):
                a.plot(t, occ[:, c], label=f"|{c // n + 1}{c % n + 1}>>")
            a.set(title=title)
            a.legend(fontsize=7)
        ax[-1].set(xlabel="t (a.u.)")
        save(fig, "phase_occupations.png")

        if sections and n == 2:
            fig, ax = plt.subplots(1, len(sections), figsize=(4 * len(sections), 3.2), squeeze=False)
            for a, (name, rho) in zip(ax[0], sections.items()):
                a.plot(t, rho[:, 0, 0].real, label="rho11")
                a.plot(t, rho[:, 1, 1].real, label="rho22")
                a.plot(t, np.abs(rho[:, 0, 1]), label="|rho12|")
                a.set(title=name, xlabel="t (a.u.)")
                a.legend(fontsize=7)
            save(fig, "sections.png")

            fig = plt.figure(figsize=(5, 5))
            a3 = fig.add_subplot(projection="3d")
            u = np.linspace(0, 2 * np.pi, 40)
            a3.plot(np.cos(u), np.sin(u), 0 * u, color="0.8", lw=0.6)
            a3.plot(np.cos(u), 0 * u, np.sin(u), color="0.8", lw=0.6)
            curves = dict(sections)
            if lind is not None:
                curves = {"rho": lind[1], **curves}
            for name, rho in curves.items():
                tr = np.real(np.trace(rho, axis1=1, axis2=2))[:, None]
                c = pauli_components(rho / tr[:, :, None]).real * 2
                a3.plot(c[:, 1], c[:, 2], c[:, 3], label=name)
            a3.legend(fontsize=7)
            save(fig, "bloch.png")
    return written


# -- run ----------------------------------------------------------------------------


def run(cfg: RunConfig) -> int:
    """Execute a configured run; returns the exit status."""
    try:
        prep = prepare(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    model, grid, rho0 = prep.model, prep.grid, prep.rho0
    n = model.dim
    times = grid.times
    summary: dict = {
        "version": __version__,
        "config": asdict(cfg),
        "grid": {"t0": grid.t0, "t_end": grid.t_end, "steps": grid.steps, "dt": grid.dt},
        "schemes": {},
        "diagnostics": [],
        "files": [],
    }
    failed = False
    plot_data: dict = {}
    rho_cols = _entry_columns("rho", n)

    if prep.schedule is not None:
        b = np.array([prep.schedule.at(t)[0] for t in times])
        th = np.array([prep.schedule.at(t)[1] for t in times])
        plot_data["schedule"] = (times, b, th)

    lind = None
    if "lindblad" in cfg.schemes:
        lind = propagate_lindblad(model, rho0, grid)
        write_csv(out / "lindblad.csv", ["t"] + rho_cols, np.column_stack([lind.times, _entries(lind.rho)]))
        summary["files"].append("lindblad.csv")
        summary["schemes"]["lindblad"] = {
            "trace_drift": lind.trace_drift,
            "failed": lind.failed,
            "diagnostic": lind.diagnostic,
            "final_rho": _entries(lind.rho[-1:])[0].tolist(),
        }
        failed |= lind.failed
        plot_data["lindblad"] = (lind.times, lind.rho)

    nlse = None
    if "nlse" in cfg.schemes or cfg.connection is not None:
        nlse = propagate_nlse(model, purify_initial(rho0), grid)
        nrho = nlse.rho
        occ = np.abs(nlse.psi) ** 2
        occ_cols = [f"P{i + 1}{j + 1}" for i in range(n) for j in range(n)]
        cols = ["t"] + rho_cols + occ_cols
        data = [nlse.times, _entries(nrho), occ]
        if lind is not None:
            gap = np.abs(lind.rho[: len(nrho)] - nrho).reshape(len(nrho), -1).max(axis=1)
            write_csv(out / "gap.csv", ["t", "gap_inf"], np.column_stack([nlse.times, gap]))
            summary["files"].append("gap.csv")
            plot_data["gap"] = (nlse.times, gap)
        if "nlse" in cfg.schemes:
            write_csv(out / "nlse.csv", cols, np.column_stack(data))
            summary["files"].append("nlse.csv")
        summary["schemes"]["nlse"] = {
            "norm_drift": nlse.norm_drift,
            "rank": nlse.rank,
            "truncated": nlse.truncated,
            "failed": nlse.failed,
            "diagnostic": nlse.diagnostic,
            "final_rho": _entries(nrho[-1:])[0].tolist(),
        }
        if lind is not None:
            summary["schemes"]["nlse"]["max_gap_lindblad"] = float(gap.max())
        failed |= nlse.failed
        plot_data["nlse"] = (nlse.times, nlse.w)

    record_every = cfg.record_every or max(1, grid.steps // 1000)
    record = np.arange(0, grid.steps + 1, record_every)
    if record[-1] != grid.steps:
        record = np.append(record, grid.steps)
    plot_data["unravel"] = {}
    for scheme in (s for s in cfg.schemes if s in SCHEMES):
        parts = _mixture_ensembles(model, rho0, grid, cfg, scheme, record)
        rho_e = _mixture_density(parts)
        t_rec = times[record]
        cols = ["t"] + rho_cols
        data = [t_rec, _entries(rho_e)]
        info = {"n_trajectories": sum(e.n_trajectories for _, e in parts), "mixture_weights": [w for w, _ in parts]}
        if scheme in STOCHASTIC:
            info["max_jump_probability"] = max(float(e.max_jump_probability) for _, e in parts)
        if lind is not None:
            g = np.abs(lind.rho[record] - rho_e).reshape(len(record), -1).max(axis=1)
            cols.append("gap_lindblad")
            data.append(g)
            info["max_gap_lindblad"] = float(g.max())
        name = f"{scheme}.csv"
        write_csv(out / name, cols, np.column_stack(data))
        summary["files"].append(name)
        summary["schemes"][scheme] = info
        plot_data["unravel"][scheme] = (t_rec, rho_e)

    if cfg.connection is not None and nlse is not None:
        if nlse.truncated:
            summary["diagnostics"].append("phase analysis skipped: purified trajectory was truncated")
            failed = True
        else:
            sections = {}
            if cfg.section == "sqrt-sigma":
                sec = sqrt_sigma_section(nlse.times, nlse.rho)
                sections["sigma"] = sec.rho
            else:
                ads = adiabatic_sections(model, nlse, grid)
                summary["diagnostics"].extend(ads.diagnostics)
                sec = ads.weak
                sections.update({"sigma": sqrt_sigma_section(nlse.times, nlse.rho).rho, "strong": ads.strong.rho, "weak": ads.weak.rho})
            try:
                dec = decompose_phases(model, nlse, sec, cfg.connection)
            except ValueError as exc:
                summary["diagnostics"].append(f"phase analysis failed: {exc}")
                failed = True
                dec = None
            if dec is not None:
                cols = ["t"]
                data = [dec.times]
                for name, m in (("gE", dec.g_E), ("gA", dec.g_A), ("k", dec.k), ("eta", dec.eta)):
                    cols += _operator_columns(name, n)
                    data.append(_operator_data(m))
                cols += ["reconstruction_residual", "eta_residual"]
                data += [dec.reconstruction_residual, dec.eta_residual]
                name = f"phases_{cfg.section}_{cfg.connection}.csv"
                write_csv(out / name, cols, np.column_stack(data))
                summary["files"].append(name)
                summary["phases"] = {
                    "section": cfg.section,
                    "connection": dec.connection_kind,
                    "max_reconstruction_residual": float(dec.reconstruction_residual.max()),
                    "reconstruction_tol": dec.reconstruction_tol,
                    "max_eta_residual": float(dec.eta_residual.max()),
                    "failed": dec.failed,
                    "diagnostic": dec.diagnostic,
                    "warnings": dec.warnings,
                }
                failed |= dec.failed
                plot_data["phases"] = (dec.times, dec, sections)

    if cfg.plots:
        try:
            summary["files"] += _plots(out, plot_data, n)
        except Exception as exc:  # plotting must never hide computed results
            summary["diagnostics"].append(f"plotting failed: {exc}")
    for scheme, info in summary["schemes"].items():
        if info.get("diagnostic"):
            summary["diagnostics"].append(f"{scheme}: {info['diagnostic']}")
    summary["status"] = "numerical-failure" if failed else "ok"
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float) + "\n")
    if failed:
        for d in summary["diagnostics"]:
            print(d, file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="purelind", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run the configured representations"), ("validate", "check a configuration")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--benchmark", choices=BENCHMARKS)
        p.add_argument("--schedule", help="field schedule table (benchmark only)")
        p.add_argument("--schemes", help=f"comma-separated subset of {','.join(ALL_SCHEMES)}")
        p.add_argument("--t0", type=float)
        p.add_argument("--t-end", type=float)
        p.add_argument("--steps", type=int)
        p.add_argument("--dt", type=float)
        p.add_argument("--trajectories", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--record-every", type=int)
        p.add_argument("--phases", choices=CONNECTIONS, help="right connection for the phase decomposition")
        p.add_argument("--section", choices=SECTIONS)
        p.add_argument("--out", help="output directory")
        p.add_argument("--no-plots", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    overrides = {
        "benchmark": args.benchmark,
        "schedule": args.schedule,
        "schemes": args.schemes.split(",") if args.schemes else None,
        "t0": args.t0,
        "t_end": args.t_end,
        "steps": args.steps,
        "dt": args.dt,
        "trajectories": args.trajectories,
        "seed": args.seed,
        "record_every": args.record_every,
        "connection": args.phases,
        "section": args.section,
        "output": args.out,
        "plots": False if args.no_plots else None,
    }
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        report = validate(cfg)
        print(json.dumps(report, indent=2))
        return EXIT_CONFIG if report["errors"] else EXIT_OK
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
