"""Regenerate ``src/purelind/data/benchmark_schedule.dat``.

The control curves are smooth approximations of the benchmark field profile:
B rises from B_MIN to B0, theta is swept from 0 to pi while B is strong, then B
falls back to B_MIN. phi stays zero. The table is what the library reads; this
script only documents how it was produced.
"""

from pathlib import Path

import numpy as np

T_END = 630.0
SPACING = 0.25
B_MIN, B0 = 0.02, 0.25
B_RISE = (0.0, 40.0)
B_FALL = (450.0, 490.0)
THETA_RAMP = (40.0, 440.0)


def smoothstep(t, a, b):
    """Quintic ramp from 0 to 1 on [a, b], twice continuously differentiable."""
    s = np.clip((t - a) / (b - a), 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def curves(t):
    b = B_MIN + (B0 - B_MIN) * (smoothstep(t, *B_RISE) - smoothstep(t, *B_FALL))
    theta = np.pi * smoothstep(t, *THETA_RAMP)
    return b, theta


def main():
    t = np.linspace(0.0, T_END, int(round(T_END / SPACING)) + 1)
    b, theta = curves(t)
    out = Path(__file__).resolve().parents[1] / "src" / "purelind" / "data" / "benchmark_schedule.dat"
    header = (
        "purelind field schedule v2\n"
        "columns: t (a.u.)  B (a.u.)  theta (rad); phi = 0, mu = 1\n"
        f"B: {B_MIN} -> {B0} quintic rise on {B_RISE}, quintic fall back on {B_FALL}\n"
        f"theta: 0 -> pi quintic ramp on {THETA_RAMP}\n"
        "values between rows are interpolated by a cubic spline"
    )
    np.savetxt(out, np.column_stack([t, b, theta]), fmt="%.17g", header=header)


if __name__ == "__main__":
    main()
