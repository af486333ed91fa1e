"""Closed-form gradient surfaces and toy descent dynamics on score coordinates.

This module works directly on score coordinates (no graphs, no encoder).
State for the contraction simulator is the error vector

    e = [s_neg_1..s_neg_4, 1 - s_pos_1..1 - s_pos_4]

With one pair per level, the self-weighted exponent collapses to
Z = ||e||^2 - 8 m^2 and the loss log(1 + exp(gamma Z)) has gradient
2 gamma sigma(gamma Z) e, so a descent step with rate eta multiplies every
coordinate by the same factor c_t = 1 - 2 eta gamma sigma(gamma Z_t); for
0 < eta < 1/(2 gamma) the factor lies in (0, 1) and the squared distance
contracts as D_{t+1} = c_t^2 D_t. The linear multi-level loss, in the same
coordinates, has gradient gamma sigma(gamma S) [beta; beta]: a fixed
direction, which is what the counterexample simulator demonstrates.

This module only emits arrays and CSV files; rendering lives elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

SURFACE_KINDS = ("sl", "lsw_pos", "lsw_neg")
SURFACE_COLUMNS = "s_pos,s_neg,value"


def sl_gradient_magnitude(s_pos, s_neg, m: float, gamma: float):
    """|dL/ds_pos| = |dL/ds_neg| = gamma sigma(gamma (s_neg - s_pos + m))
    for the single-pair margin softplus loss. Array-friendly."""
    s_pos = np.asarray(s_pos, dtype=np.float64)
    s_neg = np.asarray(s_neg, dtype=np.float64)
    return gamma * expit(gamma * (s_neg - s_pos + m))


def lsw_gradient_magnitudes(s_pos, s_neg, m: float, gamma: float):
    """Self-weighted single-pair gradient magnitudes (|d/ds_pos|, |d/ds_neg|).

    With Z = s_neg^2 + (1 - s_pos)^2 - 2 m^2:

        |dL/ds_pos| = 2 gamma (1 - s_pos) sigma(gamma Z)
        |dL/ds_neg| = 2 gamma s_neg       sigma(gamma Z)

    Both vanish on their own optimum edge (s_pos = 1, s_neg = 0).
    """
    s_pos = np.asarray(s_pos, dtype=np.float64)
    s_neg = np.asarray(s_neg, dtype=np.float64)
    Z = s_neg ** 2 + (1.0 - s_pos) ** 2 - 2.0 * m ** 2
    sig = expit(gamma * Z)
    return 2.0 * gamma * (1.0 - s_pos) * sig, 2.0 * gamma * s_neg * sig


def quadratic_form_residual(s_pos, s_neg, m: float):
    """|cutoff route - expanded route| for the self-weighted exponent.

    Route one evaluates the gated margin terms directly,
    [s_neg + m]_+ (s_neg - m) - [1 + m - s_pos]_+ (s_pos - (1 - m)),
    summed over the trailing level axis; route two expands the squares,
    sum(s_neg^2 + (1 - s_pos)^2) - 2 m^2 L. The two agree identically for
    scores in [0, 1], which is what the verifier checks.
    """
    s_pos = np.asarray(s_pos, dtype=np.float64)
    s_neg = np.asarray(s_neg, dtype=np.float64)
    levels = s_pos.shape[-1]
    gated = (np.maximum(s_neg + m, 0.0) * (s_neg - m)
             - np.maximum(1.0 + m - s_pos, 0.0) * (s_pos - (1.0 - m))).sum(axis=-1)
    expanded = (s_neg ** 2 + (1.0 - s_pos) ** 2).sum(axis=-1) - 2.0 * m ** 2 * levels
    return np.abs(gated - expanded)


@dataclass
class ContractionRun:
    """Trajectory of the self-weighted toy descent.

    e is (T+1, 8); d is the squared norm per step; c holds the predicted
    per-step factor 1 - 2 eta gamma sigma(gamma Z_t); ratios holds the
    observed per-coordinate factors e_{t+1}/e_t (NaN where e_t = 0).
    """

    e: np.ndarray
    d: np.ndarray
    c: np.ndarray
    ratios: np.ndarray

    @property
    def steps(self) -> int:
        return int(self.c.shape[0])


def simulate_contraction(e0, m: float, gamma: float, eta: float, steps: int,
                         stop_tol: float | None = None) -> ContractionRun:
    """Gradient descent on log(1 + exp(gamma (||e||^2 - 8 m^2))).

    The step size must satisfy 0 < eta < 1/(2 gamma). The update is applied
    literally as e - eta * grad; the analytic factor c_t is recorded
    separately so callers can compare the two. Stops early once
    ||e||^2 < stop_tol when given.
    """
    e = np.asarray(e0, dtype=np.float64).copy()
    if e.shape != (8,):
        raise ValueError("e0 must have shape (8,)")
    if not np.all(np.isfinite(e)):
        raise ValueError("e0 must be finite")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if not (0.0 < eta < 1.0 / (2.0 * gamma)):
        raise ValueError("need 0 < eta < 1/(2 gamma)")
    if steps < 0:
        raise ValueError("steps must be nonnegative")

    traj = [e.copy()]
    cs, ratios = [], []
    for _ in range(steps):
        D = float(e @ e)
        if stop_tol is not None and D < stop_tol:
            break
        Z = D - 8.0 * m ** 2
        sig = float(expit(gamma * Z))
        grad = 2.0 * gamma * sig * e
        e_next = e - eta * grad
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(e != 0.0, e_next / e, np.nan)
        cs.append(1.0 - 2.0 * eta * gamma * sig)
        ratios.append(ratio)
        e = e_next
        traj.append(e.copy())
    e_arr = np.asarray(traj)
    return ContractionRun(e=e_arr, d=(e_arr ** 2).sum(axis=1),
                          c=np.asarray(cs), ratios=np.asarray(ratios).reshape(-1, 8))


@dataclass
class LinearRun:
    """Trajectory of the linear multi-level toy descent.

    angles[t] is the angle (radians) between e_{t+1} and e_t; direction is
    the constant normalized gradient direction [beta; beta]/||.||.
    """

    e: np.ndarray
    angles: np.ndarray
    direction: np.ndarray


def linear_gradient(e, beta, m: float, gamma: float) -> np.ndarray:
    """Gradient of the linear multi-level toy loss in e-coordinates.

    S = sum_l beta_l (s_neg_l - s_pos_l + m) with s_neg_l = e_l and
    s_pos_l = 1 - e_{4+l}; the gradient is gamma sigma(gamma S) [beta; beta],
    so its direction never depends on the state.
    """
    e = np.asarray(e, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if e.shape != (8,) or beta.shape != (4,):
        raise ValueError("e must be (8,) and beta (4,)")
    S = float(np.sum(beta * (e[:4] + e[4:] - 1.0 + m)))
    return gamma * float(expit(gamma * S)) * np.concatenate([beta, beta])


def _angle(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return float("nan")
    return float(np.arccos(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0)))


def simulate_linear_dynamics(e0, beta, m: float, gamma: float, eta: float,
                             steps: int) -> LinearRun:
    """Descend the linear multi-level toy loss and record step-to-step angles."""
    e = np.asarray(e0, dtype=np.float64).copy()
    if e.shape != (8,):
        raise ValueError("e0 must have shape (8,)")
    if eta <= 0 or gamma <= 0:
        raise ValueError("eta and gamma must be positive")
    beta = np.asarray(beta, dtype=np.float64)
    direction = np.concatenate([beta, beta])
    norm = np.linalg.norm(direction)
    direction = direction / norm if norm > 0 else direction

    traj = [e.copy()]
    angles = []
    for _ in range(steps):
        e_next = e - eta * linear_gradient(e, beta, m, gamma)
        angles.append(_angle(e_next, e))
        e = e_next
        traj.append(e.copy())
    return LinearRun(e=np.asarray(traj), angles=np.asarray(angles), direction=direction)


def surface_grid(kind: str, m: float, gamma: float, resolution: int
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradient magnitude on a resolution x resolution grid over [0, 1]^2.

    Returns (s_pos axis, s_neg axis, values[i, j] = value at
    (s_pos[i], s_neg[j])).
    """
    if kind not in SURFACE_KINDS:
        raise ValueError(f"unknown surface kind {kind!r}")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    axis = np.linspace(0.0, 1.0, resolution)
    SP, SN = np.meshgrid(axis, axis, indexing="ij")
    if kind == "sl":
        val = sl_gradient_magnitude(SP, SN, m, gamma)
    else:
        mag_pos, mag_neg = lsw_gradient_magnitudes(SP, SN, m, gamma)
        val = mag_pos if kind == "lsw_pos" else mag_neg
    return axis, axis, val


def export_surface(kind: str, m: float, gamma: float, resolution: int, path) -> None:
    """Write a surface as CSV with header s_pos,s_neg,value (s_pos outer)."""
    sp_axis, sn_axis, val = surface_grid(kind, m, gamma, resolution)
    lines = [SURFACE_COLUMNS]
    for i, sp in enumerate(sp_axis):
        for j, sn in enumerate(sn_axis):
            lines.append(f"{float(sp)!r},{float(sn)!r},{float(val[i, j])!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_contraction_csv(run: ContractionRun, path) -> None:
    """Columns: step, e1..e8, d, c. Row t's c is the factor applied between
    steps t and t+1; the final row leaves it empty."""
    header = "step," + ",".join(f"e{i + 1}" for i in range(8)) + ",d,c"
    lines = [header]
    for t in range(run.e.shape[0]):
        c = repr(float(run.c[t])) if t < run.c.shape[0] else ""
        coords = ",".join(repr(float(x)) for x in run.e[t])
        lines.append(f"{t},{coords},{float(run.d[t])!r},{c}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_linear_csv(run: LinearRun, path) -> None:
    """Columns: step, e1..e8, angle_to_prev (radians; empty on step 0)."""
    header = "step," + ",".join(f"e{i + 1}" for i in range(8)) + ",angle_to_prev"
    lines = [header]
    for t in range(run.e.shape[0]):
        ang = repr(float(run.angles[t - 1])) if t > 0 else ""
        coords = ",".join(repr(float(x)) for x in run.e[t])
        lines.append(f"{t},{coords},{ang}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
