"""Fit unpublished hardware parameters to measured gain tables.

Free parameters are drawn from: signal and decoy intensities per node, a
residual vacuum intensity per node (finite modulator extinction), the mode
overlap, the per-window dark rate and the detector efficiency. Gains enter
the residual in log space, QBERs linearly. Detector efficiency and the
intensities are degenerate (only their product is visible), so the efficiency
is held fixed unless asked for explicitly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from .forward import ScenarioConfig, full_gain_table
from .model import GainTable

PARAMS = ("mu_s_a", "mu_d_a", "mu_s_b", "mu_d_b", "mu_v_a", "mu_v_b", "overlap", "dark_rate", "det_efficiency")
DEFAULT_FREE = ("mu_s_a", "mu_d_a", "mu_s_b", "mu_d_b", "overlap", "dark_rate")
QBER_SIGMA = 0.01  # QBER misfit of 1 pp weighs like a unit log-gain misfit
LOG_FLOOR = 1e-15
RATIO_CAP = 0.999  # keeps the intensity chain strictly ordered


@dataclass(frozen=True)
class Measurement:
    table: GainTable
    loss_db: float
    asymmetry_db: float = 0.0
    weight: float = 1.0


@dataclass
class FitResult:
    params: dict[str, float]
    scenario: ScenarioConfig
    residual: float  # weighted RMS over fitted cells
    covariance: np.ndarray | None  # of the free parameters, physical units
    stderr: dict[str, float]
    converged: bool
    warning: str | None = None
    nfev: int = 0
    free: tuple[str, ...] = field(default_factory=tuple)


def get_params(scenario: ScenarioConfig) -> dict[str, float]:
    a, b, d = scenario.alice, scenario.bob, scenario.detection
    return {
        "mu_s_a": a.mu[0],
        "mu_d_a": a.mu[1],
        "mu_v_a": a.mu[2],
        "mu_s_b": b.mu[0],
        "mu_d_b": b.mu[1],
        "mu_v_b": b.mu[2],
        "overlap": d.visibility,
        "dark_rate": d.dark_rate,
        "det_efficiency": d.det_efficiency,
    }


def set_params(scenario: ScenarioConfig, p: dict[str, float]) -> ScenarioConfig:
    full = get_params(scenario)
    full.update(p)
    alice = scenario.alice.with_mu((full["mu_s_a"], full["mu_d_a"], full["mu_v_a"]))
    bob = scenario.bob.with_mu((full["mu_s_b"], full["mu_d_b"], full["mu_v_b"]))
    det = replace(
        scenario.detection,
        visibility=full["overlap"],
        dark_rate=full["dark_rate"],
        det_efficiency=full["det_efficiency"],
    )
    return replace(scenario, alice=alice, bob=bob, detection=det)


# unconstrained coordinates: intensities are log-scaled and chained so that
# signal > decoy > vacuum always holds
def _encode(p: dict[str, float], free) -> np.ndarray:
    out = []
    for name in free:
        v = p[name]
        if name in ("mu_s_a", "mu_s_b"):
            out.append(math.log(v))
        elif name in ("mu_d_a", "mu_d_b"):
            out.append(_logit(v / p["mu_s_" + name[-1]] / RATIO_CAP))
        elif name in ("mu_v_a", "mu_v_b"):
            out.append(_logit(max(v, 1e-12) / p["mu_d_" + name[-1]] / RATIO_CAP))
        elif name == "dark_rate":
            out.append(math.log(max(v, 1e-3)))
        else:
            out.append(_logit(v))
    return np.array(out)


def _decode(x, free, base: dict[str, float]) -> dict[str, float]:
    p = dict(base)
    vals = dict(zip(free, x))
    for node in "ab":
        if f"mu_s_{node}" in vals:
            p[f"mu_s_{node}"] = math.exp(vals[f"mu_s_{node}"])
        if f"mu_d_{node}" in vals:
            p[f"mu_d_{node}"] = p[f"mu_s_{node}"] * RATIO_CAP * _expit(vals[f"mu_d_{node}"])
        if f"mu_v_{node}" in vals:
            p[f"mu_v_{node}"] = p[f"mu_d_{node}"] * RATIO_CAP * _expit(vals[f"mu_v_{node}"])
    if "dark_rate" in vals:
        p["dark_rate"] = math.exp(vals["dark_rate"])
    for name in ("overlap", "det_efficiency"):
        if name in vals:
            p[name] = _expit(vals[name])
    return p


def _decode_jacobian(x, free, base, step: float = 1e-7) -> np.ndarray:
    """``d params / d x`` by central differences."""
    D = np.empty((len(free), len(free)))
    for j in range(len(free)):
        hi, lo = np.array(x, float), np.array(x, float)
        hi[j] += step
        lo[j] -= step
        ph, pl = _decode(hi, free, base), _decode(lo, free, base)
        D[:, j] = [(ph[k] - pl[k]) / (2 * step) for k in free]
    return D


def _logit(v: float) -> float:
    v = min(max(v, 1e-12), 1 - 1e-12)
    return math.log(v / (1 - v))


def _expit(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def residuals(scenario: ScenarioConfig, data, qber_sigma: float = QBER_SIGMA) -> np.ndarray:
    """Stacked residual vector of ``scenario`` against each measurement."""
    res = []
    for m in data:
        model = full_gain_table(scenario.with_loss(m.loss_db, m.asymmetry_db))
        w = math.sqrt(m.weight)
        obs_q, mod_q = m.table.Q, model.Q
        mask = obs_q > 0
        res.append(w * (np.log(np.maximum(mod_q[mask], LOG_FLOOR)) - np.log(obs_q[mask])))
        # QBER cells fixed by convention carry no information
        emask = mask & (m.table.E != 0.5)
        res.append(w * (model.E[emask] - m.table.E[emask]) / qber_sigma)
    return np.concatenate(res)


def fit(
    start: ScenarioConfig,
    data,
    free=DEFAULT_FREE,
    *,
    loss: str = "soft_l1",
    max_nfev: int = 400,
    qber_sigma: float = QBER_SIGMA,
) -> FitResult:
    """Weighted least-squares fit from a fixed starting scenario.

    The optimiser is deterministic (finite-difference trust region), so a
    fixed start and data set always give the same result.
    """
    data = list(data)
    if len(data) < 2:
        raise ValueError("fit needs measured tables at >= 2 loss points")
    free = tuple(free)
    unknown = [f for f in free if f not in PARAMS]
    if unknown:
        raise ValueError(f"unknown fit parameters {unknown}")
    base = get_params(start)
    if "mu_v_a" in free and base["mu_v_a"] <= 0:
        base["mu_v_a"] = 1e-3 * base["mu_d_a"]
    if "mu_v_b" in free and base["mu_v_b"] <= 0:
        base["mu_v_b"] = 1e-3 * base["mu_d_b"]
    x0 = _encode(base, free)

    def fun(x):
        return residuals(set_params(start, _decode(x, free, base)), data, qber_sigma)

    sol = least_squares(fun, x0, loss=loss, f_scale=0.1, max_nfev=max_nfev, x_scale="jac", diff_step=1e-6)
    params = _decode(sol.x, free, base)
    scenario = set_params(start, params)
    r = fun(sol.x)
    rms = float(np.sqrt(np.mean(r**2)))
    cov = None
    stderr: dict[str, float] = {}
    try:
        J = sol.jac
        dof = max(len(r) - len(free), 1)
        cov_x = np.linalg.pinv(J.T @ J) * (r @ r) / dof
        # delta method: covariance in physical units from the coordinate map
        D = _decode_jacobian(sol.x, free, base)
        cov = D @ cov_x @ D.T
        stderr = {name: float(math.sqrt(max(cov[i, i], 0.0))) for i, name in enumerate(free)}
    except np.linalg.LinAlgError:  # pragma: no cover - defensive
        pass
    converged = sol.status > 0
    msg = None
    if not converged:
        msg = f"fit stopped after {sol.nfev} evaluations without converging: {sol.message}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return FitResult(params, scenario, rms, cov, stderr, converged, msg, int(sol.nfev), free)
