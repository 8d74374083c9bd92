"""Three-intensity decoy-state bounds and the asymptotic key rate.

The observed gain of each intensity pair is a Poisson mixture of the
photon-number-pair yields ``Y_nm``. Lower-bounding ``Y_11`` (and upper-bounding
its erroneous part ``B_11 = e_11 Y_11``) is a linear program over the
truncated yield matrix; every cell constraint is widened by the Poisson mass
beyond the cutoff so the bound stays valid.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import lp
from .model import Basis, GainTable, Intensity, binary_entropy, poisson_pn

N_CUT = 10
TAIL_EPS = 1e-10
RESIDUAL_TOL = 1e-9
F_EC = 1.12


class Objective(Enum):
    MIN_Y11 = "min_Y11"
    MAX_B11 = "max_B11"


class InfeasibleError(ValueError):
    """Gain data admit no yield matrix; ``cells`` names the offending constraints."""

    def __init__(self, message: str, cells: list[str]):
        super().__init__(message)
        self.cells = cells


@dataclass(frozen=True)
class YieldModel:
    """Truncated yield matrix ``Y[n, m]`` with the Poisson mass left outside it."""

    Y: np.ndarray
    tail_mass: float

    def __post_init__(self):
        Y = np.array(self.Y, dtype=float)
        if Y.ndim != 2 or Y.shape[0] != Y.shape[1]:
            raise ValueError("Y must be a square matrix")
        if np.any(Y < 0) or np.any(Y > 1):
            raise ValueError("yields must lie in [0, 1]")
        if self.tail_mass >= TAIL_EPS:
            raise ValueError(f"tail mass {self.tail_mass:.3g} exceeds {TAIL_EPS}")
        object.__setattr__(self, "Y", Y)

    @property
    def cutoff(self) -> int:
        return self.Y.shape[0] - 1


@dataclass(frozen=True)
class DecoyResult:
    s11_Z_lower: float
    e11_X_upper: float
    R: float
    R_clamped: float
    degenerate: bool = False
    Y11_Z_lower: float = 0.0
    Y11_X_lower: float = 0.0
    B11_X_upper: float = 0.0

    def __post_init__(self):
        if self.s11_Z_lower < 0:
            raise ValueError("s11 lower bound must be non-negative")
        if not 0.0 <= self.e11_X_upper <= 0.5:
            raise ValueError("e11 upper bound must be in [0, 0.5]")


def check_order(mu) -> tuple[float, float, float]:
    """Validate ``(signal, decoy, vacuum)`` with signal > decoy > vacuum >= 0."""
    s, d, v = (float(x) for x in mu)
    if not (s > d > v >= 0):
        raise ValueError(f"intensities must satisfy signal > decoy > vacuum >= 0, got {(s, d, v)}")
    return s, d, v


def poisson_tail(mu: float, cutoff: int) -> float:
    """``P(n > cutoff)`` for a Poisson variable of mean ``mu``."""
    head = sum(poisson_pn(mu, n) for n in range(cutoff + 1))
    return max(0.0, 1.0 - head)


def choose_cutoff(mu_max: float, default: int = N_CUT) -> int:
    """Smallest cutoff >= ``default`` whose two-sided tail is below the limit."""
    n = default
    while 2 * poisson_tail(mu_max, n) >= TAIL_EPS:
        n += 1
    return n


def _weights(mu_a, mu_b, cutoff: int):
    """``W[i, j, n, m] = P_{mu_a[i]}(n) P_{mu_b[j]}(m)`` and per-cell tail mass."""
    pa = np.array([[poisson_pn(mu, n) for n in range(cutoff + 1)] for mu in mu_a])
    pb = np.array([[poisson_pn(mu, n) for n in range(cutoff + 1)] for mu in mu_b])
    W = pa[:, None, :, None] * pb[None, :, None, :]
    tail = 1.0 - pa.sum(axis=1)[:, None] * pb.sum(axis=1)[None, :]
    return W, np.maximum(tail, 0.0)


def _cell_names():
    return [f"{Intensity(i).label}{Intensity(j).label}" for i in range(3) for j in range(3)]


def yield_bounds(
    gains: GainTable,
    mu_a,
    mu_b,
    basis: Basis,
    objective: Objective | str,
    *,
    cutoff: int | None = None,
    row_order=None,
    exclude=(),
) -> float:
    """Optimal ``Y11`` lower bound or ``B11`` upper bound for one basis.

    ``row_order`` permutes the nine cell constraints (testing aid only).
    ``exclude`` lists ``(intensity_a, intensity_b)`` cells to leave out,
    e.g. suspect measurements; dropping constraints keeps the bound valid.
    """
    objective = Objective(objective)
    mu_a = check_order(mu_a)
    mu_b = check_order(mu_b)
    N = choose_cutoff(max(mu_a[0], mu_b[0])) if cutoff is None else cutoff
    W, tail = _weights(mu_a, mu_b, N)
    k = (N + 1) ** 2
    idx11 = (N + 1) + 1
    Q = gains.Q[int(basis)]
    E = gains.E[int(basis)]
    order = list(range(9)) if row_order is None else list(row_order)
    names = _cell_names()

    rows = W.reshape(9, k)[order]
    q = Q.reshape(9)[order]
    t = tail.reshape(9)[order]
    eq = (E.reshape(9) * Q.reshape(9))[order]
    cell_labels = [names[i] for i in order]

    dropped = {3 * int(a) + int(b) for a, b in exclude}
    used = np.array([i not in dropped for i in order])
    rows, q, t, eq = rows[used], q[used], t[used], eq[used]
    cell_labels = [lbl for lbl, u in zip(cell_labels, used) if u]
    # A cell observed at exactly zero only says sum(W * Y) <= tail, a row
    # that is numerically tiny; it is replaced by the implied per-variable
    # caps Y_nm <= tail / W_nm (a relaxation, so bounds stay valid).
    y_hi = _zero_cell_caps(rows, q, t)
    keep = q > 0
    # rows are scaled by 1/Q so the residual tolerance is relative
    scale = 1.0 / np.maximum(q[keep], t[keep])
    lo_y = (q[keep] - t[keep]) * scale
    hi_y = (q[keep] + t[keep]) * scale
    Ay = rows[keep] * scale[:, None]
    y_labels = [lbl for lbl, kp in zip(cell_labels, keep) if kp]

    if objective is Objective.MIN_Y11:
        c = np.zeros(k)
        c[idx11] = 1.0
        A, row_lo, row_hi = Ay, lo_y, hi_y
        col_lo, col_hi = np.zeros(k), y_hi
        labels = y_labels
    else:
        b_hi = np.minimum(y_hi, _zero_cell_caps(rows, eq, t))
        bkeep = eq > 0
        bscale = 1.0 / np.maximum(eq[bkeep], t[bkeep])
        Ab = rows[bkeep] * bscale[:, None]
        ny, nb = Ay.shape[0], Ab.shape[0]
        A = np.vstack(
            [
                np.hstack([Ay, np.zeros((ny, k))]),
                np.hstack([np.zeros((nb, k)), Ab]),
                np.hstack([-np.eye(k), np.eye(k)]),
            ]
        )
        row_lo = np.concatenate([lo_y, (eq[bkeep] - t[bkeep]) * bscale, np.full(k, -np.inf)])
        row_hi = np.concatenate([hi_y, (eq[bkeep] + t[bkeep]) * bscale, np.zeros(k)])
        c = np.zeros(2 * k)
        c[k + idx11] = -1.0
        col_lo, col_hi = np.zeros(2 * k), np.concatenate([y_hi, b_hi])
        labels = [f"Q_{lbl}" for lbl in y_labels]
        labels += [f"EQ_{lbl}" for lbl, kp in zip(cell_labels, bkeep) if kp]
        labels += [f"B<=Y[{n},{m}]" for n in range(N + 1) for m in range(N + 1)]

    try:
        res = lp.solve(c, A, row_lo, row_hi, col_lo, col_hi)
    except lp.Infeasible as exc:
        cells = [labels[r] for r in exc.rows]
        raise InfeasibleError(
            f"{basis.name}-basis gains are inconsistent with any yield matrix; violated: {', '.join(cells)}",
            cells,
        ) from exc
    if res.max_row_residual > RESIDUAL_TOL:
        raise lp.LPError(f"constraint residual {res.max_row_residual:.3g} above {RESIDUAL_TOL}")
    value = res.x[idx11] if objective is Objective.MIN_Y11 else res.x[k + idx11]
    return float(min(max(value, 0.0), 1.0))


def _zero_cell_caps(rows: np.ndarray, values: np.ndarray, tail: np.ndarray) -> np.ndarray:
    """Per-variable upper bounds implied by cells whose observed value is zero."""
    caps = np.ones(rows.shape[1])
    for row, v, t in zip(rows, values, tail):
        if v > 0:
            continue
        with np.errstate(divide="ignore"):
            caps = np.minimum(caps, np.where(row > 0, t / np.where(row > 0, row, 1.0), 1.0))
    return caps


def s11_from_yield(Y11_lower: float, mu_s_a: float, mu_s_b: float) -> float:
    """Single-photon-pair gain of the signal-signal cell."""
    if Y11_lower < 0 or mu_s_a < 0 or mu_s_b < 0:
        raise ValueError("inputs must be non-negative")
    return poisson_pn(mu_s_a, 1) * poisson_pn(mu_s_b, 1) * Y11_lower


def secret_key_rate(s11_Z: float, e11_X: float, Q_ss_Z: float, E_ss_Z: float, f: float = F_EC) -> tuple[float, float]:
    """Asymptotic key bits per pulse pair, raw and clamped at zero."""
    for name, p in (("s11_Z", s11_Z), ("e11_X", e11_X), ("Q_ss_Z", Q_ss_Z), ("E_ss_Z", E_ss_Z)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must be a probability, got {p}")
    if f < 1:
        raise ValueError("error-correction inefficiency f must be >= 1")
    R = s11_Z * (1.0 - binary_entropy(e11_X)) - Q_ss_Z * f * binary_entropy(E_ss_Z)
    return R, max(R, 0.0)


def analyze(
    gains: GainTable, alice_mu, bob_mu, f: float = F_EC, *, cutoff: int | None = None, exclude=()
) -> DecoyResult:
    """Decoy bounds for both bases and the resulting key rate.

    ``exclude`` holds ``(basis, intensity_a, intensity_b)`` cells left out
    of the bounding programs.
    """
    alice_mu = check_order(alice_mu)
    bob_mu = check_order(bob_mu)
    skip = {b: [(a, c) for (bb, a, c) in exclude if Basis(bb) is b] for b in Basis}
    kw = dict(cutoff=cutoff)
    y11_z = yield_bounds(gains, alice_mu, bob_mu, Basis.Z, Objective.MIN_Y11, exclude=skip[Basis.Z], **kw)
    y11_x = yield_bounds(gains, alice_mu, bob_mu, Basis.X, Objective.MIN_Y11, exclude=skip[Basis.X], **kw)
    b11_x = yield_bounds(gains, alice_mu, bob_mu, Basis.X, Objective.MAX_B11, exclude=skip[Basis.X], **kw)
    degenerate = y11_x <= 0.0
    e11 = 0.5 if degenerate else min(b11_x / y11_x, 0.5)
    s11 = s11_from_yield(y11_z, alice_mu[0], bob_mu[0])
    q_ss = float(gains.Q[Basis.Z, Intensity.SIGNAL, Intensity.SIGNAL])
    e_ss = float(gains.E[Basis.Z, Intensity.SIGNAL, Intensity.SIGNAL])
    R, Rc = secret_key_rate(s11, e11, q_ss, e_ss, f)
    if degenerate:
        Rc = 0.0
    return DecoyResult(s11, e11, R, Rc, degenerate, y11_z, y11_x, b11_x)


__all__ = [
    "N_CUT",
    "F_EC",
    "Objective",
    "InfeasibleError",
    "YieldModel",
    "DecoyResult",
    "check_order",
    "poisson_tail",
    "choose_cutoff",
    "yield_bounds",
    "s11_from_yield",
    "secret_key_rate",
    "analyze",
]
