"""Data-enabled predictive control over recorded trajectory data.

Each control period solves, in the trajectory-combination variable g,

    min  (y - y_ref)' Qt (y - y_ref) + u' Rt u
         + lambda_y ||Yp g - y_ini||^2 + lambda_g ||g||^2
    s.t. Up g = u_ini,   u_lo <= Uf g <= u_hi,   (optional Yf g bounds)

where u = Uf g and y = Yf g, and Qt/Rt repeat the per-step weights over the
horizon. The output-consistency slack sigma_y = Yp g - y_ini is eliminated
analytically, so the QP decision variable is g alone; lambda_y = inf turns
the slack off entirely and enforces Yp g = y_ini as a hard equality.

Works identically on the raw Hankel partition (g has one entry per data
column) and on the SVD-condensed matrix (g has r entries).
"""

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .hankel import HankelPartition
from .qp import QpSolver
from .reduction import SvdCondensed

__all__ = [
    "DeePCConfig",
    "HistoryBuffer",
    "DeePCStepResult",
    "DeePCTemplate",
    "assemble",
    "step",
    "advance",
    "DeePCController",
]


def _weight_matrix(value, dim: int, name: str) -> np.ndarray:
    """Normalize a scalar or matrix weight to a symmetric PSD (dim, dim)."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        if arr < 0:
            raise ValueError(f"{name} scalar weight must be >= 0, got {float(arr)}")
        arr = float(arr) * np.eye(dim)
    if arr.shape != (dim, dim):
        raise ValueError(f"{name} must be scalar or ({dim}, {dim}), got {arr.shape}")
    if np.max(np.abs(arr - arr.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(arr))):
        raise ValueError(f"{name} must be symmetric")
    arr = 0.5 * (arr + arr.T)
    eigs = np.linalg.eigvalsh(arr)
    if eigs[0] < -1e-10 * max(1.0, eigs[-1]):
        raise ValueError(f"{name} must be positive semidefinite")
    return arr


@dataclass(frozen=True)
class DeePCConfig:
    """Controller weights, horizons, regularization, and actuation bounds.

    Q and R may be scalars (scaled identity) or full per-step matrices.
    lambda_y = inf removes the slack and enforces output history exactly.
    """

    t_ini: int
    horizon: int
    Q: object = 1.0
    R: object = 0.0
    lambda_g: float = 0.0
    lambda_y: float = math.inf
    u_lower: object = -math.inf
    u_upper: object = math.inf
    y_lower: object = None
    y_upper: object = None
    reduction_rank: int | None = None
    tol_kkt: float = 1e-8
    tol_feas: float = 1e-8
    max_iter: int = 20000

    def __post_init__(self):
        if self.t_ini < 1:
            raise ValueError(f"t_ini must be >= 1, got {self.t_ini}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.lambda_g < 0:
            raise ValueError(f"lambda_g must be >= 0, got {self.lambda_g}")
        if self.lambda_y < 0:
            raise ValueError(f"lambda_y must be >= 0, got {self.lambda_y}")
        if self.reduction_rank is not None and self.reduction_rank < 1:
            raise ValueError(f"reduction_rank must be >= 1, got {self.reduction_rank}")

    def input_bounds(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.broadcast_to(np.asarray(self.u_lower, dtype=float), (m,)).copy()
        hi = np.broadcast_to(np.asarray(self.u_upper, dtype=float), (m,)).copy()
        if np.any(lo > hi):
            raise ValueError("u_lower must be <= u_upper elementwise")
        return lo, hi

    def output_bounds(self, p: int) -> tuple[np.ndarray, np.ndarray] | None:
        if self.y_lower is None and self.y_upper is None:
            return None
        lo = (np.full(p, -np.inf) if self.y_lower is None
              else np.broadcast_to(np.asarray(self.y_lower, dtype=float), (p,)).copy())
        hi = (np.full(p, np.inf) if self.y_upper is None
              else np.broadcast_to(np.asarray(self.y_upper, dtype=float), (p,)).copy())
        if np.any(lo > hi):
            raise ValueError("y_lower must be <= y_upper elementwise")
        return lo, hi


class HistoryBuffer:
    """Rolling window of the last t_ini applied inputs and measured outputs."""

    def __init__(self, t_ini: int, input_dim: int, output_dim: int):
        if t_ini < 1:
            raise ValueError(f"t_ini must be >= 1, got {t_ini}")
        self.t_ini = t_ini
        self.input_dim = input_dim
        self.output_dim = output_dim
        self._u: deque = deque(maxlen=t_ini)
        self._y: deque = deque(maxlen=t_ini)

    def push(self, u, y):
        u = np.asarray(u, dtype=float).reshape(self.input_dim)
        y = np.asarray(y, dtype=float).reshape(self.output_dim)
        self._u.append(u)
        self._y.append(y)

    @property
    def full(self) -> bool:
        return len(self._u) == self.t_ini

    def __len__(self) -> int:
        return len(self._u)

    def _require_full(self):
        if not self.full:
            raise ValueError(
                f"history holds {len(self._u)} of {self.t_ini} samples; "
                "push more before querying"
            )

    @property
    def u_ini(self) -> np.ndarray:
        """Stacked inputs, oldest first, length t_ini * m."""
        self._require_full()
        return np.concatenate(list(self._u))

    @property
    def y_ini(self) -> np.ndarray:
        self._require_full()
        return np.concatenate(list(self._y))


def advance(history: HistoryBuffer, applied_input, measured_output):
    """Receding-horizon bookkeeping: evict oldest sample, append newest."""
    history.push(applied_input, measured_output)


@dataclass(frozen=True)
class DeePCStepResult:
    optimal_inputs: np.ndarray      # (horizon, m)
    predicted_outputs: np.ndarray   # (horizon, p)
    decision_vector: np.ndarray     # g (or reduced g)
    sigma_y: np.ndarray             # Yp g - y_ini
    objective: float
    solver_status: str
    kkt_residual: float
    iterations: int


class DeePCTemplate:
    """Reference-independent matrices for one controller configuration.

    Immutable after construction; per-step work is limited to the linear
    cost term, the equality right-hand side, and one QP solve (whose dense
    factorizations are cached inside the bound QpSolver).
    """

    def __init__(self, config: DeePCConfig, data):
        if not isinstance(data, (HankelPartition, SvdCondensed)):
            raise TypeError(
                f"data must be HankelPartition or SvdCondensed, got {type(data).__name__}"
            )
        if data.t_ini != config.t_ini or data.horizon != config.horizon:
            raise ValueError(
                f"data windows (t_ini={data.t_ini}, horizon={data.horizon}) do not "
                f"match config (t_ini={config.t_ini}, horizon={config.horizon})"
            )
        self.config = config
        self.condensed = isinstance(data, SvdCondensed)
        if self.condensed and config.lambda_g == 0.0:
            raise ValueError(
                "lambda_g must be positive with condensed data: the reduced "
                "problem needs the regularizer for strict convexity"
            )
        self.m = data.input_dim
        self.p = data.output_dim
        self.Up = np.asarray(data.Up)
        self.Uf = np.asarray(data.Uf)
        self.Yp = np.asarray(data.Yp)
        self.Yf = np.asarray(data.Yf)
        self.n_g = self.Up.shape[1]

        N, t_ini = config.horizon, config.t_ini
        Q = _weight_matrix(config.Q, self.p, "Q")
        R = _weight_matrix(config.R, self.m, "R")
        self.Qt = np.kron(np.eye(N), Q)
        self.Rt = np.kron(np.eye(N), R)
        self.hard_history = math.isinf(config.lambda_y)

        QtYf = self.Qt @ self.Yf
        P = 2.0 * (self.Yf.T @ QtYf + self.Uf.T @ self.Rt @ self.Uf
                   + config.lambda_g * np.eye(self.n_g))
        if not self.hard_history and config.lambda_y > 0.0:
            P = P + 2.0 * config.lambda_y * (self.Yp.T @ self.Yp)
        self.P = 0.5 * (P + P.T)
        # q(y_ref, y_ini) = -ref_map @ y_ref - ini_map @ y_ini
        self._ref_map = 2.0 * QtYf.T
        self._ini_map = (np.zeros((self.n_g, self.p * t_ini)) if self.hard_history
                         else 2.0 * config.lambda_y * self.Yp.T)

        if self.hard_history:
            self.A_eq = np.vstack([self.Up, self.Yp])
        else:
            self.A_eq = self.Up

        u_lo, u_hi = config.input_bounds(self.m)
        self.u_lower = u_lo
        self.u_upper = u_hi
        rows = [self.Uf]
        lo = [np.tile(u_lo, N)]
        hi = [np.tile(u_hi, N)]
        y_bounds = config.output_bounds(self.p)
        if y_bounds is not None:
            rows.append(self.Yf)
            lo.append(np.tile(y_bounds[0], N))
            hi.append(np.tile(y_bounds[1], N))
        lo = np.concatenate(lo)
        hi = np.concatenate(hi)
        if np.all(np.isinf(lo)) and np.all(np.isinf(hi)):
            self.A_in = None
            self.box_lower = self.box_upper = None
        else:
            self.A_in = np.vstack(rows)
            self.box_lower = lo
            self.box_upper = hi

        self.solver = QpSolver(self.P, self.A_eq, self.A_in)

    def make_history(self) -> HistoryBuffer:
        return HistoryBuffer(self.config.t_ini, self.m, self.p)


def assemble(config: DeePCConfig, data) -> DeePCTemplate:
    """Precompute all reference-independent controller matrices."""
    return DeePCTemplate(config, data)


def step(template: DeePCTemplate, history: HistoryBuffer, reference_window,
         warm_start=None) -> DeePCStepResult:
    """Solve one receding-horizon problem; apply only the first input."""
    cfg = template.config
    N, m, p = cfg.horizon, template.m, template.p
    refs = np.asarray(reference_window, dtype=float).reshape(-1)
    if refs.shape != (N * p,):
        raise ValueError(
            f"reference_window must hold {N} outputs of dimension {p}, "
            f"got {np.shape(reference_window)}"
        )
    u_ini = history.u_ini
    y_ini = history.y_ini

    q = -(template._ref_map @ refs) - (template._ini_map @ y_ini)
    b_eq = np.concatenate([u_ini, y_ini]) if template.hard_history else u_ini
    sol = template.solver.solve(
        q, b_eq, template.box_lower, template.box_upper, warm_start=warm_start,
        tol_kkt=cfg.tol_kkt, tol_feas=cfg.tol_feas, max_iter=cfg.max_iter,
    )

    g = sol.z_star
    u = (template.Uf @ g).reshape(N, m)
    y = (template.Yf @ g).reshape(N, p)
    sigma_y = template.Yp @ g - y_ini

    dy = (y.reshape(-1) - refs)
    objective = float(dy @ template.Qt @ dy + u.reshape(-1) @ template.Rt @ u.reshape(-1)
                      + cfg.lambda_g * (g @ g))
    if not template.hard_history:
        objective += float(cfg.lambda_y * (sigma_y @ sigma_y))

    return DeePCStepResult(
        optimal_inputs=u, predicted_outputs=y, decision_vector=g,
        sigma_y=sigma_y, objective=objective, solver_status=sol.status,
        kkt_residual=sol.kkt_residual, iterations=sol.iterations,
    )


class DeePCController:
    """Receding-horizon loop state: template, rolling history, fallback input."""

    def __init__(self, template: DeePCTemplate):
        self.template = template
        self.history = template.make_history()
        self._last_applied = None
        self.fallback_count = 0

    def prime(self, inputs, outputs):
        """Seed the history with t_ini (input, output) pairs, oldest first."""
        inputs = np.asarray(inputs, dtype=float).reshape(-1, self.template.m)
        outputs = np.asarray(outputs, dtype=float).reshape(-1, self.template.p)
        if len(inputs) != len(outputs):
            raise ValueError("inputs and outputs must pair up")
        for u, y in zip(inputs, outputs):
            self.history.push(u, y)
        if self._last_applied is None and len(inputs):
            self._last_applied = inputs[-1].copy()

    def compute(self, reference_window) -> tuple[np.ndarray, DeePCStepResult, bool]:
        """One control period: returns (input to apply, step result, fell_back).

        On solver failure the previous applied input is reused (clamped to
        bounds); the caller logs the event. The returned input is always
        inside the actuation bounds.
        """
        result = step(self.template, self.history, reference_window)
        fell_back = result.solver_status != "optimal"
        if fell_back:
            self.fallback_count += 1
            base = (self._last_applied if self._last_applied is not None
                    else np.zeros(self.template.m))
            u0 = np.clip(base, self.template.u_lower, self.template.u_upper)
        else:
            u0 = np.clip(result.optimal_inputs[0], self.template.u_lower,
                         self.template.u_upper)
        self._last_applied = u0.copy()
        return u0, result, fell_back

    def observe(self, applied_input, measured_output):
        advance(self.history, applied_input, measured_output)
        self._last_applied = np.asarray(applied_input, dtype=float).reshape(
            self.template.m).copy()
