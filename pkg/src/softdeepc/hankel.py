"""Trajectory data containers and block-Hankel machinery.

Input/output records are stored as (T, dim) arrays, one row per sample.
Hankel columns stack L consecutive samples time-major: all channels of
sample i sit in rows [i*d, (i+1)*d) of the column.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TrajectoryDataset",
    "BlockHankel",
    "HankelPartition",
    "build_hankel",
    "numerical_rank",
    "is_persistently_exciting",
    "partition_past_future",
    "representability_residual",
]


def _as_signal(signal) -> np.ndarray:
    """Coerce a sample sequence to a float (T, d) array."""
    arr = np.asarray(signal, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"signal must be 1-D or 2-D (T, d), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"signal must contain at least one sample, got shape {arr.shape}")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TrajectoryDataset:
    """Paired input/output sample sequences from one experiment.

    inputs:  (T, m) array, one actuation vector per sample.
    outputs: (T, p) array, one measurement vector per sample.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    sample_period: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "inputs", _freeze(_as_signal(self.inputs)))
        object.__setattr__(self, "outputs", _freeze(_as_signal(self.outputs)))
        if len(self.inputs) != len(self.outputs):
            raise ValueError(
                f"inputs ({len(self.inputs)} samples) and outputs "
                f"({len(self.outputs)} samples) must have identical length"
            )
        if self.sample_period <= 0:
            raise ValueError(f"sample_period must be positive, got {self.sample_period}")

    @property
    def length(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.outputs.shape[1]


@dataclass(frozen=True)
class BlockHankel:
    """Block Hankel matrix of a vector signal.

    matrix has shape (signal_dim * depth, T - depth + 1); block (i, j)
    equals signal sample i + j.
    """

    matrix: np.ndarray
    signal_dim: int
    depth: int

    def __post_init__(self):
        object.__setattr__(self, "matrix", _freeze(np.asarray(self.matrix, dtype=float)))
        rows, cols = self.matrix.shape
        if rows != self.signal_dim * self.depth:
            raise ValueError(
                f"matrix has {rows} rows, expected signal_dim*depth = "
                f"{self.signal_dim * self.depth}"
            )
        if cols < 1:
            raise ValueError("Hankel matrix must have at least one column")

    @property
    def columns(self) -> int:
        return self.matrix.shape[1]

    def block_rows(self, start: int, stop: int) -> np.ndarray:
        """Rows for block-row indices [start, stop)."""
        return self.matrix[start * self.signal_dim : stop * self.signal_dim]


def build_hankel(signal, depth: int) -> BlockHankel:
    """Arrange a (T, d) signal into its depth-L block Hankel matrix.

    Column j stacks samples j .. j+L-1; time-major row ordering.
    """
    arr = _as_signal(signal)
    T, d = arr.shape
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if depth > T:
        raise ValueError(f"depth {depth} exceeds signal length {T}")
    cols = T - depth + 1
    # windows: (cols, depth, d); column j is arr[j:j+depth] raveled time-major
    windows = np.lib.stride_tricks.sliding_window_view(arr, depth, axis=0)
    matrix = windows.transpose(0, 2, 1).reshape(cols, depth * d).T
    return BlockHankel(matrix=matrix, signal_dim=d, depth=depth)


def numerical_rank(matrix: np.ndarray) -> int:
    """Rank by singular values, tolerance max(shape) * sigma_max * eps."""
    s = np.linalg.svd(matrix, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    tol = max(matrix.shape) * s[0] * np.finfo(float).eps
    return int(np.count_nonzero(s > tol))


def is_persistently_exciting(inputs, order: int) -> tuple[bool, int]:
    """Check persistency of excitation of a given order.

    Returns (flag, rank) where flag is True iff the order-L Hankel matrix
    of the input has full row rank m*L (rank computed numerically).
    """
    hankel = build_hankel(inputs, order)
    rank = numerical_rank(hankel.matrix)
    return rank == hankel.signal_dim * order, rank


@dataclass(frozen=True)
class HankelPartition:
    """Past/future split of the input and output Hankel matrices.

    Up/Yp hold the first t_ini block rows, Uf/Yf the last `horizon` block
    rows, of the depth-(t_ini + horizon) Hankel matrices. All blocks share
    the column count K = T - L + 1.
    """

    Up: np.ndarray
    Uf: np.ndarray
    Yp: np.ndarray
    Yf: np.ndarray
    input_dim: int
    output_dim: int
    t_ini: int
    horizon: int

    def __post_init__(self):
        for name in ("Up", "Uf", "Yp", "Yf"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name), dtype=float)))
        m, p = self.input_dim, self.output_dim
        expected = {
            "Up": m * self.t_ini,
            "Uf": m * self.horizon,
            "Yp": p * self.t_ini,
            "Yf": p * self.horizon,
        }
        cols = self.Up.shape[1]
        for name, rows in expected.items():
            block = getattr(self, name)
            if block.shape != (rows, cols):
                raise ValueError(
                    f"{name} has shape {block.shape}, expected ({rows}, {cols})"
                )

    @property
    def depth(self) -> int:
        return self.t_ini + self.horizon

    @property
    def columns(self) -> int:
        return self.Up.shape[1]

    def stacked(self) -> np.ndarray:
        """The joint data matrix [Up; Uf; Yp; Yf]."""
        return np.vstack([self.Up, self.Uf, self.Yp, self.Yf])


def partition_past_future(Hu: BlockHankel, Hy: BlockHankel, t_ini: int, horizon: int) -> HankelPartition:
    """Split input/output Hankels into past (t_ini) and future (horizon) blocks."""
    if t_ini < 1:
        raise ValueError(f"t_ini must be >= 1, got {t_ini}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    L = t_ini + horizon
    if Hu.depth != L or Hy.depth != L:
        raise ValueError(
            f"Hankel depths ({Hu.depth}, {Hy.depth}) must both equal t_ini + horizon = {L}"
        )
    if Hu.columns != Hy.columns:
        raise ValueError(
            f"input Hankel has {Hu.columns} columns but output Hankel has {Hy.columns}"
        )
    return HankelPartition(
        Up=Hu.block_rows(0, t_ini),
        Uf=Hu.block_rows(t_ini, L),
        Yp=Hy.block_rows(0, t_ini),
        Yf=Hy.block_rows(t_ini, L),
        input_dim=Hu.signal_dim,
        output_dim=Hy.signal_dim,
        t_ini=t_ini,
        horizon=horizon,
    )


def representability_residual(Hu: BlockHankel, Hy: BlockHankel, traj_u, traj_y) -> float:
    """Distance of a length-L trajectory from the span of the Hankel columns.

    Solves min_g || [Hu; Hy] g - [traj_u; traj_y] ||_2 by minimum-norm least
    squares; a residual near zero certifies the trajectory is representable
    as a linear combination of recorded behavior.
    """
    u = _as_signal(traj_u)
    y = _as_signal(traj_y)
    if Hu.columns != Hy.columns:
        raise ValueError(
            f"input Hankel has {Hu.columns} columns but output Hankel has {Hy.columns}"
        )
    if u.shape != (Hu.depth, Hu.signal_dim):
        raise ValueError(
            f"input trajectory has shape {u.shape}, expected ({Hu.depth}, {Hu.signal_dim})"
        )
    if y.shape != (Hy.depth, Hy.signal_dim):
        raise ValueError(
            f"output trajectory has shape {y.shape}, expected ({Hy.depth}, {Hy.signal_dim})"
        )
    stack = np.vstack([Hu.matrix, Hy.matrix])
    target = np.concatenate([u.ravel(), y.ravel()])
    g, *_ = np.linalg.lstsq(stack, target, rcond=None)
    return float(np.linalg.norm(stack @ g - target))
