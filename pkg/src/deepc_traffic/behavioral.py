"""Finite trajectories, Hankel matrices and a state-space reference model.

Trajectories are stored sample-major: ``data[:, t]`` is the sample at time
``t`` (zero-based here, one-based in the usual textbook notation).  The
vectorized form stacks samples one after another, so a Hankel column is the
window ``col(w(j), ..., w(j+L-1))``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

# Singular values below RANK_RTOL * sigma_max count as zero.
RANK_RTOL = 1e-9


class DimensionError(ValueError):
    """Raised when array shapes or horizons are inconsistent."""


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A q-channel signal of length T, held as a read-only q x T array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=float, copy=True)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"trajectory needs shape (q, T) with q, T >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("trajectory entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.length

    def sample(self, t: int) -> np.ndarray:
        return self.data[:, t]

    def vec(self) -> np.ndarray:
        """col(w(1), ..., w(T)) as a flat vector of length q*T."""
        return self.data.T.reshape(-1).copy()

    @classmethod
    def from_vec(cls, v, channels: int) -> "Trajectory":
        v = np.asarray(v, dtype=float).reshape(-1)
        if channels < 1 or v.size % channels:
            raise DimensionError(f"cannot split {v.size} entries into {channels} channels")
        return cls(v.reshape(-1, channels).T)

    @classmethod
    def from_samples(cls, samples) -> "Trajectory":
        """Build from a (T, q) array or a sequence of sample vectors."""
        arr = np.asarray(samples, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        return cls(arr.T)

    def stack(self, other: "Trajectory") -> "Trajectory":
        """Channel-wise concatenation col(self, other)."""
        if other.length != self.length:
            raise DimensionError(f"length mismatch {self.length} vs {other.length}")
        return Trajectory(np.vstack([self.data, other.data]))

    def window(self, start: int, stop: int) -> "Trajectory":
        if not 0 <= start < stop <= self.length:
            raise DimensionError(f"window [{start}, {stop}) outside [0, {self.length})")
        return Trajectory(self.data[:, start:stop])

    def to_csv(self, path: Union[str, Path]) -> None:
        write_trajectory_csv(self, path)

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "Trajectory":
        return read_trajectory_csv(path)


def write_trajectory_csv(w: Trajectory, path: Union[str, Path]) -> None:
    """Write ``t,ch0,ch1,...`` rows using 17 significant digits (exact round trip)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"ch{c}" for c in range(w.channels)])
        for t in range(w.length):
            writer.writerow([t] + [format(x, ".17g") for x in w.data[:, t]])


def read_trajectory_csv(path: Union[str, Path]) -> Trajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t":
            raise ValueError(f"{path}: expected header starting with 't'")
        rows = [[float(x) for x in row[1:]] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no samples")
    return Trajectory.from_samples(rows)


def _as_traj(w) -> Trajectory:
    return w if isinstance(w, Trajectory) else Trajectory(w)


def hankel(w, depth: int) -> np.ndarray:
    """Hankel matrix of the given depth: block (i, j) is sample i + j.

    Args:
        w: Trajectory (or q x T array).
        depth: Number of block rows L, 1 <= L <= T.

    Returns:
        Array of shape (q*L, T-L+1).
    """
    w = _as_traj(w)
    q, T = w.channels, w.length
    if not 1 <= depth <= T:
        raise DimensionError(f"Hankel depth {depth} outside [1, {T}]")
    cols = T - depth + 1
    H = np.empty((q * depth, cols))
    for i in range(depth):
        H[i * q:(i + 1) * q, :] = w.data[:, i:i + cols]
    return H


def shift(w, tau: int) -> Trajectory:
    """Drop the first ``tau`` samples, result(t) = w(t + tau)."""
    w = _as_traj(w)
    if tau < 0 or tau >= w.length:
        raise DimensionError(f"shift {tau} invalid for length {w.length}")
    return Trajectory(w.data[:, tau:])


def numeric_rank(M: np.ndarray, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


@dataclass(frozen=True)
class PeReport:
    exciting: bool
    rank: int
    required: int


def pe_check(w, depth: int, m: int, n: int, rtol: float = RANK_RTOL) -> PeReport:
    """Generalized persistency-of-excitation test rank H_L(w) == m*L + n."""
    H = hankel(w, depth)
    r = numeric_rank(H, rtol)
    required = m * depth + n
    return PeReport(exciting=(r == required), rank=r, required=required)


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """x(t+1) = A x + B u,  y = C x + D u."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    lag: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0] if A.size else 0
        B = np.asarray(self.B, dtype=float)
        C = np.asarray(self.C, dtype=float)
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        p, m = D.shape
        A = A.reshape(n, n)
        B = B.reshape(n, m)
        C = C.reshape(p, n)
        for name, val in (("A", A), ("B", B), ("C", C), ("D", D)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        if self.lag is None and n > 0:
            try:
                object.__setattr__(self, "lag", lag_of(self))
            except ValueError:
                pass
        elif self.lag is None:
            object.__setattr__(self, "lag", 0)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.D.shape[1]

    @property
    def p(self) -> int:
        return self.D.shape[0]


def observability_matrix(sys: LtiSystem, k: int) -> np.ndarray:
    blocks = []
    M = sys.C.copy()
    for _ in range(k):
        blocks.append(M)
        M = M @ sys.A
    return np.vstack(blocks) if blocks else np.zeros((0, sys.n))


def controllability_matrix(sys: LtiSystem) -> np.ndarray:
    blocks = []
    M = sys.B.copy()
    for _ in range(max(sys.n, 1)):
        blocks.append(M)
        M = sys.A @ M
    return np.hstack(blocks)


def lag_of(sys: LtiSystem, rtol: float = RANK_RTOL) -> int:
    """Observability index: smallest k with rank [C; CA; ...; CA^(k-1)] = n."""
    n = sys.n
    if n == 0:
        return 0
    for k in range(1, n + 1):
        r = numeric_rank(observability_matrix(sys, k), rtol)
        if r == n:
            return k
    raise ValueError(f"(C, A) is not observable: observability rank {r} < order {n}")


def lti_simulate(sys: LtiSystem, x0, u) -> Trajectory:
    """Output trajectory of ``sys`` from state ``x0`` under input ``u``."""
    u = _as_traj(u)
    if u.channels != sys.m:
        raise DimensionError(f"input has {u.channels} channels, system expects {sys.m}")
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != sys.n:
        raise DimensionError(f"x0 has {x.size} entries, system order is {sys.n}")
    y = np.empty((sys.p, u.length))
    for t in range(u.length):
        ut = u.data[:, t]
        y[:, t] = sys.C @ x + sys.D @ ut
        x = sys.A @ x + sys.B @ ut
    return Trajectory(y)


def final_state(sys: LtiSystem, x0, u) -> np.ndarray:
    u = _as_traj(u)
    x = np.asarray(x0, dtype=float).reshape(-1)
    for t in range(u.length):
        x = sys.A @ x + sys.B @ u.data[:, t]
    return x


def estimate_initial_state(sys: LtiSystem, u, y) -> np.ndarray:
    """Least-squares x0 explaining output ``y`` under input ``u``."""
    u, y = _as_traj(u), _as_traj(y)
    T = u.length
    O = observability_matrix(sys, T)
    free = lti_simulate(sys, np.zeros(sys.n), u).vec()
    x0, *_ = np.linalg.lstsq(O, y.vec() - free, rcond=None)
    return x0


def random_lti(rng: np.random.Generator, n: int, m: int, p: int,
               radius: float = 0.9, max_tries: int = 100) -> LtiSystem:
    """Random stable, controllable and observable system."""
    for _ in range(max_tries):
        A = rng.standard_normal((n, n))
        if n:
            rho = max(abs(np.linalg.eigvals(A)))
            A *= rng.uniform(0.3, radius) / rho
        sys = LtiSystem(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)),
                        rng.standard_normal((p, m)))
        if n == 0:
            return sys
        if (numeric_rank(controllability_matrix(sys), 1e-8) == n
                and numeric_rank(observability_matrix(sys, n), 1e-8) == n):
            return sys
    raise RuntimeError("could not draw a minimal system")


def uniform_excitation(rng: np.random.Generator, channels: int, length: int,
                       low=-1.0, high=1.0, hold: int = 1) -> Trajectory:
    """Seeded uniform samples, each held for ``hold`` consecutive steps."""
    blocks = -(-length // hold)
    low = np.broadcast_to(np.asarray(low, dtype=float), (channels,))
    high = np.broadcast_to(np.asarray(high, dtype=float), (channels,))
    vals = rng.uniform(low[:, None], high[:, None], size=(channels, blocks))
    return Trajectory(np.repeat(vals, hold, axis=1)[:, :length])
