"""Data-enabled predictive control over Hankel-matrix columns.

The optimization variables are the column weights ``g``, the future
controllable inputs and the future outputs; the data-model equalities tie
them together.  Exogenous input channels (traffic demand) are not decision
variables: their future values are pinned to a forecast, so they appear only
on the right-hand side of the equality rows.

Input ordering: each input sample is ``(controllable..., exogenous...)``; the
first ``n_controlled`` channels are decision variables.
"""
from __future__ import annotations

import csv
import enum
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .behavioral import DimensionError, Trajectory, hankel
from .qpsolve import AdmmSolver, QpProblem, QpSolution, Status, TOL_D, TOL_P

SOFT_OUTPUT_WEIGHT = 1e4
RANK_RTOL = 1e-9


class ConfigError(ValueError):
    pass


class DeepcInfeasible(RuntimeError):
    """The stacked data-model equalities cannot be met within the constraints."""

    def __init__(self, message: str, residual: float, solution: Optional[QpSolution] = None):
        super().__init__(f"{message} (stacked residual {residual:.3e})")
        self.residual = residual
        self.solution = solution


class Regularizer(enum.Enum):
    SQUARED_TWO_NORM = "squared_two_norm"
    ONE_NORM = "one_norm"


@dataclass(frozen=True)
class DeepcData:
    Up: np.ndarray
    Yp: np.ndarray
    Uf: np.ndarray
    Yf: np.ndarray
    m: int
    p: int
    t_ini: int
    t_f: int

    @property
    def n_cols(self) -> int:
        return self.Up.shape[1]

    def stacked(self) -> np.ndarray:
        return np.vstack([self.Up, self.Yp, self.Uf, self.Yf])


def build_deepc_data(u_d: Trajectory, y_d: Trajectory, t_ini: int, t_f: int) -> DeepcData:
    """Split depth-(t_ini + t_f) Hankel matrices into past and future block rows."""
    if u_d.length != y_d.length:
        raise DimensionError(f"input length {u_d.length} != output length {y_d.length}")
    if t_ini < 1 or t_f < 1:
        raise DimensionError("t_ini and t_f must be positive")
    L = t_ini + t_f
    if L > u_d.length:
        raise DimensionError(f"horizon {L} exceeds data length {u_d.length}")
    m, p = u_d.channels, y_d.channels
    Hu = hankel(u_d, L)
    Hy = hankel(y_d, L)
    return DeepcData(Up=Hu[:m * t_ini], Yp=Hy[:p * t_ini], Uf=Hu[m * t_ini:],
                     Yf=Hy[p * t_ini:], m=m, p=p, t_ini=t_ini, t_f=t_f)


def _vec(x, size: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(x, dtype=float), (size,)).copy()
    return arr


@dataclass
class DeepcConfig:
    """Horizons, weights and bounds for one controller.

    ``R`` may be given for the controllable channels only or for all m
    channels; in the latter case only its controllable block is used, since
    the exogenous part of the input error is pinned to zero.
    """

    t_ini: int
    t_f: int
    Q: np.ndarray
    R: np.ndarray
    n_controlled: int
    u_lower: np.ndarray
    u_upper: np.ndarray
    y_upper: np.ndarray
    y_lower: Optional[np.ndarray] = None
    regularizer: Regularizer = Regularizer.SQUARED_TWO_NORM
    lambda_g: float = 1.0
    duty_cycle: int = 1
    soft_output: bool = False
    unit_interval_inputs: bool = True
    tol_p: float = TOL_P
    tol_d: float = TOL_D
    max_iter: int = 20000

    def __post_init__(self):
        if self.t_ini < 1 or self.t_f < 1:
            raise ConfigError("t_ini and t_f must be at least 1")
        if self.duty_cycle < 1 or self.t_f % self.duty_cycle:
            raise ConfigError(f"duty cycle {self.duty_cycle} must divide t_f={self.t_f}")
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        p = self.Q.shape[0]
        l = self.n_controlled
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if R.shape[0] < l:
            raise ConfigError(f"R is {R.shape}, need at least {l}x{l}")
        self.R = R[:l, :l].copy()
        self.u_lower = _vec(self.u_lower, l, "u_lower")
        self.u_upper = _vec(self.u_upper, l, "u_upper")
        self.y_upper = _vec(self.y_upper, p, "y_upper")
        self.y_lower = _vec(0.0 if self.y_lower is None else self.y_lower, p, "y_lower")
        if np.any(self.u_lower > self.u_upper):
            raise ConfigError("input lower bound exceeds upper bound")
        if self.unit_interval_inputs and (np.any(self.u_lower < 0) or np.any(self.u_upper > 1)):
            raise ConfigError("green-ratio bounds must lie in [0, 1]")
        if np.any(self.y_upper <= self.y_lower):
            raise ConfigError("output upper bound must exceed lower bound (gridlock density > 0)")
        if self.lambda_g < 0:
            raise ConfigError("lambda_g must be nonnegative")
        for name, M in (("Q", self.Q), ("R", self.R)):
            if M.shape[0] != M.shape[1] or np.min(np.linalg.eigvalsh((M + M.T) / 2), initial=0) < -1e-12:
                raise ConfigError(f"{name} must be square PSD")
        self.regularizer = Regularizer(self.regularizer)

    @property
    def apply_steps(self) -> int:
        return self.duty_cycle

    @property
    def p(self) -> int:
        return self.Q.shape[0]


@dataclass(frozen=True)
class ReferenceSpec:
    """Output and input references over the horizon, one row per step."""

    y_ref: np.ndarray
    u_ref: np.ndarray
    n_controlled: int

    @property
    def d_bar(self) -> np.ndarray:
        return self.u_ref[:, self.n_controlled:]

    @property
    def lambda_ref(self) -> np.ndarray:
        return self.u_ref[:, :self.n_controlled]

    @classmethod
    def build(cls, t_f: int, y_ref, lambda_ref, d_bar=None) -> "ReferenceSpec":
        y = np.asarray(y_ref, dtype=float)
        y = np.tile(y, (t_f, 1)) if y.ndim == 1 else y
        lam = np.asarray(lambda_ref, dtype=float)
        lam = np.tile(lam, (t_f, 1)) if lam.ndim == 1 else lam
        if d_bar is None:
            d = np.zeros((t_f, 0))
        else:
            d = np.asarray(d_bar, dtype=float)
            d = np.tile(d, (t_f, 1)) if d.ndim == 1 else d
        if not (y.shape[0] == lam.shape[0] == d.shape[0] == t_f):
            raise DimensionError("reference rows must equal the horizon length")
        return cls(y_ref=y, u_ref=np.hstack([lam, d]), n_controlled=lam.shape[1])


@dataclass
class ControllerState:
    """Rolling buffers of the most recent t_ini input/output samples."""

    t_ini: int
    u_buf: deque = field(default_factory=deque)
    y_buf: deque = field(default_factory=deque)
    t: int = 0

    def push(self, u, y) -> None:
        self.u_buf.append(np.asarray(u, dtype=float).copy())
        self.y_buf.append(np.asarray(y, dtype=float).copy())
        while len(self.u_buf) > self.t_ini:
            self.u_buf.popleft()
            self.y_buf.popleft()

    @property
    def warmed_up(self) -> bool:
        return len(self.u_buf) == self.t_ini

    @property
    def u_ini(self) -> np.ndarray:
        return np.concatenate(list(self.u_buf))

    @property
    def y_ini(self) -> np.ndarray:
        return np.concatenate(list(self.y_buf))


@dataclass(frozen=True)
class ConstraintSet:
    """Constraints on the stacked future input u = col(u(1), ..., u(t_f)).

    ``M`` ties each controllable channel inside a duty-cycle block, ``Dsel``
    picks the exogenous entries which must equal ``d_bar``.
    """

    M: np.ndarray
    Dsel: np.ndarray
    d_bar: np.ndarray
    u_lower: np.ndarray
    u_upper: np.ndarray
    y_lower: np.ndarray
    y_upper: np.ndarray

    def equality_residual(self, u) -> float:
        u = np.asarray(u, dtype=float).reshape(-1)
        r1 = np.max(np.abs(self.M @ u), initial=0.0)
        r2 = np.max(np.abs(self.Dsel @ u - self.d_bar), initial=0.0)
        return float(max(r1, r2))

    def box_residual(self, u) -> float:
        u = np.asarray(u, dtype=float).reshape(-1)
        return float(max(np.max(self.u_lower - u, initial=0.0), np.max(u - self.u_upper, initial=0.0), 0.0))

    def contains(self, u, tol: float = 1e-9) -> bool:
        return self.equality_residual(u) <= tol and self.box_residual(u) <= tol


def duty_cycle_ties(n_controlled: int, m: int, t_f: int, duty_cycle: int) -> np.ndarray:
    """Rows u_l(k) - u_l(k+1) = 0 for consecutive steps inside each duty cycle."""
    rows = []
    for start in range(0, t_f, duty_cycle):
        for k in range(start, start + duty_cycle - 1):
            for c in range(n_controlled):
                r = np.zeros(m * t_f)
                r[k * m + c] = 1.0
                r[(k + 1) * m + c] = -1.0
                rows.append(r)
    return np.array(rows).reshape(-1, m * t_f)


def assemble_constraints(cfg: DeepcConfig, d_bar, m: int) -> ConstraintSet:
    """Input/output constraint set over the horizon.

    Args:
        cfg: controller configuration (horizon, duty cycle, bounds).
        d_bar: exogenous forecast, shape (t_f, m - l) or flat.
        m: total number of input channels.
    """
    l, t_f = cfg.n_controlled, cfg.t_f
    n_exo = m - l
    if n_exo < 0:
        raise ConfigError(f"n_controlled={l} exceeds m={m}")
    if cfg.duty_cycle < 1 or t_f % cfg.duty_cycle:
        raise ConfigError(f"duty cycle {cfg.duty_cycle} must divide t_f={t_f}")
    d = np.asarray(d_bar, dtype=float).reshape(-1)
    if d.size != n_exo * t_f:
        raise DimensionError(f"forecast has {d.size} entries, expected {n_exo * t_f}")
    if np.any(d < 0) and cfg.unit_interval_inputs:
        raise ConfigError("demand forecast must be nonnegative")
    M = duty_cycle_ties(l, m, t_f, cfg.duty_cycle)
    Dsel = np.zeros((n_exo * t_f, m * t_f))
    for k in range(t_f):
        for c in range(n_exo):
            Dsel[k * n_exo + c, k * m + l + c] = 1.0
    exo_lo = 0.0 if cfg.unit_interval_inputs else -np.inf
    u_lo = np.tile(np.concatenate([cfg.u_lower, np.full(n_exo, exo_lo)]), t_f)
    u_hi = np.tile(np.concatenate([cfg.u_upper, np.full(n_exo, np.inf)]), t_f)
    return ConstraintSet(M=M, Dsel=Dsel, d_bar=d, u_lower=u_lo, u_upper=u_hi,
                         y_lower=np.tile(cfg.y_lower, t_f), y_upper=np.tile(cfg.y_upper, t_f))


@dataclass
class DeepcSolution:
    u: np.ndarray          # (t_f, m) including the pinned exogenous channels
    y: np.ndarray          # (t_f, p)
    g: np.ndarray
    objective: float
    qp: QpSolution

    @property
    def status(self) -> Status:
        return self.qp.status

    @property
    def degraded(self) -> bool:
        return self.qp.status is not Status.SOLVED


class DeepcProgram:
    """The stacked DeePC quadratic program for fixed data and configuration.

    Variable layout: ``[g | u_ctrl (l*t_f) | y (p*t_f) | s (p*t_f, soft only)]``.
    With soft outputs the predicted output is ``y + s``: ``y`` carries the
    hard box and ``s`` is penalized quadratically.
    """

    def __init__(self, data: DeepcData, cfg: DeepcConfig):
        if data.t_ini != cfg.t_ini or data.t_f != cfg.t_f:
            raise DimensionError("data horizons do not match the configuration")
        if data.p != cfg.p:
            raise DimensionError(f"data has {data.p} outputs, Q is {cfg.p}x{cfg.p}")
        self.data, self.cfg = data, cfg
        m, p, l, t_f, t_ini = data.m, data.p, cfg.n_controlled, cfg.t_f, cfg.t_ini
        if l > m:
            raise DimensionError(f"n_controlled={l} exceeds m={m}")
        nc = data.n_cols
        n_u, n_y = l * t_f, p * t_f
        n_s = n_y if cfg.soft_output else 0
        self.ig = slice(0, nc)
        self.iu = slice(nc, nc + n_u)
        self.iy = slice(nc + n_u, nc + n_u + n_y)
        self.is_ = slice(nc + n_u + n_y, nc + n_u + n_y + n_s)
        d = nc + n_u + n_y + n_s
        self.dim = d

        ctrl_rows = np.array([k * m + c for k in range(t_f) for c in range(l)], dtype=int)
        exo_rows = np.array([k * m + c for k in range(t_f) for c in range(l, m)], dtype=int)
        Uf_c = data.Uf[ctrl_rows] if n_u else np.zeros((0, nc))
        Uf_x = data.Uf[exo_rows] if exo_rows.size else np.zeros((0, nc))
        ties = duty_cycle_ties(l, l, t_f, cfg.duty_cycle)

        blocks = []
        # Up g = u_ini ; Yp g = y_ini
        r = np.zeros((m * t_ini, d)); r[:, self.ig] = data.Up; blocks.append(r)
        r = np.zeros((p * t_ini, d)); r[:, self.ig] = data.Yp; blocks.append(r)
        # Uf_ctrl g - u = 0
        r = np.zeros((n_u, d)); r[:, self.ig] = Uf_c; r[:, self.iu] = -np.eye(n_u); blocks.append(r)
        # Uf_exo g = d_bar
        r = np.zeros((Uf_x.shape[0], d)); r[:, self.ig] = Uf_x; blocks.append(r)
        # Yf g - y (- s) = 0
        r = np.zeros((n_y, d)); r[:, self.ig] = data.Yf; r[:, self.iy] = -np.eye(n_y)
        if n_s:
            r[:, self.is_] = -np.eye(n_s)
        blocks.append(r)
        # duty-cycle ties
        r = np.zeros((ties.shape[0], d)); r[:, self.iu] = ties; blocks.append(r)
        self.A_eq = np.vstack(blocks)
        self.row_split = np.cumsum([b.shape[0] for b in blocks])
        self.n_exo_rows = Uf_x.shape[0]

        # quadratic cost: P = 2 * sum S' W S
        P = np.zeros((d, d))
        Qb = np.kron(np.eye(t_f), cfg.Q)
        Rb = np.kron(np.eye(t_f), cfg.R)
        Sy = np.zeros((n_y, d)); Sy[:, self.iy] = np.eye(n_y)
        if n_s:
            Sy[:, self.is_] = np.eye(n_s)
        self.Sy = Sy
        P += 2 * Sy.T @ Qb @ Sy
        P[self.iu, self.iu] += 2 * Rb
        if n_s:
            P[self.is_, self.is_] += 2 * SOFT_OUTPUT_WEIGHT * np.eye(n_s)
        if cfg.regularizer is Regularizer.SQUARED_TWO_NORM:
            P[self.ig, self.ig] += 2 * cfg.lambda_g * np.eye(nc)
        self.P = (P + P.T) / 2
        self.Qb, self.Rb = Qb, Rb
        self._reduce_data_rows()
        self.solver = AdmmSolver(self.P, self.A_red)
        self._warm = None

    def _reduce_data_rows(self) -> None:
        """Replace the rows acting on ``g`` alone by an orthonormal row basis.

        ``Up``, ``Yp`` and the forecast rows of ``Uf`` are often rank deficient
        (constant demand channels repeat identical rows). Redundant equalities
        slow the ADMM iteration down badly, so the solver sees ``V_r' g = c``
        instead. That system has the same solution set whenever the right-hand
        side lies in the row space; otherwise the program is infeasible.
        """
        rs = self.row_split
        self._data_idx = np.concatenate([np.arange(0, rs[1]), np.arange(rs[2], rs[3])])
        self._other_idx = np.setdiff1d(np.arange(self.A_eq.shape[0]), self._data_idx)
        G = self.A_eq[self._data_idx][:, self.ig]
        U, S, Vt = np.linalg.svd(G, full_matrices=False)
        r = int(np.sum(S > RANK_RTOL * S[0])) if S.size and S[0] > 0 else 0
        self._U, self._S = U[:, :r], S[:r]
        rows = np.zeros((r, self.dim))
        rows[:, self.ig] = Vt[:r]
        self.A_red = np.vstack([rows, self.A_eq[self._other_idx]])

    def _reduced_rhs(self, b: np.ndarray) -> tuple[np.ndarray, float]:
        """Right-hand side of the reduced system and the out-of-range residual."""
        bd = b[self._data_idx]
        coef = self._U.T @ bd
        miss = bd - self._U @ coef
        resid = float(np.max(np.abs(miss))) if miss.size else 0.0
        return np.concatenate([coef / self._S, b[self._other_idx]]), resid

    def problem(self, u_ini, y_ini, ref: ReferenceSpec, cons: ConstraintSet) -> QpProblem:
        cfg, data = self.cfg, self.data
        t_f, l, p = cfg.t_f, cfg.n_controlled, data.p
        y_hat = ref.y_ref.reshape(-1)
        u_hat = ref.lambda_ref.reshape(-1)
        q = np.zeros(self.dim)
        q += -2 * self.Sy.T @ (self.Qb @ y_hat)
        q[self.iu] += -2 * self.Rb @ u_hat
        const = float(y_hat @ self.Qb @ y_hat + u_hat @ self.Rb @ u_hat)
        n_u, n_y = l * t_f, p * t_f
        b = np.concatenate([np.asarray(u_ini, float).reshape(-1), np.asarray(y_ini, float).reshape(-1),
                            np.zeros(n_u), cons.d_bar.reshape(-1), np.zeros(n_y),
                            np.zeros(self.A_eq.shape[0] - self.row_split[4])])
        if b.size != self.A_eq.shape[0]:
            raise DimensionError("initial trajectory or forecast has the wrong length")
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        m = data.m
        ctrl = np.array([k * m + c for k in range(t_f) for c in range(l)], dtype=int)
        lo[self.iu] = cons.u_lower[ctrl]
        hi[self.iu] = cons.u_upper[ctrl]
        lo[self.iy] = cons.y_lower
        hi[self.iy] = cons.y_upper
        l1_w, l1_idx = 0.0, None
        if cfg.regularizer is Regularizer.ONE_NORM:
            l1_w, l1_idx = cfg.lambda_g, np.arange(self.ig.start, self.ig.stop)
        return QpProblem(P=self.P, q=q, A_eq=self.A_eq, b_eq=b, lower=lo, upper=hi,
                         l1_weight=l1_w, l1_index=l1_idx, constant=const)

    def solve(self, u_ini, y_ini, ref: ReferenceSpec, cons: ConstraintSet,
              warm: bool = True) -> DeepcSolution:
        full = self.problem(u_ini, y_ini, ref, cons)
        cfg = self.cfg
        b_red, miss = self._reduced_rhs(full.b_eq)
        scale = 1.0 + float(np.max(np.abs(full.b_eq), initial=0.0))
        if miss > cfg.tol_p * scale:
            raise DeepcInfeasible("initial trajectory and forecast are not consistent with the data",
                                  miss)
        prob = QpProblem(P=full.P, q=full.q, A_eq=self.A_red, b_eq=b_red, lower=full.lower,
                         upper=full.upper, l1_weight=full.l1_weight, l1_index=full.l1_index,
                         constant=full.constant)
        wx = self._warm[0] if (warm and self._warm is not None) else None
        wy = self._warm[1] if (warm and self._warm is not None) else None
        qp = self.solver.solve(prob, tol_p=cfg.tol_p, tol_d=cfg.tol_d, max_iter=cfg.max_iter,
                               warm_x=wx, warm_y=wy)
        if qp.status is Status.INFEASIBLE:
            raise DeepcInfeasible("DeePC program infeasible", qp.primal_residual, qp)
        self._warm = (qp.x, np.concatenate([qp.y_eq, qp.y_box]))
        x = qp.x
        t_f, l, m, p = cfg.t_f, cfg.n_controlled, self.data.m, self.data.p
        u = np.empty((t_f, m))
        u[:, :l] = x[self.iu].reshape(t_f, l)
        u[:, l:] = cons.d_bar.reshape(t_f, m - l)
        y = (self.Sy @ x).reshape(t_f, p)
        return DeepcSolution(u=u, y=y, g=x[self.ig].copy(), objective=qp.objective, qp=qp)


def deepc_cost(cfg: DeepcConfig, u, y, g, ref: ReferenceSpec) -> float:
    """Tracking cost plus regularizer, evaluated directly."""
    l = cfg.n_controlled
    u = np.asarray(u, float)
    y = np.asarray(y, float)
    cost = 0.0
    for k in range(cfg.t_f):
        ey = y[k] - ref.y_ref[k]
        eu = u[k, :l] - ref.lambda_ref[k]
        cost += ey @ cfg.Q @ ey + eu @ cfg.R @ eu
    if cfg.regularizer is Regularizer.SQUARED_TWO_NORM:
        cost += cfg.lambda_g * float(g @ g)
    else:
        cost += cfg.lambda_g * float(np.abs(g).sum())
    return float(cost)


def solve_deepc(data: DeepcData, state: ControllerState, ref: ReferenceSpec,
                cons: ConstraintSet, cfg: DeepcConfig) -> DeepcSolution:
    """One-shot solve of the DeePC program from a warmed-up controller state."""
    if not state.warmed_up:
        raise RuntimeError(f"controller needs {cfg.t_ini} samples, has {len(state.u_buf)}")
    return DeepcProgram(data, cfg).solve(state.u_ini, state.y_ini, ref, cons, warm=False)


@dataclass
class StepRecord:
    t: int
    lambdas: np.ndarray
    objective: float
    primal_res: float
    dual_res: float
    iterations: int
    degraded: bool = False
    warmup: bool = False


class DeepcController:
    """Receding-horizon loop: push measurements, solve, apply the first block."""

    def __init__(self, data: DeepcData, cfg: DeepcConfig):
        self.data, self.cfg = data, cfg
        self.program = DeepcProgram(data, cfg)
        self.state = ControllerState(cfg.t_ini)
        self.log: list[StepRecord] = []
        self.last: Optional[DeepcSolution] = None

    def observe(self, u, y) -> None:
        """Append one or several (u, y) samples (rows) to the rolling buffers."""
        u = np.atleast_2d(np.asarray(u, float))
        y = np.atleast_2d(np.asarray(y, float))
        if u.shape[0] != y.shape[0]:
            raise DimensionError("input and output sample counts differ")
        if u.shape[1] != self.data.m or y.shape[1] != self.data.p:
            raise DimensionError(f"samples must have {self.data.m} inputs and {self.data.p} outputs")
        for uk, yk in zip(u, y):
            self.state.push(uk, yk)

    def step(self, ref: ReferenceSpec, u_meas=None, y_meas=None) -> np.ndarray:
        """Return the next ``apply_steps`` controllable inputs, shape (j, l).

        Before warm-up the nominal input reference is returned unchanged.
        """
        cfg = self.cfg
        if u_meas is not None:
            self.observe(u_meas, y_meas)
        j = cfg.apply_steps
        if not self.state.warmed_up:
            block = ref.lambda_ref[:j].copy()
            self.log.append(StepRecord(self.state.t, block[0], np.nan, np.nan, np.nan, 0, warmup=True))
            self.state.t += j
            return block
        cons = assemble_constraints(cfg, ref.d_bar, self.data.m)
        sol = self.program.solve(self.state.u_ini, self.state.y_ini, ref, cons)
        self.last = sol
        block = sol.u[:j, :cfg.n_controlled].copy()
        # the polished iterate satisfies ties to ~1e-12; make them exact and respect boxes
        block = np.clip(np.repeat(block.mean(axis=0, keepdims=True), j, axis=0), cfg.u_lower, cfg.u_upper)
        self.log.append(StepRecord(self.state.t, block[0], sol.objective, sol.qp.primal_residual,
                                   sol.qp.dual_residual, sol.qp.iterations, degraded=sol.degraded))
        self.state.t += j
        return block

    def write_log(self, path: Union[str, Path]) -> None:
        write_step_log(self.log, path)


def write_step_log(records: Sequence[StepRecord], path: Union[str, Path]) -> None:
    n_l = len(records[0].lambdas) if records else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"lambda_{i}" for i in range(n_l)]
                   + ["objective", "primal_res", "dual_res", "iterations"])
        for r in records:
            w.writerow([r.t] + [format(v, ".17g") for v in r.lambdas]
                       + [format(r.objective, ".17g"), format(r.primal_res, ".17g"),
                          format(r.dual_res, ".17g"), r.iterations])


def read_step_log(path: Union[str, Path]) -> list[StepRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_l = sum(1 for h in header if h.startswith("lambda_"))
        for row in reader:
            out.append(StepRecord(t=int(row[0]), lambdas=np.array([float(v) for v in row[1:1 + n_l]]),
                                  objective=float(row[1 + n_l]), primal_res=float(row[2 + n_l]),
                                  dual_res=float(row[3 + n_l]), iterations=int(row[4 + n_l])))
    return out
