"""Linear MPC comparator built on a piecewise-affine MFD approximation.

The controller works at region level.  With ``n_i`` the accumulation of region
``i`` and ``T`` the replan period (hours), the prediction model is

    n_i(k+1) = n_i(k) + T (q_i(k) - f_ii(k) - sum_h f_ih(k) + sum_h f_hi(k))

and every flow is bounded by each affine piece of the production envelope,

    0 <= f_ih(k) <= beta_ih a_i (s_l n_i(k) + c_l) / L_i   for every piece l,

where ``beta_ih = sum_j theta_ij^h alpha_ij`` carries the routing shares and the
destination mix ``alpha_ij = n_ij / n_i`` frozen at the current state, and
``a_i`` is the production attenuation of the (uncontrolled) internal lights at
their nominal setting.  The linear program maximizes total production
``sum_k sum_i L_i (f_ii + sum_h f_ih)``.

The solver only accepts equalities and boxes, so each piece bound on a future
step becomes ``f - beta a s_l n / L + sigma = beta a c_l / L`` with a slack
``sigma >= 0``.  Bounds on the first step involve the measured accumulation only
and reduce to boxes.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .qpsolve import QpSolution, Status, solve_lp
from .trafficsim import SECONDS_PER_HOUR, Mfd, RegionNetwork

log = logging.getLogger(__name__)

DEFAULT_PIECES = 8
CONCAVITY_SAMPLES = 2001
PLAN_HEADER = ["k", "i", "h", "f", "lambda_mapped"]


class NotConcaveError(ValueError):
    """A tangent envelope only bounds a concave production function from above."""


@dataclass(frozen=True)
class PwaMfd:
    """Pointwise minimum of affine pieces ``s_l n + c_l`` (production, veh km/h)."""

    slopes: np.ndarray
    intercepts: np.ndarray
    n_max: float

    def __post_init__(self):
        s = np.asarray(self.slopes, dtype=float).reshape(-1)
        c = np.asarray(self.intercepts, dtype=float).reshape(-1)
        if s.size == 0 or s.size != c.size:
            raise ValueError("need matching, nonempty slope and intercept lists")
        object.__setattr__(self, "slopes", s)
        object.__setattr__(self, "intercepts", c)

    @property
    def pieces(self) -> int:
        return int(self.slopes.size)

    def __call__(self, n):
        n = np.asarray(n, dtype=float)
        vals = self.slopes.reshape((-1,) + (1,) * n.ndim) * n + \
            self.intercepts.reshape((-1,) + (1,) * n.ndim)
        return vals.min(axis=0)

    def max_error(self, mfd: Mfd, samples: int = 10001) -> float:
        """Largest gap ``envelope - P`` on ``[0, n_max]``."""
        grid = np.linspace(0.0, self.n_max, samples)
        return float(np.max(self(grid) - mfd(grid)))


def pwa_fit(mfd: Mfd, pieces: int = DEFAULT_PIECES) -> PwaMfd:
    """Tangent envelope of a concave MFD at ``pieces`` equispaced accumulations.

    Tangent points are the midpoints of ``pieces`` equal cells of ``[0, n_max]``,
    so two pieces touch at ``n_max/4`` and ``3 n_max/4``.

    Args:
        mfd: Production function to approximate.
        pieces: Number of affine pieces, at least 2.

    Returns:
        The envelope; it lies above ``P`` on ``[0, n_max]``.

    Raises:
        ValueError: Fewer than two pieces.
        NotConcaveError: The MFD is not concave (for example the cubic shape).
    """
    if pieces < 2:
        raise ValueError("a PWA envelope needs at least 2 pieces")
    if not mfd.is_concave(CONCAVITY_SAMPLES):
        raise NotConcaveError("MFD is not concave; concavify it before fitting tangents")
    pts = (2 * np.arange(pieces) + 1) * mfd.n_max / (2 * pieces)
    slopes = np.asarray(mfd.derivative(pts), dtype=float)
    intercepts = np.asarray(mfd(pts), dtype=float) - slopes * pts
    return PwaMfd(slopes, intercepts, mfd.n_max)


@dataclass
class MpcPlan:
    """Planned region-level flows (veh/h) over the horizon.

    Attributes:
        horizon: Number of replan periods ``N_p``.
        completion: ``f_ii(k)``, shape ``(N_p, p)``.
        transfer: ``f_ih(k)``, shape ``(N_p, p, p)``, zero off the adjacency.
        n_pred: Predicted accumulations ``n_i(k)`` for ``k = 0..N_p``.
        objective: Total production ``sum_k sum_i L_i (f_ii + sum_h f_ih)``.
        degraded: True when the LP failed and flows were set to their bounds.
    """

    horizon: int
    completion: np.ndarray
    transfer: np.ndarray
    n_pred: np.ndarray
    objective: float
    degraded: bool = False
    solution: Optional[QpSolution] = None


@dataclass
class LmpcProgram:
    """The LP data together with the variable index maps."""

    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    i_comp: np.ndarray        # (N_p, p) variable index of f_ii(k)
    i_trans: dict             # (i, h) -> (N_p,) variable indices
    i_n: np.ndarray           # (N_p, p) index of n_i(k+1)
    n0: np.ndarray
    trip_length: np.ndarray
    bound0: dict              # flow key -> upper bound at k = 0


def destination_mix(n) -> np.ndarray:
    """``alpha[i, j] = n_ij / n_i`` (zero rows for empty regions)."""
    n = np.asarray(n, dtype=float)
    n_i = n.sum(axis=1, keepdims=True)
    return np.divide(n, n_i, out=np.zeros_like(n), where=n_i > 0)


def flow_coefficients(net: RegionNetwork, n) -> dict:
    """``beta`` per flow key: ``(i, i)`` for completion, ``(i, h)`` for transfers."""
    alpha = destination_mix(n)
    beta = {}
    for i in range(net.p):
        beta[(i, i)] = float(net.theta[i, i, i] * alpha[i, i])
    for (i, h) in net.adjacency:
        beta[(i, h)] = float(net.theta[i, :, h] @ alpha[i])
    return beta


def _demand_block(demand, p: int, n_p: int) -> np.ndarray:
    d = np.asarray(demand, dtype=float)
    if d.shape == (p, p):
        d = np.broadcast_to(d, (n_p, p, p))
    if d.ndim != 3 or d.shape[1:] != (p, p) or d.shape[0] < n_p:
        raise ValueError(f"demand forecast must be ({n_p}, {p}, {p}) or ({p}, {p})")
    return d[:n_p]


def build_lmpc_lp(net: RegionNetwork, n, demand, pwa: Sequence[PwaMfd], n_p: int,
                  period: float, attenuation=None) -> LmpcProgram:
    """Assemble the LMPC linear program (minimization form).

    Args:
        net: Network; routing and trip lengths are read from it.
        n: Current accumulation matrix ``n_ij`` (veh).
        demand: Forecast ``q_ij`` in veh/h, shape ``(N_p, p, p)`` or ``(p, p)``.
        pwa: One envelope per region.
        n_p: Horizon in replan periods.
        period: Replan period in seconds.
        attenuation: Production factor per region (default: internal lights at nominal).
    """
    n = np.asarray(n, dtype=float)
    p = net.p
    if n.shape != (p, p):
        raise ValueError(f"state must be {p}x{p}")
    if len(pwa) != p:
        raise ValueError("need one PWA envelope per region")
    if n_p < 1 or not period > 0:
        raise ValueError("horizon and period must be positive")
    T = period / SECONDS_PER_HOUR
    a = net.attenuation(net.lam_nominal) if attenuation is None else np.asarray(attenuation, float)
    L = np.array([r.trip_length for r in net.regions])
    q = _demand_block(demand, p, n_p).sum(axis=2)
    n0 = n.sum(axis=1)
    beta = flow_coefficients(net, n)
    keys = [(i, i) for i in range(p)] + list(net.adjacency)

    # variable layout: flows per step, then n(k+1) per step, then slacks
    nf = len(keys)
    idx_flow = np.arange(n_p * nf).reshape(n_p, nf)
    i_n = n_p * nf + np.arange(n_p * p).reshape(n_p, p)
    n_core = n_p * nf + n_p * p
    piece_rows = [(k, f, l) for k in range(1, n_p) for f in range(nf)
                  for l in range(pwa[keys[f][0]].pieces)]
    dim = n_core + len(piece_rows)

    c = np.zeros(dim)
    lower = np.zeros(dim)
    upper = np.full(dim, np.inf)
    for f, (i, h) in enumerate(keys):
        c[idx_flow[:, f]] = -L[i]
    for k in range(n_p):
        upper[i_n[k]] = net.n_max

    bound0 = {}
    for f, key in enumerate(keys):
        i = key[0]
        g0 = max(float(pwa[i](n0[i])), 0.0) * a[i] / L[i]
        bound0[key] = beta[key] * g0
        upper[idx_flow[0, f]] = bound0[key]

    rows, rhs = [], []
    # dynamics: n(k+1) - n(k) + T (out - in) = T q
    for k in range(n_p):
        for i in range(p):
            r = np.zeros(dim)
            r[i_n[k, i]] = 1.0
            b = T * q[k, i]
            if k == 0:
                b += n0[i]
            else:
                r[i_n[k - 1, i]] = -1.0
            for f, (s, h) in enumerate(keys):
                if s == i:
                    r[idx_flow[k, f]] += T
                elif h == i:
                    r[idx_flow[k, f]] -= T
            rows.append(r)
            rhs.append(b)
    # piece bounds on future steps: f - beta a s_l n / L + sigma = beta a c_l / L
    for m, (k, f, l) in enumerate(piece_rows):
        key = keys[f]
        i = key[0]
        w = beta[key] * a[i] / L[i]
        r = np.zeros(dim)
        r[idx_flow[k, f]] = 1.0
        r[i_n[k - 1, i]] = -w * pwa[i].slopes[l]
        r[n_core + m] = 1.0
        rows.append(r)
        rhs.append(w * pwa[i].intercepts[l])

    i_comp = idx_flow[:, :p]
    i_trans = {key: idx_flow[:, f] for f, key in enumerate(keys) if key[0] != key[1]}
    return LmpcProgram(c=c, A_eq=np.array(rows), b_eq=np.array(rhs), lower=lower, upper=upper,
                       i_comp=i_comp, i_trans=i_trans, i_n=i_n, n0=n0, trip_length=L,
                       bound0=bound0)


def _plan_from_x(prog: LmpcProgram, x: np.ndarray, p: int, n_p: int) -> Tuple[np.ndarray, ...]:
    comp = x[prog.i_comp].copy()
    trans = np.zeros((n_p, p, p))
    for (i, h), ix in prog.i_trans.items():
        trans[:, i, h] = x[ix]
    n_pred = np.vstack([prog.n0, x[prog.i_n]])
    return comp, trans, n_pred


def production_objective(plan_comp: np.ndarray, plan_trans: np.ndarray, L: np.ndarray) -> float:
    """``sum_k sum_i L_i (f_ii + sum_h f_ih)``."""
    return float(((plan_comp + plan_trans.sum(axis=2)) * L).sum())


def solve_lmpc(net: RegionNetwork, n, demand, pwa: Sequence[PwaMfd], n_p: int, period: float,
               attenuation=None) -> MpcPlan:
    """Solve the LMPC program; fall back to flows at their bounds if it fails.

    The fallback keeps every flow at its first-step upper bound and propagates
    the prediction with clipping to ``[0, n_max]``; the plan is marked degraded.
    """
    prog = build_lmpc_lp(net, n, demand, pwa, n_p, period, attenuation)
    p = net.p
    sol = solve_lp(prog.c, prog.A_eq, prog.b_eq, prog.lower, prog.upper)
    if sol.status is Status.SOLVED:
        x = np.clip(sol.x, prog.lower, prog.upper)
        comp, trans, n_pred = _plan_from_x(prog, x, p, n_p)
        comp = np.maximum(comp, 0.0)
        trans = np.maximum(trans, 0.0)
        return MpcPlan(n_p, comp, trans, n_pred,
                       production_objective(comp, trans, prog.trip_length), False, sol)

    log.info("LMPC program %s (residual %.2e); using flows at bounds", sol.status.value,
             sol.primal_residual)
    T = period / SECONDS_PER_HOUR
    q = _demand_block(demand, p, n_p).sum(axis=2)
    comp = np.tile([prog.bound0[(i, i)] for i in range(p)], (n_p, 1))
    trans = np.zeros((n_p, p, p))
    for (i, h) in prog.i_trans:
        trans[:, i, h] = prog.bound0[(i, h)]
    n_pred = [prog.n0]
    for k in range(n_p):
        out = comp[k] + trans[k].sum(axis=1)
        inn = trans[k].sum(axis=0)
        n_pred.append(np.clip(n_pred[-1] + T * (q[k] - out + inn), 0.0, net.n_max))
    return MpcPlan(n_p, comp, trans, np.array(n_pred),
                   production_objective(comp, trans, prog.trip_length), True, sol)


def boundary_green(plan: MpcPlan, net: RegionNetwork, n, step: int = 0,
                   attenuation=None) -> dict:
    """``u_ih = f_ih / (G_i(n_i) sum_j theta_ij^h alpha_ij)`` clipped to [0, 1].

    ``G_i`` is the true attenuated production over trip length.  A boundary
    whose denominator vanishes gets ``u = 0``.
    """
    n = np.asarray(n, dtype=float)
    a = net.attenuation(net.lam_nominal) if attenuation is None else np.asarray(attenuation, float)
    n_i = n.sum(axis=1)
    beta = flow_coefficients(net, n)
    u = {}
    for (i, h) in net.adjacency:
        reg = net.regions[i]
        den = float(reg.mfd(n_i[i])) * a[i] / reg.trip_length * beta[(i, h)]
        f = float(plan.transfer[step, i, h])
        if den <= 0:
            u[(i, h)] = 0.0
            continue
        raw = f / den
        u[(i, h)] = float(np.clip(raw, 0.0, 1.0))
        if raw > 1.0 + 1e-9 or raw < -1e-9:
            log.debug("boundary (%d,%d): mapped green %.4f clipped", i, h, raw)
    return u


def plan_to_lights(plan: MpcPlan, net: RegionNetwork, n, step: int = 0,
                   attenuation=None) -> np.ndarray:
    """Light settings realizing the planned boundary flows at ``step``.

    Every light on boundary ``(i, h)`` receives ``u_ih`` (clipped to its own
    bounds); a boundary with zero denominator gets its lower bound.  Internal
    lights stay at nominal because the model-based controller has no handle on
    them.
    """
    lam = net.lam_nominal.copy()
    lo, hi = net.lam_lower, net.lam_upper
    n = np.asarray(n, dtype=float)
    u = boundary_green(plan, net, n, step, attenuation)
    n_i = n.sum(axis=1)
    for (i, h), ids in net.boundary_lights.items():
        ids = list(ids)
        if (i, h) not in u:
            continue
        if n_i[i] <= 0 or float(net.regions[i].mfd(n_i[i])) <= 0:
            lam[ids] = lo[ids]
        else:
            lam[ids] = np.clip(u[(i, h)], lo[ids], hi[ids])
    return lam


class LmpcController:
    """Replans every ``period`` seconds and holds the mapped lights in between.

    Args:
        net: Network with ground-truth routing.
        n_p: Horizon in replan periods.
        period: Replan period in seconds (the duty cycle).
        pieces: Affine pieces per region.
    """

    def __init__(self, net: RegionNetwork, n_p: int, period: float, pieces: int = DEFAULT_PIECES):
        self.net = net
        self.n_p = int(n_p)
        self.period = float(period)
        self.pwa = [pwa_fit(r.mfd, pieces) for r in net.regions]
        self.plans: List[Tuple[int, MpcPlan, np.ndarray]] = []

    def step(self, k: int, n, demand) -> np.ndarray:
        """Plan from accumulation ``n`` and return the light vector to apply."""
        plan = solve_lmpc(self.net, n, demand, self.pwa, self.n_p, self.period)
        lam = plan_to_lights(plan, self.net, n)
        self.plans.append((k, plan, lam))
        return lam

    @property
    def degraded_count(self) -> int:
        return sum(1 for _, plan, _ in self.plans if plan.degraded)


def plan_rows(k: int, plan: MpcPlan, net: RegionNetwork, lam: np.ndarray,
              stride: int = 1) -> List[dict]:
    """CSV rows for one replan; ``lambda_mapped`` is the applied boundary green.

    Planned step ``j`` is written at global step ``k + j * stride``.  Completion
    flows use ``h == i`` and carry a mapped value of 1 (no light).
    """
    u_applied = {key: float(np.mean(lam[list(ids)])) for key, ids in net.boundary_lights.items()}
    rows = []
    for j in range(plan.horizon):
        kk = k + j * stride
        for i in range(net.p):
            rows.append({"k": kk, "i": i, "h": i, "f": float(plan.completion[j, i]),
                         "lambda_mapped": 1.0})
        for (i, h) in net.adjacency:
            lm = u_applied.get((i, h), 1.0) if j == 0 else float("nan")
            rows.append({"k": kk, "i": i, "h": h, "f": float(plan.transfer[j, i, h]),
                         "lambda_mapped": lm})
    return rows


def write_plan_csv(path: Union[str, Path], rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PLAN_HEADER)
        for r in rows:
            w.writerow([r["k"], r["i"], r["h"], repr(float(r["f"])), repr(float(r["lambda_mapped"]))])


def read_plan_csv(path: Union[str, Path]) -> List[dict]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames != PLAN_HEADER:
            raise ValueError(f"unexpected plan header {rd.fieldnames}")
        return [{"k": int(r["k"]), "i": int(r["i"]), "h": int(r["h"]), "f": float(r["f"]),
                 "lambda_mapped": float(r["lambda_mapped"])} for r in rd]
