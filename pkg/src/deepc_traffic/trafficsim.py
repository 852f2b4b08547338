"""Mesoscopic multi-region traffic simulator driven by macroscopic fundamental diagrams.

The state is the accumulation matrix ``n[i, j]``: vehicles currently in region
``i`` whose destination is region ``j``.  Each step of length ``dt`` seconds
moves vehicles with the explicit-Euler recursion

    n_ij(k+1) = n_ij(k) + dt_h * (q_ij - sum_h M_ij^h + sum_h M_hj^i)

where ``dt_h`` is the step in hours, ``M_ij^h = u_ih theta_ij^h (n_ij/n_i) P~_i/L_i``
is the transfer flow from ``i`` to ``h`` of vehicles bound for ``j`` and
``M_ii = (n_ii/n_i) P~_i/L_i`` is the trip-completion flow.  ``P~_i`` is the
production of region ``i`` attenuated by its internal traffic lights.

Three guards extend the bare recursion (all conservative):

* overdraw: outflows of a cell are scaled so it cannot go below zero;
* receiving capacity: transfers into a region are scaled by a common factor
  so its accumulation never exceeds ``n_max``; blocked vehicles stay put;
* entry queue: demand that finds no room waits in a point queue outside the
  network and enters as soon as space frees up.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

SECONDS_PER_HOUR = 3600.0
ROUTING_TOL = 1e-12
CONSERVATION_RTOL = 1e-9
N_CR_GRID = 10000


class InvariantError(RuntimeError):
    """A simulator invariant was violated (negative flow, lost vehicles...)."""


class NetworkError(ValueError):
    """The network description is inconsistent."""


# ---------------------------------------------------------------------------
# Macroscopic fundamental diagram
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mfd:
    """Production function P(n) = sum_k coeffs[k-1] n^k on [0, n_max], zero beyond.

    Attributes:
        coeffs: Polynomial coefficients of n, n^2, ... (no constant term, so P(0) = 0).
        n_max: Gridlock accumulation where production vanishes.
        shape: Free-form label ("parabolic", "cubic" or "fitted").
        unsaturated: True when fitted from samples that never reached the
            critical accumulation, so ``n_cr`` is an extrapolation.
    """

    coeffs: Tuple[float, ...]
    n_max: float
    shape: str = "fitted"
    unsaturated: bool = False
    n_cr: float = field(init=False)
    p_max: float = field(init=False)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        if not coeffs:
            raise ValueError("MFD needs at least one coefficient")
        if not self.n_max > 0:
            raise ValueError(f"n_max must be positive, got {self.n_max}")
        object.__setattr__(self, "coeffs", coeffs)
        n_cr = _argmax_poly(coeffs, self.n_max)
        object.__setattr__(self, "n_cr", n_cr)
        object.__setattr__(self, "p_max", float(_polyval(coeffs, n_cr)))

    @classmethod
    def parabolic(cls, p_max: float, n_max: float) -> "Mfd":
        """P(n) = 4 P_max n (n_max - n) / n_max^2."""
        k = 4.0 * p_max / n_max ** 2
        return cls((k * n_max, -k), n_max, shape="parabolic")

    @classmethod
    def cubic(cls, p_max: float, n_max: float) -> "Mfd":
        """Skewed P(n) = k n (n_max - n)^2, peaking at n_max/3 (not concave)."""
        k = 27.0 * p_max / (4.0 * n_max ** 3)
        return cls((k * n_max ** 2, -2.0 * k * n_max, k), n_max, shape="cubic")

    def __call__(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        inside = (n > 0) & (n < self.n_max)
        return np.where(inside, _polyval(self.coeffs, np.clip(n, 0.0, self.n_max)), 0.0)

    def derivative(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        return sum((k + 1) * c * n ** k for k, c in enumerate(self.coeffs))

    def critical_density(self, network_length: float) -> float:
        return self.n_cr / network_length

    def is_concave(self, samples: int = 2001) -> bool:
        n = np.linspace(0.0, self.n_max, samples)
        second = sum((k + 1) * k * c * n ** (k - 1) for k, c in enumerate(self.coeffs) if k >= 1)
        return bool(np.all(np.asarray(second) <= 1e-12 * max(1.0, abs(self.p_max))))


def _polyval(coeffs: Sequence[float], n):
    out = np.zeros_like(np.asarray(n, dtype=float))
    for c in reversed(coeffs):
        out = (out + c) * n
    return out


def _argmax_poly(coeffs: Sequence[float], n_max: float) -> float:
    """Grid search at resolution n_max/10000, then Newton polish on P'."""
    grid = np.linspace(0.0, n_max, N_CR_GRID + 1)
    vals = _polyval(coeffs, grid)
    i = int(np.argmax(vals))
    x = grid[i]
    if 0 < i < N_CR_GRID:
        d1 = lambda t: sum((k + 1) * c * t ** k for k, c in enumerate(coeffs))
        d2 = lambda t: sum((k + 1) * k * c * t ** (k - 1) for k, c in enumerate(coeffs) if k)
        lo, hi = grid[i - 1], grid[i + 1]
        for _ in range(50):
            h2 = d2(x)
            if h2 >= 0:
                break
            step = d1(x) / h2
            x_new = min(max(x - step, lo), hi)
            if abs(x_new - x) <= 1e-15 * max(1.0, abs(x)):
                x = x_new
                break
            x = x_new
    return float(x)


def mfd_fit(samples, degree: int = 2, network_length: float = 1.0) -> Mfd:
    """Least-squares MFD through the origin from (density, flow) samples.

    Densities and flows are converted to accumulation and production with
    ``network_length`` (use 1.0 when samples are already in those units).

    Args:
        samples: Array-like of shape (N, 2) with N >= degree.
        degree: Polynomial degree (>= 2 so a maximum can exist).
        network_length: Region length in km.

    Returns:
        The fitted Mfd. ``n_max`` is the first positive root of P(n)/n and
        ``unsaturated`` is set when no sample exceeds the fitted critical
        accumulation.

    Raises:
        ValueError: Too few samples, or the fit has no interior maximum.
    """
    pts = np.asarray(samples, dtype=float).reshape(-1, 2)
    if degree < 2:
        raise ValueError("degree must be at least 2")
    if pts.shape[0] < degree:
        raise ValueError(f"need at least {degree} samples for degree {degree}, got {pts.shape[0]}")
    n = pts[:, 0] * network_length
    P = pts[:, 1] * network_length
    V = np.column_stack([n ** k for k in range(1, degree + 1)])
    coeffs, *_ = np.linalg.lstsq(V, P, rcond=None)
    # gridlock accumulation: smallest positive real root of P(n)/n
    roots = np.roots(coeffs[::-1])
    pos = [r.real for r in roots if abs(r.imag) <= 1e-9 * max(1.0, abs(r)) and r.real > 0]
    if not pos or coeffs[0] <= 0:
        raise ValueError("fitted MFD has no positive gridlock accumulation; samples do not bend")
    n_max = min(pos)
    mfd = Mfd(tuple(coeffs), n_max)
    if np.max(n) < mfd.n_cr:
        mfd = replace(mfd, unsaturated=True)
    return mfd


# ---------------------------------------------------------------------------
# Static network
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    id: str
    network_length: float
    trip_length: float
    mfd: Mfd
    sensors: int = 10
    sensor_noise_rel: float = 0.02
    free_flow_speed: float = 50.0

    def __post_init__(self):
        if not self.network_length > 0 or not self.trip_length > 0:
            raise NetworkError(f"region {self.id}: lengths must be positive")
        if self.sensors < 1:
            raise NetworkError(f"region {self.id}: needs at least one sensor")
        if self.sensor_noise_rel < 0 or not self.free_flow_speed > 0:
            raise NetworkError(f"region {self.id}: invalid noise or free-flow speed")

    @property
    def rho_cr(self) -> float:
        return self.mfd.n_cr / self.network_length

    @property
    def rho_max(self) -> float:
        return self.mfd.n_max / self.network_length


@dataclass(frozen=True)
class Light:
    id: str
    lower: float = 0.0
    upper: float = 1.0
    nominal: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.lower <= self.nominal <= self.upper <= 1.0:
            raise NetworkError(f"light {self.id}: need 0 <= lower <= nominal <= upper <= 1")


class _Kernel:
    """Constants of a network precomputed for the step loop.

    Light averaging is a single affine map: ``avg @ lam + base`` stacks the
    effective green ratios u (row-major p x p) and the attenuation factors a.
    """

    def __init__(self, net: "RegionNetwork"):
        p, n_l = len(net.regions), len(net.lights)
        self.p = p
        self.lo = np.array([l.lower for l in net.lights]) - 1e-12
        self.hi = np.array([l.upper for l in net.lights]) + 1e-12
        self.n_max = np.array([r.mfd.n_max for r in net.regions])
        self.trip = np.array([r.trip_length for r in net.regions])
        deg = max(len(r.mfd.coeffs) for r in net.regions)
        self.coeffs = np.zeros((deg, p))
        for i, r in enumerate(net.regions):
            self.coeffs[:len(r.mfd.coeffs), i] = r.mfd.coeffs
        avg = np.zeros((p * p + p, n_l))
        base = np.ones(p * p + p)
        for (i, h), ids in net.boundary_lights.items():
            if ids:
                avg[i * p + h, list(ids)] = 1.0 / len(ids)
                base[i * p + h] = 0.0
        for i, ids in net.internal_lights.items():
            if ids:
                avg[p * p + i, list(ids)] = 0.5 / len(ids)
                base[p * p + i] = 0.5
        self.avg, self.base = avg, base
        self.horner = tuple(self.coeffs[::-1])
        self.off = ~np.eye(p, dtype=bool)
        self.keep_transfer = self.off.astype(float)[:, None, :]
        self.diag_flat = np.arange(p) * (p * p + p + 1)
        self.ones = np.ones(p)
        self.ones.setflags(write=False)

    def lights(self, lam: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Effective green ratios u (p x p) and attenuation factors a (p)."""
        ua = self.avg @ lam + self.base
        return ua[:self.p * self.p].reshape(self.p, self.p), ua[self.p * self.p:]

    def effective_u(self, lam: np.ndarray) -> np.ndarray:
        return self.lights(lam)[0]

    def attenuation(self, lam: np.ndarray) -> np.ndarray:
        return self.lights(lam)[1]

    def production(self, n_i: np.ndarray) -> np.ndarray:
        """Every region's MFD evaluated at its own accumulation."""
        x = np.minimum(np.maximum(n_i, 0.0), self.n_max)
        acc = self.horner[0]
        for c in self.horner[1:]:
            acc = acc * x + c
        out = acc * x
        out[x >= self.n_max] = 0.0  # P(0) = 0 already, no constant term
        return out


@dataclass(frozen=True, eq=False)
class RegionNetwork:
    """Regions, routing tensor theta[i, j, h] and light placement.

    ``theta[i, j, h]`` is the share of vehicles in ``i`` bound for ``j`` whose
    next region is ``h``; for ``j == i`` the only admissible entry is
    ``theta[i, i, i] = 1`` (trip completion).
    """

    regions: Tuple[Region, ...]
    theta: np.ndarray
    lights: Tuple[Light, ...]
    boundary_lights: Dict[Tuple[int, int], Tuple[int, ...]]
    internal_lights: Dict[int, Tuple[int, ...]]

    def __post_init__(self):
        p = len(self.regions)
        th = np.array(self.theta, dtype=float)
        if th.shape != (p, p, p):
            raise NetworkError(f"routing tensor must be {(p, p, p)}, got {th.shape}")
        if np.any(th < 0) or np.any(th > 1):
            raise NetworkError("routing shares must lie in [0, 1]")
        sums = th.sum(axis=2)
        if np.max(np.abs(sums - 1.0)) > ROUTING_TOL:
            raise NetworkError("routing rows must sum to 1")
        for i in range(p):
            if th[i, i, i] != 1.0:
                raise NetworkError(f"vehicles in region {i} bound for {i} must complete there")
            for j in range(p):
                if j != i and th[i, j, i] != 0.0:
                    raise NetworkError(f"routing ({i},{j}) cannot loop back into {i}")
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)
        n_l = len(self.lights)
        seen = []
        for key, ids in self.boundary_lights.items():
            seen.extend(ids)
        for ids in self.internal_lights.values():
            seen.extend(ids)
        if sorted(seen) != list(range(n_l)):
            raise NetworkError("every light must be placed exactly once")
        for (i, h) in self.adjacency:
            if not self.boundary_lights.get((i, h)):
                raise NetworkError(f"boundary ({i},{h}) carries routing mass but has no light")
        object.__setattr__(self, "_kernel", _Kernel(self))

    @property
    def p(self) -> int:
        return len(self.regions)

    @property
    def n_lights(self) -> int:
        return len(self.lights)

    @property
    def adjacency(self) -> List[Tuple[int, int]]:
        """Region pairs (i, h), i != h, with positive routing mass."""
        p = self.p
        mass = self.theta.sum(axis=1)
        return [(i, h) for i in range(p) for h in range(p) if i != h and mass[i, h] > 0]

    @property
    def n_max(self) -> np.ndarray:
        return np.array([r.mfd.n_max for r in self.regions])

    @property
    def rho_cr(self) -> np.ndarray:
        return np.array([r.rho_cr for r in self.regions])

    @property
    def rho_max(self) -> np.ndarray:
        return np.array([r.rho_max for r in self.regions])

    @property
    def lam_lower(self) -> np.ndarray:
        return np.array([l.lower for l in self.lights])

    @property
    def lam_upper(self) -> np.ndarray:
        return np.array([l.upper for l in self.lights])

    @property
    def lam_nominal(self) -> np.ndarray:
        return np.array([l.nominal for l in self.lights])

    def effective_u(self, lam) -> np.ndarray:
        """u[i, h] = mean boundary green ratio, 1 where no light regulates the pair."""
        return self._kernel.effective_u(np.asarray(lam, dtype=float))

    def attenuation(self, lam) -> np.ndarray:
        """a_i = 0.5 + 0.5 * mean internal green ratio (1 without internal lights)."""
        return self._kernel.attenuation(np.asarray(lam, dtype=float))

    def sensor_region(self) -> np.ndarray:
        return np.concatenate([np.full(r.sensors, i) for i, r in enumerate(self.regions)])

    def free_flow_path_times(self) -> np.ndarray:
        """tau[i, j]: free-flow hours from entering i until reaching and crossing j."""
        p = self.p
        base = np.array([r.trip_length / r.free_flow_speed for r in self.regions])
        tau = np.zeros((p, p))
        for j in range(p):
            # tau_ij = base_i + sum_h theta_ij^h tau_hj, tau_jj = base_j
            A = np.eye(p)
            b = base.copy()
            for i in range(p):
                if i != j:
                    A[i] -= self.theta[i, j]
            tau[:, j] = np.linalg.solve(A, b)
        return tau


# ---------------------------------------------------------------------------
# Demand
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DemandProfile:
    """Piecewise-linear OD demand: ``values[k]`` (p x p, veh/h) at ``times[k]`` seconds."""

    times: np.ndarray
    values: np.ndarray
    horizon: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or v.ndim != 3 or v.shape[0] != t.size or v.shape[1] != v.shape[2]:
            raise ValueError("demand needs times (K,) and values (K, p, p)")
        if t.size == 0 or np.any(np.diff(t) < 0):
            raise ValueError("demand breakpoints must be nondecreasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("demand must be finite and nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @classmethod
    def triangular(cls, p: int, pair: Tuple[int, int], peak: float, peak_time: float,
                   base: float, horizon: float, baseline=None) -> "DemandProfile":
        """Triangle of height ``peak`` and width ``base`` on one OD pair, over a constant baseline."""
        bl = np.zeros((p, p)) if baseline is None else np.asarray(baseline, dtype=float)
        t0, t1 = peak_time - base / 2.0, peak_time + base / 2.0
        times = np.array([0.0, t0, peak_time, t1, horizon])
        tri = np.zeros((5, p, p))
        tri[2][pair] = peak
        return cls(times, bl[None, :, :] + tri, horizon)

    @classmethod
    def constant(cls, q, horizon: float) -> "DemandProfile":
        q = np.asarray(q, dtype=float)
        return cls(np.array([0.0, horizon]), np.stack([q, q]), horizon)

    def scaled(self, factor: float) -> "DemandProfile":
        return DemandProfile(self.times, self.values * factor, self.horizon)


def demand_at(profile: DemandProfile, t: float) -> np.ndarray:
    """OD matrix at time ``t`` seconds; boundary values are held outside the breakpoints."""
    times, vals = profile.times, profile.values
    t = float(t)
    if t <= times[0]:
        return vals[0].copy()
    if t >= times[-1]:
        return vals[-1].copy()
    k = int(np.searchsorted(times, t, side="right")) - 1
    t0, t1 = times[k], times[k + 1]
    if t1 == t0:
        return vals[k + 1].copy()
    w = (t - t0) / (t1 - t0)
    return (1.0 - w) * vals[k] + w * vals[k + 1]


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SimState:
    n: np.ndarray
    k: int = 0
    completed_trips: float = 0.0
    vehicle_hours: float = 0.0
    queue: Optional[np.ndarray] = None
    entered: Optional[np.ndarray] = None

    def __post_init__(self):
        n = np.array(self.n, dtype=float)
        p = n.shape[0]
        if n.shape != (p, p):
            raise ValueError("accumulation must be a square matrix")
        q = np.zeros((p, p)) if self.queue is None else np.array(self.queue, dtype=float)
        e = np.zeros((p, p)) if self.entered is None else np.array(self.entered, dtype=float)
        for a in (n, q, e):
            a.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "queue", q)
        object.__setattr__(self, "entered", e)

    @classmethod
    def _trusted(cls, n, k, completed_trips, vehicle_hours, queue, entered) -> "SimState":
        """Build from freshly computed float arrays without copying them."""
        self = object.__new__(cls)
        for a in (n, queue, entered):
            a.setflags(write=False)
        self.__dict__.update(n=n, k=k, completed_trips=completed_trips,
                             vehicle_hours=vehicle_hours, queue=queue, entered=entered)
        return self

    @classmethod
    def empty(cls, p: int) -> "SimState":
        return cls(np.zeros((p, p)))

    @property
    def region_n(self) -> np.ndarray:
        return self.n.sum(axis=1)

    @property
    def total(self) -> float:
        """Vehicles in the network plus those queued at the entries."""
        return float(self.n.sum() + self.queue.sum())


@dataclass(frozen=True, eq=False)
class FlowRecord:
    """Flows realized in one step (veh/h) and the guard factors that shaped them."""

    transfer: np.ndarray      # M[i, j, h]
    completion: np.ndarray    # M_ii per region
    admitted: np.ndarray      # demand entering the network, p x p
    u: np.ndarray
    attenuation: np.ndarray
    production: np.ndarray    # attenuated production P~_i
    receiving_scale: np.ndarray

    def boundary_flow(self, i: int, h: int) -> float:
        return float(self.transfer[i, :, h].sum())


_add = np.add.reduce


def sim_step(net: RegionNetwork, state: SimState, lam, q, dt: float) -> Tuple[SimState, FlowRecord]:
    """Advance one step of ``dt`` seconds under light settings ``lam`` and demand ``q`` (veh/h).

    Raises:
        ValueError: Light settings outside their bounds or ``dt <= 0``.
        InvariantError: Negative flow or a conservation breach.
    """
    if not dt > 0:
        raise ValueError("step length must be positive")
    K = net._kernel
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.size != K.lo.size:
        raise ValueError(f"expected {K.lo.size} light settings, got {lam.size}")
    if ((lam < K.lo) | (lam > K.hi)).any():
        raise ValueError("light settings outside their bounds")
    q = np.asarray(q, dtype=float)
    p = K.p
    if q.shape != (p, p) or (q < 0).any():
        raise ValueError("demand must be a nonnegative p x p matrix")
    h = dt / SECONDS_PER_HOUR
    n = state.n
    n_i = _add(n, axis=1)
    u, a = K.lights(lam)
    P = K.production(n_i) * a

    share = n / np.where(n_i > 0, n_i, 1.0)[:, None]  # empty rows stay zero
    rate = P / K.trip  # veh/h leaving each region
    # u, theta and share are nonnegative, so a negative flow can only come from P
    M = u[:, None, :] * net.theta * (share * rate[:, None])[:, :, None]
    if P.min() < 0:
        raise InvariantError(f"step {state.k}: negative flow computed")

    # overdraw guard: a cell cannot lose more than it holds
    out_cell = _add(M, axis=2)
    over = h * out_cell > n
    if over.any():
        f = np.ones_like(n)
        f[over] = n[over] / (h * out_cell[over])
        M = M * f[:, :, None]
        out_cell = _add(M, axis=2)

    # receiving capacity: transfers into h scaled so n_h <= n_max_h.  Scaling one
    # region's inflow shrinks other regions' outflow, so iterate to a fixed point
    # (the factors only decrease).
    off = K.off
    M0 = M
    transfer = M * K.keep_transfer
    arrivals = _add(transfer, axis=0)  # [j, h]: vehicles bound for j entering h
    inflow = _add(arrivals, axis=0)
    receives = inflow > 0
    scale = K.ones
    if receives.any() and (K.n_max - n_i + h * _add(out_cell, axis=1) < h * inflow).any():
        denom = np.where(receives, h * inflow, 1.0)
        for _ in range(4 * p + 4):
            M = M0 * np.where(off, scale, 1.0)[:, None, :]
            room = K.n_max - n_i + h * _add(_add(M, axis=2), axis=1)
            cap = np.minimum(np.minimum(scale, np.maximum(room, 0.0) / denom), 1.0)
            new_scale = np.where(receives, cap, scale)
            if np.array_equal(new_scale, scale):
                break
            scale = new_scale
        else:
            M = M0 * np.where(off, scale, 1.0)[:, None, :]
        transfer = M * K.keep_transfer
        arrivals = _add(transfer, axis=0)
        out_cell = _add(M, axis=2)

    completion = M.reshape(-1)[K.diag_flat]

    # everything leaving a cell (transfers and completions) minus transfers arriving
    n_new = n - h * out_cell + h * arrivals.T
    tot_n = float(_add(n_i))
    n_new[np.abs(n_new) < 1e-12 * max(1.0, tot_n)] = 0.0
    if n_new.min() < 0:
        raise InvariantError(f"step {state.k}: negative accumulation {n_new.min():.3e}")

    # entry queue: demand enters as space allows, origin-by-origin proportionally
    waiting = state.queue + h * q
    want = _add(waiting, axis=1)
    room = np.maximum(K.n_max - _add(n_new, axis=1), 0.0)
    frac = np.minimum(room / np.maximum(want, 1e-300), 1.0)
    admitted = waiting * frac[:, None]
    n_new += admitted
    queue = waiting - admitted
    queue[queue < 1e-12 * max(1.0, float(_add(want)))] = 0.0

    old_total = tot_n + float(_add(state.queue, axis=None))
    done = float(_add(completion))
    new = SimState._trusted(
        n_new, state.k + 1, state.completed_trips + h * done,
        state.vehicle_hours + h * old_total, queue, state.entered + admitted,
    )
    new_total = float(_add(n_new, axis=None) + _add(queue, axis=None))
    lhs = new_total - old_total
    rhs = h * (float(_add(q, axis=None)) - done)
    if abs(lhs - rhs) > CONSERVATION_RTOL * max(1.0, old_total, new_total):
        raise InvariantError(f"step {state.k}: conservation breach {lhs - rhs:.3e}")
    rec = FlowRecord(transfer=transfer, completion=completion, admitted=admitted / h, u=u,
                     attenuation=a, production=P, receiving_scale=scale)
    return new, rec


# ---------------------------------------------------------------------------
# Sensing
# ---------------------------------------------------------------------------

def sense(net: RegionNetwork, state: SimState, rng: Optional[np.random.Generator],
          lam=None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-sensor densities (veh/km) and flows (veh/h) with uniform multiplicative noise.

    ``lam`` sets the attenuation used for the flow readings (nominal when omitted).
    ``rng=None`` returns noiseless readings.
    """
    reg = net.sensor_region()
    n_i = state.region_n
    lam = net.lam_nominal if lam is None else lam
    a = net.attenuation(lam)
    lengths = np.array([r.network_length for r in net.regions])
    rho_true = n_i / lengths
    phi_true = np.array([r.mfd(n_i[i]) for i, r in enumerate(net.regions)]) * a / lengths
    noise = np.array([net.regions[i].sensor_noise_rel for i in reg])
    if rng is None:
        e_rho = e_phi = np.zeros(reg.size)
    else:
        e_rho = rng.uniform(-1.0, 1.0, reg.size) * noise
        e_phi = rng.uniform(-1.0, 1.0, reg.size) * noise
    return rho_true[reg] * (1.0 + e_rho), phi_true[reg] * (1.0 + e_phi)


def aggregate(net: RegionNetwork, readings, weights=None) -> np.ndarray:
    """Per-region (weighted) arithmetic mean of sensor readings."""
    readings = np.asarray(readings, dtype=float).reshape(-1)
    reg = net.sensor_region()
    if readings.size != reg.size:
        raise ValueError(f"expected {reg.size} sensor readings, got {readings.size}")
    w = np.ones(reg.size) if weights is None else np.asarray(weights, dtype=float)
    out = np.empty(net.p)
    for i in range(net.p):
        sel = reg == i
        out[i] = float(np.sum(w[sel] * readings[sel]) / np.sum(w[sel]))
    return out


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    avg_travel_time: float   # minutes
    avg_waiting_time: float  # minutes
    vehicle_hours: float
    completed_trips: float
    peak_density: Tuple[float, ...]

    def as_dict(self) -> dict:
        return {"avg_travel_time": self.avg_travel_time, "avg_waiting_time": self.avg_waiting_time,
                "vehicle_hours": self.vehicle_hours, "completed_trips": self.completed_trips,
                "peak_density": list(self.peak_density)}

    @classmethod
    def from_dict(cls, d: dict) -> "Metrics":
        return cls(float(d["avg_travel_time"]), float(d["avg_waiting_time"]),
                   float(d["vehicle_hours"]), float(d["completed_trips"]),
                   tuple(float(x) for x in d["peak_density"]))


def metrics(net: RegionNetwork, history: Sequence[SimState]) -> Metrics:
    """Travel-time statistics from a state history (first to last state).

    Raises:
        ValueError: No trip completed over the history.
    """
    first, last = history[0], history[-1]
    trips = last.completed_trips - first.completed_trips
    if trips <= 0:
        raise ValueError("no completed trips; travel time undefined")
    vh = last.vehicle_hours - first.vehicle_hours
    travel = vh / trips
    entered = last.entered - first.entered
    tau = net.free_flow_path_times()
    free = float(np.sum(entered * tau) / entered.sum()) if entered.sum() > 0 else 0.0
    lengths = np.array([r.network_length for r in net.regions])
    peak = np.max(np.array([s.region_n for s in history]), axis=0) / lengths
    return Metrics(avg_travel_time=60.0 * travel, avg_waiting_time=60.0 * (travel - free),
                   vehicle_hours=vh, completed_trips=trips,
                   peak_density=tuple(float(x) for x in peak))


# ---------------------------------------------------------------------------
# Configuration and CSV
# ---------------------------------------------------------------------------

def network_from_dict(cfg: dict) -> RegionNetwork:
    """Build a network from its JSON-compatible description.

    Schema (keys): ``regions`` (list of {id, network_length, trip_length,
    mfd: {shape, p_max, n_max}, sensors, sensor_noise_rel, free_flow_speed}),
    ``routing`` (list of {origin, dest, via, share}; completion entries are
    implicit), ``lights`` (list of {id, kind: boundary|internal, from, to |
    region, lower, upper, nominal}).
    """
    regions = []
    for r in cfg["regions"]:
        m = r["mfd"]
        shape = m.get("shape", "parabolic")
        if shape == "parabolic":
            mfd = Mfd.parabolic(float(m["p_max"]), float(m["n_max"]))
        elif shape == "cubic":
            mfd = Mfd.cubic(float(m["p_max"]), float(m["n_max"]))
        elif shape == "poly":
            mfd = Mfd(tuple(m["coeffs"]), float(m["n_max"]))
        else:
            raise NetworkError(f"unknown MFD shape {shape!r}")
        regions.append(Region(
            id=str(r["id"]), network_length=float(r["network_length"]),
            trip_length=float(r["trip_length"]), mfd=mfd, sensors=int(r.get("sensors", 10)),
            sensor_noise_rel=float(r.get("sensor_noise_rel", 0.02)),
            free_flow_speed=float(r.get("free_flow_speed", 50.0))))
    p = len(regions)
    theta = np.zeros((p, p, p))
    for i in range(p):
        theta[i, i, i] = 1.0
    for e in cfg.get("routing", []):
        theta[int(e["origin"]), int(e["dest"]), int(e["via"])] = float(e["share"])
    lights, boundary, internal = [], {}, {}
    for idx, l in enumerate(cfg.get("lights", [])):
        lights.append(Light(str(l["id"]), float(l.get("lower", 0.0)), float(l.get("upper", 1.0)),
                            float(l.get("nominal", 0.5))))
        if l["kind"] == "boundary":
            boundary.setdefault((int(l["from"]), int(l["to"])), []).append(idx)
        elif l["kind"] == "internal":
            internal.setdefault(int(l["region"]), []).append(idx)
        else:
            raise NetworkError(f"light {l['id']}: unknown kind {l['kind']!r}")
    return RegionNetwork(tuple(regions), theta, tuple(lights),
                         {k: tuple(v) for k, v in boundary.items()},
                         {k: tuple(v) for k, v in internal.items()})


def load_network(path: Union[str, Path]) -> RegionNetwork:
    with open(path) as fh:
        return network_from_dict(json.load(fh))


STATE_CSV_FIXED = ["k", "region", "density", "flow", "n_total"]


def write_state_csv(path: Union[str, Path], rows: Sequence[dict], n_lights: int) -> None:
    """Per-step, per-region rows ``k,region,density,flow,n_total,lambda_0..``."""
    header = STATE_CSV_FIXED + [f"lambda_{j}" for j in range(n_lights)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([r["k"], r["region"]] + [format(float(r[c]), ".17g") for c in STATE_CSV_FIXED[2:]]
                       + [format(float(x), ".17g") for x in r["lambda"]])


def read_state_csv(path: Union[str, Path]) -> List[dict]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header[:5] != STATE_CSV_FIXED:
            raise ValueError(f"{path}: unexpected header {header[:5]}")
        out = []
        for row in rd:
            if not row:
                continue
            out.append({"k": int(row[0]), "region": int(row[1]), "density": float(row[2]),
                        "flow": float(row[3]), "n_total": float(row[4]),
                        "lambda": np.array([float(x) for x in row[5:]])})
    return out


def state_rows(net: RegionNetwork, k: int, rho_bar, phi_bar, state: SimState, lam) -> List[dict]:
    return [{"k": k, "region": i, "density": float(rho_bar[i]), "flow": float(phi_bar[i]),
             "n_total": float(state.region_n[i]), "lambda": np.asarray(lam, dtype=float)}
            for i in range(net.p)]
