"""Dense convex QP solver for equality and box constrained problems.

Problems have the form::

    minimize    1/2 x'Px + q'x + w * sum(|x_i| for i in l1_index) + constant
    subject to  A_eq x = b_eq,   lower <= x <= upper

The solver is an operator-splitting (ADMM) scheme in the style of OSQP:
Ruiz equilibration, over-relaxation, an adaptive penalty and a final
active-set polish that turns a moderately accurate splitting iterate into an
exact KKT point whenever the guessed active set is right.  The L1 term lives
inside the splitting as a soft-threshold in the box-row projection.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.linalg as sla
from scipy.optimize import lsq_linear

ALPHA = 1.6
SIGMA = 1e-6
RHO0 = 0.1
RHO_EQ_SCALE = 1e3
RHO_RATIO = 5.0
RHO_INTERVAL = 100
RHO_MIN, RHO_MAX = 1e-6, 1e6
CHECK_EVERY = 10
STALL_FACTOR = 0.999
STALL_WINDOW = 200
RUIZ_ITERS = 10
LP_EPS = 1e-8

TOL_P = 1e-6
TOL_D = 1e-6
MAX_ITER = 20000
POLISH_DELTA = 1e-7
POLISH_REFINE = 4
POLISH_ATTEMPTS = 16
POLISH_SPACING = 100
# tolerance of the primal infeasibility certificate (scaled space)
PINF_TOL = 1e-4


class Status(enum.Enum):
    SOLVED = "Solved"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"


@dataclass
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    l1_weight: float = 0.0
    l1_index: Optional[np.ndarray] = None
    constant: float = 0.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        d = self.q.size
        self.P = np.asarray(self.P, dtype=float).reshape(d, d)
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, d)
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (d,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (d,)).copy()
        if self.b_eq.size != self.A_eq.shape[0]:
            raise ValueError("A_eq and b_eq disagree on the number of rows")
        if np.max(np.abs(self.P - self.P.T), initial=0.0) > 1e-12 * max(1.0, np.abs(self.P).max(initial=0.0)):
            raise ValueError("P must be symmetric")
        if np.any(self.lower > self.upper):
            raise ValueError("lower must not exceed upper")
        if self.l1_weight < 0:
            raise ValueError("l1_weight must be nonnegative")
        if self.l1_index is None:
            self.l1_index = np.zeros(0, dtype=int)
        self.l1_index = np.asarray(self.l1_index, dtype=int).reshape(-1)

    @property
    def dim(self) -> int:
        return self.q.size

    @property
    def n_eq(self) -> int:
        return self.b_eq.size

    def l1_weights(self) -> np.ndarray:
        w = np.zeros(self.dim)
        w[self.l1_index] = self.l1_weight
        return w

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.P @ x + self.q @ x
                     + self.l1_weight * np.abs(x[self.l1_index]).sum() + self.constant)

    def dump(self, path: Union[str, Path]) -> None:
        """Write every array as a matrix-market style coordinate block."""
        with open(path, "w") as fh:
            fh.write("%%QpProblem dense dump\n")
            fh.write(f"% l1_weight {self.l1_weight!r}\n% constant {self.constant!r}\n")
            for name in ("P", "q", "A_eq", "b_eq", "lower", "upper", "l1_index"):
                arr = np.atleast_2d(getattr(self, name))
                if name != "P" and name != "A_eq":
                    arr = arr.reshape(-1, 1)
                rows, cols = arr.shape
                nz = [(i, j, arr[i, j]) for i in range(rows) for j in range(cols) if arr[i, j] != 0]
                fh.write(f"%block {name}\n{rows} {cols} {len(nz)}\n")
                for i, j, v in nz:
                    fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def load_dump(path: Union[str, Path]) -> QpProblem:
    blocks = {}
    meta = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    k = 0
    while k < len(lines):
        line = lines[k]
        if line.startswith("%block"):
            name = line.split()[1]
            rows, cols, nnz = map(int, lines[k + 1].split())
            arr = np.zeros((rows, cols))
            for entry in lines[k + 2:k + 2 + nnz]:
                i, j, v = entry.split()
                arr[int(i) - 1, int(j) - 1] = float(v)
            blocks[name] = arr
            k += 2 + nnz
            continue
        if line.startswith("% "):
            key, val = line[2:].split(maxsplit=1)
            meta[key] = float(val)
        k += 1
    return QpProblem(P=blocks["P"], q=blocks["q"].ravel(), A_eq=blocks["A_eq"],
                     b_eq=blocks["b_eq"].ravel(), lower=blocks["lower"].ravel(),
                     upper=blocks["upper"].ravel(), l1_weight=meta.get("l1_weight", 0.0),
                     l1_index=blocks["l1_index"].ravel().astype(int),
                     constant=meta.get("constant", 0.0))


@dataclass
class QpSolution:
    x: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    status: Status
    y_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y_box: np.ndarray = field(default_factory=lambda: np.zeros(0))
    polished: bool = False

    @property
    def solved(self) -> bool:
        return self.status is Status.SOLVED


def primal_residual(prob: QpProblem, x) -> float:
    x = np.asarray(x, dtype=float)
    r_eq = np.max(np.abs(prob.A_eq @ x - prob.b_eq), initial=0.0)
    r_box = max(np.max(prob.lower - x, initial=0.0), np.max(x - prob.upper, initial=0.0), 0.0)
    return float(max(r_eq, r_box))


def _multiplier_bounds(prob: QpProblem, x: np.ndarray, act_tol: float):
    """Interval of admissible box plus L1 multipliers for each coordinate at ``x``."""
    w = prob.l1_weights()
    lo = np.zeros_like(x)
    hi = np.zeros_like(x)
    lo[x <= prob.lower + act_tol] = -np.inf
    hi[x >= prob.upper - act_tol] = np.inf
    pos = x > act_tol
    neg = x < -act_tol
    zero = ~(pos | neg)
    lo += np.where(pos, w, np.where(neg, -w, -w * zero))
    hi += np.where(pos, w, np.where(neg, -w, w * zero))
    return lo, hi


def dual_residual(prob: QpProblem, x, y_eq, act_tol: float = TOL_P) -> float:
    """Stationarity residual with the best box/L1 multipliers for fixed ``y_eq``.

    For each coordinate the admissible multiplier set is the sum of the box
    normal cone and the L1 subdifferential at x_i; the residual is the
    distance of the remaining gradient to that interval.
    """
    x = np.asarray(x, dtype=float)
    g = prob.P @ x + prob.q
    if prob.n_eq:
        g = g + prob.A_eq.T @ np.asarray(y_eq, dtype=float)
    lo, hi = _multiplier_bounds(prob, x, act_tol)
    target = -g
    dist = np.maximum(lo - target, 0.0) + np.maximum(target - hi, 0.0)
    return float(np.max(dist, initial=0.0))


def _ruiz(P, A, q, iters=RUIZ_ITERS):
    d, e = P.shape[0], A.shape[0]
    D = np.ones(d)
    E = np.ones(e)
    Ps, As = P.copy(), A.copy()
    for _ in range(iters):
        col = np.abs(Ps).max(axis=0, initial=0.0)
        if e:
            col = np.maximum(col, np.abs(As).max(axis=0, initial=0.0))
        # the box rows x = z act like identity rows of the constraint matrix
        col = np.maximum(col, D)
        col = np.clip(col, 1e-4, 1e4)
        col[col <= 1e-4] = 1.0
        dd = 1.0 / np.sqrt(col)
        if e:
            row = np.abs(As).max(axis=1, initial=0.0)
            row = np.clip(row, 1e-4, 1e4)
            row[row <= 1e-4] = 1.0
            ee = 1.0 / np.sqrt(row)
        else:
            ee = np.ones(0)
        Ps = dd[:, None] * Ps * dd[None, :]
        As = ee[:, None] * As * dd[None, :]
        D *= dd
        E *= ee
    qs = D * q
    scale = max(np.abs(Ps).max(axis=0, initial=0.0).mean() if d else 0.0,
                np.abs(qs).max(initial=0.0))
    c = 1.0 / np.clip(scale, 1e-4, 1e4) if scale > 0 else 1.0
    return D, E, c


class AdmmSolver:
    """Reusable splitting solver for a fixed (P, A_eq) pair.

    Only q, b_eq, bounds and the L1 weight may change between calls, which
    lets a receding-horizon controller keep the scaling and the cached
    factorizations across solves.
    """

    def __init__(self, P, A_eq, q_hint=None):
        P = np.asarray(P, dtype=float)
        A = np.asarray(A_eq, dtype=float).reshape(-1, P.shape[0])
        self.d, self.e = P.shape[0], A.shape[0]
        q_hint = np.zeros(self.d) if q_hint is None else np.asarray(q_hint, dtype=float)
        self.D, self.E, self.c = _ruiz(P, A, q_hint)
        self.P = P
        self.A = A
        self.Ps = self.c * (self.D[:, None] * P * self.D[None, :])
        self.As = self.E[:, None] * A * self.D[None, :]
        self._factors = {}

    def _factor(self, rho: float):
        key = round(float(np.log2(rho)), 6)
        f = self._factors.get(key)
        if f is None:
            K = self.Ps + SIGMA * np.eye(self.d) + rho * np.eye(self.d)
            if self.e:
                K += rho * RHO_EQ_SCALE * (self.As.T @ self.As)
            f = sla.cho_factor(K, lower=True, check_finite=False)
            self._factors[key] = f
        return f

    def solve(self, prob: QpProblem, tol_p: float = TOL_P, tol_d: float = TOL_D,
              max_iter: int = MAX_ITER, warm_x=None, warm_y=None,
              polish: bool = True) -> QpSolution:
        D, E, c = self.D, self.E, self.c
        d, e = self.d, self.e
        qs = c * D * prob.q
        bs = E * prob.b_eq
        ls = prob.lower / D
        us = prob.upper / D
        ws = c * D * prob.l1_weights()
        has_l1 = bool(np.any(ws > 0))

        if warm_x is not None:
            x = np.asarray(warm_x, dtype=float) / D
        else:
            x = np.clip(np.zeros(d), ls, us)
        y_eq = np.zeros(e)
        y_box = np.zeros(d)
        if warm_y is not None:
            wy = np.asarray(warm_y, dtype=float)
            y_eq = wy[:e] * c / E
            y_box = wy[e:] * c * D
        z_eq = bs.copy()
        z_box = np.clip(x, ls, us)
        rho = RHO0
        rho_eq = rho * RHO_EQ_SCALE
        fac = self._factor(rho)

        best_rp = np.inf
        since_improve = 0
        tried = set()
        last_key = None
        last_rho_update = 0
        next_polish = 20
        rho_interval = RHO_INTERVAL
        status = Status.MAX_ITERATIONS
        result = None
        it = 0
        checks_early = {1, 2, 3, 4, 5}
        while it < max_iter:
            it += 1
            rhs = SIGMA * x - qs + rho * z_box - y_box
            if e:
                rhs += self.As.T @ (rho_eq * z_eq - y_eq)
            xt = sla.cho_solve(fac, rhs, check_finite=False)
            x = ALPHA * xt + (1 - ALPHA) * x
            # equality rows
            if e:
                zt_eq = self.As @ xt
                relax_eq = ALPHA * zt_eq + (1 - ALPHA) * z_eq
                z_eq_new = bs
                dy_eq = rho_eq * (relax_eq - z_eq_new)
                y_eq = y_eq + dy_eq
                z_eq = z_eq_new
            relax_box = ALPHA * xt + (1 - ALPHA) * z_box
            v = relax_box + y_box / rho
            if has_l1:
                v = np.sign(v) * np.maximum(np.abs(v) - ws / rho, 0.0)
            z_new = np.clip(v, ls, us)
            dy_box = rho * (relax_box - z_new)
            y_box = y_box + dy_box
            z_box = z_new

            if it in checks_early or it % CHECK_EVERY == 0:
                xu = D * x
                yu_eq = E * y_eq / c
                rp = primal_residual(prob, xu)
                rd = dual_residual(prob, xu, yu_eq, act_tol=tol_p)
                if rp <= tol_p and rd <= tol_d:
                    status = Status.SOLVED
                    result = (xu, yu_eq, y_box / (c * D), False)
                    if polish:
                        key = self._active_signature(x, z_box, y_box, ls, us, ws)
                        if key not in tried:
                            result = self._polish(prob, key, tol_p, tol_d) or result
                    break
                if self._primal_infeasible(dy_eq if e else None, dy_box, bs, ls, us):
                    status = Status.INFEASIBLE
                    break
                # native residuals in scaled space drive rho and stall detection
                rp_s = max(np.max(np.abs(self.As @ x - bs), initial=0.0) if e else 0.0,
                           np.max(np.abs(x - z_box), initial=0.0))
                grad = self.Ps @ x + qs + y_box
                if e:
                    grad += self.As.T @ y_eq
                rd_s = np.max(np.abs(grad), initial=0.0)
                if polish and it >= next_polish and len(tried) < POLISH_ATTEMPTS:
                    key = self._active_signature(x, z_box, y_box, ls, us, ws)
                    stable = key == last_key
                    last_key = key
                    if stable and key not in tried:
                        tried.add(key)
                        # failed guesses push the next attempt further out
                        next_polish = max(next_polish, it + len(tried) * POLISH_SPACING)
                        pol = self._polish(prob, key, tol_p, tol_d)
                        if pol is not None:
                            status = Status.SOLVED
                            result = pol
                            break
                if rp_s < STALL_FACTOR * best_rp:
                    best_rp = rp_s
                    since_improve = 0
                else:
                    since_improve += CHECK_EVERY if it % CHECK_EVERY == 0 else 1
                    if since_improve >= STALL_WINDOW and rp > tol_p:
                        if polish:
                            key = self._active_signature(x, z_box, y_box, ls, us, ws)
                            if key not in tried:
                                tried.add(key)
                                pol = self._polish(prob, key, tol_p, tol_d)
                                if pol is not None:
                                    status = Status.SOLVED
                                    result = pol
                                    break
                        # slow convergence without an infeasibility certificate: keep going
                        since_improve = 0
                        best_rp = rp_s
                # normalizers include the constraint terms (A x, z, A' y), as in OSQP;
                # without A' y an LP (P ~ 0) looks dual-dominated and rho collapses
                norm_p = max(np.max(np.abs(x), initial=0.0), np.max(np.abs(z_box), initial=0.0),
                             np.max(np.abs(bs), initial=0.0), 1e-10)
                aty = np.abs(y_box)
                if e:
                    aty = np.abs(self.As.T @ y_eq + y_box)
                    norm_p = max(norm_p, np.max(np.abs(self.As @ x), initial=0.0))
                norm_d = max(np.max(np.abs(self.Ps @ x), initial=0.0), np.max(np.abs(qs), initial=0.0),
                             np.max(aty, initial=0.0), np.max(np.abs(y_box), initial=0.0), 1e-10)
                rel_p = rp_s / norm_p
                rel_d = rd_s / norm_d
                new_rho = rho
                factor = np.sqrt(max(rel_p, 1e-300) / max(rel_d, 1e-300))
                if (factor > RHO_RATIO or factor < 1.0 / RHO_RATIO) and it - last_rho_update >= rho_interval:
                    # the interval doubles so that penalty changes die out and the
                    # fixed-penalty convergence guarantee applies eventually
                    last_rho_update = it
                    rho_interval *= 2
                    # snap to powers of two so cached factorizations get reused
                    new_rho = float(np.clip(2.0 ** np.round(np.log2(rho * factor)), RHO_MIN, RHO_MAX))
                if new_rho != rho:
                    rho = new_rho
                    rho_eq = rho * RHO_EQ_SCALE
                    fac = self._factor(rho)

        if result is None:
            xu = D * x
            yu_eq = E * y_eq / c
            result = (xu, yu_eq, y_box / (c * D), False)
        xu, yu_eq, yu_box, polished = result
        return QpSolution(x=xu, objective=prob.objective(xu),
                          primal_residual=primal_residual(prob, xu),
                          dual_residual=dual_residual(prob, xu, yu_eq, act_tol=tol_p),
                          iterations=it, status=status, y_eq=yu_eq, y_box=yu_box,
                          polished=polished)

    def _primal_infeasible(self, dy_eq, dy_box, bs, ls, us) -> bool:
        """Farkas-type certificate from the last dual increment, as in OSQP.

        For an infeasible problem the dual increments converge to a direction
        ``dy`` with ``A' dy_eq + dy_box = 0`` and a negative support value
        ``b' dy_eq + sum(u max(dy_box, 0) + l min(dy_box, 0))``.
        """
        norm = np.max(np.abs(dy_box), initial=0.0)
        if dy_eq is not None:
            norm = max(norm, np.max(np.abs(dy_eq), initial=0.0))
        if norm < 1e-12:
            return False
        db = dy_box / norm
        r = db.copy()
        supp = 0.0
        if dy_eq is not None:
            de = dy_eq / norm
            r += self.As.T @ de
            supp += float(bs @ de)
        if np.max(np.abs(r), initial=0.0) > PINF_TOL:
            return False
        pos = db > PINF_TOL
        neg = db < -PINF_TOL
        if np.any(pos & ~np.isfinite(us)) or np.any(neg & ~np.isfinite(ls)):
            return False
        supp += float(us[pos] @ db[pos]) + float(ls[neg] @ db[neg])
        return supp < -PINF_TOL

    @staticmethod
    def _active_signature(x, z, y, ls, us, ws):
        bound_y = y.copy()
        nz = z != 0
        bound_y[nz] -= ws[nz] * np.sign(z[nz])
        lower_act = (z - ls < -bound_y) & np.isfinite(ls)
        upper_act = (us - z < bound_y) & np.isfinite(us) & ~lower_act
        zero_act = (ws > 0) & (z == 0) & ~lower_act & ~upper_act
        sign = np.where(ws > 0, np.sign(z), 0.0)
        code = np.zeros(x.size, dtype=np.int8)
        code[lower_act] = 1
        code[upper_act] = 2
        code[zero_act] = 3
        free_sign = np.where(code == 0, sign, 0).astype(np.int8)
        return code.tobytes() + free_sign.tobytes()

    def _polish(self, prob: QpProblem, key: bytes, tol_p: float, tol_d: float):
        d, e = self.d, self.e
        code = np.frombuffer(key[:d], dtype=np.int8)
        sign = np.frombuffer(key[d:], dtype=np.int8).astype(float)
        fixed = code != 0
        xfix = np.zeros(d)
        xfix[code == 1] = prob.lower[code == 1]
        xfix[code == 2] = prob.upper[code == 2]
        free = ~fixed
        w = prob.l1_weights()
        qeff = prob.q + w * sign
        # polish in scaled coordinates for conditioning
        D, E, c = self.D, self.E, self.c
        Ds = D[free]
        Pff = self.Ps[np.ix_(free, free)]
        Af = self.As[:, free]
        rhs_x = -c * D[free] * (qeff[free] + prob.P[np.ix_(free, fixed)] @ xfix[fixed])
        rhs_e = E * (prob.b_eq - prob.A_eq[:, fixed] @ xfix[fixed])
        nf = int(free.sum())
        K = np.zeros((nf + e, nf + e))
        K[:nf, :nf] = Pff
        K[:nf, nf:] = Af.T
        K[nf:, :nf] = Af
        rhs = np.concatenate([rhs_x, rhs_e])
        # Fast path: regularized quasi-definite system plus iterative refinement
        # against the exact one; least squares only when that does not certify.
        Kr = K.copy()
        Kr[np.arange(nf), np.arange(nf)] += POLISH_DELTA
        Kr[np.arange(nf, nf + e), np.arange(nf, nf + e)] -= POLISH_DELTA
        try:
            lu = sla.lu_factor(Kr, check_finite=False)
            sol = sla.lu_solve(lu, rhs, check_finite=False)
            for _ in range(POLISH_REFINE):
                sol = sol + sla.lu_solve(lu, rhs - K @ sol, check_finite=False)
            out = self._certify(prob, sol, nf, free, xfix, sign, tol_p, tol_d)
            if out is not None:
                return out
            x_try = xfix.copy()
            x_try[free] = Ds * sol[:nf]
            if np.all(np.isfinite(x_try)) and primal_residual(prob, x_try) <= tol_p:
                return None  # linear algebra fine, the guessed active set is wrong
        except (np.linalg.LinAlgError, ValueError):
            pass
        try:
            sol, *_ = sla.lstsq(K, rhs, lapack_driver="gelsy", check_finite=False)
            res = rhs - K @ sol
            corr, *_ = sla.lstsq(K, res, lapack_driver="gelsy", check_finite=False)
            sol = sol + corr
        except (np.linalg.LinAlgError, ValueError):
            return None
        return self._certify(prob, sol, nf, free, xfix, sign, tol_p, tol_d)

    def _repair_duals(self, prob, x, y_eq, free, tol_p, tol_d):
        """Re-pick equality multipliers when stationarity leaves them undetermined.

        Moving ``y_eq`` along the null space of ``A_free'`` keeps the
        free-variable stationarity intact, so that freedom is spent on giving
        the fixed variables admissible multiplier signs (bounded least
        squares).  Rows no free variable touches are tried first because they
        need no factorization.  The full null space is only computed when the
        free columns are too few to span the rows (a degenerate vertex), which
        keeps wide programs such as DeePC off the SVD path.
        """
        if self.e == 0 or not np.any(~free):
            return None
        A = prob.A_eq
        decoupled = ~np.any(A[:, free] != 0, axis=1)
        if np.any(decoupled):
            y = self._repair_along(prob, x, y_eq, free, np.eye(self.e)[:, decoupled], tol_p)
            if dual_residual(prob, x, y, act_tol=tol_p) <= tol_d:
                return y
        if int(free.sum()) >= self.e:
            return None
        N = sla.null_space(A[:, free].T)
        if N.shape[1] == 0:
            return None
        return self._repair_along(prob, x, y_eq, free, N, tol_p)

    @staticmethod
    def _repair_along(prob, x, y_eq, free, N, tol_p):
        A = prob.A_eq
        act = ~free
        g = (prob.P @ x + prob.q + A.T @ y_eq)[act]
        lo, hi = _multiplier_bounds(prob, x, tol_p)
        M = A[:, act].T @ N
        k, na = N.shape[1], int(act.sum())
        lb = np.concatenate([np.full(k, -np.inf), lo[act]])
        ub = np.concatenate([np.full(k, np.inf), hi[act]])
        # lsq_linear needs lb < ub strictly; widen degenerate intervals by an ulp
        same = lb >= ub
        ub = ub.copy()
        ub[same] = lb[same] + np.maximum(np.abs(lb[same]), 1.0) * 1e-15
        res = lsq_linear(np.hstack([M, np.eye(na)]), -g, bounds=(lb, ub))
        return y_eq + N @ res.x[:k]

    def _certify(self, prob, sol, nf, free, xfix, sign, tol_p, tol_d):
        D, E, c = self.D, self.E, self.c
        e = self.e
        w = prob.l1_weights()
        x = xfix.copy()
        x[free] = D[free] * sol[:nf]
        y_eq = E * sol[nf:] / c
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y_eq))):
            return None
        rp = primal_residual(prob, x)
        if rp > tol_p:
            return None
        free_l1 = free & (w > 0)
        if np.any(sign[free_l1] * x[free_l1] < -tol_p):
            return None
        rd = dual_residual(prob, x, y_eq, act_tol=tol_p)
        if rd > tol_d:
            y_eq = self._repair_duals(prob, x, y_eq, free, tol_p, tol_d)
            if y_eq is None or dual_residual(prob, x, y_eq, act_tol=tol_p) > tol_d:
                return None
        g = prob.P @ x + prob.q + (prob.A_eq.T @ y_eq if e else 0.0)
        return x, y_eq, -g, True


def solve_qp(prob: QpProblem, tol_p: float = TOL_P, tol_d: float = TOL_D,
             max_iter: int = MAX_ITER, warm_x=None, warm_y=None,
             polish: bool = True) -> QpSolution:
    """Solve ``prob``; see the module docstring for the problem form."""
    solver = AdmmSolver(prob.P, prob.A_eq, prob.q)
    return solver.solve(prob, tol_p=tol_p, tol_d=tol_d, max_iter=max_iter,
                        warm_x=warm_x, warm_y=warm_y, polish=polish)


def lp_as_qp(c, A_eq, b_eq, lower, upper, constant: float = 0.0) -> QpProblem:
    c = np.asarray(c, dtype=float).reshape(-1)
    eps = LP_EPS * max(np.max(np.abs(c), initial=0.0), 1e-300)
    return QpProblem(P=eps * np.eye(c.size), q=c, A_eq=A_eq, b_eq=b_eq,
                     lower=lower, upper=upper, constant=constant)


def solve_lp(c, A_eq, b_eq, lower, upper, tol_p: float = TOL_P, tol_d: float = TOL_D,
             max_iter: int = MAX_ITER) -> QpSolution:
    """Minimize c'x over the box/equality set via a tiny quadratic perturbation.

    The reported objective is c'x, without the perturbation term.
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    prob = lp_as_qp(c, A_eq, b_eq, lower, upper)
    sol = solve_qp(prob, tol_p=tol_p, tol_d=tol_d, max_iter=max_iter)
    sol.objective = float(c @ sol.x)
    return sol
