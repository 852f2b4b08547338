"""Experiment orchestration: offline data collection, closed-loop runs, comparison.

A scenario is a JSON file naming a network file, a demand profile, timing,
seeds and controller settings.  Everything random draws from generators seeded
by the scenario (overridable through environment variables), so repeated
invocations produce byte-identical outputs.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import shutil
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .behavioral import Trajectory, hankel, numeric_rank
from .deepc import (DeepcConfig, DeepcController, DeepcInfeasible, ReferenceSpec, Regularizer,
                    build_deepc_data)
from .deepc import ConfigError as DeepcConfigError
from .mpc_baseline import DEFAULT_PIECES, LmpcController, plan_rows, write_plan_csv
from .trafficsim import (DemandProfile, InvariantError, Metrics, NetworkError, RegionNetwork,
                         SimState, aggregate, demand_at, metrics, network_from_dict, sense,
                         sim_step, state_rows, write_state_csv)

CONTROLLERS = ("deepc", "mpc", "none")
CONTROLLER_LABELS = {"deepc": "DeePC", "mpc": "MPC", "none": "No Control"}
SEED_ENV = {"sim": "DEEPC_TRAFFIC_SEED_SIM", "noise": "DEEPC_TRAFFIC_SEED_NOISE",
            "excitation": "DEEPC_TRAFFIC_SEED_EXCITATION"}
RANDOM_WALK = "random_walk"
APPLIED_TOL = 1e-9


class ConfigError(ValueError):
    """The scenario description is unusable."""


class RunAborted(RuntimeError):
    """A closed-loop run stopped early; partial traces were written."""

    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Seeds:
    sim: int = 0
    noise: int = 1
    excitation: int = 2


@dataclass(frozen=True)
class CollectSettings:
    """Offline excitation: demand episodes on the driven pair plus slow perturbations.

    ``levels`` holds one entry per episode, either a constant demand on
    ``pair`` (veh/h) or ``"random_walk"``.  The other OD pairs follow bounded
    random walks around the scenario baseline so that every demand channel is
    excited.
    """

    levels: Tuple[Union[float, str], ...] = (60.0, 120.0, 180.0, RANDOM_WALK)
    episode_steps: int = 200
    pair: Tuple[int, int] = (0, 1)
    walk_start: float = 250.0
    walk_step: float = 20.0
    walk_max: float = 220.0
    perturb_step: float = 0.05
    perturb_span: float = 0.2
    perturb_floor: float = 30.0
    order_bound: Optional[int] = None


@dataclass(frozen=True)
class DeepcSettings:
    t_ini: int = 6
    t_f: int = 12
    q: Tuple[float, ...] = (0.0, 1.0)
    r: float = 0.1
    lambda_g: float = 1.0
    regularizer: str = "squared_two_norm"
    max_iter: int = 20000


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully resolved scenario.

    Attributes:
        name: Scenario label.
        network_file: Path of the network description.
        network: The parsed network.
        demand_spec: The demand block as written in the file.
        demand: The resolved profile.
        dt: Simulation step, seconds.
        steps: Closed-loop run length.
        duty_cycle: Steps per traffic-light cycle (the DeePC apply window).
        seeds: Generator seeds after environment overrides.
        collect: Offline excitation settings.
        deepc: DeePC settings.
        mpc_pieces: Affine pieces per region for the LMPC baseline.
        mpc_horizon: LMPC horizon in cycles (default: equal lookahead with DeePC).
        forecast_noise: Relative noise on the demand forecast (0 = exact).
    """

    name: str
    network_file: Path
    network: RegionNetwork
    network_spec: dict
    demand_spec: dict
    demand: DemandProfile
    dt: float
    steps: int
    duty_cycle: int
    seeds: Seeds
    collect: CollectSettings
    deepc: DeepcSettings
    mpc_pieces: int = DEFAULT_PIECES
    mpc_horizon: Optional[int] = None
    forecast_noise: float = 0.0

    @property
    def lmpc_horizon(self) -> int:
        if self.mpc_horizon is not None:
            return self.mpc_horizon
        return max(1, self.deepc.t_f // self.duty_cycle)

    @property
    def order_bound(self) -> int:
        ob = self.collect.order_bound
        return 2 * self.network.p if ob is None else int(ob)

    def fingerprint(self) -> str:
        """Hash of what makes two runs comparable: network, demand and timing."""
        blob = json.dumps({"network": self.network_spec, "demand": self.demand_spec,
                           "dt": self.dt, "steps": self.steps, "duty_cycle": self.duty_cycle},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _demand_from_spec(spec: dict, p: int) -> DemandProfile:
    kind = spec.get("profile", "custom")
    horizon = float(spec["horizon"])
    if kind in ("uncongested", "congested", "triangular"):
        baseline = np.asarray(spec.get("baseline", np.zeros((p, p))), dtype=float)
        return DemandProfile.triangular(p, tuple(spec["pair"]), float(spec["peak"]),
                                        float(spec["peak_time"]), float(spec["base"]), horizon,
                                        baseline=baseline)
    if kind == "custom":
        return DemandProfile(np.asarray(spec["times"], float), np.asarray(spec["values"], float),
                             horizon)
    raise ConfigError(f"unknown demand profile {kind!r}")


def _seed_overrides(seeds: dict, env) -> Seeds:
    vals = {k: int(seeds.get(k, getattr(Seeds(), k))) for k in SEED_ENV}
    for k, var in SEED_ENV.items():
        if var in env and env[var] != "":
            try:
                vals[k] = int(env[var])
            except ValueError as exc:
                raise ConfigError(f"{var} must be an integer") from exc
    return Seeds(**vals)


def load_config(path: Union[str, Path], env=None) -> ScenarioConfig:
    """Read a scenario file; seeds may be overridden by ``DEEPC_TRAFFIC_SEED_*``.

    Raises:
        ConfigError: Missing files, bad JSON or inconsistent values.
    """
    env = os.environ if env is None else env
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
        net_file = (path.parent / raw["network"]).resolve()
        net_spec = json.loads(net_file.read_text())
        net = network_from_dict(net_spec)
        demand = _demand_from_spec(raw["demand"], net.p)
        if demand.p != net.p:
            raise ConfigError("demand and network disagree on the number of regions")
        col = dict(raw.get("collect", {}))
        if "levels" in col:
            col["levels"] = tuple(x if x == RANDOM_WALK else float(x) for x in col["levels"])
        if "pair" in col:
            col["pair"] = tuple(int(v) for v in col["pair"])
        dp = dict(raw.get("deepc", {}))
        if "q" in dp:
            dp["q"] = tuple(float(v) for v in dp["q"])
        mpc = raw.get("mpc", {})
        cfg = ScenarioConfig(
            name=str(raw.get("name", path.stem)), network_file=net_file, network=net,
            network_spec=net_spec, demand_spec=raw["demand"], demand=demand,
            dt=float(raw.get("dt", 10.0)), steps=int(raw.get("steps", 360)),
            duty_cycle=int(raw.get("duty_cycle", 6)),
            seeds=_seed_overrides(raw.get("seeds", {}), env),
            collect=CollectSettings(**col), deepc=DeepcSettings(**dp),
            mpc_pieces=int(mpc.get("pieces", DEFAULT_PIECES)),
            mpc_horizon=None if mpc.get("horizon") is None else int(mpc["horizon"]),
            forecast_noise=float(raw.get("forecast_noise", 0.0)))
    except ConfigError:
        raise
    except (OSError, KeyError, TypeError, ValueError, NetworkError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if cfg.dt <= 0 or cfg.steps < 1 or cfg.duty_cycle < 1:
        raise ConfigError("dt, steps and duty_cycle must be positive")
    if len(cfg.deepc.q) != net.p:
        raise ConfigError(f"deepc.q needs {net.p} weights")
    if cfg.deepc.t_f % cfg.duty_cycle:
        raise ConfigError("deepc.t_f must be a multiple of duty_cycle")
    return cfg


# ---------------------------------------------------------------------------
# Collection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RankReport:
    depth: int
    m: int
    order_bound: int
    rank: int
    required: int

    @property
    def ratio(self) -> float:
        return self.rank / self.required

    @property
    def exciting(self) -> bool:
        """At least ``m L + n_hat`` independent rows (noise may push the rank higher)."""
        return self.rank >= self.required

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(ratio=self.ratio, exciting=self.exciting)
        return d


@dataclass
class CollectResult:
    u: Trajectory
    y: Trajectory
    rank: RankReport


def input_vector(lam, q) -> np.ndarray:
    """DeePC input sample: light settings followed by the row-major OD demand."""
    return np.concatenate([np.asarray(lam, float).reshape(-1), np.asarray(q, float).reshape(-1)])


def rank_report(u: Trajectory, y: Trajectory, depth: int, order_bound: int) -> RankReport:
    w = u.stack(y)
    r = numeric_rank(hankel(w, depth))
    return RankReport(depth=depth, m=u.channels, order_bound=order_bound, rank=r,
                      required=u.channels * depth + order_bound)


def collect(cfg: ScenarioConfig, amplitude: float = 1.0) -> CollectResult:
    """Open-loop excitation run producing the DeePC data set.

    Light settings are drawn uniformly in their boxes once per duty cycle
    (``amplitude`` scales the draw around nominal; 0 holds nominal).

    Raises:
        RunAborted: A simulator invariant broke (the step index is attached).
    """
    net, cs = cfg.network, cfg.collect
    p = net.p
    rng_x = np.random.default_rng(cfg.seeds.excitation)
    rng_n = np.random.default_rng(cfg.seeds.noise)
    baseline = demand_at(cfg.demand, 0.0)
    center = baseline.copy()
    center[cs.pair] = 0.0
    lo_b = np.maximum(center * (1 - cs.perturb_span), 0.0)
    hi_b = np.maximum(center * (1 + cs.perturb_span), cs.perturb_floor)
    hi_b[cs.pair] = 0.0
    other = center.copy()
    walk = cs.walk_start
    nominal = net.lam_nominal
    s = SimState.empty(p)
    U, Y = [], []
    lam = nominal
    k = 0
    for level in cs.levels:
        for kk in range(cs.episode_steps):
            if level == RANDOM_WALK:
                walk = float(np.clip(walk + rng_x.normal(0.0, cs.walk_step), 0.0, cs.walk_max))
                drive = walk
            else:
                drive = float(level)
            other = np.clip(other + rng_x.normal(0.0, 1.0, (p, p)) * cs.perturb_step * hi_b,
                            lo_b, hi_b)
            q = other.copy()
            q[cs.pair] = drive
            if k % cfg.duty_cycle == 0:
                draw = rng_x.uniform(net.lam_lower, net.lam_upper)
                lam = nominal + amplitude * (draw - nominal)
            try:
                s, _ = sim_step(net, s, lam, q, cfg.dt)
            except InvariantError as exc:
                raise RunAborted(str(exc), k) from exc
            rho, _ = sense(net, s, rng_n, lam)
            U.append(input_vector(lam, q))
            Y.append(aggregate(net, rho))
            k += 1
    u = Trajectory(np.array(U).T)
    y = Trajectory(np.array(Y).T)
    rep = rank_report(u, y, cfg.deepc.t_ini + cfg.deepc.t_f, cfg.order_bound)
    return CollectResult(u, y, rep)


def write_data_csv(path: Union[str, Path], u: Trajectory, y: Trajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k"] + [f"u_{i}" for i in range(u.channels)] + [f"y_{i}" for i in range(y.channels)])
        for k in range(u.length):
            w.writerow([k] + [format(v, ".17g") for v in u.data[:, k]]
                       + [format(v, ".17g") for v in y.data[:, k]])


def read_data_csv(path: Union[str, Path]) -> Tuple[Trajectory, Trajectory]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        m = sum(1 for h in header if h.startswith("u_"))
        rows = np.array([[float(v) for v in row[1:]] for row in rd if row])
    if rows.size == 0:
        raise ConfigError(f"{path}: no samples")
    return Trajectory(rows[:, :m].T), Trajectory(rows[:, m:].T)


# ---------------------------------------------------------------------------
# Closed loop
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    controller: str
    metrics: Optional[Metrics]
    trace: List[dict]
    applied_residual: float = 0.0
    raw_tie_residual: float = 0.0
    degraded: int = 0
    rank: Optional[RankReport] = None
    error: Optional[str] = None
    extras: Dict[str, list] = field(default_factory=dict)


def _forecast(cfg: ScenarioConfig, k: int, horizon: int, rng) -> np.ndarray:
    d = np.array([demand_at(cfg.demand, (k + j) * cfg.dt) for j in range(horizon)])
    if cfg.forecast_noise > 0:
        d = d * (1.0 + cfg.forecast_noise * rng.uniform(-1.0, 1.0, d.shape))
    return d


def deepc_config(cfg: ScenarioConfig) -> DeepcConfig:
    net, ds = cfg.network, cfg.deepc
    nl = net.n_lights
    return DeepcConfig(t_ini=ds.t_ini, t_f=ds.t_f, Q=np.diag(ds.q), R=ds.r * np.eye(nl),
                       n_controlled=nl, u_lower=net.lam_lower, u_upper=net.lam_upper,
                       y_upper=net.rho_max, regularizer=Regularizer(ds.regularizer),
                       lambda_g=ds.lambda_g, duty_cycle=cfg.duty_cycle, max_iter=ds.max_iter)


def block_residual(block: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> float:
    """Largest duty-cycle tie or box violation of an applied block."""
    tie = float(np.max(np.abs(block - block[0]), initial=0.0))
    box = float(max(np.max(lower - block, initial=0.0), np.max(block - upper, initial=0.0), 0.0))
    return max(tie, box)


def run(cfg: ScenarioConfig, controller: str, data: Optional[CollectResult] = None) -> RunResult:
    """Closed-loop simulation under ``controller`` (deepc, mpc or none).

    DeePC sees only noisy aggregated densities; the MPC baseline reads the true
    accumulations and destination mix.  On a controller or simulator failure
    the partial trace is kept and :class:`RunAborted` is raised with it
    attached as ``exc.result``.
    """
    if controller not in CONTROLLERS:
        raise ConfigError(f"controller must be one of {CONTROLLERS}, got {controller!r}")
    net, dc, dt = cfg.network, cfg.duty_cycle, cfg.dt
    rng_n = np.random.default_rng(cfg.seeds.noise + 1_000_003)
    rng_f = np.random.default_rng(cfg.seeds.sim)
    result = RunResult(controller, None, [])
    ctrl = None
    if controller == "deepc":
        if data is None:
            data = collect(cfg)
        result.rank = data.rank
        try:
            ddata = build_deepc_data(data.u, data.y, cfg.deepc.t_ini, cfg.deepc.t_f)
            ctrl = DeepcController(ddata, deepc_config(cfg))
        except DeepcConfigError as exc:
            raise ConfigError(str(exc)) from exc
    elif controller == "mpc":
        ctrl = LmpcController(net, cfg.lmpc_horizon, dc * dt, cfg.mpc_pieces)

    s = SimState.empty(net.p)
    history = [s]
    block = np.tile(net.lam_nominal, (dc, 1))
    plan_log: List[dict] = []
    t_f = cfg.deepc.t_f
    y_ref = np.tile(net.rho_cr, (t_f, 1))
    k = 0
    try:
        while k < cfg.steps:
            if k % dc == 0:
                if controller == "deepc":
                    dbar = _forecast(cfg, k, t_f, rng_f).reshape(t_f, -1)
                    ref = ReferenceSpec(y_ref, np.hstack([np.tile(net.lam_nominal, (t_f, 1)), dbar]),
                                        net.n_lights)
                    block = ctrl.step(ref)
                    if ctrl.last is not None and not ctrl.log[-1].warmup:
                        raw = ctrl.last.u[:dc, :net.n_lights]
                        result.raw_tie_residual = max(result.raw_tie_residual,
                                                      float(np.max(np.abs(raw - raw[0]))))
                        if ctrl.log[-1].degraded:
                            result.degraded += 1
                elif controller == "mpc":
                    n_p = cfg.lmpc_horizon
                    d = _forecast(cfg, k, n_p * dc, rng_f).reshape(n_p, dc, net.p, net.p).mean(axis=1)
                    lam = ctrl.step(k, s.n, d)
                    plan = ctrl.plans[-1][1]
                    if plan.degraded:
                        result.degraded += 1
                    plan_log.extend(plan_rows(k, plan, net, lam, stride=dc))
                    block = np.tile(lam, (dc, 1))
                else:
                    block = np.tile(net.lam_nominal, (dc, 1))
                result.applied_residual = max(result.applied_residual,
                                              block_residual(block, net.lam_lower, net.lam_upper))
            lam = block[k % dc]
            q = demand_at(cfg.demand, k * dt)
            s, _ = sim_step(net, s, lam, q, dt)
            history.append(s)
            rho, phi = sense(net, s, rng_n, lam)
            rho_bar, phi_bar = aggregate(net, rho), aggregate(net, phi)
            if controller == "deepc":
                ctrl.observe(input_vector(lam, q), rho_bar)
            k += 1
            result.trace.extend(state_rows(net, k, rho_bar, phi_bar, s, lam))
    except (InvariantError, DeepcInfeasible) as exc:
        result.error = f"step {k}: {exc}"
        result.extras["plans"] = plan_log
        if controller == "deepc":
            result.extras["steps"] = ctrl.log
        err = RunAborted(str(exc), k)
        err.result = result
        err.invariant = isinstance(exc, InvariantError)
        raise err from exc
    result.metrics = metrics(net, history)
    result.extras["plans"] = plan_log
    if controller == "deepc":
        result.extras["steps"] = ctrl.log
    return result


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


class AtomicDir:
    """Write into a private temporary directory, then rename it into place."""

    def __init__(self, target: Union[str, Path]):
        self.target = Path(target)

    def __enter__(self) -> Path:
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.target.name}.", dir=self.target.parent))
        return self.tmp

    def __exit__(self, *exc) -> bool:
        if self.target.exists():
            shutil.rmtree(self.target)
        os.replace(self.tmp, self.target)
        return False


def _meta(cfg: ScenarioConfig) -> dict:
    return {"scenario": cfg.name, "fingerprint": cfg.fingerprint(), "seeds": asdict(cfg.seeds),
            "dt": cfg.dt, "steps": cfg.steps, "duty_cycle": cfg.duty_cycle}


def write_collect(out: Union[str, Path], cfg: ScenarioConfig, res: CollectResult) -> None:
    with AtomicDir(out) as d:
        write_data_csv(d / "data.csv", res.u, res.y)
        _dump_json(d / "collect.json", {**_meta(cfg), "rank": res.rank.as_dict(),
                                         "samples": res.u.length, "inputs": res.u.channels,
                                         "outputs": res.y.channels})


def load_collect(d: Union[str, Path], cfg: ScenarioConfig) -> CollectResult:
    d = Path(d)
    u, y = read_data_csv(d / "data.csv")
    return CollectResult(u, y, rank_report(u, y, cfg.deepc.t_ini + cfg.deepc.t_f, cfg.order_bound))


def write_run(out: Union[str, Path], cfg: ScenarioConfig, res: RunResult) -> None:
    """Trace, metrics and controller logs; also used for aborted runs."""
    from .deepc import write_step_log
    with AtomicDir(out) as d:
        write_state_csv(d / "trace.csv", res.trace, cfg.network.n_lights)
        if res.extras.get("plans"):
            write_plan_csv(d / "plans.csv", res.extras["plans"])
        if res.extras.get("steps"):
            write_step_log(res.extras["steps"], d / "steps.csv")
        summary = {**_meta(cfg), "controller": res.controller,
                   "metrics": None if res.metrics is None else res.metrics.as_dict(),
                   "applied_residual": res.applied_residual, "raw_tie_residual": res.raw_tie_residual,
                   "degraded_solves": res.degraded, "error": res.error,
                   "rank": None if res.rank is None else res.rank.as_dict(),
                   "rho_cr": cfg.network.rho_cr.tolist(), "rho_max": cfg.network.rho_max.tolist()}
        _dump_json(d / "metrics.json", summary)


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------

@dataclass
class ComparisonReport:
    scenario: str
    fingerprint: str
    labels: List[str]
    controllers: List[str]
    metrics: List[Metrics]
    baseline: int
    peak_ratio: List[List[float]] = field(default_factory=list)
    rank: Optional[dict] = None

    def improvement(self, i: int, attr: str = "avg_travel_time") -> float:
        """``(base - x) / base`` in percent."""
        base = getattr(self.metrics[self.baseline], attr)
        x = getattr(self.metrics[i], attr)
        return 0.0 if base == x else 100.0 * (base - x) / base

    ROWS = (("Travel Time (min)", "avg_travel_time"), ("Waiting Time (min)", "avg_waiting_time"),
            ("Vehicle-hours", "vehicle_hours"))

    def to_markdown(self) -> str:
        lines = [f"# Comparison: {self.scenario}", "",
                 "| Metric | " + " | ".join(self.labels) + " |",
                 "|---|" + "---|" * len(self.labels)]
        for title, attr in self.ROWS:
            lines.append(f"| {title} | " + " | ".join(f"{getattr(m, attr):.2f}" for m in self.metrics) + " |")
        lines.append("| Improvement vs " + self.labels[self.baseline] + " (travel time) | "
                     + " | ".join(f"{self.improvement(i):.1f}%" for i in range(len(self.metrics))) + " |")
        lines.append("| Peak density / rho_max | " + " | ".join(
            "/".join(f"{v:.2f}" for v in r) for r in self.peak_ratio) + " |")
        if self.rank is not None:
            r = self.rank
            lines += ["", f"Hankel rank of the DeePC data: {r['rank']} against m*L + n_hat = "
                      f"{r['required']} (m = {r['m']}, L = {r['depth']}, n_hat = {r['order_bound']}; "
                      f"ratio {r['ratio']:.3f})."]
            if not r["exciting"]:
                lines.append("The data fall short of the excitation requirement; the controller "
                             "relies on the regularization weight lambda_g > 0.")
        return "\n".join(lines) + "\n"

    def to_csv_rows(self) -> List[List[str]]:
        rows = [["metric"] + self.labels]
        for title, attr in self.ROWS:
            rows.append([title] + [format(getattr(m, attr), ".17g") for m in self.metrics])
        rows.append(["Improvement (%)"] + [format(self.improvement(i), ".17g")
                                           for i in range(len(self.metrics))])
        return rows


def _load_run(d: Path) -> Tuple[dict, Metrics]:
    try:
        info = json.loads((d / "metrics.json").read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{d}: not a run directory ({exc})") from exc
    if info.get("metrics") is None:
        raise ConfigError(f"{d}: run did not finish ({info.get('error')})")
    return info, Metrics.from_dict(info["metrics"])


def compare(run_dirs: Sequence[Union[str, Path]]) -> ComparisonReport:
    """Tabulate finished runs of one scenario; the no-control run is the baseline.

    Raises:
        ConfigError: Runs of different scenarios, or unreadable run directories.
    """
    if not run_dirs:
        raise ConfigError("nothing to compare")
    infos, mets = [], []
    for d in run_dirs:
        info, m = _load_run(Path(d))
        infos.append(info)
        mets.append(m)
    fps = {i["fingerprint"] for i in infos}
    if len(fps) != 1:
        raise ConfigError("runs come from different scenarios; refusing to compare")
    order = sorted(range(len(infos)), key=lambda i: (CONTROLLERS.index(infos[i]["controller"]), i))
    infos = [infos[i] for i in order]
    mets = [mets[i] for i in order]
    ctrls = [i["controller"] for i in infos]
    labels = []
    for j, c in enumerate(ctrls):
        n = ctrls[:j].count(c)
        labels.append(CONTROLLER_LABELS[c] if n == 0 else f"{CONTROLLER_LABELS[c]} #{n + 1}")
    base = ctrls.index("none") if "none" in ctrls else 0
    rank = next((i["rank"] for i in infos if i.get("rank")), None)
    peak = [(np.asarray(m.peak_density) / np.asarray(i["rho_max"])).tolist() for i, m in zip(infos, mets)]
    return ComparisonReport(infos[0]["scenario"], infos[0]["fingerprint"], labels, ctrls, mets,
                            base, peak, rank)


def write_compare(out: Union[str, Path], report: ComparisonReport, run_dirs: Sequence[Union[str, Path]],
                  svg: bool = False) -> None:
    with AtomicDir(out) as d:
        (d / "report.md").write_text(report.to_markdown())
        with open(d / "report.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(report.to_csv_rows())
        if svg:
            from .plots import write_plots
            write_plots(d, run_dirs)
