import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deepc_traffic.trafficsim import (
    DemandProfile, Metrics, Mfd, NetworkError, SimState, aggregate, demand_at,
    metrics, mfd_fit, network_from_dict, read_state_csv, sense, sim_step, state_rows,
    write_state_csv,
)

DT = 10.0
H = DT / 3600.0


def two_region(noise=0.0, internal=True, lo=0.0):
    """Outer region 0 around inner region 1; every non-local trip crosses one boundary."""
    lights = [
        {"id": "in", "kind": "boundary", "from": 0, "to": 1, "lower": lo},
        {"id": "out", "kind": "boundary", "from": 1, "to": 0, "lower": lo},
    ]
    if internal:
        lights.append({"id": "int", "kind": "internal", "region": 0})
    return network_from_dict({
        "regions": [
            {"id": "outer", "network_length": 2.5, "trip_length": 1.5,
             "mfd": {"p_max": 3750, "n_max": 300}, "sensors": 4, "sensor_noise_rel": noise},
            {"id": "inner", "network_length": 0.3, "trip_length": 1.5,
             "mfd": {"p_max": 450, "n_max": 36}, "sensors": 3, "sensor_noise_rel": noise},
        ],
        "routing": [{"origin": 0, "dest": 1, "via": 1, "share": 1.0},
                    {"origin": 1, "dest": 0, "via": 0, "share": 1.0}],
        "lights": lights,
    })


def single_region(p_max=1000.0, n_max=100.0, L=2.0):
    return network_from_dict({
        "regions": [{"id": "a", "network_length": 1.0, "trip_length": L,
                     "mfd": {"p_max": p_max, "n_max": n_max}}],
    })


def random_state(rng, net, fill=0.9):
    n = np.zeros((net.p, net.p))
    for i in range(net.p):
        n[i] = rng.dirichlet(np.ones(net.p)) * rng.uniform(0, fill) * net.n_max[i]
    return SimState(n)


# ---------------------------------------------------------------------------
# MFD
# ---------------------------------------------------------------------------

def test_parabola_invariants():
    m = Mfd.parabolic(3750.0, 300.0)
    assert m(0.0) == 0.0 and m(300.0) == 0.0
    assert np.all(m(np.linspace(0, 300, 101)) >= 0)
    assert m.n_cr == pytest.approx(150.0, abs=1e-9)
    assert m.p_max == pytest.approx(3750.0, rel=1e-12)
    assert m.critical_density(2.5) == pytest.approx(60.0)


def test_cubic_peaks_at_third():
    m = Mfd.cubic(1000.0, 90.0)
    assert m.n_cr == pytest.approx(30.0, abs=1e-6)
    assert m.p_max == pytest.approx(1000.0, rel=1e-9)
    assert not m.is_concave()


def test_fit_exact_parabola():
    m = Mfd.parabolic(450.0, 36.0)
    n = np.linspace(0, 36, 50)
    fit = mfd_fit(np.column_stack([n, m(n)]))
    assert fit.n_cr == pytest.approx(18.0, abs=1e-9)
    assert fit.n_max == pytest.approx(36.0, abs=1e-9)
    assert not fit.unsaturated


def test_fit_density_units():
    # samples given as (veh/km, veh/h per km): accumulation = density * length
    m = Mfd.parabolic(3750.0, 300.0)
    n = np.linspace(0, 300, 40)
    fit = mfd_fit(np.column_stack([n / 2.5, m(n) / 2.5]), network_length=2.5)
    assert fit.n_cr == pytest.approx(150.0, abs=1e-9)


def test_fit_noisy_within_five_percent():
    m = Mfd.parabolic(1.0, 1.0)
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = rng.uniform(0, 1, 200)
        P = m(n) * (1 + 0.05 * rng.uniform(-1, 1, 200))
        worst = max(worst, abs(mfd_fit(np.column_stack([n, P])).n_cr - 0.5) / 0.5)
    assert worst <= 0.05


def test_fit_two_samples_interpolates():
    pts = np.array([[1.0, 3.0], [2.0, 4.0]])
    fit = mfd_fit(pts)
    np.testing.assert_allclose(fit(pts[:, 0]), pts[:, 1], rtol=1e-12)
    # P = 4n - n^2 through the origin
    assert fit.n_max == pytest.approx(4.0)


def test_fit_unsaturated_flag():
    m = Mfd.parabolic(100.0, 10.0)
    n = np.linspace(0.5, 3.0, 20)
    fit = mfd_fit(np.column_stack([n, m(n)]))
    assert fit.unsaturated
    assert fit.n_cr == pytest.approx(5.0, abs=1e-9)


def test_fit_errors():
    with pytest.raises(ValueError):
        mfd_fit([[1.0, 1.0]])
    with pytest.raises(ValueError):
        mfd_fit([[1.0, 1.0], [2.0, 2.0]], degree=1)
    with pytest.raises(ValueError):  # convex data never bends down
        mfd_fit([[1.0, 1.0], [2.0, 4.0], [3.0, 9.0]])


# ---------------------------------------------------------------------------
# Network validation
# ---------------------------------------------------------------------------

def test_network_rejects_unlit_boundary():
    with pytest.raises(NetworkError):
        network_from_dict({
            "regions": [{"id": "a", "network_length": 1, "trip_length": 1,
                         "mfd": {"p_max": 10, "n_max": 10}}] * 2,
            "routing": [{"origin": 0, "dest": 1, "via": 1, "share": 1.0},
                        {"origin": 1, "dest": 0, "via": 0, "share": 1.0}],
        })


def test_network_rejects_bad_routing():
    cfg = {"regions": [{"id": "a", "network_length": 1, "trip_length": 1,
                        "mfd": {"p_max": 10, "n_max": 10}}] * 2,
           "routing": [{"origin": 0, "dest": 1, "via": 1, "share": 0.5},
                       {"origin": 1, "dest": 0, "via": 0, "share": 1.0}],
           "lights": [{"id": "x", "kind": "boundary", "from": 0, "to": 1},
                      {"id": "y", "kind": "boundary", "from": 1, "to": 0}]}
    with pytest.raises(NetworkError):
        network_from_dict(cfg)


def test_network_rejects_nonpositive_length():
    with pytest.raises(NetworkError):
        network_from_dict({"regions": [{"id": "a", "network_length": 0, "trip_length": 1,
                                        "mfd": {"p_max": 10, "n_max": 10}}]})


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------

def test_zero_state_zero_demand():
    net = two_region()
    s, rec = sim_step(net, SimState.empty(2), net.lam_nominal, np.zeros((2, 2)), DT)
    assert s.total == 0.0 and s.completed_trips == 0.0
    assert np.all(rec.transfer == 0) and np.all(rec.completion == 0)


def test_single_region_completion_by_hand():
    net = single_region(p_max=1000.0, n_max=100.0, L=2.0)
    n = 30.0
    P = 4 * 1000.0 * n * (100.0 - n) / 100.0 ** 2  # 840 veh km/h
    s, rec = sim_step(net, SimState(np.array([[n]])), [], np.zeros((1, 1)), DT)
    assert rec.completion[0] == pytest.approx(P / 2.0, rel=1e-12)
    assert s.n[0, 0] == pytest.approx(n - H * P / 2.0, rel=1e-12)
    assert s.completed_trips == pytest.approx(H * P / 2.0, rel=1e-12)
    assert s.vehicle_hours == pytest.approx(H * n, rel=1e-12)


def test_red_boundary_blocks_transfer():
    net = two_region()
    n = np.array([[20.0, 30.0], [4.0, 6.0]])
    q = np.array([[100.0, 200.0], [0.0, 0.0]])
    lam = np.array([0.0, 0.0, 0.5])
    s, rec = sim_step(net, SimState(n), lam, q, DT)
    assert np.all(rec.transfer == 0)
    # the bound-for-inner cell in the outer region only gains its demand
    assert s.n[0, 1] == pytest.approx(30.0 + H * 200.0, rel=1e-12)
    assert s.n[1, 0] == pytest.approx(4.0, rel=1e-12)


def test_transfer_formula_by_hand():
    net = two_region()
    n = np.array([[20.0, 30.0], [4.0, 6.0]])
    lam = np.array([0.8, 0.4, 0.6])
    _, rec = sim_step(net, SimState(n), lam, np.zeros((2, 2)), DT)
    a0 = 0.5 + 0.5 * 0.6
    P0 = 4 * 3750 * 50 * 250 / 300 ** 2 * a0
    assert rec.transfer[0, 1, 1] == pytest.approx(0.8 * (30 / 50) * P0 / 1.5, rel=1e-12)
    P1 = 4 * 450 * 10 * 26 / 36 ** 2
    assert rec.transfer[1, 0, 0] == pytest.approx(0.4 * (4 / 10) * P1 / 1.5, rel=1e-12)
    assert rec.completion[1] == pytest.approx((6 / 10) * P1 / 1.5, rel=1e-12)


def test_gridlock_emits_nothing():
    net = two_region()
    n = np.array([[150.0, 150.0], [10.0, 26.0]])  # outer region at n_max
    _, rec = sim_step(net, SimState(n), np.ones(3), np.zeros((2, 2)), DT)
    assert rec.production[0] == 0.0
    assert rec.completion[0] == 0.0 and np.all(rec.transfer[0] == 0)


def test_receiving_capacity_caps_inner():
    net = two_region()
    n = np.array([[60.0, 90.0], [0.0, 35.9]])
    s, rec = sim_step(net, SimState(n), np.ones(3), np.zeros((2, 2)), DT)
    assert s.region_n[1] <= 36.0 + 1e-9
    assert rec.receiving_scale[1] < 1.0


def test_overdraw_guard_lands_on_zero():
    net = single_region(p_max=1e6, n_max=100.0, L=0.01)
    s, _ = sim_step(net, SimState(np.array([[1.0]])), [], np.zeros((1, 1)), DT)
    assert s.n[0, 0] == 0.0


def test_step_rejects_bad_inputs():
    net = two_region()
    s = SimState.empty(2)
    with pytest.raises(ValueError):
        sim_step(net, s, [1.5, 0.5, 0.5], np.zeros((2, 2)), DT)
    with pytest.raises(ValueError):
        sim_step(net, s, net.lam_nominal, np.zeros((2, 2)), 0.0)
    with pytest.raises(ValueError):
        sim_step(net, s, net.lam_nominal, -np.ones((2, 2)), DT)


def test_entry_queue_holds_blocked_demand():
    net = two_region()
    n = np.array([[150.0, 150.0], [0.0, 0.0]])  # full outer region
    s, _ = sim_step(net, SimState(n), np.zeros(3), np.array([[360.0, 0.0], [0.0, 0.0]]), DT)
    assert s.queue[0, 0] == pytest.approx(1.0, rel=1e-12)
    assert s.total == pytest.approx(301.0, rel=1e-12)


def _rollout(net, rng, steps, adversarial=False):
    s = random_state(rng, net, fill=1.0)
    lo, hi = net.lam_lower, net.lam_upper
    q_scale = rng.uniform(0, 3000)
    for _ in range(steps):
        if adversarial:  # bang-bang settings
            lam = np.where(rng.random(lo.size) < 0.5, lo, hi)
        else:
            lam = rng.uniform(lo, hi)
        q = rng.uniform(0, q_scale, (net.p, net.p))
        before = s.total
        s_new, rec = sim_step(net, s, lam, q, DT)
        lhs = s_new.total - before
        rhs = H * (q.sum() - rec.completion.sum())
        assert abs(lhs - rhs) <= 1e-9 * max(1.0, before, s_new.total)
        assert np.all(s_new.n >= 0) and np.all(s_new.queue >= 0)
        assert np.all(s_new.region_n <= net.n_max * (1 + 1e-9))
        s = s_new
    return s


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_conservation_property(seed):
    _rollout(two_region(), np.random.default_rng(seed), 200)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_nonnegative_under_adversarial_lights(seed):
    _rollout(two_region(), np.random.default_rng(seed), 200, adversarial=True)


@pytest.mark.parametrize("seed", range(10))
def test_boundary_flow_monotone_in_light(seed):
    rng = np.random.default_rng(seed)
    net = two_region()
    s = random_state(rng, net, fill=1.0)
    q = rng.uniform(0, 500, (2, 2))
    for b, (i, h) in enumerate([(0, 1), (1, 0)]):
        lam = rng.uniform(0, 1, 3)
        flows = []
        for v in np.linspace(0, 1, 21):
            lam[b] = v
            _, rec = sim_step(net, s, lam, q, DT)
            flows.append(rec.boundary_flow(i, h))
        assert np.all(np.diff(flows) >= -1e-9 * max(1.0, max(flows)))


def test_identical_histories_identical_outputs():
    net = two_region(noise=0.02)
    outs = []
    for _ in range(2):
        rng = np.random.default_rng(7)
        s = SimState(np.array([[30.0, 20.0], [3.0, 2.0]]))
        rho_hist = []
        for k in range(50):
            lam = np.full(3, 0.2 + 0.6 * (k % 3) / 2)
            s, _ = sim_step(net, s, lam, np.array([[300.0, 200.0], [0.0, 30.0]]), DT)
            rho, _ = sense(net, s, rng, lam)
            rho_hist.append(aggregate(net, rho))
        outs.append(np.array(rho_hist))
    assert np.array_equal(outs[0], outs[1])


# ---------------------------------------------------------------------------
# Sensing and aggregation
# ---------------------------------------------------------------------------

def test_sense_noiseless_exact():
    net = two_region(noise=0.0)
    s = SimState(np.array([[30.0, 20.0], [3.0, 6.0]]))
    rho, phi = sense(net, s, np.random.default_rng(0))
    np.testing.assert_allclose(rho[:4], 50 / 2.5)
    np.testing.assert_allclose(rho[4:], 9 / 0.3)
    a0 = net.attenuation(net.lam_nominal)[0]
    np.testing.assert_allclose(phi[:4], net.regions[0].mfd(50.0) * a0 / 2.5)


def test_sense_empty_network():
    net = two_region(noise=0.05)
    rho, phi = sense(net, SimState.empty(2), np.random.default_rng(0))
    assert np.all(rho == 0) and np.all(phi == 0)


def test_sense_noise_is_unbiased():
    net = two_region(noise=0.05)
    s = SimState(np.array([[30.0, 20.0], [3.0, 6.0]]))
    rng = np.random.default_rng(3)
    draws = np.array([sense(net, s, rng)[0] for _ in range(1000)])
    assert abs(draws[:, 0].mean() / 20.0 - 1) < 0.005
    assert np.all(np.abs(draws[:, 0] / 20.0 - 1) <= 0.05 + 1e-12)


def test_aggregate_examples():
    net = two_region()
    assert np.allclose(aggregate(net, np.full(7, 4.2)), 4.2)
    r = np.array([1.0, 3.0, 1.0, 3.0, 5.0, 6.0, 7.0])
    np.testing.assert_allclose(aggregate(net, r), [2.0, 6.0])
    perm = r[[3, 0, 2, 1, 6, 4, 5]]
    np.testing.assert_allclose(aggregate(net, perm), [2.0, 6.0])
    with pytest.raises(ValueError):
        aggregate(net, np.ones(5))


def test_aggregate_weighted():
    net = two_region()
    r = np.array([1.0, 3.0, 0.0, 0.0, 1.0, 1.0, 4.0])
    w = np.array([1.0, 3.0, 0.0, 0.0, 1.0, 1.0, 1.0])
    np.testing.assert_allclose(aggregate(net, r, w), [2.5, 2.0])


# ---------------------------------------------------------------------------
# Demand
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("peak", [1080.0, 180.0])
def test_triangle_demand(peak):
    base = np.array([[300.0, 0.0], [0.0, 30.0]])
    prof = DemandProfile.triangular(2, (0, 1), peak, 1800.0, 800.0, 3600.0, base)
    np.testing.assert_allclose(demand_at(prof, 1800.0)[0, 1], peak)
    for t in (1400.0, 2200.0, 0.0, 3600.0):
        np.testing.assert_allclose(demand_at(prof, t), base)
    np.testing.assert_allclose(demand_at(prof, 1600.0)[0, 1], peak / 2)
    np.testing.assert_allclose(demand_at(prof, -5.0), base)
    np.testing.assert_allclose(demand_at(prof, 9999.0), base)


def test_demand_rejects_negative():
    with pytest.raises(ValueError):
        DemandProfile.constant(-np.ones((2, 2)), 10.0)


# ---------------------------------------------------------------------------
# Metrics and CSV
# ---------------------------------------------------------------------------

def test_metrics_arithmetic():
    net = two_region()
    N, K, C = 40.0, 30, 12.0
    hist = [SimState(np.array([[N, 0.0], [0.0, 0.0]]), k=k, vehicle_hours=k * H * N,
                     completed_trips=C * k / K) for k in range(K + 1)]
    m = metrics(net, hist)
    assert m.avg_travel_time == pytest.approx(60 * N * H * K / C, rel=1e-12)
    assert m.avg_waiting_time == pytest.approx(m.avg_travel_time, rel=1e-12)  # nobody entered
    assert m.peak_density == pytest.approx((N / 2.5, 0.0))


def test_metrics_needs_completions():
    net = two_region()
    with pytest.raises(ValueError):
        metrics(net, [SimState.empty(2), SimState.empty(2)])


def test_free_flow_waiting_is_small():
    net = two_region()
    q = np.array([[60.0, 10.0], [5.0, 5.0]])
    s = SimState.empty(2)
    hist = [s]
    for k in range(2000):
        s, _ = sim_step(net, s, np.ones(3), q if k < 1000 else np.zeros((2, 2)), DT)
        hist.append(s)
    m = metrics(net, hist)
    assert max(net.rho_cr[i] - m.peak_density[i] for i in range(2)) > 0
    assert abs(m.avg_waiting_time) <= 0.05 * m.avg_travel_time


def test_metrics_dict_round_trip():
    m = Metrics(5.5, 1.25, 100.0, 20.0, (3.0, 4.0))
    assert Metrics.from_dict(m.as_dict()) == m


def test_state_csv_round_trip(tmp_path):
    net = two_region(noise=0.02)
    rng = np.random.default_rng(1)
    s = SimState(np.array([[30.0, 20.0], [3.0, 2.0]]))
    rows = []
    for k in range(5):
        lam = rng.uniform(0, 1, 3)
        s, _ = sim_step(net, s, lam, np.array([[300.0, 200.0], [0.0, 30.0]]), DT)
        rho, phi = sense(net, s, rng, lam)
        rows += state_rows(net, k, aggregate(net, rho), aggregate(net, phi), s, lam)
    path = tmp_path / "trace.csv"
    write_state_csv(path, rows, net.n_lights)
    back = read_state_csv(path)
    assert len(back) == len(rows)
    for a, b in zip(rows, back):
        assert a["k"] == b["k"] and a["region"] == b["region"]
        for c in ("density", "flow", "n_total"):
            assert a[c] == b[c]
        assert np.array_equal(a["lambda"], b["lambda"])
