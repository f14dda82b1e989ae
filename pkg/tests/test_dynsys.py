import numpy as np
import pytest

from chronoweft.dynsys import (
    LORENZ_ALT_PARAMS,
    RawTrajectory,
    catalog,
    preprocess,
    rk4_step,
    simulate,
    system,
)
from chronoweft.errors import (
    DegenerateDimensionError,
    DivergenceError,
    ValidationError,
)


# ---------------------------------------------------------------------------
# rk4_step
# ---------------------------------------------------------------------------


def test_rk4_constant_field_is_identity():
    out = rk4_step(lambda x, t: np.zeros(1), np.array([5.0]), 0.0, 0.01)
    assert out[0] == 5.0


def test_rk4_exponential_decay_one_step():
    # analytic solution of xdot = -x from 1.0 over one step
    out = rk4_step(lambda x, t: -x, np.array([1.0]), 0.0, 0.01)
    assert abs(out[0] - np.exp(-0.01)) < 1e-10


def test_rk4_pure_drift_exact():
    out = rk4_step(lambda x, t: np.ones(1), np.array([0.0]), 0.0, 0.1)
    assert abs(out[0] - 0.1) < 1e-15


def test_rk4_rejects_nonpositive_dt():
    with pytest.raises(ValidationError):
        rk4_step(lambda x, t: -x, np.array([1.0]), 0.0, 0.0)


def test_rk4_fourth_order_convergence():
    # global error on xdot=-x over [0,1] must shrink >= 12x per dt halving
    def global_error(dt):
        x = np.array([1.0])
        n = int(round(1.0 / dt))
        t = 0.0
        for _ in range(n):
            x = rk4_step(lambda s, u: -s, x, t, dt)
            t += dt
        return abs(x[0] - np.exp(-1.0))

    errs = [global_error(dt) for dt in (0.02, 0.01, 0.005)]
    assert errs[0] / errs[1] >= 12.0
    assert errs[1] / errs[2] >= 12.0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def test_simulate_lorenz_long_run_bounded():
    spec = system("lorenz")
    raw = simulate(spec, np.array([1.0, 1.0, 1.0]), 100_000, dt=0.01)
    assert np.all(np.abs(raw.data) < 100.0)


def test_simulate_matches_independent_rk4_oracle():
    # a from-scratch RK4, deliberately written differently
    def oracle(f, x0, n, dt):
        xs = []
        x = np.array(x0, dtype=float)
        t = 0.0
        for _ in range(n):
            a = f(x, t)
            b = f(x + dt / 2 * a, t + dt / 2)
            c = f(x + dt / 2 * b, t + dt / 2)
            d = f(x + dt * c, t + dt)
            x = x + dt * (a + 2 * b + 2 * c + d) / 6
            t += dt
            xs.append(x.copy())
        return np.array(xs)

    spec = system("sprott_0")
    x0 = np.array([0.1, 0.1, 0.1])
    raw = simulate(spec, x0, 10, dt=0.01)
    expected = oracle(spec.vector_field, x0, 10, 0.01)
    assert np.max(np.abs(raw.data - expected)) < 1e-12


def test_simulate_zero_steps_is_empty():
    raw = simulate(system("lorenz"), np.array([1.0, 1.0, 1.0]), 0, dt=0.01, t0=3.5)
    assert raw.data.shape == (0, 3)
    assert raw.t0 == 3.5


def test_simulate_deterministic_bit_identical():
    spec = system("rossler")
    a = simulate(spec, np.array([0.5, 0.5, 0.2]), 5000, dt=0.01)
    b = simulate(spec, np.array([0.5, 0.5, 0.2]), 5000, dt=0.01)
    assert np.array_equal(a.data, b.data)


def test_simulate_divergence_reports_system_and_step():
    spec = system("sprott_6")  # literal table transcription is unstable
    with pytest.raises(DivergenceError) as err:
        simulate(spec, np.array([0.1, 0.1, 0.1]), 50_000, dt=0.01)
    assert err.value.system == "sprott_6"
    assert err.value.step >= 0


def test_simulate_draws_x0_from_box_when_none():
    spec = system("food_chain")
    raw = simulate(spec, None, 1, dt=0.01, seed=5)
    again = simulate(spec, None, 1, dt=0.01, seed=5)
    assert np.array_equal(raw.data, again.data)


# ---------------------------------------------------------------------------
# preprocess
# ---------------------------------------------------------------------------


def _raw(columns, dt=0.01):
    return RawTrajectory(data=np.array(columns, dtype=float), t0=0.0, dt=dt)


def test_preprocess_cut_subsample_normalize():
    raw = _raw([[0.0], [5.0], [10.0], [15.0], [20.0]])
    tm = preprocess(raw, transient_cut=1, subsample=2)
    # rows kept: 5, 15 -> normalized to 0, 1
    assert np.allclose(tm.data[:, 0], [0.0, 1.0])
    assert tm.norm_stats[0, 0] == 5.0 and tm.norm_stats[1, 0] == 15.0
    assert tm.dt_effective == pytest.approx(0.02)


def test_preprocess_projects_4d_to_first_three():
    spec = system("lotka_volterra")
    raw = simulate(spec, np.array([0.3, 0.3, 0.3, 0.3]), 3000, dt=0.01)
    tm = preprocess(raw, transient_cut=1000, subsample=10)
    assert tm.dim == 3


def test_preprocess_idempotent_on_normalized_data():
    rng = np.random.default_rng(0)
    data = rng.random((50, 3))
    # force exact 0/1 extremes per dimension
    data[0] = 0.0
    data[1] = 1.0
    tm = preprocess(_raw(data), transient_cut=0, subsample=1)
    assert np.allclose(tm.data, data, atol=1e-15)


def test_preprocess_range_invariant():
    spec = system("aizawa")
    raw = simulate(spec, np.array([0.1, 0.0, 0.2]), 30_000, dt=0.01)
    tm = preprocess(raw, transient_cut=10_000, subsample=10)
    assert tm.data.min() >= 0.0 and tm.data.max() <= 1.0
    assert np.allclose(tm.data.min(axis=0), 0.0, atol=1e-12)
    assert np.allclose(tm.data.max(axis=0), 1.0, atol=1e-12)
    assert np.all(np.isfinite(tm.data))


def test_preprocess_constant_dimension_raises():
    raw = _raw([[1.0, 2.0], [1.0, 3.0], [1.0, 4.0]])
    with pytest.raises(DegenerateDimensionError):
        preprocess(raw, transient_cut=0, subsample=1)


def test_preprocess_requires_enough_rows():
    with pytest.raises(ValidationError):
        preprocess(_raw([[1.0], [2.0]]), transient_cut=5, subsample=1)


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


def test_catalog_has_31_systems():
    specs = catalog()
    assert len(specs) == 31
    names = [s.name for s in specs]
    assert len(set(names)) == 31
    for target in ("food_chain", "lorenz", "lotka_volterra"):
        assert target in names
    assert sum(1 for n in names if n.startswith("sprott_")) == 19


def test_rikitake_parameters():
    spec = system("rikitake")
    assert spec.params == {"mu": 2.0, "a": 5.0}


def test_sprott_5_at_origin():
    spec = system("Sprott_5")
    assert np.array_equal(spec.vector_field(np.zeros(3), 0.0), np.zeros(3))


def test_lorenz_alternate_parameter_set_available():
    alt = system("lorenz", params=LORENZ_ALT_PARAMS)
    assert alt.params["rho"] == 2.67 and alt.params["beta"] == 26.0
    # alternate set sits at a stable spiral; default set is the chaotic one
    assert system("lorenz").params["rho"] == 28.0


def test_unknown_system_raises():
    with pytest.raises(ValidationError):
        system("does_not_exist")


# Independent transcription of every catalog row, evaluated pointwise.
def _oracle_fields():
    sp = {}

    def aizawa(s, p):
        x, y, z = s
        return [
            (z - p["b"]) * x - p["d"] * y,
            p["d"] * x + (z - p["b"]) * y,
            p["c"] + p["a"] * z - z**3 / 3
            - (x**2 + y**2) * (1 + p["e"] * z) + p["f"] * z * x**3,
        ]

    def bouali(s, p):
        x, y, z = s
        return [x * (p["a"] - y) + p["alpha"] * z,
                -y * (p["b"] - x**2),
                -x * (p["c"] - p["s"] * z) - p["beta"] * z]

    def chua(s, p):
        x, y, z = s
        ht = p["mu1"] * x + 0.5 * (p["mu0"] - p["mu1"]) * (abs(x + 1) - abs(x - 1))
        return [p["alpha"] * (y - x - ht), p["gamma"] * (x - y + z), -p["beta"] * y]

    def dadras(s, p):
        x, y, z = s
        return [y - p["a"] * x + p["b"] * y * z,
                p["c"] * y - x * z + z,
                p["d"] * x * y - p["e"] * z]

    def four_wing(s, p):
        x, y, z = s
        return [p["a"] * x + y * z, p["b"] * x + p["c"] * y - x * z, -z - x * y]

    def hastings_powell(s, p):
        v, h, pr = s
        return [v * (1 - v) - p["a1"] * v * h / (p["b1"] * v + 1),
                p["a1"] * v * h / (p["b1"] * v + 1)
                - p["a2"] * h * pr / (p["b2"] * h + 1) - p["d1"] * h,
                p["a2"] * h * pr / (p["b2"] * h + 1) - p["d2"] * pr]

    def rikitake(s, p):
        x, y, z = s
        return [-p["mu"] * x + z * y, -p["mu"] * y + x * (z - p["a"]), 1 - x * y]

    def rossler(s, p):
        x, y, z = s
        return [-(y + z), x + p["a"] * y, p["b"] + z * (x - p["c"])]

    def wang(s, p):
        x, y, z = s
        return [x - y * z, x - y + x * z, -p["a"] * z + x * y]

    def food_chain(s, p):
        r, c, pr = s
        return [r * (1 - r / p["K"]) - p["x_c"] * p["y_c"] * c * r / (r + p["R0"]),
                p["x_c"] * c * (p["y_c"] * r / (r + p["R0"]) - 1)
                - p["x_p"] * p["y_p"] * pr * c / (c + p["C0"]),
                p["x_p"] * pr * (p["y_p"] * c / (c + p["C0"]) - 1)]

    def lorenz(s, p):
        x, y, z = s
        return [p["sigma"] * (y - x), x * (p["rho"] - z) - y, x * y - p["beta"] * z]

    def lotka_volterra(s, p):
        a = [[p["a11"], p["a12"], p["a13"], p["a14"]],
             [p["a21"], p["a22"], p["a23"], p["a24"]],
             [p["a31"], p["a32"], p["a33"], p["a34"]],
             [p["a41"], p["a42"], p["a43"], p["a44"]]]
        r = [p["r1"], p["r2"], p["r3"], p["r4"]]
        return [r[i] * s[i] * (1 - sum(a[i][j] * s[j] for j in range(4)))
                for i in range(4)]

    sp.update(aizawa=aizawa, bouali=bouali, chua=chua, dadras=dadras,
              four_wing=four_wing, hastings_powell=hastings_powell,
              rikitake=rikitake, rossler=rossler, wang=wang,
              food_chain=food_chain, lorenz=lorenz, lotka_volterra=lotka_volterra)

    sprott_rows = {
        0: lambda x, y, z: [y, -x + y * z, 1 - y**2],
        1: lambda x, y, z: [y * z, x - y, 1 - x * y],
        2: lambda x, y, z: [y * z, x - y, 1 - x**2],
        3: lambda x, y, z: [-y, x + z, x * z + 3 * y**2],
        4: lambda x, y, z: [y * z, x**2 - y, 1 - 4 * x],
        5: lambda x, y, z: [y + z, -x + 0.5 * y, x**2 - z],
        # row 6 lists xdot, zdot, ydot in that order
        6: lambda x, y, z: [0.4 * x + z, -x + y, x * z - y],
        7: lambda x, y, z: [-y + z**2, x + 0.5 * y, x * z],
        8: lambda x, y, z: [-0.2 * y, x + z, x + y**2 - z],
        9: lambda x, y, z: [2 * z, -2 * y + z, -x + y + y**2],
        10: lambda x, y, z: [x * y - z, x - y, x + 0.3 * z],
        11: lambda x, y, z: [y + 3.9 * z, 0.9 * x**2 - y, 1 - x],
        12: lambda x, y, z: [-z, -x**2 - y, 1.7 + 1.7 * x + y],
        13: lambda x, y, z: [-2 * y, x + z**2, 1 + y - 2 * z],
        14: lambda x, y, z: [y, x - z, x + x * z + 2.7 * y],
        15: lambda x, y, z: [2.7 * y + z, -x + y**2, x + y],
        16: lambda x, y, z: [-z, x - y, 3.1 * x + y**2 + 0.5 * z],
        17: lambda x, y, z: [0.9 - y, 0.4 + z, x * y - z],
        18: lambda x, y, z: [-x - 4 * y, x + z**2, 1 + x],
    }
    for case, row in sprott_rows.items():
        sp[f"sprott_{case}"] = (lambda rr: lambda s, p: rr(s[0], s[1], s[2]))(row)
    return sp


def test_every_vector_field_matches_transcription_oracle():
    oracles = _oracle_fields()
    rng = np.random.default_rng(2024)
    for spec in catalog():
        oracle = oracles[spec.name]
        for _ in range(100):
            x = rng.uniform(-1.0, 1.0, size=spec.dim)
            got = spec.vector_field(x, 0.0)
            want = np.array(oracle(x, spec.params), dtype=float)
            assert got.shape == (spec.dim,)
            assert np.max(np.abs(got - want)) < 1e-14, spec.name


def test_food_chain_defaults_bounded_and_nonperiodic():
    # the chosen operating point must be a bounded, aperiodic coexistence regime
    spec = system("food_chain")
    raw = simulate(spec, None, 600_000, dt=0.01, seed=4)
    tail = raw.data[300_000:]
    assert np.all(np.abs(tail) < 5.0)
    assert tail[:, 2].min() > 0.05  # predator persists
    z = tail[::10, 2]
    peaks = np.flatnonzero((z[1:-1] > z[:-2]) & (z[1:-1] > z[2:])) + 1
    peaks = peaks[z[peaks] > z.mean()]
    heights = z[peaks]
    assert len(heights) >= 8
    # a limit cycle would revisit identical peak heights; chaos wanders
    assert np.std(heights) / np.mean(heights) > 0.02
