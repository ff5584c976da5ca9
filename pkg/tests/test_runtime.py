"""Observer runtime: the filter step in both realizations, the
closed-form coefficient stack inversion, the grid nearest-neighbor
pseudo-inverse, trajectory recording, and the coupled simulation.
"""
import numpy as np
import pytest

from kkl import design, runtime, systems
from kkl.errors import DomainEscape, SingularMatrix


@pytest.fixture(scope="module")
def oscillator():
    return systems.make_oscillator_system(0.01)


# ------------------------------------------------------------ filter step

def test_filter_step_complex_one_step():
    filt = design.build_filter([0.5])
    out = runtime.filter_step(filt, np.array([1.0 + 0j]), np.array([2.0]))
    assert np.array_equal(out, [2.5 + 0j])


def test_filter_step_real_matches_complex():
    filt = design.build_filter([0.3 + 0.4j, -0.5])
    z = np.array([1.0 - 2.0j, 0.5 + 0.25j])
    y = np.array([1.5])
    z_next = runtime.filter_step(filt, z, y)
    v_next = runtime.filter_step(filt, filt.real_state(z), y)
    assert v_next.dtype == np.float64
    assert np.allclose(filt.complex_state(v_next), z_next, rtol=0, atol=1e-15)


def test_filter_step_geometric_decay_without_input():
    filt = design.build_filter([0.9j])
    xi = np.array([1.0 + 0j])
    for _ in range(60):
        xi = runtime.filter_step(filt, xi, np.array([0.0]))
    assert abs(xi[0] - (0.9j) ** 60) <= 1e-13 * 0.9 ** 60


def test_filter_step_validates_shapes():
    filt = design.build_filter([0.5, 0.2])
    with pytest.raises(ValueError):
        runtime.filter_step(filt, np.zeros(3, dtype=complex), np.array([1.0]))
    with pytest.raises(ValueError):
        runtime.filter_step(filt, np.zeros(2, dtype=complex),
                            np.array([1.0, 2.0]))


# ------------------------------------------------------------ stack solve

def test_stack_recovers_state_from_exact_transform_values(oscillator):
    lambdas = [-10.0, -20.0, -30.0]
    t = design.example_transform(lambdas, 0.01, "discrete")
    x = np.array([1.0, 0.0])
    y = oscillator.output(x)
    xhat = runtime.invert_linear_stack(t.rows, y, t.eval(x))
    assert np.allclose(xhat, x, rtol=0, atol=1e-12)


def test_stack_recovery_across_the_domain(oscillator):
    lambdas = [-10.0, -20.0, -30.0]
    t = design.example_transform(lambdas, 0.01, "discrete")
    rng = np.random.default_rng(0)
    for x in rng.uniform(-1.5, 1.5, size=(25, 2)):
        xhat = runtime.invert_linear_stack(
            t.rows, oscillator.output(x), t.eval(x))
        assert np.allclose(xhat, x, rtol=0, atol=1e-9)


def test_stack_matrix_shape_and_first_row():
    t = design.example_transform([-10.0, -20.0, -30.0], 0.01, "discrete")
    mat = runtime.stack_matrix(t.rows)
    assert mat.shape == (4, 4)
    assert np.array_equal(mat[0], [1.0, 0.0, 1.0, 1.0])


def test_stack_requires_exactly_three_rows():
    t = design.example_transform([-10.0, -20.0], 0.01, "discrete")
    with pytest.raises(ValueError):
        runtime.invert_linear_stack(t.rows, np.array([1.0]),
                                    np.zeros(2, dtype=complex))


def test_stack_duplicate_rows_singular():
    co = design.example_coeffs("discrete", -10.0, 0.01)
    with pytest.raises(SingularMatrix):
        runtime.invert_linear_stack([co, co, co], np.array([1.0]),
                                    np.zeros(3, dtype=complex))


# -------------------------------------------------------------- grid NN

class _Identity:
    def eval(self, x):
        return np.asarray(x, dtype=np.complex128)


def test_grid_nn_exact_on_grid_points():
    box = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    xi = np.array([0.5 + 0j, -0.5 + 0j])
    got = runtime.invert_grid_nn(_Identity(), xi, box, pitch=0.25)
    assert np.array_equal(got, [0.5, -0.5])


def test_grid_nn_off_grid_within_pitch():
    box = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    rng = np.random.default_rng(1)
    pitch = 0.25
    for _ in range(20):
        x = rng.uniform(-1, 1, size=2)
        got = runtime.invert_grid_nn(
            _Identity(), x.astype(np.complex128), box, pitch=pitch)
        assert np.linalg.norm(got - x) <= pitch  # half-pitch per axis


def test_grid_nn_matches_brute_force_oracle(oscillator):
    filt = design.build_filter(design.sample_eigenvalues(3, 0.9, seed=4))
    t = design.poly_transform(oscillator, filt)
    box = oscillator.domain_box
    pitch = 0.5
    grid = systems.box_grid(box, pitch)
    table = np.array([t.eval(g) for g in grid])
    rng = np.random.default_rng(2)
    for _ in range(10):
        xi = t.eval(rng.uniform(-2, 2, size=2)) + 0.01 * (
            rng.standard_normal(3) + 1j * rng.standard_normal(3))
        got = runtime.invert_grid_nn(t, xi, box, pitch=pitch)
        want = grid[int(np.argmin(np.linalg.norm(table - xi, axis=1)))]
        assert np.array_equal(got, want)


def test_grid_nn_tie_break_prefers_first_point():
    box = np.array([[0.0, 1.0]])
    xi = np.array([0.5 + 0j])
    got = runtime.invert_grid_nn(_Identity(), xi, box, pitch=1.0)
    assert np.array_equal(got, [0.0])


def test_grid_inverter_reusable_and_deterministic(oscillator):
    t = design.example_transform([-10.0, -20.0, -30.0], 0.01, "discrete")
    inv = runtime.GridInverter(t, oscillator.domain_box, pitch=0.1)
    xi = t.eval(np.array([0.73, -0.21]))
    a = inv.invert(xi)
    b = inv.invert(xi)
    assert np.array_equal(a, b)
    # image-space NN tolerates mild metric distortion in state space
    assert np.linalg.norm(a - [0.73, -0.21]) <= 2 * 0.1


# ------------------------------------------------------------- recording

def test_csv_format(tmp_path, oscillator):
    filt = design.example_filter([-10.0, -20.0, -30.0], 0.01)
    t = design.example_transform([-10.0, -20.0, -30.0], 0.01, "discrete")
    obs = runtime.ObserverConfig(filt=filt, transform=t,
                                 inversion="linear_stack")
    traj = runtime.simulate(oscillator, obs, np.array([1.0, 0.0]), None, 3)
    path = tmp_path / "out.csv"
    traj.to_csv(path)
    lines = path.read_text(encoding="ascii").splitlines()
    assert lines[0] == "k,t,x1,x2,xhat1,xhat2,err,filter_err"
    assert len(lines) == 5  # header + K+1 rows
    first = lines[1].split(",")
    assert first[0] == "0" and first[1] == "0"
    assert first[2] == "1" and first[3] == "0"
    # 17 significant digits round-trip float64 exactly
    for line, k in zip(lines[1:], range(4)):
        cells = line.split(",")
        assert int(cells[0]) == k
        assert float(cells[6]) == traj.err[k]
        assert float(cells[7]) == traj.filter_err[k]


def test_csv_deterministic(tmp_path, oscillator):
    filt = design.example_filter([-10.0, -20.0, -30.0], 0.01)
    t = design.example_transform([-10.0, -20.0, -30.0], 0.01, "discrete")
    obs = runtime.ObserverConfig(filt=filt, transform=t,
                                 inversion="linear_stack")
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    runtime.simulate(oscillator, obs, np.array([1.0, 0.0]), None, 50).to_csv(a)
    runtime.simulate(oscillator, obs, np.array([1.0, 0.0]), None, 50).to_csv(b)
    assert a.read_bytes() == b.read_bytes()


def test_seventeen_digit_cells(tmp_path, oscillator):
    filt = design.example_filter([-10.0], 0.01)
    t = design.example_transform([-10.0], 0.01, "discrete")
    obs = runtime.ObserverConfig(filt=filt, transform=t, inversion="grid",
                                 grid_pitch=1.0)
    traj = runtime.simulate(oscillator, obs, np.array([1.0 / 3.0, 0.0]),
                            None, 1)
    path = tmp_path / "c.csv"
    traj.to_csv(path)
    row = path.read_text().splitlines()[1].split(",")
    assert row[2] == "0.33333333333333331"


# ------------------------------------------------------------- simulation

def _example_observer(inversion="linear_stack", pitch=0.05):
    lambdas = [-10.0, -20.0, -30.0]
    filt = design.example_filter(lambdas, 0.01)
    t = design.example_transform(lambdas, 0.01, "discrete")
    return runtime.ObserverConfig(filt=filt, transform=t,
                                  inversion=inversion, grid_pitch=pitch)


def test_simulate_graph_invariance(oscillator):
    obs = _example_observer()
    x0 = np.array([0.4, -0.6])
    xi0 = obs.transform.eval(x0)
    traj = runtime.simulate(oscillator, obs, x0, xi0, 200)
    assert np.max(traj.filter_err) <= 1e-10


def test_simulate_filter_error_contraction(oscillator):
    obs = _example_observer()
    traj = runtime.simulate(oscillator, obs, np.array([1.0, 0.0]), None, 300)
    rho = obs.filt.spectral_radius
    bounds = traj.filter_err[0] * rho ** np.arange(301) * (1 + 1e-8) + 1e-12
    assert np.all(traj.filter_err <= bounds)


def test_simulate_plant_unaffected_by_observer_choice(oscillator):
    a = runtime.simulate(oscillator, _example_observer(), np.array([1.0, 0.0]),
                         None, 100)
    b = runtime.simulate(oscillator, _example_observer("grid", 0.5),
                         np.array([1.0, 0.0]), None, 100)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.t, b.t)


def test_simulate_time_axis(oscillator):
    traj = runtime.simulate(oscillator, _example_observer(),
                            np.array([1.0, 0.0]), None, 10)
    assert traj.dt == 0.01
    assert np.allclose(traj.t, 0.01 * np.arange(11), rtol=0, atol=1e-15)
    assert traj.k[-1] == 10


def test_simulate_rejects_bad_start(oscillator):
    with pytest.raises(ValueError):
        runtime.simulate(oscillator, _example_observer(),
                         np.array([1.5, 0.0]), None, 10)  # outside X0
    with pytest.raises(ValueError):
        runtime.simulate(oscillator, _example_observer(),
                         np.array([1.0, 0.0]), None, 0)


def test_simulate_xi0_realizations_agree(oscillator):
    obs = _example_observer()
    x0 = np.array([0.5, 0.5])
    z0 = obs.transform.eval(x0)
    a = runtime.simulate(oscillator, obs, x0, z0, 50)
    b = runtime.simulate(oscillator, obs, x0, obs.filt.real_state(z0), 50)
    assert np.allclose(a.err, b.err, rtol=0, atol=1e-12)


def test_simulate_domain_escape():
    basis = systems.monomial_basis(2, 1)
    poly = systems.LinearPolySystem(
        f_mat=np.array([[1.5, 0.0], [0.0, 1.5]]),
        h_mat=np.array([[0.0, 1.0, 0.0]]), basis=basis)
    sys = systems.from_linear_poly(poly, [[-1, 1], [-1, 1]],
                                   [[-1, 1], [-1, 1]])
    filt = design.build_filter([0.5])
    t = design.poly_transform(sys, filt)
    obs = runtime.ObserverConfig(filt=filt, transform=t, inversion="grid",
                                 grid_pitch=0.5)
    with pytest.raises(DomainEscape):
        runtime.simulate(sys, obs, np.array([0.9, 0.0]), None, 20)


def test_observer_config_stack_needs_coefficient_rows(oscillator):
    filt = design.build_filter(design.sample_eigenvalues(3, 0.9, seed=0))
    t = design.poly_transform(oscillator, filt)
    with pytest.raises(ValueError):
        runtime.ObserverConfig(filt=filt, transform=t,
                               inversion="linear_stack")
