"""Smoke test for the lvfp extension module. Run with pytest or directly."""

import math

import lvfp


def test_equilibrium_and_orbit():
    p = lvfp.ModelParams()
    m1, m2 = p.equilibrium_mean()
    assert math.isclose(m1, 10 / 3, rel_tol=1e-14)
    assert math.isclose(m2, 29 / 15, rel_tol=1e-14)
    assert math.isclose(p.delta(), 0.5)
    rows = lvfp.integrate_moments(p, 4.5, 0.75, 0.1, 0.1, t_end=0.0)
    assert rows == [(0.0, 4.5, 0.75, 0.1, 0.1)]


def test_densities_have_unit_mass_and_expected_mean():
    p = lvfp.ModelParams(p=1.0)
    g = lvfp.equilibrium_density(p, 1)
    assert math.isclose(g.mean(), 10 / 3, rel_tol=1e-10)
    assert math.isclose(g.mass_between(1e-9, 60.0), 1.0, rel_tol=1e-8)
    assert g.relative_entropy_to(g) == 0.0


def test_solver_conserves_mass():
    p = lvfp.ModelParams()
    grid = lvfp.GridSpec(50.0, 1001)
    run = lvfp.simulate(p, grid, 4.0, 3.0, t_end=0.5)
    assert math.isclose(run.t, 0.5)
    for row in run.history:
        assert abs(row[5] - 1.0) < 1e-12 and abs(row[6] - 1.0) < 1e-12
    assert min(run.f1) >= -1e-13
    assert lvfp.distance("cramer_cdf", run.f1, run.f1, grid) == 0.0
    eq = lvfp.equilibrium_density(p, 1).sample(grid)
    assert lvfp.distance("energy_norm_ell", run.f1, eq, grid, order=1.1) > 0.0


def test_rates_and_errors():
    p = lvfp.ModelParams()
    assert math.isclose(lvfp.energy_decay_rate(p, 1.0, 1), 1.0)
    try:
        lvfp.ModelParams(K=1.0).check_coexistence()
    except ValueError as e:
        assert "coexistence" in str(e)
    else:
        raise AssertionError("inadmissible parameters accepted")
    assert [c[0] for c in lvfp.criteria("metrics")] == [6, 7, 8]
    passed, detail = lvfp.run_criterion(6)
    assert passed, detail


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print("ok", name)
