import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from hjsystems.core import GridField, TorusGrid
from hjsystems.diagnostics import superdifferential_probe
from hjsystems.eikonal import (
    EffectiveHamiltonian,
    IncompatibleTrace,
    InfeasibleLevel,
    IntrinsicMetricGraph,
    intrinsic_distance,
    maximal_subsolution,
    metric_subsolution_check,
    scalar_aubry,
    scalar_critical_value,
)

from conftest import cosine, flat, reference_run

# length of the critical metric from 0 to 1/2, by adaptive quadrature
S_HALF = quad(lambda s: np.sqrt(2 * (1 - np.cos(2 * np.pi * s))), 0, 0.5, epsabs=1e-13)[0]


def cos_metric(n, level=1.0):
    eff = EffectiveHamiltonian.unshifted(cosine(), TorusGrid(1, n))
    return IntrinsicMetricGraph.build(eff, level)


def test_quadrature_oracle_is_two_over_pi():
    assert S_HALF == pytest.approx(2 / np.pi, abs=1e-12)


def test_constant_metric_distance():
    g = TorusGrid(1, 64)
    m = IntrinsicMetricGraph.build(EffectiveHamiltonian.unshifted(flat(), g), 0.5)
    d = intrinsic_distance(m, 0)
    assert d.flat[16] == pytest.approx(0.25)
    assert d.flat[48] == pytest.approx(0.25)
    assert d.flat[0] == 0.0


def test_constant_metric_2d_diagonal():
    g = TorusGrid(2, 32)
    m = IntrinsicMetricGraph.build(EffectiveHamiltonian.unshifted(flat(2), g), 2.0)
    d = intrinsic_distance(m, 0)
    assert d.flat[g.flat_index((8, 8))] == pytest.approx(2 * np.sqrt(2) * 0.25)
    assert d.flat[g.flat_index((8, 0))] == pytest.approx(2 * 0.25)


def test_cosine_distance_and_refinement():
    errs = [abs(intrinsic_distance(cos_metric(n), 0).flat[n // 2] - S_HALF) for n in (128, 256, 512)]
    assert errs[2] <= 0.02
    assert errs[0] > errs[1] > errs[2]


def test_infeasible_level():
    with pytest.raises(InfeasibleLevel):
        cos_metric(64, 0.9)
    m = IntrinsicMetricGraph.build(EffectiveHamiltonian.unshifted(cosine(), TorusGrid(1, 64)), 0.9,
                                   allow_infeasible=True)
    assert np.isinf(m.distances([32])[0, 0])


def test_scalar_critical_value_and_aubry():
    g = TorusGrid(1, 64)
    eff = EffectiveHamiltonian.unshifted(cosine(), g)
    assert scalar_critical_value(eff) == pytest.approx(1.0)
    assert scalar_aubry(eff, 1.0).tolist() == [0]
    eff0 = EffectiveHamiltonian.unshifted(flat(), g)
    assert scalar_critical_value(eff0) == 0.0
    assert scalar_aubry(eff0, 0.0).tolist() == list(range(64))


def test_maximal_subsolution_examples():
    m = cos_metric(512)
    u = maximal_subsolution(m, [0], [0.0])
    assert u.flat[256] == pytest.approx(2 / np.pi, abs=0.02)
    again = maximal_subsolution(m, np.arange(512), u.flat)
    np.testing.assert_allclose(again.flat, u.flat, rtol=0, atol=1e-12)
    with pytest.raises(IncompatibleTrace) as exc:
        maximal_subsolution(m, [0, 256], [0.0, 10.0])
    assert exc.value.pair == (0, 256)


def test_metric_check_examples():
    m = cos_metric(128)
    g = m.grid
    assert metric_subsolution_check(GridField.constant(g, 4.0), m).passed
    assert metric_subsolution_check(maximal_subsolution(m, [0], [0.0]), m, tol=1e-12).passed
    bad = metric_subsolution_check(GridField.from_function(g, lambda x: 10 * np.sin(2 * np.pi * x[:, 0])), m)
    assert not bad.passed and bad.worst_excess > 1


def test_metric_check_samples_large_grids():
    g = TorusGrid(2, 72)
    m = IntrinsicMetricGraph.build(EffectiveHamiltonian.unshifted(cosine(dim=2), g), 1.0)
    rep = metric_subsolution_check(GridField.constant(g, 0.0), m, sample_pairs=2000)
    assert rep.passed and rep.pairs_checked < g.size**2


@settings(max_examples=5)
@given(st.integers(0, 2**31))
def test_triangle_inequality(seed):
    g = TorusGrid(2, 16)
    eff = EffectiveHamiltonian.unshifted(cosine(dim=2), g)
    m = IntrinsicMetricGraph.build(eff, 1.3)
    rng = np.random.default_rng(seed)
    x, y, z = rng.integers(0, g.size, (3, 50))
    full = m.distances(np.arange(g.size))
    assert np.all(full[x, z] <= full[x, y] + full[y, z] + 1e-12)


def test_distance_has_superdifferential_off_source():
    d = intrinsic_distance(cos_metric(256), 0)
    assert all(superdifferential_probe(d, k).passed for k in range(1, 256, 5))


def test_effective_hamiltonian_from_limit():
    res = reference_run("two-well", 128)
    sys = res.problem.system
    shifts = sys.coupling.apply(res.limit.stack())
    mask = res.aubry.mask
    dilated = mask | np.roll(mask, 1) | np.roll(mask, -1)
    for i, comp in enumerate(sys.components):
        eff = EffectiveHamiltonian(comp, GridField(sys.grid, shifts[i]))
        c = scalar_critical_value(eff)
        assert abs(c - res.beta) <= 0.02
        nodes = scalar_aubry(eff, c, 1e-6)
        assert mask[nodes].any()
        assert dilated[nodes].all()
