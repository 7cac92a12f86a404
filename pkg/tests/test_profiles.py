import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dotmemory.profiles import (
    BiasProfile,
    Easing,
    FermiSpec,
    ProfileError,
    ScenarioKind,
    Side,
    alternate_profile,
    evaluate,
    make_scenario,
    validate,
)
from dotmemory.spectral import ModelParams, critical_biases

P = ModelParams()
CRIT = critical_biases(P)


@pytest.mark.parametrize("kind, delta", [(1, 0.0), (2, 0.4), (2, 0.05), (3, 0.2), (3, 0.05)])
def test_scenarios_satisfy_their_invariants(kind, delta):
    profile = make_scenario(ScenarioKind(kind), P, delta)
    assert validate(profile) == []
    assert evaluate(profile, -1.0) == 0.0


def test_scenario1_stays_subcritical_and_smooth():
    profile = make_scenario(ScenarioKind.SMOOTH_NO_CROSSING, P)
    s = np.linspace(-1, 0, 2001)
    assert profile.values(s).max() <= CRIT.vc1 - 0.5
    assert profile.jumps == ()


def test_scenario2_jumps_and_limits():
    d = 0.2
    profile = make_scenario(ScenarioKind.CROSS_AND_RETURN, P, d)
    assert profile.jumps == (profile.s_c, profile.s_c_prime)
    assert evaluate(profile, profile.s_c, Side.LEFT) == pytest.approx(CRIT.vc1 - d)
    assert evaluate(profile, profile.s_c, Side.RIGHT) == pytest.approx(CRIT.vc1 + d)
    assert evaluate(profile, profile.s_c_prime, Side.RIGHT) == pytest.approx(CRIT.vc1 - d)
    # the point values at both jumps belong to the window
    assert evaluate(profile, profile.s_c) == evaluate(profile, profile.s_c, Side.RIGHT)
    assert evaluate(profile, profile.s_c_prime) == evaluate(profile, profile.s_c_prime, Side.LEFT)
    assert profile.final_bias == pytest.approx(CRIT.vc1 - 1.0)
    np.testing.assert_allclose(profile.values(np.array([profile.s_c, profile.s_c_prime])),
                               [CRIT.vc1 + d, CRIT.vc1 + d])


def test_scenario3_monotone_and_final_regime():
    profile = make_scenario(ScenarioKind.CROSS_TO_SECOND_REGIME, P, 0.1)
    v = profile.values(np.linspace(-1, 0, 4001))
    assert np.all(np.diff(v) >= -1e-12)
    assert profile.final_bias == pytest.approx(CRIT.vc2 + 1.0)
    assert CRIT.regime(profile.final_bias) == 2


def test_zero_delta_is_flagged():
    profile = make_scenario(ScenarioKind.CROSS_AND_RETURN, P, 0.0)
    assert any("delta" in p for p in validate(profile))


def test_bad_windows_rejected():
    with pytest.raises(ValueError):
        make_scenario(ScenarioKind.CROSS_AND_RETURN, P, 0.2, s_c=-0.2, s_c_prime=-0.8)
    with pytest.raises(ValueError):
        make_scenario(ScenarioKind.CROSS_AND_RETURN, P, 3.0)


def test_values_clamp_outside_interval_and_evaluate_refuses():
    profile = make_scenario(ScenarioKind.SMOOTH_NO_CROSSING, P)
    np.testing.assert_allclose(profile.values(np.array([-5.0, 3.0])), [0.0, profile.final_bias])
    with pytest.raises(ProfileError):
        evaluate(profile, 0.5)


def test_second_derivative_bound_holds():
    profile = make_scenario(ScenarioKind.CROSS_TO_SECOND_REGIME, P, 0.2)
    for piece in profile.pieces:
        s = np.linspace(piece.s0, piece.s1, 2001)
        h = s[1] - s[0]
        d2 = np.abs(np.diff(piece.value(s), 2)) / h**2
        assert d2.max() <= piece.second_derivative_bound * 1.001 + 1e-9


@given(st.floats(0, 1), st.floats(0, 1))
def test_easings_are_monotone_maps_of_unit_interval(a, b):
    lo, hi = min(a, b), max(a, b)
    for easing in Easing:
        assert easing(0.0) == 0.0 and easing(1.0) == 1.0
        assert easing(lo) <= easing(hi) + 1e-15


def test_config_round_trip():
    profile = make_scenario(ScenarioKind.CROSS_AND_RETURN, P, 0.1, easing=Easing.CUBIC, ramp=0.04)
    again = BiasProfile.from_config(profile.to_config(), P)
    s = np.linspace(-1, 0, 1001)
    np.testing.assert_array_equal(profile.values(s), again.values(s))
    assert again.delta == 0.1


def test_alternate_profile_shares_endpoints():
    base = make_scenario(ScenarioKind.SMOOTH_NO_CROSSING, P)
    alt = alternate_profile(base)
    assert alt.final_bias == base.final_bias
    assert validate(alt) == []
    assert not np.allclose(alt.values(np.linspace(-1, 0, 11)), base.values(np.linspace(-1, 0, 11)))
    with pytest.raises(ProfileError):
        alternate_profile(make_scenario(ScenarioKind.CROSS_AND_RETURN, P, 0.2))


def test_fermi_specs():
    f = FermiSpec.fermi_dirac(1.0, 10.0)
    assert f(10.0) == pytest.approx(0.5)
    assert f(2.0) == pytest.approx(1 / (1 + np.exp(-8.0)))
    assert f(1e4) == 0.0 and f(-1e4) == 1.0
    assert FermiSpec.constant(1.0)(np.array([1.0, 2.0])).tolist() == [1.0, 1.0]
    assert FermiSpec.step(0.0)(np.array([-1.0, 1.0])).tolist() == [1.0, 0.0]
    t = FermiSpec.tabulated([0, 1], [1, 0])
    assert t(0.25) == pytest.approx(0.75)
    for spec in (f, FermiSpec.constant(0.5), FermiSpec.step(1.0), t):
        assert FermiSpec.from_config(spec.to_config()) == spec


def test_fermi_spec_rejects_bad_input():
    with pytest.raises(ValueError):
        FermiSpec.fermi_dirac(-1.0)
    with pytest.raises(ValueError):
        FermiSpec.constant(2.0)
    with pytest.raises(ValueError):
        FermiSpec.tabulated([0, 1, 2], [0, 1, 0])
    with pytest.raises(ValueError):
        FermiSpec("bose")
