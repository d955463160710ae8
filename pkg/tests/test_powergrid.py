import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dwlfreq.powergrid import (
    GridEvent,
    GridScenario,
    NodeNoise,
    ab_coefficients,
    clarke,
    clarke_voltages,
    clean_phases,
    generate,
    inverse_clarke,
    make_noise,
    noise_statistics,
    noncircularity,
    profile,
    simulate,
    stream,
    unit_shared,
)

K = math.sqrt(6) / 6


def test_balanced_sample_at_zero_phase():
    s = GridScenario(duration=10)
    np.testing.assert_allclose(generate(s, 0, 0), (1.0, -0.5, -0.5), atol=1e-15)


def test_zero_amplitudes_give_pure_noise():
    s = GridScenario(duration=50, events=(GridEvent(0.0, (0.0, 0.0, 0.0)),), noise=(NodeNoise(snr_db=20),), seed=3)
    rng = stream(3, 0, 1, 0)
    expected = make_noise(NodeNoise(snr_db=20), rng, None, 50)
    np.testing.assert_array_equal(simulate(s)[0], expected)


def test_type_c_sample():
    s = GridScenario(duration=10, events=(GridEvent.sag(0.0, "C"),))
    d = math.radians(10)
    expected = (1.0, 0.8 * math.cos(-2 * math.pi / 3 + d), 0.8 * math.cos(2 * math.pi / 3 - d))
    np.testing.assert_allclose(generate(s, 2, 0), expected, atol=1e-15)


def test_generate_out_of_range():
    with pytest.raises(IndexError):
        generate(GridScenario(duration=10), 0, 10)


@pytest.mark.parametrize("sample, expected", [
    ((0, 0, 0), 0),
    ((1, -0.5, -0.5), math.sqrt(2 / 3) * 1.5),
    ((1, 1, 1), 0),
])
def test_clarke_examples(sample, expected):
    assert abs(clarke(sample) - expected) < 1e-15


floats = st.floats(-10, 10, allow_nan=False)


@given(st.tuples(floats, floats, floats), st.tuples(floats, floats, floats), floats, floats)
def test_clarke_linear(s1, s2, a, b):
    lhs = clarke(a * np.array(s1) + b * np.array(s2))
    rhs = a * clarke(s1) + b * clarke(s2)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(a) + abs(b)) * 30


def test_inverse_clarke_roundtrip():
    v = np.array([1 + 2j, -0.3j])
    np.testing.assert_allclose(clarke(inverse_clarke(v)), v, atol=1e-15)
    np.testing.assert_allclose(inverse_clarke(v).sum(axis=-1), 0, atol=1e-15)


def test_ab_balanced():
    A, B = ab_coefficients(1, 1, 1, 0, 0)
    assert abs(B) < 1e-15
    assert A == pytest.approx(math.sqrt(6) / 2)


def test_ab_sag_without_offsets():
    A, B = ab_coefficients(1, 0.8, 0.8, 0, 0)
    assert B == pytest.approx(K * 0.2)
    assert A == pytest.approx(K * 2.6)


def test_ab_full_single_phase_sag():
    # phases b and c alone: their unit phasors sum to -1 after the 2 pi / 3 rotations
    A, B = ab_coefficients(0, 1, 1, 0, 0)
    assert A == pytest.approx(2 * K)
    assert B == pytest.approx(-K)
    assert abs(B) > 0


def test_ab_rejects_negative_amplitude():
    with pytest.raises(ValueError):
        ab_coefficients(-1, 1, 1, 0, 0)


@pytest.mark.parametrize("kind", ["balanced", "C", "D"])
def test_clarke_matches_ab_model(kind):
    s = GridScenario(duration=3000, phase=0.4, events=(GridEvent.sag(0.0, kind),))
    v = clarke(clean_phases(s))
    theta = profile(s).theta
    from dwlfreq.powergrid import SAGS

    preset = SAGS[kind]
    A, B = ab_coefficients(*preset["amplitudes"], *preset["deltas"])
    assert np.max(np.abs(v - (A * np.exp(1j * theta) + B * np.exp(-1j * theta)))) <= 1e-10


def test_balanced_recursion():
    s = GridScenario(duration=10_000)
    v = clarke(clean_phases(s))
    rot = np.exp(2j * np.pi * s.f_nominal * s.T)
    assert np.max(np.abs(v[1:] - v[:-1] * rot)) <= 1e-12


def test_phase_continuous_across_frequency_step():
    s = GridScenario(duration=2000, events=(GridEvent(0.1, frequency=51.0),))
    p = profile(s)
    k = s.event_index(s.events[0])
    np.testing.assert_allclose(np.diff(p.theta)[k - 1], 2 * np.pi * 51 * s.T)
    np.testing.assert_allclose(np.diff(p.theta)[k - 2], 2 * np.pi * 50 * s.T)
    v = clarke(clean_phases(s))
    assert np.max(np.abs(np.diff(v))) < 2 * np.pi * 51 * s.T * 1.23


def test_infinite_snr_is_noiseless():
    z = make_noise(NodeNoise(), stream(0, 0, 1, 0), None, 100)
    assert not np.any(z)


@pytest.mark.parametrize("snr, ratio", [(20, 1.0), (35, 1.0), (30, 3.0)])
def test_noise_hits_target_snr(snr, ratio):
    spec = NodeNoise(snr_db=snr, ratio=ratio)
    z = clarke(make_noise(spec, stream(1, 0, 1, 0), None, 100_000))
    measured = 10 * math.log10(1.5 / np.mean(np.abs(z) ** 2))
    assert abs(measured - snr) <= 0.2


def test_noncircular_noise_power_split():
    spec = NodeNoise(snr_db=20, ratio=3.0)
    z = clarke(make_noise(spec, stream(2, 0, 1, 0), None, 200_000))
    assert np.var(z.real) / np.var(z.imag) == pytest.approx(3.0, rel=0.03)


def _node_noise(rho, steps=100_000):
    spec = NodeNoise(snr_db=20)
    shared = unit_shared(stream(4, 0, 0, 0), steps)
    return [clarke(make_noise(spec, stream(4, 0, i + 1, 0), shared, steps, rho)) for i in range(2)]


def _correlation(a, b):
    return float(np.real(np.vdot(b, a)) / np.sqrt(np.vdot(a, a).real * np.vdot(b, b).real))


def test_uncorrelated_nodes():
    assert abs(_correlation(*_node_noise(0.0))) < 0.05


def test_correlated_nodes():
    assert _correlation(*_node_noise(0.5)) == pytest.approx(0.5, abs=0.03)


def test_spike_noise():
    spec = NodeNoise(spike_prob=0.1, spike_amp=0.2)
    z = make_noise(spec, stream(0, 0, 1, 0), None, 10_000, spikes=stream(0, 0, 1, 1))
    hits = np.count_nonzero(z, axis=1)
    assert set(np.unique(hits)) <= {0, 1}
    assert np.mean(hits) == pytest.approx(0.1, abs=0.01)
    assert set(np.unique(np.abs(z[z != 0]))) == {0.2}


def test_noise_statistics_match_samples():
    s = GridScenario(duration=50_000, node_count=2, noise=(NodeNoise(snr_db=10, ratio=2.0),), rho=0.4, seed=9)
    v = clarke_voltages(s)[:, 0] - clarke(clean_phases(s))
    stats = noise_statistics(s)
    assert np.mean(np.abs(v[0]) ** 2) == pytest.approx(stats.R[0][0, 0].real, rel=0.03)
    assert np.mean(v[0] ** 2).real == pytest.approx(stats.U[0][0, 0].real, rel=0.1)
    assert np.mean(v[0] * np.conj(v[1])).real == pytest.approx(stats.cov(0, 1)[0, 0].real, rel=0.08)


def test_noiseless_floor():
    stats = noise_statistics(GridScenario(duration=10))
    assert stats.R[0][0, 0] == 1e-8


def test_simulation_reproducible_and_trial_dependent():
    s = GridScenario(duration=200, noise=(NodeNoise(snr_db=30),), seed=1)
    a = simulate(s, 0)
    np.testing.assert_array_equal(a, simulate(GridScenario(duration=200, noise=(NodeNoise(snr_db=30),), seed=1), 0))
    assert not np.array_equal(a, simulate(s, 1))
    assert not np.array_equal(a[0], a[1])


@pytest.mark.parametrize("kwargs", [
    dict(T=0.0), dict(rho=1.0), dict(duration=0), dict(events=(GridEvent(5.0),)),
    dict(noise=(NodeNoise(ratio=0.0),)), dict(events=(GridEvent(0.0, (1.0, -0.1, 1.0)),)),
])
def test_scenario_validation(kwargs):
    with pytest.raises(ValueError):
        GridScenario(**kwargs)


def test_segments():
    s = GridScenario(duration=2500, events=(GridEvent.sag(0.3, "D"), GridEvent.sag(0.1, "C")))
    assert s.segments() == [(0, 500), (500, 1500), (1500, 2500)]


def test_noncircularity_balanced():
    s = GridScenario(duration=1000)
    v = clarke(clean_phases(s))
    assert noncircularity(v, profile(s).theta) <= 1e-10
    assert noncircularity(v) <= 1e-10


def test_noncircularity_sag_matches_ab_oracle():
    s = GridScenario(duration=1000, events=(GridEvent(0.0, (1.0, 0.8, 0.8)),))
    A, B = ab_coefficients(1, 0.8, 0.8, 0, 0)
    expected = 2 * abs(A * B) / (abs(A) ** 2 + abs(B) ** 2)
    v = clarke(clean_phases(s))
    assert noncircularity(v, profile(s).theta) == pytest.approx(expected, rel=1e-10)
    # 1000 samples span whole cycles, so the sample quotient agrees
    assert noncircularity(v) == pytest.approx(expected, rel=1e-9)


def test_noncircularity_conjugate_tone():
    theta = 2 * np.pi * 50 * 2e-4 * np.arange(500)
    assert noncircularity(np.exp(-1j * theta), theta) <= 1e-12


def test_noncircularity_needs_samples():
    with pytest.raises(ValueError):
        noncircularity(np.ones(50))
