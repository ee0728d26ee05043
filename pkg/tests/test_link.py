import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beamspace import (
    AngleOutOfRangeError,
    BasisPair,
    InvalidArgumentError,
    NoiseModel,
    PerturbationLobe,
    PskConstellation,
    RatioSetMismatchError,
    SingularChannelError,
    StatePatternSet,
    UndefinedRatioError,
    VectorPattern,
    apply_perturbation,
    build_channel,
    build_grid,
    cdf_summary,
    constellation_at_angle,
    default_mirror_profile,
    evaluate_scenario,
    generate_mirror_pair,
    generate_perturbation,
    great_circle_distance,
    great_circle_offset,
    perturbed_basis,
    quantize_symbols,
    received_constellation,
    run_monte_carlo,
    sample_pattern,
    transmit_and_receive,
    zf_equalize,
    zero_pattern,
)

QPSK = PskConstellation.qpsk()
RATIOS = QPSK.ratio_set
D = np.deg2rad


@pytest.fixture(scope="module")
def grid():
    return build_grid(91, 180)


@pytest.fixture(scope="module")
def free_states(grid):
    return generate_mirror_pair(default_mirror_profile(), grid, RATIOS)


@pytest.fixture(scope="module")
def free_basis(free_states):
    return perturbed_basis(free_states)


@pytest.fixture(scope="module")
def hand_states(grid, free_states):
    psi = generate_perturbation(
        [PerturbationLobe(theta=D(60), phi=D(310), width=D(65), amplitude=0.4,
                          phase=D(100), states=(1,)),
         PerturbationLobe(theta=D(100), phi=D(200), width=D(70), amplitude=0.3,
                          phase=D(-60), states=(3,))],
        grid, RATIOS)
    return apply_perturbation(free_states, psi)


@pytest.fixture(scope="module")
def hand_basis(hand_states):
    return perturbed_basis(hand_states)


RX1 = (D(45.0), D(294.0))
RX2 = (D(45.0), D(298.0))


class TestBuildChannel:
    def test_zero_b2_is_flagged_singular(self, grid, free_basis):
        basis = BasisPair(b1=free_basis.b1, b2=zero_pattern(grid))
        scenario = build_channel(basis, (RX1, RX2), QPSK)
        assert np.all(scenario.channel[:, 1] == 0)
        assert scenario.singular
        with pytest.raises(SingularChannelError):
            zf_equalize(np.array([1.0, 1.0j]), scenario)

    def test_theta_receiver_with_phi_only_pattern_flagged(self, grid):
        rng = np.random.default_rng(0)
        phi_only = VectorPattern(
            grid=grid, e_theta=np.zeros(grid.shape),
            e_phi=rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
        basis = BasisPair(b1=phi_only, b2=phi_only)
        scenario = build_channel(basis, (RX1, RX2), QPSK)
        assert np.all(scenario.channel == 0)
        assert scenario.singular

    def test_entries_match_node_lookup_oracle(self, grid, free_basis):
        i1, j1 = 30, 40
        i2, j2 = 31, 42
        angles = ((grid.theta[i1], grid.phi[j1]), (grid.theta[i2], grid.phi[j2]))
        scenario = build_channel(free_basis, angles, QPSK)
        want = np.array([
            [free_basis.b1.e_theta[i1, j1], free_basis.b2.e_theta[i1, j1]],
            [free_basis.b1.e_theta[i2, j2], free_basis.b2.e_theta[i2, j2]],
        ])
        assert np.allclose(scenario.channel, want, rtol=1e-12, atol=0)

    def test_phi_polarized_receivers(self, grid, free_basis):
        i1, j1 = 50, 10
        angles = ((grid.theta[i1], grid.phi[j1]), RX2)
        pol = ((0.0, 1.0), (0.0, 1.0))
        scenario = build_channel(free_basis, angles, QPSK, rx_polarizations=pol)
        assert scenario.channel[0, 0] == pytest.approx(
            complex(free_basis.b1.e_phi[i1, j1]), rel=1e-12)

    def test_angle_outside_grid(self, free_basis):
        with pytest.raises(AngleOutOfRangeError):
            build_channel(free_basis, ((-0.2, 0.0), RX2), QPSK)

    def test_condition_number_recorded(self, free_basis):
        scenario = build_channel(free_basis, (RX1, RX2), QPSK)
        assert np.isfinite(scenario.condition_number)
        assert scenario.condition_number >= 1.0

    def test_condition_number_matches_svd_oracle(self, free_basis):
        from beamspace.link import _condition_2x2
        rng = np.random.default_rng(31)
        for _ in range(20):
            h = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            assert _condition_2x2(h) == pytest.approx(np.linalg.cond(h), rel=1e-9)
        assert _condition_2x2(np.array([[1.0, 1.0], [1.0, 1.0]], dtype=complex)) == np.inf


class TestTransmitAndReceive:
    def test_free_space_consistency(self, free_states, free_basis):
        scenario = build_channel(free_basis, (RX1, RX2), QPSK)
        h = scenario.channel
        for x1 in QPSK.points:
            for x2 in QPSK.points:
                y = transmit_and_receive(free_states, x1, x2, scenario)
                want = h @ np.array([x1, x2])
                assert np.max(np.abs(y - want)) <= 1e-12

    def test_pm_one_consistency_under_any_perturbation(self, hand_states, hand_basis):
        scenario = build_channel(hand_basis, (RX1, RX2), QPSK)
        h = scenario.channel
        for x1, x2 in [(1, 1), (1j, 1j), (1, -1), (1j, -1j)]:
            y = transmit_and_receive(hand_states, x1, x2, scenario)
            want = h @ np.array([x1, x2])
            assert np.max(np.abs(y - want)) <= 1e-12

    def test_pm_j_residual_matches_direct_oracle(self, hand_states, hand_basis):
        scenario = build_channel(hand_basis, (RX1, RX2), QPSK)
        h = scenario.channel
        x1, x2 = 1.0, 1.0j
        y = transmit_and_receive(hand_states, x1, x2, scenario)
        residual = y - h @ np.array([x1, x2])
        assert np.max(np.abs(residual)) > 1e-3
        # direct evaluation: x1 * p^H (E_state - b1 - xbar*b2) at each angle
        want = np.empty(2, dtype=complex)
        for m in range(2):
            theta, phi = scenario.rx_angles[m]
            et_s, _ = sample_pattern(hand_states.state(1), theta, phi)
            et_b1, _ = sample_pattern(hand_basis.b1, theta, phi)
            et_b2, _ = sample_pattern(hand_basis.b2, theta, phi)
            want[m] = x1 * (et_s - et_b1 - 1j * et_b2)
        assert np.allclose(residual, want, rtol=1e-10, atol=1e-14)

    def test_ratio_not_in_alphabet(self, free_states, free_basis):
        scenario = build_channel(free_basis, (RX1, RX2), QPSK)
        with pytest.raises(RatioSetMismatchError):
            transmit_and_receive(free_states, 1.0, np.exp(0.3j), scenario)
        with pytest.raises(UndefinedRatioError):
            transmit_and_receive(free_states, 0.0, 1.0, scenario)

    def test_constellation_products_ignore_noise_model(self, free_states, free_basis):
        noisy = build_channel(free_basis, (RX1, RX2), QPSK,
                              noise=NoiseModel(variances=(0.1, 0.1)))
        quiet = build_channel(free_basis, (RX1, RX2), QPSK)
        a = received_constellation(free_states, noisy)
        b = received_constellation(free_states, quiet)
        assert [(p.stream, p.actual) for p in a] == [(p.stream, p.actual) for p in b]

    def test_noise_requires_rng_and_is_reproducible(self, free_states, free_basis):
        noise = NoiseModel(variances=(1e-4, 1e-4))
        scenario = build_channel(free_basis, (RX1, RX2), QPSK, noise=noise)
        with pytest.raises(InvalidArgumentError):
            transmit_and_receive(free_states, 1.0, 1.0, scenario)
        y1 = transmit_and_receive(free_states, 1.0, 1.0, scenario,
                                  rng=np.random.default_rng(5))
        y2 = transmit_and_receive(free_states, 1.0, 1.0, scenario,
                                  rng=np.random.default_rng(5))
        assert np.array_equal(y1, y2)
        y3 = transmit_and_receive(free_states, 1.0, 1.0, scenario,
                                  rng=np.random.default_rng(6))
        assert not np.array_equal(y1, y3)


class TestZfEqualize:
    def test_inverts_exactly(self, free_states, free_basis):
        scenario = build_channel(free_basis, (RX1, RX2), QPSK)
        x = np.array([1.0j, -1.0])
        y = scenario.channel @ x
        xhat = zf_equalize(y, scenario)
        assert np.max(np.abs(xhat - x)) <= 1e-10

    def test_pm_one_decodes_exactly_under_perturbation(self, hand_states, hand_basis):
        scenario = build_channel(hand_basis, (RX1, RX2), QPSK)
        for x1, x2 in [(1, 1), (1j, 1j), (-1, 1), (1j, -1j)]:
            y = transmit_and_receive(hand_states, x1, x2, scenario)
            xhat = zf_equalize(y, scenario)
            assert np.max(np.abs(xhat - np.array([x1, x2]))) <= 1e-10

    def test_pm_j_three_cluster_structure(self, hand_states, hand_basis):
        scenario = build_channel(hand_basis, (RX1, RX2), QPSK)
        points = received_constellation(hand_states, scenario)
        for stream in (1, 2):
            for sym in range(4):
                cluster_values = [
                    p.actual for p in points
                    if p.stream == stream
                    and (p.k1 if stream == 1 else p.k2) == sym
                ]
                clusters: list[complex] = []
                for v in cluster_values:
                    if not any(abs(v - c) <= 1e-6 for c in clusters):
                        clusters.append(v)
                assert len(clusters) == 3

    def test_quantization_is_separate(self, hand_states, hand_basis):
        scenario = build_channel(hand_basis, (RX1, RX2), QPSK)
        y = transmit_and_receive(hand_states, 1.0, 1.0j, scenario)
        xhat = zf_equalize(y, scenario)
        assert np.max(np.abs(xhat - np.array([1.0, 1.0j]))) > 1e-6
        decided = quantize_symbols(xhat, QPSK)
        assert decided[0] in QPSK.points
        assert decided[1] in QPSK.points


class TestConstellationAtAngle:
    def test_free_space_actual_equals_ideal(self, free_states, free_basis):
        points = constellation_at_angle(free_basis, free_states, QPSK, *RX1)
        assert len(points) == 2 * 16
        for p in points:
            assert abs(p.actual - p.ideal) <= 1e-9

    def test_perturbed_dichotomy(self, hand_states, hand_basis):
        points = constellation_at_angle(hand_basis, hand_states, QPSK, *RX1)
        for p in points:
            ratio = (p.k2 - p.k1) % 4
            if ratio in (0, 2):
                assert abs(p.actual - p.ideal) <= 1e-10
        displaced = [abs(p.actual - p.ideal) for p in points
                     if (p.k2 - p.k1) % 4 in (1, 3)]
        assert max(displaced) > 1e-3


class TestGeometry:
    def test_offset_distance_preserved(self):
        rng = np.random.default_rng(7)
        theta = np.arccos(1 - 2 * rng.random(200))
        phi = 2 * np.pi * rng.random(200)
        dist = D(3.0) + D(2.0) * rng.random(200)
        bearing = 2 * np.pi * rng.random(200)
        theta2, phi2 = great_circle_offset(theta, phi, dist, bearing)
        got = great_circle_distance(theta, phi, theta2, phi2)
        assert np.max(np.abs(got - dist)) <= 1e-9

    def test_zero_bearing_heads_to_north_pole(self):
        theta2, phi2 = great_circle_offset(1.0, 2.0, 0.3, 0.0)
        assert theta2 == pytest.approx(0.7, abs=1e-12)
        assert phi2 == pytest.approx(2.0, abs=1e-12)

    def test_pole_crossing(self):
        theta2, phi2 = great_circle_offset(0.1, 1.0, 0.3, 0.0)
        assert theta2 == pytest.approx(0.2, abs=1e-12)
        assert phi2 == pytest.approx(1.0 + np.pi, abs=1e-9)


class TestMonteCarlo:
    def test_identity_perturbation_step_cdf(self, free_states, free_basis):
        mc = run_monte_carlo(free_states, free_basis, QPSK, n_scenarios=2000, seed=3)
        assert mc.n_rejected == 0
        assert mc.stream_errors[0][-1] <= 1e-10
        assert mc.stream_errors[1][-1] <= 1e-10

    def test_seeded_reproducibility(self, hand_states, hand_basis):
        a = run_monte_carlo(hand_states, hand_basis, QPSK, n_scenarios=500, seed=11)
        b = run_monte_carlo(hand_states, hand_basis, QPSK, n_scenarios=500, seed=11)
        for s in (0, 1):
            assert np.array_equal(a.stream_errors[s], b.stream_errors[s])
        c = run_monte_carlo(hand_states, hand_basis, QPSK, n_scenarios=500, seed=12)
        assert not np.array_equal(a.stream_errors[0], c.stream_errors[0])

    def test_worker_count_does_not_change_bytes(self, hand_states, hand_basis):
        runs = [run_monte_carlo(hand_states, hand_basis, QPSK, n_scenarios=40_000,
                                seed=9, threads=t) for t in (1, 2, 8)]
        for r in runs[1:]:
            for s in (0, 1):
                assert runs[0].stream_errors[s].tobytes() == r.stream_errors[s].tobytes()

    def test_record_path_cross_check(self, hand_states, hand_basis):
        # the vectorized closed-form solver must agree with the
        # scenario-at-a-time LAPACK path
        mc = run_monte_carlo(hand_states, hand_basis, QPSK, n_scenarios=3, seed=21)
        rng = np.random.default_rng(21)
        u = rng.random((4, 3))
        theta1 = np.arccos(1 - 2 * u[0])
        phi1 = 2 * np.pi * u[1]
        dist = D(3.0) + (D(5.0) - D(3.0)) * u[2]
        bearing = 2 * np.pi * u[3]
        theta2, phi2 = great_circle_offset(theta1, phi1, dist, bearing)
        errors = {1: [], 2: []}
        for s in range(3):
            scenario = build_channel(
                hand_basis, ((theta1[s], phi1[s]), (theta2[s], phi2[s])), QPSK)
            for rec in evaluate_scenario(hand_states, scenario):
                errors[rec.stream].append(rec.magnitude)
        for stream in (1, 2):
            want = np.sort(np.asarray(errors[stream]))
            got = mc.stream_errors[stream - 1]
            assert np.allclose(got, want, rtol=1e-9, atol=1e-12)

    def test_ratio_index_recorded(self, hand_states, hand_basis):
        scenario = build_channel(hand_basis, (RX1, RX2), QPSK)
        recs = evaluate_scenario(hand_states, scenario)
        assert len(recs) == 32
        for rec in recs:
            assert rec.stream in (1, 2)
            assert 0 <= rec.ratio_index < 4
            assert rec.magnitude == abs(rec.error)

    def test_invalid_arguments(self, free_states, free_basis):
        with pytest.raises(InvalidArgumentError):
            run_monte_carlo(free_states, free_basis, QPSK, n_scenarios=0, seed=1)
        with pytest.raises(InvalidArgumentError):
            run_monte_carlo(free_states, free_basis, QPSK, n_scenarios=10,
                            separation_deg=(0.0, 5.0), seed=1)
        with pytest.raises(InvalidArgumentError):
            run_monte_carlo(free_states, free_basis, QPSK, n_scenarios=10,
                            separation_deg=(5.0, 3.0), seed=1)
        with pytest.raises(RatioSetMismatchError):
            run_monte_carlo(free_states, free_basis, PskConstellation(8),
                            n_scenarios=10, seed=1)

    def test_degenerate_separation_interval_allowed(self, free_states, free_basis):
        # min == max is a valid (single-distance) interval
        mc = run_monte_carlo(free_states, free_basis, QPSK, n_scenarios=50,
                             separation_deg=(4.0, 4.0), seed=3)
        assert mc.stream_errors[0].size == 50 * 16

    def test_grid_mismatch_rejected(self, free_states):
        from beamspace import GridMismatchError
        other = generate_mirror_pair(default_mirror_profile(), build_grid(11, 16),
                                     RATIOS)
        with pytest.raises(GridMismatchError):
            run_monte_carlo(free_states, perturbed_basis(other), QPSK,
                            n_scenarios=5, seed=1)

    def test_bad_polarizations_rejected(self, free_states, free_basis):
        with pytest.raises(InvalidArgumentError):
            run_monte_carlo(free_states, free_basis, QPSK, n_scenarios=5, seed=1,
                            rx_polarizations=((2.0, 0.0), (1.0, 0.0)))

    def test_phi_polarized_receivers_give_different_streams(self, hand_states, hand_basis):
        from beamspace.link import PHI_POL
        a = run_monte_carlo(hand_states, hand_basis, QPSK, n_scenarios=200, seed=6)
        b = run_monte_carlo(hand_states, hand_basis, QPSK, n_scenarios=200, seed=6,
                            rx_polarizations=(PHI_POL, PHI_POL))
        assert not np.array_equal(a.stream_errors[0], b.stream_errors[0])

    def test_rejection_tally(self, grid, free_states):
        # force universal rejection with an impossible condition cap
        basis = perturbed_basis(free_states)
        mc = run_monte_carlo(free_states, basis, QPSK, n_scenarios=50, seed=5,
                             condition_cap=1.0 + 1e-12)
        assert mc.n_rejected == 50
        assert mc.stream_errors[0].size == 0

    def test_scale_invariance_of_error_geometry(self, grid, hand_states, hand_basis):
        c = 0.31 - 1.7j
        scaled_states = StatePatternSet(
            ratios=RATIOS,
            patterns={k: VectorPattern(grid=grid,
                                       e_theta=c * hand_states.state(k).e_theta,
                                       e_phi=c * hand_states.state(k).e_phi)
                      for k in range(4)})
        scaled_basis = perturbed_basis(scaled_states)
        a = run_monte_carlo(hand_states, hand_basis, QPSK, n_scenarios=300, seed=13)
        b = run_monte_carlo(scaled_states, scaled_basis, QPSK, n_scenarios=300, seed=13)
        for s in (0, 1):
            assert np.allclose(a.stream_errors[s], b.stream_errors[s],
                               rtol=1e-9, atol=1e-12)


class TestCdfSummary:
    def test_single_record(self):
        s = cdf_summary([0.37])
        assert all(v == 0.37 for v in s.quantiles.values())
        assert s.count == 1

    def test_textbook_median(self):
        s = cdf_summary([1.0, 2.0, 3.0, 4.0])
        assert s.quantiles[50.0] == pytest.approx(2.5)
        assert s.quantiles[25.0] == pytest.approx(1.75)

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            cdf_summary([])

    def test_exceedance_fractions(self):
        s = cdf_summary([0.5, 1.5, 2.5, 3.5])
        assert s.exceedance[1.0] == pytest.approx(0.75)

    def test_dkw_band_on_uniform_sample(self):
        # empirical CDF of 1e4 uniforms stays inside the 99% DKW band
        rng = np.random.default_rng(2024)
        n = 10_000
        values = np.sort(rng.random(n))
        emp = np.arange(1, n + 1) / n
        eps = np.sqrt(np.log(2 / 0.01) / (2 * n))
        assert np.max(np.abs(emp - values)) <= eps

    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 300))
    def test_quantiles_monotone(self, seed, n):
        rng = np.random.default_rng(seed)
        s = cdf_summary(rng.exponential(1.0, size=n))
        q = [s.quantiles[p] for p in (1.0, 5.0, 25.0, 50.0, 75.0, 95.0, 99.0)]
        assert all(a <= b + 1e-15 for a, b in zip(q, q[1:]))


class TestNoiseModel:
    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            NoiseModel(variances=(-0.1, 0.0))

    def test_scenario_polarization_must_be_unit(self, free_basis):
        from beamspace import LinkScenario
        with pytest.raises(InvalidArgumentError):
            LinkScenario(
                rx_angles=np.array([[1.0, 2.0], [1.0, 2.1]]),
                rx_polarizations=np.array([[2.0, 0.0], [1.0, 0.0]], dtype=complex),
                channel=np.eye(2, dtype=complex),
                condition_number=1.0,
                constellation=QPSK,
            )

    def test_disabled_by_default(self):
        assert not NoiseModel().enabled
        assert NoiseModel(variances=(0.1, 0.0)).enabled

    def test_sample_statistics(self):
        rng = np.random.default_rng(77)
        noise = NoiseModel(variances=(2.0, 0.5))
        draws = noise.sample(rng, 20_000)
        var = np.mean(np.abs(draws) ** 2, axis=0)
        assert var[0] == pytest.approx(2.0, rel=0.05)
        assert var[1] == pytest.approx(0.5, rel=0.05)

    def test_mc_cdf_monotone_in_unit_interval(self, hand_states, hand_basis):
        mc = run_monte_carlo(hand_states, hand_basis, QPSK, n_scenarios=400, seed=2)
        for stream in (1, 2):
            errors, probs = mc.cdf(stream)
            assert np.all(np.diff(errors) >= 0)
            assert probs[0] > 0
            assert probs[-1] == 1.0
            assert np.all(np.diff(probs) > 0)
