"""Local-DP mechanisms: Laplace perturbation and randomized response."""

import math

import numpy as np
import pytest

from dpcomm.concerns import CellGrid, NumericDomain
from dpcomm.errors import ClampViolationError, MalformedInputError, ValidationError
from dpcomm.mechanisms import (
    MechanismParams,
    laplace_noise_array,
    laplace_perturb,
    rr_keep_probability,
    rr_perturb,
    rr_probabilities,
    rr_sample_indices,
)

DOMAIN_100K = NumericDomain(0.0, 100_000.0)
GRID9 = CellGrid(tuple(f"C{i}" for i in range(1, 10)), rows=3, cols=3)


class TestParams:
    def test_numeric_sensitivity_is_clamp_width(self):
        p = MechanismParams.for_numeric(DOMAIN_100K, epsilon=1.0)
        assert p.sensitivity == 100_000.0

    def test_numeric_sensitivity_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            MechanismParams(epsilon=1.0, sensitivity=5.0, domain=DOMAIN_100K)

    def test_infinite_epsilon_requires_limit_mode(self):
        with pytest.raises(ValidationError):
            MechanismParams.for_numeric(DOMAIN_100K, epsilon=math.inf)
        p = MechanismParams.for_numeric(DOMAIN_100K, epsilon=math.inf, limit_mode=True)
        assert math.isinf(p.epsilon)

    def test_negative_epsilon_rejected(self):
        with pytest.raises(ValidationError):
            MechanismParams.for_cells(GRID9, epsilon=-0.5)


class TestLaplace:
    def test_no_privacy_limit_returns_input_exactly(self):
        p = MechanismParams.for_numeric(DOMAIN_100K, epsilon=math.inf, limit_mode=True)
        s = laplace_perturb(50_000.0, p)
        assert s.output_value == 50_000.0
        assert s.mechanism_id == "laplace"

    def test_out_of_range_input_rejected(self):
        p = MechanismParams.for_numeric(DOMAIN_100K, epsilon=1.0)
        with pytest.raises(ClampViolationError):
            laplace_perturb(100_001.0, p)
        with pytest.raises(ClampViolationError):
            laplace_perturb(-0.5, p)

    @pytest.mark.parametrize("bad", [float("nan"), float("inf"), "50000", None])
    def test_non_finite_input_rejected(self, bad):
        p = MechanismParams.for_numeric(DOMAIN_100K, epsilon=1.0)
        with pytest.raises(MalformedInputError):
            laplace_perturb(bad, p)

    def test_zero_epsilon_rejected_for_numeric_noise(self):
        p = MechanismParams.for_numeric(DOMAIN_100K, epsilon=0.0)
        with pytest.raises(MalformedInputError):
            laplace_perturb(1.0, p)

    def test_seed_determinism_and_divergence(self):
        p = MechanismParams.for_numeric(DOMAIN_100K, epsilon=1.0)
        a = laplace_perturb(50_000.0, p, seed=11)
        b = laplace_perturb(50_000.0, p, seed=11)
        c = laplace_perturb(50_000.0, p, seed=12)
        assert a.output_value == b.output_value
        assert a.output_value != c.output_value

    def test_single_call_equals_vectorized_path(self):
        # The scalar mechanism must be draw 0 of the vectorized stream.
        p = MechanismParams.for_numeric(DOMAIN_100K, epsilon=1.0)
        s = laplace_perturb(50_000.0, p, seed=77)
        noise = laplace_noise_array(p.sensitivity / p.epsilon, 1, seed=77)[0]
        assert s.output_value == 50_000.0 + noise

    def test_output_not_reclamped(self):
        # With scale = width the noise routinely exceeds the interval; the
        # mechanism must report those outputs honestly.
        p = MechanismParams.for_numeric(DOMAIN_100K, epsilon=1.0)
        outs = 50_000.0 + laplace_noise_array(100_000.0, 2_000, seed=5)
        assert (outs < 0.0).any() or (outs > 100_000.0).any()

    def test_monte_carlo_mean(self):
        # Oracle: Monte-Carlo estimate; the distribution mean equals the
        # input, so the empirical mean of n draws lies within
        # 3 * sqrt(2 (delta/eps)^2 / n) of it.
        x, eps, n = 50_000.0, 1.0, 1_000_000
        scale = 100_000.0 / eps
        samples = x + laplace_noise_array(scale, n, seed=2024)
        tol = 3.0 * math.sqrt(2.0 * scale**2 / n)
        assert abs(float(samples.mean()) - x) < tol

    def test_monte_carlo_variance_and_epsilon_doubling(self):
        scale1 = 100_000.0 / 1.0
        scale2 = 100_000.0 / 2.0
        n = 1_000_000
        v1 = float(laplace_noise_array(scale1, n, seed=31).var())
        v2 = float(laplace_noise_array(scale2, n, seed=32).var())
        assert abs(v1 - 2.0 * scale1**2) < 0.05 * 2.0 * scale1**2
        assert 3.8 < v1 / v2 < 4.2


class TestRandomizedResponse:
    def test_keep_probability_closed_form(self):
        assert rr_keep_probability(2, math.log(3.0)) == pytest.approx(0.75, abs=1e-12)
        e = math.exp(1.0)
        assert rr_keep_probability(9, 1.0) == pytest.approx(e / (e + 8), abs=1e-12)

    def test_distribution_normalizes(self):
        for k in range(2, 11):
            for eps in (0.0, 0.1, 0.5, 1.0, 2.0, math.log(3.0)):
                p_keep, p_other = rr_probabilities(k, eps)
                assert abs(p_keep + (k - 1) * p_other - 1.0) < 1e-12

    def test_keep_frequency_matches_closed_form(self):
        # Oracle: e^eps / (e^eps + k - 1) = 3/4 for k = 2, eps = ln 3.
        idx = rr_sample_indices(0, 2, math.log(3.0), 1_000_000, seed=99)
        freq = float(np.mean(idx == 0))
        assert abs(freq - 0.75) < 0.005

    def test_zero_epsilon_uniform(self):
        idx = rr_sample_indices(1, 4, 0.0, 1_000_000, seed=123)
        for cell in range(4):
            assert abs(float(np.mean(idx == cell)) - 0.25) < 0.005

    def test_no_privacy_limit_identity(self):
        p = MechanismParams.for_cells(GRID9, epsilon=math.inf, limit_mode=True)
        for cell in GRID9.cells:
            assert rr_perturb(cell, p).output_value == cell

    def test_unknown_cell_rejected(self):
        p = MechanismParams.for_cells(GRID9, epsilon=1.0)
        with pytest.raises(MalformedInputError):
            rr_perturb("C42", p)

    def test_seed_determinism(self):
        p = MechanismParams.for_cells(GRID9, epsilon=1.0)
        outs_a = [rr_perturb("C4", p, seed=7).output_value for _ in range(5)]
        outs_b = [rr_perturb("C4", p, seed=7).output_value for _ in range(5)]
        assert outs_a == outs_b

    def test_single_call_equals_vectorized_path(self):
        p = MechanismParams.for_cells(GRID9, epsilon=1.0)
        s = rr_perturb("C4", p, seed=55)
        idx = rr_sample_indices(GRID9.index("C4"), 9, 1.0, 1, seed=55)[0]
        assert s.output_value == GRID9.cells[int(idx)]

    def test_output_always_in_domain(self):
        idx = rr_sample_indices(3, 9, 0.5, 100_000, seed=8)
        assert idx.min() >= 0 and idx.max() <= 8

    def test_wrong_domain_type_rejected(self):
        numeric = MechanismParams.for_numeric(DOMAIN_100K, epsilon=1.0)
        cells = MechanismParams.for_cells(GRID9, epsilon=1.0)
        with pytest.raises(MalformedInputError):
            rr_perturb("C1", numeric)
        with pytest.raises(MalformedInputError):
            laplace_perturb(5.0, cells)
