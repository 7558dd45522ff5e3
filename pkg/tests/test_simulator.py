import math
import random

import numpy as np
import pytest

from annogate.errors import UsageError
from annogate.simulator import (
    ErrorModel,
    SweepGrid,
    cascade_error_bound,
    consensus_error_bound,
    render_sweep_table,
    simulate_double_triangle,
    simulate_system,
    sweep,
)


def _sigma(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n)


def test_error_model_validates_probabilities():
    with pytest.raises(UsageError):
        ErrorModel(eps1=1.5, eps2=0.1)
    with pytest.raises(UsageError):
        ErrorModel(eps1=0.1, eps2=0.1, kappa=-0.2)
    with pytest.raises(UsageError):
        ErrorModel(eps1=0.1, eps2=0.1, vocab_size=1)


def test_perfect_annotators_no_errors_no_load():
    result = simulate_system(ErrorModel(eps1=0.0, eps2=0.0), 100_000, seed=1)
    assert result.silent_errors == 0
    assert result.jury_routed == 0
    assert result.post_jury_errors == 0


def test_silent_rate_matches_eq1_parameters():
    model = ErrorModel(eps1=0.087, eps2=0.044, kappa=1.0, eta=0.0)
    result = simulate_system(model, 1_000_000, seed=2024)
    expected = 0.087 * 0.044  # 0.003828
    sigma = _sigma(expected, result.n_fields)
    assert result.silent_error_rate <= 0.004
    assert abs(result.silent_error_rate - expected) <= 3 * sigma


def test_zero_collision_zero_silent_and_closed_form_jury_load():
    model = ErrorModel(eps1=0.12, eps2=0.07, kappa=0.0, eta=0.0)
    result = simulate_system(model, 500_000, seed=7)
    assert result.silent_errors == 0
    expected_load = 0.12 + 0.07 - 0.12 * 0.07
    sigma = _sigma(expected_load, result.n_fields)
    assert abs(result.jury_load_rate - expected_load) <= 3 * sigma
    assert result.post_jury_errors == 0  # perfect jury fixes all routed fields


def test_silent_rate_bounded_by_eps_product_property():
    rng = random.Random(3)
    for trial in range(10):
        model = ErrorModel(
            eps1=rng.uniform(0, 0.3),
            eps2=rng.uniform(0, 0.3),
            kappa=rng.random(),
            eta=rng.uniform(0, 0.2),
        )
        result = simulate_system(model, 200_000, seed=trial)
        bound = consensus_error_bound(model)
        sigma = _sigma(max(bound, 1e-9), result.n_fields)
        assert result.silent_error_rate <= bound + 3 * sigma


def test_conservativeness_scaling_with_kappa():
    model = ErrorModel(eps1=0.087, eps2=0.044, kappa=0.25, eta=0.0)
    result = simulate_system(model, 1_000_000, seed=99)
    expected = 0.25 * 0.087 * 0.044
    sigma = _sigma(expected, result.n_fields)
    assert abs(result.silent_error_rate - expected) <= 3 * sigma


def test_jury_error_feeds_post_jury_rate():
    model = ErrorModel(eps1=0.1, eps2=0.1, kappa=1.0, eta=0.05)
    result = simulate_system(model, 1_000_000, seed=5)
    silent = 0.01
    routed = 1 - ((0.9 * 0.9) + silent)
    expected = silent + routed * 0.05
    sigma = _sigma(expected, result.n_fields)
    assert abs(result.post_jury_error_rate - expected) <= 3 * sigma


def test_simulation_deterministic_in_seed():
    model = ErrorModel(eps1=0.08, eps2=0.05, kappa=0.6, eta=0.02)
    a = simulate_system(model, 300_000, seed=11)
    b = simulate_system(model, 300_000, seed=11)
    assert a == b
    c = simulate_system(model, 300_000, seed=12)
    assert a != c


def test_cascade_all_perfect_is_error_free():
    model = ErrorModel(eps1=0.0, eps2=0.0)
    result = simulate_double_triangle(model, model, 1.0, 100_000, seed=1)
    assert result.final_errors == 0
    assert result.expert_routed == 0
    assert result.golden == result.n_fields


def test_cascade_closed_form_full_collision():
    model = ErrorModel(eps1=0.1, eps2=0.1, kappa=1.0, eta=0.0)
    result = simulate_double_triangle(model, model, 1.0, 2_000_000, seed=31)
    expected = (0.1 * 0.1) ** 2  # 1e-4
    sigma = _sigma(expected, result.n_fields)
    assert abs(result.final_error_rate - expected) <= 3 * sigma
    assert result.final_error_rate <= cascade_error_bound(model, model) + 3 * sigma


def test_cascade_bound_holds_with_partial_collision():
    rng = random.Random(17)
    for trial in range(6):
        model_a = ErrorModel(eps1=rng.uniform(0.05, 0.3), eps2=rng.uniform(0.05, 0.3), kappa=rng.random())
        model_b = ErrorModel(eps1=rng.uniform(0.05, 0.3), eps2=rng.uniform(0.05, 0.3), kappa=rng.random())
        result = simulate_double_triangle(model_a, model_b, rng.random(), 400_000, seed=trial)
        bound = cascade_error_bound(model_a, model_b)
        sigma = _sigma(max(bound, 1e-9), result.n_fields)
        assert result.final_error_rate <= bound + 3 * sigma


def test_jury_mistakes_surface_as_expert_conflicts():
    base = ErrorModel(eps1=0.1, eps2=0.1, kappa=1.0, eta=0.0)
    noisy = ErrorModel(eps1=0.1, eps2=0.1, kappa=1.0, eta=0.05)
    n = 1_000_000
    clean = simulate_double_triangle(base, base, 1.0, n, seed=8)
    jittery = simulate_double_triangle(noisy, base, 1.0, n, seed=8)
    assert jittery.expert_load_rate > clean.expert_load_rate

    silent = 0.01
    routed = 1 - (0.81 + silent)
    wrong_noisy = silent + routed * 0.05
    wrong_clean = silent
    expected_clean = 2 * wrong_clean * (1 - wrong_clean)  # cross_kappa 1: both-wrong agree
    expected_jittery = wrong_noisy * (1 - wrong_clean) + wrong_clean * (1 - wrong_noisy)
    assert abs(clean.expert_load_rate - expected_clean) <= 3 * _sigma(expected_clean, n)
    assert abs(jittery.expert_load_rate - expected_jittery) <= 3 * _sigma(expected_jittery, n)


def test_cascade_deterministic_and_result_shape():
    model = ErrorModel(eps1=0.2, eps2=0.15, kappa=0.5, eta=0.01)
    r1 = simulate_double_triangle(model, model, 0.5, 250_000, seed=77)
    r2 = simulate_double_triangle(model, model, 0.5, 250_000, seed=77)
    assert r1 == r2
    assert r1.golden + r1.expert_routed == r1.n_fields
    assert r1.system_a != r1.system_b  # independent streams (overwhelmingly)


def test_sweep_single_cell_equals_direct_call():
    grid = SweepGrid(eps1=(0.1,), eps2=(0.08,), kappa=(0.9,), eta=(0.0,))
    rows = sweep(grid, 200_000, seed=5)
    assert len(rows) == 1
    model = ErrorModel(eps1=0.1, eps2=0.08, kappa=0.9)
    direct = simulate_double_triangle(
        model, model, 0.9, 200_000, seed=np.random.SeedSequence(5).spawn(1)[0]
    )
    assert rows[0].result == direct


def test_sweep_empty_grid_rejected():
    with pytest.raises(UsageError):
        sweep(SweepGrid(eps1=(), eps2=(0.1,)), 1000, seed=1)


def test_sweep_monotone_final_error_in_eps():
    grid = SweepGrid(eps1=(0.05, 0.1, 0.2), eps2=(0.1,), kappa=(1.0,), eta=(0.0,))
    rows = sweep(grid, 1_000_000, seed=2)
    finals = [r.final_rate for r in sorted(rows, key=lambda r: r.eps1)]
    assert finals[0] < finals[1] < finals[2]
    bounds = [r.cascade_bound for r in sorted(rows, key=lambda r: r.eps1)]
    assert bounds == sorted(bounds)


def test_sweep_deterministic_table():
    grid = SweepGrid(eps1=(0.1, 0.2), eps2=(0.05,), kappa=(1.0, 0.5))
    rows1 = sweep(grid, 100_000, seed=3)
    rows2 = sweep(grid, 100_000, seed=3)
    assert rows1 == rows2
    assert render_sweep_table(rows1) == render_sweep_table(rows2)
    assert len(rows1) == 4


def test_render_sweep_table_shape():
    grid = SweepGrid(eps1=(0.087,), eps2=(0.044,))
    rows = sweep(grid, 100_000, seed=9)
    table = render_sweep_table(rows)
    lines = table.splitlines()
    assert len(lines) == 3
    for column in ("eps1", "silent_rate", "bound", "jury_load", "final_rate", "cascade_bound"):
        assert column in lines[0]
