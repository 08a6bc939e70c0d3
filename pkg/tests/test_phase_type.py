import math

import numpy as np
import pytest

from fluidhit import (
    InitialDistribution,
    PhaseType,
    SubGenerator,
    continuous_survival,
    crossing_time,
    decompose,
    discrete_survival,
    gen_fig3a,
    gen_fig3b,
    gen_tstage,
    jump_matrix,
    mean_jump_count,
    sample_absorption_step,
    spectral_params,
    stochastic_order_check,
    x_threshold,
)
from fluidhit.errors import DegenerateTail, ScaleTooSmall


def _classical_pt(N=None):
    ex = gen_tstage(1)
    sub = decompose(ex.chain)
    if N is None:
        return PhaseType.continuous(ex.default_alpha, sub)
    return PhaseType.discrete(ex.default_alpha, sub, N)


def test_continuous_survival_classical():
    pt = _classical_pt()
    assert continuous_survival(pt, math.log(4.0)) == pytest.approx(0.25, abs=1e-12)
    assert continuous_survival(pt, 0.0) == pytest.approx(1.0)


def test_continuous_survival_erlang2():
    ex = gen_tstage(2)
    pt = PhaseType.continuous(ex.default_alpha, decompose(ex.chain))
    assert continuous_survival(pt, 1.0) == pytest.approx(2 * math.exp(-1), abs=1e-10)


def test_discrete_survival_values():
    assert discrete_survival(_classical_pt(2), 1) == pytest.approx(0.5)
    assert discrete_survival(_classical_pt(7), 0) == pytest.approx(1.0)
    assert discrete_survival(_classical_pt(4), 8) == pytest.approx(0.75**8)
    assert discrete_survival(_classical_pt(4), 8) == pytest.approx(0.1001129, abs=1e-7)


def test_discrete_scale_guard():
    sub = SubGenerator.from_matrix([[-2.0, 1.0], [1.0, -3.0]])
    alpha = InitialDistribution(alpha=np.array([1.0, 0.0]))
    with pytest.raises(ScaleTooSmall):
        PhaseType.discrete(alpha, sub, 1)
    PhaseType.discrete(alpha, sub, 3)  # max(-Q_ii) = 3 is allowed


def test_x_threshold_examples():
    assert x_threshold(_classical_pt(2)) == 0
    assert x_threshold(_classical_pt(100)) == 390
    fb = gen_fig3b(2)
    pt = PhaseType.discrete(fb.default_alpha, decompose(fb.chain), 100)
    assert x_threshold(pt) == 781


def test_x_threshold_matches_naive_scan():
    ex = gen_tstage(3)
    pt = PhaseType.discrete(ex.default_alpha, decompose(ex.chain), 25)
    value = x_threshold(pt)
    target = 2.0 / 25
    assert discrete_survival(pt, value) <= target
    assert discrete_survival(pt, value - 1) > target


def test_spectral_tstage():
    for T in (1, 2, 3, 4, 5):
        sp = spectral_params(decompose(gen_tstage(T).chain))
        assert sp.nu == pytest.approx(1.0, abs=1e-12)
        assert sp.k == T - 1
        assert sp.source == "computed"


def test_spectral_fig3b():
    for T in (2, 5):
        sp = spectral_params(decompose(gen_fig3b(T).chain))
        assert sp.nu == pytest.approx(1.0 / T, abs=1e-12)
        assert sp.k == 0


def test_spectral_overrides():
    sp = spectral_params(
        decompose(gen_tstage(3).chain), nu_override=1.0, k_override=2
    )
    assert sp.nu == 1.0
    assert sp.k == 2
    assert sp.source == "user-supplied"


def test_gamma_fit_pure_exponential():
    # Q = diag(-1, -2), alpha on the slow state: survival is exactly e^{-t}.
    sub = SubGenerator.from_matrix(np.diag([-1.0, -2.0]))
    alpha = InitialDistribution(alpha=np.array([1.0, 0.0]))
    sp = spectral_params(sub, estimate_gamma=True, alpha=alpha)
    assert sp.nu == pytest.approx(1.0, abs=1e-9)
    assert sp.k == 0
    assert sp.gamma == pytest.approx(1.0, rel=0.05)


def test_gamma_degenerate_tail():
    # alpha on the fast state only: survival e^{-2t} never matches e^{-t}.
    sub = SubGenerator.from_matrix(np.diag([-1.0, -2.0]))
    alpha = InitialDistribution(alpha=np.array([0.0, 1.0]))
    with pytest.raises(DegenerateTail):
        spectral_params(sub, estimate_gamma=True, alpha=alpha)


def test_stochastic_order_examples():
    assert stochastic_order_check(-1.0, 10, [0.0, 0.5, 1.0, 5.0])
    assert stochastic_order_check(-1.0, 1, [0.0])
    assert stochastic_order_check(-2.0, 100, np.linspace(0.0, 10.0, 400))


def test_stochastic_order_guards():
    with pytest.raises(ScaleTooSmall):
        stochastic_order_check(-2.0, 1, [0.0])
    with pytest.raises(ValueError):
        stochastic_order_check(1.0, 10, [0.0])


def test_sampler_classical_single_chain():
    rng = np.random.default_rng(0)
    pt = _classical_pt(1)
    assert all(sample_absorption_step(pt, rng) == 1 for _ in range(50))


def test_sampler_tstage2_single_chain():
    ex = gen_tstage(2)
    pt = PhaseType.discrete(ex.default_alpha, decompose(ex.chain), 1)
    rng = np.random.default_rng(1)
    assert all(sample_absorption_step(pt, rng) == 2 for _ in range(50))


def test_sampler_geometric_mean():
    rng = np.random.default_rng(2)
    pt = _classical_pt(4)
    samples = [sample_absorption_step(pt, rng) for _ in range(100_000)]
    assert np.mean(samples) == pytest.approx(4.0, rel=0.03)


def test_sampler_survival_matches_discrete_survival():
    ex = gen_tstage(2)
    pt = PhaseType.discrete(ex.default_alpha, decompose(ex.chain), 5)
    rng = np.random.default_rng(3)
    n = 40_000
    samples = np.array([sample_absorption_step(pt, rng) for _ in range(n)])
    for q in range(1, 10):
        k = int(np.quantile(samples, q / 10))
        emp = float(np.mean(samples > k))
        ref = discrete_survival(pt, k)
        stderr = math.sqrt(max(ref * (1 - ref), 1e-12) / n)
        assert abs(emp - ref) <= 3 * stderr + 1e-9


def test_sampler_mass_at_zero():
    ex = gen_tstage(1)
    alpha = InitialDistribution(alpha=np.array([0.0]), mass0=1.0)
    pt = PhaseType.discrete(alpha, decompose(ex.chain), 3)
    rng = np.random.default_rng(4)
    assert sample_absorption_step(pt, rng) == 0


def test_discrete_converges_to_continuous():
    ex = gen_tstage(2)
    sub = decompose(ex.chain)
    cont = PhaseType.continuous(ex.default_alpha, sub)
    t_grid = [0.5, 1.0, 2.0, 4.0]
    errors = []
    for N in (10, 100, 1000):
        disc = PhaseType.discrete(ex.default_alpha, sub, N)
        err = max(
            abs(
                discrete_survival(disc, int(math.floor(t * N)))
                - continuous_survival(cont, t)
            )
            for t in t_grid
        )
        errors.append(err)
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 5e-3


def test_threshold_crossing_jump_inequality_small_cases():
    # x_N <= N (t_N + mean jumps): spot checks ahead of the acceptance sweep.
    for ex in (gen_tstage(1), gen_tstage(3), gen_fig3b(2), gen_fig3a(10, 2)):
        sub = decompose(ex.chain)
        jm = jump_matrix(sub)
        mj = mean_jump_count(jm, ex.default_alpha)
        for N in (10, 100):
            t_n = crossing_time(ex.default_alpha, sub, 1.0 / N).time
            x_n = x_threshold(PhaseType.discrete(ex.default_alpha, sub, N))
            assert x_n <= N * (t_n + mj)


def test_tail_band_sanity():
    # survival * e^{nu t} / t^k stays inside fixed positive bounds over the
    # window where survival runs from 1e-3 down to 1e-10.
    for ex in (gen_tstage(1), gen_tstage(3), gen_fig3b(2)):
        sub = decompose(ex.chain)
        sp = spectral_params(sub)
        pt = PhaseType.continuous(ex.default_alpha, sub)
        t_a = crossing_time(ex.default_alpha, sub, 1e-3).time
        t_b = crossing_time(ex.default_alpha, sub, 1e-10).time
        ratios = []
        for t in np.linspace(t_a, t_b, 12):
            s = continuous_survival(pt, t)
            ratios.append(s * math.exp(sp.nu * t) / t**sp.k)
        assert min(ratios) > 0.0
        assert max(ratios) / min(ratios) < 50.0
