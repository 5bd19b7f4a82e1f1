import math

import numpy as np
import pytest

from ncagm.ensembles import (
    EnsembleSpec,
    check_column_norm_factor,
    estimate_gamma,
    mc_moment_norm,
    moment_from_values,
    power_mean,
    run_deviation_experiment,
    sample_family,
    sample_logconcave_family,
    sample_wishart_family,
)
from ncagm.errors import InvalidArgumentError, SamplerError
from ncagm.hermitian import lambda_min, op_norm
from ncagm.inequalities import PASS, UNMET
from ncagm.rng import bootstrap_stream, gaussians, replicate_stream


def test_streams_are_replicate_indexed():
    a = replicate_stream(5, 3).random(4)
    b = replicate_stream(5, 3).random(4)
    c = replicate_stream(5, 4).random(4)
    d = replicate_stream(6, 3).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
    assert not np.array_equal(bootstrap_stream(5).random(4), a)
    with pytest.raises(InvalidArgumentError):
        replicate_stream(-1, 0)


def test_box_muller_moments():
    z = gaussians(replicate_stream(1, 0), (200_001,))
    assert z.shape == (200_001,)
    se = 1 / math.sqrt(z.size)
    assert abs(z.mean()) < 5 * se
    assert abs(z.var() - 1) < 5 * math.sqrt(2) * se
    assert abs(np.mean(z**4) - 3) < 0.1


def test_spec_validation():
    with pytest.raises(InvalidArgumentError):
        EnsembleSpec("wishart", 3, 4, 4, 10, 1)
    with pytest.raises(InvalidArgumentError):
        EnsembleSpec("cauchy", 3, 4, 4, 10, 1)
    with pytest.raises(InvalidArgumentError):
        EnsembleSpec("logconcave-cube", 3, 4, 1.5, 10, 1)
    assert EnsembleSpec("logconcave-cube", 3, 4, 4, 10, 1, m=9).m is None


def test_wishart_samples_are_deterministic_psd():
    spec = EnsembleSpec("wishart", 3, 5, 4, 10, 9, m=7)
    a, b = sample_wishart_family(spec, 2), sample_wishart_family(spec, 2)
    assert np.array_equal(a.stack, b.stack)
    for x in a:
        assert lambda_min(x) >= -1e-10 * op_norm(x)
    with pytest.raises(InvalidArgumentError):
        sample_logconcave_family(spec, 0)


def test_scalar_wishart_mean_is_one():
    spec = EnsembleSpec("wishart", 1, 50, 4, 200, 4, m=3)
    vals = np.concatenate([sample_wishart_family(spec, k).stack.real.ravel() for k in range(200)])
    # chi-square with 3 degrees of freedom over 3: variance 2/3
    assert abs(vals.mean() - 1) < 5 * math.sqrt(2 / 3 / vals.size)


@pytest.mark.parametrize("kind", ["logconcave-cube", "logconcave-ball"])
def test_logconcave_rank_one_and_isotropic(kind):
    spec = EnsembleSpec(kind, 3, 400, 4, 20, 2)
    fams = [sample_logconcave_family(spec, k) for k in range(20)]
    for x in fams[0]:
        assert np.linalg.matrix_rank(x, tol=1e-10) == 1
    stack = np.concatenate([f.stack.real for f in fams])
    assert np.max(np.abs(stack.mean(axis=0) - np.eye(3))) < 5 * stack.std(axis=0).max() / math.sqrt(len(stack))
    sq = np.trace(stack, axis1=1, axis2=2)
    assert abs(sq.mean() - 3) < 5 * sq.std() / math.sqrt(sq.size)
    if kind == "logconcave-cube":
        assert np.abs(stack[:, 0, 0]).max() <= 3.0 + 1e-12


def test_moment_norm_examples():
    ident = mc_moment_norm(lambda k: np.eye(2), 4, 50, seed=1)
    assert ident.estimate == pytest.approx(1.0) and ident.se == 0.0
    signs = mc_moment_norm(lambda k: np.array([[(-1.0) ** k]]), 2, 40, seed=1)
    assert signs.estimate == pytest.approx(1.0) and signs.se == 0.0
    gauss = mc_moment_norm(lambda k: gaussians(replicate_stream(3, k), (1, 1)), 2, 4000, seed=3)
    assert abs(gauss.estimate - 1.0) < 3 * gauss.se + 0.02
    with pytest.raises(InvalidArgumentError):
        mc_moment_norm(lambda k: np.eye(1), 0.5, 10, seed=1)


def test_sampler_failure_names_replicate():
    def sampler(k):
        if k == 7:
            raise RuntimeError("boom")
        return np.eye(1)

    with pytest.raises(SamplerError) as exc:
        mc_moment_norm(sampler, 2, 10, seed=1)
    assert exc.value.replicate == 7


def test_power_mean_monotone_in_p(rng):
    v = rng.exponential(size=500)
    idx = np.zeros((2, 500), dtype=int)
    ests = [moment_from_values(v, p, idx).estimate for p in (1, 2, 3, 4.5, 8, 16)]
    assert all(a <= b for a, b in zip(ests, ests[1:]))
    assert power_mean(np.zeros(3), 2) == 0.0


def test_gamma_degenerate_and_trend():
    eps, delta, gamma = estimate_gamma(EnsembleSpec("degenerate", 2, 16, 4, 10, 1))
    assert eps.estimate == 0.0 and delta.estimate == pytest.approx(16**-0.5)
    assert gamma.estimate == pytest.approx(4 * 16**-0.5)
    eps_values = [estimate_gamma(EnsembleSpec("wishart", 3, n, 4, 200, 5, m=16))[0].estimate for n in (8, 16, 32, 64)]
    assert all(a > b for a, b in zip(eps_values, eps_values[1:]))


def test_thread_count_does_not_change_results(monkeypatch):
    spec = EnsembleSpec("wishart", 2, 6, 4, 30, 12, m=5)
    monkeypatch.setenv("NCAGM_THREADS", "1")
    one = run_deviation_experiment(spec, 2).to_json()
    monkeypatch.setenv("NCAGM_THREADS", "4")
    four = run_deviation_experiment(spec, 2).to_json()
    assert one == four


def test_degenerate_deviation_passes():
    # x_i = I needs n >= 576 for the gate at d_prod = 2
    report = run_deviation_experiment(EnsembleSpec("degenerate", 2, 1024, 4, 100, 1), 2)
    dev = report.verdicts[0]
    assert dev.status == PASS and dev.lhs == 0.0 and dev.rhs >= 0
    assert report.verdicts[1].lhs == pytest.approx(1.0)


def test_small_run_reports_unmet_gate():
    report = run_deviation_experiment(EnsembleSpec("logconcave-cube", 3, 10, 4, 100, 3), 2)
    assert report.verdicts[0].status == UNMET
    assert report.results["gate"]["holds"] is False
    assert not report.failed


def test_split_mode_and_determinism():
    spec = EnsembleSpec("wishart", 2, 8, 4, 40, 77, m=8)
    a = run_deviation_experiment(spec, 2, split=True)
    b = run_deviation_experiment(spec, 2, split=True)
    assert a.to_json() == b.to_json()
    assert a.results["deviation"]["N"] == 20
    assert a.to_json() != run_deviation_experiment(spec, 2).to_json()


def test_column_norm_report():
    report = check_column_norm_factor(EnsembleSpec("wishart", 3, 16, 4, 100, 2, m=16))
    v = report.verdicts[0]
    assert v.status == PASS
    assert report.results["boundary_case_zero_family"]["lhs"] == pytest.approx(4.0)
    ident = check_column_norm_factor(EnsembleSpec("degenerate", 3, 9, 4, 100, 2))
    assert ident.verdicts[0].lhs == 0.0 and ident.verdicts[0].rhs == pytest.approx(18.0)


def test_sample_family_dispatch():
    spec = EnsembleSpec("logconcave-ball", 2, 3, 4, 5, 1)
    assert np.array_equal(sample_family(spec, 1).stack, sample_logconcave_family(spec, 1).stack)
