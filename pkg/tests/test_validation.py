import numpy as np
import numpy.testing as npt

from mapthermo.operators import apply, cptp_diagnostics
from mapthermo.validation import (
    CheckResult,
    FAST_CHECKS,
    FULL_CHECKS,
    format_report,
    random_gksl_trajectory,
    run_checks,
)


def test_fast_checks_all_pass():
    results = run_checks(full=False)
    assert len(results) == len(FAST_CHECKS)
    for r in results:
        assert r.passed, f"{r.name}: {r.detail}"
        assert r.detail  # every check reports its measured deviation


def test_full_suite_extends_fast_suite():
    fast_names = [n for n, _ in FAST_CHECKS]
    full_names = [n for n, _ in FULL_CHECKS]
    assert full_names[:len(fast_names)] == fast_names
    assert len(full_names) > len(fast_names)


def test_format_report_counts_and_flags():
    results = [CheckResult("alpha", True, "dev 1e-12"),
               CheckResult("beta", False, "dev 0.5")]
    text = format_report(results, full=False)
    assert "PASS alpha" in text
    assert "FAIL beta" in text
    assert "1/2 checks passed" in text
    assert "(fast)" in text


def test_random_gksl_trajectory_properties():
    rng = np.random.default_rng(42)
    times = np.linspace(0.0, 1.5, 31)
    for dim in (2, 3):
        traj = random_gksl_trajectory(dim, rng, times)
        assert traj.dim == dim
        assert traj.derivative_source == "analytic"
        npt.assert_allclose(traj.maps[0].matrix, np.eye(dim * dim),
                            atol=1e-12)
        for i in (10, 30):
            rep = cptp_diagnostics(traj.maps[i])
            assert rep.choi_min_eigenvalue > -1e-10
            assert rep.trace_preserving_residual < 1e-10
        # semigroup property on the uniform grid
        one = traj.maps[10].matrix
        npt.assert_allclose(traj.maps[20].matrix, one @ one, atol=1e-10)


def test_random_gksl_trajectory_is_seed_deterministic():
    times = np.linspace(0.0, 1.0, 11)
    a = random_gksl_trajectory(2, np.random.default_rng(7), times)
    b = random_gksl_trajectory(2, np.random.default_rng(7), times)
    for ma, mb in zip(a.maps, b.maps):
        npt.assert_array_equal(ma.matrix, mb.matrix)
