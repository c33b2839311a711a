import numpy as np
import pytest

from imrkpm import verify


def test_perturbed_cloud_is_seeded():
    a = verify.perturbed_cloud(8, rng=np.random.default_rng(3))
    b = verify.perturbed_cloud(8, rng=np.random.default_rng(3))
    assert np.array_equal(a.coords, b.coords)
    assert a.n_nodes == 64
    # nodes stay within a quarter spacing of their lattice site
    lattice = verify.perturbed_cloud(8, jitter=0.0).coords
    assert np.abs(a.coords - lattice).max() <= 0.25 * a.spacing


@pytest.mark.parametrize("name", ["reproducing", "hat", "truncation", "gradients", "czm", "damage"])
def test_suite_passes(name):
    (res,) = verify.run_all(names=[name])
    assert res.passed, res.line()
    assert res.seconds >= 0.0


def test_suite_reports_are_reproducible():
    a = verify.run_all(seed=7, names=["reproducing", "gradients"])
    b = verify.run_all(seed=7, names=["reproducing", "gradients"])
    assert [r.line() for r in a] == [r.line() for r in b]


def test_patch_suite_reports_both_orders():
    (res,) = verify.run_all(names=["patch"])
    assert res.tolerance == 1e-6
    assert res.details["order4"] < res.details["order2"]
    assert res.details["decreases_with_order"] is True
    assert res.max_error == res.details["order2"]


def test_result_line_format():
    r = verify.SuiteResult("x", 2e-7, 1e-6)
    assert r.passed and r.line().startswith("PASS x: max error 2.000e-07 (tol 1e-06)")
    r = verify.SuiteResult("y", 0.5, 1.0, normalized=True, details={"a": 1e-9})
    assert r.line() == "PASS y: worst error/tolerance 5.000e-01 a=1e-09"
    assert not verify.SuiteResult("z", float("nan"), 1.0).passed


def test_report_summary():
    rs = [verify.SuiteResult("a", 0.0, 1.0), verify.SuiteResult("b", 2.0, 1.0)]
    assert verify.format_report(rs).splitlines()[-1] == "1/2 suites passed"
