"""Acceptance criteria at full scale; one PASS/FAIL line is printed per criterion."""
import pytest

from frogfront.acceptance import AcceptanceSuite


@pytest.fixture(scope="module")
def suite():
    return AcceptanceSuite(scale=1.0)


def check(suite, capsys, number):
    res = suite.run(number)
    with capsys.disabled():
        print("\n" + res.line(), flush=True)
    assert res.passed, res.summary


def test_c01_walk_kernel_exactness(suite, capsys):
    check(suite, capsys, 1)


def test_c02_reflection_bound(suite, capsys):
    check(suite, capsys, 2)


def test_c03_pathwise_subadditivity(suite, capsys):
    check(suite, capsys, 3)


def test_c04_martingale(suite, capsys):
    check(suite, capsys, 4)


def test_c05_submartingale_bound(suite, capsys):
    check(suite, capsys, 5)


def test_c06_incremental_norms(suite, capsys):
    check(suite, capsys, 6)


def test_c07_auxiliary_speed_calibration(suite, capsys):
    check(suite, capsys, 7)


def test_c08_lln_consistency(suite, capsys):
    check(suite, capsys, 8)


def test_c09_regeneration_iid(suite, capsys):
    check(suite, capsys, 9)


def test_c10_clt(suite, capsys):
    check(suite, capsys, 10)


def test_c11_variance_cross_validation(suite, capsys):
    check(suite, capsys, 11)


def test_c12_tail_shapes(suite, capsys):
    check(suite, capsys, 12)


def test_c13_ergodic(suite, capsys):
    check(suite, capsys, 13)


def test_c14_truncation(suite, capsys):
    check(suite, capsys, 14)


def test_c15_certification_robustness(suite, capsys):
    check(suite, capsys, 15)


def test_c16_determinism(suite, capsys):
    check(suite, capsys, 16)
