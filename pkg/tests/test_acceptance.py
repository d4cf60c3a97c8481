"""Verification suite: one test per criterion, each printing its pass/fail line.

The desk-scale experiments (A4-A8) train real models and take roughly an hour
of single-core CPU in total on first run; artifacts are cached under
DOMAINFLOW_ACCEPT_DIR (default ~/.cache/domainflow/acceptance) so repeated
runs reuse them.  Select `-m "not slow"` to run only the fast criteria.
"""

import os

import pytest

from domainflow import acceptance


@pytest.fixture(scope="session")
def workspace():
    return acceptance.Workspace(os.environ.get("DOMAINFLOW_ACCEPT_DIR"))


def _report(result):
    print("\n" + result.line())
    assert result.passed, result.details


class TestQuickCriteria:
    def test_a1_loss_algebra(self):
        _report(acceptance.check_a1())

    def test_a2_sampler_statistics(self):
        _report(acceptance.check_a2())

    def test_a3_gradient_check(self):
        _report(acceptance.check_a3())


@pytest.mark.slow
class TestDeskScaleCriteria:
    def test_a4_monotonic_domain_flow(self, workspace):
        _report(acceptance.check_a4(workspace))

    def test_a5_cyclegan_degeneracy(self, workspace):
        _report(acceptance.check_a5(workspace))

    def test_a6_cycle_quality(self, workspace):
        _report(acceptance.check_a6(workspace))

    def test_a7_boost_direction(self, workspace):
        _report(acceptance.check_a7(workspace))

    def test_a8_multi_target(self, workspace):
        _report(acceptance.check_a8(workspace))


class TestServiceCriterion:
    def test_a9_service_contract(self):
        _report(acceptance.check_a9())
