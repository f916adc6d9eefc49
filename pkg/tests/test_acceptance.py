"""Acceptance gate: every primary criterion at its pinned tolerance.

Runs the full verification battery once, re-runs it to settle the
determinism criterion, and emits one PASS/FAIL line per criterion.
Tolerances live in qfd.checks next to the pinned scenario parameters.
"""

import hashlib

import numpy as np
import pytest

from qfd.checks import (ALL_SUITES, CriterionResult, _verdict_bytes,
                        run_suite, write_verdicts)

CRITERIA = {
    1: ("conservation", [
        "norm_drift_1e4_split_operator",
        "norm_drift_1e4_crank_nicolson",
        "energy_drift_split_operator",
        "energy_drift_crank_nicolson",
        "continuity_shrink_single",
        "continuity_shrink_twobody",
        "continuity_shrink_ks",
    ]),
    2: ("analytic", [
        "free_gaussian_width_law",
        "free_gaussian_bohm_law",
        "harmonic_velocity_zero",
        "harmonic_veff_equals_eigenvalue",
        "harmonic_eigenvalue_continuum",
        "plane_wave_q_zero",
        "plane_wave_velocity",
    ]),
    3: ("gauge", [
        "q_scale_invariance",
        "phase_invariance_rho",
        "phase_invariance_velocity",
        "phase_invariance_q",
    ]),
    4: ("equivariance", [
        "free_ks_statistic",
        "negative_control_ks_statistic",
        "barrier_ks_statistic",
    ]),
    5: ("manybody", [
        "q_additivity_on_products",
        "routes_agree_on_products",
        "routes_diverge_on_entangled",
        "entangled_correlation_witness",
        "exchange_symmetry_preserved",
    ]),
    6: ("reduced", [
        "hermiticity_defect",
        "trace_deviation",
        "min_eigenvalue",
        "purity_product_state",
        "purity_bell_state",
        "product_reduced_equals_bohmian",
    ]),
    7: ("qfdft", [
        "particle_number_conserved",
        "kinetic_two_form_agreement",
        "stationary_limit_closed_form_l2",
        "stationary_orbitals_dynamical_fixed_point",
    ]),
    8: ("vortex", [
        "unit_vortex_circulation",
        "reversed_loop_negates",
        "vortex_free_loop",
    ]),
}


@pytest.fixture(scope="module")
def battery(tmp_path_factory):
    """Two full executions of every suite: results for criteria 1-8 plus
    the byte comparison for criterion 9."""
    first = run_suite("all")
    second = run_suite("all")
    d1 = hashlib.sha256(_verdict_bytes(first)).hexdigest()
    d2 = hashlib.sha256(_verdict_bytes(second)).hexdigest()
    determinism = CriterionResult("determinism", "check_all_byte_identical",
                                  1.0 if d1 == d2 else 0.0, 1.0, ">=", d1 == d2)
    out = tmp_path_factory.mktemp("acceptance") / "verdicts.csv"
    write_verdicts(first + [determinism], out)
    return {(r.suite, r.criterion): r for r in first + [determinism]}


@pytest.mark.parametrize("number,suite,criterion", [
    (num, suite, crit)
    for num, (suite, crits) in sorted(CRITERIA.items())
    for crit in crits
])
def test_primary_criterion(battery, number, suite, criterion):
    result = battery[(suite, criterion)]
    print(result.line())
    assert result.passed, result.line()


def test_criterion_9_determinism(battery):
    result = battery[("determinism", "check_all_byte_identical")]
    print(result.line())
    assert result.passed, result.line()


def test_every_suite_criterion_accounted_for(battery):
    # each suite's emitted criteria exactly match the acceptance map
    emitted = {}
    for suite, criterion in battery:
        emitted.setdefault(suite, set()).add(criterion)
    for _, (suite, crits) in CRITERIA.items():
        assert emitted[suite] == set(crits)
    assert set(emitted) == set(ALL_SUITES) | {"determinism"}
