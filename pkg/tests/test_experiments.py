import pytest

from collapselab.config import parse_scenarios
from collapselab.experiments import RUNNERS, default_steps

SCENARIOS = {
    "offdiag_decay": "trajectories = 2000\nn_steps = 400\n",
    "nonmarkov_compare": "alpha = 100 1/tu\nn_steps = 500\n",
    "gravity_compare": "mass = 1e-14 g\nseparation = 8e-5 cm\n",
    "kernel_scan": "kind = nonrel\na = 1 cm\n",
    "parameter_report": "",
    "gambler_ruin": "engine = both\ntrajectories = 2000\nt_final = 5 tu\n",
}


@pytest.mark.parametrize("experiment", sorted(SCENARIOS))
def test_runner_produces_results_and_passes_checks(experiment):
    (sc,) = parse_scenarios(f"[s]\nexperiment = {experiment}\nseed = 5\n{SCENARIOS[experiment]}")
    out = RUNNERS[experiment](sc)
    assert out.results and out.report
    assert out.check in (None, True)
    for header, rows in out.series.values():
        assert all(len(r) == len(header) for r in rows)


def test_default_steps_meets_rule():
    n = default_steps(1.0, 10.0, 2.0)
    assert n == 4000
    assert 10.0 / n * 4 <= 0.01 + 1e-15


def test_csl_rates_reports_known_reds():
    (sc,) = parse_scenarios("[s]\nexperiment = csl_rates\n")
    out = RUNNERS["csl_rates"](sc)
    r = out.results
    assert r["clump_rate_lattice"]["value"] == pytest.approx(r["clump_rate_formula"]["value"], rel=1e-6)
    assert r["cube_rate_lattice"]["value"] == pytest.approx(r["cube_rate_finite_exact"]["value"], rel=0.01)
    assert out.check is False
