import math
import warnings

import numpy as np
import pytest

from wkam.config import ExperimentConfig
from wkam.errors import DomainError
from wkam.model import GOLDEN
from wkam.studies import (DiophantineSpec, ergodic_cover_time, golden_seeds, loglog_fit,
                          predicted_wells, run_study, verify_diophantine)
from wkam.model import preset


def test_fit_recovers_exact_slopes():
    e = np.array([0.08, 0.04, 0.02, 0.01])
    s, _, r2 = loglog_fit(e, e)
    assert s == pytest.approx(1.0, abs=1e-12) and r2 == pytest.approx(1.0)
    s, _, _ = loglog_fit(e, e ** (1 / 3))
    assert s == pytest.approx(1 / 3, abs=1e-6)


def test_fit_drops_nonpositive_rows_with_warning():
    e = [0.08, 0.04, 0.02, 0.01]
    with pytest.warns(UserWarning):
        s, _, _ = loglog_fit(e, [0.08, 0.0, 0.02, 0.01])
    assert s == pytest.approx(1.0)


def test_fit_reports_scatter():
    e = np.array([0.08, 0.04, 0.02, 0.01, 0.005])
    y = e * np.array([1.0, 1.3, 0.8, 1.1, 0.9])
    assert loglog_fit(e, y)[2] < 1.0


def test_fit_needs_three_rows():
    with pytest.raises(DomainError):
        loglog_fit([0.1, 0.05], [1.0, 0.5])


def test_diophantine_golden():
    r = verify_diophantine(DiophantineSpec((1.0, GOLDEN), 1.0, 200))
    assert r.diophantine and r.nu >= 0.2


def test_resonant_vector_fails():
    r = verify_diophantine(DiophantineSpec((1.0, 1.0), 1.0, 200))
    assert not r.diophantine and r.nu == 0.0


@pytest.mark.parametrize("eta", [0.5, 1.0, 3.0])
def test_one_dimensional_nu(eta):
    assert verify_diophantine(DiophantineSpec((1.0,), eta, 50)).nu == pytest.approx(1.0)


def test_search_bound_minimum():
    with pytest.raises(DomainError):
        verify_diophantine(DiophantineSpec((1.0, GOLDEN), 1.0, 10))


@pytest.mark.parametrize("delta", [0.2, 0.05, 0.001])
def test_circle_covers_in_one_turn(delta):
    assert ergodic_cover_time((1.0,), delta) <= 1.0


def test_golden_cover_time():
    assert ergodic_cover_time((1.0, GOLDEN), 0.2) <= 50
    ds = np.array([0.2, 0.1, 0.05, 0.025, 0.0125])
    ts = [ergodic_cover_time((1.0, GOLDEN), d) for d in ds]
    assert loglog_fit(1 / ds, ts)[0] <= 1.2


def test_cover_delta_range():
    with pytest.raises(DomainError):
        ergodic_cover_time((1.0,), 0.5)


def test_seeds_are_deterministic():
    a = golden_seeds(50, 7)
    assert np.array_equal(a, golden_seeds(50, 7))
    assert not np.array_equal(a, golden_seeds(50, 8))
    assert len(np.unique(np.round(a, 12))) == 50


def test_predicted_wells(f2):
    assert predicted_wells(f2, 0.7) == [0.5]
    assert predicted_wells(f2, -0.7) == [0.0]
    assert predicted_wells(f2, 0.0) == [0.0, 0.5]


def test_rate_c2_flat_is_exact():
    cfg = ExperimentConfig(kind="rate-c2", preset="kam1d-flat", eps_list=(0.08, 0.04, 0.02), N=256)
    res = run_study(cfg)
    assert res.passed
    assert max(r[1] for r in res.rows) <= 10 * cfg.tol


def test_rate_c2_one_dimensional():
    cfg = ExperimentConfig(kind="rate-c2", preset="kam1d", N=1024, dt=0.005, tol=1e-10,
                           eps_list=(0.08, 0.04, 0.02, 0.01, 0.005))
    res = run_study(cfg)
    assert res.passed
    assert res.exponent == pytest.approx(1 / 3)
    assert res.fit[0] >= 0.8


def test_rate_c1_small():
    cfg = ExperimentConfig(kind="rate-c1", preset="F1", N=1024, dt=0.01, tol=1e-9,
                           eps_list=(0.08, 0.04, 0.02))
    res = run_study(cfg)
    errs = [r[1] for r in res.rows]
    assert errs[0] > errs[1] > errs[2]
    assert res.fit[0] > 0.8


def test_rate_c1_rejects_kam():
    with pytest.raises(DomainError):
        run_study(ExperimentConfig(kind="rate-c1", preset="kam1d"))


def test_selection_small():
    cfg = ExperimentConfig(kind="selection", preset="F2", c=(0.7, 0.0), eps_list=(0.04,),
                           N=1024, dt=0.01, seeds=12, T=8.0)
    res = run_study(cfg)
    assert res.passed, [c for c in res.checks if not c.passed]
    cols, rows = res.tables["selection"]
    assert cols == ("c", "epsilon", "cluster_x", "cluster_p", "mass", "seeds_hit")
    wells_07 = {round(r[2] % 1.0, 2) for r in rows if r[0] == 0.7}
    assert wells_07 == {0.5}


def test_threads_do_not_change_results():
    base = ExperimentConfig(kind="rate-c1", preset="F1", N=512, dt=0.01, eps_list=(0.08, 0.04, 0.02))
    a = run_study(base)
    b = run_study(ExperimentConfig(**{**base.__dict__, "threads": 3}))
    assert [r[:3] for r in a.rows] == [r[:3] for r in b.rows]


@pytest.mark.parametrize("kind,preset_name", [("barrier", "F2"), ("flow", "F1"), ("solve", "F1"),
                                              ("measure", "F2")])
def test_small_cli_studies_pass(kind, preset_name):
    cfg = ExperimentConfig(kind=kind, preset=preset_name, c=(0.7,) if preset_name == "F2" else (0.0,),
                           eps_list=(0.05,), N=1024, dt=0.005, tol=1e-10)
    res = run_study(cfg)
    assert res.passed, [c for c in res.checks if not c.passed]
