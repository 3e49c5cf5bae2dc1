import json

import numpy as np
import pytest

from husimiflow.dynamics import Trajectory, liouville_rhs, propagate
from husimiflow.errors import BlowUp, GridMismatch
from husimiflow.grid import box_grid, gaussian_smooth
from husimiflow.states import (classical_density, coherent_husimi, coherent_wigner, fock_husimi, fock_wigner,
                               smooth_state)
from husimiflow.symbols import parse_poly


def test_mean_position_follows_cosine(g64, ho):
    tr = propagate(ho, coherent_wigner(g64, (1.0, 0.0)), np.pi, 1e-3, 100)
    x = tr.observable(parse_poly("x"))
    assert np.abs(x - np.cos(tr.times)).max() < 1e-9
    assert tr.norm_drift() < 1e-12


def test_quadratic_wigner_equals_classical(g64, ho):
    a = propagate(ho, coherent_wigner(g64, (1.0, 0.5)), 1.0, 1e-3, 1000).final.values
    b = propagate(ho, classical_density(g64, (1.0, 0.5)), 1.0, 1e-3, 1000).final.values
    assert np.abs(a - b).max() <= 1e-10 * np.abs(b).max()


def test_eigenstate_is_steady(g64, ho):
    # the n=2 Wigner function is only resolved to ~1e-9 on this grid
    for s, tol in ((fock_wigner(g64, 2), 1e-8), (fock_husimi(g64, 1), 1e-13)):
        r = liouville_rhs(ho, s)
        assert np.abs(r.values).max() < tol * np.abs(s.values).max()


def test_smoothing_commutes_for_quadratic(g64, ho):
    w0 = coherent_wigner(g64, (1.0, 0.5))
    a = gaussian_smooth(propagate(ho, w0, 0.5, 1e-3, 500).final.field).values
    b = propagate(ho, smooth_state(w0), 0.5, 1e-3, 500).final.values
    assert np.abs(a - b).max() < 1e-10 * np.abs(b).max()


def test_step_lands_on_final_time(g64, ho):
    tr = propagate(ho, coherent_husimi(g64, (0.0, 1.0)), 0.1, 0.03)
    assert tr.times[-1] == pytest.approx(0.1, abs=1e-15)
    assert tr.meta["steps"] == 4


def test_unstable_step_raises(g64):
    h = parse_poly("0.5*p^2 + 5*x^2")
    with pytest.raises(BlowUp), np.errstate(over="ignore", invalid="ignore"):
        propagate(h, coherent_wigner(g64, (1.0, 0.0)), 200.0, 0.5, 10, leak_limit=np.inf)


def test_trajectory_validation(g64, ho):
    s = coherent_wigner(g64, (0.0, 0.0))
    with pytest.raises(ValueError):
        Trajectory([0.0, 0.0], [s, s], ho)
    other = coherent_wigner(box_grid(32, 10), (0.0, 0.0))
    with pytest.raises(GridMismatch):
        Trajectory([0.0, 1.0], [s, other], ho)


def test_export_writes_index(tmp_path, g64, ho):
    tr = propagate(ho, coherent_husimi(g64, (1.0, 0.0)), 0.2, 0.05, 2)
    files = tr.export(tmp_path, ["x"])
    idx = json.loads((tmp_path / "index.json").read_text())
    assert len(idx["files"]) == len(tr) == 3
    assert idx["representation"] == "Husimi"
    assert len(files) == 2 * len(tr) + 1
    assert abs(idx["observables"]["x"][-1] - np.cos(0.2)) < 1e-6
