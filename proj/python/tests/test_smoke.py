import math

import numpy as np
import pytest

import ddfeec

AFFINE = {
    "domain": [0, 0, 2, 2],
    "subdomains": 2,
    "problem": {"K": 1, "f": 0, "g": "x - 3*y", "exact": {"p": "x - 3*y", "px": 1, "py": -3}},
    "mortar": {"H": 0.5},
    "backend": {"fem": 4},
}


def test_affine_solution_is_reproduced():
    r = ddfeec.solve(AFFINE)
    assert r["errors"]["L2_p"] < 1e-10
    assert r["errors"]["L2_u"] < 1e-9
    assert r["diagnostics"]["symmetry_defect"] < 1e-10
    assert r["free_dofs"] == 5


def test_bad_config_raises_value_error():
    bad = dict(AFFINE, mortar={"H": -1})
    with pytest.raises(ValueError):
        ddfeec.solve(bad)


def test_example1_coarse_level():
    csv, report = ddfeec.run_study("example1", levels=[1, 2])
    lines = csv.strip().splitlines()
    assert lines[0] == "H,err_p,err_u,err_lambda,iterations"
    assert len(lines) == 3
    err_p = float(lines[1].split(",")[1])
    assert math.isclose(err_p, 0.273, rel_tol=0.1)
    assert report["study"] == "example1"


def test_knots_and_pou():
    t = ddfeec.realize_knots([0.0, 0.0, 0.0, 0.0])
    assert np.allclose(t, [0, 0.25, 0.5, 0.75, 1.0])
    element = ddfeec.default_data_dir() + "/elements/cylinder_8.json"
    pts = np.random.default_rng(0).random((50, 2))
    vals = ddfeec.pou_values(element, pts)
    assert vals.shape[0] == 50
    assert np.allclose(vals.sum(axis=1), 1.0, atol=1e-12)
    assert vals.min() >= 0.0


def test_study_ids():
    assert "conservation" in ddfeec.study_ids()
    with pytest.raises(ValueError):
        ddfeec.run_study("no_such_study")
