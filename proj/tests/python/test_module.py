import numpy as np
import pytest

import ctat

CFG = """
[grid]
half_width = 3.6
n = 49
pml_width = 0.5

[phantom]
component1 = gaussian 0.1 0.05 0.15 1.0

[detector]
mode = large
r = 2
n_theta = 12
n_alpha = 96

[time]
T = 3
chi_T = 2.5
chi_T1 = 3

[recon]
method = cg
iterations = 4
"""


def test_forward_adjoint_identity():
    e = ctat.Experiment.from_string(CFG)
    rng = np.random.default_rng(1)
    f = rng.standard_normal((49, 49))
    g = rng.standard_normal((e.nt, 12))
    mf = e.forward(f)
    assert mf.shape == (e.nt, 12)
    lhs = np.vdot(mf, g)
    rhs = np.vdot(f, e.adjoint(g))
    assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(mf) * np.linalg.norm(g)


def test_reconstruct_reduces_residual():
    e = ctat.Experiment.from_string(CFG)
    truth = e.phantom()
    out = e.reconstruct(e.forward(truth))
    hist = out["residual_history"]
    assert hist[-1] < hist[0]
    err = np.linalg.norm(out["estimate"] - truth) / np.linalg.norm(truth)
    assert err < 1.0


def test_bad_config_raises():
    with pytest.raises(ValueError):
        ctat.Experiment.from_string(CFG + "\n[run]\nspeed = 3\n")
    with pytest.raises(ValueError):
        ctat.Experiment.from_string(CFG.replace("n = 49", "n = 4"))


def test_array_round_trip(tmp_path):
    a = np.arange(60, dtype=float).reshape(3, 4, 5) / 7.0
    ctat.write_array(tmp_path / "a.tatarr", a, {"kind": "test"})
    b, meta = ctat.read_array(tmp_path / "a.tatarr")
    assert b.shape == (3, 4, 5)
    assert np.array_equal(a, b)
    assert meta["kind"] == "test"
    (tmp_path / "a.tatarr").write_bytes((tmp_path / "a.tatarr").read_bytes()[:-3])
    with pytest.raises(OSError, match="expected"):
        ctat.read_array(tmp_path / "a.tatarr")


def test_canonical_image_counts():
    small = ctat.canonical_image((0.1, -0.2), (0.6, 0.8), mode="small")
    large = ctat.canonical_image((0.1, -0.2), (0.6, 0.8), mode="large", R=1.0, r=2.0)
    assert len(small) == 4 and len(large) == 2
    for ev in small:
        assert abs(abs(ev["lambda"]) - 1.0 / 1.6) < 1e-9


def test_adjoint_fault_is_visible():
    assert ctat.adjoint_mismatch("small", n=48, pairs=1) < 1e-10
    assert ctat.adjoint_mismatch("small", n=48, pairs=1, broken=True) > 1e-6


def test_coverage_time():
    assert ctat.coverage_time("small", 2.0, 0.8) == pytest.approx(1.2)
