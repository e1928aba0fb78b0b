import os
import subprocess
import sys

import numpy as np
import pytest

from slicevol import _accel
from slicevol import moment_match as mm
from slicevol.rng import stream
from slicevol.sde_core import SdeParams, euler_block, make_layout, pieces_for
from slicevol.slice_data import interpolate
from slicevol.synth import profile


def test_numba_is_default():
    if os.environ.get("SLICEVOL_NO_NUMBA"):
        pytest.skip("numba disabled for this run")
    assert _accel.HAVE_NUMBA and _accel.USE_NUMBA
    assert _accel.backend_name() == "numba"


@pytest.mark.parametrize("record", [False, True])
def test_euler_backends_bitwise(record):
    p = profile(11, 900.0)
    pieces = [(1.6, 2.0, p[2], p[2], False)] + pieces_for(interpolate(p), 2.0, 9.0)
    layout = make_layout(pieces, 0.01)
    z = stream(1).standard_normal((layout.total_steps, 300))
    params = SdeParams(0.7, 40.0)  # strong noise so some paths hit the truncation
    a = euler_block(float(p[2]), layout, params, z, record=record, use_numba=True)
    b = euler_block(float(p[2]), layout, params, z, record=record, use_numba=False)
    for x, y in zip(a, b):
        if x is None:
            assert y is None
        else:
            assert np.array_equal(x, y)


def test_rk4_backends_bitwise():
    rng = np.random.default_rng(2)
    n = 400
    args = (rng.normal(0, 30, n), rng.uniform(5, 900, n), rng.uniform(5, 900, n), rng.uniform(0.2, 1, n), 1.1, 30.0)
    a = mm.propagate_batch(*args, use_numba=True)
    b = mm.propagate_batch(*args, use_numba=False)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_rk4_stiff_cap_gives_nan_on_both():
    args = ([1.0], [1.0], [1.0], [1.0], 1000.0, 1e6)
    for flag in (True, False):
        m1, m2 = mm.propagate_batch(*args, use_numba=flag)
        assert np.isnan(m1[0]) and np.isnan(m2[0])


def cli_outputs(tmp, env_extra):
    env = dict(os.environ, **env_extra)
    env.pop("SLICEVOL_LOG", None)
    data, params, sim = tmp / "d.csv", tmp / "p.json", tmp / "s.csv"
    cmds = [
        ["synth", "--n-hearts", "30", "--seed", "5", "--out", str(data)],
        ["fit", str(data), "--out", str(params)],
        ["simulate", str(data), str(params), "--n-sims", "300", "--seed", "5", "--out", str(sim)],
    ]
    for cmd in cmds:
        res = subprocess.run([sys.executable, "-m", "slicevol.cli", *cmd], env=env, capture_output=True, text=True)
        assert res.returncode in (0, 3), res.stderr
    return [f.read_bytes() for f in (data, params, sim)]


def test_cli_backends_identical(tmp_path):
    a = tmp_path / "numba"
    b = tmp_path / "numpy"
    a.mkdir()
    b.mkdir()
    out_numba = cli_outputs(a, {"SLICEVOL_NO_NUMBA": "0"})
    out_numpy = cli_outputs(b, {"SLICEVOL_NO_NUMBA": "1"})
    assert out_numba == out_numpy


def test_flag_is_read():
    code = "from slicevol import _accel; print(_accel.backend_name())"
    env = dict(os.environ, SLICEVOL_NO_NUMBA="1")
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert res.stdout.strip() == "numpy"
