"""Build the extension, import it, and exercise the main entry points.

    python3 python/smoke_test.py
"""

import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "sr-arith-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    target = os.environ.get("CARGO_TARGET_DIR", os.path.join(ROOT, "target"))
    lib = os.path.join(target, "release", "libsr_arith.so")
    dest = tempfile.mkdtemp(prefix="sr_arith_")
    shutil.copy(lib, os.path.join(dest, "sr_arith.so"))
    sys.path.insert(0, dest)
    import sr_arith

    return sr_arith


def main():
    sr = load()

    h = sr.Format("f5e10m")
    assert str(h) == "f5e10m"
    assert h.max_finite == 65504.0
    assert h.bracket(2049.0) == (2048.0, 2050.0)
    assert h.bracket(1.5) == (1.5, 1.5)
    assert sr.round_prob_up(h, 2049.0) == 0.5

    key = sr.RngKey.derive(42, ["smoke", 0])
    assert key.uniform_u64(3) == sr.RngKey(key.seed, key.stream).uniform_u64(3)
    draws = [sr.round(h, "sr", 2049.0, key, c) for c in range(200)]
    assert set(draws) == {2048.0, 2050.0}
    assert sr.round(h, "rn", 2049.0, key) == 2048.0

    env = sr.ArithEnv(h, "rn", key)
    assert env.add(2048.0, 0.5) == 2048.0
    assert env.div(1.0, 3.0) == 0.333251953125
    env = sr.ArithEnv(h, "sr", key)
    total = env.sum_sequential([2048.0] + [0.5] * 1000)
    assert 2048.0 <= total <= 3048.0 and env.counter > 0

    try:
        sr.ArithEnv(h, "rn", key).mul(256.0, 512.0)
    except OverflowError:
        pass
    else:
        raise AssertionError("expected OverflowError")

    assert sr.sum_exact([1e16, 1.0, -1e16]) == 1.0
    sv = sr.singular_values([[3.0, 0.0], [0.0, 4.0], [0.0, 0.0]])
    assert all(abs(a - b) < 1e-12 for a, b in zip(sorted(sv), [3.0, 4.0]))
    x = sr.lls_solve([[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]], [1.0, 4.0, 0.0])
    assert all(abs(a - b) < 1e-12 for a, b in zip(x, [1.0, 2.0]))
    slope, stderr = sr.fit_loglog_slope([(1.0, 1.0), (10.0, 10.0), (100.0, 100.0)])
    assert abs(slope - 1.0) < 1e-12 and stderr < 1e-12

    rows = sr.run_unbiasedness(sr.Format("uq1.0"), 0.7, ["rn", "sr"], seed=1)
    rn, srp = rows
    assert rn[0] == "rn" and abs(rn[1] - 0.3) < 1e-15 and rn[2] == 0.0
    assert abs(srp[1]) <= 4 * srp[2] / math.sqrt(10_000)

    try:
        sr.Format("f5e10")
    except ValueError as e:
        assert "f5e10" in str(e)
    else:
        raise AssertionError("expected ValueError")

    print("sr_arith", sr.__version__, "smoke test ok")


if __name__ == "__main__":
    main()
