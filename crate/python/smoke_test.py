"""Smoke test for the srdelab_py extension.

Build and install first:  maturin develop -m crates/python/Cargo.toml --release
"""

import json
import math
import os
import tempfile

import srdelab_py as s

SMALL = """
schema = 1
seed = 3
[grid]
half_width = 2.0
nx = 21
dt = 0.01
nt = 5
"""


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    assert close(s.heat_kernel(1.0, 0.0, 0.0), 1.0 / math.sqrt(2.0 * math.pi))
    lhs, rhs = s.kernel_bound_sides("weighted_mass", 1.0, eta=1.0)
    assert lhs <= rhs, (lhs, rhs)

    assert s.beta(1.0, 0.0) == 0.5 and s.beta(1.0, 1.0) == 4.0
    assert s.t_star(1.0, 0.0) == math.inf
    assert 0.0 < s.t_star(1.0, 1.0) < math.inf
    assert close(s.variance_closed_form(1.0), math.sqrt(1.0 / math.pi))
    assert close(s.gronwall_bound(2.0, 0.0, 0.0, 5.0), 2.0)
    assert close(s.gronwall_bound(2.0, 1.0, 0.0, 1.0), 2.0 * math.e, 1e-9)

    c = json.loads(s.apriori_constants(1.0, 1.0, 0.0, 0.1))
    assert c["horizon"] <= c["t_star"]
    try:
        s.apriori_constants(1.0, 1.0, 0.0, 10.0)
        raise AssertionError("horizon beyond t_star accepted")
    except ValueError:
        pass

    w = s.noise_increments(2.0, 21, 0.01, 5, 7, 0)
    assert len(w) == 21 * 5 and w == s.noise_increments(2.0, 21, 0.01, 5, 7, 0)

    t, x, frames, status = s.simulate(SMALL)
    assert (len(t), len(x), len(frames), len(frames[0])) == (6, 21, 6, 21)
    assert status == "completed"
    assert s.simulate(SMALL)[2] == frames
    assert s.simulate(SMALL, seed=4)[2] != frames

    with tempfile.TemporaryDirectory() as d:
        code = s.run_cli(["verify-kernel", "--samples", "20", "--out", d])
        assert code == 0, code
        assert os.path.exists(os.path.join(d, "manifest.json"))
    assert s.run_cli(["verify-kernel", "--bogus"]) == 1

    print(f"srdelab_py {s.__version__}: smoke test ok")


if __name__ == "__main__":
    main()
