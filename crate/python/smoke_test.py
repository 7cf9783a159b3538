"""Smoke test for the Python bindings.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/biped_codesign_py-*.whl
"""

import math
import tempfile

import biped_codesign_py as bc


def main():
    cfg = bc.parse_config(bc.default_config())
    assert cfg["evolution"]["population_size"] == 250
    assert cfg["design"]["thigh_range"] == [0.2, 0.4]

    bits = bc.encode_lengths(0.31, 0.36)
    assert len(bits) == 18
    t, s = bc.decode_genome(bits)
    assert abs(t - 0.31) < 1e-9 and abs(s - 0.36) < 1e-9

    assert abs(bc.froude_number(3.2, 1.0) - 1.04) < 0.01
    assert abs(bc.cost_of_transport([100.0] * 4, 10.5, [1.0] * 4) - 100.0 / 103.005) < 1e-12
    try:
        bc.cost_of_transport([1.0], 1.0, [0.0])
        raise AssertionError("stationary trajectory accepted")
    except RuntimeError:
        pass

    adv, ret = bc.compute_gae([1.0, 1.0], [0.0, 0.0], [False, True], 5.0, 0.9, 1.0)
    assert abs(adv[0] - 1.9) < 1e-12 and abs(ret[1] - 1.0) < 1e-12

    w = bc.Walker(0.3, 0.3, seed=1)
    obs = w.reset()
    assert len(obs["proprio"]) == 17 and len(obs["privileged"]) == 4
    total = 0.0
    for _ in range(20):
        obs, r, done, info = w.step(w.nominal_stance)
        total += r
        assert math.isfinite(r) and "reward_terms" in info
        if done:
            obs = w.reset()
    assert w.student_observation()["privileged"] is None

    best = bc.evolve_synthetic((0.31, 0.36), population_size=16, generations=15, seed=2)
    assert abs(best["thigh_m"] - 0.31) < 0.05 and abs(best["shin_m"] - 0.36) < 0.05

    with tempfile.TemporaryDirectory() as d:
        toml = '[fitness]\nkind = "synthetic"\noptimum = [0.31, 0.36]\n[evolution]\npopulation_size = 4\ngenerations = 2\n'
        rep = bc.run_evolve(toml, out_dir=d)
        assert rep["finished"] and rep["generations_done"] == 2
        surface = bc.run_sweep(toml, out_dir=d)
        assert len(surface["cells"]) == 16

    print("python smoke test passed")


if __name__ == "__main__":
    main()
