"""End-to-end smoke test of the inletctl_py bindings.

Run after `pip install -e . --no-build-isolation` from the repo root:

    python python/smoke_test.py
"""

import math
import tempfile
from pathlib import Path

import inletctl_py as ic


def check(name, ok):
    print(f"[smoke] {name}: {'ok' if ok else 'FAIL'}")
    assert ok, name


def main():
    # surrogate environment round trip
    env = ic.ToyEnv(n_obs=8, horizon=50, obs_noise_pct=2.0, seed=7)
    obs = env.reset()
    check("env reset obs dim", len(obs) == env.obs_dim == 8)
    lo, hi = env.action_bounds
    check("action bounds ordered", all(a < b for a, b in zip(lo, hi)))
    total = 0.0
    steps = 0
    while True:
        obs, r, terminated, truncated = env.step([0.5, 0.3, 0.2, 45.0])
        total += r
        steps += 1
        if terminated or truncated:
            break
    check("episode runs to horizon", steps == 50)
    check("scripted beats this fixed action", env.scripted_return() >= total)

    # scalar oracles
    check(
        "td3 target arithmetic",
        ic.td3_target(1.0, 0.99, 2.0, 3.0, False) == 1.0 + 0.99 * 2.0,
    )
    want = 0.5 + 0.9 * (1.5 - 0.2 * -0.7)
    check(
        "sac target arithmetic",
        abs(ic.sac_target(0.5, 0.9, 1.5, 0.2, -0.7, False) - want) < 1e-15,
    )

    # short training run + checkpoint reload
    with tempfile.TemporaryDirectory() as d:
        ckpt = str(Path(d) / "agent.ckpt")
        env_steps, last_eval, stopped = ic.train_toy(
            ckpt, algo="td3", total_steps=400, warmup_steps=100, hidden=[8], seed=3
        )
        check("training ran", env_steps >= 400 and math.isfinite(last_eval))
        agent = ic.Agent.load(ckpt)
        check("checkpoint round trip", agent.algo == "td3" and agent.obs_dim == 8)
        action = agent.act([0.0] * 8)
        check("policy action in bounds", all(a <= x <= b for x, a, b in zip(action, lo, hi)))
        try:
            agent.act([0.0] * 9)
            check("dimension mismatch rejected", False)
        except ValueError:
            check("dimension mismatch rejected", True)

    # sensor selection: rank-1 picks the max-magnitude row
    snaps = [[0.3], [-0.9], [0.1], [0.85]]
    idx, err = ic.optimal_sensors(snaps, 1)
    check("rank-1 sensor pick", idx == [1] and err >= 0.0)

    # quick solver sanity: vortex error shrinks under refinement
    e1 = ic.vortex_l2_error(3, 8, 0.02)
    e2 = ic.vortex_l2_error(3, 16, 0.02)
    check("vortex error converges", e2 < e1)

    print("[smoke] all checks passed")


if __name__ == "__main__":
    main()
