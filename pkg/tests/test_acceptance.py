"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are collected in ``LINES`` and echoed in the pytest terminal summary
(see conftest.py). The scaled learning check (criterion 10) trains six agents
for 100k steps each and only runs when ``HYBRIDQRL_SLOW=1``.
"""
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import ToyEnv

from hybridqrl import analysis, config, envs, gradcheck, model, nn, pqc, rl
from hybridqrl.envs import PreprocConfig, grayscale, skip_and_pool

LINES = []
SLOW = os.environ.get("HYBRIDQRL_SLOW") == "1"
RECORDED = Path(__file__).parent / "data" / "learning_check.json"


def record(number, ok, detail):
    LINES.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_c01_shift_vs_finite_difference():
    with nn.float64_mode():
        err, secs = timed(gradcheck.check_shift_vs_fd, seed=0, instances=50)
    record(1, err <= 1e-6 and secs <= 60, f"shift vs FD max abs error {err:.2e} (tol 1e-6), {secs:.1f}s (limit 60s)")


def test_c02_shift_vs_adjoint():
    with nn.float64_mode():
        err = gradcheck.check_shift_vs_adjoint(seed=0, instances=50)
    record(2, err <= 1e-10, f"shift vs adjoint max abs error {err:.2e} (tol 1e-10)")


def test_c03_sinusoid_slices():
    with nn.float64_mode():
        err = gradcheck.check_sinusoid_slices(seed=0, slices=20, held_out=20)
    record(3, err <= 1e-8, f"3-point sinusoid fit, 20 slices x 20 held-out points, max error {err:.2e} (tol 1e-8)")


def test_c04_parameter_accounting():
    arch = pqc.PqcArchitecture(4, 4)
    hybrid = model.build_net(model.NetSpec("hybrid"), seed=0)
    classical = model.build_net(model.NetSpec("classical", latent_dim=16), seed=0)
    got = (arch.n_params, arch.n_encoding_gates, hybrid.group_sizes()["pqc"], classical.group_sizes()["hidden"])
    record(4, got == (60, 16, 60, 8704), f"pqc trainables {got[0]}, encoding gates {got[1]}, "
           f"hybrid pqc group {got[2]}, classical hidden {got[3]} (want 60/16/60/8704)")


def test_c05_conv_arithmetic():
    x = np.zeros((1, 84, 84, 4))
    rng = np.random.default_rng(0)
    for spec in nn.REFERENCE_CONV_STACK:
        x = nn.Conv2D(spec, rng=rng).forward(x)
    dim = x.reshape(1, -1).shape[1]
    record(5, dim == 3136 == model.NetSpec().conv_output_dim, f"84x84x4 flattens to {dim} features (want 3136)")


def test_c06_end_to_end_hybrid_gradient():
    with nn.float64_mode():
        err, secs = timed(gradcheck.model_gradient_error, model.HYBRID, 0)
    record(6, err <= 1e-4 and secs <= 120, f"tiny hybrid max relative error {err:.2e} (tol 1e-4), {secs:.1f}s (limit 120s)")


class _Scripted:
    def __init__(self, script):
        self.script = list(script)

    def step(self, action):
        return self.script.pop(0)


def test_c07_preprocessing():
    rng = np.random.default_rng(0)
    frames = [rng.integers(0, 256, (6, 6, 3), dtype=np.uint8) for _ in range(4)]
    rewards = [0.0, 1.0, -1.0, 1.0]
    pooled, reward, _ = skip_and_pool(_Scripted(zip(frames, rewards, [False] * 4)), 0, PreprocConfig())
    exact_reward = reward == sum(rewards)
    exact_pool = np.array_equal(pooled, np.maximum(grayscale(frames[2]), grayscale(frames[3])))
    obs = np.asarray(envs.make_pipeline("mini-pong", seed=0).reset())
    same = all(np.array_equal(obs[..., 0], obs[..., c]) for c in range(4))
    ok = exact_reward and exact_pool and same and obs.shape == (84, 84, 4)
    record(7, ok, f"reward sum exact {exact_reward}, pooled == elementwise max {exact_pool}, "
           f"reset stack identical {same}, shape {obs.shape}")


def test_c08_algorithm_mechanics():
    eps = rl.EpsilonSchedule()
    eps_ok = eps(0) == 1.0 and eps(250_000) == 0.01

    buf = rl.ReplayBuffer(100, seed=0)
    for i in range(100 + 37):
        buf.add(rl.Transition(i, 0, 0.0, i, False))
    fifo_ok = [t.state for t in buf.contents()] == list(range(37, 137))

    tiny = model.build_net(model.tiny_spec("hybrid"), seed=0)
    cfg = rl.TrainerConfig(batch_size=4, train_every=4, target_sync_every=200, warmup_random_steps=50,
                           buffer_capacity=500, epsilon_decay_steps=300, total_steps=1050, seed=0)
    trainer = rl.Trainer(ToyEnv(), tiny, cfg)
    frozen = []
    last = {}

    def watch(tr):
        params = [a.copy() for _, _, a in tr.target.named_params()]
        if last and tr.t not in tr.run.syncs:
            frozen.append(all(np.array_equal(x, y) for x, y in zip(last["p"], params)))
        last["p"] = params
        if tr.t in tr.run.syncs:
            online = [a for _, _, a in tr.online.named_params()]
            frozen.append(all(np.array_equal(x, y) for x, y in zip(online, params)))

    trainer.on_step = watch
    run = trainer.train()
    sync_ok = all(frozen) and len(run.syncs) == 5 and np.all(np.diff(run.syncs) == 200)
    cadence_ok = run.n_updates == 250
    record(8, eps_ok and fifo_ok and sync_ok and cadence_ok,
           f"eps(0)={eps(0)!r} eps(250000)={eps(250_000)!r}, FIFO at capacity+37 {fifo_ok}, "
           f"target bit-equal after sync and frozen between {sync_ok}, updates per 1000 steps {run.n_updates} (want 250)")


def test_c09_presets():
    table = {  # name: (readout lr, reward scale, latent)
        "q-baseline": (2.5e-4, 1.0, 16), "quantum-1a": (2.5e-3, 1.0, 16), "quantum-1b": (2.5e-3, 10.0, 16),
        "quantum-1c": (2.5e-2, 10.0, 16), "quantum-1d": (2.5e-2, 100.0, 16), "quantum-1e": (2.5e-1, 10.0, 16),
        "quantum-1f": (2.5e-1, 100.0, 16), "quantum-2a": (2.5e-4, 1.0, 36), "quantum-2b": (2.5e-2, 10.0, 36),
        "quantum-2c": (2.5e-1, 100.0, 36), "c-baseline": (2.5e-4, 1.0, 16), "classical-1a": (2.5e-2, 10.0, 16),
        "classical-1b": (2.5e-1, 100.0, 16), "classical-2": (2.5e-4, 1.0, 36),
    }
    bad = []
    for name, row in table.items():
        cfg = config.resolve(preset=name)
        if cfg.table_row() != row or config.RunConfig.from_flat(json.loads(json.dumps(cfg.to_flat()))) != cfg:
            bad.append(name)
    ok = not bad and sorted(config.PRESETS) == sorted(table)
    record(9, ok, f"{len(table) - len(bad)}/14 presets exact and round-trip lossless" + (f"; mismatched {bad}" if bad else ""))


def test_c10_scaled_learning_check():
    if not SLOW:
        note = ""
        if RECORDED.exists():
            rec = json.loads(RECORDED.read_text())
            note = "; recorded run: " + ", ".join(f"{k} {v}" for k, v in rec["trailing50"].items())
        LINES.append(f"criterion 10: SKIP  set HYBRIDQRL_SLOW=1 to train 6 agents x 100k steps{note}")
        pytest.skip("slow: set HYBRIDQRL_SLOW=1")
    means = {mt: [learning_check(mt, seed) for seed in range(3)] for mt in ("hybrid", "classical")}
    wins = {mt: sum(m >= 3.0 for m in v) for mt, v in means.items()}
    record(10, all(w >= 2 for w in wins.values()),
           "trailing-50 means " + "; ".join(f"{mt} {np.round(v, 2).tolist()} ({wins[mt]}/3 >= 3.0)" for mt, v in means.items()))


def learning_check(model_type, seed):
    net = model.build_net(model.NetSpec(model_type, latent_dim=None if model_type == "hybrid" else 16), seed=seed)
    cfg = rl.TrainerConfig(warmup_random_steps=2000, epsilon_decay_steps=25_000, total_steps=100_000, seed=seed)
    run = rl.Trainer(envs.make_pipeline("mini-pong", seed=seed), net, cfg).train()
    return float(np.mean(run.returns[-50:]))


def test_c11_reward_scaling():
    net = model.build_net(model.tiny_spec("hybrid"), seed=0)
    cfg = rl.TrainerConfig(batch_size=4, warmup_random_steps=200, total_steps=200, reward_scale=10.0,
                           buffer_capacity=500, seed=0)
    trainer = rl.Trainer(ToyEnv(length=1, max_steps=5), net, cfg)
    run = trainer.train()
    stored = trainer.buffer.contents()
    terminal = [t for t in stored if t.terminal]
    targets = rl.td_targets(terminal, trainer.target, cfg.gamma)
    ok = ({t.reward for t in stored} == {0.0, 10.0} and np.all(targets == 10.0)
          and set(run.returns) <= {0.0, 1.0} and 1.0 in run.returns)
    record(11, ok, f"stored rewards {sorted({t.reward for t in stored})}, terminal TD targets {sorted(set(targets.tolist()))}, "
           f"logged returns {sorted({float(r) for r in run.returns})}")


def test_c12_surface_shape_class():
    with nn.float64_mode():
        net = model.build_net(model.tiny_spec("hybrid", dtype="float64"), seed=0)
        cfg = rl.TrainerConfig(batch_size=8, train_every=1, target_sync_every=50, warmup_random_steps=100,
                               epsilon_decay_steps=200, total_steps=400, buffer_capacity=1000,
                               learning_rates={g: 3e-3 for g in model.GROUPS["hybrid"]}, seed=0)
        rl.Trainer(ToyEnv(length=3), net, cfg).train()
        head = analysis.truncate_model(net)
        rng = np.random.default_rng(0)
        fit_at = np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
        sin_err = 0.0
        for _ in range(20):
            z0 = rng.normal(size=head.n_inputs("latent"))
            axis = int(rng.integers(head.n_inputs("latent")))
            held = rng.uniform(-2 * np.pi, 2 * np.pi, 20)

            def q(angles):
                pts = np.tile(z0, (len(angles), 1))
                pts[:, axis] = angles
                return head.forward_latent(pts)

            for a in range(q(fit_at).shape[1]):
                coeffs = pqc.fit_sinusoid(fit_at, q(fit_at)[:, a])
                sin_err = max(sin_err, float(np.abs(pqc.eval_sinusoid(coeffs, held) - q(held)[:, a]).max()))

        relu = model.build_net(model.tiny_spec("classical", dtype="float64", latent_dim=2, hidden_dim=2), seed=0)
        relu.hidden.params["W"][...] = np.eye(2)
        relu.hidden.params["b"][...] = 0
        # dyadic weights on a dyadic grid: every product and sum is exact, so "zero" means zero
        relu.out.params["W"][...] = [[1.0, -2.0, 0.5], [0.25, 0.75, -1.125]]
        relu.out.params["b"][...] = [0.125, 0.25, -0.5]
        grid = analysis.q_surface(analysis.truncate_model(relu), np.zeros(2), 0, 1,
                                  ((-1.0, 1.0), (-1.0, 1.0)), 17, space="latent")
        within = 0.0
        for region in (grid.xs_i < 0, grid.xs_i > 0):
            lines = grid.q[region]  # slices along feature i, every column and action
            within = max(within, float(np.abs(np.diff(lines, n=2, axis=0)).max()))
        kink = float(np.abs(np.diff(grid.q[6:11, 0, 0], n=2)).max())
    ok = sin_err <= 1e-8 and within == 0.0 and kink > 1e-3
    record(12, ok, f"trained hybrid head slice fit error {sin_err:.2e} (tol 1e-8); ReLU head second differences "
           f"within regions {within:.1e} (want 0), across the kink {kink:.2f}")


def test_c13_tanh_pi():
    x = np.concatenate([np.linspace(-40, 40, 4001), [1e300, -1e300, 0.0]])
    y = nn.tanh_pi(x)
    inside = bool(np.all(np.abs(y) < np.pi))
    with nn.float64_mode():
        err = gradcheck.check_tanh_pi(np.random.default_rng(0))
    record(13, inside and err <= 1e-8, f"|tanh_pi| < pi on {x.size} inputs incl. +-1e300: {inside}; "
           f"derivative vs FD max error {err:.2e} (tol 1e-8)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-rs"]))
