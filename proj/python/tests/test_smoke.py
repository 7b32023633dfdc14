import numpy as np
import pytest

import rflow


def test_architecture_and_projection():
    arch = rflow.Architecture(dim=2, hidden=[5], V=1.5)
    assert arch.parameter_count == 5 * 3 + 5 + 2 * 5 + 2
    net = rflow.VelocityNet(arch, np.full(arch.parameter_count, 3.0))
    assert net.max_row_l1() > 1.5
    net.project()
    assert net.max_row_l1() <= 1.5 + 1e-12
    out = net.forward(np.zeros((4, 2)), 0.5)
    assert out.shape == (4, 2)


def test_zero_net_and_sampling():
    arch = rflow.Architecture(dim=1, hidden=[4])
    net = rflow.VelocityNet(arch)
    z0 = rflow.Distribution.gaussian([0.0], 1.0).sample(10, seed=1)
    np.testing.assert_array_equal(rflow.euler_sample(net, z0, 5), z0)
    np.testing.assert_array_equal(rflow.one_step_sample(net, z0), z0)


def test_gradient_and_training():
    x0, x1, t = rflow.draw_coupled(rflow.Distribution.gaussian([0.0], 1.0), rflow.Distribution.gaussian([2.0], 1.0), 64, seed=3)
    net = rflow.VelocityNet.initialized(rflow.Architecture(dim=1, hidden=[6], V=4.0), seed=3)
    loss, grad = rflow.loss_and_gradient(net, x0, x1, t)
    assert grad.shape == (net.parameter_count,)
    assert rflow.gradient_check(net, x0[:8], x1[:8], t[:8]) < 1e-5
    trained, initial, final, losses = rflow.train(net, x0, x1, t, steps=300, batch_size=16, eta=0.05)
    assert len(losses) == 300
    assert final < initial
    assert initial == pytest.approx(loss)


def test_vstar_and_w2():
    v = rflow.vstar_gaussian([0.0], [3.0], 1.0, 1.0, np.array([-1.0, 0.0, 4.0]), 0.5)
    np.testing.assert_allclose(v[:, 0], 3.0)
    a = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert rflow.w2(a, a[::-1] + [0.0, 2.0]) == pytest.approx(2.0)
    assert rflow.w2(np.array([1.0, 2.0]), np.array([2.0, 1.0])) == 0.0


def test_bounds_report():
    rep = rflow.evaluate_bounds(P=10, B=1.0, L_ell=1.0, n=1e6)
    assert rep["constants"]["combined"] == 203040
    assert rep["C_univ"] == 1.0
    assert rep["r_star"] > 0


def test_lower_bound():
    s = rflow.lower_bound(1.0, 10.0, 0.1)
    assert s["eta"] == pytest.approx(1e-4)
    assert s["tv"] <= s["eta"]
    assert s["separation_passes"]
    v, w_bg, w_sh = rflow.posterior_velocity(1.0, 10.0, 0.1, 2, 5.0)
    assert w_bg + w_sh == pytest.approx(1.0, abs=1e-12)
    assert v == pytest.approx(w_sh * 10.0)


def test_config_errors_are_typed():
    with pytest.raises(rflow.ConfigError, match="train"):
        rflow.normalize_config({"task": "gaussian_1d"})
    cfg = rflow.normalize_config({"task": "gaussian_1d", "train": {"steps": 5}})
    assert cfg["train"]["steps"] == 5


def test_sweep_is_deterministic():
    cfg = {
        "task": "gaussian_1d",
        "arch": {"hidden": [4]},
        "train": {"steps": 30, "batch_size": 8},
        "sweep": {"grid": [16, 32, 64, 128, 256], "trials": 2, "n_reference": 256, "reference_steps": 50,
                  "n_holdout": 64, "n_eval": 64, "n_mc": 64, "euler_steps": 5, "polish_steps": 5},
    }
    a = rflow.run_sweep(cfg, jobs=1)
    b = rflow.run_sweep(cfg, jobs=2)
    assert a == b
    assert a[0].startswith("n,trial,seed,")


def test_checkpoint_round_trip(tmp_path):
    net = rflow.VelocityNet.initialized(rflow.Architecture(dim=2, hidden=[3]), seed=9)
    path = str(tmp_path / "ck.bin")
    rflow.save_checkpoint(path, net)
    back = rflow.load_checkpoint(path)
    np.testing.assert_array_equal(back.theta, net.theta)
    (tmp_path / "bad.bin").write_bytes(b"garbage")
    with pytest.raises(rflow.FormatError):
        rflow.load_checkpoint(str(tmp_path / "bad.bin"))
