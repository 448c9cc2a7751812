import numpy as np

from cellkalman.checkpoint import load_checkpoint, save_checkpoint
from cellkalman.ekf import TkfEngine
from cellkalman.harness import RunConfig, generate_synthetic


def test_round_trip_exact(tmp_path):
    cfg = RunConfig(t_steps=30)
    cc, stream = generate_synthetic(cfg)
    model = cfg.build_model(36)
    engine = TkfEngine(cc, model, rates=cfg.learning_rates, rate_warmup=5)
    for row in stream.y:
        engine.step(row)

    prefix = tmp_path / "ckpt"
    save_checkpoint(prefix, engine.model, engine.state)
    model2, state2 = load_checkpoint(prefix)

    np.testing.assert_array_equal(model2.alpha, engine.model.alpha)
    np.testing.assert_array_equal(model2.gamma_coeffs, engine.model.gamma_coeffs)
    np.testing.assert_array_equal(model2.bank.to_vector(), engine.model.bank.to_vector())
    np.testing.assert_array_equal(model2.rff.frequencies, engine.model.rff.frequencies)
    np.testing.assert_array_equal(state2.x_post, engine.state.x_post)
    np.testing.assert_array_equal(state2.p_post, engine.state.p_post)
    assert state2.step == engine.state.step
    assert model2.sigma_obs == engine.model.sigma_obs


def test_resume_equals_straight_run(tmp_path):
    cfg = RunConfig(t_steps=60)
    cc, stream = generate_synthetic(cfg)

    straight = TkfEngine(cc, cfg.build_model(36), rates=cfg.learning_rates, rate_warmup=10)
    for row in stream.y:
        straight.step(row)

    first = TkfEngine(cc, cfg.build_model(36), rates=cfg.learning_rates, rate_warmup=10)
    for row in stream.y[:30]:
        first.step(row)
    save_checkpoint(tmp_path / "mid", first.model, first.state)

    model2, state2 = load_checkpoint(tmp_path / "mid")
    resumed = TkfEngine(cc, model2, state=state2, rates=cfg.learning_rates, rate_warmup=10)
    for row in stream.y[30:]:
        resumed.step(row)

    np.testing.assert_array_equal(resumed.state.x_post, straight.state.x_post)
    np.testing.assert_array_equal(resumed.state.p_post, straight.state.p_post)
    np.testing.assert_array_equal(resumed.model.gamma_coeffs, straight.model.gamma_coeffs)
