import numpy as np
import pytest

from visa_skill.diffcore import NonFiniteError, SgdConfig, checkpoint, override_derivative
from visa_skill.gradsuite import TINY, audit_model, tiny_problem
from visa_skill.model import POOLED, LossWeights, ModelConfig, NonFiniteLossError, SkillModel
from visa_skill.synthdata import SynthConfig, generate_dataset
from visa_skill.training import (
    VideoBatcher,
    cross_validate,
    group_tool_iou,
    predict,
    train,
)

DATA_CFG = SynthConfig(frame_size=32, frame_count=16, seed=1)
SMALL = ModelConfig(K=2, C=4, c_hidden=2, c_out=3, d_h=3, T=4)


@pytest.fixture(scope="module")
def episodes():
    return generate_dataset(DATA_CFG, 2, 2)[0]


def test_forward_shapes():
    model, x, s, _ = tiny_problem(0)
    out = model(x)
    B, T = x.shape[:2]
    assert out.X.shape == (B, T, 4, 4, TINY["C"])
    assert out.P.shape == (B, T, 4, 4, TINY["K"])
    assert out.z.shape == (B, T, TINY["K"], TINY["C"])
    assert out.g.shape == (B, T, TINY["K"], TINY["c_out"])
    assert out.contexts.shape == (B, T, TINY["K"] + 1, 2 * TINY["d_h"])
    assert out.score.shape == (B,)


def test_pooled_baseline_has_no_groups():
    model = SkillModel(ModelConfig(**{**TINY, "variant": POOLED}))
    assert model.codebook is None
    assert set(model.parameter_groups()) == {"extractor", "bilstm", "f_s"}


def test_loss_components_add_up():
    model, x, s, hm = tiny_problem(1, supervised=True)
    w = LossWeights()
    total, comps = model.loss(model(x), s, w, hm)
    assert total.item() == pytest.approx(comps["mse"] + 10 * comps["exist"] + 20 * comps["pos"], rel=1e-12)
    model, x, s, _ = tiny_problem(1)
    total, comps = model.loss(model(x), s, LossWeights(lambda_exist=0.0))
    assert comps["total"] == comps["mse"]


def test_every_group_gradient_on_tiny_model():
    errors = audit_model(seed=0)
    assert {k.split("/")[0] for k in errors} == {"L", "L'"}
    assert max(errors.values()) <= 1e-4


def test_nonfinite_loss_names_component():
    model, x, s, _ = tiny_problem(2)
    out = model(x)
    with pytest.raises(NonFiniteLossError) as info:
        model.loss(out, np.full_like(s, np.inf), LossWeights())
    assert info.value.component == "mse"
    assert isinstance(info.value, NonFiniteError)


def test_state_roundtrip_exact(tmp_path):
    model = SkillModel(SMALL, seed=3)
    checkpoint.save(tmp_path / "m.ckpt", model.state())
    other = SkillModel(SMALL, seed=99)
    other.load_state(checkpoint.load(tmp_path / "m.ckpt"))
    for a, b in zip(model.parameters(), other.parameters()):
        assert a.name == b.name and a.data.tobytes() == b.data.tobytes()


def test_strict_load_rejects_mismatch():
    state = SkillModel(SMALL).state()
    with pytest.raises((KeyError, ValueError)):
        SkillModel(ModelConfig(**{**SMALL.__dict__, "K": 3})).load_state(state)


def test_heatmap_targets_follow_tools(episodes):
    cfg = ModelConfig(**{**SMALL.__dict__, "supervise_positions": True, "m": 1})
    b = VideoBatcher(episodes, cfg)
    plan = b.plan(0, "eval")
    hm = b.heatmaps(0, plan)
    assert hm.shape == (4, 8, 8)
    assert hm.max() <= 1.0 and hm.max() > 0.5
    mask = b.tool_mask(0, plan)
    assert mask.shape == hm.shape and mask.any()


def test_one_epoch_smoke(episodes):
    model = SkillModel(SMALL, seed=0)
    logs = train(model, episodes, SgdConfig(initial_lr=1e-3, epochs=1, method="adam"), seed=0)
    assert len(logs) == 1
    e = logs[0]
    assert all(np.isfinite(v) for v in (e.total, e.mse, e.exist, e.pos))
    assert e.line().startswith("epoch=0 ")


def test_training_deterministic(episodes):
    def run():
        model = SkillModel(SMALL, seed=5)
        train(model, episodes, SgdConfig(initial_lr=1e-3, epochs=2, method="adam"), seed=5)
        return checkpoint.dumps(model.state())

    assert run() == run()


def test_kmeans_init_places_centroids(episodes):
    cfg = ModelConfig(**{**SMALL.__dict__, "centroid_init": "kmeans"})
    model = SkillModel(cfg, seed=0)
    before = model.codebook.centroids.data.copy()
    train(model, episodes, SgdConfig(initial_lr=1e-9, epochs=1, method="sgd"), seed=0)
    assert not np.allclose(before, model.codebook.centroids.data, atol=1e-3)


def test_backward_failure_names_op(episodes):
    model = SkillModel(SMALL, seed=0)

    def broken(out, g):
        return (np.full_like(out.inputs[0].data, np.nan),)

    with override_derivative("tanh", broken):
        with pytest.raises(NonFiniteError) as info:
            train(model, episodes, SgdConfig(initial_lr=1e-3, epochs=1), seed=0)
    assert info.value.op == "tanh"


def test_cross_validate_with_oracle(episodes):
    res = cross_validate(episodes, "louo", SMALL, SgdConfig(),
                         predictor=lambda tr, te, f: [e.score for e in te])
    assert len(res) == 2
    assert all(r.corr == 1.0 and r.mae == 0.0 for r in res)


def test_predict_and_iou_ranges(episodes):
    model = SkillModel(SMALL, seed=0)
    preds = predict(model, episodes)
    assert preds.shape == (4,) and np.isfinite(preds).all()
    iou = group_tool_iou(model, episodes)
    assert 0.0 <= iou <= 1.0
