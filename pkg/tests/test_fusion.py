import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmpred.fusion import (
    FusionError, IntermediateModel, LateEnsemble, ModalityModel, build_intermediate, build_late,
    early_fuse, fuse_labs, late_weights, train_intermediate,
)
from mmpred.models import make_model
from mmpred.models.base import InferenceError

SMALL_TEXT = dict(dim=8, n_heads=2, ff_dim=16, n_blocks=1, max_len=16, n_tokens=30)


def _inputs(n=80, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    labs = rng.normal(5, 1, size=(n, 3, 6))
    labs[rng.random(labs.shape) < 0.3] = -1
    labs[y == 1, 0, 3:] += 2
    tok = rng.integers(4, 29, size=(n, 12))
    tok[:, 9:] = 0
    tok[y == 1, 0] = 29
    return {
        "static": (rng.random((n, 4)) < 0.5).astype(float),
        "labs": labs,
        "meds": rng.poisson(1.0, size=(n, 2, 6)).astype(float),
        "text": tok,
    }, y


def test_fuse_labs_examples():
    labs = np.array([[[-1, 6.0, -1, -1, -1, -1], [-1] * 6, [1, 2, 3, 4, 5, 6]]], dtype=float)
    np.testing.assert_array_equal(fuse_labs(labs), [[6.0, -1.0, 3.5]])
    np.testing.assert_allclose(fuse_labs(labs, skip_missing=False)[0, 0], (6.0 - 5) / 6)


def test_early_fuse_layout():
    inp, _ = _inputs()
    inp["meds"][0, 0] = [3, 0, 0, 0, 0, 0]
    ft = early_fuse(inp)
    assert ft.matrix.shape == (80, 4 + 3 + 2)
    assert ft.matrix[0, 7] == 0.5
    assert early_fuse(inp, meds="sum").matrix[0, 7] == 3
    np.testing.assert_array_equal(ft.matrix[:, :4], inp["static"])
    assert ft.feature_names[4].startswith("lab:") and ft.feature_names[-1].startswith("med:")
    # text never enters the fused table
    inp2 = dict(inp, text=inp["text"] * 0)
    np.testing.assert_array_equal(early_fuse(inp2).matrix, ft.matrix)


def test_late_weights_examples():
    np.testing.assert_allclose(late_weights([0.5, 0.25, 0.25]), [0.5, 0.25, 0.25])
    with pytest.warns(UserWarning):
        np.testing.assert_allclose(late_weights([0, 0, 0]), [1 / 3] * 3)
    with pytest.raises(FusionError):
        late_weights([0.5, -0.1])


class _Const:
    def __init__(self, p):
        self.p = np.asarray(p, dtype=float)

    def predict_proba(self, data):
        return self.p


def test_late_combination():
    ens = LateEnsemble([_Const([1.0]), _Const([0.0])], [0.7, 0.3])
    assert ens.predict_proba(None)[0] == pytest.approx(0.7)
    dom = build_late([_Const([0.2, 0.9]), _Const([0.8, 0.1])], [0.9, 0.0])
    np.testing.assert_array_equal(dom.predict_proba(None), [0.2, 0.9])
    with pytest.raises(FusionError):
        build_late([_Const([0.1])], [1.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=5).flatmap(
    lambda a: st.tuples(st.just(a), st.lists(st.lists(st.floats(0, 1), min_size=3, max_size=3),
                                             min_size=len(a), max_size=len(a)))))
def test_late_bounds_property(args):
    auprcs, probs = args
    if sum(auprcs) == 0:
        auprcs = [1.0] * len(auprcs)
    ens = build_late([_Const(p) for p in probs], auprcs)
    assert abs(ens.weights.sum() - 1) <= 1e-12
    out = ens.predict_proba(None)
    P = np.array(probs)
    assert (out >= P.min(axis=0) - 1e-12).all() and (out <= P.max(axis=0) + 1e-12).all()


def test_modality_model_routes_inputs():
    inp, y = _inputs()
    ef = ModalityModel("early", make_model("logreg")).fit(inp, y)
    assert ef.model.input_shape == (9,)
    st_ = ModalityModel("static", make_model("logreg")).fit(inp, y)
    with pytest.raises(InferenceError):
        st_.predict_proba({"labs": inp["labs"]})
    with pytest.raises(FusionError):
        ModalityModel("audio", make_model("logreg"))


@pytest.fixture(scope="module")
def donors():
    inp, y = _inputs()
    fast = dict(max_epochs=5, patience=5)
    return {
        "static": make_model("mlp", units_multiplier=2, **fast).fit(inp["static"], y),
        "labs": make_model("gru_rnn", units_multiplier=2, **fast).fit(inp["labs"], y),
        "meds": make_model("gru_rnn", units_multiplier=3, **fast).fit(inp["meds"], y),
        "text": make_model("text_encoder", **SMALL_TEXT, **fast).fit(inp["text"], y),
    }


def test_build_intermediate_dims(donors):
    im = build_intermediate(donors, head_units=16, seed=0)
    assert im.net.latent_dims == [8, 6, 6, 8]
    assert im.net.head_in.in_dim == 28
    heads = ("out.", "mlm.")
    enc_params = sum(p.size for d in donors.values() for n, p in d.net.named_parameters()
                     if not n.startswith(heads))
    head = sum(p.size for p in im.net.head_parameters())
    assert im.n_parameters() == enc_params + head
    # the donor MLP keeps dense + batchnorm + dropout; only the output layer is unused
    assert im.net.encoder("static").dense.out_dim == 8
    with pytest.raises(FusionError):
        build_intermediate({k: v for k, v in donors.items() if k != "text"})


def test_build_intermediate_latent_dims_example():
    class FakeNet:
        def __init__(self, d):
            self.latent_dim = d
    from mmpred.fusion import IntermediateNet
    import mmpred.numcore as nc
    encs = {}
    for m, d in zip(("static", "labs", "meds", "text"), (10, 12, 12, 64)):
        mod = nc.Module()
        object.__setattr__(mod, "latent_dim", d)
        encs[m] = mod
    assert IntermediateNet(encs).head_in.in_dim == 98


def test_donors_untouched_and_freezing(donors):
    inp, y = _inputs(seed=1)
    vinp, vy = _inputs(40, seed=2)
    before = {m: d.net.state_dict() for m, d in donors.items()}
    im = build_intermediate(donors, head_units=8, seed=0)
    checksum = im.encoder_checksum()
    train_intermediate(im, inp, y, vinp, vy, stage1=dict(max_epochs=4, patience=4), finetune=False)
    assert im.encoder_checksum() == checksum
    assert im.stage == "frozen"
    p = im.predict_proba(inp)
    assert np.isfinite(p).all()
    im2 = build_intermediate(donors, head_units=8, seed=0)
    train_intermediate(im2, inp, y, vinp, vy, stage1=dict(max_epochs=3, patience=3),
                       stage2=dict(max_epochs=3, patience=3))
    assert im2.stage == "finetuned"
    assert im2.history["stage2"]["best_val_auprc"] >= im2.history["stage1"]["best_val_auprc"] - 1e-12
    for m, d in donors.items():
        for k, v in d.net.state_dict().items():
            np.testing.assert_array_equal(v, before[m][k])
    with pytest.raises(FusionError):
        train_intermediate(im2, inp, y, vinp, vy)


def test_head_init_only_varies_outputs(donors):
    inp, _ = _inputs()
    a = build_intermediate(donors, seed=0).predict_proba(inp)
    b = build_intermediate(donors, seed=0).predict_proba(inp)
    c = build_intermediate(donors, seed=1).predict_proba(inp)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_intermediate_save_load(donors, tmp_path):
    inp, y = _inputs()
    im = build_intermediate(donors, head_units=8, seed=0)
    train_intermediate(im, inp, y, inp, y, stage1=dict(max_epochs=2), stage2=dict(max_epochs=2))
    im.save(tmp_path / "if")
    back = IntermediateModel.load(tmp_path / "if")
    np.testing.assert_array_equal(back.predict_proba(inp), im.predict_proba(inp))
    assert back.stage == "finetuned" and set(back.donors["text"]) >= {"kind", "state_hash"}
