"""Early, late and intermediate fusion on top of the unimodal models."""
from __future__ import annotations

import copy
import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numcore as nc
from .models import make_model
from .models.base import Classifier, InferenceError
from .models.neural import NeuralClassifier, TrainConfig, _sigmoid, predict_logits, train_loop
from .preprocess.dataset import EncodedDataset

UNIMODAL = ("static", "labs", "meds", "text")


class FusionError(ValueError):
    pass


@dataclass
class FusedTabular:
    matrix: np.ndarray
    feature_names: list[str]


def _as_inputs(data) -> dict[str, np.ndarray]:
    return data.inputs() if isinstance(data, EncodedDataset) else data


def fuse_labs(labs: np.ndarray, skip_missing: bool = True) -> np.ndarray:
    """Time-mean per channel. With ``skip_missing`` the -1 sentinel cells are
    ignored and a channel never observed stays -1."""
    labs = np.asarray(labs, dtype=float)
    if not skip_missing:
        return labs.mean(axis=2)
    seen = labs != -1
    count = seen.sum(axis=2)
    total = np.where(seen, labs, 0.0).sum(axis=2)
    return np.where(count > 0, total / np.maximum(count, 1), -1.0)


def early_fuse(data, skip_missing: bool = True, meds: str = "mean") -> FusedTabular:
    """Static columns, then one time-averaged column per lab channel, then per
    medication group. Text is not used."""
    inputs = _as_inputs(data)
    if meds not in ("mean", "sum"):
        raise ValueError(f"meds aggregation must be 'mean' or 'sum', got {meds!r}")
    m = np.asarray(inputs["meds"], dtype=float)
    med_cols = m.mean(axis=2) if meds == "mean" else m.sum(axis=2)
    lab_cols = fuse_labs(inputs["labs"], skip_missing)
    if isinstance(data, EncodedDataset):
        v = data.vocab
        names = list(v.static_features) + [f"lab:{c}" for c in v.lab_channels] + [f"med:{g}" for g in v.med_groups]
    else:
        names = ([f"static:{i}" for i in range(inputs["static"].shape[1])]
                 + [f"lab:{i}" for i in range(lab_cols.shape[1])]
                 + [f"med:{i}" for i in range(med_cols.shape[1])])
    return FusedTabular(np.concatenate([inputs["static"], lab_cols, med_cols], axis=1), names)


class ModalityModel:
    """A unimodal classifier bound to one modality (or to the early-fused table)."""

    def __init__(self, modality: str, model: Classifier, ef_skip_missing: bool = True,
                 ef_meds: str = "mean"):
        if modality not in UNIMODAL + ("early",):
            raise FusionError(f"unknown modality {modality!r}")
        self.modality, self.model = modality, model
        self.ef_skip_missing, self.ef_meds = ef_skip_missing, ef_meds

    @property
    def kind(self) -> str:
        return self.model.kind

    def select(self, data) -> np.ndarray:
        inputs = _as_inputs(data)
        if self.modality == "early":
            return early_fuse(inputs, self.ef_skip_missing, self.ef_meds).matrix
        if self.modality not in inputs:
            raise InferenceError(f"inputs lack the {self.modality!r} modality")
        return inputs[self.modality]

    def fit(self, data, y, val_data=None, val_y=None) -> "ModalityModel":
        X = self.select(data)
        if isinstance(self.model, NeuralClassifier) and val_data is not None:
            self.model.fit(X, y, self.select(val_data), val_y)
        else:
            self.model.fit(X, y)
        return self

    def predict_proba(self, data) -> np.ndarray:
        return self.model.predict_proba(self.select(data))


class LateEnsemble:
    """Convex combination of member probabilities."""

    def __init__(self, members: list, weights):
        w = np.asarray(weights, dtype=float)
        if len(members) != len(w):
            raise FusionError("one weight per member is required")
        if (w < 0).any() or not np.isclose(w.sum(), 1.0, atol=1e-12):
            raise FusionError(f"weights must be non-negative and sum to 1, got {w}")
        self.members, self.weights = list(members), w

    def predict_proba(self, data) -> np.ndarray:
        probs = np.stack([m.predict_proba(data) for m in self.members])
        return self.weights @ probs


def late_weights(validation_auprcs) -> np.ndarray:
    a = np.asarray(validation_auprcs, dtype=float)
    if (a < 0).any() or not np.isfinite(a).all():
        raise FusionError(f"validation AUPRCs must be finite and non-negative, got {a}")
    if a.sum() == 0:
        warnings.warn("all validation AUPRCs are zero; using uniform late-fusion weights")
        return np.full(len(a), 1.0 / len(a))
    return a / a.sum()


def build_late(members: list, validation_auprcs) -> LateEnsemble:
    if len(members) < 2:
        raise FusionError("late fusion needs at least two members")
    return LateEnsemble(members, late_weights(validation_auprcs))


class IntermediateNet(nc.Module):
    """Decapitated donor encoders feeding a dense -> ReLU -> batchnorm -> dropout -> dense(1) head."""

    def __init__(self, encoders: dict[str, nc.Module], head_units: int = 64, dropout: float = 0.2,
                 seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.modalities = list(encoders)
        for m, enc in encoders.items():
            setattr(self, f"enc_{m}", enc)
        self.latent_dims = [enc.latent_dim for enc in encoders.values()]
        self.head_in = nc.Dense(sum(self.latent_dims), head_units, rng)
        self.head_bn = nc.BatchNorm(head_units)
        self.head_drop = nc.Dropout(dropout, seed + 1)
        self.head_out = nc.Dense(head_units, 1, rng)
        self.stage = "frozen"

    def encoder(self, m: str) -> nc.Module:
        return getattr(self, f"enc_{m}")

    def encoder_parameters(self) -> list:
        return [p for m in self.modalities for p in self.encoder(m).parameters()]

    def head_parameters(self) -> list:
        return [p for n, p in self.named_parameters() if n.startswith("head_")]

    def train(self, mode: bool = True):
        super().train(mode)
        if self.stage == "frozen":
            # frozen encoders run in inference mode: no dropout, no running-stat updates
            for m in self.modalities:
                self.encoder(m).train(False)
        return self

    def latents(self, inputs: dict) -> nc.Tensor:
        missing = [m for m in self.modalities if m not in inputs]
        if missing:
            raise InferenceError(f"inputs lack modalities {missing}")
        return nc.concat([self.encoder(m).encode(inputs[m]) for m in self.modalities], axis=1)

    def forward(self, inputs: dict) -> nc.Tensor:
        z = self.latents(inputs)
        return self.head_out(self.head_drop(self.head_bn(nc.relu(self.head_in(z)))))


def _state_hash(state: dict) -> str:
    h = hashlib.sha256()
    for k in sorted(state):
        h.update(k.encode())
        h.update(np.ascontiguousarray(state[k]).tobytes())
    return h.hexdigest()[:16]


class IntermediateModel:
    """Two-stage intermediate fusion classifier over the four modalities."""

    kind = "intermediate"

    def __init__(self, net: IntermediateNet, donors: dict[str, dict], hp: dict, seed: int):
        self.net, self.donors, self.hp, self.seed = net, donors, hp, seed
        self.history: dict = {}

    @property
    def stage(self) -> str:
        return self.net.stage

    def n_parameters(self) -> int:
        return self.net.n_parameters()

    def encoder_checksum(self) -> str:
        state = {}
        for m in self.net.modalities:
            for k, v in self.net.encoder(m).state_dict().items():
                state[f"{m}.{k}"] = v
        return _state_hash(state)

    def predict_proba(self, data) -> np.ndarray:
        inputs = _as_inputs(data)
        return _sigmoid(predict_logits(self.net, self.net.forward, {m: inputs[m] for m in self.net.modalities}))

    def fit(self, data, y, val_data, val_y, **kw) -> "IntermediateModel":
        return train_intermediate(self, data, y, val_data, val_y, **kw)

    def save(self, path) -> Path:
        path = Path(path)
        nc.checkpoint.save(path.with_suffix(".ckpt"), self.net.state_dict())
        meta = {"format": "mmpred.intermediate/1", "kind": self.kind, "hyperparameters": self.hp,
                "seed": self.seed, "stage": self.stage, "donors": self.donors,
                "modalities": list(self.net.modalities),
                "weights": path.with_suffix(".ckpt").name}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=float))
        return path.with_suffix(".json")

    @classmethod
    def load(cls, path) -> "IntermediateModel":
        path = Path(path).with_suffix(".json")
        meta = json.loads(path.read_text())
        encoders = {}
        for m in meta["modalities"]:
            d = meta["donors"][m]
            donor = make_model(d["kind"], seed=d["seed"], **d["hyperparameters"])
            donor.input_shape = tuple(d["input_shape"] or ())
            dummy = np.zeros((2, 1), dtype=np.int64) if donor.input_kind == "tokens" else np.zeros((2,) + donor.input_shape)
            encoders[m] = decapitate(donor.build(dummy))
        net = IntermediateNet(encoders, meta["hyperparameters"]["head_units"],
                              meta["hyperparameters"]["dropout"], meta["seed"])
        net.load_state_dict(nc.checkpoint.load(path.parent / meta["weights"]))
        net.stage = meta["stage"]
        net.eval()
        return cls(net, meta["donors"], meta["hyperparameters"], meta["seed"])


def decapitate(net: nc.Module) -> nc.Module:
    """Drop the output layer (and any pretraining head) from a donor network in place."""
    for name in ("out", "mlm"):
        if name in net._modules:
            del net._modules[name]
            object.__setattr__(net, name, None)
    return net


def build_intermediate(donors: dict[str, NeuralClassifier], head_units: int = 64,
                       dropout: float = 0.2, seed: int = 0,
                       modalities: tuple[str, ...] = UNIMODAL) -> IntermediateModel:
    """Reuse the fitted weights of one deep model per modality, minus its output layer.

    Donors are deep-copied so the unimodal models stay untouched.
    """
    missing = [m for m in modalities if m not in donors or donors[m] is None]
    if missing:
        raise FusionError(f"intermediate fusion needs a deep model for {missing}")
    encoders, meta = {}, {}
    for m in modalities:
        d = donors[m]
        if not isinstance(d, NeuralClassifier) or d.net is None:
            raise FusionError(f"{m}: donor must be a fitted deep model, got {type(d).__name__}")
        enc = decapitate(copy.deepcopy(d.net))
        enc.eval()
        encoders[m] = enc
        meta[m] = dict(d.metadata, state_hash=_state_hash(d.net.state_dict()))
    net = IntermediateNet(encoders, head_units, dropout, seed)
    return IntermediateModel(net, meta, {"head_units": head_units, "dropout": dropout}, seed)


def train_intermediate(model: IntermediateModel, data, y, val_data, val_y,
                       stage1: TrainConfig | dict | None = None,
                       stage2: TrainConfig | dict | None = None,
                       finetune: bool = True) -> IntermediateModel:
    """Stage 1 trains only the head with encoders frozen; stage 2 fine-tunes
    everything at a tenth of the stage-1 learning rate."""
    if model.stage != "frozen":
        raise FusionError("train_intermediate expects a model in the frozen stage")
    s1 = stage1 if isinstance(stage1, TrainConfig) else TrainConfig.from_hp(stage1 or {})
    if isinstance(stage2, TrainConfig):
        s2 = stage2
    else:
        s2 = TrainConfig.from_hp({"lr": s1.lr / 10, "batch_size": s1.batch_size,
                                  "max_epochs": s1.max_epochs, "patience": s1.patience,
                                  **(stage2 or {})})
    net = model.net
    X = {m: _as_inputs(data)[m] for m in net.modalities}
    Xv = {m: _as_inputs(val_data)[m] for m in net.modalities}
    enc_params = net.encoder_parameters()
    for p in enc_params:
        p.requires_grad = False
    try:
        h1 = train_loop(net, net.forward, net.head_parameters(), X, y, Xv, val_y, s1, seed=model.seed)
    finally:
        for p in enc_params:
            p.requires_grad = True
    model.history = {"stage1": h1}
    if finetune:
        net.stage = "finetuned"
        h2 = train_loop(net, net.forward, net.parameters(), X, y, Xv, val_y, s2, seed=model.seed + 1,
                        keep_initial=True)
        model.history["stage2"] = h2
    return model
