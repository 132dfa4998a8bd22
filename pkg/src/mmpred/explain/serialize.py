"""Flatten a multimodal sample into one float64 vector with sentinel markers.

Layout: Static, then Labs, Meds and Text, each segment separated by +inf.
Labs and Meds are written timestep-major (all channels of month 0, then
month 1, ...) with -inf between months; Text is written note by note with
-inf between notes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..preprocess.encode import MultimodalSample
from ..preprocess.tokenizer import PAD_ID

MODALITY_ORDER = ("static", "labs", "meds", "text")
MOD_SEP = np.inf
STEP_SEP = -np.inf
# value substituted for a hidden feature, per modality
IMPUTATION = {"static": 0.0, "labs": -1.0, "meds": 0.0, "text": float(PAD_ID)}


class SerializationError(ValueError):
    pass


@dataclass(frozen=True)
class Layout:
    """Shape descriptor of one serialized sample.

    ``coords`` gives (modality, channel, position) per non-sentinel entry:
    static features use (i, 0), lab/med cells (channel, month) and text
    tokens (note, token index).
    """

    n_static: int
    n_lab: int
    lab_months: int
    n_med: int
    med_months: int
    note_lengths: tuple[int, ...] = ()
    note_months: tuple[int, ...] = ()
    order: tuple[str, ...] = MODALITY_ORDER

    @classmethod
    def of(cls, sample: MultimodalSample) -> "Layout":
        labs, meds = np.atleast_2d(sample.labs), np.atleast_2d(sample.meds)
        return cls(len(sample.static), labs.shape[0], labs.shape[1], meds.shape[0], meds.shape[1],
                   tuple(len(n) for n in sample.notes), tuple(int(m) for m in sample.note_months))

    def _segments(self):
        """Per modality: list of blocks, each block a list of coords."""
        static = [[("static", i, 0) for i in range(self.n_static)]]
        labs = [[("labs", c, t) for c in range(self.n_lab)] for t in range(self.lab_months)]
        meds = [[("meds", c, t) for c in range(self.n_med)] for t in range(self.med_months)]
        text = [[("text", k, j) for j in range(n)] for k, n in enumerate(self.note_lengths)]
        return {"static": static, "labs": labs, "meds": meds, "text": text}

    @cached_property
    def _flat(self):
        entries: list = []  # coord tuple, or a sentinel float
        segs = self._segments()
        for mi, m in enumerate(self.order):
            if mi:
                entries.append(MOD_SEP)
            for bi, block in enumerate(segs[m]):
                if bi:
                    entries.append(STEP_SEP)
                entries.extend(block)
        return entries

    @property
    def size(self) -> int:
        return len(self._flat)

    @cached_property
    def feature_positions(self) -> np.ndarray:
        return np.array([i for i, e in enumerate(self._flat) if isinstance(e, tuple)], dtype=np.int64)

    @cached_property
    def coords(self) -> list[tuple[str, int, int]]:
        return [e for e in self._flat if isinstance(e, tuple)]

    @property
    def n_features(self) -> int:
        return len(self.feature_positions)

    @cached_property
    def sentinels(self) -> dict[int, float]:
        return {i: e for i, e in enumerate(self._flat) if not isinstance(e, tuple)}

    @cached_property
    def feature_modality(self) -> np.ndarray:
        return np.array([c[0] for c in self.coords], dtype=object)

    def modality_mask(self, modality: str) -> np.ndarray:
        return self.feature_modality == modality

    def imputation_vector(self) -> np.ndarray:
        """Replacement value of every feature under full masking."""
        return np.array([IMPUTATION[c[0]] for c in self.coords], dtype=np.float64)

    def feature_names(self, vocab=None, values=None) -> list[str]:
        """Readable names; with a cohort vocab the channel labels and token pieces are used."""
        names = []
        for i, (m, ch, pos) in enumerate(self.coords):
            if vocab is None:
                names.append(f"{m}[{ch},{pos}]")
            elif m == "static":
                names.append(f"static:{vocab.static_features[ch]}")
            elif m == "labs":
                names.append(f"labs:{vocab.lab_channels[ch]}@m{pos}")
            elif m == "meds":
                names.append(f"meds:{vocab.med_groups[ch]}@m{pos}")
            else:
                piece = "?" if values is None else vocab.tokenizer.vocab[int(values[i])]
                names.append(f"text:note{ch}#{pos}:{piece}")
        return names


@dataclass
class SerializedSample:
    vector: np.ndarray
    layout: Layout
    label: int = 0

    @property
    def features(self) -> np.ndarray:
        """The non-sentinel entries, in layout order."""
        return self.vector[self.layout.feature_positions]


def serialize(sample: MultimodalSample) -> SerializedSample:
    layout = Layout.of(sample)
    labs, meds = np.atleast_2d(np.asarray(sample.labs, float)), np.atleast_2d(np.asarray(sample.meds, float))
    parts = {
        "static": np.asarray(sample.static, dtype=np.float64),
        "labs": labs.T.ravel(),  # timestep-major
        "meds": meds.T.ravel(),
        "text": np.array([t for note in sample.notes for t in note], dtype=np.float64),
    }
    for m, v in parts.items():
        if not np.all(np.isfinite(v)):
            raise SerializationError(f"non-finite value in {m}; it would collide with a sentinel")
    values = np.concatenate([parts[m] for m in layout.order])
    vec = np.empty(layout.size, dtype=np.float64)
    vec[layout.feature_positions] = values
    for i, s in layout.sentinels.items():
        vec[i] = s
    return SerializedSample(vec, layout, int(sample.label))


def deserialize(ser: SerializedSample) -> MultimodalSample:
    lay, vec = ser.layout, np.asarray(ser.vector, dtype=np.float64)
    if vec.shape != (lay.size,):
        raise SerializationError(f"vector length {vec.shape} does not match layout size {lay.size}")
    for i, s in lay.sentinels.items():
        if vec[i] != s:
            raise SerializationError(f"expected sentinel {s} at position {i}, found {vec[i]}")
    vals = vec[lay.feature_positions]
    if not np.all(np.isfinite(vals)):
        raise SerializationError("sentinel value found at a feature position")
    o1 = lay.n_static
    o2 = o1 + lay.n_lab * lay.lab_months
    o3 = o2 + lay.n_med * lay.med_months
    static = vals[:o1].copy()
    labs = vals[o1:o2].reshape(lay.lab_months, lay.n_lab).T.copy()
    meds = vals[o2:o3].reshape(lay.med_months, lay.n_med).T.copy()
    tok = vals[o3:]
    if np.any(tok != np.round(tok)):
        raise SerializationError("text positions must hold integer token ids")
    notes, off = [], 0
    for n in lay.note_lengths:
        notes.append([int(t) for t in tok[off : off + n]])
        off += n
    return MultimodalSample(static, labs, meds, notes, list(lay.note_months), ser.label)
