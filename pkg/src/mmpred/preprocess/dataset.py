"""Encoded cohort container and its on-disk format."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ..synthgen import RawPatient
from .encode import CohortVocab, MultimodalSample, build_vocab, encode_patient, stream_matrix

MODALITIES = ("static", "labs", "meds", "text")
FORMAT_TAG = "mmpred.dataset/1"


@dataclass
class EncodedDataset:
    static: np.ndarray  # [n, d]
    labs: np.ndarray  # [n, C, T]
    meds: np.ndarray  # [n, G, T]
    notes: list[list[list[int]]]
    note_months: list[list[int]]
    labels: np.ndarray  # [n] int
    patient_ids: list[str]
    vocab: CohortVocab
    max_tokens: int = 512

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def from_samples(cls, samples: list[MultimodalSample], vocab: CohortVocab,
                     patient_ids: list[str] | None = None, max_tokens: int = 512) -> "EncodedDataset":
        n = len(samples)
        return cls(
            static=np.array([s.static for s in samples]).reshape(n, len(vocab.static_features)),
            labs=np.array([s.labs for s in samples]).reshape(n, len(vocab.lab_channels), vocab.months),
            meds=np.array([s.meds for s in samples]).reshape(n, len(vocab.med_groups), vocab.months),
            notes=[list(s.notes) for s in samples],
            note_months=[list(s.note_months) for s in samples],
            labels=np.array([s.label for s in samples], dtype=np.int64),
            patient_ids=patient_ids or [f"S{i:06d}" for i in range(n)],
            vocab=vocab, max_tokens=max_tokens,
        )

    def sample(self, i: int) -> MultimodalSample:
        return MultimodalSample(self.static[i].copy(), self.labs[i].copy(), self.meds[i].copy(),
                                [list(n) for n in self.notes[i]], list(self.note_months[i]),
                                int(self.labels[i]))

    def subset(self, idx) -> "EncodedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return EncodedDataset(
            self.static[idx], self.labs[idx], self.meds[idx],
            [self.notes[i] for i in idx], [self.note_months[i] for i in idx],
            self.labels[idx], [self.patient_ids[i] for i in idx], self.vocab, self.max_tokens,
        )

    def inputs(self) -> dict[str, np.ndarray]:
        """Model-ready arrays keyed by modality; text is a PAD-filled token matrix."""
        return {
            "static": self.static,
            "labs": self.labs,
            "meds": self.meds,
            "text": stream_matrix(self.notes, self.max_tokens),
        }

    def schema(self) -> dict:
        return {"format": FORMAT_TAG, "vocab": self.vocab.to_dict(), "max_tokens": self.max_tokens}

    def schema_hash(self) -> str:
        blob = json.dumps(self.schema(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def save(self, path) -> None:
        lengths = [len(note) for pn in self.notes for note in pn]
        flat = [t for pn in self.notes for note in pn for t in note]
        with open(path, "wb") as fh:
            np.savez(
                fh,
                schema=np.array(json.dumps(self.schema(), sort_keys=True)),
                static=self.static, labs=self.labs, meds=self.meds, labels=self.labels,
                patient_ids=np.array(self.patient_ids),
                notes_per_patient=np.array([len(pn) for pn in self.notes], dtype=np.int64),
                note_lengths=np.array(lengths, dtype=np.int64),
                note_tokens=np.array(flat, dtype=np.int64),
                note_months=np.array([m for pm in self.note_months for m in pm], dtype=np.int64),
            )

    @classmethod
    def load(cls, path) -> "EncodedDataset":
        with np.load(path, allow_pickle=False) as z:
            schema = json.loads(str(z["schema"]))
            if schema.get("format") != FORMAT_TAG:
                raise ValueError(f"{path}: not an encoded dataset ({schema.get('format')!r})")
            per, lengths = z["notes_per_patient"], z["note_lengths"]
            tokens, months = z["note_tokens"], z["note_months"]
            notes, note_months = [], []
            t_off = n_off = 0
            for k in per:
                pn, pm = [], []
                for j in range(n_off, n_off + k):
                    pn.append(tokens[t_off : t_off + lengths[j]].tolist())
                    t_off += lengths[j]
                    pm.append(int(months[j]))
                n_off += k
                notes.append(pn)
                note_months.append(pm)
            return cls(z["static"], z["labs"], z["meds"], notes, note_months, z["labels"],
                       [str(s) for s in z["patient_ids"]], CohortVocab.from_dict(schema["vocab"]),
                       schema["max_tokens"])


class Preprocessor:
    """Fit vocabularies on development patients, then encode any patient."""

    def __init__(self, months: int = 6, max_notes: int = 20, atc_prefix_len: int = 4,
                 tokenizer_vocab_size: int = 1000, max_tokens: int = 512):
        self.months, self.max_notes, self.atc_prefix_len = months, max_notes, atc_prefix_len
        self.tokenizer_vocab_size, self.max_tokens = tokenizer_vocab_size, max_tokens
        self.vocab: CohortVocab | None = None

    def fit(self, dev_patients: list[RawPatient]) -> "Preprocessor":
        self.vocab = build_vocab(dev_patients, self.months, self.max_notes,
                                 self.atc_prefix_len, self.tokenizer_vocab_size)
        return self

    def transform(self, patients: list[RawPatient], censor: bool = False) -> EncodedDataset:
        if self.vocab is None:
            raise RuntimeError("Preprocessor.fit must be called before transform")
        samples = [encode_patient(p, self.vocab, censor=censor) for p in patients]
        return EncodedDataset.from_samples(samples, self.vocab, [p.patient_id for p in patients],
                                           self.max_tokens)
