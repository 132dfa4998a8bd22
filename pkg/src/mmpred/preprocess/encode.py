"""Encoding of raw patients into the four fixed modalities."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from ..synthgen import RawPatient
from .censor import censor_text
from .tokenizer import PAD_ID, SEP_ID, WordPieceTokenizer

UNKNOWN = "<unknown>"
GENDERS = ("female", "male", "other")
AGE_GROUPS = ("youth", "adult", "senior")
_ICD10 = re.compile(r"^[A-Z]\d{2}(\.[0-9A-Z]{1,4})?$")


class EncodingError(ValueError):
    pass


def aggregate_icd10(code: str) -> str:
    """Collapse non-neoplasm codes to their 3-character category.

    Neoplasm codes (chapter C00-D48: any 'C' code, or 'D00'-'D48') are kept
    at full detail.
    """
    if not isinstance(code, str) or not _ICD10.match(code):
        raise EncodingError(f"malformed ICD-10 code: {code!r}")
    if code[0] == "C" or (code[0] == "D" and int(code[1:3]) <= 48):
        return code
    return code[:3]


def age_group(birth_year: int, window_start_year: int) -> str:
    if window_start_year < birth_year:
        raise EncodingError(f"window start {window_start_year} precedes birth year {birth_year}")
    age = window_start_year - birth_year
    if age < 25:
        return "youth"
    if age <= 64:
        return "adult"
    return "senior"


def encode_age(birth_year: int, window_start_year: int) -> np.ndarray:
    """One-hot over (youth, adult, senior)."""
    out = np.zeros(3)
    out[AGE_GROUPS.index(age_group(birth_year, window_start_year))] = 1.0
    return out


@dataclass
class CohortVocab:
    """Everything an encoder needs that is learned from the development set."""

    static_features: list[str]
    lab_channels: list[str]
    med_groups: list[str]
    tokenizer: WordPieceTokenizer
    months: int = 6
    max_notes: int = 20
    atc_prefix_len: int = 4

    def __post_init__(self):
        self._static_index = {f: i for i, f in enumerate(self.static_features)}
        self._lab_index = {c: i for i, c in enumerate(self.lab_channels)}
        self._med_index = {g: i for i, g in enumerate(self.med_groups)}

    def to_dict(self) -> dict:
        return {
            "static_features": self.static_features, "lab_channels": self.lab_channels,
            "med_groups": self.med_groups, "tokenizer_vocab": self.tokenizer.vocab,
            "months": self.months, "max_notes": self.max_notes,
            "atc_prefix_len": self.atc_prefix_len,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CohortVocab":
        return cls(d["static_features"], d["lab_channels"], d["med_groups"],
                   WordPieceTokenizer(d["tokenizer_vocab"]), d["months"], d["max_notes"],
                   d["atc_prefix_len"])

    def sizes(self) -> tuple[int, ...]:
        return (len(self.static_features), len(self.lab_channels), len(self.med_groups),
                len(self.tokenizer))


@dataclass
class MultimodalSample:
    static: np.ndarray  # [d] binary
    labs: np.ndarray  # [n_lab_channels, months], -1 = not measured
    meds: np.ndarray  # [n_med_groups, months] counts
    notes: list[list[int]]  # token ids per note, oldest first
    note_months: list[int] = field(default_factory=list)
    label: int = 0


def build_vocab(dev_patients: list[RawPatient], months: int = 6, max_notes: int = 20,
                atc_prefix_len: int = 4, tokenizer_vocab_size: int = 1000,
                censor: bool = False) -> CohortVocab:
    """Build cohort vocabularies from development patients only.

    Lab channels never observed inside the input window are dropped.
    """
    dx, labs, meds, corpus = set(), set(), set(), []
    for p in dev_patients:
        dx.update(aggregate_icd10(c) for m, c in p.diagnosis_events if m <= months)
        labs.update(c for m, c, _ in p.lab_events if m <= months)
        meds.update(c[:atc_prefix_len] for m, c in p.med_events if m <= months)
        corpus.extend(censor_text(t) if censor else t for _, _, t in _window_notes(p, months, max_notes))
    static = [f"gender:{g}" for g in GENDERS] + [f"age:{a}" for a in AGE_GROUPS]
    static += [f"dx:{c}" for c in dx] + [f"dx:{UNKNOWN}"]
    return CohortVocab(
        static_features=sorted(static),
        lab_channels=sorted(labs) + [UNKNOWN],
        med_groups=sorted(meds) + [UNKNOWN],
        tokenizer=WordPieceTokenizer.train(corpus, tokenizer_vocab_size),
        months=months, max_notes=max_notes, atc_prefix_len=atc_prefix_len,
    )


def _window_notes(p: RawPatient, months: int, max_notes: int):
    notes = sorted((n for n in p.notes if 1 <= n[0] <= months), key=lambda n: (n[0], n[1]))
    return notes[-max_notes:]


def encode_patient(p: RawPatient, vocab: CohortVocab, censor: bool = False) -> MultimodalSample:
    """Encode one patient using only events from months 1..vocab.months."""
    T = vocab.months
    static = np.zeros(len(vocab.static_features))
    static[vocab._static_index[f"gender:{p.gender}"]] = 1.0
    static[vocab._static_index[f"age:{age_group(p.birth_year, p.window_start_year)}"]] = 1.0
    for month, code in p.diagnosis_events:
        if 1 <= month <= T:
            name = f"dx:{aggregate_icd10(code)}"
            static[vocab._static_index.get(name, vocab._static_index[f"dx:{UNKNOWN}"])] = 1.0

    sums = np.zeros((len(vocab.lab_channels), T))
    counts = np.zeros((len(vocab.lab_channels), T))
    unk_lab = vocab._lab_index[UNKNOWN]
    for month, channel, value in p.lab_events:
        if 1 <= month <= T:
            row = vocab._lab_index.get(channel, unk_lab)
            sums[row, month - 1] += value
            counts[row, month - 1] += 1
    labs = np.full(sums.shape, -1.0)
    seen = counts > 0
    labs[seen] = sums[seen] / counts[seen]

    meds = np.zeros((len(vocab.med_groups), T))
    unk_med = vocab._med_index[UNKNOWN]
    for month, code in p.med_events:
        if 1 <= month <= T:
            meds[vocab._med_index.get(code[: vocab.atc_prefix_len], unk_med), month - 1] += 1

    window = _window_notes(p, T, vocab.max_notes)
    notes, note_months = [], []
    for month, _, text in window:
        notes.append(vocab.tokenizer.tokenize(censor_text(text) if censor else text))
        note_months.append(month)
    return MultimodalSample(static, labs, meds, notes, note_months, p.y)


def token_stream(notes: list[list[int]], max_tokens: int) -> list[int]:
    """Concatenate notes oldest to newest with [SEP] between, keeping the newest tokens."""
    stream: list[int] = []
    for i, note in enumerate(notes):
        if i:
            stream.append(SEP_ID)
        stream.extend(note)
    return stream[-max_tokens:] if max_tokens else stream


def stream_matrix(all_notes: list[list[list[int]]], max_tokens: int) -> np.ndarray:
    streams = [token_stream(n, max_tokens) for n in all_notes]
    width = max(1, max((len(s) for s in streams), default=1))
    out = np.full((len(streams), width), PAD_ID, dtype=np.int64)
    for i, s in enumerate(streams):
        out[i, : len(s)] = s
    return out
