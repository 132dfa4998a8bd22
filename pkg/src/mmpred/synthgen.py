"""Reproducible synthetic EHR cohorts with planted, per-modality signal.

A cohort is a list of :class:`RawPatient` records covering seven monthly
windows. Month 7 holds the outcome event (a C77-C79 code for positives) and is
never used as model input. Labels are fixed first, then every modality is
drawn conditionally on the label through :class:`SignalPlan`; with an empty
plan the features are independent of the label.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


class ConfigError(ValueError):
    """Invalid generator configuration."""


@dataclass
class XorPlan:
    """Cross-modal XOR signal: label = lab_flag XOR text_flag.

    Each flag is a fair coin independent of the label, so neither modality
    alone carries information about the outcome.
    """

    lab_channel: int = 0
    lab_shift: float = 3.0
    text_token: str = "zorvex"


@dataclass
class SignalPlan:
    lab_effect: list[float] = field(default_factory=list)
    lab_effect_months: tuple[int, ...] = (4, 5, 6)
    med_effect: list[float] = field(default_factory=list)
    static_effect: dict[str, float] = field(default_factory=dict)
    text_effect: dict[str, float] = field(default_factory=dict)
    explicit_metastasis_token_prob: float = 0.0
    xor: XorPlan | None = None

    def validate(self) -> None:
        for name in ("lab_effect", "med_effect"):
            vals = getattr(self, name)
            if not all(math.isfinite(v) for v in vals):
                raise ConfigError(f"signal.{name} must be finite, got {vals}")
        if any(v < 0 for v in self.med_effect):
            raise ConfigError("signal.med_effect multipliers must be >= 0")
        for code, odds in self.static_effect.items():
            if not (math.isfinite(odds) and odds > 0):
                raise ConfigError(f"signal.static_effect[{code}] odds ratio must be finite and > 0")
        for tok, p in self.text_effect.items():
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"signal.text_effect[{tok}] probability must lie in [0, 1]")
        if not 0.0 <= self.explicit_metastasis_token_prob <= 1.0:
            raise ConfigError("signal.explicit_metastasis_token_prob must lie in [0, 1]")
        if any(not 1 <= m <= 6 for m in self.lab_effect_months):
            raise ConfigError("signal.lab_effect_months must lie in 1..6")


@dataclass
class Demographics:
    gender: dict[str, float] = field(
        default_factory=lambda: {"female": 0.5, "male": 0.5, "other": 0.0})
    age_group: dict[str, float] = field(
        default_factory=lambda: {"youth": 0.02, "adult": 0.40, "senior": 0.58})


@dataclass
class GeneratorConfig:
    n_patients: int = 200
    positive_fraction: float = 0.3
    seed: int = 0
    signal: SignalPlan = field(default_factory=SignalPlan)
    n_lab_channels: int = 8
    n_med_channels: int = 12
    vocab_size: int = 300
    notes_per_patient_range: tuple[int, int] = (4, 10)
    months: int = 7
    cancer_code: str = "C50"
    demographics: Demographics = field(default_factory=Demographics)
    lab_observation_prob: float = 0.6
    patient_lab_sd: float = 0.5
    comorbidity_rate: float = 0.15

    def validate(self) -> None:
        if self.n_patients < 20:
            raise ConfigError(f"n_patients must be >= 20, got {self.n_patients}")
        if not 0.0 < self.positive_fraction < 1.0:
            raise ConfigError(f"positive_fraction must lie in (0, 1), got {self.positive_fraction}")
        n_pos = _n_positive(self.n_patients, self.positive_fraction)
        if n_pos == 0 or n_pos == self.n_patients:
            raise ConfigError("positive_fraction leaves a class empty for this n_patients")
        if self.months < 7:
            raise ConfigError(f"months must be >= 7, got {self.months}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.n_lab_channels < 1 or self.n_med_channels < 1:
            raise ConfigError("n_lab_channels and n_med_channels must be >= 1")
        if self.n_med_channels > len(ATC_CODES):
            raise ConfigError(f"n_med_channels must be <= {len(ATC_CODES)}")
        lo, hi = self.notes_per_patient_range
        if not 1 <= lo <= hi:
            raise ConfigError("notes_per_patient_range must satisfy 1 <= min <= max")
        if self.vocab_size < len(BASE_WORDS):
            raise ConfigError(f"vocab_size must be >= {len(BASE_WORDS)}")
        if len(self.signal.lab_effect) > self.n_lab_channels:
            raise ConfigError("signal.lab_effect has more entries than n_lab_channels")
        if len(self.signal.med_effect) > self.n_med_channels:
            raise ConfigError("signal.med_effect has more entries than n_med_channels")
        if self.signal.xor and not 0 <= self.signal.xor.lab_channel < self.n_lab_channels:
            raise ConfigError("signal.xor.lab_channel out of range")
        if not 0.0 < self.lab_observation_prob <= 1.0:
            raise ConfigError("lab_observation_prob must lie in (0, 1]")
        self.signal.validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        sig = dict(d.pop("signal", {}) or {})
        if sig.get("xor"):
            sig["xor"] = XorPlan(**sig["xor"])
        if "lab_effect_months" in sig:
            sig["lab_effect_months"] = tuple(sig["lab_effect_months"])
        demo = d.pop("demographics", None)
        if "notes_per_patient_range" in d:
            d["notes_per_patient_range"] = tuple(d["notes_per_patient_range"])
        cfg = cls(**d, signal=SignalPlan(**sig))
        if demo:
            cfg.demographics = Demographics(**demo)
        return cfg


@dataclass
class RawPatient:
    patient_id: str
    gender: str
    birth_year: int
    window_start_year: int
    diagnosis_events: list[tuple[int, str]]
    lab_events: list[tuple[int, str, float]]
    med_events: list[tuple[int, str]]
    notes: list[tuple[int, int, str]]
    label: str

    @property
    def y(self) -> int:
        return int(self.label == "positive")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "RawPatient":
        d = json.loads(line)
        return cls(
            patient_id=d["patient_id"], gender=d["gender"], birth_year=d["birth_year"],
            window_start_year=d["window_start_year"],
            diagnosis_events=[tuple(e) for e in d["diagnosis_events"]],
            lab_events=[(int(m), c, float(v)) for m, c, v in d["lab_events"]],
            med_events=[tuple(e) for e in d["med_events"]],
            notes=[(int(m), int(o), t) for m, o, t in d["notes"]],
            label=d["label"],
        )


# -- closed vocabularies -----------------------------------------------------------

COMORBIDITY_CODES = [
    "I10", "I25.1", "I48.0", "E11.9", "E11.65", "E78.5", "J44.1", "J45.9", "K21.0",
    "K57.3", "N18.3", "F32.1", "M81.0", "D12.6", "D50.9", "G47.3", "R53.8", "Z51.1",
]
METASTASIS_CODES = ["C77.3", "C77.9", "C78.0", "C78.7", "C79.5", "C79.8"]
ATC_CODES = [
    "L01XA01", "L01XC02", "L01XE03", "L02BA01", "C09AA05", "C09CA01", "A02BC01",
    "A02BC02", "N02BE01", "N02AA01", "B01AC06", "B01AB01", "H02AB06", "J01CA04",
    "J01MA02", "R03AC02", "A10BA02", "C07AB02", "C10AA05", "N05BA01",
]

BASE_WORDS = """patient stable today reports mild moderate severe pain fatigue nausea appetite
weight loss gain sleep cough dyspnea fever chills headache dizziness reviewed plan follow up
continue treatment therapy chemotherapy radiotherapy surgery dose tolerated well poorly labs
imaging scan ultrasound biopsy result normal abnormal unchanged improved worsened noted
discussed family nurse doctor ward clinic discharge admitted visit week month next call
examination unremarkable tender swelling wound healing infection medication prescribed
reduced increased blood pressure heart lung liver kidney bone skin lymph node breast colon
prostate tumor mass small large left right side shows without with and the of in at on for
is was no signs further evaluation""".split()

SENTENCE_TEMPLATES = [
    "Patient {adj} today.",
    "Patient reports {sym} and {sym}.",
    "Plan {act} next {time}.",
    "Labs {state}.",
    "{Organ} {state} on imaging.",
    "Treatment tolerated {how}.",
    "Discussed {act} with family.",
    "Noted {filler} {filler} {sym}.",
    "Continue {act} and follow up.",
]
_SLOTS = {
    "adj": "stable mild unchanged improved worsened".split(),
    "sym": "pain fatigue nausea cough dyspnea fever chills headache dizziness swelling".split(),
    "act": "chemotherapy radiotherapy surgery treatment therapy imaging biopsy evaluation".split(),
    "time": "week month visit".split(),
    "state": "normal abnormal unchanged improved worsened unremarkable".split(),
    "Organ": "Heart Lung Liver Kidney Bone Skin Breast Colon Prostate".split(),
    "how": "well poorly".split(),
}
EXPLICIT_METASTASIS_SENTENCES = [
    "Suspected metastasis in liver.",
    "Staging T2 N1 M1 discussed.",
    "Findings consistent with metastases to bone.",
    "Known metastasis to lymph nodes noted.",
]
_SYLLABLES = "ka lo mi ne ru ta si po ve da fe gu hi jo li mo nu pe ra so tu".split()


def word_list(vocab_size: int) -> list[str]:
    """Closed word list: the base clinical words plus pronounceable fillers."""
    words = list(dict.fromkeys(BASE_WORDS))
    rng = np.random.default_rng(90210)
    seen = set(words)
    while len(words) < vocab_size:
        n = int(rng.integers(2, 5))
        w = "".join(rng.choice(_SYLLABLES, size=n))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words[:vocab_size]


def lab_channel_ids(n: int) -> list[str]:
    return [f"NPU{10021 + 137 * i:05d}" for i in range(n)]


# -- helpers -------------------------------------------------------------------------

def _n_positive(n: int, frac: float) -> int:
    return int(math.floor(n * frac + 0.5))


def _allocate(n: int, probs: dict[str, float]) -> list[str]:
    """Exact category counts by largest remainder."""
    names = list(probs)
    p = np.array([probs[k] for k in names], dtype=float)
    p = p / p.sum()
    raw = p * n
    counts = np.floor(raw).astype(int)
    rem = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:rem]] += 1
    out = []
    for name, c in zip(names, counts):
        out.extend([name] * int(c))
    return out


def _age_for_group(rng, group: str) -> int:
    lo, hi = {"youth": (18, 24), "adult": (25, 64), "senior": (65, 90)}[group]
    return int(rng.integers(lo, hi + 1))


def _sentence(rng, words: list[str]) -> str:
    tpl = SENTENCE_TEMPLATES[int(rng.integers(len(SENTENCE_TEMPLATES)))]
    fillers = words[len(BASE_WORDS):] or BASE_WORDS
    out = tpl
    while "{" in out:
        start = out.index("{")
        end = out.index("}", start)
        slot = out[start + 1 : end]
        choices = fillers if slot == "filler" else _SLOTS[slot]
        out = out[:start] + choices[int(rng.integers(len(choices)))] + out[end + 1 :]
    return out


def _patient(rng, idx: int, label: int, cfg: GeneratorConfig, gender: str, age_group: str,
             channel_mu: np.ndarray, med_rates: np.ndarray, words: list[str],
             xor_lab_flag: int | None) -> RawPatient:
    sig = cfg.signal
    last = cfg.months
    window_start = int(rng.integers(2006, 2014))
    birth_year = window_start - _age_for_group(rng, age_group)

    # diagnoses: primary cancer in month 1, comorbidities in months 1..last-1
    dx = [(1, f"{cfg.cancer_code}.{int(rng.integers(0, 10))}")]
    base_odds = cfg.comorbidity_rate / (1 - cfg.comorbidity_rate)
    for code in COMORBIDITY_CODES:
        odds = base_odds * (sig.static_effect.get(code, 1.0) if label else 1.0)
        if rng.random() < odds / (1 + odds):
            dx.append((int(rng.integers(1, last)), code))
    for code, odds_ratio in sig.static_effect.items():
        if code in COMORBIDITY_CODES:
            continue
        odds = base_odds * (odds_ratio if label else 1.0)
        if rng.random() < odds / (1 + odds):
            dx.append((int(rng.integers(1, last)), code))
    if label:
        dx.append((last, METASTASIS_CODES[int(rng.integers(len(METASTASIS_CODES)))]))
    else:
        dx.append((last, "Z08.9"))

    # labs: per-patient log offset, monthly sampling, additive shift for positives
    channels = lab_channel_ids(cfg.n_lab_channels)
    labs = []
    offset = rng.normal(0.0, cfg.patient_lab_sd, size=cfg.n_lab_channels)
    for month in range(1, last + 1):
        for c, cid in enumerate(channels):
            forced = sig.xor is not None and c == sig.xor.lab_channel and month < last
            if not forced and rng.random() >= cfg.lab_observation_prob:
                continue
            for _ in range(int(rng.integers(1, 3))):
                value = math.exp(channel_mu[c] + offset[c] + rng.normal(0.0, 0.15))
                if label and c < len(sig.lab_effect) and month in sig.lab_effect_months:
                    value += sig.lab_effect[c]
                if forced and xor_lab_flag:
                    value += sig.xor.lab_shift
                labs.append((month, cid, round(max(value, 0.01), 6)))

    # medications: Poisson counts; positives scaled by the rate multiplier
    meds = []
    activity = rng.gamma(4.0, 0.25)
    for month in range(1, last + 1):
        for c in range(cfg.n_med_channels):
            rate = med_rates[c] * activity
            if label and c < len(sig.med_effect):
                rate *= sig.med_effect[c]
            for _ in range(int(rng.poisson(rate))):
                meds.append((month, ATC_CODES[c]))

    # notes: at least one in the input window; text signal goes into window notes
    lo, hi = cfg.notes_per_patient_range
    n_notes = int(rng.integers(lo, hi + 1))
    months = sorted(int(m) for m in rng.integers(1, last + 1, size=n_notes))
    if months[0] >= last:
        months[0] = int(rng.integers(1, last))
        months.sort()
    bodies = [[_sentence(rng, words) for _ in range(int(rng.integers(2, 4)))] for _ in months]
    window = [i for i, m in enumerate(months) if m < last]
    if label:
        for tok, prob in sig.text_effect.items():
            if rng.random() < prob:
                i = window[int(rng.integers(len(window)))]
                bodies[i].insert(int(rng.integers(len(bodies[i]) + 1)), f"Findings {tok} noted.")
        for i in window:
            if rng.random() < sig.explicit_metastasis_token_prob:
                s = EXPLICIT_METASTASIS_SENTENCES[int(rng.integers(len(EXPLICIT_METASTASIS_SENTENCES)))]
                bodies[i].insert(int(rng.integers(len(bodies[i]) + 1)), s)
    if sig.xor is not None and (xor_lab_flag ^ label):
        targets = {window[-1], window[int(rng.integers(len(window)))]}
        for i in sorted(targets):
            bodies[i].insert(int(rng.integers(len(bodies[i]) + 1)), f"Findings {sig.xor.text_token} noted.")
    for i, m in enumerate(months):
        if m == last and label:
            bodies[i].append("Metastasis confirmed on imaging.")
    order_in_month: dict[int, int] = {}
    notes = []
    for m, body in zip(months, bodies):
        k = order_in_month.get(m, 0)
        order_in_month[m] = k + 1
        notes.append((m, k, " ".join(body)))

    return RawPatient(
        patient_id=f"P{idx:06d}", gender=gender, birth_year=birth_year,
        window_start_year=window_start, diagnosis_events=sorted(dx), lab_events=labs,
        med_events=meds, notes=notes, label="positive" if label else "negative",
    )


def generate_cohort(config: GeneratorConfig) -> list[RawPatient]:
    """Draw a cohort; identical config (including seed) gives an identical cohort."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.n_patients
    n_pos = _n_positive(n, config.positive_fraction)
    labels = np.zeros(n, dtype=int)
    labels[rng.permutation(n)[:n_pos]] = 1
    genders = rng.permutation(np.array(_allocate(n, config.demographics.gender), dtype=object))
    ages = rng.permutation(np.array(_allocate(n, config.demographics.age_group), dtype=object))
    channel_mu = rng.uniform(0.0, 1.5, size=config.n_lab_channels)
    med_rates = rng.uniform(0.1, 0.8, size=config.n_med_channels)
    xor_flags = rng.integers(0, 2, size=n) if config.signal.xor else [None] * n
    words = word_list(config.vocab_size)
    return [
        _patient(rng, i, int(labels[i]), config, str(genders[i]), str(ages[i]),
                 channel_mu, med_rates, words,
                 None if xor_flags[i] is None else int(xor_flags[i]))
        for i in range(n)
    ]


# -- reference cohort shapes ----------------------------------------------------

_COHORT_SHAPES = {
    "breast-like": dict(n=743, pos=281, code="C50",
                        gender={"female": 734, "male": 9, "other": 0},
                        age={"youth": 1, "adult": 380, "senior": 362}),
    "colon-like": dict(n=387, pos=111, code="C18",
                       gender={"female": 192, "male": 194, "other": 1},
                       age={"youth": 6, "adult": 126, "senior": 255}),
    "lung-like": dict(n=870, pos=458, code="C34",
                      gender={"female": 473, "male": 397, "other": 0},
                      age={"youth": 1, "adult": 230, "senior": 639}),
    "prostate-like": dict(n=1890, pos=515, code="C61",
                          gender={"female": 0, "male": 1890, "other": 0},
                          age={"youth": 0, "adult": 452, "senior": 1438}),
}


def default_signal() -> SignalPlan:
    """A moderate signal in every modality for demonstration runs."""
    return SignalPlan(
        lab_effect=[1.5, 1.0],
        med_effect=[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.5],
        static_effect={"R53.8": 3.0, "D50.9": 2.0},
        text_effect={"suspicious": 0.5, "progression": 0.4},
        explicit_metastasis_token_prob=0.1,
    )


def cohort_fixtures(seed: int = 0, signal: SignalPlan | None = None) -> dict[str, GeneratorConfig]:
    """Generator configs reproducing the four reference cohort shapes (size, positives)."""
    out = {}
    for name, t in _COHORT_SHAPES.items():
        out[name] = GeneratorConfig(
            n_patients=t["n"], positive_fraction=t["pos"] / t["n"], seed=seed,
            signal=dataclasses.replace(signal) if signal else default_signal(),
            cancer_code=t["code"],
            demographics=Demographics(
                gender={k: float(v) for k, v in t["gender"].items()},
                age_group={k: float(v) for k, v in t["age"].items()},
            ),
        )
    return out


def write_cohort(path, patients: Iterable[RawPatient]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in patients:
            fh.write(p.to_json() + "\n")


def read_cohort(path) -> list[RawPatient]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [RawPatient.from_json(line) for line in lines if line.strip()]
