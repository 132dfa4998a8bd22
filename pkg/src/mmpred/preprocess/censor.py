"""Removal of sentences that mention metastasis or TNM staging."""
from __future__ import annotations

import re

CENSOR_PATTERN = re.compile(r"(\s[tnmTNM]\d|metastas)")
# sentence = text up to terminal punctuation; the boundary is the whitespace after it
_BOUNDARY = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[tuple[str, str]]:
    """Split into ``(leading_whitespace, sentence)`` pairs."""
    out = []
    pos = 0
    lead = ""
    for m in _BOUNDARY.finditer(text):
        out.append((lead, text[pos : m.start()]))
        lead = m.group(0)
        pos = m.end()
    if pos < len(text):
        out.append((lead, text[pos:]))
    return out


def censor_text(text: str, pattern: re.Pattern = CENSOR_PATTERN) -> str:
    """Drop every sentence matching ``pattern``; keep the rest verbatim and in order.

    Each sentence is matched together with the whitespace that preceded it, so
    a staging token at the start of a sentence (" T2 ...") is caught as it
    would be in the running text. Kept sentences are re-joined with one space.
    """
    kept = [sent for lead, sent in split_sentences(text.strip()) if not pattern.search(lead + sent)]
    return " ".join(kept)
