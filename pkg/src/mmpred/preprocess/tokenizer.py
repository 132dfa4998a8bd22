"""WordPiece-style subword tokenizer trained on the cohort's own notes."""
from __future__ import annotations

import re
from collections import Counter

PAD, UNK, MASK, SEP = "[PAD]", "[UNK]", "[MASK]", "[SEP]"
SPECIAL_TOKENS = [PAD, UNK, MASK, SEP]
PAD_ID, UNK_ID, MASK_ID, SEP_ID = 0, 1, 2, 3

_PRETOKEN = re.compile(r"\w+|[^\w\s]")
_CLOSING_PUNCT = set(".,!?;:)%")
_MAX_WORD_CHARS = 100


def pretokenize(text: str) -> list[str]:
    return _PRETOKEN.findall(text)


class WordPieceTokenizer:
    def __init__(self, vocab: list[str]):
        if vocab[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise ValueError(f"vocabulary must start with {SPECIAL_TOKENS}")
        self.vocab = list(vocab)
        self.ids = {tok: i for i, tok in enumerate(self.vocab)}

    def __len__(self) -> int:
        return len(self.vocab)

    @classmethod
    def train(cls, corpus, vocab_size: int = 1000) -> "WordPieceTokenizer":
        """Learn pieces by repeatedly merging the pair with the highest
        ``count(ab) / (count(a) * count(b))`` score, starting from characters."""
        if vocab_size < 256:
            raise ValueError(f"vocab_size must be >= 256, got {vocab_size}")
        counts: Counter[str] = Counter()
        for text in corpus:
            counts.update(w for w in pretokenize(text) if len(w) <= _MAX_WORD_CHARS)
        if not counts:
            raise ValueError("cannot train a tokenizer on an empty corpus")

        words = sorted(counts)
        splits = {w: [w[0]] + ["##" + c for c in w[1:]] for w in words}
        vocab = list(SPECIAL_TOKENS)
        seen = set(vocab)
        for w in words:
            for piece in splits[w]:
                if piece not in seen:
                    seen.add(piece)
                    vocab.append(piece)
        head = len(SPECIAL_TOKENS)
        vocab[head:] = sorted(vocab[head:])
        seen = set(vocab)

        while len(vocab) < vocab_size:
            piece_freq: Counter[str] = Counter()
            pair_freq: Counter[tuple[str, str]] = Counter()
            for w in words:
                parts, f = splits[w], counts[w]
                for p in parts:
                    piece_freq[p] += f
                for a, b in zip(parts, parts[1:]):
                    pair_freq[(a, b)] += f
            if not pair_freq:
                break
            best = max(pair_freq, key=lambda ab: (
                pair_freq[ab] / (piece_freq[ab[0]] * piece_freq[ab[1]]), ab))
            a, b = best
            merged = a + b[2:]
            for w in words:
                parts = splits[w]
                if len(parts) < 2:
                    continue
                i, out = 0, []
                while i < len(parts):
                    if i + 1 < len(parts) and parts[i] == a and parts[i + 1] == b:
                        out.append(merged)
                        i += 2
                    else:
                        out.append(parts[i])
                        i += 1
                splits[w] = out
            if merged not in seen:
                seen.add(merged)
                vocab.append(merged)
        return cls(vocab)

    def _word_pieces(self, word: str) -> list[str]:
        if len(word) > _MAX_WORD_CHARS:
            return [UNK]
        pieces, start = [], 0
        while start < len(word):
            end = len(word)
            found = None
            while start < end:
                sub = word[start:end] if start == 0 else "##" + word[start:end]
                if sub in self.ids:
                    found = sub
                    break
                end -= 1
            if found is None:
                return [UNK]
            pieces.append(found)
            start = end
        return pieces

    def pieces(self, text: str) -> list[str]:
        out = []
        for word in pretokenize(text):
            out.extend(self._word_pieces(word))
        return out

    def tokenize(self, text: str) -> list[int]:
        """Greedy longest-match-first segmentation into ids."""
        return [self.ids[p] for p in self.pieces(text)]

    def detokenize(self, ids) -> str:
        out = ""
        for i in ids:
            tok = self.vocab[int(i)]
            if tok == PAD:
                continue
            if tok.startswith("##"):
                out += tok[2:]
            elif not out or tok in _CLOSING_PUNCT:
                out += tok
            else:
                out += " " + tok
        return out
