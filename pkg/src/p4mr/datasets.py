"""Dataset files: one unsigned decimal integer per line, or one word per line."""
from __future__ import annotations

import random
from pathlib import Path

from .dsl import WIDTH
from .errors import DatasetError
from .wire import word_item


def parse_integers(text: str, value_type: str = "U64", source: str = "<text>") -> list[int]:
    limit = 1 << WIDTH[value_type]
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if not line.isdigit():
            raise DatasetError(f"{source}:{lineno}: not an unsigned integer: {line!r}")
        v = int(line)
        if v >= limit:
            raise DatasetError(f"{source}:{lineno}: {v} does not fit {value_type}")
        out.append(v)
    return out


def parse_words(text: str, source: str = "<text>") -> list[int]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        w = line.strip()
        if not w:
            continue
        try:
            out.append(word_item(w))
        except ValueError as exc:
            raise DatasetError(f"{source}:{lineno}: {exc}") from None
    return out


def load_dataset(path, words: bool, value_type: str = "U64") -> list[int]:
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    return parse_words(text, str(p)) if words else parse_integers(text, value_type, str(p))


def generate_integers(count: int, seed: int, bits: int = 32) -> list[int]:
    rng = random.Random(seed)
    return [rng.getrandbits(bits) for _ in range(count)]


def generate_vocabulary(size: int, seed: int) -> list[str]:
    rng = random.Random(seed)
    letters = "abcdefghijklmnopqrstuvwxyz"
    vocab = set()
    while len(vocab) < size:
        vocab.add("".join(rng.choice(letters) for _ in range(rng.randint(2, 8))))
    return sorted(vocab)


def generate_corpus(count: int, seed: int, vocab_size: int = 5000, zipf_s: float = 1.1) -> list[str]:
    """Zipf-distributed words drawn from a synthetic vocabulary."""
    vocab = generate_vocabulary(vocab_size, seed)
    rng = random.Random(seed + 1)
    weights = [1.0 / (r ** zipf_s) for r in range(1, vocab_size + 1)]
    return rng.choices(vocab, weights=weights, k=count)


def write_lines(path, values) -> None:
    Path(path).write_text("".join(f"{v}\n" for v in values), encoding="utf-8")
