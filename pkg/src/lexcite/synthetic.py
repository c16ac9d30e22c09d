"""Planted-phrase corpus generator for desk-scale runs.

Each class is defined by an ordered, adjacent pair of marker words. Every
document contains all marker words, so bag-of-words features see no marker
signal; only the adjacency of the class pair identifies the label. Filler
words carry a weaker class-dependent topic signal controlled by
``topic_strength``.
"""

from __future__ import annotations

import numpy as np

from .corpus import Document, DocumentSet

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v", "z", "br", "dr", "gr", "pl", "tr"]
_NUCLEI = ["a", "o", "u", "i"]

DEFAULT_LABELS = ("cited", "distinguished", "followed", "overruled", "referred to", "applied", "considered")


def pseudo_words(n: int, rng, syllables: int = 3) -> list[str]:
    """Distinct lowercase pseudo-words built from CV syllables plus a closing consonant."""
    words = set()
    while len(words) < n:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_NUCLEI) for _ in range(syllables))
        words.add(w + rng.choice(["k", "m", "n", "t"]))
    return sorted(words)


def planted_phrase_corpus(n_docs: int = 600, n_classes: int = 3, seed: int = 0,
                          n_fillers: int = 240, doc_len=(30, 50), topic_strength: float = 0.35,
                          decorate: bool = True) -> DocumentSet:
    if n_classes < 2 or n_classes > len(DEFAULT_LABELS):
        raise ValueError(f"n_classes must be in [2, {len(DEFAULT_LABELS)}]")
    rng = np.random.default_rng(seed)
    words = pseudo_words(n_fillers + n_classes, rng)
    rng.shuffle(words)
    markers, fillers = words[:n_classes], words[n_classes:]
    topic = np.array_split(np.array(fillers), n_classes)
    labels = DEFAULT_LABELS[:n_classes]
    docs = []
    for i in range(n_docs):
        c = i % n_classes
        n = int(rng.integers(doc_len[0], doc_len[1] + 1))
        toks = [
            str(rng.choice(topic[c])) if rng.random() < topic_strength else str(rng.choice(fillers))
            for _ in range(n)
        ]
        a, b = markers[c], markers[(c + 1) % n_classes]
        others = [m for m in markers if m not in (a, b)]
        # phrase at p, p+1; remaining markers at least two slots away from any marker
        p = int(rng.integers(0, n - 1))
        toks[p:p + 2] = [a, b]
        taken = {p, p + 1}
        for m in others:
            free = [j for j in range(len(toks)) if all(abs(j - t) > 1 for t in taken)]
            j = int(rng.choice(free))
            toks[j] = m
            taken.add(j)
        if decorate:
            toks = _decorate(toks, rng)
        body = " ".join(toks)
        docs.append(Document(f"Case{i + 1}", labels[c], f"Case {i + 1} v State", body))
    return DocumentSet(docs)


def _decorate(toks, rng):
    """Sprinkle casing, punctuation, digits, URLs and boilerplate that cleaning must remove."""
    out = []
    for t in toks:
        r = rng.random()
        if r < 0.05:
            t = t.capitalize()
        elif r < 0.08:
            t = t + ","
        elif r < 0.10:
            t = f"({t})"
        out.append(t)
        r = rng.random()
        if r < 0.03:
            out.append(str(int(rng.integers(1, 2000))))
        elif r < 0.035:
            out.append("https://example.org/case/" + str(int(rng.integers(100))))
        elif r < 0.04:
            out.append("[2008] FCA")
    if rng.random() < 0.2:
        out.append("Copyright 2014. All rights reserved.")
    return out
