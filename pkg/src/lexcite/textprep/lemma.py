"""Dictionary-free lemmatizer with verb-sense defaults.

An exception lexicon handles irregular forms; everything else goes through
ordered suffix rules (``-ies``, ``-ing``/``-ed`` with consonant undoubling
and e-restoration, ``-es``/``-s``). Rules are re-applied until none fires,
which makes the result a fixed point: ``lemmatize(lemmatize(w)) == lemmatize(w)``.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from .porter import measure

_VOWELS = frozenset("aeiouy")
_CONS = frozenset("bcdfghjklmnpqrstvwxz")

# stem endings (after dropping -ed/-ing) that take back a silent e,
# checked as consonant + single vowel + consonant unless noted
_E_AFTER_CVC = ("at", "id", "ut", "ud", "ot", "ur", "ir", "ar", "in", "os", "ib",
                "ag", "ul", "is", "us", "ys", "iz", "yz", "ic", "ac", "uc")
# endings that take e regardless of the preceding letter
_E_ALWAYS = ("v", "u", "dg", "rg", "ang", "eng", "rs", "ns", "ps", "ls", "let", "pet",
             "rc", "nc", "aus", "ais", "ous", "eas", "ois")


def load_exceptions(path=None) -> dict[str, str]:
    if path is None:
        text = resources.files("lexcite.textprep").joinpath("data/lemma_exceptions.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    table = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        form, lemma = line.split()
        table[form] = lemma
    return table


EXCEPTIONS = load_exceptions()


def _has_vowel(s: str) -> bool:
    return any(c in _VOWELS for c in s)


def _restore(stem: str) -> str:
    """Rebuild a verb base from what is left after dropping -ed/-ing."""
    if len(stem) >= 4 and stem[-1] == stem[-2] and stem[-1] in _CONS and stem[-1] not in "lsz":
        return stem[:-1]
    if stem.endswith(_E_ALWAYS):
        return stem + "e"
    if len(stem) >= 3 and stem[-3] in _CONS and stem.endswith(_E_AFTER_CVC):
        return stem + "e"
    if stem[-1] in _CONS and stem[-1] not in "wxy" and stem[-2] in _VOWELS and stem[-2] != "y":
        # short syllable: cit -> cite, hop -> hope, us -> use
        if len(stem) == 2 or (stem[-3] in _CONS and measure(stem) == 1):
            return stem + "e"
    if len(stem) >= 2 and stem[-1] in _CONS and stem[-2] in _CONS and stem[-1] == "l" and stem[-2] not in "lr":
        # handl -> handle, settl -> settle
        return stem + "e"
    return stem


def _step(w: str) -> str:
    """Apply the first matching suffix rule once; return ``w`` if none fires."""
    n = len(w)
    if w.endswith("ies") and n > 4:
        return w[:-3] + "y"
    if w.endswith("ing") and n > 4:
        stem = w[:-3]
        if _has_vowel(stem):
            return _restore(stem)
        return w
    if w.endswith("ed") and n > 3:
        if w.endswith("eed"):
            return w
        if w.endswith("ied") and n > 4:
            return w[:-3] + "y"
        stem = w[:-2]
        if _has_vowel(stem):
            return _restore(stem)
        return w
    if w.endswith("es") and n > 3:
        if w.endswith(("sses", "ches", "shes", "xes", "zzes")):
            return w[:-2]
        return w[:-1]
    if w.endswith("s") and n > 3 and not w.endswith(("ss", "us", "is")):
        return w[:-1]
    return w


@lru_cache(maxsize=1 << 16)
def lemmatize(word: str) -> str:
    w = word
    while True:
        if w in EXCEPTIONS:
            return EXCEPTIONS[w]
        nxt = _step(w)
        if nxt == w:
            return w
        w = nxt
