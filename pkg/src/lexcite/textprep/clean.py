from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from .lemma import lemmatize
from .porter import porter_stem

MODES = ("raw-filtered", "stemmed", "lemmatized")

_URL = re.compile(r"(?:[a-z][a-z0-9+.\-]*://|www\.)\S*")


def read_word_list(path=None, resource=None) -> list[str]:
    """Read a line-oriented UTF-8 list; ``#`` starts a comment."""
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = resources.files("lexcite.textprep").joinpath(f"data/{resource}").read_text("utf-8")
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line)
    return out


@lru_cache(maxsize=None)
def default_stopwords() -> frozenset:
    return frozenset(read_word_list(resource="stopwords_en.txt"))


@lru_cache(maxsize=None)
def default_boilerplate() -> tuple:
    return tuple(read_word_list(resource="boilerplate.txt"))


@dataclass(frozen=True)
class PrepConfig:
    mode: str = "lemmatized"
    stopwords: frozenset = field(default_factory=default_stopwords)
    min_token_length: int = 3
    boilerplate: tuple = field(default_factory=default_boilerplate)
    include_title: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.min_token_length < 1:
            raise ValueError("min_token_length must be >= 1")
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))
        object.__setattr__(self, "boilerplate", tuple(self.boilerplate))

    def with_mode(self, mode: str) -> "PrepConfig":
        return PrepConfig(mode, self.stopwords, self.min_token_length, self.boilerplate, self.include_title)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "stopwords": sorted(self.stopwords),
            "min_token_length": self.min_token_length,
            "boilerplate": list(self.boilerplate),
            "include_title": self.include_title,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PrepConfig":
        return cls(
            mode=d["mode"],
            stopwords=frozenset(d["stopwords"]),
            min_token_length=int(d["min_token_length"]),
            boilerplate=tuple(d["boilerplate"]),
            include_title=bool(d.get("include_title", False)),
        )


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple
    mode: str

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


@lru_cache(maxsize=32)
def _boilerplate_pattern(phrases):
    if not phrases:
        return None
    parts = sorted((r"\s+".join(map(re.escape, p.lower().split())) for p in phrases if p.strip()),
                   key=len, reverse=True)
    return re.compile(r"(?<!\w)(?:" + "|".join(parts) + r")(?!\w)")


def _letters_only(text: str) -> str:
    # drops punctuation and every numeric character, including superscripts and fractions
    return "".join(ch for ch in text if ch.isalpha() or ch.isspace())


def clean_text(raw: str, cfg: PrepConfig | None = None) -> str:
    """Lowercase and strip URLs, digits, punctuation and boilerplate phrases."""
    phrases = cfg.boilerplate if cfg is not None else default_boilerplate()
    x = raw.lower()
    x = _URL.sub(" ", x)
    x = _letters_only(x)
    # lowercasing can emit combining marks for a few code points
    x = _letters_only(x.lower())
    x = " ".join(x.split())
    pat = _boilerplate_pattern(tuple(phrases))
    if pat is not None:
        # removal can splice a new phrase together, so repeat to a fixed point
        while True:
            nxt = " ".join(pat.sub(" ", x).split())
            if nxt == x:
                break
            x = nxt
    return x


def tokenize(cleaned: str) -> list[str]:
    return cleaned.split()


def filter_tokens(tokens, cfg: PrepConfig | None = None) -> list[str]:
    cfg = cfg or PrepConfig()
    return [t for t in tokens if len(t) >= cfg.min_token_length and t not in cfg.stopwords]


def normalize_token(word: str, mode: str) -> str:
    if mode == "stemmed":
        return porter_stem(word)
    if mode == "lemmatized":
        return lemmatize(word)
    return word


def preprocess_document(raw: str, cfg: PrepConfig | None = None) -> TokenSequence:
    cfg = cfg or PrepConfig()
    tokens = filter_tokens(tokenize(clean_text(raw, cfg)), cfg)
    if cfg.mode != "raw-filtered":
        # normalization can shorten a token or land on a stopword, so filter again
        tokens = filter_tokens([normalize_token(t, cfg.mode) for t in tokens], cfg)
    return TokenSequence(tuple(tokens), cfg.mode)


def document_text(doc, cfg: PrepConfig) -> str:
    """Raw text fed to preprocessing: the body, optionally prefixed by the title."""
    if cfg.include_title and doc.title:
        return f"{doc.title}\n{doc.body}"
    return doc.body
