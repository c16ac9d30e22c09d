"""Write the planted-phrase corpus as a four-column CSV."""

import argparse

from lexcite.corpus import write_corpus
from lexcite.synthetic import planted_phrase_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", help="destination CSV")
    ap.add_argument("--docs", type=int, default=600)
    ap.add_argument("--classes", type=int, default=3)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--topic-strength", type=float, default=0.35)
    a = ap.parse_args()
    docs = planted_phrase_corpus(a.docs, a.classes, seed=a.seed, topic_strength=a.topic_strength)
    write_corpus(docs, a.out)
    print(f"wrote {len(docs)} documents to {a.out}")


if __name__ == "__main__":
    main()
