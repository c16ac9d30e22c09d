"""Desk-scale run of every pipeline stage on the planted-phrase corpus.

    python scripts/run_synthetic.py --out runs/synthetic
"""

import argparse
import sys
import time
from pathlib import Path

from lexcite.cli import main as lexcite
from lexcite.corpus import write_corpus
from lexcite.synthetic import planted_phrase_corpus

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "synthetic.yaml"


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/synthetic")
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--corpus-seed", type=int, default=7)
    ap.add_argument("--skip-ablation", action="store_true")
    a = ap.parse_args()

    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = out / "corpus.csv"
    write_corpus(planted_phrase_corpus(600, 3, seed=a.corpus_seed), corpus)
    common = ["--config", a.config, "--out", str(out)]
    stages = [["prepare", str(corpus)], ["train-embeddings"], ["train"], ["evaluate"], ["bench"]]
    if not a.skip_ablation:
        stages.append(["ablate"])
    for stage in stages:
        t0 = time.perf_counter()
        print(f"== {stage[0]}", flush=True)
        if lexcite([*stage, *common]) != 0:
            sys.exit(1)
        print(f"   ({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
