import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from lexcite.cli import main
from lexcite.corpus import write_corpus
from lexcite.synthetic import planted_phrase_corpus

ROOT = Path(__file__).resolve().parents[1]
SYNTHETIC_CONFIG = ROOT / "configs" / "synthetic.yaml"
CORPUS_SEED = 7


@dataclass
class SyntheticRun:
    corpus: Path
    out: Path
    config: Path
    seconds: float

    def args(self, *extra):
        return ["--config", str(self.config), "--out", str(self.out), *extra]


@pytest.fixture(scope="session")
def synthetic_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "synthetic.csv"
    write_corpus(planted_phrase_corpus(600, 3, seed=CORPUS_SEED), path)
    return path


@pytest.fixture(scope="session")
def synthetic_run(synthetic_csv, tmp_path_factory):
    """prepare -> train-embeddings -> train -> evaluate through the command-line entry point."""
    out = tmp_path_factory.mktemp("run")
    run = SyntheticRun(synthetic_csv, out, SYNTHETIC_CONFIG, 0.0)
    t0 = time.perf_counter()
    assert main(["prepare", str(synthetic_csv), *run.args()]) == 0
    assert main(["train-embeddings", *run.args()]) == 0
    assert main(["train", *run.args()]) == 0
    assert main(["evaluate", *run.args()]) == 0
    run.seconds = time.perf_counter() - t0
    return run
