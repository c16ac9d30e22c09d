"""Finite-difference gradient check of the composed model over several random points."""

import argparse

from lexcite import cnnmodel as cm
from lexcite.gradcheck import check_gradients


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=10)
    ap.add_argument("--step", type=float, default=1e-3)
    ap.add_argument("--kernels", default="2,3")
    a = ap.parse_args()
    kernels = tuple(int(k) for k in a.kernels.split(","))
    cfg = cm.ModelConfig(num_classes=3, kernel_sizes=kernels, filters=4, dim=8, seq_len=7,
                         class_weights=(1.0, 2.0, 0.5))
    worst = 0.0
    for i in range(a.points):
        r = check_gradients(cfg, vocab_size=10, h=a.step, seed=1000 * i)
        worst = max(worst, r.max_rel_error)
        print(f"point {i}: max rel err {r.max_rel_error:.3e} at {r.worst} (margin {r.margin:.4f})")
    print(f"worst over {a.points} points: {worst:.3e}")


if __name__ == "__main__":
    main()
