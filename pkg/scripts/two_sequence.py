"""Train VA, ST and NMST heads on two sequences that share a prefix and
print the teacher-forced eos traces along the longer one."""

import argparse

import numpy as np

from _common import dump, output_dir
from nmst.verify import TwoSequenceConfig, two_sequence_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--t0", type=int, default=4)
    ap.add_argument("--length", type=int, default=7)
    ap.add_argument("--eps", type=float, default=1e-3)
    ap.add_argument("--cell", choices=("rnn", "lstm"), default="rnn")
    ap.add_argument("--epochs", type=int, default=1500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = TwoSequenceConfig(t0=args.t0, length=args.length, epsilon=args.eps, cell=args.cell,
                            max_epochs=args.epochs, seed=args.seed)
    res = two_sequence_suite(cfg)
    print(f"{'head':6} {'nll':>8}  eos trace (t = 1..{cfg.length})")
    for kind, art in res.artifacts.items():
        print(f"{kind:6} {art['nll']:8.4f}  {np.array2string(np.array(art['trace']), precision=3)}")
    print(f"optimum nll {2 * np.log(2):.4f}")
    for c in res.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}")
    dump(res.to_dict(), output_dir("two_sequence") / "result.json")


if __name__ == "__main__":
    main()
