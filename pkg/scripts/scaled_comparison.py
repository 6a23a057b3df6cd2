"""Train VA, ST and NMST language models on the synthetic corpus with one
shared budget; report validation perplexity and NMST greedy r_nt."""

import argparse

from _common import dump, output_dir
from nmst.checkpoint import save_checkpoint
from nmst.experiments import ScaledConfig, scaled_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lines", type=int, default=600)
    ap.add_argument("--cell", choices=("rnn", "lstm"), default="lstm")
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--lr", type=float, default=3e-3)
    ap.add_argument("--epochs", type=int, default=70)
    ap.add_argument("--eps", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = ScaledConfig(lines=args.lines, cell=args.cell, hidden_size=args.hidden, learning_rate=args.lr,
                       max_epochs=args.epochs, epsilon=args.eps, seed=args.seed)
    result = scaled_comparison(cfg)
    out = output_dir("scaled_comparison")
    print(f"|V| = {len(result.vocab)}, split sizes {[len(p) for p in result.splits]}")
    for kind, run in result.runs.items():
        print(f"{kind:5} valid ppl {run.valid_ppl:7.3f}  best epoch {run.best_epoch:3d}  {run.seconds:6.1f}s")
        save_checkpoint(run.model, out / f"{kind}.ckpt", {"tokenizer": "word",
                                                          "context_length": cfg.context_length})
    print(f"NMST greedy r_nt: {result.nmst_r_nt}")
    checks = result.checks()
    for c in checks.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}")
    dump(checks.to_dict(), out / "result.json")


if __name__ == "__main__":
    main()
