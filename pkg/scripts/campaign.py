"""Decode NMST models under greedy, top-k, nucleus and beam search with
cap t_half + 64 and report r_nt per decoder.  Uses random networks, plus any
NMST checkpoints given with --ckpt (contexts from --corpus)."""

import argparse
from pathlib import Path

from _common import output_dir
from nmst.checkpoint import load_checkpoint
from nmst.core import tokenize
from nmst.data import make_examples
from nmst.experiments import CampaignEntry, nmst_campaign, random_campaign_entries


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.1, 1e-4])
    ap.add_argument("--models", type=int, default=5, help="random networks per epsilon")
    ap.add_argument("--contexts", type=int, default=100)
    ap.add_argument("--ckpt", type=Path, nargs="*", default=[])
    ap.add_argument("--corpus", type=Path, default=None)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    entries = random_campaign_entries(args.eps, args.models, args.contexts, seed=args.seed)
    for path in args.ckpt:
        if args.corpus is None:
            ap.error("--ckpt needs --corpus for contexts")
        ckpt = load_checkpoint(path)
        mode = ckpt.metadata.get("tokenizer", "char")
        lines = [tokenize(line, mode) for line in args.corpus.read_text(encoding="utf-8").splitlines() if line.strip()]
        ctxs = [c for c, _ in make_examples(lines, ckpt.vocab, ckpt.metadata.get("context_length", 0))]
        entries.append(CampaignEntry(path.stem, ckpt.to_model(), ctxs[:args.contexts]))
    res, _ = nmst_campaign(entries, master_seed=args.seed, out_dir=output_dir("campaign"))
    for c in res.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: L = {c.details['L']}, r_nt {c.details['r_nt']}")
    print(f"campaign: {'PASS' if res.passed else 'FAIL'} ({res.seconds:.0f}s)")


if __name__ == "__main__":
    main()
