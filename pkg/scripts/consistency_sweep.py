"""Length bounds of NMST (and termination of ST) networks under every
decoder, over many random networks per epsilon."""

import argparse

from _common import dump, output_dir
from nmst.verify import check_nmst_consistency, check_st_consistency


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.1, 1e-4])
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--st", action="store_true", help="also sweep ST heads (cap 10^4)")
    args = ap.parse_args()
    results = [check_nmst_consistency(args.eps, args.trials, args.seed)]
    if args.st:
        results.append(check_st_consistency([e for e in args.eps if e >= 1e-3] or [0.1], args.trials, args.seed))
    for res in results:
        print(f"{res.name} ({res.seconds:.0f}s)")
        for c in res.checks:
            print(f"  {'PASS' if c.passed else 'FAIL'} {c.name}: max lengths {c.details['max_length']}")
        dump(res.to_dict(), output_dir("consistency") / f"{res.name}.json")


if __name__ == "__main__":
    main()
