"""Record reference adversary values for the bundled problems with an SDP solver.

Writes ``src/advq/data/oracle_values.json``; the tests compare the heuristic
solver and the shipped witnesses against these numbers.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from advq import serialization as io
from advq.sdp_oracle import adversary_sdp


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("problems", nargs="*", default=["singlebit.json", "or2.json"])
    ap.add_argument("--solver", default="CLARABEL")
    ap.add_argument("--out", default=str(io.DATA_DIR / "oracle_values.json"))
    args = ap.parse_args()
    values = {}
    for name in args.problems:
        p = io.load_problem(io.resolve(name))
        values[p.name] = {"adversary_value": round(adversary_sdp(p.rho, p.sigma, args.solver), 6),
                          "solver": args.solver}
        print(f"{p.name}: {values[p.name]['adversary_value']}")
    io.write_json(Path(args.out), values)


if __name__ == "__main__":
    main()
