"""Stand-in external solver: ``python highs_solve.py model.lp model.sol``."""

from __future__ import annotations

import sys

import highspy


def main(lp_path: str, sol_path: str) -> None:
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(lp_path)
    h.run()
    status = h.getModelStatus()
    lines = []
    if status == highspy.HighsModelStatus.kOptimal:
        lines.append("status optimal")
        lines.append(f"objective {h.getInfo().objective_function_value!r}")
        names = h.getLp().col_names_
        for name, v in zip(names, h.getSolution().col_value):
            lines.append(f"{name} {v!r}")
    elif status == highspy.HighsModelStatus.kInfeasible:
        lines.append("status infeasible")
    else:
        lines.append("status unbounded")
    with open(sol_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
