"""Solve MPS files with HiGHS; print "<status> <objective>" per file.

Exit code 77 when highspy is not importable so the caller can skip.
"""
import sys

try:
    import highspy
except ImportError:
    sys.exit(77)


def main(paths):
    for path in paths:
        h = highspy.Highs()
        h.silent()
        h.setOptionValue("mip_rel_gap", 1e-10)
        h.setOptionValue("mip_abs_gap", 1e-10)
        h.readModel(path)
        h.run()
        status = h.modelStatusToString(h.getModelStatus()).replace(" ", "_")
        print(status, repr(h.getInfo().objective_function_value))


if __name__ == "__main__":
    main(sys.argv[1:])
