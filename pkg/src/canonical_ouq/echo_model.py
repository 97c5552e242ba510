"""Reference wrapper for the external model protocol.

Reads ``{"points": [[...], ...]}`` lines on stdin and answers each with
``{"values": [...]}`` on stdout.  Copy this file and replace ``evaluate`` to
expose any simulator or surrogate.

Usage::

    python -m canonical_ouq.echo_model             # first coordinate
    python -m canonical_ouq.echo_model hydraulic   # river height model
"""

from __future__ import annotations

import json
import sys

import numpy as np

from .models import builtin_linear, hydraulic_eval


def evaluate(name: str, points: np.ndarray) -> list[float]:
    if name == "hydraulic":
        return hydraulic_eval(points[:, 0], points[:, 1], points[:, 2], points[:, 3]).tolist()
    return builtin_linear(points).tolist()


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    name = argv[0] if argv else "echo"
    for line in sys.stdin:
        if not line.strip():
            continue
        points = np.asarray(json.loads(line)["points"], dtype=float)
        sys.stdout.write(json.dumps({"values": evaluate(name, points)}) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
