"""Reference child process for the policy bridge.

``python3 -m inspection_rta.stub_policy`` answers the handshake and then replies with a
zero action to every observation. ``--mode`` selects faulty behaviour for tests:
``malformed`` answers with a broken record, ``silent`` never answers an observation,
``echo`` returns the first six observation entries scaled by ``--scale``.
"""

from __future__ import annotations

import argparse
import json
import sys


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="stub_policy")
    ap.add_argument("--mode", choices=("zero", "malformed", "silent", "echo"), default="zero")
    ap.add_argument("--scale", type=float, default=1e-3)
    args = ap.parse_args(argv)
    hello = json.loads(sys.stdin.readline())
    print(json.dumps({"v": hello.get("v")}), flush=True)
    for line in sys.stdin:
        rec = json.loads(line)
        if args.mode == "silent":
            continue
        if args.mode == "malformed":
            print('{"F": [0, 0], "tau": "zero"}', flush=True)
            continue
        if args.mode == "echo":
            o = [args.scale * v for v in rec["obs"][:6]]
            print(json.dumps({"F": o[:3], "tau": o[3:]}), flush=True)
            continue
        print(json.dumps({"F": [0.0, 0.0, 0.0], "tau": [0.0, 0.0, 0.0]}), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
