#!/usr/bin/env python3
"""JSON-lines scorer stand-in. STUB_SCORES="ce,cu,pc,pq" sets the returned values."""
import json
import os
import sys

raw = os.environ.get("STUB_SCORES")
if not raw:
    sys.exit("STUB_SCORES is not set")
ce, cu, pc, pq = (float(x) for x in raw.split(","))
for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    path = json.loads(line)["path"]
    if not os.path.exists(path):
        out = {"path": path, "error": "file not found"}
    else:
        out = {"path": path, "CE": ce, "CU": cu, "PC": pc, "PQ": pq}
    print(json.dumps(out), flush=True)
