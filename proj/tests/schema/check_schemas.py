# SPDX-License-Identifier: Apache-2.0
"""Validates service payload samples against the published JSON schemas."""
import json
import pathlib
import sys

import jsonschema


def main() -> int:
    schemas, samples = (pathlib.Path(p) for p in sys.argv[1:3])
    snapshot = json.loads((schemas / "snapshot.v1.schema.json").read_text())
    events = json.loads((schemas / "events.v1.schema.json").read_text())
    checks = [
        ("snapshot.json", snapshot),
        ("snapshot_at_3.json", snapshot),
        ("events.json", events),
    ]
    failed = 0
    for name, schema in checks:
        doc = json.loads((samples / name).read_text())
        errors = list(jsonschema.Draft202012Validator(schema).iter_errors(doc))
        for e in errors[:5]:
            print(f"{name}: {'/'.join(map(str, e.absolute_path))}: {e.message}")
        print(f"{name}: {'FAIL' if errors else 'ok'}")
        failed += bool(errors)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
