"""Command line entry point.

Installed as `export`; since bash has a builtin of the same name, the
equivalent `python3 -m embexport` takes the same flags.
"""

import argparse
import json
import sys

from .errors import ExportError
from .export import ExportJob, export
from .models import POOLINGS


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="export",
        description="Encode test steps or case names into an embedding exchange file.",
    )
    ap.add_argument("--corpus", required=True, help="corpus JSONL")
    ap.add_argument("--model", required=True, help="model id, optionally id@revision")
    ap.add_argument("--pooling", required=True, choices=POOLINGS)
    ap.add_argument("--target", required=True, choices=("steps", "names"))
    ap.add_argument("--out", required=True, help="output exchange file")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(
            corpus=args.corpus,
            model_id=args.model,
            pooling=args.pooling,
            out=args.out,
            target="steps" if args.target == "steps" else "case_names",
        )
        res = export(job)
    except ExportError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"dim": res.dim, "out": res.out, "rows": res.rows}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
