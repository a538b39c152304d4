"""Command line: ``wkam <study> --config <path> [--out <dir>] [--threads N]``.

Exit status is 0 when every check of the study passes, 1 when any fails and
2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import STUDIES, load, with_overrides
from .errors import WkamError

log = logging.getLogger("wkam")


def build_parser():
    ap = argparse.ArgumentParser(prog="wkam", description=__doc__.splitlines()[0])
    ap.add_argument("study", choices=STUDIES)
    ap.add_argument("--config", required=True, help="flat key = value config file")
    ap.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    ap.add_argument("--threads", type=int, default=None, help="worker threads")
    ap.add_argument("--backend", choices=("cython", "python"), default=None)
    ap.add_argument("-q", "--quiet", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s")
    from .report import render_report
    from .studies import run_study
    try:
        cfg = load(args.config)
        over = {"kind": args.study}
        if args.out is not None:
            over["out"] = args.out
        if args.threads is not None:
            over["threads"] = args.threads
        cfg = with_overrides(cfg, **over)
        result = run_study(cfg, backend=args.backend)
        paths = render_report(result, cfg)
    except (WkamError, OSError) as exc:
        log.error("error: %s", exc)
        return 2
    for chk in result.checks:
        log.info("%s %s value=%.6g bound=%.6g", "PASS" if chk.passed else "FAIL",
                 chk.name, chk.value, chk.bound)
    log.info("wrote %d files under %s", len(paths), paths[0].rsplit("/", 1)[0] if paths else "")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
