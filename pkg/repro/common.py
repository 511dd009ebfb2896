"""Shared helpers for the reproduction scripts."""

import argparse
import csv
import sys
import time

from metde.threshold import find_threshold


def parser(doc: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=doc.strip().splitlines()[0])
    p.add_argument("--out", default="-", help="CSV output path (default stdout)")
    p.add_argument("--tol", type=float, default=1e-4, help="bisection tolerance")
    return p


def writer(path: str):
    f = sys.stdout if path == "-" else open(path, "w", newline="")
    return f, csv.writer(f)


def timed_threshold(e, method, cfg=None, lo=None, hi=None, tol=1e-4):
    """(sigma*, wall seconds)."""
    t0 = time.perf_counter()
    r = find_threshold(e, method, cfg, lo, hi, tol)
    return r.sigma_star, time.perf_counter() - t0
