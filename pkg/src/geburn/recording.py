"""Solve bookkeeping so every reported number traces back to a logged solve."""
from __future__ import annotations

import json
import threading


class SolveRecorder:
    """Thread-safe accumulator of per-solve records for the run manifest."""

    def __init__(self):
        self._lock = threading.Lock()
        self.entries = []

    def record(self, **fields):
        with self._lock:
            self.entries.append(dict(fields))

    def sorted_entries(self) -> list:
        """Entries in a deterministic order regardless of scheduling."""
        def key(e):
            return (
                str(e.get("kind")),
                str(e.get("P")),
                float(e.get("d") or 0.0),
                float(e.get("A") or 0.0),
                bool(e.get("cutoff")),
                -float(e.get("lam") or 0.0),
                float(e.get("T") or 0.0),
                int(e.get("grid_N") or 0),
            )
        return sorted(self.entries, key=key)

    def write_manifest(self, path):
        with open(path, "w") as fh:
            json.dump({"solves": self.sorted_entries()}, fh, indent=2, sort_keys=True)
            fh.write("\n")
