"""CSV/JSON writers for runs, ramps, sweeps and traces.

Everything written here is a pure function of the results: no wall-clock
stamps, and floats are printed with ``repr`` so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

from .flow import COMMITTED

TX_FIELDS = ["tx_id", "client", "visibility", "requested", "endorsed", "ordered", "confirmed", "status"]
BLOCK_FIELDS = ["height", "created_at", "tx_count", "bytes", "cut_reason", "term"]
TIMELINE_FIELDS = ["second", "sends", "confirmations", "blocks", "block_txs"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, rows, fields=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = list(rows)
    if fields is None:
        fields = []
        for r in rows:
            for k in r:
                if k not in fields:
                    fields.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r.get(k)) for k in fields])
    return path


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")
    return path


def config_hash(*dicts) -> str:
    blob = json.dumps(list(dicts), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def tx_rows(network, end_time=None):
    for tx in network.txs:
        ok = tx.status == COMMITTED and (end_time is None or (tx.confirmed or 0) <= end_time)
        status = tx.status if tx.status != COMMITTED or ok else "Pending"
        yield {
            "tx_id": tx.tx_id,
            "client": tx.client,
            "visibility": tx.visibility,
            "requested": tx.requested,
            "endorsed": tx.endorsed,
            "ordered": tx.ordered,
            "confirmed": tx.confirmed if ok else None,
            "status": status if not tx.reason else f"{status}({tx.reason})",
        }


def block_rows(ordering):
    for b in ordering.blocks:
        yield {
            "height": b.height,
            "created_at": b.created_at,
            "tx_count": len(b.txs),
            "bytes": b.bytes,
            "cut_reason": b.cut_reason.value,
            "term": b.term,
        }


def export_run(run, out_dir, name="run", with_events=False) -> list[Path]:
    """runs.csv, trace_<name>.csv, blocks_<name>.csv and timeline.csv."""
    from .bench import timeline

    out = Path(out_dir)
    paths = [
        write_csv(out / "runs.csv", [run.result.row()]),
        write_csv(out / f"trace_{name}.csv", tx_rows(run.network, run.end_time), TX_FIELDS),
        write_csv(out / f"blocks_{name}.csv", block_rows(run.network.ordering), BLOCK_FIELDS),
        write_csv(out / "timeline.csv", timeline(run), TIMELINE_FIELDS),
    ]
    if with_events:
        path = out / "events.csv"
        run.network.sim.log.dump(path)
        paths.append(path)
    return paths


def export_ramp(ramp, out_dir, extra=None) -> list[Path]:
    """ramp.json (summary and full history) plus runs.csv."""
    out = Path(out_dir)
    summary = ramp.summary()
    if extra:
        summary.update(extra)
    return [
        write_json(out / "ramp.json", summary),
        write_csv(out / "runs.csv", [r.row() for r in ramp.history]),
    ]
