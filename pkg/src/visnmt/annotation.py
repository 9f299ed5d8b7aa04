"""Annotation service: sample retrieved images, serve them to a human
annotator over HTTP, and persist noise/informative labels durably.

Labels are appended to labels.jsonl and fsynced before the request is
acknowledged, so a crash after an acknowledgment never loses the label;
restarting on the same store directory resumes the session.
"""

from __future__ import annotations

import json
import mimetypes
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .evaluator import noise_report

__all__ = ["AnnotationSession", "create_session", "load_session", "AnnotationServer"]

VALID_LABELS = ("noise", "informative")


def _item_key(sid: int, rank: int) -> str:
    return f"{sid}:{rank}"


@dataclass
class AnnotationSession:
    session_id: str
    seed: int
    items: list  # sampled dicts: {key, sid, m, query, path, hash}
    store_dir: Path

    def __post_init__(self):
        self.store_dir = Path(self.store_dir)
        self._lock = threading.Lock()
        self.labels = {}
        self._replay_labels()

    # -- persistence ---------------------------------------------------

    @property
    def _labels_path(self) -> Path:
        return self.store_dir / "labels.jsonl"

    def _replay_labels(self):
        if not self._labels_path.exists():
            return
        keys = {it["key"] for it in self.items}
        for line in self._labels_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            key = _item_key(rec["sid"], rec["m"])
            if key in keys:  # last record wins
                self.labels[key] = rec["label"]

    def label(self, key: str, label: str, annotator: str = "anon"):
        if label not in VALID_LABELS:
            raise ValueError(f"label must be one of {VALID_LABELS}, got {label!r}")
        item = next((it for it in self.items if it["key"] == key), None)
        if item is None:
            raise KeyError(f"unknown item {key!r}")
        rec = {"sid": item["sid"], "m": item["m"], "label": label,
               "annotator": annotator,
               "ts": datetime.now(timezone.utc).isoformat()}
        with self._lock:
            with open(self._labels_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(rec) + "\n")
                f.flush()
                os.fsync(f.fileno())
            self.labels[key] = label

    # -- queries -------------------------------------------------------

    def next_unlabeled(self):
        for item in self.items:
            if item["key"] not in self.labels:
                return item
        return None

    def stats(self) -> dict:
        labeled = len(self.labels)
        base = {"labeled": labeled, "remaining": len(self.items) - labeled,
                "total": len(self.items)}
        if labeled == 0:
            base.update(noise_count=0, informative_count=0, proportion=0.0)
        else:
            rep = noise_report(self.labels.values())
            base.update(noise_count=rep.noise_count,
                        informative_count=rep.informative_count,
                        proportion=rep.proportion)
        return base


def create_session(manifest, sample_size: int, seed: int, store_dir,
                   session_id: str = "default") -> AnnotationSession:
    """Seeded uniform sample without replacement over ok-status records.

    If the store directory already holds a session file, that session is
    resumed instead (labels survive restarts).
    """
    store_dir = Path(store_dir)
    store_dir.mkdir(parents=True, exist_ok=True)
    session_path = store_dir / "session.json"
    if session_path.exists():
        return load_session(store_dir)

    ok = sorted((r for r in manifest.records if r.status == "ok"),
                key=lambda r: (r.sid, r.rank))
    if len(ok) < sample_size:
        raise ValueError(f"only {len(ok)} ok records available, need {sample_size}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(ok), size=sample_size, replace=False)
    items = []
    for i in chosen:
        r = ok[i]
        items.append({"key": _item_key(r.sid, r.rank), "sid": r.sid, "m": r.rank,
                      "query": r.query, "path": r.cache_path, "hash": r.content_hash})
    session_path.write_text(json.dumps(
        {"id": session_id, "seed": seed, "items": items}), encoding="utf-8")
    return AnnotationSession(session_id=session_id, seed=seed, items=items,
                             store_dir=store_dir)


def load_session(store_dir) -> AnnotationSession:
    store_dir = Path(store_dir)
    data = json.loads((store_dir / "session.json").read_text(encoding="utf-8"))
    return AnnotationSession(session_id=data["id"], seed=data["seed"],
                             items=data["items"], store_dir=store_dir)


class AnnotationServer:
    """HTTP front of one AnnotationSession plus read-only inspection data."""

    def __init__(self, session: AnnotationSession, port: int = 0,
                 static_dir=None, query_sets=None, manifest=None, sources=None):
        self.session = session
        self.static_dir = Path(static_dir) if static_dir else None
        self.query_sets = {qs.sid: qs for qs in (query_sets or [])}
        self.manifest_by_sid = manifest.by_sid() if manifest else {}
        self.sources = sources or {}  # sid -> source sentence text
        self._httpd = ThreadingHTTPServer(("127.0.0.1", port), self._make_handler())
        self.port = self._httpd.server_address[1]
        self._thread = None

    def _make_handler(server_self):
        session = server_self.session

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send_json(self, obj, code=200):
                body = json.dumps(obj).encode("utf-8")
                self.send_response(code)
                self.send_header("Content-Type", "application/json; charset=utf-8")
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def _send_bytes(self, data, ctype):
                self.send_response(200)
                self.send_header("Content-Type", ctype)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_OPTIONS(self):
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
                self.send_header("Access-Control-Allow-Headers", "Content-Type")
                self.end_headers()

            def do_GET(self):
                parts = [p for p in self.path.split("?")[0].split("/") if p]
                if len(parts) == 3 and parts[0] == "session" and parts[2] == "next":
                    if parts[1] != session.session_id:
                        return self._send_json({"error": "unknown session"}, 404)
                    item = session.next_unlabeled()
                    if item is None:
                        return self._send_json({"done": True, "stats": session.stats()})
                    view = dict(item)
                    view["image_url"] = f"/image/{item['hash']}"
                    view["source"] = server_self.sources.get(item["sid"], "")
                    return self._send_json({"done": False, "item": view,
                                            "stats": session.stats()})
                if len(parts) == 3 and parts[0] == "session" and parts[2] == "stats":
                    if parts[1] != session.session_id:
                        return self._send_json({"error": "unknown session"}, 404)
                    return self._send_json(session.stats())
                if len(parts) == 2 and parts[0] == "image":
                    item = next((it for it in session.items if it["hash"] == parts[1]), None)
                    path = item["path"] if item else None
                    if path is None or not Path(path).exists():
                        return self._send_json({"error": "image not found"}, 404)
                    return self._send_bytes(Path(path).read_bytes(), "image/png")
                if parts == ["sentences"]:
                    out = []
                    for sid, qs in sorted(server_self.query_sets.items()):
                        out.append({"sid": sid, "source": server_self.sources.get(sid, ""),
                                    "ranked": qs.ranked_terms, "queries": qs.queries,
                                    "fallback": qs.fallback})
                    return self._send_json(out)
                if len(parts) == 2 and parts[0] == "sentence":
                    try:
                        sid = int(parts[1])
                    except ValueError:
                        return self._send_json({"error": "bad sid"}, 400)
                    qs = server_self.query_sets.get(sid)
                    if qs is None:
                        return self._send_json({"error": "unknown sid"}, 404)
                    recs = [{"m": r.rank, "query": r.query, "status": r.status,
                             "hash": r.content_hash, "url": r.url}
                            for r in server_self.manifest_by_sid.get(sid, [])]
                    return self._send_json({"sid": sid,
                                            "source": server_self.sources.get(sid, ""),
                                            "ranked": qs.ranked_terms,
                                            "queries": qs.queries,
                                            "fallback": qs.fallback,
                                            "images": recs})
                # static frontend
                if server_self.static_dir:
                    rel = "index.html" if self.path in ("/", "") else self.path.lstrip("/")
                    target = (server_self.static_dir / rel).resolve()
                    if str(target).startswith(str(server_self.static_dir.resolve())) \
                            and target.is_file():
                        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
                        return self._send_bytes(target.read_bytes(), ctype)
                return self._send_json({"error": "not found"}, 404)

            def do_POST(self):
                parts = [p for p in self.path.split("?")[0].split("/") if p]
                if len(parts) == 3 and parts[0] == "session" and parts[2] == "label":
                    if parts[1] != session.session_id:
                        return self._send_json({"error": "unknown session"}, 404)
                    try:
                        length = int(self.headers.get("Content-Length", 0))
                        body = json.loads(self.rfile.read(length) or b"{}")
                        item_key = body["item"]
                        label_value = body["label"]
                    except (KeyError, ValueError, json.JSONDecodeError) as exc:
                        return self._send_json({"error": str(exc)}, 400)
                    try:
                        session.label(item_key, label_value, body.get("annotator", "anon"))
                    except KeyError as exc:
                        return self._send_json({"error": str(exc)}, 404)
                    except ValueError as exc:
                        return self._send_json({"error": str(exc)}, 400)
                    return self._send_json({"ok": True, "stats": session.stats()})
                return self._send_json({"error": "not found"}, 404)

        return Handler

    def start(self):
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def stop(self):
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def serve_forever(self):
        self._httpd.serve_forever()
