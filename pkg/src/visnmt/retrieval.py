"""Image retrieval: fetch the first available image per search query.

Providers expose an ordered candidate list per query plus a downloader;
the offline fixture provider is fully deterministic and requires no
network. Downloaded bytes are cached under their content hash and results
are indexed by (provider, normalized query, rank) so a re-run performs
zero provider calls.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from PIL import Image

__all__ = [
    "SearchProvider",
    "OfflineFixtureProvider",
    "LiveHttpProvider",
    "ProviderUnreachable",
    "ImageRecord",
    "RetrievalManifest",
    "RateLimiter",
    "fetch_first_available",
    "retrieve_for_corpus",
    "write_manifest_jsonl",
    "read_manifest_jsonl",
]

DEFAULT_MAX_CANDIDATE_FAILURES = 5


class ProviderUnreachable(Exception):
    """The provider itself failed (network down, HTTP 5xx), not one candidate."""


class SearchProvider:
    """Interface: ordered image-URL candidates for a query, plus download."""

    name = "abstract"

    def search(self, query: str, offset: int = 0) -> list:
        raise NotImplementedError

    def download(self, url: str) -> bytes:
        raise NotImplementedError


def _solid_png(idx: int) -> bytes:
    rgb = ((idx * 67) % 256, (idx * 131) % 256, (idx * 29) % 256)
    img = Image.new("RGB", (8, 8), rgb)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


class OfflineFixtureProvider(SearchProvider):
    """Deterministic provider mapping each query to a small fixture pool.

    `overrides` maps a normalized query to an explicit candidate list
    (fixture ids like "fixture://3", or "fixture://broken" to simulate a
    non-image payload). With `mapped_only=True`, queries absent from the
    override table yield only failing candidates.
    """

    name = "offline"

    def __init__(self, pool_size: int = 32, overrides: dict | None = None,
                 mapped_only: bool = False):
        self.pool_size = pool_size
        self.overrides = {normalize_query(q): v for q, v in (overrides or {}).items()}
        self.mapped_only = mapped_only
        self.calls = 0

    def search(self, query: str, offset: int = 0) -> list:
        self.calls += 1
        q = normalize_query(query)
        if q in self.overrides:
            return list(self.overrides[q])[offset:]
        if self.mapped_only:
            return ["fixture://broken"]
        digest = hashlib.sha256(q.encode("utf-8")).digest()
        idx = int.from_bytes(digest[:4], "little") % self.pool_size
        return [f"fixture://{idx}"][offset:]

    def download(self, url: str) -> bytes:
        if not url.startswith("fixture://"):
            raise ValueError(f"not a fixture url: {url}")
        tail = url[len("fixture://"):]
        if tail == "broken":
            return b"this is not an image"
        return _solid_png(int(tail))


class LiveHttpProvider(SearchProvider):
    """Thin wrapper over a live image-search HTTP API.

    `search_fn(query, offset) -> [urls]` is injected so that any engine's
    API/HTML parsing stays outside this module. Not used by the hermetic
    test suite.
    """

    name = "live"

    def __init__(self, search_fn, timeout: float = 10.0):
        self._search_fn = search_fn
        self.timeout = timeout

    def search(self, query: str, offset: int = 0) -> list:
        try:
            return self._search_fn(query, offset)
        except Exception as exc:
            raise ProviderUnreachable(str(exc)) from exc

    def download(self, url: str) -> bytes:
        import requests

        resp = requests.get(url, timeout=self.timeout)
        resp.raise_for_status()
        return resp.content


@dataclass
class ImageRecord:
    sid: int
    rank: int  # 1-based query rank m
    query: str
    url: str | None = None
    cache_path: str | None = None
    content_hash: str | None = None
    status: str = "failed"  # ok | failed | skipped


@dataclass
class RetrievalManifest:
    corpus_id: str
    provider: str
    records: list = field(default_factory=list)
    created: str = ""

    def by_sid(self) -> dict:
        out = {}
        for rec in self.records:
            out.setdefault(rec.sid, []).append(rec)
        for recs in out.values():
            recs.sort(key=lambda r: r.rank)
        return out


class RateLimiter:
    """Shared minimum-interval limiter; rate=None means unlimited."""

    def __init__(self, rate: float | None):
        self._interval = 1.0 / rate if rate else 0.0
        self._lock = threading.Lock()
        self._next_ok = 0.0

    def wait(self):
        if self._interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._next_ok - now
            self._next_ok = max(now, self._next_ok) + self._interval
        if delay > 0:
            time.sleep(delay)


def normalize_query(query: str) -> str:
    return " ".join(query.lower().split())


def _decodes_as_image(data: bytes) -> bool:
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.verify()
        return True
    except Exception:
        return False


def fetch_first_available(provider: SearchProvider, query: str, sid: int = 0, rank: int = 1,
                          limiter: RateLimiter | None = None,
                          max_failures: int = DEFAULT_MAX_CANDIDATE_FAILURES,
                          retries: int = 3, backoff: float = 0.2):
    """Walk the provider's candidates in order; the first one that downloads
    and decodes as an image wins. Returns (ImageRecord, bytes|None)."""
    if not query.strip():
        raise ValueError("empty query")
    record = ImageRecord(sid=sid, rank=rank, query=query)

    candidates = None
    for attempt in range(retries):
        try:
            if limiter:
                limiter.wait()
            candidates = provider.search(query)
            break
        except ProviderUnreachable:
            if attempt == retries - 1:
                return record, None
            time.sleep(backoff * (2 ** attempt))

    failures = 0
    for url in candidates:
        if failures >= max_failures:
            break
        try:
            if limiter:
                limiter.wait()
            data = provider.download(url)
        except Exception:
            failures += 1
            continue
        if not _decodes_as_image(data):
            failures += 1
            continue
        record.url = url
        record.status = "ok"
        return record, data
    return record, None


def _cache_index_path(cache_dir: Path) -> Path:
    return cache_dir / "index.jsonl"


def _cache_key(provider_name: str, query: str, rank: int) -> str:
    return f"{provider_name}|{normalize_query(query)}|{rank}"


def _load_cache_index(cache_dir: Path) -> dict:
    path = _cache_index_path(cache_dir)
    index = {}
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                index[rec["key"]] = rec
    return index


def _write_blob(cache_dir: Path, data: bytes) -> tuple:
    digest = hashlib.sha256(data).hexdigest()
    blob_dir = cache_dir / "blobs"
    blob_dir.mkdir(parents=True, exist_ok=True)
    path = blob_dir / digest
    # unconditional write repairs a corrupted blob that kept its name
    tmp = path.with_suffix(".tmp." + str(os.getpid()) + "." + str(threading.get_ident()))
    tmp.write_bytes(data)
    tmp.replace(path)
    return digest, path


def _blob_valid(path_str: str | None, digest: str | None) -> bool:
    if not path_str or not digest:
        return False
    p = Path(path_str)
    if not p.exists():
        return False
    return hashlib.sha256(p.read_bytes()).hexdigest() == digest


def retrieve_for_corpus(provider: SearchProvider, query_sets, cache_dir,
                        per_sentence: int = 5, rate: float | None = None,
                        corpus_id: str = "corpus", workers: int = 1,
                        max_failures: int = DEFAULT_MAX_CANDIDATE_FAILURES) -> RetrievalManifest:
    """Fetch per_sentence images per QuerySet, reusing the cache; individual
    failures are recorded, never fatal."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    index = _load_cache_index(cache_dir)
    limiter = RateLimiter(rate)
    index_lock = threading.Lock()

    tasks = []
    for qs in query_sets:
        if len(qs.queries) < per_sentence:
            raise ValueError(f"sid {qs.sid}: only {len(qs.queries)} queries, need {per_sentence}")
        for rank in range(1, per_sentence + 1):
            tasks.append((qs.sid, rank, qs.queries[rank - 1]))

    def run_one(task):
        sid, rank, query = task
        key = _cache_key(provider.name, query, rank)
        cached = index.get(key)
        if cached is not None:
            if cached["status"] == "ok" and _blob_valid(cached.get("path"), cached.get("hash")):
                return ImageRecord(sid=sid, rank=rank, query=query, url=cached.get("url"),
                                   cache_path=cached["path"], content_hash=cached["hash"],
                                   status="ok"), None
            if cached["status"] == "failed":
                return ImageRecord(sid=sid, rank=rank, query=query, status="failed"), None
            # corrupt or missing blob: fall through to re-fetch
        record, data = fetch_first_available(provider, query, sid=sid, rank=rank,
                                             limiter=limiter, max_failures=max_failures)
        entry = {"key": key, "status": record.status, "url": record.url,
                 "path": None, "hash": None}
        if record.status == "ok":
            digest, path = _write_blob(cache_dir, data)
            record.content_hash = digest
            record.cache_path = str(path)
            entry["hash"] = digest
            entry["path"] = str(path)
        with index_lock:
            index[key] = entry
            with open(_cache_index_path(cache_dir), "a", encoding="utf-8") as f:
                f.write(json.dumps(entry) + "\n")
        return record, data

    records = []
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            for record, _ in pool.map(run_one, tasks):
                records.append(record)
    else:
        for task in tasks:
            record, _ = run_one(task)
            records.append(record)

    records.sort(key=lambda r: (r.sid, r.rank))
    return RetrievalManifest(
        corpus_id=corpus_id,
        provider=provider.name,
        records=records,
        created=datetime.now(timezone.utc).isoformat(),
    )


def write_manifest_jsonl(path, manifest: RetrievalManifest) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in manifest.records:
            f.write(json.dumps({
                "sid": rec.sid, "m": rec.rank, "query": rec.query,
                "url": rec.url, "path": rec.cache_path,
                "hash": rec.content_hash, "status": rec.status,
            }, ensure_ascii=False) + "\n")


def read_manifest_jsonl(path, corpus_id: str = "corpus",
                        provider: str = "unknown") -> RetrievalManifest:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        records.append(ImageRecord(sid=rec["sid"], rank=rec["m"], query=rec["query"],
                                   url=rec.get("url"), cache_path=rec.get("path"),
                                   content_hash=rec.get("hash"), status=rec["status"]))
    return RetrievalManifest(corpus_id=corpus_id, provider=provider, records=records)
